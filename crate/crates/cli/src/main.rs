use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use speclab::{exit_code, run, ExperimentConfig, SuiteName};
use speclab_core::dos::{compute_constants, DiscreteConstants};

#[derive(Parser)]
#[command(name = "speclab", version, about = "Verification suites for finite-volume random Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites named in a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 picks one per core.
        #[arg(long, env = "SPECLAB_WORKERS")]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Option<SuiteName>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Print E0, c(b,d), C_W and K1.
    Constants {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        b: f64,
        /// Energy for C_W; defaults to b.
        #[arg(long)]
        e: Option<f64>,
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Also print the grid versions at resolution m.
        #[arg(long)]
        m: Option<usize>,
    },
}

fn constants(d: usize, b: f64, e: Option<f64>, n: usize, kappa: f64, rho: f64, m: Option<usize>) -> ExitCode {
    let e = e.unwrap_or(b);
    let set = match compute_constants(d, b, e, n, kappa, rho) {
        Ok(s) => s,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    println!("{:<10} {}", "d", d);
    println!("{:<10} {}", "b", b);
    println!("{:<10} {}", "E", e);
    println!("{:<10} {}", "n", n);
    println!("{:<10} {}", "kappa", kappa);
    println!("{:<10} {}", "rho_sup", rho);
    println!("{:<10} {:.10}", "E0", set.e0);
    println!("{:<10} {:.10}", "c(b,d)", set.c_bd);
    println!("{:<10} {:.10}", "C_W", set.c_w);
    println!("{:<10} {:.10}", "K1", set.k1);
    if let Some(m) = m {
        let dc = DiscreteConstants { d, m };
        let show = |name: &str, v: speclab_core::Result<f64>| match v {
            Ok(v) => println!("{:<10} {:.10}", name, v),
            Err(err) => println!("{:<10} undefined ({err})", name),
        };
        println!("{:<10} {}", "m", m);
        show("E0_h", Ok(dc.e0()));
        show("c_h(b,d)", dc.c_bd(b));
        show("C_W_h", dc.c_w(e, n, kappa, rho));
        show("K1_h", dc.k1(b, kappa));
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Constants { d, b, e, n, kappa, rho, m } => constants(d, b, e, n, kappa, rho, m),
        Command::Run {
            config,
            seed,
            workers,
            out,
            suite,
            samples,
        } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(err) => {
                    eprintln!("error: {err}");
                    return ExitCode::from(2);
                }
            };
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(s) = suite {
                cfg.suite = s;
            }
            if let Some(n) = samples {
                cfg.n_samples = n;
            }
            let workers = workers.or(cfg.workers).unwrap_or(0);
            let out_dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("speclab-out"));
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(p) => p,
                Err(err) => {
                    eprintln!("error: cannot start {workers} workers: {err}");
                    return ExitCode::from(3);
                }
            };
            let result = pool.install(|| run(&cfg, &out_dir));
            match &result {
                Ok(r) => {
                    for s in &r.suites {
                        for c in s.summaries() {
                            let status = if c.passed { "PASS" } else { "FAIL" };
                            println!("{status} {}::{} margin {:e}", s.suite.as_str(), c.check, c.margin);
                        }
                    }
                    println!("wrote {}", out_dir.display());
                }
                Err(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(exit_code(&result))
        }
    }
}
