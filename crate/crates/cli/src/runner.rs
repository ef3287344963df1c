//! Run the selected suites and write `summary.json` plus one CSV per suite.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use speclab_core::{Error, Result, VerificationReport};

use crate::config::ExperimentConfig;
use crate::suites::{run_suite, validate, SuiteOutcome};

#[derive(Debug, Serialize)]
struct CheckSummary {
    check: String,
    passed: bool,
    instances: usize,
    failures: usize,
    lhs: f64,
    rhs: f64,
    worst_margin: f64,
}

#[derive(Debug, Serialize)]
struct SuiteSummary {
    suite: &'static str,
    passed: bool,
    seconds: f64,
    checks: Vec<CheckSummary>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    passed: bool,
    master_seed: u64,
    n_samples: usize,
    workers: usize,
    seconds: f64,
    config: &'a ExperimentConfig,
    suites: Vec<SuiteSummary>,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub passed: bool,
    pub suites: Vec<SuiteOutcome>,
}

fn count_param(r: &VerificationReport, key: &str) -> usize {
    r.params.get(key).and_then(Value::as_u64).unwrap_or(0) as usize
}

fn write_suite_csv(outcome: &SuiteOutcome, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["check", "instance", "lhs", "rhs", "margin", "passed", "seed", "params"])?;
    for row in &outcome.rows {
        let r = &row.report;
        w.write_record([
            r.check.clone(),
            row.instance.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.margin.to_string(),
            r.passed.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            serde_json::to_string(&r.params)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Validate every selected suite, then run them in order inside the current rayon pool.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    validate(cfg)?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let mut suites = Vec::new();
    let mut summaries = Vec::new();
    for suite in cfg.suite.expand() {
        log::info!("running suite {}", suite.as_str());
        let t = Instant::now();
        let outcome = run_suite(cfg, suite)?;
        let seconds = t.elapsed().as_secs_f64();
        write_suite_csv(&outcome, &out_dir.join(format!("{}.csv", suite.as_str())))?;
        for (name, bytes) in &outcome.extras {
            fs::write(out_dir.join(name), bytes)?;
        }
        let checks: Vec<CheckSummary> = outcome
            .summaries()
            .into_iter()
            .map(|r| CheckSummary {
                passed: r.passed,
                instances: count_param(&r, "instances"),
                failures: count_param(&r, "failures"),
                lhs: r.lhs,
                rhs: r.rhs,
                worst_margin: r.margin,
                check: r.check,
            })
            .collect();
        for c in &checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            log::info!("{status} {} ({} instances, worst margin {:e})", c.check, c.instances, c.worst_margin);
        }
        summaries.push(SuiteSummary {
            suite: suite.as_str(),
            passed: outcome.passed(),
            seconds,
            checks,
        });
        suites.push(outcome);
    }
    let passed = suites.iter().all(SuiteOutcome::passed);
    let summary = Summary {
        passed,
        master_seed: cfg.master_seed,
        n_samples: cfg.n_samples,
        workers: rayon::current_num_threads(),
        seconds: start.elapsed().as_secs_f64(),
        config: cfg,
        suites: summaries,
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome { passed, suites })
}

/// 0 when every check passed, 1 on a failed check, 2 on invalid configuration or a
/// constant outside its domain, 3 on a numerical precondition failure.
pub fn exit_code(result: &Result<RunOutcome>) -> u8 {
    match result {
        Ok(r) if r.passed => 0,
        Ok(_) => 1,
        Err(e) if e.is_config() => 2,
        Err(Error::Io(_)) => 2,
        Err(_) => 3,
    }
}
