//! The verification suites. Each returns per-instance reports in a fixed order.

use rayon::prelude::*;
use speclab_core::averaging::{
    eta_density, spectral_average, spectral_average_by_energy, spectral_average_full_line, support_norm2,
    write_averaging_csv, AveragingOptions, AveragingRecord,
};
use speclab_core::cube_basis::{
    boundary_terms, check_poincare, eigenfunction_mass_check, neumann_cube_basis, trace_bound_check,
};
use speclab_core::dos::{
    c_bd, c_w, e0, fixed_site_difference, fixed_site_wegner, ldos_function, lipschitz_check, mc_ldos_measure,
    paired_monotonicity, sample_spectra, wegner_check, write_dos_csv, ConstantKind, DiscreteConstants, DosConfig,
    SpectrumSample, SIGMA_SLACK,
};
use speclab_core::instances::{random_family, random_unit_vector};
use speclab_core::operator::{
    build_laplacian, counter_hash, counter_uniform, hamiltonian, sample_disorder, site_family, BoundaryCondition,
    BoxDomain, Family, SingleSite,
};
use speclab_core::spectral::{
    birman_schwinger_crossings, eigendecompose, eigenvalues_dense, feynman_hellmann_residual, trace_branches,
    BranchOptions, EnergyInterval, FhOutcome,
};
use speclab_core::ssf::{evaluate_ssf, perturb_off_spectra, ssf_bound_check, ssf_trace_difference, write_ssf_csv};
use speclab_core::{Error, Result, VerificationReport};

use crate::config::{ExperimentConfig, SuiteName};

const STREAM_POINCARE: u64 = 0x5001;
const STREAM_AVERAGING: u64 = 0x5002;
const STREAM_FULL_LINE: u64 = 0x5003;
const STREAM_FH: u64 = 0x5004;
const STREAM_ETA: u64 = 0x5005;
const STREAM_SSF: u64 = 0x5006;
const STREAM_SSF_BOUND: u64 = 0x5007;
const STREAM_SSF_GRID: u64 = 0x5008;
const STREAM_RERUN: u64 = 0x5009;
const STREAM_FAMILY: u64 = 0x5100;
const STREAM_PHI: u64 = 0x5200;

/// Draws per instance reserved in a parameter stream.
const DRAWS: u64 = 128;
/// Energy resamples allowed before a random triple is declared unusable.
const ENERGY_ATTEMPTS: u64 = 64;

/// One checked instance.
#[derive(Debug, Clone)]
pub struct Row {
    pub instance: usize,
    pub report: VerificationReport,
}

/// Everything a suite produced: reports plus extra detail files.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub suite: SuiteName,
    pub rows: Vec<Row>,
    pub extras: Vec<(String, Vec<u8>)>,
}

impl SuiteOutcome {
    fn new(suite: SuiteName) -> Self {
        Self {
            suite,
            rows: Vec::new(),
            extras: Vec::new(),
        }
    }

    fn push(&mut self, instance: usize, report: VerificationReport) {
        self.rows.push(Row { instance, report });
    }

    fn extend(&mut self, reports: impl IntoIterator<Item = VerificationReport>) {
        for (i, r) in reports.into_iter().enumerate() {
            self.push(i, r);
        }
    }

    /// Check names in order of first appearance.
    pub fn check_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.report.check) {
                names.push(r.report.check.clone());
            }
        }
        names
    }

    /// Worst case of each check, in order of first appearance.
    pub fn summaries(&self) -> Vec<VerificationReport> {
        self.check_names()
            .into_iter()
            .map(|name| {
                let reports: Vec<VerificationReport> = self
                    .rows
                    .iter()
                    .filter(|r| r.report.check == name)
                    .map(|r| r.report.clone())
                    .collect();
                VerificationReport::worst(name, &reports)
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.report.passed)
    }

    /// Whether every instance of the named check passed (false if the check never ran).
    pub fn check_passed(&self, name: &str) -> bool {
        let mut seen = false;
        for r in self.rows.iter().filter(|r| r.report.check == name) {
            seen = true;
            if !r.report.passed {
                return false;
            }
        }
        seen
    }

    pub fn count(&self, name: &str) -> usize {
        self.rows.iter().filter(|r| r.report.check == name).count()
    }
}

fn draw(seed: u64, stream: u64, instance: usize, j: u64) -> f64 {
    counter_uniform(seed, stream, instance as u64 * DRAWS + j)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn random_rank(seed: u64, stream: u64, instance: usize, size: usize) -> usize {
    1 + ((draw(seed, stream, instance, 0) * size as f64) as usize).min(size - 1)
}

fn family_for(seed: u64, stream: u64, instance: usize, size: usize, rank: usize) -> Family {
    random_family(size, rank, counter_hash(seed, STREAM_FAMILY + stream, instance as u64))
}

fn phi_for(seed: u64, stream: u64, instance: usize, size: usize) -> Vec<f64> {
    random_unit_vector(size, 1.0, counter_hash(seed, STREAM_PHI + stream, instance as u64))
}

fn domain_error(e: Error) -> Error {
    match e {
        Error::Domain(_) | Error::Config(_) => e,
        other => Error::Domain(other.to_string()),
    }
}

/// Default Lipschitz grid: five points spread over `(0, E0)`, `E0` the smaller of the
/// continuum and discrete thresholds.
pub fn lipschitz_energies(cfg: &ExperimentConfig, domain: &BoxDomain) -> Vec<f64> {
    match &cfg.lipschitz.energies {
        Some(e) => e.clone(),
        None => {
            let top = e0(domain.dim()).min(DiscreteConstants::new(domain).e0());
            [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|f| f * top).collect()
        }
    }
}

fn site_with_kappa(cfg: &ExperimentConfig, kappa: f64, domain: &BoxDomain) -> Result<SingleSite> {
    if cfg.site.profile.is_some() && kappa == cfg.site.kappa {
        cfg.site.build(domain)
    } else {
        SingleSite::characteristic(kappa, domain)
    }
}

fn fixed_site_index(cfg: &ExperimentConfig, domain: &BoxDomain) -> usize {
    cfg.fixed_site.site.unwrap_or(domain.n_cubes() / 2)
}

/// Reject a configuration whose suite preconditions fail, before any computation.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let dos = cfg.dos_config()?;
    let domain = dos.domain;
    let m = domain.cells_per_unit();
    let d = domain.dim();
    let kappa = dos.site.kappa();
    let rho = dos.distribution.sup_density();
    for suite in cfg.suite.expand() {
        match suite {
            SuiteName::TraceBound => {
                let p = &cfg.trace_bound;
                if !(p.b_fraction > 0.0 && p.b_fraction < 1.0) {
                    return Err(Error::Config(format!("b_fraction must lie in (0, 1), got {}", p.b_fraction)));
                }
                if let Some(&n) = p.n_values.iter().find(|&&n| n + 1 >= m) {
                    return Err(Error::Config(format!("cube mode index n = {n} needs n + 1 < m = {m}")));
                }
                for &k in &p.mass_kappas {
                    SingleSite::characteristic(k, &domain)?;
                }
            }
            SuiteName::SpectralAveraging => {
                let p = &cfg.spectral_averaging;
                if p.size < 2 || p.full_line_rank == 0 || p.full_line_rank > p.size {
                    return Err(Error::Config("averaging needs size >= 2 and 1 <= full_line_rank <= size".into()));
                }
                if !(p.quadrature_tol > 0.0 && p.route_tol > 0.0) {
                    return Err(Error::Config("averaging tolerances must be positive".into()));
                }
            }
            SuiteName::Ssf => {
                let p = &cfg.ssf;
                if p.size < 2 || p.rank == 0 || p.rank > p.size || p.grid_points < 2 {
                    return Err(Error::Config("ssf needs size >= 2, 1 <= rank <= size, grid_points >= 2".into()));
                }
                if p.eps_ladder.len() < 2 || p.eps_ladder.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::Config("ssf eps_ladder needs at least two positive values".into()));
                }
            }
            SuiteName::Wegner => {
                let p = &cfg.wegner;
                EnergyInterval::closed(p.a, p.b)?;
                for &k in &p.kappas {
                    site_with_kappa(cfg, k, &domain)?;
                    c_w(p.b, p.n, k, rho).map_err(domain_error)?;
                    DiscreteConstants::new(&domain).c_w(p.b, p.n, k, rho).map_err(domain_error)?;
                }
                if p.ldos_epsilons.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::Config("ldos epsilons must be positive".into()));
                }
                for &e in &p.ldos_energies {
                    for &eps in &p.ldos_epsilons {
                        c_w(e + eps, 0, kappa, rho).map_err(domain_error)?;
                        DiscreteConstants::new(&domain).c_w(e + eps, 0, kappa, rho).map_err(domain_error)?;
                    }
                }
            }
            SuiteName::Lipschitz => {
                let eps = cfg.lipschitz.epsilon;
                if !(eps > 0.0) {
                    return Err(Error::Config(format!("lipschitz epsilon must be positive, got {eps}")));
                }
                let energies = lipschitz_energies(cfg, &domain);
                if energies.len() < 2 {
                    return Err(Error::Config("lipschitz needs at least two energies".into()));
                }
                let limit = e0(d);
                let disc = DiscreteConstants::new(&domain).e0();
                for &e in &energies {
                    if !(e >= 0.0 && e < limit) {
                        return Err(Error::Domain(format!(
                            "lipschitz energy {e} must satisfy 0 <= E < E0(d) = {limit} (d = {d})"
                        )));
                    }
                    if !(e < disc) {
                        return Err(Error::Domain(format!(
                            "lipschitz energy {e} must lie below the discrete E0 = {disc} (d = {d}, m = {m})"
                        )));
                    }
                    c_w(e + eps, 0, kappa, rho).map_err(domain_error)?;
                }
            }
            SuiteName::FixedSite => {
                let p = &cfg.fixed_site;
                if domain.bc() != BoundaryCondition::Dirichlet {
                    return Err(Error::Config(format!(
                        "fixed_site needs Dirichlet boundary conditions, got {}",
                        domain.bc()
                    )));
                }
                if fixed_site_index(cfg, &domain) >= domain.n_cubes() {
                    return Err(Error::Config(format!("fixed site outside the {} cubes", domain.n_cubes())));
                }
                if p.taus.is_empty() || p.taus.iter().any(|&t| !(t >= 0.0)) {
                    return Err(Error::Config("fixed_site taus must be nonempty and nonnegative".into()));
                }
                EnergyInterval::closed(p.a, p.b)?;
                c_bd(p.b, d).map_err(domain_error)?;
                DiscreteConstants::new(&domain).c_bd(p.b).map_err(domain_error)?;
            }
            SuiteName::All => unreachable!("expanded above"),
        }
    }
    Ok(())
}

pub fn run_suite(cfg: &ExperimentConfig, suite: SuiteName) -> Result<SuiteOutcome> {
    match suite {
        SuiteName::TraceBound => trace_bound(cfg),
        SuiteName::SpectralAveraging => spectral_averaging(cfg),
        SuiteName::Ssf => ssf(cfg),
        SuiteName::Wegner => wegner(cfg),
        SuiteName::Lipschitz => lipschitz(cfg),
        SuiteName::FixedSite => fixed_site(cfg),
        SuiteName::All => Err(Error::Config("run_suite takes a single suite".into())),
    }
}

/// Trace bound, boundary cancellation, Poincaré and eigenfunction mass.
pub fn trace_bound(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let p = &cfg.trace_bound;
    let dos = cfg.dos_config()?;
    let domain = dos.domain;
    let (m, d) = (domain.cells_per_unit(), domain.dim());
    let mut out = SuiteOutcome::new(SuiteName::TraceBound);

    let per_realization: Vec<Vec<VerificationReport>> = (0..p.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let spec = eigendecompose(&hamiltonian(&domain, &dos.site, &dos.realization(r))?)?;
            p.n_values
                .iter()
                .map(|&n| {
                    let b = p.b_fraction * neumann_cube_basis(m, d, n)?.next_level();
                    let i = EnergyInterval::closed(0.0, b)?;
                    Ok(trace_bound_check(&spec, &i, n, &domain)?.with_param("realization", r))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    for (r, reports) in per_realization.into_iter().enumerate() {
        for rep in reports {
            out.push(r, rep);
        }
    }

    let bcs = [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann, BoundaryCondition::Periodic];
    let cancellation: Vec<VerificationReport> = (0..p.boundary_instances * bcs.len())
        .into_par_iter()
        .map(|idx| {
            let (inst, bc) = (idx / bcs.len(), bcs[idx % bcs.len()]);
            let dom = domain.with_bc(bc);
            let real = sample_disorder(&dos.distribution, &dom, cfg.master_seed, inst as u64);
            let spec = eigendecompose(&hamiltonian(&dom, &dos.site, &real)?)?;
            let lap = build_laplacian(&dom)?;
            let w = dom.cell_volume();
            let per_vector = (0..spec.len())
                .map(|j| {
                    let psi = spec.eigenvector(j);
                    let lpsi = lap.matvec(&psi);
                    let sum: f64 = boundary_terms(&psi, &lpsi, &dom)?.iter().sum();
                    let scale = (w * psi.iter().map(|x| x * x).sum::<f64>()).sqrt()
                        * (w * lpsi.iter().map(|x| x * x).sum::<f64>()).sqrt();
                    Ok(VerificationReport::le("boundary_cancellation", sum.abs(), 1e-10 * scale, 0.0)
                        .with_param("eigenvector", j))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VerificationReport::worst("boundary_cancellation", &per_vector)
                .with_param("bc", bc.to_string())
                .with_param("realization", inst))
        })
        .collect::<Result<_>>()?;
    out.extend(cancellation);

    let w = domain.cell_volume();
    for &n in &p.n_values {
        let basis = neumann_cube_basis(m, d, n)?;
        let poincare: Vec<VerificationReport> = (0..p.poincare_vectors)
            .into_par_iter()
            .map(|v| {
                let seed = counter_hash(cfg.master_seed, STREAM_POINCARE + n as u64, v as u64);
                let psi = random_unit_vector(domain.n_points(), w, seed);
                check_poincare(&psi, &basis, v % domain.n_cubes(), &domain)
            })
            .collect::<Result<_>>()?;
        out.extend(poincare);
        // a single mode of index n + 1 along one axis turns the inequality into equality
        let wider = neumann_cube_basis(m, d, n + 1)?;
        let mut top = vec![0usize; d];
        top[0] = n + 1;
        let j = wider
            .modes()
            .iter()
            .position(|mode| *mode == top)
            .ok_or_else(|| Error::Precondition(format!("no cube mode {top:?}")))?;
        for k in 0..domain.n_cubes() {
            let psi = wider.embed(j, k, &domain)?;
            let r = check_poincare(&psi, &basis, k, &domain)?;
            let gap = (r.lhs - r.rhs).abs();
            out.push(
                k,
                VerificationReport::le("poincare_saturation", gap, 1e-12 * r.rhs.abs().max(1.0), 0.0)
                    .with_param("n", n)
                    .with_param("cube", k),
            );
        }
    }

    let dirichlet = domain.with_bc(BoundaryCondition::Dirichlet);
    let cap = d as f64 / 4.0;
    for &kappa in &p.mass_kappas {
        let site = SingleSite::characteristic(kappa, &dirichlet)?;
        let mass: Vec<VerificationReport> = (0..p.mass_realizations as u64)
            .into_par_iter()
            .map(|r| {
                let real = sample_disorder(&dos.distribution, &dirichlet, cfg.master_seed, r);
                let spec = eigendecompose(&hamiltonian(&dirichlet, &site, &real)?)?;
                Ok(eigenfunction_mass_check(&spec, &dirichlet, cap)?
                    .with_param("kappa", kappa)
                    .with_param("realization", r))
            })
            .collect::<Result<_>>()?;
        out.extend(mass);
    }
    Ok(out)
}

struct AveragingTrial {
    family: Family,
    phi: Vec<f64>,
    interval: EnergyInterval,
    tau1: f64,
    tau2: f64,
}

fn averaging_trial(seed: u64, stream: u64, t: usize, size: usize, rank: Option<usize>) -> Result<AveragingTrial> {
    let rank = rank.unwrap_or_else(|| random_rank(seed, stream, t, size));
    let family = family_for(seed, stream, t, size, rank);
    let phi = phi_for(seed, stream, t, size);
    let s0 = eigenvalues_dense(family.base_dense());
    let (lo, hi) = (s0[0], s0[size - 1]);
    let a = lo - 1.0 + draw(seed, stream, t, 1) * (hi - lo + 1.0);
    let len = 0.05 + 1.95 * draw(seed, stream, t, 2);
    let tau1 = -2.0 + 3.0 * draw(seed, stream, t, 3);
    let tau2 = tau1 + 0.1 + 2.9 * draw(seed, stream, t, 4);
    Ok(AveragingTrial {
        family,
        phi,
        interval: EnergyInterval::closed(a, a + len)?,
        tau1,
        tau2,
    })
}

/// Averaging bound and route agreement, full-line equality, Feynman–Hellmann, η density.
pub fn spectral_averaging(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let p = &cfg.spectral_averaging;
    let seed = cfg.master_seed;
    let opts = AveragingOptions {
        tol: p.quadrature_tol,
        ..AveragingOptions::default()
    };
    let mut out = SuiteOutcome::new(SuiteName::SpectralAveraging);

    let trials: Vec<(VerificationReport, VerificationReport, AveragingRecord)> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let tr = averaging_trial(seed, STREAM_AVERAGING, t, p.size, None)?;
            let by_omega = spectral_average(&tr.family, &tr.phi, &tr.interval, tr.tau1, tr.tau2, opts)?;
            let by_energy = spectral_average_by_energy(&tr.family, &tr.phi, &tr.interval, tr.tau1, tr.tau2, opts)?;
            let rhs = tr.interval.length() * support_norm2(&tr.family, &tr.phi);
            let bound = VerificationReport::le("averaging_bound", by_omega.value, rhs, p.quadrature_tol)
                .with_param("I_a", tr.interval.a())
                .with_param("I_b", tr.interval.b())
                .with_param("tau1", tr.tau1)
                .with_param("tau2", tr.tau2)
                .with_param("rank", tr.family.u().iter().filter(|&&x| x > 0.0).count());
            let routes = VerificationReport::le("averaging_routes", (by_omega.value - by_energy.value).abs(), p.route_tol, 0.0)
                .with_param("by_omega", by_omega.value)
                .with_param("by_energy", by_energy.value);
            let record = AveragingRecord {
                phi_id: t,
                i_a: tr.interval.a(),
                i_b: tr.interval.b(),
                tau1: tr.tau1,
                tau2: tr.tau2,
                lhs: by_omega.value,
                rhs,
                margin: rhs - by_omega.value,
            };
            Ok((bound, routes, record))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(trials.len());
    for (t, (bound, routes, record)) in trials.into_iter().enumerate() {
        out.push(t, bound);
        out.push(t, routes);
        records.push(record);
    }
    let mut buf = Vec::new();
    write_averaging_csv(&records, &mut buf)?;
    out.extras.push(("averaging_records.csv".into(), buf));

    let full: Vec<VerificationReport> = (0..p.full_line_trials)
        .into_par_iter()
        .map(|t| {
            let tr = averaging_trial(seed, STREAM_FULL_LINE, t, p.size, Some(p.full_line_rank))?;
            let value = spectral_average_full_line(&tr.family, &tr.phi, &tr.interval, opts)?.value;
            let expect = tr.interval.length() * support_norm2(&tr.family, &tr.phi);
            Ok(VerificationReport::le("full_line_equality", (value - expect).abs(), 1e-4 * expect, 0.0)
                .with_param("value", value)
                .with_param("expected", expect))
        })
        .collect::<Result<_>>()?;
    out.extend(full);

    let fh: Vec<(VerificationReport, VerificationReport)> = (0..p.fh_instances)
        .into_par_iter()
        .map(|t| {
            let rank = random_rank(seed, STREAM_FH, t, p.size);
            let family = family_for(seed, STREAM_FH, t, p.size, rank);
            let omega = -1.0 + 2.0 * draw(seed, STREAM_FH, t, 1);
            let tol = 1e-6 * (1.0 + family.coupling_norm());
            let mut checked = Vec::new();
            let mut skipped = 0usize;
            for j in 0..p.size {
                match feynman_hellmann_residual(&family, omega, j)? {
                    FhOutcome::Checked { residual, .. } => {
                        checked.push(VerificationReport::le("feynman_hellmann", residual, tol, 0.0).with_param("j", j))
                    }
                    FhOutcome::Skipped { .. } => skipped += 1,
                }
            }
            let fh = VerificationReport::worst("feynman_hellmann", &checked)
                .with_param("omega", omega)
                .with_param("skipped", skipped);
            let norm = family.norm_bound(-2.0, 2.0);
            let monotone = match trace_branches(&family, &linspace(-2.0, 2.0, 41), BranchOptions::default()) {
                Ok(trace) => {
                    let drop = (0..trace.n_branches())
                        .flat_map(|j| trace.branch(j).windows(2).map(|w| w[0] - w[1]).collect::<Vec<_>>())
                        .fold(0.0, f64::max);
                    VerificationReport::le("branch_monotone", drop, 0.0, 1e-9 * (1.0 + norm))
                }
                Err(e @ (Error::NonMonotone { .. } | Error::Refine { .. })) => {
                    VerificationReport::le("branch_monotone", f64::INFINITY, 0.0, 0.0).with_param("error", e.to_string())
                }
                Err(e) => return Err(e),
            };
            Ok((fh, monotone.with_param("rank", rank)))
        })
        .collect::<Result<_>>()?;
    for (t, (a, b)) in fh.into_iter().enumerate() {
        out.push(t, a);
        out.push(t, b);
    }

    let eta: Vec<Option<VerificationReport>> = (0..p.eta_trials)
        .into_par_iter()
        .map(|t| {
            let rank = random_rank(seed, STREAM_ETA, t, p.size);
            let family = family_for(seed, STREAM_ETA, t, p.size, rank);
            let phi = phi_for(seed, STREAM_ETA, t, p.size);
            let s0 = eigenvalues_dense(family.base_dense());
            let k = ((draw(seed, STREAM_ETA, t, 1) * (p.size - 1) as f64) as usize).min(p.size - 2);
            let energy = s0[k] + (0.25 + 0.5 * draw(seed, STREAM_ETA, t, 2)) * (s0[k + 1] - s0[k]);
            let e = eta_density(&family, &phi, energy, -1.0, 2.0)?;
            if e.unstable {
                return Ok(None);
            }
            Ok(Some(
                VerificationReport::le("eta_density", (e.value - e.extrapolated).abs(), 1e-5 * (1.0 + e.value), 0.0)
                    .with_param("E", energy)
                    .with_param("value", e.value)
                    .with_param("extrapolated", e.extrapolated),
            ))
        })
        .collect::<Result<_>>()?;
    for (t, r) in eta.into_iter().enumerate() {
        if let Some(r) = r {
            out.push(t, r);
        }
    }
    Ok(out)
}

/// Pick `E` in `[lo, hi]` off both endpoint spectra, off `σ(H0)` and clear of eigenvalues
/// of `H_τ1`, `H_τ2` in `[E, E + eps_max]`.
fn usable_energy(
    family: &Family,
    spectra: (&[f64], &[f64]),
    range: (f64, f64),
    eps_max: f64,
    mut uniform: impl FnMut(u64) -> f64,
) -> Option<f64> {
    let (s1, s2) = spectra;
    let s0 = eigenvalues_dense(family.base_dense());
    let scale0 = 1.0 + s0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for attempt in 0..ENERGY_ATTEMPTS {
        let e = range.0 + uniform(attempt) * (range.1 - range.0);
        let e = perturb_off_spectra(s1, s2, e);
        let scale = 1.0 + e.abs();
        let near_base = s0.iter().any(|&l| (l - e).abs() < 1e-6 * scale0);
        let blocked = s1
            .iter()
            .chain(s2)
            .any(|&l| l >= e - 1e-6 * scale && l <= e + eps_max + 1e-6 * scale);
        if !near_base && !blocked {
            return Some(e);
        }
    }
    None
}

fn ssf_reports(
    family: &Family,
    energy: f64,
    tau1: f64,
    tau2: f64,
    cfg: &ExperimentConfig,
    origin: &str,
) -> Result<(Vec<VerificationReport>, speclab_core::ssf::SsfRecord)> {
    let p = &cfg.ssf;
    let ev = evaluate_ssf(family, energy, tau1, tau2, &p.eps_ladder, p.grid_points)?;
    let rec = ev.record.clone();
    let mut cont: Vec<f64> = ev.crossings.iter().map(|c| c.omega).collect();
    cont.sort_by(f64::total_cmp);
    let oracle: Vec<f64> = birman_schwinger_crossings(family, energy)?
        .iter()
        .map(|c| c.omega)
        .filter(|w| (tau1..=tau2).contains(w))
        .collect();
    let set_gap = if cont.len() == oracle.len() {
        cont.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let tag = |r: VerificationReport| {
        r.with_param("E", energy)
            .with_param("tau1", tau1)
            .with_param("tau2", tau2)
            .with_param("family", origin)
    };
    let reports = vec![
        tag(VerificationReport::le("ssf_routes", (rec.xi_trace - rec.xi_crossings).abs() as f64, 0.0, 0.0)
            .with_param("xi_trace", rec.xi_trace)
            .with_param("xi_crossings", rec.xi_crossings)),
        tag(VerificationReport::le("ssf_birman_solomyak", (rec.bs_limit - rec.xi_trace as f64).abs(), 1e-3, 0.0)
            .with_param("bs_limit", rec.bs_limit)
            .with_param("unstable", ev.birman_solomyak.unstable)
            .with_param("clear", ev.birman_solomyak.clear)),
        tag(VerificationReport::le("ssf_oracle_crossings", set_gap, 1e-6, 0.0)
            .with_param("continuation", cont.len())
            .with_param("oracle", oracle.len())),
    ];
    Ok((reports, rec))
}

/// Trace difference vs crossing count vs ε-limit, crossing-set oracle, and the SSF bound.
pub fn ssf(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let p = &cfg.ssf;
    let seed = cfg.master_seed;
    let eps_max = p.eps_ladder.iter().copied().fold(0.0, f64::max);
    let mut out = SuiteOutcome::new(SuiteName::Ssf);

    let random: Vec<(Vec<VerificationReport>, speclab_core::ssf::SsfRecord)> = (0..p.triples)
        .into_par_iter()
        .map(|t| {
            let family = family_for(seed, STREAM_SSF, t, p.size, p.rank);
            let tau1 = -2.0 + 3.0 * draw(seed, STREAM_SSF, t, 0);
            let tau2 = tau1 + 0.2 + 2.8 * draw(seed, STREAM_SSF, t, 1);
            let s1 = eigenvalues_dense(&family.evaluate(tau1));
            let s2 = eigenvalues_dense(&family.evaluate(tau2));
            let range = (s1[0] - 0.5, s2[p.size - 1] + 0.5);
            let e = usable_energy(&family, (&s1, &s2), range, eps_max, |a| draw(seed, STREAM_SSF, t, 2 + a))
                .ok_or_else(|| Error::Precondition(format!("no usable energy for ssf triple {t}")))?;
            ssf_reports(&family, e, tau1, tau2, cfg, "random")
        })
        .collect::<Result<_>>()?;

    let dos = cfg.dos_config()?;
    let domain = dos.domain;
    let grid: Vec<(Vec<VerificationReport>, speclab_core::ssf::SsfRecord)> = (0..p.grid_triples)
        .into_par_iter()
        .map(|t| {
            let real = dos.realization(t as u64);
            let family = site_family(&domain, &dos.site, &real, t % domain.n_cubes())?;
            let tau1 = 0.5 * draw(seed, STREAM_SSF_GRID, t, 0);
            let tau2 = tau1 + 0.2 + 0.8 * draw(seed, STREAM_SSF_GRID, t, 1);
            let s1 = eigenvalues_dense(&family.evaluate(tau1));
            let s2 = eigenvalues_dense(&family.evaluate(tau2));
            let top = s1[(s1.len() - 1).min(8)];
            let e = usable_energy(&family, (&s1, &s2), (s1[0], top), eps_max, |a| {
                draw(seed, STREAM_SSF_GRID, t, 2 + a)
            })
            .ok_or_else(|| Error::Precondition(format!("no usable energy for grid ssf triple {t}")))?;
            ssf_reports(&family, e, tau1, tau2, cfg, "grid")
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (t, (reports, rec)) in random.into_iter().chain(grid).enumerate() {
        for r in reports {
            out.push(t, r);
        }
        out.push(
            t,
            VerificationReport::le("ssf_bound", rec.xi_trace as f64, rec.bound_rhs as f64, 0.0)
                .with_param("E", rec.energy)
                .with_param("tau1", rec.tau1)
                .with_param("tau2", rec.tau2),
        );
        records.push(rec);
    }
    let mut buf = Vec::new();
    write_ssf_csv(&records, &mut buf)?;
    out.extras.push(("ssf_records.csv".into(), buf));

    let bounds: Vec<VerificationReport> = (0..p.bound_triples)
        .into_par_iter()
        .map(|t| {
            let family = family_for(seed, STREAM_SSF_BOUND, t, p.size, p.rank);
            let tau1 = -2.0 + 3.0 * draw(seed, STREAM_SSF_BOUND, t, 0);
            let tau2 = tau1 + 0.05 + 2.95 * draw(seed, STREAM_SSF_BOUND, t, 1);
            let s1 = eigenvalues_dense(&family.evaluate(tau1));
            let s2 = eigenvalues_dense(&family.evaluate(tau2));
            let (lo, hi) = (s1[0] - 0.5, s2[p.size - 1] + 0.5);
            let e = perturb_off_spectra(&s1, &s2, lo + draw(seed, STREAM_SSF_BOUND, t, 2) * (hi - lo));
            let xi = ssf_trace_difference(&s1, &s2, e)?;
            ssf_bound_check(&s1, xi, e, tau1, tau2, family.coupling_norm())
        })
        .collect::<Result<_>>()?;
    let offset = out.count("ssf_bound");
    for (t, r) in bounds.into_iter().enumerate() {
        out.push(offset + t, r);
    }
    Ok(out)
}

fn dos_with(base: &DosConfig, domain: BoxDomain, site: SingleSite, master_seed: u64) -> DosConfig {
    DosConfig {
        domain,
        site,
        distribution: base.distribution.clone(),
        master_seed,
    }
}

fn run_metadata(r: VerificationReport, config: &DosConfig, samples: usize) -> VerificationReport {
    let dom = config.domain;
    r.with_param("master_seed", config.master_seed)
        .with_param("n_samples", samples)
        .with_param("d", dom.dim())
        .with_param("L", dom.half_width())
        .with_param("m", dom.cells_per_unit())
        .with_param("bc", dom.bc().to_string())
}

/// MC Wegner bound per κ (and under Neumann), ℓDOS ε-ladder bounds, and rerun consistency.
pub fn wegner(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let p = &cfg.wegner;
    let base = cfg.dos_config()?;
    let interval = EnergyInterval::closed(p.a, p.b)?;
    let mut out = SuiteOutcome::new(SuiteName::Wegner);
    let mut instance = 0usize;
    let mut first_sample: Option<(DosConfig, SpectrumSample)> = None;

    let mut variants: Vec<(BoxDomain, f64)> = p.kappas.iter().map(|&k| (base.domain, k)).collect();
    if p.neumann && base.domain.bc() != BoundaryCondition::Neumann {
        if let Some(&k) = p.kappas.first() {
            variants.push((base.domain.with_bc(BoundaryCondition::Neumann), k));
        }
    }
    for (domain, kappa) in variants {
        let config = dos_with(&base, domain, site_with_kappa(cfg, kappa, &domain)?, cfg.master_seed);
        let sample = sample_spectra(&config, cfg.n_samples, None)?;
        let measure = mc_ldos_measure(&sample, &interval);
        for kind in [ConstantKind::Continuum, ConstantKind::Discrete] {
            let r = wegner_check(&config, &sample, &interval, p.n, kind)?
                .with_param("ldos_measure", measure.mean)
                .with_param("ldos_measure_stderr", measure.stderr);
            out.push(instance, run_metadata(r, &config, cfg.n_samples));
            instance += 1;
        }
        if first_sample.is_none() {
            first_sample = Some((config, sample));
        }
    }

    let (config, sample) = first_sample.ok_or_else(|| Error::Config("wegner needs at least one kappa".into()))?;
    let kappa = config.site.kappa();
    let rho = config.distribution.sup_density();
    let disc = DiscreteConstants::new(&config.domain);
    let mut dos_csv = Vec::new();
    let mut idx = 0usize;
    for (n, &eps) in p.ldos_epsilons.iter().enumerate() {
        let est = ldos_function(&sample, &p.ldos_energies, eps)?;
        let mut buf = Vec::new();
        write_dos_csv(&est, &mut buf)?;
        // keep a single header row
        let text = String::from_utf8_lossy(&buf).into_owned();
        let body: String = if n == 0 { text } else { text.lines().skip(1).map(|l| format!("{l}\n")).collect() };
        dos_csv.extend_from_slice(body.as_bytes());
        for (i, &e) in est.energies.iter().enumerate() {
            for (kind, cw) in [
                (ConstantKind::Continuum, c_w(e + eps, 0, kappa, rho)?),
                (ConstantKind::Discrete, disc.c_w(e + eps, 0, kappa, rho)?),
            ] {
                let name = match kind {
                    ConstantKind::Continuum => "ldos_bound_continuum",
                    ConstantKind::Discrete => "ldos_bound_discrete",
                };
                let r = VerificationReport::le(name, est.values[i], cw + SIGMA_SLACK * est.stderrs[i], 0.0)
                    .with_param("E", e)
                    .with_param("epsilon", eps)
                    .with_param("C_W", cw)
                    .with_param("stderr", est.stderrs[i]);
                out.push(idx, run_metadata(r, &config, cfg.n_samples));
                idx += 1;
            }
        }
    }
    out.extras.push(("ldos.csv".into(), dos_csv));

    if p.rerun_samples > 0 {
        let rerun_seed = counter_hash(cfg.master_seed, STREAM_RERUN, 0);
        let rerun_config = DosConfig {
            master_seed: rerun_seed,
            ..config.clone()
        };
        let rerun = sample_spectra(&rerun_config, p.rerun_samples, None)?;
        let wide = EnergyInterval::closed(0.0, 0.5)?;
        for (i, iv) in [interval, wide].iter().enumerate() {
            let a = mc_ldos_measure(&sample, iv);
            let b = mc_ldos_measure(&rerun, iv);
            let sigma = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
            let r = VerificationReport::le("mc_rerun_consistency", (a.mean - b.mean).abs(), SIGMA_SLACK * sigma, 0.0)
                .with_param("a", iv.a())
                .with_param("b", iv.b())
                .with_param("measure", a.mean)
                .with_param("rerun_measure", b.mean)
                .with_param("rerun_samples", p.rerun_samples)
                .with_param("rerun_seed", rerun_seed);
            out.push(i, run_metadata(r, &config, cfg.n_samples));
        }
    }
    Ok(out)
}

/// ℓDOS Lipschitz bound on every pair of the energy grid.
pub fn lipschitz(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let config = cfg.dos_config()?;
    let energies = lipschitz_energies(cfg, &config.domain);
    let eps = cfg.lipschitz.epsilon;
    let sample = sample_spectra(&config, cfg.n_samples, None)?;
    let mut out = SuiteOutcome::new(SuiteName::Lipschitz);
    let mut idx = 0usize;
    for kind in [ConstantKind::Continuum, ConstantKind::Discrete] {
        for i in 0..energies.len() {
            for j in i + 1..energies.len() {
                let (e1, e2) = (energies[i].min(energies[j]), energies[i].max(energies[j]));
                let r = lipschitz_check(&config, &sample, e1, e2, eps, kind)?;
                out.push(idx, run_metadata(r, &config, cfg.n_samples));
                idx += 1;
            }
        }
    }
    let est = ldos_function(&sample, &energies, eps)?;
    let mut buf = Vec::new();
    write_dos_csv(&est, &mut buf)?;
    out.extras.push(("lipschitz_ldos.csv".into(), buf));
    Ok(out)
}

/// Fixed-site Wegner bound per pinned τ, the τ = 0 to τ = 1 difference, and monotonicity.
pub fn fixed_site(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let p = &cfg.fixed_site;
    let config = cfg.dos_config()?;
    let k = fixed_site_index(cfg, &config.domain);
    let interval = EnergyInterval::closed(p.a, p.b)?;
    let mut taus = p.taus.clone();
    for t in [0.0, 1.0] {
        if !taus.contains(&t) {
            taus.push(t);
        }
    }
    taus.sort_by(f64::total_cmp);
    let samples: Vec<SpectrumSample> = taus
        .iter()
        .map(|&t| sample_spectra(&config, cfg.n_samples, Some((k, t))))
        .collect::<Result<_>>()?;
    let mut out = SuiteOutcome::new(SuiteName::FixedSite);
    let mut idx = 0usize;
    for (t, sample) in taus.iter().zip(&samples) {
        if !p.taus.contains(t) {
            continue;
        }
        for kind in [ConstantKind::Continuum, ConstantKind::Discrete] {
            let r = fixed_site_wegner(&config, sample, *t, &interval, kind)?.with_param("site", k);
            out.push(idx, run_metadata(r, &config, cfg.n_samples));
            idx += 1;
        }
    }
    let at = |t: f64| taus.iter().position(|&x| x == t).map(|i| &samples[i]);
    let (zero, one) = (at(0.0).expect("tau 0 sampled"), at(1.0).expect("tau 1 sampled"));
    for (i, kind) in [ConstantKind::Continuum, ConstantKind::Discrete].into_iter().enumerate() {
        let r = fixed_site_difference(&config, zero, one, &interval, kind)?.with_param("site", k);
        out.push(i, run_metadata(r, &config, cfg.n_samples));
    }
    for (i, w) in samples.windows(2).enumerate() {
        let r = paired_monotonicity(&w[0], &w[1])?
            .with_param("tau_lower", taus[i])
            .with_param("tau_upper", taus[i + 1])
            .with_param("site", k);
        out.push(i, r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(suite: SuiteName) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk(suite);
        cfg.domain.half_width = 1;
        cfg.domain.m = 4;
        cfg.n_samples = 50;
        cfg
    }

    #[test]
    fn usable_energy_is_clear_of_both_spectra() {
        let fam = random_family(8, 2, 3);
        let s1 = eigenvalues_dense(&fam.evaluate(0.0));
        let s2 = eigenvalues_dense(&fam.evaluate(1.0));
        let mut k = 0u64;
        let e = usable_energy(&fam, (&s1, &s2), (s1[0], s2[7]), 1e-2, |a| {
            k += 1;
            counter_uniform(1, 2, a)
        })
        .unwrap();
        assert!(s1.iter().chain(&s2).all(|&l| l < e || l > e + 1e-2));
        assert!(k >= 1);
    }

    #[test]
    fn summaries_keep_first_appearance_order() {
        let mut out = SuiteOutcome::new(SuiteName::Wegner);
        out.push(0, VerificationReport::le("b", 1.0, 2.0, 0.0));
        out.push(0, VerificationReport::le("a", 3.0, 2.0, 0.0));
        out.push(1, VerificationReport::le("b", 1.5, 2.0, 0.0));
        let s = out.summaries();
        assert_eq!(s[0].check, "b");
        assert_eq!(s[0].margin, 0.5);
        assert!(!s[1].passed);
        assert!(out.check_passed("b") && !out.check_passed("a") && !out.check_passed("c"));
        assert!(!out.passed());
    }

    #[test]
    fn validation_names_the_threshold() {
        let mut cfg = tiny(SuiteName::Lipschitz);
        cfg.lipschitz.energies = Some(vec![0.1, 0.5]);
        let err = validate(&cfg).unwrap_err();
        assert!(err.is_config() && err.to_string().contains("E0"));
        let mut cfg = tiny(SuiteName::TraceBound);
        cfg.trace_bound.n_values = vec![3];
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn tiny_suites_pass() {
        let mut cfg = tiny(SuiteName::All);
        cfg.trace_bound.realizations = 5;
        cfg.trace_bound.poincare_vectors = 20;
        cfg.trace_bound.boundary_instances = 2;
        cfg.trace_bound.mass_realizations = 5;
        cfg.wegner.rerun_samples = 100;
        validate(&cfg).unwrap();
        for suite in [SuiteName::TraceBound, SuiteName::Wegner, SuiteName::Lipschitz, SuiteName::FixedSite] {
            let out = run_suite(&cfg, suite).unwrap();
            assert!(out.passed(), "{suite:?}: {:?}", out.summaries());
        }
    }
}
