//! Monte Carlo estimates of the local density of states and the Wegner-type bounds with
//! explicit constants.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cube_basis::level_1d;
use crate::error::{Error, Result};
use crate::operator::{
    hamiltonian, sample_disorder, BoundaryCondition, BoxDomain, DisorderRealization, SingleSite,
    SiteDistribution,
};
use crate::report::VerificationReport;
use crate::spectral::{eigenvalues, EnergyInterval};

/// Statistical slack of every Monte Carlo inequality, in standard errors.
pub const SIGMA_SLACK: f64 = 3.0;

/// `E_0(d) = ½·π²d/(2π² + d)`.
pub fn e0(d: usize) -> f64 {
    e0_with_level(d, PI * PI)
}

fn e0_with_level(d: usize, level: f64) -> f64 {
    let d = d as f64;
    0.5 * level * d / (2.0 * level + d)
}

fn c_bd_with_level(b: f64, d: usize, level: f64) -> Result<f64> {
    let e0 = e0_with_level(d, level);
    if !(b > 0.0 && b < e0) {
        return Err(Error::Domain(format!(
            "b = {b} must satisfy 0 < b < E0 = {e0} (d = {d}) so that the coefficient of the \
             last trace term stays below 1"
        )));
    }
    let df = d as f64;
    Ok(1.0 / (1.0 - b / level - (df + 4.0 * b) / (2.0 * df)))
}

/// `c(b, d) = (1 - b/π² - (d + 4b)/(2d))⁻¹` for `0 < b < E_0(d)`.
pub fn c_bd(b: f64, d: usize) -> Result<f64> {
    c_bd_with_level(b, d, PI * PI)
}

fn check_kappa_rho(kappa: f64, rho_sup: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1], got {kappa}")));
    }
    if !(rho_sup > 0.0 && rho_sup.is_finite()) {
        return Err(Error::Domain(format!("density bound must be positive, got {rho_sup}")));
    }
    Ok(())
}

/// `C_W = κ⁻¹·ρ∞·(n+1)·(1 - E/((n+1)²π²))⁻¹` for `E < (n+1)²π²`.
pub fn c_w(e: f64, n: usize, kappa: f64, rho_sup: f64) -> Result<f64> {
    check_kappa_rho(kappa, rho_sup)?;
    let k = (n + 1) as f64;
    let level = k * k * PI * PI;
    if !(e < level) {
        return Err(Error::Domain(format!("E = {e} must lie below (n+1)^2 pi^2 = {level}")));
    }
    Ok(rho_sup * k / (kappa * (1.0 - e / level)))
}

/// `K_1 = c(E_2, d)/κ²`.
pub fn k1(e2: f64, d: usize, kappa: f64) -> Result<f64> {
    check_kappa_rho(kappa, 1.0)?;
    Ok(c_bd(e2, d)? / (kappa * kappa))
}

/// Continuum constants at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantSet {
    pub d: usize,
    pub b: f64,
    pub e: f64,
    pub n: usize,
    pub kappa: f64,
    pub rho_sup: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub c_bd: f64,
    #[serde(rename = "C_W")]
    pub c_w: f64,
    /// `K_1` at `E_2 = b`.
    #[serde(rename = "K1")]
    pub k1: f64,
}

pub fn compute_constants(d: usize, b: f64, e: f64, n: usize, kappa: f64, rho_sup: f64) -> Result<ConstantSet> {
    if !(1..=3).contains(&d) {
        return Err(Error::Domain(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    let c = c_bd(b, d)?;
    let cw = c_w(e, n, kappa, rho_sup)?;
    Ok(ConstantSet {
        d,
        b,
        e,
        n,
        kappa,
        rho_sup,
        e0: e0(d),
        c_bd: c,
        c_w: cw,
        k1: c / (kappa * kappa),
    })
}

/// Grid analogues: the first cube level `λ^h_1 = 4m²·sin²(π/(2m))` replaces `π²`,
/// `λ^h_{n+1}` replaces `(n+1)²π²`, and the Wegner mode count is `(n+1)^d`.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteConstants {
    pub d: usize,
    pub m: usize,
}

impl DiscreteConstants {
    pub fn new(domain: &BoxDomain) -> Self {
        Self {
            d: domain.dim(),
            m: domain.cells_per_unit(),
        }
    }

    pub fn e0(&self) -> f64 {
        e0_with_level(self.d, level_1d(self.m, 1))
    }

    pub fn c_bd(&self, b: f64) -> Result<f64> {
        c_bd_with_level(b, self.d, level_1d(self.m, 1))
    }

    pub fn c_w(&self, e: f64, n: usize, kappa: f64, rho_sup: f64) -> Result<f64> {
        check_kappa_rho(kappa, rho_sup)?;
        if n + 1 >= self.m {
            return Err(Error::Domain(format!("n = {n} needs more than {} cells per unit", self.m)));
        }
        let level = level_1d(self.m, n + 1);
        if !(e < level) {
            return Err(Error::Domain(format!("E = {e} must lie below the cube level {level}")));
        }
        let modes = ((n + 1) as f64).powi(self.d as i32);
        Ok(rho_sup * modes / (kappa * (1.0 - e / level)))
    }

    pub fn k1(&self, e2: f64, kappa: f64) -> Result<f64> {
        check_kappa_rho(kappa, 1.0)?;
        Ok(self.c_bd(e2)? / (kappa * kappa))
    }
}

/// Everything needed to draw Hamiltonians of the random model.
#[derive(Debug, Clone)]
pub struct DosConfig {
    pub domain: BoxDomain,
    pub site: SingleSite,
    pub distribution: SiteDistribution,
    pub master_seed: u64,
}

impl DosConfig {
    pub fn realization(&self, r: u64) -> DisorderRealization {
        sample_disorder(&self.distribution, &self.domain, self.master_seed, r)
    }

    /// `|Λ|`
    pub fn volume(&self) -> f64 {
        self.domain.volume()
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                stderr: 0.0,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// Spectra of `n` realizations, in realization order.
#[derive(Debug, Clone)]
pub struct SpectrumSample {
    pub spectra: Vec<Vec<f64>>,
    pub volume: f64,
    pub master_seed: u64,
}

impl SpectrumSample {
    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    /// Per-realization `Tr P(I)`.
    pub fn counts(&self, interval: &EnergyInterval) -> Vec<f64> {
        self.spectra.iter().map(|s| interval.count(s) as f64).collect()
    }
}

/// Eigenvalues of realizations `0..n`, optionally with cube `fixed.0` pinned at `fixed.1`.
pub fn sample_spectra(config: &DosConfig, n: usize, fixed: Option<(usize, f64)>) -> Result<SpectrumSample> {
    if let Some((k, _)) = fixed {
        if k >= config.domain.n_cubes() {
            return Err(Error::Config(format!("fixed site {k} outside the box")));
        }
    }
    let spectra = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut real = config.realization(r);
            if let Some((k, tau)) = fixed {
                real = real.with_override(k, tau);
            }
            eigenvalues(&hamiltonian(&config.domain, &config.site, &real)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumSample {
        spectra,
        volume: config.volume(),
        master_seed: config.master_seed,
    })
}

/// `μ̂_Λ(I) = (1/|Λ|)·mean Tr P(I)`.
pub fn mc_ldos_measure(sample: &SpectrumSample, interval: &EnergyInterval) -> Estimate {
    let v: Vec<f64> = sample
        .counts(interval)
        .into_iter()
        .map(|c| c / sample.volume)
        .collect();
    Estimate::from_values(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DosEstimate {
    pub energies: Vec<f64>,
    pub epsilon: f64,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub samples: usize,
    pub master_seed: u64,
}

/// `n̂^ε(E) = mean Tr P((E, E+ε])/(ε|Λ|)` on an energy grid.
pub fn ldos_function(sample: &SpectrumSample, energies: &[f64], epsilon: f64) -> Result<DosEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut values = Vec::with_capacity(energies.len());
    let mut stderrs = Vec::with_capacity(energies.len());
    for &e in energies {
        let est = ldos_point(sample, e, epsilon)?;
        values.push(est.mean);
        stderrs.push(est.stderr);
    }
    Ok(DosEstimate {
        energies: energies.to_vec(),
        epsilon,
        values,
        stderrs,
        samples: sample.len(),
        master_seed: sample.master_seed,
    })
}

pub fn ldos_point(sample: &SpectrumSample, e: f64, epsilon: f64) -> Result<Estimate> {
    let i = EnergyInterval::left_open(e, e + epsilon)?;
    let scale = epsilon * sample.volume;
    let v: Vec<f64> = sample.counts(&i).into_iter().map(|c| c / scale).collect();
    Ok(Estimate::from_values(&v))
}

pub fn write_dos_csv<W: Write>(est: &DosEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "epsilon", "n_hat", "stderr", "samples", "master_seed"])?;
    for (i, e) in est.energies.iter().enumerate() {
        w.write_record(&[
            e.to_string(),
            est.epsilon.to_string(),
            est.values[i].to_string(),
            est.stderrs[i].to_string(),
            est.samples.to_string(),
            est.master_seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Which constants a check uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    Continuum,
    Discrete,
}

impl ConstantKind {
    fn tag(self) -> &'static str {
        match self {
            ConstantKind::Continuum => "continuum",
            ConstantKind::Discrete => "discrete",
        }
    }
}

fn kappa_of(config: &DosConfig) -> Result<f64> {
    let kappa = config.site.kappa();
    if !(kappa > 0.0) {
        return Err(Error::Precondition("the Wegner constants need kappa > 0".into()));
    }
    Ok(kappa)
}

/// `mean Tr P(I) ≤ |I|·|Λ|·C_W(b, n, κ, ρ∞) + 3σ`.
pub fn wegner_check(
    config: &DosConfig,
    sample: &SpectrumSample,
    interval: &EnergyInterval,
    n: usize,
    kind: ConstantKind,
) -> Result<VerificationReport> {
    let kappa = kappa_of(config)?;
    let rho = config.distribution.sup_density();
    let b = interval.b();
    let cw = match kind {
        ConstantKind::Continuum => c_w(b, n, kappa, rho),
        ConstantKind::Discrete => DiscreteConstants::new(&config.domain).c_w(b, n, kappa, rho),
    }
    .map_err(|e| Error::Precondition(e.to_string()))?;
    let est = Estimate::from_values(&sample.counts(interval));
    let rhs = interval.length() * sample.volume * cw + SIGMA_SLACK * est.stderr;
    Ok(VerificationReport::le(format!("wegner_{}", kind.tag()), est.mean, rhs, 0.0)
        .with_param("C_W", cw)
        .with_param("n", n)
        .with_param("a", interval.a())
        .with_param("b", b)
        .with_param("kappa", kappa)
        .with_param("stderr", est.stderr)
        .with_param("samples", est.samples)
        .with_seed(sample.master_seed))
}

/// `|n̂^ε(E2) - n̂^ε(E1)| ≤ min{C_W, K_1·|Λ|·(E2 - E1)} + 3σ`, `σ` the combined error.
pub fn lipschitz_check(
    config: &DosConfig,
    sample: &SpectrumSample,
    e1: f64,
    e2: f64,
    epsilon: f64,
    kind: ConstantKind,
) -> Result<VerificationReport> {
    let kappa = kappa_of(config)?;
    let d = config.domain.dim();
    if !(e1 >= 0.0 && e1 <= e2) {
        return Err(Error::Domain(format!("need 0 <= E1 <= E2, got E1 = {e1}, E2 = {e2}")));
    }
    let disc = DiscreteConstants::new(&config.domain);
    let limit = match kind {
        ConstantKind::Continuum => e0(d),
        ConstantKind::Discrete => disc.e0(),
    };
    if !(e2 < limit) {
        return Err(Error::Domain(format!(
            "E2 = {e2} must lie below E0 = {limit} (d = {d}, {} constants)",
            kind.tag()
        )));
    }
    let rho = config.distribution.sup_density();
    let (cw, k) = match kind {
        ConstantKind::Continuum => (c_w(e2 + epsilon, 0, kappa, rho)?, if e2 > 0.0 { k1(e2, d, kappa)? } else { 0.0 }),
        ConstantKind::Discrete => (
            disc.c_w(e2 + epsilon, 0, kappa, rho)?,
            if e2 > 0.0 { disc.k1(e2, kappa)? } else { 0.0 },
        ),
    };
    let n1 = ldos_point(sample, e1, epsilon)?;
    let n2 = ldos_point(sample, e2, epsilon)?;
    let sigma = (n1.stderr * n1.stderr + n2.stderr * n2.stderr).sqrt();
    let lipschitz = k * sample.volume * (e2 - e1);
    let rhs = cw.min(lipschitz) + SIGMA_SLACK * sigma;
    Ok(VerificationReport::le(format!("lipschitz_{}", kind.tag()), (n2.mean - n1.mean).abs(), rhs, 0.0)
        .with_param("E1", e1)
        .with_param("E2", e2)
        .with_param("epsilon", epsilon)
        .with_param("C_W", cw)
        .with_param("K1", k)
        .with_param("stderr", sigma)
        .with_seed(sample.master_seed))
}

fn fixed_site_constant(config: &DosConfig, b: f64, kind: ConstantKind) -> Result<f64> {
    if config.domain.bc() != BoundaryCondition::Dirichlet {
        return Err(Error::Precondition(format!(
            "fixed-site Wegner bound needs Dirichlet boundary conditions, got {}",
            config.domain.bc()
        )));
    }
    let kappa = kappa_of(config)?;
    let d = config.domain.dim();
    let c = match kind {
        ConstantKind::Continuum => c_bd(b, d),
        ConstantKind::Discrete => DiscreteConstants::new(&config.domain).c_bd(b),
    }
    .map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(c / (kappa * kappa))
}

/// `mean_{ω_k^⊥} Tr P_{(ω_k^⊥, τ)}(I) ≤ c(b, d)·κ⁻²·|Λ|·|I| + 3σ`, from a sample drawn
/// with site `k` pinned at `τ`.
pub fn fixed_site_wegner(
    config: &DosConfig,
    pinned: &SpectrumSample,
    tau: f64,
    interval: &EnergyInterval,
    kind: ConstantKind,
) -> Result<VerificationReport> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("pinned coupling must be nonnegative, got {tau}")));
    }
    let c = fixed_site_constant(config, interval.b(), kind)?;
    let est = Estimate::from_values(&pinned.counts(interval));
    let rhs = c * pinned.volume * interval.length() + SIGMA_SLACK * est.stderr;
    Ok(VerificationReport::le(format!("fixed_site_wegner_{}", kind.tag()), est.mean, rhs, 0.0)
        .with_param("tau", tau)
        .with_param("a", interval.a())
        .with_param("b", interval.b())
        .with_param("c_bd_over_kappa2", c)
        .with_param("stderr", est.stderr)
        .with_seed(pinned.master_seed))
}

/// `mean{Tr P_{(·,0)}(I) - Tr P_{(·,1)}(I)} ≤ c(E2, d)·κ⁻²·|Λ|·|I| + 3σ` on paired samples.
pub fn fixed_site_difference(
    config: &DosConfig,
    at_zero: &SpectrumSample,
    at_one: &SpectrumSample,
    interval: &EnergyInterval,
    kind: ConstantKind,
) -> Result<VerificationReport> {
    if at_zero.len() != at_one.len() {
        return Err(Error::DimensionMismatch {
            expected: at_zero.len(),
            got: at_one.len(),
        });
    }
    let c = fixed_site_constant(config, interval.b(), kind)?;
    let diff: Vec<f64> = at_zero
        .counts(interval)
        .iter()
        .zip(at_one.counts(interval))
        .map(|(a, b)| a - b)
        .collect();
    let est = Estimate::from_values(&diff);
    let rhs = c * at_zero.volume * interval.length() + SIGMA_SLACK * est.stderr;
    Ok(VerificationReport::le(format!("fixed_site_difference_{}", kind.tag()), est.mean, rhs, 0.0)
        .with_param("a", interval.a())
        .with_param("b", interval.b())
        .with_param("stderr", est.stderr)
        .with_seed(at_zero.master_seed))
}

/// Largest decrease `λ_j(lower) - λ_j(upper)` over paired spectra whose potentials are
/// pointwise ordered; zero up to rounding by min-max.
pub fn paired_monotonicity(lower: &SpectrumSample, upper: &SpectrumSample) -> Result<VerificationReport> {
    if lower.len() != upper.len() {
        return Err(Error::DimensionMismatch {
            expected: lower.len(),
            got: upper.len(),
        });
    }
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut scale: f64 = 1.0;
    for (a, b) in lower.spectra.iter().zip(&upper.spectra) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max(x - y);
            scale = scale.max(x.abs()).max(y.abs());
        }
    }
    Ok(VerificationReport::le("potential_monotonicity", worst.max(0.0), 0.0, 1e-10 * scale)
        .with_param("pairs", lower.len())
        .with_param("largest_drop", worst))
}
