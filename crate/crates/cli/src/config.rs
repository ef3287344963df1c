//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speclab_core::dos::DosConfig;
use speclab_core::operator::{BoundaryCondition, BoxDomain, SingleSite, SiteDistribution};
use speclab_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SuiteName {
    TraceBound,
    SpectralAveraging,
    Ssf,
    Wegner,
    Lipschitz,
    FixedSite,
    All,
}

impl SuiteName {
    pub const ORDER: [SuiteName; 6] = [
        SuiteName::TraceBound,
        SuiteName::SpectralAveraging,
        SuiteName::Ssf,
        SuiteName::Wegner,
        SuiteName::Lipschitz,
        SuiteName::FixedSite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::TraceBound => "trace_bound",
            SuiteName::SpectralAveraging => "spectral_averaging",
            SuiteName::Ssf => "ssf",
            SuiteName::Wegner => "wegner",
            SuiteName::Lipschitz => "lipschitz",
            SuiteName::FixedSite => "fixed_site",
            SuiteName::All => "all",
        }
    }

    /// The concrete suites this name selects, in run order.
    pub fn expand(self) -> Vec<SuiteName> {
        match self {
            SuiteName::All => Self::ORDER.to_vec(),
            s => vec![s],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub half_width: usize,
    pub m: usize,
    pub bc: BoundaryCondition,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            d: 1,
            half_width: 4,
            m: 8,
            bc: BoundaryCondition::Dirichlet,
        }
    }
}

impl DomainConfig {
    pub fn build(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.d, self.half_width, self.m, self.bc)
    }
}

/// `u_0 = √κ·χ_0` unless `profile` lists the `m^d` samples of `u_0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
}

impl Default for SiteConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            profile: None,
        }
    }
}

impl SiteConfig {
    pub fn build(&self, domain: &BoxDomain) -> Result<SingleSite> {
        match &self.profile {
            None => SingleSite::characteristic(self.kappa, domain),
            Some(p) => SingleSite::from_samples(self.kappa, p.clone(), domain),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    #[default]
    Uniform,
    Table { lo: f64, hi: f64, density: Vec<f64> },
}

impl DistributionConfig {
    pub fn build(&self) -> Result<SiteDistribution> {
        match self {
            DistributionConfig::Uniform => Ok(SiteDistribution::Uniform),
            DistributionConfig::Table { lo, hi, density } => SiteDistribution::table(*lo, *hi, density.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceBoundParams {
    pub realizations: usize,
    pub n_values: Vec<usize>,
    /// `b = b_fraction·λ_{n+1}`, `I = [0, b]`
    pub b_fraction: f64,
    pub boundary_instances: usize,
    pub poincare_vectors: usize,
    pub mass_realizations: usize,
    pub mass_kappas: Vec<f64>,
}

impl Default for TraceBoundParams {
    fn default() -> Self {
        Self {
            realizations: 200,
            n_values: vec![0, 1],
            b_fraction: 0.8,
            boundary_instances: 20,
            poincare_vectors: 1000,
            mass_realizations: 100,
            mass_kappas: vec![1.0, 0.1],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingParams {
    pub trials: usize,
    pub size: usize,
    pub full_line_trials: usize,
    pub full_line_rank: usize,
    pub fh_instances: usize,
    pub eta_trials: usize,
    pub quadrature_tol: f64,
    pub route_tol: f64,
}

impl Default for AveragingParams {
    fn default() -> Self {
        Self {
            trials: 1000,
            size: 16,
            full_line_trials: 100,
            full_line_rank: 4,
            fh_instances: 50,
            eta_trials: 20,
            quadrature_tol: 1e-6,
            route_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsfParams {
    pub triples: usize,
    pub size: usize,
    pub rank: usize,
    pub bound_triples: usize,
    /// triples on the site family of the configured box
    pub grid_triples: usize,
    pub grid_points: usize,
    pub eps_ladder: Vec<f64>,
}

impl Default for SsfParams {
    fn default() -> Self {
        Self {
            triples: 100,
            size: 16,
            rank: 3,
            bound_triples: 200,
            grid_triples: 10,
            grid_points: 33,
            eps_ladder: speclab_core::ssf::EPS_LADDER.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WegnerParams {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub kappas: Vec<f64>,
    /// repeat the first κ with Neumann boundary conditions
    pub neumann: bool,
    /// independent rerun size for the MC self-consistency check; 0 disables it
    pub rerun_samples: usize,
    pub ldos_energies: Vec<f64>,
    pub ldos_epsilons: Vec<f64>,
}

impl Default for WegnerParams {
    fn default() -> Self {
        Self {
            a: 0.05,
            b: 0.15,
            n: 0,
            kappas: vec![1.0, 0.5],
            neumann: true,
            rerun_samples: 10_000,
            ldos_energies: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            ldos_epsilons: vec![0.05, 0.02, 0.01],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzParams {
    /// defaults to five points spread below `E0`
    pub energies: Option<Vec<f64>>,
    pub epsilon: f64,
}

impl Default for LipschitzParams {
    fn default() -> Self {
        Self {
            energies: None,
            epsilon: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedSiteParams {
    pub taus: Vec<f64>,
    pub a: f64,
    pub b: f64,
    /// defaults to the middle cube
    pub site: Option<usize>,
}

impl Default for FixedSiteParams {
    fn default() -> Self {
        Self {
            taus: vec![0.0, 0.5, 1.0],
            a: 0.05,
            b: 0.15,
            site: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: SuiteName,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub site: SiteConfig,
    #[serde(default)]
    pub distribution: DistributionConfig,
    #[serde(default)]
    pub trace_bound: TraceBoundParams,
    #[serde(default)]
    pub spectral_averaging: AveragingParams,
    #[serde(default)]
    pub ssf: SsfParams,
    #[serde(default)]
    pub wegner: WegnerParams,
    #[serde(default)]
    pub lipschitz: LipschitzParams,
    #[serde(default)]
    pub fixed_site: FixedSiteParams,
}

fn default_seed() -> u64 {
    20_240_601
}

fn default_samples() -> usize {
    1000
}

impl ExperimentConfig {
    /// The desk configuration: `d = 1`, `L = 4`, `m = 8`, `10³` samples.
    pub fn desk(suite: SuiteName) -> Self {
        Self {
            suite,
            master_seed: default_seed(),
            n_samples: default_samples(),
            workers: None,
            out: None,
            domain: DomainConfig::default(),
            site: SiteConfig::default(),
            distribution: DistributionConfig::default(),
            trace_bound: TraceBoundParams::default(),
            spectral_averaging: AveragingParams::default(),
            ssf: SsfParams::default(),
            wegner: WegnerParams::default(),
            lipschitz: LipschitzParams::default(),
            fixed_site: FixedSiteParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn dos_config(&self) -> Result<DosConfig> {
        let domain = self.domain.build()?;
        Ok(DosConfig {
            domain,
            site: self.site.build(&domain)?,
            distribution: self.distribution.build()?,
            master_seed: self.master_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_desk_defaults() {
        let c = ExperimentConfig::from_toml("suite = \"wegner\"").unwrap();
        assert_eq!(c.suite, SuiteName::Wegner);
        assert_eq!(c.domain.m, 8);
        assert_eq!(c.n_samples, 1000);
        assert_eq!(c.wegner.kappas, vec![1.0, 0.5]);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
            suite = "all"
            master_seed = 7
            n_samples = 50
            workers = 2
            [domain]
            d = 2
            L = 2
            m = 4
            bc = "neumann"
            [site]
            kappa = 0.5
            [distribution]
            kind = "table"
            lo = 0.0
            hi = 2.0
            density = [1.0, 3.0]
            [lipschitz]
            energies = [0.1, 0.2]
            epsilon = 0.01
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.domain.bc, BoundaryCondition::Neumann);
        assert_eq!(c.workers, Some(2));
        assert!(c.dos_config().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("suite = \"ssf\"\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("suite = \"ssf\"\n[ssf]\ntripels = 3").is_err());
        assert!(ExperimentConfig::from_toml("suite = \"nope\"").is_err());
    }

    #[test]
    fn all_expands_in_order() {
        assert_eq!(SuiteName::All.expand().len(), 6);
        assert_eq!(SuiteName::Ssf.expand(), vec![SuiteName::Ssf]);
    }
}
