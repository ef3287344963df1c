//! Single-site profiles, coupling distributions and reproducible disorder realizations.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::domain::BoxDomain;
use crate::error::{Error, Result};

/// The single-site bump `u_0` sampled on the `m^d` cells of the reference cube.
///
/// Stores `u_0` itself; the potential contributed by site `k` is `ω_k·u_k²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSite {
    kappa: f64,
    profile: Vec<f64>,
    characteristic: bool,
}

impl SingleSite {
    /// `u_0 = √κ·χ_0`, so that `u_0² = κ·χ_0`.
    pub fn characteristic(kappa: f64, domain: &BoxDomain) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Config(format!(
                "characteristic profile needs 0 < kappa <= 1, got {kappa}"
            )));
        }
        Ok(Self {
            kappa,
            profile: vec![kappa.sqrt(); domain.points_per_cube()],
            characteristic: true,
        })
    }

    /// `u_0 = 0`: the potential vanishes for every realization.
    pub fn vanishing(domain: &BoxDomain) -> Self {
        Self {
            kappa: 0.0,
            profile: vec![0.0; domain.points_per_cube()],
            characteristic: false,
        }
    }

    /// A general profile; every sample must satisfy `κ ≤ u_0² ≤ 1`.
    pub fn from_samples(kappa: f64, profile: Vec<f64>, domain: &BoxDomain) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
        }
        if profile.len() != domain.points_per_cube() {
            return Err(Error::IndexMismatch {
                what: "single-site profile samples",
                expected: domain.points_per_cube(),
                got: profile.len(),
            });
        }
        for (i, &u) in profile.iter().enumerate() {
            let u2 = u * u;
            if !(u >= 0.0) || u2 < kappa * (1.0 - 1e-12) || u2 > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "profile sample {i} = {u} violates kappa <= u0^2 <= 1 (kappa = {kappa})"
                )));
            }
        }
        let characteristic = profile.iter().all(|&u| u == kappa.sqrt());
        Ok(Self {
            kappa,
            profile,
            characteristic,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Whether `u_0² = κ·χ_0` exactly (the restricted model).
    pub fn is_characteristic(&self) -> bool {
        self.characteristic
    }

    pub fn u_squared(&self, local: usize) -> f64 {
        self.profile[local] * self.profile[local]
    }

    /// `max u_0²`, i.e. `‖u²‖`.
    pub fn sup_u_squared(&self) -> f64 {
        self.profile.iter().map(|u| u * u).fold(0.0, f64::max)
    }
}

/// Law of the iid couplings `ω_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SiteDistribution {
    /// Uniform on `[0, 1]`, density `ρ = χ_[0,1]`.
    Uniform,
    /// Piecewise-constant density on equal bins of `[lo, hi]`; normalized on construction.
    Table { lo: f64, hi: f64, density: Vec<f64> },
}

impl SiteDistribution {
    pub fn table(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "density table support must satisfy 0 <= lo < hi < inf, got [{lo}, {hi}]"
            )));
        }
        if density.is_empty() || density.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("density table needs finite nonnegative bins".into()));
        }
        let width = (hi - lo) / density.len() as f64;
        let mass: f64 = density.iter().sum::<f64>() * width;
        if !(mass > 0.0) {
            return Err(Error::Config("density table has zero mass".into()));
        }
        let density = density.into_iter().map(|p| p / mass).collect();
        Ok(SiteDistribution::Table { lo, hi, density })
    }

    /// `‖ρ‖_∞`
    pub fn sup_density(&self) -> f64 {
        match self {
            SiteDistribution::Uniform => 1.0,
            SiteDistribution::Table { density, .. } => density.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            SiteDistribution::Uniform => (0.0, 1.0),
            SiteDistribution::Table { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, SiteDistribution::Uniform)
    }

    /// Inverse CDF at `p ∈ [0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            SiteDistribution::Uniform => p,
            SiteDistribution::Table { lo, hi, density } => {
                let width = (hi - lo) / density.len() as f64;
                let mut acc = 0.0;
                for (i, &rho) in density.iter().enumerate() {
                    let mass = rho * width;
                    if p < acc + mass && mass > 0.0 {
                        return lo + width * (i as f64 + (p - acc) / mass);
                    }
                    acc += mass;
                }
                *hi
            }
        }
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based hash of `(seed, stream, counter)`, independent of evaluation order.
pub fn counter_hash(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN));
    let b = mix64(a ^ stream.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
    mix64(b ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(GOLDEN))
}

/// Uniform variate in `[0, 1)` with 53 random bits.
pub fn counter_uniform(seed: u64, stream: u64, counter: u64) -> f64 {
    (counter_hash(seed, stream, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The couplings `{ω_k}` of one realization, indexed by linear cube index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    omegas: Vec<f64>,
    master_seed: u64,
    realization_index: u64,
}

impl DisorderRealization {
    pub fn from_values(omegas: Vec<f64>, master_seed: u64, realization_index: u64) -> Self {
        Self {
            omegas,
            master_seed,
            realization_index,
        }
    }

    pub fn constant(domain: &BoxDomain, value: f64) -> Self {
        Self::from_values(vec![value; domain.n_cubes()], 0, 0)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn omega(&self, cube: usize) -> f64 {
        self.omegas[cube]
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn realization_index(&self) -> u64 {
        self.realization_index
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Copy with `ω_k` pinned to `value`.
    pub fn with_override(&self, cube: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.omegas[cube] = value;
        out
    }

    pub fn max_omega(&self) -> f64 {
        self.omegas.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with one row per cube: lattice coordinates `k1..kd` then `omega`.
    pub fn write_csv<W: Write>(&self, domain: &BoxDomain, out: W) -> Result<()> {
        if self.omegas.len() != domain.n_cubes() {
            return Err(Error::IndexMismatch {
                what: "realization sites",
                expected: domain.n_cubes(),
                got: self.omegas.len(),
            });
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=domain.dim()).map(|a| format!("k{a}")).collect();
        header.push("omega".into());
        w.write_record(&header)?;
        for (cube, omega) in self.omegas.iter().enumerate() {
            let mut row: Vec<String> = domain
                .cube_lattice(cube)
                .iter()
                .map(|k| k.to_string())
                .collect();
            row.push(omega.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        domain: &BoxDomain,
        input: R,
        master_seed: u64,
        realization_index: u64,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut omegas = vec![f64::NAN; domain.n_cubes()];
        let side = domain.side_cubes();
        let half = domain.half_width() as i64;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != domain.dim() + 1 {
                return Err(Error::Config(format!(
                    "realization row has {} fields, expected {}",
                    rec.len(),
                    domain.dim() + 1
                )));
            }
            let mut idx = 0usize;
            for a in 0..domain.dim() {
                let k: i64 = rec[a]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("bad lattice coordinate: {e}")))?;
                let c = k + half;
                if c < 0 || c >= side as i64 {
                    return Err(Error::Config(format!("lattice coordinate {k} outside box")));
                }
                idx = idx * side + c as usize;
            }
            omegas[idx] = rec[domain.dim()]
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad omega value: {e}")))?;
        }
        if omegas.iter().any(|w| w.is_nan()) {
            return Err(Error::Config("realization file does not cover every cube".into()));
        }
        Ok(Self::from_values(omegas, master_seed, realization_index))
    }
}

/// Draw `ω_k` for every cube of the box from the counter hash of
/// `(master_seed, realization_index, k)`.
pub fn sample_disorder(
    dist: &SiteDistribution,
    domain: &BoxDomain,
    master_seed: u64,
    realization_index: u64,
) -> DisorderRealization {
    let omegas = (0..domain.n_cubes() as u64)
        .map(|k| dist.quantile(counter_uniform(master_seed, realization_index, k)))
        .collect();
    DisorderRealization::from_values(omegas, master_seed, realization_index)
}
