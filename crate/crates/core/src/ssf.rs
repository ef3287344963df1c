//! Spectral shift function `ξ(E; H_τ2, H_τ1)` of the pair `H_τ = H_0 + τ·u²`, `τ1 ≤ τ2`.
//!
//! Three routes: the eigenvalue count difference below `E`, the number of branches that
//! cross `E` as `ω` runs over `[τ1, τ2]`, and the `ε → 0` limit of
//! `(1/ε)∫ Tr(u P_ω([E, E+ε]) u) dω`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::Family;
use crate::quadrature::{breakpoints, integrate_piecewise, GaussLegendre};
use crate::report::VerificationReport;
use crate::spectral::{
    eigendecompose_dense, eigenvalues_dense, level_crossings, solve_crossing, trace_branches,
    BranchOptions, BranchTrace, Crossing, EnergyInterval,
};

/// Default `ε` ladder of the Birman–Solomyak limit.
pub const EPS_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn spectral_scale(spectra: &[&[f64]]) -> f64 {
    spectra
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1.0)
}

fn distance(spectrum: &[f64], e: f64) -> f64 {
    spectrum.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min)
}

/// `#{λ(H_τ1) < E} - #{λ(H_τ2) < E}` from the two ascending spectra.
pub fn ssf_trace_difference(spectrum1: &[f64], spectrum2: &[f64], energy: f64) -> Result<i64> {
    let tolerance = 1e-8 * spectral_scale(&[spectrum1, spectrum2]);
    for s in [spectrum1, spectrum2] {
        let d = distance(s, energy);
        if d <= tolerance {
            return Err(Error::NearSpectrum {
                energy,
                distance: d,
                tolerance,
            });
        }
    }
    let below = |s: &[f64]| s.iter().filter(|&&l| l < energy).count() as i64;
    Ok(below(spectrum1) - below(spectrum2))
}

/// Move `E` up in steps of `1e-7·‖H‖` until it is clear of both spectra.
pub fn perturb_off_spectra(spectrum1: &[f64], spectrum2: &[f64], energy: f64) -> f64 {
    let scale = spectral_scale(&[spectrum1, spectrum2]);
    let tolerance = 1e-8 * scale;
    let mut e = energy;
    while distance(spectrum1, e) <= tolerance || distance(spectrum2, e) <= tolerance {
        e += 1e-7 * scale;
    }
    if e != energy {
        log::info!("energy {energy} perturbed to {e} off the spectra");
    }
    e
}

/// Crossings `ω_j(E) ∈ [τ1, τ2]` of every branch of `trace`, via [`solve_crossing`].
pub fn crossings_by_continuation(
    family: &Family,
    trace: &BranchTrace,
    energy: f64,
    tau1: f64,
    tau2: f64,
    floor: f64,
) -> Result<Vec<Crossing>> {
    let mut out = Vec::new();
    for j in 0..trace.n_branches() {
        if let Some(c) = solve_crossing(family, trace, j, energy, tau1, tau2, floor)? {
            out.push(c);
        }
    }
    Ok(out)
}

/// `card Γ(E)`: the number of branches crossing `E` on `[τ1, τ2]`.
pub fn ssf_crossing_count(
    family: &Family,
    trace: &BranchTrace,
    energy: f64,
    tau1: f64,
    tau2: f64,
    floor: f64,
) -> Result<usize> {
    Ok(crossings_by_continuation(family, trace, energy, tau1, tau2, floor)?.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BirmanSolomyak {
    /// `(ε, (1/ε)∫ Tr(u P_ω([E, E+ε]) u) dω)`
    pub values: Vec<(f64, f64)>,
    /// Polynomial extrapolation of the ladder to `ε = 0`.
    pub extrapolated: f64,
    /// The values are not monotone in `ε` beyond `1e-6`.
    pub unstable: bool,
    /// `[E, E + ε_max]` holds no eigenvalue of `H_τ1` or `H_τ2`, so every ladder value is exact.
    pub clear: bool,
}

/// `∫_{τ1}^{τ2} Tr(u P_ω(I) u) dω`.
pub fn projected_trace_integral(family: &Family, interval: &EnergyInterval, tau1: f64, tau2: f64, tol: f64) -> Result<f64> {
    let weight = family.weight();
    let coupling = family.coupling();
    let integrand = |omega: f64| -> Result<f64> {
        let spec = eigendecompose_dense(&family.evaluate(omega), weight, "ssf")?;
        let mut sum = 0.0;
        for (j, &l) in spec.eigenvalues().iter().enumerate() {
            if interval.contains(l) {
                let v = spec.eigenvectors().column(j);
                sum += weight * v.iter().zip(coupling).map(|(x, c)| c * x * x).sum::<f64>();
            }
        }
        Ok(sum)
    };
    let jumps = level_crossings(family, interval.a(), tau1, tau2)
        .into_iter()
        .chain(level_crossings(family, interval.b(), tau1, tau2));
    let breaks = breakpoints(tau1, tau2, jumps);
    let rule = GaussLegendre::new(16);
    Ok(integrate_piecewise(&rule, &integrand, &breaks, tol, 24)?.value)
}

/// Neville interpolation of `(x_i, y_i)` evaluated at `x = 0`.
pub fn extrapolate_to_zero(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    let mut p: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (points[i].0, points[i + level].0);
            p[i] = (xi * p[i + 1] - xj * p[i]) / (xi - xj);
        }
    }
    p.first().copied().unwrap_or(0.0)
}

pub fn birman_solomyak_limit(
    family: &Family,
    energy: f64,
    tau1: f64,
    tau2: f64,
    eps_list: &[f64],
) -> Result<BirmanSolomyak> {
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("epsilon ladder must be nonempty and positive".into()));
    }
    if !(tau1 < tau2) {
        return Err(Error::Config(format!("need tau1 < tau2, got [{tau1}, {tau2}]")));
    }
    let mut values = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let i = EnergyInterval::closed(energy, energy + eps)?;
        let v = projected_trace_integral(family, &i, tau1, tau2, 1e-9 * eps)? / eps;
        values.push((eps, v));
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let diffs: Vec<f64> = sorted.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let unstable =
        diffs.iter().any(|&d| d > 1e-6) && diffs.iter().any(|&d| d < -1e-6);
    let eps_max = eps_list.iter().copied().fold(0.0, f64::max);
    let clear = [tau1, tau2].iter().all(|&t| {
        !eigenvalues_dense(&family.evaluate(t))
            .iter()
            .any(|&l| l >= energy && l <= energy + eps_max)
    });
    Ok(BirmanSolomyak {
        extrapolated: extrapolate_to_zero(&sorted),
        values,
        unstable,
        clear,
    })
}

/// `ξ ≤ Tr P_τ1([E - ‖u²‖(τ2 - τ1), E])`.
pub fn ssf_bound_check(
    spectrum1: &[f64],
    xi: i64,
    energy: f64,
    tau1: f64,
    tau2: f64,
    coupling_norm: f64,
) -> Result<VerificationReport> {
    let i = EnergyInterval::normalized(energy - coupling_norm * (tau2 - tau1), energy)?;
    let rhs = i.count(spectrum1) as f64;
    Ok(VerificationReport::le("ssf_bound", xi as f64, rhs, 0.0)
        .with_param("E", energy)
        .with_param("tau1", tau1)
        .with_param("tau2", tau2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsfRecord {
    #[serde(rename = "E")]
    pub energy: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub xi_trace: i64,
    pub xi_crossings: i64,
    pub bs_limit: f64,
    pub bound_rhs: i64,
    pub bs_clear: bool,
    pub routes_agree: bool,
    pub bs_within: bool,
    pub bound_holds: bool,
}

impl SsfRecord {
    pub fn passed(&self) -> bool {
        self.routes_agree && self.bs_within && self.bound_holds
    }
}

#[derive(Debug, Clone)]
pub struct SsfEvaluation {
    pub record: SsfRecord,
    pub crossings: Vec<Crossing>,
    pub birman_solomyak: BirmanSolomyak,
}

/// All three routes and the bound at one `(E, τ1, τ2)`; `E` must be clear of both spectra.
///
/// The branch trace runs on `grid_points` equally spaced couplings (refined as needed).
pub fn evaluate_ssf(
    family: &Family,
    energy: f64,
    tau1: f64,
    tau2: f64,
    eps_list: &[f64],
    grid_points: usize,
) -> Result<SsfEvaluation> {
    if !(tau1 < tau2) {
        return Err(Error::Config(format!("need tau1 < tau2, got [{tau1}, {tau2}]")));
    }
    let s1 = eigenvalues_dense(&family.evaluate(tau1));
    let s2 = eigenvalues_dense(&family.evaluate(tau2));
    let xi_trace = ssf_trace_difference(&s1, &s2, energy)?;
    let n = grid_points.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { tau2 } else { tau1 + (tau2 - tau1) * i as f64 / (n - 1) as f64 })
        .collect();
    let opts = BranchOptions::default();
    let trace = trace_branches(family, &grid, opts)?;
    let crossings = crossings_by_continuation(family, &trace, energy, tau1, tau2, opts.overlap_floor)?;
    let bs = birman_solomyak_limit(family, energy, tau1, tau2, eps_list)?;
    let bound = ssf_bound_check(&s1, xi_trace, energy, tau1, tau2, family.coupling_norm())?;
    let xi_crossings = crossings.len() as i64;
    let record = SsfRecord {
        energy,
        tau1,
        tau2,
        xi_trace,
        xi_crossings,
        bs_limit: bs.extrapolated,
        bound_rhs: bound.rhs as i64,
        bs_clear: bs.clear,
        routes_agree: xi_trace == xi_crossings,
        bs_within: (bs.extrapolated - xi_trace as f64).abs() <= 1e-3,
        bound_holds: bound.passed,
    };
    Ok(SsfEvaluation {
        record,
        crossings,
        birman_solomyak: bs,
    })
}

pub fn write_ssf_csv<W: Write>(records: &[SsfRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::operator::SymmetricOperator;

    fn scalar() -> Family {
        let h0 = SymmetricOperator::diagonal_operator(&[0.0], None, 1.0, "0");
        Family::new(h0, vec![1.0]).unwrap()
    }

    #[test]
    fn scalar_routes() {
        let fam = scalar();
        assert_eq!(ssf_trace_difference(&[0.2], &[0.8], 0.5).unwrap(), 1);
        assert_eq!(ssf_trace_difference(&[0.2], &[0.8], 0.9).unwrap(), 0);
        assert_eq!(ssf_trace_difference(&[0.2], &[0.2], 0.1).unwrap(), 0);
        assert!(ssf_trace_difference(&[0.2], &[0.8], 0.2).is_err());
        let ev = evaluate_ssf(&fam, 0.5, 0.2, 0.8, &EPS_LADDER, 5).unwrap();
        assert!(ev.record.passed(), "{:?}", ev.record);
        for (_, v) in &ev.birman_solomyak.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
        assert_eq!(ev.record.bound_rhs, 1);
        let above = birman_solomyak_limit(&fam, 5.0, 0.2, 0.8, &EPS_LADDER).unwrap();
        assert_eq!(above.extrapolated, 0.0);
    }

    #[test]
    fn neville_exact_for_quadratics() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.4].iter().map(|&x| (x, 3.0 + 2.0 * x - x * x)).collect();
        assert!((extrapolate_to_zero(&pts) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_three_routes() {
        let fam = instances::random_family(8, 3, 4);
        let s0 = eigenvalues_dense(fam.base_dense());
        let e = 0.5 * (s0[3] + s0[4]);
        let s1 = eigenvalues_dense(&fam.evaluate(-1.0));
        let s2 = eigenvalues_dense(&fam.evaluate(2.0));
        let e = perturb_off_spectra(&s1, &s2, e);
        let ev = evaluate_ssf(&fam, e, -1.0, 2.0, &EPS_LADDER, 31).unwrap();
        assert!(ev.record.routes_agree && ev.record.bound_holds, "{:?}", ev.record);
        if ev.record.bs_clear {
            assert!(ev.record.bs_within, "{:?}", ev.record);
        }
    }

    #[test]
    fn monotone_in_upper_coupling() {
        let fam = instances::random_family(8, 2, 9);
        let s1 = eigenvalues_dense(&fam.evaluate(0.0));
        let e = s1[2] + 0.01;
        let mut last = 0;
        for k in 1..10 {
            let s2 = eigenvalues_dense(&fam.evaluate(0.5 * k as f64));
            if let Ok(xi) = ssf_trace_difference(&s1, &s2, e) {
                assert!(xi >= last);
                last = xi;
            }
        }
    }
}
