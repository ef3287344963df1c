//! Spectral averaging of `ω ↦ ⟨φ, u P_ω(I) u φ⟩` for `H_ω = H_0 + ω·u²`.
//!
//! Two independent evaluations are provided. The coupling route integrates in `ω`
//! on panels split where an eigenvalue passes an endpoint of `I`, since the integrand
//! jumps exactly there. The energy route changes variables to
//! `∫_I Σ_{j ∈ Γ(E)} f_j(E) dE` with the weights `f_j` from the Birman–Schwinger kernel.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::Family;
use crate::quadrature::{breakpoints, integrate_piecewise, GaussLegendre};
use crate::spectral::{
    birman_schwinger_crossings, eigendecompose_dense, eigenvalues_dense, level_crossings, support,
    weighted_dot, BsCrossing, EnergyInterval,
};

#[derive(Debug, Clone, Copy)]
pub struct AveragingOptions {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Target absolute quadrature error.
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for AveragingOptions {
    fn default() -> Self {
        Self {
            nodes: 16,
            tol: 1e-9,
            max_depth: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Average {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// `‖φ‖²` restricted to `supp u`.
pub fn support_norm2(family: &Family, phi: &[f64]) -> f64 {
    let w = family.weight();
    w * support(family).iter().map(|&i| phi[i] * phi[i]).sum::<f64>()
}

fn check_phi(family: &Family, phi: &[f64]) -> Result<()> {
    if phi.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            got: phi.len(),
        });
    }
    Ok(())
}

/// `∫_{τ1}^{τ2} ⟨φ, u P_ω(I) u φ⟩ dω` by the coupling route.
///
/// Requires `‖u²‖ ≤ 1`, `‖φ‖ = 1` and `τ1 < τ2`; the result is then at most
/// `|I|·‖φ‖²_{supp u}`.
pub fn spectral_average(
    family: &Family,
    phi: &[f64],
    interval: &EnergyInterval,
    tau1: f64,
    tau2: f64,
    opts: AveragingOptions,
) -> Result<Average> {
    check_phi(family, phi)?;
    if family.coupling_norm() > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!(
            "spectral averaging needs ||u^2|| <= 1, got {}",
            family.coupling_norm()
        )));
    }
    let norm = weighted_dot(phi, phi, family.weight());
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("phi must be normalized, ||phi||^2 = {norm}")));
    }
    if !(tau1 < tau2) {
        return Err(Error::Config(format!("need tau1 < tau2, got [{tau1}, {tau2}]")));
    }
    coupling_route(family, phi, interval, tau1, tau2, opts)
}

/// The coupling-route integral without the normalization preconditions.
pub(crate) fn coupling_route(
    family: &Family,
    phi: &[f64],
    interval: &EnergyInterval,
    tau1: f64,
    tau2: f64,
    opts: AveragingOptions,
) -> Result<Average> {
    let weight = family.weight();
    let uphi: Vec<f64> = family.u().iter().zip(phi).map(|(u, p)| u * p).collect();
    let integrand = |omega: f64| -> Result<f64> {
        let spec = eigendecompose_dense(&family.evaluate(omega), weight, "average")?;
        Ok(spec
            .eigenvalues()
            .iter()
            .enumerate()
            .filter(|(_, &l)| interval.contains(l))
            .map(|(j, _)| {
                let c = spec.coefficient(j, &uphi);
                c * c
            })
            .sum())
    };
    let jumps = level_crossings(family, interval.a(), tau1, tau2)
        .into_iter()
        .chain(level_crossings(family, interval.b(), tau1, tau2));
    let breaks = breakpoints(tau1, tau2, jumps);
    let rule = GaussLegendre::new(opts.nodes);
    let q = integrate_piecewise(&rule, &integrand, &breaks, opts.tol, opts.max_depth)?;
    Ok(Average {
        value: q.value,
        error_estimate: q.error_estimate,
        panels: q.panels,
    })
}

/// Energy-route integrand evaluator with node shifting away from `σ(H_0)`.
struct EnergyRoute<'a> {
    family: &'a Family,
    spectrum0: Vec<f64>,
    min_distance: f64,
}

impl<'a> EnergyRoute<'a> {
    fn new(family: &'a Family) -> Self {
        let spectrum0 = eigenvalues_dense(family.base_dense());
        let norm = spectrum0.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        Self {
            family,
            spectrum0,
            min_distance: 1e-6 * norm,
        }
    }

    fn crossings(&self, energy: f64) -> Result<Vec<BsCrossing>> {
        let nearest = self
            .spectrum0
            .iter()
            .copied()
            .min_by(|a, b| (a - energy).abs().total_cmp(&(b - energy).abs()));
        let mut e = energy;
        if let Some(l) = nearest {
            if (l - energy).abs() < self.min_distance {
                let dir = if energy < l { -1.0 } else { 1.0 };
                e = l + dir * self.min_distance;
                log::debug!("energy node {energy} shifted to {e} away from eigenvalue {l} of H_0");
            }
        }
        birman_schwinger_crossings(self.family, e)
    }
}

fn energy_integral(
    family: &Family,
    phi: &[f64],
    interval: &EnergyInterval,
    window: Option<(f64, f64)>,
    opts: AveragingOptions,
) -> Result<Average> {
    let weight = family.weight();
    let route = EnergyRoute::new(family);
    let mut kinks: Vec<f64> = route.spectrum0.clone();
    if let Some((t1, t2)) = window {
        kinks.extend(eigenvalues_dense(&family.evaluate(t1)));
        kinks.extend(eigenvalues_dense(&family.evaluate(t2)));
    }
    let integrand = |e: f64| -> Result<f64> {
        Ok(route
            .crossings(e)?
            .iter()
            .filter(|c| window.is_none_or(|(t1, t2)| c.omega >= t1 && c.omega <= t2))
            .map(|c| c.weight(phi, weight))
            .sum())
    };
    let breaks = breakpoints(interval.a(), interval.b(), kinks);
    let rule = GaussLegendre::new(opts.nodes);
    let q = integrate_piecewise(&rule, &integrand, &breaks, opts.tol, opts.max_depth)?;
    Ok(Average {
        value: q.value,
        error_estimate: q.error_estimate,
        panels: q.panels,
    })
}

/// `∫_I Σ_{j: ω_j(E) ∈ [τ1, τ2]} f_j(E) dE`, the energy route for [`spectral_average`].
pub fn spectral_average_by_energy(
    family: &Family,
    phi: &[f64],
    interval: &EnergyInterval,
    tau1: f64,
    tau2: f64,
    opts: AveragingOptions,
) -> Result<Average> {
    check_phi(family, phi)?;
    if !(tau1 < tau2) {
        return Err(Error::Config(format!("need tau1 < tau2, got [{tau1}, {tau2}]")));
    }
    energy_integral(family, phi, interval, Some((tau1, tau2)), opts)
}

/// `∫_I Σ_j f_j(E) dE` over all crossings on the whole line; equals `|I|·‖φ‖²_{supp u}`.
pub fn spectral_average_full_line(
    family: &Family,
    phi: &[f64],
    interval: &EnergyInterval,
    opts: AveragingOptions,
) -> Result<Average> {
    check_phi(family, phi)?;
    if support(family).is_empty() {
        return Err(Error::Precondition("u has empty support".into()));
    }
    energy_integral(family, phi, interval, None, opts)
}

/// `η_φ(E)` with its finite-`ε` cross-check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaDensity {
    pub energy: f64,
    /// `Σ_{j ∈ Γ(E)} f_j(E)`
    pub value: f64,
    /// `(ε, (1/ε)∫⟨φ, u P_ω([E, E+ε]) u φ⟩ dω)`
    pub finite_eps: Vec<(f64, f64)>,
    /// Linear extrapolation of the finite-`ε` values to `ε = 0`.
    pub extrapolated: f64,
    /// `[E, E + ε_max]` meets a branch endpoint (an eigenvalue of `H_τ1` or `H_τ2`).
    pub unstable: bool,
}

pub const ETA_EPS: [f64; 2] = [1e-3, 1e-4];

pub fn eta_density(family: &Family, phi: &[f64], energy: f64, tau1: f64, tau2: f64) -> Result<EtaDensity> {
    check_phi(family, phi)?;
    if !(tau1 < tau2) {
        return Err(Error::Config(format!("need tau1 < tau2, got [{tau1}, {tau2}]")));
    }
    let weight = family.weight();
    let value = EnergyRoute::new(family)
        .crossings(energy)?
        .iter()
        .filter(|c| c.omega >= tau1 && c.omega <= tau2)
        .map(|c| c.weight(phi, weight))
        .sum();
    let eps_max = ETA_EPS.iter().copied().fold(0.0, f64::max);
    let unstable = [tau1, tau2].iter().any(|&t| {
        eigenvalues_dense(&family.evaluate(t))
            .iter()
            .any(|&l| l >= energy - 1e-9 && l <= energy + eps_max + 1e-9)
    });
    let opts = AveragingOptions {
        tol: 1e-12,
        ..AveragingOptions::default()
    };
    let mut finite_eps = Vec::new();
    for &eps in &ETA_EPS {
        let i = EnergyInterval::closed(energy, energy + eps)?;
        let avg = coupling_route(family, phi, &i, tau1, tau2, opts)?;
        finite_eps.push((eps, avg.value / eps));
    }
    let (e1, v1) = finite_eps[0];
    let (e2, v2) = finite_eps[1];
    let extrapolated = v2 - (v1 - v2) * e2 / (e1 - e2);
    Ok(EtaDensity {
        energy,
        value,
        finite_eps,
        extrapolated,
        unstable,
    })
}

/// One row of an averaging sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingRecord {
    pub phi_id: usize,
    #[serde(rename = "I_a")]
    pub i_a: f64,
    #[serde(rename = "I_b")]
    pub i_b: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

pub fn write_averaging_csv<W: Write>(records: &[AveragingRecord], out: W) -> Result<()> {
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
    fn scalar_saturation() {
        let fam = scalar();
        let i = EnergyInterval::closed(0.2, 0.5).unwrap();
        let a = spectral_average(&fam, &[1.0], &i, 0.0, 1.0, AveragingOptions::default()).unwrap();
        assert!((a.value - 0.3).abs() < 1e-13);
        let e = spectral_average_by_energy(&fam, &[1.0], &i, 0.0, 1.0, AveragingOptions::default()).unwrap();
        assert!((e.value - 0.3).abs() < 1e-12);
        let far = EnergyInterval::closed(2.0, 3.0).unwrap();
        let z = spectral_average(&fam, &[1.0], &far, 0.0, 1.0, AveragingOptions::default()).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn routes_agree_random() {
        let fam = instances::random_family(10, 3, 21);
        let spec0 = eigenvalues_dense(fam.base_dense());
        let i = EnergyInterval::closed(spec0[3] + 0.05, spec0[5] + 0.2).unwrap();
        let phi = instances::random_unit_vector(10, 1.0, 5);
        let opts = AveragingOptions::default();
        let w = spectral_average(&fam, &phi, &i, -0.5, 1.0, opts).unwrap();
        let e = spectral_average_by_energy(&fam, &phi, &i, -0.5, 1.0, opts).unwrap();
        assert!((w.value - e.value).abs() < 1e-7, "{} vs {}", w.value, e.value);
        assert!(w.value <= i.length() * support_norm2(&fam, &phi) + 1e-6);
        let full = spectral_average_full_line(&fam, &phi, &i, opts).unwrap();
        let expect = i.length() * support_norm2(&fam, &phi);
        assert!((full.value - expect).abs() < 1e-8 * expect);
        assert!(w.value <= full.value + 1e-6);
    }

    #[test]
    fn off_support_phi_is_invisible() {
        let h0 = instances::random_symmetric(4, 2);
        let fam = Family::new(h0, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let i = EnergyInterval::closed(-0.3, 0.4).unwrap();
        let full = spectral_average_full_line(&fam, &[0.0, 1.0, 0.0, 0.0], &i, AveragingOptions::default()).unwrap();
        assert!(full.value.abs() < 1e-14);
    }

    #[test]
    fn eta_two_by_two() {
        let h0 = SymmetricOperator::diagonal_operator(&[0.0, 1.0], None, 1.0, "d");
        let fam = Family::new(h0, vec![1.0, 0.0]).unwrap();
        let phi = [0.6, 0.8];
        let eta = eta_density(&fam, &phi, 0.75, 0.0, 2.0).unwrap();
        // the only crossing has eigenprojection onto e_1
        assert!((eta.value - 0.36).abs() < 1e-12);
        assert!((eta.extrapolated - 0.36).abs() < 1e-8);
        assert!(!eta.unstable);
        let none = eta_density(&fam, &phi, 3.5, 0.0, 2.0).unwrap();
        assert_eq!(none.value, 0.0);
    }

    #[test]
    fn rejects_large_coupling() {
        let h0 = SymmetricOperator::diagonal_operator(&[0.0], None, 1.0, "0");
        let fam = Family::new(h0, vec![2.0]).unwrap();
        let i = EnergyInterval::closed(0.0, 1.0).unwrap();
        assert!(spectral_average(&fam, &[1.0], &i, 0.0, 1.0, AveragingOptions::default()).is_err());
    }
}
