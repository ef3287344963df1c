//! Level crossings `E_j(ω_j(E)) = E`: by bisection along a branch, by bisection on the
//! ordered spectrum, and from the Birman–Schwinger kernel `K_0(E) = u(H_0 - E)^{-1}u`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::{eigendecompose_dense, eigenvalues_dense, weighted_dot, BranchTrace};
use crate::error::{Error, Result};
use crate::operator::Family;

/// Grid points with `u(x)` at or below this value are outside `supp u`.
pub const SUPPORT_FLOOR: f64 = 1e-14;

/// A branch crossing found by continuation.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub branch: usize,
    pub energy: f64,
    pub omega: f64,
    /// Normalized eigenvector of `H_ω` at the crossing.
    pub vector: Vec<f64>,
}

/// One crossing with its weight `f_j(E) = ‖P̃_j φ‖²` for a chosen `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingRecord {
    pub branch: usize,
    #[serde(rename = "E")]
    pub energy: f64,
    pub omega: f64,
    pub weight: f64,
}

impl Crossing {
    /// `f_j(E) = |⟨uψ, φ⟩|² / ‖uψ‖²`; zero when `uψ` vanishes.
    pub fn weight(&self, family: &Family, phi: &[f64]) -> f64 {
        let u = family.u();
        let w = family.weight();
        let g: Vec<f64> = self.vector.iter().zip(&u).map(|(p, u)| p * u).collect();
        let norm2 = weighted_dot(&g, &g, w);
        if norm2 <= 0.0 {
            return 0.0;
        }
        let c = weighted_dot(&g, phi, w);
        c * c / norm2
    }

    pub fn record(&self, family: &Family, phi: &[f64]) -> CrossingRecord {
        CrossingRecord {
            branch: self.branch,
            energy: self.energy,
            omega: self.omega,
            weight: self.weight(family, phi),
        }
    }
}

pub fn write_crossings_csv<W: Write>(records: &[CrossingRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["branch", "E", "omega", "weight"])?;
    for r in records {
        w.write_record(&[
            r.branch.to_string(),
            r.energy.to_string(),
            r.omega.to_string(),
            r.weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Solve `E_j(ω) = E` for branch `j` of `trace` on `[tau1, tau2]`.
///
/// Both window ends must be grid points of the trace. Each probe re-diagonalizes and
/// picks the eigenpair with the largest overlap with the bracket's left vector.
pub fn solve_crossing(
    family: &Family,
    trace: &BranchTrace,
    branch: usize,
    energy: f64,
    tau1: f64,
    tau2: f64,
    overlap_floor: f64,
) -> Result<Option<Crossing>> {
    let (g1, g2) = match (trace.grid_index(tau1), trace.grid_index(tau2)) {
        (Some(a), Some(b)) if a <= b => (a, b),
        _ => {
            return Err(Error::Precondition(format!(
                "window [{tau1}, {tau2}] endpoints must lie on the branch grid"
            )))
        }
    };
    if branch >= trace.n_branches() {
        return Err(Error::Config(format!("no branch {branch}")));
    }
    let tol = 1e-10 * energy.abs().max(1.0);
    let fine = 1e-3 * tol;
    let lo_val = trace.value(g1, branch);
    let hi_val = trace.value(g2, branch);
    if lo_val > energy + tol || hi_val < energy - tol {
        return Ok(None);
    }
    let at = |g: usize| Crossing {
        branch,
        energy,
        omega: trace.omega_grid()[g],
        vector: trace.vector(g, branch),
    };
    if (lo_val - energy).abs() <= tol {
        return Ok(Some(at(g1)));
    }
    if (hi_val - energy).abs() <= tol {
        return Ok(Some(at(g2)));
    }
    let g = (g1..g2)
        .find(|&g| trace.value(g, branch) <= energy && trace.value(g + 1, branch) >= energy)
        .ok_or_else(|| {
            Error::Precondition(format!("branch {branch} is not monotone on [{tau1}, {tau2}]"))
        })?;

    let weight = family.weight();
    let grid = trace.omega_grid();
    let (mut lo, mut lo_val, mut lo_vec) = (grid[g], trace.value(g, branch), trace.vector(g, branch));
    let (mut hi, mut hi_val) = (grid[g + 1], trace.value(g + 1, branch));
    let mut best = (f64::INFINITY, lo, lo_vec.clone());
    for _ in 0..200 {
        let width = hi - lo;
        let mut mid = lo + 0.5 * width;
        if hi_val > lo_val {
            // safeguarded interpolation step
            let t = ((energy - lo_val) / (hi_val - lo_val)).clamp(0.1, 0.9);
            mid = lo + t * width;
        }
        let spec = eigendecompose_dense(&family.evaluate(mid), weight, "probe")?;
        let slack = 1e-9 * (1.0 + hi_val.abs());
        let mut pick = None;
        let mut pick_overlap: f64 = -1.0;
        for c in 0..spec.len() {
            let v = spec.eigenvalues()[c];
            if v < lo_val - slack || v > hi_val + slack {
                continue;
            }
            let ov = spec.coefficient(c, &lo_vec).abs();
            if ov > pick_overlap {
                pick_overlap = ov;
                pick = Some(c);
            }
        }
        let c = match pick {
            Some(c) if pick_overlap >= overlap_floor => c,
            _ => {
                return Err(Error::Refine {
                    lo,
                    hi,
                    overlap: pick_overlap.max(0.0),
                    floor: overlap_floor,
                })
            }
        };
        let value = spec.eigenvalues()[c];
        let mut vec = spec.eigenvector(c);
        if spec.coefficient(c, &lo_vec) < 0.0 {
            vec.iter_mut().for_each(|x| *x = -*x);
        }
        let resid = (value - energy).abs();
        if resid < best.0 {
            best = (resid, mid, vec.clone());
        }
        if resid <= fine || width <= 4.0 * f64::EPSILON * (1.0 + mid.abs()) {
            break;
        }
        if value < energy {
            lo = mid;
            lo_val = value;
            lo_vec = vec;
        } else {
            hi = mid;
            hi_val = value;
        }
    }
    if best.0 > tol {
        return Err(Error::Convergence {
            residual: best.0,
            tolerance: tol,
        });
    }
    Ok(Some(Crossing {
        branch,
        energy,
        omega: best.1,
        vector: best.2,
    }))
}

/// All `ω ∈ (tau1, tau2)` where an eigenvalue of `H_ω` passes through `level`,
/// with multiplicity, ascending.
///
/// Uses that the `i`-th smallest eigenvalue is continuous and non-decreasing in `ω`
/// when `u² ≥ 0`, so each crossing is bracketed by the window ends.
pub fn level_crossings(family: &Family, level: f64, tau1: f64, tau2: f64) -> Vec<f64> {
    if !(tau2 > tau1) {
        return Vec::new();
    }
    let at = |w: f64| eigenvalues_dense(&family.evaluate(w));
    let lo_vals = at(tau1);
    let hi_vals = at(tau2);
    let mut out = Vec::new();
    for i in 0..lo_vals.len() {
        if !(lo_vals[i] < level && hi_vals[i] > level) {
            continue;
        }
        let (mut lo, mut hi) = (tau1, tau2);
        while hi - lo > 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            if at(mid)[i] < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(lo + 0.5 * (hi - lo));
    }
    out.sort_by(f64::total_cmp);
    out
}

/// A crossing coupling `ω_j(E) = -1/μ_j` from an eigenpair `(μ_j, g_j)` of the
/// Birman–Schwinger kernel on `supp u`.
#[derive(Debug, Clone)]
pub struct BsCrossing {
    pub omega: f64,
    /// Kernel eigenvalue `μ_j`.
    pub kernel_eigenvalue: f64,
    /// Unit vector spanning the range of `P̃_j`, zero off `supp u`.
    pub vector: Vec<f64>,
}

impl BsCrossing {
    /// `f_j(E) = ‖P̃_j φ‖²`
    pub fn weight(&self, phi: &[f64], weight: f64) -> f64 {
        let c = weighted_dot(&self.vector, phi, weight);
        c * c
    }
}

/// Indices of `supp u`.
pub fn support(family: &Family) -> Vec<usize> {
    family
        .u()
        .iter()
        .enumerate()
        .filter(|(_, &u)| u > SUPPORT_FLOOR)
        .map(|(i, _)| i)
        .collect()
}

/// Crossings at energy `E` on the whole real line, from `-K_0(E)^{-1}` on `supp u`.
pub fn birman_schwinger_crossings(family: &Family, energy: f64) -> Result<Vec<BsCrossing>> {
    let supp = support(family);
    if supp.is_empty() {
        return Err(Error::Precondition("u has empty support".into()));
    }
    let h0 = family.base_dense();
    let spectrum = eigenvalues_dense(h0);
    let norm = spectrum.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let distance = spectrum
        .iter()
        .map(|l| (l - energy).abs())
        .fold(f64::INFINITY, f64::min);
    let tolerance = 1e-8 * norm;
    if distance <= tolerance {
        return Err(Error::NearSpectrum {
            energy,
            distance,
            tolerance,
        });
    }
    let n = family.dim();
    let u = family.u();
    let mut shifted = h0.clone();
    for i in 0..n {
        shifted[(i, i)] -= energy;
    }
    let k = supp.len();
    let mut rhs = DMatrix::zeros(n, k);
    for (c, &i) in supp.iter().enumerate() {
        rhs[(i, c)] = u[i];
    }
    let lu = shifted.lu();
    let x = lu.solve(&rhs).ok_or(Error::SingularKernel { energy })?;
    let mut kernel = DMatrix::zeros(k, k);
    for (r, &i) in supp.iter().enumerate() {
        for c in 0..k {
            kernel[(r, c)] = u[i] * x[(i, c)];
        }
    }
    let kernel = (&kernel + kernel.transpose()) * 0.5;
    let eig = SymmetricEigen::new(kernel);
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let inv_sqrt_w = 1.0 / family.weight().sqrt();
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let mu = eig.eigenvalues[c];
        if mu.abs() <= 1e-14 * scale || mu == 0.0 {
            return Err(Error::SingularKernel { energy });
        }
        let mut vector = vec![0.0; n];
        for (r, &i) in supp.iter().enumerate() {
            vector[i] = eig.eigenvectors[(r, c)] * inv_sqrt_w;
        }
        out.push(BsCrossing {
            omega: -1.0 / mu,
            kernel_eigenvalue: mu,
            vector,
        });
    }
    out.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    Ok(out)
}

/// Outcome of a Feynman–Hellmann comparison at one eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub enum FhOutcome {
    Checked {
        derivative: f64,
        expectation: f64,
        residual: f64,
    },
    Skipped {
        reason: String,
    },
}

/// Step of the central difference in `ω`.
pub const FH_STEP: f64 = 1e-5;

/// `|dE_j/dω - ⟨ψ_j, u² ψ_j⟩|` at `ω`, the derivative from a fourth-order central
/// difference with step [`FH_STEP`], following the eigenvector by overlap.
pub fn feynman_hellmann_residual(family: &Family, omega: f64, j: usize) -> Result<FhOutcome> {
    let weight = family.weight();
    let spec = eigendecompose_dense(&family.evaluate(omega), weight, "fh")?;
    if j >= spec.len() {
        return Err(Error::Config(format!("no eigenvalue {j}")));
    }
    let ev = spec.eigenvalues();
    let norm = spec.spectral_norm().max(1.0);
    let gap = [
        j.checked_sub(1).map(|i| ev[j] - ev[i]),
        ev.get(j + 1).map(|v| v - ev[j]),
    ]
    .into_iter()
    .flatten()
    .fold(f64::INFINITY, f64::min);
    if gap <= 1e-6 * norm {
        return Ok(FhOutcome::Skipped {
            reason: format!("eigenvalue {j} is within {gap:e} of a neighbor"),
        });
    }
    let psi = spec.eigenvector(j);
    let follow = |w: f64| -> Result<f64> {
        let s = eigendecompose_dense(&family.evaluate(w), weight, "fh-probe")?;
        let mut best = 0;
        let mut best_ov: f64 = -1.0;
        for c in 0..s.len() {
            let ov = s.coefficient(c, &psi).abs();
            if ov > best_ov {
                best_ov = ov;
                best = c;
            }
        }
        Ok(s.eigenvalues()[best])
    };
    let h = FH_STEP;
    let derivative = (-follow(omega + 2.0 * h)? + 8.0 * follow(omega + h)?
        - 8.0 * follow(omega - h)?
        + follow(omega - 2.0 * h)?)
        / (12.0 * h);
    let u2psi: Vec<f64> = psi.iter().zip(family.coupling()).map(|(p, c)| p * c).collect();
    let expectation = weighted_dot(&psi, &u2psi, weight);
    Ok(FhOutcome::Checked {
        derivative,
        expectation,
        residual: (derivative - expectation).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::SymmetricOperator;
    use crate::spectral::{trace_branches, BranchOptions};

    fn two_by_two() -> Family {
        let h0 = SymmetricOperator::diagonal_operator(&[0.0, 1.0], None, 1.0, "diag(0,1)");
        Family::new(h0, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn two_by_two_crossing() {
        let fam = two_by_two();
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();
        let t = trace_branches(&fam, &grid, BranchOptions::default()).unwrap();
        let c = solve_crossing(&fam, &t, 0, 0.75, 0.0, 2.0, 0.7).unwrap().unwrap();
        assert!((c.omega - 0.75).abs() < 1e-10);
        // level E = 1 is reached by branch 0 at ω = 1
        let c1 = solve_crossing(&fam, &t, 0, 1.0, 0.0, 2.0, 0.7).unwrap().unwrap();
        assert!((c1.omega - 1.0).abs() < 1e-10);
        // branch 1 never crosses 0.75
        assert!(solve_crossing(&fam, &t, 1, 0.75, 0.0, 2.0, 0.7).unwrap().is_none());
        let bs = birman_schwinger_crossings(&fam, 0.75).unwrap();
        assert_eq!(bs.len(), 1);
        assert!((bs[0].omega - 0.75).abs() < 1e-12);
        assert!((bs[0].weight(&[1.0, 0.0], 1.0) - 1.0).abs() < 1e-12);
        assert!((c.weight(&fam, &[1.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_birman_schwinger() {
        let h0 = SymmetricOperator::diagonal_operator(&[2.0], None, 1.0, "a");
        let fam = Family::new(h0, vec![1.0]).unwrap();
        let bs = birman_schwinger_crossings(&fam, 3.5).unwrap();
        assert!((bs[0].omega - 1.5).abs() < 1e-14);
        assert!((bs[0].kernel_eigenvalue - 1.0 / (2.0 - 3.5)).abs() < 1e-14);
        assert!(matches!(
            birman_schwinger_crossings(&fam, 2.0),
            Err(Error::NearSpectrum { .. })
        ));
    }

    #[test]
    fn full_rank_shift_crossings() {
        let h0 = crate::instances::random_symmetric(6, 8);
        let lam = crate::spectral::eigendecompose(&h0).unwrap().eigenvalues().to_vec();
        let fam = Family::new(h0, vec![1.0; 6]).unwrap();
        let e = lam[2] + 0.3;
        let grid: Vec<f64> = (0..=20).map(|i| -2.0 + 0.2 * i as f64).collect();
        let t = trace_branches(&fam, &grid, BranchOptions::default()).unwrap();
        let c = solve_crossing(&fam, &t, 2, e, -2.0, 2.0, 0.7).unwrap().unwrap();
        assert!((c.omega - 0.3).abs() < 1e-9);
        let levels = level_crossings(&fam, e, -2.0, 2.0);
        let mut expect: Vec<f64> = lam.iter().map(|l| e - l).filter(|w| w.abs() < 2.0).collect();
        expect.sort_by(f64::total_cmp);
        assert_eq!(levels.len(), expect.len());
        for (a, b) in levels.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn feynman_hellmann_cases() {
        let h0 = SymmetricOperator::diagonal_operator(&[2.0], None, 1.0, "a");
        let fam = Family::new(h0, vec![0.6]).unwrap();
        match feynman_hellmann_residual(&fam, 0.3, 0).unwrap() {
            FhOutcome::Checked { residual, .. } => assert!(residual < 1e-9),
            other => panic!("{other:?}"),
        }
        let fam = two_by_two();
        match feynman_hellmann_residual(&fam, 0.5, 0).unwrap() {
            FhOutcome::Checked {
                derivative,
                expectation,
                ..
            } => {
                assert!((derivative - 1.0).abs() < 1e-9);
                assert!((expectation - 1.0).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
        // degenerate at ω = 1
        assert!(matches!(
            feynman_hellmann_residual(&fam, 1.0, 0).unwrap(),
            FhOutcome::Skipped { .. }
        ));
    }

    #[test]
    fn crossings_csv_header() {
        let mut buf = Vec::new();
        write_crossings_csv(
            &[CrossingRecord {
                branch: 0,
                energy: 0.75,
                omega: 0.75,
                weight: 1.0,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "branch,E,omega,weight\n0,0.75,0.75,1\n");
    }
}
