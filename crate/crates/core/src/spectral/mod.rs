//! Dense eigendecomposition, spectral projectors, eigenvalue branches and crossings.

mod branches;
mod crossing;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use branches::{trace_branches, BranchOptions, BranchTrace};
pub use crossing::{
    birman_schwinger_crossings, feynman_hellmann_residual, level_crossings, solve_crossing,
    support, write_crossings_csv, BsCrossing, Crossing, CrossingRecord, FhOutcome, FH_STEP,
    SUPPORT_FLOOR,
};

use crate::error::{Error, Result};
use crate::operator::{SymmetricOperator, DEFAULT_DENSE_BUDGET};

/// Full spectrum of a discrete Hamiltonian: ascending eigenvalues and eigenvectors
/// (columns) normalized in the weighted inner product.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    weight: f64,
    source: String,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub budget: usize,
    /// Check residuals and orthonormality after the solve.
    pub verify: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_DENSE_BUDGET,
            verify: true,
        }
    }
}

const RESIDUAL_TOL: f64 = 1e-10;

pub fn eigendecompose(h: &SymmetricOperator) -> Result<SpectralData> {
    eigendecompose_with(h, EigenOptions::default())
}

pub fn eigendecompose_with(h: &SymmetricOperator, opts: EigenOptions) -> Result<SpectralData> {
    if h.dim() > opts.budget {
        return Err(Error::Config(format!(
            "operator dimension {} exceeds dense budget {}",
            h.dim(),
            opts.budget
        )));
    }
    let spec = eigendecompose_dense(&h.to_dense(), h.weight(), h.description())?;
    if opts.verify {
        spec.verify(&h.to_dense())?;
    }
    Ok(spec)
}

/// Eigendecomposition of a dense symmetric matrix with metric weight `weight`.
///
/// Deterministic: eigenpairs are sorted ascending and each eigenvector's largest
/// component (first one on ties) is made positive.
pub fn eigendecompose_dense(m: &DMatrix<f64>, weight: f64, source: &str) -> Result<SpectralData> {
    let n = m.nrows();
    if n == 0 {
        return Ok(SpectralData {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
            weight,
            source: source.to_string(),
        });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::Convergence {
        residual: f64::INFINITY,
        tolerance: RESIDUAL_TOL,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let scale = 1.0 / weight.sqrt();
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -scale } else { scale };
        for i in 0..n {
            vectors[(i, col)] = sign * v[i];
        }
    }
    Ok(SpectralData {
        eigenvalues: values,
        eigenvectors: vectors,
        weight,
        source: source.to_string(),
    })
}

/// Ascending eigenvalues only.
pub fn eigenvalues_dense(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn eigenvalues(h: &SymmetricOperator) -> Result<Vec<f64>> {
    if h.dim() > DEFAULT_DENSE_BUDGET {
        return Err(Error::Config(format!(
            "operator dimension {} exceeds dense budget {DEFAULT_DENSE_BUDGET}",
            h.dim()
        )));
    }
    Ok(eigenvalues_dense(&h.to_dense()))
}

impl SpectralData {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j).iter().copied().collect()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Weighted inner product `w·Σ f_i g_i`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        weighted_dot(f, g, self.weight)
    }

    /// `⟨ψ_j, f⟩`
    pub fn coefficient(&self, j: usize, f: &[f64]) -> f64 {
        let col = self.eigenvectors.column(j);
        self.weight * col.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Distance from `e` to the nearest eigenvalue.
    pub fn distance_to_spectrum(&self, e: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&l| (l - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Residual and orthonormality check against the matrix that produced the data.
    pub fn verify(&self, m: &DMatrix<f64>) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Ok(());
        }
        let norm = self.spectral_norm();
        let hv = m * &self.eigenvectors;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let lambda = self.eigenvalues[j];
            let mut r2 = 0.0;
            for i in 0..n {
                let r = hv[(i, j)] - lambda * self.eigenvectors[(i, j)];
                r2 += r * r;
            }
            let r = (self.weight * r2).sqrt() / (norm + lambda.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(r);
        }
        if worst > RESIDUAL_TOL {
            return Err(Error::Convergence {
                residual: worst,
                tolerance: RESIDUAL_TOL,
            });
        }
        let gram = self.eigenvectors.transpose() * &self.eigenvectors * self.weight;
        let gram_err = (gram - DMatrix::identity(n, n)).abs().max();
        if gram_err > RESIDUAL_TOL {
            return Err(Error::Convergence {
                residual: gram_err,
                tolerance: RESIDUAL_TOL,
            });
        }
        Ok(())
    }
}

pub fn weighted_dot(f: &[f64], g: &[f64], weight: f64) -> f64 {
    weight * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
}

/// How the endpoints of an [`EnergyInterval`] are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// `[a, b]`
    Closed,
    /// `(a, b]`
    LeftOpen,
}

/// Energy interval with an absolute tie tolerance `1e-12·max(1, |a|, |b|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyInterval {
    a: f64,
    b: f64,
    closure: Closure,
}

impl EnergyInterval {
    pub fn closed(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, Closure::Closed)
    }

    pub fn left_open(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, Closure::LeftOpen)
    }

    pub fn new(a: f64, b: f64, closure: Closure) -> Result<Self> {
        if !(a <= b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("invalid energy interval [{a}, {b}]")));
        }
        Ok(Self { a, b, closure })
    }

    /// `[min, max]` of two endpoints given in either order.
    pub fn normalized(e1: f64, e2: f64) -> Result<Self> {
        Self::closed(e1.min(e2), e1.max(e2))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn tolerance(&self) -> f64 {
        1e-12 * 1f64.max(self.a.abs()).max(self.b.abs())
    }

    pub fn contains(&self, lambda: f64) -> bool {
        let t = self.tolerance();
        let upper = lambda <= self.b + t;
        match self.closure {
            Closure::Closed => lambda >= self.a - t && upper,
            Closure::LeftOpen => lambda > self.a + t && upper,
        }
    }

    pub fn count(&self, eigenvalues: &[f64]) -> usize {
        eigenvalues.iter().filter(|&&l| self.contains(l)).count()
    }
}

/// `Tr P(I)`: the number of eigenvalues in `I`.
pub fn projector_trace(spec: &SpectralData, interval: &EnergyInterval) -> usize {
    interval.count(spec.eigenvalues())
}

/// `⟨f, P(I) g⟩ = Σ_{λ_j ∈ I} ⟨f, ψ_j⟩⟨ψ_j, g⟩`.
pub fn projector_element(
    spec: &SpectralData,
    interval: &EnergyInterval,
    f: &[f64],
    g: &[f64],
) -> Result<f64> {
    for v in [f, g] {
        if v.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: v.len(),
            });
        }
    }
    let mut sum = 0.0;
    for (j, &lambda) in spec.eigenvalues().iter().enumerate() {
        if interval.contains(lambda) {
            sum += spec.coefficient(j, f) * spec.coefficient(j, g);
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::operator::{build_laplacian, BoundaryCondition, BoxDomain};

    #[test]
    fn one_by_one() {
        let d = BoxDomain::new(1, 1, 1, BoundaryCondition::Dirichlet).unwrap();
        let h = SymmetricOperator::diagonal_operator(&[3.5], Some(d), 0.25, "c");
        let s = eigendecompose(&h).unwrap();
        assert_eq!(s.eigenvalues(), &[3.5]);
        assert!((s.eigenvectors()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_sorted() {
        let h = SymmetricOperator::diagonal_operator(&[3.0, -1.0, 2.0, 0.5], None, 1.0, "diag");
        let s = eigendecompose(&h).unwrap();
        assert_eq!(s.eigenvalues(), &[-1.0, 0.5, 2.0, 3.0]);
    }

    #[test]
    fn tridiagonal_closed_form() {
        let d = BoxDomain::new(1, 1, 2, BoundaryCondition::Dirichlet).unwrap();
        let s = eigendecompose(&build_laplacian(&d).unwrap()).unwrap();
        for (j, &l) in s.eigenvalues().iter().enumerate() {
            let k = (j + 1) as f64;
            let expect = 4.0 * (2.0 - 2.0 * (k * std::f64::consts::PI / 5.0).cos());
            assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
        }
    }

    #[test]
    fn trace_counts() {
        let h = instances::random_symmetric(20, 17);
        let s = eigendecompose(&h).unwrap();
        let ev = s.eigenvalues();
        let below = EnergyInterval::closed(ev[0] - 10.0, ev[0] - 1.0).unwrap();
        assert_eq!(projector_trace(&s, &below), 0);
        let all = EnergyInterval::closed(ev[0] - 1.0, ev[19] + 1.0).unwrap();
        assert_eq!(projector_trace(&s, &all), 20);
        // sort-and-count oracle on a fresh copy of the spectrum
        let mut sorted = instances::random_symmetric(20, 17).to_dense().symmetric_eigenvalues().as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        let five = EnergyInterval::closed(sorted[0] - 1.0, 0.5 * (sorted[4] + sorted[5])).unwrap();
        assert_eq!(projector_trace(&s, &five), 5);
    }

    #[test]
    fn projector_elements() {
        let h = instances::random_symmetric(12, 3);
        let s = eigendecompose(&h).unwrap();
        let ev = s.eigenvalues().to_vec();
        let psi1 = s.eigenvector(0);
        let only_first = EnergyInterval::closed(ev[0] - 1e-3, ev[0] + 1e-6).unwrap();
        assert!((projector_element(&s, &only_first, &psi1, &psi1).unwrap() - 1.0).abs() < 1e-12);
        let psi5 = s.eigenvector(5);
        assert!(projector_element(&s, &only_first, &psi5, &psi5).unwrap().abs() < 1e-12);
        let f = instances::random_unit_vector(12, 1.0, 99);
        let all = EnergyInterval::closed(ev[0] - 1.0, ev[11] + 1.0).unwrap();
        assert!((projector_element(&s, &all, &f, &f).unwrap() - 1.0).abs() < 1e-10);
        assert!(projector_element(&s, &all, &f, &f[..3]).is_err());
    }

    #[test]
    fn left_open_interval() {
        let i = EnergyInterval::left_open(1.0, 2.0).unwrap();
        assert!(!i.contains(1.0));
        assert!(i.contains(2.0));
        let c = EnergyInterval::closed(1.0, 2.0).unwrap();
        assert!(c.contains(1.0));
        assert!(EnergyInterval::closed(2.0, 1.0).is_err());
        let n = EnergyInterval::normalized(2.0, 1.0).unwrap();
        assert_eq!((n.a(), n.b()), (1.0, 2.0));
    }
}
