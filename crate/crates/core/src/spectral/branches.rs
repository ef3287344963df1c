//! Continuation of eigenvalue branches `E_j(ω)` across a coupling grid.
//!
//! Consecutive decompositions are matched by a global assignment on the eigenvector
//! overlap matrix `|⟨ψ_i(ω_g), ψ_j(ω_{g+1})⟩|`. Inside a numerically degenerate cluster
//! the new basis is first rotated toward the previous vectors, since the solver's
//! choice of basis there is arbitrary. When the weakest assigned overlap falls below
//! the floor, the step is bisected.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{eigendecompose_dense, SpectralData};
use crate::error::{Error, Result};
use crate::operator::Family;

#[derive(Debug, Clone, Copy)]
pub struct BranchOptions {
    pub overlap_floor: f64,
    /// Maximum number of bisections of a single grid step.
    pub max_depth: usize,
    /// Allowed decrease of a branch, relative to `1 + ‖H‖`.
    pub monotone_tol: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            overlap_floor: 0.7,
            max_depth: 30,
            monotone_tol: 1e-9,
        }
    }
}

/// Eigenvalue branches over a (possibly refined) coupling grid.
#[derive(Debug, Clone)]
pub struct BranchTrace {
    omega_grid: Vec<f64>,
    /// `values[g][j] = E_j(ω_g)`
    values: Vec<Vec<f64>>,
    /// Columns ordered by branch label.
    vectors: Vec<DMatrix<f64>>,
    /// Weakest assigned overlap of the step into each grid point (1 at the first point).
    step_overlaps: Vec<f64>,
    weight: f64,
}

impl BranchTrace {
    pub fn omega_grid(&self) -> &[f64] {
        &self.omega_grid
    }

    pub fn n_branches(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn branch(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    pub fn value(&self, g: usize, j: usize) -> f64 {
        self.values[g][j]
    }

    pub fn vector(&self, g: usize, j: usize) -> Vec<f64> {
        self.vectors[g].column(j).iter().copied().collect()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Minimum matching overlap encountered anywhere on the trace.
    pub fn overlap_floor(&self) -> f64 {
        self.step_overlaps.iter().copied().fold(1.0, f64::min)
    }

    pub fn step_overlaps(&self) -> &[f64] {
        &self.step_overlaps
    }

    /// Index of the grid point equal to `omega` (within rounding), if any.
    pub fn grid_index(&self, omega: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + omega.abs());
        self.omega_grid.iter().position(|&w| (w - omega).abs() <= tol)
    }

    /// CSV columns `omega, branch_index, eigenvalue, min_overlap`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega", "branch_index", "eigenvalue", "min_overlap"])?;
        for (g, omega) in self.omega_grid.iter().enumerate() {
            for (j, value) in self.values[g].iter().enumerate() {
                w.write_record(&[
                    omega.to_string(),
                    j.to_string(),
                    value.to_string(),
                    self.step_overlaps[g].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct Labelled {
    omega: f64,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

pub fn trace_branches(family: &Family, omega_grid: &[f64], opts: BranchOptions) -> Result<BranchTrace> {
    if omega_grid.is_empty() {
        return Err(Error::Config("coupling grid is empty".into()));
    }
    if omega_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("coupling grid must be strictly increasing".into()));
    }
    let weight = family.weight();
    let decompose = |omega: f64| -> Result<SpectralData> {
        eigendecompose_dense(&family.evaluate(omega), weight, "family")
    };
    let spectra: Vec<SpectralData> = omega_grid
        .par_iter()
        .map(|&w| decompose(w))
        .collect::<Result<_>>()?;
    let scale = 1.0 + family.norm_bound(omega_grid[0], *omega_grid.last().unwrap());
    let degeneracy_tol = 1e-9 * scale;

    let mut prev = Labelled {
        omega: omega_grid[0],
        values: spectra[0].eigenvalues().to_vec(),
        vectors: spectra[0].eigenvectors().clone(),
    };
    let mut out_grid = vec![prev.omega];
    let mut out_values = vec![prev.values.clone()];
    let mut out_vectors = vec![prev.vectors.clone()];
    let mut out_overlaps = vec![1.0];

    for (g, spec) in spectra.into_iter().enumerate().skip(1) {
        let mut pending = vec![(omega_grid[g], spec)];
        let mut depth = 0;
        while let Some((omega, spec)) = pending.pop() {
            let (next, min_overlap) = match_step(&prev, omega, &spec, weight, degeneracy_tol);
            if min_overlap >= opts.overlap_floor {
                out_grid.push(next.omega);
                out_values.push(next.values.clone());
                out_vectors.push(next.vectors.clone());
                out_overlaps.push(min_overlap);
                prev = next;
                continue;
            }
            depth += 1;
            let width = omega - prev.omega;
            if depth > opts.max_depth || width <= 1e-13 * (1.0 + omega.abs()) {
                return Err(Error::Refine {
                    lo: prev.omega,
                    hi: omega,
                    overlap: min_overlap,
                    floor: opts.overlap_floor,
                });
            }
            let mid = prev.omega + 0.5 * width;
            let mid_spec = decompose(mid)?;
            pending.push((omega, spec));
            pending.push((mid, mid_spec));
        }
    }

    let trace = BranchTrace {
        omega_grid: out_grid,
        values: out_values,
        vectors: out_vectors,
        step_overlaps: out_overlaps,
        weight,
    };
    check_monotone(&trace, opts.monotone_tol * scale)?;
    Ok(trace)
}

fn check_monotone(trace: &BranchTrace, tol: f64) -> Result<()> {
    for j in 0..trace.n_branches() {
        for g in 1..trace.omega_grid.len() {
            let drop = trace.values[g - 1][j] - trace.values[g][j];
            if drop > tol {
                return Err(Error::NonMonotone {
                    branch: j,
                    lo: trace.omega_grid[g - 1],
                    hi: trace.omega_grid[g],
                    drop,
                });
            }
        }
    }
    Ok(())
}

/// Label the eigenpairs of `spec` by the branches of `prev`.
fn match_step(
    prev: &Labelled,
    omega: f64,
    spec: &SpectralData,
    weight: f64,
    degeneracy_tol: f64,
) -> (Labelled, f64) {
    let mut vectors = spec.eigenvectors().clone();
    align_clusters(&prev.vectors, spec.eigenvalues(), &mut vectors, weight, degeneracy_tol);
    let overlap = (prev.vectors.transpose() * &vectors * weight).abs();
    let assignment = max_overlap_assignment(&overlap);
    let n = spec.len();
    let mut values = vec![0.0; n];
    let mut labelled = DMatrix::zeros(n, n);
    let mut min_overlap: f64 = 1.0;
    for (label, &col) in assignment.iter().enumerate() {
        values[label] = spec.eigenvalues()[col];
        min_overlap = min_overlap.min(overlap[(label, col)]);
        let dot: f64 = prev.vectors.column(label).dot(&vectors.column(col));
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        labelled.column_mut(label).copy_from(&(vectors.column(col) * sign));
    }
    (
        Labelled {
            omega,
            values,
            vectors: labelled,
        },
        min_overlap,
    )
}

/// Rotate the basis of each degenerate cluster toward the projections of `reference`.
fn align_clusters(
    reference: &DMatrix<f64>,
    eigenvalues: &[f64],
    vectors: &mut DMatrix<f64>,
    weight: f64,
    tol: f64,
) {
    let n = eigenvalues.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigenvalues[end] - eigenvalues[end - 1] <= tol {
            end += 1;
        }
        if end - start > 1 {
            rotate_cluster(reference, vectors, start, end, weight);
        }
        start = end;
    }
}

fn rotate_cluster(reference: &DMatrix<f64>, vectors: &mut DMatrix<f64>, start: usize, end: usize, weight: f64) {
    let k = end - start;
    let block = vectors.columns(start, k).into_owned();
    // coefficients of every reference vector in the cluster basis
    let coeff = reference.transpose() * &block * weight;
    let mut rows: Vec<(usize, f64)> = (0..coeff.nrows())
        .map(|i| (i, coeff.row(i).norm()))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(k);
    let candidates = rows
        .iter()
        .map(|&(i, _)| coeff.row(i).transpose())
        .chain((0..k).map(|c| {
            let mut e = nalgebra::DVector::zeros(k);
            e[c] = 1.0;
            e
        }));
    for mut c in candidates {
        if basis.len() == k {
            break;
        }
        for b in &basis {
            let p = b.dot(&c);
            c -= b * p;
        }
        let norm = c.norm();
        if norm > 1e-8 {
            basis.push(c / norm);
        }
    }
    for (offset, b) in basis.iter().enumerate() {
        let v = &block * b;
        vectors.column_mut(start + offset).copy_from(&v);
    }
}

/// Permutation `label -> column` maximizing the total overlap (Hungarian method).
pub(crate) fn max_overlap_assignment(overlap: &DMatrix<f64>) -> Vec<usize> {
    let n = overlap.nrows();
    let cost = |i: usize, j: usize| -overlap[(i, j)];
    // potentials-based O(n^3) assignment, 1-indexed internally
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::SymmetricOperator;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn assignment_is_optimal_permutation() {
        let o = DMatrix::from_row_slice(3, 3, &[0.1, 0.9, 0.2, 0.8, 0.85, 0.1, 0.3, 0.1, 0.95]);
        // greedy would take (0,1)=0.9 then (1,0)=0.8; that is also optimal here
        assert_eq!(max_overlap_assignment(&o), vec![1, 0, 2]);
        let o = DMatrix::from_row_slice(2, 2, &[0.9, 0.8, 0.85, 0.1]);
        assert_eq!(max_overlap_assignment(&o), vec![1, 0]);
    }

    #[test]
    fn identity_coupling_gives_parallel_lines() {
        let h0 = crate::instances::random_symmetric(8, 5);
        let lam0 = super::super::eigendecompose(&h0).unwrap().eigenvalues().to_vec();
        let fam = Family::new(h0, vec![1.0; 8]).unwrap();
        let grid = linspace(-1.0, 1.0, 9);
        let t = trace_branches(&fam, &grid, BranchOptions::default()).unwrap();
        for (j, l) in lam0.iter().enumerate() {
            for (g, w) in grid.iter().enumerate() {
                assert!((t.value(g, j) - (l + w)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_coupling_constant_branches() {
        let h0 = crate::instances::random_symmetric(6, 2);
        let fam = Family::new(h0, vec![0.0; 6]).unwrap();
        let t = trace_branches(&fam, &linspace(0.0, 3.0, 5), BranchOptions::default()).unwrap();
        for j in 0..6 {
            let b = t.branch(j);
            assert!(b.iter().all(|&v| (v - b[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn two_by_two_exact_crossing_followed() {
        let h0 = SymmetricOperator::diagonal_operator(&[0.0, 1.0], None, 1.0, "diag(0,1)");
        let fam = Family::new(h0, vec![1.0, 0.0]).unwrap();
        let t = trace_branches(&fam, &linspace(0.0, 2.0, 5), BranchOptions::default()).unwrap();
        // branch 0 is the coupled state E = ω, branch 1 stays at 1
        assert_eq!(t.branch(0), linspace(0.0, 2.0, 5));
        assert!(t.branch(1).iter().all(|&v| v == 1.0));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("omega,branch_index,eigenvalue,min_overlap\n0,0,0,1\n"));
    }

    #[test]
    fn rejects_bad_grid() {
        let h0 = SymmetricOperator::diagonal_operator(&[0.0, 1.0], None, 1.0, "d");
        let fam = Family::new(h0, vec![1.0, 0.0]).unwrap();
        assert!(trace_branches(&fam, &[0.0, 0.0], BranchOptions::default()).is_err());
        assert!(trace_branches(&fam, &[], BranchOptions::default()).is_err());
    }
}
