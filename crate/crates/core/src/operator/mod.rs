//! Discrete box Hamiltonians `H = -Δ_h + V_ω` and one-parameter families `H_0 + ω·u²`.

mod disorder;
mod domain;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

pub use disorder::{
    counter_hash, counter_uniform, sample_disorder, DisorderRealization, SingleSite,
    SiteDistribution,
};
pub use domain::{BoundaryCondition, BoxDomain, DEFAULT_DENSE_BUDGET};

use crate::error::{Error, Result};

/// A real symmetric matrix stored by rows, together with the metric weight of the
/// discrete inner product `⟨f, g⟩ = w·Σ f_i g_i` (`w = h^d` on a grid, 1 otherwise).
///
/// Off-diagonal entries are assembled once in the upper triangle and mirrored, so
/// `entry(i, j) == entry(j, i)` holds bit for bit.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    domain: Option<BoxDomain>,
    weight: f64,
    description: String,
}

/// Accumulates upper-triangular contributions before freezing into a [`SymmetricOperator`].
#[derive(Debug, Default)]
struct Assembly {
    entries: BTreeMap<(usize, usize), f64>,
}

impl Assembly {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let key = if i <= j { (i, j) } else { (j, i) };
        *self.entries.entry(key).or_insert(0.0) += v;
    }

    fn finish(
        self,
        n: usize,
        domain: Option<BoxDomain>,
        weight: f64,
        description: String,
    ) -> SymmetricOperator {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for ((i, j), v) in self.entries {
            if v == 0.0 && i != j {
                continue;
            }
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
        }
        SymmetricOperator {
            n,
            rows,
            domain,
            weight,
            description,
        }
    }
}

impl SymmetricOperator {
    pub fn diagonal_operator(
        values: &[f64],
        domain: Option<BoxDomain>,
        weight: f64,
        description: impl Into<String>,
    ) -> Self {
        let mut a = Assembly::default();
        for (i, &v) in values.iter().enumerate() {
            a.add(i, i, v);
        }
        a.finish(values.len(), domain, weight, description.into())
    }

    /// Build from a dense matrix, reading only the upper triangle.
    pub fn from_dense_upper(
        m: &DMatrix<f64>,
        weight: f64,
        description: impl Into<String>,
    ) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let mut a = Assembly::default();
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 || i == j {
                    a.add(i, j, v);
                }
            }
        }
        Ok(a.finish(m.nrows(), None, weight, description.into()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&(j, _)| j == i))
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Upper bound on the operator norm (maximum absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Sum of two operators on the same space.
    pub fn add(&self, other: &SymmetricOperator) -> Result<SymmetricOperator> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut a = Assembly::default();
        for src in [self, other] {
            for (i, row) in src.rows.iter().enumerate() {
                for &(j, v) in row {
                    if j >= i {
                        a.add(i, j, v);
                    }
                }
            }
        }
        let domain = self.domain.or(other.domain);
        Ok(a.finish(
            self.n,
            domain,
            self.weight,
            format!("{} + {}", self.description, other.description),
        ))
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// Finite-difference `-Δ_h` on the box with the domain's boundary condition.
///
/// Dirichlet drops exterior neighbors (diagonal stays `2d/h²`), Neumann drops both the
/// neighbor and its diagonal contribution (zero normal difference), periodic wraps.
pub fn build_laplacian(domain: &BoxDomain) -> Result<SymmetricOperator> {
    domain.check_dense_budget(DEFAULT_DENSE_BUDGET)?;
    let inv_h2 = 1.0 / (domain.spacing() * domain.spacing());
    let mut a = Assembly::default();
    for p in 0..domain.n_points() {
        for axis in 0..domain.dim() {
            // each edge is visited once, from its lower endpoint
            match domain.neighbor(p, axis, true) {
                Some(q) => {
                    a.add(p, p, inv_h2);
                    a.add(q, q, inv_h2);
                    a.add(p, q, -inv_h2);
                }
                None => {
                    if domain.bc() == BoundaryCondition::Dirichlet {
                        a.add(p, p, inv_h2);
                    }
                }
            }
            if domain.neighbor(p, axis, false).is_none() && domain.bc() == BoundaryCondition::Dirichlet {
                a.add(p, p, inv_h2);
            }
        }
    }
    Ok(a.finish(
        domain.n_points(),
        Some(*domain),
        domain.cell_volume(),
        format!("-Laplacian[{}]", domain.describe()),
    ))
}

/// The grid function `u_k²` of a single site.
pub fn site_bump(domain: &BoxDomain, site: &SingleSite, cube: usize) -> Result<Vec<f64>> {
    check_site(domain, site)?;
    if cube >= domain.n_cubes() {
        return Err(Error::Config(format!(
            "cube index {cube} outside box with {} cubes",
            domain.n_cubes()
        )));
    }
    let mut bump = vec![0.0; domain.n_points()];
    for (local, p) in domain.cube_points(cube).into_iter().enumerate() {
        bump[p] = site.u_squared(local);
    }
    Ok(bump)
}

fn check_site(domain: &BoxDomain, site: &SingleSite) -> Result<()> {
    if site.profile().len() != domain.points_per_cube() {
        return Err(Error::IndexMismatch {
            what: "single-site profile samples",
            expected: domain.points_per_cube(),
            got: site.profile().len(),
        });
    }
    Ok(())
}

/// Diagonal potential `V(x) = Σ_k ω_k·u_k²(x)`.
pub fn build_potential(
    domain: &BoxDomain,
    site: &SingleSite,
    real: &DisorderRealization,
) -> Result<SymmetricOperator> {
    check_site(domain, site)?;
    if real.len() != domain.n_cubes() {
        return Err(Error::IndexMismatch {
            what: "realization sites",
            expected: domain.n_cubes(),
            got: real.len(),
        });
    }
    let values: Vec<f64> = (0..domain.n_points())
        .map(|p| real.omega(domain.cube_of_point(p)) * site.u_squared(domain.local_index(p)))
        .collect();
    Ok(SymmetricOperator::diagonal_operator(
        &values,
        Some(*domain),
        domain.cell_volume(),
        format!(
            "V[seed={} r={}]",
            real.master_seed(),
            real.realization_index()
        ),
    ))
}

/// `H_ω = -Δ_h + V_ω` on the box.
pub fn hamiltonian(
    domain: &BoxDomain,
    site: &SingleSite,
    real: &DisorderRealization,
) -> Result<SymmetricOperator> {
    let lap = build_laplacian(domain)?;
    let pot = build_potential(domain, site, real)?;
    lap.add(&pot)
}

/// The affine family `ω ↦ H_0 + ω·u²` with `u²` a nonnegative diagonal.
#[derive(Debug, Clone)]
pub struct Family {
    base: SymmetricOperator,
    base_dense: DMatrix<f64>,
    coupling: Vec<f64>,
}

impl Family {
    pub fn new(base: SymmetricOperator, coupling: Vec<f64>) -> Result<Self> {
        if coupling.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: coupling.len(),
            });
        }
        if let Some((i, v)) = coupling
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Config(format!(
                "coupling u^2 must be nonnegative and finite; entry {i} is {v}"
            )));
        }
        let base_dense = base.to_dense();
        Ok(Self {
            base,
            base_dense,
            coupling,
        })
    }

    pub fn base(&self) -> &SymmetricOperator {
        &self.base
    }

    pub fn base_dense(&self) -> &DMatrix<f64> {
        &self.base_dense
    }

    /// Diagonal of `u²`.
    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    /// Diagonal of `u = √(u²)`.
    pub fn u(&self) -> Vec<f64> {
        self.coupling.iter().map(|c| c.sqrt()).collect()
    }

    /// `‖u²‖ = ‖u‖²`.
    pub fn coupling_norm(&self) -> f64 {
        self.coupling.iter().copied().fold(0.0, f64::max)
    }

    pub fn weight(&self) -> f64 {
        self.base.weight()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn evaluate(&self, omega: f64) -> DMatrix<f64> {
        let mut m = self.base_dense.clone();
        if omega != 0.0 {
            for (i, c) in self.coupling.iter().enumerate() {
                m[(i, i)] += omega * c;
            }
        }
        m
    }

    pub fn evaluate_operator(&self, omega: f64) -> SymmetricOperator {
        let shift: Vec<f64> = self.coupling.iter().map(|c| omega * c).collect();
        let diag = SymmetricOperator::diagonal_operator(
            &shift,
            self.base.domain().copied(),
            self.base.weight(),
            format!("{omega}*u^2"),
        );
        self.base
            .add(&diag)
            .expect("coupling length checked on construction")
    }

    /// Norm bound of `H_ω` for `ω` in a window, used to scale tolerances.
    pub fn norm_bound(&self, lo: f64, hi: f64) -> f64 {
        self.base.norm_bound() + lo.abs().max(hi.abs()) * self.coupling_norm()
    }
}

/// `ω ↦ H_0 + ω·u²` with the sites in `overrides` pinned at fixed couplings, their
/// contributions `value·u_k²` folded into `H_0`.
pub fn assemble_family(
    h0: &SymmetricOperator,
    u2: &[f64],
    overrides: &BTreeMap<usize, f64>,
    domain: &BoxDomain,
    site: &SingleSite,
) -> Result<Family> {
    let mut base = h0.clone();
    for (&cube, &value) in overrides {
        let bump: Vec<f64> = site_bump(domain, site, cube)?
            .into_iter()
            .map(|b| value * b)
            .collect();
        let extra = SymmetricOperator::diagonal_operator(
            &bump,
            Some(*domain),
            domain.cell_volume(),
            format!("omega[{cube}]={value}"),
        );
        base = base.add(&extra)?;
    }
    Family::new(base, u2.to_vec())
}

/// The family in the coupling of one cube, all other couplings taken from `real`.
pub fn site_family(
    domain: &BoxDomain,
    site: &SingleSite,
    real: &DisorderRealization,
    cube: usize,
) -> Result<Family> {
    let others = real.with_override(cube, 0.0);
    let h0 = hamiltonian(domain, site, &others)?;
    Family::new(h0, site_bump(domain, site, cube)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet_1d(l: usize, m: usize) -> BoxDomain {
        BoxDomain::new(1, l, m, BoundaryCondition::Dirichlet).unwrap()
    }

    #[test]
    fn small_dirichlet_matrix() {
        let lap = build_laplacian(&dirichlet_1d(1, 2)).unwrap();
        let dense = lap.to_dense();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                8.0, -4.0, 0.0, 0.0, -4.0, 8.0, -4.0, 0.0, 0.0, -4.0, 8.0, -4.0, 0.0, 0.0, -4.0,
                8.0,
            ],
        );
        assert_eq!(dense, expect);
    }

    #[test]
    fn exact_symmetry_all_bcs() {
        for bc in [
            BoundaryCondition::Dirichlet,
            BoundaryCondition::Neumann,
            BoundaryCondition::Periodic,
        ] {
            for dim in 1..=3 {
                let d = BoxDomain::new(dim, 1, 2, bc).unwrap();
                let m = build_laplacian(&d).unwrap().to_dense();
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn neumann_and_periodic_annihilate_constants() {
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Periodic] {
            for dim in 1..=3 {
                let d = BoxDomain::new(dim, 1, 3, bc).unwrap();
                let lap = build_laplacian(&d).unwrap();
                let y = lap.matvec(&vec![1.0; d.n_points()]);
                assert!(y.iter().all(|v| v.abs() < 1e-12), "{bc} d={dim}");
            }
        }
    }

    #[test]
    fn periodic_two_point_ring() {
        let d = BoxDomain::new(1, 1, 1, BoundaryCondition::Periodic).unwrap();
        let m = build_laplacian(&d).unwrap().to_dense();
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(0, 1)], -2.0);
    }

    #[test]
    fn potential_cases() {
        let d = BoxDomain::new(2, 1, 2, BoundaryCondition::Dirichlet).unwrap();
        let site = SingleSite::characteristic(0.5, &d).unwrap();
        let zero = DisorderRealization::constant(&d, 0.0);
        assert!(build_potential(&d, &site, &zero)
            .unwrap()
            .diagonal()
            .iter()
            .all(|&v| v == 0.0));
        let ones = DisorderRealization::constant(&d, 1.0);
        assert!(build_potential(&d, &site, &ones)
            .unwrap()
            .diagonal()
            .iter()
            .all(|&v| (v - 0.5).abs() < 1e-15));
        let single = zero.with_override(0, 1.0);
        let v = build_potential(&d, &site, &single).unwrap();
        let trace: f64 = v.diagonal().iter().sum::<f64>() * d.cell_volume();
        assert!((trace - 0.5).abs() < 1e-14);
        let short = DisorderRealization::from_values(vec![0.0; 3], 0, 0);
        assert!(build_potential(&d, &site, &short).is_err());
    }

    #[test]
    fn family_affinity() {
        let d = dirichlet_1d(1, 2);
        let h0 = build_laplacian(&d).unwrap();
        let u2 = vec![1.0, 0.5, 0.0, 0.25];
        let fam = Family::new(h0.clone(), u2.clone()).unwrap();
        assert_eq!(fam.evaluate(0.0), h0.to_dense());
        let diff = fam.evaluate(0.7) - fam.evaluate(0.2);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.5 * u2[i] } else { 0.0 };
                assert!((diff[(i, j)] - expect).abs() < 1e-14);
            }
        }
        assert!(Family::new(h0, vec![1.0, -0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn overrides_fold_into_base() {
        let d = dirichlet_1d(1, 2);
        let site = SingleSite::characteristic(1.0, &d).unwrap();
        let h0 = build_laplacian(&d).unwrap();
        let u2 = site_bump(&d, &site, 1).unwrap();
        let mut ov = BTreeMap::new();
        ov.insert(0usize, 0.3);
        let fam = assemble_family(&h0, &u2, &ov, &d, &site).unwrap();
        let real = DisorderRealization::from_values(vec![0.3, 0.6], 0, 0);
        let direct = hamiltonian(&d, &site, &real).unwrap().to_dense();
        assert!((fam.evaluate(0.6) - direct).abs().max() < 1e-14);
    }

    #[test]
    fn sup_bound_of_potential() {
        let d = BoxDomain::new(1, 2, 3, BoundaryCondition::Neumann).unwrap();
        let site = SingleSite::characteristic(1.0, &d).unwrap();
        let real = sample_disorder(&SiteDistribution::Uniform, &d, 3, 0);
        let v = build_potential(&d, &site, &real).unwrap();
        assert!(v.diagonal().iter().all(|&x| x >= 0.0));
        assert!(v.norm_bound() <= real.max_omega() + 1e-15);
    }
}
