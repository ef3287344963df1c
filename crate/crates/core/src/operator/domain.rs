use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest grid the dense eigensolver is asked to handle by default.
pub const DEFAULT_DENSE_BUDGET: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Periodic,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Periodic => "periodic",
        };
        f.write_str(s)
    }
}

/// The box `[-L, L]^d` discretized with `m` cell-centered grid points per unit length.
///
/// Grid points are stored row-major (the last coordinate varies fastest). The box is
/// tiled by `(2L)^d` unit cubes `C_k = k + [0,1]^d`, `k ∈ {-L, ..., L-1}^d`, each of which
/// holds exactly `m^d` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxDomain {
    dim: usize,
    half_width: usize,
    cells_per_unit: usize,
    bc: BoundaryCondition,
}

impl BoxDomain {
    pub fn new(
        dim: usize,
        half_width: usize,
        cells_per_unit: usize,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if half_width == 0 {
            return Err(Error::Config("half width L must be a positive integer".into()));
        }
        if cells_per_unit == 0 {
            return Err(Error::Config("grid resolution m must be a positive integer".into()));
        }
        let side = 2usize
            .checked_mul(half_width)
            .and_then(|s| s.checked_mul(cells_per_unit))
            .ok_or_else(|| Error::Config("grid side length overflows".into()))?;
        side.checked_pow(dim as u32)
            .ok_or_else(|| Error::Config("grid size overflows".into()))?;
        Ok(Self {
            dim,
            half_width,
            cells_per_unit,
            bc,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L`
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// `m`
    pub fn cells_per_unit(&self) -> usize {
        self.cells_per_unit
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn with_bc(mut self, bc: BoundaryCondition) -> Self {
        self.bc = bc;
        self
    }

    /// Grid spacing `h = 1/m`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.cells_per_unit as f64
    }

    /// Weight `h^d` of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Points along one axis, `2·L·m`.
    pub fn side_points(&self) -> usize {
        2 * self.half_width * self.cells_per_unit
    }

    /// Unit cubes along one axis, `2·L`.
    pub fn side_cubes(&self) -> usize {
        2 * self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.side_points().pow(self.dim as u32)
    }

    pub fn n_cubes(&self) -> usize {
        self.side_cubes().pow(self.dim as u32)
    }

    pub fn points_per_cube(&self) -> usize {
        self.cells_per_unit.pow(self.dim as u32)
    }

    /// `|Λ| = (2L)^d`.
    pub fn volume(&self) -> f64 {
        self.n_cubes() as f64
    }

    pub fn check_dense_budget(&self, budget: usize) -> Result<()> {
        if self.n_points() > budget {
            return Err(Error::Config(format!(
                "grid has {} points, above the dense eigensolve budget of {budget}",
                self.n_points()
            )));
        }
        Ok(())
    }

    pub fn point_coords(&self, index: usize) -> [usize; 3] {
        unflatten(index, self.side_points(), self.dim)
    }

    pub fn point_index(&self, coords: &[usize]) -> usize {
        flatten(coords, self.side_points(), self.dim)
    }

    /// Physical position of the cell center.
    pub fn point_position(&self, index: usize) -> [f64; 3] {
        let c = self.point_coords(index);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = -(self.half_width as f64) + (c[a] as f64 + 0.5) * h;
        }
        x
    }

    /// Linear index of the unit cube containing a grid point.
    pub fn cube_of_point(&self, index: usize) -> usize {
        let c = self.point_coords(index);
        let m = self.cells_per_unit;
        let mut cube = [0usize; 3];
        for a in 0..self.dim {
            cube[a] = c[a] / m;
        }
        flatten(&cube, self.side_cubes(), self.dim)
    }

    /// Position of a point inside its cube, as a linear index into `m^d` local cells.
    pub fn local_index(&self, index: usize) -> usize {
        let c = self.point_coords(index);
        let m = self.cells_per_unit;
        let mut local = [0usize; 3];
        for a in 0..self.dim {
            local[a] = c[a] % m;
        }
        flatten(&local, m, self.dim)
    }

    /// Lattice coordinates `k ∈ {-L, ..., L-1}^d` of a cube.
    pub fn cube_lattice(&self, cube: usize) -> Vec<i64> {
        let c = unflatten(cube, self.side_cubes(), self.dim);
        (0..self.dim)
            .map(|a| c[a] as i64 - self.half_width as i64)
            .collect()
    }

    /// Global point indices of a cube, ordered by local index.
    pub fn cube_points(&self, cube: usize) -> Vec<usize> {
        let m = self.cells_per_unit;
        let base = unflatten(cube, self.side_cubes(), self.dim);
        (0..self.points_per_cube())
            .map(|local| {
                let l = unflatten(local, m, self.dim);
                let mut g = [0usize; 3];
                for a in 0..self.dim {
                    g[a] = base[a] * m + l[a];
                }
                self.point_index(&g)
            })
            .collect()
    }

    /// Neighbor of a point along `axis` in direction `+1`/`-1`, honoring periodic wrap.
    /// Returns `None` when the neighbor lies outside the box (Dirichlet or Neumann).
    pub fn neighbor(&self, index: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut c = self.point_coords(index);
        let n = self.side_points();
        if forward {
            if c[axis] + 1 < n {
                c[axis] += 1;
            } else if self.bc == BoundaryCondition::Periodic {
                c[axis] = 0;
            } else {
                return None;
            }
        } else if c[axis] > 0 {
            c[axis] -= 1;
        } else if self.bc == BoundaryCondition::Periodic {
            c[axis] = n - 1;
        } else {
            return None;
        }
        Some(self.point_index(&c[..self.dim]))
    }

    pub fn describe(&self) -> String {
        format!(
            "d={} L={} m={} bc={}",
            self.dim, self.half_width, self.cells_per_unit, self.bc
        )
    }
}

pub(crate) fn flatten(coords: &[usize], side: usize, dim: usize) -> usize {
    coords[..dim].iter().fold(0, |acc, &c| acc * side + c)
}

pub(crate) fn unflatten(mut index: usize, side: usize, dim: usize) -> [usize; 3] {
    let mut c = [0usize; 3];
    for a in (0..dim).rev() {
        c[a] = index % side;
        index /= side;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let d = BoxDomain::new(2, 2, 4, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(d.n_points(), 256);
        assert_eq!(d.n_cubes(), 16);
        assert_eq!(d.points_per_cube(), 16);
        assert_eq!(d.volume(), 16.0);
        assert_eq!(d.spacing() * d.cells_per_unit() as f64, 1.0);
    }

    #[test]
    fn cubes_partition_grid() {
        for dim in 1..=3 {
            let d = BoxDomain::new(dim, 1, 3, BoundaryCondition::Neumann).unwrap();
            let mut seen = vec![0usize; d.n_points()];
            for k in 0..d.n_cubes() {
                let pts = d.cube_points(k);
                assert_eq!(pts.len(), d.points_per_cube());
                for (local, &p) in pts.iter().enumerate() {
                    seen[p] += 1;
                    assert_eq!(d.cube_of_point(p), k);
                    assert_eq!(d.local_index(p), local);
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn lattice_range() {
        let d = BoxDomain::new(1, 3, 2, BoundaryCondition::Dirichlet).unwrap();
        let ks: Vec<i64> = (0..d.n_cubes()).map(|k| d.cube_lattice(k)[0]).collect();
        assert_eq!(ks, vec![-3, -2, -1, 0, 1, 2]);
        let x = d.point_position(0)[0];
        assert!((x - (-3.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(BoxDomain::new(4, 1, 1, BoundaryCondition::Dirichlet).is_err());
        assert!(BoxDomain::new(1, 0, 1, BoundaryCondition::Dirichlet).is_err());
        assert!(BoxDomain::new(1, 1, 0, BoundaryCondition::Dirichlet).is_err());
        let big = BoxDomain::new(3, 4, 8, BoundaryCondition::Dirichlet).unwrap();
        assert!(big.check_dense_budget(DEFAULT_DENSE_BUDGET).is_err());
    }

    #[test]
    fn periodic_wrap() {
        let d = BoxDomain::new(1, 1, 2, BoundaryCondition::Periodic).unwrap();
        assert_eq!(d.neighbor(3, 0, true), Some(0));
        assert_eq!(d.neighbor(0, 0, false), Some(3));
        let d = d.with_bc(BoundaryCondition::Dirichlet);
        assert_eq!(d.neighbor(3, 0, true), None);
    }
}
