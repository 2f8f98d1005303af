//! Uniform cell-centred size grid, uniform time grid and the quadratures
//! built on them.
//!
//! Cell `i` covers `[i·dx, (i+1)·dx]` and is represented by its centre
//! `(i + 1/2)·dx`. Every spatial integral in the crate is the midpoint sum
//! `Σ_i g_i·dx`, so the discrete pairing `⟨φ, f⟩ = Σ φ_i f_i dx` is the one
//! used by both the state and the adjoint.

use serde::Serialize;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    n_cells: usize,
    domain_max: f64,
    dx: f64,
    centers: Vec<f64>,
}

impl Grid {
    pub fn new(n_cells: usize, domain_max: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::invalid("n_cells", format!("need at least 2 cells, got {n_cells}")));
        }
        if !(domain_max.is_finite() && domain_max > 0.0) {
            return Err(Error::invalid("domain_max", format!("must be positive, got {domain_max}")));
        }
        let dx = domain_max / n_cells as f64;
        let centers = (0..n_cells).map(|i| (i as f64 + 0.5) * dx).collect();
        Ok(Self {
            n_cells,
            domain_max,
            dx,
            centers,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Left and right edge of cell `i`.
    pub fn cell_edges(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.dx, (i + 1) as f64 * self.dx)
    }

    /// `Σ_i φ_i f_i dx`.
    pub fn inner_product(&self, phi: &[f64], f: &[f64]) -> Result<f64> {
        check_len("phi", self.n_cells, phi.len())?;
        check_len("f", self.n_cells, f.len())?;
        Ok(dot(phi, f) * self.dx)
    }

    /// Zeroth (`k = 0`, number) or first (`k = 1`, mass) moment.
    pub fn moment(&self, f: &[f64], k: u32) -> Result<f64> {
        check_len("f", self.n_cells, f.len())?;
        match k {
            0 => Ok(f.iter().sum::<f64>() * self.dx),
            1 => Ok(dot(&self.centers, f) * self.dx),
            _ => Err(Error::invalid("k", format!("moment order must be 0 or 1, got {k}"))),
        }
    }

    /// Indices of the cells whose centre lies in `[x_lo, x_hi]`.
    pub fn window_cells(&self, x_lo: f64, x_hi: f64) -> std::ops::Range<usize> {
        let first = self.centers.partition_point(|&c| c < x_lo);
        let last = self.centers.partition_point(|&c| c <= x_hi);
        first..last.max(first)
    }

    /// Number of particles in cells whose centre lies in `[x_lo, x_hi]`.
    pub fn window_mass(&self, f: &[f64], x_lo: f64, x_hi: f64) -> Result<f64> {
        check_len("f", self.n_cells, f.len())?;
        Ok(f[self.window_cells(x_lo, x_hi)].iter().sum::<f64>() * self.dx)
    }

    /// Weighted norm `Σ (1 + x_i)|g_i| dx` of the state space.
    pub fn weighted_l1(&self, g: &[f64]) -> Result<f64> {
        check_len("g", self.n_cells, g.len())?;
        Ok(self
            .centers
            .iter()
            .zip(g)
            .map(|(x, v)| (1.0 + x) * v.abs())
            .sum::<f64>()
            * self.dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    t_final: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Builds the grid from a final time and a nominal step; `t_final / dt`
    /// must be an integer up to `1e-9` relative, and the stored step is
    /// recomputed as `t_final / n_steps`.
    pub fn new(t_final: f64, dt: f64) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid("t_final", format!("must be positive, got {t_final}")));
        }
        if !(dt.is_finite() && dt > 0.0 && dt <= t_final) {
            return Err(Error::invalid("dt", format!("must lie in (0, t_final], got {dt}")));
        }
        let ratio = t_final / dt;
        let n_steps = ratio.round();
        if (ratio - n_steps).abs() > 1e-9 * ratio {
            return Err(Error::invalid(
                "dt",
                format!("t_final / dt = {ratio} is not an integer number of steps"),
            ));
        }
        Self::with_steps(t_final, n_steps as usize)
    }

    pub fn with_steps(t_final: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "need at least one step"));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid("t_final", format!("must be positive, got {t_final}")));
        }
        Ok(Self {
            t_final,
            dt: t_final / n_steps as f64,
            n_steps,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of time nodes `t_0, …, t_{n_steps}`; controls live on nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Same horizon, half the step.
    pub fn refined(&self) -> Self {
        Self {
            t_final: self.t_final,
            dt: self.t_final / (2 * self.n_steps) as f64,
            n_steps: 2 * self.n_steps,
        }
    }

    /// Same horizon, twice the step. Requires an even step count.
    pub fn coarsened(&self) -> Result<Self> {
        if !self.n_steps.is_multiple_of(2) {
            return Err(Error::invalid("n_steps", "cannot coarsen an odd number of steps"));
        }
        Self::with_steps(self.t_final, self.n_steps / 2)
    }

    /// Discrete `L²(0,T)` inner product `Σ_k a_k b_k dt` over the nodes.
    pub fn l2_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) * self.dt
    }

    pub fn l2_norm(&self, a: &[f64]) -> f64 {
        self.l2_dot(a, a).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_grid_spacing() {
        let g = Grid::new(800, 25.0).unwrap();
        assert_eq!(g.dx(), 0.03125);
        assert_eq!(g.centers()[0], 0.015625);
        assert_eq!(g.centers()[799], 25.0 - 0.015625);
        assert_relative_eq!(g.dx() * 800.0, 25.0);
    }

    #[test]
    fn small_grids() {
        assert_eq!(Grid::new(2, 1.0).unwrap().centers(), &[0.25, 0.75]);
        let g = Grid::new(4, 2.0).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.centers(), &[0.25, 0.75, 1.25, 1.75]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1, 1.0).is_err());
        assert!(Grid::new(10, 0.0).is_err());
        assert!(Grid::new(10, -3.0).is_err());
    }

    #[test]
    fn inner_product_arithmetic() {
        let g = Grid::new(2, 1.0).unwrap();
        assert_eq!(g.inner_product(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 5.5);
        assert_eq!(g.inner_product(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            g.inner_product(&[1.0], &[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn moments_and_windows() {
        let g = Grid::new(4, 2.0).unwrap();
        let f = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(g.moment(&f, 0).unwrap(), 5.0);
        assert_eq!(g.moment(&f, 1).unwrap(), (0.25 + 1.5 + 3.75 + 7.0) * 0.5);
        assert!(g.moment(&f, 2).is_err());
        assert_eq!(g.window_mass(&f, 0.0, 2.0).unwrap(), 5.0);
        // centres 0.75 and 1.25 only
        assert_eq!(g.window_mass(&f, 0.5, 1.25).unwrap(), 2.5);
        assert_eq!(g.window_cells(0.3, 0.7), 1..1);
        assert_eq!(g.moment(&[0.0; 4], 0).unwrap(), 0.0);
        assert_eq!(g.moment(&[0.0; 4], 1).unwrap(), 0.0);
    }

    #[test]
    fn reference_window_has_160_cells() {
        let g = Grid::new(800, 25.0).unwrap();
        assert_eq!(g.window_cells(0.0, 5.0), 0..160);
    }

    #[test]
    fn time_grid() {
        let t = TimeGrid::new(1.0, 0.005).unwrap();
        assert_eq!(t.n_steps(), 200);
        assert_eq!(t.n_nodes(), 201);
        assert!((t.n_steps() as f64 * t.dt() - 1.0).abs() <= 1e-12);
        assert_eq!(t.refined().n_steps(), 400);
        assert_eq!(t.coarsened().unwrap().n_steps(), 100);
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.0, 0.1).is_err());
    }
}
