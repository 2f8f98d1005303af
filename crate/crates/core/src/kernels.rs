//! Parametric coagulation kernel, power-law fragmentation, truncation, and
//! the matrices the discrete operators run on.
//!
//! The family is
//!
//! ```text
//! K(x, y) = k0 (1 + x)^mu (1 + y)^mu 1[x + y <= S]
//! a(x)    = alpha0 x^lambda                 (1[x <= n] when truncated)
//! b(x, y) = (nu + 2) x^nu / y^(nu + 1)      for 0 < x < y
//! ```
//!
//! `b` produces `(nu + 2) / (nu + 1)` fragments per break-up and carries the
//! parent mass exactly: `∫_0^y x b(x, y) dx = y`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoagulationKernel {
    pub k0: f64,
    pub mu: f64,
    /// Pairs with `x + y > sum_cutoff` do not coagulate.
    pub sum_cutoff: Option<f64>,
}

impl CoagulationKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0.is_finite() && self.k0 >= 0.0) {
            return Err(Error::invalid("k0", format!("must be finite and >= 0, got {}", self.k0)));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu", "must be finite"));
        }
        if let Some(s) = self.sum_cutoff {
            if !(s > 0.0) {
                return Err(Error::invalid("sum_cutoff", format!("must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if let Some(s) = self.sum_cutoff {
            if x + y > s {
                return 0.0;
            }
        }
        self.k0 * ((1.0 + x) * (1.0 + y)).powf(self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentationLaw {
    pub alpha0: f64,
    pub lambda: f64,
    pub nu: f64,
    /// Break-up switched off above this size.
    pub trunc_level: Option<f64>,
}

impl FragmentationLaw {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0.is_finite() && self.alpha0 >= 0.0) {
            return Err(Error::invalid(
                "alpha0",
                format!("must be finite and >= 0, got {}", self.alpha0),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid("lambda", format!("must lie in (0, 1), got {}", self.lambda)));
        }
        if !(self.nu > -1.0 && self.nu <= 0.0) {
            return Err(Error::invalid("nu", format!("must lie in (-1, 0], got {}", self.nu)));
        }
        if let Some(n) = self.trunc_level {
            if !(n > 0.0) {
                return Err(Error::invalid("trunc_level", format!("must be positive, got {n}")));
            }
        }
        Ok(())
    }

    pub fn rate(&self, x: f64) -> f64 {
        match self.trunc_level {
            Some(n) if x > n => 0.0,
            _ => self.alpha0 * x.powf(self.lambda),
        }
    }

    /// Daughter density `b(x, y)`; zero unless `0 < x < y`.
    pub fn daughter(&self, x: f64, y: f64) -> f64 {
        if x <= 0.0 || x >= y {
            return 0.0;
        }
        (self.nu + 2.0) * x.powf(self.nu) / y.powf(self.nu + 1.0)
    }

    /// Expected number of fragments per break-up, `(nu + 2) / (nu + 1)`.
    pub fn fragment_count(&self) -> Result<f64> {
        if !(self.nu > -1.0 && self.nu <= 0.0) {
            return Err(Error::invalid("nu", format!("must lie in (-1, 0], got {}", self.nu)));
        }
        Ok((self.nu + 2.0) / (self.nu + 1.0))
    }

    /// `∫_0^x b(s, y) ds` for `0 <= x <= y`.
    fn number_antiderivative(&self, x: f64, y: f64) -> f64 {
        let p = self.nu + 1.0;
        (self.nu + 2.0) / p * (x / y).powf(p)
    }

    /// `∫_0^x s b(s, y) ds` for `0 <= x <= y`.
    fn mass_antiderivative(&self, x: f64, y: f64) -> f64 {
        y * (x / y).powf(self.nu + 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub coagulation: CoagulationKernel,
    pub fragmentation: FragmentationLaw,
}

/// Pointwise kernel values at a size pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    /// `K(x, y)`
    pub coagulation: f64,
    /// `a(y)`
    pub rate: f64,
    /// `b(x, y)`
    pub daughter: f64,
}

impl KernelSet {
    /// `K = (1/20)(1+x)^(1/4)(1+y)^(1/4) 1[x+y <= 25]`, `a = sqrt(x)/5`,
    /// `b = 2/y` (binary break-up).
    pub fn reference() -> Self {
        Self {
            coagulation: CoagulationKernel {
                k0: 0.05,
                mu: 0.25,
                sum_cutoff: Some(25.0),
            },
            fragmentation: FragmentationLaw {
                alpha0: 0.2,
                lambda: 0.5,
                nu: 0.0,
                trunc_level: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.coagulation.validate()?;
        self.fragmentation.validate()
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<KernelValues> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::invalid("size", format!("sizes must be positive, got ({x}, {y})")));
        }
        Ok(KernelValues {
            coagulation: self.coagulation.eval(x, y),
            rate: self.fragmentation.rate(y),
            daughter: self.fragmentation.daughter(x, y),
        })
    }

    /// Kernels restricted to sizes up to `level`: `K_n = K 1[x+y <= level]`,
    /// `a_n = a 1[x <= level]`. Existing cut-offs are kept when tighter.
    pub fn truncate(&self, level: f64) -> Result<Self> {
        if !(level.is_finite() && level > 0.0) {
            return Err(Error::invalid("level", format!("must be positive, got {level}")));
        }
        let tighter = |old: Option<f64>| Some(old.map_or(level, |o| o.min(level)));
        let mut out = *self;
        out.coagulation.sum_cutoff = tighter(self.coagulation.sum_cutoff);
        out.fragmentation.trunc_level = tighter(self.fragmentation.trunc_level);
        Ok(out)
    }
}

/// Dense `n × n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            check_len("matrix row", n, row.len())?;
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Kernel data tabulated on a grid.
#[derive(Debug, Clone)]
pub struct KernelMatrices {
    /// `K(x_i, x_j)`
    pub k_mat: SquareMatrix,
    /// `a(x_i)`
    pub alpha_vec: Vec<f64>,
    /// `∫_{cell_i ∩ (0, x_j)} b(x, x_j) dx`
    pub b_num: SquareMatrix,
    /// `∫_{cell_i ∩ (0, x_j)} x b(x, x_j) dx`
    pub b_mass: SquareMatrix,
    /// Fragment density produced in cell `i` per break-up in cell `j`:
    /// `b_mass[i][j] / x_i`. Upper triangular.
    pub frag_gain: SquareMatrix,
}

impl KernelMatrices {
    pub fn precompute(kset: &KernelSet, grid: &Grid) -> Result<Self> {
        kset.validate()?;
        let n = grid.n_cells();
        let x = grid.centers();
        let k_mat = SquareMatrix::from_fn(n, |i, j| kset.coagulation.eval(x[i], x[j]));
        let alpha_vec: Vec<f64> = x.iter().map(|&xi| kset.fragmentation.rate(xi)).collect();

        let law = &kset.fragmentation;
        let mut b_num = SquareMatrix::zeros(n);
        let mut b_mass = SquareMatrix::zeros(n);
        for j in 0..n {
            let y = x[j];
            // cells 0..=j intersect (0, y); the last one only up to its centre
            for i in 0..=j {
                let (lo, hi) = grid.cell_edges(i);
                let hi = hi.min(y);
                b_num.data[i * n + j] =
                    law.number_antiderivative(hi, y) - law.number_antiderivative(lo, y);
                b_mass.data[i * n + j] = law.mass_antiderivative(hi, y) - law.mass_antiderivative(lo, y);
            }
        }
        let frag_gain = SquareMatrix::from_fn(n, |i, j| b_mass.get(i, j) / x[i]);
        Ok(Self {
            k_mat,
            alpha_vec,
            b_num,
            b_mass,
            frag_gain,
        })
    }

    /// Replaces the coagulation matrix by a user-supplied table. The table
    /// must be square of the grid size, symmetric and non-negative.
    pub fn with_coagulation_matrix(mut self, k_mat: SquareMatrix) -> Result<Self> {
        check_len("coagulation matrix", self.n(), k_mat.n())?;
        if !k_mat.is_symmetric() {
            return Err(Error::invalid("k_mat", "coagulation matrix must be symmetric"));
        }
        if k_mat.data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("k_mat", "entries must be finite and non-negative"));
        }
        self.k_mat = k_mat;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.alpha_vec.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_matrices() -> (Grid, KernelMatrices) {
        let grid = Grid::new(800, 25.0).unwrap();
        let mats = KernelMatrices::precompute(&KernelSet::reference(), &grid).unwrap();
        (grid, mats)
    }

    #[test]
    fn pointwise_reference_values() {
        let k = KernelSet::reference();
        let v = k.eval(1.0, 1.0).unwrap();
        assert_relative_eq!(v.coagulation, 2f64.sqrt() / 20.0, max_relative = 1e-15);
        assert_relative_eq!(v.coagulation, 0.0707107, epsilon = 1e-7);
        let v = k.eval(1.0, 4.0).unwrap();
        assert_relative_eq!(v.rate, 0.4, max_relative = 1e-15);
        assert_relative_eq!(v.daughter, 0.5, max_relative = 1e-15);
        assert_eq!(k.eval(2.0, 1.0).unwrap().daughter, 0.0);
        assert!(k.eval(0.0, 1.0).is_err());
        assert!(k.eval(1.0, -1.0).is_err());
    }

    #[test]
    fn fragment_counts() {
        let mut law = KernelSet::reference().fragmentation;
        assert_eq!(law.fragment_count().unwrap(), 2.0);
        law.nu = -0.5;
        assert_eq!(law.fragment_count().unwrap(), 3.0);
        law.nu = -1.0;
        assert!(law.fragment_count().is_err());
        law.nu = 0.1;
        assert!(law.fragment_count().is_err());
    }

    #[test]
    fn truncation_values() {
        let k = KernelSet::reference().truncate(10.0).unwrap();
        assert_eq!(k.eval(6.0, 6.0).unwrap().coagulation, 0.0);
        assert_eq!(k.fragmentation.rate(12.0), 0.0);
        assert!(k.fragmentation.rate(9.0) > 0.0);
        assert!(KernelSet::reference().truncate(0.0).is_err());
        // tighter existing cutoff survives
        assert_eq!(k.truncate(20.0).unwrap().coagulation.sum_cutoff, Some(10.0));
    }

    #[test]
    fn truncation_at_domain_is_identity_on_matrices() {
        let grid = Grid::new(64, 25.0).unwrap();
        let k = KernelSet::reference();
        let a = KernelMatrices::precompute(&k, &grid).unwrap();
        let b = KernelMatrices::precompute(&k.truncate(25.0).unwrap(), &grid).unwrap();
        assert_eq!(a.k_mat, b.k_mat);
        assert_eq!(a.alpha_vec, b.alpha_vec);
        assert_eq!(a.frag_gain, b.frag_gain);
    }

    #[test]
    fn truncated_matrices_are_dominated() {
        let grid = Grid::new(100, 25.0).unwrap();
        let k = KernelSet::reference();
        let full = KernelMatrices::precompute(&k, &grid).unwrap();
        for level in [5.0, 10.0, 17.3] {
            let t = KernelMatrices::precompute(&k.truncate(level).unwrap(), &grid).unwrap();
            for i in 0..100 {
                assert!(t.alpha_vec[i] <= full.alpha_vec[i]);
                for j in 0..100 {
                    assert!(t.k_mat.get(i, j) <= full.k_mat.get(i, j));
                }
            }
        }
    }

    #[test]
    fn reference_mass_columns_exact() {
        let (grid, mats) = reference_matrices();
        assert!(mats.k_mat.is_symmetric());
        let worst = (0..800)
            .map(|j| (mats.b_mass.column_sum(j) - grid.centers()[j]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "max deviation {worst}");
    }

    #[test]
    fn binary_breakup_counts_two() {
        let (_, mats) = reference_matrices();
        for j in [0, 1, 10, 400, 799] {
            assert_relative_eq!(mats.b_num.column_sum(j), 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn singular_daughter_law_is_integrated_exactly() {
        let grid = Grid::new(50, 10.0).unwrap();
        let mut k = KernelSet::reference();
        k.fragmentation.nu = -0.7;
        let mats = KernelMatrices::precompute(&k, &grid).unwrap();
        let count = k.fragmentation.fragment_count().unwrap();
        for j in 0..50 {
            let x = grid.centers()[j];
            assert_relative_eq!(mats.b_mass.column_sum(j), x, max_relative = 1e-12);
            assert_relative_eq!(mats.b_num.column_sum(j), count, max_relative = 1e-12);
            assert!(mats.b_num.get(0, j).is_finite());
        }
    }

    #[test]
    fn tabulated_escape_hatch() {
        let grid = Grid::new(3, 3.0).unwrap();
        let mats = KernelMatrices::precompute(&KernelSet::reference(), &grid).unwrap();
        let ones = SquareMatrix::from_fn(3, |_, _| 1.0);
        let m = mats.clone().with_coagulation_matrix(ones.clone()).unwrap();
        assert_eq!(m.k_mat, ones);
        let skew = SquareMatrix::from_fn(3, |i, j| i as f64 - j as f64 + 5.0);
        assert!(mats.clone().with_coagulation_matrix(skew).is_err());
        assert!(mats.with_coagulation_matrix(SquareMatrix::zeros(2)).is_err());
    }

    #[test]
    fn parameter_validation() {
        let mut k = KernelSet::reference();
        k.coagulation.k0 = -1.0;
        assert!(k.validate().is_err());
        let mut k = KernelSet::reference();
        k.fragmentation.lambda = 1.5;
        assert!(k.validate().is_err());
        let mut k = KernelSet::reference();
        k.fragmentation.nu = -1.0;
        assert!(k.validate().is_err());
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_and_nonnegative(x in 1e-3f64..30.0, y in 1e-3f64..30.0) {
            let k = KernelSet::reference().coagulation;
            prop_assert_eq!(k.eval(x, y), k.eval(y, x));
            prop_assert!(k.eval(x, y) >= 0.0);
        }

        #[test]
        fn daughter_mass_integral_is_parent_mass(y in 1e-2f64..50.0, nu in -0.95f64..=0.0) {
            let law = FragmentationLaw { alpha0: 1.0, lambda: 0.5, nu, trunc_level: None };
            prop_assert!((law.mass_antiderivative(y, y) - y).abs() <= 1e-12 * y);
            let count = law.fragment_count().unwrap();
            prop_assert!((law.number_antiderivative(y, y) - count).abs() <= 1e-12 * count);
            prop_assert!(count >= 2.0);
        }
    }
}
