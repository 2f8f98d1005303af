//! Adjoint operators, backward solver, discrete cost and reduced gradient.
//!
//! The adjoint operators are the exact transposes, in the pairing
//! `⟨φ, g⟩ = Σ φ_i g_i dx`, of the discrete operators in
//! [`crate::dynamics`]:
//!
//! ```text
//! (DC[f]* φ)_i = dx Σ_l K_il f_l ( (φ_{i+l} + φ_{i+l+1})/2 - φ_i - φ_l )
//! (F* φ)_j     = a_j ( Σ_{i<=j} frag_gain[i][j] φ_i - φ_j )
//! ```
//!
//! with the sum over the same active pairs as the forward gain.
//!
//! Time discretisation: the backward Euler sweep evaluates `DC*` at
//! `(f_{k+1}, u_k)` and the gradient pairs `φ_k` with `C f_k`. This is a
//! discretisation of the continuous gradient, not the gradient of the
//! discrete cost; the difference is what [`crate::validation`] measures.

use serde::{Deserialize, Serialize};

use crate::dynamics::{active_partners, coagulation_into, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, TimeGrid};
use crate::kernels::{KernelMatrices, SquareMatrix};

/// `sign · ∫_{x_lo}^{x_hi} f(T, x) dx`; `sign = 1` minimises the window
/// count, `sign = -1` maximises it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalCost {
    pub sign: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl TerminalCost {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::invalid("sign", format!("must be +1 or -1, got {}", self.sign)));
        }
        if !(self.x_lo >= 0.0 && self.x_lo < self.x_hi && self.x_hi <= grid.domain_max()) {
            return Err(Error::invalid(
                "x_hi",
                format!(
                    "window [{}, {}] must satisfy 0 <= x_lo < x_hi <= {}",
                    self.x_lo,
                    self.x_hi,
                    grid.domain_max()
                ),
            ));
        }
        Ok(())
    }

    pub fn value(&self, f: &[f64], grid: &Grid) -> Result<f64> {
        Ok(self.sign * grid.window_mass(f, self.x_lo, self.x_hi)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Weight of the running cost `(w/2) ∫ (u - 1)^2 dt`.
    pub w: f64,
    pub terminal: TerminalCost,
}

impl CostConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.w.is_finite() && self.w >= 0.0) {
            return Err(Error::invalid("w", format!("must be finite and >= 0, got {}", self.w)));
        }
        self.terminal.validate(grid)
    }

    /// `(w/2) Σ_{k < n_steps} (u_k - 1)^2 dt`. The final node does not act
    /// on any interval and carries no weight.
    pub fn running_cost(&self, u: &[f64], tgrid: &TimeGrid) -> f64 {
        let sq: f64 = u[..tgrid.n_steps()].iter().map(|v| (v - 1.0).powi(2)).sum();
        0.5 * self.w * sq * tgrid.dt()
    }
}

/// Adjoint states at every time node.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub values: Vec<Vec<f64>>,
}

impl AdjointTrajectory {
    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `Dψ`: `sign` on window cells, zero elsewhere.
pub fn terminal_gradient(tc: &TerminalCost, grid: &Grid) -> Result<Vec<f64>> {
    let cells = grid.window_cells(tc.x_lo, tc.x_hi);
    if cells.is_empty() {
        return Err(Error::EmptyWindow {
            x_lo: tc.x_lo,
            x_hi: tc.x_hi,
        });
    }
    let mut out = vec![0.0; grid.n_cells()];
    out[cells].fill(tc.sign);
    Ok(out)
}

pub(crate) fn coagulation_adjoint_into(
    phi: &[f64],
    f: &[f64],
    k_mat: &SquareMatrix,
    dx: f64,
    out: &mut [f64],
    psi: &mut [f64],
) {
    let n = phi.len();
    for m in 0..n - 1 {
        psi[m] = 0.5 * (phi[m] + phi[m + 1]);
    }
    for i in 0..n {
        let len = active_partners(n, i);
        let row = &k_mat.row(i)[..len];
        let mut rate = 0.0;
        let mut gain = 0.0;
        for l in 0..len {
            let kf = row[l] * f[l];
            rate += kf;
            gain += kf * (psi[i + l] - phi[l]);
        }
        out[i] = dx * (gain - phi[i] * rate);
    }
}

pub(crate) fn fragmentation_adjoint_into(phi: &[f64], mats: &KernelMatrices, out: &mut [f64]) {
    let n = phi.len();
    out.fill(0.0);
    for i in 0..n {
        let p = phi[i];
        if p == 0.0 {
            continue;
        }
        for (o, g) in out[i..].iter_mut().zip(&mats.frag_gain.row(i)[i..]) {
            *o += g * p;
        }
    }
    for ((o, a), p) in out.iter_mut().zip(&mats.alpha_vec).zip(phi) {
        *o = a * (*o - p);
    }
}

/// `DC[f]* φ`.
pub fn apply_coagulation_adjoint(phi: &[f64], f: &[f64], mats: &KernelMatrices, grid: &Grid) -> Result<Vec<f64>> {
    check_len("adjoint", grid.n_cells(), phi.len())?;
    check_len("state", grid.n_cells(), f.len())?;
    check_len("kernel matrices", grid.n_cells(), mats.n())?;
    let mut out = vec![0.0; phi.len()];
    let mut psi = vec![0.0; phi.len()];
    coagulation_adjoint_into(phi, f, &mats.k_mat, grid.dx(), &mut out, &mut psi);
    Ok(out)
}

/// `F* φ`.
pub fn apply_fragmentation_adjoint(phi: &[f64], mats: &KernelMatrices, grid: &Grid) -> Result<Vec<f64>> {
    check_len("adjoint", grid.n_cells(), phi.len())?;
    check_len("kernel matrices", grid.n_cells(), mats.n())?;
    let mut out = vec![0.0; phi.len()];
    fragmentation_adjoint_into(phi, mats, &mut out);
    Ok(out)
}

/// Right-hand side of the adjoint equation, `∂_t φ = -(u DC[f]* φ + F* φ)`.
pub fn apply_adjoint_rhs(
    phi: &[f64],
    f: &[f64],
    u_val: f64,
    mats: &KernelMatrices,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let dc = apply_coagulation_adjoint(phi, f, mats, grid)?;
    let fr = apply_fragmentation_adjoint(phi, mats, grid)?;
    Ok(dc.iter().zip(&fr).map(|(c, r)| -(u_val * c + r)).collect())
}

/// Integrates the adjoint backward from `φ(T) = Dψ`.
pub fn backward_solve(
    u: &[f64],
    traj: &Trajectory,
    cc: &CostConfig,
    mats: &KernelMatrices,
    grid: &Grid,
    tgrid: &TimeGrid,
) -> Result<AdjointTrajectory> {
    check_len("control", tgrid.n_nodes(), u.len())?;
    check_len("trajectory", tgrid.n_nodes(), traj.states.len())?;
    check_len("kernel matrices", grid.n_cells(), mats.n())?;
    let n = grid.n_cells();
    let dt = tgrid.dt();
    let mut values = vec![Vec::new(); tgrid.n_nodes()];
    values[tgrid.n_steps()] = terminal_gradient(&cc.terminal, grid)?;
    let mut dc = vec![0.0; n];
    let mut fr = vec![0.0; n];
    let mut psi = vec![0.0; n];
    for k in (0..tgrid.n_steps()).rev() {
        let next = &values[k + 1];
        coagulation_adjoint_into(next, &traj.states[k + 1], &mats.k_mat, grid.dx(), &mut dc, &mut psi);
        fragmentation_adjoint_into(next, mats, &mut fr);
        let cur: Vec<f64> = next
            .iter()
            .zip(&dc)
            .zip(&fr)
            .map(|((p, c), r)| p + dt * (u[k] * c + r))
            .collect();
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                solver: "adjoint",
                step: k,
            });
        }
        values[k] = cur;
    }
    Ok(AdjointTrajectory { values })
}

/// Running cost plus terminal window cost of a computed trajectory.
pub fn discrete_cost(u: &[f64], traj: &Trajectory, cc: &CostConfig, grid: &Grid, tgrid: &TimeGrid) -> Result<f64> {
    check_len("control", tgrid.n_nodes(), u.len())?;
    check_len("trajectory", tgrid.n_nodes(), traj.states.len())?;
    Ok(cc.running_cost(u, tgrid) + cc.terminal.value(traj.terminal(), grid)?)
}

/// `⟨φ_k, C f_k⟩` at every node.
pub fn switching_function(
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    mats: &KernelMatrices,
    grid: &Grid,
) -> Result<Vec<f64>> {
    check_len("adjoint trajectory", traj.states.len(), adj.values.len())?;
    let n = grid.n_cells();
    let mut c = vec![0.0; n];
    let mut conv = vec![0.0; n];
    traj.states
        .iter()
        .zip(&adj.values)
        .map(|(f, phi)| {
            coagulation_into(f, &mats.k_mat, grid.dx(), &mut c, &mut conv);
            grid.inner_product(phi, &c)
        })
        .collect()
}

/// Reduced gradient `g_k = w (u_k - 1) + ⟨φ_k, C f_k⟩`, a time density
/// sampled at every node.
pub fn reduced_gradient(
    u: &[f64],
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    cc: &CostConfig,
    mats: &KernelMatrices,
    grid: &Grid,
    tgrid: &TimeGrid,
) -> Result<Vec<f64>> {
    check_len("control", tgrid.n_nodes(), u.len())?;
    let sw = switching_function(traj, adj, mats, grid)?;
    Ok(u.iter().zip(&sw).map(|(uk, s)| cc.w * (uk - 1.0) + s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{apply_coagulation, apply_fragmentation, forward_solve};
    use crate::kernels::KernelSet;

    fn window(sign: f64, x_lo: f64, x_hi: f64) -> TerminalCost {
        TerminalCost { sign, x_lo, x_hi }
    }

    #[test]
    fn terminal_gradient_reference() {
        let grid = Grid::new(800, 25.0).unwrap();
        let d = terminal_gradient(&window(1.0, 0.0, 5.0), &grid).unwrap();
        assert!(d[..160].iter().all(|v| *v == 1.0));
        assert!(d[160..].iter().all(|v| *v == 0.0));
        let all = terminal_gradient(&window(1.0, 0.0, 25.0), &grid).unwrap();
        assert!(all.iter().all(|v| *v == 1.0));
        let neg = terminal_gradient(&window(-1.0, 0.0, 5.0), &grid).unwrap();
        assert!(neg.iter().zip(&d).all(|(a, b)| *a == -b));
        assert!(matches!(
            terminal_gradient(&window(1.0, 0.0, 0.01), &grid),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn window_validation() {
        let grid = Grid::new(10, 5.0).unwrap();
        assert!(window(0.5, 0.0, 1.0).validate(&grid).is_err());
        assert!(window(1.0, 2.0, 1.0).validate(&grid).is_err());
        assert!(window(1.0, 0.0, 6.0).validate(&grid).is_err());
        assert!(window(-1.0, 0.0, 5.0).validate(&grid).is_ok());
    }

    #[test]
    fn zero_adjoint_rhs() {
        let grid = Grid::new(12, 6.0).unwrap();
        let mats = KernelMatrices::precompute(&KernelSet::reference(), &grid).unwrap();
        let f = vec![1.0; 12];
        let r = apply_adjoint_rhs(&[0.0; 12], &f, 1.7, &mats, &grid).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn transposes_on_small_grid() {
        let grid = Grid::new(8, 4.0).unwrap();
        let mats = KernelMatrices::precompute(&KernelSet::reference(), &grid).unwrap();
        let f: Vec<f64> = (0..8).map(|i| 1.0 + 0.3 * i as f64).collect();
        let g: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let phi: Vec<f64> = (0..8).map(|i| (0.4 * i as f64).sin() - 0.2).collect();

        let lhs = grid.inner_product(&phi, &apply_fragmentation(&f, &mats, &grid).unwrap()).unwrap();
        let rhs = grid.inner_product(&apply_fragmentation_adjoint(&phi, &mats, &grid).unwrap(), &f).unwrap();
        assert!((lhs - rhs).abs() < 1e-13);

        let cfg = apply_coagulation(&f.iter().zip(&g).map(|(a, b)| a + b).collect::<Vec<_>>(), &mats, &grid).unwrap();
        let cf = apply_coagulation(&f, &mats, &grid).unwrap();
        let cg = apply_coagulation(&g, &mats, &grid).unwrap();
        let dcg: Vec<f64> = (0..8).map(|i| cfg[i] - cf[i] - cg[i]).collect();
        let lhs = grid.inner_product(&phi, &dcg).unwrap();
        let rhs = grid.inner_product(&apply_coagulation_adjoint(&phi, &f, &mats, &grid).unwrap(), &g).unwrap();
        assert!((lhs - rhs).abs() < 1e-13, "{lhs} vs {rhs}");
    }

    #[test]
    fn zero_generator_keeps_terminal_adjoint() {
        let grid = Grid::new(20, 10.0).unwrap();
        let mut k = KernelSet::reference();
        k.coagulation.k0 = 0.0;
        k.fragmentation.alpha0 = 0.0;
        let mats = KernelMatrices::precompute(&k, &grid).unwrap();
        let t = TimeGrid::with_steps(1.0, 8).unwrap();
        let u = vec![1.0; 9];
        let f0 = vec![1.0; 20];
        let traj = forward_solve(&f0, &u, &mats, &grid, &t).unwrap();
        let cc = CostConfig {
            w: 0.5,
            terminal: window(1.0, 0.0, 3.0),
        };
        let adj = backward_solve(&u, &traj, &cc, &mats, &grid, &t).unwrap();
        let d = terminal_gradient(&cc.terminal, &grid).unwrap();
        assert!(adj.values.iter().all(|p| p == &d));
    }

    #[test]
    fn gradient_without_coagulation_is_running_cost_only() {
        let grid = Grid::new(20, 10.0).unwrap();
        let mut k = KernelSet::reference();
        k.coagulation.k0 = 0.0;
        let mats = KernelMatrices::precompute(&k, &grid).unwrap();
        let t = TimeGrid::with_steps(1.0, 8).unwrap();
        let u: Vec<f64> = (0..9).map(|i| 0.5 + 0.1 * i as f64).collect();
        let f0: Vec<f64> = grid.centers().iter().map(|x| (-(x - 4.0).powi(2)).exp()).collect();
        let traj = forward_solve(&f0, &u, &mats, &grid, &t).unwrap();
        let cc = CostConfig {
            w: 1.5,
            terminal: window(1.0, 0.0, 3.0),
        };
        let adj = backward_solve(&u, &traj, &cc, &mats, &grid, &t).unwrap();
        let g = reduced_gradient(&u, &traj, &adj, &cc, &mats, &grid, &t).unwrap();
        for (gk, uk) in g.iter().zip(&u) {
            assert_eq!(*gk, 1.5 * (uk - 1.0));
        }
    }

    #[test]
    fn cost_with_zero_weight_is_terminal_only() {
        let grid = Grid::new(20, 10.0).unwrap();
        let mats = KernelMatrices::precompute(&KernelSet::reference(), &grid).unwrap();
        let t = TimeGrid::with_steps(0.5, 5).unwrap();
        let f0 = vec![0.5; 20];
        let u = vec![1.8; 6];
        let traj = forward_solve(&f0, &u, &mats, &grid, &t).unwrap();
        let cc = CostConfig {
            w: 0.0,
            terminal: window(1.0, 0.0, 3.0),
        };
        let j = discrete_cost(&u, &traj, &cc, &grid, &t).unwrap();
        assert_eq!(j, grid.window_mass(traj.terminal(), 0.0, 3.0).unwrap());
        // the final node is outside the running-cost quadrature
        let cc = CostConfig { w: 2.0, ..cc };
        let j2 = discrete_cost(&u, &traj, &cc, &grid, &t).unwrap();
        assert!((j2 - j - 5.0 * 0.64 * 0.1).abs() < 1e-14);
    }
}
