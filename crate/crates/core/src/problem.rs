//! A complete discretised control problem and the evaluation pipeline
//! shared by the optimizer and the validation tools.

use crate::adjoint::{
    backward_solve, discrete_cost, switching_function, AdjointTrajectory, CostConfig, TerminalCost,
};
use crate::dynamics::{forward_solve, ControlBox, GaussianProfile, Trajectory};
use crate::error::{check_len, Result};
use crate::grid::{Grid, TimeGrid};
use crate::kernels::{KernelMatrices, KernelSet};

/// Initial data of the reference problem. The amplitude is 1.0; see the
/// README for the parameter table.
pub const REFERENCE_PROFILE: GaussianProfile = GaussianProfile {
    amplitude: 1.0,
    center: 7.5,
    width: 50.0,
};

#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub time: TimeGrid,
    pub kernels: KernelSet,
    pub mats: KernelMatrices,
    pub initial: Vec<f64>,
    pub cost: CostConfig,
    pub bounds: ControlBox,
}

/// Everything one forward/backward sweep produces at a control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trajectory: Trajectory,
    pub adjoint: AdjointTrajectory,
    /// `⟨φ_k, C f_k⟩` per node.
    pub switching: Vec<f64>,
    /// Reduced gradient per node (a time density).
    pub gradient: Vec<f64>,
    pub cost: f64,
    pub terminal_cost: f64,
}

impl Problem {
    pub fn new(
        grid: Grid,
        time: TimeGrid,
        kernels: KernelSet,
        initial: Vec<f64>,
        cost: CostConfig,
        bounds: ControlBox,
    ) -> Result<Self> {
        check_len("initial state", grid.n_cells(), initial.len())?;
        cost.validate(&grid)?;
        bounds.validate()?;
        let mats = KernelMatrices::precompute(&kernels, &grid)?;
        Ok(Self {
            grid,
            time,
            kernels,
            mats,
            initial,
            cost,
            bounds,
        })
    }

    /// 800 cells on `[0, 25]`, `T = 1`, `dt = 0.005`, window `[0, 5]`,
    /// `w = 1`, controls in `[0.1, 4]`.
    pub fn reference() -> Result<Self> {
        let grid = Grid::new(800, 25.0)?;
        let initial = REFERENCE_PROFILE.sample(&grid)?;
        Self::new(
            grid,
            TimeGrid::new(1.0, 0.005)?,
            KernelSet::reference(),
            initial,
            CostConfig {
                w: 1.0,
                terminal: TerminalCost {
                    sign: 1.0,
                    x_lo: 0.0,
                    x_hi: 5.0,
                },
            },
            ControlBox::new(0.1, 4.0)?,
        )
    }

    pub fn with_weight(&self, w: f64) -> Result<Self> {
        let mut p = self.clone();
        p.cost.w = w;
        p.cost.validate(&p.grid)?;
        Ok(p)
    }

    pub fn with_time(&self, time: TimeGrid) -> Self {
        Self { time, ..self.clone() }
    }

    pub fn with_kernels(&self, kernels: KernelSet) -> Result<Self> {
        let mats = KernelMatrices::precompute(&kernels, &self.grid)?;
        Ok(Self {
            kernels,
            mats,
            ..self.clone()
        })
    }

    pub fn forward(&self, u: &[f64]) -> Result<Trajectory> {
        forward_solve(&self.initial, u, &self.mats, &self.grid, &self.time)
    }

    pub fn cost_of(&self, u: &[f64], traj: &Trajectory) -> Result<f64> {
        discrete_cost(u, traj, &self.cost, &self.grid, &self.time)
    }

    /// Discrete cost `J(u)` from a fresh forward solve.
    pub fn cost(&self, u: &[f64]) -> Result<f64> {
        let traj = self.forward(u)?;
        self.cost_of(u, &traj)
    }

    /// Forward solve, backward solve and reduced gradient.
    pub fn evaluate(&self, u: &[f64]) -> Result<Evaluation> {
        let trajectory = self.forward(u)?;
        let adjoint = backward_solve(u, &trajectory, &self.cost, &self.mats, &self.grid, &self.time)?;
        let switching = switching_function(&trajectory, &adjoint, &self.mats, &self.grid)?;
        let gradient = u
            .iter()
            .zip(&switching)
            .map(|(uk, s)| self.cost.w * (uk - 1.0) + s)
            .collect();
        let terminal_cost = self.cost.terminal.value(trajectory.terminal(), &self.grid)?;
        let cost = self.cost.running_cost(u, &self.time) + terminal_cost;
        Ok(Evaluation {
            trajectory,
            adjoint,
            switching,
            gradient,
            cost,
            terminal_cost,
        })
    }
}
