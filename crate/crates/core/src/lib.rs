//! Optimal control of the coagulation-fragmentation equation.
//!
//! A finite-volume discretisation of the size distribution evolves by
//! explicit Euler steps; a scalar control multiplies the coagulation
//! operator. Reduced gradients come from a backward adjoint sweep and feed
//! a projected gradient descent with Armijo backtracking.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod optimizer;
pub mod problem;
pub mod validation;

pub use adjoint::{apply_coagulation_adjoint, apply_fragmentation_adjoint, backward_solve, discrete_cost, reduced_gradient, AdjointTrajectory, CostConfig, TerminalCost};
pub use config::RunConfig;
pub use dynamics::{apply_coagulation, apply_coagulation_derivative, apply_fragmentation, forward_solve, Control, ControlBox, GaussianProfile, Trajectory};
pub use error::{Error, Result};
pub use grid::{Grid, TimeGrid};
pub use kernels::{KernelMatrices, KernelSet};
pub use optimizer::{pgd_run, OptimizerConfig, RunRecord, Termination};
pub use problem::Problem;
