//! Gradient checks and empirical stability studies: finite-difference
//! oracle, Taylor test, optimise/discretise mismatch, kernel truncation
//! sweep and a Lipschitz probe of the control-to-state map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{advance_to_end, Control};
use crate::error::{check_len, Error, Result};
use crate::grid::TimeGrid;
use crate::optimizer::{pgd_run, OptimizerConfig, Termination};
use crate::problem::Problem;

/// Number of equal time segments of the random profiles.
pub const PROFILE_SEGMENTS: usize = 10;

/// Random streams derived from one seed.
const STREAM_DIRECTION: u64 = 1;
const STREAM_LIPSCHITZ: u64 = 2;

/// Piecewise-constant profile on `segments` equal pieces of `[0, T]`, each
/// value uniform in `[lo, hi)`. The profile depends only on the seed, not
/// on the time step, so refinements sample the same function.
pub fn random_profile(rng: &mut ChaCha8Rng, segments: usize, lo: f64, hi: f64, tgrid: &TimeGrid) -> Vec<f64> {
    let levels: Vec<f64> = (0..segments).map(|_| rng.gen_range(lo..hi)).collect();
    (0..tgrid.n_nodes())
        .map(|k| {
            let s = (tgrid.node(k) / tgrid.t_final() * segments as f64).floor() as usize;
            levels[s.min(segments - 1)]
        })
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeded direction normalised so that `Σ d_k² dt = 1`.
pub fn taylor_direction(seed: u64, tgrid: &TimeGrid) -> Vec<f64> {
    let mut rng = rng_for(seed, STREAM_DIRECTION);
    let d = random_profile(&mut rng, PROFILE_SEGMENTS, -1.0, 1.0, tgrid);
    let norm = tgrid.l2_norm(&d);
    d.into_iter().map(|v| v / norm).collect()
}

/// Relative FD step for node values of size `u`.
pub fn fd_step(u: f64) -> f64 {
    1e-5 * u.abs().max(1.0)
}

/// Central differences of the discrete cost per control node, divided by
/// `dt`. A perturbation of `u_k` leaves the states up to node `k`
/// unchanged, so each probe restarts from the stored state there.
pub fn fd_gradient(problem: &Problem, u: &[f64]) -> Result<Vec<f64>> {
    fd_gradient_with(problem, u, fd_step)
}

pub fn fd_gradient_with(problem: &Problem, u: &[f64], step: impl Fn(f64) -> f64 + Sync) -> Result<Vec<f64>> {
    let traj = problem.forward(u)?;
    let tgrid = &problem.time;
    let dt = tgrid.dt();
    (0..tgrid.n_nodes())
        .into_par_iter()
        .map(|k| {
            let h = step(u[k]);
            if !(h > 0.0) {
                return Err(Error::invalid("h", format!("finite-difference step must be positive, got {h}")));
            }
            let probe = |delta: f64| -> Result<f64> {
                let mut v = u.to_vec();
                v[k] += delta;
                let terminal = advance_to_end(&traj.states[k], k, &v, &problem.mats, &problem.grid, tgrid)?;
                let j = problem.cost.running_cost(&v, tgrid) + problem.cost.terminal.value(&terminal, &problem.grid)?;
                if !j.is_finite() {
                    return Err(Error::NonFinite {
                        solver: "finite-difference probe",
                        step: k,
                    });
                }
                Ok(j)
            };
            Ok((probe(h)? - probe(-h)?) / (2.0 * h) / dt)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorReport {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Minimum residual over the sweep.
    pub plateau: f64,
    pub seed: u64,
}

/// `ε_k = 10^{-(1 + k/2)}`, `k = 0..count`.
pub fn default_epsilons(count: usize) -> Vec<f64> {
    (0..count).map(|k| 10f64.powf(-(1.0 + k as f64 / 2.0))).collect()
}

/// `E(ε) = |J(u + ε d) - J(u) - ε ⟨g, d⟩_Δt| / ε` for a fixed seeded `d`.
///
/// The perturbed controls may leave the admissible box.
pub fn taylor_residual(problem: &Problem, u: &[f64], g: &[f64], seed: u64, epsilons: &[f64]) -> Result<TaylorReport> {
    let tgrid = &problem.time;
    check_len("control", tgrid.n_nodes(), u.len())?;
    check_len("gradient", tgrid.n_nodes(), g.len())?;
    if epsilons.is_empty() || epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("epsilons", "must be positive and strictly decreasing"));
    }
    let d = taylor_direction(seed, tgrid);
    let slope = tgrid.l2_dot(g, &d);
    let j0 = problem.cost(u)?;
    let residuals = epsilons
        .iter()
        .map(|&eps| {
            let v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
            let j = problem.cost(&v)?;
            let e = (j - j0 - eps * slope).abs() / eps;
            if e.is_nan() {
                return Err(Error::NonFinite {
                    solver: "taylor test",
                    step: 0,
                });
            }
            Ok(e)
        })
        .collect::<Result<Vec<f64>>>()?;
    let plateau = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TaylorReport {
        epsilons: epsilons.to_vec(),
        residuals,
        plateau,
        seed,
    })
}

/// Taylor test of the adjoint gradient at `u`.
pub fn taylor_adjoint(problem: &Problem, u: &[f64], seed: u64, epsilons: &[f64]) -> Result<TaylorReport> {
    let g = problem.evaluate(u)?.gradient;
    taylor_residual(problem, u, &g, seed, epsilons)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchReport {
    pub rho: f64,
    /// Adjoint gradient scaled by `dt`.
    pub continuous: Vec<f64>,
    /// Finite-difference derivative of the discrete cost per node.
    pub discrete: Vec<f64>,
}

/// `ρ = ‖dt g_cont - g_disc‖ / ‖g_disc‖` with plain vector norms.
pub fn gradient_mismatch(problem: &Problem, u: &[f64]) -> Result<MismatchReport> {
    let dt = problem.time.dt();
    let continuous: Vec<f64> = problem.evaluate(u)?.gradient.iter().map(|g| dt * g).collect();
    let discrete: Vec<f64> = fd_gradient(problem, u)?.iter().map(|g| dt * g).collect();
    let den = discrete.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::Degenerate("discrete gradient vanishes; mismatch undefined".into()));
    }
    let num = continuous
        .iter()
        .zip(&discrete)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(MismatchReport {
        rho: num / den,
        continuous,
        discrete,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub level: f64,
    pub optimal_cost: f64,
    pub terminal_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// `|J_n* - J*|`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationStudy {
    pub reference_cost: f64,
    pub rows: Vec<TruncationRow>,
}

/// Optimises the problem with kernels truncated at each level and compares
/// the optimal costs with the untruncated optimum.
pub fn truncation_study(problem: &Problem, levels: &[f64], u0: &Control, cfg: &OptimizerConfig) -> Result<TruncationStudy> {
    if levels.is_empty() {
        return Err(Error::invalid("levels", "at least one level is required"));
    }
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("levels", "must be strictly increasing"));
    }
    let reference = pgd_run(problem, u0.clone(), cfg)?;
    let rows = levels
        .iter()
        .map(|&level| {
            let truncated = problem.with_kernels(problem.kernels.truncate(level)?)?;
            let run = pgd_run(&truncated, u0.clone(), cfg)?;
            Ok(TruncationRow {
                level,
                optimal_cost: run.total_cost,
                terminal_cost: run.terminal_cost,
                iterations: run.n_iterations,
                termination: run.termination,
                gap: (run.total_cost - reference.total_cost).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationStudy {
        reference_cost: reference.total_cost,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub ratio: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub seed: u64,
}

/// Largest `sup_t ‖f_{u2}(t) - f_{u1}(t)‖_{0,1,Δx} / ‖u2 - u1‖₂` over seeded
/// random admissible pairs, each control piecewise constant in time.
pub fn lipschitz_probe(problem: &Problem, n_pairs: usize, seed: u64) -> Result<LipschitzReport> {
    if n_pairs == 0 {
        return Err(Error::invalid("pairs", "at least one pair is required"));
    }
    let tgrid = &problem.time;
    let b = problem.bounds;
    let mut rng = rng_for(seed, STREAM_LIPSCHITZ);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_pairs)
        .map(|_| {
            let u1 = random_profile(&mut rng, PROFILE_SEGMENTS, b.u_min, b.u_max, tgrid);
            let u2 = random_profile(&mut rng, PROFILE_SEGMENTS, b.u_min, b.u_max, tgrid);
            (u1, u2)
        })
        .collect();
    let ratios = pairs
        .par_iter()
        .map(|(u1, u2)| {
            let diff: Vec<f64> = u1.iter().zip(u2).map(|(a, c)| a - c).collect();
            let du = tgrid.l2_norm(&diff);
            if du == 0.0 {
                return Ok(None);
            }
            let t1 = problem.forward(u1)?;
            let t2 = problem.forward(u2)?;
            let mut sup: f64 = 0.0;
            for (a, c) in t1.states.iter().zip(&t2.states) {
                let df: Vec<f64> = a.iter().zip(c).map(|(x, y)| x - y).collect();
                sup = sup.max(problem.grid.weighted_l1(&df)?);
            }
            Ok(Some(sup / du))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let used: Vec<f64> = ratios.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::Degenerate("every sampled pair was degenerate".into()));
    }
    Ok(LipschitzReport {
        ratio: used.iter().copied().fold(0.0, f64::max),
        pairs_used: used.len(),
        pairs_skipped: n_pairs - used.len(),
        seed,
    })
}
