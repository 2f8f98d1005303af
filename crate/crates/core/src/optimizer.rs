//! Projected gradient descent with Armijo backtracking on the gradient
//! mapping, plus Pontryagin residuals as convergence diagnostics.
//!
//! All time norms are discrete `L²(0,T)` norms, `‖v‖² = Σ_k v_k² dt` over
//! the control nodes. With an unweighted norm the stopping tolerance would
//! be rescaled by `sqrt(dt)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, ControlBox};
use crate::error::{check_len, Error, Result};
use crate::grid::TimeGrid;
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub eta0: f64,
    pub beta: f64,
    pub sigma: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta0: 0.1,
            beta: 0.5,
            sigma: 1e-4,
            eps: 0.075,
            max_iter: 200,
            max_backtracks: 40,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return Err(Error::invalid("eta0", format!("must be positive, got {}", self.eta0)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::invalid("sigma", format!("must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid("eps", format!("must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Pointwise clamp onto `[u_min, u_max]`.
pub fn project_control(u_raw: &[f64], u_min: f64, u_max: f64) -> Result<Control> {
    if !(u_min <= u_max) {
        return Err(Error::invalid("u_min", format!("u_min = {u_min} exceeds u_max = {u_max}")));
    }
    let bounds = ControlBox::new(u_min, u_max)?;
    Ok(project_onto(u_raw, bounds))
}

pub(crate) fn project_onto(u_raw: &[f64], bounds: ControlBox) -> Control {
    Control::from_projected(u_raw.iter().map(|v| bounds.clamp(*v)).collect(), bounds)
}

fn projected_step(u: &Control, g: &[f64], eta: f64) -> Control {
    let raw: Vec<f64> = u.values().iter().zip(g).map(|(uk, gk)| uk - eta * gk).collect();
    project_onto(&raw, u.bounds())
}

/// `G_η(u) = (u - P(u - η g)) / η`.
pub fn gradient_mapping(u: &Control, g: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta", format!("must be positive, got {eta}")));
    }
    check_len("gradient", u.values().len(), g.len())?;
    let next = projected_step(u, g, eta);
    Ok(u.values()
        .iter()
        .zip(next.values())
        .map(|(a, b)| (a - b) / eta)
        .collect())
}

/// Projection residual `‖u - P(u - g)‖₂ = ‖G_1(u)‖₂` used as stopping test.
pub fn projection_residual(u: &Control, g: &[f64], tgrid: &TimeGrid) -> Result<f64> {
    Ok(tgrid.l2_norm(&gradient_mapping(u, g, 1.0)?))
}

#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub control: Control,
    pub eta: f64,
    pub backtracks: usize,
    /// `J(u⁺)` as evaluated by the oracle.
    pub cost: f64,
    /// Right-hand side `J(u) - σ η ‖G_η(u)‖²` it was compared against.
    pub bound: f64,
}

/// Backtracking along the projection arc `η ↦ P(u - η g)`, `η = η0 β^n`,
/// until `J(u⁺) <= J(u) - σ η ‖G_η(u)‖²`.
///
/// Oracle failures caused by non-finite states count as rejected trials.
pub fn armijo_step<F>(
    u: &Control,
    g: &[f64],
    cost_u: f64,
    cfg: &OptimizerConfig,
    tgrid: &TimeGrid,
    mut cost_oracle: F,
) -> Result<ArmijoStep>
where
    F: FnMut(&Control) -> Result<f64>,
{
    check_len("gradient", u.values().len(), g.len())?;
    let mut eta = cfg.eta0;
    for backtracks in 0..=cfg.max_backtracks {
        let candidate = projected_step(u, g, eta);
        let mapping_sq: f64 = u
            .values()
            .iter()
            .zip(candidate.values())
            .map(|(a, b)| ((a - b) / eta).powi(2))
            .sum::<f64>()
            * tgrid.dt();
        let bound = cost_u - cfg.sigma * eta * mapping_sq;
        let cost = match cost_oracle(&candidate) {
            Ok(c) => c,
            Err(Error::NonFinite { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if cost <= bound {
            return Ok(ArmijoStep {
                control: candidate,
                eta,
                backtracks,
                cost,
                bound,
            });
        }
        if backtracks < cfg.max_backtracks {
            eta *= cfg.beta;
        }
    }
    Err(Error::LineSearchStalled {
        backtracks: cfg.max_backtracks,
        eta,
    })
}

/// Pontryagin diagnostics at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpResiduals {
    /// `‖u - u*‖ / ‖u*‖`; `None` when `w = 0`.
    pub r: Option<f64>,
    /// `‖H(u) - H*‖ / ‖H*‖`.
    pub s: f64,
    /// Feedback `u*_k = P(1 - p_k / w)`; `None` when `w = 0`.
    pub feedback: Option<Vec<f64>>,
}

/// Minimiser of `ω ↦ (w/2)(ω - 1)² + ω p` over the box, and its value.
fn hamiltonian_min(p: f64, w: f64, bounds: ControlBox) -> (f64, f64) {
    let omega = if w > 0.0 {
        bounds.clamp(1.0 - p / w)
    } else if p > 0.0 {
        bounds.u_min
    } else {
        bounds.u_max
    };
    (omega, hamiltonian(omega, p, w))
}

fn hamiltonian(omega: f64, p: f64, w: f64) -> f64 {
    0.5 * w * (omega - 1.0).powi(2) + omega * p
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Residuals from the switching function `p_k = ⟨φ_k, C f_k⟩`.
pub fn pmp_from_switching(
    u: &[f64],
    switching: &[f64],
    w: f64,
    bounds: ControlBox,
    tgrid: &TimeGrid,
) -> Result<PmpResiduals> {
    check_len("switching function", u.len(), switching.len())?;
    let mut h_gap = Vec::with_capacity(u.len());
    let mut h_star = Vec::with_capacity(u.len());
    let mut feedback = Vec::with_capacity(u.len());
    for (uk, p) in u.iter().zip(switching) {
        let (omega, h_min) = hamiltonian_min(*p, w, bounds);
        feedback.push(omega);
        h_star.push(h_min);
        h_gap.push(hamiltonian(*uk, *p, w) - h_min);
    }
    let s = relative(tgrid.l2_norm(&h_gap), tgrid.l2_norm(&h_star));
    if w > 0.0 {
        let diff: Vec<f64> = u.iter().zip(&feedback).map(|(a, b)| a - b).collect();
        let r = relative(tgrid.l2_norm(&diff), tgrid.l2_norm(&feedback));
        Ok(PmpResiduals {
            r: Some(r),
            s,
            feedback: Some(feedback),
        })
    } else {
        Ok(PmpResiduals {
            r: None,
            s,
            feedback: None,
        })
    }
}

/// Residuals at a control, after a forward and backward solve.
pub fn pmp_residuals(problem: &Problem, u: &Control) -> Result<PmpResiduals> {
    let eval = problem.evaluate(u.values())?;
    pmp_from_switching(u.values(), &eval.switching, problem.cost.w, u.bounds(), &problem.time)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub terminal_cost: f64,
    pub proj_residual: f64,
    pub r: Option<f64>,
    pub s: f64,
    /// Step accepted from this iterate; `None` on the last record.
    pub eta: Option<f64>,
    pub backtracks: Option<usize>,
    /// Armijo right-hand side of the accepted step.
    pub armijo_bound: Option<f64>,
    /// Cost of the accepted candidate as seen by the line search.
    pub trial_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub final_control: Control,
    pub terminal_density: Vec<f64>,
    pub total_cost: f64,
    pub terminal_cost: f64,
    /// Number of accepted updates.
    pub n_iterations: usize,
    pub termination: Termination,
}

/// Forward sweep, backward sweep, gradient, stopping test, line search,
/// update; repeated until `‖G_1(u)‖ <= eps`, `max_iter` updates, or a
/// stalled line search.
pub fn pgd_run(problem: &Problem, u0: Control, cfg: &OptimizerConfig) -> Result<RunRecord> {
    cfg.validate()?;
    check_len("control", problem.time.n_nodes(), u0.values().len())?;
    let mut u = u0;
    let mut records = Vec::new();
    loop {
        let eval = problem.evaluate(u.values())?;
        let proj_residual = projection_residual(&u, &eval.gradient, &problem.time)?;
        let pmp = pmp_from_switching(u.values(), &eval.switching, problem.cost.w, u.bounds(), &problem.time)?;
        let iter = records.len();
        records.push(IterationRecord {
            iter,
            cost: eval.cost,
            terminal_cost: eval.terminal_cost,
            proj_residual,
            r: pmp.r,
            s: pmp.s,
            eta: None,
            backtracks: None,
            armijo_bound: None,
            trial_cost: None,
        });

        let finish = |termination, u: Control| RunRecord {
            n_iterations: iter,
            total_cost: eval.cost,
            terminal_cost: eval.terminal_cost,
            terminal_density: eval.trajectory.terminal().to_vec(),
            final_control: u,
            iterations: records.clone(),
            termination,
        };
        if proj_residual <= cfg.eps {
            return Ok(finish(Termination::Converged, u));
        }
        if iter >= cfg.max_iter {
            return Ok(finish(Termination::MaxIterations, u));
        }
        let step = armijo_step(&u, &eval.gradient, eval.cost, cfg, &problem.time, |c| {
            problem.cost(c.values())
        });
        match step {
            Ok(step) => {
                let last = records.last_mut().unwrap();
                last.eta = Some(step.eta);
                last.backtracks = Some(step.backtracks);
                last.armijo_bound = Some(step.bound);
                last.trial_cost = Some(step.cost);
                u = step.control;
            }
            Err(Error::LineSearchStalled { .. }) => {
                return Ok(finish(Termination::LineSearchStalled, u));
            }
            Err(e) => return Err(e),
        }
    }
}
