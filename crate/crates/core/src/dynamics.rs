//! Discrete coagulation and fragmentation operators and the explicit Euler
//! state solver.
//!
//! # Coagulation pairing
//!
//! Two particles from cells `j` and `l` merge into size `x_j + x_l =
//! (j + l + 1)·dx`, which is the edge between cells `j + l` and `j + l + 1`.
//! The merged particle is shared equally between those two cells, so every
//! coalescence removes two particles, adds one, and moves mass exactly. A
//! pair is active only if both receiving cells lie on the grid, i.e.
//! `j + l <= n - 2`; inactive pairs take part in neither gain nor loss. The
//! adjoint in [`crate::adjoint`] uses the same pairing.
//!
//! # Fragmentation
//!
//! Break-up in cell `j` deposits the exactly integrated fragment mass
//! `b_mass[i][j]` into every cell `i <= j`, converted to a number density at
//! the cell centre. Column sums of `b_mass` equal `x_j`, so the discrete
//! operator conserves the first moment to roundoff.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, TimeGrid};
use crate::kernels::{KernelMatrices, SquareMatrix};

/// Number of cells `l` that coagulate with cell `j` (`l < active_partners`).
#[inline]
pub(crate) fn active_partners(n: usize, j: usize) -> usize {
    (n - 1).saturating_sub(j)
}

/// `C f` into `out`; `conv` is scratch of length `n`.
pub(crate) fn coagulation_into(f: &[f64], k_mat: &SquareMatrix, dx: f64, out: &mut [f64], conv: &mut [f64]) {
    let n = f.len();
    conv.fill(0.0);
    for j in 0..n {
        let fj = f[j];
        let len = active_partners(n, j);
        if len == 0 {
            out[j] = 0.0;
            continue;
        }
        let row = &k_mat.row(j)[..len];
        let fl = &f[..len];
        let mut rate = 0.0;
        for (k, v) in row.iter().zip(fl) {
            rate += k * v;
        }
        out[j] = -fj * rate * dx;
        if fj != 0.0 {
            for ((c, k), v) in conv[j..j + len].iter_mut().zip(row).zip(fl) {
                *c += fj * k * v;
            }
        }
    }
    // each ordered pair carries half an event; each event is split in two
    let scale = 0.25 * dx;
    for m in 0..n - 1 {
        let share = scale * conv[m];
        out[m] += share;
        out[m + 1] += share;
    }
}

/// `F f` into `out`; `work` is scratch of length `n`.
pub(crate) fn fragmentation_into(f: &[f64], mats: &KernelMatrices, out: &mut [f64], work: &mut [f64]) {
    let n = f.len();
    for ((w, a), v) in work.iter_mut().zip(&mats.alpha_vec).zip(f) {
        *w = a * v;
    }
    for i in 0..n {
        let row = &mats.frag_gain.row(i)[i..];
        let mut gain = 0.0;
        for (g, w) in row.iter().zip(&work[i..]) {
            gain += g * w;
        }
        out[i] = gain - work[i];
    }
}

/// Discrete coagulation operator `C f`.
pub fn apply_coagulation(f: &[f64], mats: &KernelMatrices, grid: &Grid) -> Result<Vec<f64>> {
    check_len("state", grid.n_cells(), f.len())?;
    check_len("kernel matrices", grid.n_cells(), mats.n())?;
    let mut out = vec![0.0; f.len()];
    let mut conv = vec![0.0; f.len()];
    coagulation_into(f, &mats.k_mat, grid.dx(), &mut out, &mut conv);
    Ok(out)
}

/// Fréchet derivative `DC[f] g`. `C` is quadratic, so this is the
/// symmetrised bilinear form `B(f, g) + B(g, f)`.
pub fn apply_coagulation_derivative(f: &[f64], g: &[f64], mats: &KernelMatrices, grid: &Grid) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    check_len("state", n, f.len())?;
    check_len("direction", n, g.len())?;
    check_len("kernel matrices", n, mats.n())?;
    let dx = grid.dx();
    let mut out = vec![0.0; n];
    let mut conv = vec![0.0; n];
    for j in 0..n {
        let len = active_partners(n, j);
        let row = &mats.k_mat.row(j)[..len];
        let (mut kf, mut kg) = (0.0, 0.0);
        for l in 0..len {
            kf += row[l] * f[l];
            kg += row[l] * g[l];
            conv[j + l] += row[l] * (f[j] * g[l] + g[j] * f[l]);
        }
        out[j] = -(f[j] * kg + g[j] * kf) * dx;
    }
    for m in 0..n.saturating_sub(1) {
        let share = 0.25 * dx * conv[m];
        out[m] += share;
        out[m + 1] += share;
    }
    Ok(out)
}

/// Discrete fragmentation operator `F f`.
pub fn apply_fragmentation(f: &[f64], mats: &KernelMatrices, grid: &Grid) -> Result<Vec<f64>> {
    check_len("state", grid.n_cells(), f.len())?;
    check_len("kernel matrices", grid.n_cells(), mats.n())?;
    let mut out = vec![0.0; f.len()];
    let mut work = vec![0.0; f.len()];
    fragmentation_into(f, mats, &mut out, &mut work);
    Ok(out)
}

/// Admissible control range `[u_min, u_max]`, with `0 < u_min <= 1 <= u_max`
/// so that the uncontrolled value `u = 1` is always admissible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub u_min: f64,
    pub u_max: f64,
}

impl ControlBox {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self> {
        let b = Self { u_min, u_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_min > 0.0 && self.u_min <= 1.0) {
            return Err(Error::invalid("u_min", format!("must lie in (0, 1], got {}", self.u_min)));
        }
        if !(self.u_max >= 1.0 && self.u_max.is_finite()) {
            return Err(Error::invalid("u_max", format!("must be finite and >= 1, got {}", self.u_max)));
        }
        Ok(())
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.u_min, self.u_max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.u_min && v <= self.u_max
    }
}

/// Control values at the time nodes `t_0, …, t_{n_steps}`.
///
/// The value at `t_k` acts on `[t_k, t_{k+1})`; the value at the final node
/// has no influence on the discrete state. It is still carried because the
/// gradient, the stopping rule and the Pontryagin feedback are evaluated at
/// every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    values: Vec<f64>,
    bounds: ControlBox,
}

impl Control {
    pub fn new(values: Vec<f64>, bounds: ControlBox) -> Result<Self> {
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !bounds.contains(**v)) {
            return Err(Error::invalid(
                format!("u[{k}]"),
                format!("{v} outside [{}, {}]", bounds.u_min, bounds.u_max),
            ));
        }
        Ok(Self { values, bounds })
    }

    pub fn constant(value: f64, tgrid: &TimeGrid, bounds: ControlBox) -> Result<Self> {
        Self::new(vec![value; tgrid.n_nodes()], bounds)
    }

    /// Uncontrolled dynamics, `u ≡ 1`.
    pub fn uncontrolled(tgrid: &TimeGrid, bounds: ControlBox) -> Self {
        Self {
            values: vec![1.0; tgrid.n_nodes()],
            bounds,
        }
    }

    pub(crate) fn from_projected(values: Vec<f64>, bounds: ControlBox) -> Self {
        debug_assert!(values.iter().all(|v| bounds.contains(*v)));
        Self { values, bounds }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> ControlBox {
        self.bounds
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Built-in initial data `A exp(-(x - c)^2 / s)` on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianProfile {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl GaussianProfile {
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        if !(self.width > 0.0) {
            return Err(Error::invalid("ic_width", format!("must be positive, got {}", self.width)));
        }
        if !(self.amplitude.is_finite() && self.center.is_finite()) {
            return Err(Error::invalid("ic_amplitude", "amplitude and centre must be finite"));
        }
        Ok(grid
            .centers()
            .iter()
            .map(|x| self.amplitude * (-(x - self.center).powi(2) / self.width).exp())
            .collect())
    }
}

/// States at every time node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Smallest entry over all nodes, and the node where it occurred.
    pub min_value: f64,
    pub min_step: usize,
    /// `|M1(f(T)) - M1(f_in)| / M1(f_in)`.
    pub mass_defect: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Fails when an entry fell below `threshold` anywhere along the run.
    pub fn check_positivity(&self, threshold: f64) -> Result<()> {
        if self.min_value < threshold {
            return Err(Error::Positivity {
                step: self.min_step,
                min_value: self.min_value,
                threshold,
            });
        }
        Ok(())
    }
}

/// One explicit Euler step `next = f + dt (u C f + F f)`.
pub(crate) struct Stepper<'a> {
    mats: &'a KernelMatrices,
    dx: f64,
    dt: f64,
    coag: Vec<f64>,
    frag: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(mats: &'a KernelMatrices, grid: &Grid, tgrid: &TimeGrid) -> Self {
        let n = grid.n_cells();
        Self {
            mats,
            dx: grid.dx(),
            dt: tgrid.dt(),
            coag: vec![0.0; n],
            frag: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    pub(crate) fn step(&mut self, f: &[f64], u: f64, next: &mut [f64]) {
        coagulation_into(f, &self.mats.k_mat, self.dx, &mut self.coag, &mut self.scratch);
        fragmentation_into(f, self.mats, &mut self.frag, &mut self.scratch);
        for (((o, v), c), fr) in next.iter_mut().zip(f).zip(&self.coag).zip(&self.frag) {
            *o = v + self.dt * (u * c + fr);
        }
    }
}

fn check_control(u: &[f64], tgrid: &TimeGrid) -> Result<()> {
    check_len("control", tgrid.n_nodes(), u.len())?;
    if let Some(k) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("u[{k}]"), "control value is not finite"));
    }
    Ok(())
}

/// Integrates the controlled equation from `f_in` over the whole horizon.
///
/// `u` holds one value per time node; step `k` uses `u[k]`.
pub fn forward_solve(
    f_in: &[f64],
    u: &[f64],
    mats: &KernelMatrices,
    grid: &Grid,
    tgrid: &TimeGrid,
) -> Result<Trajectory> {
    check_len("initial state", grid.n_cells(), f_in.len())?;
    check_len("kernel matrices", grid.n_cells(), mats.n())?;
    check_control(u, tgrid)?;
    if f_in.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            solver: "forward",
            step: 0,
        });
    }

    let mut stepper = Stepper::new(mats, grid, tgrid);
    let mut states = Vec::with_capacity(tgrid.n_nodes());
    states.push(f_in.to_vec());
    let (mut min_value, mut min_step) = min_entry(f_in, 0, (f64::INFINITY, 0));
    for k in 0..tgrid.n_steps() {
        let mut next = vec![0.0; f_in.len()];
        stepper.step(&states[k], u[k], &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                solver: "forward",
                step: k + 1,
            });
        }
        (min_value, min_step) = min_entry(&next, k + 1, (min_value, min_step));
        states.push(next);
    }

    let m1_in = grid.moment(f_in, 1)?;
    let m1_out = grid.moment(states.last().unwrap(), 1)?;
    let mass_defect = if m1_in != 0.0 {
        (m1_out - m1_in).abs() / m1_in.abs()
    } else {
        (m1_out - m1_in).abs()
    };
    Ok(Trajectory {
        states,
        min_value,
        min_step,
        mass_defect,
    })
}

/// Continues from `state` at node `start` to the final node without storing
/// intermediate states.
pub(crate) fn advance_to_end(
    state: &[f64],
    start: usize,
    u: &[f64],
    mats: &KernelMatrices,
    grid: &Grid,
    tgrid: &TimeGrid,
) -> Result<Vec<f64>> {
    let mut stepper = Stepper::new(mats, grid, tgrid);
    let mut cur = state.to_vec();
    let mut next = vec![0.0; state.len()];
    for k in start..tgrid.n_steps() {
        stepper.step(&cur, u[k], &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    if cur.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            solver: "forward",
            step: tgrid.n_steps(),
        });
    }
    Ok(cur)
}

fn min_entry(f: &[f64], step: usize, best: (f64, usize)) -> (f64, usize) {
    let m = f.iter().copied().fold(f64::INFINITY, f64::min);
    if m < best.0 {
        (m, step)
    } else {
        best
    }
}
