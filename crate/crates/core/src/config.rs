//! Flat JSON run configuration. Every field has a default; the defaults
//! describe the reference problem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjoint::{CostConfig, TerminalCost};
use crate::dynamics::{ControlBox, GaussianProfile};
use crate::error::{Error, Result};
use crate::grid::{Grid, TimeGrid};
use crate::kernels::{CoagulationKernel, FragmentationLaw, KernelSet};
use crate::optimizer::OptimizerConfig;
use crate::problem::{Problem, REFERENCE_PROFILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_cells: usize,
    pub domain_max: f64,
    pub t_final: f64,
    pub dt: f64,

    pub k0: f64,
    pub mu: f64,
    pub sum_cutoff: Option<f64>,
    pub alpha0: f64,
    pub lambda: f64,
    pub nu: f64,
    pub trunc_level: Option<f64>,

    pub ic_amplitude: f64,
    pub ic_center: f64,
    pub ic_width: f64,
    /// CSV with an `f` column (and optionally `x`) replacing the Gaussian.
    pub ic_csv: Option<PathBuf>,

    pub w: f64,
    pub sign: f64,
    pub x_lo: f64,
    pub x_hi: f64,

    pub u_min: f64,
    pub u_max: f64,
    /// Constant starting control of the optimizer.
    pub u_init: f64,

    pub eta0: f64,
    pub beta: f64,
    pub sigma: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,

    pub positivity_threshold: f64,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub levels: Vec<f64>,
    pub pairs: usize,
    pub taylor_points: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let k = KernelSet::reference();
        let opt = OptimizerConfig::default();
        Self {
            n_cells: 800,
            domain_max: 25.0,
            t_final: 1.0,
            dt: 0.005,
            k0: k.coagulation.k0,
            mu: k.coagulation.mu,
            sum_cutoff: k.coagulation.sum_cutoff,
            alpha0: k.fragmentation.alpha0,
            lambda: k.fragmentation.lambda,
            nu: k.fragmentation.nu,
            trunc_level: k.fragmentation.trunc_level,
            ic_amplitude: REFERENCE_PROFILE.amplitude,
            ic_center: REFERENCE_PROFILE.center,
            ic_width: REFERENCE_PROFILE.width,
            ic_csv: None,
            w: 1.0,
            sign: 1.0,
            x_lo: 0.0,
            x_hi: 5.0,
            u_min: 0.1,
            u_max: 4.0,
            u_init: 1.0,
            eta0: opt.eta0,
            beta: opt.beta,
            sigma: opt.sigma,
            eps: opt.eps,
            max_iter: opt.max_iter,
            max_backtracks: opt.max_backtracks,
            positivity_threshold: -1e-6,
            seed: 42,
            weights: vec![0.2, 1.0, 5.0],
            levels: vec![10.0, 15.0, 20.0, 25.0],
            pairs: 20,
            taylor_points: 11,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn kernels(&self) -> KernelSet {
        KernelSet {
            coagulation: CoagulationKernel {
                k0: self.k0,
                mu: self.mu,
                sum_cutoff: self.sum_cutoff,
            },
            fragmentation: FragmentationLaw {
                alpha0: self.alpha0,
                lambda: self.lambda,
                nu: self.nu,
                trunc_level: self.trunc_level,
            },
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            eta0: self.eta0,
            beta: self.beta,
            sigma: self.sigma,
            eps: self.eps,
            max_iter: self.max_iter,
            max_backtracks: self.max_backtracks,
        }
    }

    pub fn bounds(&self) -> Result<ControlBox> {
        ControlBox::new(self.u_min, self.u_max)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_final, self.dt)
    }

    /// Checks every field and builds the discretised problem.
    pub fn problem(&self) -> Result<Problem> {
        self.validate_extra()?;
        let grid = Grid::new(self.n_cells, self.domain_max)?;
        let initial = match &self.ic_csv {
            Some(path) => read_initial_csv(path, &grid)?,
            None => GaussianProfile {
                amplitude: self.ic_amplitude,
                center: self.ic_center,
                width: self.ic_width,
            }
            .sample(&grid)?,
        };
        let problem = Problem::new(
            grid,
            self.time_grid()?,
            self.kernels(),
            initial,
            CostConfig {
                w: self.w,
                terminal: TerminalCost {
                    sign: self.sign,
                    x_lo: self.x_lo,
                    x_hi: self.x_hi,
                },
            },
            self.bounds()?,
        )?;
        if !problem.bounds.contains(self.u_init) {
            return Err(Error::invalid("u_init", format!("{} lies outside [u_min, u_max]", self.u_init)));
        }
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem().map(|_| ())
    }

    fn validate_extra(&self) -> Result<()> {
        self.optimizer().validate()?;
        if !(self.positivity_threshold <= 0.0) {
            return Err(Error::invalid("positivity_threshold", "must be <= 0"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "entries must be finite and >= 0"));
        }
        if self.pairs == 0 {
            return Err(Error::invalid("pairs", "must be at least 1"));
        }
        if self.taylor_points == 0 {
            return Err(Error::invalid("taylor_points", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct DensityRow {
    #[allow(dead_code)]
    x: Option<f64>,
    f: f64,
}

/// Reads an initial density from a CSV with an `f` column, one row per cell.
pub fn read_initial_csv(path: &Path, grid: &Grid) -> Result<Vec<f64>> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io(source),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    let mut values = Vec::new();
    for (i, row) in reader.deserialize::<DensityRow>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("{} row {}: {e}", path.display(), i + 1)))?;
        if !row.f.is_finite() {
            return Err(Error::invalid(format!("ic_csv row {}", i + 1), "density is not finite"));
        }
        values.push(row.f);
    }
    if values.len() != grid.n_cells() {
        return Err(Error::invalid(
            "ic_csv",
            format!("expected {} rows, found {}", grid.n_cells(), values.len()),
        ));
    }
    Ok(values)
}
