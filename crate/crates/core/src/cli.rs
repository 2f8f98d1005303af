//! Command-line front end: configuration loading, the experiment
//! pipelines and their CSV/JSON outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::dynamics::Control;
use crate::error::{Error, Result};
use crate::optimizer::{pgd_run, RunRecord};
use crate::problem::Problem;
use crate::validation::{
    default_epsilons, fd_gradient, gradient_mismatch, lipschitz_probe, taylor_adjoint, taylor_residual,
    truncation_study,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CFCONTROL_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "cfcontrol-output";

#[derive(Debug, Parser)]
#[command(name = "cfcontrol", version, about = "Optimal control of coagulation-fragmentation dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Control-cost weight.
    #[arg(long)]
    pub w: Option<f64>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Seed for random directions and control samples.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate with the starting control and write the terminal density.
    Forward(Common),
    /// Run projected gradient descent.
    Optimize(Common),
    /// Optimize for several control weights.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Taylor test of the adjoint gradient.
    Taylor {
        #[command(flatten)]
        common: Common,
        /// Also test the finite-difference gradient.
        #[arg(long)]
        fd: bool,
    },
    /// Relative mismatch between adjoint and finite-difference gradients.
    Mismatch(Common),
    /// Optimal costs under kernel truncation.
    Truncation {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Lipschitz probe of the control-to-state map.
    Lipschitz {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Forward(_) => "forward",
            Command::Optimize(_) => "optimize",
            Command::Sweep { .. } => "sweep",
            Command::Taylor { .. } => "taylor",
            Command::Mismatch(_) => "mismatch",
            Command::Truncation { .. } => "truncation",
            Command::Lipschitz { .. } => "lipschitz",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Forward(c) | Command::Optimize(c) | Command::Mismatch(c) => c,
            Command::Sweep { common, .. }
            | Command::Taylor { common, .. }
            | Command::Truncation { common, .. }
            | Command::Lipschitz { common, .. } => common,
        }
    }
}

/// Loads the config and applies flag overrides.
pub fn effective_config(cmd: &Command) -> Result<RunConfig> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = common.w {
        cfg.w = w;
    }
    if let Some(dt) = common.dt {
        cfg.dt = dt;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.output {
        cfg.output_dir = Some(out.clone());
    }
    match cmd {
        Command::Sweep { weights: Some(w), .. } => cfg.weights = w.clone(),
        Command::Truncation { levels: Some(l), .. } => cfg.levels = l.clone(),
        Command::Lipschitz { pairs: Some(p), .. } => cfg.pairs = *p,
        _ => {}
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path)(source),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serialises");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_density(dir: &Path, problem: &Problem, f: &[f64]) -> Result<()> {
    let rows = problem.grid.centers().iter().zip(f).map(|(x, v)| vec![num(*x), num(*v)]);
    write_csv(&dir.join("terminal_density.csv"), &["x", "f"], rows)
}

fn write_control(dir: &Path, problem: &Problem, u: &[f64]) -> Result<()> {
    let rows = u.iter().enumerate().map(|(k, v)| vec![num(problem.time.node(k)), num(*v)]);
    write_csv(&dir.join("control.csv"), &["t", "u"], rows)
}

fn write_iterations(dir: &Path, run: &RunRecord) -> Result<()> {
    let rows = run.iterations.iter().map(|it| {
        vec![
            it.iter.to_string(),
            num(it.cost),
            num(it.proj_residual),
            opt_num(it.r),
            num(it.s),
            opt_num(it.eta),
            it.backtracks.map(|b| b.to_string()).unwrap_or_default(),
        ]
    });
    write_csv(
        &dir.join("iterations.csv"),
        &["iter", "J", "proj_residual", "r", "s", "eta", "backtracks"],
        rows,
    )
}

fn starting_control(cfg: &RunConfig, problem: &Problem) -> Result<Control> {
    Control::constant(cfg.u_init, &problem.time, problem.bounds)
}

fn check_final_state(problem: &Problem, u: &Control, threshold: f64) -> Result<()> {
    problem.forward(u.values())?.check_positivity(threshold)
}

/// Runs one subcommand; returns the output directory.
pub fn execute(cmd: &Command) -> Result<PathBuf> {
    let cfg = effective_config(cmd)?;
    let problem = cfg.problem()?;
    let dir = output_dir(&cfg);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let config_json = serde_json::to_value(&cfg).expect("config serialises");
    write_json(&dir.join("config.json"), &config_json)?;
    let u0 = starting_control(&cfg, &problem)?;

    let results = match cmd {
        Command::Forward(_) => {
            let traj = problem.forward(u0.values())?;
            traj.check_positivity(cfg.positivity_threshold)?;
            write_density(&dir, &problem, traj.terminal())?;
            let g = &problem.grid;
            json!({
                "terminal_cost": problem.cost.terminal.value(traj.terminal(), g)?,
                "total_cost": problem.cost_of(u0.values(), &traj)?,
                "mass_defect": traj.mass_defect,
                "min_value": traj.min_value,
                "min_step": traj.min_step,
                "m0_initial": g.moment(traj.initial(), 0)?,
                "m0_final": g.moment(traj.terminal(), 0)?,
                "m1_initial": g.moment(traj.initial(), 1)?,
                "m1_final": g.moment(traj.terminal(), 1)?,
            })
        }
        Command::Optimize(_) => {
            let run = pgd_run(&problem, u0, &cfg.optimizer())?;
            check_final_state(&problem, &run.final_control, cfg.positivity_threshold)?;
            write_control(&dir, &problem, run.final_control.values())?;
            write_iterations(&dir, &run)?;
            write_density(&dir, &problem, &run.terminal_density)?;
            let first = &run.iterations[0];
            json!({
                "total_cost": run.total_cost,
                "terminal_cost": run.terminal_cost,
                "iterations": run.n_iterations,
                "termination": run.termination,
                "initial_total_cost": first.cost,
                "initial_terminal_cost": first.terminal_cost,
                "final_proj_residual": run.iterations.last().map(|it| it.proj_residual),
            })
        }
        Command::Sweep { .. } => {
            let opt = cfg.optimizer();
            let runs = cfg
                .weights
                .par_iter()
                .map(|&w| {
                    let p = problem.with_weight(w)?;
                    let run = pgd_run(&p, u0.clone(), &opt)?;
                    check_final_state(&p, &run.final_control, cfg.positivity_threshold)?;
                    Ok((w, run))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = runs.iter().map(|(w, run)| {
                vec![
                    num(*w),
                    num(run.total_cost),
                    num(run.terminal_cost),
                    run.n_iterations.to_string(),
                ]
            });
            write_csv(
                &dir.join("sweep.csv"),
                &["w", "total_cost", "terminal_cost", "iterations"],
                rows,
            )?;
            let table: Vec<Value> = runs
                .iter()
                .map(|(w, run)| {
                    json!({
                        "w": w,
                        "total_cost": run.total_cost,
                        "terminal_cost": run.terminal_cost,
                        "iterations": run.n_iterations,
                        "termination": run.termination,
                    })
                })
                .collect();
            json!({ "runs": table })
        }
        Command::Taylor { fd, .. } => {
            let eps = default_epsilons(cfg.taylor_points);
            let adj = taylor_adjoint(&problem, u0.values(), cfg.seed, &eps)?;
            let fd_rep = if *fd {
                let g = fd_gradient(&problem, u0.values())?;
                Some(taylor_residual(&problem, u0.values(), &g, cfg.seed, &eps)?)
            } else {
                None
            };
            let mut header = vec!["eps", "residual"];
            if fd_rep.is_some() {
                header.push("residual_fd");
            }
            let rows = (0..eps.len()).map(|i| {
                let mut row = vec![num(eps[i]), num(adj.residuals[i])];
                if let Some(r) = &fd_rep {
                    row.push(num(r.residuals[i]));
                }
                row
            });
            write_csv(&dir.join("taylor.csv"), &header, rows)?;
            json!({
                "dt": problem.time.dt(),
                "seed": cfg.seed,
                "plateau": adj.plateau,
                "plateau_fd": fd_rep.as_ref().map(|r| r.plateau),
            })
        }
        Command::Mismatch(_) => {
            let rep = gradient_mismatch(&problem, u0.values())?;
            let rows = (0..rep.discrete.len()).map(|k| {
                vec![
                    num(problem.time.node(k)),
                    num(rep.continuous[k]),
                    num(rep.discrete[k]),
                ]
            });
            write_csv(&dir.join("mismatch.csv"), &["t", "adjoint", "fd"], rows)?;
            json!({ "dt": problem.time.dt(), "rho": rep.rho })
        }
        Command::Truncation { .. } => {
            let study = truncation_study(&problem, &cfg.levels, &u0, &cfg.optimizer())?;
            let rows = study.rows.iter().map(|r| {
                vec![
                    num(r.level),
                    num(r.optimal_cost),
                    num(r.terminal_cost),
                    r.iterations.to_string(),
                    num(r.gap),
                ]
            });
            write_csv(
                &dir.join("truncation.csv"),
                &["level", "optimal_cost", "terminal_cost", "iterations", "gap"],
                rows,
            )?;
            serde_json::to_value(&study).expect("study serialises")
        }
        Command::Lipschitz { .. } => {
            let rep = lipschitz_probe(&problem, cfg.pairs, cfg.seed)?;
            serde_json::to_value(&rep).expect("report serialises")
        }
    };

    write_json(
        &dir.join("summary.json"),
        &json!({
            "command": cmd.name(),
            "config": config_json,
            "results": results,
        }),
    )?;
    Ok(dir)
}

/// Parses `argv`, runs the command and returns the process exit status.
/// Failures are reported on stderr as a one-line JSON object.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(dir) => {
            println!("{}", json!({ "status": "ok", "output_dir": dir }));
            0
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "status": "error", "kind": e.kind(), "message": e.to_string() })
            );
            1
        }
    }
}
