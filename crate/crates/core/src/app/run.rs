//! Orchestration of a configured simulation and of the demo subcommands.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;

use super::config::{HypothesisError, RunConfig};
use super::io::{read_checkpoint, write_checkpoint, write_snapshot, write_vtk, Field, IoError, TrajectoryWriter};
use super::AppError;
use crate::chart::{ChartState, CutoffSpec, Kinematics, RigidMotionField};
use crate::grid::AnnulusGrid;
use crate::stepper::{RunError, SimState, Simulation};

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: u64,
    pub final_state: SimState,
    pub trajectory: PathBuf,
}

fn create_dir(dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::File { path: dir.display().to_string(), source })
}

fn snapshot_path(out: &Path, step: u64) -> PathBuf {
    out.join(format!("snapshot_{step:06}.vtk"))
}

/// Checks the hypotheses, then steps to `step.t_end`, writing
/// `trajectory.csv`, snapshots and checkpoints into `out`. A restart starts
/// from the checkpoint and writes the trajectory from its time on.
pub fn run_simulation(cfg: &RunConfig, out: &Path, restart: Option<&Path>) -> Result<RunSummary, AppError> {
    let grid = cfg.grid();
    let ice0 = cfg.initial_ice(&grid);
    cfg.check_hypotheses(&grid, &ice0)?;
    let hash = cfg.hash();
    create_dir(out)?;
    let body_params = cfg.body_params()?;
    let mut sim = Simulation::new(&grid, cfg.rheology.clone(), body_params, cfg.cutoff(), cfg.step.clone(), cfg.body.mode);
    let s0 = match restart {
        Some(path) => read_checkpoint(path, &hash)?,
        None => sim.initial_state(ice0, cfg.initial_body()),
    };
    let first_step = s0.step;

    let trajectory = out.join("trajectory.csv");
    let mut traj = TrajectoryWriter::create(&trajectory)?;
    traj.push(&sim.trajectory_row(&s0).map_err(crate::stepper::StepError::from)?)?;
    if restart.is_none() {
        write_snapshot(&snapshot_path(out, 0), &grid, &s0)?;
    }
    let (snap, ckpt) = (cfg.output.snapshot_every, cfg.output.checkpoint_every);
    let end = sim.run(s0, cfg.step.t_end, |sim, s, _| -> Result<(), AppError> {
        let row = sim.trajectory_row(s).map_err(crate::stepper::StepError::from)?;
        traj.push(&row)?;
        if snap > 0 && s.step % snap == 0 {
            write_snapshot(&snapshot_path(out, s.step), sim.grid, s)?;
        }
        if ckpt > 0 && s.step % ckpt == 0 {
            write_checkpoint(&out.join(format!("checkpoint_{:06}.json", s.step)), &hash, s)?;
        }
        Ok(())
    });
    let end = match end {
        Ok(s) => s,
        Err(RunError::Step(e)) => return Err(e.into()),
        Err(RunError::Observer(e)) => return Err(e),
    };
    traj.finish()?;
    if end.step != first_step && (snap == 0 || end.step % snap != 0) {
        write_snapshot(&snapshot_path(out, end.step), &grid, &end)?;
    }
    write_checkpoint(&out.join("checkpoint_final.json"), &hash, &end)?;
    Ok(RunSummary { steps: end.step - first_step, final_state: end, trajectory })
}

/// Maps check on the reference annulus for demos.
pub fn transform_fields(grid: &AnnulusGrid, chart: &ChartState, path: &Path) -> Result<(), IoError> {
    let det = chart.det_jz();
    let (g11, g12, g22): (Vec<f64>, Vec<f64>, Vec<f64>) =
        chart.g.iter().map(|g| (g[(0, 0)], g[(0, 1)], g[(1, 1)])).fold((vec![], vec![], vec![]), |mut acc, v| {
            acc.0.push(v.0);
            acc.1.push(v.1);
            acc.2.push(v.2);
            acc
        });
    let title = format!("chart t={:e}", chart.t);
    write_vtk(
        path,
        grid,
        &title,
        grid.positions(),
        &[
            ("Z", Field::Vector(&chart.z)),
            ("Y", Field::Vector(&chart.y)),
            ("det_jz", Field::Scalar(&det)),
            ("g11", Field::Scalar(&g11)),
            ("g12", Field::Scalar(&g12)),
            ("g22", Field::Scalar(&g22)),
        ],
    )
}

#[derive(Clone, Debug)]
pub struct TransformDemo {
    pub kinematics: Kinematics,
    pub cutoff: CutoffSpec,
    pub dt: f64,
    pub t_end: f64,
    pub every: usize,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformDemoRow {
    pub t: f64,
    pub det_min: f64,
    pub round_trip: f64,
    pub jacobian_product: f64,
}

/// Evolves the chart of a body in steady rigid motion and writes the maps
/// every `every` steps.
pub fn transform_demo(grid: &AnnulusGrid, demo: &TransformDemo, out: &Path) -> Result<Vec<TransformDemoRow>, AppError> {
    create_dir(out)?;
    // The body centre advances with eta so the motion stays rigid in the plateau.
    let start = demo.kinematics;
    let end = Kinematics { x_c: start.x_c + start.eta * demo.t_end, ..start };
    let field = RigidMotionField { start, end, t0: 0.0, dt: demo.t_end, cutoff: demo.cutoff, r_outer: grid.r_outer() };
    let mut chart = ChartState::initial(grid, &field);
    let n = (demo.t_end / demo.dt).round() as usize;
    let mut rows = Vec::new();
    for k in 0..=n {
        if k % demo.every.max(1) == 0 || k == n {
            transform_fields(grid, &chart, &out.join(format!("transform_{k:06}.vtk")))?;
            rows.push(TransformDemoRow {
                t: chart.t,
                det_min: chart.det_jz_min,
                round_trip: chart.round_trip_residual(grid),
                jacobian_product: chart.jacobian_product_residual(grid),
            });
        }
        if k < n {
            chart = chart.advance(&field, demo.dt, grid, demo.floor).map_err(crate::stepper::StepError::from)?;
        }
    }
    Ok(rows)
}

impl Default for TransformDemo {
    fn default() -> Self {
        Self {
            kinematics: Kinematics { x_c: Vector2::zeros(), eta: Vector2::zeros(), omega: 1.0 },
            cutoff: CutoffSpec::new(0.5),
            dt: 0.01,
            t_end: 0.5,
            every: 10,
            floor: 0.2,
        }
    }
}

impl From<HypothesisError> for AppError {
    fn from(e: HypothesisError) -> Self {
        AppError::Hypothesis(e)
    }
}
