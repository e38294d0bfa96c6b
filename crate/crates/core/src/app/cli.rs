use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;

use super::config::load_config;
use super::run::{run_simulation, transform_demo, TransformDemo};
use super::verify::all_suites;
use super::{AppError, EXIT_OK};
use crate::chart::{CutoffSpec, Kinematics};
use crate::declab::{similarity_check, DecoupleConfig};
use crate::grid::{build_grid, SolverKind};
use crate::mms::{spatial_study, temporal_study, ConvergenceRow};

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  failed verification or output error
  2  configuration error
  3  hypothesis or admissibility violation
  4  numerical abort (dt below dt_min, Jacobian floor, solver failure)";

#[derive(Debug, Parser)]
#[command(name = "seaice-body", version, about = "Viscous-plastic sea ice around a rigid disk", after_help = EXIT_CODES)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Single-threaded linear algebra for bit-reproducible output.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured run.
    Run {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Run the invariant suites.
    Verify,
    /// Check the decoupling similarity on a frozen state.
    DecoupleCheck(DecoupleArgs),
    /// Evolve the flow map for a rigid motion and write it as VTK.
    TransformDemo(DemoArgs),
    /// Manufactured-solution convergence study with the body frozen.
    Mms(MmsArgs),
}

#[derive(Debug, Args)]
pub struct DecoupleArgs {
    #[arg(long, default_value_t = 17)]
    pub n_r: usize,
    #[arg(long, default_value_t = 32)]
    pub n_theta: usize,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Use BiCGSTAB instead of the direct solver.
    #[arg(long)]
    pub iterative: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 33)]
    pub n_r: usize,
    #[arg(long, default_value_t = 64)]
    pub n_theta: usize,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta_x: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta_y: f64,
    #[arg(long, default_value_t = 0.5)]
    pub d: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Steps between written frames.
    #[arg(long, default_value_t = 10)]
    pub every: usize,
}

#[derive(Debug, Args)]
pub struct MmsArgs {
    /// Number of spatial levels, starting at 16x32 cells.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Number of time steps sizes in the temporal study.
    #[arg(long, default_value_t = 4)]
    pub dt_levels: usize,
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn print_rows(title: &str, rows: &[ConvergenceRow]) -> String {
    let mut s = format!("{title}\n{:<14} {:>12} {:>12} {:>12} {:>8}\n", "level", "err_u", "err_h", "err_a", "order");
    for r in rows {
        let order = r.order.map_or("-".to_string(), |o| format!("{o:.3}"));
        s += &format!("{:<14} {:>12.4e} {:>12.4e} {:>12.4e} {:>8}\n", r.label, r.errors.u, r.errors.h, r.errors.a, order);
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| super::io::IoError::File { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, text).map_err(|source| super::io::IoError::File { path: path.display().to_string(), source }.into())
}

pub fn execute(cli: &Cli) -> Result<(), AppError> {
    if cli.serial {
        faer::set_global_parallelism(faer::Par::Seq);
    }
    match &cli.command {
        Command::Run { restart } => {
            let path = cli.config.as_ref().ok_or_else(|| {
                AppError::Config(super::config::ConfigError::Invalid { key: "--config", reason: "run needs a config file".into() })
            })?;
            let cfg = load_config(path)?;
            let out = out_dir(cli);
            let summary = run_simulation(&cfg, &out, restart.as_deref())?;
            let b = &summary.final_state.body;
            println!(
                "{} steps to t = {:.6}; eta = ({:.6e}, {:.6e}), omega = {:.6e}; trajectory in {}",
                summary.steps,
                summary.final_state.t,
                b.eta().x,
                b.eta().y,
                b.omega(),
                summary.trajectory.display()
            );
        }
        Command::Verify => {
            let suites = all_suites();
            for s in &suites {
                print!("{s}");
            }
            let failed = suites.iter().filter(|s| !s.passed()).count();
            if failed > 0 {
                return Err(AppError::Failed(format!("{failed} of {} suites failed", suites.len())));
            }
            println!("all {} suites passed", suites.len());
        }
        Command::DecoupleCheck(a) => {
            let cfg = DecoupleConfig {
                n_r: a.n_r,
                n_theta: a.n_theta,
                samples: a.samples,
                seed: a.seed,
                solver: if a.iterative { SolverKind::BicgstabJacobi } else { SolverKind::DirectLu },
                tolerance: a.tolerance,
                ..DecoupleConfig::default()
            };
            let report = similarity_check(&cfg)?;
            print!("{report}");
            if let Some(out) = &cli.out {
                write_text(&out.join("decouple.txt"), &report.to_key_values())?;
            }
        }
        Command::TransformDemo(a) => {
            let grid = match &cli.config {
                Some(p) => load_config(p)?.grid(),
                None => build_grid(0.5, 2.0, a.n_r, a.n_theta)
                    .map_err(|e| super::config::ConfigError::Invalid { key: "grid", reason: e.to_string() })?,
            };
            let demo = TransformDemo {
                kinematics: Kinematics { x_c: Vector2::zeros(), eta: Vector2::new(a.eta_x, a.eta_y), omega: a.omega },
                cutoff: CutoffSpec::new(a.d),
                dt: a.dt,
                t_end: a.t_end,
                every: a.every,
                ..TransformDemo::default()
            };
            let rows = transform_demo(&grid, &demo, &out_dir(cli))?;
            println!("{:>10} {:>12} {:>12} {:>12}", "t", "min det J_Z", "Y(Z) - y", "J_Z J_Y - I");
            for r in rows {
                println!("{:>10.4} {:>12.6} {:>12.3e} {:>12.3e}", r.t, r.det_min, r.round_trip, r.jacobian_product);
            }
        }
        Command::Mms(a) => {
            let levels: Vec<(usize, usize)> = (0..a.levels).map(|k| (16 * (1 << k) + 1, 32 * (1 << k))).collect();
            let spatial = spatial_study(&levels)?;
            let temporal = temporal_study(17, 32, 0.1, a.dt_levels.max(2), 0.8)?;
            let text = print_rows("spatial (steady, L2)", &spatial) + "\n" + &print_rows("temporal (self-convergence, L2)", &temporal);
            print!("{text}");
            if let Some(out) = &cli.out {
                write_text(&out.join("mms.txt"), &text)?;
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { super::EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
