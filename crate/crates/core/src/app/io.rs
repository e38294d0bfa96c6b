//! VTK snapshots, trajectory CSV and JSON checkpoints.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::AnnulusGrid;
use crate::stepper::{SimState, TrajectoryRow};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: malformed checkpoint: {source}")]
    Decode { path: String, source: serde_json::Error },
    #[error("checkpoint format version {found}, expected {CHECKPOINT_VERSION}")]
    Version { found: u32 },
    #[error("checkpoint was written for config {found}, current config is {expected}")]
    ConfigMismatch { found: String, expected: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

pub enum Field<'a> {
    Scalar(&'a [f64]),
    Vector(&'a [Vector2<f64>]),
}

/// Legacy ASCII structured grid over `points`, one point per node with the
/// seam column repeated so the annulus closes.
pub fn vtk_string(grid: &AnnulusGrid, title: &str, points: &[Vector2<f64>], fields: &[(&str, Field)]) -> String {
    let (n_r, n_t) = (grid.n_r(), grid.n_theta());
    let order: Vec<usize> = (0..n_r).flat_map(|i| (0..=n_t).map(move |j| grid.node(i, j % n_t))).collect();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {} {} 1\nPOINTS {} double", n_t + 1, n_r, order.len());
    for &p in &order {
        let _ = writeln!(s, "{:e} {:e} 0", points[p].x, points[p].y);
    }
    let _ = writeln!(s, "POINT_DATA {}", order.len());
    for (name, field) in fields {
        match field {
            Field::Scalar(v) => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for &p in &order {
                    let _ = writeln!(s, "{:e}", v[p]);
                }
            }
            Field::Vector(v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for &p in &order {
                    let _ = writeln!(s, "{:e} {:e} 0", v[p].x, v[p].y);
                }
            }
        }
    }
    s
}

pub fn write_vtk(path: &Path, grid: &AnnulusGrid, title: &str, points: &[Vector2<f64>], fields: &[(&str, Field)]) -> Result<(), IoError> {
    std::fs::write(path, vtk_string(grid, title, points, fields)).map_err(file_err(path))
}

/// Ice fields drawn on the physical domain `Z(t, y)`.
pub fn write_snapshot(path: &Path, grid: &AnnulusGrid, s: &SimState) -> Result<(), IoError> {
    let det = s.chart.det_jz();
    let title = format!("ice t={:e}", s.t);
    write_vtk(
        path,
        grid,
        &title,
        &s.chart.z,
        &[
            ("u", Field::Vector(&s.ice.u)),
            ("h", Field::Scalar(&s.ice.h)),
            ("a", Field::Scalar(&s.ice.a)),
            ("det_jz", Field::Scalar(&det)),
            ("reference", Field::Vector(grid.positions())),
        ],
    )
}

pub const TRAJECTORY_HEADER: &str = "t,xc_x,xc_y,eta_x,eta_y,omega,xi_x,xi_y,Omega,force_x,force_y,torque";

/// One CSV line; shortest round-trip formatting keeps reruns comparable
/// byte for byte.
pub fn trajectory_line(r: &TrajectoryRow) -> String {
    let v = [r.t, r.x_c.x, r.x_c.y, r.eta.x, r.eta.y, r.omega, r.xi.x, r.xi.y, r.big_omega, r.force.x, r.force.y, r.torque];
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

pub struct TrajectoryWriter {
    out: BufWriter<File>,
    path: String,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let mut out = BufWriter::new(File::create(path).map_err(file_err(path))?);
        writeln!(out, "{TRAJECTORY_HEADER}").map_err(file_err(path))?;
        Ok(Self { out, path: path.display().to_string() })
    }

    pub fn push(&mut self, r: &TrajectoryRow) -> Result<(), IoError> {
        writeln!(self.out, "{}", trajectory_line(r)).map_err(|source| IoError::File { path: self.path.clone(), source })
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        self.out.flush().map_err(|source| IoError::File { path: self.path.clone(), source })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub state: SimState,
}

pub fn write_checkpoint(path: &Path, config_hash: &str, state: &SimState) -> Result<(), IoError> {
    let c = Checkpoint { format_version: CHECKPOINT_VERSION, config_hash: config_hash.to_owned(), state: state.clone() };
    let f = BufWriter::new(File::create(path).map_err(file_err(path))?);
    serde_json::to_writer(f, &c).map_err(|source| IoError::Decode { path: path.display().to_string(), source })
}

/// Loads a checkpoint and refuses it unless it was written for `config_hash`.
pub fn read_checkpoint(path: &Path, config_hash: &str) -> Result<SimState, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    let c: Checkpoint =
        serde_json::from_str(&text).map_err(|source| IoError::Decode { path: path.display().to_string(), source })?;
    if c.format_version != CHECKPOINT_VERSION {
        return Err(IoError::Version { found: c.format_version });
    }
    if c.config_hash != config_hash {
        return Err(IoError::ConfigMismatch { found: c.config_hash, expected: config_hash.to_owned() });
    }
    Ok(c.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::BodyState;
    use crate::chart::ChartState;
    use crate::grid::build_grid;
    use crate::state::IceState;

    #[test]
    fn constant_snapshot_has_constant_arrays() {
        let g = build_grid(0.5, 2.0, 8, 16).unwrap();
        let h = vec![1.25; g.len()];
        let s = vtk_string(&g, "c", g.positions(), &[("h", Field::Scalar(&h))]);
        let data: Vec<&str> = s.lines().skip_while(|l| !l.starts_with("LOOKUP_TABLE")).skip(1).collect();
        assert_eq!(data.len(), 8 * 17);
        assert!(data.iter().all(|l| *l == "1.25e0"));
        assert!(s.contains("DIMENSIONS 17 8 1"));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let g = build_grid(0.5, 2.0, 8, 16).unwrap();
        let mut ice = IceState::uniform(g.len(), 1.0, 0.8);
        ice.h[3] = 1.0 / 3.0;
        ice.u[5] = Vector2::new(0.1f64.sin(), std::f64::consts::PI);
        let s = SimState { t: 0.1, step: 3, dt: 0.01, ice, body: BodyState::initial(Vector2::new(0.3, 0.1), 0.7), chart: ChartState::identity(&g) };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        write_checkpoint(&p, "abc", &s).unwrap();
        assert_eq!(read_checkpoint(&p, "abc").unwrap(), s);
        assert!(matches!(read_checkpoint(&p, "abd"), Err(IoError::ConfigMismatch { .. })));
    }
}
