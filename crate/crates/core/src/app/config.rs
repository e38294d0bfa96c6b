//! Run configuration in TOML.
//!
//! ```toml
//! [geometry]
//! r_b = 0.5
//! r_o = 2.0
//! d = 0.5
//! n_r = 17
//! n_theta = 32
//!
//! [body]
//! rho_b = 1.0
//!
//! [initial]
//! h0 = 1.0
//! a0 = 0.8
//! eta0 = [0.1, 0.0]
//! omega0 = 0.2
//! ```
//!
//! `[rheology]`, `[step]`, `[output]` and `[exponents]` are optional and
//! default key by key.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::body::{BodyParams, BodyState, Signal};
use crate::chart::{cutoff_chi, CutoffProfile, CutoffSpec};
use crate::grid::{build_grid, AnnulusGrid};
use crate::rheology::RheologyParams;
use crate::state::IceState;
use crate::stepper::{admissibility_check, exponent_check, AdmissibilityReport, BodyMode, StepConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub r_b: f64,
    pub r_o: f64,
    /// Width of the cutoff transition zone.
    pub d: f64,
    pub n_r: usize,
    pub n_theta: usize,
    #[serde(default = "default_profile")]
    pub cutoff: CutoffProfile,
}

fn default_profile() -> CutoffProfile {
    CutoffProfile::QuinticRamp
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub rho_b: f64,
    #[serde(default = "zero_force")]
    pub force: Signal<[f64; 2]>,
    #[serde(default = "zero_torque")]
    pub torque: Signal<f64>,
    #[serde(default = "free_mode")]
    pub mode: BodyMode,
}

fn zero_force() -> Signal<[f64; 2]> {
    Signal::Constant { value: [0.0, 0.0] }
}

fn zero_torque() -> Signal<f64> {
    Signal::Constant { value: 0.0 }
}

fn free_mode() -> BodyMode {
    BodyMode::Free
}

/// Initial ice velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityProfile {
    /// Rigid body velocity blended to zero by the cutoff.
    Blended,
    /// The same vector at every node.
    Uniform { value: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub h0: f64,
    pub a0: f64,
    /// `h = h0 (1 + h_amp cos(theta))`.
    #[serde(default)]
    pub h_amp: f64,
    #[serde(default)]
    pub eta0: [f64; 2],
    #[serde(default)]
    pub omega0: f64,
    #[serde(default = "blended")]
    pub velocity: VelocityProfile,
}

fn blended() -> VelocityProfile {
    VelocityProfile::Blended
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Steps between VTK snapshots; 0 writes only the initial and final ones.
    pub snapshot_every: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { snapshot_every: 0, checkpoint_every: 0 }
    }
}

/// Integrability exponents `(p, q)` of the data, checked against
/// `2/p + 3/q < 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Self { p: 4.0, q: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    #[serde(default)]
    pub rheology: RheologyParams,
    pub body: BodyConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub exponents: Exponents,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("R_O - R_B = {gap} must exceed the cutoff width d = {d}")]
    BodyTooClose { gap: f64, d: f64 },
    #[error(transparent)]
    Exponents(#[from] crate::stepper::ExponentError),
    #[error("initial data not admissible: {0}")]
    Admissibility(#[from] AdmissibilityReport),
    #[error("initial velocity violates the {ring} condition at node {node} (mismatch {mismatch:e})")]
    Compatibility { ring: &'static str, node: usize, mismatch: f64 },
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Value checks that do not involve the model hypotheses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        build_grid(g.r_b, g.r_o, g.n_r, g.n_theta)
            .map_err(|e| ConfigError::Invalid { key: "geometry", reason: e.to_string() })?;
        if !(g.d > 0.0 && g.d.is_finite()) {
            return Err(ConfigError::Invalid { key: "geometry.d", reason: format!("must be positive, got {}", g.d) });
        }
        self.rheology.validate().map_err(|e| ConfigError::Invalid { key: "rheology", reason: e.to_string() })?;
        self.step.validate().map_err(|e| ConfigError::Invalid { key: "step", reason: e.to_string() })?;
        self.body_params()?;
        if !self.body.force.is_valid() || !self.body.torque.is_valid() {
            return Err(ConfigError::Invalid { key: "body.force", reason: "tables need increasing times".into() });
        }
        let i = &self.initial;
        let finite = [i.h0, i.a0, i.h_amp, i.eta0[0], i.eta0[1], i.omega0].iter().all(|v| v.is_finite());
        if !finite {
            return Err(ConfigError::Invalid { key: "initial", reason: "values must be finite".into() });
        }
        Ok(())
    }

    pub fn grid(&self) -> AnnulusGrid {
        let g = &self.geometry;
        build_grid(g.r_b, g.r_o, g.n_r, g.n_theta).expect("validated geometry")
    }

    pub fn cutoff(&self) -> CutoffSpec {
        CutoffSpec { d: self.geometry.d, profile: self.geometry.cutoff }
    }

    pub fn body_params(&self) -> Result<BodyParams, ConfigError> {
        let mut p = BodyParams::disk(self.body.rho_b, self.geometry.r_b)
            .map_err(|e| ConfigError::Invalid { key: "body.rho_b", reason: e.to_string() })?;
        p.force = self.body.force.clone();
        p.torque = self.body.torque.clone();
        Ok(p)
    }

    pub fn initial_body(&self) -> BodyState {
        let i = &self.initial;
        BodyState::initial(Vector2::new(i.eta0[0], i.eta0[1]), i.omega0)
    }

    pub fn initial_ice(&self, grid: &AnnulusGrid) -> IceState {
        let i = &self.initial;
        let body = self.initial_body();
        let cutoff = self.cutoff();
        let mut ice = IceState::uniform(grid.len(), i.h0, i.a0);
        for (p, x) in grid.positions().iter().enumerate() {
            ice.h[p] = i.h0 * (1.0 + i.h_amp * grid.theta(grid.ij(p).1).cos());
            ice.u[p] = match &i.velocity {
                VelocityProfile::Blended => {
                    if grid.is_interior(p) || grid.inner_ring().contains(&p) {
                        body.boundary_velocity(x) * cutoff_chi(x, &cutoff, grid.r_outer())
                    } else {
                        Vector2::zeros()
                    }
                }
                VelocityProfile::Uniform { value } => Vector2::new(value[0], value[1]),
            };
        }
        ice
    }

    /// Well-posedness hypotheses on the geometry and the initial data.
    pub fn check_hypotheses(&self, grid: &AnnulusGrid, ice: &IceState) -> Result<(), HypothesisError> {
        let gap = self.geometry.r_o - self.geometry.r_b;
        if !(gap > self.geometry.d) {
            return Err(HypothesisError::BodyTooClose { gap, d: self.geometry.d });
        }
        exponent_check(self.exponents.p, self.exponents.q)?;
        admissibility_check(ice, &self.rheology)?;
        let body = self.initial_body();
        let tol = 1e-12;
        for p in grid.inner_ring() {
            let mismatch = (ice.u[p] - body.boundary_velocity(&grid.position(p))).norm();
            if mismatch > tol * (1.0 + ice.u[p].norm()) {
                return Err(HypothesisError::Compatibility { ring: "body-ring", node: p, mismatch });
            }
        }
        for p in grid.outer_ring() {
            let mismatch = ice.u[p].norm();
            if mismatch > tol {
                return Err(HypothesisError::Compatibility { ring: "outer-ring", node: p, mismatch });
            }
        }
        Ok(())
    }

    /// SHA-256 of everything that determines the trajectory; output cadence
    /// and the horizon are excluded so a restart may extend a run.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        c.step.t_end = 0.0;
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn example() -> Self {
        parse_config(EXAMPLE).expect("example config is valid")
    }
}

/// A small configuration with a drifting, spinning body.
pub const EXAMPLE: &str = r#"[geometry]
r_b = 0.5
r_o = 2.0
d = 0.5
n_r = 17
n_theta = 32

[rheology]
delta = 1e-2
p_star = 1.0
c_pressure = 2.0
rho_ice = 1.0
d_h = 0.05
d_a = 0.05

[body]
rho_b = 1.0

[initial]
h0 = 1.0
a0 = 0.8
h_amp = 0.1
eta0 = [0.05, 0.0]
omega0 = 0.2

[step]
dt = 0.01
t_end = 0.2
"#;
