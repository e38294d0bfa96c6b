//! Semi-implicit quasilinear time stepping of the coupled system.
//!
//! One step freezes the operator at `w_n`, advances the body explicitly,
//! moves the chart, then solves `(I + dt A(w_n)) v = v_n + dt F(w_n)` for the
//! field unknowns with the new body velocities fixed in the trace rows.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::{body_momentum_update, BodyParams, BodyState};
use crate::chart::{ChartError, ChartState, CutoffSpec, Kinematics, RigidMotionField};
use crate::grid::{
    assemble_operator, assemble_rhs, ice_force_torque, implicit_rhs, implicit_system, AnnulusGrid, AssemblyError,
    Layout, LinearSolver, SolverError, SolverKind,
};
use crate::rheology::RheologyParams;
use crate::state::IceState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    pub dt_min: f64,
    pub jacobian_floor: f64,
    pub solver: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_end: 1.0,
            dt_min: 1e-6,
            jacobian_floor: 0.2,
            solver: SolverKind::Auto,
            tolerance: 1e-10,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepConfigError {
    #[error("need 0 < dt_min <= dt, got dt = {dt}, dt_min = {dt_min}")]
    TimeStep { dt: f64, dt_min: f64 },
    #[error("solver tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("t_end must be finite and nonnegative, got {0}")]
    Horizon(f64),
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), StepConfigError> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt && self.dt.is_finite()) {
            return Err(StepConfigError::TimeStep { dt: self.dt, dt_min: self.dt_min });
        }
        if !(self.tolerance > 0.0) {
            return Err(StepConfigError::Tolerance(self.tolerance));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(StepConfigError::Horizon(self.t_end));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Thickness,
    Compactness,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub node: usize,
    pub quantity: Quantity,
    pub value: f64,
}

/// Nodes leaving the admissible set, worst first.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{count} node(s) outside the admissible set; worst: {}", describe(.worst))]
pub struct AdmissibilityReport {
    pub count: usize,
    pub worst: Vec<Violation>,
}

fn describe(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("{:?} = {:.6} at node {}", v.quantity, v.value, v.node))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `h > kappa` and `alpha < a < 1 - alpha` at every node.
pub fn admissibility_check(ice: &IceState, params: &RheologyParams) -> Result<(), AdmissibilityReport> {
    let mut bad: Vec<(f64, Violation)> = Vec::new();
    for (node, (&h, &a)) in ice.h.iter().zip(&ice.a).enumerate() {
        if !(h > params.kappa) {
            let excess = if h.is_finite() { params.kappa - h } else { f64::INFINITY };
            bad.push((excess, Violation { node, quantity: Quantity::Thickness, value: h }));
        }
        if !(a > params.alpha && a < 1.0 - params.alpha) {
            let excess = if a.is_finite() { (params.alpha - a).max(a - 1.0 + params.alpha) } else { f64::INFINITY };
            bad.push((excess, Violation { node, quantity: Quantity::Compactness, value: a }));
        }
    }
    if bad.is_empty() {
        return Ok(());
    }
    bad.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.node.cmp(&y.1.node)));
    Err(AdmissibilityReport { count: bad.len(), worst: bad.into_iter().take(5).map(|(_, v)| v).collect() })
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("exponents (p, q) = ({p}, {q}) violate 2/p + 3/q < 1")]
pub struct ExponentError {
    pub p: f64,
    pub q: f64,
}

pub fn exponent_check(p: f64, q: f64) -> Result<(), ExponentError> {
    if p > 1.0 && q > 1.0 && 2.0 / p + 3.0 / q < 1.0 {
        Ok(())
    } else {
        Err(ExponentError { p, q })
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("time step {dt:e} fell below dt_min = {dt_min:e} after solver failure: {source}")]
    DtUnderflow { dt: f64, dt_min: f64, source: SolverError },
    #[error("state left the admissible set at t = {t}: {report}")]
    Admissibility { t: f64, report: AdmissibilityReport },
}

/// How the rigid body moves during a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyMode {
    /// Momentum balances with ice force and torque; the chart follows.
    Free,
    /// `(xi, Omega, Q, x_c)` held fixed and the chart kept at the identity.
    Frozen,
}

/// Additional right-hand side contributions, e.g. manufactured forcing.
pub trait SourceTerms {
    /// Adds to `f` (laid out as the coupled unknown vector) at time `t`;
    /// only evolution rows are read back.
    fn add(&self, t: f64, grid: &AnnulusGrid, f: &mut [f64]);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub dt: f64,
    pub ice: IceState,
    pub body: BodyState,
    pub chart: ChartState,
}

/// One trajectory line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x_c: Vector2<f64>,
    pub eta: Vector2<f64>,
    pub omega: f64,
    pub xi: Vector2<f64>,
    pub big_omega: f64,
    pub force: Vector2<f64>,
    pub torque: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub halvings: u32,
    pub backward_error: f64,
}

pub struct Simulation<'a> {
    pub grid: &'a AnnulusGrid,
    pub params: RheologyParams,
    pub body_params: BodyParams,
    pub cutoff: CutoffSpec,
    pub config: StepConfig,
    pub mode: BodyMode,
    pub sources: Option<Box<dyn SourceTerms + 'a>>,
    solver: LinearSolver,
}

impl<'a> Simulation<'a> {
    pub fn new(
        grid: &'a AnnulusGrid,
        params: RheologyParams,
        body_params: BodyParams,
        cutoff: CutoffSpec,
        config: StepConfig,
        mode: BodyMode,
    ) -> Self {
        let solver = LinearSolver::new(config.solver, config.tolerance, config.max_iterations);
        Self { grid, params, body_params, cutoff, config, mode, sources: None, solver }
    }

    pub fn with_sources(mut self, s: Box<dyn SourceTerms + 'a>) -> Self {
        self.sources = Some(s);
        self
    }

    pub fn initial_state(&self, ice: IceState, body: BodyState) -> SimState {
        let chart = match self.mode {
            BodyMode::Free => {
                let field = RigidMotionField::steady(Kinematics::of(&body), self.cutoff, self.grid.r_outer());
                ChartState::initial(self.grid, &field)
            }
            BodyMode::Frozen => ChartState::identity(self.grid),
        };
        SimState { t: 0.0, step: 0, dt: self.config.dt, ice, body, chart }
    }

    pub fn trajectory_row(&self, s: &SimState) -> Result<TrajectoryRow, AssemblyError> {
        let (force, torque) = ice_force_torque(&s.chart, &s.ice, &s.body, &self.params, self.grid)?;
        Ok(TrajectoryRow {
            t: s.t,
            x_c: s.body.x_c,
            eta: s.body.eta(),
            omega: s.body.omega(),
            xi: s.body.xi,
            big_omega: s.body.big_omega,
            force,
            torque,
        })
    }

    /// Advances by at most `dt_cap` (the state's current `dt` otherwise);
    /// halves `dt` on solver failure and keeps the reduced value.
    pub fn step(&mut self, s: &SimState, dt_cap: Option<f64>) -> Result<(SimState, StepReport), StepError> {
        let mut dt = dt_cap.map_or(s.dt, |c| c.min(s.dt));
        let mut halvings = 0;
        loop {
            match self.try_step(s, dt)? {
                Ok((next, backward_error)) => {
                    let keep_dt = if halvings > 0 { dt } else { s.dt };
                    let next = SimState { dt: keep_dt, ..next };
                    return Ok((next, StepReport { dt, halvings, backward_error }));
                }
                Err(e) => {
                    dt *= 0.5;
                    halvings += 1;
                    if dt < self.config.dt_min {
                        return Err(StepError::DtUnderflow { dt, dt_min: self.config.dt_min, source: e });
                    }
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn try_step(&mut self, s: &SimState, dt: f64) -> Result<Result<(SimState, f64), SolverError>, StepError> {
        let grid = self.grid;
        let t = s.t;
        let (body_next, chart_next) = match self.mode {
            BodyMode::Free => {
                let (force, torque) = ice_force_torque(&s.chart, &s.ice, &s.body, &self.params, grid)?;
                let body_next = body_momentum_update(&s.body, &force, torque, &self.body_params, t, dt);
                let field = RigidMotionField::between(&s.body, &body_next, t, dt, self.cutoff, grid.r_outer());
                let chart_next = s.chart.advance(&field, dt, grid, self.config.jacobian_floor)?;
                (body_next, chart_next)
            }
            BodyMode::Frozen => {
                let mut c = s.chart.clone();
                c.t = t + dt;
                (s.body.clone(), c)
            }
        };

        let sys = assemble_operator(&s.chart, &s.ice, &body_next, &self.params, grid)?;
        let mut f = assemble_rhs(t, &s.chart, &s.ice, &s.body, &self.params, &self.body_params, grid)?;
        if let Some(src) = &self.sources {
            src.add(t + dt, grid, &mut f);
        }
        let layout = Layout::new(grid.len());
        let v_n = layout.pack(&s.ice, &s.body.xi, s.body.big_omega);
        let m = implicit_system(&sys, dt);
        let mut b = implicit_rhs(&sys, dt, &v_n, &f);
        b[layout.xi(0)] = body_next.xi.x;
        b[layout.xi(1)] = body_next.xi.y;
        b[layout.omega()] = body_next.big_omega;

        let report = match self.solver.solve(&m, &b) {
            Ok(r) => r,
            Err(e) => return Ok(Err(e)),
        };
        let (ice, _, _) = layout.unpack(&report.x);
        if let Err(report) = admissibility_check(&ice, &self.params) {
            return Err(StepError::Admissibility { t: t + dt, report });
        }
        let next = SimState { t: t + dt, step: s.step + 1, dt, ice, body: body_next, chart: chart_next };
        Ok(Ok((next, report.backward_error)))
    }

    /// Steps until `t_end`, calling `observe` after every accepted step.
    pub fn run<E>(
        &mut self,
        mut s: SimState,
        t_end: f64,
        mut observe: impl FnMut(&Self, &SimState, &StepReport) -> Result<(), E>,
    ) -> Result<SimState, RunError<E>> {
        while t_end - s.t > 1e-12 * t_end.abs().max(1.0) {
            let (next, report) = self.step(&s, Some(t_end - s.t)).map_err(RunError::Step)?;
            s = next;
            observe(self, &s, &report).map_err(RunError::Observer)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Error)]
pub enum RunError<E> {
    #[error(transparent)]
    Step(StepError),
    #[error("output failed: {0}")]
    Observer(E),
}
