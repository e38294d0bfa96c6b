//! Moving-to-fixed domain transform.
//!
//! The flow map `Z(t, .)` pushes the reference annulus onto the current ice
//! domain along a cut-off of the rigid velocity field; `Y(t, .)` is its
//! inverse. `Z` is sampled at the reference nodes `y`, `Y` at the same node
//! positions read as lab points `x`. All operator ingredients (`dY`, second
//! derivatives, metric, `Ydot`) are evaluated at `Z(y)` from the Jacobian of
//! `Z`, using `J_Y(Z(y)) = J_Z(y)^-1`.

mod transformed;

pub use transformed::{
    transformed_hibler, transformed_hibler_at, transformed_laplacian_apply, transformed_lower_order,
    transformed_strain, transformed_strain_gradient, transformed_transport, TransportTerms,
};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::{perp, BodyState};
use crate::grid::{AnnulusGrid, Interpolant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("Jacobian determinant {det:.4} at node {node} fell below the floor {floor}")]
    JacobianFloor { det: f64, node: usize, floor: f64 },
    #[error("flow map produced non-finite values")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffProfile {
    /// Quintic smoothstep between the plateaus at `d/2` and `d`.
    QuinticRamp,
    /// `chi = 1` everywhere; only meaningful for verification runs.
    Unity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub d: f64,
    pub profile: CutoffProfile,
}

impl CutoffSpec {
    pub fn new(d: f64) -> Self {
        Self { d, profile: CutoffProfile::QuinticRamp }
    }

    pub fn unity() -> Self {
        Self { d: 0.0, profile: CutoffProfile::Unity }
    }
}

/// Cut-off `chi(y)` with `dist(y, dO) = R_O - |y|` for the circular outer
/// boundary.
pub fn cutoff_chi(y: &Vector2<f64>, spec: &CutoffSpec, r_outer: f64) -> f64 {
    match spec.profile {
        CutoffProfile::Unity => 1.0,
        CutoffProfile::QuinticRamp => {
            let dist = r_outer - y.norm();
            let s = ((dist - 0.5 * spec.d) / (0.5 * spec.d)).clamp(0.0, 1.0);
            s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
        }
    }
}

/// `b = chi(x - x_c) [omega (x - x_c)^perp + eta]` for a body state.
pub fn velocity_field_b(x: &Vector2<f64>, body: &BodyState, spec: &CutoffSpec, r_outer: f64) -> Vector2<f64> {
    Kinematics::of(body).velocity(x, spec, r_outer)
}

/// Lab-frame rigid kinematics `(x_c, eta, omega)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub x_c: Vector2<f64>,
    pub eta: Vector2<f64>,
    pub omega: f64,
}

impl Kinematics {
    pub fn of(body: &BodyState) -> Self {
        Self { x_c: body.x_c, eta: body.eta(), omega: body.omega() }
    }

    pub fn velocity(&self, x: &Vector2<f64>, spec: &CutoffSpec, r_outer: f64) -> Vector2<f64> {
        let rel = x - self.x_c;
        (perp(&rel) * self.omega + self.eta) * cutoff_chi(&rel, spec, r_outer)
    }
}

pub trait VelocityField: Sync {
    fn velocity(&self, t: f64, x: &Vector2<f64>) -> Vector2<f64>;
}

/// Cut-off rigid velocity with kinematics interpolated linearly over a step.
#[derive(Clone, Copy, Debug)]
pub struct RigidMotionField {
    pub start: Kinematics,
    pub end: Kinematics,
    pub t0: f64,
    pub dt: f64,
    pub cutoff: CutoffSpec,
    pub r_outer: f64,
}

impl RigidMotionField {
    pub fn steady(k: Kinematics, cutoff: CutoffSpec, r_outer: f64) -> Self {
        Self { start: k, end: k, t0: 0.0, dt: 1.0, cutoff, r_outer }
    }

    pub fn between(a: &BodyState, b: &BodyState, t0: f64, dt: f64, cutoff: CutoffSpec, r_outer: f64) -> Self {
        Self { start: Kinematics::of(a), end: Kinematics::of(b), t0, dt, cutoff, r_outer }
    }
}

impl VelocityField for RigidMotionField {
    fn velocity(&self, t: f64, x: &Vector2<f64>) -> Vector2<f64> {
        let s = ((t - self.t0) / self.dt).clamp(0.0, 1.0);
        let k = Kinematics {
            x_c: self.start.x_c + (self.end.x_c - self.start.x_c) * s,
            eta: self.start.eta + (self.end.eta - self.start.eta) * s,
            omega: self.start.omega + (self.end.omega - self.start.omega) * s,
        };
        k.velocity(x, &self.cutoff, self.r_outer)
    }
}

/// Sampled transform and its derived operator ingredients.
///
/// Matrix layouts: `dy[p][(n, j)] = d_j Y_n` at `Z(y_p)`;
/// `ddy[p][m] = d_m dy` (reference derivative of the composite);
/// `d2y[p][k][(i, j)] = d_i d_j Y_k` at `Z(y_p)`; `g[p][(i, j)] = g^{ij}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartState {
    pub t: f64,
    pub z: Vec<Vector2<f64>>,
    pub y: Vec<Vector2<f64>>,
    pub jz: Vec<Matrix2<f64>>,
    pub dy: Vec<Matrix2<f64>>,
    pub ddy: Vec<[Matrix2<f64>; 2]>,
    pub d2y: Vec<[Matrix2<f64>; 2]>,
    pub ydot: Vec<Vector2<f64>>,
    pub g: Vec<Matrix2<f64>>,
    pub lap_y: Vec<Vector2<f64>>,
    /// `J_Y` at the lab nodes from differences of the `Y` samples.
    pub jy_lab: Vec<Matrix2<f64>>,
    pub det_jz_min: f64,
}

/// Jacobians of the four RK4 stage states of `Z`, used to advance `Y`
/// consistently.
pub struct ZStages {
    jz: [Vec<Matrix2<f64>>; 4],
}

impl ChartState {
    /// Identity transform with exact derived quantities.
    pub fn identity(grid: &AnnulusGrid) -> Self {
        let n = grid.len();
        let id = Matrix2::identity();
        Self {
            t: 0.0,
            z: grid.positions().to_vec(),
            y: grid.positions().to_vec(),
            jz: vec![id; n],
            dy: vec![id; n],
            ddy: vec![[Matrix2::zeros(); 2]; n],
            d2y: vec![[Matrix2::zeros(); 2]; n],
            ydot: vec![Vector2::zeros(); n],
            g: vec![id; n],
            lap_y: vec![Vector2::zeros(); n],
            jy_lab: vec![id; n],
            det_jz_min: 1.0,
        }
    }

    /// Identity chart whose `Ydot = -b(t, .)` reflects the initial motion.
    pub fn initial(grid: &AnnulusGrid, field: &dyn VelocityField) -> Self {
        let mut c = Self::identity(grid);
        c.ydot = c.z.iter().map(|x| -field.velocity(0.0, x)).collect();
        c
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Rebuilds every derived quantity from `Z` and `Y` samples.
    pub fn from_samples(
        t: f64,
        z: Vec<Vector2<f64>>,
        y: Vec<Vector2<f64>>,
        field: &dyn VelocityField,
        grid: &AnnulusGrid,
        floor: f64,
    ) -> Result<Self, ChartError> {
        let d = grid.derivatives();
        let jz = d.vector_gradient(&z);
        let det_jz_min = check_floor(&jz, floor)?;
        let dy: Vec<Matrix2<f64>> = jz.iter().map(|j| j.try_inverse().expect("checked determinant")).collect();
        let ddy = d.matrix_gradient(&dy);
        let d2y: Vec<[Matrix2<f64>; 2]> = dy
            .iter()
            .zip(&ddy)
            .map(|(dy, ddy)| {
                let mut out = [Matrix2::zeros(); 2];
                for (n, o) in out.iter_mut().enumerate() {
                    for p in 0..2 {
                        for j in 0..2 {
                            o[(p, j)] = (0..2).map(|m| dy[(m, p)] * ddy[m][(n, j)]).sum();
                        }
                    }
                    *o = (*o + o.transpose()) * 0.5;
                }
                out
            })
            .collect();
        let lap_y = d2y.iter().map(|h| Vector2::new(h[0].trace(), h[1].trace())).collect();
        let g = dy.iter().map(|m| m * m.transpose()).collect();
        let ydot = z.iter().zip(&dy).map(|(x, dy)| -(dy * field.velocity(t, x))).collect();
        let jy_lab = d.vector_gradient(&y);
        if z.iter().chain(&y).any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(ChartError::NonFinite);
        }
        Ok(Self { t, z, y, jz, dy, ddy, d2y, ydot, g, lap_y, jy_lab, det_jz_min })
    }

    /// One coupled RK4 step of `Z` and `Y` followed by a refresh of the
    /// derived quantities at `t + dt`.
    pub fn advance(&self, field: &dyn VelocityField, dt: f64, grid: &AnnulusGrid, floor: f64) -> Result<Self, ChartError> {
        let (z, stages) = evolve_z(self, field, dt, grid, floor)?;
        let y = evolve_y(self, &stages, field, dt, grid)?;
        Self::from_samples(self.t + dt, z, y, field, grid, floor)
    }

    /// Nodes whose image `Z(y)` lies in the sampled lab annulus; `Y` is
    /// only known there.
    fn covered<'a>(&'a self, grid: &'a AnnulusGrid) -> impl Iterator<Item = usize> + 'a {
        (0..self.len()).filter(move |&p| {
            let r = self.z[p].norm();
            r >= grid.r_inner() && r <= grid.r_outer()
        })
    }

    /// `max |Y(Z(y)) - y|` with `Y` interpolated, over nodes whose image
    /// stays in the annulus.
    pub fn round_trip_residual(&self, grid: &AnnulusGrid) -> f64 {
        self.covered(grid)
            .map(|p| (Interpolant::at(grid, &self.z[p]).eval(&self.y) - grid.position(p)).norm())
            .fold(0.0, f64::max)
    }

    /// `max |J_Z(y) J_Y(Z(y)) - I|` with `J_Y` differenced from the `Y`
    /// samples and interpolated, over the same nodes.
    pub fn jacobian_product_residual(&self, grid: &AnnulusGrid) -> f64 {
        self.covered(grid)
            .map(|p| (self.jz[p] * Interpolant::at(grid, &self.z[p]).eval(&self.jy_lab) - Matrix2::identity()).abs().max())
            .fold(0.0, f64::max)
    }

    pub fn det_jz(&self) -> Vec<f64> {
        self.jz.iter().map(|j| j.determinant()).collect()
    }

    /// `(g^{ij}, Delta Y_j)` at every node.
    pub fn metric_and_laplacian(&self) -> (&[Matrix2<f64>], &[Vector2<f64>]) {
        (&self.g, &self.lap_y)
    }
}

fn check_floor(jz: &[Matrix2<f64>], floor: f64) -> Result<f64, ChartError> {
    let mut min = f64::INFINITY;
    for (node, j) in jz.iter().enumerate() {
        let det = j.determinant();
        if !det.is_finite() {
            return Err(ChartError::NonFinite);
        }
        if det < floor {
            return Err(ChartError::JacobianFloor { det, node, floor });
        }
        min = min.min(det);
    }
    Ok(min)
}

/// RK4 step of `dZ/dt = b(t, Z)` at every reference node.
pub fn evolve_z(
    chart: &ChartState,
    field: &dyn VelocityField,
    dt: f64,
    grid: &AnnulusGrid,
    floor: f64,
) -> Result<(Vec<Vector2<f64>>, ZStages), ChartError> {
    let t = chart.t;
    let z0 = &chart.z;
    let eval = |s: f64, z: &[Vector2<f64>]| -> Vec<Vector2<f64>> { z.iter().map(|x| field.velocity(s, x)).collect() };
    let axpy = |a: &[Vector2<f64>], k: &[Vector2<f64>], h: f64| -> Vec<Vector2<f64>> {
        a.iter().zip(k).map(|(a, k)| a + k * h).collect()
    };
    let k1 = eval(t, z0);
    let z2 = axpy(z0, &k1, 0.5 * dt);
    let k2 = eval(t + 0.5 * dt, &z2);
    let z3 = axpy(z0, &k2, 0.5 * dt);
    let k3 = eval(t + 0.5 * dt, &z3);
    let z4 = axpy(z0, &k3, dt);
    let k4 = eval(t + dt, &z4);
    let z: Vec<Vector2<f64>> = (0..z0.len()).map(|p| z0[p] + (k1[p] + k2[p] * 2.0 + k3[p] * 2.0 + k4[p]) * (dt / 6.0)).collect();

    let d = grid.derivatives();
    let jz = [chart.jz.clone(), d.vector_gradient(&z2), d.vector_gradient(&z3), d.vector_gradient(&z4)];
    for j in &jz[1..] {
        check_floor(j, floor)?;
    }
    Ok((z, ZStages { jz }))
}

/// RK4 step of `dY/dt = -J_Z(Y)^-1 b(t, x)` at every lab node `x`, with the
/// stage Jacobians of `Z` interpolated at the stage values of `Y`.
pub fn evolve_y(
    chart: &ChartState,
    stages: &ZStages,
    field: &dyn VelocityField,
    dt: f64,
    grid: &AnnulusGrid,
) -> Result<Vec<Vector2<f64>>, ChartError> {
    let t = chart.t;
    let x = grid.positions();
    let times = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
    let rhs = |stage: usize, y: &[Vector2<f64>]| -> Result<Vec<Vector2<f64>>, ChartError> {
        y.iter()
            .zip(x)
            .map(|(y, x)| {
                let j = Interpolant::at(grid, y).eval(&stages.jz[stage]);
                let inv = j.try_inverse().ok_or(ChartError::NonFinite)?;
                Ok(-(inv * field.velocity(times[stage], x)))
            })
            .collect()
    };
    let y0 = &chart.y;
    let axpy = |k: &[Vector2<f64>], h: f64| -> Vec<Vector2<f64>> { y0.iter().zip(k).map(|(a, k)| a + k * h).collect() };
    let k1 = rhs(0, y0)?;
    let k2 = rhs(1, &axpy(&k1, 0.5 * dt))?;
    let k3 = rhs(2, &axpy(&k2, 0.5 * dt))?;
    let k4 = rhs(3, &axpy(&k3, dt))?;
    Ok((0..y0.len()).map(|p| y0[p] + (k1[p] + k2[p] * 2.0 + k3[p] * 2.0 + k4[p]) * (dt / 6.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_relative_eq;

    #[test]
    fn cutoff_plateaus_and_midpoint() {
        let spec = CutoffSpec::new(0.4);
        let r_o = 2.0;
        let at = |dist: f64| cutoff_chi(&Vector2::new(r_o - dist, 0.0), &spec, r_o);
        assert_eq!(at(0.4), 1.0);
        assert_eq!(at(0.2), 0.0);
        assert_relative_eq!(at(0.3), 0.5, epsilon = 1e-14);
        assert_eq!(at(1.0), 1.0);
        assert_eq!(at(0.05), 0.0);
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = at(0.2 + 0.2 * k as f64 / 100.0);
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn b_examples() {
        let spec = CutoffSpec::new(0.5);
        let body = BodyState::initial(Vector2::new(0.1, 0.2), 0.7);
        let x = Vector2::new(0.5, 0.0);
        assert_eq!(velocity_field_b(&x, &body, &spec, 2.0), perp(&x) * 0.7 + body.eta());
        assert_eq!(velocity_field_b(&Vector2::new(0.0, 1.8), &body, &spec, 2.0), Vector2::zeros());
    }

    #[test]
    fn zero_field_keeps_identity() {
        let g = build_grid(0.5, 2.0, 10, 16).unwrap();
        let field = RigidMotionField::steady(Kinematics::of(&BodyState::at_rest()), CutoffSpec::new(0.5), 2.0);
        let c = ChartState::identity(&g).advance(&field, 0.1, &g, 0.2).unwrap();
        for (z, y) in c.z.iter().zip(g.positions()) {
            assert_eq!(z, y);
        }
        assert!(c.round_trip_residual(&g) < 1e-14);
        for dy in &c.dy {
            assert!((dy - Matrix2::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn translation_closed_form() {
        let g = build_grid(0.5, 2.0, 10, 32).unwrap();
        let eta = Vector2::new(0.2, -0.1);
        let k = Kinematics { x_c: Vector2::zeros(), eta, omega: 0.0 };
        let field = RigidMotionField::steady(k, CutoffSpec::unity(), 2.0);
        let mut c = ChartState::identity(&g);
        for _ in 0..10 {
            c = c.advance(&field, 0.05, &g, 0.2).unwrap();
        }
        for ((z, y), x) in c.z.iter().zip(&c.y).zip(g.positions()) {
            assert!((z - (x + eta * 0.5)).norm() < 1e-13);
            assert!((y - (x - eta * 0.5)).norm() < 1e-12);
        }
        for (g_ij, yd) in c.g.iter().zip(&c.ydot) {
            assert!((g_ij - Matrix2::identity()).abs().max() < 1e-10);
            assert!((yd + eta).norm() < 1e-10);
        }
    }

    #[test]
    fn generic_flow_has_spd_metric() {
        let g = build_grid(0.5, 2.0, 16, 32).unwrap();
        let k = Kinematics { x_c: Vector2::zeros(), eta: Vector2::new(0.3, 0.1), omega: 0.8 };
        let field = RigidMotionField::steady(k, CutoffSpec::new(0.8), 2.0);
        let mut c = ChartState::identity(&g);
        for _ in 0..5 {
            c = c.advance(&field, 0.1, &g, 0.2).unwrap();
        }
        assert!(c.det_jz_min > 0.2);
        for m in &c.g {
            assert!((m[(0, 1)] - m[(1, 0)]).abs() < 1e-12);
            assert!(m[(0, 0)] > 0.0 && m.determinant() > 0.0);
        }
        let far = g.outer_ring().start;
        assert!(c.ydot[far].norm() == 0.0);
    }

    #[test]
    fn floor_violation_is_reported() {
        let g = build_grid(0.5, 2.0, 10, 16).unwrap();
        let k = Kinematics { x_c: Vector2::zeros(), eta: Vector2::new(20.0, 0.0), omega: 0.0 };
        let field = RigidMotionField::steady(k, CutoffSpec::new(1.4), 2.0);
        let err = ChartState::identity(&g).advance(&field, 0.5, &g, 0.2).unwrap_err();
        assert!(matches!(err, ChartError::JacobianFloor { .. }), "{err:?}");
    }
}
