//! Rigid disk: state, rotation ODE, boundary integrals and momentum update.
//!
//! Conventions: `y^perp = (y2, -y1)`, the rotation generator is
//! `m = omega [[0, 1], [-1, 0]]` so `m x = omega x^perp`, and `Q' = m Q`.
//! The body-frame velocity is `xi = Q^T eta`. Differentiating `eta = Q xi`
//! gives `xi' = Q^T eta' - Omega xi^perp`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rheology::SymTensor2;

#[derive(Debug, Error, PartialEq)]
pub enum BodyError {
    #[error("boundary quadrature has no nodes")]
    EmptyQuadrature,
    #[error("invalid body parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

pub fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(v.y, -v.x)
}

/// `m = omega [[0, 1], [-1, 0]]`.
pub fn generator(omega: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, omega, -omega, 0.0)
}

/// `Q^T m Q`, which equals `m` for a rotation.
pub fn tilde_m(q: &Matrix2<f64>, omega: f64) -> Matrix2<f64> {
    q.transpose() * generator(omega) * q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub xi: Vector2<f64>,
    pub big_omega: f64,
    pub q: Matrix2<f64>,
    pub x_c: Vector2<f64>,
}

impl BodyState {
    /// Body at the origin with lab-frame velocities `eta`, `omega`.
    pub fn initial(eta: Vector2<f64>, omega: f64) -> Self {
        Self { xi: eta, big_omega: omega, q: Matrix2::identity(), x_c: Vector2::zeros() }
    }

    pub fn at_rest() -> Self {
        Self::initial(Vector2::zeros(), 0.0)
    }

    pub fn eta(&self) -> Vector2<f64> {
        self.q * self.xi
    }

    pub fn omega(&self) -> f64 {
        self.big_omega
    }

    /// Lab-frame rigid velocity sampled on the reference body boundary,
    /// `Q (xi + Omega y^perp)`.
    pub fn boundary_velocity(&self, y: &Vector2<f64>) -> Vector2<f64> {
        self.q * (self.xi + perp(y) * self.big_omega)
    }
}

/// Lab-frame rigid velocity field `eta + omega (x - x_c)^perp`.
pub fn body_velocity_field(x: &Vector2<f64>, state: &BodyState) -> Vector2<f64> {
    state.eta() + perp(&(x - state.x_c)) * state.omega()
}

pub trait Lerp: Copy {
    fn lerp(a: Self, b: Self, s: f64) -> Self;
}

impl Lerp for f64 {
    fn lerp(a: Self, b: Self, s: f64) -> Self {
        a + s * (b - a)
    }
}

impl Lerp for [f64; 2] {
    fn lerp(a: Self, b: Self, s: f64) -> Self {
        [f64::lerp(a[0], b[0], s), f64::lerp(a[1], b[1], s)]
    }
}

/// Constant or piecewise-linear time signal, held constant outside the
/// table range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal<T> {
    Constant { value: T },
    Table { points: Vec<(f64, T)> },
}

impl<T: Lerp> Signal<T> {
    pub fn eval(&self, t: f64) -> T {
        match self {
            Signal::Constant { value } => *value,
            Signal::Table { points } => {
                let first = points.first().expect("signal table is validated non-empty");
                if t <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let (t0, v0) = w[0];
                    let (t1, v1) = w[1];
                    if t <= t1 {
                        return T::lerp(v0, v1, (t - t0) / (t1 - t0));
                    }
                }
                points.last().unwrap().1
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Signal::Constant { .. } => true,
            Signal::Table { points } => !points.is_empty() && points.windows(2).all(|w| w[1].0 > w[0].0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub m_b: f64,
    pub j: f64,
    pub rho_b: f64,
    pub r_b: f64,
    /// External lab-frame force `F(t)`.
    pub force: Signal<[f64; 2]>,
    /// External torque `N(t)`.
    pub torque: Signal<f64>,
}

impl BodyParams {
    /// Uniform disk of density `rho_b` and radius `r_b`.
    pub fn disk(rho_b: f64, r_b: f64) -> Result<Self, BodyError> {
        let p = Self {
            m_b: rho_b * std::f64::consts::PI * r_b * r_b,
            j: inertia_of_disk(rho_b, r_b),
            rho_b,
            r_b,
            force: Signal::Constant { value: [0.0, 0.0] },
            torque: Signal::Constant { value: 0.0 },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BodyError> {
        if !(self.m_b > 0.0) {
            return Err(BodyError::InvalidParameter { name: "m_b", value: self.m_b });
        }
        if !(self.j > 0.0) {
            return Err(BodyError::InvalidParameter { name: "j", value: self.j });
        }
        Ok(())
    }

    pub fn force_at(&self, t: f64) -> Vector2<f64> {
        let f = self.force.eval(t);
        Vector2::new(f[0], f[1])
    }
}

/// `J = rho_B pi R_B^4 / 2`.
pub fn inertia_of_disk(rho_b: f64, r_b: f64) -> f64 {
    0.5 * rho_b * std::f64::consts::PI * r_b.powi(4)
}

/// Closest rotation `[[p, q], [-q, p]]` in the Frobenius norm.
pub fn polar_project(m: &Matrix2<f64>) -> Matrix2<f64> {
    let p = m[(0, 0)] + m[(1, 1)];
    let q = m[(0, 1)] - m[(1, 0)];
    let n = p.hypot(q);
    if n == 0.0 {
        return Matrix2::identity();
    }
    Matrix2::new(p / n, q / n, -q / n, p / n)
}

/// One RK4 step of `Q' = m(Omega) Q`. `omegas` holds `Omega` at the start,
/// midpoint and end of the step.
pub fn rotation_step(q: &Matrix2<f64>, omegas: [f64; 3], dt: f64) -> Matrix2<f64> {
    let [w0, wm, w1] = omegas;
    let k1 = generator(w0) * q;
    let k2 = generator(wm) * (q + k1 * (0.5 * dt));
    let k3 = generator(wm) * (q + k2 * (0.5 * dt));
    let k4 = generator(w1) * (q + k3 * dt);
    polar_project(&(q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

/// Quadrature sample on the reference body boundary.
#[derive(Clone, Copy, Debug)]
pub struct BoundarySample {
    /// Reference position `y` on the ring.
    pub y: Vector2<f64>,
    /// Outward unit normal of the body at `y`.
    pub normal: Vector2<f64>,
    /// Body-frame stress `Q^T sigma Q` at `y`.
    pub stress: SymTensor2,
    pub weight: f64,
}

/// Force and torque exerted by the surrounding ice on the body, in the body
/// frame: `(sum w T n, sum w y^perp . T n)`.
pub fn boundary_force_torque(samples: &[BoundarySample]) -> Result<(Vector2<f64>, f64), BodyError> {
    if samples.is_empty() {
        return Err(BodyError::EmptyQuadrature);
    }
    let mut force = Vector2::zeros();
    let mut torque = 0.0;
    for s in samples {
        let t = s.stress.mul_vec(&s.normal);
        force += t * s.weight;
        torque += perp(&s.y).dot(&t) * s.weight;
    }
    Ok((force, torque))
}

/// Explicit update of the rigid state over `[t, t + dt]` with the ice force
/// and torque held at their start-of-step values. `(xi, Omega)` advance by
/// RK4 with the external force rotated by the start-of-step `Q`; `Q` then
/// advances by [`rotation_step`] and `x_c` by the trapezoidal rule on
/// `eta = Q xi`.
pub fn body_momentum_update(
    state: &BodyState,
    force: &Vector2<f64>,
    torque: f64,
    params: &BodyParams,
    t: f64,
    dt: f64,
) -> BodyState {
    let qt = state.q.transpose();
    let rhs = |s: f64, xi: &Vector2<f64>, om: f64| -> (Vector2<f64>, f64) {
        let f_tilde = qt * params.force_at(s);
        let dxi = (f_tilde + force) / params.m_b - perp(xi) * om;
        let dom = (params.torque.eval(s) + torque) / params.j;
        (dxi, dom)
    };
    let (xi0, om0) = (state.xi, state.big_omega);
    let (a1, b1) = rhs(t, &xi0, om0);
    let (a2, b2) = rhs(t + 0.5 * dt, &(xi0 + a1 * (0.5 * dt)), om0 + 0.5 * dt * b1);
    let (a3, b3) = rhs(t + 0.5 * dt, &(xi0 + a2 * (0.5 * dt)), om0 + 0.5 * dt * b2);
    let (a4, b4) = rhs(t + dt, &(xi0 + a3 * dt), om0 + dt * b3);
    let xi = xi0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let big_omega = om0 + (b1 + 2.0 * b2 + 2.0 * b3 + b4) * (dt / 6.0);

    let q = rotation_step(&state.q, [om0, 0.5 * (om0 + big_omega), big_omega], dt);
    let x_c = state.x_c + (state.q * xi0 + q * xi) * (0.5 * dt);
    BodyState { xi, big_omega, q, x_c }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn free_body() -> BodyParams {
        BodyParams::disk(900.0, 0.5).unwrap()
    }

    #[test]
    fn inertia_examples() {
        assert_eq!(inertia_of_disk(0.0, 1.0), 0.0);
        assert_relative_eq!(inertia_of_disk(1.0, 1.0), PI / 2.0);
        assert_relative_eq!(inertia_of_disk(3.0, 2.0), 16.0 * inertia_of_disk(3.0, 1.0));
    }

    #[test]
    fn rotation_examples() {
        let q = Matrix2::new(0.6, 0.8, -0.8, 0.6);
        assert_eq!(rotation_step(&q, [0.0; 3], 0.1), q);

        let (w, dt) = (0.8, 1e-2);
        let mut q = Matrix2::identity();
        for _ in 0..100 {
            q = rotation_step(&q, [w; 3], dt);
        }
        let th = w * 1.0;
        let exact = Matrix2::new(th.cos(), th.sin(), -th.sin(), th.cos());
        assert!((q - exact).abs().max() < 1e-10);
        assert!((q.transpose() * q - Matrix2::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn velocity_field_examples() {
        let mut s = BodyState::initial(Vector2::new(0.3, -0.1), 0.0);
        assert_eq!(body_velocity_field(&Vector2::new(5.0, 2.0), &s), s.eta());
        s = BodyState::initial(Vector2::zeros(), 1.0);
        assert_eq!(body_velocity_field(&Vector2::new(1.0, 0.0), &s), Vector2::new(0.0, -1.0));
        s.x_c = Vector2::new(0.2, 0.4);
        assert_eq!(body_velocity_field(&s.x_c.clone(), &s), s.eta());
    }

    fn ring(n: usize, r: f64, stress: SymTensor2) -> Vec<BoundarySample> {
        (0..n)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / n as f64;
                let nrm = Vector2::new(th.cos(), th.sin());
                BoundarySample { y: nrm * r, normal: nrm, stress, weight: r * 2.0 * PI / n as f64 }
            })
            .collect()
    }

    #[test]
    fn force_torque_examples() {
        assert_eq!(boundary_force_torque(&[]), Err(BodyError::EmptyQuadrature));
        let (f, t) = boundary_force_torque(&ring(32, 0.7, SymTensor2::ZERO)).unwrap();
        assert_eq!((f, t), (Vector2::zeros(), 0.0));
        let (f, _) = boundary_force_torque(&ring(32, 0.7, SymTensor2::identity())).unwrap();
        assert!(f.norm() < 1e-14);
        let (_, t) = boundary_force_torque(&ring(32, 0.7, SymTensor2::identity().scale(-1234.0))).unwrap();
        assert!(t.abs() < 1e-10);
    }

    #[test]
    fn momentum_examples() {
        let p = free_body();
        let s0 = BodyState::initial(Vector2::new(0.2, -0.3), 0.0);
        let s1 = body_momentum_update(&s0, &Vector2::zeros(), 0.0, &p, 0.0, 0.1);
        assert_eq!(s1.xi, s0.xi);

        let mut pf = p.clone();
        pf.force = Signal::Constant { value: [3.0, -1.0] };
        let mut s = s0.clone();
        for k in 0..10 {
            s = body_momentum_update(&s, &Vector2::zeros(), 0.0, &pf, k as f64 * 0.1, 0.1);
        }
        let exact = s0.xi + Vector2::new(3.0, -1.0) * (1.0 / p.m_b);
        assert!((s.xi - exact).norm() < 1e-13);
    }

    #[test]
    fn gyroscopic_drift() {
        let p = free_body();
        let mut s = BodyState::initial(Vector2::new(0.4, 0.1), 1.3);
        let n0 = s.xi.norm();
        let eta0 = s.eta();
        for k in 0..1000 {
            s = body_momentum_update(&s, &Vector2::zeros(), 0.0, &p, k as f64 * 1e-3, 1e-3);
        }
        assert_eq!(s.big_omega, 1.3);
        assert!((s.xi.norm() - n0).abs() < 1e-8);
        // Free body: lab velocity is constant and the center moves linearly.
        assert!((s.eta() - eta0).norm() < 1e-9);
        assert!((s.x_c - eta0).norm() < 1e-9);
        assert!((s.q.transpose() * s.q - Matrix2::identity()).abs().max() < 1e-12);
        assert_relative_eq!(s.q.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn signals() {
        let s = Signal::Table { points: vec![(0.0, 1.0), (2.0, 3.0)] };
        assert_eq!(s.eval(-1.0), 1.0);
        assert_eq!(s.eval(1.0), 2.0);
        assert_eq!(s.eval(5.0), 3.0);
        assert!(!Signal::<f64>::Table { points: vec![] }.is_valid());
    }

    proptest! {
        #[test]
        fn tilde_m_is_omega_perp(th in 0.0..6.3f64, w in -5.0..5.0f64, x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let q = Matrix2::new(th.cos(), th.sin(), -th.sin(), th.cos());
            let v = Vector2::new(x, y);
            let lhs = tilde_m(&q, w) * v;
            prop_assert!((lhs - perp(&v) * w).norm() < 1e-12);
        }

        #[test]
        fn polar_projection_is_rotation(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, d in -2.0..2.0f64) {
            prop_assume!((a + d).hypot(b - c) > 1e-3);
            let r = polar_project(&Matrix2::new(a, b, c, d));
            prop_assert!((r.transpose() * r - Matrix2::identity()).abs().max() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
