//! Manufactured solutions for the coupled stepper on the fixed chart.
//!
//! Fields are evaluated as second-order jets in `(x, y, t)`, which gives the
//! exact forcing that makes them solve the continuous system with the body
//! held fixed.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;
use thiserror::Error;

use crate::body::{BodyParams, BodyState};
use crate::chart::CutoffSpec;
use crate::grid::{build_grid, AnnulusGrid, GridError, Layout, SolverKind};
use crate::rheology::{hibler_pointwise, RheologyParams};
use crate::state::IceState;
use crate::stepper::{BodyMode, SimState, Simulation, SourceTerms, StepConfig, StepError};

/// Value, gradient and Hessian with respect to `(x, y, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 3], h: [[0.0; 3]; 3] }
    }

    /// The coordinate `k` (0 = x, 1 = y, 2 = t) at value `v`.
    pub fn variable(k: usize, v: f64) -> Self {
        let mut j = Self::constant(v);
        j.g[k] = 1.0;
        j
    }

    /// `f(self)` given `f`, `f'`, `f''` at `self.v`.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..3 {
            out.g[i] = df * self.g[i];
            for k in 0..3 {
                out.h[i][k] = df * self.h[i][k] + d2f * self.g[i] * self.g[k];
            }
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn dx(&self) -> f64 {
        self.g[0]
    }

    pub fn dy(&self) -> f64 {
        self.g[1]
    }

    pub fn dt(&self) -> f64 {
        self.g[2]
    }

    pub fn spatial_gradient(&self) -> Vector2<f64> {
        Vector2::new(self.g[0], self.g[1])
    }

    pub fn spatial_hessian(&self) -> Matrix2<f64> {
        Matrix2::new(self.h[0][0], self.h[0][1], self.h[1][0], self.h[1][1])
    }

    pub fn laplacian(&self) -> f64 {
        self.h[0][0] + self.h[1][1]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..3 {
            self.g[i] += o.g[i];
            for k in 0..3 {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..3 {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for k in 0..3 {
                out.h[i][k] = self.h[i][k] * o.v + self.v * o.h[i][k] + self.g[i] * o.g[k] + self.g[k] * o.g[i];
            }
        }
        out
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, s: f64) -> Jet {
        self.v *= s;
        for i in 0..3 {
            self.g[i] *= s;
            for k in 0..3 {
                self.h[i][k] *= s;
            }
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, s: f64) -> Jet {
        self.v += s;
        self
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

/// Smooth solution compatible with the boundary conditions: `u = xi +
/// Omega x^perp` on the body ring, `u = 0` on the outer ring, and zero normal
/// derivative of `h` and `a` on both rings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manufactured {
    pub r_b: f64,
    pub r_o: f64,
    pub xi: [f64; 2],
    pub omega: f64,
    pub h0: f64,
    pub amp_h: f64,
    pub a0: f64,
    pub amp_a: f64,
    pub amp_w: f64,
    /// Angular frequency of the time factor; 0 for a steady solution.
    pub freq: f64,
}

impl Manufactured {
    pub fn standard(r_b: f64, r_o: f64, freq: f64) -> Self {
        Self { r_b, r_o, xi: [0.0, 0.0], omega: 0.3, h0: 1.0, amp_h: 0.2, a0: 0.8, amp_a: 0.05, amp_w: 0.4, freq }
    }

    /// `(u_x, u_y, h, a)` jets at `(x, y, t)`.
    pub fn jets(&self, x: f64, y: f64, t: f64) -> [Jet; 4] {
        let (jx, jy, jt) = (Jet::variable(0, x), Jet::variable(1, y), Jet::variable(2, t));
        let r2 = jx * jx + jy * jy;
        let r = r2.sqrt();
        let s = (r + -self.r_b) * (1.0 / (self.r_o - self.r_b));
        let one_minus = s * -1.0 + 1.0;
        let bump = s * one_minus;
        let time = (jt * self.freq).sin() * 0.5 + 1.0;
        let rigid_x = jy * self.omega + self.xi[0];
        let rigid_y = jx * -self.omega + self.xi[1];
        let wx = (jy * 0.9).sin() * self.amp_w;
        let wy = (jx * 0.7).cos() * (-self.amp_w) * 0.8;
        let ux = one_minus * rigid_x + bump * wx * time;
        let uy = one_minus * rigid_y + bump * wy * time;
        let radial = (s * std::f64::consts::PI).cos();
        let cos2 = (jx * jx - jy * jy) / r2;
        let sin2 = (jx * jy) / r2;
        let h = radial * (cos2 * 0.5 + 1.0) * time * self.amp_h + self.h0;
        let a = radial * (sin2 * 0.5 + 1.0) * time * self.amp_a + self.a0;
        [ux, uy, h, a]
    }

    pub fn state_at(&self, grid: &AnnulusGrid, t: f64) -> IceState {
        let mut ice = IceState::uniform(grid.len(), 0.0, 0.0);
        for (p, x) in grid.positions().iter().enumerate() {
            let [ux, uy, h, a] = self.jets(x.x, x.y, t);
            ice.u[p] = Vector2::new(ux.v, uy.v);
            ice.h[p] = h.v;
            ice.a[p] = a.v;
        }
        // Boundary values straight from the definition, free of rounding in s.
        let body = self.body();
        for p in grid.inner_ring() {
            ice.u[p] = body.boundary_velocity(&grid.position(p));
        }
        for p in grid.outer_ring() {
            ice.u[p] = Vector2::zeros();
        }
        ice
    }

    pub fn body(&self) -> BodyState {
        BodyState::initial(Vector2::new(self.xi[0], self.xi[1]), self.omega)
    }

    /// Forcing `(S_u, S_h, S_a)` of the momentum, thickness and compactness
    /// equations for drag-free, source-free parameters.
    pub fn forcing(&self, x: f64, y: f64, t: f64, params: &RheologyParams) -> (Vector2<f64>, f64, f64) {
        let [ux, uy, h, a] = self.jets(x, y, t);
        let grad_u = Matrix2::new(ux.dx(), ux.dy(), uy.dx(), uy.dy());
        let hess_u = [ux.spatial_hessian(), uy.spatial_hessian()];
        let pressure = h * ((a + -1.0) * params.c_pressure).exp() * params.p_star;
        let grad_p = pressure.spatial_gradient();
        let u = Vector2::new(ux.v, uy.v);
        let hib = hibler_pointwise(&grad_u, &hess_u, pressure.v, &grad_p, params);
        let s_u = Vector2::new(ux.dt(), uy.dt()) + grad_u * u + (hib + grad_p * 0.5) / (params.rho_ice * h.v);
        let div_u = ux.dx() + uy.dy();
        let s_h = h.dt() + u.dot(&h.spatial_gradient()) + h.v * div_u - params.d_h * h.laplacian();
        let s_a = a.dt() + u.dot(&a.spatial_gradient()) + a.v * div_u - params.d_a * a.laplacian();
        (s_u, s_h, s_a)
    }
}

/// Nodal manufactured forcing. The area-weighted mean of the `h` and `a`
/// sources is removed so that the discrete conserved modes stay balanced;
/// the removed amount is a quadrature error of second order.
pub struct MmsSource {
    pub solution: Manufactured,
    pub params: RheologyParams,
}

impl SourceTerms for MmsSource {
    fn add(&self, t: f64, grid: &AnnulusGrid, f: &mut [f64]) {
        let l = Layout::new(grid.len());
        let mut sh = vec![0.0; grid.len()];
        let mut sa = vec![0.0; grid.len()];
        for (p, x) in grid.positions().iter().enumerate() {
            let (su, h, a) = self.solution.forcing(x.x, x.y, t, &self.params);
            f[l.u(p, 0)] += su.x;
            f[l.u(p, 1)] += su.y;
            sh[p] = h;
            sa[p] = a;
        }
        let area: f64 = grid.area().iter().sum();
        let mh = grid.integrate(&sh) / area;
        let ma = grid.integrate(&sa) / area;
        for p in 0..grid.len() {
            f[l.h(p)] += sh[p] - mh;
            f[l.a(p)] += sa[p] - ma;
        }
    }
}

pub fn mms_params() -> RheologyParams {
    RheologyParams {
        e: 2.0,
        delta: 0.01,
        p_star: 2.0,
        c_pressure: 2.0,
        rho_ice: 1.0,
        d_h: 1.0,
        d_a: 1.0,
        ..RheologyParams::default()
    }
}

#[derive(Debug, Error)]
pub enum MmsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("steady iteration did not settle after {steps} steps (last change {change:e})")]
    NotSteady { steps: usize, change: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldErrors {
    pub u: f64,
    pub h: f64,
    pub a: f64,
}

impl FieldErrors {
    pub fn max(&self) -> f64 {
        self.u.max(self.h).max(self.a)
    }
}

/// Area-weighted discrete L2 differences of the three fields.
pub fn field_errors(grid: &AnnulusGrid, x: &IceState, y: &IceState) -> FieldErrors {
    let l2 = |f: &dyn Fn(usize) -> f64| -> f64 {
        let v: Vec<f64> = (0..grid.len()).map(|p| f(p).powi(2)).collect();
        grid.integrate(&v).sqrt()
    };
    FieldErrors {
        u: l2(&|p| (x.u[p] - y.u[p]).norm()),
        h: l2(&|p| x.h[p] - y.h[p]),
        a: l2(&|p| x.a[p] - y.a[p]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub label: String,
    pub errors: FieldErrors,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

fn with_orders(mut rows: Vec<ConvergenceRow>, ratio: f64) -> Vec<ConvergenceRow> {
    for k in 1..rows.len() {
        let (e0, e1) = (rows[k - 1].errors.max(), rows[k].errors.max());
        rows[k].order = Some((e0 / e1).ln() / ratio.ln());
    }
    rows
}

fn simulation<'a>(grid: &'a AnnulusGrid, sol: &Manufactured, dt: f64) -> Simulation<'a> {
    let params = mms_params();
    let body = BodyParams::disk(1.0, grid.r_inner()).expect("valid disk");
    let config = StepConfig { dt, t_end: 0.0, dt_min: dt * 1e-3, solver: SolverKind::DirectLu, tolerance: 1e-11, ..StepConfig::default() };
    Simulation::new(grid, params.clone(), body, CutoffSpec::new(0.5), config, BodyMode::Frozen)
        .with_sources(Box::new(MmsSource { solution: sol.clone(), params }))
}

/// Steady solve by pseudo-time stepping until the update stalls.
pub fn steady_mms(n_r: usize, n_theta: usize) -> Result<(AnnulusGrid, IceState, IceState), MmsError> {
    let grid = build_grid(0.5, 2.0, n_r, n_theta)?;
    let sol = Manufactured::standard(0.5, 2.0, 0.0);
    let exact = sol.state_at(&grid, 0.0);
    let final_state = {
        let mut sim = simulation(&grid, &sol, 100.0);
        let mut s: SimState = sim.initial_state(exact.clone(), sol.body());
        let mut change = f64::INFINITY;
        let mut steps = 0;
        while change > 1e-8 {
            if steps == 400 {
                return Err(MmsError::NotSteady { steps, change });
            }
            let next = sim.step(&s, None)?.0;
            change = field_errors(&grid, &next.ice, &s.ice).max();
            s = next;
            steps += 1;
        }
        s.ice
    };
    Ok((grid, final_state, exact))
}

/// Spatial study on the given `(n_r, n_theta)` levels, each doubling the
/// previous one.
pub fn spatial_study(levels: &[(usize, usize)]) -> Result<Vec<ConvergenceRow>, MmsError> {
    let mut rows = Vec::new();
    for &(n_r, n_theta) in levels {
        let (grid, num, exact) = steady_mms(n_r, n_theta)?;
        rows.push(ConvergenceRow {
            label: format!("{n_r}x{n_theta}"),
            errors: field_errors(&grid, &num, &exact),
            order: None,
        });
    }
    // Radial spacing is (R_O - R_B)/(n_r - 1), so the refinement ratio is
    // not exactly 2.
    let mut rows = with_orders(rows, 2.0);
    for k in 1..rows.len() {
        let h0 = 1.0 / (levels[k - 1].0 - 1) as f64;
        let h1 = 1.0 / (levels[k].0 - 1) as f64;
        let (e0, e1) = (rows[k - 1].errors.max(), rows[k].errors.max());
        rows[k].order = Some((e0 / e1).ln() / (h0 / h1).ln());
    }
    Ok(rows)
}

/// Temporal self-convergence: runs to `t_end` with `dt, dt/2, ...` and
/// reports differences of successive solutions.
pub fn temporal_study(n_r: usize, n_theta: usize, dt0: f64, levels: usize, t_end: f64) -> Result<Vec<ConvergenceRow>, MmsError> {
    let grid = build_grid(0.5, 2.0, n_r, n_theta)?;
    let sol = Manufactured::standard(0.5, 2.0, 2.0);
    let mut finals = Vec::new();
    for k in 0..levels {
        let dt = dt0 / 2f64.powi(k as i32);
        let mut sim = simulation(&grid, &sol, dt);
        let s = sim.initial_state(sol.state_at(&grid, 0.0), sol.body());
        let end = sim.run(s, t_end, |_, _, _| Ok::<(), MmsError>(())).map_err(|e| match e {
            crate::stepper::RunError::Step(e) => MmsError::Step(e),
            crate::stepper::RunError::Observer(e) => e,
        })?;
        finals.push((dt, end.ice));
    }
    let rows = (1..levels)
        .map(|k| ConvergenceRow {
            label: format!("dt={:.3e}", finals[k].0),
            errors: field_errors(&grid, &finals[k].1, &finals[k - 1].1),
            order: None,
        })
        .collect();
    Ok(with_orders(rows, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jet_matches_closed_forms() {
        let x = Jet::variable(0, 0.7);
        let y = Jet::variable(1, -0.4);
        let f = (x * y).sin() + x.exp() * y;
        let (xv, yv) = (0.7f64, -0.4f64);
        assert_relative_eq!(f.v, (xv * yv).sin() + xv.exp() * yv, epsilon = 1e-15);
        assert_relative_eq!(f.dx(), yv * (xv * yv).cos() + xv.exp() * yv, epsilon = 1e-14);
        assert_relative_eq!(f.h[0][1], (xv * yv).cos() - xv * yv * (xv * yv).sin() + xv.exp(), epsilon = 1e-14);
        assert_relative_eq!(f.h[1][1], -xv * xv * (xv * yv).sin(), epsilon = 1e-14);
        let q = x / (y * y + 1.0);
        let d = yv * yv + 1.0;
        assert_relative_eq!(q.dy(), -2.0 * xv * yv / (d * d), epsilon = 1e-14);
        let r = (x * x + y * y).sqrt();
        assert_relative_eq!(r.laplacian(), 1.0 / (xv * xv + yv * yv).sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn manufactured_boundary_conditions() {
        let sol = Manufactured::standard(0.5, 2.0, 1.0);
        for k in 0..12 {
            let th = k as f64 * 0.5;
            let (c, s) = (th.cos(), th.sin());
            let [ux, uy, h, _] = sol.jets(0.5 * c, 0.5 * s, 0.3);
            let rigid = sol.body().boundary_velocity(&Vector2::new(0.5 * c, 0.5 * s));
            assert!((ux.v - rigid.x).abs() < 1e-14 && (uy.v - rigid.y).abs() < 1e-14);
            assert!((h.dx() * c + h.dy() * s).abs() < 1e-13);
            let [ux, uy, _, a] = sol.jets(2.0 * c, 2.0 * s, 0.3);
            assert!(ux.v.abs() < 1e-14 && uy.v.abs() < 1e-14);
            assert!((a.dx() * c + a.dy() * s).abs() < 1e-13);
        }
    }
}
