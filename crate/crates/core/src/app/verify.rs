//! Invariant suites behind the `verify` subcommand. None of them needs a
//! simulation state or a config file.

use std::fmt;

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{body_momentum_update, polar_project, rotation_step, BodyParams, BodyState};
use crate::chart::{
    transformed_hibler, transformed_laplacian_apply, transformed_lower_order, transformed_transport, ChartState, CutoffSpec,
    Kinematics, RigidMotionField,
};
use crate::declab::{similarity_check, DecoupleConfig};
use crate::grid::{build_grid, AnnulusGrid};
use crate::rheology::{delta_squared, hibler_apply, s_entry, s_map, s_matrix, RheologyParams, SymTensor2};
use crate::state::IceState;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl Suite {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    fn failed(name: &'static str, why: String) -> Self {
        Self { name, checks: vec![Check::new(why, f64::INFINITY, 0.0)] }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", if self.passed() { "PASS" } else { "FAIL" }, self.name)?;
        for c in &self.checks {
            let mark = if c.passed() { "ok  " } else { "FAIL" };
            writeln!(f, "  {mark} {:<44} {:>12.3e} <= {:.1e}", c.name, c.value, c.limit)?;
        }
        Ok(())
    }
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn rheology_suite() -> Suite {
    let e = 2.0;
    let mut sym = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let v = s_entry(i, j, k, l, e);
                    for w in [s_entry(j, i, l, k, e), s_entry(k, j, i, l, e), s_entry(k, l, i, j, e), s_entry(i, l, k, j, e)] {
                        sym = sym.max((v - w).abs());
                    }
                }
            }
        }
    }
    let m = Matrix4::from_fn(|r, c| s_matrix(e)[r][c]);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let expected = [0.0, 2.0 / (e * e), 2.0 / (e * e), 2.0];
    let spectrum = max_abs(ev.iter().zip(expected).map(|(a, b)| a - b));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pairing = 0.0f64;
    for _ in 0..10_000 {
        let eps = SymTensor2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let d2 = delta_squared(&eps, e);
        pairing = pairing.max((d2 - eps.dot(&s_map(&eps, e))).abs() / (1.0 + d2));
    }
    Suite {
        name: "rheology",
        checks: vec![
            Check::new("S index symmetries", sym, 0.0),
            Check::new("S spectrum {0, 2/e^2, 2/e^2, 2}", spectrum, 1e-12),
            Check::new("Delta^2 = <eps, S eps> (10^4 samples)", pairing, 1e-12),
        ],
    }
}

pub fn body_suite() -> Suite {
    let mut q = Matrix2::identity();
    let mut det = 0.0f64;
    let mut orth = 0.0f64;
    for k in 0..1000 {
        let w = (0.01 * k as f64).sin() + 0.5;
        q = rotation_step(&q, [w, w + 0.01, w + 0.02], 0.01);
        det = det.max((q.determinant() - 1.0).abs());
        orth = orth.max((q.transpose() * q - Matrix2::identity()).abs().max());
    }
    let projected = polar_project(&Matrix2::new(1.1, 0.2, -0.1, 0.9));
    let polar = (projected.transpose() * projected - Matrix2::identity()).abs().max();
    let params = BodyParams::disk(1.0, 0.5).expect("valid disk");
    let mut state = BodyState::initial(Vector2::new(0.4, -0.2), 1.5);
    let speed = state.xi.norm();
    for k in 0..1000 {
        state = body_momentum_update(&state, &Vector2::zeros(), 0.0, &params, k as f64 * 0.01, 0.01);
    }
    Suite {
        name: "body",
        checks: vec![
            Check::new("|det Q - 1| over 1000 steps", det, 1e-10),
            Check::new("|Q^T Q - I| over 1000 steps", orth, 1e-10),
            Check::new("polar projection orthogonality", polar, 1e-14),
            Check::new("gyroscopic |xi| drift", (state.xi.norm() - speed).abs(), 1e-8),
        ],
    }
}

/// Rigid quarter turn with `chi = 1` on 32x64 cells, where `Z` and `Y` land
/// on nodes, then a cut-off run checked against the rigid motion in the
/// plateau.
pub fn chart_suite() -> Suite {
    let grid = build_grid(0.5, 2.0, 33, 64).expect("static grid");
    let quarter = std::f64::consts::FRAC_PI_2;
    let steps = 160;
    let dt = quarter / steps as f64;
    let spin = Kinematics { x_c: Vector2::zeros(), eta: Vector2::zeros(), omega: 1.0 };
    let field = RigidMotionField::steady(spin, CutoffSpec::unity(), grid.r_outer());
    let mut chart = ChartState::initial(&grid, &field);
    for _ in 0..steps {
        chart = match chart.advance(&field, dt, &grid, 0.2) {
            Ok(c) => c,
            Err(e) => return Suite::failed("chart", e.to_string()),
        };
    }
    let round_trip = chart.round_trip_residual(&grid);
    let product = chart.jacobian_product_residual(&grid);

    let eta = Vector2::new(0.1, 0.05);
    let t_end = 0.5;
    let start = Kinematics { x_c: Vector2::zeros(), eta, omega: 1.0 };
    let end = Kinematics { x_c: eta * t_end, ..start };
    let cutoff = CutoffSpec::new(0.5);
    let field = RigidMotionField { start, end, t0: 0.0, dt: t_end, cutoff, r_outer: grid.r_outer() };
    let mut chart = ChartState::initial(&grid, &field);
    for _ in 0..50 {
        chart = match chart.advance(&field, t_end / 50.0, &grid, 0.2) {
            Ok(c) => c,
            Err(e) => return Suite::failed("chart", e.to_string()),
        };
    }
    let (s, c) = t_end.sin_cos();
    let q = Matrix2::new(c, s, -s, c);
    let plateau = max_abs(
        (0..grid.len())
            .filter(|&p| grid.position(p).norm() <= grid.r_outer() - cutoff.d)
            .map(|p| (chart.z[p] - (q * grid.position(p) + eta * t_end)).norm()),
    );
    Suite {
        name: "chart",
        checks: vec![
            Check::new("Y o Z round trip, quarter turn", round_trip, 1e-6),
            Check::new("J_Z J_Y - I, quarter turn", product, 1e-6),
            Check::new("Z - (Q y + x_c) in the plateau", plateau, 1e-8),
            Check::new("1 / min det J_Z, cut-off run", 1.0 / chart.det_jz_min, 5.0),
        ],
    }
}

/// A smooth admissible state used by the reduction checks.
pub fn smooth_state(grid: &AnnulusGrid) -> IceState {
    let x = grid.positions();
    IceState {
        u: x.iter().map(|p| Vector2::new(0.2 * (0.8 * p.y).sin(), 0.1 * p.x * p.y)).collect(),
        h: x.iter().map(|p| 1.0 + 0.2 * (0.7 * p.x).cos()).collect(),
        a: x.iter().map(|p| 0.8 + 0.05 * (0.9 * p.y).sin()).collect(),
    }
}

/// Every pulled-back operator against its plain counterpart on the
/// identity chart.
pub fn reduction_suite() -> Suite {
    let grid = build_grid(0.5, 2.0, 17, 32).expect("static grid");
    let params = RheologyParams { delta: 1e-2, p_star: 1.0, c_pressure: 2.0, ..RheologyParams::default() };
    let ice = smooth_state(&grid);
    let chart = ChartState::identity(&grid);
    let run = || -> Result<Vec<Check>, crate::rheology::RheologyError> {
        let d = grid.derivatives();
        let th = transformed_hibler(&chart, &ice, &params, &grid)?;
        let h = hibler_apply(&ice.u, &ice.h, &ice.a, &grid, &params)?;
        let hib = max_abs(th.iter().zip(&h).map(|(a, b)| (a - b).norm() / (1.0 + b.norm())));
        let (b1, b2) = transformed_lower_order(&chart, &ice, &params, &grid)?;
        let (gh, ga) = (d.gradient(&ice.h), d.gradient(&ice.a));
        let mut lower = 0.0f64;
        for p in 0..grid.len() {
            let (ph, pa) = crate::rheology::ice_pressure_partials(ice.h[p], ice.a[p], &params);
            lower = lower.max((b1[p] - gh[p] * (0.5 * ph)).norm()).max((b2[p] - ga[p] * (0.5 * pa)).norm());
        }
        let lt = transformed_laplacian_apply(&chart, &ice.h, &grid)?;
        let l0 = grid.laplacian().mul_vec(&ice.h);
        let lap = max_abs(lt.iter().zip(&l0).map(|(a, b)| a - b));
        let tr = transformed_transport(&chart, &ice, &grid)?;
        let gu = d.vector_gradient(&ice.u);
        let adv = max_abs((0..grid.len()).map(|p| (tr.advection[p] - gu[p] * ice.u[p]).norm()));
        let flux: Vec<Vector2<f64>> = ice.u.iter().zip(&ice.h).map(|(u, h)| u * *h).collect();
        let div0 = grid.fv_divergence(&flux);
        let div = max_abs(tr.div_h.iter().zip(&div0).map(|(a, b)| a - b));
        let m = max_abs(tr.m_u.iter().map(|v| v.norm()).chain(tr.m_h.iter().copied()).chain(tr.m_a.iter().copied()));
        Ok(vec![
            Check::new("Hibler operator", hib, 1e-12),
            Check::new("B1, B2", lower, 1e-12),
            Check::new("Laplacian", lap, 1e-12),
            Check::new("advection", adv, 1e-12),
            Check::new("divergence", div, 1e-12),
            Check::new("time-derivative correction M", m, 1e-12),
        ])
    };
    match run() {
        Ok(checks) => Suite { name: "t=0 reduction", checks },
        Err(e) => Suite::failed("t=0 reduction", e.to_string()),
    }
}

/// Stencils against polynomial fields they must reproduce.
pub fn grid_suite() -> Suite {
    let grid = build_grid(0.5, 2.0, 17, 32).expect("static grid");
    let d = grid.derivatives();
    let affine: Vec<f64> = grid.positions().iter().map(|p| 1.0 + 2.0 * p.x - 3.0 * p.y).collect();
    let g = d.gradient(&affine);
    let grad = max_abs(g.iter().map(|v| (v - Vector2::new(2.0, -3.0)).norm()));
    let hess = max_abs(d.hessian(&affine).iter().map(|m| m.abs().max()));
    let ones = vec![1.0; grid.len()];
    let rows = max_abs(grid.laplacian().mul_vec(&ones));
    let lap = grid.laplacian().mul_vec(&affine);
    let balance = grid.integrate(&lap).abs();
    Suite {
        name: "grid",
        checks: vec![
            Check::new("gradient of affine field", grad, 1e-11),
            Check::new("Hessian of affine field", hess, 1e-10),
            Check::new("Laplacian of constants", rows, 1e-12),
            Check::new("finite-volume flux balance", balance, 1e-12),
        ],
    }
}

pub fn declab_suite() -> Suite {
    let cfg = DecoupleConfig::default();
    match similarity_check(&cfg) {
        Ok(r) => Suite {
            name: "declab",
            checks: vec![
                Check::new("similarity residual", r.residual_similarity, 10.0 * r.tolerance),
                Check::new("kernel residual (max over e1, e2, e3)", r.residual_kernel.iter().copied().fold(0.0, f64::max), r.tolerance),
                Check::new("S S^-1 - I", if r.inverse_exact { 0.0 } else { 1.0 }, 0.0),
                Check::new("decoupled-domain trace", r.domain_residual, 1e-14),
            ],
        },
        Err(e) => Suite::failed("declab", e.to_string()),
    }
}

pub fn all_suites() -> Vec<Suite> {
    vec![rheology_suite(), body_suite(), chart_suite(), reduction_suite(), grid_suite(), declab_suite()]
}
