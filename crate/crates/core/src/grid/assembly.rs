//! Sparse operator matrix and right-hand side of the coupled system.
//!
//! Unknown layout for `N` nodes: `u_x(p) = 2p`, `u_y(p) = 2p + 1`,
//! `h(p) = 2N + p`, `a(p) = 3N + p`, then `xi_1, xi_2, Omega`.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use super::{AnnulusGrid, CsrMatrix};
use crate::body::{boundary_force_torque, perp, BodyError, BodyParams, BoundarySample, BodyState};
use crate::chart::{transformed_strain, transformed_strain_gradient, transformed_transport, ChartState};
use crate::rheology::{
    forcing_f1, ice_pressure, ice_pressure_partials, stress_regularized, thermo_source_a, thermo_source_h,
    FrozenHibler, RheologyError, RheologyParams, SymTensor2,
};
use crate::state::IceState;

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("thickness {h} at node {node} is not above kappa = {kappa}")]
    Thickness { node: usize, h: f64, kappa: f64 },
    #[error(transparent)]
    Rheology(#[from] RheologyError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub nodes: usize,
}

impl Layout {
    pub fn new(nodes: usize) -> Self {
        Self { nodes }
    }

    pub fn u(&self, p: usize, c: usize) -> usize {
        2 * p + c
    }

    pub fn h(&self, p: usize) -> usize {
        2 * self.nodes + p
    }

    pub fn a(&self, p: usize) -> usize {
        3 * self.nodes + p
    }

    pub fn xi(&self, c: usize) -> usize {
        4 * self.nodes + c
    }

    pub fn omega(&self) -> usize {
        4 * self.nodes + 2
    }

    pub fn len(&self) -> usize {
        4 * self.nodes + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pack(&self, ice: &IceState, xi: &Vector2<f64>, omega: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for p in 0..self.nodes {
            v[self.u(p, 0)] = ice.u[p].x;
            v[self.u(p, 1)] = ice.u[p].y;
            v[self.h(p)] = ice.h[p];
            v[self.a(p)] = ice.a[p];
        }
        v[self.xi(0)] = xi.x;
        v[self.xi(1)] = xi.y;
        v[self.omega()] = omega;
        v
    }

    pub fn unpack(&self, v: &[f64]) -> (IceState, Vector2<f64>, f64) {
        let n = self.nodes;
        let ice = IceState {
            u: (0..n).map(|p| Vector2::new(v[self.u(p, 0)], v[self.u(p, 1)])).collect(),
            h: v[2 * n..3 * n].to_vec(),
            a: v[3 * n..4 * n].to_vec(),
        };
        (ice, Vector2::new(v[self.xi(0)], v[self.xi(1)]), v[self.omega()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    InteriorPde,
    /// `h` or `a` row on a ring; the zero-flux condition is built into the
    /// finite-volume stencil.
    Neumann,
    Dirichlet,
    Trace,
    Body,
}

impl RowKind {
    pub fn is_constraint(self) -> bool {
        matches!(self, RowKind::Dirichlet | RowKind::Trace)
    }
}

#[derive(Clone, Debug)]
pub struct CoupledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub rows: Vec<RowKind>,
    pub layout: Layout,
}

type Row = Vec<(usize, f64)>;

fn push_scaled(row: &mut Row, m: &CsrMatrix, p: usize, scale: f64, col: impl Fn(usize) -> usize) {
    for (q, w) in m.row_entries(p) {
        row.push((col(q), scale * w));
    }
}

/// Coefficients of the frozen operator in `out_i = sum alpha[i][l][n] d_n u_l
/// + sum beta[i][l][s] D_s u_l` with `D_s` in `(xx, xy, yy)`.
struct LinearStencil {
    alpha: [[[f64; 2]; 2]; 2],
    beta: [[[f64; 3]; 2]; 2],
}

fn linear_stencil(frozen: &FrozenHibler, dy: &Matrix2<f64>, ddy: &[Matrix2<f64>; 2]) -> LinearStencil {
    let eval = |grad: Matrix2<f64>, hess: [Matrix2<f64>; 2]| -> Vector2<f64> {
        let eps = transformed_strain(&grad, dy);
        frozen.apply(&eps, &transformed_strain_gradient(&grad, &hess, dy, ddy))
    };
    let zero = [Matrix2::zeros(); 2];
    let mut out = LinearStencil { alpha: [[[0.0; 2]; 2]; 2], beta: [[[0.0; 3]; 2]; 2] };
    for l in 0..2 {
        for n in 0..2 {
            let mut g = Matrix2::zeros();
            g[(l, n)] = 1.0;
            let v = eval(g, zero);
            for i in 0..2 {
                out.alpha[i][l][n] = v[i];
            }
        }
        let basis = [
            Matrix2::new(1.0, 0.0, 0.0, 0.0),
            Matrix2::new(0.0, 1.0, 1.0, 0.0),
            Matrix2::new(0.0, 0.0, 0.0, 1.0),
        ];
        for (s, b) in basis.iter().enumerate() {
            let mut hess = zero;
            hess[l] = *b;
            let v = eval(Matrix2::zeros(), hess);
            for i in 0..2 {
                out.beta[i][l][s] = v[i];
            }
        }
    }
    out
}

fn check_thickness(ice: &IceState, params: &RheologyParams) -> Result<(), AssemblyError> {
    for (node, &h) in ice.h.iter().enumerate() {
        if !(h > params.kappa) {
            return Err(AssemblyError::Thickness { node, h, kappa: params.kappa });
        }
    }
    Ok(())
}

fn check_lengths(grid: &AnnulusGrid, chart: &ChartState, ice: &IceState) -> Result<(), AssemblyError> {
    for len in [chart.len(), ice.u.len(), ice.h.len(), ice.a.len()] {
        grid.check_len(len).map_err(RheologyError::from)?;
    }
    Ok(())
}

/// Row stencil of the transformed Laplacian at node `p`.
fn laplacian_row(grid: &AnnulusGrid, chart: &ChartState, p: usize, scale: f64, col: impl Fn(usize) -> usize + Copy) -> Row {
    let d = grid.derivatives();
    let mut row = Row::new();
    let dg = chart.g[p] - Matrix2::identity();
    push_scaled(&mut row, grid.laplacian(), p, scale, col);
    push_scaled(&mut row, &d.dxx, p, scale * dg[(0, 0)], col);
    push_scaled(&mut row, &d.dxy, p, scale * (dg[(0, 1)] + dg[(1, 0)]), col);
    push_scaled(&mut row, &d.dyy, p, scale * dg[(1, 1)], col);
    push_scaled(&mut row, &d.dx, p, scale * chart.lap_y[p].x, col);
    push_scaled(&mut row, &d.dy, p, scale * chart.lap_y[p].y, col);
    row
}

/// Operator matrix `A~(t, w)` frozen at `(chart, ice)`, with trace rows
/// `u~ = Q (xi + Omega y^perp)` on the body ring and `u~ = 0` on the outer
/// ring. The right-hand side is left zero; see [`assemble_rhs`].
pub fn assemble_operator(
    chart: &ChartState,
    ice: &IceState,
    body: &BodyState,
    params: &RheologyParams,
    grid: &AnnulusGrid,
) -> Result<CoupledSystem, AssemblyError> {
    check_lengths(grid, chart, ice)?;
    check_thickness(ice, params)?;
    let n = grid.len();
    let layout = Layout::new(n);
    let d = grid.derivatives();
    let pressure: Vec<f64> = ice.h.iter().zip(&ice.a).map(|(&h, &a)| ice_pressure(h, a, params)).collect();
    let grad_p = d.gradient(&pressure);
    let jet = d.vector_jet(&ice.u);

    let mut rows: Vec<Row> = vec![Row::new(); layout.len()];
    let mut kinds = vec![RowKind::InteriorPde; layout.len()];
    let inner = grid.inner_ring();
    let outer = grid.outer_ring();

    for p in 0..n {
        if inner.contains(&p) {
            let rot_perp = body.q * perp(&grid.position(p));
            for c in 0..2 {
                let r = layout.u(p, c);
                kinds[r] = RowKind::Trace;
                rows[r] = vec![
                    (r, 1.0),
                    (layout.xi(0), -body.q[(c, 0)]),
                    (layout.xi(1), -body.q[(c, 1)]),
                    (layout.omega(), -rot_perp[c]),
                ];
            }
            continue;
        }
        if outer.contains(&p) {
            for c in 0..2 {
                let r = layout.u(p, c);
                kinds[r] = RowKind::Dirichlet;
                rows[r] = vec![(r, 1.0)];
            }
            continue;
        }
        let dy = &chart.dy[p];
        let eps = transformed_strain(&jet.grad[p], dy);
        let frozen = FrozenHibler::new(&eps, pressure[p], dy.transpose() * grad_p[p], params);
        let st = linear_stencil(&frozen, dy, &chart.ddy[p]);
        let scale = 1.0 / (params.rho_ice * ice.h[p]);
        let (ph, pa) = ice_pressure_partials(ice.h[p], ice.a[p], params);
        for i in 0..2 {
            let row = &mut rows[layout.u(p, i)];
            for l in 0..2 {
                let col = |q: usize| layout.u(q, l);
                for nn in 0..2 {
                    push_scaled(row, d.first(nn), p, scale * st.alpha[i][l][nn], col);
                }
                push_scaled(row, &d.dxx, p, scale * st.beta[i][l][0], col);
                push_scaled(row, &d.dxy, p, scale * st.beta[i][l][1], col);
                push_scaled(row, &d.dyy, p, scale * st.beta[i][l][2], col);
            }
            for j in 0..2 {
                push_scaled(row, d.first(j), p, scale * 0.5 * ph * dy[(j, i)], |q| layout.h(q));
                push_scaled(row, d.first(j), p, scale * 0.5 * pa * dy[(j, i)], |q| layout.a(q));
            }
        }
    }

    for p in 0..n {
        let kind = if grid.is_interior(p) { RowKind::InteriorPde } else { RowKind::Neumann };
        kinds[layout.h(p)] = kind;
        kinds[layout.a(p)] = kind;
        rows[layout.h(p)] = laplacian_row(grid, chart, p, -params.d_h, |q| layout.h(q));
        rows[layout.a(p)] = laplacian_row(grid, chart, p, -params.d_a, |q| layout.a(q));
    }

    for r in [layout.xi(0), layout.xi(1), layout.omega()] {
        kinds[r] = RowKind::Body;
        rows[r] = vec![(r, 0.0)];
    }

    Ok(CoupledSystem {
        matrix: CsrMatrix::from_rows(layout.len(), rows),
        rhs: vec![0.0; layout.len()],
        rows: kinds,
        layout,
    })
}

/// Body-frame stress `Q^T sigma Q` at the body-ring nodes.
pub fn boundary_samples(
    chart: &ChartState,
    ice: &IceState,
    body: &BodyState,
    params: &RheologyParams,
    grid: &AnnulusGrid,
) -> Vec<BoundarySample> {
    let grad = grid.derivatives().vector_gradient(&ice.u);
    grid.inner_ring()
        .map(|p| {
            let y = grid.position(p);
            let eps = transformed_strain(&grad[p], &chart.dy[p]);
            let sigma = stress_regularized(&eps, ice.h[p], ice.a[p], params).to_matrix();
            let t = body.q.transpose() * sigma * body.q;
            BoundarySample {
                y,
                normal: y / grid.r_inner(),
                stress: SymTensor2::new(t[(0, 0)], 0.5 * (t[(0, 1)] + t[(1, 0)]), t[(1, 1)]),
                weight: grid.gamma_weight(),
            }
        })
        .collect()
}

/// Ice force and torque on the body in the body frame.
pub fn ice_force_torque(
    chart: &ChartState,
    ice: &IceState,
    body: &BodyState,
    params: &RheologyParams,
    grid: &AnnulusGrid,
) -> Result<(Vector2<f64>, f64), AssemblyError> {
    Ok(boundary_force_torque(&boundary_samples(chart, ice, body, params, grid))?)
}

/// `F~(t, w) = G~(t, w) - M~ w + gyroscopic term`. Momentum rows carry
/// `f1 / (rho h)` minus transport; `h`, `a` rows carry sources minus
/// transport; body rows carry `(F~ + force) / m_B - Omega xi^perp` and
/// `(N~ + torque) / J`. Constraint rows are zero.
pub fn assemble_rhs(
    t: f64,
    chart: &ChartState,
    ice: &IceState,
    body: &BodyState,
    params: &RheologyParams,
    body_params: &BodyParams,
    grid: &AnnulusGrid,
) -> Result<Vec<f64>, AssemblyError> {
    check_lengths(grid, chart, ice)?;
    check_thickness(ice, params)?;
    let layout = Layout::new(grid.len());
    let tr = transformed_transport(chart, ice, grid)?;
    let mut f = vec![0.0; layout.len()];
    for p in 0..grid.len() {
        if grid.is_interior(p) {
            let m = forcing_f1(&ice.u[p], ice.h[p], params) / (params.rho_ice * ice.h[p]) - tr.advection[p] - tr.m_u[p];
            f[layout.u(p, 0)] = m.x;
            f[layout.u(p, 1)] = m.y;
        }
        let s_h = thermo_source_h(ice.h[p], ice.a[p], &params.growth)?;
        let s_a = thermo_source_a(ice.h[p], ice.a[p], s_h, &params.growth, params.kappa)?;
        f[layout.h(p)] = s_h - tr.div_h[p] - tr.m_h[p];
        f[layout.a(p)] = s_a - tr.div_a[p] - tr.m_a[p];
    }
    let (force, torque) = ice_force_torque(chart, ice, body, params, grid)?;
    let f_tilde = body.q.transpose() * body_params.force_at(t);
    let dxi = (f_tilde + force) / body_params.m_b - perp(&body.xi) * body.big_omega;
    f[layout.xi(0)] = dxi.x;
    f[layout.xi(1)] = dxi.y;
    f[layout.omega()] = (body_params.torque.eval(t) + torque) / body_params.j;
    Ok(f)
}

/// `I + dt A` on evolution rows; constraint rows are kept as they are.
pub fn implicit_system(sys: &CoupledSystem, dt: f64) -> CsrMatrix {
    sys.matrix.map_rows(|i, cols, vals| {
        if sys.rows[i].is_constraint() {
            cols.iter().copied().zip(vals.iter().copied()).collect()
        } else {
            let mut row: Row = cols.iter().zip(vals).map(|(&c, &v)| (c, dt * v)).collect();
            row.push((i, 1.0));
            row
        }
    })
}

/// `v_n + dt F` on evolution rows, zero on constraint rows.
pub fn implicit_rhs(sys: &CoupledSystem, dt: f64, v_n: &[f64], f: &[f64]) -> Vec<f64> {
    (0..sys.layout.len())
        .map(|i| if sys.rows[i].is_constraint() { 0.0 } else { v_n[i] + dt * f[i] })
        .collect()
}

/// Nodal restriction of a velocity field to the body ring.
pub fn trace_restrict(u: &[Vector2<f64>], grid: &AnnulusGrid) -> Vec<Vector2<f64>> {
    u[grid.inner_ring()].to_vec()
}

/// `R z = xi + Omega y^perp` at the body-ring nodes.
pub fn coupling_r(xi: &Vector2<f64>, omega: f64, grid: &AnnulusGrid) -> Vec<Vector2<f64>> {
    grid.inner_ring().map(|p| xi + perp(&grid.position(p)) * omega).collect()
}
