//! Structured polar mesh of the reference annulus and its difference
//! stencils.
//!
//! Nodes sit on `n_r` rings `r_i = R_B + i dr` (ring 0 is the body boundary,
//! ring `n_r - 1` the outer boundary) at angles `theta_j = j dtheta`. Node
//! `(i, j)` has index `i * n_theta + j`. Unknowns are Cartesian components;
//! Cartesian derivatives are built from polar stencils by the chain rule.
//!
//! Angular stencils are trigonometrically fitted: the first and second
//! differences use `2 sin(dtheta)` and `2 (1 - cos(dtheta))` as denominators,
//! which makes them exact on the first Fourier mode. Combined with exact
//! radial differences of linear functions this reproduces derivatives of
//! affine maps to rounding, which rigid-motion charts rely on.

mod assembly;
mod interp;
mod solver;
mod sparse;

pub use assembly::{
    assemble_operator, assemble_rhs, boundary_samples, coupling_r, ice_force_torque, implicit_rhs, implicit_system,
    trace_restrict, AssemblyError, CoupledSystem, Layout, RowKind,
};
pub use interp::Interpolant;
pub use solver::{bicgstab_ilu, bicgstab_jacobi, Ilu0, LinearSolver, LuFactor, SolveReport, SolverError, SolverKind};
pub use sparse::CsrMatrix;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("radii must satisfy 0 < R_B < R_O, got R_B = {r_inner}, R_O = {r_outer}")]
    InvalidRadii { r_inner: f64, r_outer: f64 },
    #[error("need n_r >= 8 and n_theta >= 16 divisible by 4, got n_r = {n_r}, n_theta = {n_theta}")]
    InvalidCounts { n_r: usize, n_theta: usize },
    #[error("field has {got} entries, grid has {expected} nodes")]
    FieldLength { expected: usize, got: usize },
}

/// Sparse Cartesian difference operators on the node set.
#[derive(Clone, Debug)]
pub struct DerivativeOps {
    pub dx: CsrMatrix,
    pub dy: CsrMatrix,
    pub dxx: CsrMatrix,
    pub dxy: CsrMatrix,
    pub dyy: CsrMatrix,
}

/// First and second derivatives of a vector field at every node;
/// `grad[p][(l, n)] = d_n u_l`, `hess[p][l][(m, n)] = d_m d_n u_l`.
#[derive(Clone, Debug)]
pub struct VectorJet {
    pub grad: Vec<Matrix2<f64>>,
    pub hess: Vec<[Matrix2<f64>; 2]>,
}

impl DerivativeOps {
    pub fn first(&self, n: usize) -> &CsrMatrix {
        if n == 0 {
            &self.dx
        } else {
            &self.dy
        }
    }

    pub fn second(&self, m: usize, n: usize) -> &CsrMatrix {
        match (m, n) {
            (0, 0) => &self.dxx,
            (1, 1) => &self.dyy,
            _ => &self.dxy,
        }
    }

    pub fn gradient(&self, f: &[f64]) -> Vec<Vector2<f64>> {
        let gx = self.dx.mul_vec(f);
        let gy = self.dy.mul_vec(f);
        gx.into_iter().zip(gy).map(|(x, y)| Vector2::new(x, y)).collect()
    }

    pub fn hessian(&self, f: &[f64]) -> Vec<Matrix2<f64>> {
        let xx = self.dxx.mul_vec(f);
        let xy = self.dxy.mul_vec(f);
        let yy = self.dyy.mul_vec(f);
        (0..f.len()).map(|p| Matrix2::new(xx[p], xy[p], xy[p], yy[p])).collect()
    }

    pub fn vector_gradient(&self, u: &[Vector2<f64>]) -> Vec<Matrix2<f64>> {
        let (ux, uy) = split(u);
        let gx = self.gradient(&ux);
        let gy = self.gradient(&uy);
        gx.iter().zip(&gy).map(|(a, b)| Matrix2::new(a.x, a.y, b.x, b.y)).collect()
    }

    pub fn vector_jet(&self, u: &[Vector2<f64>]) -> VectorJet {
        let (ux, uy) = split(u);
        let hx = self.hessian(&ux);
        let hy = self.hessian(&uy);
        VectorJet {
            grad: self.vector_gradient(u),
            hess: hx.into_iter().zip(hy).map(|(a, b)| [a, b]).collect(),
        }
    }

    /// `d_m` of every entry of a matrix field.
    pub fn matrix_gradient(&self, m: &[Matrix2<f64>]) -> Vec<[Matrix2<f64>; 2]> {
        let mut out = vec![[Matrix2::zeros(); 2]; m.len()];
        for r in 0..2 {
            for c in 0..2 {
                let f: Vec<f64> = m.iter().map(|x| x[(r, c)]).collect();
                let g = self.gradient(&f);
                for (o, g) in out.iter_mut().zip(&g) {
                    o[0][(r, c)] = g.x;
                    o[1][(r, c)] = g.y;
                }
            }
        }
        out
    }
}

pub fn split(u: &[Vector2<f64>]) -> (Vec<f64>, Vec<f64>) {
    (u.iter().map(|v| v.x).collect(), u.iter().map(|v| v.y).collect())
}

#[derive(Clone, Debug)]
pub struct AnnulusGrid {
    r_inner: f64,
    r_outer: f64,
    n_r: usize,
    n_theta: usize,
    dr: f64,
    dtheta: f64,
    positions: Vec<Vector2<f64>>,
    area: Vec<f64>,
    ops: DerivativeOps,
    laplacian: CsrMatrix,
}

type Stencil = Vec<(usize, f64)>;

pub fn build_grid(r_inner: f64, r_outer: f64, n_r: usize, n_theta: usize) -> Result<AnnulusGrid, GridError> {
    if !(r_inner > 0.0 && r_outer > r_inner && r_outer.is_finite()) {
        return Err(GridError::InvalidRadii { r_inner, r_outer });
    }
    if n_r < 8 || n_theta < 16 || n_theta % 4 != 0 {
        return Err(GridError::InvalidCounts { n_r, n_theta });
    }
    let dr = (r_outer - r_inner) / (n_r - 1) as f64;
    let dtheta = std::f64::consts::TAU / n_theta as f64;
    let mut grid = AnnulusGrid {
        r_inner,
        r_outer,
        n_r,
        n_theta,
        dr,
        dtheta,
        positions: Vec::new(),
        area: Vec::new(),
        ops: DerivativeOps {
            dx: CsrMatrix::identity(0),
            dy: CsrMatrix::identity(0),
            dxx: CsrMatrix::identity(0),
            dxy: CsrMatrix::identity(0),
            dyy: CsrMatrix::identity(0),
        },
        laplacian: CsrMatrix::identity(0),
    };
    let n = n_r * n_theta;
    grid.positions = (0..n)
        .map(|p| {
            let (i, j) = grid.ij(p);
            let (s, c) = grid.theta(j).sin_cos();
            Vector2::new(grid.radius(i) * c, grid.radius(i) * s)
        })
        .collect();
    grid.area = (0..n).map(|p| grid.radius(grid.ij(p).0) * grid.radial_width(grid.ij(p).0) * dtheta).collect();

    let mut rows: [Vec<Stencil>; 5] = Default::default();
    for p in 0..n {
        for (k, st) in grid.cartesian_stencils(p).into_iter().enumerate() {
            rows[k].push(st);
        }
    }
    let [dx, dy, dxx, dxy, dyy] = rows.map(|r| CsrMatrix::from_rows(n, r));
    grid.ops = DerivativeOps { dx, dy, dxx, dxy, dyy };
    grid.laplacian = CsrMatrix::from_rows(n, (0..n).map(|p| grid.fv_laplacian_row(p)).collect());
    Ok(grid)
}

impl AnnulusGrid {
    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }

    pub fn r_outer(&self) -> f64 {
        self.r_outer
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j % self.n_theta
    }

    pub fn ij(&self, p: usize) -> (usize, usize) {
        (p / self.n_theta, p % self.n_theta)
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.r_inner + i as f64 * self.dr
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta
    }

    pub fn position(&self, p: usize) -> Vector2<f64> {
        self.positions[p]
    }

    pub fn positions(&self) -> &[Vector2<f64>] {
        &self.positions
    }

    /// Node indices on the body boundary ring.
    pub fn inner_ring(&self) -> std::ops::Range<usize> {
        0..self.n_theta
    }

    /// Node indices on the outer boundary ring.
    pub fn outer_ring(&self) -> std::ops::Range<usize> {
        let s = (self.n_r - 1) * self.n_theta;
        s..s + self.n_theta
    }

    pub fn is_interior(&self, p: usize) -> bool {
        let i = p / self.n_theta;
        i > 0 && i + 1 < self.n_r
    }

    pub fn check_len(&self, got: usize) -> Result<(), GridError> {
        if got == self.len() {
            Ok(())
        } else {
            Err(GridError::FieldLength { expected: self.len(), got })
        }
    }

    pub fn derivatives(&self) -> &DerivativeOps {
        &self.ops
    }

    /// Node-centred finite-volume Laplacian with zero flux through both
    /// rings. `area`-weighted column sums vanish, so it conserves the
    /// discrete integral exactly.
    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    /// Control-volume areas (trapezoidal in r, so boundary cells are half
    /// width).
    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.area.iter().zip(f).map(|(w, f)| w * f).sum()
    }

    /// Trapezoidal arc-length weight of each node on the body ring.
    pub fn gamma_weight(&self) -> f64 {
        self.r_inner * self.dtheta
    }

    pub fn outer_weight(&self) -> f64 {
        self.r_outer * self.dtheta
    }

    fn radial_width(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n_r {
            0.5 * self.dr
        } else {
            self.dr
        }
    }

    fn radial_first(&self, i: usize) -> Stencil {
        let h = 2.0 * self.dr;
        let last = self.n_r - 1;
        if i == 0 {
            vec![(0, -3.0 / h), (1, 4.0 / h), (2, -1.0 / h)]
        } else if i == last {
            vec![(last, 3.0 / h), (last - 1, -4.0 / h), (last - 2, 1.0 / h)]
        } else {
            vec![(i - 1, -1.0 / h), (i + 1, 1.0 / h)]
        }
    }

    fn radial_second(&self, i: usize) -> Stencil {
        let h2 = self.dr * self.dr;
        let last = self.n_r - 1;
        if i == 0 {
            vec![(0, 2.0 / h2), (1, -5.0 / h2), (2, 4.0 / h2), (3, -1.0 / h2)]
        } else if i == last {
            vec![(last, 2.0 / h2), (last - 1, -5.0 / h2), (last - 2, 4.0 / h2), (last - 3, -1.0 / h2)]
        } else {
            vec![(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]
        }
    }

    fn angular_first(&self, j: usize) -> Stencil {
        let w = 1.0 / (2.0 * self.dtheta.sin());
        let n = self.n_theta;
        vec![((j + n - 1) % n, -w), ((j + 1) % n, w)]
    }

    fn angular_second(&self, j: usize) -> Stencil {
        let w = 1.0 / (2.0 * (1.0 - self.dtheta.cos()));
        let n = self.n_theta;
        vec![((j + n - 1) % n, w), (j, -2.0 * w), ((j + 1) % n, w)]
    }

    fn tensor(&self, radial: &Stencil, angular: &Stencil, scale: f64) -> Stencil {
        let mut out = Vec::with_capacity(radial.len() * angular.len());
        for &(i, wr) in radial {
            for &(j, wt) in angular {
                out.push((self.node(i, j), scale * wr * wt));
            }
        }
        out
    }

    /// Stencils of `d_x, d_y, d_xx, d_xy, d_yy` at node `p`.
    fn cartesian_stencils(&self, p: usize) -> [Stencil; 5] {
        let (i, j) = self.ij(p);
        let r = self.radius(i);
        let (s, c) = self.theta(j).sin_cos();
        let id_r = vec![(i, 1.0)];
        let id_t = vec![(j, 1.0)];
        let r1 = self.radial_first(i);
        let r2 = self.radial_second(i);
        let t1 = self.angular_first(j);
        let t2 = self.angular_second(j);

        // Coefficients of (f_r, f_rr, f_t, f_tt, f_rt) in each Cartesian derivative.
        let (cc, ss, cs, dd) = (c * c, s * s, c * s, c * c - s * s);
        let coeffs: [[f64; 5]; 5] = [
            [c, 0.0, -s / r, 0.0, 0.0],
            [s, 0.0, c / r, 0.0, 0.0],
            [ss / r, cc, 2.0 * cs / (r * r), ss / (r * r), -2.0 * cs / r],
            [-cs / r, cs, -dd / (r * r), -cs / (r * r), dd / r],
            [cc / r, ss, -2.0 * cs / (r * r), cc / (r * r), 2.0 * cs / r],
        ];
        coeffs.map(|k| {
            let parts = [(&r1, &id_t), (&r2, &id_t), (&id_r, &t1), (&id_r, &t2), (&r1, &t1)];
            let mut st = Vec::new();
            for ((radial, angular), &w) in parts.into_iter().zip(&k) {
                // Structurally absent terms stay out of the pattern.
                if w != 0.0 {
                    st.extend(self.tensor(radial, angular, w));
                }
            }
            st
        })
    }

    fn fv_laplacian_row(&self, p: usize) -> Stencil {
        let (i, j) = self.ij(p);
        let r = self.radius(i);
        let dr2 = self.dr * self.dr;
        let mut row = Vec::new();
        let mut flux = |i2: usize, rf: f64, scale: f64| {
            let w = scale * rf / (r * dr2);
            row.push((self.node(i2, j), w));
            row.push((p, -w));
        };
        let last = self.n_r - 1;
        if i == 0 {
            flux(1, r + 0.5 * self.dr, 2.0);
        } else if i == last {
            flux(last - 1, r - 0.5 * self.dr, 2.0);
        } else {
            flux(i + 1, r + 0.5 * self.dr, 1.0);
            flux(i - 1, r - 0.5 * self.dr, 1.0);
        }
        let w = 1.0 / (r * r * 2.0 * (1.0 - self.dtheta.cos()));
        let n = self.n_theta;
        row.push((self.node(i, (j + n - 1) % n), w));
        row.push((p, -2.0 * w));
        row.push((self.node(i, (j + 1) % n), w));
        row
    }

    /// Conservative finite-volume divergence of a nodal flux field. Fluxes
    /// through the two rings are taken from the boundary nodes themselves, so
    /// the area-weighted sum equals the net boundary outflow.
    pub fn fv_divergence(&self, flux: &[Vector2<f64>]) -> Vec<f64> {
        assert_eq!(flux.len(), self.len());
        let n = self.n_theta;
        let last = self.n_r - 1;
        let half = 0.5 * self.dtheta;
        (0..self.len())
            .map(|p| {
                let (i, j) = self.ij(p);
                let r = self.radius(i);
                let (s, c) = self.theta(j).sin_cos();
                let er = Vector2::new(c, s);
                let fr = |q: usize| flux[q].dot(&er);
                let mut out = 0.0;
                let face = |rf: f64, q: usize| rf * 0.5 * (fr(p) + fr(q)) * self.dtheta;
                if i < last {
                    out += face(r + 0.5 * self.dr, self.node(i + 1, j));
                } else {
                    out += r * fr(p) * self.dtheta;
                }
                if i > 0 {
                    out -= face(r - 0.5 * self.dr, self.node(i - 1, j));
                } else {
                    out -= r * fr(p) * self.dtheta;
                }
                let width = self.radial_width(i);
                let tp = self.theta(j) + half;
                let tm = self.theta(j) - half;
                let ep = Vector2::new(-tp.sin(), tp.cos());
                let em = Vector2::new(-tm.sin(), tm.cos());
                let qp = self.node(i, (j + 1) % n);
                let qm = self.node(i, (j + n - 1) % n);
                out += width * 0.5 * (flux[p] + flux[qp]).dot(&ep);
                out -= width * 0.5 * (flux[p] + flux[qm]).dot(&em);
                out / self.area[p]
            })
            .collect()
    }
}
