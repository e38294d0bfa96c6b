//! Discrete decoupling of the coupled operator matrix.
//!
//! With `A_lambda = A + diag(lambda, 0, 0)` on the coupled domain (trace rows
//! `u = R z` on the body ring) and the lifting `L0` onto the discrete kernel
//! of `A_m + lambda`, the block matrix `S = [[I, 0, -L0 R], [0, I, 0],
//! [0, 0, I]]` conjugates `A_lambda` into the decoupled matrix acting on
//! fields with zero trace.

use std::fmt;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::body::BodyState;
use crate::chart::ChartState;
use crate::grid::{
    assemble_operator, build_grid, coupling_r, AnnulusGrid, AssemblyError, CoupledSystem, CsrMatrix, GridError, Layout,
    LinearSolver, LuFactor, RowKind, SolverError, SolverKind,
};
use crate::rheology::RheologyParams;
use crate::state::IceState;

#[derive(Debug, Error)]
pub enum DeclabError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("no shift up to {max:e} made the Dirichlet system well conditioned")]
    NoShift { max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecoupleConfig {
    pub n_r: usize,
    pub n_theta: usize,
    pub samples: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DecoupleConfig {
    fn default() -> Self {
        Self {
            n_r: 17,
            n_theta: 32,
            samples: 20,
            seed: 7,
            solver: SolverKind::DirectLu,
            tolerance: 1e-10,
            max_iterations: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecoupleReport {
    pub lambda: f64,
    pub condition_estimate: f64,
    pub operator_norm: f64,
    pub tolerance: f64,
    pub samples: usize,
    /// `max |S A S^-1 x - A0 x| / (|A_lambda| |x|)` in the max norm.
    pub residual_similarity: f64,
    /// `|(A_m + lambda) L0 R e_k| / (|A_m + lambda| |L0 R e_k|)`.
    pub residual_kernel: [f64; 3],
    /// Same without the operator-norm scaling.
    pub residual_kernel_absolute: [f64; 3],
    /// `max |tr S x|` over coupled-domain samples.
    pub domain_residual: f64,
    /// `S S^-1` and `S^-1 S` reproduced the identity entry for entry.
    pub inverse_exact: bool,
}

impl fmt::Display for DecoupleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:>14}", "quantity", "value")?;
        writeln!(f, "{:<28} {:>14.6e}", "lambda", self.lambda)?;
        writeln!(f, "{:<28} {:>14.6e}", "condition_estimate", self.condition_estimate)?;
        writeln!(f, "{:<28} {:>14.6e}", "operator_norm", self.operator_norm)?;
        writeln!(f, "{:<28} {:>14.6e}", "tolerance", self.tolerance)?;
        writeln!(f, "{:<28} {:>14}", "samples", self.samples)?;
        writeln!(f, "{:<28} {:>14.6e}", "residual_similarity", self.residual_similarity)?;
        for k in 0..3 {
            writeln!(f, "{:<28} {:>14.6e}", format!("residual_kernel[{k}]"), self.residual_kernel[k])?;
        }
        writeln!(f, "{:<28} {:>14.6e}", "domain_residual", self.domain_residual)?;
        writeln!(f, "{:<28} {:>14}", "inverse_exact", self.inverse_exact)
    }
}

impl DecoupleReport {
    /// `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("lambda", format!("{:e}", self.lambda));
        put("condition_estimate", format!("{:e}", self.condition_estimate));
        put("operator_norm", format!("{:e}", self.operator_norm));
        put("tolerance", format!("{:e}", self.tolerance));
        put("samples", self.samples.to_string());
        put("residual_similarity", format!("{:e}", self.residual_similarity));
        for k in 0..3 {
            put(&format!("residual_kernel_{k}"), format!("{:e}", self.residual_kernel[k]));
        }
        put("domain_residual", format!("{:e}", self.domain_residual));
        put("inverse_exact", self.inverse_exact.to_string());
        s
    }
}

/// Frozen state used by the lab: admissible, with nonzero strain so that
/// the coefficients are genuinely variable.
pub fn frozen_state(grid: &AnnulusGrid) -> IceState {
    let x = grid.positions();
    let (rb, ro) = (grid.r_inner(), grid.r_outer());
    IceState {
        u: x.iter()
            .map(|p| {
                let s = (p.norm() - rb) / (ro - rb);
                Vector2::new(0.3 * p.y, -0.2 * p.x + 0.1 * p.y * p.y) * (s * (1.0 - s))
            })
            .collect(),
        h: x.iter().map(|p| 1.0 + 0.2 * (0.8 * p.x).cos() * (0.5 * p.y).sin()).collect(),
        a: x.iter().map(|p| 0.85 + 0.05 * (0.6 * p.x + 0.3 * p.y).sin()).collect(),
    }
}

pub fn lab_params() -> RheologyParams {
    RheologyParams { delta: 1e-2, p_star: 1.0, c_pressure: 2.0, rho_ice: 1.0, d_h: 0.1, d_a: 0.05, ..RheologyParams::default() }
}

/// Assembled pieces of the lab at a fixed shift.
pub struct Lab {
    pub grid: AnnulusGrid,
    pub system: CoupledSystem,
    pub lambda: f64,
    pub condition_estimate: f64,
    /// Dirichlet matrix: `A_m + lambda` on interior velocity rows, identity on
    /// both rings.
    pub dirichlet: CsrMatrix,
}

fn is_ring_velocity(kind: RowKind) -> bool {
    matches!(kind, RowKind::Trace | RowKind::Dirichlet)
}

fn velocity_dirichlet(sys: &CoupledSystem, lambda: f64) -> CsrMatrix {
    let n2 = 2 * sys.layout.nodes;
    let rows = (0..n2)
        .map(|i| {
            if is_ring_velocity(sys.rows[i]) {
                vec![(i, 1.0)]
            } else {
                let mut r: Vec<(usize, f64)> = sys.matrix.row_entries(i).filter(|&(c, _)| c < n2).collect();
                r.push((i, lambda));
                r
            }
        })
        .collect();
    CsrMatrix::from_rows(n2, rows)
}

impl Lab {
    /// Assembles at `t = 0` and picks the smallest shift `1, 2, 4, ...` for
    /// which the Dirichlet system factors with condition estimate below
    /// `1e12`.
    pub fn new(grid: AnnulusGrid, ice: &IceState, params: &RheologyParams) -> Result<Self, DeclabError> {
        let system = assemble_operator(&ChartState::identity(&grid), ice, &BodyState::at_rest(), params, &grid)?;
        let mut lambda = 1.0;
        for _ in 0..60 {
            let m = velocity_dirichlet(&system, lambda);
            if let Ok(lu) = LuFactor::new(&m) {
                let cond = lu.condition_estimate(&m);
                if cond < 1e12 {
                    return Ok(Self { grid, system, lambda, condition_estimate: cond, dirichlet: m });
                }
            }
            lambda *= 2.0;
        }
        Err(DeclabError::NoShift { max: lambda })
    }

    pub fn layout(&self) -> Layout {
        self.system.layout
    }

    /// `L0 g`: the discrete kernel element with body-ring trace `g` and zero
    /// outer trace.
    pub fn discrete_l0(&self, g: &[Vector2<f64>], solver: &mut LinearSolver) -> Result<Vec<Vector2<f64>>, DeclabError> {
        let l = self.layout();
        let mut b = vec![0.0; 2 * l.nodes];
        for (k, p) in self.grid.inner_ring().enumerate() {
            b[l.u(p, 0)] = g[k].x;
            b[l.u(p, 1)] = g[k].y;
        }
        let x = solver.solve(&self.dirichlet, &b)?.x;
        let mut u: Vec<Vector2<f64>> = (0..l.nodes).map(|p| Vector2::new(x[l.u(p, 0)], x[l.u(p, 1)])).collect();
        // The ring rows are identities; store their data verbatim rather
        // than the solver's rounding of it.
        for (k, p) in self.grid.inner_ring().enumerate() {
            u[p] = g[k];
        }
        for p in self.grid.outer_ring() {
            u[p] = Vector2::zeros();
        }
        Ok(u)
    }

    /// `A_lambda w` on the ground space: interior velocity rows carry
    /// `(A_m + lambda) u + B (h, a)`, `h`, `a` rows carry `-D`, ring
    /// velocity rows and body rows are zero.
    pub fn apply_shifted(&self, w: &[f64]) -> Vec<f64> {
        let mut y = self.system.matrix.mul_vec(w);
        let n2 = 2 * self.layout().nodes;
        for i in 0..y.len() {
            match self.system.rows[i] {
                RowKind::Trace | RowKind::Dirichlet | RowKind::Body => y[i] = 0.0,
                _ if i < n2 => y[i] += self.lambda * w[i],
                _ => {}
            }
        }
        y
    }

    pub fn shifted_norm(&self) -> f64 {
        self.dirichlet.norm_inf().max(self.system.matrix.norm_inf() + self.lambda)
    }
}

/// `(S, S^-1)` from the three lifted columns `L0 R e_k`.
pub fn build_s(layout: Layout, columns: &[Vec<Vector2<f64>>; 3]) -> (CsrMatrix, CsrMatrix) {
    let n = layout.len();
    let make = |sign: f64| {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 1.0)];
                if i < 2 * layout.nodes {
                    let (p, c) = (i / 2, i % 2);
                    for (k, col) in columns.iter().enumerate() {
                        let target = if k < 2 { layout.xi(k) } else { layout.omega() };
                        r.push((target, sign * col[p][c]));
                    }
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    };
    (make(-1.0), make(1.0))
}

fn is_identity(m: &CsrMatrix) -> bool {
    (0..m.nrows()).all(|i| m.row_entries(i).all(|(j, v)| if i == j { v == 1.0 } else { v == 0.0 }))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random vector of the decoupled domain: Gaussian entries with the velocity
/// zeroed on both rings.
fn decoupled_sample(lab: &Lab, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = lab.layout();
    let mut x = gaussian(rng, l.len());
    for p in lab.grid.inner_ring().chain(lab.grid.outer_ring()) {
        x[l.u(p, 0)] = 0.0;
        x[l.u(p, 1)] = 0.0;
    }
    x
}

pub fn similarity_check(cfg: &DecoupleConfig) -> Result<DecoupleReport, DeclabError> {
    let grid = build_grid(0.5, 2.0, cfg.n_r, cfg.n_theta)?;
    let ice = frozen_state(&grid);
    let lab = Lab::new(grid, &ice, &lab_params())?;
    similarity_check_on(&lab, cfg)
}

pub fn similarity_check_on(lab: &Lab, cfg: &DecoupleConfig) -> Result<DecoupleReport, DeclabError> {
    let l = lab.layout();
    let mut solver = LinearSolver::new(cfg.solver, cfg.tolerance, cfg.max_iterations);
    let basis = [(Vector2::new(1.0, 0.0), 0.0), (Vector2::new(0.0, 1.0), 0.0), (Vector2::zeros(), 1.0)];
    let mut columns: [Vec<Vector2<f64>>; 3] = Default::default();
    for (col, (xi, om)) in columns.iter_mut().zip(basis) {
        *col = lab.discrete_l0(&coupling_r(&xi, om, &lab.grid), &mut solver)?;
    }

    let a_norm = lab.shifted_norm();
    let dnorm = lab.dirichlet.norm_inf();
    let mut residual_kernel = [0.0; 3];
    let mut residual_kernel_absolute = [0.0; 3];
    for k in 0..3 {
        let flat: Vec<f64> = columns[k].iter().flat_map(|v| [v.x, v.y]).collect();
        let mut r = lab.dirichlet.mul_vec(&flat);
        for i in 0..r.len() {
            if is_ring_velocity(lab.system.rows[i]) {
                r[i] = 0.0;
            }
        }
        residual_kernel_absolute[k] = max_abs(&r) / max_abs(&flat);
        residual_kernel[k] = residual_kernel_absolute[k] / dnorm;
    }

    let (s, s_inv) = build_s(l, &columns);
    let inverse_exact = is_identity(&s.matmul(&s_inv)) && is_identity(&s_inv.matmul(&s));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut residual_similarity: f64 = 0.0;
    let mut domain_residual: f64 = 0.0;
    for _ in 0..cfg.samples {
        let x = decoupled_sample(lab, &mut rng);
        let lhs = s.mul_vec(&lab.apply_shifted(&s_inv.mul_vec(&x)));
        let rhs = lab.apply_shifted(&x);
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        residual_similarity = residual_similarity.max(max_abs(&diff) / (a_norm * max_abs(&x)));

        // A coupled-domain vector: trace equals R z on the body ring.
        let mut w = gaussian(&mut rng, l.len());
        let z = (Vector2::new(w[l.xi(0)], w[l.xi(1)]), w[l.omega()]);
        let rz = coupling_r(&z.0, z.1, &lab.grid);
        for (k, p) in lab.grid.inner_ring().enumerate() {
            w[l.u(p, 0)] = rz[k].x;
            w[l.u(p, 1)] = rz[k].y;
        }
        for p in lab.grid.outer_ring() {
            w[l.u(p, 0)] = 0.0;
            w[l.u(p, 1)] = 0.0;
        }
        let sw = s.mul_vec(&w);
        for p in lab.grid.inner_ring() {
            domain_residual = domain_residual.max(sw[l.u(p, 0)].abs()).max(sw[l.u(p, 1)].abs());
        }
    }

    Ok(DecoupleReport {
        lambda: lab.lambda,
        condition_estimate: lab.condition_estimate,
        operator_norm: a_norm,
        tolerance: cfg.tolerance,
        samples: cfg.samples,
        residual_similarity,
        residual_kernel,
        residual_kernel_absolute,
        domain_residual,
        inverse_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::perp;

    fn lab() -> Lab {
        let grid = build_grid(0.5, 2.0, 10, 16).unwrap();
        let ice = frozen_state(&grid);
        Lab::new(grid, &ice, &lab_params()).unwrap()
    }

    #[test]
    fn l0_examples() {
        let lab = lab();
        let mut solver = LinearSolver::new(SolverKind::DirectLu, 1e-12, 10);
        let n_g = lab.grid.inner_ring().len();
        let zero = lab.discrete_l0(&vec![Vector2::zeros(); n_g], &mut solver).unwrap();
        assert!(zero.iter().all(|v| v.norm() == 0.0));

        let g1: Vec<Vector2<f64>> = (0..n_g).map(|k| Vector2::new((k as f64).sin(), 0.5)).collect();
        let g2: Vec<Vector2<f64>> = (0..n_g).map(|k| Vector2::new(-0.2, (k as f64 * 0.3).cos())).collect();
        let sum: Vec<Vector2<f64>> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let (u1, u2, u12) = (
            lab.discrete_l0(&g1, &mut solver).unwrap(),
            lab.discrete_l0(&g2, &mut solver).unwrap(),
            lab.discrete_l0(&sum, &mut solver).unwrap(),
        );
        for p in 0..u1.len() {
            assert!((u1[p] + u2[p] - u12[p]).norm() < 1e-10);
        }
        for (k, p) in lab.grid.inner_ring().enumerate() {
            assert_eq!(u1[p], g1[k]);
        }
        let e3 = lab.discrete_l0(&coupling_r(&Vector2::zeros(), 1.0, &lab.grid), &mut solver).unwrap();
        for p in lab.grid.inner_ring() {
            assert_eq!(e3[p], perp(&lab.grid.position(p)));
        }
    }

    #[test]
    fn s_with_zero_tail_is_identity_on_x() {
        let lab = lab();
        let l = lab.layout();
        let cols = [vec![Vector2::new(1.5, -2.0); l.nodes], vec![Vector2::new(0.1, 3.0); l.nodes], vec![Vector2::new(-0.7, 0.2); l.nodes]];
        let (s, s_inv) = build_s(l, &cols);
        let mut x: Vec<f64> = (0..l.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        x[l.xi(0)] = 0.0;
        x[l.xi(1)] = 0.0;
        x[l.omega()] = 0.0;
        assert_eq!(s.mul_vec(&x), x);
        assert!(is_identity(&s.matmul(&s_inv)));
    }

    #[test]
    fn small_similarity_run() {
        let cfg = DecoupleConfig { n_r: 10, n_theta: 16, samples: 4, ..DecoupleConfig::default() };
        let r = similarity_check(&cfg).unwrap();
        assert!(r.residual_similarity <= 10.0 * cfg.tolerance, "{r}");
        assert!(r.residual_kernel.iter().all(|&k| k <= cfg.tolerance));
        assert!(r.domain_residual < 1e-14);
        assert!(r.inverse_exact);
    }
}
