//! Pointwise constitutive law of the regularized viscous-plastic model.
//!
//! Everything here is a pure function of its arguments. The field-level
//! operator [`hibler_apply`] evaluates the non-divergence form of Hibler's
//! operator node by node using the grid's finite-difference stencils.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{AnnulusGrid, GridError};

/// Rank-4 coefficient array indexed `[i][j][k][l]`.
pub type Coeff4 = [[[[f64; 2]; 2]; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum RheologyError {
    #[error("invalid rheology parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("compactness must be positive for the growth source, got {0}")]
    ZeroCompactness(f64),
    #[error("thickness must be positive, got {0}")]
    NonPositiveThickness(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Symmetric 2x2 tensor stored by its three independent entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub e11: f64,
    pub e12: f64,
    pub e22: f64,
}

impl SymTensor2 {
    pub const ZERO: Self = Self { e11: 0.0, e12: 0.0, e22: 0.0 };

    pub fn new(e11: f64, e12: f64, e22: f64) -> Self {
        Self { e11, e12, e22 }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        self.e11 + self.e22
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.e11,
            (1, 1) => self.e22,
            _ => self.e12,
        }
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.e11, self.e12, self.e12, self.e22)
    }

    /// Frobenius pairing of two symmetric tensors.
    pub fn dot(&self, other: &Self) -> f64 {
        self.e11 * other.e11 + 2.0 * self.e12 * other.e12 + self.e22 * other.e22
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.e11, s * self.e12, s * self.e22)
    }

    pub fn mul_vec(&self, v: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.e11 * v.x + self.e12 * v.y,
            self.e12 * v.x + self.e22 * v.y,
        )
    }
}

/// Quadratic drag block `rho * C * |U - u| * R(angle) * (U - u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DragParams {
    pub density: f64,
    pub drag: f64,
    /// Turning angle of the drag rotation matrix, radians.
    pub angle: f64,
    pub velocity: [f64; 2],
}

impl DragParams {
    pub fn none() -> Self {
        Self { density: 0.0, drag: 0.0, angle: 0.0, velocity: [0.0, 0.0] }
    }

    fn rotate(&self, v: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.angle.sin_cos();
        Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Drag exerted by a fluid moving with `velocity` on ice moving with `u`.
    pub fn stress(&self, u: &Vector2<f64>) -> Vector2<f64> {
        let rel = Vector2::new(self.velocity[0], self.velocity[1]) - u;
        self.rotate(rel) * (self.density * self.drag * rel.norm())
    }
}

/// Ice growth rate `f` as a function of thickness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthRate {
    Zero,
    Constant { value: f64 },
    /// `f(x) = f_inf + (f0 - f_inf) * (1 - tanh(x / scale))`.
    Tanh { f0: f64, f_inf: f64, scale: f64 },
}

impl GrowthRate {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            GrowthRate::Zero => 0.0,
            GrowthRate::Constant { value } => value,
            GrowthRate::Tanh { f0, f_inf, scale } => f_inf + (f0 - f_inf) * (1.0 - (x / scale).tanh()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RheologyParams {
    pub e: f64,
    pub delta: f64,
    pub p_star: f64,
    pub c_pressure: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub rho_ice: f64,
    pub d_h: f64,
    pub d_a: f64,
    pub c_cor: f64,
    pub g_grav: f64,
    /// Constant sea-surface tilt `grad H`.
    pub surface_tilt: [f64; 2],
    pub atmosphere: DragParams,
    pub ocean: DragParams,
    pub growth: GrowthRate,
}

impl Default for RheologyParams {
    fn default() -> Self {
        Self {
            e: 2.0,
            delta: 2e-9,
            p_star: 27500.0,
            c_pressure: 20.0,
            kappa: 0.05,
            alpha: 0.05,
            rho_ice: 900.0,
            d_h: 1e-3,
            d_a: 1e-3,
            c_cor: 0.0,
            g_grav: 9.81,
            surface_tilt: [0.0, 0.0],
            atmosphere: DragParams::none(),
            ocean: DragParams::none(),
            growth: GrowthRate::Zero,
        }
    }
}

impl RheologyParams {
    pub fn validate(&self) -> Result<(), RheologyError> {
        let checks: [(&'static str, f64, bool); 8] = [
            ("e", self.e, self.e > 1.0),
            ("delta", self.delta, self.delta > 0.0),
            ("kappa", self.kappa, self.kappa > 0.0),
            ("alpha", self.alpha, self.alpha > 0.0 && self.alpha < 0.5),
            ("p_star", self.p_star, self.p_star > 0.0),
            ("rho_ice", self.rho_ice, self.rho_ice > 0.0),
            ("d_h", self.d_h, self.d_h > 0.0),
            ("d_a", self.d_a, self.d_a > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(RheologyError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

/// `eps = (grad_u + grad_u^T) / 2` where `grad_u[(l, n)] = d_n u_l`.
pub fn deformation_tensor(grad_u: &Matrix2<f64>) -> SymTensor2 {
    SymTensor2::new(
        grad_u[(0, 0)],
        0.5 * (grad_u[(0, 1)] + grad_u[(1, 0)]),
        grad_u[(1, 1)],
    )
}

pub fn s_map(eps: &SymTensor2, e: f64) -> SymTensor2 {
    let ie2 = 1.0 / (e * e);
    SymTensor2::new(
        (1.0 + ie2) * eps.e11 + (1.0 - ie2) * eps.e22,
        ie2 * 2.0 * eps.e12,
        (1.0 - ie2) * eps.e11 + (1.0 + ie2) * eps.e22,
    )
}

/// Entry of the 4x4 matrix of `S` acting on `(e11, e12, e21, e22)`.
pub fn s_matrix(e: f64) -> [[f64; 4]; 4] {
    let ie2 = 1.0 / (e * e);
    [
        [1.0 + ie2, 0.0, 0.0, 1.0 - ie2],
        [0.0, ie2, ie2, 0.0],
        [0.0, ie2, ie2, 0.0],
        [1.0 - ie2, 0.0, 0.0, 1.0 + ie2],
    ]
}

/// `S_ij^kl`, read off the 4x4 matrix as row `(i,k)` and column `(j,l)`.
pub fn s_entry(i: usize, j: usize, k: usize, l: usize, e: f64) -> f64 {
    s_matrix(e)[2 * i + k][2 * j + l]
}

pub fn delta_squared(eps: &SymTensor2, e: f64) -> f64 {
    let ie2 = 1.0 / (e * e);
    (eps.e11 * eps.e11 + eps.e22 * eps.e22) * (1.0 + ie2)
        + 4.0 * ie2 * eps.e12 * eps.e12
        + 2.0 * eps.e11 * eps.e22 * (1.0 - ie2)
}

pub fn delta_reg(eps: &SymTensor2, delta: f64, e: f64) -> f64 {
    (delta + delta_squared(eps, e).max(0.0)).sqrt()
}

pub fn ice_pressure(h: f64, a: f64, params: &RheologyParams) -> f64 {
    params.p_star * h * (-params.c_pressure * (1.0 - a)).exp()
}

/// Reference-frame derivatives `(dP/dh, dP/da)`.
pub fn ice_pressure_partials(h: f64, a: f64, params: &RheologyParams) -> (f64, f64) {
    let ex = params.p_star * (-params.c_pressure * (1.0 - a)).exp();
    (ex, params.c_pressure * h * ex)
}

/// Viscous part `S_delta(eps, P) = (P/2) S eps / Delta_delta(eps)`.
pub fn viscous_stress(eps: &SymTensor2, pressure: f64, params: &RheologyParams) -> SymTensor2 {
    let d = delta_reg(eps, params.delta, params.e);
    s_map(eps, params.e).scale(0.5 * pressure / d)
}

pub fn stress_from_pressure(eps: &SymTensor2, pressure: f64, params: &RheologyParams) -> SymTensor2 {
    let s = viscous_stress(eps, pressure, params);
    SymTensor2::new(s.e11 - 0.5 * pressure, s.e12, s.e22 - 0.5 * pressure)
}

pub fn stress_regularized(eps: &SymTensor2, h: f64, a: f64, params: &RheologyParams) -> SymTensor2 {
    stress_from_pressure(eps, ice_pressure(h, a, params), params)
}

pub fn hibler_coefficients(eps: &SymTensor2, pressure: f64, params: &RheologyParams) -> Coeff4 {
    let d = delta_reg(eps, params.delta, params.e);
    let se = s_map(eps, params.e);
    let s = s_matrix(params.e);
    let pre = 0.5 * pressure / d;
    let id2 = 1.0 / (d * d);
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for (i, oi) in out.iter_mut().enumerate() {
        for (j, oj) in oi.iter_mut().enumerate() {
            for (k, ok) in oj.iter_mut().enumerate() {
                for (l, v) in ok.iter_mut().enumerate() {
                    *v = pre * (s[2 * i + k][2 * j + l] - id2 * se.get(i, k) * se.get(j, l));
                }
            }
        }
    }
    out
}

/// Coefficients of Hibler's operator frozen at a state, ready to act on
/// derivatives of a velocity field.
#[derive(Clone, Copy, Debug)]
pub struct FrozenHibler {
    pub coeff: Coeff4,
    /// `1 / (2 Delta_delta)` at the frozen strain.
    pub inv_two_delta: f64,
    /// Physical gradient of the frozen pressure.
    pub grad_p: Vector2<f64>,
    pub e: f64,
}

impl FrozenHibler {
    pub fn new(eps: &SymTensor2, pressure: f64, grad_p: Vector2<f64>, params: &RheologyParams) -> Self {
        Self {
            coeff: hibler_coefficients(eps, pressure, params),
            inv_two_delta: 0.5 / delta_reg(eps, params.delta, params.e),
            grad_p,
            e: params.e,
        }
    }

    /// `-sum a_ij^kl d_k eps_jl - (1/2Delta) sum_j d_j P (S eps)_ij`, with
    /// `deps[k]` the physical derivative `d_k eps`.
    pub fn apply(&self, eps: &SymTensor2, deps: &[SymTensor2; 2]) -> Vector2<f64> {
        let se = s_map(eps, self.e);
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..2 {
                for (k, dk) in deps.iter().enumerate() {
                    for l in 0..2 {
                        acc += self.coeff[i][j][k][l] * dk.get(j, l);
                    }
                }
            }
            let lower: f64 = (0..2).map(|j| self.grad_p[j] * se.get(i, j)).sum();
            *o = -acc - self.inv_two_delta * lower;
        }
        Vector2::new(out[0], out[1])
    }
}

/// Pointwise non-divergence form of Hibler's operator from the first and
/// second derivatives of `u`: `grad_u[(l, n)] = d_n u_l` and
/// `hess_u[l][(m, n)] = d_m d_n u_l`.
pub fn hibler_pointwise(
    grad_u: &Matrix2<f64>,
    hess_u: &[Matrix2<f64>; 2],
    pressure: f64,
    grad_p: &Vector2<f64>,
    params: &RheologyParams,
) -> Vector2<f64> {
    let eps = deformation_tensor(grad_u);
    let frozen = FrozenHibler::new(&eps, pressure, *grad_p, params);
    frozen.apply(&eps, &strain_gradient(hess_u))
}

/// `d_k eps_jl = (d_k d_j u_l + d_k d_l u_j) / 2` for `k = 0, 1`.
pub fn strain_gradient(hess_u: &[Matrix2<f64>; 2]) -> [SymTensor2; 2] {
    let mut out = [SymTensor2::ZERO; 2];
    for (k, o) in out.iter_mut().enumerate() {
        *o = SymTensor2::new(
            hess_u[0][(k, 0)],
            0.5 * (hess_u[1][(k, 0)] + hess_u[0][(k, 1)]),
            hess_u[1][(k, 1)],
        );
    }
    out
}

/// Non-divergence Hibler operator on grid fields. Rows on the two boundary
/// rings use one-sided stencils.
pub fn hibler_apply(
    u: &[Vector2<f64>],
    h: &[f64],
    a: &[f64],
    grid: &AnnulusGrid,
    params: &RheologyParams,
) -> Result<Vec<Vector2<f64>>, RheologyError> {
    grid.check_len(u.len())?;
    grid.check_len(h.len())?;
    grid.check_len(a.len())?;
    let pressure: Vec<f64> = h.iter().zip(a).map(|(&h, &a)| ice_pressure(h, a, params)).collect();
    let d = grid.derivatives();
    let grad_p = d.gradient(&pressure);
    let jet = d.vector_jet(u);
    Ok((0..grid.len())
        .map(|p| hibler_pointwise(&jet.grad[p], &jet.hess[p], pressure[p], &grad_p[p], params))
        .collect())
}

pub fn thermo_source_h(h: f64, a: f64, f: &GrowthRate) -> Result<f64, RheologyError> {
    if a <= 0.0 {
        return Err(RheologyError::ZeroCompactness(a));
    }
    Ok(f.eval(h / a) * a + (1.0 - a) * f.eval(0.0))
}

pub fn thermo_source_a(h: f64, a: f64, s_h: f64, f: &GrowthRate, kappa: f64) -> Result<f64, RheologyError> {
    if h <= 0.0 {
        return Err(RheologyError::NonPositiveThickness(h));
    }
    let f0 = f.eval(0.0);
    let open_water = if f0 > 0.0 { f0 / kappa * (1.0 - a) } else { 0.0 };
    let melt = if s_h < 0.0 { 0.5 * a * s_h / h } else { 0.0 };
    Ok(open_water + melt)
}

pub fn forcing_f1(u: &Vector2<f64>, h: f64, params: &RheologyParams) -> Vector2<f64> {
    let m_ice = params.rho_ice * h;
    let n_cross_u = Vector2::new(-u.y, u.x);
    let tilt = Vector2::new(params.surface_tilt[0], params.surface_tilt[1]);
    let atm = params.atmosphere.stress(&Vector2::zeros());
    -n_cross_u * (m_ice * params.c_cor) - tilt * (m_ice * params.g_grav) + atm + params.ocean.stress(u)
}
