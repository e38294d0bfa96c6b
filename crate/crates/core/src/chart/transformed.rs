//! Pulled-back differential operators on the reference annulus.

use nalgebra::{Matrix2, Vector2};

use super::ChartState;
use crate::grid::AnnulusGrid;
use crate::rheology::{
    deformation_tensor, ice_pressure, ice_pressure_partials, FrozenHibler, RheologyError, RheologyParams, SymTensor2,
};
use crate::state::IceState;

/// `eps~ = sym(grad u~ . dY)`, i.e. the physical strain of `u = u~ o Y`.
pub fn transformed_strain(grad: &Matrix2<f64>, dy: &Matrix2<f64>) -> SymTensor2 {
    deformation_tensor(&(grad * dy))
}

/// Physical derivatives `d_k eps~` from reference jets of `u~` and `dY`.
pub fn transformed_strain_gradient(
    grad: &Matrix2<f64>,
    hess: &[Matrix2<f64>; 2],
    dy: &Matrix2<f64>,
    ddy: &[Matrix2<f64>; 2],
) -> [SymTensor2; 2] {
    let reference: [SymTensor2; 2] = std::array::from_fn(|m| {
        let h_m = Matrix2::new(hess[0][(m, 0)], hess[0][(m, 1)], hess[1][(m, 0)], hess[1][(m, 1)]);
        deformation_tensor(&(h_m * dy + grad * ddy[m]))
    });
    std::array::from_fn(|k| {
        let (w0, w1) = (dy[(0, k)], dy[(1, k)]);
        SymTensor2::new(
            w0 * reference[0].e11 + w1 * reference[1].e11,
            w0 * reference[0].e12 + w1 * reference[1].e12,
            w0 * reference[0].e22 + w1 * reference[1].e22,
        )
    })
}

/// Transformed Hibler operator at one node.
pub fn transformed_hibler_at(
    grad: &Matrix2<f64>,
    hess: &[Matrix2<f64>; 2],
    dy: &Matrix2<f64>,
    ddy: &[Matrix2<f64>; 2],
    pressure: f64,
    grad_p_ref: &Vector2<f64>,
    params: &RheologyParams,
) -> Vector2<f64> {
    let eps = transformed_strain(grad, dy);
    let frozen = FrozenHibler::new(&eps, pressure, dy.transpose() * grad_p_ref, params);
    frozen.apply(&eps, &transformed_strain_gradient(grad, hess, dy, ddy))
}

fn check(grid: &AnnulusGrid, chart: &ChartState, ice: &IceState) -> Result<(), RheologyError> {
    grid.check_len(chart.len())?;
    grid.check_len(ice.u.len())?;
    grid.check_len(ice.h.len())?;
    grid.check_len(ice.a.len())?;
    Ok(())
}

pub fn transformed_hibler(
    chart: &ChartState,
    ice: &IceState,
    params: &RheologyParams,
    grid: &AnnulusGrid,
) -> Result<Vec<Vector2<f64>>, RheologyError> {
    check(grid, chart, ice)?;
    let pressure: Vec<f64> = ice.h.iter().zip(&ice.a).map(|(&h, &a)| ice_pressure(h, a, params)).collect();
    let d = grid.derivatives();
    let grad_p = d.gradient(&pressure);
    let jet = d.vector_jet(&ice.u);
    Ok((0..grid.len())
        .map(|p| {
            transformed_hibler_at(&jet.grad[p], &jet.hess[p], &chart.dy[p], &chart.ddy[p], pressure[p], &grad_p[p], params)
        })
        .collect())
}

/// `(B~1 h~, B~2 a~)` at every node.
pub fn transformed_lower_order(
    chart: &ChartState,
    ice: &IceState,
    params: &RheologyParams,
    grid: &AnnulusGrid,
) -> Result<(Vec<Vector2<f64>>, Vec<Vector2<f64>>), RheologyError> {
    check(grid, chart, ice)?;
    let d = grid.derivatives();
    let gh = d.gradient(&ice.h);
    let ga = d.gradient(&ice.a);
    let mut b1 = Vec::with_capacity(grid.len());
    let mut b2 = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let (ph, pa) = ice_pressure_partials(ice.h[p], ice.a[p], params);
        let dyt = chart.dy[p].transpose();
        b1.push(dyt * gh[p] * (0.5 * ph));
        b2.push(dyt * ga[p] * (0.5 * pa));
    }
    Ok((b1, b2))
}

/// `L~ phi = Lap_FV phi + sum (g^{jk} - delta_jk) d_j d_k phi + sum Delta Y_j d_j phi`.
///
/// The identity part uses the conservative finite-volume Laplacian; only the
/// chart corrections use the pointwise stencils.
pub fn transformed_laplacian_apply(chart: &ChartState, phi: &[f64], grid: &AnnulusGrid) -> Result<Vec<f64>, RheologyError> {
    grid.check_len(phi.len())?;
    grid.check_len(chart.len())?;
    let base = grid.laplacian().mul_vec(phi);
    let d = grid.derivatives();
    let hess = d.hessian(phi);
    let grad = d.gradient(phi);
    Ok((0..grid.len())
        .map(|p| {
            let dg = chart.g[p] - Matrix2::identity();
            base[p] + dg.component_mul(&hess[p]).sum() + chart.lap_y[p].dot(&grad[p])
        })
        .collect())
}

/// Transformed bilinear terms and time-derivative corrections.
#[derive(Clone, Debug)]
pub struct TransportTerms {
    /// `sum_ij u~_i d_iY_j d_j u~_k`.
    pub advection: Vec<Vector2<f64>>,
    pub div_h: Vec<f64>,
    pub div_a: Vec<f64>,
    /// `sum_j Ydot_j d_j` applied to `u~, h~, a~`.
    pub m_u: Vec<Vector2<f64>>,
    pub m_h: Vec<f64>,
    pub m_a: Vec<f64>,
}

/// Conservative transformed divergence of `u~ phi`: the finite-volume
/// divergence plus the chart correction `sum (d_iY_j - delta_ij) d_j(u~_i phi)`.
pub fn transformed_divergence(chart: &ChartState, u: &[Vector2<f64>], phi: &[f64], grid: &AnnulusGrid) -> Vec<f64> {
    let flux: Vec<Vector2<f64>> = u.iter().zip(phi).map(|(u, f)| u * *f).collect();
    let base = grid.fv_divergence(&flux);
    let gf = grid.derivatives().vector_gradient(&flux);
    (0..grid.len())
        .map(|p| base[p] + ((chart.dy[p] - Matrix2::identity()) * gf[p]).trace())
        .collect()
}

pub fn transformed_transport(chart: &ChartState, ice: &IceState, grid: &AnnulusGrid) -> Result<TransportTerms, RheologyError> {
    check(grid, chart, ice)?;
    let d = grid.derivatives();
    let gu = d.vector_gradient(&ice.u);
    let gh = d.gradient(&ice.h);
    let ga = d.gradient(&ice.a);
    let advection = (0..grid.len()).map(|p| gu[p] * chart.dy[p] * ice.u[p]).collect();
    let m_u = (0..grid.len()).map(|p| gu[p] * chart.ydot[p]).collect();
    let m_h = (0..grid.len()).map(|p| gh[p].dot(&chart.ydot[p])).collect();
    let m_a = (0..grid.len()).map(|p| ga[p].dot(&chart.ydot[p])).collect();
    Ok(TransportTerms {
        advection,
        div_h: transformed_divergence(chart, &ice.u, &ice.h, grid),
        div_a: transformed_divergence(chart, &ice.u, &ice.a, grid),
        m_u,
        m_h,
        m_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Kinematics, RigidMotionField, CutoffSpec};
    use crate::grid::build_grid;
    use crate::rheology::hibler_apply;

    fn smooth_state(grid: &AnnulusGrid) -> IceState {
        let x = grid.positions();
        IceState {
            u: x.iter().map(|p| Vector2::new((0.4 * p.y).sin() * p.x, 0.3 * p.x * p.x - 0.1 * p.y)).collect(),
            h: x.iter().map(|p| 1.0 + 0.2 * (p.x * 0.7).cos()).collect(),
            a: x.iter().map(|p| 0.8 + 0.05 * (p.y * 0.9).sin()).collect(),
        }
    }

    #[test]
    fn identity_chart_reduces_hibler() {
        let g = build_grid(0.5, 2.0, 12, 32).unwrap();
        let params = RheologyParams { delta: 1e-4, p_star: 1.0, c_pressure: 2.0, ..RheologyParams::default() };
        let ice = smooth_state(&g);
        let chart = ChartState::identity(&g);
        let a = transformed_hibler(&chart, &ice, &params, &g).unwrap();
        let b = hibler_apply(&ice.u, &ice.h, &ice.a, &g, &params).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn rigid_rotation_chart_keeps_laplacian() {
        let g = build_grid(0.5, 2.0, 16, 64).unwrap();
        let k = Kinematics { x_c: Vector2::zeros(), eta: Vector2::zeros(), omega: 1.0 };
        let field = RigidMotionField::steady(k, CutoffSpec::unity(), 2.0);
        let mut chart = ChartState::identity(&g);
        for _ in 0..4 {
            chart = chart.advance(&field, 0.1, &g, 0.2).unwrap();
        }
        for (m, l) in chart.g.iter().zip(&chart.lap_y) {
            assert!((m - Matrix2::identity()).abs().max() < 1e-7, "{m}");
            assert!(l.norm() < 1e-7, "{l}");
        }
    }

    #[test]
    fn constant_thickness_has_no_lower_order_term() {
        let g = build_grid(0.5, 2.0, 10, 16).unwrap();
        let params = RheologyParams::default();
        let mut ice = IceState::uniform(g.len(), 1.5, 0.9);
        let chart = ChartState::identity(&g);
        let (b1, b2) = transformed_lower_order(&chart, &ice, &params, &g).unwrap();
        assert!(b1.iter().chain(&b2).all(|v| v.norm() < 1e-6));
        ice.a = vec![1.0; g.len()];
        ice.h = g.positions().iter().map(|x| 1.0 + 0.1 * x.x).collect();
        let (b1, _) = transformed_lower_order(&chart, &ice, &params, &g).unwrap();
        for v in &b1 {
            assert!((v - Vector2::new(0.05 * params.p_star, 0.0)).norm() < 1e-8 * params.p_star);
        }
    }

    #[test]
    fn zero_velocity_has_no_transport() {
        let g = build_grid(0.5, 2.0, 10, 16).unwrap();
        let ice = IceState::uniform(g.len(), 1.0, 0.9);
        let t = transformed_transport(&ChartState::identity(&g), &ice, &g).unwrap();
        assert!(t.advection.iter().all(|v| v.norm() == 0.0));
        assert!(t.div_h.iter().chain(&t.div_a).all(|v| *v == 0.0));
    }
}
