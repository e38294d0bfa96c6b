//! Tensor-product cubic Lagrange interpolation in `(r, theta)`.

use nalgebra::Vector2;

use super::AnnulusGrid;

/// Sixteen node weights reproducing a sampled field at an off-node point.
#[derive(Clone, Copy, Debug)]
pub struct Interpolant {
    pub nodes: [usize; 16],
    pub weights: [f64; 16],
}

fn lagrange4(s: f64) -> [f64; 4] {
    // Nodes at 0, 1, 2, 3.
    [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ]
}

impl Interpolant {
    /// Points slightly outside the annulus are extrapolated from the
    /// outermost four rings.
    pub fn at(grid: &AnnulusGrid, x: &Vector2<f64>) -> Self {
        let r = x.norm();
        let mut theta = x.y.atan2(x.x);
        if theta < 0.0 {
            theta += std::f64::consts::TAU;
        }
        let s = (r - grid.r_inner()) / grid.dr();
        let i0 = (s.floor() as isize - 1).clamp(0, grid.n_r() as isize - 4) as usize;
        let wr = lagrange4(s - i0 as f64);

        let t = theta / grid.dtheta();
        let jf = t.floor();
        let wt = lagrange4(t - jf + 1.0);
        let n = grid.n_theta() as isize;
        let j0 = jf as isize - 1;

        let mut nodes = [0; 16];
        let mut weights = [0.0; 16];
        for a in 0..4 {
            for b in 0..4 {
                let j = (j0 + b as isize).rem_euclid(n) as usize;
                nodes[4 * a + b] = grid.node(i0 + a, j);
                weights[4 * a + b] = wr[a] * wt[b];
            }
        }
        Self { nodes, weights }
    }

    pub fn eval<T>(&self, samples: &[T]) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let mut acc = samples[self.nodes[0]] * self.weights[0];
        for k in 1..16 {
            acc = acc + samples[self.nodes[k]] * self.weights[k];
        }
        acc
    }
}
