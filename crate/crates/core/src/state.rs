//! Discrete ice fields on the reference grid.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IceState {
    pub u: Vec<Vector2<f64>>,
    pub h: Vec<f64>,
    pub a: Vec<f64>,
}

impl IceState {
    pub fn uniform(n: usize, h: f64, a: f64) -> Self {
        Self { u: vec![Vector2::zeros(); n], h: vec![h; n], a: vec![a; n] }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.x.is_finite() && v.y.is_finite())
            && self.h.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
    }
}
