//! Regularized viscous-plastic sea ice around a rigid disk, solved on a fixed
//! reference annulus through a moving-domain transform.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body;
pub mod chart;
pub mod grid;
pub mod rheology;
pub mod state;
pub mod stepper;
pub mod declab;
pub mod mms;
pub mod app;
