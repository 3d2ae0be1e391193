//! Estimators of mean and variance fields.

pub mod rules;
pub mod stats;

pub use rules::{anisotropy_weights, gauss_legendre_1d, smolyak_rule, QuadratureRule};
pub use stats::{
    field_error, mc_channels, mc_estimate, quadrature_estimate, slope_fit, tree_merge, Moment, NormKind, Statistics,
    StatisticsKind,
};
