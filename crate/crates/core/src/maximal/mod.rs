//! Local maximal functions on planar grids, the estimates they satisfy, and
//! the Lipschitz sets of flows driven by Sobolev drifts.

mod estimates;
mod grid;
mod lipschitz;

pub use estimates::{
    calibrate, gradient_norm, lens_ratio, log_integral_check, pointwise_family, pointwise_sobolev_check,
    random_catalog, weak_type_check, CalibratedConstants, CalibrationConfig, CalibrationReport, CatalogCalibration,
    LogIntegralReport, Piece, PiecewiseFunction, PointwiseReport, WeakTypeReport, FROZEN_CONSTANTS,
};
pub use grid::{
    ball_average, local_max_function, local_max_on_ball, max_function_at, BallStencil, RadiusLadder, ScalarGrid,
};
pub use lipschitz::{
    approx_diff_check, lipschitz_set, transformed_gradient, ApproxDiffReport, LipschitzConfig, LipschitzSet,
    LipschitzSetReport,
};

#[cfg(test)]
mod tests;
