//! Densities of the composed flow `X_t = φ_t(Y_t)`, its time-reversed
//! inverse, the stability of mollified approximations, and growth diagnostics.

mod density;
mod growth;
mod inverse;
mod stability;

pub use density::{
    histogram_check, pushforward_density_at_images, quasi_invariance_density, HistogramReport,
    PushforwardDensity,
};
pub use growth::{growth_diagnostics, GrowthConfig, GrowthDiagnostics, PathStats};
pub use inverse::{
    inverse_experiment, inverse_flow, roundtrip, sigma_density, sigma_field, InverseConfig, InverseReport, RoundtripReport,
};
pub use stability::{stability_experiment, StabilityConfig, StabilityReport};
