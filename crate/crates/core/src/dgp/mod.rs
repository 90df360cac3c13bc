//! Knob-driven data-generating processes with oracle ground truth.

mod build;
mod knobs;
mod realize;
mod spec;
mod terms;

pub use build::{
    build_dgp, expected_outcome_moments, rescale_assignment, rescale_response,
    AssignmentCalibration, DgpConfig, MIN_COLUMNS, PROPENSITY_BAND,
};
pub use knobs::{
    Alignment, Heterogeneity, Knobs, Overlap, ResponseModel, TreatedShare, TreatmentModel,
    SETTINGS,
};
pub use realize::{
    realize, satt, treated_indices, Observed, Realization, RealizationRecord, RealizeOptions,
    Truth,
};
pub(crate) use realize::{csv_io, fmt};
pub use spec::{AssignmentMechanism, DgpSpec, NoiseModel, PenaltyRegion, ResponseSurface, SurfaceValues};
pub use terms::{evaluate_sum, Basis, Condition, Direction, FunctionTerm};
