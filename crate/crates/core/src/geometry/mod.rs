//! Safeable and unsafeable regions in (τ, h) space, their piecewise-linear
//! replacements, and the slices handed to the verifier.
//!
//! Altitudes are intruder-relative: a region point `(τ, h)` is an intruder
//! `h` ft above the ownship's starting altitude, `τ` s from losing
//! horizontal separation, flying level.

pub mod linearize;
pub mod piecewise;
pub mod regions;
pub mod slices;
pub mod trajectory;

pub use linearize::{linearize, linearize_band, max_gap, LinearRegion, LinearStrip, LinearizationMode};
pub use piecewise::{Lin, PiecewiseLinear, PiecewiseQuadratic, Quad};
pub use regions::{
    check_region, safeable_bounds, unsafeable_all, Band, BoundarySegment, CheckRegion, GeometryConfig, RegionDump,
    SafeableRegion,
};
pub use slices::{slice_queries, LineBound, QuerySlice, SliceOptions};
pub use trajectory::{nominal_altitude, nominal_curve, safe_bound, strongest_follow_up, NominalBound, Side, WorstCaseEnvelope};
