//! Object depth from uncalibrated camera motion and bounding-box sequences.
//!
//! The crate provides, in dependency order:
//!
//! * [`geometry`] — pinhole projection and the shared domain types;
//! * [`solvers`] — closed-form and least-squares depth estimators;
//! * [`rng`] — deterministic splittable random streams;
//! * [`generate`] — synthetic example generation with perturbation models;
//! * [`network`] — the recurrent depth regressor with exact gradients;
//! * [`train`] — Adam training loop with validation-based model selection;
//! * [`eval`] — benchmark sets, metrics, reports, and file formats.

// `!(x > 0.0)`-style checks deliberately reject NaN along with out-of-range
// values; rewriting them per clippy would lose that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod generate;
pub mod geometry;
pub mod network;
pub mod rng;
pub mod solvers;
pub mod train;

pub use error::{OdmdError, Result};
pub use geometry::{
    displace_object, project_box, project_point, BoundingBox, CameraIntrinsics, CameraPosition,
    Object3D, Observation, ObservationSet,
};
