//! Alpha-effect dynamo toolkit.
//!
//! Computes the alpha tensor of a periodic flow, builds explicit flow
//! perturbations with a certified nondegenerate alpha, predicts the growing
//! large-scale mode, checks it against the truncated Bloch induction operator
//! and measures nonlinear instability timescales by pseudo-spectral time
//! integration.

pub mod alpha;
pub mod bloch;
pub mod config;
pub mod error;
pub mod evolution;
pub mod field;
pub mod io;
pub mod large_scale;
pub mod linalg;
pub mod perturbation;
pub mod pipeline;
pub mod presets;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use field::{FourierScalarField, FourierVectorField, TorusSpec, WaveVector, C64};
