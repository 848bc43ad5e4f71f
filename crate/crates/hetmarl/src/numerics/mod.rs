//! Numeric core: tensors, the gradient tape, parameter storage, Adam, and
//! finite-difference gradient verification.
//!
//! Everything is generic over [`Real`] so the same code trains in f32 and
//! gradient-checks in f64.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport, LossFn};
pub use params::{ParamGrads, ParamId, ParamStore, StagedParams};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{Real, Tensor};
