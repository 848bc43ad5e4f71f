//! Heterogeneous multi-agent Q-learning over unit graphs.
//!
//! The crate trains independent-style deep Q networks whose observation
//! encoder is a relational graph network: units are nodes, typed arcs carry
//! class-and-channel relations, and per-class heads emit action values. A
//! small grid-world skirmish between two mixed-unit teams provides the
//! training ground.
//!
//! Start with the `examples/` directory: each example is a runnable tour of
//! one capability (environment rollouts, relational message passing,
//! prioritized replay, training, plotting, checkpoints).

pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod replay;
pub mod trainer;

pub use error::{Error, Result};
