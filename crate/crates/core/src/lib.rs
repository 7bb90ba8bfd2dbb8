//! Online learning with expert advice over uncertain feedback graphs.
//!
//! Choosing an expert reveals the losses of its out-neighbors in a nominal
//! graph, but each edge only fires with some probability. The crate provides
//! the learners (Exp3-IP, Exp3-UP, Exp3-GR and the Exp3 / Exp3-DOM
//! baselines), a simulated environment, doubling-trick schedules, a
//! regression-expert pipeline and an experiment harness.
//!
//! Expert indices are 0-based throughout the Rust API. Graph files, the CLI,
//! emitted CSV files and the Python bindings use 1-based indices.

pub mod environment;
pub mod error;
pub mod estimator;
pub mod experts;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod policies;
pub mod rng;
pub mod schedulers;

pub use error::{Error, Result};
pub use graph::{EdgeProbabilityTable, NominalGraph, VertexSet};
pub use policies::{Algorithm, Learner, LearnerConfig, Observation, Policy, RoundContext};
pub use schedulers::Schedule;
