//! Iterative, learner-aware feature discovery for tabular binary classification.

pub mod data;
pub mod dsl;
pub mod engine;
pub mod error;
pub mod explain;
pub mod islands;
pub mod learners;
pub mod metrics;
pub mod proposer;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use data::{Dataset, Schema};
pub use engine::{EngineConfig, EngineResult};
pub use learners::{LearnerKind, LearnerSpec};
pub use metrics::EvalReport;
pub use proposer::{Backend, Proposer};
