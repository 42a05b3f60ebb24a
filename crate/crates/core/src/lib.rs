//! Constrained multi-objective design space exploration.
//!
//! The search warms up with prior-guided random sampling, fits one random
//! forest regressor per objective plus a random forest feasibility
//! classifier, and then repeatedly evaluates the predicted feasible Pareto
//! front of the configurations not yet evaluated.

pub mod error;
pub mod evaluator;
pub mod forest;
pub mod optimizer;
pub mod pareto;
pub mod priors;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod space;

pub use error::{Error, Result};
pub use evaluator::{Evaluator, Outcome};
pub use forest::{Forest, ForestHyperparams};
pub use optimizer::{run, RunOutcome};
pub use pareto::{EvaluationRecord, ParetoArchive};
pub use rng::RngState;
pub use scenario::{parse_scenario, Scenario};
pub use space::{Configuration, DesignSpace, Parameter, Prior, Value};
