//! Replica-symmetric cavity predictions for random factor-graph models.
//!
//! The crate covers the model zoo ([`model`]), checks of the structural
//! hypotheses SYM/BAL/POS ([`conditions`]), population dynamics for the
//! density-evolution operator ([`popdyn`]), Monte-Carlo evaluation of the
//! Bethe functional and the mutual-information formula ([`bethe`]), noisy
//! threshold location ([`thresholds`]), and a finite-instance laboratory with
//! exact enumeration oracles ([`graphlab`]).

pub mod bethe;
pub mod conditions;
pub mod error;
pub mod graphlab;
pub mod model;
pub mod popdyn;
pub mod rng;
pub mod stats;
pub mod thresholds;

pub use error::{Error, Result};
pub use model::{make_model, rs_value, xi, Model, ModelKind, ModelSpec, SymmetryGroup};
pub use stats::EstimateWithError;
