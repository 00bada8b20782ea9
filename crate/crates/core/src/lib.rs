//! Online facility assignment on a line with server capacities.
//!
//! The crate provides the PTCP rule together with greedy and permutation
//! baselines, exact offline optima, span-to-gap metrics, hybrid-run analysis,
//! adversarial inputs, and checkers for the structural properties the upper
//! bound `2α(S)+1` relies on.

pub mod algorithms;
pub mod adversary;
pub mod alpha;
pub mod engine;
pub mod error;
pub mod harness;
pub mod hybrid;
pub mod model;
pub mod numeric;
pub mod opt;
pub mod permutation;
pub mod verify;

pub use error::{OfalError, Result};
pub use model::{Instance, Rate, Rational, RequestSequence, ServerLayout};
