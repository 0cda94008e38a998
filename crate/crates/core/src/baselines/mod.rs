//! Comparison training schemes: separately trained approximator/predictor
//! pairs (one pass or iterative) and the weight-sharing network.

mod separate;
mod shared;

pub use separate::{train_iterative, train_onepass, IterativeOutcome, SeparatePair, DEFAULT_ROUNDS};
pub use shared::{train_weight_sharing, SharedGradients, SharedNet};
