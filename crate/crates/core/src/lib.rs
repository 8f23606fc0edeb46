//! Hybrid proof-of-work / proof-of-stake consensus primitives and a
//! deterministic discrete-event network simulator.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod chain;
pub mod crypto;
pub mod difficulty;
pub mod dump;
pub mod ledger;
pub mod forging;
pub mod sim;
pub mod slashing;
pub mod stats;
