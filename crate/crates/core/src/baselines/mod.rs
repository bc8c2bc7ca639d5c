//! Comparison methods: penalized Q-learning and lookahead control.

pub mod mpc;
pub mod qlearn;

pub use mpc::{mpc_decide, MpcConfig, MpcDecision};
pub use qlearn::{greedy_policy, train_q, QConfig, QTable};
