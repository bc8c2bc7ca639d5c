//! Constrained finite-horizon MDP toolkit.
//!
//! Safety is handled by first estimating a baseline policy's threat, the
//! expected discounted danger (or accident probability) of each state-action
//! pair, then restricting planning to actions whose threat stays below a
//! threshold. Reward planning happens on the induced secure MDP.

// `!(x >= 0.0)` is used on purpose to reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cmdp;
pub mod envs;
pub mod experiment;
pub mod error;
pub mod oracle;
pub mod par;
pub mod planner;
pub mod policy;
pub mod rng;
pub mod secure;
pub mod sim;
pub mod threat;

pub use cmdp::{Cmdp, CmdpDocument, Kernel, SafetySpec, ThreatMode};
pub use error::{Error, Result};
pub use policy::Policy;
pub use threat::ThreatTable;
