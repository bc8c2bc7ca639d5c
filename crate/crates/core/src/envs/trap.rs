//! A hand-built instance whose danger sits deeper than a short lookahead.

use crate::cmdp::{Cmdp, Kernel};
use crate::error::{Error, Result};

/// Home state 0 offers a safe loop (reward 0.1, action 0) and a corridor
/// entry (reward 1, action 1). The corridor `1..=depth` advances one state per
/// step under either action with reward 1; every action at state `depth`
/// has danger 1. State `depth + 1` is an absorbing sink with no reward.
///
/// A lookahead of fewer than `depth` steps from home sees only the rewards.
pub fn deep_trap(depth: usize, horizon: usize) -> Result<Cmdp> {
    if depth == 0 || horizon == 0 {
        return Err(Error::Config("trap depth and horizon must be at least 1".into()));
    }
    let n = depth + 2;
    let sink = depth + 1;
    let mut rows = Vec::with_capacity(2 * n);
    let mut reward = Vec::with_capacity(2 * n);
    let mut danger = Vec::with_capacity(2 * n);
    for s in 0..n {
        for a in 0..2 {
            let (next, r, d) = match s {
                0 if a == 0 => (0, 0.1, 0.0),
                0 => (1, 1.0, 0.0),
                s if s == sink => (sink, 0.0, 0.0),
                s if s == depth => (sink, 1.0, 1.0),
                s => (s + 1, 1.0, 0.0),
            };
            rows.push(vec![(next, 1.0)]);
            reward.push(r);
            danger.push(d);
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    Cmdp::new(horizon, 0.99, 0.9, Kernel::from_rows(n, 2, rows)?, reward, danger, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threat::min_threat_policy;
    use crate::ThreatMode;

    #[test]
    fn entry_threat_is_discounted_depth() {
        let m = deep_trap(3, 10).unwrap();
        let (_, t) = min_threat_policy(&m, ThreatMode::DiscountedDanger).unwrap();
        assert_eq!(t.value(0, 0, 0), 0.0);
        assert!((t.value(0, 0, 1) - 0.9f64.powi(4)).abs() < 1e-12);
        assert!((t.value(0, 3, 0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_trap() {
        assert!(deep_trap(0, 5).is_err());
    }
}
