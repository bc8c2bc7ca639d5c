//! Brute-force ground truth by exhaustive trajectory enumeration.
//!
//! Every expectation here is a probability-weighted sum over explicitly
//! enumerated trajectories, without any Bellman recursion, so it serves as an
//! independent reference for the dynamic-programming routines.

use crate::cmdp::{Cmdp, ThreatMode};
use crate::error::{Error, Result};
use crate::policy::Policy;

/// Branches below this probability are dropped and their mass reported.
pub const PRUNE_BELOW: f64 = 1e-15;
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct EnumerationResult {
    pub value: f64,
    pub n_trajectories: u64,
    /// Total probability of the enumerated trajectories.
    pub mass_check: f64,
    pub pruned_mass: f64,
}

struct Walker<'a> {
    cmdp: &'a Cmdp,
    policy: &'a Policy,
    budget: u64,
    leaves: Vec<f64>,
    masses: Vec<f64>,
    pruned: f64,
}

/// Running score of a partial trajectory.
#[derive(Clone, Copy)]
enum Score {
    Discounted { weight: f64, factor: f64, total: f64 },
    Survival(f64),
}

impl Score {
    fn push(self, x: f64) -> Self {
        match self {
            Score::Discounted { weight, factor, total } => {
                let w = weight * factor;
                Score::Discounted { weight: w, factor, total: total + w * x }
            }
            Score::Survival(p) => Score::Survival(p * (1.0 - x)),
        }
    }

    fn finish(self) -> f64 {
        match self {
            Score::Discounted { total, .. } => total,
            Score::Survival(p) => 1.0 - p,
        }
    }
}

impl Walker<'_> {
    /// Enumerates from state `s` at time `t`; `forced` fixes the action at `t`.
    fn walk(&mut self, t: usize, s: usize, forced: Option<usize>, prob: f64, score: Score, reward: bool) -> Result<()> {
        let m = self.cmdp.n_actions;
        for a in 0..m {
            let pa = match forced {
                Some(f) if f == a => 1.0,
                Some(_) => 0.0,
                None => self.policy.prob(t, s, a),
            };
            if pa == 0.0 {
                continue;
            }
            let p = prob * pa;
            if p < PRUNE_BELOW {
                self.pruned += p;
                continue;
            }
            let x = if reward { self.cmdp.r(s, a) } else { self.cmdp.d(s, a) };
            let next_score = score.push(x);
            if t + 1 == self.cmdp.horizon {
                if self.leaves.len() as u64 >= self.budget {
                    return Err(Error::Budget { budget: self.budget });
                }
                self.leaves.push(p * next_score.finish());
                self.masses.push(p);
                continue;
            }
            for (s2, ps) in self.cmdp.transition.row(s, a) {
                let q = p * ps;
                if q < PRUNE_BELOW {
                    self.pruned += q;
                    continue;
                }
                self.walk(t + 1, s2, None, q, next_score, reward)?;
            }
        }
        Ok(())
    }
}

/// Sum by recursive halving, so the result does not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn finish(parts: Vec<Result<(Vec<f64>, Vec<f64>, f64)>>, budget: u64) -> Result<EnumerationResult> {
    let mut leaves = Vec::new();
    let mut masses = Vec::new();
    let mut pruned = 0.0;
    for part in parts {
        let (l, m, p) = part?;
        leaves.extend(l);
        masses.extend(m);
        pruned += p;
    }
    if leaves.len() as u64 > budget {
        return Err(Error::Budget { budget });
    }
    Ok(EnumerationResult {
        value: pairwise_sum(&leaves),
        n_trajectories: leaves.len() as u64,
        mass_check: pairwise_sum(&masses),
        pruned_mass: pruned,
    })
}

fn new_walker<'a>(cmdp: &'a Cmdp, policy: &'a Policy, budget: u64) -> Walker<'a> {
    Walker { cmdp, policy, budget, leaves: Vec::new(), masses: Vec::new(), pruned: 0.0 }
}

/// `E[sum_{k=t+1}^T beta^(k-t) d_k | s_t = s, a_t = a]`, or the probability
/// of at least one accident, by direct summation over trajectory suffixes.
pub fn enumerate_threat(
    cmdp: &Cmdp,
    policy: &Policy,
    t: usize,
    s: usize,
    a: usize,
    mode: ThreatMode,
    budget: u64,
) -> Result<EnumerationResult> {
    policy.check_against(cmdp)?;
    if t >= cmdp.horizon || s >= cmdp.n_states || a >= cmdp.n_actions {
        return Err(Error::Dimension(format!("cell ({t}, {s}, {a}) out of range")));
    }
    let score = match mode {
        ThreatMode::DiscountedDanger => Score::Discounted { weight: 1.0, factor: cmdp.beta, total: 0.0 },
        ThreatMode::AccidentProbability => Score::Survival(1.0),
    };
    let mut w = new_walker(cmdp, policy, budget);
    let res = w.walk(t, s, Some(a), 1.0, score, false).map(|_| (w.leaves, w.masses, w.pruned));
    finish(vec![res], budget)
}

/// `E[sum_{k=1}^T gamma^k r_k]` over every trajectory from the initial distribution.
pub fn enumerate_return(cmdp: &Cmdp, policy: &Policy, budget: u64) -> Result<EnumerationResult> {
    policy.check_against(cmdp)?;
    let roots: Vec<(usize, f64)> = cmdp.initial.iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect();
    let parts = crate::par::map(&roots, |&(s, p0)| {
        let mut w = new_walker(cmdp, policy, budget);
        let score = Score::Discounted { weight: 1.0, factor: cmdp.gamma, total: 0.0 };
        w.walk(0, s, None, p0, score, true).map(|_| (w.leaves, w.masses, w.pruned))
    });
    finish(parts, budget)
}
