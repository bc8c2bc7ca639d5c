//! Time-indexed stochastic policies over tabular CMDPs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::Cmdp;
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// `pi_t(a | s)` for `t in [0, horizon)`.
///
/// A stationary policy stores a single slice that is shared by every `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    stationary: bool,
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(horizon: usize, n_states: usize, n_actions: usize, stationary: bool, probs: Vec<f64>) -> Result<Self> {
        let slices = if stationary { 1 } else { horizon };
        if probs.len() != slices * n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                slices * n_states * n_actions
            )));
        }
        let policy = Self { horizon, n_states, n_actions, stationary, probs };
        policy.check()?;
        Ok(policy)
    }

    /// Builds a time-indexed policy from a closure producing `pi_t(. | s)`.
    pub fn from_fn(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(horizon * n_states * n_actions);
        for t in 0..horizon {
            for s in 0..n_states {
                let row = f(t, s);
                if row.len() != n_actions {
                    return Err(Error::Dimension(format!("row ({t}, {s}) has {} actions", row.len())));
                }
                probs.extend(row);
            }
        }
        Self::from_probs(horizon, n_states, n_actions, false, probs)
    }

    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self { horizon, n_states, n_actions, stationary: true, probs: vec![p; n_states * n_actions] }
    }

    /// Deterministic time-indexed policy; `actions[t][s]` is the chosen action.
    pub fn deterministic(n_actions: usize, actions: &[Vec<usize>]) -> Result<Self> {
        let horizon = actions.len();
        let n_states = actions.first().map_or(0, Vec::len);
        let mut probs = vec![0.0; horizon * n_states * n_actions];
        for (t, row) in actions.iter().enumerate() {
            if row.len() != n_states {
                return Err(Error::Dimension(format!("actions[{t}] has {} states", row.len())));
            }
            for (s, &a) in row.iter().enumerate() {
                if a >= n_actions {
                    return Err(Error::Dimension(format!("action {a} out of range at ({t}, {s})")));
                }
                probs[(t * n_states + s) * n_actions + a] = 1.0;
            }
        }
        Ok(Self { horizon, n_states, n_actions, stationary: false, probs })
    }

    pub fn stationary_deterministic(horizon: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut p = Self::deterministic(n_actions, &[actions.to_vec()])?;
        p.stationary = true;
        p.horizon = horizon;
        Ok(p)
    }

    /// Samples a random stochastic policy. Each row is a normalized vector
    /// of uniform weights, with entries zeroed independently at `sparsity`.
    pub fn random<R: Rng + ?Sized>(horizon: usize, n_states: usize, n_actions: usize, sparsity: f64, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(horizon * n_states * n_actions);
        for _ in 0..horizon * n_states {
            let mut row: Vec<f64> =
                (0..n_actions).map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() }).collect();
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                row.iter_mut().for_each(|p| *p = 0.0);
                row[rng.random_range(0..n_actions)] = 1.0;
            } else {
                row.iter_mut().for_each(|p| *p /= total);
            }
            probs.extend(row);
        }
        Self { horizon, n_states, n_actions, stationary: false, probs }
    }

    fn check(&self) -> Result<()> {
        for (i, row) in self.probs.chunks(self.n_actions.max(1)).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::Argument(format!(
                    "policy row {} (state {}) sums to {sum}",
                    i / self.n_states.max(1),
                    i % self.n_states.max(1)
                )));
            }
        }
        Ok(())
    }

    /// Errors unless the policy's shape matches `cmdp`.
    pub fn check_against(&self, cmdp: &Cmdp) -> Result<()> {
        if self.n_states != cmdp.n_states || self.n_actions != cmdp.n_actions || self.horizon != cmdp.horizon {
            return Err(Error::Dimension(format!(
                "policy shape (T={}, S={}, A={}) vs CMDP (T={}, S={}, A={})",
                self.horizon, self.n_states, self.n_actions, cmdp.horizon, cmdp.n_states, cmdp.n_actions
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dist(&self, t: usize, s: usize) -> &[f64] {
        let slice = if self.stationary { 0 } else { t };
        let start = (slice * self.n_states + s) * self.n_actions;
        &self.probs[start..start + self.n_actions]
    }

    #[inline]
    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.dist(t, s)[a]
    }

    /// The action if `pi_t(. | s)` is a point mass.
    pub fn deterministic_action(&self, t: usize, s: usize) -> Option<usize> {
        let row = self.dist(t, s);
        row.iter().position(|&p| p == 1.0).filter(|_| row.iter().filter(|&&p| p > 0.0).count() == 1)
    }

    /// Expectation of `f(a)` under `pi_t(. | s)`.
    #[inline]
    pub fn expect(&self, t: usize, s: usize, f: impl Fn(usize) -> f64) -> f64 {
        self.dist(t, s).iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(a, &p)| p * f(a)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: usize, s: usize, rng: &mut R) -> usize {
        sample_index(self.dist(t, s), rng)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Time-expanded copy (no-op for non-stationary policies).
    pub fn expanded(&self) -> Self {
        if !self.stationary {
            return self.clone();
        }
        let probs = self.probs.repeat(self.horizon);
        Self { stationary: false, probs, ..*self }
    }

    /// Overwrites `pi_t(. | s)`; converts a stationary policy to time-indexed first.
    pub fn set_dist(&mut self, t: usize, s: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.n_actions {
            return Err(Error::Dimension("row length".into()));
        }
        if self.stationary {
            *self = self.expanded();
        }
        let start = (t * self.n_states + s) * self.n_actions;
        self.probs[start..start + self.n_actions].copy_from_slice(row);
        Ok(())
    }

    pub fn to_document(&self) -> PolicyDocument {
        let policy = (0..self.horizon)
            .map(|t| {
                (0..self.n_states)
                    .map(|s| match self.deterministic_action(t, s) {
                        Some(a) => PolicyEntry::Action(a),
                        None => PolicyEntry::Distribution(self.dist(t, s).to_vec()),
                    })
                    .collect()
            })
            .collect();
        PolicyDocument { n_actions: self.n_actions, policy }
    }

    pub fn from_document(doc: &PolicyDocument) -> Result<Self> {
        let horizon = doc.policy.len();
        let n_states = doc.policy.first().map_or(0, Vec::len);
        let n_actions = doc.n_actions;
        let mut probs = Vec::with_capacity(horizon * n_states * n_actions);
        for row in &doc.policy {
            if row.len() != n_states {
                return Err(Error::Dimension("ragged policy document".into()));
            }
            for entry in row {
                match entry {
                    PolicyEntry::Action(a) => {
                        if *a >= n_actions {
                            return Err(Error::Dimension(format!("action {a} out of range")));
                        }
                        let mut v = vec![0.0; n_actions];
                        v[*a] = 1.0;
                        probs.extend(v);
                    }
                    PolicyEntry::Distribution(v) => {
                        if v.len() != n_actions {
                            return Err(Error::Dimension("distribution length".into()));
                        }
                        probs.extend_from_slice(v);
                    }
                }
            }
        }
        Self::from_probs(horizon, n_states, n_actions, false, probs)
    }
}

/// JSON form: `policy[t][s]` is an action index or a full distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub n_actions: usize,
    pub policy: Vec<Vec<PolicyEntry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyEntry {
    Action(usize),
    Distribution(Vec<f64>),
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
