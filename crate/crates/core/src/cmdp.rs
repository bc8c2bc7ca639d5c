//! Finite-horizon tabular constrained MDPs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Sparse row-stochastic kernel `P(s' | s, a)` stored row-major over `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from one successor list per `(s, a)` row, ordered
    /// `s * n_actions + a`. Zero-probability entries are dropped.
    pub fn from_rows(n_states: usize, n_actions: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "kernel has {} rows, expected {}",
                rows.len(),
                n_states * n_actions
            )));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for row in rows {
            for (next, p) in row {
                if next >= n_states {
                    return Err(Error::Dimension(format!("successor {next} out of range")));
                }
                if p != 0.0 {
                    targets.push(next as u32);
                    probs.push(p);
                }
            }
            offsets.push(targets.len());
        }
        Ok(Self { n_states, n_actions, offsets, targets, probs })
    }

    pub fn from_dense(dense: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_states = dense.len();
        let n_actions = dense.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for (s, per_action) in dense.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::Dimension(format!("transition[{s}] has {} actions", per_action.len())));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::Dimension(format!("transition[{s}][{a}] has {} entries", row.len())));
                }
                rows.push(row.iter().copied().enumerate().collect());
            }
        }
        Self::from_rows(n_states, n_actions, rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        let mut row = vec![0.0; self.n_states];
                        for (next, p) in self.row(s, a) {
                            row[next] += p;
                        }
                        row
                    })
                    .collect()
            })
            .collect()
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let i = s * self.n_actions + a;
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()].iter().map(|&t| t as usize).zip(self.probs[range].iter().copied())
    }

    pub fn row_len(&self, s: usize, a: usize) -> usize {
        let i = s * self.n_actions + a;
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Expectation of `f` under `P(. | s, a)`.
    #[inline]
    pub fn expect(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        self.row(s, a).map(|(next, p)| p * f[next]).sum()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }
}

/// A finite-horizon constrained MDP with `(s, a)`-dependent reward and danger.
#[derive(Clone, Debug, PartialEq)]
pub struct Cmdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    pub transition: Kernel,
    /// `r(s, a)` at index `s * n_actions + a`.
    pub reward: Vec<f64>,
    /// `d(s, a)` at index `s * n_actions + a`.
    pub danger: Vec<f64>,
    pub initial: Vec<f64>,
}

impl Cmdp {
    /// Assembles and validates a CMDP.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: usize,
        gamma: f64,
        beta: f64,
        transition: Kernel,
        reward: Vec<f64>,
        danger: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let cmdp = Self {
            n_states: transition.n_states(),
            n_actions: transition.n_actions(),
            horizon,
            gamma,
            beta,
            transition,
            reward,
            danger,
            initial,
        };
        cmdp.validate().into_result()?;
        Ok(cmdp)
    }

    #[inline]
    pub fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    #[inline]
    pub fn d(&self, s: usize, a: usize) -> f64 {
        self.danger[s * self.n_actions + a]
    }

    /// States with positive initial probability.
    pub fn initial_support(&self) -> impl Iterator<Item = usize> + '_ {
        self.initial.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, _)| s)
    }

    /// Checks every structural invariant and reports each violation.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if self.horizon == 0 {
            issues.push(Issue::Horizon);
        }
        if self.n_states == 0 || self.n_actions == 0 {
            issues.push(Issue::Dimension("empty state or action set".into()));
        }
        if self.transition.n_states() != self.n_states || self.transition.n_actions() != self.n_actions {
            issues.push(Issue::Dimension("transition kernel shape".into()));
        }
        let pairs = self.n_states * self.n_actions;
        if self.reward.len() != pairs {
            issues.push(Issue::Dimension(format!("reward has {} entries, expected {pairs}", self.reward.len())));
        }
        if self.danger.len() != pairs {
            issues.push(Issue::Dimension(format!("danger has {} entries, expected {pairs}", self.danger.len())));
        }
        if self.initial.len() != self.n_states {
            issues.push(Issue::Dimension(format!(
                "initial has {} entries, expected {}",
                self.initial.len(),
                self.n_states
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            issues.push(Issue::Gamma(self.gamma));
        }
        if !(0.0..1.0).contains(&self.beta) {
            issues.push(Issue::Beta(self.beta));
        }
        if !issues.is_empty() {
            return ValidationReport { issues };
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut sum = 0.0;
                let mut negative = false;
                for (_, p) in self.transition.row(s, a) {
                    negative |= !(p >= 0.0);
                    sum += p;
                }
                if negative || (sum - 1.0).abs() > SUM_TOL {
                    issues.push(Issue::RowSum { state: s, action: a, sum });
                }
                let d = self.d(s, a);
                if !(d >= 0.0) || !d.is_finite() {
                    issues.push(Issue::Danger { state: s, action: a, value: d });
                }
                if !self.r(s, a).is_finite() {
                    issues.push(Issue::Reward { state: s, action: a });
                }
            }
        }
        let total: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > SUM_TOL {
            issues.push(Issue::Initial(total));
        }
        ValidationReport { issues }
    }

    pub fn to_document(&self) -> CmdpDocument {
        let reshape = |v: &[f64]| v.chunks(self.n_actions).map(<[f64]>::to_vec).collect();
        CmdpDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            horizon: self.horizon,
            gamma: self.gamma,
            beta: self.beta,
            transition: self.transition.to_dense(),
            reward: reshape(&self.reward),
            danger: reshape(&self.danger),
            initial: self.initial.clone(),
        }
    }

    pub fn from_document(doc: &CmdpDocument) -> Result<Self> {
        let kernel = Kernel::from_dense(&doc.transition)?;
        if kernel.n_states() != doc.n_states || kernel.n_actions() != doc.n_actions {
            return Err(Error::Dimension("transition shape disagrees with n_states/n_actions".into()));
        }
        let flatten = |m: &[Vec<f64>], name: &str| -> Result<Vec<f64>> {
            if m.len() != doc.n_states || m.iter().any(|r| r.len() != doc.n_actions) {
                return Err(Error::Dimension(format!("{name} must be [{}][{}]", doc.n_states, doc.n_actions)));
            }
            Ok(m.concat())
        };
        Self::new(
            doc.horizon,
            doc.gamma,
            doc.beta,
            kernel,
            flatten(&doc.reward, "reward")?,
            flatten(&doc.danger, "danger")?,
            doc.initial.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Same CMDP with the reward replaced.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.reward = reward;
        out.validate().into_result()?;
        Ok(out)
    }
}

/// Dense JSON form of a [`Cmdp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub danger: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    Horizon,
    Dimension(String),
    Gamma(f64),
    Beta(f64),
    RowSum { state: usize, action: usize, sum: f64 },
    Danger { state: usize, action: usize, value: f64 },
    Reward { state: usize, action: usize },
    Initial(f64),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Horizon => write!(f, "horizon must be at least 1"),
            Issue::Dimension(msg) => write!(f, "{msg}"),
            Issue::Gamma(g) => write!(f, "gamma {g} outside [0, 1]"),
            Issue::Beta(b) => write!(f, "beta {b} outside [0, 1)"),
            Issue::RowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Issue::Danger { state, action, value } => {
                write!(f, "danger at (s={state}, a={action}) is {value}")
            }
            Issue::Reward { state, action } => write!(f, "reward at (s={state}, a={action}) is not finite"),
            Issue::Initial(sum) => write!(f, "initial distribution sums to {sum}"),
        }
    }
}

/// Every invariant violation found by [`Cmdp::validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Which danger aggregate the constraint bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatMode {
    /// `E[sum_k beta^k d_k] <= c`.
    DiscountedDanger,
    /// `P(at least one accident) <= c`, with `d(s, a)` a per-step accident probability.
    AccidentProbability,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub budget: f64,
    pub mode: ThreatMode,
}

impl SafetySpec {
    pub fn new(budget: f64, mode: ThreatMode) -> Result<Self> {
        let spec = Self { budget, mode };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.budget >= 0.0) {
            return Err(Error::Argument(format!("budget {} must be non-negative", self.budget)));
        }
        if self.mode == ThreatMode::AccidentProbability && self.budget > 1.0 {
            return Err(Error::Argument(format!("accident budget {} exceeds 1", self.budget)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Cmdp {
        let kernel = Kernel::from_dense(&[
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![vec![0.0, 1.0], vec![0.2, 0.8]],
        ])
        .unwrap();
        Cmdp::new(3, 0.9, 0.5, kernel, vec![1.0, 0.0, 0.0, 2.0], vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0])
            .unwrap()
    }

    #[test]
    fn well_formed_cmdp_validates() {
        assert!(two_state().validate().is_ok());
    }

    #[test]
    fn short_row_is_reported_with_its_index() {
        let mut m = two_state();
        m.transition = Kernel::from_dense(&[
            vec![vec![1.0, 0.0], vec![0.5, 0.4]],
            vec![vec![0.0, 1.0], vec![0.2, 0.8]],
        ])
        .unwrap();
        let report = m.validate();
        assert_eq!(report.issues.len(), 1);
        match &report.issues[0] {
            Issue::RowSum { state, action, sum } => {
                assert_eq!((*state, *action), (0, 1));
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected issue {other:?}"),
        }
    }

    #[test]
    fn negative_danger_is_reported() {
        let mut m = two_state();
        m.danger[3] = -0.1;
        let report = m.validate();
        assert_eq!(report.issues, vec![Issue::Danger { state: 1, action: 1, value: -0.1 }]);
    }

    #[test]
    fn beta_one_is_rejected() {
        let mut m = two_state();
        m.beta = 1.0;
        assert_eq!(m.validate().issues, vec![Issue::Beta(1.0)]);
        m.beta = 0.5;
        m.gamma = 1.0;
        assert!(m.validate().is_ok());
    }

    #[test]
    fn json_round_trip() {
        let m = two_state();
        let back = Cmdp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(doc["transition"][0][1][1], 0.5);
    }

    #[test]
    fn safety_spec_bounds() {
        assert!(SafetySpec::new(-0.1, ThreatMode::DiscountedDanger).is_err());
        assert!(SafetySpec::new(2.0, ThreatMode::DiscountedDanger).is_ok());
        assert!(SafetySpec::new(1.5, ThreatMode::AccidentProbability).is_err());
    }
}
