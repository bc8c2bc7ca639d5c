//! Threat functions: expected future danger after taking `a` in `s` at time `t`.
//!
//! Two aggregates are supported.
//!
//! * Discounted danger, with weights relative to the current step:
//!   `T_t(s, a) = E[sum_{k=t+1}^{T} beta^(k-t) d_k | s_t = s, a_t = a]`, so
//!   `T_t(s, a) = beta * d(s, a) + beta * E[T_{t+1}(s', a')]` and
//!   `T_{T-1}(s, a) = beta * d(s, a)`.
//! * Accident probability, with `d(s, a)` the chance that the step itself
//!   causes an accident: `T_t(s, a) = d + (1 - d) * E[T_{t+1}(s', a')]`,
//!   i.e. the probability of at least one accident in the remaining steps.
//!
//! `T_T` is identically zero and is not stored.

use std::io::Write;

use rand::Rng;

use crate::cmdp::{Cmdp, ThreatMode};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ThreatTable {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub mode: ThreatMode,
    /// `T_t(s, a)` at `(t * n_states + s) * n_actions + a`.
    pub values: Vec<f64>,
    /// `E_{a ~ policy}[T_t(s, a)]` at `t * n_states + s`.
    pub state_values: Vec<f64>,
}

impl ThreatTable {
    #[inline]
    pub fn value(&self, t: usize, s: usize, a: usize) -> f64 {
        self.values[(t * self.n_states + s) * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        let start = (t * self.n_states + s) * self.n_actions;
        &self.values[start..start + self.n_actions]
    }

    #[inline]
    pub fn state_value(&self, t: usize, s: usize) -> f64 {
        self.state_values[t * self.n_states + s]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `t,s,a,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "s", "a", "value"])?;
        for t in 0..self.horizon {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    w.write_record(&[t.to_string(), s.to_string(), a.to_string(), self.value(t, s, a).to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`ThreatTable::write_csv`]; state values are
    /// recomputed from `policy`.
    pub fn read_csv<R: std::io::Read>(input: R, mode: ThreatMode, policy: &Policy) -> Result<Self> {
        let (horizon, n_states, n_actions) = (policy.horizon(), policy.n_states(), policy.n_actions());
        let mut values = vec![f64::NAN; horizon * n_states * n_actions];
        let mut r = csv::Reader::from_reader(input);
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<usize> {
                rec.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| Error::Argument(format!("bad threat row {rec:?}")))
            };
            let (t, s, a) = (parse(0)?, parse(1)?, parse(2)?);
            let v: f64 = rec.get(3).and_then(|x| x.parse().ok()).ok_or_else(|| Error::Argument("bad value".into()))?;
            if t >= horizon || s >= n_states || a >= n_actions {
                return Err(Error::Dimension(format!("threat row ({t}, {s}, {a}) out of range")));
            }
            values[(t * n_states + s) * n_actions + a] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Dimension("threat CSV does not cover every (t, s, a)".into()));
        }
        let mut table = Self { horizon, n_states, n_actions, mode, values, state_values: vec![] };
        table.state_values = (0..horizon)
            .flat_map(|t| (0..n_states).map(move |s| (t, s)))
            .map(|(t, s)| policy.expect(t, s, |a| table.value(t, s, a)))
            .collect();
        Ok(table)
    }
}

/// One backward step: the threat of `(s, a)` given the continuation expectation.
#[inline]
pub(crate) fn backup(mode: ThreatMode, beta: f64, d: f64, continuation: f64) -> f64 {
    match mode {
        ThreatMode::DiscountedDanger => beta * (d + continuation),
        ThreatMode::AccidentProbability => d + (1.0 - d) * continuation,
    }
}

fn check_accident_dangers(cmdp: &Cmdp) -> Result<()> {
    if let Some(i) = cmdp.danger.iter().position(|&d| !(0.0..=1.0).contains(&d)) {
        return Err(Error::Argument(format!(
            "danger {} at (s={}, a={}) is not a probability",
            cmdp.danger[i],
            i / cmdp.n_actions,
            i % cmdp.n_actions
        )));
    }
    Ok(())
}

/// Threat table of `policy` under either aggregate, by backward induction.
pub fn threat_table(cmdp: &Cmdp, policy: &Policy, mode: ThreatMode) -> Result<ThreatTable> {
    policy.check_against(cmdp)?;
    if mode == ThreatMode::AccidentProbability {
        check_accident_dangers(cmdp)?;
    }
    let (n, m, horizon) = (cmdp.n_states, cmdp.n_actions, cmdp.horizon);
    let mut values = vec![0.0; horizon * n * m];
    let mut state_values = vec![0.0; horizon * n];
    let mut next_v = vec![0.0; n];
    for t in (0..horizon).rev() {
        for s in 0..n {
            for a in 0..m {
                let cont = if t + 1 < horizon { cmdp.transition.expect(s, a, &next_v) } else { 0.0 };
                values[(t * n + s) * m + a] = backup(mode, cmdp.beta, cmdp.d(s, a), cont);
            }
            let row = &values[(t * n + s) * m..(t * n + s + 1) * m];
            state_values[t * n + s] = policy.expect(t, s, |a| row[a]);
        }
        next_v.copy_from_slice(&state_values[t * n..(t + 1) * n]);
    }
    Ok(ThreatTable { horizon, n_states: n, n_actions: m, mode, values, state_values })
}

pub fn compute_threat(cmdp: &Cmdp, policy: &Policy) -> Result<ThreatTable> {
    threat_table(cmdp, policy, ThreatMode::DiscountedDanger)
}

/// Accident-probability threat; dangers must lie in `[0, 1]`.
pub fn compute_accident_threat(cmdp: &Cmdp, policy: &Policy) -> Result<ThreatTable> {
    threat_table(cmdp, policy, ThreatMode::AccidentProbability)
}

/// Deterministic time-indexed policy minimizing the threat at every `(t, s, a)`,
/// together with its threat table. Ties go to the lowest action index.
pub fn min_threat_policy(cmdp: &Cmdp, mode: ThreatMode) -> Result<(Policy, ThreatTable)> {
    cmdp.validate().into_result()?;
    if mode == ThreatMode::AccidentProbability {
        check_accident_dangers(cmdp)?;
    }
    let (n, m, horizon) = (cmdp.n_states, cmdp.n_actions, cmdp.horizon);
    let mut values = vec![0.0; horizon * n * m];
    let mut state_values = vec![0.0; horizon * n];
    let mut actions = vec![vec![0usize; n]; horizon];
    let mut next_v = vec![0.0; n];
    for t in (0..horizon).rev() {
        for s in 0..n {
            let base = (t * n + s) * m;
            for a in 0..m {
                let cont = if t + 1 < horizon { cmdp.transition.expect(s, a, &next_v) } else { 0.0 };
                values[base + a] = backup(mode, cmdp.beta, cmdp.d(s, a), cont);
            }
            let best = argmin(&values[base..base + m]);
            actions[t][s] = best;
            state_values[t * n + s] = values[base + best];
        }
        next_v.copy_from_slice(&state_values[t * n..(t + 1) * n]);
    }
    let policy = Policy::deterministic(m, &actions)?;
    Ok((policy, ThreatTable { horizon, n_states: n, n_actions: m, mode, values, state_values }))
}

/// Lowest index attaining the minimum.
pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Rollout estimate of a threat table with per-cell standard errors.
#[derive(Clone, Debug)]
pub struct ThreatEstimate {
    pub table: ThreatTable,
    pub std_error: Vec<f64>,
    pub n_rollouts: usize,
}

/// Estimates every `T_t(s, a)` from `n_rollouts` independent rollouts per cell.
///
/// Accident-mode rollouts score `1 - prod_k (1 - d_k)` along the sampled path,
/// which is unbiased for the accident probability and exact on deterministic
/// models.
pub fn monte_carlo_threat(
    cmdp: &Cmdp,
    policy: &Policy,
    mode: ThreatMode,
    n_rollouts: usize,
    seed: u64,
) -> Result<ThreatEstimate> {
    policy.check_against(cmdp)?;
    if n_rollouts == 0 {
        return Err(Error::Argument("n_rollouts must be positive".into()));
    }
    if mode == ThreatMode::AccidentProbability {
        check_accident_dangers(cmdp)?;
    }
    let (n, m, horizon) = (cmdp.n_states, cmdp.n_actions, cmdp.horizon);
    let cells: Vec<(usize, usize, usize)> =
        (0..horizon).flat_map(|t| (0..n).flat_map(move |s| (0..m).map(move |a| (t, s, a)))).collect();
    let estimate = |&(t, s, a): &(usize, usize, usize)| -> (f64, f64) {
        let mut r = rng::substream(seed, &[t as u64, s as u64, a as u64]);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_rollouts {
            let x = rollout(cmdp, policy, mode, t, s, a, &mut r);
            sum += x;
            sum_sq += x * x;
        }
        let k = n_rollouts as f64;
        let mean = sum / k;
        let var = if n_rollouts > 1 { ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0) } else { 0.0 };
        (mean, (var / k).sqrt())
    };
    let results = crate::par::map(&cells, estimate);
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let std_error = results.iter().map(|r| r.1).collect();
    let mut table = ThreatTable { horizon, n_states: n, n_actions: m, mode, values, state_values: vec![0.0; horizon * n] };
    for t in 0..horizon {
        for s in 0..n {
            table.state_values[t * n + s] = policy.expect(t, s, |a| table.value(t, s, a));
        }
    }
    Ok(ThreatEstimate { table, std_error, n_rollouts })
}

fn rollout<R: Rng + ?Sized>(
    cmdp: &Cmdp,
    policy: &Policy,
    mode: ThreatMode,
    t0: usize,
    s0: usize,
    a0: usize,
    rng: &mut R,
) -> f64 {
    use crate::sim::Environment;
    let (mut s, mut a) = (s0, a0);
    let mut weight = 1.0;
    let mut total = 0.0;
    let mut survive = 1.0;
    for t in t0..cmdp.horizon {
        if t > t0 {
            a = policy.sample(t, s, rng);
        }
        let d = cmdp.d(s, a);
        match mode {
            ThreatMode::DiscountedDanger => {
                weight *= cmdp.beta;
                total += weight * d;
            }
            ThreatMode::AccidentProbability => survive *= 1.0 - d,
        }
        if t + 1 < cmdp.horizon {
            s = cmdp.sample_next(&s, a, rng);
        }
    }
    match mode {
        ThreatMode::DiscountedDanger => total,
        ThreatMode::AccidentProbability => 1.0 - survive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::Kernel;
    use crate::envs::random::random_cmdp;

    fn single(d: f64, beta: f64, horizon: usize) -> Cmdp {
        let kernel = Kernel::from_rows(1, 1, vec![vec![(0, 1.0)]]).unwrap();
        Cmdp::new(horizon, 0.9, beta, kernel, vec![0.0], vec![d], vec![1.0]).unwrap()
    }

    /// Two states; action 0 keeps the current state, action 1 moves to the
    /// hazard state 1 whose every action carries danger 1.
    pub(crate) fn hazard_pair(horizon: usize) -> Cmdp {
        let kernel =
            Kernel::from_rows(2, 2, vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]]).unwrap();
        Cmdp::new(horizon, 0.9, 0.5, kernel, vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 0.0])
            .unwrap()
    }

    #[test]
    fn zero_danger_gives_zero_table() {
        let m = random_cmdp(4, 2, 3, 0.0, 5);
        let t = compute_threat(&m, &Policy::uniform(3, 4, 2)).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
        let t = compute_accident_threat(&m, &Policy::uniform(3, 4, 2)).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_state_discounted_hand_value() {
        let t = compute_threat(&single(1.0, 0.5, 2), &Policy::uniform(2, 1, 1)).unwrap();
        assert!((t.value(0, 0, 0) - 0.75).abs() < 1e-15);
        assert!((t.value(1, 0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_state_accident_hand_value() {
        let t = compute_accident_threat(&single(0.1, 0.5, 3), &Policy::uniform(3, 1, 1)).unwrap();
        assert!((t.value(0, 0, 0) - 0.271).abs() < 1e-12);
    }

    #[test]
    fn accident_mode_rejects_non_probability_danger() {
        let m = single(1.5, 0.5, 2);
        assert!(compute_accident_threat(&m, &Policy::uniform(2, 1, 1)).is_err());
    }

    #[test]
    fn min_threat_stays_out_of_hazard() {
        let m = hazard_pair(4);
        for mode in [ThreatMode::DiscountedDanger, ThreatMode::AccidentProbability] {
            let (eta, table) = min_threat_policy(&m, mode).unwrap();
            for t in 0..4 {
                assert_eq!(eta.deterministic_action(t, 0), Some(0));
                assert_eq!(table.value(t, 0, 0), 0.0);
                // moving into the hazard only costs once a step remains there
                assert_eq!(table.value(t, 0, 1) > 0.0, t < 3);
            }
            assert_eq!(table, threat_table(&m, &eta, mode).unwrap());
        }
    }

    #[test]
    fn min_threat_zero_danger_picks_lowest_action() {
        let m = random_cmdp(3, 3, 4, 0.0, 2);
        let (eta, table) = min_threat_policy(&m, ThreatMode::DiscountedDanger).unwrap();
        assert!(table.values.iter().all(|&v| v == 0.0));
        for t in 0..4 {
            for s in 0..3 {
                assert_eq!(eta.deterministic_action(t, s), Some(0));
            }
        }
    }

    #[test]
    fn monte_carlo_exact_on_deterministic_model() {
        let m = hazard_pair(3);
        let p = Policy::uniform(3, 2, 2);
        let exact = compute_threat(&m, &Policy::stationary_deterministic(3, 2, &[0, 0]).unwrap()).unwrap();
        let est = monte_carlo_threat(&m, &Policy::stationary_deterministic(3, 2, &[0, 0]).unwrap(), ThreatMode::DiscountedDanger, 1, 9)
            .unwrap();
        for (x, y) in est.table.values.iter().zip(&exact.values) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(monte_carlo_threat(&m, &p, ThreatMode::DiscountedDanger, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_zero_danger_is_zero() {
        let m = random_cmdp(3, 2, 3, 0.0, 1);
        let est = monte_carlo_threat(&m, &Policy::uniform(3, 3, 2), ThreatMode::AccidentProbability, 50, 3).unwrap();
        assert!(est.table.values.iter().all(|&v| v == 0.0));
        assert!(est.std_error.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threat_csv_round_trip() {
        let m = random_cmdp(3, 2, 3, 0.5, 8);
        let p = Policy::uniform(3, 3, 2);
        let t = compute_threat(&m, &p).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ThreatTable::read_csv(&buf[..], ThreatMode::DiscountedDanger, &p).unwrap();
        assert_eq!(back, t);
    }
}
