//! Secure action sets, safety thresholds and the deviation bound certificate.
//!
//! Given a baseline policy `eta` with threat table `T^eta` and thresholds
//! `x_t`, an action is secure at `s` when `T^eta_t(s, a) <= x_t` for every
//! `t`. A state is secure when it has at least one secure action. Policies that
//! play secure actions on secure states and the threat-minimizing fallback
//! elsewhere keep their own threat below `x_0 + sum_t f^t x_t E[z_t]`, where
//! `z_t` is the expected total-variation gap to `eta` on secure states and `f`
//! is `beta` (discounted danger) or 1 (accident probability).

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{Cmdp, ThreatMode};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::sim::occupancy;
use crate::threat::{argmin, threat_table, ThreatTable};

const SLACK: f64 = 1e-12;

/// `1/2 sum_a |p(a) - q(a)|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `c / (1 + sum_{t=1}^{T-1} beta^t)`: the threshold under which every
/// member of the secure pool meets a discounted-danger budget `c`.
pub fn secure_threshold(budget: f64, beta: f64, horizon: usize) -> Result<f64> {
    if !(budget >= 0.0) {
        return Err(Error::Argument(format!("budget {budget} must be non-negative")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Argument(format!("beta {beta} outside [0, 1]")));
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon must be at least 1".into()));
    }
    let mut w = 1.0;
    let mut denom = 1.0;
    for _ in 1..horizon {
        w *= beta;
        denom += w;
    }
    Ok(budget / denom)
}

/// `c / (1 + (T - 1) z)` for accident-probability budgets, with `z` a cap on
/// the expected total-variation gap (`z = 1` is the worst case).
pub fn accident_threshold(budget: f64, horizon: usize, tv_cap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&budget) {
        return Err(Error::Argument(format!("accident budget {budget} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&tv_cap) {
        return Err(Error::Argument(format!("tv cap {tv_cap} outside [0, 1]")));
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon must be at least 1".into()));
    }
    Ok(budget / (1.0 + (horizon as f64 - 1.0) * tv_cap))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecureSet {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub thresholds: Vec<f64>,
    /// Secure flag for `(s, a)` at `s * n_actions + a`.
    pub secure_actions: Vec<bool>,
    pub secure_states: Vec<bool>,
    /// Threat-minimizing action at `t * n_states + s`.
    pub fallback: Vec<usize>,
}

impl SecureSet {
    #[inline]
    pub fn is_secure_action(&self, s: usize, a: usize) -> bool {
        self.secure_actions[s * self.n_actions + a]
    }

    #[inline]
    pub fn is_secure(&self, s: usize) -> bool {
        self.secure_states[s]
    }

    #[inline]
    pub fn fallback(&self, t: usize, s: usize) -> usize {
        self.fallback[t * self.n_states + s]
    }

    pub fn actions(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_actions).filter(move |&a| self.is_secure_action(s, a))
    }

    pub fn n_secure_states(&self) -> usize {
        self.secure_states.iter().filter(|&&b| b).count()
    }

    /// Rows `s,action_bitmask,is_secure,fallback` with bit `a` set for each
    /// secure action and the fallback actions for `t = 0..T` joined by `;`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        if self.n_actions > 64 {
            return Err(Error::Dimension("bitmask export supports at most 64 actions".into()));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "action_bitmask", "is_secure", "fallback"])?;
        for s in 0..self.n_states {
            let mask: u64 = self.actions(s).fold(0, |m, a| m | (1 << a));
            let fb: Vec<String> = (0..self.horizon).map(|t| self.fallback(t, s).to_string()).collect();
            w.write_record(&[s.to_string(), mask.to_string(), u8::from(self.is_secure(s)).to_string(), fb.join(";")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Secure actions `{a : T_t(s, a) <= x_t for all t}`, secure states and the
/// per-`(t, s)` threat-argmin fallback.
pub fn build_secure_set(threat: &ThreatTable, thresholds: &[f64]) -> Result<SecureSet> {
    if thresholds.len() != threat.horizon {
        return Err(Error::Dimension(format!(
            "{} thresholds for horizon {}",
            thresholds.len(),
            threat.horizon
        )));
    }
    if let Some(x) = thresholds.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Argument(format!("threshold {x} must be non-negative")));
    }
    let (n, m, horizon) = (threat.n_states, threat.n_actions, threat.horizon);
    let mut secure_actions = vec![true; n * m];
    let mut fallback = vec![0; horizon * n];
    for t in 0..horizon {
        for s in 0..n {
            let row = threat.row(t, s);
            for (a, &v) in row.iter().enumerate() {
                if v > thresholds[t] {
                    secure_actions[s * m + a] = false;
                }
            }
            fallback[t * n + s] = argmin(row);
        }
    }
    let secure_states = (0..n).map(|s| secure_actions[s * m..(s + 1) * m].iter().any(|&b| b)).collect();
    Ok(SecureSet { horizon, n_states: n, n_actions: m, thresholds: thresholds.to_vec(), secure_actions, secure_states, fallback })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Mass on an action outside the secure set of a secure state.
    InsecureAction,
    /// Mass on an action other than the fallback at a non-secure state.
    NotFallback,
    /// Expected baseline threat above the baseline's own at a non-secure state.
    ThreatIncrease,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub s: usize,
    pub a: Option<usize>,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub violations: Vec<Violation>,
}

impl Membership {
    fn from(violations: Vec<Violation>) -> Self {
        Self { member: violations.is_empty(), violations }
    }
}

fn check_shapes(policy: &Policy, secure: &SecureSet, threat: &ThreatTable) -> Result<()> {
    let same = policy.n_states() == secure.n_states
        && policy.n_actions() == secure.n_actions
        && policy.horizon() == secure.horizon
        && threat.n_states == secure.n_states
        && threat.n_actions == secure.n_actions
        && threat.horizon == secure.horizon;
    if same {
        Ok(())
    } else {
        Err(Error::Dimension("policy, secure set and threat table disagree in shape".into()))
    }
}

fn secure_state_violations(policy: &Policy, secure: &SecureSet, t: usize, s: usize, out: &mut Vec<Violation>) {
    for (a, &p) in policy.dist(t, s).iter().enumerate() {
        if p > 0.0 && !secure.is_secure_action(s, a) {
            out.push(Violation { t, s, a: Some(a), kind: ViolationKind::InsecureAction });
        }
    }
}

/// Membership in the pool that plays secure actions on secure states and
/// exactly the fallback action elsewhere.
pub fn is_member(policy: &Policy, secure: &SecureSet, threat: &ThreatTable) -> Membership {
    if check_shapes(policy, secure, threat).is_err() {
        return Membership { member: false, violations: vec![] };
    }
    let mut violations = Vec::new();
    for t in 0..secure.horizon {
        for s in 0..secure.n_states {
            if secure.is_secure(s) {
                secure_state_violations(policy, secure, t, s, &mut violations);
            } else {
                let fb = secure.fallback(t, s);
                for (a, &p) in policy.dist(t, s).iter().enumerate() {
                    if p > 0.0 && a != fb {
                        violations.push(Violation { t, s, a: Some(a), kind: ViolationKind::NotFallback });
                    }
                }
            }
        }
    }
    Membership::from(violations)
}

/// Membership in the broader pool where non-secure states only require
/// `E_pi[T^eta_t(s, .)] <= E_eta[T^eta_t(s, .)]`.
pub fn is_member_relaxed(policy: &Policy, eta: &Policy, secure: &SecureSet, threat: &ThreatTable) -> Membership {
    if check_shapes(policy, secure, threat).is_err() || check_shapes(eta, secure, threat).is_err() {
        return Membership { member: false, violations: vec![] };
    }
    let mut violations = Vec::new();
    for t in 0..secure.horizon {
        for s in 0..secure.n_states {
            if secure.is_secure(s) {
                secure_state_violations(policy, secure, t, s, &mut violations);
            } else {
                let row = threat.row(t, s);
                let mine = policy.expect(t, s, |a| row[a]);
                let base = eta.expect(t, s, |a| row[a]);
                if mine > base + SLACK {
                    violations.push(Violation { t, s, a: None, kind: ViolationKind::ThreatIncrease });
                }
            }
        }
    }
    Membership::from(violations)
}

/// Samples a random member of the strict pool: a random distribution over
/// the secure actions on secure states (each secure action dropped with
/// probability `sparsity`, keeping at least one) and the fallback elsewhere.
pub fn sample_member<R: Rng + ?Sized>(secure: &SecureSet, sparsity: f64, rng: &mut R) -> Policy {
    let m = secure.n_actions;
    let mut probs = Vec::with_capacity(secure.horizon * secure.n_states * m);
    for t in 0..secure.horizon {
        for s in 0..secure.n_states {
            let mut row = vec![0.0; m];
            if secure.is_secure(s) {
                let allowed: Vec<usize> = secure.actions(s).collect();
                for &a in &allowed {
                    if rng.random::<f64>() >= sparsity {
                        row[a] = rng.random::<f64>() + 1e-3;
                    }
                }
                let total: f64 = row.iter().sum();
                if total == 0.0 {
                    row[allowed[rng.random_range(0..allowed.len())]] = 1.0;
                } else {
                    row.iter_mut().for_each(|p| *p /= total);
                }
            } else {
                row[secure.fallback(t, s)] = 1.0;
            }
            probs.extend(row);
        }
    }
    Policy::from_probs(secure.horizon, secure.n_states, m, false, probs).expect("rows are normalized")
}

/// Executable form of the deviation bound for one start state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub start: usize,
    /// Exact `T^pi_0(s_0)`.
    pub lhs: f64,
    /// `x_0 + sum_{t=1}^{T-1} f^t x_t E_pi[z_t | s_0]`.
    pub rhs: f64,
    /// `E_pi[z_t | s_0]` for `t = 1..T-1`.
    pub z_terms: Vec<f64>,
    pub holds: bool,
}

impl BoundCertificate {
    pub fn gap(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates both sides of the deviation bound for `pi` against baseline `eta`.
///
/// Refuses with [`Error::Precondition`] when the inputs fall outside the
/// bound's hypothesis: the table must be `eta`'s own, the secure set must be
/// the one the thresholds induce, `pi` must belong to the relaxed pool, and
/// every action `pi` may take at the start must have `T^eta_0 <= x_0`.
pub fn certify_bound(
    cmdp: &Cmdp,
    eta: &Policy,
    pi: &Policy,
    secure: &SecureSet,
    threat_eta: &ThreatTable,
    start: usize,
) -> Result<BoundCertificate> {
    eta.check_against(cmdp)?;
    pi.check_against(cmdp)?;
    check_shapes(pi, secure, threat_eta)?;
    if start >= cmdp.n_states {
        return Err(Error::Dimension(format!("start state {start} out of range")));
    }
    let mode = threat_eta.mode;
    let recomputed = threat_table(cmdp, eta, mode)?;
    let mismatch = recomputed
        .values
        .iter()
        .zip(&threat_eta.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if mismatch > 1e-9 {
        return Err(Error::Precondition(format!("threat table is not the baseline's own (max gap {mismatch:e})")));
    }
    if build_secure_set(threat_eta, &secure.thresholds)? != *secure {
        return Err(Error::Precondition("secure set does not match its thresholds".into()));
    }
    let membership = is_member_relaxed(pi, eta, secure, threat_eta);
    if !membership.member {
        return Err(Error::Precondition(format!(
            "policy is outside the secure pool ({} violations, first {:?})",
            membership.violations.len(),
            membership.violations.first()
        )));
    }
    let x0 = secure.thresholds[0];
    for (a, &p) in pi.dist(0, start).iter().enumerate() {
        if p > 0.0 && threat_eta.value(0, start, a) > x0 + SLACK {
            return Err(Error::Precondition(format!(
                "baseline threat {} of start action {a} exceeds x_0 = {x0}",
                threat_eta.value(0, start, a)
            )));
        }
    }

    let lhs = threat_table(cmdp, pi, mode)?.state_value(0, start);
    let mut delta = vec![0.0; cmdp.n_states];
    delta[start] = 1.0;
    let occ = occupancy(cmdp, pi, &delta);
    let factor = match mode {
        ThreatMode::DiscountedDanger => cmdp.beta,
        ThreatMode::AccidentProbability => 1.0,
    };
    let mut z_terms = Vec::with_capacity(cmdp.horizon.saturating_sub(1));
    let mut rhs = x0;
    let mut w = 1.0;
    for t in 1..cmdp.horizon {
        w *= factor;
        let mut z = 0.0;
        for (s, &mu) in occ[t].iter().enumerate() {
            if mu > 0.0 && secure.is_secure(s) {
                z += mu * tv_distance(pi.dist(t, s), eta.dist(t, s))?;
            }
        }
        rhs += w * secure.thresholds[t] * z;
        z_terms.push(z);
    }
    Ok(BoundCertificate { start, lhs, rhs, z_terms, holds: lhs <= rhs + SLACK })
}

/// Sum-of-subsystems upper bound on an accident threat, clipped at 1.
///
/// Each part is a per-obstacle threat table and the subsystem state for the
/// current joint state.
pub fn compose_threats(parts: &[(&ThreatTable, usize)], t: usize, a: usize) -> Result<f64> {
    let mut total = 0.0;
    for (table, s) in parts {
        if table.mode != ThreatMode::AccidentProbability {
            return Err(Error::Argument("threat composition requires accident-probability tables".into()));
        }
        total += table.value(t, *s, a);
    }
    Ok(total.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::Kernel;
    use crate::threat::{compute_threat, min_threat_policy};

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.5, 0.5], &[0.25, 0.75]).unwrap() - 0.25).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(secure_threshold(0.3, 0.0, 10).unwrap(), 0.3);
        assert_eq!(secure_threshold(0.3, 0.7, 1).unwrap(), 0.3);
        assert!((secure_threshold(1.0, 0.5, 3).unwrap() - 1.0 / 1.75).abs() < 1e-15);
        assert!(secure_threshold(-1.0, 0.5, 3).is_err());
        // beta = 1 is allowed here; the threshold then decays like c / T
        assert!((secure_threshold(1.0, 1.0, 100).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn accident_threshold_examples() {
        assert_eq!(accident_threshold(0.1, 11, 0.0).unwrap(), 0.1);
        assert!((accident_threshold(0.1, 11, 1.0).unwrap() - 0.1 / 11.0).abs() < 1e-15);
        assert!(accident_threshold(0.1, 1_000_000, 1.0).unwrap() < 1e-6);
        assert!(accident_threshold(1.5, 3, 1.0).is_err());
        assert!(accident_threshold(0.5, 3, 1.5).is_err());
    }

    fn hazard_pair() -> Cmdp {
        let kernel =
            Kernel::from_rows(2, 2, vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]]).unwrap();
        Cmdp::new(4, 0.9, 0.5, kernel, vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn loose_thresholds_secure_everything() {
        let m = hazard_pair();
        let t = compute_threat(&m, &Policy::uniform(4, 2, 2)).unwrap();
        let set = build_secure_set(&t, &[t.max_value(); 4]).unwrap();
        assert!(set.secure_actions.iter().all(|&b| b));
        assert!(set.secure_states.iter().all(|&b| b));
    }

    #[test]
    fn tight_thresholds_secure_nothing() {
        let m = hazard_pair();
        let mut t = compute_threat(&m, &Policy::uniform(4, 2, 2)).unwrap();
        t.values.iter_mut().for_each(|v| *v += 0.01);
        let set = build_secure_set(&t, &[0.001; 4]).unwrap();
        assert_eq!(set.n_secure_states(), 0);
        for tt in 0..4 {
            for s in 0..2 {
                assert_eq!(set.fallback(tt, s), argmin(t.row(tt, s)));
            }
        }
        let fb = Policy::deterministic(2, &(0..4).map(|tt| (0..2).map(|s| set.fallback(tt, s)).collect()).collect::<Vec<_>>()).unwrap();
        assert!(is_member(&fb, &set, &t).member);
    }

    #[test]
    fn hazard_pair_secure_set() {
        let m = hazard_pair();
        let (eta, t) = min_threat_policy(&m, ThreatMode::DiscountedDanger).unwrap();
        let set = build_secure_set(&t, &[0.1; 4]).unwrap();
        assert!(set.is_secure_action(0, 0));
        assert!(!set.is_secure_action(0, 1));
        assert!(!set.is_secure(1));
        assert!(is_member(&eta, &set, &t).member);

        let mut pi = eta.clone();
        pi.set_dist(2, 0, &[0.99, 0.01]).unwrap();
        let res = is_member(&pi, &set, &t);
        assert!(!res.member);
        assert_eq!(res.violations, vec![Violation { t: 2, s: 0, a: Some(1), kind: ViolationKind::InsecureAction }]);
    }

    #[test]
    fn sampled_members_pass_membership() {
        let m = crate::envs::random::random_cmdp(6, 3, 4, 0.4, 5);
        let (_, t) = min_threat_policy(&m, ThreatMode::DiscountedDanger).unwrap();
        let set = build_secure_set(&t, &[0.3; 4]).unwrap();
        let mut r = crate::rng::stream(0, 0);
        for sparsity in [0.0, 0.5, 1.0] {
            let pi = sample_member(&set, sparsity, &mut r);
            assert!(is_member(&pi, &set, &t).member);
        }
    }

    #[test]
    fn certificate_for_baseline_itself() {
        let m = hazard_pair();
        let eta = Policy::from_fn(4, 2, 2, |_, _| vec![0.9, 0.1]).unwrap();
        let t = compute_threat(&m, &eta).unwrap();
        let x = vec![t.max_value(); 4];
        let set = build_secure_set(&t, &x).unwrap();
        let cert = certify_bound(&m, &eta, &eta, &set, &t, 0).unwrap();
        assert!(cert.z_terms.iter().all(|&z| z == 0.0));
        assert_eq!(cert.rhs, x[0]);
        assert!(cert.holds);
        assert!((cert.lhs - t.state_value(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn certificate_refuses_outside_hypothesis() {
        let m = hazard_pair();
        let (eta, t) = min_threat_policy(&m, ThreatMode::DiscountedDanger).unwrap();
        let set = build_secure_set(&t, &[0.1; 4]).unwrap();
        let risky = Policy::stationary_deterministic(4, 2, &[1, 0]).unwrap().expanded();
        assert!(matches!(certify_bound(&m, &eta, &risky, &set, &t, 0), Err(Error::Precondition(_))));
        let mut wrong = t.clone();
        wrong.values[0] += 0.5;
        assert!(matches!(certify_bound(&m, &eta, &eta, &set, &wrong, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn certificate_json_fields() {
        let cert = BoundCertificate { start: 0, lhs: 0.1, rhs: 0.2, z_terms: vec![0.5], holds: true };
        let v: serde_json::Value = serde_json::from_str(&cert.to_json().unwrap()).unwrap();
        for key in ["lhs", "rhs", "z_terms", "holds"] {
            assert!(v.get(key).is_some());
        }
    }

    #[test]
    fn composition_rules() {
        let m = hazard_pair();
        let p = Policy::uniform(4, 2, 2);
        let acc = crate::threat::compute_accident_threat(&m, &p).unwrap();
        let single = compose_threats(&[(&acc, 0)], 1, 1).unwrap();
        assert_eq!(single, acc.value(1, 0, 1));
        assert_eq!(compose_threats(&[(&acc, 1), (&acc, 1)], 0, 0).unwrap(), 1.0);
        let disc = compute_threat(&m, &p).unwrap();
        assert!(compose_threats(&[(&disc, 0)], 0, 0).is_err());
        let zero = crate::threat::compute_accident_threat(&m.with_reward(m.reward.clone()).unwrap(), &p).unwrap();
        let mut z = zero.clone();
        z.values.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(compose_threats(&[(&z, 0), (&z, 1)], 0, 0).unwrap(), 0.0);
    }
}
