//! Reward planning restricted to secure actions.
//!
//! The planning MDP keeps only secure states. Each secure action row folds in
//! the detour through non-secure states, where the fallback policy is played
//! until the trajectory re-enters the secure set or the horizon ends. The
//! detour contributes its discounted reward to the row and delays the arrival
//! time of the outcome.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cmdp::{Cmdp, SafetySpec, ThreatMode};
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyDocument};
use crate::secure::{accident_threshold, build_secure_set, certify_bound, secure_threshold, BoundCertificate, SecureSet};
use crate::sim::exact_return;
use crate::threat::{min_threat_policy, threat_table, ThreatTable};

const NO_ROW: u32 = u32::MAX;
const SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PmdpOutcome {
    /// Absolute time of arrival in the secure set, in `(t, T]`.
    pub arrival: usize,
    pub state: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmdpRow {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    /// `r(s, a)`, earned at weight `gamma` relative to the row.
    pub reward: f64,
    /// Detour reward, already discounted relative to the row.
    pub detour_reward: f64,
    pub outcomes: Vec<PmdpOutcome>,
    /// Mass still outside the secure set at the horizon.
    pub truncated_mass: f64,
}

/// Time-indexed planning MDP over secure states and actions.
#[derive(Clone, Debug)]
pub struct Pmdp {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub initial: Vec<f64>,
    pub secure: SecureSet,
    index: Vec<u32>,
    rows: Vec<PmdpRow>,
}

impl Pmdp {
    pub fn row(&self, t: usize, s: usize, a: usize) -> Option<&PmdpRow> {
        match self.index[(t * self.n_states + s) * self.n_actions + a] {
            NO_ROW => None,
            i => Some(&self.rows[i as usize]),
        }
    }

    pub fn rows(&self) -> &[PmdpRow] {
        &self.rows
    }

    /// `Q_t(s, a)` under the continuation values `v[t'][s']` for `t' in [0, T]`.
    fn q(&self, row: &PmdpRow, v: &[Vec<f64>]) -> f64 {
        let g = self.gamma;
        let mut q = g * row.reward + row.detour_reward;
        for o in &row.outcomes {
            q += o.prob * g.powi((o.arrival - row.t) as i32) * v[o.arrival][o.state];
        }
        q
    }
}

/// Builds the planning MDP for `cmdp` and a secure set.
///
/// Fails when no state is secure or when the initial distribution puts mass
/// outside the secure set.
pub fn build_pmdp(cmdp: &Cmdp, secure: &SecureSet) -> Result<Pmdp> {
    if secure.n_states != cmdp.n_states || secure.n_actions != cmdp.n_actions || secure.horizon != cmdp.horizon {
        return Err(Error::Dimension("secure set does not match the CMDP".into()));
    }
    if secure.n_secure_states() == 0 {
        return Err(Error::Precondition("no secure state".into()));
    }
    let outside: f64 = cmdp.initial_support().filter(|&s| !secure.is_secure(s)).map(|s| cmdp.initial[s]).sum();
    if outside > 0.0 {
        return Err(Error::Precondition(format!("initial distribution has mass {outside} outside the secure set")));
    }
    let (n, m, horizon) = (cmdp.n_states, cmdp.n_actions, cmdp.horizon);
    let mut index = vec![NO_ROW; horizon * n * m];
    let mut rows = Vec::new();
    for t in 0..horizon {
        for s in (0..n).filter(|&s| secure.is_secure(s)) {
            for a in secure.actions(s) {
                index[(t * n + s) * m + a] = rows.len() as u32;
                rows.push(expand_row(cmdp, secure, t, s, a));
            }
        }
    }
    Ok(Pmdp {
        horizon,
        n_states: n,
        n_actions: m,
        gamma: cmdp.gamma,
        initial: cmdp.initial.clone(),
        secure: secure.clone(),
        index,
        rows,
    })
}

fn expand_row(cmdp: &Cmdp, secure: &SecureSet, t: usize, s: usize, a: usize) -> PmdpRow {
    let mut row = PmdpRow {
        t,
        s,
        a,
        reward: cmdp.r(s, a),
        detour_reward: 0.0,
        outcomes: Vec::new(),
        truncated_mass: 0.0,
    };
    let mut outside: BTreeMap<usize, f64> = BTreeMap::new();
    for (s2, p) in cmdp.transition.row(s, a) {
        *outside.entry(s2).or_default() += p;
    }
    let mut j = t + 1;
    loop {
        let mut arrivals: BTreeMap<usize, f64> = BTreeMap::new();
        outside.retain(|&s2, p| {
            if secure.is_secure(s2) {
                *arrivals.entry(s2).or_default() += *p;
                false
            } else {
                true
            }
        });
        row.outcomes.extend(arrivals.into_iter().map(|(state, prob)| PmdpOutcome { arrival: j, state, prob }));
        if j == cmdp.horizon || outside.is_empty() {
            row.truncated_mass = outside.values().sum();
            return row;
        }
        let weight = cmdp.gamma.powi((j - t + 1) as i32);
        let mut next: BTreeMap<usize, f64> = BTreeMap::new();
        for (&s2, &p) in &outside {
            let fb = secure.fallback(j, s2);
            row.detour_reward += weight * p * cmdp.r(s2, fb);
            for (s3, q) in cmdp.transition.row(s2, fb) {
                *next.entry(s3).or_default() += p * q;
            }
        }
        outside = next;
        j += 1;
    }
}

#[derive(Clone, Debug)]
pub struct PmdpSolution {
    /// `V_t(s)` for `t in [0, T]`; zero off the secure set and at `T`.
    pub values: Vec<Vec<f64>>,
    /// Greedy policy on secure states, fallback elsewhere.
    pub policy: Policy,
}

impl PmdpSolution {
    pub fn initial_value(&self, initial: &[f64]) -> f64 {
        initial.iter().zip(&self.values[0]).map(|(p, v)| p * v).sum()
    }
}

/// Backward induction on the planning MDP; ties go to the lowest action.
pub fn solve_pmdp(pmdp: &Pmdp) -> Result<PmdpSolution> {
    let (n, horizon) = (pmdp.n_states, pmdp.horizon);
    let mut values = vec![vec![0.0; n]; horizon + 1];
    let mut actions = vec![vec![0usize; n]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..n {
            if !pmdp.secure.is_secure(s) {
                actions[t][s] = pmdp.secure.fallback(t, s);
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for a in pmdp.secure.actions(s) {
                let row = pmdp.row(t, s, a).expect("row for every secure action");
                let q = pmdp.q(row, &values);
                if best.is_none_or(|(_, b)| q > b) {
                    best = Some((a, q));
                }
            }
            let (a, q) = best.expect("secure state has a secure action");
            actions[t][s] = a;
            values[t][s] = q;
        }
    }
    Ok(PmdpSolution { values, policy: Policy::deterministic(pmdp.n_actions, &actions)? })
}

/// Expected return of `policy` computed on the planning MDP. The policy must
/// only use secure actions on secure states; its behavior elsewhere is
/// ignored because detours always follow the fallback.
pub fn pmdp_policy_return(pmdp: &Pmdp, policy: &Policy) -> Result<f64> {
    let (n, horizon) = (pmdp.n_states, pmdp.horizon);
    if policy.n_states() != n || policy.n_actions() != pmdp.n_actions || policy.horizon() != horizon {
        return Err(Error::Dimension("policy does not match the planning MDP".into()));
    }
    let mut values = vec![vec![0.0; n]; horizon + 1];
    for t in (0..horizon).rev() {
        for s in (0..n).filter(|&s| pmdp.secure.is_secure(s)) {
            let mut v = 0.0;
            for (a, &p) in policy.dist(t, s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let row = pmdp
                    .row(t, s, a)
                    .ok_or_else(|| Error::Precondition(format!("action {a} is not secure at state {s}")))?;
                v += p * pmdp.q(row, &values);
            }
            values[t][s] = v;
        }
    }
    Ok(pmdp.initial.iter().zip(&values[0]).map(|(p, v)| p * v).sum())
}

/// Solves the secure-restricted problem by backward induction on the full
/// state space, valuing non-secure states under the fallback. Produces the same
/// values and policy as [`solve_pmdp`] without materializing detour rows.
pub fn solve_secure(cmdp: &Cmdp, secure: &SecureSet) -> Result<PmdpSolution> {
    let (n, m, horizon) = (cmdp.n_states, cmdp.n_actions, cmdp.horizon);
    if secure.n_states != n || secure.n_actions != m || secure.horizon != horizon {
        return Err(Error::Dimension("secure set does not match the CMDP".into()));
    }
    let g = cmdp.gamma;
    // `u[t]` values every state: optimal on secure states, fallback elsewhere.
    let mut u = vec![vec![0.0; n]; horizon + 1];
    let mut actions = vec![vec![0usize; n]; horizon];
    for t in (0..horizon).rev() {
        let (head, tail) = u.split_at_mut(t + 1);
        let next = &tail[0];
        let cur = &mut head[t];
        for s in 0..n {
            let q = |a: usize| g * cmdp.r(s, a) + g * cmdp.transition.expect(s, a, next);
            if secure.is_secure(s) {
                let mut best: Option<(usize, f64)> = None;
                for a in secure.actions(s) {
                    let v = q(a);
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((a, v));
                    }
                }
                let (a, v) = best.expect("secure state has a secure action");
                actions[t][s] = a;
                cur[s] = v;
            } else {
                let a = secure.fallback(t, s);
                actions[t][s] = a;
                cur[s] = q(a);
            }
        }
    }
    let values = u
        .into_iter()
        .map(|row| row.into_iter().enumerate().map(|(s, v)| if secure.is_secure(s) { v } else { 0.0 }).collect())
        .collect();
    Ok(PmdpSolution { values, policy: Policy::deterministic(m, &actions)? })
}

#[derive(Clone, Debug)]
pub struct RpOptions {
    /// Baseline policy; the threat-minimizing policy when absent.
    pub baseline: Option<Policy>,
    /// Precomputed threat table of `baseline`, e.g. read back from a recon
    /// run. Recomputed when absent.
    pub baseline_threat: Option<ThreatTable>,
    /// Cap on the expected total-variation gap used by the accident threshold.
    pub tv_cap: f64,
}

impl Default for RpOptions {
    fn default() -> Self {
        Self { baseline: None, baseline_threat: None, tv_cap: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct RpSolution {
    pub policy: Policy,
    pub baseline: Policy,
    pub baseline_threat: ThreatTable,
    pub secure: SecureSet,
    pub safety: SafetySpec,
    pub x_star: f64,
    /// `sum_s P0(s) V_0(s)` on the planning problem.
    pub planned_value: f64,
    /// Exact expected return of `policy` on the original CMDP.
    pub expected_return: f64,
    /// Exact threat of `policy` from each initial state, `(s, T^pi_0(s))`.
    pub start_threats: Vec<(usize, f64)>,
    pub certificates: Vec<BoundCertificate>,
    pub certified: bool,
    pub diagnostics: Vec<String>,
}

impl RpSolution {
    pub fn to_document(&self) -> SolvedPolicyDocument {
        SolvedPolicyDocument {
            policy: self.policy.to_document(),
            certified: self.certified,
            x_star: self.x_star,
            budget: self.safety.budget,
            mode: self.safety.mode,
        }
    }
}

/// JSON form of a solved policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvedPolicyDocument {
    pub policy: PolicyDocument,
    pub certified: bool,
    pub x_star: f64,
    pub budget: f64,
    pub mode: ThreatMode,
}

/// The single threshold `x*` applied at every time step.
pub fn threshold_for(safety: &SafetySpec, beta: f64, horizon: usize, tv_cap: f64) -> Result<f64> {
    match safety.mode {
        ThreatMode::DiscountedDanger => secure_threshold(safety.budget, beta, horizon),
        ThreatMode::AccidentProbability => accident_threshold(safety.budget, horizon, tv_cap),
    }
}

/// Threat estimation, secure-set construction and reward planning in one call.
///
/// The result is certified when every initial state passes the baseline gate
/// `E_eta[T^eta_0(s_0, .)] <= x*`, lies in the secure set, and the deviation
/// bound for the planned policy evaluates to at most the budget.
pub fn rp_solve(cmdp: &Cmdp, safety: &SafetySpec, options: &RpOptions) -> Result<RpSolution> {
    cmdp.validate().into_result()?;
    safety.check()?;
    let (baseline, baseline_threat) = match (&options.baseline, &options.baseline_threat) {
        (Some(eta), Some(table)) => {
            eta.check_against(cmdp)?;
            if table.mode != safety.mode
                || (table.horizon, table.n_states, table.n_actions) != (cmdp.horizon, cmdp.n_states, cmdp.n_actions)
            {
                return Err(Error::Dimension("threat table does not match the CMDP or safety mode".into()));
            }
            (eta.clone(), table.clone())
        }
        (Some(eta), None) => {
            eta.check_against(cmdp)?;
            (eta.clone(), threat_table(cmdp, eta, safety.mode)?)
        }
        (None, Some(_)) => return Err(Error::Argument("a threat table needs its baseline policy".into())),
        (None, None) => min_threat_policy(cmdp, safety.mode)?,
    };
    let x_star = threshold_for(safety, cmdp.beta, cmdp.horizon, options.tv_cap)?;
    let secure = build_secure_set(&baseline_threat, &vec![x_star; cmdp.horizon])?;
    let solution = solve_secure(cmdp, &secure)?;
    let planned_value = solution.initial_value(&cmdp.initial);
    let policy = solution.policy;
    let expected_return = exact_return(cmdp, &policy)?;
    let own = threat_table(cmdp, &policy, safety.mode)?;

    let mut diagnostics = Vec::new();
    let mut certificates = Vec::new();
    let mut start_threats = Vec::new();
    for s0 in cmdp.initial_support() {
        start_threats.push((s0, own.state_value(0, s0)));
        let gate = baseline_threat.state_value(0, s0);
        if gate > x_star + SLACK {
            diagnostics.push(format!("baseline threat {gate} at initial state {s0} exceeds x* = {x_star}"));
        }
        if !secure.is_secure(s0) {
            diagnostics.push(format!("initial state {s0} is not secure"));
            continue;
        }
        match certify_bound(cmdp, &baseline, &policy, &secure, &baseline_threat, s0) {
            Ok(cert) => {
                if !cert.holds || cert.rhs > safety.budget + SLACK {
                    diagnostics.push(format!(
                        "bound at state {s0}: threat {} vs bound {} and budget {}",
                        cert.lhs, cert.rhs, safety.budget
                    ));
                }
                certificates.push(cert);
            }
            Err(e) => diagnostics.push(format!("certificate at state {s0}: {e}")),
        }
    }
    Ok(RpSolution {
        policy,
        baseline,
        baseline_threat,
        secure,
        safety: *safety,
        x_star,
        planned_value,
        expected_return,
        start_threats,
        certificates,
        certified: diagnostics.is_empty(),
        diagnostics,
    })
}
