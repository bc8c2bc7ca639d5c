//! Receding-horizon tree search with a worst-case safety lookahead.

use crate::cmdp::ThreatMode;
use crate::error::{Error, Result};
use crate::sim::Environment;
use crate::threat::backup;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcConfig {
    /// Lookahead depth `k`; clipped to the remaining horizon.
    pub depth: usize,
    /// An action is safe when its lookahead safety value is at most this.
    pub threshold: f64,
    pub mode: ThreatMode,
    pub beta: f64,
    /// Maximum number of expanded `(state, action)` nodes per decision.
    pub node_budget: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcDecision {
    pub action: usize,
    /// Worst-case safety value of each root action.
    pub safety: Vec<f64>,
    /// Expectimax reward value of each root action.
    pub reward: Vec<f64>,
    /// Whether any root action met the threshold.
    pub found_safe: bool,
    pub nodes: u64,
}

struct Search<'a, E> {
    env: &'a E,
    cfg: &'a MpcConfig,
    gamma: f64,
    nodes: u64,
}

impl<E: Environment> Search<'_, E> {
    /// `(safety, reward)` of taking `a` in `state` with `depth` steps of lookahead.
    ///
    /// Safety assumes the worst successor and the agent's own safest reply.
    /// Reward is the expectimax value over replies that meet the threshold
    /// (the safest replies when none do).
    fn eval(&mut self, state: &E::State, a: usize, depth: usize) -> Result<(f64, f64)> {
        self.nodes += 1;
        if let Some(b) = self.cfg.node_budget {
            if self.nodes > b {
                return Err(Error::Budget { budget: b });
            }
        }
        let d = self.env.danger(state, a);
        let r = self.env.reward(state, a);
        if depth == 1 {
            return Ok((backup(self.cfg.mode, self.cfg.beta, d, 0.0), self.gamma * r));
        }
        let mut worst = 0.0f64;
        let mut expected = 0.0;
        for (next, p) in self.env.successors(state, a) {
            if p <= 0.0 {
                continue;
            }
            let mut replies = Vec::with_capacity(self.env.n_actions());
            for b in 0..self.env.n_actions() {
                replies.push(self.eval(&next, b, depth - 1)?);
            }
            let safest = replies.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            // replies within the threshold, or the safest ones when none are
            let cut = if safest <= self.cfg.threshold { self.cfg.threshold } else { safest };
            let best = replies.iter().filter(|r| r.0 <= cut).map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(safest);
            expected += p * best;
        }
        Ok((backup(self.cfg.mode, self.cfg.beta, d, worst), self.gamma * (r + expected)))
    }
}

/// Picks the highest-reward safe action, or the safest action when none is
/// safe. Ties go to the lowest index.
pub fn mpc_decide<E: Environment>(env: &E, state: &E::State, t: usize, cfg: &MpcConfig) -> Result<MpcDecision> {
    if cfg.depth == 0 {
        return Err(Error::Argument("lookahead depth must be at least 1".into()));
    }
    if t >= env.horizon() {
        return Err(Error::Argument(format!("time {t} is past the horizon")));
    }
    let depth = cfg.depth.min(env.horizon() - t);
    let mut search = Search { env, cfg, gamma: env.gamma(), nodes: 0 };
    let m = env.n_actions();
    let mut safety = Vec::with_capacity(m);
    let mut reward = Vec::with_capacity(m);
    for a in 0..m {
        let (sv, rv) = search.eval(state, a, depth)?;
        safety.push(sv);
        reward.push(rv);
    }
    let mut best: Option<usize> = None;
    for a in (0..m).filter(|&a| safety[a] <= cfg.threshold) {
        if best.is_none_or(|b| reward[a] > reward[b]) {
            best = Some(a);
        }
    }
    let found_safe = best.is_some();
    let action = best.unwrap_or_else(|| crate::threat::argmin(&safety));
    Ok(MpcDecision { action, safety, reward, found_safe, nodes: search.nodes })
}
