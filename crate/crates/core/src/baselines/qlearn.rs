//! Tabular Q-learning on a danger-penalized reward `r - lambda * d`.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;

use crate::cmdp::Cmdp;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;
use crate::sim::Environment;
use crate::threat::argmin;

#[derive(Clone, Debug, PartialEq)]
pub struct QConfig {
    pub episodes: usize,
    pub lambda: f64,
    /// When set, the penalty moves linearly from `lambda` to this value.
    pub lambda_end: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub seed: u64,
}

impl QConfig {
    pub fn new(episodes: usize, lambda: f64, seed: u64) -> Self {
        Self { episodes, lambda, lambda_end: None, epsilon_start: 1.0, epsilon_end: 0.05, seed }
    }

    fn progress(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            1.0
        } else {
            episode as f64 / (self.episodes - 1) as f64
        }
    }

    fn lambda_at(&self, episode: usize) -> f64 {
        match self.lambda_end {
            Some(end) => self.lambda + (end - self.lambda) * self.progress(episode),
            None => self.lambda,
        }
    }

    fn epsilon_at(&self, episode: usize) -> f64 {
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * self.progress(episode)
    }

    fn check(&self) -> Result<()> {
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Argument(format!("{name} {e} outside [0, 1]")));
            }
        }
        if !self.lambda.is_finite() || self.lambda_end.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Argument("penalty must be finite".into()));
        }
        Ok(())
    }
}

/// Action values keyed by an observation; unseen keys read as zero.
#[derive(Clone, Debug)]
pub struct QTable<K> {
    n_actions: usize,
    values: HashMap<K, Vec<f64>>,
    visits: HashMap<K, Vec<u32>>,
    /// Discounted shaped return of every training episode.
    pub training_returns: Vec<f64>,
}

impl<K: Hash + Eq + Clone> QTable<K> {
    pub fn new(n_actions: usize) -> Self {
        Self { n_actions, values: HashMap::new(), visits: HashMap::new(), training_returns: Vec::new() }
    }

    pub fn values(&self, key: &K) -> Option<&[f64]> {
        self.values.get(key).map(Vec::as_slice)
    }

    pub fn n_keys(&self) -> usize {
        self.values.len()
    }

    /// Highest-valued action, lowest index on ties; action 0 for unseen keys.
    pub fn greedy(&self, key: &K) -> usize {
        match self.values.get(key) {
            Some(q) => {
                let neg: Vec<f64> = q.iter().map(|v| -v).collect();
                argmin(&neg)
            }
            None => 0,
        }
    }

    fn max_value(&self, key: &K) -> f64 {
        self.values.get(key).map_or(0.0, |q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn update(&mut self, key: &K, a: usize, target: f64) {
        let m = self.n_actions;
        let n = &mut self.visits.entry(key.clone()).or_insert_with(|| vec![0; m])[a];
        *n += 1;
        let lr = 1.0 / f64::from(*n);
        let q = &mut self.values.entry(key.clone()).or_insert_with(|| vec![0.0; m])[a];
        *q += lr * (target - *q);
    }
}

/// Trains a Q table with epsilon-greedy exploration. `key(t, state)` maps the
/// environment state to the learner's observation.
pub fn train_q<E, K, F>(env: &E, key: F, cfg: &QConfig) -> Result<QTable<K>>
where
    E: Environment,
    K: Hash + Eq + Clone,
    F: Fn(usize, &E::State) -> K,
{
    cfg.check()?;
    let m = env.n_actions();
    let horizon = env.horizon();
    let gamma = env.gamma();
    let mut table = QTable::new(m);
    let mut r = rng::stream(cfg.seed, 1);
    for episode in 0..cfg.episodes {
        let lambda = cfg.lambda_at(episode);
        let eps = cfg.epsilon_at(episode);
        let mut state = env.sample_initial(&mut r);
        let mut k = key(0, &state);
        let mut ret = 0.0;
        let mut w = 1.0;
        for t in 0..horizon {
            let a = if r.random::<f64>() < eps { r.random_range(0..m) } else { table.greedy(&k) };
            let shaped = env.reward(&state, a) - lambda * env.danger(&state, a);
            w *= gamma;
            ret += w * shaped;
            let next = env.sample_next(&state, a, &mut r);
            let next_key = key(t + 1, &next);
            let cont = if t + 1 < horizon { table.max_value(&next_key) } else { 0.0 };
            table.update(&k, a, shaped + gamma * cont);
            state = next;
            k = next_key;
        }
        table.training_returns.push(ret);
    }
    Ok(table)
}

/// Time-indexed greedy policy of a table keyed by `(t, s)`.
pub fn greedy_policy(cmdp: &Cmdp, table: &QTable<(usize, usize)>) -> Result<Policy> {
    let actions: Vec<Vec<usize>> =
        (0..cmdp.horizon).map(|t| (0..cmdp.n_states).map(|s| table.greedy(&(t, s))).collect()).collect();
    Policy::deterministic(cmdp.n_actions, &actions)
}
