//! Seeded random CMDPs for property tests and sweeps.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::cmdp::{Cmdp, Kernel};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct RandomCmdpConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// Probability that a given `(s, a)` carries danger 1.
    pub hazard_density: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Successors per row; `None` means every state.
    pub max_successors: Option<usize>,
    /// Spread the initial distribution over all states instead of state 0.
    pub uniform_initial: bool,
}

impl RandomCmdpConfig {
    pub fn new(n_states: usize, n_actions: usize, horizon: usize, hazard_density: f64) -> Self {
        Self {
            n_states,
            n_actions,
            horizon,
            hazard_density,
            gamma: 0.95,
            beta: 0.9,
            max_successors: None,
            uniform_initial: false,
        }
    }

    /// Flat Dirichlet rows, uniform `[0, 1)` rewards and Bernoulli dangers.
    pub fn generate(&self, seed: u64) -> Cmdp {
        let mut r = rng::stream(seed, 0xC3D9);
        let (n, m) = (self.n_states.max(1), self.n_actions.max(1));
        let unit = Gamma::new(1.0, 1.0).expect("shape 1 is valid");
        let width = self.max_successors.unwrap_or(n).clamp(1, n);
        let mut rows = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            let support = index::sample(&mut r, n, width).into_vec();
            let weights: Vec<f64> = support.iter().map(|_| unit.sample(&mut r) + 1e-12).collect();
            let total: f64 = weights.iter().sum();
            let mut row: Vec<(usize, f64)> = support.into_iter().zip(weights.iter().map(|w| w / total)).collect();
            row.sort_by_key(|e| e.0);
            // absorb rounding so the row sums to 1 within a few ulps
            let drift: f64 = 1.0 - row.iter().map(|e| e.1).sum::<f64>();
            row[0].1 += drift;
            rows.push(row);
        }
        let reward = (0..n * m).map(|_| r.random::<f64>()).collect();
        let danger = (0..n * m).map(|_| if r.random::<f64>() < self.hazard_density { 1.0 } else { 0.0 }).collect();
        let initial = if self.uniform_initial {
            vec![1.0 / n as f64; n]
        } else {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            v
        };
        let kernel = Kernel::from_rows(n, m, rows).expect("generated rows are in range");
        Cmdp::new(self.horizon.max(1), self.gamma, self.beta, kernel, reward, danger, initial)
            .expect("generated CMDP is valid")
    }
}

/// Random CMDP with default discounting and a point-mass start at state 0.
pub fn random_cmdp(n_states: usize, n_actions: usize, horizon: usize, hazard_density: f64, seed: u64) -> Cmdp {
    RandomCmdpConfig::new(n_states, n_actions, horizon, hazard_density).generate(seed)
}
