//! Trajectory sampling and exact forward evaluation.

use std::io::Write;

use rand::Rng;

use crate::cmdp::Cmdp;
use crate::error::Result;
use crate::policy::{sample_index, Policy};
use crate::rng;

/// An episodic finite-horizon model that can be simulated and expanded.
///
/// [`Cmdp`] implements it over `usize` states; factored environments implement
/// it over structured states that are too numerous to tabulate.
pub trait Environment {
    type State: Clone;

    fn n_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn gamma(&self) -> f64;
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    /// Exact successor distribution; probabilities sum to 1.
    fn successors(&self, state: &Self::State, action: usize) -> Vec<(Self::State, f64)>;
    fn sample_next<R: Rng + ?Sized>(&self, state: &Self::State, action: usize, rng: &mut R) -> Self::State {
        let succ = self.successors(state, action);
        let probs: Vec<f64> = succ.iter().map(|(_, p)| *p).collect();
        succ[sample_index(&probs, rng)].0.clone()
    }
    fn reward(&self, state: &Self::State, action: usize) -> f64;
    fn danger(&self, state: &Self::State, action: usize) -> f64;
}

impl Environment for Cmdp {
    type State = usize;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    fn successors(&self, state: &usize, action: usize) -> Vec<(usize, f64)> {
        self.transition.row(*state, action).collect()
    }

    fn sample_next<R: Rng + ?Sized>(&self, state: &usize, action: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = *state;
        for (next, p) in self.transition.row(*state, action) {
            acc += p;
            last = next;
            if u < acc {
                return next;
            }
        }
        last
    }

    fn reward(&self, state: &usize, action: usize) -> f64 {
        self.r(*state, action)
    }

    fn danger(&self, state: &usize, action: usize) -> f64 {
        self.d(*state, action)
    }
}

/// One episode: `states[t]`, `actions[t]`, and `rewards[t] = r(s_t, a_t)`,
/// `dangers[t] = d(s_t, a_t)` (the values indexed `t + 1` in the objective).
///
/// `accidents[t]` is a Bernoulli draw with success probability `dangers[t]`
/// clipped to `[0, 1]`; for 0/1 dangers it equals the danger.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dangers: Vec<f64>,
    pub accidents: Vec<bool>,
}

impl Trajectory {
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut w = 1.0;
        self.rewards
            .iter()
            .map(|r| {
                w *= gamma;
                w * r
            })
            .sum()
    }

    pub fn crashed(&self) -> bool {
        self.accidents.iter().any(|&a| a)
    }

    /// CSV rows `t,s,a,r,d`; the terminal state is written with empty action fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "s", "a", "r", "d"])?;
        for t in 0..self.actions.len() {
            w.write_record(&[
                t.to_string(),
                self.states[t].to_string(),
                self.actions[t].to_string(),
                self.rewards[t].to_string(),
                self.dangers[t].to_string(),
            ])?;
        }
        let t = self.actions.len();
        w.write_record(&[t.to_string(), self.states[t].to_string(), String::new(), String::new(), String::new()])?;
        w.flush()?;
        Ok(())
    }
}

/// Samples one trajectory; identical seeds give identical trajectories.
pub fn simulate(cmdp: &Cmdp, policy: &Policy, seed: u64) -> Result<Trajectory> {
    policy.check_against(cmdp)?;
    let mut rng = rng::stream(seed, 0);
    Ok(simulate_with(cmdp, policy, &mut rng))
}

pub fn simulate_with<R: Rng + ?Sized>(cmdp: &Cmdp, policy: &Policy, rng: &mut R) -> Trajectory {
    let horizon = cmdp.horizon;
    let mut tr = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        dangers: Vec::with_capacity(horizon),
        accidents: Vec::with_capacity(horizon),
    };
    let mut s = cmdp.sample_initial(rng);
    tr.states.push(s);
    for t in 0..horizon {
        let a = policy.sample(t, s, rng);
        let d = cmdp.d(s, a);
        let accident = rng.random::<f64>() < d.min(1.0);
        tr.actions.push(a);
        tr.rewards.push(cmdp.r(s, a));
        tr.dangers.push(d);
        tr.accidents.push(accident);
        s = cmdp.sample_next(&s, a, rng);
        tr.states.push(s);
    }
    tr
}

/// Summary of one episode in a generic [`Environment`].
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    pub accidents: usize,
    pub steps: usize,
}

impl Episode {
    pub fn crashed(&self) -> bool {
        self.accidents > 0
    }
}

/// Runs `controller(t, state)` for one episode. Accidents are Bernoulli draws
/// with the step's danger as success probability.
pub fn run_episode<E, R, F>(env: &E, mut controller: F, rng: &mut R) -> Result<Episode>
where
    E: Environment,
    R: Rng + ?Sized,
    F: FnMut(usize, &E::State) -> Result<usize>,
{
    let mut state = env.sample_initial(rng);
    let mut ep = Episode { discounted_return: 0.0, undiscounted_return: 0.0, accidents: 0, steps: 0 };
    let mut w = 1.0;
    for t in 0..env.horizon() {
        let a = controller(t, &state)?;
        let r = env.reward(&state, a);
        let d = env.danger(&state, a);
        w *= env.gamma();
        ep.discounted_return += w * r;
        ep.undiscounted_return += r;
        if d > 0.0 && rng.random::<f64>() < d.min(1.0) {
            ep.accidents += 1;
        }
        ep.steps += 1;
        state = env.sample_next(&state, a, rng);
    }
    Ok(ep)
}

/// State distributions `mu_t` for `t in [0, T]` starting from `start`.
pub fn occupancy(cmdp: &Cmdp, policy: &Policy, start: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(cmdp.horizon + 1);
    let mut mu = start.to_vec();
    for t in 0..cmdp.horizon {
        let mut next = vec![0.0; cmdp.n_states];
        for (s, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (a, &pa) in policy.dist(t, s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (s2, p) in cmdp.transition.row(s, a) {
                    next[s2] += m * pa * p;
                }
            }
        }
        out.push(std::mem::replace(&mut mu, next));
    }
    out.push(mu);
    out
}

/// Exact `E[sum_{k=1}^T gamma^k r_k]` by forward occupancy propagation.
pub fn exact_return(cmdp: &Cmdp, policy: &Policy) -> Result<f64> {
    policy.check_against(cmdp)?;
    Ok(return_from(cmdp, policy, &cmdp.initial))
}

/// Expected discounted return when the initial distribution is `start`.
pub fn return_from(cmdp: &Cmdp, policy: &Policy, start: &[f64]) -> f64 {
    let occ = occupancy(cmdp, policy, start);
    let mut total = 0.0;
    let mut w = 1.0;
    for (t, mu) in occ.iter().take(cmdp.horizon).enumerate() {
        w *= cmdp.gamma;
        let step: f64 = mu
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(s, &m)| m * policy.expect(t, s, |a| cmdp.r(s, a)))
            .sum();
        total += w * step;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::Kernel;

    fn chain() -> Cmdp {
        // 0 -> 1 -> 2 -> 2, one action, rewards 1, 2, 3
        let kernel = Kernel::from_rows(3, 1, vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(2, 1.0)]]).unwrap();
        Cmdp::new(3, 0.5, 0.5, kernel, vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn deterministic_chain_has_unique_trajectory() {
        let m = chain();
        let p = Policy::uniform(3, 3, 1);
        for seed in 0..5 {
            let tr = simulate(&m, &p, seed).unwrap();
            assert_eq!(tr.states, vec![0, 1, 2, 2]);
            assert_eq!(tr.rewards, vec![1.0, 2.0, 3.0]);
            assert_eq!(tr.accidents, vec![false, true, false]);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let kernel = Kernel::from_dense(&[vec![vec![0.5, 0.5], vec![0.1, 0.9]], vec![vec![0.3, 0.7], vec![1.0, 0.0]]]).unwrap();
        let m = Cmdp::new(6, 0.9, 0.9, kernel, vec![0.0; 4], vec![0.0; 4], vec![0.5, 0.5]).unwrap();
        let p = Policy::uniform(6, 2, 2);
        assert_eq!(simulate(&m, &p, 11).unwrap(), simulate(&m, &p, 11).unwrap());
        assert_ne!(simulate(&m, &p, 11).unwrap(), simulate(&m, &p, 12).unwrap());
    }

    #[test]
    fn one_state_return_hand_value() {
        let kernel = Kernel::from_rows(1, 1, vec![vec![(0, 1.0)]]).unwrap();
        let m = Cmdp::new(2, 0.5, 0.5, kernel, vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let v = exact_return(&m, &Policy::uniform(2, 1, 1)).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn chain_return_matches_trajectory_return() {
        let m = chain();
        let p = Policy::uniform(3, 3, 1);
        let tr = simulate(&m, &p, 0).unwrap();
        assert!((exact_return(&m, &p).unwrap() - tr.discounted_return(0.5)).abs() < 1e-15);
    }

    #[test]
    fn trajectory_csv_layout() {
        let m = chain();
        let tr = simulate(&m, &Policy::uniform(3, 3, 1), 0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,s,a,r,d");
        assert_eq!(lines[2], "1,1,0,2,1");
        assert_eq!(lines[4], "3,2,,,");
    }
}
