use serde::{Deserialize, Serialize};

/// 95% Wilson score interval for `successes / trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: usize,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    pub accidents: usize,
    pub crashed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub method: String,
    pub episodes: usize,
    /// Mean discounted return over every episode.
    pub average_reward: f64,
    /// Standard deviation of the per-seed mean return.
    pub reward_std_over_seeds: f64,
    pub crashes: usize,
    pub crash_rate: f64,
    pub crash_rate_ci95: (f64, f64),
    /// Whether RP produced a certified solution; absent for other methods.
    pub certified: Option<bool>,
}

impl Metrics {
    pub fn from_episodes(method: &str, records: &[EpisodeRecord], certified: Option<bool>) -> Self {
        let n = records.len();
        let crashes = records.iter().filter(|r| r.crashed).count();
        let average_reward = if n == 0 { 0.0 } else { records.iter().map(|r| r.discounted_return).sum::<f64>() / n as f64 };
        let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
        seeds.dedup();
        let means: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let xs: Vec<f64> = records.iter().filter(|r| r.seed == s).map(|r| r.discounted_return).collect();
                xs.iter().sum::<f64>() / xs.len() as f64
            })
            .collect();
        let reward_std_over_seeds = if means.len() > 1 {
            let mu = means.iter().sum::<f64>() / means.len() as f64;
            (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            method: method.to_string(),
            episodes: n,
            average_reward,
            reward_std_over_seeds,
            crashes,
            crash_rate: if n == 0 { 0.0 } else { crashes as f64 / n as f64 },
            crash_rate_ci95: wilson_interval(crashes, n),
            certified,
        }
    }
}

/// Wall-clock figures kept apart from the deterministic metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: String,
    /// Solve or training time in seconds.
    pub setup_seconds: f64,
    pub median_decision_seconds: f64,
    pub decisions: usize,
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_532).abs() < 1e-5);
        let (lo, hi) = wilson_interval(5, 10);
        assert!((lo - 0.236_593).abs() < 1e-5);
        assert!((hi - 0.763_407).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn wilson_contains_estimate(k in 0usize..200, extra in 0usize..200) {
            let n = k + extra + 1;
            let (lo, hi) = wilson_interval(k, n);
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        }
    }

    #[test]
    fn metrics_aggregate() {
        let rec = |seed, r, crashed| EpisodeRecord {
            seed,
            episode: 0,
            discounted_return: r,
            undiscounted_return: r,
            accidents: usize::from(crashed),
            crashed,
        };
        let m = Metrics::from_episodes("x", &[rec(0, 1.0, false), rec(0, 3.0, true), rec(1, 4.0, false)], None);
        assert_eq!(m.episodes, 3);
        assert!((m.average_reward - 8.0 / 3.0).abs() < 1e-12);
        assert!((m.reward_std_over_seeds - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.crashes, 1);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }
}
