use safeplan::baselines::{greedy_policy, mpc_decide, train_q, MpcConfig, QConfig};
use safeplan::envs::random::RandomCmdpConfig;
use safeplan::envs::trap::deep_trap;
use safeplan::planner::{rp_solve, RpOptions};
use safeplan::sim::exact_return;
use safeplan::{Cmdp, SafetySpec, ThreatMode};

/// Unconstrained optimum by backward induction; returns the value from the
/// initial distribution.
fn optimum(m: &Cmdp) -> f64 {
    let mut v = vec![0.0; m.n_states];
    for _ in 0..m.horizon {
        v = (0..m.n_states)
            .map(|s| {
                (0..m.n_actions)
                    .map(|a| m.gamma * (m.r(s, a) + m.transition.row(s, a).map(|(s2, p)| p * v[s2]).sum::<f64>()))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    m.initial.iter().zip(&v).map(|(p, x)| p * x).sum()
}

#[test]
fn unpenalized_q_learning_approaches_the_optimum() {
    let m = RandomCmdpConfig::new(3, 2, 4, 0.0).generate(2);
    let q = train_q(&m, |t, s| (t, *s), &QConfig::new(100_000, 0.0, 5)).unwrap();
    let learned = exact_return(&m, &greedy_policy(&m, &q).unwrap()).unwrap();
    let best = optimum(&m);
    assert!(best - learned <= 0.01 * best.abs(), "learned {learned} vs optimum {best}");
}

/// Best danger-free discounted reward over every action sequence of a
/// deterministic CMDP, together with the first actions achieving it.
fn brute_force(m: &Cmdp, s: usize, steps: usize) -> Option<(f64, Vec<usize>)> {
    if steps == 0 {
        return Some((0.0, vec![]));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for a in 0..m.n_actions {
        if m.d(s, a) > 0.0 {
            continue;
        }
        let (next, _) = m.transition.row(s, a).next().unwrap();
        let Some((rest, _)) = brute_force(m, next, steps - 1) else { continue };
        let v = m.gamma * (m.r(s, a) + rest);
        match &mut best {
            Some((b, firsts)) if (v - *b).abs() < 1e-12 => firsts.push(a),
            Some((b, _)) if v < *b => {}
            _ => best = Some((v, vec![a])),
        }
    }
    best
}

#[test]
fn full_depth_mpc_matches_constrained_optimum() {
    let mut checked = 0;
    for seed in 0..200 {
        let mut cfg = RandomCmdpConfig::new(5, 3, 4, 0.3);
        cfg.max_successors = Some(1);
        let m = cfg.generate(seed);
        let Some((_, firsts)) = brute_force(&m, 0, m.horizon) else { continue };
        if firsts.len() != 1 {
            continue;
        }
        let mpc = MpcConfig { depth: m.horizon, threshold: 0.0, mode: ThreatMode::DiscountedDanger, beta: m.beta, node_budget: None };
        let d = mpc_decide(&m, &0, 0, &mpc).unwrap();
        assert!(d.found_safe);
        assert_eq!(d.action, firsts[0], "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} instances with a unique optimum");
}

#[test]
fn short_lookahead_walks_into_the_deep_trap() {
    let m = deep_trap(3, 10).unwrap();
    let cfg = |depth| MpcConfig { depth, threshold: 0.1, mode: ThreatMode::DiscountedDanger, beta: m.beta, node_budget: None };
    assert_eq!(mpc_decide(&m, &0, 0, &cfg(2)).unwrap().action, 1);
    assert_eq!(mpc_decide(&m, &0, 0, &cfg(4)).unwrap().action, 0);
    let sol = rp_solve(&m, &SafetySpec::new(0.1, ThreatMode::DiscountedDanger).unwrap(), &RpOptions::default()).unwrap();
    assert!(sol.certified);
    assert_eq!(sol.policy.deterministic_action(0, 0), Some(0));
}
