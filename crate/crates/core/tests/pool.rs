use proptest::prelude::*;

use safeplan::envs::gather::{grid_gather, GatherConfig};
use safeplan::envs::random::{random_cmdp, RandomCmdpConfig};
use safeplan::planner::{build_pmdp, rp_solve, RpOptions};
use safeplan::secure::{build_secure_set, is_member, sample_member};
use safeplan::sim::{exact_return, simulate};
use safeplan::threat::{compute_threat, min_threat_policy};
use safeplan::{rng, Policy, SafetySpec, ThreatMode};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn secure_set_matches_its_definition(seed in 0u64..10_000, n in 1usize..6, m in 1usize..4, h in 1usize..5, level in 0.0f64..1.0) {
        let cmdp = random_cmdp(n, m, h, 0.4, seed);
        let mut r = rng::stream(seed, 3);
        let pi = Policy::random(h, n, m, 0.3, &mut r);
        let table = compute_threat(&cmdp, &pi).unwrap();
        let x: Vec<f64> = (0..h).map(|t| level * table.max_value() * (1.0 + t as f64) / h as f64).collect();
        let set = build_secure_set(&table, &x).unwrap();
        for s in 0..n {
            for a in 0..m {
                let expected = (0..h).all(|t| table.value(t, s, a) <= x[t]);
                prop_assert_eq!(set.is_secure_action(s, a), expected);
            }
            prop_assert_eq!(set.is_secure(s), (0..m).any(|a| set.is_secure_action(s, a)));
            for t in 0..h {
                let row = table.row(t, s);
                let fb = set.fallback(t, s);
                prop_assert!(row.iter().all(|&v| row[fb] <= v));
                prop_assert!(row[..fb].iter().all(|&v| v > row[fb]));
            }
        }
    }

    #[test]
    fn dominating_tables_shrink_secure_sets(seed in 0u64..10_000, bump in 0.0f64..0.5, level in 0.0f64..1.0) {
        let cmdp = random_cmdp(5, 3, 4, 0.4, seed);
        let (_, low) = min_threat_policy(&cmdp, ThreatMode::DiscountedDanger).unwrap();
        let mut high = low.clone();
        for (i, v) in high.values.iter_mut().enumerate() {
            if i % 3 != 0 {
                *v += bump;
            }
        }
        let x = vec![level * high.max_value().max(1e-3); 4];
        let a = build_secure_set(&low, &x).unwrap();
        let b = build_secure_set(&high, &x).unwrap();
        for s in 0..5 {
            for act in 0..3 {
                prop_assert!(!b.is_secure_action(s, act) || a.is_secure_action(s, act));
            }
        }
    }
}

/// Occupancy of secure states in the reduced model, by forward propagation
/// over its rows.
fn reduced_occupancy(pmdp: &safeplan::planner::Pmdp, pi: &Policy, initial: &[f64]) -> Vec<Vec<f64>> {
    let mut occ = vec![vec![0.0; pmdp.n_states]; pmdp.horizon];
    occ[0].copy_from_slice(initial);
    for t in 0..pmdp.horizon {
        for s in 0..pmdp.n_states {
            let mass = occ[t][s];
            if mass == 0.0 || !pmdp.secure.is_secure(s) {
                continue;
            }
            for a in 0..pmdp.n_actions {
                let Some(row) = pmdp.row(t, s, a) else { continue };
                for o in &row.outcomes {
                    if o.arrival < pmdp.horizon {
                        occ[o.arrival][o.state] += mass * pi.prob(t, s, a) * o.prob;
                    }
                }
            }
        }
    }
    occ
}

#[test]
fn reduced_occupancy_matches_simulation() {
    // first seeded instance with a secure start and some insecure states
    let (m, secure) = (0..500)
        .find_map(|seed| {
            let m = RandomCmdpConfig::new(5, 2, 5, 0.35).generate(seed);
            let (_, table) = min_threat_policy(&m, ThreatMode::DiscountedDanger).unwrap();
            let secure = build_secure_set(&table, &[0.3; 5]).unwrap();
            (secure.is_secure(0) && secure.n_secure_states() < 4).then_some((m, secure))
        })
        .expect("some seed qualifies");
    let pmdp = build_pmdp(&m, &secure).unwrap();
    let pi = sample_member(&secure, 0.2, &mut rng::stream(12, 0));
    let expected = reduced_occupancy(&pmdp, &pi, &m.initial);
    let n = 100_000;
    let mut counts = vec![vec![0usize; 5]; 5];
    for seed in 0..n {
        for (t, &s) in simulate(&m, &pi, seed).unwrap().states.iter().take(5).enumerate() {
            counts[t][s] += 1;
        }
    }
    for t in 0..5 {
        for s in (0..5).filter(|&s| secure.is_secure(s)) {
            let p = expected[t][s];
            let freq = counts[t][s] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se + 1e-12, "t {t} s {s}: {freq} vs {p}");
        }
    }
}

#[test]
fn solved_policies_are_pool_members() {
    for seed in 0..20 {
        let m = random_cmdp(6, 3, 5, 0.4, seed);
        let sol = rp_solve(&m, &SafetySpec::new(0.4, ThreatMode::DiscountedDanger).unwrap(), &RpOptions::default()).unwrap();
        assert!(is_member(&sol.policy, &sol.secure, &sol.baseline_threat).member);
    }
}

#[test]
fn constraint_costs_return_on_a_hazard_grid() {
    let cfg = GatherConfig { width: 5, height: 5, n_apples: 2, n_bombs: 6, horizon: 12, placement_seed: 3, ..GatherConfig::default() };
    let m = grid_gather(&cfg).unwrap().cmdp;
    let tight = rp_solve(&m, &SafetySpec::new(0.05, ThreatMode::DiscountedDanger).unwrap(), &RpOptions::default()).unwrap();
    let loose = rp_solve(&m, &SafetySpec::new(1e6, ThreatMode::DiscountedDanger).unwrap(), &RpOptions::default()).unwrap();
    assert!(tight.expected_return <= loose.expected_return + 1e-12);
    assert!((tight.expected_return - exact_return(&m, &tight.policy).unwrap()).abs() < 1e-10);
    assert!((loose.expected_return - exact_return(&m, &loose.policy).unwrap()).abs() < 1e-10);
    assert!((tight.planned_value - tight.expected_return).abs() < 1e-10);
}
