//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;

use safeplan::envs::jam::{joint_threat_two, threat_heatmap, Jam, JamConfig, JamState};
use safeplan::envs::random::RandomCmdpConfig;
use safeplan::experiment::{run, transfer_eval, EnvSpec, ExperimentConfig, Metrics, MethodSpec, RunReport, TransferConfig};
use safeplan::oracle::{enumerate_return, enumerate_threat, DEFAULT_BUDGET};
use safeplan::planner::{build_pmdp, pmdp_policy_return, rp_solve, RpOptions};
use safeplan::secure::{build_secure_set, certify_bound, sample_member};
use safeplan::sim::{exact_return, Environment};
use safeplan::threat::{compute_accident_threat, compute_threat, min_threat_policy};
use safeplan::{rng, Cmdp, Kernel, Policy, SafetySpec, ThreatMode};

type Check = Result<String, String>;

fn random_instance(r: &mut impl Rng, max_states: usize, max_actions: usize, max_horizon: usize) -> (Cmdp, u64) {
    let seed = r.random::<u64>();
    let cmdp = RandomCmdpConfig::new(
        r.random_range(1..=max_states),
        r.random_range(1..=max_actions),
        r.random_range(1..=max_horizon),
        r.random_range(0.0..0.6),
    )
    .generate(seed);
    (cmdp, seed)
}

fn oracle_equivalence() -> Check {
    let mut r = rng::stream(1, 0);
    let (mut cells, mut worst) = (0usize, 0.0f64);
    for i in 0..200 {
        let (m, seed) = random_instance(&mut r, 6, 3, 5);
        let pi = Policy::random(m.horizon, m.n_states, m.n_actions, 0.3, &mut r);
        let disc = compute_threat(&m, &pi).map_err(|e| e.to_string())?;
        let acc = compute_accident_threat(&m, &pi).map_err(|e| e.to_string())?;
        for t in 0..m.horizon {
            for s in 0..m.n_states {
                for a in 0..m.n_actions {
                    for (table, mode) in [(&disc, ThreatMode::DiscountedDanger), (&acc, ThreatMode::AccidentProbability)] {
                        let e = enumerate_threat(&m, &pi, t, s, a, mode, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
                        let gap = (e.value - table.value(t, s, a)).abs();
                        worst = worst.max(gap);
                        if gap > 1e-10 {
                            return Err(format!("instance {i} (seed {seed}) {mode:?} cell ({t},{s},{a}): gap {gap:e}"));
                        }
                        cells += 1;
                    }
                }
            }
        }
        let ret = exact_return(&m, &pi).map_err(|e| e.to_string())?;
        let e = enumerate_return(&m, &pi, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
        worst = worst.max((ret - e.value).abs());
        if (ret - e.value).abs() > 1e-10 {
            return Err(format!("instance {i} (seed {seed}) return gap {:e}", (ret - e.value).abs()));
        }
    }
    Ok(format!("200 instances, {cells} threat cells and 200 returns, max gap {worst:.1e}"))
}

fn safety_sweep() -> Check {
    let mut r = rng::stream(2, 0);
    let (mut certified, mut tried, mut members, mut worst_ratio) = (0, 0, 0usize, 0.0f64);
    while certified < 1000 {
        tried += 1;
        if tried > 50_000 {
            return Err(format!("only {certified} certified instances in {tried} draws"));
        }
        let (m, seed) = random_instance(&mut r, 6, 3, 5);
        let budget = r.random_range(0.05..1.5);
        let safety = SafetySpec::new(budget, ThreatMode::DiscountedDanger).map_err(|e| e.to_string())?;
        let sol = rp_solve(&m, &safety, &RpOptions::default()).map_err(|e| e.to_string())?;
        if !sol.certified {
            continue;
        }
        certified += 1;
        let mut pool = vec![sol.policy.clone()];
        for _ in 0..10 {
            pool.push(sample_member(&sol.secure, r.random_range(0.0..0.8), &mut r));
        }
        for pi in &pool {
            let v = compute_threat(&m, pi).map_err(|e| e.to_string())?.state_value(0, 0);
            worst_ratio = worst_ratio.max(v / budget);
            if v > budget + 1e-10 {
                return Err(format!("seed {seed}: threat {v} exceeds budget {budget}"));
            }
            members += 1;
        }
    }
    Ok(format!("{certified} certified of {tried} drawn, {members} pool members, max threat/budget {worst_ratio:.3}"))
}

/// Two states: state 0 can stay (safe) or step into state 1, where every
/// action carries danger 1. Taking the step at time 0 leaves the secure set
/// for good, so no later deviation term contributes.
fn tight_instance() -> Result<f64, String> {
    let kernel = Kernel::from_rows(2, 2, vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]])
        .map_err(|e| e.to_string())?;
    let horizon = 5;
    let m = Cmdp::new(horizon, 0.95, 0.8, kernel, vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 0.0])
        .map_err(|e| e.to_string())?;
    let (eta, table) = min_threat_policy(&m, ThreatMode::DiscountedDanger).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..horizon).map(|t| table.value(t, 0, 1)).collect();
    let secure = build_secure_set(&table, &x).map_err(|e| e.to_string())?;
    let mut pi = eta.expanded();
    pi.set_dist(0, 0, &[0.0, 1.0]).map_err(|e| e.to_string())?;
    let cert = certify_bound(&m, &eta, &pi, &secure, &table, 0).map_err(|e| e.to_string())?;
    if !cert.holds {
        return Err("tight instance bound fails".into());
    }
    Ok(cert.gap() / cert.rhs)
}

fn certificates() -> Check {
    let mut r = rng::stream(3, 0);
    let (mut ok, mut tried) = (0, 0);
    while ok < 1000 {
        tried += 1;
        if tried > 50_000 {
            return Err(format!("only {ok} precondition-satisfying triples in {tried} draws"));
        }
        let (m, seed) = random_instance(&mut r, 6, 3, 5);
        let mode = if r.random::<bool>() { ThreatMode::DiscountedDanger } else { ThreatMode::AccidentProbability };
        let eta = Policy::random(m.horizon, m.n_states, m.n_actions, 0.2, &mut r);
        let table = safeplan::threat::threat_table(&m, &eta, mode).map_err(|e| e.to_string())?;
        let top = table.max_value().max(1e-3);
        let x: Vec<f64> = (0..m.horizon).map(|_| r.random_range(0.0..1.2) * top).collect();
        let secure = build_secure_set(&table, &x).map_err(|e| e.to_string())?;
        if !secure.is_secure(0) {
            continue;
        }
        let member = sample_member(&secure, r.random_range(0.0..0.8), &mut r);
        // half the draws keep eta's rows off the secure set (relaxed pool)
        let pi = if r.random::<bool>() {
            member
        } else {
            Policy::from_fn(m.horizon, m.n_states, m.n_actions, |t, s| {
                if secure.is_secure(s) { member.dist(t, s) } else { eta.dist(t, s) }.to_vec()
            })
            .map_err(|e| e.to_string())?
        };
        let cert = certify_bound(&m, &eta, &pi, &secure, &table, 0).map_err(|e| format!("seed {seed}: {e}"))?;
        if !cert.holds {
            return Err(format!("seed {seed}: lhs {} > rhs {}", cert.lhs, cert.rhs));
        }
        ok += 1;
    }
    let gap = tight_instance()?;
    if gap >= 0.1 {
        return Err(format!("tight instance gap is {:.1}% of the bound", 100.0 * gap));
    }
    Ok(format!("{ok} triples hold ({tried} drawn); constructed instance gap {:.2}% of the bound", 100.0 * gap))
}

fn composition() -> Check {
    let jam = Jam::new(&JamConfig { width: 5, height: 5, n_obstacles: 2, horizon: 10, threat_horizon: 5, ..JamConfig::default() })
        .map_err(|e| e.to_string())?;
    let threats = jam.subsystem_threats().map_err(|e| e.to_string())?;
    let h = threats.horizon();
    let joint = joint_threat_two(&jam, h);
    let spawn = jam.spawn_cells();
    let mut frontier: HashSet<(usize, usize, usize)> = HashSet::new();
    let start = JamState { agent: safeplan::envs::jam::Agent::At { x: jam.start.0, y: jam.start.1, v: 0 }, obstacles: vec![] };
    for (i, &c1) in spawn.iter().enumerate() {
        for &c2 in &spawn[i + 1..] {
            frontier.insert((
                jam.agent_index(start.agent),
                jam.obstacle_index(Some(c1)),
                jam.obstacle_index(Some(c2)),
            ));
        }
    }
    let (mut points, mut worst) = (0usize, f64::NEG_INFINITY);
    for tau in 0..h {
        let mut next = HashSet::new();
        for &(i, o1, o2) in &frontier {
            let state = JamState {
                agent: jam.agent_from_index(i),
                obstacles: vec![jam.obstacle_from_index(o1), jam.obstacle_from_index(o2)],
            };
            for a in 0..5 {
                let exact = joint.value(tau, i, o1, o2, a);
                let bound = threats.composed(&jam, &state, tau, a);
                worst = worst.max(exact - bound);
                if exact > bound + 1e-10 {
                    return Err(format!("tau {tau}, state {state:?}, action {a}: joint {exact} > composed {bound}"));
                }
                points += 1;
                if tau + 1 < h && jam.danger(&state, a) == 0.0 {
                    for (s2, _) in jam.successors(&state, a) {
                        next.insert((
                            jam.agent_index(s2.agent),
                            jam.obstacle_index(s2.obstacles[0]),
                            jam.obstacle_index(s2.obstacles[1]),
                        ));
                    }
                }
            }
        }
        frontier = next;
    }
    if points < 10_000 {
        return Err(format!("only {points} reachable points"));
    }
    Ok(format!("{points} reachable (t, state, action) points, max joint - composed {worst:.2e}"))
}

fn pmdp_equivalence() -> Check {
    let mut r = rng::stream(5, 0);
    let (mut done, mut worst) = (0, 0.0f64);
    while done < 100 {
        let (m, _) = random_instance(&mut r, 6, 3, 5);
        let (_, table) = min_threat_policy(&m, ThreatMode::DiscountedDanger).map_err(|e| e.to_string())?;
        let x = vec![r.random_range(0.0..1.0) * table.max_value().max(1e-3); m.horizon];
        let secure = build_secure_set(&table, &x).map_err(|e| e.to_string())?;
        if !secure.is_secure(0) {
            continue;
        }
        let pmdp = build_pmdp(&m, &secure).map_err(|e| e.to_string())?;
        let pi = sample_member(&secure, r.random_range(0.0..0.8), &mut r);
        let a = pmdp_policy_return(&pmdp, &pi).map_err(|e| e.to_string())?;
        let b = exact_return(&m, &pi).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
        if (a - b).abs() > 1e-10 {
            return Err(format!("policy {done}: reduced {a} vs original {b}"));
        }
        done += 1;
    }
    Ok(format!("100 pool policies, max return gap {worst:.1e}"))
}

fn describe(m: &Metrics) -> String {
    format!(
        "{} crash {}/{} [{:.4}, {:.4}] reward {:.2}",
        m.method, m.crashes, m.episodes, m.crash_rate_ci95.0, m.crash_rate_ci95.1, m.average_reward
    )
}

fn metrics<'a>(report: &'a RunReport, name: &str) -> Result<&'a Metrics, String> {
    report.metrics(name).ok_or_else(|| format!("no metrics for {name}"))
}

fn seeds() -> Vec<u64> {
    (0..10).collect()
}

fn accident(budget: f64) -> SafetySpec {
    SafetySpec::new(budget, ThreatMode::AccidentProbability).expect("valid budget")
}

fn zero_crash_vs_q() -> Check {
    let budget = 0.1;
    let methods = vec![MethodSpec::Rp, MethodSpec::PenalizedQ { lambda: 0.0, lambda_end: None, episodes: 5000 }];
    let mut lines = Vec::new();
    for env in [EnvSpec::Circuit(Default::default()), EnvSpec::Jam(Default::default())] {
        let cfg = ExperimentConfig {
            env,
            safety: accident(budget),
            tv_cap: 1.0,
            methods: methods.clone(),
            episodes: 100,
            seeds: seeds(),
            out: None,
            require_certified: false,
        };
        let report = run(&cfg, None).map_err(|e| e.to_string())?;
        let rp = metrics(&report, "rp")?;
        let q = metrics(&report, "penalized_q_lambda_0")?;
        lines.push(format!("{}; {}", describe(rp), describe(q)));
        if rp.crash_rate > budget || q.crash_rate == 0.0 {
            return Err(lines.join(" | "));
        }
    }
    Ok(format!("circuit: {} | jam: {}", lines[0], lines[1]))
}

fn transfer() -> Check {
    let budget = 0.1;
    let mut lines = Vec::new();
    for layout in ["narrow", "circle"] {
        let cfg = TransferConfig {
            train_env: EnvSpec::Circuit(Default::default()),
            eval_env: EnvSpec::Circuit(safeplan::envs::circuit::CircuitConfig::with_layout(layout)),
            safety: accident(budget),
            tv_cap: 1.0,
            methods: vec![MethodSpec::Rp, MethodSpec::PenalizedQ { lambda: 0.0, lambda_end: None, episodes: 5000 }],
            episodes: 100,
            seeds: seeds(),
            out: None,
        };
        let report = transfer_eval(&cfg, None).map_err(|e| e.to_string())?;
        let rp = metrics(&report, "rp")?;
        let q = metrics(&report, "penalized_q_lambda_0")?;
        lines.push(format!("{layout}: {}; frozen {}", describe(rp), describe(q)));
        if rp.crash_rate > budget || q.crash_rate <= budget {
            return Err(lines.join(" | "));
        }
    }
    Ok(lines.join(" | "))
}

fn decision_cost() -> Check {
    let cfg = ExperimentConfig {
        env: EnvSpec::Random { n_states: 20, n_actions: 3, horizon: 10, hazard_density: 0.2, seed: 7 },
        safety: SafetySpec::new(0.5, ThreatMode::DiscountedDanger).map_err(|e| e.to_string())?,
        tv_cap: 1.0,
        methods: vec![MethodSpec::Rp, MethodSpec::Mpc { depth: 3, threshold: None, node_budget: None }],
        episodes: 5,
        seeds: seeds(),
        out: None,
        require_certified: false,
    };
    let report = run(&cfg, None).map_err(|e| e.to_string())?;
    let rp = &report.outcomes[0].timing;
    let mpc = &report.outcomes[1].timing;
    let ratio = mpc.median_decision_seconds / rp.median_decision_seconds.max(1e-12);
    let text = format!(
        "median decision: mpc_k3 {:.3e}s vs rp {:.3e}s (ratio {ratio:.0}); rp setup {:.3e}s",
        mpc.median_decision_seconds, rp.median_decision_seconds, rp.setup_seconds
    );
    if ratio >= 10.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn deep_trap() -> Check {
    let cfg = ExperimentConfig {
        env: EnvSpec::DeepTrap { depth: 3, horizon: 10 },
        safety: SafetySpec::new(0.1, ThreatMode::DiscountedDanger).map_err(|e| e.to_string())?,
        tv_cap: 1.0,
        methods: vec![MethodSpec::Rp, MethodSpec::Mpc { depth: 2, threshold: None, node_budget: None }],
        episodes: 10,
        seeds: seeds(),
        out: None,
        require_certified: false,
    };
    let report = run(&cfg, None).map_err(|e| e.to_string())?;
    let rp = metrics(&report, "rp")?;
    let mpc = metrics(&report, "mpc_k2")?;
    let text = format!("{}; {}", describe(rp), describe(mpc));
    if rp.crashes == 0 && mpc.crash_rate > 0.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn monotonicity() -> Check {
    let mut r = rng::stream(7, 0);
    let mut cells = 0usize;
    for i in 0..500 {
        let (m, _) = random_instance(&mut r, 6, 3, 5);
        let pi = Policy::random(m.horizon, m.n_states, m.n_actions, 0.3, &mut r);
        let low = compute_threat(&m, &pi).map_err(|e| e.to_string())?;
        let mut high = low.clone();
        for v in high.values.iter_mut() {
            if r.random::<bool>() {
                *v += r.random_range(0.0..0.5);
            }
        }
        let x: Vec<f64> = (0..m.horizon).map(|_| r.random_range(0.0..1.0) * high.max_value().max(1e-3)).collect();
        let a = build_secure_set(&low, &x).map_err(|e| e.to_string())?;
        let b = build_secure_set(&high, &x).map_err(|e| e.to_string())?;
        for s in 0..m.n_states {
            for act in 0..m.n_actions {
                if b.is_secure_action(s, act) && !a.is_secure_action(s, act) {
                    return Err(format!("pair {i}: ({s}, {act}) secure only under the dominating table"));
                }
                cells += 1;
            }
            if b.is_secure(s) && !a.is_secure(s) {
                return Err(format!("pair {i}: state {s} secure only under the dominating table"));
            }
        }
    }
    Ok(format!("500 table pairs, {cells} (s, a) inclusions"))
}

fn heatmaps() -> Check {
    let still = threat_heatmap(0, 3, 0.5, 5).map_err(|e| e.to_string())?;
    let east = threat_heatmap(2, 3, 0.5, 5).map_err(|e| e.to_string())?;
    let n = still.len();
    let mut sym = 0.0f64;
    for y in 0..n {
        for x in 0..n {
            let v = still[y][x];
            sym = sym.max((v - still[y][n - 1 - x]).abs()).max((v - still[n - 1 - y][x]).abs()).max((v - still[x][y]).abs());
            sym = sym.max((east[y][x] - east[n - 1 - y][x]).abs());
        }
    }
    let diff = still.iter().flatten().zip(east.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let text = format!("max symmetry defect {sym:.1e}, still vs east max difference {diff:.3}");
    if sym <= 1e-10 && diff > 1e-6 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn main() {
    let criteria: [(&str, &str, fn() -> Check); 11] = [
        ("1", "oracle equivalence", oracle_equivalence),
        ("2", "threshold safety sweep", safety_sweep),
        ("3", "deviation bound certificates", certificates),
        ("4", "per-obstacle threat composition", composition),
        ("5", "reduced MDP return equivalence", pmdp_equivalence),
        ("6a", "zero RP crashes vs penalized Q", zero_crash_vs_q),
        ("6b", "transfer to reshaped circuits", transfer),
        ("6c", "MPC vs RP decision cost", decision_cost),
        ("6d", "deep trap", deep_trap),
        ("7", "secure-set monotonicity", monotonicity),
        ("8", "heat map sanity", heatmaps),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {id:<3} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:<3} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
