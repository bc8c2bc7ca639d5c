use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::{EnvSpec, ExperimentConfig, MethodSpec, Model, TransferConfig};
use super::metrics::{median, EpisodeRecord, Metrics, Timing};
use crate::baselines::{mpc_decide, train_q, MpcConfig, QConfig, QTable};
use crate::cmdp::{Cmdp, ThreatMode};
use crate::envs::circuit::Circuit;
use crate::envs::jam::{Jam, JamController};
use crate::error::{Error, Result};
use crate::planner::{rp_solve, RpOptions, RpSolution};
use crate::policy::Policy;
use crate::rng;
use crate::secure::{accident_threshold, BoundCertificate};
use crate::sim::{run_episode, Environment};

/// Evaluation result of one method.
#[derive(Clone, Debug)]
pub struct MethodOutcome {
    pub name: String,
    pub metrics: Metrics,
    pub timing: Timing,
    pub records: Vec<EpisodeRecord>,
    pub rp: Option<RpSolution>,
    /// Greedy Q policy over a tabular model, for export.
    pub q_policy: Option<Policy>,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub outcomes: Vec<MethodOutcome>,
}

impl RunReport {
    /// RP certification status, when RP was among the methods.
    pub fn rp_certified(&self) -> Option<bool> {
        self.outcomes.iter().find(|o| o.name == "rp").and_then(|o| o.metrics.certified)
    }

    pub fn metrics(&self, name: &str) -> Option<&Metrics> {
        self.outcomes.iter().find(|o| o.name == name).map(|o| &o.metrics)
    }
}

struct SeedRun {
    records: Vec<EpisodeRecord>,
    decision_times: Vec<f64>,
    setup_seconds: f64,
}

fn episodes_for_seed<E, F>(env: &E, seed: u64, episodes: usize, mut decide: F) -> Result<SeedRun>
where
    E: Environment,
    F: FnMut(usize, &E::State) -> Result<usize>,
{
    let mut records = Vec::with_capacity(episodes);
    let mut decision_times = Vec::new();
    for e in 0..episodes {
        let mut r = rng::substream(seed, &[e as u64]);
        let ep = run_episode(
            env,
            |t, s| {
                let start = Instant::now();
                let a = decide(t, s)?;
                decision_times.push(start.elapsed().as_secs_f64());
                Ok(a)
            },
            &mut r,
        )?;
        records.push(EpisodeRecord {
            seed,
            episode: e,
            discounted_return: ep.discounted_return,
            undiscounted_return: ep.undiscounted_return,
            accidents: ep.accidents,
            crashed: ep.crashed(),
        });
    }
    Ok(SeedRun { records, decision_times, setup_seconds: 0.0 })
}

/// Observation key of a tabular state: the car pose on circuits (so tables
/// carry over to other layouts) and `(t, s)` otherwise.
fn tabular_key(circuit: Option<&Circuit>, t: usize, s: usize) -> u64 {
    match circuit {
        Some(c) => {
            let p = c.pose(s);
            (1 << 63) | (p.x as u64) << 32 | (p.y as u64) << 16 | (p.heading as u64) << 8 | p.speed as u64
        }
        None => (t as u64) << 32 | s as u64,
    }
}

fn q_config(method: &MethodSpec, seed: u64) -> QConfig {
    match method {
        MethodSpec::PenalizedQ { lambda, lambda_end, episodes } => {
            QConfig { lambda_end: *lambda_end, ..QConfig::new(*episodes, *lambda, seed) }
        }
        _ => unreachable!("only called for Q methods"),
    }
}

fn jam_threshold(cfg: &ExperimentConfig, jam: &Jam) -> Result<f64> {
    if cfg.safety.mode != ThreatMode::AccidentProbability {
        return Err(Error::Config("the jam field bounds accident probability; use mode accident_probability".into()));
    }
    accident_threshold(cfg.safety.budget, jam.config.threat_horizon, cfg.tv_cap)
}

fn check_compatible(train: &Model, eval: &Model) -> Result<()> {
    match (train, eval) {
        (Model::Jam(_), Model::Jam(_)) => Ok(()),
        (Model::Tabular { circuit: Some(_), .. }, Model::Tabular { circuit: Some(_), .. }) => Ok(()),
        (Model::Tabular { cmdp: a, circuit: None }, Model::Tabular { cmdp: b, circuit: None })
            if a.n_states == b.n_states && a.n_actions == b.n_actions && a.horizon == b.horizon =>
        {
            Ok(())
        }
        _ => Err(Error::Dimension("incompatible state spaces between training and evaluation".into())),
    }
}

fn outcome(name: String, runs: Vec<SeedRun>, setup_extra: f64, certified: Option<bool>) -> MethodOutcome {
    let mut records = Vec::new();
    let mut times = Vec::new();
    let mut setup = setup_extra;
    let n_runs = runs.len().max(1) as f64;
    for r in runs {
        records.extend(r.records);
        times.extend(r.decision_times);
        setup += r.setup_seconds / n_runs;
    }
    let decisions = times.len();
    let timing = Timing { method: name.clone(), setup_seconds: setup, median_decision_seconds: median(&mut times), decisions };
    MethodOutcome {
        metrics: Metrics::from_episodes(&name, &records, certified),
        name,
        timing,
        records,
        rp: None,
        q_policy: None,
        diagnostics: Vec::new(),
    }
}

fn collect(runs: Vec<Result<SeedRun>>) -> Result<Vec<SeedRun>> {
    runs.into_iter().collect()
}

fn run_tabular(
    method: &MethodSpec,
    cfg: &ExperimentConfig,
    train: (&Cmdp, Option<&Circuit>),
    eval: (&Cmdp, Option<&Circuit>),
) -> Result<MethodOutcome> {
    let (cmdp, circuit) = eval;
    let name = method.name();
    match method {
        MethodSpec::Rp => {
            let start = Instant::now();
            let sol = rp_solve(cmdp, &cfg.safety, &RpOptions { tv_cap: cfg.tv_cap, ..RpOptions::default() })?;
            let setup = start.elapsed().as_secs_f64();
            let policy = &sol.policy;
            let runs = collect(crate::par::map(&cfg.seeds, |&seed| {
                episodes_for_seed(cmdp, seed, cfg.episodes, |t, s| {
                    policy.deterministic_action(t, *s).ok_or_else(|| Error::Precondition("planned policy is not deterministic".into()))
                })
            }))?;
            let mut out = outcome(name, runs, setup, Some(sol.certified));
            out.diagnostics = sol.diagnostics.clone();
            out.rp = Some(sol);
            Ok(out)
        }
        MethodSpec::PenalizedQ { .. } => {
            let (train_cmdp, train_circuit) = train;
            let runs = collect(crate::par::map(&cfg.seeds, |&seed| {
                let start = Instant::now();
                let q = train_q(train_cmdp, |t, s| tabular_key(train_circuit, t, *s), &q_config(method, seed))?;
                let setup = start.elapsed().as_secs_f64();
                let mut run = episodes_for_seed(cmdp, seed, cfg.episodes, |t, s| Ok(q.greedy(&tabular_key(circuit, t, *s))))?;
                run.setup_seconds = setup;
                Ok(run)
            }))?;
            let mut out = outcome(name, runs, 0.0, None);
            // export the greedy policy of the first seed
            let q: QTable<u64> = train_q(train_cmdp, |t, s| tabular_key(train_circuit, t, *s), &q_config(method, cfg.seeds[0]))?;
            let actions: Vec<Vec<usize>> = (0..cmdp.horizon)
                .map(|t| (0..cmdp.n_states).map(|s| q.greedy(&tabular_key(circuit, t, s))).collect())
                .collect();
            out.q_policy = Some(Policy::deterministic(cmdp.n_actions, &actions)?);
            Ok(out)
        }
        MethodSpec::Mpc { depth, threshold, node_budget } => {
            let mpc = MpcConfig {
                depth: *depth,
                threshold: threshold.unwrap_or(cfg.safety.budget),
                mode: cfg.safety.mode,
                beta: cmdp.beta,
                node_budget: *node_budget,
            };
            let runs = collect(crate::par::map(&cfg.seeds, |&seed| {
                episodes_for_seed(cmdp, seed, cfg.episodes, |t, s| Ok(mpc_decide(cmdp, s, t, &mpc)?.action))
            }))?;
            Ok(outcome(name, runs, 0.0, None))
        }
    }
}

fn run_jam(method: &MethodSpec, cfg: &ExperimentConfig, train: &Jam, jam: &Jam) -> Result<MethodOutcome> {
    let name = method.name();
    match method {
        MethodSpec::Rp => {
            let threshold = jam_threshold(cfg, train)?;
            let start = Instant::now();
            let ctl = JamController::new(train, threshold)?.transfer(jam)?;
            let setup = start.elapsed().as_secs_f64();
            let runs = collect(crate::par::map(&cfg.seeds, |&seed| {
                episodes_for_seed(jam, seed, cfg.episodes, |t, s| Ok(ctl.decide(jam, t, s).0))
            }))?;
            let mut out = outcome(name, runs, setup, Some(false));
            out.diagnostics = vec![format!(
                "composed per-obstacle threat with a {}-step receding lookahead; no exact certificate",
                train.config.threat_horizon
            )];
            Ok(out)
        }
        MethodSpec::PenalizedQ { .. } => {
            let runs = collect(crate::par::map(&cfg.seeds, |&seed| {
                let start = Instant::now();
                let q = train_q(train, |_, s| train.observation(s), &q_config(method, seed))?;
                let setup = start.elapsed().as_secs_f64();
                let mut run = episodes_for_seed(jam, seed, cfg.episodes, |_, s| Ok(q.greedy(&jam.observation(s))))?;
                run.setup_seconds = setup;
                Ok(run)
            }))?;
            Ok(outcome(name, runs, 0.0, None))
        }
        MethodSpec::Mpc { depth, threshold, node_budget } => {
            let mpc = MpcConfig {
                depth: *depth,
                threshold: threshold.unwrap_or(cfg.safety.budget),
                mode: cfg.safety.mode,
                beta: jam.config.beta,
                node_budget: *node_budget,
            };
            let runs = collect(crate::par::map(&cfg.seeds, |&seed| {
                episodes_for_seed(jam, seed, cfg.episodes, |t, s| Ok(mpc_decide(jam, s, t, &mpc)?.action))
            }))?;
            Ok(outcome(name, runs, 0.0, None))
        }
    }
}

fn run_models(cfg: &ExperimentConfig, train: &Model, eval: &Model) -> Result<RunReport> {
    cfg.validate()?;
    check_compatible(train, eval)?;
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let out = match (train, eval) {
            (Model::Tabular { cmdp: tc, circuit: tcirc }, Model::Tabular { cmdp, circuit }) => {
                run_tabular(method, cfg, (tc, tcirc.as_deref()), (cmdp, circuit.as_deref()))?
            }
            (Model::Jam(tj), Model::Jam(jam)) => run_jam(method, cfg, tj, jam)?,
            _ => unreachable!("compatibility checked above"),
        };
        outcomes.push(out);
    }
    Ok(RunReport { outcomes })
}

/// Solves or trains every method and evaluates it over `episodes x seeds`.
/// Writes the results when `cfg.out` is set. `base` resolves relative paths.
pub fn run(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let model = cfg.env.build(base)?;
    let report = run_models(cfg, &model, &model)?;
    if let Some(out) = &cfg.out {
        write_report(&report, &model, out)?;
    }
    Ok(report)
}

/// Trains on `train_env` and evaluates on `eval_env`. RP re-plans on the new
/// environment (reusing per-obstacle threat tables on jam fields); learned
/// baselines are evaluated frozen.
pub fn transfer_eval(cfg: &TransferConfig, base: Option<&Path>) -> Result<RunReport> {
    let exp = cfg.experiment(cfg.eval_env.clone());
    exp.validate()?;
    let train = cfg.train_env.build(base)?;
    let eval = cfg.eval_env.build(base)?;
    let report = run_models(&exp, &train, &eval)?;
    if let Some(out) = &cfg.out {
        write_report(&report, &eval, out)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    methods: Vec<&'a Metrics>,
}

#[derive(Serialize)]
struct TimingFile<'a> {
    methods: Vec<&'a Timing>,
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    certified: bool,
    x_star: f64,
    budget: f64,
    diagnostics: &'a [String],
    start_threats: &'a [(usize, f64)],
    certificates: &'a [BoundCertificate],
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `policy.json`, `certificate.json`, `secure_set.csv` and the
/// baseline `threat.csv` of an RP solution.
pub fn write_rp_artifacts(dir: &Path, sol: &RpSolution) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("policy.json"), &sol.to_document())?;
    write_json(
        &dir.join("certificate.json"),
        &CertificateFile {
            certified: sol.certified,
            x_star: sol.x_star,
            budget: sol.safety.budget,
            diagnostics: &sol.diagnostics,
            start_threats: &sol.start_threats,
            certificates: &sol.certificates,
        },
    )?;
    sol.secure.write_csv(fs::File::create(dir.join("secure_set.csv"))?)?;
    sol.baseline_threat.write_csv(fs::File::create(dir.join("threat.csv"))?)?;
    Ok(())
}

/// Writes `metrics.json`, `timing.json` and per-method artifacts under `out`.
pub fn write_report(report: &RunReport, model: &Model, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("metrics.json"), &MetricsFile { methods: report.outcomes.iter().map(|o| &o.metrics).collect() })?;
    write_json(&out.join("timing.json"), &TimingFile { methods: report.outcomes.iter().map(|o| &o.timing).collect() })?;
    for o in &report.outcomes {
        let dir = out.join(&o.name);
        fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join("episodes.csv"))?;
        for r in &o.records {
            w.serialize(r)?;
        }
        w.flush()?;
        if let Some(sol) = &o.rp {
            write_rp_artifacts(&dir, sol)?;
        } else if o.name == "rp" {
            if let Model::Jam(_) = model {
                write_json(
                    &dir.join("certificate.json"),
                    &serde_json::json!({ "certified": false, "diagnostics": o.diagnostics }),
                )?;
            }
        }
        if let Some(p) = &o.q_policy {
            write_json(&dir.join("policy.json"), &p.to_document())?;
        }
    }
    Ok(())
}

/// Builds an environment spec's tabular CMDP, rejecting factored ones.
pub fn tabular(env: &EnvSpec, base: Option<&Path>) -> Result<Cmdp> {
    match env.build(base)? {
        Model::Tabular { cmdp, .. } => Ok(cmdp),
        Model::Jam(_) => Err(Error::Config("this stage needs a tabular environment, not a jam field".into())),
    }
}
