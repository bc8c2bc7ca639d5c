use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cmdp::{Cmdp, SafetySpec};
use crate::envs::circuit::{grid_circuit, Circuit, CircuitConfig};
use crate::envs::gather::{grid_gather, GatherConfig};
use crate::envs::jam::{Jam, JamConfig};
use crate::envs::random::RandomCmdpConfig;
use crate::envs::trap::deep_trap;
use crate::error::{Error, Result};

/// Environment reference in an experiment file, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Gather(GatherConfig),
    Circuit(CircuitConfig),
    Jam(JamConfig),
    CmdpFile { path: PathBuf },
    Random { n_states: usize, n_actions: usize, horizon: usize, hazard_density: f64, seed: u64 },
    DeepTrap { depth: usize, horizon: usize },
}

/// A built environment: a tabulated CMDP or the factored Jam field.
#[derive(Clone, Debug)]
pub enum Model {
    Tabular { cmdp: Cmdp, circuit: Option<Box<Circuit>> },
    Jam(Jam),
}

impl EnvSpec {
    /// Builds the environment; relative file paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<Model> {
        Ok(match self {
            EnvSpec::Gather(c) => Model::Tabular { cmdp: grid_gather(c)?.cmdp, circuit: None },
            EnvSpec::Circuit(c) => {
                let circuit = grid_circuit(c)?;
                Model::Tabular { cmdp: circuit.cmdp.clone(), circuit: Some(Box::new(circuit)) }
            }
            EnvSpec::Jam(c) => Model::Jam(Jam::new(c)?),
            EnvSpec::CmdpFile { path } => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                Model::Tabular { cmdp: Cmdp::load(full)?, circuit: None }
            }
            EnvSpec::Random { n_states, n_actions, horizon, hazard_density, seed } => {
                if *n_states == 0 || *n_actions == 0 || *horizon == 0 {
                    return Err(Error::Config("random CMDP sizes must be at least 1".into()));
                }
                let cmdp = RandomCmdpConfig::new(*n_states, *n_actions, *horizon, *hazard_density).generate(*seed);
                Model::Tabular { cmdp, circuit: None }
            }
            EnvSpec::DeepTrap { depth, horizon } => Model::Tabular { cmdp: deep_trap(*depth, *horizon)?, circuit: None },
        })
    }
}

fn default_q_episodes() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Rp,
    PenalizedQ {
        lambda: f64,
        #[serde(default)]
        lambda_end: Option<f64>,
        #[serde(default = "default_q_episodes")]
        episodes: usize,
    },
    Mpc {
        depth: usize,
        /// Defaults to the safety budget.
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default)]
        node_budget: Option<u64>,
    },
}

impl MethodSpec {
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Rp => "rp".into(),
            MethodSpec::PenalizedQ { lambda, .. } => format!("penalized_q_lambda_{lambda}"),
            MethodSpec::Mpc { depth, .. } => format!("mpc_k{depth}"),
        }
    }
}

fn default_tv_cap() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub safety: SafetySpec,
    /// Cap on the expected policy gap used by accident thresholds.
    #[serde(default = "default_tv_cap")]
    pub tv_cap: f64,
    pub methods: Vec<MethodSpec>,
    /// Evaluation episodes per seed.
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub require_certified: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episode count must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for m in &self.methods {
            match m {
                MethodSpec::Mpc { depth: 0, .. } => return Err(Error::Config("MPC depth must be at least 1".into())),
                MethodSpec::PenalizedQ { episodes: 0, .. } => {
                    return Err(Error::Config("Q-learning needs at least one training episode".into()))
                }
                _ => {}
            }
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.methods.len() {
            return Err(Error::Config("duplicate methods".into()));
        }
        self.safety.check()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Train on one environment, evaluate on another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub train_env: EnvSpec,
    pub eval_env: EnvSpec,
    pub safety: SafetySpec,
    #[serde(default = "default_tv_cap")]
    pub tv_cap: f64,
    pub methods: Vec<MethodSpec>,
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl TransferConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.experiment(cfg.eval_env.clone()).validate()?;
        Ok(cfg)
    }

    pub(crate) fn experiment(&self, env: EnvSpec) -> ExperimentConfig {
        ExperimentConfig {
            env,
            safety: self.safety,
            tv_cap: self.tv_cap,
            methods: self.methods.clone(),
            episodes: self.episodes,
            seeds: self.seeds.clone(),
            out: None,
            require_certified: false,
        }
    }
}
