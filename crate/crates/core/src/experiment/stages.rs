use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::{write_json, write_rp_artifacts};
use crate::cmdp::{Cmdp, SafetySpec, ThreatMode};
use crate::error::{Error, Result};
use crate::planner::{rp_solve, threshold_for, RpOptions, RpSolution};
use crate::policy::{Policy, PolicyDocument};
use crate::secure::{build_secure_set, SecureSet};
use crate::threat::{min_threat_policy, threat_table, ThreatTable};

/// Summary written next to the recon tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub mode: ThreatMode,
    pub budget: f64,
    pub tv_cap: f64,
    pub x_star: f64,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_secure_states: usize,
    /// Baseline threat at each initial state.
    pub start_threats: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct Recon {
    pub baseline: Policy,
    pub threat: ThreatTable,
    pub secure: SecureSet,
    pub summary: ReconSummary,
}

/// Computes the baseline threat table and secure set. The baseline is the
/// threat-minimizing policy unless one is given.
pub fn recon(cmdp: &Cmdp, safety: &SafetySpec, baseline: Option<Policy>, tv_cap: f64) -> Result<Recon> {
    cmdp.validate().into_result()?;
    safety.check()?;
    let (baseline, threat) = match baseline {
        Some(eta) => {
            eta.check_against(cmdp)?;
            let table = threat_table(cmdp, &eta, safety.mode)?;
            (eta, table)
        }
        None => min_threat_policy(cmdp, safety.mode)?,
    };
    let x_star = threshold_for(safety, cmdp.beta, cmdp.horizon, tv_cap)?;
    let secure = build_secure_set(&threat, &vec![x_star; cmdp.horizon])?;
    let summary = ReconSummary {
        mode: safety.mode,
        budget: safety.budget,
        tv_cap,
        x_star,
        horizon: cmdp.horizon,
        n_states: cmdp.n_states,
        n_actions: cmdp.n_actions,
        n_secure_states: secure.n_secure_states(),
        start_threats: cmdp.initial_support().map(|s| (s, threat.state_value(0, s))).collect(),
    };
    Ok(Recon { baseline, threat, secure, summary })
}

/// Writes `threat.csv`, `baseline.json`, `secure_set.csv` and `recon.json`.
pub fn write_recon(dir: &Path, recon: &Recon) -> Result<()> {
    fs::create_dir_all(dir)?;
    recon.threat.write_csv(fs::File::create(dir.join("threat.csv"))?)?;
    recon.secure.write_csv(fs::File::create(dir.join("secure_set.csv"))?)?;
    write_json(&dir.join("baseline.json"), &recon.baseline.to_document())?;
    write_json(&dir.join("recon.json"), &recon.summary)
}

/// Solves the planning stage from the artifacts of [`write_recon`].
pub fn plan(cmdp: &Cmdp, recon_dir: &Path) -> Result<RpSolution> {
    let summary: ReconSummary = serde_json::from_str(&fs::read_to_string(recon_dir.join("recon.json"))?)?;
    let doc: PolicyDocument = serde_json::from_str(&fs::read_to_string(recon_dir.join("baseline.json"))?)?;
    let baseline = Policy::from_document(&doc)?;
    if (summary.horizon, summary.n_states, summary.n_actions) != (cmdp.horizon, cmdp.n_states, cmdp.n_actions) {
        return Err(Error::Dimension("recon artifacts were computed for a different CMDP".into()));
    }
    let threat = ThreatTable::read_csv(fs::File::open(recon_dir.join("threat.csv"))?, summary.mode, &baseline)?;
    let safety = SafetySpec::new(summary.budget, summary.mode)?;
    rp_solve(cmdp, &safety, &RpOptions { baseline: Some(baseline), baseline_threat: Some(threat), tv_cap: summary.tv_cap })
}

/// Writes the planning artifacts.
pub fn write_plan(dir: &Path, sol: &RpSolution) -> Result<()> {
    write_rp_artifacts(dir, sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random::RandomCmdpConfig;

    #[test]
    fn recon_then_plan_matches_direct_solve() {
        let dir = tempfile::tempdir().unwrap();
        let cmdp = RandomCmdpConfig::new(6, 3, 5, 0.3).generate(4);
        let safety = SafetySpec::new(0.3, ThreatMode::DiscountedDanger).unwrap();
        let r = recon(&cmdp, &safety, None, 1.0).unwrap();
        write_recon(dir.path(), &r).unwrap();
        let planned = plan(&cmdp, dir.path()).unwrap();
        let direct = rp_solve(&cmdp, &safety, &RpOptions::default()).unwrap();
        assert_eq!(planned.policy, direct.policy);
        assert_eq!(planned.certified, direct.certified);
        assert!((planned.expected_return - direct.expected_return).abs() < 1e-12);
    }

    #[test]
    fn plan_rejects_foreign_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let safety = SafetySpec::new(0.3, ThreatMode::DiscountedDanger).unwrap();
        let a = RandomCmdpConfig::new(6, 3, 5, 0.3).generate(4);
        write_recon(dir.path(), &recon(&a, &safety, None, 1.0).unwrap()).unwrap();
        let b = RandomCmdpConfig::new(5, 3, 5, 0.3).generate(4);
        assert!(matches!(plan(&b, dir.path()), Err(Error::Dimension(_))));
    }
}
