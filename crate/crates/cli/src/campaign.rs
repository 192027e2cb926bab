//! Campaign configuration, run ids and the resumable work queue.

use crate::io::{
    self, CAMPAIGN_SCHEMA, MANIFEST_SCHEMA, RUN_CONFIG_SCHEMA, SUMMARY_SCHEMA, TIMING_SCHEMA,
};
use anyhow::{anyhow, bail, Context, Result};
use grokking_core::trainer::{RunConfig, RunSummary, Trainer, TrajectoryLog};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    #[default]
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Cell whose runs calibrate (κ, V⋆).
    #[serde(default)]
    pub calibration_cell: Option<String>,
    /// Cells predicted from the calibration.
    #[serde(default)]
    pub held_out: Vec<String>,
    /// Cell whose measured α⋆ intervention cells are compared against.
    #[serde(default)]
    pub baseline_cell: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub id: String,
    pub seeds: Vec<u64>,
    /// Every `RunConfig` field except `seed`.
    pub run: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub campaign_id: String,
    #[serde(default = "one")]
    pub jobs: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub scope: Scope,
    /// Steps between on-disk checkpoints of a run in flight.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
}

fn one() -> usize {
    1
}
fn default_checkpoint_every() -> u64 {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub cell: String,
    pub seed: u64,
    pub run_id: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub campaign_id: String,
    pub scope: Scope,
    pub analysis: AnalysisSpec,
    pub runs: Vec<PlannedRun>,
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<Self> {
        io::check_schema(text, CAMPAIGN_SCHEMA, "campaign config")?;
        let cfg: CampaignConfig =
            toml::from_str(text).map_err(|e| anyhow!("campaign config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            bail!("no cells");
        }
        if self.jobs == 0 {
            bail!("jobs must be ≥ 1");
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint_every must be ≥ 1");
        }
        let mut ids = BTreeSet::new();
        for c in &self.cells {
            if !ids.insert(c.id.as_str()) {
                bail!("duplicate cell id {:?}", c.id);
            }
            if c.seeds.is_empty() {
                bail!("cell {:?} lists no seeds", c.id);
            }
            if c.seeds.iter().collect::<BTreeSet<_>>().len() != c.seeds.len() {
                bail!("cell {:?} repeats a seed", c.id);
            }
            if c.run.contains_key("seed") {
                bail!("cell {:?}: give seeds in `seeds`, not in `run`", c.id);
            }
        }
        let a = &self.analysis;
        for id in a
            .calibration_cell
            .iter()
            .chain(&a.held_out)
            .chain(&a.baseline_cell)
        {
            if !ids.contains(id.as_str()) {
                bail!("analysis refers to unknown cell {id:?}");
            }
        }
        Ok(())
    }

    /// One planned run per (cell, seed), in config order.
    pub fn expand(&self) -> Result<Vec<PlannedRun>> {
        let mut out = Vec::new();
        for c in &self.cells {
            for &seed in &c.seeds {
                let mut t = c.run.clone();
                t.insert(
                    "seed".into(),
                    toml::Value::Integer(i64::try_from(seed).context("seed too large")?),
                );
                let config: RunConfig = toml::Value::Table(t)
                    .try_into()
                    .map_err(|e| anyhow!("cell {:?}: {e}", c.id))?;
                config
                    .validate()
                    .map_err(|e| anyhow!("cell {:?} seed {seed}: {e}", c.id))?;
                out.push(PlannedRun {
                    cell: c.id.clone(),
                    seed,
                    run_id: run_id(&config),
                    config,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for r in &out {
            if !seen.insert(&r.run_id) {
                bail!(
                    "cell {:?} seed {} duplicates another run's configuration",
                    r.cell,
                    r.seed
                );
            }
        }
        Ok(out)
    }
}

/// First 16 hex digits of SHA-256 over the canonical JSON of the full config.
pub fn run_id(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serialises");
    hex::encode(&Sha256::digest(&json)[..8])
}

pub fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join("runs").join(run_id)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}

pub fn load_manifest(out: &Path) -> Result<Manifest> {
    io::read_json(&manifest_path(out), MANIFEST_SCHEMA)
}

pub fn summary_path(out: &Path, run_id: &str) -> PathBuf {
    run_dir(out, run_id).join("summary.json")
}

pub fn trajectory_path(out: &Path, run_id: &str) -> PathBuf {
    run_dir(out, run_id).join("trajectory.tsv")
}

pub fn timing_path(out: &Path, run_id: &str) -> PathBuf {
    run_dir(out, run_id).join("timing.json")
}

/// Wall time of the invocation that finished the run (a resumed run counts only its last leg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_seconds: f64,
}

pub fn load_timing(out: &Path, run_id: &str) -> Result<RunTiming> {
    io::read_json(&timing_path(out, run_id), TIMING_SCHEMA)
}

pub fn load_summary(out: &Path, run_id: &str) -> Result<RunSummary> {
    io::read_json(&summary_path(out, run_id), SUMMARY_SCHEMA)
}

pub fn load_trajectory(out: &Path, run_id: &str) -> Result<TrajectoryLog> {
    let p = trajectory_path(out, run_id);
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    let log = TrajectoryLog::from_text(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?;
    log.validate()
        .map_err(|e| anyhow!("{}: {e}", p.display()))?;
    Ok(log)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out: PathBuf,
    pub statuses: Vec<(PlannedRun, RunStatus)>,
}

impl RunReport {
    pub fn count(&self, f: impl Fn(&RunStatus) -> bool) -> usize {
        self.statuses.iter().filter(|(_, s)| f(s)).count()
    }

    pub fn failures(&self) -> Vec<String> {
        self.statuses
            .iter()
            .filter_map(|(r, s)| match s {
                RunStatus::Failed(e) => {
                    Some(format!("{} seed {} ({}): {e}", r.cell, r.seed, r.run_id))
                }
                _ => None,
            })
            .collect()
    }
}

fn execute(out: &Path, run: &PlannedRun, checkpoint_every: u64) -> Result<RunStatus> {
    if load_summary(out, &run.run_id).is_ok() && load_trajectory(out, &run.run_id).is_ok() {
        return Ok(RunStatus::Skipped);
    }
    let started = Instant::now();
    let dir = run_dir(out, &run.run_id);
    io::write_json(&dir.join("config.json"), RUN_CONFIG_SCHEMA, &run.config)?;
    let ckpt = dir.join("checkpoint.bin");
    let mut tr = match fs::read(&ckpt) {
        Ok(bytes) => match Trainer::resume(&bytes) {
            Ok(t) if t.config() == &run.config => t,
            _ => Trainer::new(&run.config)?,
        },
        Err(_) => Trainer::new(&run.config)?,
    };
    while !tr.is_done() {
        tr.run_to(tr.step_count() + checkpoint_every)?;
        if !tr.is_done() {
            io::write_atomic(&ckpt, &tr.checkpoint())?;
        }
    }
    let res = tr.finish();
    io::write_atomic(
        &trajectory_path(out, &run.run_id),
        res.log.to_text().as_bytes(),
    )?;
    io::write_json(
        &summary_path(out, &run.run_id),
        SUMMARY_SCHEMA,
        &res.summary,
    )?;
    io::write_json(
        &timing_path(out, &run.run_id),
        TIMING_SCHEMA,
        &RunTiming {
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    let _ = fs::remove_file(&ckpt);
    Ok(RunStatus::Completed)
}

/// Runs every planned run not already complete under `out`, `jobs` at a time.
pub fn cmd_run(cfg: &CampaignConfig, out: &Path, jobs: usize) -> Result<RunReport> {
    let runs = cfg.expand()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = Manifest {
        campaign_id: cfg.campaign_id.clone(),
        scope: cfg.scope,
        analysis: cfg.analysis.clone(),
        runs: runs.clone(),
    };
    io::write_json(&manifest_path(out), MANIFEST_SCHEMA, &manifest)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunStatus>>> = Mutex::new(vec![None; runs.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(run) = runs.get(i) else { break };
                let status = execute(out, run, cfg.checkpoint_every)
                    .unwrap_or_else(|e| RunStatus::Failed(format!("{e:#}")));
                eprintln!(
                    "[{}/{}] {} seed {} {}: {:?}",
                    i + 1,
                    runs.len(),
                    run.cell,
                    run.seed,
                    run.run_id,
                    status
                );
                results.lock().expect("no poisoned workers")[i] = Some(status);
            });
        }
    });
    let statuses = runs
        .into_iter()
        .zip(results.into_inner().expect("no poisoned workers"))
        .map(|(r, s)| (r, s.expect("every run visited")))
        .collect();
    Ok(RunReport {
        out: out.to_path_buf(),
        statuses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"# grokking/campaign v1
campaign_id = "t"

[[cells]]
id = "a"
seeds = [1, 2]
[cells.run]
max_steps = 40
log_every = 10
task = { kind = "modular", op = "add", p = 5 }
model = { arch = "mlp", embed_dim = 4, ff_dim = 8 }
optimizer = { kind = "adamw", eta = 1e-3, lambda = 1.0 }
"#;

    #[test]
    fn expands_cells_and_hashes_configs() {
        let c = CampaignConfig::parse(MINI).unwrap();
        let runs = c.expand().unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].config.seed, 2);
        assert_ne!(runs[0].run_id, runs[1].run_id);
        assert_eq!(runs[0].run_id, run_id(&runs[0].config));
        assert_eq!(runs[0].run_id.len(), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        let no_cells = "# grokking/campaign v1\ncampaign_id = \"x\"\n";
        assert!(CampaignConfig::parse(no_cells)
            .unwrap_err()
            .to_string()
            .contains("no cells"));
        let dup = format!("{MINI}\n[[cells]]\nid = \"a\"\nseeds = [3]\n[cells.run]\n");
        assert!(CampaignConfig::parse(&dup)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let bad_line = MINI.replace("seeds = [1, 2]", "seeds = [1, 2");
        let msg = CampaignConfig::parse(&bad_line).unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
        assert!(CampaignConfig::parse(&MINI.replace("# grokking/campaign v1\n", "")).is_err());
        let unknown = MINI.replace("max_steps = 40", "max_steps = 40\nmax_stepz = 1");
        assert!(CampaignConfig::parse(&unknown).unwrap().expand().is_err());
    }
}
