use crate::error::{invalid, Result};
use crate::models::{Arch, InitScheme, ModelSpec, Readout};
use crate::optim::OptimizerConfig;
use crate::tasks::{gen_modular, gen_sparse_parity, Dataset, ModOp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Modular {
        op: ModOp,
        p: usize,
    },
    Parity {
        n: usize,
        k: usize,
        #[serde(default = "default_parity_samples")]
        num_samples: usize,
    },
}

fn default_parity_samples() -> usize {
    4096
}

impl TaskConfig {
    /// `(train, val)` for a seed; parity's relevant subset is drawn from the same seed.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match *self {
            TaskConfig::Modular { op, p } => gen_modular(p, op, seed),
            TaskConfig::Parity { n, k, num_samples } => {
                gen_sparse_parity(n, k, num_samples, seed).map(|(t, v, _)| (t, v))
            }
        }
    }

    /// Modulus for modular tasks.
    pub fn modulus(&self) -> Option<usize> {
        match self {
            TaskConfig::Modular { p, .. } => Some(*p),
            TaskConfig::Parity { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_ff")]
    pub ff_dim: usize,
    #[serde(default = "default_readout")]
    pub readout: Readout,
    #[serde(default)]
    pub init: InitScheme,
}

fn default_embed() -> usize {
    128
}
fn default_heads() -> usize {
    4
}
fn default_ff() -> usize {
    512
}
fn default_readout() -> Readout {
    Readout::Mean
}

impl ModelConfig {
    pub fn new(arch: Arch) -> Self {
        ModelConfig {
            arch,
            embed_dim: 128,
            heads: 4,
            ff_dim: 512,
            readout: Readout::Mean,
            init: InitScheme::Normal { std: 0.02 },
        }
    }

    pub fn with_widths(mut self, embed_dim: usize, heads: usize, ff_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self.heads = heads;
        self.ff_dim = ff_dim;
        self
    }

    pub fn spec(&self, task: &TaskConfig) -> ModelSpec {
        let base = match *task {
            TaskConfig::Modular { p, .. } => ModelSpec::modular(self.arch, p),
            TaskConfig::Parity { n, .. } => ModelSpec::parity(self.arch, n),
        };
        let mut s = base
            .with_widths(self.embed_dim, self.heads, self.ff_dim)
            .with_readout(self.readout);
        s.init = self.init;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Intervention {
    #[default]
    None,
    /// Multiply θ by `factor` once at T_mem; optimizer moments untouched.
    Rescale { factor: f64 },
    /// Project θ back to V(T_mem) after every step from T_mem on.
    NormFreeze,
    /// Set the decay coefficient to 0 at T_mem.
    WdFreeze,
}

impl Intervention {
    pub fn label(&self) -> &'static str {
        match self {
            Intervention::None => "none",
            Intervention::Rescale { .. } => "rescale",
            Intervention::NormFreeze => "norm_freeze",
            Intervention::WdFreeze => "wd_freeze",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "t99")]
    pub acc_mem: f64,
    #[serde(default = "t99")]
    pub acc_grok: f64,
    #[serde(default = "t95")]
    pub acc_grok_soft: f64,
    #[serde(default = "loss_mem")]
    pub loss_mem: f64,
}

fn t99() -> f64 {
    0.99
}
fn t95() -> f64 {
    0.95
}
fn loss_mem() -> f64 {
    0.01
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            acc_mem: 0.99,
            acc_grok: 0.99,
            acc_grok_soft: 0.95,
            loss_mem: 0.01,
        }
    }
}

/// Post-grok plateau search and the early stop it triggers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauConfig {
    #[serde(default = "p_window")]
    pub window: usize,
    #[serde(default = "p_rel_std")]
    pub rel_std: f64,
    #[serde(default = "p_min_after")]
    pub min_steps_after_grok: u64,
    #[serde(default = "p_tail")]
    pub tail_points: usize,
    /// Steps to keep training after a plateau is found; `None` disables early stop.
    #[serde(default = "p_stop_after")]
    pub stop_after: Option<u64>,
}

fn p_window() -> usize {
    30
}
fn p_rel_std() -> f64 {
    0.01
}
fn p_min_after() -> u64 {
    1500
}
fn p_tail() -> usize {
    10
}
fn p_stop_after() -> Option<u64> {
    Some(2000)
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            window: 30,
            rel_std: 0.01,
            min_steps_after_grok: 1500,
            tail_points: 10,
            stop_after: Some(2000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub max_steps: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub intervention: Intervention,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub plateau: PlateauConfig,
}

fn default_log_every() -> u64 {
    20
}

impl RunConfig {
    pub fn new(
        task: TaskConfig,
        model: ModelConfig,
        optimizer: OptimizerConfig,
        seed: u64,
        max_steps: u64,
    ) -> Self {
        RunConfig {
            task,
            model,
            optimizer,
            seed,
            max_steps,
            log_every: 20,
            intervention: Intervention::None,
            thresholds: Thresholds::default(),
            plateau: PlateauConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_every == 0 {
            return Err(invalid("log_every must be ≥ 1"));
        }
        if self.max_steps % self.log_every != 0 {
            return Err(invalid(format!(
                "max_steps {} is not a multiple of log_every {}",
                self.max_steps, self.log_every
            )));
        }
        if let Intervention::Rescale { factor } = self.intervention {
            if !(factor.is_finite() && factor > 0.0) {
                return Err(invalid("rescale factor must be positive"));
            }
        }
        if self.plateau.window < 2 || self.plateau.tail_points == 0 {
            return Err(invalid("plateau window must be ≥ 2 and tail ≥ 1"));
        }
        self.optimizer.validate()?;
        self.model.spec(&self.task).validate()
    }
}
