//! The full-batch training loop, interventions and checkpoints.

use super::config::{Intervention, RunConfig};
use super::detect::{
    detect_t_grok, detect_t_mem, detect_v_post_plateau, find_plateau, mean_rel_std, MemMode,
    VPostMethod,
};
use super::log::{LogRow, TrajectoryLog};
use crate::error::{Error, Result};
use crate::math::linalg::{dot, norm_sq};
use crate::math::nn::cross_entropy_value;
use crate::models::{accuracy_from_logits, init_model, ModelState};
use crate::optim::OptimizerState;
use crate::tasks::Dataset;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub t_mem: Option<u64>,
    pub t_mem_loss: Option<u64>,
    pub t_grok_99: Option<u64>,
    pub t_grok_95: Option<u64>,
    pub v0: f64,
    pub v_mem: Option<f64>,
    pub v_post: Option<f64>,
    pub v_post_method: Option<VPostMethod>,
    pub grokked: bool,
    /// Angle to θ(T_mem) at the last logged row, degrees.
    pub alpha_final: Option<f64>,
    pub intervention: Intervention,
    pub intervention_step: Option<u64>,
    /// Norm-freeze only: worst per-step |V − V_ref|/V_ref after the trigger.
    pub freeze_max_rel_dev: Option<f64>,
    /// Norm-freeze only: std/mean of logged V from the trigger on.
    pub freeze_rel_std: Option<f64>,
    pub diverged_at: Option<u64>,
    pub steps_run: u64,
    pub stopped_early: bool,
    pub final_train_acc: f64,
    pub final_val_acc: f64,
    pub num_params: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
struct MemRef {
    step: u64,
    theta: Vec<f64>,
    v: f64,
}

/// Sets θ ← θ·√(V_ref/‖θ‖²).
pub fn project_to_norm(theta: &mut [f64], v_ref: f64) {
    let s = (v_ref / norm_sq(theta)).sqrt();
    theta.iter_mut().for_each(|x| *x *= s);
}

/// Fires an intervention at the memorisation step. Norm-freeze projects onto `v_ref`;
/// the per-step projections that follow are the trainer's job.
pub fn apply_intervention(
    theta: &mut [f64],
    opt: &mut OptimizerState,
    kind: &Intervention,
    v_ref: f64,
) {
    match *kind {
        Intervention::None => {}
        Intervention::Rescale { factor } => theta.iter_mut().for_each(|x| *x *= factor),
        Intervention::NormFreeze => project_to_norm(theta, v_ref),
        Intervention::WdFreeze => opt.set_lambda(0.0),
    }
}

pub struct Trainer {
    cfg: RunConfig,
    model: ModelState,
    opt: OptimizerState,
    train: Dataset,
    val: Dataset,
    log: TrajectoryLog,
    step: u64,
    mem: Option<MemRef>,
    grok_step: Option<u64>,
    stop_at: Option<u64>,
    freeze_max_rel_dev: f64,
    diverged_at: Option<u64>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (train, val) = cfg.task.datasets(cfg.seed)?;
        let model = init_model(&cfg.model.spec(&cfg.task), cfg.seed)?;
        let opt = OptimizerState::new(cfg.optimizer, model.num_params())?;
        let mut t = Trainer {
            cfg: cfg.clone(),
            model,
            opt,
            train,
            val,
            log: TrajectoryLog::default(),
            step: 0,
            mem: None,
            grok_step: None,
            stop_at: None,
            freeze_max_rel_dev: 0.0,
            diverged_at: None,
        };
        t.log_row()?;
        Ok(t)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn datasets(&self) -> (&Dataset, &Dataset) {
        (&self.train, &self.val)
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// θ(T_mem), once memorisation has been detected.
    pub fn reference(&self) -> Option<&[f64]> {
        self.mem.as_ref().map(|m| m.theta.as_slice())
    }

    pub fn is_done(&self) -> bool {
        self.diverged_at.is_some()
            || self.step >= self.cfg.max_steps
            || self.stop_at.is_some_and(|s| self.step >= s)
    }

    fn evaluate(&self, data: &Dataset) -> Result<(f64, f64)> {
        let logits = self.model.forward(data)?;
        let loss = cross_entropy_value(&logits, data.num_classes, &data.labels);
        Ok((
            loss,
            accuracy_from_logits(&logits, data.num_classes, &data.labels),
        ))
    }

    fn log_row(&mut self) -> Result<()> {
        let (train_loss, train_acc) = self.evaluate(&self.train)?;
        let (val_loss, val_acc) = self.evaluate(&self.val)?;
        let v = norm_sq(&self.model.params);
        let cos_to_ref = self
            .mem
            .as_ref()
            .map(|m| dot(&self.model.params, &m.theta) / (v.sqrt() * m.v.sqrt()));
        self.log.push(LogRow {
            step: self.step,
            v,
            train_acc,
            val_acc,
            train_loss,
            val_loss,
            wd_coeff: self.opt.lambda(),
            cos_to_ref,
        });

        if self.mem.is_none() && train_acc >= self.cfg.thresholds.acc_mem {
            self.mem = Some(MemRef {
                step: self.step,
                theta: self.model.params.clone(),
                v,
            });
            self.log
                .rows
                .last_mut()
                .expect("row just pushed")
                .cos_to_ref = Some(1.0);
            apply_intervention(
                &mut self.model.params,
                &mut self.opt,
                &self.cfg.intervention,
                v,
            );
        }
        if self.grok_step.is_none() && val_acc >= self.cfg.thresholds.acc_grok {
            self.grok_step = Some(self.step);
        }
        if let (Some(tg), None, Some(after)) =
            (self.grok_step, self.stop_at, self.cfg.plateau.stop_after)
        {
            if find_plateau(&self.log, tg, &self.cfg.plateau).is_some() {
                self.stop_at = Some(self.step + after);
            }
        }
        Ok(())
    }

    /// One optimizer update (plus projection under norm-freeze) and, on schedule, a log row.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        let lg = match self.model.loss_and_grad(&self.train) {
            Ok(lg) => lg,
            Err(Error::NonFinite { .. }) => {
                self.diverged_at = Some(self.step);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        if let Err(Error::NonFinite { .. }) = self.opt.step(&mut self.model.params, &lg.grad) {
            self.diverged_at = Some(self.step);
            return Ok(());
        }
        if let (Intervention::NormFreeze, Some(m)) = (self.cfg.intervention, &self.mem) {
            project_to_norm(&mut self.model.params, m.v);
            let dev = (norm_sq(&self.model.params) - m.v).abs() / m.v;
            self.freeze_max_rel_dev = self.freeze_max_rel_dev.max(dev);
        }
        self.step += 1;
        if self.step % self.cfg.log_every == 0 {
            self.log_row()?;
        }
        Ok(())
    }

    /// Advances until `step` (or completion).
    pub fn run_to(&mut self, step: u64) -> Result<()> {
        while self.step < step && !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput> {
        self.run_to(u64::MAX)?;
        Ok(self.finish())
    }

    pub fn summary(&self) -> RunSummary {
        let th = &self.cfg.thresholds;
        let log = &self.log;
        let t_mem = detect_t_mem(log, MemMode::Acc, th.acc_mem);
        let t_grok_99 = detect_t_grok(log, th.acc_grok);
        let v_post = detect_v_post_plateau(log, t_grok_99, &self.cfg.plateau).ok();
        let last = log.last().expect("step-0 row always present");
        let frozen =
            matches!(self.cfg.intervention, Intervention::NormFreeze) && self.mem.is_some();
        let freeze_rel_std = frozen.then(|| {
            let from = self.mem.as_ref().map_or(0, |m| m.step);
            let v: Vec<f64> = log
                .rows
                .iter()
                .filter(|r| r.step >= from)
                .map(|r| r.v)
                .collect();
            mean_rel_std(&v).1
        });
        RunSummary {
            t_mem,
            t_mem_loss: detect_t_mem(log, MemMode::Loss, th.loss_mem),
            t_grok_99,
            t_grok_95: detect_t_grok(log, th.acc_grok_soft),
            v0: log.rows[0].v,
            v_mem: t_mem.and_then(|t| log.row_at(t)).map(|r| r.v),
            v_post: v_post.map(|p| p.value),
            v_post_method: v_post.map(|p| p.method),
            grokked: t_grok_99.is_some(),
            alpha_final: last.alpha_deg(),
            intervention: self.cfg.intervention,
            intervention_step: self
                .mem
                .as_ref()
                .filter(|_| self.cfg.intervention != Intervention::None)
                .map(|m| m.step),
            freeze_max_rel_dev: frozen.then_some(self.freeze_max_rel_dev),
            freeze_rel_std,
            diverged_at: self.diverged_at,
            steps_run: self.step,
            stopped_early: self.stop_at.is_some_and(|s| self.step >= s)
                && self.step < self.cfg.max_steps,
            final_train_acc: last.train_acc,
            final_val_acc: last.val_acc,
            num_params: self.model.num_params(),
        }
    }

    pub fn finish(self) -> RunOutput {
        let summary = self.summary();
        RunOutput {
            log: self.log,
            summary,
        }
    }
}

/// Trains one configuration to completion.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutput> {
    Trainer::new(cfg)?.run()
}

const CKPT_MAGIC: &[u8; 8] = b"GRKCKPT\0";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CkptHeader {
    config: RunConfig,
    step: u64,
    opt_t: u64,
    beta1_pow: u64,
    beta2_pow: u64,
    lambda: u64,
    mem_step: Option<u64>,
    mem_v: Option<u64>,
    grok_step: Option<u64>,
    stop_at: Option<u64>,
    freeze_max_rel_dev: u64,
    diverged_at: Option<u64>,
    layout: Vec<(String, usize)>,
    n_params: usize,
    n_moments: usize,
    log: String,
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn take_f64s(buf: &[u8], pos: &mut usize, n: usize) -> Result<Vec<f64>> {
    let end = *pos + 8 * n;
    let bytes = buf
        .get(*pos..end)
        .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
    *pos = end;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl Trainer {
    /// Versioned binary snapshot: magic, version, JSON header, then raw little-endian θ, m, v, θ_ref.
    pub fn checkpoint(&self) -> Vec<u8> {
        let header = CkptHeader {
            config: self.cfg.clone(),
            step: self.step,
            opt_t: self.opt.t,
            beta1_pow: self.opt.beta1_pow.to_bits(),
            beta2_pow: self.opt.beta2_pow.to_bits(),
            lambda: self.opt.lambda().to_bits(),
            mem_step: self.mem.as_ref().map(|m| m.step),
            mem_v: self.mem.as_ref().map(|m| m.v.to_bits()),
            grok_step: self.grok_step,
            stop_at: self.stop_at,
            freeze_max_rel_dev: self.freeze_max_rel_dev.to_bits(),
            diverged_at: self.diverged_at,
            layout: self
                .model
                .layout()
                .entries()
                .iter()
                .map(|e| (e.name.clone(), e.len()))
                .collect(),
            n_params: self.model.num_params(),
            n_moments: self.opt.m.len(),
            log: self.log.to_text(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        put_f64s(&mut out, &self.model.params);
        put_f64s(&mut out, &self.opt.m);
        put_f64s(&mut out, &self.opt.v);
        if let Some(m) = &self.mem {
            put_f64s(&mut out, &m.theta);
        }
        out
    }

    pub fn resume(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 20 || &bytes[..8] != CKPT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CKPT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let hbytes = bytes
            .get(20..20 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let h: CkptHeader = serde_json::from_slice(hbytes)?;
        let mut t = Trainer::new(&h.config)?;
        let layout: Vec<(String, usize)> = t
            .model
            .layout()
            .entries()
            .iter()
            .map(|e| (e.name.clone(), e.len()))
            .collect();
        if layout != h.layout || h.n_params != t.model.num_params() || h.n_moments != t.opt.m.len()
        {
            return Err(bad("layout does not match the configuration"));
        }
        let mut pos = 20 + hlen;
        t.model.params = take_f64s(bytes, &mut pos, h.n_params)?;
        t.opt.m = take_f64s(bytes, &mut pos, h.n_moments)?;
        t.opt.v = take_f64s(bytes, &mut pos, h.n_moments)?;
        t.opt.t = h.opt_t;
        t.opt.beta1_pow = f64::from_bits(h.beta1_pow);
        t.opt.beta2_pow = f64::from_bits(h.beta2_pow);
        t.opt.set_lambda(f64::from_bits(h.lambda));
        t.mem = match (h.mem_step, h.mem_v) {
            (Some(step), Some(v)) => Some(MemRef {
                step,
                theta: take_f64s(bytes, &mut pos, h.n_params)?,
                v: f64::from_bits(v),
            }),
            _ => None,
        };
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        t.step = h.step;
        t.grok_step = h.grok_step;
        t.stop_at = h.stop_at;
        t.freeze_max_rel_dev = f64::from_bits(h.freeze_max_rel_dev);
        t.diverged_at = h.diverged_at;
        t.log = TrajectoryLog::from_text(&h.log)?;
        Ok(t)
    }
}
