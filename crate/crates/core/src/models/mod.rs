//! Architectures with hand-derived gradients, and parameter-space observables.

mod layers;
pub mod layout;
mod mlp;
pub mod observables;
mod transformer;

pub use layout::{ParamEntry, ParamKind, ParamLayout};
pub use observables::{
    accuracy, accuracy_from_logits, angle_to_reference, margins, margins_from_logits,
    ntk_feature_norm, ntk_feature_norm_sup, param_norm_sq, sup_feature_norm, MarginReport,
};

use crate::error::{invalid, Error, Result};
use crate::math::{cross_entropy_loss, RngState};
use crate::tasks::{Dataset, Inputs};
use mlp::{MlpInput, MlpNet};
use serde::{Deserialize, Serialize};
use transformer::TransformerNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Transformer1,
    Transformer2Paper,
    Transformer2Alt,
    Mlp,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Transformer1 => "transformer1",
            Arch::Transformer2Paper => "transformer2_paper",
            Arch::Transformer2Alt => "transformer2_alt",
            Arch::Mlp => "mlp",
        }
    }

    pub fn is_transformer(self) -> bool {
        self != Arch::Mlp
    }
}

/// Which sequence position(s) feed the classification head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Mean,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputShape {
    Tokens { vocab: usize, seq_len: usize },
    Bits { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitScheme {
    /// normal(0, std) on embeddings and weight matrices; biases 0, LN gains 1.
    Normal { std: f64 },
    /// Common deep-learning framework defaults: embeddings normal(0, 1), attention
    /// in-projection Xavier-uniform with zero attention biases, other linear layers
    /// U(±1/√fan_in) on weights and biases, LN gains 1.
    FrameworkDefault,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Normal { std: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub embed_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub num_classes: usize,
    pub input: InputShape,
    pub readout: Readout,
    /// Initialisation for every architecture except transformer2_alt (always Xavier-uniform).
    pub init: InitScheme,
    pub homogeneity_degree_k: u32,
}

/// Degree of approximate positive homogeneity of the logits in θ.
///
/// LayerNorm-protected transformers are degree 1 (only the head escapes the
/// normalisation). The bias-free transformer is dominated by its residual
/// embedding→head path, degree 2. MLPs count their weight layers, including
/// the embedding when present.
pub fn default_homogeneity(arch: Arch, input: InputShape) -> u32 {
    match (arch, input) {
        (Arch::Transformer1 | Arch::Transformer2Alt, _) => 1,
        (Arch::Transformer2Paper, _) => 2,
        (Arch::Mlp, InputShape::Tokens { .. }) => 4,
        (Arch::Mlp, InputShape::Bits { .. }) => 3,
    }
}

impl ModelSpec {
    /// Defaults: width 128, 4 heads, feed-forward 512, mean readout, normal(0, 0.02) init.
    pub fn new(arch: Arch, input: InputShape, num_classes: usize) -> Self {
        ModelSpec {
            arch,
            embed_dim: 128,
            heads: 4,
            ff_dim: 512,
            num_classes,
            input,
            readout: Readout::Mean,
            init: InitScheme::default(),
            homogeneity_degree_k: default_homogeneity(arch, input),
        }
    }

    /// Binary-operation task over Z_p: two tokens, `p` classes.
    pub fn modular(arch: Arch, p: usize) -> Self {
        Self::new(
            arch,
            InputShape::Tokens {
                vocab: p,
                seq_len: 2,
            },
            p,
        )
    }

    pub fn parity(arch: Arch, n: usize) -> Self {
        Self::new(arch, InputShape::Bits { dim: n }, 2)
    }

    pub fn with_widths(mut self, embed_dim: usize, heads: usize, ff_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self.heads = heads;
        self.ff_dim = ff_dim;
        self
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.ff_dim == 0 || self.heads == 0 || self.num_classes < 2 {
            return Err(invalid("widths must be positive and num_classes ≥ 2"));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(invalid(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if let InitScheme::Normal { std } = self.init {
            if !(std.is_finite() && std >= 0.0) {
                return Err(invalid("init std must be finite and non-negative"));
            }
        }
        match self.input {
            InputShape::Tokens { vocab, seq_len } if vocab == 0 || seq_len == 0 => {
                Err(invalid("empty token space"))
            }
            InputShape::Bits { dim: 0 } => Err(invalid("empty bit vector")),
            InputShape::Bits { .. } if self.arch.is_transformer() => {
                Err(invalid("transformers take token inputs"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
enum Net {
    Transformer(TransformerNet),
    Mlp(MlpNet),
}

enum Cache {
    Transformer(transformer::Cache),
    Mlp(mlp::Cache),
}

/// θ together with the architecture that interprets it.
#[derive(Debug, Clone)]
pub struct ModelState {
    spec: ModelSpec,
    layout: ParamLayout,
    net: Net,
    pub params: Vec<f64>,
}

/// Loss and flat gradient for one full batch.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub logits: Vec<f64>,
}

fn build(spec: &ModelSpec) -> Result<(ParamLayout, Net)> {
    spec.validate()?;
    let mut layout = ParamLayout::default();
    let net = match (spec.arch, spec.input) {
        (Arch::Mlp, InputShape::Tokens { vocab, seq_len }) => Net::Mlp(MlpNet::build(
            MlpInput::Tokens {
                vocab,
                seq: seq_len,
                d: spec.embed_dim,
            },
            spec.ff_dim,
            spec.num_classes,
            &mut layout,
        )),
        (Arch::Mlp, InputShape::Bits { dim }) => Net::Mlp(MlpNet::build(
            MlpInput::Dense { dim },
            spec.ff_dim,
            spec.num_classes,
            &mut layout,
        )),
        (arch, InputShape::Tokens { vocab, seq_len }) => Net::Transformer(TransformerNet::build(
            arch,
            spec.embed_dim,
            spec.heads,
            spec.ff_dim,
            vocab,
            seq_len,
            spec.num_classes,
            spec.readout,
            &mut layout,
        )),
        (_, InputShape::Bits { .. }) => unreachable!("rejected by validate"),
    };
    Ok((layout, net))
}

/// Deterministic initialisation from the seed's "init" stream.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    let mut state = ModelState::zeros(spec)?;
    let mut rng = RngState::for_purpose(seed, "init");
    let xavier = spec.arch == Arch::Transformer2Alt;
    let uniform = |rng: &mut RngState, a: f64| a * (2.0 * rng.uniform() - 1.0);
    let entries = state.layout.entries().to_vec();
    for (i, e) in entries.iter().enumerate() {
        let block = &mut state.params[e.range()];
        let is_attn = e.name.contains(".attn.");
        match (e.kind, spec.init) {
            (ParamKind::NormGain, _) => block.fill(1.0),
            (ParamKind::NormBias, _) => {}
            (ParamKind::Embedding | ParamKind::Weight, _) if xavier => {
                let a = (6.0 / (e.shape[0] + e.shape[1]) as f64).sqrt();
                block.iter_mut().for_each(|v| *v = uniform(&mut rng, a));
            }
            (ParamKind::Bias, _) if xavier => {}
            (ParamKind::Embedding | ParamKind::Weight, InitScheme::Normal { std }) => {
                block.iter_mut().for_each(|v| *v = std * rng.normal());
            }
            (ParamKind::Bias, InitScheme::Normal { .. }) => {}
            (ParamKind::Embedding, InitScheme::FrameworkDefault) => {
                block.iter_mut().for_each(|v| *v = rng.normal())
            }
            (ParamKind::Weight, InitScheme::FrameworkDefault)
                if e.name.ends_with("attn.in_proj.weight") =>
            {
                // Xavier bound for the 3d × d packed projection.
                let a = (6.0 / (e.shape[0] + e.shape[1]) as f64).sqrt();
                block.iter_mut().for_each(|v| *v = uniform(&mut rng, a));
            }
            (ParamKind::Weight, InitScheme::FrameworkDefault) => {
                let a = 1.0 / (e.shape[0] as f64).sqrt();
                block.iter_mut().for_each(|v| *v = uniform(&mut rng, a));
            }
            (ParamKind::Bias, InitScheme::FrameworkDefault) if is_attn => {}
            (ParamKind::Bias, InitScheme::FrameworkDefault) => {
                // Bias follows its weight, whose fan-in is the weight's first dimension.
                let fan_in = entries[i - 1].shape[0];
                let a = 1.0 / (fan_in as f64).sqrt();
                block.iter_mut().for_each(|v| *v = uniform(&mut rng, a));
            }
        }
    }
    Ok(state)
}

impl ModelState {
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let (layout, net) = build(spec)?;
        let params = vec![0.0; layout.total()];
        Ok(ModelState {
            spec: spec.clone(),
            layout,
            net,
            params,
        })
    }

    pub fn with_params(spec: &ModelSpec, params: Vec<f64>) -> Result<Self> {
        let mut s = Self::zeros(spec)?;
        if params.len() != s.params.len() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                s.params.len(),
                params.len()
            )));
        }
        s.params = params;
        Ok(s)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if data.num_classes != self.spec.num_classes {
            return Err(invalid(format!(
                "dataset has {} classes, model {}",
                data.num_classes, self.spec.num_classes
            )));
        }
        match (&data.inputs, self.spec.input) {
            (Inputs::Tokens { ids, seq_len, .. }, InputShape::Tokens { vocab, seq_len: s })
                if *seq_len == s =>
            {
                match ids.iter().find(|&&t| t >= vocab) {
                    Some(t) => Err(invalid(format!(
                        "token id {t} outside vocabulary of {vocab}"
                    ))),
                    None => Ok(()),
                }
            }
            (Inputs::Bits { dim, .. }, InputShape::Bits { dim: m }) if *dim == m => Ok(()),
            _ => Err(invalid("dataset inputs do not match the model input shape")),
        }
    }

    fn run(&self, params: &[f64], data: &Dataset) -> (Vec<f64>, Cache) {
        match (&self.net, &data.inputs) {
            (Net::Transformer(t), Inputs::Tokens { ids, .. }) => {
                let (l, c) = t.forward(params, ids);
                (l, Cache::Transformer(c))
            }
            (Net::Mlp(m), Inputs::Tokens { ids, .. }) => {
                let (l, c) = m.forward_tokens(params, ids);
                (l, Cache::Mlp(c))
            }
            (Net::Mlp(m), Inputs::Bits { values, .. }) => {
                let (l, c) = m.forward_dense(params, values.clone(), data.len(), None);
                (l, Cache::Mlp(c))
            }
            (Net::Transformer(_), Inputs::Bits { .. }) => unreachable!("rejected by check"),
        }
    }

    fn backprop(&self, params: &[f64], cache: &Cache, dlogits: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; params.len()];
        match (&self.net, cache) {
            (Net::Transformer(t), Cache::Transformer(c)) => t.backward(params, c, dlogits, &mut g),
            (Net::Mlp(m), Cache::Mlp(c)) => m.backward(params, c, dlogits, &mut g),
            _ => unreachable!("cache from a different network"),
        }
        g
    }

    /// Row-major `len × num_classes` logits.
    pub fn forward(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.forward_with(&self.params, data)
    }

    /// Logits under an alternative θ of the same layout.
    pub fn forward_with(&self, params: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        self.check(data)?;
        if params.len() != self.params.len() {
            return Err(invalid("parameter vector does not match the layout"));
        }
        Ok(self.run(params, data).0)
    }

    /// Mean cross-entropy at an alternative θ (used by finite-difference oracles).
    pub fn loss_with(&self, params: &[f64], data: &Dataset) -> Result<f64> {
        let logits = self.forward_with(params, data)?;
        Ok(cross_entropy_loss(&logits, self.spec.num_classes, &data.labels)?.0)
    }

    /// Full-batch loss and gradient. A non-finite loss is reported as
    /// [`Error::NonFinite`] with step 0; callers that know the step rewrite it.
    pub fn loss_and_grad(&self, data: &Dataset) -> Result<LossGrad> {
        self.check(data)?;
        let (logits, cache) = self.run(&self.params, data);
        let (loss, dlogits) = cross_entropy_loss(&logits, self.spec.num_classes, &data.labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        let grad = self.backprop(&self.params, &cache, &dlogits);
        Ok(LossGrad { loss, grad, logits })
    }

    /// ∇θ of Σ_i w_i·f(x_i)_{c_i} for per-row logit weights `dlogits`.
    pub fn logit_vjp(&self, data: &Dataset, dlogits: &[f64]) -> Result<Vec<f64>> {
        self.check(data)?;
        if dlogits.len() != data.len() * self.spec.num_classes {
            return Err(invalid("dlogits shape does not match the batch"));
        }
        let (_, cache) = self.run(&self.params, data);
        Ok(self.backprop(&self.params, &cache, dlogits))
    }
}
