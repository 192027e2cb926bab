//! Encoder-style transformer over length-`seq` token sequences.

use super::layers::{
    attention_bwd, attention_fwd, layer_norm_bwd, layer_norm_fwd, linear_bwd, linear_fwd, relu,
    relu_bwd, AttnShape, LnCache,
};
use super::layout::{pair_mut, ParamKind, ParamLayout};
use super::{Arch, Readout};
use crate::math::linalg::accumulate_col_sums;
use std::ops::Range;

type Norm = (Range<usize>, Range<usize>);

#[derive(Debug, Clone, Copy)]
struct Variant {
    layers: usize,
    norm: bool,
    bias: bool,
    pos: bool,
    final_norm: bool,
}

impl Variant {
    fn of(arch: Arch) -> Self {
        match arch {
            Arch::Transformer1 => Variant {
                layers: 1,
                norm: true,
                bias: true,
                pos: true,
                final_norm: false,
            },
            Arch::Transformer2Paper => Variant {
                layers: 2,
                norm: false,
                bias: false,
                pos: true,
                final_norm: false,
            },
            Arch::Transformer2Alt => Variant {
                layers: 2,
                norm: true,
                bias: true,
                pos: false,
                final_norm: true,
            },
            Arch::Mlp => unreachable!("not a transformer"),
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    in_w: Range<usize>,
    in_b: Option<Range<usize>>,
    out_w: Range<usize>,
    out_b: Option<Range<usize>>,
    ln1: Option<Norm>,
    ff1_w: Range<usize>,
    ff1_b: Option<Range<usize>>,
    ff2_w: Range<usize>,
    ff2_b: Option<Range<usize>>,
    ln2: Option<Norm>,
}

#[derive(Debug, Clone)]
pub(crate) struct TransformerNet {
    d: usize,
    heads: usize,
    ff: usize,
    seq: usize,
    classes: usize,
    readout: Readout,
    tok: Range<usize>,
    pos: Option<Range<usize>>,
    blocks: Vec<Block>,
    final_ln: Option<Norm>,
    head_w: Range<usize>,
    head_b: Option<Range<usize>>,
}

struct BlockCache {
    input: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    heads_out: Vec<f64>,
    ln1: Option<LnCache>,
    y1: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    ln2: Option<LnCache>,
}

pub(crate) struct Cache {
    ids: Vec<usize>,
    batch: usize,
    blocks: Vec<BlockCache>,
    final_ln: Option<LnCache>,
    pooled: Vec<f64>,
}

fn norm(layout: &mut ParamLayout, name: &str, d: usize) -> Norm {
    (
        layout.push(format!("{name}.gamma"), &[d], ParamKind::NormGain),
        layout.push(format!("{name}.beta"), &[d], ParamKind::NormBias),
    )
}

fn bias(layout: &mut ParamLayout, on: bool, name: String, n: usize) -> Option<Range<usize>> {
    on.then(|| layout.push(name, &[n], ParamKind::Bias))
}

fn add_bias_grad(g: &mut [f64], r: &Option<Range<usize>>, dy: &[f64]) {
    if let Some(r) = r {
        accumulate_col_sums(dy, &mut g[r.clone()]);
    }
}

fn norm_bwd(g: &mut [f64], p: &[f64], r: &Norm, cache: &LnCache, dy: &[f64], d: usize) -> Vec<f64> {
    let (gg, gb) = pair_mut(g, r.0.clone(), r.1.clone());
    layer_norm_bwd(cache, dy, d, &p[r.0.clone()], gg, gb)
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

impl TransformerNet {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        arch: Arch,
        d: usize,
        heads: usize,
        ff: usize,
        vocab: usize,
        seq: usize,
        classes: usize,
        readout: Readout,
        layout: &mut ParamLayout,
    ) -> Self {
        let v = Variant::of(arch);
        let tok = layout.push("tok_embed", &[vocab, d], ParamKind::Embedding);
        let pos = v
            .pos
            .then(|| layout.push("pos_embed", &[seq, d], ParamKind::Embedding));
        let mut blocks = Vec::with_capacity(v.layers);
        for i in 0..v.layers {
            let p = format!("blocks.{i}");
            let in_w = layout.push(
                format!("{p}.attn.in_proj.weight"),
                &[d, 3 * d],
                ParamKind::Weight,
            );
            let in_b = bias(layout, v.bias, format!("{p}.attn.in_proj.bias"), 3 * d);
            let out_w = layout.push(
                format!("{p}.attn.out_proj.weight"),
                &[d, d],
                ParamKind::Weight,
            );
            let out_b = bias(layout, v.bias, format!("{p}.attn.out_proj.bias"), d);
            let ln1 = v.norm.then(|| norm(layout, &format!("{p}.ln1"), d));
            let ff1_w = layout.push(format!("{p}.ff1.weight"), &[d, ff], ParamKind::Weight);
            let ff1_b = bias(layout, v.bias, format!("{p}.ff1.bias"), ff);
            let ff2_w = layout.push(format!("{p}.ff2.weight"), &[ff, d], ParamKind::Weight);
            let ff2_b = bias(layout, v.bias, format!("{p}.ff2.bias"), d);
            let ln2 = v.norm.then(|| norm(layout, &format!("{p}.ln2"), d));
            blocks.push(Block {
                in_w,
                in_b,
                out_w,
                out_b,
                ln1,
                ff1_w,
                ff1_b,
                ff2_w,
                ff2_b,
                ln2,
            });
        }
        let final_ln = v.final_norm.then(|| norm(layout, "final_ln", d));
        let head_w = layout.push("head.weight", &[d, classes], ParamKind::Weight);
        let head_b = bias(layout, v.bias, "head.bias".into(), classes);
        TransformerNet {
            d,
            heads,
            ff,
            seq,
            classes,
            readout,
            tok,
            pos,
            blocks,
            final_ln,
            head_w,
            head_b,
        }
    }

    fn shape(&self, batch: usize) -> AttnShape {
        AttnShape {
            batch,
            seq: self.seq,
            d: self.d,
            heads: self.heads,
        }
    }

    pub(crate) fn forward(&self, p: &[f64], ids: &[usize]) -> (Vec<f64>, Cache) {
        let (d, seq, ff) = (self.d, self.seq, self.ff);
        let n = ids.len();
        let batch = n / seq;
        let emb = &p[self.tok.clone()];
        let mut x = vec![0.0; n * d];
        for (r, &t) in ids.iter().enumerate() {
            let row = &mut x[r * d..(r + 1) * d];
            row.copy_from_slice(&emb[t * d..(t + 1) * d]);
            if let Some(pr) = &self.pos {
                add_into(row, &p[pr.clone()][(r % seq) * d..(r % seq + 1) * d]);
            }
        }
        let opt = |r: &Option<Range<usize>>| r.as_ref().map(|r| &p[r.clone()]);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let qkv = linear_fwd(&x, n, d, 3 * d, &p[b.in_w.clone()], opt(&b.in_b));
            let (heads_out, probs) = attention_fwd(&qkv, self.shape(batch));
            let mut h1 = linear_fwd(&heads_out, n, d, d, &p[b.out_w.clone()], opt(&b.out_b));
            add_into(&mut h1, &x);
            let (y1, ln1) = match &b.ln1 {
                Some((g, be)) => {
                    let (y, c) = layer_norm_fwd(&h1, d, &p[g.clone()], &p[be.clone()]);
                    (y, Some(c))
                }
                None => (h1, None),
            };
            let pre = linear_fwd(&y1, n, d, ff, &p[b.ff1_w.clone()], opt(&b.ff1_b));
            let act = relu(&pre);
            let mut h2 = linear_fwd(&act, n, ff, d, &p[b.ff2_w.clone()], opt(&b.ff2_b));
            add_into(&mut h2, &y1);
            let (y2, ln2) = match &b.ln2 {
                Some((g, be)) => {
                    let (y, c) = layer_norm_fwd(&h2, d, &p[g.clone()], &p[be.clone()]);
                    (y, Some(c))
                }
                None => (h2, None),
            };
            caches.push(BlockCache {
                input: x,
                qkv,
                probs,
                heads_out,
                ln1,
                y1,
                pre,
                act,
                ln2,
            });
            x = y2;
        }
        let final_ln = self.final_ln.as_ref().map(|(g, be)| {
            let (y, c) = layer_norm_fwd(&x, d, &p[g.clone()], &p[be.clone()]);
            x = y;
            c
        });
        let mut pooled = vec![0.0; batch * d];
        for e in 0..batch {
            let out = &mut pooled[e * d..(e + 1) * d];
            match self.readout {
                Readout::Mean => {
                    for s in 0..seq {
                        add_into(out, &x[(e * seq + s) * d..(e * seq + s + 1) * d]);
                    }
                    out.iter_mut().for_each(|v| *v /= seq as f64);
                }
                Readout::Last => {
                    out.copy_from_slice(&x[(e * seq + seq - 1) * d..(e * seq + seq) * d])
                }
            }
        }
        let logits = linear_fwd(
            &pooled,
            batch,
            d,
            self.classes,
            &p[self.head_w.clone()],
            opt(&self.head_b),
        );
        (
            logits,
            Cache {
                ids: ids.to_vec(),
                batch,
                blocks: caches,
                final_ln,
                pooled,
            },
        )
    }

    pub(crate) fn backward(&self, p: &[f64], cache: &Cache, dlogits: &[f64], g: &mut [f64]) {
        let (d, seq, ff) = (self.d, self.seq, self.ff);
        let batch = cache.batch;
        let n = batch * seq;
        add_bias_grad(g, &self.head_b, dlogits);
        let dpooled = linear_bwd(
            &cache.pooled,
            dlogits,
            batch,
            d,
            self.classes,
            &p[self.head_w.clone()],
            &mut g[self.head_w.clone()],
            true,
        )
        .expect("dx requested");
        let mut dx = vec![0.0; n * d];
        for e in 0..batch {
            let src = &dpooled[e * d..(e + 1) * d];
            match self.readout {
                Readout::Mean => {
                    for s in 0..seq {
                        let row = &mut dx[(e * seq + s) * d..(e * seq + s + 1) * d];
                        for (o, v) in row.iter_mut().zip(src) {
                            *o = v / seq as f64;
                        }
                    }
                }
                Readout::Last => {
                    dx[(e * seq + seq - 1) * d..(e * seq + seq) * d].copy_from_slice(src)
                }
            }
        }
        if let (Some(r), Some(c)) = (&self.final_ln, &cache.final_ln) {
            dx = norm_bwd(g, p, r, c, &dx, d);
        }
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let dh2 = match (&b.ln2, &c.ln2) {
                (Some(r), Some(lc)) => norm_bwd(g, p, r, lc, &dx, d),
                _ => dx,
            };
            add_bias_grad(g, &b.ff2_b, &dh2);
            let mut dact = linear_bwd(
                &c.act,
                &dh2,
                n,
                ff,
                d,
                &p[b.ff2_w.clone()],
                &mut g[b.ff2_w.clone()],
                true,
            )
            .expect("dx requested");
            relu_bwd(&c.pre, &mut dact);
            add_bias_grad(g, &b.ff1_b, &dact);
            let mut dy1 = linear_bwd(
                &c.y1,
                &dact,
                n,
                d,
                ff,
                &p[b.ff1_w.clone()],
                &mut g[b.ff1_w.clone()],
                true,
            )
            .expect("dx requested");
            add_into(&mut dy1, &dh2);
            let dh1 = match (&b.ln1, &c.ln1) {
                (Some(r), Some(lc)) => norm_bwd(g, p, r, lc, &dy1, d),
                _ => dy1,
            };
            add_bias_grad(g, &b.out_b, &dh1);
            let dheads = linear_bwd(
                &c.heads_out,
                &dh1,
                n,
                d,
                d,
                &p[b.out_w.clone()],
                &mut g[b.out_w.clone()],
                true,
            )
            .expect("dx requested");
            let dqkv = attention_bwd(&c.qkv, &c.probs, &dheads, self.shape(batch));
            add_bias_grad(g, &b.in_b, &dqkv);
            let mut dinput = linear_bwd(
                &c.input,
                &dqkv,
                n,
                d,
                3 * d,
                &p[b.in_w.clone()],
                &mut g[b.in_w.clone()],
                true,
            )
            .expect("dx requested");
            add_into(&mut dinput, &dh1);
            dx = dinput;
        }
        for (r, &t) in cache.ids.iter().enumerate() {
            let row = &dx[r * d..(r + 1) * d];
            add_into(
                &mut g[self.tok.start + t * d..self.tok.start + (t + 1) * d],
                row,
            );
            if let Some(pr) = &self.pos {
                let s = r % seq;
                add_into(&mut g[pr.start + s * d..pr.start + (s + 1) * d], row);
            }
        }
    }
}
