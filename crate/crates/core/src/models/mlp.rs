//! Three-layer ReLU perceptron; modular inputs go through a token embedding first.

use super::layers::{linear_bwd, linear_fwd, relu, relu_bwd};
use super::layout::{ParamKind, ParamLayout};
use crate::math::linalg::accumulate_col_sums;
use std::ops::Range;

#[derive(Debug, Clone)]
pub(crate) struct MlpNet {
    /// `(range, embed_dim, seq_len)` for token inputs.
    embed: Option<(Range<usize>, usize, usize)>,
    din: usize,
    hidden: usize,
    classes: usize,
    w: [Range<usize>; 3],
    b: [Range<usize>; 3],
}

pub(crate) struct Cache {
    ids: Option<Vec<usize>>,
    x: Vec<f64>,
    pre: [Vec<f64>; 2],
    act: [Vec<f64>; 2],
    rows: usize,
}

/// Input side of an MLP: embedded token sequences or dense features.
pub(crate) enum MlpInput {
    Tokens { vocab: usize, seq: usize, d: usize },
    Dense { dim: usize },
}

impl MlpNet {
    pub(crate) fn build(
        input: MlpInput,
        hidden: usize,
        classes: usize,
        layout: &mut ParamLayout,
    ) -> Self {
        let (embed, din) = match input {
            MlpInput::Tokens { vocab, seq, d } => (
                Some((
                    layout.push("tok_embed", &[vocab, d], ParamKind::Embedding),
                    d,
                    seq,
                )),
                seq * d,
            ),
            MlpInput::Dense { dim } => (None, dim),
        };
        let dims = [(din, hidden), (hidden, hidden), (hidden, classes)];
        let names = ["fc1", "fc2", "out"];
        let mut w = Vec::new();
        let mut b = Vec::new();
        for (name, (i, o)) in names.iter().zip(dims) {
            w.push(layout.push(format!("{name}.weight"), &[i, o], ParamKind::Weight));
            b.push(layout.push(format!("{name}.bias"), &[o], ParamKind::Bias));
        }
        let w: [Range<usize>; 3] = w.try_into().expect("three layers");
        let b: [Range<usize>; 3] = b.try_into().expect("three layers");
        MlpNet {
            embed,
            din,
            hidden,
            classes,
            w,
            b,
        }
    }

    pub(crate) fn forward_tokens(&self, p: &[f64], ids: &[usize]) -> (Vec<f64>, Cache) {
        let (r, d, seq) = self.embed.clone().expect("token MLP");
        let rows = ids.len() / seq;
        let emb = &p[r];
        let mut x = vec![0.0; rows * self.din];
        for (i, &t) in ids.iter().enumerate() {
            x[i * d..(i + 1) * d].copy_from_slice(&emb[t * d..(t + 1) * d]);
        }
        self.forward_dense(p, x, rows, Some(ids.to_vec()))
    }

    pub(crate) fn forward_dense(
        &self,
        p: &[f64],
        x: Vec<f64>,
        rows: usize,
        ids: Option<Vec<usize>>,
    ) -> (Vec<f64>, Cache) {
        let h = self.hidden;
        let pre0 = linear_fwd(
            &x,
            rows,
            self.din,
            h,
            &p[self.w[0].clone()],
            Some(&p[self.b[0].clone()]),
        );
        let act0 = relu(&pre0);
        let pre1 = linear_fwd(
            &act0,
            rows,
            h,
            h,
            &p[self.w[1].clone()],
            Some(&p[self.b[1].clone()]),
        );
        let act1 = relu(&pre1);
        let logits = linear_fwd(
            &act1,
            rows,
            h,
            self.classes,
            &p[self.w[2].clone()],
            Some(&p[self.b[2].clone()]),
        );
        (
            logits,
            Cache {
                ids,
                x,
                pre: [pre0, pre1],
                act: [act0, act1],
                rows,
            },
        )
    }

    pub(crate) fn backward(&self, p: &[f64], c: &Cache, dlogits: &[f64], g: &mut [f64]) {
        let (h, rows) = (self.hidden, c.rows);
        accumulate_col_sums(dlogits, &mut g[self.b[2].clone()]);
        let mut da1 = linear_bwd(
            &c.act[1],
            dlogits,
            rows,
            h,
            self.classes,
            &p[self.w[2].clone()],
            &mut g[self.w[2].clone()],
            true,
        )
        .expect("dx requested");
        relu_bwd(&c.pre[1], &mut da1);
        accumulate_col_sums(&da1, &mut g[self.b[1].clone()]);
        let mut da0 = linear_bwd(
            &c.act[0],
            &da1,
            rows,
            h,
            h,
            &p[self.w[1].clone()],
            &mut g[self.w[1].clone()],
            true,
        )
        .expect("dx requested");
        relu_bwd(&c.pre[0], &mut da0);
        accumulate_col_sums(&da0, &mut g[self.b[0].clone()]);
        let want_dx = self.embed.is_some();
        let dx = linear_bwd(
            &c.x,
            &da0,
            rows,
            self.din,
            h,
            &p[self.w[0].clone()],
            &mut g[self.w[0].clone()],
            want_dx,
        );
        if let (Some((r, d, _)), Some(dx), Some(ids)) = (&self.embed, dx, &c.ids) {
            for (i, &t) in ids.iter().enumerate() {
                let dst = &mut g[r.start + t * d..r.start + (t + 1) * d];
                for (o, v) in dst.iter_mut().zip(&dx[i * d..(i + 1) * d]) {
                    *o += v;
                }
            }
        }
    }
}
