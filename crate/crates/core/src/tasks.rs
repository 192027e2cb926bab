//! Deterministic datasets: modular arithmetic over Z_p and sparse parity.

use crate::error::{Error, Result};
use crate::math::RngState;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModOp {
    Add,
    Mult,
}

impl ModOp {
    pub fn apply(self, a: usize, b: usize, p: usize) -> usize {
        match self {
            ModOp::Add => (a + b) % p,
            ModOp::Mult => (a * b) % p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Model inputs for one split.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    /// Row-major `len × seq_len` token ids.
    Tokens {
        ids: Vec<usize>,
        seq_len: usize,
        vocab: usize,
    },
    /// Row-major `len × dim` dense features (parity bits as 0/1).
    Bits { values: Vec<f64>, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy of the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let inputs = match &self.inputs {
            Inputs::Tokens {
                ids,
                seq_len,
                vocab,
            } => Inputs::Tokens {
                ids: indices
                    .iter()
                    .flat_map(|&i| ids[i * seq_len..(i + 1) * seq_len].iter().copied())
                    .collect(),
                seq_len: *seq_len,
                vocab: *vocab,
            },
            Inputs::Bits { values, dim } => Inputs::Bits {
                values: indices
                    .iter()
                    .flat_map(|&i| values[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
                dim: *dim,
            },
        };
        Dataset {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    /// Line-delimited audit dump: one `a b label` (or `bits label`) per example.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, y) in self.labels.iter().enumerate() {
            match &self.inputs {
                Inputs::Tokens { ids, seq_len, .. } => {
                    for t in &ids[i * seq_len..(i + 1) * seq_len] {
                        let _ = write!(out, "{t} ");
                    }
                }
                Inputs::Bits { values, dim } => {
                    for v in &values[i * dim..(i + 1) * dim] {
                        out.push(if *v > 0.5 { '1' } else { '0' });
                    }
                    out.push(' ');
                }
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Number of training pairs: ⌊0.4·p²⌋.
pub fn modular_train_size(p: usize) -> usize {
    2 * p * p / 5
}

/// All p² pairs, shuffled by the seed's "data" stream, split 40/60.
pub fn gen_modular(p: usize, op: ModOp, seed: u64) -> Result<(Dataset, Dataset)> {
    if p < 5 || !is_prime(p) {
        return Err(Error::InvalidInput(format!(
            "modulus {p} must be a prime ≥ 5"
        )));
    }
    let mut pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (0..p).map(move |b| (a, b))).collect();
    RngState::for_purpose(seed, "data").shuffle(&mut pairs);
    let n_train = modular_train_size(p);
    let build = |chunk: &[(usize, usize)], split| Dataset {
        inputs: Inputs::Tokens {
            ids: chunk.iter().flat_map(|&(a, b)| [a, b]).collect(),
            seq_len: 2,
            vocab: p,
        },
        labels: chunk.iter().map(|&(a, b)| op.apply(a, b, p)).collect(),
        num_classes: p,
        split,
    };
    Ok((
        build(&pairs[..n_train], Split::Train),
        build(&pairs[n_train..], Split::Val),
    ))
}

/// Uniform bit vectors labelled by the XOR over a fixed random subset of size `k`.
///
/// Returns the train/val halves and the relevant subset.
pub fn gen_sparse_parity(
    n: usize,
    k: usize,
    num_samples: usize,
    seed: u64,
) -> Result<(Dataset, Dataset, Vec<usize>)> {
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "parity subset size {k} must lie in 1..={n}"
        )));
    }
    if num_samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let mut rng = RngState::for_purpose(seed, "data");
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut subset = idx[..k].to_vec();
    subset.sort_unstable();

    let mut values = Vec::with_capacity(num_samples * n);
    let mut labels = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let row: Vec<f64> = (0..n).map(|_| if rng.coin() { 1.0 } else { 0.0 }).collect();
        labels.push(parity_label(&row, &subset));
        values.extend(row);
    }
    let half = num_samples / 2;
    let build = |lo: usize, hi: usize, split| Dataset {
        inputs: Inputs::Bits {
            values: values[lo * n..hi * n].to_vec(),
            dim: n,
        },
        labels: labels[lo..hi].to_vec(),
        num_classes: 2,
        split,
    };
    Ok((
        build(0, half, Split::Train),
        build(half, num_samples, Split::Val),
        subset,
    ))
}

pub fn parity_label(bits: &[f64], subset: &[usize]) -> usize {
    subset.iter().filter(|&&i| bits[i] > 0.5).count() % 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pairs(d: &Dataset) -> Vec<(usize, usize)> {
        match &d.inputs {
            Inputs::Tokens { ids, .. } => ids.chunks(2).map(|c| (c[0], c[1])).collect(),
            Inputs::Bits { .. } => unreachable!(),
        }
    }

    #[test]
    fn train_sizes() {
        assert_eq!(gen_modular(97, ModOp::Add, 1).unwrap().0.len(), 3763);
        assert_eq!(gen_modular(53, ModOp::Add, 1).unwrap().0.len(), 1123);
        assert_eq!(gen_modular(23, ModOp::Add, 1).unwrap().0.len(), 211);
    }

    #[test]
    fn small_modulus_label() {
        let (tr, va) = gen_modular(5, ModOp::Add, 3).unwrap();
        let all: Vec<_> = pairs(&tr)
            .into_iter()
            .zip(tr.labels.clone())
            .chain(pairs(&va).into_iter().zip(va.labels.clone()))
            .collect();
        let (_, y) = all.iter().find(|((a, b), _)| *a == 3 && *b == 4).unwrap();
        assert_eq!(*y, 2);
    }

    #[test]
    fn non_prime_rejected() {
        assert!(gen_modular(91, ModOp::Add, 0).is_err());
        assert!(gen_modular(3, ModOp::Add, 0).is_err());
    }

    #[test]
    fn labels_exhaustive_and_split_disjoint() {
        for p in [5usize, 7, 11, 13, 23, 29, 37, 53, 97] {
            for op in [ModOp::Add, ModOp::Mult] {
                let (tr, va) = gen_modular(p, op, 42).unwrap();
                let mut seen = HashSet::new();
                for d in [&tr, &va] {
                    for ((a, b), y) in pairs(d).into_iter().zip(&d.labels) {
                        assert_eq!(op.apply(a, b, p), *y);
                        assert!(seen.insert((a, b)), "duplicate pair across splits");
                    }
                }
                assert_eq!(seen.len(), p * p);
            }
        }
    }

    #[test]
    fn same_seed_same_split() {
        let a = gen_modular(29, ModOp::Mult, 9).unwrap();
        let b = gen_modular(29, ModOp::Mult, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_modular(29, ModOp::Mult, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn parity_sizes_and_balance() {
        let (tr, va, s) = gen_sparse_parity(20, 3, 4096, 42).unwrap();
        assert_eq!(tr.len(), 2048);
        assert_eq!(va.len(), 2048);
        assert_eq!(s.len(), 3);
        let ones = tr
            .labels
            .iter()
            .chain(&va.labels)
            .filter(|&&y| y == 1)
            .count();
        let frac = ones as f64 / 4096.0;
        assert!((frac - 0.5).abs() < 0.03, "balance {frac}");
    }

    #[test]
    fn parity_single_bit() {
        let mut bits = vec![0.0; 6];
        bits[4] = 1.0;
        assert_eq!(parity_label(&bits, &[4]), 1);
        bits[4] = 0.0;
        assert_eq!(parity_label(&bits, &[4]), 0);
    }

    #[test]
    fn parity_labels_consistent() {
        let (tr, _, s) = gen_sparse_parity(10, 3, 256, 7).unwrap();
        if let Inputs::Bits { values, dim } = &tr.inputs {
            for (row, y) in values.chunks(*dim).zip(&tr.labels) {
                assert_eq!(parity_label(row, &s), *y);
            }
        }
    }

    #[test]
    fn parity_k_above_n_rejected() {
        assert!(gen_sparse_parity(4, 5, 100, 0).is_err());
    }

    #[test]
    fn dump_format() {
        let (tr, _) = gen_modular(5, ModOp::Add, 0).unwrap();
        let text = tr.dump();
        let first = text.lines().next().unwrap();
        let parts: Vec<usize> = first
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(parts.len(), 3);
        assert_eq!((parts[0] + parts[1]) % 5, parts[2]);
        assert_eq!(text.lines().count(), 10);
    }
}
