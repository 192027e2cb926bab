//! Named views into the flat parameter vector.

use serde::{Deserialize, Serialize};
use std::ops::Range;

/// How a parameter block is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    total: usize,
}

impl ParamLayout {
    pub(crate) fn push(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        kind: ParamKind,
    ) -> Range<usize> {
        let entry = ParamEntry {
            name: name.into(),
            offset: self.total,
            shape: shape.to_vec(),
            kind,
        };
        let r = entry.range();
        self.total = r.end;
        self.entries.push(entry);
        r
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.get(name).map(ParamEntry::range)
    }

    /// Splits a flat vector into named blocks.
    pub fn unflatten(&self, flat: &[f64]) -> Vec<(String, Vec<f64>)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), flat[e.range()].to_vec()))
            .collect()
    }

    /// Inverse of [`ParamLayout::unflatten`]; names and lengths must match the layout.
    pub fn flatten(&self, named: &[(String, Vec<f64>)]) -> crate::Result<Vec<f64>> {
        if named.len() != self.entries.len() {
            return Err(crate::error::invalid(format!(
                "expected {} parameter blocks, got {}",
                self.entries.len(),
                named.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.total);
        for (e, (name, values)) in self.entries.iter().zip(named) {
            if *name != e.name || values.len() != e.len() {
                return Err(crate::error::invalid(format!(
                    "parameter block {name} does not match layout entry {}",
                    e.name
                )));
            }
            flat.extend_from_slice(values);
        }
        Ok(flat)
    }
}

/// Two disjoint mutable windows of the same buffer.
pub(crate) fn pair_mut(
    v: &mut [f64],
    a: Range<usize>,
    b: Range<usize>,
) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (lo, hi) = v.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}
