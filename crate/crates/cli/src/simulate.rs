//! `simulate`: crossing-time bound checks over a grid file.

use crate::io::{self, GRID_SCHEMA, REPORT_SCHEMA, VALUES_SCHEMA};
use crate::reports::Values;
use anyhow::{anyhow, Context, Result};
use grokking_core::recursion::{bound_grid_over, BoundGrid, BoundReport, RemainderPolicy};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub c1: Vec<f64>,
    #[serde(default = "all_policies")]
    pub policies: Vec<RemainderPolicy>,
    #[serde(default)]
    pub seed: u64,
}

fn all_policies() -> Vec<RemainderPolicy> {
    RemainderPolicy::ALL.to_vec()
}

impl GridFile {
    pub fn parse(text: &str) -> Result<Self> {
        io::check_schema(text, GRID_SCHEMA, "grid file")?;
        toml::from_str(text).map_err(|e| anyhow!("grid file: {e}"))
    }

    pub fn grid(&self) -> BoundGrid {
        BoundGrid {
            eta: self.eta.clone(),
            lambda: self.lambda.clone(),
            c1: self.c1.clone(),
            policies: self.policies.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}

pub fn simulate_values_path(out: &Path) -> PathBuf {
    out.join("reports").join("simulate_values.json")
}

pub fn bound_values(r: &BoundReport) -> Values {
    let mut v = Values::new();
    v.insert("bounds.points".into(), r.points.len() as f64);
    v.insert("bounds.k_fit".into(), r.k_fit);
    for (c1, spread) in &r.scaling_spread {
        v.insert(format!("bounds.spread_c1_{c1}"), *spread);
    }
    v
}

pub fn cmd_simulate(grid: &GridFile, out: &Path) -> Result<BoundReport> {
    let report = bound_grid_over(&grid.grid(), grid.seed).map_err(|e| anyhow!("{e}"))?;
    io::write_json(
        &out.join("reports").join("bounds.json"),
        REPORT_SCHEMA,
        &report,
    )?;
    io::write_json(
        &simulate_values_path(out),
        VALUES_SCHEMA,
        &bound_values(&report),
    )?;
    Ok(report)
}
