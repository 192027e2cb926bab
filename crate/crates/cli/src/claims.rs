//! Claims files and `verify`.

use crate::campaign::Scope;
use crate::io::{self, CLAIMS_SCHEMA, TABLE_SCHEMA};
use crate::reports::{load_values, values_path, Values};
use crate::simulate::simulate_values_path;
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// |value − target| ≤ tolerance.
    #[default]
    Approx,
    /// value ≤ target + tolerance.
    Le,
    /// value ≥ target − tolerance.
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub id: String,
    /// Key in the emitted values.
    pub key: String,
    pub target: f64,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub relation: Relation,
    pub source: String,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimsFile {
    #[serde(default, rename = "claim")]
    pub claims: Vec<Claim>,
}

impl ClaimsFile {
    pub fn parse(text: &str) -> Result<Self> {
        io::check_schema(text, CLAIMS_SCHEMA, "claims file")?;
        let f: ClaimsFile = toml::from_str(text).map_err(|e| anyhow!("claims file: {e}"))?;
        let mut ids = BTreeSet::new();
        for c in &f.claims {
            if !ids.insert(&c.id) {
                bail!("duplicate claim id {:?}", c.id);
            }
            if !(c.target.is_finite() && c.tolerance >= 0.0) {
                bail!("claim {:?}: target must be finite and tolerance ≥ 0", c.id);
            }
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub id: String,
    pub key: String,
    pub value: Option<f64>,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub results: Vec<ClaimResult>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn table(&self) -> String {
        let mut s = String::from("claim\tkey\tvalue\tverdict\tdetail\n");
        for r in &self.results {
            let v = r.value.map_or("NA".to_string(), |v| format!("{v}"));
            let verdict = match r.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Skipped => "SKIP",
            };
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.id, r.key, v, verdict, r.detail
            ));
        }
        s
    }
}

pub fn check_claim(claim: &Claim, values: &Values) -> ClaimResult {
    let value = values.get(&claim.key).copied();
    let (verdict, detail) = match value {
        None => (Verdict::Fail, format!("missing key {}", claim.key)),
        Some(v) => {
            let (ok, rule) = match claim.relation {
                Relation::Approx => (
                    (v - claim.target).abs() <= claim.tolerance,
                    format!("|v − {}| ≤ {}", claim.target, claim.tolerance),
                ),
                Relation::Le => (
                    v <= claim.target + claim.tolerance,
                    format!("v ≤ {} + {}", claim.target, claim.tolerance),
                ),
                Relation::Ge => (
                    v >= claim.target - claim.tolerance,
                    format!("v ≥ {} − {}", claim.target, claim.tolerance),
                ),
            };
            (if ok { Verdict::Pass } else { Verdict::Fail }, rule)
        }
    };
    ClaimResult {
        id: claim.id.clone(),
        key: claim.key.clone(),
        value,
        verdict,
        detail,
    }
}

/// Values emitted under `out` by `analyze` and, if it ran, `simulate`.
pub fn collect_values(out: &Path) -> Result<Values> {
    let mut values = Values::new();
    let analyzed = values_path(out);
    let simulated = simulate_values_path(out);
    if !analyzed.exists() && !simulated.exists() {
        bail!(
            "no emitted values under {}; run `analyze` or `simulate` first",
            out.display()
        );
    }
    for p in [analyzed, simulated] {
        if p.exists() {
            values.extend(load_values(&p)?);
        }
    }
    Ok(values)
}

/// Desk claims are always checked; full claims only under `Scope::Full` or when the values come from a full campaign.
pub fn verify(claims: &ClaimsFile, values: &Values, scope: Scope) -> VerifyReport {
    let mut warnings = Vec::new();
    if claims.claims.is_empty() {
        warnings.push("claims file is empty; nothing to verify".into());
    }
    let full = scope == Scope::Full || values.get("meta.scope_full") == Some(&1.0);
    let results = claims
        .claims
        .iter()
        .map(|c| {
            if c.scope == Scope::Full && !full {
                ClaimResult {
                    id: c.id.clone(),
                    key: c.key.clone(),
                    value: values.get(&c.key).copied(),
                    verdict: Verdict::Skipped,
                    detail: "full-scope claim; no full campaign".into(),
                }
            } else {
                check_claim(c, values)
            }
        })
        .collect();
    VerifyReport { results, warnings }
}

pub fn cmd_verify(out: &Path, claims_path: &Path, scope: Scope) -> Result<VerifyReport> {
    let claims = ClaimsFile::load(claims_path)?;
    let values = collect_values(out)?;
    let report = verify(&claims, &values, scope);
    io::write_versioned(
        &out.join("reports").join("verify.tsv"),
        TABLE_SCHEMA,
        &report.table(),
    )?;
    Ok(report)
}
