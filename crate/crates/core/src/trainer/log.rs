use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const TRAJECTORY_SCHEMA: &str = "# grokking/trajectory v1";
pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "step",
    "V",
    "train_acc",
    "val_acc",
    "train_loss",
    "val_loss",
    "wd_coeff",
    "cos_to_ref",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    #[serde(rename = "V")]
    pub v: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wd_coeff: f64,
    /// Cosine to θ(T_mem); absent before memorisation.
    pub cos_to_ref: Option<f64>,
}

impl LogRow {
    /// α in degrees, when the reference exists.
    pub fn alpha_deg(&self) -> Option<f64> {
        self.cos_to_ref
            .map(|c| c.clamp(-1.0, 1.0).acos().to_degrees())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn row_at(&self, step: u64) -> Option<&LogRow> {
        self.rows
            .binary_search_by_key(&step, |r| r.step)
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Strictly increasing steps with a constant spacing, and V > 0.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        for w in self.rows.windows(2) {
            if w[1].step <= w[0].step {
                return bad(format!("steps not increasing at {}", w[1].step));
            }
        }
        if self.rows.len() > 2 {
            let gap = self.rows[1].step - self.rows[0].step;
            if self.rows.windows(2).any(|w| w[1].step - w[0].step != gap) {
                return bad("uneven logging interval".into());
            }
        }
        if let Some(r) = self.rows.iter().find(|r| !(r.v > 0.0)) {
            return bad(format!("non-positive V at step {}", r.step));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{TRAJECTORY_SCHEMA}").unwrap();
        writeln!(s, "{}", TRAJECTORY_COLUMNS.join("\t")).unwrap();
        for r in &self.rows {
            let cos = r
                .cos_to_ref
                .map_or_else(|| "NA".to_string(), |c| c.to_string());
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.step, r.v, r.train_acc, r.val_acc, r.train_loss, r.val_loss, r.wd_coeff, cos
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(TRAJECTORY_SCHEMA) {
            return Err(Error::Format(
                "missing or unknown trajectory schema line".into(),
            ));
        }
        let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
        if header != TRAJECTORY_COLUMNS {
            return Err(Error::Format("unexpected trajectory header".into()));
        }
        let mut log = TrajectoryLog::default();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let lineno = i + 3;
            if f.len() != TRAJECTORY_COLUMNS.len() {
                return Err(Error::Format(format!(
                    "line {lineno}: expected 8 fields, got {}",
                    f.len()
                )));
            }
            let num = |k: usize| {
                f[k].parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad number {:?}", f[k])))
            };
            log.push(LogRow {
                step: f[0]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad step {:?}", f[0])))?,
                v: num(1)?,
                train_acc: num(2)?,
                val_acc: num(3)?,
                train_loss: num(4)?,
                val_loss: num(5)?,
                wd_coeff: num(6)?,
                cos_to_ref: if f[7] == "NA" { None } else { Some(num(7)?) },
            });
        }
        log.validate()?;
        Ok(log)
    }
}
