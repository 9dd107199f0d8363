//! Evaluation summary tables.
//!
//! A [`ReportTable`] collects per-family metrics for one or more labeled
//! policy variants (for example nominal versus widened dynamics) plus a
//! `mean` aggregate row per variant. The CSV form rounds errors to
//! millimeters (three decimals) and rates to two decimals; values are
//! rounded once at insertion, so dumping and re-parsing a table is
//! lossless.

use crate::eval::FamilyEval;
use std::fmt::Write as _;
use thiserror::Error;

/// Family label of the per-variant aggregate row.
pub const MEAN_ROW: &str = "mean";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    /// Trajectory family name, or [`MEAN_ROW`] for the aggregate.
    pub family: String,
    pub episodes: usize,
    /// Steady-state tracking error, meters, rounded to 1e-3.
    pub steady_error: f64,
    /// Whole-episode tracking error, meters, rounded to 1e-3.
    pub overall_error: f64,
    /// Grasp success rate in [0, 1], rounded to 1e-2.
    pub grasp_rate: f64,
    /// Mean episode return, rounded to 1e-2.
    pub mean_return: f64,
}

fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one row per family and a `mean` aggregate row (unweighted
    /// mean over the families) under the given variant label.
    pub fn add_section(&mut self, variant: &str, rows: &[FamilyEval]) {
        for r in rows {
            self.rows.push(ReportRow {
                variant: variant.to_string(),
                family: r.family.name().to_string(),
                episodes: r.episodes,
                steady_error: round_to(r.steady_error, 3),
                overall_error: round_to(r.overall_error, 3),
                grasp_rate: round_to(r.grasp_rate, 2),
                mean_return: round_to(r.mean_return, 2),
            });
        }
        if !rows.is_empty() {
            let n = rows.len() as f64;
            self.rows.push(ReportRow {
                variant: variant.to_string(),
                family: MEAN_ROW.to_string(),
                episodes: rows.iter().map(|r| r.episodes).sum(),
                steady_error: round_to(rows.iter().map(|r| r.steady_error).sum::<f64>() / n, 3),
                overall_error: round_to(rows.iter().map(|r| r.overall_error).sum::<f64>() / n, 3),
                grasp_rate: round_to(rows.iter().map(|r| r.grasp_rate).sum::<f64>() / n, 2),
                mean_return: round_to(rows.iter().map(|r| r.mean_return).sum::<f64>() / n, 2),
            });
        }
    }

    pub fn get(&self, variant: &str, family: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.family == family)
    }

    pub fn variants(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.variant.as_str()) {
                seen.push(r.variant.as_str());
            }
        }
        seen
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "variant,family,episodes,steady_error_m,overall_error_m,grasp_rate,mean_return\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.3},{:.3},{:.2},{:.2}",
                r.variant,
                r.family,
                r.episodes,
                r.steady_error,
                r.overall_error,
                r.grasp_rate,
                r.mean_return
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ReportError::Parse("empty report".into()))?;
        if header.trim()
            != "variant,family,episodes,steady_error_m,overall_error_m,grasp_rate,mean_return"
        {
            return Err(ReportError::Parse(format!("unexpected header `{header}`")));
        }
        let mut table = ReportTable::new();
        for line in lines {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 7 {
                return Err(ReportError::Parse(format!(
                    "expected 7 fields, got {} in `{line}`",
                    fields.len()
                )));
            }
            let num = |i: usize| {
                fields[i]
                    .parse::<f64>()
                    .map_err(|e| ReportError::Parse(format!("bad number `{}`: {e}", fields[i])))
            };
            table.rows.push(ReportRow {
                variant: fields[0].to_string(),
                family: fields[1].to_string(),
                episodes: fields[2]
                    .parse::<usize>()
                    .map_err(|e| ReportError::Parse(format!("bad episodes `{}`: {e}", fields[2])))?,
                steady_error: num(3)?,
                overall_error: num(4)?,
                grasp_rate: num(5)?,
                mean_return: num(6)?,
            });
        }
        Ok(table)
    }

    /// Fixed-width rendering for terminals.
    pub fn to_pretty(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:<17} {:>8} {:>10} {:>10} {:>7} {:>9}",
            "variant", "family", "episodes", "steady_m", "overall_m", "grasp", "return"
        );
        let _ = writeln!(s, "{}", "-".repeat(80));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14} {:<17} {:>8} {:>10.3} {:>10.3} {:>7.2} {:>9.2}",
                r.variant, r.family, r.episodes, r.steady_error, r.overall_error, r.grasp_rate, r.mean_return
            );
        }
        s
    }
}
