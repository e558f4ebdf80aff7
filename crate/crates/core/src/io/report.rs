//! Result reports: a JSON document and a plain-text table rendering.
//!
//! Stored numbers are exact; every displayed figure is rounded half-up to
//! three decimals at render time. Totals are displays of exact sums, not
//! sums of displayed figures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::group::FilterReport;
use crate::hierarchy::{display, GroupRank};
use crate::pipeline::Results;
use crate::priority::Method;

pub const REPORT_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub rank: usize,
    pub name: String,
    pub weight: Real,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub alternative: String,
    /// Local priorities, one per grid column.
    pub local: Vec<Real>,
    pub score: Real,
}

/// Alternatives × criteria; columns follow the criteria ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub columns: Vec<String>,
    pub rows: Vec<GridRow>,
    pub column_totals: Vec<Real>,
    pub score_total: Real,
    /// Alternatives by descending global score.
    pub ranking: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub rank: usize,
    pub group: String,
    pub members: Vec<String>,
    pub mean: Real,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSummary {
    pub total: usize,
    pub accepted: usize,
    pub threshold: Real,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub respondent_id: String,
    pub node: String,
    pub cr: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u64,
    pub study: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningSummary>,
    pub criteria: Vec<CriterionRow>,
    pub criteria_total: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<ScoreGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupRow>,
}

fn screening(f: &FilterReport) -> ScreeningSummary {
    ScreeningSummary {
        total: f.total,
        accepted: f.accepted,
        threshold: Real(f.threshold),
        rejected: f
            .rejected
            .iter()
            .map(|r| RejectedRow { respondent_id: r.respondent_id.clone(), node: r.node.clone(), cr: Real(r.cr) })
            .collect(),
    }
}

pub fn emit_report(results: &Results) -> Report {
    let cw = &results.criteria_weights;
    let order = cw.ranking();
    let criteria: Vec<CriterionRow> = order
        .iter()
        .enumerate()
        .map(|(k, &i)| CriterionRow {
            rank: k + 1,
            name: cw.labels()[i].clone(),
            weight: Real(cw.weights()[i]),
            display: display(cw.weights()[i]),
        })
        .collect();

    let grid = results.scores.as_ref().map(|scores| {
        let columns: Vec<String> = order.iter().map(|&i| cw.labels()[i].clone()).collect();
        let alternatives: Vec<String> = results
            .per_criterion
            .values()
            .next()
            .map(|v| v.labels().to_vec())
            .unwrap_or_default();
        let rows: Vec<GridRow> = alternatives
            .iter()
            .enumerate()
            .map(|(a, name)| GridRow {
                alternative: name.clone(),
                local: columns.iter().map(|c| Real(results.per_criterion[c].weights()[a])).collect(),
                score: Real(scores.scores[name]),
            })
            .collect();
        let column_totals = columns
            .iter()
            .map(|c| Real(results.per_criterion[c].weights().iter().sum()))
            .collect();
        ScoreGrid {
            columns,
            rows,
            column_totals,
            score_total: Real(scores.total()),
            ranking: scores.ranking.clone(),
        }
    });

    let groups = results
        .rollup
        .as_ref()
        .map(|r| {
            r.ranking
                .iter()
                .map(|GroupRank { group, mean, display, rank }| GroupRow {
                    rank: *rank,
                    group: group.clone(),
                    members: r.groups[group].clone(),
                    mean: Real(*mean),
                    display: display.clone(),
                })
                .collect()
        })
        .unwrap_or_default();

    Report {
        schema_version: REPORT_SCHEMA_VERSION,
        study: results.study.clone(),
        method: results.method,
        screening: results.filter.as_ref().map(screening),
        criteria,
        criteria_total: Real(cw.weights().iter().sum()),
        grid,
        groups,
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable tables.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if !self.study.is_empty() {
            let _ = writeln!(out, "{}\n", self.study);
        }
        if let Some(s) = &self.screening {
            let _ = writeln!(
                out,
                "Screening: {} of {} questionnaires accepted (CR <= {})",
                s.accepted,
                s.total,
                display(s.threshold.0)
            );
            for r in &s.rejected {
                let _ = writeln!(out, "  rejected {} at {} (CR {})", r.respondent_id, r.node, display(r.cr.0));
            }
            out.push('\n');
        }

        let width = self.criteria.iter().map(|c| c.name.len()).max().unwrap_or(0).max(9);
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>6}", "Rank", "Criterion", "Weight");
        for c in &self.criteria {
            let _ = writeln!(out, "{:>4}  {:<width$}  {:>6}", c.rank, c.name, c.display);
        }
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>6}", "", "Total", display(self.criteria_total.0));

        if let Some(g) = &self.grid {
            out.push('\n');
            let aw = g.rows.iter().map(|r| r.alternative.len()).max().unwrap_or(0).max(5);
            let cols: Vec<usize> = g.columns.iter().map(|c| c.len().max(5)).collect();
            let _ = write!(out, "{:<aw$}", "");
            for (c, w) in g.columns.iter().zip(&cols) {
                let _ = write!(out, "  {c:>w$}");
            }
            let _ = writeln!(out, "  {:>7}", "Overall");
            for r in &g.rows {
                let _ = write!(out, "{:<aw$}", r.alternative);
                for (v, w) in r.local.iter().zip(&cols) {
                    let _ = write!(out, "  {:>w$}", display(v.0));
                }
                let _ = writeln!(out, "  {:>7}", display(r.score.0));
            }
            let _ = write!(out, "{:<aw$}", "Total");
            for (v, w) in g.column_totals.iter().zip(&cols) {
                let _ = write!(out, "  {:>w$}", display(v.0));
            }
            let _ = writeln!(out, "  {:>7}", display(g.score_total.0));
        }

        if !self.groups.is_empty() {
            out.push('\n');
            let gw = self.groups.iter().map(|g| g.group.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(out, "{:>4}  {:<gw$}  {:>6}  Members", "Rank", "Group", "Mean");
            for g in &self.groups {
                let _ = writeln!(out, "{:>4}  {:<gw$}  {:>6}  {}", g.rank, g.group, g.display, g.members.join(", "));
            }
        }
        out
    }
}
