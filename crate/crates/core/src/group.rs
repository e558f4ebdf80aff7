//! Panel screening and aggregation.
//!
//! A respondent's questionnaire is kept only when every matrix in it passes
//! the consistency threshold. Survivors are combined either by the geometric
//! mean of their priority vectors (AIP, renormalized) or by the entrywise
//! geometric mean of their matrices (AIJ).

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcm::PairwiseMatrix;
use crate::priority::{
    assess, ConsistencyReport, Method, PriorityError, PriorityVector, RandomIndexTable,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("no vectors or matrices to aggregate")]
    EmptyPanel,
    #[error("labels differ between panel members")]
    LabelMismatch,
    #[error("matrix orders differ between panel members")]
    OrderMismatch,
    #[error("weight for `{0}` is zero")]
    ZeroWeight(String),
    #[error("respondent `{respondent}`, node `{node}`: {source}")]
    Priority {
        respondent: String,
        node: String,
        #[source]
        source: PriorityError,
    },
}

/// One respondent's questionnaire: a matrix per hierarchy node.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentSet {
    pub respondent_id: String,
    /// Organizational tag, e.g. the respondent's bank.
    pub group_id: Option<String>,
    pub matrices: BTreeMap<String, PairwiseMatrix>,
    pub submitted_at: Option<DateTime<Utc>>,
}

impl JudgmentSet {
    pub fn new(respondent_id: impl Into<String>) -> Self {
        Self {
            respondent_id: respondent_id.into(),
            group_id: None,
            matrices: BTreeMap::new(),
            submitted_at: None,
        }
    }

    pub fn with_matrix(mut self, node: impl Into<String>, m: PairwiseMatrix) -> Self {
        self.matrices.insert(node.into(), m);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub respondent_id: String,
    pub node: String,
    pub cr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    pub threshold: f64,
}

impl FilterReport {
    /// Distinct respondents with at least one failing matrix, in input order.
    pub fn rejected_respondents(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rejected {
            if out.last() != Some(&r.respondent_id.as_str()) && !out.contains(&r.respondent_id.as_str()) {
                out.push(&r.respondent_id);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    pub threshold: f64,
    pub method: Method,
    /// Keep a failing respondent's passing matrices instead of dropping the
    /// whole questionnaire.
    pub salvage: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            threshold: crate::priority::DEFAULT_CR_THRESHOLD,
            method: Method::Eigenvector,
            salvage: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub accepted: Vec<JudgmentSet>,
    /// Partially kept questionnaires; only populated when salvaging.
    pub salvaged: Vec<JudgmentSet>,
    pub report: FilterReport,
}

/// Per-node priorities and diagnostics for one respondent.
pub type Assessment = BTreeMap<String, (PriorityVector, ConsistencyReport)>;

pub fn assess_set(
    set: &JudgmentSet,
    method: Method,
    ri: &RandomIndexTable,
    threshold: f64,
) -> Result<Assessment, GroupError> {
    set.matrices
        .iter()
        .map(|(node, m)| {
            assess(m, method, ri, threshold)
                .map(|r| (node.clone(), r))
                .map_err(|source| GroupError::Priority {
                    respondent: set.respondent_id.clone(),
                    node: node.clone(),
                    source,
                })
        })
        .collect()
}

/// Screens respondents by consistency ratio.
pub fn filter_by_cr(
    sets: &[JudgmentSet],
    ri: &RandomIndexTable,
    opts: FilterOptions,
) -> Result<FilterOutcome, GroupError> {
    let assessments: Vec<Assessment> = sets
        .par_iter()
        .map(|s| assess_set(s, opts.method, ri, opts.threshold))
        .collect::<Result<_, _>>()?;

    let mut accepted = Vec::new();
    let mut salvaged = Vec::new();
    let mut rejected = Vec::new();
    for (set, assessment) in sets.iter().zip(&assessments) {
        let failing: Vec<Rejection> = assessment
            .iter()
            .filter(|(_, (_, r))| !r.accepted)
            .map(|(node, (_, r))| Rejection {
                respondent_id: set.respondent_id.clone(),
                node: node.clone(),
                cr: r.cr,
            })
            .collect();
        if failing.is_empty() {
            accepted.push(set.clone());
            continue;
        }
        if opts.salvage {
            let mut kept = set.clone();
            kept.matrices.retain(|node, _| !failing.iter().any(|f| &f.node == node));
            if !kept.matrices.is_empty() {
                salvaged.push(kept);
            }
        }
        rejected.extend(failing);
    }
    let report = FilterReport {
        total: sets.len(),
        accepted: accepted.len(),
        rejected,
        threshold: opts.threshold,
    };
    Ok(FilterOutcome { accepted, salvaged, report })
}

/// Aggregation of individual priorities: componentwise geometric mean,
/// renormalized to sum 1.
pub fn aggregate_priorities_geometric(
    vectors: &[PriorityVector],
) -> Result<PriorityVector, GroupError> {
    let first = vectors.first().ok_or(GroupError::EmptyPanel)?;
    let labels = first.labels();
    for v in vectors {
        if v.labels() != labels {
            return Err(GroupError::LabelMismatch);
        }
        if let Some(k) = v.weights().iter().position(|w| *w <= 0.0) {
            return Err(GroupError::ZeroWeight(labels[k].clone()));
        }
    }
    let count = vectors.len() as f64;
    let raw: Vec<f64> = (0..labels.len())
        .map(|k| (vectors.iter().map(|v| v.weights()[k].ln()).sum::<f64>() / count).exp())
        .collect();
    Ok(PriorityVector::normalized(labels.to_vec(), raw, first.method())
        .expect("geometric means of positive weights are positive"))
}

/// Aggregation of individual judgments: entrywise geometric mean. The
/// result is reciprocal because `ln` turns reciprocals into negation.
pub fn aggregate_judgments_geometric(
    matrices: &[PairwiseMatrix],
) -> Result<PairwiseMatrix, GroupError> {
    let first = matrices.first().ok_or(GroupError::EmptyPanel)?;
    for m in matrices {
        if m.order() != first.order() {
            return Err(GroupError::OrderMismatch);
        }
        if m.labels() != first.labels() {
            return Err(GroupError::LabelMismatch);
        }
    }
    let count = matrices.len() as f64;
    let n = first.order();
    let upper: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (matrices.iter().map(|m| m.get(i, j).ln()).sum::<f64>() / count).exp())
        .collect();
    Ok(PairwiseMatrix::from_upper_values(Arc::clone(&first.shared_labels()), &upper)
        .expect("geometric means of positive entries are positive"))
}

/// Group priorities for every node, after screening.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPriorities {
    pub nodes: BTreeMap<String, PriorityVector>,
    pub report: FilterReport,
    /// Respondents contributing to each node.
    pub contributors: BTreeMap<String, usize>,
}

/// Derive → screen → AIP per node. Respondents are reduced in
/// `respondent_id` order so the floating-point result is independent of
/// input order.
pub fn group_priorities(
    sets: &[JudgmentSet],
    ri: &RandomIndexTable,
    opts: FilterOptions,
) -> Result<GroupPriorities, GroupError> {
    let outcome = filter_by_cr(sets, ri, opts)?;
    let mut pool: Vec<&JudgmentSet> = outcome.accepted.iter().chain(&outcome.salvaged).collect();
    pool.sort_by(|a, b| a.respondent_id.cmp(&b.respondent_id));

    let mut per_node: BTreeMap<String, Vec<PriorityVector>> = BTreeMap::new();
    for set in pool {
        for (node, (w, _)) in assess_set(set, opts.method, ri, opts.threshold)? {
            per_node.entry(node).or_default().push(w);
        }
    }
    let mut nodes = BTreeMap::new();
    let mut contributors = BTreeMap::new();
    for (node, vectors) in per_node {
        contributors.insert(node.clone(), vectors.len());
        nodes.insert(node, aggregate_priorities_geometric(&vectors)?);
    }
    Ok(GroupPriorities { nodes, report: outcome.report, contributors })
}
