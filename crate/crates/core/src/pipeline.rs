//! End-to-end computation over a loaded study.
//!
//! For each judgment node the local vector comes from the study's direct
//! priorities when given, otherwise from the screened panel's aggregated
//! judgments.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::group::{group_priorities, FilterOptions, FilterReport, GroupError};
use crate::hierarchy::{
    rollup_mean, synthesize, GlobalScores, GroupRollup, HierarchyError, LocalPriorities,
};
use crate::io::study::Study;
use crate::priority::{Method, PriorityVector, RandomIndexTable};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no judgments and no direct priorities")]
    EmptyPanel,
    #[error("no accepted judgments for node `{0}`")]
    MissingNode(String),
    #[error("hierarchy has no alternatives")]
    NoAlternatives,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Results {
    pub study: String,
    pub method: Method,
    /// Present when any node was derived from judgments.
    pub filter: Option<FilterReport>,
    pub criteria_weights: PriorityVector,
    /// Empty for a weights-only study.
    pub per_criterion: BTreeMap<String, PriorityVector>,
    pub scores: Option<GlobalScores>,
    pub rollup: Option<GroupRollup>,
}

impl Results {
    pub fn local_priorities(&self) -> LocalPriorities {
        LocalPriorities {
            criteria_weights: self.criteria_weights.clone(),
            per_criterion: self.per_criterion.clone(),
        }
    }
}

/// Filter options from the study's configuration.
pub fn filter_options(study: &Study) -> FilterOptions {
    FilterOptions {
        threshold: study.config.threshold,
        method: study.config.method,
        salvage: study.config.salvage,
    }
}

/// Weights for every judgment node, and synthesis when the study has
/// alternatives.
pub fn compute(
    study: &Study,
    ri: &RandomIndexTable,
    opts: FilterOptions,
) -> Result<Results, PipelineError> {
    let h = &study.hierarchy;
    let direct = study.direct.as_ref();
    let nodes = h.judgment_nodes();

    let needs_judgments = nodes.iter().any(|node| !has_direct(study, node));
    let group = if needs_judgments {
        if study.judgments.is_empty() {
            return Err(PipelineError::EmptyPanel);
        }
        Some(group_priorities(&study.judgments, ri, opts)?)
    } else {
        None
    };

    let from_group = |node: &str| -> Result<PriorityVector, PipelineError> {
        group
            .as_ref()
            .and_then(|g| g.nodes.get(node).cloned())
            .ok_or_else(|| PipelineError::MissingNode(node.to_string()))
    };
    let direct_vector = |labels: &[String], values: &BTreeMap<String, f64>, what: &str| {
        let raw: Vec<f64> = labels.iter().map(|l| values[l]).collect();
        PriorityVector::normalized(labels.to_vec(), raw, opts.method).ok_or_else(|| {
            HierarchyError::ShapeMismatch(format!("{what}: priorities must not all be zero"))
        })
    };

    let criteria_weights = match direct.and_then(|d| d.criteria_weights.as_ref()) {
        Some(w) => direct_vector(&h.criteria, w, "criteria weights")?,
        None => from_group(&h.goal)?,
    };
    let mut per_criterion = BTreeMap::new();
    if !h.alternatives.is_empty() {
        for c in &h.criteria {
            let v = match direct.and_then(|d| d.per_criterion.get(c)) {
                Some(values) => direct_vector(&h.alternatives, values, c)?,
                None => from_group(c)?,
            };
            per_criterion.insert(c.clone(), v);
        }
    }

    let mut results = Results {
        study: study.name.clone(),
        method: opts.method,
        filter: group.map(|g| g.report),
        criteria_weights,
        per_criterion,
        scores: None,
        rollup: None,
    };
    if !h.alternatives.is_empty() {
        let scores = synthesize(h, &results.local_priorities())?;
        if !study.groups.is_empty() {
            results.rollup = Some(rollup_mean(&scores, &study.groups)?);
        }
        results.scores = Some(scores);
    }
    Ok(results)
}

fn has_direct(study: &Study, node: &str) -> bool {
    let Some(d) = &study.direct else { return false };
    if node == study.hierarchy.goal {
        d.criteria_weights.is_some()
    } else {
        d.per_criterion.contains_key(node)
    }
}

/// Like [`compute`] but requires alternatives.
pub fn compute_synthesis(
    study: &Study,
    ri: &RandomIndexTable,
    opts: FilterOptions,
) -> Result<Results, PipelineError> {
    if study.hierarchy.alternatives.is_empty() {
        return Err(PipelineError::NoAlternatives);
    }
    compute(study, ri, opts)
}
