//! Two-sided 9…1…9 questionnaire rows.
//!
//! A row compares `first` against `second`. A mark on the first component's
//! side means the first is preferred, so `X(first, second) = magnitude`; a
//! mark on the second side gives `X(first, second) = 1/magnitude`. A
//! magnitude of 1 means equal preference whatever the side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcm::{JudgmentScale, PairwiseMatrix, PcmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireRow {
    pub first: String,
    pub second: String,
    pub side: Side,
    pub magnitude: u8,
}

impl QuestionnaireRow {
    pub fn new(first: impl Into<String>, second: impl Into<String>, side: Side, magnitude: u8) -> Self {
        Self { first: first.into(), second: second.into(), side, magnitude }
    }

    /// `X(first, second)` encoded by this row.
    pub fn value(&self) -> f64 {
        match self.side {
            Side::First => f64::from(self.magnitude),
            Side::Second => 1.0 / f64::from(self.magnitude),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("magnitude {0} is outside 1..=9")]
    BadMagnitude(u8),
    #[error("`{0}` is not compared at this node")]
    UnknownComponent(String),
    #[error("`{0}` is compared with itself")]
    SelfComparison(String),
    #[error("no row compares `{first}` and `{second}`")]
    MissingPair { first: String, second: String },
    #[error("`{first}` and `{second}` are compared more than once")]
    DuplicatePair { first: String, second: String },
    #[error("entry ({first}, {second}) = {value} is not a scale level")]
    OffScale { first: String, second: String, value: f64 },
    #[error(transparent)]
    Matrix(#[from] PcmError),
}

/// Builds the matrix for a node whose children are `components`, in that
/// order. Rows may name a pair in either orientation but each unordered
/// pair must appear exactly once.
pub fn ingest_questionnaire(
    rows: &[QuestionnaireRow],
    components: &[String],
) -> Result<PairwiseMatrix, IngestError> {
    let index: BTreeMap<&str, usize> =
        components.iter().enumerate().map(|(k, c)| (c.as_str(), k)).collect();
    let n = components.len();
    let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for row in rows {
        if !(1..=9).contains(&row.magnitude) {
            return Err(IngestError::BadMagnitude(row.magnitude));
        }
        let a = *index
            .get(row.first.as_str())
            .ok_or_else(|| IngestError::UnknownComponent(row.first.clone()))?;
        let b = *index
            .get(row.second.as_str())
            .ok_or_else(|| IngestError::UnknownComponent(row.second.clone()))?;
        if a == b {
            return Err(IngestError::SelfComparison(row.first.clone()));
        }
        let (key, value) = if a < b { ((a, b), row.value()) } else { ((b, a), 1.0 / row.value()) };
        if upper.insert(key, value).is_some() {
            return Err(IngestError::DuplicatePair {
                first: components[key.0].clone(),
                second: components[key.1].clone(),
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !upper.contains_key(&(i, j)) {
                return Err(IngestError::MissingPair {
                    first: components[i].clone(),
                    second: components[j].clone(),
                });
            }
        }
    }
    let triples: Vec<(usize, usize, f64)> = upper.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    Ok(PairwiseMatrix::from_upper_triangle(components.to_vec(), &triples)?)
}

/// Rows for the upper triangle of `m`, `first` being the earlier node.
/// Equal judgments read back as `(first, 1)`.
pub fn readback_questionnaire(m: &PairwiseMatrix) -> Result<Vec<QuestionnaireRow>, IngestError> {
    let labels = m.labels();
    m.upper_triangle()
        .into_iter()
        .map(|(i, j, value)| {
            let (magnitude, direct) = JudgmentScale::level_of(value).ok_or_else(|| IngestError::OffScale {
                first: labels[i].clone(),
                second: labels[j].clone(),
                value,
            })?;
            let side = if direct { Side::First } else { Side::Second };
            Ok(QuestionnaireRow::new(labels[i].clone(), labels[j].clone(), side, magnitude))
        })
        .collect()
}
