//! Bulk judgment import and export as CSV.
//!
//! One row per questionnaire answer, with the header
//! `respondent,node,first,second,side,magnitude`. Rows for one respondent
//! and node need not be contiguous.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::questionnaire::{ingest_questionnaire, readback_questionnaire, IngestError, QuestionnaireRow, Side};
use crate::group::JudgmentSet;
use crate::hierarchy::Hierarchy;
use crate::pcm::{JudgmentScale, PairwiseMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvRecord {
    pub respondent: String,
    pub node: String,
    pub first: String,
    pub second: String,
    pub side: Side,
    pub magnitude: u8,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: unknown node `{node}`")]
    UnknownNode { line: u64, node: String },
    #[error("respondent `{respondent}`, node `{node}`: {source}")]
    Ingest {
        respondent: String,
        node: String,
        #[source]
        source: IngestError,
    },
    #[error("respondent `{respondent}`, node `{node}`: {report}")]
    Invalid { respondent: String, node: String, report: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_error(e: csv::Error) -> CsvError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    CsvError::Parse { line, message }
}

/// Reads all records and builds one judgment set per respondent, in order
/// of first appearance.
pub fn import_judgments(
    reader: impl Read,
    h: &Hierarchy,
    scale: JudgmentScale,
) -> Result<Vec<JudgmentSet>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<QuestionnaireRow>>> = BTreeMap::new();
    for result in rdr.deserialize::<CsvRecord>() {
        let rec = result.map_err(parse_error)?;
        if h.children(&rec.node).is_none() {
            let line = rdr.position().line();
            return Err(CsvError::UnknownNode { line, node: rec.node });
        }
        if !grouped.contains_key(&rec.respondent) {
            order.push(rec.respondent.clone());
        }
        grouped
            .entry(rec.respondent)
            .or_default()
            .entry(rec.node)
            .or_default()
            .push(QuestionnaireRow::new(rec.first, rec.second, rec.side, rec.magnitude));
    }
    let mut sets = Vec::with_capacity(order.len());
    for respondent in order {
        let nodes = grouped.remove(&respondent).unwrap_or_default();
        let mut set = JudgmentSet::new(respondent.clone());
        for (node, rows) in nodes {
            let children = h.children(&node).unwrap_or_default();
            let m = ingest_questionnaire(&rows, children).map_err(|source| CsvError::Ingest {
                respondent: respondent.clone(),
                node: node.clone(),
                source,
            })?;
            let report = m.validate(scale);
            if !report.is_empty() {
                return Err(CsvError::Invalid { respondent, node, report: report.to_string() });
            }
            set = set.with_matrix(node, m);
        }
        sets.push(set);
    }
    Ok(sets)
}

/// Writes every matrix of every set as questionnaire rows. Matrices with
/// off-scale entries cannot be expressed and fail.
pub fn export_judgments(writer: impl Write, sets: &[JudgmentSet]) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for set in sets {
        for (node, m) in &set.matrices {
            for row in readback(set, node, m)? {
                wtr.serialize(CsvRecord {
                    respondent: set.respondent_id.clone(),
                    node: node.clone(),
                    first: row.first,
                    second: row.second,
                    side: row.side,
                    magnitude: row.magnitude,
                })
                .map_err(parse_error)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

fn readback(set: &JudgmentSet, node: &str, m: &PairwiseMatrix) -> Result<Vec<QuestionnaireRow>, CsvError> {
    readback_questionnaire(m).map_err(|source| CsvError::Ingest {
        respondent: set.respondent_id.clone(),
        node: node.to_string(),
        source,
    })
}
