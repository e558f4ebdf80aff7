//! The versioned JSON study document.
//!
//! A study file carries the hierarchy, the Delphi item pool, the panel
//! roster, Delphi round records, judgment sets, optional directly-entered
//! local priorities, alternative groups and configuration. Parsing checks
//! every cross-reference and collects all problems before failing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::real::Real;
use crate::delphi::{
    Ballot, DelphiConfig, DelphiError, DelphiRound, DelphiStudy, ItemPool, Panel, PoolItem,
    RoundStatus, DEFAULT_MAX_ROUNDS, DEFAULT_RETENTION_FRACTION,
};
use crate::group::JudgmentSet;
use crate::hierarchy::Hierarchy;
use crate::pcm::{pair_count, JudgmentScale, PairwiseMatrix};
use crate::priority::{
    Method, RandomIndexTable, RiProvenance, DEFAULT_CR_THRESHOLD,
};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Field path, e.g. `judgments[2].matrices.Resources`.
    pub path: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    DanglingReference { name: String },
    Duplicate { name: String },
    Invalid(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::DanglingReference { name } => {
                write!(f, "{}: unknown reference `{name}`", self.path)
            }
            ViolationKind::Duplicate { name } => write!(f, "{}: duplicate `{name}`", self.path),
            ViolationKind::Invalid(msg) => write!(f, "{}: {msg}", self.path),
        }
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("schema violation at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("unsupported schema version {0:?} (expected {SCHEMA_VERSION})")]
    VersionUnsupported(Option<u64>),
    #[error("{}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl StudyError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            StudyError::Invalid(v) => v,
            _ => &[],
        }
    }

    /// First dangling reference, if any.
    pub fn dangling(&self) -> Option<&str> {
        self.violations().iter().find_map(|v| match &v.kind {
            ViolationKind::DanglingReference { name } => Some(name.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelMember {
    pub id: String,
    /// Opaque pre-issued credential for the session service.
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RiSource {
    Builtin,
    Inline(RandomIndexTable),
    /// Path to a table document, relative to the study file.
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub threshold: f64,
    pub retention_fraction: f64,
    pub max_rounds: usize,
    pub method: Method,
    pub salvage: bool,
    pub strict_scale: bool,
    pub ri: RiSource,
    pub facilitator_token: Option<String>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_CR_THRESHOLD,
            retention_fraction: DEFAULT_RETENTION_FRACTION,
            max_rounds: DEFAULT_MAX_ROUNDS,
            method: Method::Eigenvector,
            salvage: false,
            strict_scale: true,
            ri: RiSource::Builtin,
            facilitator_token: None,
        }
    }
}

/// Local priorities typed in as numbers rather than derived from matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectPriorities {
    pub criteria_weights: Option<BTreeMap<String, f64>>,
    /// criterion → alternative → priority.
    pub per_criterion: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub name: String,
    pub hierarchy: Hierarchy,
    pub pool: ItemPool,
    pub panel: Vec<PanelMember>,
    pub rounds: Vec<DelphiRound>,
    pub judgments: Vec<JudgmentSet>,
    pub direct: Option<DirectPriorities>,
    pub groups: BTreeMap<String, Vec<String>>,
    pub config: StudyConfig,
}

impl Study {
    pub fn new(name: impl Into<String>, hierarchy: Hierarchy) -> Self {
        Self {
            name: name.into(),
            hierarchy,
            pool: ItemPool::default(),
            panel: Vec::new(),
            rounds: Vec::new(),
            judgments: Vec::new(),
            direct: None,
            groups: BTreeMap::new(),
            config: StudyConfig::default(),
        }
    }

    pub fn scale(&self) -> JudgmentScale {
        JudgmentScale { strict: self.config.strict_scale }
    }

    pub fn expert_for_token(&self, token: &str) -> Option<&str> {
        self.panel
            .iter()
            .find(|m| m.token.as_deref() == Some(token))
            .map(|m| m.id.as_str())
    }

    pub fn delphi(&self) -> Result<DelphiStudy, DelphiError> {
        let panel = Panel::new(self.panel.iter().map(|m| m.id.clone()).collect())?;
        let config = DelphiConfig {
            retention_fraction: self.config.retention_fraction,
            max_rounds: self.config.max_rounds,
        };
        let mut d = DelphiStudy::new(self.pool.clone(), panel, config)?;
        d.rounds = self.rounds.clone();
        Ok(d)
    }

    pub fn store_delphi(&mut self, d: &DelphiStudy) {
        self.rounds = d.rounds.clone();
    }

    /// Loads the configured random index table. File references resolve
    /// against `base_dir`.
    pub fn ri_table(&self, base_dir: Option<&Path>) -> Result<RandomIndexTable, StudyError> {
        match &self.config.ri {
            RiSource::Builtin => Ok(RandomIndexTable::builtin()),
            RiSource::Inline(t) => Ok(t.clone()),
            RiSource::File(p) => {
                let path = base_dir.map(|b| b.join(p)).unwrap_or_else(|| PathBuf::from(p));
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| StudyError::Io { path: path.clone(), source })?;
                parse_ri_table(&text)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// wire format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyDoc {
    schema_version: u64,
    #[serde(default)]
    name: String,
    hierarchy: Hierarchy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    item_pool: Vec<PoolItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    panel: Vec<PanelDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    delphi_rounds: Vec<RoundDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    judgments: Vec<JudgmentDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    local_priorities: Option<DirectDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    groups: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    config: ConfigDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PanelDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackDoc {
    #[serde(default)]
    counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    comments: Vec<String>,
    #[serde(default)]
    voters: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoundDoc {
    round_number: usize,
    status: RoundStatus,
    #[serde(default)]
    feedback: FeedbackDoc,
    #[serde(default)]
    votes: BTreeMap<String, Ballot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    retained: Option<BTreeSet<String>>,
    #[serde(default)]
    converged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    /// Row-major strict upper triangle.
    upper: Vec<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgmentDoc {
    respondent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    submitted_at: Option<DateTime<Utc>>,
    matrices: BTreeMap<String, MatrixDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    criteria_weights: Option<BTreeMap<String, Real>>,
    #[serde(default)]
    alternatives: BTreeMap<String, BTreeMap<String, Real>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RiDoc {
    Named(String),
    Table(RiTableDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RiTableDoc {
    pub(crate) provenance: RiProvenance,
    pub(crate) values: Vec<Real>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default = "default_threshold")]
    threshold: Real,
    #[serde(default = "default_fraction")]
    retention_fraction: Real,
    #[serde(default = "default_max_rounds")]
    max_rounds: usize,
    #[serde(default)]
    method: Method,
    #[serde(default)]
    salvage: bool,
    #[serde(default = "default_true")]
    strict_scale: bool,
    /// `"builtin"`, a path to a table file, or an inline table.
    #[serde(default = "default_ri")]
    ri_table: RiDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    facilitator_token: Option<String>,
}

fn default_threshold() -> Real {
    Real(DEFAULT_CR_THRESHOLD)
}
fn default_fraction() -> Real {
    Real(DEFAULT_RETENTION_FRACTION)
}
fn default_max_rounds() -> usize {
    DEFAULT_MAX_ROUNDS
}
fn default_true() -> bool {
    true
}
fn default_ri() -> RiDoc {
    RiDoc::Named("builtin".into())
}

impl Default for ConfigDoc {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            retention_fraction: default_fraction(),
            max_rounds: default_max_rounds(),
            method: Method::Eigenvector,
            salvage: false,
            strict_scale: true,
            ri_table: default_ri(),
            facilitator_token: None,
        }
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u64>,
}

fn schema_error(e: serde_json::Error) -> StudyError {
    StudyError::Schema { line: e.line(), column: e.column(), message: e.to_string() }
}

// ---------------------------------------------------------------------------
// parse

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, path: impl Into<String>, kind: ViolationKind) {
        self.violations.push(Violation { path: path.into(), kind });
    }

    fn dangling(&mut self, path: impl Into<String>, name: &str) {
        self.push(path, ViolationKind::DanglingReference { name: name.to_string() });
    }

    fn invalid(&mut self, path: impl Into<String>, msg: impl Into<String>) {
        self.push(path, ViolationKind::Invalid(msg.into()));
    }
}

pub fn parse_study(document: &str) -> Result<Study, StudyError> {
    let probe: VersionProbe = serde_json::from_str(document).map_err(schema_error)?;
    match probe.schema_version {
        Some(SCHEMA_VERSION) => {}
        other => return Err(StudyError::VersionUnsupported(other)),
    }
    let doc: StudyDoc = serde_json::from_str(document).map_err(schema_error)?;
    from_doc(doc)
}

pub fn load_study(path: &Path) -> Result<Study, StudyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| StudyError::Io { path: path.to_path_buf(), source })?;
    parse_study(&text)
}

fn from_doc(doc: StudyDoc) -> Result<Study, StudyError> {
    let mut ck = Checker { violations: Vec::new() };

    if let Err(e) = doc.hierarchy.check() {
        ck.invalid("hierarchy", e.to_string());
        return Err(StudyError::Invalid(ck.violations));
    }
    let h = doc.hierarchy;

    let pool = match ItemPool::new(doc.item_pool) {
        Ok(p) => p,
        Err(e) => {
            ck.invalid("item_pool", e.to_string());
            ItemPool::default()
        }
    };

    let mut ids = BTreeSet::new();
    let mut tokens = BTreeSet::new();
    let mut panel = Vec::with_capacity(doc.panel.len());
    for (k, m) in doc.panel.into_iter().enumerate() {
        if !ids.insert(m.id.clone()) {
            ck.push(format!("panel[{k}].id"), ViolationKind::Duplicate { name: m.id.clone() });
        }
        if let Some(t) = &m.token {
            if !tokens.insert(t.clone()) {
                ck.push(format!("panel[{k}].token"), ViolationKind::Duplicate { name: format!("token of {}", m.id) });
            }
        }
        panel.push(PanelMember { id: m.id, token: m.token });
    }

    let config = config_from_doc(doc.config, &mut ck);

    let mut rounds = Vec::with_capacity(doc.delphi_rounds.len());
    for (k, r) in doc.delphi_rounds.into_iter().enumerate() {
        let path = format!("delphi_rounds[{k}]");
        if r.round_number != k + 1 {
            ck.invalid(format!("{path}.round_number"), format!("expected {}, got {}", k + 1, r.round_number));
        }
        for (expert, ballot) in &r.votes {
            if !ids.contains(expert) {
                ck.dangling(format!("{path}.votes"), expert);
            }
            for item in &ballot.selection {
                if !pool.contains(item) {
                    ck.dangling(format!("{path}.votes.{expert}"), item);
                }
            }
        }
        for item in r.feedback.counts.keys().chain(r.retained.iter().flatten()) {
            if !pool.contains(item) {
                ck.dangling(path.clone(), item);
            }
        }
        rounds.push(DelphiRound {
            round_number: r.round_number,
            status: r.status,
            feedback: crate::delphi::Feedback {
                counts: r.feedback.counts,
                comments: r.feedback.comments,
                voters: r.feedback.voters,
            },
            votes: r.votes,
            retained: r.retained,
            converged: r.converged,
        });
    }
    let open_rounds = rounds.iter().filter(|r| r.status == RoundStatus::Open).count();
    if open_rounds > 1 || (open_rounds == 1 && rounds.last().map(|r| r.status) != Some(RoundStatus::Open)) {
        ck.invalid("delphi_rounds", "only the last round may be open");
    }

    let scale = JudgmentScale { strict: config.strict_scale };
    let mut respondents = BTreeSet::new();
    let mut judgments = Vec::with_capacity(doc.judgments.len());
    for (k, j) in doc.judgments.into_iter().enumerate() {
        let path = format!("judgments[{k}]");
        if !respondents.insert(j.respondent_id.clone()) {
            ck.push(format!("{path}.respondent_id"), ViolationKind::Duplicate { name: j.respondent_id.clone() });
        }
        let mut matrices = BTreeMap::new();
        for (node, m) in j.matrices {
            let mpath = format!("{path}.matrices.{node}");
            let Some(children) = h.children(&node) else {
                ck.dangling(mpath, &node);
                continue;
            };
            if let Some(labels) = &m.labels {
                let mut ok = true;
                for l in labels {
                    if !children.contains(l) {
                        ck.dangling(format!("{mpath}.labels"), l);
                        ok = false;
                    }
                }
                if ok && labels.as_slice() != children {
                    ck.invalid(format!("{mpath}.labels"), "labels must list the node's children in hierarchy order");
                }
            }
            if children.is_empty() {
                ck.invalid(mpath, "node has no children to compare");
                continue;
            }
            let values: Vec<f64> = m.upper.iter().map(|r| r.0).collect();
            if values.len() != pair_count(children.len()) {
                ck.invalid(
                    format!("{mpath}.upper"),
                    format!("expected {} judgments, got {}", pair_count(children.len()), values.len()),
                );
                continue;
            }
            match PairwiseMatrix::from_upper_values(children.to_vec().into(), &values) {
                Ok(matrix) => {
                    let report = matrix.validate(scale);
                    if !report.is_empty() {
                        ck.invalid(format!("{mpath}.upper"), report.to_string());
                    }
                    matrices.insert(node, matrix);
                }
                Err(e) => ck.invalid(format!("{mpath}.upper"), e.to_string()),
            }
        }
        judgments.push(JudgmentSet {
            respondent_id: j.respondent_id,
            group_id: j.group_id,
            matrices,
            submitted_at: j.submitted_at,
        });
    }

    let direct = doc.local_priorities.map(|d| {
        let criteria_weights = d.criteria_weights.map(|w| {
            for c in w.keys() {
                if !h.criteria.contains(c) {
                    ck.dangling("local_priorities.criteria_weights", c);
                }
            }
            for c in &h.criteria {
                if !w.contains_key(c) {
                    ck.invalid("local_priorities.criteria_weights", format!("missing weight for `{c}`"));
                }
            }
            w.into_iter().map(|(k, v)| (k, v.0)).collect::<BTreeMap<_, _>>()
        });
        let mut per_criterion = BTreeMap::new();
        for (c, alts) in d.alternatives {
            let path = format!("local_priorities.alternatives.{c}");
            if !h.criteria.contains(&c) {
                ck.dangling("local_priorities.alternatives", &c);
            }
            for a in alts.keys() {
                if !h.alternatives.contains(a) {
                    ck.dangling(path.clone(), a);
                }
            }
            for a in &h.alternatives {
                if !alts.contains_key(a) {
                    ck.invalid(path.clone(), format!("missing priority for `{a}`"));
                }
            }
            per_criterion.insert(c, alts.into_iter().map(|(k, v)| (k, v.0)).collect());
        }
        for values in criteria_weights.iter().chain(per_criterion.values()) {
            if values.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
                ck.invalid("local_priorities", "priorities must be finite and nonnegative");
            }
        }
        DirectPriorities { criteria_weights, per_criterion }
    });

    let mut owner = BTreeMap::new();
    for (g, members) in &doc.groups {
        for m in members {
            if !h.alternatives.contains(m) {
                ck.dangling(format!("groups.{g}"), m);
            } else if let Some(prev) = owner.insert(m.clone(), g.clone()) {
                ck.invalid(format!("groups.{g}"), format!("`{m}` already belongs to `{prev}`"));
            }
        }
    }

    if !ck.violations.is_empty() {
        return Err(StudyError::Invalid(ck.violations));
    }
    Ok(Study {
        name: doc.name,
        hierarchy: h,
        pool,
        panel,
        rounds,
        judgments,
        direct,
        groups: doc.groups,
        config,
    })
}

fn config_from_doc(c: ConfigDoc, ck: &mut Checker) -> StudyConfig {
    if !(c.threshold.0 > 0.0 && c.threshold.0 <= 1.0) {
        ck.invalid("config.threshold", "must lie in (0, 1]");
    }
    if !(c.retention_fraction.0 > 0.0 && c.retention_fraction.0 <= 1.0) {
        ck.invalid("config.retention_fraction", "must lie in (0, 1]");
    }
    if c.max_rounds == 0 {
        ck.invalid("config.max_rounds", "must be >= 1");
    }
    let ri = match c.ri_table {
        RiDoc::Named(s) if s == "builtin" => RiSource::Builtin,
        RiDoc::Named(path) => RiSource::File(path),
        RiDoc::Table(t) => match table_from_doc(t) {
            Ok(t) => RiSource::Inline(t),
            Err(e) => {
                ck.invalid("config.ri_table", e);
                RiSource::Builtin
            }
        },
    };
    StudyConfig {
        threshold: c.threshold.0,
        retention_fraction: c.retention_fraction.0,
        max_rounds: c.max_rounds,
        method: c.method,
        salvage: c.salvage,
        strict_scale: c.strict_scale,
        ri,
        facilitator_token: c.facilitator_token,
    }
}

fn table_from_doc(t: RiTableDoc) -> Result<RandomIndexTable, String> {
    RandomIndexTable::new(t.values.into_iter().map(|r| r.0).collect(), t.provenance)
        .map_err(|e| e.to_string())
}

pub(crate) fn table_to_doc(t: &RandomIndexTable) -> RiTableDoc {
    RiTableDoc { provenance: t.provenance(), values: t.values().iter().copied().map(Real).collect() }
}

/// Reads a standalone random index table document.
pub fn parse_ri_table(document: &str) -> Result<RandomIndexTable, StudyError> {
    let doc: RiTableDoc = serde_json::from_str(document).map_err(schema_error)?;
    table_from_doc(doc).map_err(|e| {
        StudyError::Invalid(vec![Violation { path: "values".into(), kind: ViolationKind::Invalid(e) }])
    })
}

pub fn emit_ri_table(t: &RandomIndexTable) -> String {
    serde_json::to_string_pretty(&table_to_doc(t)).expect("table serializes")
}

// ---------------------------------------------------------------------------
// emit

pub fn emit_study(study: &Study) -> String {
    let doc = StudyDoc {
        schema_version: SCHEMA_VERSION,
        name: study.name.clone(),
        hierarchy: study.hierarchy.clone(),
        item_pool: study.pool.items().to_vec(),
        panel: study
            .panel
            .iter()
            .map(|m| PanelDoc { id: m.id.clone(), token: m.token.clone() })
            .collect(),
        delphi_rounds: study
            .rounds
            .iter()
            .map(|r| RoundDoc {
                round_number: r.round_number,
                status: r.status,
                feedback: FeedbackDoc {
                    counts: r.feedback.counts.clone(),
                    comments: r.feedback.comments.clone(),
                    voters: r.feedback.voters,
                },
                votes: r.votes.clone(),
                retained: r.retained.clone(),
                converged: r.converged,
            })
            .collect(),
        judgments: study
            .judgments
            .iter()
            .map(|j| JudgmentDoc {
                respondent_id: j.respondent_id.clone(),
                group_id: j.group_id.clone(),
                submitted_at: j.submitted_at,
                matrices: j
                    .matrices
                    .iter()
                    .map(|(node, m)| {
                        (
                            node.clone(),
                            MatrixDoc {
                                upper: m.upper_values().into_iter().map(Real).collect(),
                                labels: Some(m.labels().to_vec()),
                            },
                        )
                    })
                    .collect(),
            })
            .collect(),
        local_priorities: study.direct.as_ref().map(|d| DirectDoc {
            criteria_weights: d
                .criteria_weights
                .as_ref()
                .map(|w| w.iter().map(|(k, v)| (k.clone(), Real(*v))).collect()),
            alternatives: d
                .per_criterion
                .iter()
                .map(|(c, a)| (c.clone(), a.iter().map(|(k, v)| (k.clone(), Real(*v))).collect()))
                .collect(),
        }),
        groups: study.groups.clone(),
        config: ConfigDoc {
            threshold: Real(study.config.threshold),
            retention_fraction: Real(study.config.retention_fraction),
            max_rounds: study.config.max_rounds,
            method: study.config.method,
            salvage: study.config.salvage,
            strict_scale: study.config.strict_scale,
            ri_table: match &study.config.ri {
                RiSource::Builtin => RiDoc::Named("builtin".into()),
                RiSource::File(p) => RiDoc::Named(p.clone()),
                RiSource::Inline(t) => RiDoc::Table(table_to_doc(t)),
            },
            facilitator_token: study.config.facilitator_token.clone(),
        },
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("study serializes");
    text.push('\n');
    text
}

/// Writes to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_study(path: &Path, study: &Study) -> Result<(), StudyError> {
    write_atomic(path, &emit_study(study))
        .map_err(|source| StudyError::Io { path: path.to_path_buf(), source })
}
