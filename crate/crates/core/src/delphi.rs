//! Anonymous multi-round shortlisting of a criteria pool.
//!
//! Experts select the items they consider important. When a round closes,
//! an item is retained if at least `ceil(fraction · voters)` experts chose
//! it. The facilitator relays only per-item counts and unattributed comments
//! to the next round. A study converges when two consecutive rounds retain
//! the same set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ItemId = String;
pub type ExpertId = String;

pub const DEFAULT_RETENTION_FRACTION: f64 = 0.5;
pub const DEFAULT_MAX_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelphiError {
    #[error("round {0} is still open")]
    PreviousRoundOpen(usize),
    #[error("the study already ran its maximum of {0} rounds")]
    MaxRoundsExceeded(usize),
    #[error("no round is open")]
    RoundClosed,
    #[error("expert is not on the panel")]
    UnknownExpert,
    #[error("unknown item `{0}`")]
    UnknownItem(ItemId),
    #[error("round has no votes")]
    NoVotes,
    #[error("retention fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("max rounds must be >= 1")]
    BadMaxRounds,
    #[error("item pool is empty")]
    EmptyPool,
    #[error("duplicate item id `{0}`")]
    DuplicateItem(ItemId),
    #[error("panel needs at least two experts")]
    PanelTooSmall,
    #[error("duplicate expert id")]
    DuplicateExpert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolItem {
    pub id: ItemId,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub sources: Vec<String>,
}

impl PoolItem {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self { id: id.into(), name: name.into(), description: String::new(), sources: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ItemPool {
    items: Vec<PoolItem>,
}

impl ItemPool {
    pub fn new(items: Vec<PoolItem>) -> Result<Self, DelphiError> {
        let mut seen = BTreeSet::new();
        for it in &items {
            if !seen.insert(it.id.as_str()) {
                return Err(DelphiError::DuplicateItem(it.id.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[PoolItem] {
        &self.items
    }

    pub fn contains(&self, id: &str) -> bool {
        self.items.iter().any(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The 24 business-model components compiled from the literature, used
    /// as the default pool for bank sustainability studies.
    pub fn business_model_components() -> Self {
        const ROWS: [(&str, &str); 24] = [
            ("value_proposition", "Value proposition"),
            ("financial_domain", "Financial domain"),
            ("business_processes", "Business processes"),
            ("distribution_channel", "Distribution channel"),
            ("market_segment", "Market segment"),
            ("core_competencies", "Core competencies"),
            ("supply_chain_management", "Supply chain management"),
            ("resources", "Resources"),
            ("value_chain_structure", "Value chain structure"),
            ("customer_interface", "Customer interface"),
            ("strategy", "Strategy"),
            ("partner_network", "Partner Network"),
            ("organizational_form", "Organizational form"),
            ("governance_form", "Governance form"),
            ("market_communication", "Market communication"),
            ("technology", "Technology"),
            ("competitive_position", "Competitive position"),
            ("empowered_employee", "Empowered employee"),
            ("mission", "Mission"),
            ("value_exchange", "Value exchange"),
            ("market_model", "Market model"),
            ("implementation_model", "Implementation model"),
            ("thread_model", "Thread model"),
            ("knowledge_management", "Knowledge management"),
        ];
        Self { items: ROWS.iter().map(|(id, name)| PoolItem::new(*id, *name)).collect() }
    }
}

/// Panel roster. Ids are opaque; nothing derived from a round pairs an id
/// with a selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Panel {
    experts: Vec<ExpertId>,
}

impl Panel {
    pub fn new(experts: Vec<ExpertId>) -> Result<Self, DelphiError> {
        if experts.len() < 2 {
            return Err(DelphiError::PanelTooSmall);
        }
        let unique: BTreeSet<&String> = experts.iter().collect();
        if unique.len() != experts.len() {
            return Err(DelphiError::DuplicateExpert);
        }
        Ok(Self { experts })
    }

    pub fn experts(&self) -> &[ExpertId] {
        &self.experts
    }

    pub fn contains(&self, id: &str) -> bool {
        self.experts.iter().any(|e| e == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub selection: BTreeSet<ItemId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

/// What the facilitator relays into a round: counts and comments, no names.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Feedback {
    pub counts: BTreeMap<ItemId, usize>,
    #[serde(default)]
    pub comments: Vec<String>,
    #[serde(default)]
    pub voters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelphiRound {
    pub round_number: usize,
    pub status: RoundStatus,
    pub feedback: Feedback,
    pub votes: BTreeMap<ExpertId, Ballot>,
    /// Set when the round closes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained: Option<BTreeSet<ItemId>>,
    #[serde(default)]
    pub converged: bool,
}

impl DelphiRound {
    /// Per-item selection counts over all pool items (zero counts included).
    pub fn counts(&self, pool: &ItemPool) -> BTreeMap<ItemId, usize> {
        let mut counts: BTreeMap<ItemId, usize> =
            pool.items().iter().map(|i| (i.id.clone(), 0)).collect();
        for ballot in self.votes.values() {
            for id in &ballot.selection {
                *counts.entry(id.clone()).or_default() += 1;
            }
        }
        counts
    }

    /// Anonymous summary of this round's votes.
    pub fn summary(&self, pool: &ItemPool) -> Feedback {
        let mut comments: Vec<String> =
            self.votes.values().filter_map(|b| b.comment.clone()).collect();
        // Sorting drops the link between a comment and its author's id order.
        comments.sort();
        Feedback { counts: self.counts(pool), comments, voters: self.votes.len() }
    }
}

/// `ceil(fraction · voters)` with a guard against products such as
/// `0.7 · 10 = 7.000000000000001`.
pub fn retention_quota(fraction: f64, voters: usize) -> usize {
    let exact = fraction * voters as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round_number: usize,
    pub retained: BTreeSet<ItemId>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelphiConfig {
    pub retention_fraction: f64,
    pub max_rounds: usize,
}

impl Default for DelphiConfig {
    fn default() -> Self {
        Self { retention_fraction: DEFAULT_RETENTION_FRACTION, max_rounds: DEFAULT_MAX_ROUNDS }
    }
}

impl DelphiConfig {
    pub fn check(&self) -> Result<(), DelphiError> {
        if !(self.retention_fraction > 0.0 && self.retention_fraction <= 1.0) {
            return Err(DelphiError::BadFraction(self.retention_fraction));
        }
        if self.max_rounds == 0 {
            return Err(DelphiError::BadMaxRounds);
        }
        Ok(())
    }
}

/// Round state of one shortlisting study. Mutations must be serialized by
/// the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct DelphiStudy {
    pub pool: ItemPool,
    pub panel: Panel,
    pub config: DelphiConfig,
    pub rounds: Vec<DelphiRound>,
}

impl DelphiStudy {
    pub fn new(pool: ItemPool, panel: Panel, config: DelphiConfig) -> Result<Self, DelphiError> {
        if pool.is_empty() {
            return Err(DelphiError::EmptyPool);
        }
        config.check()?;
        Ok(Self { pool, panel, config, rounds: Vec::new() })
    }

    pub fn current(&self) -> Option<&DelphiRound> {
        self.rounds.last()
    }

    fn open_round_mut(&mut self) -> Result<&mut DelphiRound, DelphiError> {
        match self.rounds.last_mut() {
            Some(r) if r.status == RoundStatus::Open => Ok(r),
            _ => Err(DelphiError::RoundClosed),
        }
    }

    pub fn converged(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.converged)
    }

    pub fn open_round(&mut self) -> Result<&DelphiRound, DelphiError> {
        let feedback = match self.rounds.last() {
            Some(prev) if prev.status == RoundStatus::Open => {
                return Err(DelphiError::PreviousRoundOpen(prev.round_number))
            }
            Some(prev) => prev.summary(&self.pool),
            None => Feedback::default(),
        };
        if self.rounds.len() >= self.config.max_rounds {
            return Err(DelphiError::MaxRoundsExceeded(self.config.max_rounds));
        }
        self.rounds.push(DelphiRound {
            round_number: self.rounds.len() + 1,
            status: RoundStatus::Open,
            feedback,
            votes: BTreeMap::new(),
            retained: None,
            converged: false,
        });
        Ok(self.rounds.last().expect("just pushed"))
    }

    /// Stores (or replaces) an expert's ballot in the open round.
    pub fn record_vote(
        &mut self,
        expert: &str,
        selection: BTreeSet<ItemId>,
        comment: Option<String>,
    ) -> Result<(), DelphiError> {
        if !self.panel.contains(expert) {
            return Err(DelphiError::UnknownExpert);
        }
        if let Some(bad) = selection.iter().find(|id| !self.pool.contains(id)) {
            return Err(DelphiError::UnknownItem(bad.clone()));
        }
        let round = self.open_round_mut()?;
        round.votes.insert(expert.to_string(), Ballot { selection, comment });
        Ok(())
    }

    /// Closes the open round using the configured fraction.
    pub fn close_round(&mut self) -> Result<RoundOutcome, DelphiError> {
        self.close_round_with(self.config.retention_fraction)
    }

    pub fn close_round_with(&mut self, fraction: f64) -> Result<RoundOutcome, DelphiError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(DelphiError::BadFraction(fraction));
        }
        let previous = self
            .rounds
            .iter()
            .rev()
            .skip(1)
            .find(|r| r.status == RoundStatus::Closed)
            .and_then(|r| r.retained.clone());
        let pool = self.pool.clone();
        let round = self.open_round_mut()?;
        if round.votes.is_empty() {
            return Err(DelphiError::NoVotes);
        }
        let retained = retained_items(&round.counts(&pool), round.votes.len(), fraction);
        let converged = previous.as_ref() == Some(&retained);
        round.status = RoundStatus::Closed;
        round.retained = Some(retained.clone());
        round.converged = converged;
        Ok(RoundOutcome { round_number: round.round_number, retained, converged })
    }

    pub fn result(&self) -> ShortlistResult {
        let history: Vec<BTreeSet<ItemId>> =
            self.rounds.iter().filter_map(|r| r.retained.clone()).collect();
        ShortlistResult {
            retained: history.last().cloned().unwrap_or_default(),
            rounds_run: history.len(),
            converged: self.converged(),
            history,
        }
    }
}

/// Items whose count meets the quota.
pub fn retained_items(
    counts: &BTreeMap<ItemId, usize>,
    voters: usize,
    fraction: f64,
) -> BTreeSet<ItemId> {
    let quota = retention_quota(fraction, voters);
    counts
        .iter()
        .filter(|(_, c)| **c >= quota)
        .map(|(id, _)| id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortlistResult {
    pub retained: BTreeSet<ItemId>,
    pub rounds_run: usize,
    pub converged: bool,
    /// Retained set after each closed round.
    pub history: Vec<BTreeSet<ItemId>>,
}

/// Supplies ballots for a round, seeing only the anonymous feedback.
pub trait VoteSource {
    fn ballots(&mut self, round_number: usize, feedback: &Feedback) -> Vec<(ExpertId, Ballot)>;
}

/// Replays a fixed list of rounds; the last entry repeats once exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedVotes {
    pub rounds: Vec<Vec<(ExpertId, BTreeSet<ItemId>)>>,
}

impl VoteSource for ScriptedVotes {
    fn ballots(&mut self, round_number: usize, _feedback: &Feedback) -> Vec<(ExpertId, Ballot)> {
        let k = (round_number - 1).min(self.rounds.len().saturating_sub(1));
        self.rounds
            .get(k)
            .map(|r| {
                r.iter()
                    .map(|(e, s)| (e.clone(), Ballot { selection: s.clone(), comment: None }))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Opens, fills and closes rounds until the retained set is stable or the
/// round budget is spent.
pub fn run_study(
    pool: ItemPool,
    panel: Panel,
    votes: &mut dyn VoteSource,
    config: DelphiConfig,
) -> Result<ShortlistResult, DelphiError> {
    let mut study = DelphiStudy::new(pool, panel, config)?;
    loop {
        let (number, feedback) = {
            let r = study.open_round()?;
            (r.round_number, r.feedback.clone())
        };
        for (expert, ballot) in votes.ballots(number, &feedback) {
            study.record_vote(&expert, ballot.selection, ballot.comment)?;
        }
        let outcome = study.close_round()?;
        if outcome.converged || study.rounds.len() >= study.config.max_rounds {
            break;
        }
    }
    Ok(study.result())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> ItemPool {
        ItemPool::new((0..n).map(|k| PoolItem::new(format!("i{k}"), format!("Item {k}"))).collect()).unwrap()
    }

    fn panel(n: usize) -> Panel {
        Panel::new((0..n).map(|k| format!("e{k}")).collect()).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<ItemId> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn study(experts: usize) -> DelphiStudy {
        DelphiStudy::new(pool(4), panel(experts), DelphiConfig::default()).unwrap()
    }

    #[test]
    fn first_round_has_empty_feedback() {
        let mut s = study(3);
        let r = s.open_round().unwrap();
        assert_eq!(r.round_number, 1);
        assert_eq!(r.feedback, Feedback::default());
    }

    #[test]
    fn second_round_feedback_is_counts() {
        let mut s = DelphiStudy::new(pool(2), panel(5), DelphiConfig::default()).unwrap();
        s.open_round().unwrap();
        for k in 0..5 {
            let sel = if k < 2 { set(&["i0", "i1"]) } else { set(&["i0"]) };
            s.record_vote(&format!("e{k}"), sel, None).unwrap();
        }
        s.close_round().unwrap();
        let r = s.open_round().unwrap();
        assert_eq!(r.round_number, 2);
        assert_eq!(r.feedback.counts, BTreeMap::from([("i0".into(), 5), ("i1".into(), 2)]));
        assert_eq!(r.feedback.voters, 5);
    }

    #[test]
    fn open_while_open_fails() {
        let mut s = study(2);
        s.open_round().unwrap();
        assert_eq!(s.open_round().unwrap_err(), DelphiError::PreviousRoundOpen(1));
    }

    #[test]
    fn max_rounds_enforced() {
        let mut s = DelphiStudy::new(pool(1), panel(2), DelphiConfig { max_rounds: 1, ..Default::default() }).unwrap();
        s.open_round().unwrap();
        s.record_vote("e0", set(&["i0"]), None).unwrap();
        s.close_round().unwrap();
        assert_eq!(s.open_round().unwrap_err(), DelphiError::MaxRoundsExceeded(1));
    }

    #[test]
    fn vote_rules() {
        let mut s = study(2);
        assert_eq!(s.record_vote("e0", set(&["i0"]), None), Err(DelphiError::RoundClosed));
        s.open_round().unwrap();
        s.record_vote("e0", set(&["i0"]), None).unwrap();
        assert_eq!(s.record_vote("e0", set(&["nope"]), None), Err(DelphiError::UnknownItem("nope".into())));
        assert_eq!(s.record_vote("zz", set(&["i0"]), None), Err(DelphiError::UnknownExpert));
        s.record_vote("e0", set(&["i1", "i2"]), Some("rethought".into())).unwrap();
        let r = s.current().unwrap();
        assert_eq!(r.votes.len(), 1);
        assert_eq!(r.votes["e0"].selection, set(&["i1", "i2"]));
    }

    #[test]
    fn close_needs_votes() {
        let mut s = study(2);
        s.open_round().unwrap();
        assert_eq!(s.close_round(), Err(DelphiError::NoVotes));
        assert_eq!(s.close_round_with(0.0), Err(DelphiError::BadFraction(0.0)));
    }

    #[test]
    fn majority_boundary() {
        assert_eq!(retention_quota(0.5, 16), 8);
        assert_eq!(retention_quota(0.7, 10), 7);
        assert_eq!(retention_quota(0.5, 15), 8);
        assert_eq!(retention_quota(1.0, 3), 3);
        let counts = BTreeMap::from([("a".to_string(), 8), ("b".to_string(), 7)]);
        assert_eq!(retained_items(&counts, 16, 0.5), set(&["a"]));
    }

    #[test]
    fn stable_unanimous_votes_converge_in_two_rounds() {
        let all: Vec<(ExpertId, BTreeSet<ItemId>)> =
            (0..4).map(|k| (format!("e{k}"), set(&["i0", "i2"]))).collect();
        let mut src = ScriptedVotes { rounds: vec![all] };
        let r = run_study(pool(4), panel(4), &mut src, DelphiConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.rounds_run, 2);
        assert_eq!(r.retained, set(&["i0", "i2"]));
    }

    #[test]
    fn oscillating_votes_hit_max_rounds() {
        let a: Vec<_> = (0..2).map(|k| (format!("e{k}"), set(&["i0"]))).collect();
        let b: Vec<_> = (0..2).map(|k| (format!("e{k}"), set(&["i1"]))).collect();
        let mut src = ScriptedVotes { rounds: vec![a.clone(), b.clone(), a.clone(), b.clone(), a] };
        let r = run_study(pool(2), panel(2), &mut src, DelphiConfig::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.rounds_run, DEFAULT_MAX_ROUNDS);
    }

    #[test]
    fn summary_is_anonymous() {
        let mut s = study(3);
        s.open_round().unwrap();
        s.record_vote("e2", set(&["i0"]), Some("zeta".into())).unwrap();
        s.record_vote("e0", set(&["i1"]), Some("alpha".into())).unwrap();
        let f = s.current().unwrap().summary(&s.pool);
        let text = serde_json::to_string(&f).unwrap();
        assert!(!text.contains("e0") && !text.contains("e2"));
        assert_eq!(f.comments, vec!["alpha", "zeta"]);
    }

    #[test]
    fn table_one_pool() {
        let p = ItemPool::business_model_components();
        assert_eq!(p.len(), 24);
        assert!(p.contains("value_proposition") && p.contains("knowledge_management"));
    }

    #[test]
    fn constructors_validate() {
        assert_eq!(Panel::new(vec!["a".into()]), Err(DelphiError::PanelTooSmall));
        assert_eq!(Panel::new(vec!["a".into(), "a".into()]), Err(DelphiError::DuplicateExpert));
        assert!(matches!(
            ItemPool::new(vec![PoolItem::new("x", "X"), PoolItem::new("x", "Y")]),
            Err(DelphiError::DuplicateItem(_))
        ));
        assert_eq!(
            DelphiStudy::new(ItemPool::default(), panel(2), DelphiConfig::default()),
            Err(DelphiError::EmptyPool)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn retained_monotone_in_fraction(
                counts in prop::collection::vec(0usize..=16, 24),
                lo in 0.01f64..1.0,
                hi in 0.01f64..1.0,
            ) {
                let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
                let counts: BTreeMap<ItemId, usize> =
                    counts.iter().enumerate().map(|(k, c)| (format!("i{k}"), *c)).collect();
                let a = retained_items(&counts, 16, lo);
                let b = retained_items(&counts, 16, hi);
                prop_assert!(b.is_subset(&a));
            }

            #[test]
            fn identical_rounds_converge(sel in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..6), 2..6)) {
                let ballots: Vec<(ExpertId, BTreeSet<ItemId>)> = sel
                    .iter()
                    .enumerate()
                    .map(|(k, s)| (format!("e{k}"), s.iter().map(|i| format!("i{i}")).collect()))
                    .collect();
                let n = ballots.len();
                let mut src = ScriptedVotes { rounds: vec![ballots] };
                let r = run_study(pool(6), panel(n), &mut src, DelphiConfig::default()).unwrap();
                prop_assert!(r.converged);
                prop_assert_eq!(r.rounds_run, 2);
            }
        }
    }
}
