//! Goal → criteria → alternatives synthesis and group rollups.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcm::PairwiseMatrix;
use crate::priority::{derive, Method, PowerIteration, PriorityError, PriorityVector};

/// Decimal places used for displayed weights and scores.
pub const DISPLAY_PLACES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HierarchyError {
    #[error("hierarchy needs at least one criterion")]
    NoCriteria,
    #[error("empty name in {0}")]
    EmptyName(&'static str),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("alternative `{0}` is not in the scores")]
    UnknownAlternative(String),
    #[error("alternative `{0}` belongs to more than one group")]
    OverlappingGroups(String),
    #[error("alternative `{0}` belongs to no group")]
    Ungrouped(String),
    #[error("group `{0}` has no members")]
    EmptyGroup(String),
    #[error(transparent)]
    Priority(#[from] PriorityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub goal: String,
    pub criteria: Vec<String>,
    #[serde(default)]
    pub alternatives: Vec<String>,
}

impl Hierarchy {
    pub fn new(
        goal: impl Into<String>,
        criteria: Vec<String>,
        alternatives: Vec<String>,
    ) -> Result<Self, HierarchyError> {
        let h = Self { goal: goal.into(), criteria, alternatives };
        h.check()?;
        Ok(h)
    }

    pub fn check(&self) -> Result<(), HierarchyError> {
        if self.goal.trim().is_empty() {
            return Err(HierarchyError::EmptyName("goal"));
        }
        if self.criteria.is_empty() {
            return Err(HierarchyError::NoCriteria);
        }
        let mut seen = BTreeSet::new();
        for (names, what) in [(&self.criteria, "criteria"), (&self.alternatives, "alternatives")] {
            for n in names {
                if n.trim().is_empty() {
                    return Err(HierarchyError::EmptyName(what));
                }
                if !seen.insert(n.as_str()) || *n == self.goal {
                    return Err(HierarchyError::DuplicateName(n.clone()));
                }
            }
        }
        Ok(())
    }

    /// Children compared under `node`: criteria for the goal, alternatives
    /// for a criterion, `None` for anything else.
    pub fn children(&self, node: &str) -> Option<&[String]> {
        if node == self.goal {
            Some(&self.criteria)
        } else if self.criteria.iter().any(|c| c == node) {
            Some(&self.alternatives)
        } else {
            None
        }
    }

    /// Nodes that own a judgment matrix.
    pub fn judgment_nodes(&self) -> Vec<&str> {
        let mut out = vec![self.goal.as_str()];
        if !self.alternatives.is_empty() {
            out.extend(self.criteria.iter().map(String::as_str));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPriorities {
    pub criteria_weights: PriorityVector,
    pub per_criterion: BTreeMap<String, PriorityVector>,
}

impl LocalPriorities {
    /// Local vectors derived from one matrix per node.
    pub fn from_matrices(
        h: &Hierarchy,
        criteria: &PairwiseMatrix,
        per_criterion: &BTreeMap<String, PairwiseMatrix>,
        method: Method,
    ) -> Result<Self, HierarchyError> {
        let criteria_weights = derive(criteria, method, PowerIteration::default())?;
        let per_criterion = per_criterion
            .iter()
            .map(|(c, m)| Ok((c.clone(), derive(m, method, PowerIteration::default())?)))
            .collect::<Result<_, HierarchyError>>()?;
        let lp = Self { criteria_weights, per_criterion };
        lp.check(h)?;
        Ok(lp)
    }

    /// Direct path: vectors given as numbers (e.g. published tables). Each
    /// vector is renormalized to sum 1.
    pub fn from_direct(
        h: &Hierarchy,
        criteria_weights: &[f64],
        per_criterion: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, HierarchyError> {
        let vector = |labels: &[String], raw: &[f64], what: &str| {
            PriorityVector::normalized(labels.to_vec(), raw.to_vec(), Method::Eigenvector).ok_or_else(
                || HierarchyError::ShapeMismatch(format!("{what}: expected {} nonnegative values", labels.len())),
            )
        };
        let criteria_weights = vector(&h.criteria, criteria_weights, "criteria weights")?;
        let per_criterion = per_criterion
            .iter()
            .map(|(c, v)| Ok((c.clone(), vector(&h.alternatives, v, c)?)))
            .collect::<Result<_, HierarchyError>>()?;
        let lp = Self { criteria_weights, per_criterion };
        lp.check(h)?;
        Ok(lp)
    }

    pub fn check(&self, h: &Hierarchy) -> Result<(), HierarchyError> {
        if self.criteria_weights.labels() != h.criteria.as_slice() {
            return Err(HierarchyError::ShapeMismatch(
                "criteria weights are not labelled by the hierarchy's criteria".into(),
            ));
        }
        let keys: Vec<&String> = self.per_criterion.keys().collect();
        let mut expected: Vec<&String> = h.criteria.iter().collect();
        expected.sort();
        if keys != expected {
            return Err(HierarchyError::ShapeMismatch(
                "local vectors must cover exactly the hierarchy's criteria".into(),
            ));
        }
        for (c, v) in &self.per_criterion {
            if v.labels() != h.alternatives.as_slice() {
                return Err(HierarchyError::ShapeMismatch(format!(
                    "vector under `{c}` is not labelled by the hierarchy's alternatives"
                )));
            }
        }
        Ok(())
    }

    /// Multiplies one criterion's weight by `factor` and renormalizes.
    pub fn with_scaled_criterion(&self, criterion: &str, factor: f64) -> Option<Self> {
        let k = self.criteria_weights.labels().iter().position(|c| c == criterion)?;
        let mut raw = self.criteria_weights.weights().to_vec();
        raw[k] *= factor;
        let criteria_weights = PriorityVector::normalized(
            self.criteria_weights.labels().to_vec(),
            raw,
            self.criteria_weights.method(),
        )?;
        Some(Self { criteria_weights, per_criterion: self.per_criterion.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalScores {
    pub scores: BTreeMap<String, f64>,
    /// Descending by score, ties by name.
    pub ranking: Vec<String>,
}

impl GlobalScores {
    pub fn from_scores(scores: BTreeMap<String, f64>) -> Self {
        let ranking = rank(&scores);
        Self { scores, ranking }
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }
}

/// `score(a) = Σ_c weight(c) · local_c(a)`.
pub fn synthesize(h: &Hierarchy, lp: &LocalPriorities) -> Result<GlobalScores, HierarchyError> {
    if h.alternatives.is_empty() {
        return Err(HierarchyError::ShapeMismatch("hierarchy has no alternatives".into()));
    }
    lp.check(h)?;
    let mut totals = vec![0.0; h.alternatives.len()];
    for (criterion, weight) in lp.criteria_weights.iter() {
        let local = &lp.per_criterion[criterion];
        for (t, w) in totals.iter_mut().zip(local.weights()) {
            *t += weight * w;
        }
    }
    Ok(GlobalScores::from_scores(h.alternatives.iter().cloned().zip(totals).collect()))
}

/// Names sorted by descending score; equal scores in lexicographic order.
pub fn rank(scores: &BTreeMap<String, f64>) -> Vec<String> {
    let mut names: Vec<(&String, f64)> = scores.iter().map(|(k, v)| (k, *v)).collect();
    // BTreeMap iteration is already lexicographic and the sort is stable.
    names.sort_by(|a, b| b.1.total_cmp(&a.1));
    names.into_iter().map(|(k, _)| k.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRank {
    pub group: String,
    pub mean: f64,
    /// Mean at display precision, half-up.
    pub display: String,
    /// Dense rank over displayed means; equal displays share a rank.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollup {
    pub groups: BTreeMap<String, Vec<String>>,
    pub means: BTreeMap<String, f64>,
    /// Descending by exact mean, ties by group name.
    pub ranking: Vec<GroupRank>,
}

/// Arithmetic mean of member scores per group. Groups must partition the
/// scored alternatives.
pub fn rollup_mean(
    scores: &GlobalScores,
    groups: &BTreeMap<String, Vec<String>>,
) -> Result<GroupRollup, HierarchyError> {
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for (g, members) in groups {
        if members.is_empty() {
            return Err(HierarchyError::EmptyGroup(g.clone()));
        }
        for m in members {
            if !scores.scores.contains_key(m) {
                return Err(HierarchyError::UnknownAlternative(m.clone()));
            }
            if owner.insert(m, g).is_some() {
                return Err(HierarchyError::OverlappingGroups(m.clone()));
            }
        }
    }
    if let Some(a) = scores.scores.keys().find(|a| !owner.contains_key(a.as_str())) {
        return Err(HierarchyError::Ungrouped(a.clone()));
    }

    let means: BTreeMap<String, f64> = groups
        .iter()
        .map(|(g, members)| {
            let sum: f64 = members.iter().map(|m| scores.scores[m]).sum();
            (g.clone(), sum / members.len() as f64)
        })
        .collect();
    let order = rank(&means);
    let mut ranking = Vec::with_capacity(order.len());
    let mut rank_no = 0;
    let mut last: Option<Decimal> = None;
    for g in order {
        let mean = means[&g];
        let shown = round_half_up(mean, DISPLAY_PLACES);
        if last != Some(shown) {
            rank_no += 1;
            last = Some(shown);
        }
        ranking.push(GroupRank { group: g, mean, display: shown.to_string(), rank: rank_no });
    }
    Ok(GroupRollup { groups: groups.clone(), means, ranking })
}

/// Half-up rounding of the shortest decimal that round-trips to `x`.
///
/// `0.0645` is stored as 0.06450000000000000178 and `0.0615` as
/// 0.06149999999999999911; rounding the shortest decimal treats both as the
/// written values, which is what a reader doing the sum by hand expects.
pub fn round_half_up(x: f64, places: u32) -> Decimal {
    // Values too small for 28 decimal places display as zero anyway.
    let d = Decimal::from_str(&format!("{x}")).unwrap_or_default();
    let mut r = d.round_dp_with_strategy(places, RoundingStrategy::MidpointAwayFromZero);
    r.rescale(places);
    r
}

/// [`round_half_up`] as text, e.g. `"0.065"`.
pub fn display(x: f64) -> String {
    round_half_up(x, DISPLAY_PLACES).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|k| format!("{prefix}{k}")).collect()
    }

    #[test]
    fn hierarchy_invariants() {
        assert_eq!(Hierarchy::new("g", vec![], vec![]), Err(HierarchyError::NoCriteria));
        assert_eq!(
            Hierarchy::new("g", vec!["a".into(), "a".into()], vec![]),
            Err(HierarchyError::DuplicateName("a".into()))
        );
        assert_eq!(
            Hierarchy::new("g", vec!["a".into()], vec!["a".into()]),
            Err(HierarchyError::DuplicateName("a".into()))
        );
        assert_eq!(
            Hierarchy::new("g", vec!["".into()], vec![]),
            Err(HierarchyError::EmptyName("criteria"))
        );
        let h = Hierarchy::new("g", vec!["a".into()], vec![]).unwrap();
        assert_eq!(h.children("g").unwrap(), &["a".to_string()]);
        assert_eq!(h.children("a").unwrap().len(), 0);
        assert!(h.children("zzz").is_none());
        assert_eq!(h.judgment_nodes(), vec!["g"]);
    }

    #[test]
    fn single_criterion_passes_local_vector_through() {
        let h = Hierarchy::new("g", vec!["c".into()], names("a", 3)).unwrap();
        let local = BTreeMap::from([("c".to_string(), vec![0.2, 0.5, 0.3])]);
        let lp = LocalPriorities::from_direct(&h, &[1.0], &local).unwrap();
        let s = synthesize(&h, &lp).unwrap();
        assert_abs_diff_eq!(s.scores["a0"], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.scores["a1"], 0.5, epsilon = 1e-15);
        assert_eq!(s.ranking, vec!["a1", "a2", "a0"]);
    }

    #[test]
    fn synthesize_rejects_mismatch() {
        let h = Hierarchy::new("g", names("c", 2), names("a", 2)).unwrap();
        let local = BTreeMap::from([("c0".to_string(), vec![0.5, 0.5])]);
        assert!(matches!(
            LocalPriorities::from_direct(&h, &[0.5, 0.5], &local),
            Err(HierarchyError::ShapeMismatch(_))
        ));
        let local = BTreeMap::from([
            ("c0".to_string(), vec![0.5, 0.5]),
            ("c1".to_string(), vec![0.5, 0.3, 0.2]),
        ]);
        assert!(LocalPriorities::from_direct(&h, &[0.5, 0.5], &local).is_err());
        let weights_only = Hierarchy::new("g", names("c", 2), vec![]).unwrap();
        let lp = LocalPriorities::from_direct(
            &h,
            &[0.5, 0.5],
            &BTreeMap::from([("c0".to_string(), vec![0.5, 0.5]), ("c1".to_string(), vec![0.5, 0.5])]),
        )
        .unwrap();
        assert!(matches!(synthesize(&weights_only, &lp), Err(HierarchyError::ShapeMismatch(_))));
    }

    #[test]
    fn from_matrices_matches_direct_on_consistent_input() {
        let h = Hierarchy::new("g", names("c", 2), names("a", 2)).unwrap();
        let two = |v: f64, l: Vec<String>| PairwiseMatrix::from_upper_triangle(l, &[(0, 1, v)]).unwrap();
        let per = BTreeMap::from([
            ("c0".to_string(), two(3.0, names("a", 2))),
            ("c1".to_string(), two(1.0, names("a", 2))),
        ]);
        let lp = LocalPriorities::from_matrices(&h, &two(4.0, names("c", 2)), &per, Method::Eigenvector).unwrap();
        let s = synthesize(&h, &lp).unwrap();
        // 0.8·0.75 + 0.2·0.5
        assert_abs_diff_eq!(s.scores["a0"], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn rank_ties_lexicographic() {
        let scores = BTreeMap::from([("B".to_string(), 0.5), ("A".to_string(), 0.5), ("C".to_string(), 0.7)]);
        assert_eq!(rank(&scores), vec!["C", "A", "B"]);
    }

    #[test]
    fn rollup_examples() {
        let scores = GlobalScores::from_scores(BTreeMap::from([
            ("NB1".to_string(), 0.066),
            ("NB2".to_string(), 0.063),
            ("HB1".to_string(), 0.063),
            ("HB2".to_string(), 0.062),
            ("X".to_string(), 0.05),
        ]));
        let groups = BTreeMap::from([
            ("Norway".to_string(), vec!["NB1".to_string(), "NB2".to_string()]),
            ("Hungary".to_string(), vec!["HB1".to_string(), "HB2".to_string()]),
            ("Solo".to_string(), vec!["X".to_string()]),
        ]);
        let r = rollup_mean(&scores, &groups).unwrap();
        assert_abs_diff_eq!(r.means["Norway"], 0.0645, epsilon = 1e-15);
        // 0.0645 is a true midpoint, so half-up shows 0.065.
        assert_eq!(display(r.means["Norway"]), "0.065");
        assert_abs_diff_eq!(r.means["Hungary"], 0.0625, epsilon = 1e-15);
        assert_eq!(display(r.means["Hungary"]), "0.063");
        assert_eq!(r.means["Solo"], 0.05);
        let order: Vec<_> = r.ranking.iter().map(|g| (g.group.as_str(), g.rank)).collect();
        assert_eq!(order, vec![("Norway", 1), ("Hungary", 2), ("Solo", 3)]);
    }

    #[test]
    fn rollup_errors() {
        let scores = GlobalScores::from_scores(BTreeMap::from([("a".to_string(), 0.5), ("b".to_string(), 0.5)]));
        let g = |v: Vec<(&str, Vec<&str>)>| -> BTreeMap<String, Vec<String>> {
            v.into_iter().map(|(k, m)| (k.to_string(), m.into_iter().map(String::from).collect())).collect()
        };
        assert_eq!(
            rollup_mean(&scores, &g(vec![("x", vec!["a", "zz"])])),
            Err(HierarchyError::UnknownAlternative("zz".into()))
        );
        assert_eq!(
            rollup_mean(&scores, &g(vec![("x", vec!["a", "b"]), ("y", vec!["b"])])),
            Err(HierarchyError::OverlappingGroups("b".into()))
        );
        assert_eq!(rollup_mean(&scores, &g(vec![("x", vec!["a"])])), Err(HierarchyError::Ungrouped("b".into())));
        assert_eq!(
            rollup_mean(&scores, &g(vec![("x", vec!["a", "b"]), ("y", vec![])])),
            Err(HierarchyError::EmptyGroup("y".into()))
        );
    }

    #[test]
    fn half_up_display() {
        assert_eq!(display(0.0625), "0.063");
        assert_eq!(display(0.0615), "0.062");
        assert_eq!(display((0.066 + 0.063) / 2.0), "0.065");
        assert_eq!(display(0.0644999), "0.064");
        assert_eq!(display(1.0), "1.000");
        assert_eq!(display(0.0), "0.000");
        assert_eq!(display(1e-20), "0.000");
        assert_eq!(display(0.12345), "0.123");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn study() -> impl Strategy<Value = (Hierarchy, LocalPriorities)> {
            (1usize..6, 1usize..8).prop_flat_map(|(c, a)| {
                (
                    prop::collection::vec(0.01f64..1.0, c),
                    prop::collection::vec(prop::collection::vec(0.01f64..1.0, a), c),
                )
                    .prop_map(move |(w, locals)| {
                        let h = Hierarchy::new("g", names("c", c), names("a", a)).unwrap();
                        let per = h.criteria.iter().cloned().zip(locals).collect();
                        let lp = LocalPriorities::from_direct(&h, &w, &per).unwrap();
                        (h, lp)
                    })
            })
        }

        proptest! {
            #[test]
            fn scores_sum_to_one((h, lp) in study()) {
                let s = synthesize(&h, &lp).unwrap();
                prop_assert!((s.total() - 1.0).abs() <= 1e-9);
            }

            #[test]
            fn singleton_rollup_reproduces_scores((h, lp) in study()) {
                let s = synthesize(&h, &lp).unwrap();
                let groups = h.alternatives.iter().map(|a| (a.clone(), vec![a.clone()])).collect();
                let r = rollup_mean(&s, &groups).unwrap();
                prop_assert_eq!(&r.means, &s.scores);
            }

            #[test]
            fn identical_locals_keep_order_under_reweighting(
                (h, lp) in study(),
                factor in 0.1f64..10.0,
            ) {
                let first = lp.per_criterion[&h.criteria[0]].clone();
                let same = LocalPriorities {
                    criteria_weights: lp.criteria_weights.clone(),
                    per_criterion: h.criteria.iter().map(|c| (c.clone(), first.clone())).collect(),
                };
                let base = synthesize(&h, &same).unwrap();
                let scaled = synthesize(&h, &same.with_scaled_criterion(&h.criteria[0], factor).unwrap()).unwrap();
                for a in &h.alternatives {
                    prop_assert!((base.scores[a] - scaled.scores[a]).abs() <= 1e-12);
                }
                prop_assert_eq!(base.ranking, scaled.ranking);
            }

            #[test]
            fn reweighting_is_continuous((h, lp) in study(), eps in 1e-9f64..1e-6) {
                let base = synthesize(&h, &lp).unwrap();
                let bumped = synthesize(&h, &lp.with_scaled_criterion(&h.criteria[0], 1.0 + eps).unwrap()).unwrap();
                for a in &h.alternatives {
                    prop_assert!((base.scores[a] - bumped.scores[a]).abs() <= 2.0 * eps);
                }
            }
        }
    }
}
