//! Pairwise comparison matrices and the 1–9 judgment scale.
//!
//! A [`PairwiseMatrix`] stores exactly one judgment per unordered pair. The
//! lower triangle is always derived as the reciprocal of the upper triangle,
//! so reciprocity holds by construction. Full dense input (for example a
//! matrix typed in by hand) goes through [`validate`] first, which reports
//! every structural problem as data instead of failing fast.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Relative tolerance used when checking reciprocity of dense input.
pub const RECIPROCITY_TOL: f64 = 1e-12;

/// Default relative tolerance for the cardinal transitivity test.
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcmError {
    #[error("order must be at least 1")]
    EmptyOrder,
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("pair ({i}, {j}) is out of range for order {order}")]
    PairOutOfRange { i: usize, j: usize, order: usize },
    #[error("missing judgment for pair ({i}, {j})")]
    MissingPair { i: usize, j: usize },
    #[error("pair ({i}, {j}) given more than once")]
    DuplicatePair { i: usize, j: usize },
    #[error("judgment for pair ({i}, {j}) must be finite and > 0, got {value}")]
    NonPositiveValue { i: usize, j: usize, value: f64 },
    #[error("expected {expected} upper-triangle judgments, got {got}")]
    PairCount { expected: usize, got: usize },
    #[error("matrix failed validation: {0}")]
    Invalid(ValidationReport),
}

/// Verbal meaning of the odd levels of the scale.
pub const SCALE_LABELS: [(u8, &str); 5] = [
    (1, "equally preferred"),
    (3, "moderately preferred"),
    (5, "strongly preferred"),
    (7, "very strongly preferred"),
    (9, "extremely preferred"),
];

/// The 1–9 judgment scale and its reciprocals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JudgmentScale {
    /// When set, off-diagonal entries must be scale levels.
    pub strict: bool,
}

impl JudgmentScale {
    pub const fn strict() -> Self {
        Self { strict: true }
    }

    pub const fn lenient() -> Self {
        Self { strict: false }
    }

    /// All 17 admissible levels in ascending order: 1/9, …, 1/2, 1, 2, …, 9.
    pub fn levels() -> Vec<f64> {
        let mut out: Vec<f64> = (2..=9).rev().map(|k| 1.0 / f64::from(k)).collect();
        out.extend((1..=9).map(f64::from));
        out
    }

    pub fn label(magnitude: u8) -> Option<&'static str> {
        match magnitude {
            2 | 4 | 6 | 8 => Some("intermediate"),
            _ => SCALE_LABELS
                .iter()
                .find(|(m, _)| *m == magnitude)
                .map(|(_, l)| *l),
        }
    }

    /// Returns the integer magnitude and orientation of `value` if it is a
    /// scale level. `(k, true)` means `value == k`, `(k, false)` means `1/k`.
    pub fn level_of(value: f64) -> Option<(u8, bool)> {
        if !(value.is_finite() && value > 0.0) {
            return None;
        }
        let (v, direct) = if value >= 1.0 {
            (value, true)
        } else {
            (1.0 / value, false)
        };
        let k = v.round();
        if (1.0..=9.0).contains(&k) && (v - k).abs() <= 1e-9 * k {
            Some((k as u8, direct || k == 1.0))
        } else {
            None
        }
    }

    pub fn is_level(value: f64) -> bool {
        Self::level_of(value).is_some()
    }
}

impl Default for JudgmentScale {
    fn default() -> Self {
        Self::lenient()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSquare { row: usize, len: usize, order: usize },
    Diagonal { i: usize, value: f64 },
    NonPositive { i: usize, j: usize, value: f64 },
    Reciprocity { i: usize, j: usize, product: f64 },
    OffScale { i: usize, j: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSquare { row, len, order } => {
                write!(f, "row {row} has {len} entries, expected {order}")
            }
            Violation::Diagonal { i, value } => write!(f, "diagonal ({i}, {i}) is {value}, expected 1"),
            Violation::NonPositive { i, j, value } => {
                write!(f, "entry ({i}, {j}) is {value}, expected a finite positive value")
            }
            Violation::Reciprocity { i, j, product } => {
                write!(f, "({i}, {j})·({j}, {i}) = {product}, expected 1")
            }
            Violation::OffScale { i, j, value } => write!(f, "entry ({i}, {j}) = {value} is not a scale level"),
        }
    }
}

/// Violations found by [`validate`]. Empty means the input is a valid matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks dense rows for the structure of a reciprocal judgment matrix.
///
/// Each unordered pair is reported at most once for reciprocity, as `(i, j)`
/// with `i < j`. The scale check only runs in strict mode and only looks at
/// the upper triangle (the lower one is implied).
pub fn validate(rows: &[Vec<f64>], scale: JudgmentScale) -> ValidationReport {
    let n = rows.len();
    let mut violations = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            violations.push(Violation::NotSquare { row: i, len: row.len(), order: n });
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }

    for i in 0..n {
        for j in 0..n {
            let x = rows[i][j];
            if !(x.is_finite() && x > 0.0) {
                violations.push(Violation::NonPositive { i, j, value: x });
            } else if i == j && x != 1.0 {
                violations.push(Violation::Diagonal { i, value: x });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (rows[i][j], rows[j][i]);
            if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                continue;
            }
            let product = a * b;
            if (product - 1.0).abs() > RECIPROCITY_TOL {
                violations.push(Violation::Reciprocity { i, j, product });
            } else if scale.strict && !JudgmentScale::is_level(a) {
                violations.push(Violation::OffScale { i, j, value: a });
            }
        }
    }
    ValidationReport { violations }
}

/// A square positive reciprocal matrix of judgments over labelled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    labels: Arc<[String]>,
    entries: Vec<f64>,
}

fn check_labels(order: usize, labels: &[String]) -> Result<(), PcmError> {
    if order == 0 {
        return Err(PcmError::EmptyOrder);
    }
    if labels.len() != order {
        return Err(PcmError::LabelCount { expected: order, got: labels.len() });
    }
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(PcmError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

/// Number of strictly-upper-triangle cells of an `order`×`order` matrix.
pub fn pair_count(order: usize) -> usize {
    order * order.saturating_sub(1) / 2
}

impl PairwiseMatrix {
    /// Builds a matrix from `(i, j, value)` triples with `i < j`.
    pub fn from_upper_triangle(
        labels: Vec<String>,
        upper: &[(usize, usize, f64)],
    ) -> Result<Self, PcmError> {
        let n = labels.len();
        check_labels(n, &labels)?;
        let mut slots: Vec<Option<f64>> = vec![None; n * n];
        for &(i, j, value) in upper {
            if i >= j || j >= n {
                return Err(PcmError::PairOutOfRange { i, j, order: n });
            }
            if !(value.is_finite() && value > 0.0) {
                return Err(PcmError::NonPositiveValue { i, j, value });
            }
            if slots[i * n + j].replace(value).is_some() {
                return Err(PcmError::DuplicatePair { i, j });
            }
        }
        let mut values = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in (i + 1)..n {
                values.push(slots[i * n + j].ok_or(PcmError::MissingPair { i, j })?);
            }
        }
        Ok(Self::assemble(labels.into(), &values))
    }

    /// Builds a matrix from the upper triangle listed row-major:
    /// `(0,1), (0,2), …, (0,n-1), (1,2), …`.
    pub fn from_upper_values(labels: Arc<[String]>, values: &[f64]) -> Result<Self, PcmError> {
        let n = labels.len();
        check_labels(n, &labels)?;
        if values.len() != pair_count(n) {
            return Err(PcmError::PairCount { expected: pair_count(n), got: values.len() });
        }
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let value = values[k];
                if !(value.is_finite() && value > 0.0) {
                    return Err(PcmError::NonPositiveValue { i, j, value });
                }
                k += 1;
            }
        }
        Ok(Self::assemble(labels, values))
    }

    /// Accepts dense rows after they pass [`validate`] under `scale`.
    pub fn from_rows(
        labels: Vec<String>,
        rows: &[Vec<f64>],
        scale: JudgmentScale,
    ) -> Result<Self, PcmError> {
        check_labels(rows.len(), &labels)?;
        let report = validate(rows, scale);
        if !report.is_empty() {
            return Err(PcmError::Invalid(report));
        }
        let n = rows.len();
        let values: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| rows[i][j])
            .collect();
        Ok(Self::assemble(labels.into(), &values))
    }

    /// The all-ones matrix: every node judged equal.
    pub fn uniform(labels: Vec<String>) -> Result<Self, PcmError> {
        let n = labels.len();
        check_labels(n, &labels)?;
        Ok(Self::assemble(labels.into(), &vec![1.0; pair_count(n)]))
    }

    fn assemble(labels: Arc<[String]>, upper: &[f64]) -> Self {
        let n = labels.len();
        let mut entries = vec![1.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                entries[i * n + j] = upper[k];
                entries[j * n + i] = 1.0 / upper[k];
                k += 1;
            }
        }
        Self { labels, entries }
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn shared_labels(&self) -> Arc<[String]> {
        Arc::clone(&self.labels)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.order();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.order()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Stored judgments, row-major over the strict upper triangle.
    pub fn upper_values(&self) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }

    pub fn upper_triangle(&self) -> Vec<(usize, usize, f64)> {
        let n = self.order();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.get(i, j)))
            .collect()
    }

    /// `y = M·x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.order();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = self.entries[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// Applies a simultaneous row/column permutation: node `perm[k]` of
    /// `self` becomes node `k` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.order();
        assert_eq!(perm.len(), n, "permutation length must equal the order");
        let labels: Vec<String> = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let mut entries = vec![1.0; n * n];
        for a in 0..n {
            for b in 0..n {
                entries[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        Self { labels: labels.into(), entries }
    }

    /// Transpose with every entry inverted. Equals `self` for any valid matrix.
    pub fn reciprocal_transpose(&self) -> Vec<Vec<f64>> {
        let n = self.order();
        (0..n)
            .map(|i| (0..n).map(|j| 1.0 / self.get(j, i)).collect())
            .collect()
    }

    /// Scale-membership check for a constructed matrix; structural checks
    /// always pass here since reciprocity is built in.
    pub fn validate(&self, scale: JudgmentScale) -> ValidationReport {
        validate(&self.rows(), scale)
    }

    /// Cardinal transitivity: `X_ik = X_ij · X_jk` for all triples, within `tol`
    /// relative to `X_ik`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let n = self.order();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let direct = self.get(i, k);
                    let via = self.get(i, j) * self.get(j, k);
                    if (direct - via).abs() > tol * direct {
                        return false;
                    }
                }
            }
        }
        true
    }
}
