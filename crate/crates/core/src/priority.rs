//! Priority derivation and consistency diagnostics.
//!
//! Weights come from the principal eigenvector (power iteration) or from
//! normalized row geometric means. The consistency report uses
//! `λmax = mean_i (M·w)_i / w_i`, `CI = (λmax − n)/(n − 1)` and `CR = CI/RI`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcm::PairwiseMatrix;

/// Consistency ratio at or below which judgments are accepted.
pub const DEFAULT_CR_THRESHOLD: f64 = 0.12;

/// Largest order covered by a random index table.
pub const MAX_RI_ORDER: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorityError {
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid power-iteration settings: {0}")]
    BadOptions(&'static str),
    #[error("no random index available for order {0}")]
    MissingRI(usize),
    #[error("random index for order {n} is zero but CI = {ci:e} is not")]
    ZeroRandomIndex { n: usize, ci: f64 },
    #[error("weight for `{0}` is zero")]
    DegenerateWeights(String),
    #[error("weight vector has {got} entries, matrix has order {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("invalid random index table: {0}")]
    BadTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Eigenvector,
    GeometricRow,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Eigenvector => "eigenvector",
            Method::GeometricRow => "geometric_row",
        })
    }
}

/// Normalized weights over labelled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityVector {
    labels: Vec<String>,
    weights: Vec<f64>,
    method: Method,
}

impl PriorityVector {
    /// Normalizes `raw` by its sum. Entries must be finite and nonnegative
    /// with a positive total.
    pub fn normalized(labels: Vec<String>, raw: Vec<f64>, method: Method) -> Option<Self> {
        if labels.len() != raw.len() || raw.is_empty() {
            return None;
        }
        if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return None;
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let weights = raw.into_iter().map(|w| w / total).collect();
        Some(Self { labels, weights, method })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|k| self.weights[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.labels.iter().map(String::as_str).zip(self.weights.iter().copied())
    }

    /// Indices sorted by descending weight, ties by label.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.weights[b]
                .total_cmp(&self.weights[a])
                .then_with(|| self.labels[a].cmp(&self.labels[b]))
        });
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Max-norm bound on the change between successive normalized iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 10_000 }
    }
}

/// Outcome of the eigenvector route.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPriority {
    pub vector: PriorityVector,
    pub lambda_max: f64,
    pub iterations: usize,
}

/// Principal eigenvector by power iteration from the uniform vector.
pub fn derive_eigenvector(
    m: &PairwiseMatrix,
    opts: PowerIteration,
) -> Result<EigenPriority, PriorityError> {
    let n = m.order();
    derive_eigenvector_from(m, &vec![1.0 / n as f64; n], opts)
}

/// Power iteration from an arbitrary positive start vector. Iterates are
/// normalized by their sum at every step, so any positive multiple of the
/// start gives the same sequence after the first step.
pub fn derive_eigenvector_from(
    m: &PairwiseMatrix,
    start: &[f64],
    opts: PowerIteration,
) -> Result<EigenPriority, PriorityError> {
    if !(opts.tol > 0.0) {
        return Err(PriorityError::BadOptions("tol must be > 0"));
    }
    if opts.max_iter == 0 {
        return Err(PriorityError::BadOptions("max_iter must be >= 1"));
    }
    let n = m.order();
    if start.len() != n {
        return Err(PriorityError::LengthMismatch { expected: n, got: start.len() });
    }
    if start.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(PriorityError::BadOptions("start vector must be positive"));
    }

    let total: f64 = start.iter().sum();
    let mut w: Vec<f64> = start.iter().map(|x| x / total).collect();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        m.mul_vec(&w, &mut next);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        residual = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut w, &mut next);
        if residual < opts.tol {
            let lambda_max = lambda_max(m, &w);
            let vector = PriorityVector {
                labels: m.labels().to_vec(),
                weights: w,
                method: Method::Eigenvector,
            };
            return Ok(EigenPriority { vector, lambda_max, iterations });
        }
    }
    Err(PriorityError::NoConvergence { iterations, residual })
}

/// Normalized geometric means of the rows.
pub fn derive_geometric_row(m: &PairwiseMatrix) -> PriorityVector {
    let n = m.order();
    // Mean of logs keeps large orders away from overflow.
    let raw: Vec<f64> = (0..n)
        .map(|i| (m.row(i).iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp())
        .collect();
    PriorityVector::normalized(m.labels().to_vec(), raw, Method::GeometricRow)
        .expect("row geometric means of a positive matrix are positive")
}

pub fn derive(
    m: &PairwiseMatrix,
    method: Method,
    opts: PowerIteration,
) -> Result<PriorityVector, PriorityError> {
    match method {
        Method::Eigenvector => derive_eigenvector(m, opts).map(|e| e.vector),
        Method::GeometricRow => Ok(derive_geometric_row(m)),
    }
}

/// `mean_i (M·w)_i / w_i`. Equals `n` exactly on consistent matrices with
/// their generating weights.
pub fn lambda_max(m: &PairwiseMatrix, w: &[f64]) -> f64 {
    let n = m.order();
    let mut mw = vec![0.0; n];
    m.mul_vec(w, &mut mw);
    mw.iter().zip(w).map(|(a, b)| a / b).sum::<f64>() / n as f64
}

/// `(λmax − n)/(n − 1)`, or 0 for `n ≤ 1`.
pub fn consistency_index(lambda_max: f64, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (lambda_max - n as f64) / (n as f64 - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiProvenance {
    DerivedMonteCarlo,
    UserSupplied,
}

/// Random index by matrix order, starting at order 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomIndexTable {
    values: Vec<f64>,
    provenance: RiProvenance,
}

/// Shipped random index values for orders 1..=15.
///
/// Generated with `panelahp ri-estimate --max-order 15 --samples 1000000
/// --seed 20190901`: each upper-triangle entry drawn uniformly from the 17
/// scale levels, CI from the eigenvector route.
/// Order `n` is sampled with seed `20190901 + n`.
pub const BUILTIN_RI: [f64; MAX_RI_ORDER] = [
    0.0,
    0.0,
    0.5238970236792331,
    0.8846836409585563,
    1.1084283838257876,
    1.2491119082865187,
    1.3411023774593076,
    1.4043043196364877,
    1.4502654263504524,
    1.4860181317005943,
    1.5137448923029686,
    1.5365310809436081,
    1.554775296813,
    1.5704007278970649,
    1.5840140552072726,
];

/// Seed used to generate [`BUILTIN_RI`].
pub const BUILTIN_RI_SEED: u64 = 20190901;

/// Samples per order used to generate [`BUILTIN_RI`].
pub const BUILTIN_RI_SAMPLES: usize = 1_000_000;

impl RandomIndexTable {
    /// Validates `values` (index 0 is order 1): at most 15 entries, the first
    /// two zero, nondecreasing and finite.
    pub fn new(values: Vec<f64>, provenance: RiProvenance) -> Result<Self, PriorityError> {
        if values.len() > MAX_RI_ORDER {
            return Err(PriorityError::BadTable(format!(
                "{} entries, at most {MAX_RI_ORDER} allowed",
                values.len()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(PriorityError::BadTable(format!("RI({}) = {v}", k + 1)));
            }
            if k < 2 && *v != 0.0 {
                return Err(PriorityError::BadTable(format!("RI({}) must be 0, got {v}", k + 1)));
            }
            if k > 0 && *v < values[k - 1] {
                return Err(PriorityError::BadTable(format!(
                    "RI({}) = {v} is below RI({}) = {}",
                    k + 1,
                    k,
                    values[k - 1]
                )));
            }
        }
        Ok(Self { values, provenance })
    }

    pub fn builtin() -> Self {
        Self { values: BUILTIN_RI.to_vec(), provenance: RiProvenance::DerivedMonteCarlo }
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        if n == 0 {
            return None;
        }
        self.values.get(n - 1).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> RiProvenance {
        self.provenance
    }

    pub fn max_order(&self) -> usize {
        self.values.len()
    }
}

impl Default for RandomIndexTable {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub n: usize,
    pub lambda_max: f64,
    pub ci: f64,
    pub ri: f64,
    pub cr: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// CI values at or below this count as zero when RI is zero.
const ZERO_CI_TOL: f64 = 1e-9;

/// Consistency diagnostics of `m` against weights `w` derived from it.
pub fn consistency(
    m: &PairwiseMatrix,
    w: &PriorityVector,
    ri_table: &RandomIndexTable,
    threshold: f64,
) -> Result<ConsistencyReport, PriorityError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PriorityError::BadThreshold(threshold));
    }
    let n = m.order();
    if w.len() != n {
        return Err(PriorityError::LengthMismatch { expected: n, got: w.len() });
    }
    if let Some(k) = w.weights().iter().position(|x| *x <= 0.0) {
        return Err(PriorityError::DegenerateWeights(w.labels()[k].clone()));
    }
    if n <= 2 {
        // Every reciprocal matrix of order ≤ 2 is consistent.
        return Ok(ConsistencyReport {
            n,
            lambda_max: n as f64,
            ci: 0.0,
            ri: 0.0,
            cr: 0.0,
            threshold,
            accepted: true,
        });
    }
    let lambda_max = lambda_max(m, w.weights());
    let ci = consistency_index(lambda_max, n);
    let ri = ri_table.get(n).ok_or(PriorityError::MissingRI(n))?;
    let cr = if ri > 0.0 {
        ci / ri
    } else if ci <= ZERO_CI_TOL {
        0.0
    } else {
        return Err(PriorityError::ZeroRandomIndex { n, ci });
    };
    Ok(ConsistencyReport { n, lambda_max, ci, ri, cr, threshold, accepted: cr <= threshold })
}

/// Derivation plus diagnostics in one call.
pub fn assess(
    m: &PairwiseMatrix,
    method: Method,
    ri_table: &RandomIndexTable,
    threshold: f64,
) -> Result<(PriorityVector, ConsistencyReport), PriorityError> {
    let w = derive(m, method, PowerIteration::default())?;
    let report = consistency(m, &w, ri_table, threshold)?;
    Ok((w, report))
}
