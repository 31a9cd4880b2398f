//! Simplex-valued domain types and the per-input statistics used by the
//! certificate: margin of a score vector and model dissimilarity of a panel.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries of a stored probit vector sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Quantum used to decide that all coordinates of a vector are equal.
pub const TIE_QUANTUM: f64 = 1e-12;

/// One client's class-probability vector for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitVector(Vec<f64>);

impl ProbitVector {
    /// Validates that `values` already lies on the simplex.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values, SIMPLEX_TOL)?;
        Ok(Self(values))
    }

    /// Rescales non-negative finite `values` so they sum to one.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("probit vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("probit vector"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::NotOnSimplex("negative entry".into()));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NotOnSimplex("entries sum to zero".into()));
        }
        values.iter_mut().for_each(|v| *v /= sum);
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for ProbitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_simplex(values: &[f64], tol: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty("probit vector"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probit vector"));
    }
    if let Some(v) = values.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::NotOnSimplex(format!("entry {v} outside [0, 1]")));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// The n client probits for one input together with its true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitPanel {
    pub input_id: String,
    pub label: usize,
    rows: Vec<Vec<f64>>,
}

impl ProbitPanel {
    pub fn new(input_id: impl Into<String>, label: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let input_id = input_id.into();
        let k = validate_rows(&rows)?;
        for (i, row) in rows.iter().enumerate() {
            check_simplex(row, SIMPLEX_TOL).map_err(|e| Error::InvalidPanel {
                id: input_id.clone(),
                msg: format!("client {i}: {e}"),
            })?;
        }
        if label >= k {
            return Err(Error::Label { label, classes: k });
        }
        Ok(Self {
            input_id,
            label,
            rows,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn classes(&self) -> usize {
        self.rows[0].len()
    }

    /// Coordinate-wise mean of the client probits.
    pub fn mean(&self) -> Vec<f64> {
        mean_rows(&self.rows)
    }

    pub fn with_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.input_id.clone(), self.label, rows)
    }
}

/// Checks that there is at least one row and every row has the same length.
/// Returns that length.
pub fn validate_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let first = rows.first().ok_or(Error::Empty("panel"))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::Empty("panel row"));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(Error::Dimension(format!(
            "row {i} has {} entries, expected {k}",
            r.len()
        )));
    }
    Ok(k)
}

pub(crate) fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows[0].len();
    let mut out = vec![0.0; k];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Client count, adversary bound and class count of a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n: usize,
    pub f: usize,
    pub k: usize,
}

impl SystemParams {
    pub fn new(n: usize, f: usize, k: usize) -> Result<Self> {
        if n == 0 || 2 * f >= n {
            return Err(Error::InvalidBound { n, f });
        }
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        Ok(Self { n, f, k })
    }
}

/// Softmax with max-subtraction.
pub fn project_softmax(logits: &[f64]) -> Result<ProbitVector> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(ProbitVector(softmax(logits)))
}

/// Unchecked softmax for internal hot loops; inputs must be finite.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Gap between the largest and second-largest coordinate. All-equal vectors
/// have an infinite margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Margin {
    Finite(f64),
    Infinite,
}

impl Margin {
    /// Strict comparison against a finite bound; `Infinite` exceeds every
    /// finite bound.
    pub fn exceeds(self, bound: f64) -> bool {
        match self {
            Margin::Finite(m) => m > bound,
            Margin::Infinite => bound.is_finite(),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Margin::Infinite)
    }

    /// `f64::INFINITY` for the infinite case.
    pub fn value(self) -> f64 {
        match self {
            Margin::Finite(m) => m,
            Margin::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Margin::Finite(m) => write!(f, "{m}"),
            Margin::Infinite => f.write_str("inf"),
        }
    }
}

pub fn margin(v: &[f64]) -> Result<Margin> {
    margin_with_quantum(v, TIE_QUANTUM)
}

pub fn margin_with_quantum(v: &[f64], quantum: f64) -> Result<Margin> {
    if v.len() < 2 {
        return Err(Error::TooFewClasses(v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("margin input"));
    }
    let q0 = (v[0] / quantum).round();
    if v.iter().all(|&x| (x / quantum).round() == q0) {
        return Ok(Margin::Infinite);
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in v {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    Ok(Margin::Finite(first - second))
}

/// Worst-coordinate standard deviation of the client probits,
/// `sqrt(max_k (1/n) sum_i (h_ik - mean_k)^2)`.
pub fn model_dissimilarity(panel: &ProbitPanel) -> f64 {
    dissimilarity_of_rows(panel.rows())
}

pub(crate) fn dissimilarity_of_rows(rows: &[Vec<f64>]) -> f64 {
    // Deviations are taken relative to the first row so that identical
    // clients give exactly zero.
    let n = rows.len() as f64;
    let origin = &rows[0];
    let mut worst = 0.0f64;
    for (k, o) in origin.iter().enumerate() {
        let m = rows.iter().map(|r| r[k] - o).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[k] - o - m).powi(2)).sum::<f64>() / n;
        worst = worst.max(var);
    }
    worst.sqrt()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}
