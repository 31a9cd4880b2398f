//! (f, kappa)-robust averaging: the robustness coefficient of the trimmed mean
//! and an exhaustive checker of the defining inequality.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Largest n for which the exhaustive subset check is allowed.
pub const EXHAUSTIVE_CAP: usize = 12;

/// Robustness coefficient of the coordinate-wise trimmed mean,
/// `6f/(n-2f) * (1 + f/(n-2f))`.
pub fn kappa_cwtm(n: usize, f: usize) -> Result<f64> {
    if n == 0 || 2 * f >= n {
        return Err(Error::InvalidBound { n, f });
    }
    let r = f as f64 / (n - 2 * f) as f64;
    Ok(6.0 * r * (1.0 + r))
}

/// Outcome of checking an aggregation rule against the robust-averaging
/// inequality on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub holds: bool,
    /// Largest ratio `||rule(v) - mean_S||^2 / (kappa/|S| * sum_S ||v_i - mean_S||^2)`
    /// over the subsets examined. A ratio above one is a violation.
    pub max_ratio: f64,
    /// Subset attaining `max_ratio`.
    pub witness: Vec<usize>,
    pub subsets_checked: usize,
}

struct SubsetTerms {
    lhs: f64,
    rhs: f64,
}

fn subset_terms(output: &[f64], vectors: &[Vec<f64>], subset: &[usize], kappa: f64) -> SubsetTerms {
    let d = output.len();
    let size = subset.len() as f64;
    let mut centre = vec![0.0; d];
    for &i in subset {
        for (c, v) in centre.iter_mut().zip(&vectors[i]) {
            *c += v;
        }
    }
    centre.iter_mut().for_each(|c| *c /= size);
    let lhs = output
        .iter()
        .zip(&centre)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    let spread: f64 = subset
        .iter()
        .map(|&i| {
            vectors[i]
                .iter()
                .zip(&centre)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    SubsetTerms {
        lhs,
        rhs: kappa / size * spread,
    }
}

fn ratio(t: &SubsetTerms) -> f64 {
    if t.rhs > 0.0 {
        t.lhs / t.rhs
    } else if t.lhs <= 1e-24 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn violates(t: &SubsetTerms) -> bool {
    t.lhs > t.rhs + 1e-12 * (1.0 + t.rhs)
}

fn validate(vectors: &[Vec<f64>], f: usize) -> Result<()> {
    crate::simplex::validate_rows(vectors)?;
    let n = vectors.len();
    if 2 * f >= n {
        return Err(Error::InvalidBound { n, f });
    }
    Ok(())
}

/// Enumerates every subset of size n - f and checks the robust-averaging
/// inequality for `rule` with coefficient `kappa`.
pub fn check_fk_robustness<R>(
    rule: R,
    vectors: &[Vec<f64>],
    f: usize,
    kappa: f64,
) -> Result<RobustnessReport>
where
    R: Fn(&[Vec<f64>]) -> Vec<f64>,
{
    validate(vectors, f)?;
    let n = vectors.len();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::SubsetCap {
            n,
            size: n - f,
            cap: EXHAUSTIVE_CAP,
        });
    }
    let output = rule(vectors);
    let mut report = RobustnessReport {
        holds: true,
        max_ratio: f64::NEG_INFINITY,
        witness: Vec::new(),
        subsets_checked: 0,
    };
    for_each_combination(n, n - f, |subset| {
        record(&mut report, &output, vectors, subset, kappa);
    });
    Ok(report)
}

/// Like [`check_fk_robustness`] but examines `samples` uniformly drawn
/// subsets; usable for any n.
pub fn check_fk_robustness_sampled<R>(
    rule: R,
    vectors: &[Vec<f64>],
    f: usize,
    kappa: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<RobustnessReport>
where
    R: Fn(&[Vec<f64>]) -> Vec<f64>,
{
    validate(vectors, f)?;
    let n = vectors.len();
    let output = rule(vectors);
    let mut report = RobustnessReport {
        holds: true,
        max_ratio: f64::NEG_INFINITY,
        witness: Vec::new(),
        subsets_checked: 0,
    };
    for _ in 0..samples {
        let mut subset = index::sample(rng, n, n - f).into_vec();
        subset.sort_unstable();
        record(&mut report, &output, vectors, &subset, kappa);
    }
    Ok(report)
}

fn record(
    report: &mut RobustnessReport,
    output: &[f64],
    vectors: &[Vec<f64>],
    subset: &[usize],
    kappa: f64,
) {
    let t = subset_terms(output, vectors, subset, kappa);
    let r = ratio(&t);
    if violates(&t) {
        report.holds = false;
    }
    if r > report.max_ratio || report.witness.is_empty() {
        report.max_ratio = r;
        report.witness = subset.to_vec();
    }
    report.subsets_checked += 1;
}

/// Calls `visit` with every size-`m` subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, m: usize, mut visit: impl FnMut(&[usize])) {
    if m > n {
        return;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        visit(&idx);
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - m {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
