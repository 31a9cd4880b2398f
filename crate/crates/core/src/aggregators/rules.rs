//! Static averaging rules over an n x d matrix of client vectors.

use crate::error::{Error, Result};

pub fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    crate::simplex::mean_rows(rows)
}

fn check_trim(n: usize, f: usize) -> Result<()> {
    if n == 0 || 2 * f >= n {
        return Err(Error::InvalidBound { n, f });
    }
    Ok(())
}

/// Mean of `values` after discarding the `f` smallest and `f` largest.
pub fn trimmed_mean_scalar(values: &[f64], f: usize) -> Result<f64> {
    check_trim(values.len(), f)?;
    let mut sorted = values.to_vec();
    Ok(trimmed_mean_sorted(&mut sorted, f))
}

fn trimmed_mean_sorted(buf: &mut [f64], f: usize) -> f64 {
    buf.sort_by(f64::total_cmp);
    let kept = &buf[f..buf.len() - f];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Coordinate-wise trimmed mean. The output is not re-projected onto the
/// simplex.
pub fn cwtm(rows: &[Vec<f64>], f: usize) -> Result<Vec<f64>> {
    check_trim(rows.len(), f)?;
    let d = crate::simplex::validate_rows(rows)?;
    if f == 0 {
        // Same summation order as the mean, so the two agree bit for bit.
        return Ok(mean(rows));
    }
    let mut column = vec![0.0; rows.len()];
    Ok((0..d)
        .map(|k| {
            for (c, r) in column.iter_mut().zip(rows) {
                *c = r[k];
            }
            trimmed_mean_sorted(&mut column, f)
        })
        .collect())
}

/// Row indices that survive trimming in coordinate `k`, in sorted order of
/// their values. Used to back-propagate through the trimmed mean.
pub(crate) fn cwtm_kept_indices(rows: &[Vec<f64>], k: usize, f: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| rows[a][k].total_cmp(&rows[b][k]));
    idx[f..rows.len() - f].to_vec()
}

/// Coordinate-wise median; even n takes the midpoint of the two central
/// order statistics.
pub fn cwmed(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = crate::simplex::validate_rows(rows)?;
    let n = rows.len();
    let mut column = vec![0.0; n];
    Ok((0..d)
        .map(|k| {
            for (c, r) in column.iter_mut().zip(rows) {
                *c = r[k];
            }
            column.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                column[n / 2]
            } else {
                0.5 * (column[n / 2 - 1] + column[n / 2])
            }
        })
        .collect())
}

/// Weiszfeld settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound on distances in the reweighting denominators.
    pub floor: f64,
}

impl Default for GmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1000,
            floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmResult {
    pub point: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Geometric median by Weiszfeld iteration, started from the coordinate-wise
/// mean.
pub fn geometric_median(rows: &[Vec<f64>], opts: GmOptions) -> Result<GmResult> {
    crate::simplex::validate_rows(rows)?;
    // Canonical row order makes the result bit-identical under client
    // permutations.
    let mut sorted: Vec<&Vec<f64>> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let d = rows[0].len();
    let mut y = {
        let mut m = vec![0.0; d];
        for r in &sorted {
            for (o, v) in m.iter_mut().zip(r.iter()) {
                *o += v;
            }
        }
        m.iter_mut().for_each(|o| *o /= sorted.len() as f64);
        m
    };
    let mut next = vec![0.0; d];
    for it in 1..=opts.max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for r in &sorted {
            let dist = r
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let w = 1.0 / dist.max(opts.floor);
            total += w;
            for (o, v) in next.iter_mut().zip(r.iter()) {
                *o += w * v;
            }
        }
        next.iter_mut().for_each(|v| *v /= total);
        let step = next
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut y, &mut next);
        if step < opts.tol {
            return Ok(GmResult {
                point: y,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(GmResult {
        point: y,
        converged: false,
        iterations: opts.max_iter,
    })
}

/// Sum of Euclidean distances from `point` to every row.
pub fn gm_objective(rows: &[Vec<f64>], point: &[f64]) -> f64 {
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(point)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&[vec![1.0, 0.0], vec![0.0, 1.0]]), vec![0.5, 0.5]);
        assert_eq!(mean(&[vec![0.2, 0.8]]), vec![0.2, 0.8]);
        let eps = 0.01;
        let m = mean(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.5 - eps, eps],
        ]);
        let expected = [0.5, (1.5 - eps) / 3.0, eps / 3.0];
        for (a, b) in m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_eq!(trimmed_mean_scalar(&[0.0, 1.0, 2.0, 3.0, 100.0], 1).unwrap(), 2.0);
        assert_eq!(trimmed_mean_scalar(&[1.0, 2.0, 6.0], 0).unwrap(), 3.0);
        assert_eq!(trimmed_mean_scalar(&[0.3; 7], 3).unwrap(), 0.3);
        assert!(matches!(
            trimmed_mean_scalar(&[1.0, 2.0], 1),
            Err(Error::InvalidBound { n: 2, f: 1 })
        ));
    }

    #[test]
    fn cwtm_examples() {
        let rows = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert_eq!(cwtm(&rows, 1).unwrap(), vec![1.0]);
        let rows = vec![vec![0.1, 0.9], vec![0.4, 0.6], vec![0.7, 0.3]];
        assert_eq!(cwtm(&rows, 0).unwrap(), mean(&rows));
    }

    #[test]
    fn cwtm_matches_sort_and_slice_oracle() {
        use rand::Rng as _;
        let mut rng = crate::rng::stream(11, crate::rng::Purpose::Data, &[]);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let got = cwtm(&rows, 2).unwrap();
        for k in 0..4 {
            let mut col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected = (col[2] + col[3] + col[4]) / 3.0;
            assert!((got[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn cwmed_examples() {
        let odd = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert_eq!(cwmed(&odd).unwrap(), vec![1.0]);
        let even = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(cwmed(&even).unwrap(), vec![1.5]);
        let perm = vec![vec![10.0], vec![0.0], vec![1.0]];
        assert_eq!(cwmed(&perm).unwrap(), cwmed(&odd).unwrap());
    }

    #[test]
    fn gm_examples() {
        let same = vec![vec![0.2, 0.3, 0.5]; 4];
        let r = geometric_median(&same, GmOptions::default()).unwrap();
        assert_eq!(r.point, vec![0.2, 0.3, 0.5]);
        assert!(r.converged);

        let line = vec![vec![0.0], vec![0.0], vec![10.0]];
        let r = geometric_median(&line, GmOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.point[0].abs() < 1e-9, "{:?}", r.point);
    }

    #[test]
    fn gm_reports_non_convergence() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = geometric_median(
            &rows,
            GmOptions {
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    proptest! {
        #[test]
        fn gm_beats_the_mean(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..9)) {
            let gm = geometric_median(&rows, GmOptions::default()).unwrap();
            let m = mean(&rows);
            prop_assert!(gm_objective(&rows, &gm.point) <= gm_objective(&rows, &m) + 1e-9);
        }

        #[test]
        fn translation_equivariance(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 5..9),
            shift in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let moved: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().zip(&shift).map(|(a, b)| a + b).collect())
                .collect();
            let check = |a: Vec<f64>, b: Vec<f64>, tol: f64| {
                a.iter().zip(&b).zip(&shift).all(|((x, y), s)| (x + s - y).abs() <= tol)
            };
            prop_assert!(check(mean(&rows), mean(&moved), 1e-12));
            prop_assert!(check(cwtm(&rows, 2).unwrap(), cwtm(&moved, 2).unwrap(), 1e-12));
            prop_assert!(check(cwmed(&rows).unwrap(), cwmed(&moved).unwrap(), 1e-12));
            let gm_a = geometric_median(&rows, GmOptions::default()).unwrap().point;
            let gm_b = geometric_median(&moved, GmOptions::default()).unwrap().point;
            prop_assert!(check(gm_a, gm_b, 1e-6));
        }

        #[test]
        fn cwmed_is_maximal_cwtm_for_odd_n(
            half in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::Rng as _;
            let n = 2 * half + 1;
            let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Data, &[]);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
            prop_assert_eq!(cwmed(&rows).unwrap(), cwtm(&rows, (n - 1) / 2).unwrap());
        }
    }
}
