//! Numeric oracle checks shared by `fedrob selftest` and the acceptance
//! suite. Each check is deterministic given its seed and reports a
//! pass/fail verdict plus a one-line summary.

use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::eval::{evaluate, EvalOptions};
use crate::aggregators::{check_fk_robustness, cwtm, kappa_cwtm, static_output, AggregatorKind};
use crate::attacks::{AttackKind, SimilarityMatrix};
use crate::error::Result;
use crate::nn::{Architecture, DeepSetGrads, DeepSetModel, LossKind, Pooling};
use crate::rng::{stream, Purpose, Rng};
use crate::simplex::{argmax, margin, softmax, ProbitPanel};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_rows(rng: &mut Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| scale * normal(rng)).collect()).collect()
}

/// Honest rows clustered around a shared logit vector.
fn clustered_probits(rng: &mut Rng, n: usize, k: usize, spread: f64) -> Vec<Vec<f64>> {
    let base: Vec<f64> = (0..k).map(|_| 2.0 * normal(rng)).collect();
    (0..n)
        .map(|_| softmax(&base.iter().map(|b| b + spread * normal(rng)).collect::<Vec<_>>()))
        .collect()
}

fn random_probit(rng: &mut Rng, k: usize) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => {
            let mut v = vec![0.0; k];
            v[rng.random_range(0..k)] = 1.0;
            v
        }
        1 => softmax(&(0..k).map(|_| 6.0 * normal(rng)).collect::<Vec<_>>()),
        _ => softmax(&(0..k).map(|_| normal(rng)).collect::<Vec<_>>()),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroid(rows: &[&Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; rows[0].len()];
    for r in rows {
        for (ci, v) in c.iter_mut().zip(r.iter()) {
            *ci += v;
        }
    }
    c.iter_mut().for_each(|ci| *ci /= rows.len() as f64);
    c
}

/// Exhaustive (f, kappa) check of the trimmed mean on random vectors with
/// n in {5, 7, 9}, f in {1, 2}, d in 1..=4.
pub fn check_cwtm_robustness(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut subsets = 0;
    for i in 0..instances {
        let mut rng = stream(seed, Purpose::Data, &[1, i as u64]);
        let n = [5, 7, 9][rng.random_range(0..3)];
        let f = rng.random_range(1..=2);
        let d = rng.random_range(1..=4);
        let mut rows = gaussian_rows(&mut rng, n, d, 1.0);
        // push up to f rows far away
        for row in rows.iter_mut().take(rng.random_range(0..=f)) {
            row.iter_mut().for_each(|v| *v += 50.0 * normal(&mut rng));
        }
        let kappa = kappa_cwtm(n, f)?;
        let report = check_fk_robustness(|v| cwtm(v, f).expect("valid bound"), &rows, f, kappa)?;
        violations += usize::from(!report.holds);
        worst = worst.max(report.max_ratio);
        subsets += report.subsets_checked;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(CheckOutcome {
        name: "cwtm-robustness",
        passed: violations == 0 && secs < 10.0,
        detail: format!(
            "{instances} instances, {subsets} subsets, {violations} violations, max ratio {worst:.4}, {secs:.2}s"
        ),
    })
}

/// Variance of a random (n - f)-subset against the full-set variance:
/// `(1/|S|) sum_S |v_i - mean_S|^2 <= (n/(n-f)) (1/n) sum |v_i - mean|^2`.
pub fn check_subset_variance(instances: usize, seed: u64) -> CheckOutcome {
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    for i in 0..instances {
        let mut rng = stream(seed, Purpose::Data, &[2, i as u64]);
        let n = rng.random_range(3..=20);
        let f = rng.random_range(0..=(n - 1) / 2);
        let d = rng.random_range(1..=6);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let rows = gaussian_rows(&mut rng, n, d, scale);
        let subset = index::sample(&mut rng, n, n - f).into_vec();
        let all: Vec<&Vec<f64>> = rows.iter().collect();
        let picked: Vec<&Vec<f64>> = subset.iter().map(|&j| &rows[j]).collect();
        let (ca, cs) = (centroid(&all), centroid(&picked));
        let lhs = picked.iter().map(|r| sq_dist(r, &cs)).sum::<f64>() / picked.len() as f64;
        let rhs = n as f64 / (n - f) as f64 * all.iter().map(|r| sq_dist(r, &ca)).sum::<f64>() / n as f64;
        let slack = rhs - lhs;
        min_slack = min_slack.min(slack);
        violations += usize::from(slack < -1e-9);
    }
    CheckOutcome {
        name: "subset-variance",
        passed: violations == 0,
        detail: format!("{instances} instances, {violations} violations, min slack {min_slack:.3e}"),
    }
}

/// Whenever the trimmed mean of a corrupted panel stays within margin/2 of
/// the clean mean in every coordinate, its argmax must be unchanged.
pub fn check_margin_sufficiency(panels: usize, corruptions: usize, seed: u64) -> Result<CheckOutcome> {
    let mut applicable = 0;
    let mut violations = 0;
    for i in 0..panels {
        let mut rng = stream(seed, Purpose::Data, &[3, i as u64]);
        let n = rng.random_range(5..=17);
        let f = rng.random_range(1..=(n - 1) / 2);
        let k = rng.random_range(2..=10);
        let spread = [0.05, 0.3, 1.0][rng.random_range(0..3)];
        let rows = clustered_probits(&mut rng, n, k, spread);
        let clean = ProbitPanel::new(format!("m{i}"), 0, rows.clone())?.mean();
        let m = margin(&clean)?.value();
        let top = argmax(&clean);
        for _ in 0..corruptions {
            let mut corrupted = rows.clone();
            let count = rng.random_range(0..=f);
            for j in index::sample(&mut rng, n, count) {
                corrupted[j] = random_probit(&mut rng, k);
            }
            let out = cwtm(&corrupted, f)?;
            let dev = out.iter().zip(&clean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dev < m / 2.0 {
                applicable += 1;
                violations += usize::from(argmax(&out) != top);
            }
        }
    }
    Ok(CheckOutcome {
        name: "margin-sufficiency",
        passed: violations == 0,
        detail: format!(
            "{panels} panels x {corruptions} corruptions, {applicable} within margin/2, {violations} violations"
        ),
    })
}

/// `u = (0.5, 0.5 - eps, eps)` and `v = (0.5 - eps, 0.5, eps)` are `sqrt(2) eps`
/// apart yet have different argmaxes.
pub fn check_counter_example(eps_values: &[f64]) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut ok = true;
    for &eps in eps_values {
        let u = [0.5, 0.5 - eps, eps];
        let v = [0.5 - eps, 0.5, eps];
        let err = (sq_dist(&u, &v).sqrt() - std::f64::consts::SQRT_2 * eps).abs();
        worst = worst.max(err);
        ok &= err <= 1e-12 && argmax(&u) == 0 && argmax(&v) == 1;
    }
    CheckOutcome {
        name: "counter-example",
        passed: ok,
        detail: format!("eps {eps_values:?}, max distance error {worst:.2e}"),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference of `loss` at `x[j]`. Retries with smaller steps when
/// the first step straddles an activation or trimming kink.
fn fd_matches(analytic: f64, mut loss: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let mut best = f64::INFINITY;
    for h in [1e-5, 1e-6, 1e-7] {
        let fd = (loss(x + h) - loss(x - h)) / (2.0 * h);
        best = best.min(rel_err(analytic, fd));
        if best < 1e-4 {
            break;
        }
    }
    best
}

/// Parameter and input gradients of random DeepSets (mean and trimmed
/// pooling, cross-entropy and CW loss) against central differences.
pub fn check_deepset_gradients(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut checked = 0;
    for i in 0..instances {
        let mut rng = stream(seed, Purpose::Data, &[6, i as u64]);
        let k = rng.random_range(2..=5);
        let arch = Architecture {
            classes: k,
            embed: rng.random_range(2..=6),
            rho_hidden: rng.random_range(3..=8),
            mu_hidden: rng.random_range(3..=8),
        };
        let mut model = DeepSetModel::new(arch, seed.wrapping_add(i as u64));
        // Zero-initialised biases can put every unit exactly on its ReLU
        // kink; jitter to land on a generic point.
        for p in model.rho.params_mut().iter_mut().chain(model.mu.params_mut().iter_mut()) {
            *p += 0.1 * normal(&mut rng);
        }
        let n = rng.random_range(3..=9);
        let rows = clustered_probits(&mut rng, n, k, 1.0);
        let label = rng.random_range(0..k);
        let pooling = if rng.random_bool(0.5) {
            Pooling::Mean
        } else {
            Pooling::TrimmedMean(rng.random_range(0..=(n - 1) / 2))
        };
        let loss = if rng.random_bool(0.5) { LossKind::CrossEntropy } else { LossKind::CarliniWagner };
        let all_rows: Vec<usize> = (0..n).collect();
        let mut grads = DeepSetGrads::zeros_like(&model);
        let (_, gin) = model.loss_and_grads(&rows, label, loss, pooling, Some(&mut grads), &all_rows);
        let eval = |m: &DeepSetModel, r: &[Vec<f64>]| m.loss_and_grads(r, label, loss, pooling, None, &[]).0;

        let mut record = |e: f64| {
            worst = worst.max(e);
            failures += usize::from(e >= 1e-4);
            checked += 1;
        };
        for (part, analytic) in [(0, &grads.rho), (1, &grads.mu)] {
            for (j, &a) in analytic.iter().enumerate() {
                let mut probe = model.clone();
                let x = if part == 0 { probe.rho.params()[j] } else { probe.mu.params()[j] };
                record(fd_matches(
                    a,
                    |v| {
                        if part == 0 {
                            probe.rho.params_mut()[j] = v;
                        } else {
                            probe.mu.params_mut()[j] = v;
                        }
                        eval(&probe, &rows)
                    },
                    x,
                ));
            }
        }
        for (r, g) in gin.iter().enumerate() {
            for (c, &a) in g.iter().enumerate() {
                let mut probe = rows.clone();
                let x = rows[r][c];
                record(fd_matches(
                    a,
                    |v| {
                        probe[r][c] = v;
                        eval(&model, &probe)
                    },
                    x,
                ));
            }
        }
    }
    Ok(CheckOutcome {
        name: "deepset-gradients",
        passed: failures == 0,
        detail: format!("{instances} models, {checked} partials, {failures} above 1e-4, max rel error {worst:.2e}"),
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Static rules and DeepSet outputs under random client permutations, plus
/// DeepSet (mean pooling) and the mean rule under duplication of every client.
pub fn check_permutation_invariance(instances: usize, perms: usize, seed: u64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let mut inexact = 0;
    for i in 0..instances {
        let mut rng = stream(seed, Purpose::Data, &[7, i as u64]);
        let n = rng.random_range(3..=17);
        let f = rng.random_range(0..=(n - 1) / 2);
        let k = rng.random_range(2..=10);
        let rows = clustered_probits(&mut rng, n, k, 1.0);
        let arch = Architecture {
            classes: k,
            embed: 8,
            rho_hidden: 12,
            mu_hidden: 12,
        };
        let model = DeepSetModel::new(arch, seed ^ i as u64);
        let outputs = |r: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
            let mut out = AggregatorKind::static_suite()
                .iter()
                .map(|rule| static_output(rule, r, f))
                .collect::<Result<Vec<_>>>()?;
            out.push(model.forward(r, Pooling::Mean)?.probs);
            out.push(model.forward(r, Pooling::TrimmedMean(f))?.probs);
            Ok(out)
        };
        let base = outputs(&rows)?;
        let mut shuffled = rows.clone();
        for _ in 0..perms {
            shuffled.shuffle(&mut rng);
            for (a, b) in base.iter().zip(outputs(&shuffled)?) {
                let d = max_abs_diff(a, &b);
                worst = worst.max(d);
                inexact += usize::from(d != 0.0);
            }
        }
        let doubled: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        for (a, b) in [
            (&base[0], static_output(&AggregatorKind::Mean, &doubled, f)?),
            (&base[4], model.forward(&doubled, Pooling::Mean)?.probs),
        ] {
            worst = worst.max(max_abs_diff(a, &b));
        }
    }
    Ok(CheckOutcome {
        name: "permutation-invariance",
        passed: worst < 1e-12,
        detail: format!(
            "{instances} instances x {perms} permutations, max deviation {worst:.2e}, {inexact} non-bit-exact outputs"
        ),
    })
}

/// Certified, non-degenerate panels must keep their trimmed-mean prediction
/// under every attack.
pub fn check_certificate_soundness(
    panels: &[ProbitPanel],
    similarity: &SimilarityMatrix,
    f: usize,
    seeds: &[u64],
) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut opts = EvalOptions::new(f, seeds.to_vec());
    opts.attack.similarity = Some(similarity.clone());
    let report = evaluate(panels, &[AggregatorKind::Cwtm], &AttackKind::ALL, &opts, None)?;
    let c = &report.certificate;
    let secs = start.elapsed().as_secs_f64();
    Ok(CheckOutcome {
        name: "certificate-soundness",
        passed: c.soundness_violations == 0,
        detail: format!(
            "{} panels, {} certified ({} degenerate), {} checked, {} violations, {secs:.1}s",
            c.panels, c.certified, c.degenerate, c.soundness_checked, c.soundness_violations
        ),
    })
}

/// Small, fast version of the oracle suite.
pub fn selftest(seed: u64) -> Result<Vec<CheckOutcome>> {
    // Low dissimilarity so that a fair share of panels is certified.
    let data = super::generate_synthetic(&super::SyntheticSpec {
        samples: 200,
        alpha: 1000.0,
        noise: 0.3,
        sample_noise: 0.3,
        seed,
        ..Default::default()
    })?;
    let mut out = vec![
        check_cwtm_robustness(40, seed)?,
        check_subset_variance(200, seed),
        check_margin_sufficiency(100, 20, seed)?,
        check_counter_example(&[0.2, 0.1, 0.01, 1e-4]),
        check_deepset_gradients(10, seed)?,
        check_permutation_invariance(20, 20, seed)?,
        check_certificate_soundness(&data.dataset.panels, &data.similarity, 4, &[seed])?,
    ];
    let mut opts = EvalOptions::new(4, vec![seed]);
    opts.attack.similarity = Some(data.similarity.clone());
    let report = evaluate(
        &data.dataset.panels,
        &AggregatorKind::static_suite(),
        &AttackKind::ALL,
        &opts,
        None,
    )?;
    let slack = report.aggregators.iter().map(|a| a.decomposition_slack).fold(f64::INFINITY, f64::min);
    out.push(CheckOutcome {
        name: "risk-decomposition",
        passed: report.aggregators.iter().all(|a| a.decomposition_holds),
        detail: format!("min slack {slack:.3e} over {} aggregators", report.aggregators.len()),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in selftest(3).unwrap() {
            assert!(c.passed, "{}", c.line());
        }
    }
}
