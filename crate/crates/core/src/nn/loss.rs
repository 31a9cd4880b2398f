/// Probabilities are clamped from below at this value inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln(probs[label])` and its gradient with respect to `probs`.
pub fn cross_entropy(probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    let p = probs[label];
    let mut grad = vec![0.0; probs.len()];
    if p >= PROB_FLOOR || p.is_nan() {
        grad[label] = -1.0 / p;
        (-p.ln(), grad)
    } else {
        (-PROB_FLOOR.ln(), grad)
    }
}

/// Carlini-Wagner margin loss on scores, `max_{k != label} s_k - s_label`,
/// and its gradient. Positive exactly when some wrong class out-scores the
/// label.
pub fn cw_loss(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut runner_up = None;
    for (k, &s) in scores.iter().enumerate() {
        if k == label {
            continue;
        }
        match runner_up {
            Some(r) if scores[r] >= s => {}
            _ => runner_up = Some(k),
        }
    }
    let r = runner_up.expect("cw loss needs at least two classes");
    let mut grad = vec![0.0; scores.len()];
    grad[r] = 1.0;
    grad[label] = -1.0;
    (scores[r] - scores[label], grad)
}

/// Pulls a gradient with respect to `softmax(v)` back to `v`, given the
/// softmax output `p`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter().zip(grad_p).map(|(pi, gi)| pi * (gi - inner)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::softmax;

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], 1).0, 0.0);
        let (l, _) = cross_entropy(&[0.25; 4], 3);
        assert!((l - 4f64.ln()).abs() < 1e-15);
        let (l, g) = cross_entropy(&[1.0, 0.0], 1);
        assert!((l - 1e12f64.ln()).abs() < 1e-9);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_gradient_through_softmax() {
        let v = [0.3, -1.2, 2.0, 0.1];
        let p = softmax(&v);
        let (_, gp) = cross_entropy(&p, 2);
        let gv = softmax_backward(&p, &gp);
        let h = 1e-5;
        for j in 0..4 {
            let mut a = v;
            let mut b = v;
            a[j] += h;
            b[j] -= h;
            let fd = (cross_entropy(&softmax(&a), 2).0 - cross_entropy(&softmax(&b), 2).0) / (2.0 * h);
            assert!((fd - gv[j]).abs() < 1e-4 * fd.abs().max(1e-3));
            // p - onehot closed form
            let closed = p[j] - if j == 2 { 1.0 } else { 0.0 };
            assert!((gv[j] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn cw_examples() {
        assert_eq!(cw_loss(&[0.0, 1.0, 0.0], 1).0, -1.0);
        assert_eq!(cw_loss(&[0.2; 5], 3).0, 0.0);
        let (l, g) = cw_loss(&[0.5, 0.1, 0.4], 0);
        assert!((l + 0.1).abs() < 1e-15);
        assert_eq!(g, vec![-1.0, 0.0, 1.0]);
    }
}
