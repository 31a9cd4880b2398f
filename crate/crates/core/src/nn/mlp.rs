use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Two-layer perceptron `W2 relu(W1 x + b1) + b2`.
///
/// All parameters live in one flat buffer laid out as `W1 (hidden x in)`,
/// `b1`, `W2 (out x hidden)`, `b2`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    params: Vec<f64>,
}

/// Forward values of one [`Mlp2`] evaluation, enough to back-propagate.
#[derive(Debug, Clone)]
pub struct Mlp2Tape {
    pub input: Vec<f64>,
    /// Post-ReLU hidden activations.
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

pub(crate) fn param_count(in_dim: usize, hidden: usize, out_dim: usize) -> usize {
    hidden * in_dim + hidden + out_dim * hidden + out_dim
}

impl Mlp2 {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden,
            out_dim,
            params: vec![0.0; param_count(in_dim, hidden, out_dim)],
        }
    }

    /// He-style uniform initialisation, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`
    /// for weights and zero biases.
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(in_dim, hidden, out_dim);
        let a1 = (6.0 / in_dim as f64).sqrt();
        let a2 = (6.0 / hidden as f64).sqrt();
        let (w1, rest) = m.params.split_at_mut(hidden * in_dim);
        w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        let w2 = &mut rest[hidden..hidden + out_dim * hidden];
        w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        m
    }

    pub fn from_params(in_dim: usize, hidden: usize, out_dim: usize, params: Vec<f64>) -> Result<Self> {
        let expected = param_count(in_dim, hidden, out_dim);
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("mlp parameters"));
        }
        Ok(Self {
            in_dim,
            hidden,
            out_dim,
            params,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn blocks(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.hidden * self.in_dim);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.out_dim * self.hidden);
        (w1, b1, w2, b2)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Mlp2Tape> {
        if x.len() != self.in_dim {
            return Err(Error::Dimension(format!(
                "mlp input has {} entries, expected {}",
                x.len(),
                self.in_dim
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Mlp2Tape {
        let (w1, b1, w2, b2) = self.blocks();
        let hidden: Vec<f64> = w1
            .chunks_exact(self.in_dim)
            .zip(b1)
            .map(|(row, b)| relu(dot(row, x) + b))
            .collect();
        let output: Vec<f64> = w2
            .chunks_exact(self.hidden)
            .zip(b2)
            .map(|(row, b)| dot(row, &hidden) + b)
            .collect();
        Mlp2Tape {
            input: x.to_vec(),
            hidden,
            output,
        }
    }

    /// Back-propagates `grad_out = dL/d output`. Parameter gradients are
    /// accumulated into `param_grads` when given; the input gradient is
    /// returned when `want_input` is set.
    pub fn backward(
        &self,
        tape: &Mlp2Tape,
        grad_out: &[f64],
        param_grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (w1, _, w2, _) = self.blocks();
        let mut grad_hidden = vec![0.0; self.hidden];
        for (row, &g) in w2.chunks_exact(self.hidden).zip(grad_out) {
            if g != 0.0 {
                axpy(g, row, &mut grad_hidden);
            }
        }
        for (gh, &h) in grad_hidden.iter_mut().zip(&tape.hidden) {
            if h <= 0.0 {
                *gh = 0.0;
            }
        }
        if let Some(pg) = param_grads {
            let (gw1, rest) = pg.split_at_mut(self.hidden * self.in_dim);
            let (gb1, rest) = rest.split_at_mut(self.hidden);
            let (gw2, gb2) = rest.split_at_mut(self.out_dim * self.hidden);
            for ((row, gb), &g) in gw2.chunks_exact_mut(self.hidden).zip(gb2.iter_mut()).zip(grad_out) {
                if g != 0.0 {
                    axpy(g, &tape.hidden, row);
                    *gb += g;
                }
            }
            for ((row, gb), &g) in gw1.chunks_exact_mut(self.in_dim).zip(gb1.iter_mut()).zip(&grad_hidden) {
                if g != 0.0 {
                    axpy(g, &tape.input, row);
                    *gb += g;
                }
            }
        }
        want_input.then(|| {
            let mut gx = vec![0.0; self.in_dim];
            for (row, &g) in w1.chunks_exact(self.in_dim).zip(&grad_hidden) {
                if g != 0.0 {
                    axpy(g, row, &mut gx);
                }
            }
            gx
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// Propagates NaN, unlike `f64::max`.
fn relu(x: f64) -> f64 {
    if x < 0.0 { 0.0 } else { x }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn zero_net_outputs_zero() {
        let m = Mlp2::zeros(3, 4, 2);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap().output, vec![0.0, 0.0]);
    }

    #[test]
    fn relu_kills_negative_inputs() {
        let m = Mlp2::from_params(1, 1, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.forward(&[-3.0]).unwrap().output, vec![0.0]);
        assert_eq!(m.forward(&[2.5]).unwrap().output, vec![2.5]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = Mlp2::zeros(3, 4, 2);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Dimension(_))));
        assert!(Mlp2::from_params(1, 1, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream(9, Purpose::Init, &[]);
        let m = Mlp2::init(4, 6, 3, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |m: &Mlp2, x: &[f64]| dot(&m.forward(x).unwrap().output, &w);

        let tape = m.forward(&x).unwrap();
        let mut pg = vec![0.0; m.params().len()];
        let gx = m.backward(&tape, &w, Some(&mut pg), true).unwrap();

        let h = 1e-5;
        for (i, &g) in pg.iter().enumerate() {
            let (mut a, mut b) = (m.clone(), m.clone());
            a.params_mut()[i] += h;
            b.params_mut()[i] -= h;
            let fd = (loss(&a, &x) - loss(&b, &x)) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()).max(1e-3), "param {i}");
        }
        for j in 0..4 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (loss(&m, &a) - loss(&m, &b)) / (2.0 * h);
            assert!((fd - gx[j]).abs() <= 1e-4 * fd.abs().max(gx[j].abs()).max(1e-3), "input {j}");
        }
    }
}
