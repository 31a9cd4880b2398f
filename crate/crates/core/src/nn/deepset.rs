use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, cw_loss, softmax_backward};
use super::mlp::{Mlp2, Mlp2Tape};
use crate::aggregators::cwtm_kept_indices;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::simplex::{argmax, softmax, validate_rows};

/// Layer widths of a DeepSet aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub classes: usize,
    /// Width of the pooled embedding.
    pub embed: usize,
    pub rho_hidden: usize,
    pub mu_hidden: usize,
}

impl Architecture {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            embed: 64,
            rho_hidden: 128,
            mu_hidden: 128,
        }
    }
}

/// How the per-client embeddings are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    /// Coordinate-wise trimmed mean discarding `f` embeddings per side.
    TrimmedMean(usize),
}

/// `mu(pool_i rho(z_i))` followed by a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSetModel {
    pub rho: Mlp2,
    pub mu: Mlp2,
    /// Seed the parameters were initialised from.
    pub seed: u64,
}

/// Forward record of one DeepSet evaluation.
#[derive(Debug, Clone)]
pub struct DeepSetTape {
    rows: Vec<Mlp2Tape>,
    /// For each embedding coordinate, the rows that entered the pooled value.
    /// `None` means every row did (mean pooling).
    kept: Option<Vec<Vec<usize>>>,
    pooled_from: usize,
    mu: Mlp2Tape,
    /// Pre-softmax class scores.
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    CarliniWagner,
}

/// Parameter gradients, laid out like [`Mlp2::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSetGrads {
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
}

impl DeepSetGrads {
    pub fn zeros_like(model: &DeepSetModel) -> Self {
        Self {
            rho: vec![0.0; model.rho.params().len()],
            mu: vec![0.0; model.mu.params().len()],
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.rho.iter_mut().chain(self.mu.iter_mut()).for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(&self.mu).all(|g| g.is_finite())
    }
}

impl DeepSetModel {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Init, &[]);
        let rho = Mlp2::init(arch.classes, arch.rho_hidden, arch.embed, &mut rng);
        let mu = Mlp2::init(arch.embed, arch.mu_hidden, arch.classes, &mut rng);
        Self { rho, mu, seed }
    }

    pub fn from_parts(rho: Mlp2, mu: Mlp2, seed: u64) -> Result<Self> {
        if rho.out_dim() != mu.in_dim() {
            return Err(Error::Dimension(format!(
                "rho emits {} features but mu expects {}",
                rho.out_dim(),
                mu.in_dim()
            )));
        }
        if rho.in_dim() != mu.out_dim() {
            return Err(Error::Dimension(format!(
                "rho reads {} classes but mu emits {}",
                rho.in_dim(),
                mu.out_dim()
            )));
        }
        Ok(Self { rho, mu, seed })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            classes: self.rho.in_dim(),
            embed: self.rho.out_dim(),
            rho_hidden: self.rho.hidden(),
            mu_hidden: self.mu.hidden(),
        }
    }

    pub fn classes(&self) -> usize {
        self.rho.in_dim()
    }

    pub fn forward(&self, rows: &[Vec<f64>], pooling: Pooling) -> Result<DeepSetTape> {
        let k = validate_rows(rows)?;
        if k != self.classes() {
            return Err(Error::Dimension(format!(
                "panel has {k} classes, model expects {}",
                self.classes()
            )));
        }
        if let Pooling::TrimmedMean(f) = pooling {
            if 2 * f >= rows.len() {
                return Err(Error::InvalidBound { n: rows.len(), f });
            }
        }
        Ok(self.forward_unchecked(rows, pooling))
    }

    pub(crate) fn forward_unchecked(&self, rows: &[Vec<f64>], pooling: Pooling) -> DeepSetTape {
        let tapes: Vec<Mlp2Tape> = rows.iter().map(|r| self.rho.forward_unchecked(r)).collect();
        let p = self.rho.out_dim();
        let (pooled, kept) = match pooling {
            Pooling::Mean => {
                // Canonical summation order keeps the output bit-identical
                // under client permutations.
                let order = canonical_order(rows);
                let mut pooled = vec![0.0; p];
                for &i in &order {
                    for (acc, v) in pooled.iter_mut().zip(&tapes[i].output) {
                        *acc += v;
                    }
                }
                let n = rows.len() as f64;
                pooled.iter_mut().for_each(|v| *v /= n);
                (pooled, None)
            }
            Pooling::TrimmedMean(f) => {
                let embeddings: Vec<Vec<f64>> = tapes.iter().map(|t| t.output.clone()).collect();
                let mut pooled = Vec::with_capacity(p);
                let mut kept = Vec::with_capacity(p);
                for j in 0..p {
                    let idx = cwtm_kept_indices(&embeddings, j, f);
                    pooled.push(idx.iter().map(|&i| embeddings[i][j]).sum::<f64>() / idx.len() as f64);
                    kept.push(idx);
                }
                (pooled, Some(kept))
            }
        };
        let mu = self.mu.forward_unchecked(&pooled);
        let scores = mu.output.clone();
        let probs = softmax(&scores);
        DeepSetTape {
            pooled_from: rows.len(),
            rows: tapes,
            kept,
            mu,
            scores,
            probs,
        }
    }

    /// Class probabilities with mean pooling.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward(rows, Pooling::Mean)?.probs)
    }

    pub fn classify(&self, rows: &[Vec<f64>], pooling: Pooling) -> Result<usize> {
        Ok(argmax(&self.forward(rows, pooling)?.probs))
    }

    /// Back-propagates `grad_scores = dL/d scores`. Accumulates parameter
    /// gradients when `grads` is given and returns the gradient with respect
    /// to each row listed in `input_rows`.
    pub fn backward(
        &self,
        tape: &DeepSetTape,
        grad_scores: &[f64],
        mut grads: Option<&mut DeepSetGrads>,
        input_rows: &[usize],
    ) -> Vec<Vec<f64>> {
        let grad_pooled = self
            .mu
            .backward(&tape.mu, grad_scores, grads.as_mut().map(|g| g.mu.as_mut_slice()), true)
            .expect("input gradient requested");
        let n = tape.pooled_from;
        let p = grad_pooled.len();
        // dL/d embedding_i
        let mut grad_embed = vec![vec![0.0; p]; n];
        match &tape.kept {
            None => {
                for g in grad_embed.iter_mut() {
                    for (gi, gp) in g.iter_mut().zip(&grad_pooled) {
                        *gi = gp / n as f64;
                    }
                }
            }
            Some(kept) => {
                for (j, idx) in kept.iter().enumerate() {
                    let share = grad_pooled[j] / idx.len() as f64;
                    for &i in idx {
                        grad_embed[i][j] = share;
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(input_rows.len());
        for (i, (t, ge)) in tape.rows.iter().zip(&grad_embed).enumerate() {
            let want = input_rows.contains(&i);
            if grads.is_none() && !want {
                continue;
            }
            let gx = self
                .rho
                .backward(t, ge, grads.as_mut().map(|g| g.rho.as_mut_slice()), want);
            if let Some(gx) = gx {
                out.push((i, gx));
            }
        }
        input_rows
            .iter()
            .map(|r| {
                out.iter()
                    .find(|(i, _)| i == r)
                    .map(|(_, g)| g.clone())
                    .expect("requested row is in the panel")
            })
            .collect()
    }

    /// Loss at `label` plus its gradients: parameters (when `grads` is
    /// given) and the probit rows listed in `input_rows`.
    pub fn loss_and_grads(
        &self,
        rows: &[Vec<f64>],
        label: usize,
        loss: LossKind,
        pooling: Pooling,
        grads: Option<&mut DeepSetGrads>,
        input_rows: &[usize],
    ) -> (f64, Vec<Vec<f64>>) {
        let tape = self.forward_unchecked(rows, pooling);
        let (value, grad_scores) = scores_loss(&tape, label, loss);
        let gin = self.backward(&tape, &grad_scores, grads, input_rows);
        (value, gin)
    }

    pub fn params_len(&self) -> usize {
        self.rho.params().len() + self.mu.params().len()
    }
}

/// Loss and its gradient with respect to the scores. Cross-entropy is taken on
/// the softmax probabilities, the CW loss on the raw scores.
pub(crate) fn scores_loss(tape: &DeepSetTape, label: usize, loss: LossKind) -> (f64, Vec<f64>) {
    match loss {
        LossKind::CrossEntropy => {
            let (v, gp) = cross_entropy(&tape.probs, label);
            (v, softmax_backward(&tape.probs, &gp))
        }
        LossKind::CarliniWagner => cw_loss(&tape.scores, label),
    }
}

fn canonical_order(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .iter()
            .zip(&rows[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}
