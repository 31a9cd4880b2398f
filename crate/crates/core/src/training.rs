//! Adversarial training of the DeepSet aggregator and DeepSet-TM inference.
//!
//! Every inner sample draws an adversary count m (weighted by C(n, m)), a
//! client permutation whose last m slots are adversarial, and random
//! adversary logits. The logits are pushed up the cross-entropy by S
//! sign-gradient steps (each step re-projected through softmax), and the
//! model then takes one Adam step on the resulting corrupted batch.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, softmax_backward, AdamConfig, AdamState, DeepSetGrads, DeepSetModel, LossKind, Pooling,
};
use crate::rng::{stream, Purpose, Rng};
use crate::simplex::{argmax, softmax, ProbitPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Outer steps E; each draws one mini-batch.
    pub steps: usize,
    /// Inner adversarial samples N per outer step.
    pub samples: usize,
    /// Sign-gradient step size gamma of the inner attack.
    pub fgsm_step: f64,
    /// Inner attack iterations S.
    pub adv_steps: usize,
    /// Adam learning rate eta.
    pub lr: f64,
    pub batch: usize,
    /// Largest number of corrupted clients per training panel.
    pub f: usize,
    pub seed: u64,
    /// Draw m, the permutation and the initial logits per example instead of
    /// once per batch.
    pub per_example_draws: bool,
    /// Standard deviation of the initial adversary logits.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1,
            samples: 300,
            fgsm_step: 0.05,
            adv_steps: 50,
            lr: 5e-5,
            batch: 64,
            f: 4,
            seed: 0,
            per_example_draws: false,
            init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    /// Sets `steps` so the run covers `epochs` passes over `dataset_len`
    /// panels.
    pub fn with_epochs(mut self, epochs: f64, dataset_len: usize) -> Self {
        self.steps = ((epochs * dataset_len as f64) / self.batch as f64).ceil().max(1.0) as usize;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.steps == 0 || self.samples == 0 || self.adv_steps == 0 || self.batch == 0 {
            return Err(Error::Config(
                "steps, samples, adv_steps and batch must all be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.fgsm_step > 0.0 && self.init_scale > 0.0) {
            return Err(Error::Config("lr, fgsm_step and init_scale must be positive".into()));
        }
        if 2 * self.f >= n {
            return Err(Error::InvalidBound { n, f: self.f });
        }
        Ok(())
    }
}

/// Draws m in {1, ..., f} with probability proportional to C(n, m).
pub fn sample_adversary_count(f: usize, n: usize, rng: &mut Rng) -> usize {
    assert!(f >= 1 && 2 * f < n, "need 1 <= f and 2f < n");
    let weights = binomial_weights(f, n);
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (m, w) in weights.iter().enumerate() {
        if u < *w {
            return m + 1;
        }
        u -= w;
    }
    f
}

/// C(n, m) for m = 1..=f.
pub fn binomial_weights(f: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(f);
    let mut c = 1.0;
    for m in 1..=f {
        c = c * (n + 1 - m) as f64 / m as f64;
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Mean cross-entropy on the uncorrupted batch before the step.
    pub clean_loss: f64,
    /// Mean cross-entropy over the N corrupted batches.
    pub adv_loss: f64,
}

pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("step,clean_loss,adv_loss\n");
    for r in trace {
        s.push_str(&format!("{},{:?},{:?}\n", r.step, r.clean_loss, r.adv_loss));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepSetModel,
    pub trace: Vec<TraceRow>,
    /// Adam updates applied to the parameters.
    pub updates: u64,
}

/// Training stopped early; carries the trace up to the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub trace: Vec<TraceRow>,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

struct Draw {
    m: usize,
    perm: Vec<usize>,
    logits: Vec<Vec<f64>>,
}

fn draw(f: usize, n: usize, k: usize, scale: f64, rng: &mut Rng) -> Draw {
    let m = if f == 0 { 0 } else { sample_adversary_count(f, n, rng) };
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let logits = (0..m)
        .map(|_| (0..k).map(|_| scale * { let z: f64 = StandardNormal.sample(rng); z }).collect())
        .collect();
    Draw { m, perm, logits }
}

/// Honest rows in permuted order followed by softmax of the adversary logits.
fn assemble(panel: &ProbitPanel, d: &Draw, logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = panel.n();
    let mut rows: Vec<Vec<f64>> = d.perm[..n - d.m].iter().map(|&i| panel.rows()[i].clone()).collect();
    rows.extend(logits.iter().map(|v| softmax(v)));
    rows
}

/// Sign-gradient ascent of the cross-entropy on the adversary logits.
fn inner_attack(
    model: &DeepSetModel,
    panel: &ProbitPanel,
    d: &Draw,
    cfg: &TrainConfig,
) -> Vec<Vec<f64>> {
    let n = panel.n();
    let slots: Vec<usize> = (n - d.m..n).collect();
    let mut logits = d.logits.clone();
    if d.m == 0 {
        return assemble(panel, d, &logits);
    }
    let mut rows = assemble(panel, d, &logits);
    for _ in 0..cfg.adv_steps {
        let (_, grads) =
            model.loss_and_grads(&rows, panel.label, LossKind::CrossEntropy, Pooling::Mean, None, &slots);
        for (slot, v) in logits.iter_mut().enumerate() {
            let gv = softmax_backward(&rows[n - d.m + slot], &grads[slot]);
            for (x, g) in v.iter_mut().zip(gv) {
                if g != 0.0 {
                    *x += cfg.fgsm_step * g.signum();
                }
            }
            rows[n - d.m + slot] = softmax(v);
        }
    }
    rows
}

fn apply_update(
    model: &mut DeepSetModel,
    grads: &DeepSetGrads,
    states: &mut (AdamState, AdamState),
    adam: &AdamConfig,
) {
    adam_step(model.rho.params_mut(), &grads.rho, &mut states.0, adam);
    adam_step(model.mu.params_mut(), &grads.mu, &mut states.1, adam);
}

/// Trains `model` on clean panels. With `cfg.f == 0` this is ordinary
/// DeepSet training (N clean updates per outer step).
pub fn adversarial_train(
    mut model: DeepSetModel,
    dataset: &[ProbitPanel],
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error: Error, trace: Vec<TraceRow>| TrainFailure { error, trace };
    let first = dataset
        .first()
        .ok_or_else(|| fail(Error::Empty("training dataset"), Vec::new()))?;
    let n = first.n();
    let k = first.classes();
    if let Err(e) = cfg.validate(n) {
        return Err(fail(e, Vec::new()));
    }
    if let Some(p) = dataset.iter().find(|p| p.n() != n || p.classes() != k) {
        return Err(fail(
            Error::InvalidPanel {
                id: p.input_id.clone(),
                msg: "inconsistent client or class count".into(),
            },
            Vec::new(),
        ));
    }
    if k != model.classes() {
        return Err(fail(
            Error::Dimension(format!("dataset has {k} classes, model expects {}", model.classes())),
            Vec::new(),
        ));
    }

    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut states = (
        AdamState::new(model.rho.params().len()),
        AdamState::new(model.mu.params().len()),
    );
    let mut batch_rng = stream(cfg.seed, Purpose::Train, &[0]);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch);
        while batch.len() < cfg.batch {
            if cursor == order.len() {
                order = (0..dataset.len()).collect();
                order.shuffle(&mut batch_rng);
                cursor = 0;
            }
            batch.push(&dataset[order[cursor]]);
            cursor += 1;
        }

        let clean_loss = batch
            .iter()
            .map(|p| {
                let probs = model.forward_unchecked(p.rows(), Pooling::Mean).probs;
                crate::nn::cross_entropy(&probs, p.label).0
            })
            .sum::<f64>()
            / batch.len() as f64;

        let mut adv_total = 0.0;
        for sample in 0..cfg.samples {
            let mut rng = stream(cfg.seed, Purpose::Train, &[1, step as u64, sample as u64]);
            let shared = draw(cfg.f, n, k, cfg.init_scale, &mut rng);
            let mut grads = DeepSetGrads::zeros_like(&model);
            let mut loss = 0.0;
            for panel in &batch {
                let own;
                let d = if cfg.per_example_draws {
                    own = draw(cfg.f, n, k, cfg.init_scale, &mut rng);
                    &own
                } else {
                    &shared
                };
                let rows = inner_attack(&model, panel, d, cfg);
                let (l, _) = model.loss_and_grads(
                    &rows,
                    panel.label,
                    LossKind::CrossEntropy,
                    Pooling::Mean,
                    Some(&mut grads),
                    &[],
                );
                loss += l;
            }
            let scale = 1.0 / batch.len() as f64;
            grads.scale(scale);
            loss *= scale;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(fail(Error::Diverged { step, loss }, trace));
            }
            apply_update(&mut model, &grads, &mut states, &adam);
            adv_total += loss;
        }
        trace.push(TraceRow {
            step,
            clean_loss,
            adv_loss: adv_total / cfg.samples as f64,
        });
    }
    Ok(TrainOutcome {
        model,
        trace,
        updates: states.0.steps(),
    })
}

/// DeepSet-TM: embed each client with rho, pool with the coordinate-wise
/// trimmed mean (trim `f`), decode with mu and take the argmax.
pub fn deepset_tm_classify(model: &DeepSetModel, rows: &[Vec<f64>], f: usize) -> Result<usize> {
    Ok(argmax(&model.forward(rows, Pooling::TrimmedMean(f))?.probs))
}
