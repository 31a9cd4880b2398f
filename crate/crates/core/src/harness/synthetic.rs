//! Synthetic client probits with Dirichlet heterogeneity.
//!
//! Classes are unit centroids in a small embedding space. Each class is split
//! across the clients with shares drawn from `Dir_n(alpha)`. A client's share
//! of a class sets how often it predicts that class and how noisy its view of
//! inputs from that class is. An input of class y is a noisy copy of the
//! centroid of y; every client sees it through its own extra noise.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::attacks::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::simplex::{softmax, ProbitPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub classes: usize,
    /// Dirichlet concentration of the class split across clients.
    pub alpha: f64,
    pub samples: usize,
    /// Index of the first generated input. Specs that differ only in
    /// `offset` share clients and classes, so disjoint ranges give train and
    /// test splits of the same population.
    pub offset: usize,
    /// Logit temperature shared by all clients; each client scales it by a
    /// factor drawn from [0.5, 1.5].
    pub skill: f64,
    /// Per-client observation noise.
    pub noise: f64,
    /// Noise of the input around its class centroid, seen by every client.
    pub sample_noise: f64,
    /// Weight of the log class-share prior in the client logits.
    pub prior: f64,
    /// Class share beyond which a client stops getting better at a class.
    pub expertise_cap: f64,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 17,
            classes: 10,
            alpha: 0.5,
            samples: 2000,
            offset: 0,
            skill: 4.0,
            noise: 2.6,
            sample_noise: 1.25,
            prior: 0.6,
            expertise_cap: 1.0,
            embed_dim: 16,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::TooFewClasses(self.classes));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be at least 1".into()));
        }
        for (name, v) in [
            ("skill", self.skill),
            ("noise", self.noise),
            ("sample_noise", self.sample_noise),
            ("prior", self.prior),
            ("expertise_cap", self.expertise_cap),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Cosine similarity of the class centroids.
    pub similarity: SimilarityMatrix,
}

struct Clients {
    /// temperature[i]
    temperature: Vec<f64>,
    /// noise_scale[i][k]: multiplier of the client noise on inputs of class k
    noise_scale: Vec<Vec<f64>>,
    /// bias[i][k]
    bias: Vec<Vec<f64>>,
}

const SHARE_FLOOR: f64 = 0.05;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, k, d) = (spec.n, spec.classes, spec.embed_dim);

    let mut rng = stream(spec.seed, Purpose::Data, &[0]);
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let mut sim = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            sim[i * k + j] = if i == j {
                1.0
            } else {
                centroids[i].iter().zip(&centroids[j]).map(|(a, b)| a * b).sum()
            };
        }
    }
    // Symmetrise exactly; the two dot products can differ in the last bit.
    for i in 0..k {
        for j in 0..i {
            sim[j * k + i] = sim[i * k + j];
        }
    }
    let similarity = SimilarityMatrix::new(k, sim)?;

    let clients = draw_clients(spec)?;

    let per_dim = |s: f64| Normal::new(0.0, s / (d as f64).sqrt()).expect("finite scale");
    let input_noise = per_dim(spec.sample_noise);
    let client_noise = per_dim(spec.noise);
    let mut panels = Vec::with_capacity(spec.samples);
    for s in spec.offset..spec.offset + spec.samples {
        let mut rng = stream(spec.seed, Purpose::Data, &[3, s as u64]);
        let label = s % k;
        let x: Vec<f64> = centroids[label].iter().map(|c| c + input_noise.sample(&mut rng)).collect();
        let rows = (0..n)
            .map(|i| {
                let scale = clients.noise_scale[i][label];
                let xi: Vec<f64> = x.iter().map(|v| v + scale * client_noise.sample(&mut rng)).collect();
                let logits: Vec<f64> = (0..k)
                    .map(|c| {
                        let affinity: f64 = xi.iter().zip(&centroids[c]).map(|(a, b)| a * b).sum();
                        spec.skill * clients.temperature[i] * affinity + clients.bias[i][c]
                    })
                    .collect();
                softmax(&logits)
            })
            .collect();
        panels.push(ProbitPanel::new(format!("s{s}"), label, rows)?);
    }
    Ok(SyntheticData {
        dataset: Dataset {
            n,
            classes: k,
            seed: spec.seed,
            panels,
        },
        similarity,
    })
}

fn draw_clients(spec: &SyntheticSpec) -> Result<Clients> {
    let (n, k) = (spec.n, spec.classes);
    // shares[i][c] = n * q_c[i] with q_c ~ Dir_n(alpha); mean share is 1.
    let mut shares = vec![vec![1.0; k]; n];
    if n > 1 {
        // Dirichlet draw as normalised Gamma(alpha, 1) variates.
        let gamma = Gamma::new(spec.alpha, 1.0).map_err(|e| Error::Config(format!("alpha: {e}")))?;
        let mut rng = stream(spec.seed, Purpose::Data, &[1]);
        for c in 0..k {
            let g: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = g.iter().sum();
            for (row, gi) in shares.iter_mut().zip(&g) {
                row[c] = if total > 0.0 { n as f64 * gi / total } else { 1.0 };
            }
        }
    }
    let mut rng = stream(spec.seed, Purpose::Data, &[2]);
    let temperature = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let noise_scale = shares
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| ((SHARE_FLOOR + 1.0) / (SHARE_FLOOR + s.min(spec.expertise_cap))).sqrt())
                .collect()
        })
        .collect();
    let bias = shares
        .iter()
        .map(|row| row.iter().map(|s| spec.prior * (SHARE_FLOOR + s).ln()).collect())
        .collect();
    Ok(Clients {
        temperature,
        noise_scale,
        bias,
    })
}
