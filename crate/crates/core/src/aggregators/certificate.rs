//! Margin-based robustness certificate for the coordinate-wise trimmed mean.
//!
//! A panel is certified when the margin of the mean probit exceeds
//! `2 (sqrt(kappa n / (n - f)) + sqrt(f / (n - f))) sigma_x`. On a certified
//! panel the trimmed-mean argmax equals the clean mean argmax for every
//! corruption of at most f clients.

use serde::{Deserialize, Serialize};

use super::robustness::kappa_cwtm;
use crate::error::{Error, Result};
use crate::simplex::{margin, model_dissimilarity, Margin, ProbitPanel, SystemParams, TIE_QUANTUM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub margin: Margin,
    pub sigma_x: f64,
    pub kappa: f64,
    pub bound: f64,
    pub certified: bool,
    /// The mean probit has no unique maximum coordinate.
    pub degenerate: bool,
}

/// `2 (sqrt(kappa n / (n - f)) + sqrt(f / (n - f)))`, the factor multiplying
/// sigma_x in the certificate bound.
pub fn bound_factor(n: usize, f: usize) -> Result<f64> {
    let kappa = kappa_cwtm(n, f)?;
    let h = (n - f) as f64;
    Ok(2.0 * ((kappa * n as f64 / h).sqrt() + (f as f64 / h).sqrt()))
}

pub fn certify(panel: &ProbitPanel, params: &SystemParams) -> Result<Certificate> {
    if panel.n() != params.n {
        return Err(Error::Dimension(format!(
            "panel has {} clients, system has {}",
            panel.n(),
            params.n
        )));
    }
    let n = params.n;
    let f = params.f;
    let kappa = kappa_cwtm(n, f)?;
    let mean = panel.mean();
    let m = margin(&mean)?;
    let sigma_x = model_dissimilarity(panel);
    let bound = bound_factor(n, f)? * sigma_x;
    let degenerate = match m {
        Margin::Infinite => true,
        Margin::Finite(v) => (v / TIE_QUANTUM).round() == 0.0,
    };
    Ok(Certificate {
        margin: m,
        sigma_x,
        kappa,
        bound,
        certified: m.exceeds(bound),
        degenerate,
    })
}
