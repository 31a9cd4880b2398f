//! Margin-to-dissimilarity ratio versus trimmed-mean test error.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::{attacked_predictions, Aggregator, Stat};
use super::synthetic::{generate_synthetic, SyntheticSpec};
use crate::aggregators::AggregatorKind;
use crate::attacks::{AdversaryPolicy, AttackConfig, AttackKind};
use crate::error::Result;
use crate::simplex::{margin, model_dissimilarity, ProbitPanel};

/// Attacks used for the curve.
pub const CURVE_ATTACKS: [AttackKind; 2] = [AttackKind::SiaWhiteBox, AttackKind::Lma];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub f: usize,
    pub attack: String,
    /// Seed average of the per-panel mean of margin(mean probit) / sigma_x.
    pub ratio: f64,
    /// Trimmed-mean test error in percent.
    pub error: Stat,
}

/// Mean of margin / sigma_x over panels where both are finite and sigma_x is
/// positive.
pub fn mean_margin_ratio(panels: &[ProbitPanel]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for p in panels {
        let m = margin(&p.mean())?.value();
        let s = model_dissimilarity(p);
        if m.is_finite() && s > 0.0 {
            total += m / s;
            count += 1;
        }
    }
    Ok(if count == 0 { f64::INFINITY } else { total / count as f64 })
}

/// Trimmed-mean (trim `f`) error in percent under `attack` with `f`
/// adversaries per panel.
pub fn cwtm_error(panels: &[ProbitPanel], f: usize, attack: &AttackConfig, seed: u64) -> Result<f64> {
    let kind = AggregatorKind::Cwtm;
    let agg = Aggregator::new(&kind, None, f)?;
    let preds = attacked_predictions(panels, &agg, attack, AdversaryPolicy::FreshPerQuery, seed)?;
    let wrong = preds.iter().zip(panels).filter(|(p, panel)| **p != panel.label).count();
    Ok(100.0 * wrong as f64 / panels.len() as f64)
}

/// One point per (alpha, f, attack). Each seed regenerates the data from
/// `base` with that seed and alpha.
pub fn margin_error_curve(
    base: &SyntheticSpec,
    f_values: &[usize],
    alphas: &[f64],
    seeds: &[u64],
    attack: &AttackConfig,
) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::new();
    for &alpha in alphas {
        let mut ratios = Vec::with_capacity(seeds.len());
        // errors[f][attack][seed]
        let mut errors = vec![vec![Vec::with_capacity(seeds.len()); CURVE_ATTACKS.len()]; f_values.len()];
        for &seed in seeds {
            let spec = SyntheticSpec {
                alpha,
                seed,
                ..base.clone()
            };
            let panels = generate_synthetic(&spec)?.dataset.panels;
            ratios.push(mean_margin_ratio(&panels)?);
            for (fi, &f) in f_values.iter().enumerate() {
                for (ai, &kind) in CURVE_ATTACKS.iter().enumerate() {
                    let cfg = AttackConfig {
                        kind,
                        ..attack.clone()
                    };
                    errors[fi][ai].push(cwtm_error(&panels, f, &cfg, seed)?);
                }
            }
        }
        let ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        for (fi, &f) in f_values.iter().enumerate() {
            for (ai, kind) in CURVE_ATTACKS.iter().enumerate() {
                points.push(CurvePoint {
                    alpha,
                    f,
                    attack: kind.to_string(),
                    ratio,
                    error: Stat::from_values(errors[fi][ai].clone()),
                });
            }
        }
    }
    Ok(points)
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("alpha,f,attack,margin_over_sigma,error_mean,error_std\n");
    for p in points {
        writeln!(
            out,
            "{:?},{},{},{:?},{:?},{:?}",
            p.alpha, p.f, p.attack, p.ratio, p.error.mean, p.error.std
        )
        .unwrap();
    }
    out
}
