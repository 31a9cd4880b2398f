//! Aggregation rules, the robust-averaging checker, the margin certificate and
//! the randomized-ablation vote.

mod certificate;
mod robustness;
mod rules;

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use certificate::{bound_factor, certify, Certificate};
pub use robustness::{
    check_fk_robustness, check_fk_robustness_sampled, kappa_cwtm, RobustnessReport,
    EXHAUSTIVE_CAP,
};
pub(crate) use rules::cwtm_kept_indices;
pub use rules::{cwmed, cwtm, geometric_median, gm_objective, mean, trimmed_mean_scalar, GmOptions, GmResult};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simplex::argmax;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregatorKind {
    Mean,
    Cwtm,
    CwMed,
    Gm,
    DeepSet,
    DeepSetTm,
    /// Majority vote of `inner` over `rounds` random (n - f)-client subsets.
    /// `trim` overrides the trimming parameter of the inner rule.
    RandomizedAblation {
        inner: Box<AggregatorKind>,
        rounds: usize,
        trim: Option<usize>,
    },
}

impl AggregatorKind {
    pub fn randomized_ablation(
        inner: AggregatorKind,
        rounds: usize,
        trim: Option<usize>,
    ) -> Result<Self> {
        if matches!(inner, AggregatorKind::RandomizedAblation { .. }) {
            return Err(Error::Config(
                "randomized ablation cannot wrap another randomized ablation".into(),
            ));
        }
        if rounds == 0 {
            return Err(Error::Config("randomized ablation needs at least one round".into()));
        }
        Ok(AggregatorKind::RandomizedAblation {
            inner: Box::new(inner),
            rounds,
            trim,
        })
    }

    pub fn is_static(&self) -> bool {
        matches!(
            self,
            AggregatorKind::Mean | AggregatorKind::Cwtm | AggregatorKind::CwMed | AggregatorKind::Gm
        )
    }

    /// Whether evaluating this aggregator needs a trained DeepSet model.
    pub fn needs_model(&self) -> bool {
        match self {
            AggregatorKind::DeepSet | AggregatorKind::DeepSetTm => true,
            AggregatorKind::RandomizedAblation { inner, .. } => inner.needs_model(),
            _ => false,
        }
    }

    pub fn static_suite() -> Vec<AggregatorKind> {
        vec![
            AggregatorKind::Mean,
            AggregatorKind::Cwtm,
            AggregatorKind::CwMed,
            AggregatorKind::Gm,
        ]
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregatorKind::Mean => f.write_str("mean"),
            AggregatorKind::Cwtm => f.write_str("cwtm"),
            AggregatorKind::CwMed => f.write_str("cwmed"),
            AggregatorKind::Gm => f.write_str("gm"),
            AggregatorKind::DeepSet => f.write_str("deepset"),
            AggregatorKind::DeepSetTm => f.write_str("deepset-tm"),
            AggregatorKind::RandomizedAblation {
                inner,
                rounds,
                trim,
            } => {
                write!(f, "ra-{inner}:{rounds}")?;
                if let Some(t) = trim {
                    write!(f, ":{t}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    /// Accepts `mean`, `cwtm`, `cwmed`, `gm`, `deepset`, `deepset-tm` and
    /// `ra-<inner>[:rounds[:trim]]` (rounds default to 100).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("ra-") {
            let mut parts = rest.split(':');
            let inner: AggregatorKind = parts.next().unwrap_or_default().parse()?;
            let num = |p: Option<&str>| -> Result<Option<usize>> {
                p.map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad number {v:?} in aggregator {s:?}")))
                })
                .transpose()
            };
            let rounds = num(parts.next())?.unwrap_or(100);
            let trim = num(parts.next())?;
            return AggregatorKind::randomized_ablation(inner, rounds, trim);
        }
        Ok(match s.as_str() {
            "mean" => AggregatorKind::Mean,
            "cwtm" | "tm" => AggregatorKind::Cwtm,
            "cwmed" | "median" => AggregatorKind::CwMed,
            "gm" => AggregatorKind::Gm,
            "deepset" | "ds" => AggregatorKind::DeepSet,
            "deepset-tm" | "ds-tm" => AggregatorKind::DeepSetTm,
            other => return Err(Error::Config(format!("unknown aggregator {other:?}"))),
        })
    }
}

/// Output vector of a static rule; `f` is the trimming parameter of CWTM.
pub fn static_output(rule: &AggregatorKind, rows: &[Vec<f64>], f: usize) -> Result<Vec<f64>> {
    crate::simplex::validate_rows(rows)?;
    match rule {
        AggregatorKind::Mean => Ok(mean(rows)),
        AggregatorKind::Cwtm => cwtm(rows, f),
        AggregatorKind::CwMed => cwmed(rows),
        AggregatorKind::Gm => Ok(geometric_median(rows, GmOptions::default())?.point),
        other => Err(Error::NotStatic(other.to_string())),
    }
}

/// Argmax of a robust average of the client probits, ties to the lowest class.
pub fn robust_argmax_classify(rows: &[Vec<f64>], rule: &AggregatorKind, f: usize) -> Result<usize> {
    Ok(argmax(&static_output(rule, rows, f)?))
}

/// Drops `f` random clients per round, classifies the rest with `classify`
/// and returns the majority vote (ties to the lowest class).
pub fn randomized_ablation_vote<C>(
    rows: &[Vec<f64>],
    f: usize,
    rounds: usize,
    rng: &mut Rng,
    mut classify: C,
) -> Result<usize>
where
    C: FnMut(&[Vec<f64>]) -> Result<usize>,
{
    let k = crate::simplex::validate_rows(rows)?;
    let n = rows.len();
    if 2 * f >= n {
        return Err(Error::InvalidBound { n, f });
    }
    if rounds == 0 {
        return Err(Error::Config("randomized ablation needs at least one round".into()));
    }
    let mut votes = vec![0.0; k];
    let mut kept = Vec::with_capacity(n - f);
    for _ in 0..rounds {
        let mut keep = index::sample(rng, n, n - f).into_vec();
        keep.sort_unstable();
        kept.clear();
        kept.extend(keep.iter().map(|&i| rows[i].clone()));
        votes[classify(&kept)?] += 1.0;
    }
    Ok(argmax(&votes))
}

/// Randomized ablation around a static rule. The inner rule trims `trim`
/// clients per side (default `f`) on the n - f survivors.
pub fn randomized_ablation_classify(
    rows: &[Vec<f64>],
    inner: &AggregatorKind,
    f: usize,
    rounds: usize,
    trim: Option<usize>,
    rng: &mut Rng,
) -> Result<usize> {
    let t = trim.unwrap_or(f);
    if !inner.is_static() {
        return Err(Error::NotStatic(inner.to_string()));
    }
    randomized_ablation_vote(rows, f, rounds, rng, |kept| robust_argmax_classify(kept, inner, t))
}
