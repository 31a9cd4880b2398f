//! Synthetic data, file formats, evaluation and configuration.

mod checks;
mod config;
mod curve;
mod eval;
mod io;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use checks::{
    check_certificate_soundness, check_counter_example, check_cwtm_robustness, check_deepset_gradients,
    check_margin_sufficiency, check_permutation_invariance, check_subset_variance, selftest, CheckOutcome,
};
pub use config::{Config, ATTACK_KEYS, EVAL_KEYS, SYNTHETIC_KEYS, TRAIN_KEYS};
pub use curve::{curve_csv, cwtm_error, margin_error_curve, mean_margin_ratio, CurvePoint, CURVE_ATTACKS};
pub use eval::{
    attacked_predictions, clean_predictions, corrupt_for, estimate_robustness_gap, evaluate, gap_from_predictions,
    AggregatorReport, Aggregator, AttackCell, CertificateSummary, EvalOptions, EvalReport, Quantiles,
    ReportMeta, Stat, SUITE_NOTE,
};
pub use io::{
    certificates_csv, decode_dataset, encode_dataset, format_sig9, ingest_panels, write_dataset, Ingested,
    CERTIFICATE_HEADER, INGEST_TOL,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

use crate::simplex::ProbitPanel;

/// Panels sharing a client count and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n: usize,
    pub classes: usize,
    /// Seed the data was generated with (0 for external data).
    pub seed: u64,
    pub panels: Vec<ProbitPanel>,
}
