//! Clean, per-attack and worst-case accuracy over seeds, certificate
//! statistics and the robustness-gap estimate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregators::{
    certify, randomized_ablation_vote, robust_argmax_classify, AggregatorKind,
};
use crate::attacks::{
    attacked_dataset, AdversaryPolicy, AttackConfig, AttackKind, AttackSurface, CorruptedPanel, DeepSetSurface,
    StaticSurface,
};
use crate::error::{Error, Result};
use crate::nn::{DeepSetModel, Pooling};
use crate::rng::{stream, Purpose, Rng};
use crate::simplex::{margin, model_dissimilarity, Margin, ProbitPanel, SystemParams};

/// Robust metrics are measured against a finite attack suite and therefore
/// only lower-bound the true worst case over all corruptions.
pub const SUITE_NOTE: &str = "robust accuracy, robust risk and robustness gap are measured against \
    the listed attacks only; they are lower bounds on the worst case over all corruptions of f clients";

const ACCURACY_NOTE: &str = "micro accuracy in percent (synthetic data is class balanced)";

/// An aggregator kind bound to its trimming parameter and, for DeepSet
/// variants, a model.
#[derive(Debug, Clone, Copy)]
pub struct Aggregator<'a> {
    kind: &'a AggregatorKind,
    model: Option<&'a DeepSetModel>,
    f: usize,
}

enum Surface<'a> {
    Static(StaticSurface),
    DeepSet(DeepSetSurface<'a>),
}

impl Surface<'_> {
    fn as_dyn(&self) -> &dyn AttackSurface {
        match self {
            Surface::Static(s) => s,
            Surface::DeepSet(s) => s,
        }
    }
}

impl<'a> Aggregator<'a> {
    pub fn new(kind: &'a AggregatorKind, model: Option<&'a DeepSetModel>, f: usize) -> Result<Self> {
        if kind.needs_model() && model.is_none() {
            return Err(Error::MissingModel(kind.to_string()));
        }
        Ok(Self { kind, model, f })
    }

    pub fn kind(&self) -> &AggregatorKind {
        self.kind
    }

    fn plain(kind: &AggregatorKind, model: Option<&DeepSetModel>, rows: &[Vec<f64>], trim: usize) -> Result<usize> {
        let model = || model.ok_or_else(|| Error::MissingModel(kind.to_string()));
        match kind {
            AggregatorKind::DeepSet => model()?.classify(rows, Pooling::Mean),
            AggregatorKind::DeepSetTm => model()?.classify(rows, Pooling::TrimmedMean(trim)),
            AggregatorKind::RandomizedAblation { .. } => Err(Error::Config(
                "randomized ablation cannot wrap another randomized ablation".into(),
            )),
            rule => robust_argmax_classify(rows, rule, trim),
        }
    }

    /// Predicted class. `rng` is only used by randomized ablation.
    pub fn classify(&self, rows: &[Vec<f64>], rng: &mut Rng) -> Result<usize> {
        match self.kind {
            AggregatorKind::RandomizedAblation { inner, rounds, trim } => {
                let t = trim.unwrap_or(self.f);
                randomized_ablation_vote(rows, self.f, *rounds, rng, |kept| {
                    Self::plain(inner, self.model, kept, t)
                })
            }
            kind => Self::plain(kind, self.model, rows, self.f),
        }
    }

    /// What white-box attacks differentiate through. Randomized ablation is
    /// attacked through its inner rule applied to the full panel.
    fn surface(&self) -> Result<Surface<'a>> {
        let (kind, trim) = match self.kind {
            AggregatorKind::RandomizedAblation { inner, trim, .. } => (&**inner, trim.unwrap_or(self.f)),
            k => (k, self.f),
        };
        let model = || self.model.ok_or_else(|| Error::MissingModel(kind.to_string()));
        Ok(match kind {
            AggregatorKind::DeepSet => Surface::DeepSet(DeepSetSurface {
                model: model()?,
                pooling: Pooling::Mean,
            }),
            AggregatorKind::DeepSetTm => Surface::DeepSet(DeepSetSurface {
                model: model()?,
                pooling: Pooling::TrimmedMean(trim),
            }),
            rule => Surface::Static(StaticSurface {
                rule: rule.clone(),
                f: trim,
            }),
        })
    }
}

/// Stable per-aggregator key for randomness streams, independent of the
/// order aggregators are listed in.
fn name_key(kind: &AggregatorKind) -> u64 {
    kind.to_string()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

const CLEAN_KEY: u64 = u64::MAX;

fn attack_key(kind: AttackKind) -> u64 {
    AttackKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64
}

pub fn clean_predictions(panels: &[ProbitPanel], agg: &Aggregator, seed: u64) -> Result<Vec<usize>> {
    let key = name_key(agg.kind);
    panels
        .iter()
        .enumerate()
        .map(|(i, p)| agg.classify(p.rows(), &mut stream(seed, Purpose::Ablation, &[key, CLEAN_KEY, i as u64])))
        .collect()
}

/// Panels corrupted by `attack` with `agg.f` adversaries each. White-box
/// attacks target `agg`.
pub fn corrupt_for(
    panels: &[ProbitPanel],
    agg: &Aggregator,
    attack: &AttackConfig,
    policy: AdversaryPolicy,
    seed: u64,
) -> Result<Vec<CorruptedPanel>> {
    let surface = agg.surface()?;
    attacked_dataset(panels, attack, agg.f, policy, surface.as_dyn(), seed)
}

/// Predictions of `agg` on the panels corrupted by `attack`. White-box
/// attacks target `agg` itself.
pub fn attacked_predictions(
    panels: &[ProbitPanel],
    agg: &Aggregator,
    attack: &AttackConfig,
    policy: AdversaryPolicy,
    seed: u64,
) -> Result<Vec<usize>> {
    let corrupted = corrupt_for(panels, agg, attack, policy, seed)?;
    let key = name_key(agg.kind);
    let ak = attack_key(attack.kind);
    corrupted
        .iter()
        .enumerate()
        .map(|(i, c)| agg.classify(&c.rows, &mut stream(seed, Purpose::Ablation, &[key, ak, i as u64])))
        .collect()
}

/// Fraction of panels on which some attack moves `attacked` away from the
/// oracle's clean prediction.
pub fn gap_from_predictions(attacked: &[Vec<usize>], oracle_clean: &[usize]) -> f64 {
    if oracle_clean.is_empty() {
        return 0.0;
    }
    let moved = (0..oracle_clean.len())
        .filter(|&i| attacked.iter().any(|preds| preds[i] != oracle_clean[i]))
        .count();
    moved as f64 / oracle_clean.len() as f64
}

/// Empirical robustness gap of `robust` relative to `oracle` for one seed.
pub fn estimate_robustness_gap(
    panels: &[ProbitPanel],
    robust: &Aggregator,
    oracle: &Aggregator,
    attacks: &[AttackConfig],
    policy: AdversaryPolicy,
    seed: u64,
) -> Result<f64> {
    let oracle_clean = clean_predictions(panels, oracle, seed)?;
    let attacked = attacks
        .iter()
        .map(|a| attacked_predictions(panels, robust, a, policy, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(gap_from_predictions(&attacked, &oracle_clean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub f: usize,
    pub seeds: Vec<u64>,
    pub policy: AdversaryPolicy,
    /// Reference aggregator on clean panels for the robustness gap.
    pub oracle: AggregatorKind,
    /// Attack parameters; `kind` is replaced per attack.
    pub attack: AttackConfig,
    /// Rows re-normalised during ingestion, reported in the metadata.
    pub renormalized_rows: usize,
}

impl EvalOptions {
    pub fn new(f: usize, seeds: Vec<u64>) -> Self {
        Self {
            f,
            seeds,
            policy: AdversaryPolicy::FreshPerQuery,
            oracle: AggregatorKind::Mean,
            attack: AttackConfig::new(AttackKind::LogitFlipping),
            renormalized_rows: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl Stat {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            per_seed: values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCell {
    pub attack: String,
    pub accuracy: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorReport {
    pub aggregator: String,
    pub clean: Stat,
    pub attacks: Vec<AttackCell>,
    /// Lowest seed-averaged accuracy over the attack columns.
    pub worst_case: f64,
    pub worst_attack: String,
    /// `1 - min over attacks of accuracy / 100`, per seed.
    pub robust_risk: Stat,
    /// Fraction of panels misclassified under at least one attack.
    pub panel_robust_risk: Stat,
    pub robustness_gap: Stat,
    /// Smallest `oracle risk + gap - panel robust risk` over seeds.
    pub decomposition_slack: f64,
    pub decomposition_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub panels: usize,
    pub certified: usize,
    pub degenerate: usize,
    pub certified_fraction: f64,
    /// (seed, certified non-degenerate panel) pairs checked against every
    /// attack on the trimmed mean.
    pub soundness_checked: usize,
    pub soundness_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    /// Values left out (infinite margins, or zero dissimilarity for ratios).
    pub excluded: usize,
    pub p10: Option<f64>,
    pub p25: Option<f64>,
    pub p50: Option<f64>,
    pub p75: Option<f64>,
    pub p90: Option<f64>,
}

impl Quantiles {
    /// Nearest-rank quantiles of the finite values.
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            (!v.is_empty()).then(|| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1])
        };
        Self {
            count: v.len(),
            excluded: values.len() - v.len(),
            p10: q(0.10),
            p25: q(0.25),
            p50: q(0.50),
            p75: q(0.75),
            p90: q(0.90),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n: usize,
    pub f: usize,
    pub classes: usize,
    pub panels: usize,
    pub seeds: Vec<u64>,
    pub policy: AdversaryPolicy,
    pub oracle: String,
    pub attacks: Vec<String>,
    pub amplification: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    pub renormalized_rows: usize,
    pub accuracy: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub oracle_clean: Stat,
    pub aggregators: Vec<AggregatorReport>,
    pub certificate: CertificateSummary,
    pub margin: Quantiles,
    pub sigma_x: Quantiles,
    pub margin_over_sigma: Quantiles,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One line per (aggregator, column), including `clean` and `worst_case`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("aggregator,attack,mean,std,per_seed\n");
        let seeds = |s: &Stat| s.per_seed.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";");
        for a in &self.aggregators {
            writeln!(out, "{},clean,{:?},{:?},{}", a.aggregator, a.clean.mean, a.clean.std, seeds(&a.clean)).unwrap();
            for c in &a.attacks {
                writeln!(
                    out,
                    "{},{},{:?},{:?},{}",
                    a.aggregator,
                    c.attack,
                    c.accuracy.mean,
                    c.accuracy.std,
                    seeds(&c.accuracy)
                )
                .unwrap();
            }
            let worst = a.attacks.iter().find(|c| c.attack == a.worst_attack);
            let std = worst.map_or(0.0, |c| c.accuracy.std);
            writeln!(out, "{},worst_case,{:?},{:?},", a.aggregator, a.worst_case, std).unwrap();
        }
        out
    }
}

fn accuracy(preds: &[usize], panels: &[ProbitPanel]) -> f64 {
    let hits = preds.iter().zip(panels).filter(|(p, panel)| **p == panel.label).count();
    100.0 * hits as f64 / panels.len() as f64
}

fn check_panels(panels: &[ProbitPanel], f: usize) -> Result<SystemParams> {
    let first = panels.first().ok_or(Error::Empty("dataset"))?;
    let (n, k) = (first.n(), first.classes());
    if let Some(p) = panels.iter().find(|p| p.n() != n || p.classes() != k) {
        return Err(Error::InvalidPanel {
            id: p.input_id.clone(),
            msg: format!("expected {n} clients and {k} classes"),
        });
    }
    SystemParams::new(n, f, k)
}

/// Runs every (aggregator, attack) cell for every seed. Adversary sets are
/// drawn per (seed, panel) and shared by all cells.
pub fn evaluate(
    panels: &[ProbitPanel],
    aggregators: &[AggregatorKind],
    attacks: &[AttackKind],
    opts: &EvalOptions,
    model: Option<&DeepSetModel>,
) -> Result<EvalReport> {
    let params = check_panels(panels, opts.f)?;
    if aggregators.is_empty() {
        return Err(Error::Config("no aggregators requested".into()));
    }
    if attacks.is_empty() {
        return Err(Error::Config("no attacks requested".into()));
    }
    if opts.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let configs: Vec<AttackConfig> = attacks
        .iter()
        .map(|&kind| {
            let cfg = AttackConfig {
                kind,
                ..opts.attack.clone()
            };
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;
    let bound: Vec<Aggregator> = aggregators
        .iter()
        .map(|k| Aggregator::new(k, model, opts.f))
        .collect::<Result<_>>()?;
    let oracle = Aggregator::new(&opts.oracle, model, opts.f)?;
    let cwtm_kind = AggregatorKind::Cwtm;
    let cwtm = Aggregator::new(&cwtm_kind, None, opts.f)?;

    let certificates = panels
        .iter()
        .map(|p| certify(p, &params))
        .collect::<Result<Vec<_>>>()?;
    let sound_idx: Vec<usize> = (0..panels.len())
        .filter(|&i| certificates[i].certified && !certificates[i].degenerate)
        .collect();

    let mut oracle_acc = Vec::new();
    // [aggregator][seed]
    let mut clean = vec![Vec::new(); bound.len()];
    // [aggregator][attack][seed]
    let mut cells = vec![vec![Vec::new(); configs.len()]; bound.len()];
    let mut robust_risk = vec![Vec::new(); bound.len()];
    let mut panel_risk = vec![Vec::new(); bound.len()];
    let mut gaps = vec![Vec::new(); bound.len()];
    let mut slack = vec![f64::INFINITY; bound.len()];
    let mut violations = 0;

    for &seed in &opts.seeds {
        let oracle_clean = clean_predictions(panels, &oracle, seed)?;
        let oracle_risk = 1.0 - accuracy(&oracle_clean, panels) / 100.0;
        oracle_acc.push(100.0 * (1.0 - oracle_risk));
        let mut cwtm_runs: Option<(Vec<usize>, Vec<Vec<usize>>)> = None;

        for (a, agg) in bound.iter().enumerate() {
            let clean_preds = clean_predictions(panels, agg, seed)?;
            clean[a].push(accuracy(&clean_preds, panels));
            let attacked = configs
                .iter()
                .map(|cfg| attacked_predictions(panels, agg, cfg, opts.policy, seed))
                .collect::<Result<Vec<_>>>()?;
            let accs: Vec<f64> = attacked.iter().map(|p| accuracy(p, panels)).collect();
            for (x, acc) in accs.iter().enumerate() {
                cells[a][x].push(*acc);
            }
            let worst = accs.iter().copied().fold(f64::INFINITY, f64::min);
            robust_risk[a].push(1.0 - worst / 100.0);
            let wrong = (0..panels.len())
                .filter(|&i| attacked.iter().any(|p| p[i] != panels[i].label))
                .count() as f64
                / panels.len() as f64;
            panel_risk[a].push(wrong);
            let gap = gap_from_predictions(&attacked, &oracle_clean);
            gaps[a].push(gap);
            slack[a] = slack[a].min(oracle_risk + gap - wrong);
            if *agg.kind == AggregatorKind::Cwtm && cwtm_runs.is_none() {
                cwtm_runs = Some((clean_preds, attacked));
            }
        }

        let (cwtm_clean, cwtm_attacked) = match cwtm_runs {
            Some(runs) => runs,
            None => (
                clean_predictions(panels, &cwtm, seed)?,
                configs
                    .iter()
                    .map(|cfg| attacked_predictions(panels, &cwtm, cfg, opts.policy, seed))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        violations += sound_idx
            .iter()
            .filter(|&&i| cwtm_attacked.iter().any(|p| p[i] != cwtm_clean[i]))
            .count();
    }

    let aggregators_out = bound
        .iter()
        .enumerate()
        .map(|(a, agg)| {
            let attacks_out: Vec<AttackCell> = configs
                .iter()
                .zip(&cells[a])
                .map(|(cfg, accs)| AttackCell {
                    attack: cfg.kind.to_string(),
                    accuracy: Stat::from_values(accs.clone()),
                })
                .collect();
            let (worst_attack, worst_case) = attacks_out
                .iter()
                .map(|c| (c.attack.clone(), c.accuracy.mean))
                .fold((String::new(), f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            AggregatorReport {
                aggregator: agg.kind.to_string(),
                clean: Stat::from_values(clean[a].clone()),
                attacks: attacks_out,
                worst_case,
                worst_attack,
                robust_risk: Stat::from_values(robust_risk[a].clone()),
                panel_robust_risk: Stat::from_values(panel_risk[a].clone()),
                robustness_gap: Stat::from_values(gaps[a].clone()),
                decomposition_slack: slack[a],
                decomposition_holds: slack[a] >= -1e-9,
            }
        })
        .collect();

    let margins: Vec<f64> = panels
        .iter()
        .map(|p| margin(&p.mean()).map(Margin::value))
        .collect::<Result<_>>()?;
    let sigmas: Vec<f64> = panels.iter().map(model_dissimilarity).collect();
    let ratios: Vec<f64> = margins
        .iter()
        .zip(&sigmas)
        .map(|(m, s)| if *s > 0.0 { m / s } else { f64::INFINITY })
        .collect();
    let certified = certificates.iter().filter(|c| c.certified).count();

    Ok(EvalReport {
        meta: ReportMeta {
            n: params.n,
            f: params.f,
            classes: params.k,
            panels: panels.len(),
            seeds: opts.seeds.clone(),
            policy: opts.policy,
            oracle: opts.oracle.to_string(),
            attacks: attacks.iter().map(|a| a.to_string()).collect(),
            amplification: opts.attack.amplification,
            pgd_steps: opts.attack.pgd_steps,
            pgd_step_size: opts.attack.pgd_step_size,
            renormalized_rows: opts.renormalized_rows,
            accuracy: ACCURACY_NOTE.into(),
            note: SUITE_NOTE.into(),
        },
        oracle_clean: Stat::from_values(oracle_acc),
        aggregators: aggregators_out,
        certificate: CertificateSummary {
            panels: panels.len(),
            certified,
            degenerate: certificates.iter().filter(|c| c.degenerate).count(),
            certified_fraction: certified as f64 / panels.len() as f64,
            soundness_checked: sound_idx.len() * opts.seeds.len(),
            soundness_violations: violations,
        },
        margin: Quantiles::of(&margins),
        sigma_x: Quantiles::of(&sigmas),
        margin_over_sigma: Quantiles::of(&ratios),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_synthetic, SyntheticSpec};
    use crate::nn::Architecture;

    fn data(samples: usize) -> (Vec<ProbitPanel>, AttackConfig) {
        let syn = generate_synthetic(&SyntheticSpec {
            n: 7,
            classes: 4,
            samples,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = AttackConfig::new(AttackKind::LogitFlipping);
        cfg.similarity = Some(syn.similarity);
        cfg.pgd_steps = 5;
        (syn.dataset.panels, cfg)
    }

    fn opts(f: usize, attack: AttackConfig) -> EvalOptions {
        EvalOptions {
            attack,
            ..EvalOptions::new(f, vec![1, 2])
        }
    }

    #[test]
    fn zero_adversaries_reproduce_clean_accuracy() {
        let (panels, attack) = data(40);
        let model = DeepSetModel::new(Architecture { classes: 4, embed: 4, rho_hidden: 6, mu_hidden: 6 }, 3);
        let aggs: Vec<AggregatorKind> = ["mean", "cwtm", "cwmed", "gm", "deepset", "deepset-tm", "ra-cwtm:5"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let report = evaluate(&panels, &aggs, &AttackKind::ALL, &opts(0, attack), Some(&model)).unwrap();
        for a in &report.aggregators {
            for c in &a.attacks {
                assert_eq!(c.accuracy, a.clean, "{} {}", a.aggregator, c.attack);
            }
            assert_eq!(a.worst_case, a.clean.mean);
        }
        assert_eq!(report.certificate.soundness_violations, 0);
    }

    #[test]
    fn report_invariants() {
        let (panels, attack) = data(60);
        let aggs = AggregatorKind::static_suite();
        let report = evaluate(&panels, &aggs, &AttackKind::ALL, &opts(2, attack), None).unwrap();
        for a in &report.aggregators {
            let min = a.attacks.iter().map(|c| c.accuracy.mean).fold(f64::INFINITY, f64::min);
            assert_eq!(a.worst_case, min);
            for c in &a.attacks {
                assert!(c.accuracy.per_seed.iter().all(|v| (0.0..=100.0).contains(v)));
            }
            assert!(a.decomposition_holds, "{}: slack {}", a.aggregator, a.decomposition_slack);
            for s in 0..2 {
                assert!(a.robust_risk.per_seed[s] <= a.panel_robust_risk.per_seed[s] + 1e-12);
            }
        }
        assert_eq!(report.certificate.soundness_violations, 0);
        assert!(report.meta.note.contains("lower bounds"));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (panels, attack) = data(30);
        let aggs = vec![AggregatorKind::Cwtm, "ra-mean:7".parse().unwrap()];
        let a = evaluate(&panels, &aggs, &AttackKind::ALL, &opts(2, attack.clone()), None).unwrap();
        let b = evaluate(&panels, &aggs, &AttackKind::ALL, &opts(2, attack), None).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn missing_model_is_an_error() {
        let (panels, attack) = data(5);
        let err = evaluate(&panels, &[AggregatorKind::DeepSetTm], &[AttackKind::Lma], &opts(1, attack), None);
        assert!(matches!(err, Err(Error::MissingModel(_))));
    }

    #[test]
    fn gap_examples() {
        let (panels, attack) = data(30);
        let kind = AggregatorKind::Mean;
        let agg = Aggregator::new(&kind, None, 0).unwrap();
        let attacks: Vec<AttackConfig> = AttackKind::ALL
            .iter()
            .map(|&k| AttackConfig { kind: k, ..attack.clone() })
            .collect();
        let gap = estimate_robustness_gap(&panels, &agg, &agg, &attacks, AdversaryPolicy::FreshPerQuery, 3).unwrap();
        assert_eq!(gap, 0.0);

        let rows = vec![vec![0.6, 0.3, 0.1]; 7];
        let same: Vec<ProbitPanel> = (0..10)
            .map(|i| ProbitPanel::new(format!("p{i}"), i % 3, rows.clone()).unwrap())
            .collect();
        let cwtm_kind = AggregatorKind::Cwtm;
        let cwtm = Aggregator::new(&cwtm_kind, None, 2).unwrap();
        let mut sim_attack = attack.clone();
        sim_attack.similarity = Some(crate::attacks::SimilarityMatrix::identity(3));
        let attacks: Vec<AttackConfig> = AttackKind::ALL
            .iter()
            .map(|&k| AttackConfig { kind: k, ..sim_attack.clone() })
            .collect();
        let gap = estimate_robustness_gap(&same, &cwtm, &agg, &attacks, AdversaryPolicy::FreshPerQuery, 3).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn quantiles_nearest_rank() {
        let q = Quantiles::of(&[5.0, 1.0, f64::INFINITY, 3.0, 2.0, 4.0]);
        assert_eq!(q.count, 5);
        assert_eq!(q.excluded, 1);
        assert_eq!(q.p50, Some(3.0));
        assert_eq!(q.p10, Some(1.0));
        assert_eq!(q.p90, Some(5.0));
        assert_eq!(Quantiles::of(&[]).p50, None);
    }
}
