//! Attack suite. Each attack takes an honest panel and a set of adversary
//! indices and returns a panel in which only those rows were replaced.
//!
//! Black-box attacks (logit flipping, SIA-bb) see only the adversary's own
//! row and the label. White-box attacks see the clean aggregation output
//! (SIA-wb, LMA), the clean mean (CPA) or the aggregator's gradients (PGD-cw).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregators::{cwtm_kept_indices, geometric_median, static_output, AggregatorKind, GmOptions};
use crate::error::{Error, Result};
use crate::nn::{cw_loss, softmax_backward, DeepSetModel, LossKind, Pooling};
use crate::rng::{stream, Purpose, Rng};
use crate::simplex::{argmax, argmin, check_simplex, softmax, ProbitPanel, SIMPLEX_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackKind {
    LogitFlipping,
    SiaBlackBox,
    Lma,
    Cpa,
    SiaWhiteBox,
    PgdCw,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::LogitFlipping,
        AttackKind::SiaBlackBox,
        AttackKind::Lma,
        AttackKind::Cpa,
        AttackKind::SiaWhiteBox,
        AttackKind::PgdCw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::LogitFlipping => "logit-flipping",
            AttackKind::SiaBlackBox => "sia-bb",
            AttackKind::Lma => "lma",
            AttackKind::Cpa => "cpa",
            AttackKind::SiaWhiteBox => "sia-wb",
            AttackKind::PgdCw => "pgd-cw",
        }
    }

    pub fn is_white_box(self) -> bool {
        !matches!(self, AttackKind::LogitFlipping | AttackKind::SiaBlackBox)
    }

    /// Parses a comma-separated list; `all` expands to the full suite.
    pub fn parse_list(s: &str) -> Result<Vec<AttackKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(AttackKind::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "logit-flipping" | "lf" | "logit_flipping" => AttackKind::LogitFlipping,
            "sia-bb" | "sia_bb" => AttackKind::SiaBlackBox,
            "sia-wb" | "sia_wb" | "sia" => AttackKind::SiaWhiteBox,
            "lma" => AttackKind::Lma,
            "cpa" => AttackKind::Cpa,
            "pgd-cw" | "pgd" | "pgd_cw" => AttackKind::PgdCw,
            other => return Err(Error::Config(format!("unknown attack {other:?}"))),
        })
    }
}

/// Symmetric K x K class-similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    k: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * k {
            return Err(Error::Dimension(format!(
                "similarity matrix needs {} entries, got {}",
                k * k,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity matrix"));
        }
        for i in 0..k {
            if (values[i * k + i] - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("similarity diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                if (values[i * k + j] - values[j * k + i]).abs() > 1e-9 {
                    return Err(Error::Config(format!("similarity matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { k, values })
    }

    pub fn identity(k: usize) -> Self {
        let mut values = vec![0.0; k * k];
        (0..k).for_each(|i| values[i * k + i] = 1.0);
        Self { k, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    /// The class least similar to `class`, ties to the lowest index.
    pub fn least_similar(&self, class: usize) -> usize {
        let mut best: Option<usize> = None;
        for j in (0..self.k).filter(|&j| j != class) {
            match best {
                Some(b) if self.get(class, b) <= self.get(class, j) => {}
                _ => best = Some(j),
            }
        }
        best.expect("similarity matrix has at least two classes")
    }

    /// Text format: a `K=<int>` header then K rows of K numbers.
    pub fn to_text(&self) -> String {
        let mut s = format!("K={}\n", self.k);
        for row in self.values.chunks(self.k) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty similarity file".into(),
        })?;
        let k: usize = header
            .strip_prefix("K=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: ln,
                msg: "expected header `K=<int>`".into(),
            })?;
        let mut values = Vec::with_capacity(k * k);
        let mut rows = 0;
        for (ln, line) in lines {
            let row: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("bad number {t:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != k {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {k} values, found {}", row.len()),
                });
            }
            values.extend(row);
            rows += 1;
        }
        if rows != k {
            return Err(Error::Parse {
                line: 0,
                msg: format!("expected {k} rows, found {rows}"),
            });
        }
        Self::new(k, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Scale applied by logit flipping.
    pub amplification: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    pub similarity: Option<SimilarityMatrix>,
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            amplification: 2.0,
            pgd_steps: 50,
            pgd_step_size: 0.05,
            similarity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplification > 0.0 && self.amplification.is_finite()) {
            return Err(Error::Config("amplification must be positive".into()));
        }
        if self.kind == AttackKind::PgdCw && self.pgd_steps == 0 {
            // S = 0 is allowed for the attack primitive but not as a suite
            // setting.
            return Err(Error::Config("pgd_steps must be at least 1".into()));
        }
        if !(self.pgd_step_size > 0.0 && self.pgd_step_size.is_finite()) {
            return Err(Error::Config("pgd_step_size must be positive".into()));
        }
        if self.kind == AttackKind::Cpa && self.similarity.is_none() {
            return Err(Error::MissingSimilarity);
        }
        Ok(())
    }
}

/// Panel after an attack. Rows outside `adversaries` are bit-equal to the
/// source panel.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedPanel {
    pub input_id: String,
    pub label: usize,
    pub rows: Vec<Vec<f64>>,
    pub adversaries: Vec<usize>,
}

impl CorruptedPanel {
    fn from_source(panel: &ProbitPanel, adversaries: &[usize]) -> Result<Self> {
        let n = panel.n();
        if let Some(&i) = adversaries.iter().find(|&&i| i >= n) {
            return Err(Error::Dimension(format!("adversary index {i} out of range for {n} clients")));
        }
        let mut adv = adversaries.to_vec();
        adv.sort_unstable();
        adv.dedup();
        Ok(Self {
            input_id: panel.input_id.clone(),
            label: panel.label,
            rows: panel.rows().to_vec(),
            adversaries: adv,
        })
    }

    /// Checks membership in the corruption set: at most `f` adversaries,
    /// every other row untouched, every row on the simplex.
    pub fn verify(&self, source: &ProbitPanel, f: usize) -> Result<()> {
        let fail = |msg: String| Error::InvalidPanel {
            id: self.input_id.clone(),
            msg,
        };
        if self.adversaries.len() > f {
            return Err(fail(format!("{} adversaries exceed f = {f}", self.adversaries.len())));
        }
        if self.rows.len() != source.n() {
            return Err(fail("client count changed".into()));
        }
        for (i, (row, orig)) in self.rows.iter().zip(source.rows()).enumerate() {
            if !self.adversaries.contains(&i) && row != orig {
                return Err(fail(format!("honest row {i} was modified")));
            }
            check_simplex(row, SIMPLEX_TOL).map_err(|e| fail(format!("row {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn into_panel(self) -> Result<ProbitPanel> {
        ProbitPanel::new(self.input_id, self.label, self.rows)
    }
}

fn one_hot(k: usize, hot: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[hot] = 1.0;
    v
}

/// Largest entry of `v` outside `excluded`, ties to the lowest index.
fn argmax_excluding(v: &[f64], excluded: usize) -> usize {
    let mut best: Option<usize> = None;
    for (k, &x) in v.iter().enumerate() {
        if k == excluded {
            continue;
        }
        match best {
            Some(b) if v[b] >= x => {}
            _ => best = Some(k),
        }
    }
    best.expect("at least two classes")
}

/// Each adversary replaces its probit by `softmax(-amplification * h_i)`.
pub fn attack_logit_flipping(panel: &ProbitPanel, adversaries: &[usize], amplification: f64) -> Result<CorruptedPanel> {
    let mut out = CorruptedPanel::from_source(panel, adversaries)?;
    for &i in &out.adversaries {
        let flipped: Vec<f64> = panel.rows()[i].iter().map(|p| -amplification * p).collect();
        out.rows[i] = softmax(&flipped);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiaMode {
    BlackBox,
    WhiteBox,
}

/// Strongest inverted attack: adversaries go one-hot on the most probable
/// wrong class of their own probit (black-box) or of the clean aggregation
/// output (white-box).
pub fn attack_sia(
    panel: &ProbitPanel,
    adversaries: &[usize],
    mode: SiaMode,
    oracle: Option<&[f64]>,
) -> Result<CorruptedPanel> {
    let mut out = CorruptedPanel::from_source(panel, adversaries)?;
    let k = panel.classes();
    let y = panel.label;
    let shared = match mode {
        SiaMode::BlackBox => None,
        SiaMode::WhiteBox => Some(argmax_excluding(
            oracle.ok_or(Error::MissingOracle("sia-wb"))?,
            y,
        )),
    };
    for &i in &out.adversaries.clone() {
        let target = shared.unwrap_or_else(|| argmax_excluding(&panel.rows()[i], y));
        out.rows[i] = one_hot(k, target);
    }
    Ok(out)
}

/// Loss-maximisation attack: one-hot on the least likely class of the clean
/// aggregation output.
pub fn attack_lma(panel: &ProbitPanel, adversaries: &[usize], oracle: Option<&[f64]>) -> Result<CorruptedPanel> {
    let oracle = oracle.ok_or(Error::MissingOracle("lma"))?;
    let mut out = CorruptedPanel::from_source(panel, adversaries)?;
    let target = argmin(oracle);
    for &i in &out.adversaries.clone() {
        out.rows[i] = one_hot(panel.classes(), target);
    }
    Ok(out)
}

/// Class-prior attack: one-hot on the class least similar to the argmax of
/// `reference`.
pub fn attack_cpa(
    panel: &ProbitPanel,
    adversaries: &[usize],
    reference: Option<&[f64]>,
    similarity: Option<&SimilarityMatrix>,
) -> Result<CorruptedPanel> {
    let reference = reference.ok_or(Error::MissingOracle("cpa"))?;
    let sim = similarity.ok_or(Error::MissingSimilarity)?;
    if sim.k() != panel.classes() {
        return Err(Error::Dimension(format!(
            "similarity matrix is {0}x{0} but the panel has {1} classes",
            sim.k(),
            panel.classes()
        )));
    }
    let mut out = CorruptedPanel::from_source(panel, adversaries)?;
    let target = sim.least_similar(argmax(reference));
    for &i in &out.adversaries.clone() {
        out.rows[i] = one_hot(panel.classes(), target);
    }
    Ok(out)
}

/// What a white-box attacker can query about the aggregator it targets.
pub trait AttackSurface: Sync {
    /// Aggregation output on the uncorrupted panel.
    fn clean_output(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>>;

    /// CW loss of the aggregation scores at `label` and its gradient with
    /// respect to each probit row in `wrt`.
    fn cw_loss_grad(&self, rows: &[Vec<f64>], label: usize, wrt: &[usize]) -> (f64, Vec<Vec<f64>>);
}

/// A static rule seen by the attacker. `f` is the trimming parameter.
///
/// Gradients are sub-gradients of the rule: a row contributes to a
/// coordinate only when it survives trimming (CWTM), is a central order
/// statistic (CWMed), or through its Weiszfeld weight at the solution (GM,
/// weights held fixed).
#[derive(Debug, Clone)]
pub struct StaticSurface {
    pub rule: AggregatorKind,
    pub f: usize,
}

impl AttackSurface for StaticSurface {
    fn clean_output(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        static_output(&self.rule, rows, self.f)
    }

    fn cw_loss_grad(&self, rows: &[Vec<f64>], label: usize, wrt: &[usize]) -> (f64, Vec<Vec<f64>>) {
        let n = rows.len();
        let k = rows[0].len();
        let out = match static_output(&self.rule, rows, self.f) {
            Ok(o) => o,
            Err(_) => return (f64::NAN, vec![vec![f64::NAN; k]; wrt.len()]),
        };
        let (loss, g_out) = cw_loss(&out, label);
        let mut grads = vec![vec![0.0; k]; wrt.len()];
        match &self.rule {
            AggregatorKind::Mean => {
                for g in grads.iter_mut() {
                    for (gi, go) in g.iter_mut().zip(&g_out) {
                        *gi = go / n as f64;
                    }
                }
            }
            AggregatorKind::Cwtm | AggregatorKind::CwMed => {
                let trim = match self.rule {
                    AggregatorKind::Cwtm => self.f,
                    _ if n % 2 == 1 => (n - 1) / 2,
                    _ => n / 2 - 1,
                };
                for (j, &go) in g_out.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let kept = cwtm_kept_indices(rows, j, trim);
                    let share = go / kept.len() as f64;
                    for (slot, r) in wrt.iter().enumerate() {
                        if kept.contains(r) {
                            grads[slot][j] = share;
                        }
                    }
                }
            }
            AggregatorKind::Gm => {
                let opts = GmOptions::default();
                let point = geometric_median(rows, opts).map(|r| r.point).unwrap_or(out);
                let weights: Vec<f64> = rows
                    .iter()
                    .map(|r| {
                        let d = r.iter().zip(&point).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        1.0 / d.max(opts.floor)
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                for (slot, &r) in wrt.iter().enumerate() {
                    let s = weights[r] / total;
                    for (gi, go) in grads[slot].iter_mut().zip(&g_out) {
                        *gi = s * go;
                    }
                }
            }
            _ => unreachable!("static surface holds a static rule"),
        }
        (loss, grads)
    }
}

/// A DeepSet aggregator seen by the attacker, with the pooling it deploys.
#[derive(Debug, Clone, Copy)]
pub struct DeepSetSurface<'a> {
    pub model: &'a DeepSetModel,
    pub pooling: Pooling,
}

impl AttackSurface for DeepSetSurface<'_> {
    fn clean_output(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.model.forward(rows, self.pooling)?.probs)
    }

    fn cw_loss_grad(&self, rows: &[Vec<f64>], label: usize, wrt: &[usize]) -> (f64, Vec<Vec<f64>>) {
        self.model
            .loss_and_grads(rows, label, LossKind::CarliniWagner, self.pooling, None, wrt)
    }
}

/// Projected sign-gradient ascent on the CW loss. Adversary logits start
/// i.i.d. standard normal; each of `steps` iterations moves them by
/// `step_size * sign(grad)`. Rows are `softmax(v)` throughout.
pub fn attack_pgd_cw(
    panel: &ProbitPanel,
    adversaries: &[usize],
    surface: &dyn AttackSurface,
    steps: usize,
    step_size: f64,
    rng: &mut Rng,
) -> Result<CorruptedPanel> {
    let mut out = CorruptedPanel::from_source(panel, adversaries)?;
    let k = panel.classes();
    let adv = out.adversaries.clone();
    let mut logits: Vec<Vec<f64>> = adv
        .iter()
        .map(|_| (0..k).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for _ in 0..steps {
        for (slot, &i) in adv.iter().enumerate() {
            out.rows[i] = softmax(&logits[slot]);
        }
        let (loss, grads) = surface.cw_loss_grad(&out.rows, panel.label, &adv);
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::AttackDiverged(panel.input_id.clone()));
        }
        for (slot, &i) in adv.iter().enumerate() {
            let gv = softmax_backward(&out.rows[i], &grads[slot]);
            for (v, g) in logits[slot].iter_mut().zip(gv) {
                if g != 0.0 {
                    *v += step_size * g.signum();
                }
            }
        }
    }
    for (slot, &i) in adv.iter().enumerate() {
        out.rows[i] = softmax(&logits[slot]);
    }
    Ok(out)
}

/// Runs `cfg` on one panel. `oracle` is the clean aggregation output; CPA
/// uses the clean mean probit as its reference.
pub fn apply_attack(
    panel: &ProbitPanel,
    adversaries: &[usize],
    cfg: &AttackConfig,
    surface: &dyn AttackSurface,
    rng: &mut Rng,
) -> Result<CorruptedPanel> {
    if adversaries.is_empty() {
        return CorruptedPanel::from_source(panel, adversaries);
    }
    match cfg.kind {
        AttackKind::LogitFlipping => attack_logit_flipping(panel, adversaries, cfg.amplification),
        AttackKind::SiaBlackBox => attack_sia(panel, adversaries, SiaMode::BlackBox, None),
        AttackKind::SiaWhiteBox => {
            let oracle = surface.clean_output(panel.rows())?;
            attack_sia(panel, adversaries, SiaMode::WhiteBox, Some(&oracle))
        }
        AttackKind::Lma => {
            let oracle = surface.clean_output(panel.rows())?;
            attack_lma(panel, adversaries, Some(&oracle))
        }
        AttackKind::Cpa => attack_cpa(panel, adversaries, Some(&panel.mean()), cfg.similarity.as_ref()),
        AttackKind::PgdCw => attack_pgd_cw(panel, adversaries, surface, cfg.pgd_steps, cfg.pgd_step_size, rng),
    }
}

/// How adversary identities are chosen across queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdversaryPolicy {
    /// A fresh uniformly random set for every panel.
    FreshPerQuery,
    /// One set shared by every panel.
    Fixed,
}

impl FromStr for AdversaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fresh" | "fresh-per-query" | "per-query" => Ok(AdversaryPolicy::FreshPerQuery),
            "fixed" | "fixed-set" => Ok(AdversaryPolicy::Fixed),
            other => Err(Error::Config(format!("unknown adversary policy {other:?}"))),
        }
    }
}

/// Adversary indices (sorted) for panel `panel_index` under `seed`.
pub fn draw_adversaries(n: usize, f: usize, policy: AdversaryPolicy, seed: u64, panel_index: usize) -> Vec<usize> {
    if f == 0 {
        return Vec::new();
    }
    let key = match policy {
        AdversaryPolicy::FreshPerQuery => panel_index as u64,
        AdversaryPolicy::Fixed => u64::MAX,
    };
    let mut rng = stream(seed, Purpose::Adversary, &[key]);
    let mut set = index::sample(&mut rng, n, f.min(n)).into_vec();
    set.sort_unstable();
    set
}

/// Corrupts every panel of a dataset. Adversary sets come from
/// [`draw_adversaries`]; PGD randomness from a per-panel attack stream.
pub fn attacked_dataset(
    panels: &[ProbitPanel],
    cfg: &AttackConfig,
    f: usize,
    policy: AdversaryPolicy,
    surface: &dyn AttackSurface,
    seed: u64,
) -> Result<Vec<CorruptedPanel>> {
    cfg.validate()?;
    panels
        .iter()
        .enumerate()
        .map(|(i, panel)| {
            if 2 * f >= panel.n() {
                return Err(Error::InvalidBound { n: panel.n(), f });
            }
            let adv = draw_adversaries(panel.n(), f, policy, seed, i);
            let mut rng = stream(seed, Purpose::Attack, &[i as u64]);
            apply_attack(panel, &adv, cfg, surface, &mut rng)
        })
        .collect()
}
