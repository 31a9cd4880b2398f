//! `fedrob` command-line tool.
//!
//! Exit status: 0 on success, 1 for invalid input or usage, 2 when a run
//! fails at runtime (I/O, divergence, failed self-test).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use fedrob::aggregators::{certify, AggregatorKind};
use fedrob::attacks::{AdversaryPolicy, AttackConfig, AttackKind, SimilarityMatrix};
use fedrob::harness::{
    certificates_csv, corrupt_for, evaluate, generate_synthetic, ingest_panels, selftest, write_dataset,
    Aggregator, Config, Dataset, EvalOptions, SyntheticSpec,
};
use fedrob::nn::{checkpoint, Architecture, DeepSetModel};
use fedrob::simplex::{ProbitPanel, SystemParams};
use fedrob::training::{adversarial_train, trace_to_csv, TrainConfig};
use fedrob::{Error, Result};

const DEFAULT_EPOCHS: f64 = 5.0;
const DEFAULT_SEEDS: usize = 5;
const DEFAULT_F: usize = 4;

#[derive(Parser, Debug)]
#[command(name = "fedrob", version, about = "Robust federated inference over client probit vectors")]
struct Cli {
    /// Run seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic panel dataset and its class-similarity matrix.
    Generate(GenerateArgs),
    /// Adversarially train a DeepSet aggregator.
    Train(TrainArgs),
    /// Corrupt a dataset with one attack.
    Attack(AttackArgs),
    /// Clean, per-attack and worst-case accuracy of a list of aggregators.
    Evaluate(EvaluateArgs),
    /// Per-panel robustness certificates for the trimmed mean.
    Certify(CertifyArgs),
    /// Run the built-in numeric oracle checks.
    Selftest,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Index of the first sample; disjoint offsets give disjoint splits.
    #[arg(long)]
    offset: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Passes over the dataset; ignored when `steps` is set in the config.
    #[arg(long)]
    epochs: Option<f64>,
    /// Number of adversarial clients (default 4).
    #[arg(long)]
    f: Option<usize>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    /// One of `lf`, `sia-bb`, `sia-wb`, `lma`, `cpa`, `pgd-cw`.
    #[arg(long)]
    attack: String,
    /// Number of adversarial clients (default 4).
    #[arg(long)]
    f: Option<usize>,
    /// Aggregator that white-box attacks differentiate through.
    #[arg(long, default_value = "cwtm")]
    target: String,
    /// DeepSet checkpoint written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Class-similarity matrix for the class-prior attack; defaults to
    /// `similarity.txt` next to the data.
    #[arg(long)]
    similarity: Option<PathBuf>,
    /// `fresh` (new adversaries per panel) or `fixed`.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset files; panels are concatenated.
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Comma-separated aggregators, e.g. `mean,cwtm,cwmed,gm,deepset-tm,ra-cwtm:100`.
    #[arg(long)]
    aggregators: Option<String>,
    /// Comma-separated attacks or `all`.
    #[arg(long)]
    attacks: Option<String>,
    /// Number of adversarial clients (default 4).
    #[arg(long)]
    f: Option<usize>,
    /// Number of evaluation seeds, starting at `--seed`.
    #[arg(long)]
    seeds: Option<usize>,
    /// DeepSet checkpoint written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Class-similarity matrix for the class-prior attack; defaults to
    /// `similarity.txt` next to the data.
    #[arg(long)]
    similarity: Option<PathBuf>,
    /// `fresh` (new adversaries per panel) or `fixed`.
    #[arg(long)]
    policy: Option<String>,
    /// Reference aggregator for the robustness gap.
    #[arg(long)]
    oracle: Option<String>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Number of adversarial clients (default 4).
    #[arg(long)]
    f: Option<usize>,
}

struct Ctx {
    seed: u64,
    config: Config,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn f(&self, flag: Option<usize>) -> Result<usize> {
        Ok(flag.or(self.config.get("f")?).unwrap_or(DEFAULT_F))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents)?;
        Ok(path)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get("seed")?.unwrap_or(0),
    };
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx {
        seed,
        config,
        out: cli.out,
    };
    match cli.command {
        Command::Generate(args) => generate(&ctx, args),
        Command::Train(args) => train(&ctx, args),
        Command::Attack(args) => attack(&ctx, args),
        Command::Evaluate(args) => evaluate_cmd(&ctx, args),
        Command::Certify(args) => certify_cmd(&ctx, args),
        Command::Selftest => selftest_cmd(&ctx),
    }
}

fn generate(ctx: &Ctx, args: GenerateArgs) -> Result<ExitCode> {
    let mut spec = SyntheticSpec::default();
    ctx.config.apply_synthetic(&mut spec)?;
    spec.seed = ctx.seed;
    spec.n = args.n.unwrap_or(spec.n);
    spec.classes = args.classes.unwrap_or(spec.classes);
    spec.alpha = args.alpha.unwrap_or(spec.alpha);
    spec.samples = args.samples.unwrap_or(spec.samples);
    spec.offset = args.offset.unwrap_or(spec.offset);
    let data = generate_synthetic(&spec)?;
    let path = ctx.path("dataset.txt");
    write_dataset(&data.dataset, &path)?;
    data.similarity.save(&ctx.path("similarity.txt"))?;
    let digest = Sha256::digest(std::fs::read(&path)?);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    println!(
        "wrote {} panels (n = {}, K = {}) to {}",
        data.dataset.panels.len(),
        spec.n,
        spec.classes,
        path.display()
    );
    println!("sha256 {hex}");
    Ok(ExitCode::SUCCESS)
}

fn load_data(path: &Path) -> Result<Dataset> {
    let ingested = ingest_panels(path)?;
    if ingested.renormalized > 0 {
        eprintln!(
            "warning: {} rows in {} did not sum to 1 and were re-normalised",
            ingested.renormalized,
            path.display()
        );
    }
    Ok(ingested.dataset)
}

fn load_model(ctx: &Ctx, flag: Option<PathBuf>) -> Result<Option<DeepSetModel>> {
    let path = flag.or_else(|| ctx.config.raw("model").map(PathBuf::from));
    path.map(|p| checkpoint::load(&p)).transpose()
}

/// Explicit path, then the config, then `similarity.txt` next to the data.
fn load_similarity(ctx: &Ctx, flag: Option<PathBuf>, data: &Path) -> Result<Option<SimilarityMatrix>> {
    let explicit = flag.or_else(|| ctx.config.raw("similarity").map(PathBuf::from));
    if let Some(p) = explicit {
        return SimilarityMatrix::load(&p).map(Some);
    }
    let sibling = data.with_file_name("similarity.txt");
    if sibling.is_file() {
        return SimilarityMatrix::load(&sibling).map(Some);
    }
    Ok(None)
}

fn attack_config(ctx: &Ctx, kind: AttackKind, similarity: Option<SimilarityMatrix>) -> Result<AttackConfig> {
    let mut cfg = AttackConfig::new(kind);
    ctx.config.apply_attack(&mut cfg)?;
    cfg.similarity = similarity;
    Ok(cfg)
}

fn policy(ctx: &Ctx, flag: Option<String>) -> Result<AdversaryPolicy> {
    match flag.as_deref().or(ctx.config.raw("policy")) {
        Some(p) => p.parse(),
        None => Ok(AdversaryPolicy::FreshPerQuery),
    }
}

fn train(ctx: &Ctx, args: TrainArgs) -> Result<ExitCode> {
    let data = load_data(&args.data)?;
    let mut cfg = TrainConfig::default();
    ctx.config.apply_train(&mut cfg)?;
    cfg.seed = ctx.seed;
    cfg.f = args.f.unwrap_or(cfg.f);
    if ctx.config.raw("steps").is_none() {
        let epochs = match args.epochs {
            Some(e) => e,
            None => ctx.config.get("epochs")?.unwrap_or(DEFAULT_EPOCHS),
        };
        if epochs.is_nan() || epochs <= 0.0 {
            return Err(Error::Config(format!("epochs must be positive, got {epochs}")));
        }
        cfg = cfg.with_epochs(epochs, data.panels.len());
    }
    let mut arch = Architecture::new(data.classes);
    ctx.config.apply_architecture(&mut arch)?;
    let model = DeepSetModel::new(arch, ctx.seed);
    match adversarial_train(model, &data.panels, &cfg) {
        Ok(outcome) => {
            ctx.write("trace.csv", &trace_to_csv(&outcome.trace))?;
            let path = ctx.path("model.ckpt");
            checkpoint::save(&outcome.model, &path)?;
            let last = outcome.trace.last();
            println!(
                "trained {} steps ({} updates); final clean loss {:.4}, adversarial loss {:.4}",
                cfg.steps,
                outcome.updates,
                last.map_or(f64::NAN, |r| r.clean_loss),
                last.map_or(f64::NAN, |r| r.adv_loss)
            );
            println!("checkpoint {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(failure) => {
            ctx.write("trace.csv", &trace_to_csv(&failure.trace))?;
            Err(failure.error)
        }
    }
}

fn attack(ctx: &Ctx, args: AttackArgs) -> Result<ExitCode> {
    let data = load_data(&args.data)?;
    let kind: AttackKind = args.attack.parse()?;
    let similarity = load_similarity(ctx, args.similarity, &args.data)?;
    let cfg = attack_config(ctx, kind, similarity)?;
    let f = ctx.f(args.f)?;
    let target: AggregatorKind = args.target.parse()?;
    let model = load_model(ctx, args.model)?;
    let agg = Aggregator::new(&target, model.as_ref(), f)?;
    let corrupted = corrupt_for(&data.panels, &agg, &cfg, policy(ctx, args.policy)?, ctx.seed)?;
    let panels = corrupted
        .into_iter()
        .map(|c| c.into_panel())
        .collect::<Result<Vec<ProbitPanel>>>()?;
    let out = Dataset {
        n: data.n,
        classes: data.classes,
        seed: data.seed,
        panels,
    };
    let path = ctx.path("attacked.txt");
    write_dataset(&out, &path)?;
    println!("{kind} with f = {f} against {target}: wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn evaluate_cmd(ctx: &Ctx, args: EvaluateArgs) -> Result<ExitCode> {
    let mut paths = args.data;
    if paths.is_empty() {
        paths.extend(ctx.config.raw("data").map(PathBuf::from));
    }
    let first = paths
        .first()
        .cloned()
        .ok_or_else(|| Error::Config("no dataset given (--data or `data` in the config)".into()))?;
    let mut panels = Vec::new();
    let mut renormalized = 0;
    for p in &paths {
        let ingested = ingest_panels(p)?;
        renormalized += ingested.renormalized;
        panels.extend(ingested.dataset.panels);
    }
    if renormalized > 0 {
        eprintln!("warning: {renormalized} rows did not sum to 1 and were re-normalised");
    }
    let model = load_model(ctx, args.model)?;
    let aggregators: Vec<AggregatorKind> = match args.aggregators.as_deref().or(ctx.config.raw("aggregators")) {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?,
        None => {
            let mut all = AggregatorKind::static_suite();
            if model.is_some() {
                all.extend([AggregatorKind::DeepSet, AggregatorKind::DeepSetTm]);
            }
            all
        }
    };
    let attacks = AttackKind::parse_list(args.attacks.as_deref().or(ctx.config.raw("attacks")).unwrap_or("all"))?;
    let f = ctx.f(args.f)?;
    let seeds = match args.seeds {
        Some(s) => s,
        None => ctx.config.get("seeds")?.unwrap_or(DEFAULT_SEEDS),
    };
    let mut opts = EvalOptions::new(f, (0..seeds as u64).map(|i| ctx.seed.wrapping_add(i)).collect());
    opts.policy = policy(ctx, args.policy)?;
    if let Some(o) = args.oracle.as_deref().or(ctx.config.raw("oracle")) {
        opts.oracle = o.parse()?;
    }
    opts.attack = attack_config(ctx, AttackKind::LogitFlipping, load_similarity(ctx, args.similarity, &first)?)?;
    opts.renormalized_rows = renormalized;

    let report = evaluate(&panels, &aggregators, &attacks, &opts, model.as_ref())?;
    let json = ctx.write("report.json", &report.to_json()?)?;
    ctx.write("report.csv", &report.to_csv())?;
    println!("{:<16} {:>8} {:>8}  worst attack", "aggregator", "clean", "worst");
    for a in &report.aggregators {
        println!(
            "{:<16} {:>8.2} {:>8.2}  {}",
            a.aggregator, a.clean.mean, a.worst_case, a.worst_attack
        );
    }
    let c = &report.certificate;
    println!(
        "certified {}/{} panels, {} soundness violations; report {}",
        c.certified,
        c.panels,
        c.soundness_violations,
        json.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn certify_cmd(ctx: &Ctx, args: CertifyArgs) -> Result<ExitCode> {
    let data = load_data(&args.data)?;
    let params = SystemParams::new(data.n, ctx.f(args.f)?, data.classes)?;
    let certs = data
        .panels
        .iter()
        .map(|p| certify(p, &params))
        .collect::<Result<Vec<_>>>()?;
    let path = ctx.write(
        "certificates.csv",
        &certificates_csv(data.panels.iter().map(|p| p.input_id.as_str()).zip(&certs)),
    )?;
    let certified = certs.iter().filter(|c| c.certified).count();
    let degenerate = certs.iter().filter(|c| c.degenerate).count();
    let total = certs.len();
    println!(
        "certified {certified}/{total} panels ({:.2}%), {degenerate} degenerate, f = {}; wrote {}",
        100.0 * certified as f64 / total.max(1) as f64,
        params.f,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn selftest_cmd(ctx: &Ctx) -> Result<ExitCode> {
    let outcomes = selftest(ctx.seed)?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    Ok(if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
