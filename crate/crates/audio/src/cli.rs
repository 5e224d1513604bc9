//! Command-line driver.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use uap_core::attack::{run_level_experiment, AttackConfig, AttackError, Norm, UniversalityLevel};
use uap_core::distortion::distortion_report;
use uap_core::dsp::FrontendConfig;
use uap_core::model::{accuracy, train, Architecture, Model, TrainConfig};
use uap_core::report::{evaluate_perturbation, ReportMeta};
use uap_core::synth::SynthConfig;
use uap_core::ClassLabel;

use crate::dataset::{self, Split};
use crate::export::{self, timestamp_now};
use crate::manifest::ManifestBuilder;
use crate::params::{load_params, params_checksum, save_params};
use crate::perturbation::{load_perturbation, save_perturbation, PerturbationFile};

#[derive(Debug, Parser)]
#[command(name = "uap-audio", version, about = "Universal adversarial perturbations for speech commands")]
pub struct Cli {
    /// Master seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for evaluation and independent trials.
    #[arg(long, global = true, env = "UAP_AUDIO_JOBS")]
    pub jobs: Option<usize>,
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create or index a dataset directory.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a classifier on a dataset's train split.
    Train(TrainArgs),
    /// Craft a universal perturbation at a universality level.
    Attack(AttackArgs),
    /// Evaluate a stored perturbation on one or two models.
    Eval(EvalArgs),
    /// Per-part loudness audit of a stored perturbation.
    Distortion(DistortionArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Generate a synthetic tone/chirp dataset.
    Synth {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
        valid_fraction: f64,
    },
    /// Validate a Speech Commands style directory and write its index.
    Ingest {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        valid_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrontendChoice {
    A,
    B,
}

impl FrontendChoice {
    fn config(self) -> FrontendConfig {
        match self {
            FrontendChoice::A => FrontendConfig::model_a(),
            FrontendChoice::B => FrontendConfig::model_b(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "data")]
    pub dataset: PathBuf,
    #[arg(long, default_value = "model.mdl")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FrontendChoice::A)]
    pub frontend: FrontendChoice,
    /// Channels per convolution layer.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long, default_value = "data")]
    pub dataset: PathBuf,
    #[arg(long, default_value = "model.mdl")]
    pub model: PathBuf,
    /// Second model for transfer columns.
    #[arg(long)]
    pub model_b: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub level: u8,
    /// Target classes; defaults to every model label at level 3.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<ClassLabel>,
    /// Clips per class drawn for each trial.
    #[arg(long, default_value_t = 25)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub xi: f64,
    #[arg(long, default_value = "2")]
    pub p: Norm,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub overshoot: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub passes: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub perturbation: PathBuf,
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    pub dataset: PathBuf,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistortionArgs {
    #[arg(long)]
    pub perturbation: PathBuf,
    /// Indexed dataset root or a plain class-layout directory.
    #[arg(long, default_value = "data")]
    pub dataset: PathBuf,
    /// Split to read when the dataset is indexed.
    #[arg(long, value_enum, default_value_t = SplitChoice::Valid)]
    pub split: SplitChoice,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Valid,
}

impl From<SplitChoice> for Split {
    fn from(s: SplitChoice) -> Self {
        match s {
            SplitChoice::Train => Split::Train,
            SplitChoice::Valid => Split::Valid,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid flag values; exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failures while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn config_err(flag: &str, msg: &str) -> CliError {
    CliError::Config(format!("invalid value for {flag}: {msg}"))
}

struct Ctx {
    seed: u64,
    workdir: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    fn out_dir(&self, p: &Path) -> Result<PathBuf, CliError> {
        let dir = self.path(p);
        std::fs::create_dir_all(&dir).map_err(runtime("creating output directory"))?;
        Ok(dir)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(config_err("--jobs", "must be at least 1"));
        }
        // a pool already set up in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let ctx = Ctx {
        seed: cli.seed,
        workdir: cli.workdir,
    };
    match cli.command {
        Command::Dataset(cmd) => cmd_dataset(&ctx, cmd),
        Command::Train(args) => cmd_train(&ctx, args),
        Command::Attack(args) => cmd_attack(&ctx, args),
        Command::Eval(args) => cmd_eval(&ctx, args),
        Command::Distortion(args) => cmd_distortion(&ctx, args),
    }
}

fn cmd_dataset(ctx: &Ctx, cmd: DatasetCommand) -> Result<(), CliError> {
    let ts = timestamp_now();
    match cmd {
        DatasetCommand::Synth {
            out,
            classes,
            per_class,
            valid_fraction,
        } => {
            if !(1..=12).contains(&classes) {
                return Err(config_err("--classes", "must be between 1 and 12"));
            }
            if per_class == 0 {
                return Err(config_err("--per-class", "must be at least 1"));
            }
            if !(0.0..1.0).contains(&valid_fraction) {
                return Err(config_err("--valid-fraction", "must lie in [0, 1)"));
            }
            let cfg = SynthConfig {
                classes,
                per_class,
                seed: ctx.seed,
                valid_fraction,
            };
            let root = ctx.out_dir(&out)?;
            let mut manifest = ManifestBuilder::new("dataset-synth", json!(cfg));
            manifest.seed("synth", ctx.seed);
            let index = dataset::write_synth(&root, &cfg).map_err(runtime("writing dataset"))?;
            manifest.output(&root.join(dataset::INDEX_FILE)).map_err(runtime("hashing index"))?;
            let m = manifest.finish(&root, &ts).map_err(runtime("writing manifest"))?;
            println!(
                "wrote {} train and {} valid clips to {}; manifest {}",
                index.train.len(),
                index.valid.len(),
                root.display(),
                m.display()
            );
        }
        DatasetCommand::Ingest { source, valid_fraction } => {
            if !(0.0..1.0).contains(&valid_fraction) {
                return Err(config_err("--valid-fraction", "must lie in [0, 1)"));
            }
            let root = ctx.path(&source);
            let mut manifest = ManifestBuilder::new(
                "dataset-ingest",
                json!({ "source": source, "valid_fraction": valid_fraction }),
            );
            manifest.seed("split", ctx.seed);
            let index = dataset::ingest(&root, valid_fraction, ctx.seed).map_err(runtime("ingesting dataset"))?;
            for s in &index.skipped {
                eprintln!("skipped {}: {}", s.path, s.reason);
            }
            manifest.output(&root.join(dataset::INDEX_FILE)).map_err(runtime("hashing index"))?;
            let m = manifest.finish(&root, &ts).map_err(runtime("writing manifest"))?;
            println!(
                "indexed {} train and {} valid clips ({} skipped); manifest {}",
                index.train.len(),
                index.valid.len(),
                index.skipped.len(),
                m.display()
            );
        }
    }
    Ok(())
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> Result<(), CliError> {
    if args.channels == 0 {
        return Err(config_err("--channels", "must be at least 1"));
    }
    if args.epochs == 0 {
        return Err(config_err("--epochs", "must be at least 1"));
    }
    if args.batch == 0 {
        return Err(config_err("--batch", "must be at least 1"));
    }
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        return Err(config_err("--lr", "must be positive"));
    }
    let ts = timestamp_now();
    let root = ctx.path(&args.dataset);
    let (index, train_set) = dataset::load_split(&root, Split::Train).map_err(runtime("loading train split"))?;
    let valid_set = dataset::load_split(&root, Split::Valid)
        .map_err(runtime("loading valid split"))?
        .1;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: ctx.seed,
    };
    let architecture = Architecture::with_channels(index.labels.len(), args.channels);
    let frontend = args.frontend.config();
    let mut manifest = ManifestBuilder::new(
        "train",
        json!({ "train": cfg, "architecture": architecture, "frontend": frontend, "dataset": args.dataset }),
    );
    manifest.seed("train", ctx.seed);
    manifest.input(&root.join(dataset::INDEX_FILE)).map_err(runtime("hashing index"))?;
    let (params, log) =
        train(&train_set, &index.labels, architecture, frontend, &cfg).map_err(runtime("training"))?;
    for e in &log.epochs {
        println!("epoch {:>3}  loss {:.6}  train acc {:.4}", e.epoch + 1, e.loss, e.accuracy);
    }
    let model = Model::new(params).map_err(runtime("building model"))?;
    if !valid_set.is_empty() {
        println!("valid acc {:.4}", accuracy(&model, &valid_set));
    }
    let out = ctx.path(&args.out);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(runtime("creating output directory"))?;
    }
    save_params(&out, model.params()).map_err(runtime("writing params"))?;
    let log_path = out.with_extension("trainlog.json");
    std::fs::write(&log_path, serde_json::to_string_pretty(&log).expect("log serializes") + "\n")
        .map_err(runtime("writing training log"))?;
    manifest.output(&out).map_err(runtime("hashing params"))?;
    manifest.output(&log_path).map_err(runtime("hashing log"))?;
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_else(|| ctx.workdir.clone());
    let m = manifest.finish(&dir, &ts).map_err(runtime("writing manifest"))?;
    println!("wrote {} (checksum {}); manifest {}", out.display(), params_checksum(model.params()), m.display());
    Ok(())
}

fn attack_config(args: &AttackArgs, seed: u64) -> Result<AttackConfig, CliError> {
    let checks: [(&str, bool, &str); 6] = [
        ("--xi", args.xi > 0.0 && args.xi.is_finite(), "must be positive"),
        ("--alpha", args.alpha > 0.0 && args.alpha <= 1.0, "must lie in (0, 1]"),
        ("--overshoot", args.overshoot > 0.0 && args.overshoot.is_finite(), "must be positive"),
        ("--max-iters", args.max_iters >= 1, "must be at least 1"),
        ("--passes", args.passes >= 1, "must be at least 1"),
        ("--trials", args.trials >= 1, "must be at least 1"),
    ];
    if let Some((flag, _, msg)) = checks.iter().find(|c| !c.1) {
        return Err(config_err(flag, msg));
    }
    if args.samples_per_class == 0 {
        return Err(config_err("--samples-per-class", "must be at least 1"));
    }
    Ok(AttackConfig {
        overshoot: args.overshoot,
        deepfool_max_iters: args.max_iters,
        xi: args.xi,
        p: args.p,
        alpha: args.alpha,
        max_passes: args.passes,
        trials: args.trials,
        rng_seed: seed,
    })
}

fn load_model(ctx: &Ctx, path: &Path, manifest: &mut ManifestBuilder) -> Result<Model, CliError> {
    let path = ctx.path(path);
    let params = load_params(&path).map_err(|e| CliError::Runtime(format!("loading {}: {e}", path.display())))?;
    manifest.input(&path).map_err(runtime("hashing model"))?;
    Model::new(params).map_err(runtime("building model"))
}

fn cmd_attack(ctx: &Ctx, args: AttackArgs) -> Result<(), CliError> {
    let cfg = attack_config(&args, ctx.seed)?;
    let ts = timestamp_now();
    let mut manifest = ManifestBuilder::new("attack", serde_json::Value::Null);
    let model = load_model(ctx, &args.model, &mut manifest)?;
    let model_b = match &args.model_b {
        Some(p) => Some(load_model(ctx, p, &mut manifest)?),
        None => None,
    };
    let classes = if args.classes.is_empty() && args.level == 3 {
        model.labels().to_vec()
    } else {
        args.classes.clone()
    };
    let level = UniversalityLevel::new(args.level, classes, model.labels()).map_err(|e| match e {
        AttackError::Level(msg) => CliError::Config(format!("invalid value for --level/--classes: {msg}")),
        other => CliError::Runtime(other.to_string()),
    })?;
    let root = ctx.path(&args.dataset);
    let (_, train_set) = dataset::load_split(&root, Split::Train).map_err(runtime("loading train split"))?;
    let (_, valid_set) = dataset::load_split(&root, Split::Valid).map_err(runtime("loading valid split"))?;
    manifest.input(&root.join(dataset::INDEX_FILE)).map_err(runtime("hashing index"))?;

    let outcome = run_level_experiment(&model, &level, &train_set, args.samples_per_class, &cfg).map_err(|e| match e {
        AttackError::InsufficientSamples { .. } => {
            CliError::Config(format!("invalid value for --samples-per-class: {e}"))
        }
        other => CliError::Runtime(format!("attack: {other}")),
    })?;
    let best = outcome.best();
    for t in &outcome.trials {
        println!(
            "trial {}  raw rate {:.4}  train FR {}  passes {}",
            t.trial,
            t.outcome.rate,
            t.train_fr.ratio().map_or_else(|| "-".into(), |r| format!("{r:.4}")),
            t.outcome.passes
        );
    }
    println!("best trial {}", outcome.best_trial);

    let out = ctx.out_dir(&args.out)?;
    let file = PerturbationFile::new(
        &best.outcome.perturbation,
        params_checksum(model.params()),
        Some(level.clone()),
        cfg,
    );
    let (wav, sidecar) =
        save_perturbation(&out.join(format!("perturbation_level{}_{ts}", level.level)), &file)
            .map_err(runtime("writing perturbation"))?;

    let meta = ReportMeta {
        level: level.level,
        classes: level.classes.clone(),
        trials: cfg.trials,
        config: cfg,
    };
    let report = evaluate_perturbation(&file.values, &model, model_b.as_ref(), &train_set, &valid_set, meta)
        .map_err(runtime("evaluating perturbation"))?;
    print!("{}", export::fooling_table(&report));
    let report_paths = export::write_fooling_report(&out, &report, &ts).map_err(runtime("writing report"))?;

    let in_level: Vec<_> = valid_set
        .iter()
        .filter(|x| x.label().is_some_and(|l| level.classes.contains(&l)))
        .cloned()
        .collect();
    let mut written = vec![wav, sidecar];
    written.extend(report_paths);
    if let Ok(distortion) = distortion_report(&file.values, &in_level) {
        let d = export::write_distortion_report(&out, &distortion, &ts).map_err(runtime("writing distortion report"))?;
        written.extend(d);
    }

    let trials_path = out.join(format!("trials_level{}_{ts}.json", level.level));
    let summary: Vec<_> = outcome
        .trials
        .iter()
        .map(|t| {
            json!({
                "trial": t.trial,
                "seed": t.seed,
                "sample_indices": t.sample_indices,
                "raw_rate": t.outcome.rate,
                "passes": t.outcome.passes,
                "train_fr": t.train_fr,
                "norm": cfg.p.of(&t.outcome.perturbation.values),
                "accepted_rates": t.outcome.accepted_rates().collect::<Vec<_>>(),
                "log": t.outcome.log,
            })
        })
        .collect();
    let trials_json = json!({ "level": level, "best_trial": outcome.best_trial, "trials": summary });
    std::fs::write(&trials_path, serde_json::to_string_pretty(&trials_json).expect("json") + "\n")
        .map_err(runtime("writing trial log"))?;
    written.push(trials_path);

    manifest.set_config(json!({ "attack": cfg, "level": level, "samples_per_class": args.samples_per_class, "dataset": args.dataset }));
    manifest.seed("attack", ctx.seed);
    for (i, t) in outcome.trials.iter().enumerate() {
        manifest.seed(&format!("trial{i}"), t.seed);
    }
    for p in &written {
        manifest.output(p).map_err(runtime("hashing outputs"))?;
    }
    let m = manifest.finish(&out, &ts).map_err(runtime("writing manifest"))?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!("manifest {}", m.display());
    Ok(())
}

fn cmd_eval(ctx: &Ctx, args: EvalArgs) -> Result<(), CliError> {
    let ts = timestamp_now();
    let mut manifest = ManifestBuilder::new("eval", json!({ "dataset": args.dataset }));
    let path = ctx.path(&args.perturbation);
    let file = load_perturbation(&path).map_err(|e| CliError::Runtime(format!("loading {}: {e}", path.display())))?;
    manifest.input(&path).map_err(runtime("hashing perturbation"))?;
    let model_a = load_model(ctx, &args.model_a, &mut manifest)?;
    let model_b = match &args.model_b {
        Some(p) => Some(load_model(ctx, p, &mut manifest)?),
        None => None,
    };
    let level = file
        .header
        .level
        .clone()
        .unwrap_or_else(|| UniversalityLevel::full(model_a.labels()));
    let root = ctx.path(&args.dataset);
    let (_, train_set) = dataset::load_split(&root, Split::Train).map_err(runtime("loading train split"))?;
    let (_, valid_set) = dataset::load_split(&root, Split::Valid).map_err(runtime("loading valid split"))?;
    manifest.input(&root.join(dataset::INDEX_FILE)).map_err(runtime("hashing index"))?;
    let meta = ReportMeta {
        level: level.level,
        classes: level.classes,
        trials: file.header.config.trials,
        config: file.header.config,
    };
    let report = evaluate_perturbation(&file.values, &model_a, model_b.as_ref(), &train_set, &valid_set, meta)
        .map_err(runtime("evaluating perturbation"))?;
    print!("{}", export::fooling_table(&report));
    let out = ctx.out_dir(&args.out)?;
    let paths = export::write_fooling_report(&out, &report, &ts).map_err(runtime("writing report"))?;
    for p in &paths {
        manifest.output(p).map_err(runtime("hashing outputs"))?;
        println!("wrote {}", p.display());
    }
    let m = manifest.finish(&out, &ts).map_err(runtime("writing manifest"))?;
    println!("manifest {}", m.display());
    Ok(())
}

fn cmd_distortion(ctx: &Ctx, args: DistortionArgs) -> Result<(), CliError> {
    let ts = timestamp_now();
    let mut manifest = ManifestBuilder::new(
        "distortion",
        json!({ "dataset": args.dataset, "split": Split::from(args.split) }),
    );
    let path = ctx.path(&args.perturbation);
    let file = load_perturbation(&path).map_err(|e| CliError::Runtime(format!("loading {}: {e}", path.display())))?;
    manifest.input(&path).map_err(runtime("hashing perturbation"))?;
    let clips = dataset::load_clips(&ctx.path(&args.dataset), args.split.into()).map_err(runtime("loading clips"))?;
    let report = distortion_report(&file.values, &clips).map_err(runtime("distortion audit"))?;
    let out = ctx.out_dir(&args.out)?;
    let paths = export::write_distortion_report(&out, &report, &ts).map_err(runtime("writing report"))?;
    let o = &report.overall;
    let show = |v: Option<f64>| v.map_or_else(|| "-".into(), |d| format!("{d:.2}"));
    println!(
        "vocal max {} mean {} | background max {} mean {} dB over {} clips ({} without energy)",
        show(o.vocal_db_max),
        show(o.vocal_db_mean),
        show(o.background_db_max),
        show(o.background_db_mean),
        o.samples,
        report.skipped_no_energy
    );
    for p in &paths {
        manifest.output(p).map_err(runtime("hashing outputs"))?;
        println!("wrote {}", p.display());
    }
    let m = manifest.finish(&out, &ts).map_err(runtime("writing manifest"))?;
    println!("manifest {}", m.display());
    Ok(())
}
