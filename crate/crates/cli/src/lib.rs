//! `rfir` subcommands. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfir_core::bench::attention_suite;
use rfir_core::checkpoint;
use rfir_core::config::parse_kv;
use rfir_datagen::{build_dataset, read_ppm, write_ppm, DatagenConfig, Kind, PromptStyle, Split};
use rfir_train::{evaluate, fit, init_model, load_split, restore_image, save_run, TrainConfig, Weights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

type BoxError = Box<dyn std::error::Error>;

#[derive(Debug, Parser)]
#[command(name = "rfir", version, about = "Text-guided multi-degradation image restoration")]
pub struct Cli {
    /// More log output (repeatable); logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise a dataset and its manifest.
    Datagen(DatagenArgs),
    /// Train on the train split of a manifest.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest and write a JSON report.
    Eval(EvalArgs),
    /// Restore one PPM image with a text prompt.
    Infer(InferArgs),
    /// Parameter, FLOP and runtime accounting of the attention modules.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// key=value file (count, image_size, groups, two_split, three_split,
    /// splits, beta_range, clean_dir, seed).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value training config; see `TrainConfig`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Model preset: default, toy or micro.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Ema,
    Live,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Single,
    Two,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = WeightsArg::Ema)]
    pub weights: WeightsArg,
    #[arg(long, value_enum, default_value_t = StyleArg::Single)]
    pub prompt_style: StyleArg,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Binary PPM input.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub prompt: String,
    /// Binary PPM output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = WeightsArg::Ema)]
    pub weights: WeightsArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Attention,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long)]
    pub report: PathBuf,
    /// Also measure wall time.
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Datagen(_) => "datagen",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Infer(_) => "infer",
            Command::Bench(_) => "bench",
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn main_with<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(&cli);
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn run(cmd: &Command) -> Result<(), BoxError> {
    match cmd {
        Command::Datagen(a) => datagen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Bench(a) => bench(a),
    }
}

/// File name of the resolved-config snapshot a subcommand writes.
pub fn snapshot_name(subcommand: &str) -> String {
    format!("{subcommand}_config.txt")
}

fn write_snapshot(dir: &Path, subcommand: &str, body: &str) -> Result<(), BoxError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(snapshot_name(subcommand));
    std::fs::write(&path, format!("# rfir {subcommand}\n{body}"))?;
    log::info!("resolved config written to {}", path.display());
    Ok(())
}

fn value_name(v: impl ValueEnum) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn read_text(path: &Path) -> Result<String, BoxError> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

/// Datagen config text with an optional `seed` line.
pub fn parse_datagen_config(text: &str) -> Result<(DatagenConfig, u64), BoxError> {
    let mut cfg = DatagenConfig::default();
    let mut seed = 0;
    for (k, v) in parse_kv(text)? {
        if k == "seed" {
            seed = v.parse().map_err(|_| format!("invalid value {v:?} for seed"))?;
        } else {
            cfg.apply_kv(&k, &v)?;
        }
    }
    Ok((cfg, seed))
}

fn datagen(a: &DatagenArgs) -> Result<(), BoxError> {
    let (mut cfg, mut seed) = match &a.config {
        Some(p) => parse_datagen_config(&read_text(p)?)?,
        None => (DatagenConfig::default(), 0),
    };
    seed = a.seed.unwrap_or(seed);
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.image_size = a.image_size.unwrap_or(cfg.image_size);
    cfg.validate()?;
    let records = build_dataset(&cfg, seed, &a.out)?;
    log::info!("wrote {} samples to {}", records.len(), a.out.display());
    write_snapshot(&a.out, "datagen", &format!("{}\nseed={seed}\n", cfg.to_kv()))
}

fn train(a: &TrainArgs) -> Result<(), BoxError> {
    let mut text = match &a.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    if let Some(p) = &a.preset {
        text = format!("preset={p}\n{text}");
    }
    if let Some(s) = a.seed {
        text.push_str(&format!("\nseed={s}"));
    }
    if let Some(e) = a.epochs {
        text.push_str(&format!("\nepochs={e}"));
    }
    let cfg = TrainConfig::from_kv(&text)?;
    let data = load_split(&a.data, Some(Split::Train), cfg.image_size())?;
    log::info!("training on {} samples from {}", data.len(), a.data.display());
    write_snapshot(
        &a.out,
        "train",
        &format!("# data={}\n{}", a.data.display(), cfg.to_kv()),
    )?;
    let run = fit(init_model::<f32>(&cfg)?, &data, &cfg)?;
    save_run(&a.out, &run)?;
    Ok(())
}

fn pick(ck: checkpoint::Checkpoint<f32>, weights: WeightsArg) -> Result<rfir_core::TransRfir<f32>, BoxError> {
    match weights {
        WeightsArg::Live => Ok(ck.model),
        WeightsArg::Ema => ck
            .ema
            .ok_or_else(|| "checkpoint has no EMA weights; use --weights live".into()),
    }
}

fn eval(a: &EvalArgs) -> Result<(), BoxError> {
    let split = match a.split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    };
    let style = match a.prompt_style {
        StyleArg::Single => PromptStyle::Single,
        StyleArg::Two => PromptStyle::Two,
    };
    // Manifest problems are reported before checkpoint problems.
    rfir_datagen::read_manifest(&a.manifest)?;
    let ck = checkpoint::load::<f32>(&a.ckpt, None)?;
    let size = ck.model.cfg.image_size.0;
    let model = pick(ck, a.weights)?;
    let data = load_split(&a.manifest, split, size)?;
    let weights = match a.weights {
        WeightsArg::Ema => Weights::Ema,
        WeightsArg::Live => Weights::Live,
    };
    let report = evaluate(&model, &data, weights, style)?;
    log::info!(
        "{} samples: PSNR {:.2} dB (input {:.2}), SSIM {:.4}, perception accuracy {:.3}",
        report.overall.count,
        report.overall.psnr,
        report.overall.input_psnr,
        report.overall.ssim,
        report.mdp_accuracy
    );
    write_snapshot(
        parent_dir(&a.report),
        "eval",
        &format!(
            "ckpt={}\nmanifest={}\nsplit={}\nweights={}\nprompt_style={}\n",
            a.ckpt.display(),
            a.manifest.display(),
            value_name(a.split),
            value_name(a.weights),
            value_name(a.prompt_style)
        ),
    )?;
    std::fs::write(&a.report, report.to_json()?)?;
    Ok(())
}

fn infer(a: &InferArgs) -> Result<(), BoxError> {
    let model = pick(checkpoint::load::<f32>(&a.ckpt, None)?, a.weights)?;
    let img = read_ppm(&a.image)?;
    let pred = restore_image(&model, &img, &a.prompt)?;
    std::fs::create_dir_all(parent_dir(&a.out))?;
    write_ppm(&a.out, &pred.restored.clamp01())?;
    let detected: Vec<&str> = Kind::ALL
        .iter()
        .filter(|k| pred.logits.get(k.label()).is_some_and(|&z| z > 0.0))
        .map(|k| k.name())
        .collect();
    log::info!("detected degradations: [{}]", detected.join(", "));
    write_snapshot(
        parent_dir(&a.out),
        "infer",
        &format!(
            "ckpt={}\nimage={}\nprompt={}\nout={}\nweights={}\n",
            a.ckpt.display(),
            a.image.display(),
            a.prompt,
            a.out.display(),
            value_name(a.weights)
        ),
    )
}

fn bench(a: &BenchArgs) -> Result<(), BoxError> {
    let Suite::Attention = a.suite;
    if a.timing && a.warmup < 3 {
        return Err("runtime measurement needs at least 3 warmup iterations".into());
    }
    let report = attention_suite(a.timing.then_some((a.warmup, a.repeats)))?;
    for e in &report.entries {
        log::info!(
            "{} {}: {} params (+{} position), {} FLOPs",
            e.label,
            e.report.module,
            e.report.params,
            e.report.pos_encoding_params,
            e.report.flops
        );
    }
    write_snapshot(
        parent_dir(&a.report),
        "bench",
        &format!(
            "suite=attention\ntiming={}\nwarmup={}\nrepeats={}\n",
            a.timing, a.warmup, a.repeats
        ),
    )?;
    std::fs::write(&a.report, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}
