//! `rvms`: command-line front end for the vessel domain-adaptation pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use rvms_core::dataset::{load_dataset, write_dataset, Role};
use rvms_core::demo::{demo, DemoConfig};
use rvms_core::dtkd::{evaluate_index, run_with, write_run_dir, LambdaMode, TrainConfig};
use rvms_core::image::{load_image, save_gray16, save_image, GrayImage};
use rvms_core::lrit::{lrit_stack, MAX_CODE};
use rvms_core::nn::read_checkpoint;
use rvms_core::rng::SeededRng;
use rvms_core::sat::fourier::style_transfer_resampled;
use rvms_core::sat::{apply_intensity_map, bezier::DEFAULT_SAMPLES, sample_map, MapMode};
use rvms_core::synth::{synth_vessels_with, Polarity, SynthConfig};
use rvms_core::domains::classify_domains;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug, Serialize)]
#[command(name = "rvms", version, about = "Multi-target domain adaptation for vessel segmentation")]
struct Cli {
    /// Worker threads. Results are identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Print progress to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
enum Command {
    /// Generate a labeled synthetic vessel dataset.
    Synth(SynthArgs),
    /// Remap intensities with a random Bezier curve (writes `<stem>_sa.png`).
    Augment(AugmentArgs),
    /// Swap in low-frequency amplitude from target images (writes `<stem>_st.png`).
    Transfer(TransferArgs),
    /// Write the four directional LRIT planes of one image.
    Lrit(LritArgs),
    /// Label each target domain as similar or dissimilar to the source.
    Cluster(ClusterArgs),
    /// Train both teachers and the student.
    Train(TrainArgs),
    /// Evaluate a checkpoint on labeled target domains.
    Eval(EvalArgs),
    /// Run the synthetic benchmark end to end: Source-Only against DTKD.
    ///
    /// Desk schedule: tau 30, total epochs 120, lr 3e-3, alpha 0.2, random
    /// lambda, threshold 0.5, 64x64 images.
    Demo(DemoArgs),
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of image/label pairs.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, value_enum, default_value_t = PolarityArg::Bright)]
    polarity: PolarityArg,
    /// Image side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    /// JSON file with generator constants; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory to create (`images/`, `labels/`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum PolarityArg {
    Bright,
    Dark,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Similar,
    Dissimilar,
}

#[derive(Args, Debug, Serialize)]
struct AugmentArgs {
    /// A PNG file, a dataset directory or a directory of PNGs.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `similar` keeps the intensity order; `dissimilar` reverses it.
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct TransferArgs {
    /// A PNG file, a dataset directory or a directory of PNGs.
    #[arg(long = "in")]
    input: PathBuf,
    /// Style donors; one is drawn per input image.
    #[arg(long)]
    target_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Half-extent of the low-frequency mask as a fraction of each side.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Amplitude interpolation rate in [0, 1], or `random` for one uniform draw per image.
    #[arg(long, default_value = "random", value_parser = parse_lambda)]
    lambda: LambdaMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct LritArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Writes `<prefix>_<dir>.png` (scaled by 255/510) and `<prefix>_<dir>_16.png` (raw codes).
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args, Debug, Serialize)]
struct ClusterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    target: Vec<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainOverrides {
    /// Teacher-only epochs [default: 200].
    #[arg(long)]
    tau: Option<usize>,
    /// Total epochs [default: 600].
    #[arg(long)]
    total_epochs: Option<usize>,
    /// Adam learning rate [default: 1e-3].
    #[arg(long)]
    lr: Option<f64>,
    /// Low-frequency mask fraction [default: 0.2].
    #[arg(long)]
    alpha: Option<f64>,
    /// Interpolation rate or `random` [default: random].
    #[arg(long, value_parser = parse_lambda)]
    lambda: Option<LambdaMode>,
    /// Source images per step [default: 1].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Foreground threshold, strict `>` [default: 0.5].
    #[arg(long)]
    threshold: Option<f64>,
    /// Seed for every random choice [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Disable style augmentation.
    #[arg(long)]
    no_sa: bool,
    /// Disable style transfer.
    #[arg(long)]
    no_st: bool,
    /// Feed the raw image only, without LRIT planes.
    #[arg(long)]
    no_lrit: bool,
    /// Train the student on Dice of every stream instead of distillation.
    #[arg(long)]
    no_kd: bool,
    /// Use a single teacher for all streams.
    #[arg(long)]
    no_dt: bool,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// JSON file with TrainConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Labeled source dataset.
    #[arg(long)]
    source: PathBuf,
    /// Unlabeled (or labeled) target datasets.
    #[arg(long, num_args = 1.., required = true)]
    target: Vec<PathBuf>,
    /// Run directory for checkpoints, `log.jsonl` and `labels.json`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    student: PathBuf,
    /// Labeled target datasets.
    #[arg(long, num_args = 1.., required = true)]
    target: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Foreground threshold, strict `>`; defaults to the value stored in the checkpoint (0.5).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct DemoArgs {
    /// Seeds data generation and training.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_lambda(s: &str) -> std::result::Result<LambdaMode, String> {
    if s == "random" {
        return Ok(LambdaMode::Random);
    }
    let v: f64 = s.parse().map_err(|_| format!("expected a number in [0, 1] or `random`, got `{s}`"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("lambda must be in [0, 1], got {v}"));
    }
    Ok(LambdaMode::Fixed(v))
}

/// PNG paths under `path`: the file itself, a dataset's `images/`, or the directory's PNGs.
fn collect_pngs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = if path.join("images").is_dir() { path.join("images") } else { path.to_path_buf() };
    let mut out: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no PNG images under {}", path.display());
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<GrayImage<f32>>> {
    paths.par_iter().map(|p| Ok(load_image::<f32>(p)?)).collect()
}

/// Applies `f` to every input image with its own stream `seed.fork(i)` and
/// writes `<out>/<stem><suffix>.png`.
fn map_images(
    input: &Path,
    out: &Path,
    seed: u64,
    suffix: &str,
    f: impl Fn(&GrayImage<f32>, &mut SeededRng) -> Result<GrayImage<f32>> + Sync,
) -> Result<()> {
    let paths = collect_pngs(input)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let base = SeededRng::new(seed);
    paths.par_iter().enumerate().try_for_each(|(i, p)| {
        let img = load_image::<f32>(p)?;
        let res = f(&img, &mut base.fork(i as u64))?;
        save_image(&res, out.join(format!("{}{suffix}.png", stem(p))))?;
        Ok(())
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthConfig>(&s).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    let polarity = match a.polarity {
        PolarityArg::Bright => Polarity::Bright,
        PolarityArg::Dark => Polarity::Dark,
    };
    let base = SeededRng::new(a.seed);
    let pairs = (0..a.n)
        .into_par_iter()
        .map(|i| Ok(synth_vessels_with::<f32>(&cfg, &mut base.fork(i as u64), a.size, a.size, polarity, a.noise)?))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&a.out, &pairs, true)?;
    Ok(())
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let mode = match a.mode {
        ModeArg::Similar => MapMode::Similar,
        ModeArg::Dissimilar => MapMode::Dissimilar,
    };
    map_images(&a.input, &a.out, a.seed, "_sa", |img, rng| {
        Ok(apply_intensity_map(img, &sample_map(rng, mode, DEFAULT_SAMPLES)?))
    })
}

fn cmd_transfer(a: &TransferArgs) -> Result<()> {
    let donors = load_all(&collect_pngs(&a.target_dir)?)?;
    map_images(&a.input, &a.out, a.seed, "_st", |img, rng| {
        let donor = &donors[rng.index(donors.len())];
        let lambda = match a.lambda {
            LambdaMode::Random => rng.uniform_open(),
            LambdaMode::Fixed(l) => l,
        };
        Ok(style_transfer_resampled(img, donor, a.alpha, lambda)?)
    })
}

fn cmd_lrit(a: &LritArgs) -> Result<()> {
    let img = load_image::<f32>(&a.input)?;
    let stack = lrit_stack(&img)?;
    if let Some(parent) = Path::new(&a.out_prefix).parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    for (ch, dir) in stack.channels.iter().zip(stack.order) {
        let scaled = ch.data.iter().map(|&v| v as f32 / MAX_CODE as f32).collect();
        let vis = GrayImage::new(ch.width, ch.height, scaled)?;
        save_image(&vis, format!("{}_{dir}.png", a.out_prefix))?;
        save_gray16(ch.width, ch.height, &ch.data, format!("{}_{dir}_16.png", a.out_prefix))?;
    }
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let source = load_dataset(&a.source)?.load_images::<f32>()?;
    let targets = a
        .target
        .iter()
        .map(|t| {
            let d = load_dataset(t)?;
            Ok((d.domain_id.clone(), d.load_images::<f32>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    for (id, l) in classify_domains(&source, &targets)? {
        println!("{id}\t{}\t{}", l.label, l.score);
    }
    Ok(())
}

fn resolve_train(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_json(&s).with_context(|| format!("in {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    let o = &a.overrides;
    macro_rules! take {
        ($($f:ident => $g:ident),*) => { $(if let Some(v) = o.$f { cfg.$g = v; })* };
    }
    take!(tau => tau, total_epochs => total_epochs, lr => lr, alpha => alpha, lambda => lambda_mode,
          batch_size => batch_size, threshold => threshold, seed => seed);
    let ab = &mut cfg.ablations;
    ab.no_sa |= o.no_sa;
    ab.no_st |= o.no_st;
    ab.no_lrit |= o.no_lrit;
    ab.no_kd |= o.no_kd;
    ab.no_dt |= o.no_dt;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs, cfg: &TrainConfig, verbose: u8) -> Result<()> {
    let source = load_dataset(&a.source)?.with_role(Role::Source)?;
    let targets = a.target.iter().map(load_dataset).collect::<Result<Vec<_>, _>>()?;
    let out = run_with(cfg, &source, &targets, |r| {
        if verbose > 0 {
            eprintln!("{}", serde_json::to_string(r).unwrap_or_default());
        }
    })?;
    write_run_dir(&a.out, cfg, &out)?;
    for (id, l) in &out.labels {
        eprintln!("{id}: {}", l.label);
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ckpt = read_checkpoint(&a.student)?;
    let threshold = match a.threshold {
        Some(t) => t,
        None => TrainConfig::from_json(&ckpt.config_json).map(|c| c.threshold).unwrap_or(0.5),
    };
    let targets = a.target.iter().map(load_dataset).collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_index(&ckpt.net, &targets, threshold)?;
    print!(
        "{}",
        match a.format {
            Format::Table => report.to_table(),
            Format::Csv => report.to_csv(),
            Format::Json => report.to_json() + "\n",
        }
    );
    Ok(())
}

fn cmd_demo(a: &DemoArgs, verbose: u8) -> Result<()> {
    let started = std::time::Instant::now();
    let report = demo(a.seed, &a.out, |m| {
        if verbose > 0 {
            eprintln!("[{:7.1}s] {m}", started.elapsed().as_secs_f64());
        }
    })?;
    print!("{}", report.to_table());
    Ok(())
}

/// The fully resolved invocation, printed before anything runs.
#[derive(Serialize)]
struct Resolved<'a> {
    #[serde(flatten)]
    cli: &'a Cli,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_config: Option<&'a TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    demo_config: Option<DemoConfig>,
}

fn execute(cli: &Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build_global()
        .context("starting worker pool")?;
    let train_cfg = match &cli.command {
        Command::Train(a) => Some(resolve_train(a)?),
        _ => None,
    };
    let resolved = Resolved {
        cli,
        train_config: train_cfg.as_ref(),
        demo_config: match &cli.command {
            Command::Demo(a) => Some(DemoConfig::new(a.seed)),
            _ => None,
        },
    };
    eprintln!("{}", serde_json::to_string_pretty(&resolved)?);
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Lrit(a) => cmd_lrit(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Train(a) => cmd_train(a, train_cfg.as_ref().expect("resolved"), cli.verbose),
        Command::Eval(a) => cmd_eval(a),
        Command::Demo(a) => cmd_demo(a, cli.verbose),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
