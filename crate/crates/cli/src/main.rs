use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nightraw::io::{read_raw, write_ppm};
use nightraw::models::{forward_pipeline, load_weights, save_weights, InputLayout, ModelKind, ModelSpec, Preset, Weights};
use nightraw::nn::{gradient_suite, GRADCHECK_THRESHOLD};
use nightraw::raw::{AmplificationRatio, Cfa, RawMosaic, SensorMeta};
use nightraw::sim::{simulate_dataset, DatasetConfig, DEFAULT_BLACK_LEVEL, DEFAULT_WB_GAINS, DEFAULT_WHITE_LEVEL};
use nightraw::train::{
    ablation_suite, baseline_outputs, evaluate, evaluate_images, train_with_progress, AblationConfig, BaselineMethod,
    Dataset, LossKind, Split, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(name = "nightraw", version, about = "Learned processing of extreme low-light raw images")]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Model and training scale.
    #[arg(long, global = true, default_value = "desk", value_parser = parse_preset)]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset of raw/reference pairs.
    Simulate(SimulateArgs),
    /// Train a network on the train split of a dataset.
    Train(TrainArgs),
    /// Score a trained network on a dataset split.
    Eval(EvalArgs),
    /// Run a trained network on one raw file.
    Infer(InferArgs),
    /// Score a traditional baseline on a dataset split.
    Baseline(BaselineArgs),
    /// Train and score the eight controlled-experiment configurations.
    Ablate(AblateArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck,
    /// Time one forward pass on a full-size synthetic raw.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Allow writing into an existing non-empty directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scenes: usize,
    /// How many of the scenes (the last ones) form the test split.
    #[arg(long)]
    test_scenes: Option<usize>,
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 100.0)]
    ratio: f64,
    #[arg(long, default_value = "bayer", value_parser = parse_cfa)]
    sensor: Cfa,
    /// Short exposures per scene; extra frames feed the burst baseline.
    #[arg(long, default_value_t = 1)]
    frames: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value = "unet", value_parser = parse_kind)]
    model: ModelKind,
    /// bayer4, bayer-masked, xtrans9, xtrans36 or srgb.
    #[arg(long, default_value = "bayer4", value_parser = parse_layout)]
    input: InputLayout,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "l1", value_parser = parse_loss)]
    loss: LossKind,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    /// Crops per iteration.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_after: Option<f64>,
    #[arg(long)]
    lr_switch_epoch: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    /// Train against histogram-stretched references.
    #[arg(long)]
    stretch_targets: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Score against histogram-stretched references.
    #[arg(long)]
    stretch_refs: bool,
    /// Also write one PPM per scene.
    #[arg(long)]
    save_images: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    weights: PathBuf,
    /// 16-bit PGM raw mosaic.
    #[arg(long)]
    input: PathBuf,
    /// Sensor sidecar; defaults to the input path with a `.meta` extension.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Overrides the ratio stored in the sidecar.
    #[arg(long)]
    ratio: Option<f64>,
    /// Output PPM file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    /// classic, classic+stretch or burst.
    #[arg(long, default_value = "classic", value_parser = parse_method)]
    method: BaselineMethod,
    /// Frames used by the burst median.
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    #[arg(long)]
    save_images: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Bayer dataset for all rows but the X-Trans one.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    xtrans_data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    xtrans_crop: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value = "4240x2832", value_parser = parse_size)]
    size: (usize, usize),
    #[command(flatten)]
    model: ModelArgs,
    /// Trained weights; random weights of the preset are used otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
}

fn parse_with<T>(s: &str, what: &str, choices: &str, f: impl Fn(&str) -> Option<T>) -> Result<T, String> {
    f(s).ok_or_else(|| format!("unknown {what} {s:?}, expected one of {choices}"))
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    parse_with(s, "preset", "desk, paper", Preset::parse)
}

fn parse_cfa(s: &str) -> Result<Cfa, String> {
    parse_with(s, "sensor", "bayer, xtrans", Cfa::parse)
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    parse_with(s, "model", "unet, can", ModelKind::parse)
}

fn parse_layout(s: &str) -> Result<InputLayout, String> {
    parse_with(s, "input", "bayer4, bayer-masked, xtrans9, xtrans36, srgb", InputLayout::parse)
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    parse_with(s, "loss", "l1, l2, ssim", LossKind::parse)
}

fn parse_split(s: &str) -> Result<Split, String> {
    parse_with(s, "split", "train, test, all", Split::parse)
}

fn parse_method(s: &str) -> Result<BaselineMethod, String> {
    parse_with(s, "method", "classic, classic+stretch, burst", BaselineMethod::parse)
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected WIDTHxHEIGHT, got {s:?}");
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
fn prepare_out(out: &OutArgs) -> Result<&Path> {
    let dir = out.out.as_path();
    if dir.exists() {
        if !dir.is_dir() {
            bail!("output path {} exists and is not a directory", dir.display());
        }
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("cannot read output directory {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !out.force {
            bail!("output directory {} is not empty; pass --force to overwrite", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

/// Writes `config.json` with the full command line and the resolved settings.
fn echo_config(dir: &Path, cli: &Cli, command: &str, resolved: Value) -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let body = json!({
        "command": command,
        "argv": argv,
        "seed": cli.seed,
        "preset": cli.preset.name(),
        "resolved": resolved,
    });
    write_text(&dir.join("config.json"), &serde_json::to_string_pretty(&body)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_split(root: &Path, split: Split) -> Result<Dataset> {
    Dataset::load(root, split).with_context(|| format!("cannot load the {} split of {}", split.name(), root.display()))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let cfg = DatasetConfig {
        scenes: a.scenes,
        test_scenes: a.test_scenes.unwrap_or(a.scenes / 4),
        width: a.size.0,
        height: a.size.1,
        ratio: AmplificationRatio::new(a.ratio)?,
        cfa: a.sensor,
        frames: a.frames,
        seed: cli.seed,
    };
    cfg.validate()?;
    let dir = prepare_out(&a.out)?;
    let entries = simulate_dataset(dir, &cfg)?;
    echo_config(dir, cli, "simulate", serde_json::to_value(&cfg)?)?;
    let test = entries.iter().filter(|(_, s)| *s == Split::Test).count();
    println!(
        "wrote {} scenes ({} train, {test} test) to {}",
        entries.len(),
        entries.len() - test,
        dir.display()
    );
    Ok(())
}

fn train_config(cli: &Cli, a: &TrainArgs) -> TrainConfig {
    let mut cfg = TrainConfig::for_preset(cli.preset, cli.seed);
    cfg.loss = a.loss;
    cfg.augment = !a.no_augment;
    cfg.stretch_targets = a.stretch_targets;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
        if a.lr_switch_epoch.is_none() {
            cfg.lr_switch_epoch = e * 4 / 5;
        }
    }
    if let Some(c) = a.crop {
        cfg.crop = c;
    }
    if let Some(b) = a.batch {
        cfg.batch = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr_initial = lr;
        if a.lr_after.is_none() {
            cfg.lr_after = lr / 10.0;
        }
    }
    if let Some(lr) = a.lr_after {
        cfg.lr_after = lr;
    }
    if let Some(s) = a.lr_switch_epoch {
        cfg.lr_switch_epoch = s;
    }
    cfg
}

fn window_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let spec = ModelSpec::preset(a.model.model, a.model.input, cli.preset);
    let cfg = train_config(cli, a);
    cfg.validate()?;
    let data = load_split(&a.data, Split::Train)?;
    let dir = prepare_out(&a.out)?;
    echo_config(
        dir,
        cli,
        "train",
        json!({ "data": a.data, "model": spec.descriptor(), "train": cfg }),
    )?;

    let total = cfg.epochs * data.len().div_ceil(cfg.batch);
    let every = (total / 20).max(1);
    let start = Instant::now();
    let outcome = train_with_progress(&data, &spec, &cfg, |i, loss| {
        if i % every == 0 || i + 1 == total {
            eprintln!("iter {:>6}/{total}  loss {loss:.5}", i + 1);
        }
    })?;
    let secs = start.elapsed().as_secs_f64();

    save_weights(&dir.join("weights.bin"), &spec, &outcome.weights)?;
    let mut csv = String::from("iter,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_text(&dir.join("loss.csv"), &csv)?;

    let w = 16.min(outcome.losses.len());
    let first = window_mean(&outcome.losses[..w]);
    let last = window_mean(&outcome.losses[outcome.losses.len() - w..]);
    let report = format!(
        "model          {spec}\nparameters     {}\nscenes         {}\niterations     {}\n\
         initial loss   {first:.5} (mean of first {w})\nfinal loss     {last:.5} (mean of last {w})\n\
         final/initial  {:.3}\ntime           {secs:.1} s\n",
        outcome.weights.param_count(),
        data.len(),
        outcome.losses.len(),
        last / first,
    );
    write_text(&dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn save_images<'a>(dir: &Path, items: impl IntoIterator<Item = (&'a str, &'a nightraw::RgbImage)>) -> Result<()> {
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).with_context(|| format!("cannot create {}", img_dir.display()))?;
    for (id, img) in items {
        write_ppm(&img_dir.join(format!("{id}.ppm")), img)?;
    }
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let (spec, weights) = load_weights(&a.weights).with_context(|| format!("cannot load weights {}", a.weights.display()))?;
    let data = load_split(&a.data, a.split)?;
    let dir = prepare_out(&a.out)?;
    echo_config(
        dir,
        cli,
        "eval",
        json!({ "weights": a.weights, "data": a.data, "split": a.split.name(), "model": spec.descriptor(), "stretch_refs": a.stretch_refs }),
    )?;
    let (report, preds) = evaluate(&spec, &weights, &data, a.stretch_refs)?;
    let title = format!("{spec} on {} ({})", a.data.display(), a.split.name());
    report.write(dir, &title)?;
    if a.save_images {
        save_images(dir, data.samples.iter().map(|s| s.id.as_str()).zip(&preds))?;
    }
    print!("{}", report.to_text(&title));
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    if a.out.exists() && !a.force {
        bail!("output file {} exists; pass --force to overwrite", a.out.display());
    }
    let (spec, weights) = load_weights(&a.weights).with_context(|| format!("cannot load weights {}", a.weights.display()))?;
    let meta = a.meta.clone().unwrap_or_else(|| a.input.with_extension("meta"));
    let (raw, stored) = read_raw(&a.input, &meta)?;
    let ratio = match a.ratio {
        Some(r) => AmplificationRatio::new(r)?,
        None => stored,
    };
    let start = Instant::now();
    let img = forward_pipeline(&raw, ratio, &spec, &weights)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    write_ppm(&a.out, &img)?;
    println!(
        "wrote {}x{} image to {} ({ms:.1} ms, ratio {})",
        img.width(),
        img.height(),
        a.out.display(),
        ratio.get()
    );
    Ok(())
}

fn baseline(cli: &Cli, a: &BaselineArgs) -> Result<()> {
    let data = load_split(&a.data, a.split)?;
    let dir = prepare_out(&a.out)?;
    echo_config(
        dir,
        cli,
        "baseline",
        json!({ "data": a.data, "split": a.split.name(), "method": a.method.name(), "frames": a.frames }),
    )?;
    let outputs = baseline_outputs(&data, a.method, a.frames)?;
    let report = evaluate_images(
        outputs
            .iter()
            .zip(&data.samples)
            .map(|((id, img), s)| (id.clone(), img, &s.reference)),
    )?;
    let title = format!("{} baseline on {} ({})", a.method.name(), a.data.display(), a.split.name());
    report.write(dir, &title)?;
    if a.save_images {
        save_images(dir, outputs.iter().map(|(id, img)| (id.as_str(), img)))?;
    }
    print!("{}", report.to_text(&title));
    Ok(())
}

fn ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let mut train = TrainConfig::for_preset(cli.preset, cli.seed);
    if let Some(e) = a.epochs {
        train.epochs = e;
        train.lr_switch_epoch = e * 4 / 5;
    }
    if let Some(c) = a.crop {
        train.crop = c;
    }
    let default_xcrop = match cli.preset {
        Preset::Desk => 48,
        Preset::Paper => 576,
    };
    let cfg = AblationConfig {
        train,
        xtrans_crop: a.xtrans_crop.unwrap_or(default_xcrop),
    };
    let dir = prepare_out(&a.out)?;
    echo_config(
        dir,
        cli,
        "ablate",
        json!({ "data": a.data, "xtrans_data": a.xtrans_data, "ablation": cfg }),
    )?;
    let report = ablation_suite(&a.data, a.xtrans_data.as_deref(), &cfg, |line| eprintln!("{line}"));
    report.write(dir)?;
    print!("{}", report.to_text());
    if !report.all_finite() {
        bail!("some ablation rows failed; see {}", dir.join("report.txt").display());
    }
    Ok(())
}

fn gradcheck(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let reports = gradient_suite(cli.seed)?;
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        failed += usize::from(!r.passed());
        println!("{status}  {:<24} max rel err {:.3e} over {} entries", r.name, r.max_rel_error, r.checked);
    }
    println!("threshold {GRADCHECK_THRESHOLD:e}, {:.1} s", start.elapsed().as_secs_f64());
    if failed > 0 {
        bail!("{failed} of {} gradient checks failed", reports.len());
    }
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let (spec, weights) = match &a.weights {
        Some(p) => load_weights(p).with_context(|| format!("cannot load weights {}", p.display()))?,
        None => {
            let spec = ModelSpec::preset(a.model.model, a.model.input, cli.preset);
            (spec, Weights::init(&spec, cli.seed)?)
        }
    };
    let cfa = spec.input.cfa().unwrap_or(Cfa::Bayer);
    let (w, h) = a.size;
    cfa.check_dims(w, h)?;
    let meta = SensorMeta {
        cfa,
        black_level: DEFAULT_BLACK_LEVEL,
        white_level: DEFAULT_WHITE_LEVEL,
        exposure_s: 0.1,
        wb_gains: DEFAULT_WB_GAINS,
    };
    // deterministic texture; content does not affect timing
    let data = (0..w * h)
        .map(|i| DEFAULT_BLACK_LEVEL + ((i as u64).wrapping_mul(2654435761) % 200) as u16)
        .collect();
    let raw = RawMosaic::new(w, h, data, meta)?;
    let ratio = AmplificationRatio::new(100.0)?;
    let start = Instant::now();
    let img = forward_pipeline(&raw, ratio, &spec, &weights)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    println!("{spec} {}x{}: {ms:.0} ms", img.width(), img.height());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Infer(a) => infer(a),
        Command::Baseline(a) => baseline(cli, a),
        Command::Ablate(a) => ablate(cli, a),
        Command::Gradcheck => gradcheck(cli),
        Command::Bench(a) => bench(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
