//! Command-line driver for the sparse-rs attack library.
//!
//! Subcommands: `train` a toy victim network, `attack` a dataset with one of
//! the sparse attacks, optimize a `universal` patch or frame, emit `theory`
//! query-count tables, sweep knobs with `ablation`, and plot success
//! `curve`s. Experiments are described by flat key=value config files with
//! `--set key=value` command-line overrides.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 1 otherwise.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sparse_rs::attack::{
    eval_universal, run_universal, FrameConfig, FrameMask, PatchConfig, UniversalConfig,
    UniversalKind,
};
use sparse_rs::engine::write_trace_csv;
use sparse_rs::harness::{
    query_grid, run_ablation, run_suite, success_curve, write_ablation_csv, write_curve_csv,
    write_line_chart, write_rows_csv, write_summary_csv, AblationSweep, AttackMethod, ConfigError,
    ConfigMap, GoalSpec, Series, SuiteConfig, SuiteReport,
};
use sparse_rs::model::{
    load_model, save_model, train_toy, LayerSpec, ModelOracle, NnModel, TrainConfig,
};
use sparse_rs::rng::RngStream;
use sparse_rs::schedule::AlphaRule;
use sparse_rs::tensor::{load_dataset, save_pnm, synth_dataset, ImageTensor, LabeledDataset};
use sparse_rs::theory::{expected_queries_exact, scaling_table, simulate_topk, write_scaling_csv};

#[derive(Parser)]
#[command(name = "sparse-rs", version, about = "Sparse adversarial attacks by random search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a toy victim network and save its weights.
    Train(TrainArgs),
    /// Attack every image of a dataset and report metrics.
    Attack(AttackArgs),
    /// Optimize one universal patch or frame over an image pool.
    Universal(UniversalArgs),
    /// Emit expected-query tables for the sparse search problem.
    Theory(TheoryArgs),
    /// Re-run an attack while sweeping one knob and compare results.
    Ablation(AblationArgs),
    /// Emit the success-rate-vs-queries curve for an attack.
    Curve(CurveArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        let code = if err.is::<ConfigError>() { 2 } else { 1 };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Attack(args) => attack(args),
        Command::Universal(args) => universal(args),
        Command::Theory(args) => theory(args),
        Command::Ablation(args) => ablation(args),
        Command::Curve(args) => curve(args),
    }
}

/// Writes to the given path, or to stdout when no path is set.
fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Shared experiment configuration.
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, e.g. `--set budget=2000` (repeatable, wins over the
    /// file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ConfigMap::parse(&text)?
            }
            None => ConfigMap::empty(),
        };
        for entry in &self.sets {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| ConfigError::new(format!("--set needs KEY=VALUE, got {entry:?}")))?;
            map.set(key.trim(), value.trim());
        }
        Ok(map)
    }
}

/// Parses `NxHxWxCcK[@seed]`, e.g. `600x32x32x3c10@7`.
fn parse_synth_spec(spec: &str) -> Result<(usize, usize, usize, usize, usize, u64), ConfigError> {
    let bad = || ConfigError::new(format!("bad synth spec {spec:?}; expected NxHxWxCcK[@seed]"));
    let (dims, seed) = match spec.split_once('@') {
        Some((dims, seed)) => (dims, seed.parse::<u64>().map_err(|_| bad())?),
        None => (spec, 0),
    };
    let (sizes, classes) = dims.rsplit_once('c').ok_or_else(bad)?;
    let classes = classes.parse::<usize>().map_err(|_| bad())?;
    let parts: Vec<usize> =
        sizes.split('x').map(|p| p.parse::<usize>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    match parts[..] {
        [n, h, w, c] => Ok((n, h, w, c, classes, seed)),
        _ => Err(bad()),
    }
}

fn load_data(cfg: &ConfigMap) -> Result<LabeledDataset> {
    match (cfg.get("data").map(PathBuf::from), cfg.get("synth").map(str::to_string)) {
        (Some(dir), None) => {
            load_dataset(&dir).with_context(|| format!("loading dataset {}", dir.display()))
        }
        (None, Some(spec)) => {
            let (n, h, w, c, classes, seed) = parse_synth_spec(&spec)?;
            Ok(synth_dataset(seed, n, h, w, c, classes)?)
        }
        (Some(_), Some(_)) => Err(ConfigError::new("set either `data` or `synth`, not both").into()),
        (None, None) => Err(ConfigError::new("one of `data` or `synth` is required").into()),
    }
}

fn load_victim(cfg: &ConfigMap) -> Result<NnModel> {
    let path = PathBuf::from(cfg.require("model")?);
    let weights =
        load_model(&path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(NnModel::from_weights(&weights))
}

fn parse_goal(cfg: &ConfigMap) -> Result<GoalSpec, ConfigError> {
    match cfg.get("goal").unwrap_or("untargeted") {
        "untargeted" => Ok(GoalSpec::Untargeted),
        "random_target" => Ok(GoalSpec::RandomTarget),
        other => match other.parse::<usize>() {
            Ok(class) => Ok(GoalSpec::FixedTarget(class)),
            Err(_) => Err(ConfigError::new(format!(
                "goal must be `untargeted`, `random_target`, or a class index, got {other:?}"
            ))),
        },
    }
}

fn worker_count(cfg: &ConfigMap) -> Result<usize, ConfigError> {
    if let Some(n) = cfg.get_parsed::<usize>("workers")? {
        if n == 0 {
            return Err(ConfigError::new("workers must be at least 1"));
        }
        return Ok(n);
    }
    match std::env::var("SPARSE_RS_WORKERS") {
        Ok(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| ConfigError::new(format!("bad SPARSE_RS_WORKERS value {raw:?}"))),
        Err(_) => Ok(1),
    }
}

fn parse_method(cfg: &ConfigMap, goal: GoalSpec) -> Result<AttackMethod, ConfigError> {
    let targeted = goal.is_targeted();
    let name = cfg.require("attack")?.to_string();

    let alpha_init = cfg.get_parsed::<f64>("alpha_init")?;
    let constant_alpha = cfg.get_parsed::<f64>("constant_alpha")?;
    if constant_alpha.is_some() && name != "l0" {
        return Err(ConfigError::new("constant_alpha only applies to the l0 attack"));
    }
    if alpha_init.is_some() && constant_alpha.is_some() {
        return Err(ConfigError::new("set alpha_init or constant_alpha, not both"));
    }

    let sparsity = || -> Result<usize, ConfigError> { cfg.require_parsed::<usize>("k") };
    match name.as_str() {
        "l0" => {
            let scalar_space = match cfg.get("space").unwrap_or("pixel") {
                "pixel" => false,
                "scalar" => true,
                other => {
                    return Err(ConfigError::new(format!(
                        "space must be `pixel` or `scalar`, got {other:?}"
                    )))
                }
            };
            let alpha = if let Some(value) = constant_alpha {
                AlphaRule::Constant { value }
            } else {
                let default = if targeted { 0.1 } else { 0.3 };
                AlphaRule::Decaying { alpha_init: alpha_init.unwrap_or(default) }
            };
            Ok(AttackMethod::L0 { k: sparsity()?, alpha, scalar_space })
        }
        "patch" => {
            let side = cfg.require_parsed::<usize>("side")?;
            let mut patch =
                if targeted { PatchConfig::targeted(side) } else { PatchConfig::untargeted(side) };
            if let Some(a) = alpha_init {
                patch.alpha_init = a;
            }
            if let Some(n) = cfg.get_parsed::<u64>("content_updates")? {
                patch.content_updates = n;
            }
            if let Some(n) = cfg.get_parsed::<u64>("location_updates")? {
                patch.location_updates = n;
            }
            Ok(AttackMethod::Patch { cfg: patch })
        }
        "frame" => {
            let width = cfg.require_parsed::<usize>("frame_width")?;
            let mut frame = match cfg.get("frame_variant").unwrap_or("anchored") {
                "anchored" => FrameConfig::anchored(width),
                "contained" => FrameConfig::contained(width),
                other => {
                    return Err(ConfigError::new(format!(
                        "frame_variant must be `anchored` or `contained`, got {other:?}"
                    )))
                }
            };
            if let Some(a) = alpha_init {
                frame.alpha_init = a;
            }
            Ok(AttackMethod::Frame { cfg: frame })
        }
        "pgd0_white" => Ok(AttackMethod::Pgd0White { k: sparsity()? }),
        "pgd0_ge" => Ok(AttackMethod::Pgd0Estimated { k: sparsity()? }),
        "jsma_ce_white" => Ok(AttackMethod::JsmaWhite { k: sparsity()? }),
        "jsma_ce_ge" => {
            let count = cfg.get_or("count_success_checks", true)?;
            Ok(AttackMethod::JsmaEstimated { k: sparsity()?, count_success_checks: count })
        }
        other => Err(ConfigError::new(format!("unknown attack {other:?}"))),
    }
}

fn build_suite(cfg: &ConfigMap) -> Result<SuiteConfig> {
    let goal = parse_goal(cfg)?;
    let method = parse_method(cfg, goal)?;
    let budget = cfg.get_or("budget", 1000u64)?;
    let restarts = cfg.get_or("restarts", 1u64)?;
    let seeds = cfg.get_list::<u64>("seeds")?.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(ConfigError::new("seeds must not be empty").into());
    }
    let workers = worker_count(cfg)?;
    Ok(SuiteConfig { method, goal, budget, restarts, seeds, workers })
}

fn run_configured_suite(cfg: &ConfigMap) -> Result<(SuiteConfig, SuiteReport)> {
    let model = load_victim(cfg)?;
    let dataset = load_data(cfg)?;
    let suite = build_suite(cfg)?;
    cfg.finish()?;
    let report = run_suite(&model, &dataset, &suite);
    Ok((suite, report))
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Layer stack, e.g. `conv:8k3s2p1,relu,flatten,dense:10`. Dense input
    /// sizes and conv input channels are inferred from the data shape.
    #[arg(long)]
    arch: String,
    /// Synthetic dataset spec `NxHxWxCcK[@seed]`.
    #[arg(long, conflicts_with = "data")]
    synth: Option<String>,
    /// Dataset directory (PNM images plus labels.csv).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Where to write the trained weights.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Tracks shapes through the arch string so conv input channels and dense
/// input sizes never have to be spelled out.
fn parse_arch(spec: &str, input: (usize, usize, usize)) -> Result<Vec<LayerSpec>, ConfigError> {
    enum Shape {
        Map(usize, usize, usize),
        Vector(usize),
    }
    let mut shape = Shape::Map(input.0, input.1, input.2);
    let mut layers = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        let layer = if token == "relu" {
            LayerSpec::Relu
        } else if token == "flatten" {
            let len = match shape {
                Shape::Map(h, w, c) => h * w * c,
                Shape::Vector(n) => n,
            };
            shape = Shape::Vector(len);
            LayerSpec::Flatten
        } else if let Some(outputs) = token.strip_prefix("dense:") {
            let outputs = outputs
                .parse::<usize>()
                .map_err(|_| ConfigError::new(format!("bad dense layer {token:?}")))?;
            let inputs = match shape {
                Shape::Vector(n) => n,
                Shape::Map(..) => {
                    return Err(ConfigError::new(format!(
                        "dense layer {token:?} needs a flatten first"
                    )))
                }
            };
            shape = Shape::Vector(outputs);
            LayerSpec::Dense { inputs, outputs }
        } else if let Some(body) = token.strip_prefix("conv:") {
            // conv:<out>k<kernel>s<stride>p<padding>
            let bad = || {
                ConfigError::new(format!("bad conv layer {token:?}; expected conv:8k3s2p1"))
            };
            let (out_str, rest) = body.split_once('k').ok_or_else(bad)?;
            let (k_str, rest) = rest.split_once('s').ok_or_else(bad)?;
            let (s_str, p_str) = rest.split_once('p').ok_or_else(bad)?;
            let out_channels = out_str.parse::<usize>().map_err(|_| bad())?;
            let kernel = k_str.parse::<usize>().map_err(|_| bad())?;
            let stride = s_str.parse::<usize>().map_err(|_| bad())?;
            let padding = p_str.parse::<usize>().map_err(|_| bad())?;
            let (h, w, c) = match shape {
                Shape::Map(h, w, c) => (h, w, c),
                Shape::Vector(_) => {
                    return Err(ConfigError::new(format!(
                        "conv layer {token:?} needs an image input"
                    )))
                }
            };
            if stride == 0 || kernel == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel {
                return Err(bad());
            }
            let oh = (h + 2 * padding - kernel) / stride + 1;
            let ow = (w + 2 * padding - kernel) / stride + 1;
            shape = Shape::Map(oh, ow, out_channels);
            LayerSpec::Conv2d { kernel, in_channels: c, out_channels, stride, padding }
        } else {
            return Err(ConfigError::new(format!("unknown layer {token:?}")));
        };
        layers.push(layer);
    }
    Ok(layers)
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = match (&args.data, &args.synth) {
        (Some(dir), None) => {
            load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?
        }
        (None, Some(spec)) => {
            let (n, h, w, c, classes, seed) = parse_synth_spec(spec)?;
            synth_dataset(seed, n, h, w, c, classes)?
        }
        _ => return Err(ConfigError::new("one of --data or --synth is required").into()),
    };
    let layers = parse_arch(&args.arch, dataset.shape())?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        seed: args.seed,
    };
    let (weights, report) = train_toy(&dataset, layers, &cfg)?;
    save_model(&weights, &args.out)?;
    println!(
        "trained {} on {} images: loss {:.4}, train accuracy {:.3}",
        args.out.display(),
        dataset.len(),
        report.final_loss,
        report.train_accuracy
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Write per-image rows CSV here (first seed).
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Write per-image trace CSVs (first seed) into this directory.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Write the aggregate summary CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn attack(args: AttackArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let (_, report) = run_configured_suite(&cfg)?;

    if let Some(path) = &args.rows {
        let mut out = Vec::new();
        write_rows_csv(&report.seeds[0], &mut out)?;
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(dir) = &args.traces {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for row in &report.seeds[0].rows {
            let mut out = File::create(dir.join(format!("image_{}.csv", row.image_id)))?;
            write_trace_csv(&row.trace, &mut out)?;
        }
    }
    let mut out = Vec::new();
    write_summary_csv(&report, &mut out)?;
    write_output(args.out.as_deref(), &out)
}

// ---------------------------------------------------------------------------
// universal
// ---------------------------------------------------------------------------

#[derive(Args)]
struct UniversalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write the optimized content as a PNM image; a JSON sidecar
    /// with run metadata lands next to it.
    #[arg(long)]
    out: PathBuf,
}

fn universal(args: UniversalArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let model = load_victim(&cfg)?;
    let dataset = load_data(&cfg)?;
    let target = cfg.require_parsed::<usize>("target")?;

    let kind = match cfg.require("kind")? {
        "patch" => UniversalKind::Patch { side: cfg.require_parsed::<usize>("side")? },
        "frame" => UniversalKind::Frame { frame_width: cfg.require_parsed::<usize>("frame_width")? },
        other => return Err(ConfigError::new(format!("kind must be `patch` or `frame`, got {other:?}")).into()),
    };
    let mut uni = match kind {
        UniversalKind::Patch { side } => UniversalConfig::patch(side, target),
        UniversalKind::Frame { frame_width } => UniversalConfig::frame(frame_width, target),
    };
    uni.budget = cfg.get_or("budget", uni.budget)?;
    uni.resample_period = cfg.get_or("resample_period", uni.resample_period)?;
    uni.batch_size = cfg.get_or("batch_size", uni.batch_size)?;
    if let Some(a) = cfg.get_parsed::<f64>("alpha_init")? {
        uni.alpha_init = a;
    }
    let seed = cfg.get_or("seed", 0u64)?;
    let eval_count = cfg.get_or("eval_count", 0usize)?;
    let eval_locations = cfg.get_or("eval_locations", 20usize)?;
    cfg.finish()?;

    if eval_count >= dataset.len() {
        return Err(ConfigError::new(format!(
            "eval_count {eval_count} leaves no training images (dataset has {})",
            dataset.len()
        ))
        .into());
    }
    let (train_set, eval_set) = dataset.split_at(dataset.len() - eval_count)?;
    let train_images: Vec<ImageTensor> =
        (0..train_set.len()).map(|i| train_set.image(i).clone()).collect();

    let oracle = ModelOracle::new(&model);
    let rng = RngStream::new(seed);
    let outcome = run_universal(&oracle, &train_images, &uni, &rng);

    let (h, w, c) = dataset.shape();
    let content_image = match kind {
        UniversalKind::Patch { side } => {
            ImageTensor::new(side, side, c, outcome.content.clone())?
        }
        UniversalKind::Frame { frame_width } => {
            let mask = FrameMask::new(h, w, frame_width);
            let mut full = ImageTensor::zeros(h, w, c);
            for (slot, &(row, col)) in mask.pixels().iter().enumerate() {
                for ch in 0..c {
                    full.set(row, col, ch, outcome.content[slot * c + ch]);
                }
            }
            full
        }
    };
    save_pnm(&content_image, &args.out)?;

    let eval_rate = if eval_set.is_empty() {
        None
    } else {
        let images: Vec<ImageTensor> =
            (0..eval_set.len()).map(|i| eval_set.image(i).clone()).collect();
        Some(eval_universal(
            &model,
            &images,
            target,
            kind,
            &outcome.content,
            eval_locations,
            &rng.derive("eval", 0),
        ))
    };

    let sidecar = serde_json::json!({
        "kind": match kind {
            UniversalKind::Patch { side } => serde_json::json!({"patch": {"side": side}}),
            UniversalKind::Frame { frame_width } => {
                serde_json::json!({"frame": {"frame_width": frame_width}})
            }
        },
        "target": target,
        "budget": uni.budget,
        "resample_period": uni.resample_period,
        "batch_size": uni.batch_size,
        "seed": seed,
        "queries_used": outcome.queries_used,
        "round_starts": outcome.round_starts,
        "final_loss": outcome.records.last().map(|r| r.best_loss),
        "eval_success_rate": eval_rate,
    });
    let sidecar_path = args.out.with_extension("json");
    fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)
        .with_context(|| format!("writing {}", sidecar_path.display()))?;

    match eval_rate {
        Some(rate) => println!(
            "universal content written to {}; target-class rate {rate:.3} on {} held-out images",
            args.out.display(),
            eval_count
        ),
        None => println!("universal content written to {}", args.out.display()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// theory
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TheoryArgs {
    /// Problem dimension (scalars of the flattened input).
    #[arg(long, default_value_t = 150_528)]
    d: u64,
    /// Sparsity (scalars perturbed).
    #[arg(long, default_value_t = 150)]
    k: u64,
    /// Comma-separated solution-pool sizes; defaults to a doubling grid from
    /// k to d.
    #[arg(long)]
    m_grid: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run a Monte-Carlo check, `d,k,m,trials`.
    #[arg(long)]
    simulate: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn theory(args: TheoryArgs) -> Result<()> {
    let ms: Vec<u64> = match &args.m_grid {
        Some(raw) => raw
            .split(',')
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::new(format!("bad m grid {raw:?}")))?,
        None => {
            let mut ms = vec![args.k];
            while *ms.last().unwrap() < args.d {
                ms.push((ms.last().unwrap() * 2).min(args.d));
            }
            ms
        }
    };
    let rows = scaling_table(args.d, args.k, &ms).map_err(|e| ConfigError::new(e.reason))?;
    let mut out = Vec::new();
    write_scaling_csv(&rows, &mut out)?;
    write_output(args.out.as_deref(), &out)?;

    if let Some(raw) = &args.simulate {
        let parts: Vec<u64> = raw
            .split(',')
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::new(format!("bad simulate spec {raw:?}")))?;
        let [d, k, m, trials] = parts[..] else {
            return Err(ConfigError::new(format!("simulate needs d,k,m,trials, got {raw:?}")).into());
        };
        let report = simulate_topk(d, k, m, trials, None, &RngStream::new(args.seed))
            .map_err(|e| ConfigError::new(e.reason))?;
        let exact = expected_queries_exact(d, k, m).map_err(|e| ConfigError::new(e.reason))?;
        println!(
            "simulated d={d} k={k} m={m}: mean {:.3} +- {:.3} over {trials} trials (exact {exact:.3})",
            report.mean, report.std_error
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// What to sweep: `alpha_init=0.1,0.3` or `constant_alpha=0.1,0.3` or
    /// `ratio=9:1,4:1,1:1`.
    #[arg(long)]
    sweep: String,
    /// Write the comparison CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sweep(raw: &str) -> Result<AblationSweep, ConfigError> {
    let (kind, values) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::new(format!("sweep needs NAME=VALUES, got {raw:?}")))?;
    let floats = || -> Result<Vec<f64>, ConfigError> {
        values
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| ConfigError::new(format!("bad sweep value {p:?}")))
            })
            .collect()
    };
    match kind.trim() {
        "alpha_init" => Ok(AblationSweep::AlphaInit(floats()?)),
        "constant_alpha" => Ok(AblationSweep::ConstantAlpha(floats()?)),
        "ratio" => {
            let ratios = values
                .split(',')
                .map(|p| {
                    let (a, b) = p
                        .trim()
                        .split_once(':')
                        .ok_or_else(|| ConfigError::new(format!("bad ratio {p:?}")))?;
                    let a = a.parse::<u64>().map_err(|_| ConfigError::new(format!("bad ratio {p:?}")))?;
                    let b = b.parse::<u64>().map_err(|_| ConfigError::new(format!("bad ratio {p:?}")))?;
                    Ok((a, b))
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            Ok(AblationSweep::LocationRatio(ratios))
        }
        other => Err(ConfigError::new(format!(
            "sweep must be alpha_init, constant_alpha, or ratio, got {other:?}"
        ))),
    }
}

fn ablation(args: AblationArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let sweep = parse_sweep(&args.sweep)?;
    let model = load_victim(&cfg)?;
    let dataset = load_data(&cfg)?;
    let suite = build_suite(&cfg)?;
    cfg.finish()?;
    let points = run_ablation(&model, &dataset, &suite, &sweep)?;
    let mut out = Vec::new();
    write_ablation_csv(&points, &mut out)?;
    write_output(args.out.as_deref(), &out)
}

// ---------------------------------------------------------------------------
// curve
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of grid points between 0 and the budget.
    #[arg(long, default_value_t = 25)]
    points: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render the curve as an SVG chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn curve(args: CurveArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let (suite, report) = run_configured_suite(&cfg)?;

    // Pool rows across seeds so the curve reflects every run.
    let rows: Vec<_> = report.seeds.iter().flat_map(|s| s.rows.iter().cloned()).collect();
    let grid = query_grid(suite.budget * suite.restarts, args.points);
    let curve = success_curve(&rows, &grid);

    let mut out = Vec::new();
    write_curve_csv(&curve, &mut out)?;
    write_output(args.out.as_deref(), &out)?;

    if let Some(path) = &args.svg {
        let series = vec![Series {
            name: "success rate".into(),
            points: curve.iter().map(|p| (p.queries as f64, p.rate)).collect(),
        }];
        let mut file = File::create(path)?;
        write_line_chart(&mut file, "success rate vs queries", "queries", "success rate", &series)?;
    }
    Ok(())
}
