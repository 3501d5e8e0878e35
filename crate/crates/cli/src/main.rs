mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use ttc_grid::features::window_grid_rows;
use ttc_grid::metrics::{BestOf, EvalResults, MhdMode};
use ttc_grid::nn::{Checkpoint, ModelParams, NnError, Variant};
use ttc_grid::predict::{
    derive_seed, evaluate_linear, evaluate_model, rollout, write_predictions, EvalOptions, PredictError, RolloutOptions,
};
use ttc_grid::scene::{
    derive_velocities, load_scene, make_windows, split_first_minutes, Scene, SceneFormat, SceneWindow,
};
use ttc_grid::synth::{synthesize_scenarios, SynthConfig};
use ttc_grid::train::{train, write_loss_csv, TrainError};

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged(_) | TrainError::Nn(NnError::NumericalOverflow(_)) => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::NonFinite(_) | PredictError::Nn(NnError::NumericalOverflow(_)) => {
                CliError::Numeric(e.to_string())
            }
            PredictError::NoSamples => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Pedestrian trajectory prediction with time-to-collision interaction grids.
#[derive(Debug, Parser)]
#[command(name = "ttcgrid", version)]
struct Cli {
    /// Worker threads for training and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene as canonical CSV.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus loss curve.
    Train(TrainArgs),
    /// Best-of-K evaluation on non-overlapping windows.
    Eval(EvalArgs),
    /// Export sampled futures of one window for plotting.
    Predict(PredictArgs),
    /// Export the collision grids of one window as JSON.
    Grids(GridsArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// SynthConfig JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Canonical CSV scene.
    #[arg(long)]
    data: PathBuf,
    /// Use only the first N minutes (the held-out test split).
    #[arg(long)]
    split_minutes: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// pv, p, v, vanilla, social or social_filtered.
    #[arg(long)]
    variant: Option<Variant>,
    /// RunConfig JSON, or a checkpoint whose echoed config is reused.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Loss curve CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Train on everything after the first N minutes.
    #[arg(long)]
    split_minutes: Option<f64>,
    /// Also write `<out>.epoch<N>.json` every N epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    autoregressive_training: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Required unless `--baseline linear`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate the linear-regression baseline instead of a checkpoint.
    #[arg(long, value_parser = ["linear"])]
    baseline: Option<String>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results.json")]
    out: PathBuf,
    /// CSV mirror; defaults to the JSON path with `.csv`.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "dubuisson")]
    mhd_mode: MhdMode,
    /// `ade` picks one sample by ADE instead of per-metric minima.
    #[arg(long, value_parser = ["ade"])]
    joint_best_by: Option<String>,
    #[arg(long)]
    oracle_vehicles: bool,
    /// Skip printing the published reference values.
    #[arg(long)]
    no_reference: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    window_id: usize,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    oracle_vehicles: bool,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    window_id: usize,
    /// Window stride; by default windows do not overlap.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value = "grids.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Grids(a) => cmd_grids(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.config).map_err(io_err(&a.config))?;
    let config: SynthConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.config.display())))?;
    let scene = synthesize_scenarios(&config, a.seed).map_err(|e| CliError::Data(e.to_string()))?;
    ttc_grid::scene::save_scene(&scene, &a.out).map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "wrote {}: {} agents, {} frames, {} states",
        a.out.display(),
        scene.agents().len(),
        scene.len(),
        scene.state_count()
    );
    Ok(())
}

fn read_scene(path: &Path, cfg: &RunConfig) -> Result<Scene, CliError> {
    let scene =
        load_scene(path, SceneFormat::CanonicalCsv, &cfg.load_options()).map_err(|e| CliError::Data(e.to_string()))?;
    let (scene, warnings) = derive_velocities(&scene).map_err(|e| CliError::Data(e.to_string()))?;
    for w in &warnings {
        eprintln!(
            "warning: agent {} appears only in frame {}; velocity set to zero",
            w.agent_id, w.frame_id
        );
    }
    Ok(scene)
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(cfg.train.epochs, a.epochs);
    set!(cfg.train.batch_size, a.batch_size);
    set!(cfg.train.learning_rate, a.learning_rate);
    set!(cfg.train.seed, a.seed);
    set!(cfg.model.hidden_dim, a.hidden_dim);
    set!(cfg.model.embed_dim, a.embed_dim);
    set!(cfg.stride, a.stride);
    set!(cfg.split_minutes, a.split_minutes);
    set!(cfg.checkpoint_every, a.checkpoint_every);
    if a.autoregressive_training {
        cfg.train.autoregressive_training = true;
    }
    cfg.validate()?;
    let setup = cfg.setup();
    cfg.model = setup.model;

    let scene = read_scene(&a.data, &cfg)?;
    let scene = if cfg.split_minutes > 0.0 {
        split_first_minutes(&scene, cfg.split_minutes).1
    } else {
        scene
    };
    let windows =
        make_windows(&scene, cfg.t_obs, cfg.t_pred, cfg.stride).map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "training {} on {} windows ({} epochs, seed {})",
        cfg.variant.display_name(),
        windows.len(),
        cfg.train.epochs,
        cfg.train.seed
    );
    let echo = cfg.echo();
    let mut save_err = None;
    let result = train(&windows, &setup, |epoch, loss, model| {
        if epoch == 1 || epoch % 10 == 0 || epoch == cfg.train.epochs {
            println!("epoch {epoch:>4}  mean nll {loss:.6}");
        }
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch < cfg.train.epochs {
            let path = a.out.with_extension(format!("epoch{epoch}.json"));
            if let Err(e) = Checkpoint::from_model(model, echo.clone()).save(&path) {
                save_err.get_or_insert(CliError::Data(format!("{}: {e}", path.display())));
            }
        }
    })?;
    if let Some(e) = save_err {
        return Err(e);
    }
    Checkpoint::from_model(&result.model, echo.clone())
        .save(&a.out)
        .map_err(io_err(&a.out))?;
    let loss_path = a.loss_csv.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let file = File::create(&loss_path).map_err(io_err(&loss_path))?;
    write_loss_csv(BufWriter::new(file), &result.loss_curve, &echo).map_err(io_err(&loss_path))?;
    println!("wrote {} and {}", a.out.display(), loss_path.display());
    Ok(())
}

struct Loaded {
    model: ModelParams,
    cfg: RunConfig,
}

fn load_checkpoint(path: &Path) -> Result<Loaded, CliError> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let model = ck
        .to_model()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut cfg: RunConfig = serde_json::from_value(ck.config.clone()).unwrap_or_default();
    cfg.variant = model.variant;
    cfg.model = model.config;
    Ok(Loaded { model, cfg })
}

fn test_windows(data: &DataArgs, cfg: &RunConfig, stride: usize) -> Result<Vec<SceneWindow>, CliError> {
    let scene = read_scene(&data.data, cfg)?;
    let scene = match data.split_minutes {
        Some(m) => split_first_minutes(&scene, m).0,
        None => scene,
    };
    make_windows(&scene, cfg.t_obs, cfg.t_pred, stride).map_err(|e| CliError::Usage(e.to_string()))
}

/// Best-of-20 values published for the HBS shared-space data set.
const REFERENCE: [(&str, [f64; 4], f64); 7] = [
    ("Linear regression", [0.696, 1.238, 2.995, 0.390], 44.0),
    ("Vanilla LSTM", [0.305, 0.676, 2.855, 0.240], 32.7),
    ("Social LSTM", [0.309, 0.677, 2.852, 0.244], 31.5),
    ("Social LSTM + filtered interaction", [0.298, 0.658, 2.827, 0.234], 32.3),
    ("P-CollisionGrid", [0.304, 0.664, 2.811, 0.235], 32.6),
    ("V-CollisionGrid", [0.305, 0.669, 2.827, 0.232], 32.9),
    ("PV-CollisionGrid", [0.295, 0.648, 2.791, 0.235], 31.7),
];

fn table_row(name: &str, m: [f64; 4], he: Option<f64>) -> String {
    let he = he.map_or("-".to_string(), |v| format!("{v:.1}"));
    format!(
        "{name:<36} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {he:>6}",
        m[0], m[1], m[2], m[3]
    )
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let eval = EvalOptions {
        mhd_mode: a.mhd_mode,
        best_of: if a.joint_best_by.is_some() {
            BestOf::JointByAde
        } else {
            BestOf::PerMetric
        },
    };
    let (name, variant, k, metrics) = match (&a.baseline, &a.checkpoint) {
        (Some(_), _) => {
            let cfg = RunConfig::default();
            let windows = test_windows(&a.data, &cfg, cfg.t_obs)?;
            if windows.is_empty() {
                return Err(CliError::Data("no evaluation windows".into()));
            }
            (
                "Linear regression".to_string(),
                "linear".to_string(),
                1,
                evaluate_linear(&windows, &eval)?,
            )
        }
        (None, Some(path)) => {
            if a.k == 0 {
                return Err(CliError::Usage("--k must be at least 1".into()));
            }
            let Loaded { model, cfg } = load_checkpoint(path)?;
            let windows = test_windows(&a.data, &cfg, cfg.t_obs)?;
            if windows.is_empty() {
                return Err(CliError::Data("no evaluation windows".into()));
            }
            let opts = RolloutOptions {
                oracle_vehicles: a.oracle_vehicles,
                features: cfg.features,
            };
            let m = evaluate_model(&windows, &model, a.k, a.seed, &opts, &eval)?;
            (
                model.variant.display_name().to_string(),
                model.variant.to_string(),
                a.k,
                m,
            )
        }
        (None, None) => {
            return Err(CliError::Usage(
                "either --checkpoint or --baseline linear is required".into(),
            ))
        }
    };
    if [metrics.ade, metrics.fde, metrics.mhd, metrics.se]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(CliError::Numeric("non-finite metric".into()));
    }
    let results = EvalResults {
        model: name.clone(),
        variant,
        dataset: a
            .data
            .data
            .file_stem()
            .map_or(String::new(), |s| s.to_string_lossy().into_owned()),
        k,
        metrics,
        mhd_mode: eval.mhd_mode,
        best_of: eval.best_of,
        oracle_vehicles: a.oracle_vehicles,
        seed: a.seed,
    };
    results.save_json(&a.out).map_err(io_err(&a.out))?;
    let csv_path = a.csv.unwrap_or_else(|| a.out.with_extension("csv"));
    results.save_csv(&csv_path).map_err(io_err(&csv_path))?;

    println!(
        "{:<36} {:>7} {:>7} {:>7} {:>7} {:>6}",
        "model", "ADE", "FDE", "MHD", "SE", "HE"
    );
    println!(
        "{}   ({} pairs, best of {k})",
        table_row(&name, [metrics.ade, metrics.fde, metrics.mhd, metrics.se], metrics.he),
        metrics.count
    );
    if !a.no_reference {
        println!("reference values on the HBS data set (best of 20, m, m, m, m/s, deg):");
        for (n, m, he) in REFERENCE {
            println!("{}", table_row(n, m, Some(he)));
        }
    }
    println!("wrote {} and {}", a.out.display(), csv_path.display());
    Ok(())
}

fn find_window(windows: Vec<SceneWindow>, id: usize) -> Result<SceneWindow, CliError> {
    let n = windows.len();
    windows
        .into_iter()
        .find(|w| w.window_id == id)
        .ok_or_else(|| CliError::Data(format!("window {id} not found ({n} windows)")))
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let Loaded { model, cfg } = load_checkpoint(&a.checkpoint)?;
    let window = find_window(test_windows(&a.data, &cfg, cfg.t_obs)?, a.window_id)?;
    let opts = RolloutOptions {
        oracle_vehicles: a.oracle_vehicles,
        features: cfg.features,
    };
    let r = rollout(
        &window,
        &model,
        a.k,
        derive_seed(a.seed, window.window_id as u64),
        &opts,
    )?;
    let file = File::create(&a.out).map_err(io_err(&a.out))?;
    write_predictions(BufWriter::new(file), &[(&window, &r)]).map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "wrote {}: {} targets x {} samples x {} steps",
        a.out.display(),
        r.target_ids.len(),
        a.k,
        window.t_pred
    );
    Ok(())
}

fn cmd_grids(a: GridsArgs) -> Result<(), CliError> {
    let cfg = RunConfig::default();
    let window = find_window(test_windows(&a.data, &cfg, a.stride.unwrap_or(cfg.t_obs))?, a.window_id)?;
    let rows = window_grid_rows(&window, &cfg.features).map_err(|e| CliError::Data(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&rows).expect("grid rows serialize");
    text.push('\n');
    std::fs::write(&a.out, text).map_err(io_err(&a.out))?;
    println!("wrote {} ({} rows)", a.out.display(), rows.len());
    Ok(())
}
