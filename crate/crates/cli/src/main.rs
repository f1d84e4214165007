//! `edcforge`: generate datasets, train and evaluate the decay-curve model,
//! predict single rooms, and run the reference simulator.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edcforge_core::dataset;
use edcforge_core::ism::Duration;
use edcforge_core::nn::{ModelCheckpoint, TargetScaling};
use edcforge_core::pipeline;
use edcforge_core::room::RoomConfig;
use edcforge_core::Error;

use config::RunConfig;

const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Parser, Debug)]
#[command(name = "edcforge", version, about = "Room energy-decay simulation and prediction")]
struct Cli {
    /// TOML file with [generate], [train] and [simulate] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for room sampling, splitting, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to EDCFORGE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample and simulate rooms into a dataset directory.
    Generate(GenerateArgs),
    /// Train the model on a dataset's train/val splits.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Evaluate(EvaluateArgs),
    /// Predict the decay curve of one room.
    Predict(PredictArgs),
    /// Simulate one room with the image-source model.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of rooms.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    max_order: Option<u32>,
    #[arg(long)]
    grid_len: Option<usize>,
    #[arg(long)]
    window_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scaling {
    None,
    PerIndexMinMax,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    target_scaling: Option<Scaling>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dense: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Room description in JSON.
    #[arg(long)]
    room: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Room description in JSON.
    #[arg(long)]
    room: PathBuf,
    #[arg(long)]
    max_order: Option<u32>,
    /// Fixed RIR length instead of the automatic one.
    #[arg(long)]
    duration_s: Option<f64>,
}

/// Failure category and its process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Internal = 1,
    Io = 3,
    Invalid = 4,
    Version = 5,
    Corrupt = 6,
    OutputExists = 7,
    Grid = 8,
    Numeric = 9,
}

impl Failure {
    fn kind(self) -> &'static str {
        match self {
            Failure::Internal => "internal",
            Failure::Io => "io",
            Failure::Invalid => "invalid_input",
            Failure::Version => "version_mismatch",
            Failure::Corrupt => "corrupt_file",
            Failure::OutputExists => "output_exists",
            Failure::Grid => "grid_mismatch",
            Failure::Numeric => "numeric",
        }
    }

    fn of(e: &Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io,
            Error::InvalidRoom(_)
            | Error::InvalidArgument(_)
            | Error::LengthMismatch { .. }
            | Error::SamplerExhausted(_)
            | Error::EyringDomain(_) => Failure::Invalid,
            Error::VersionMismatch { .. } => Failure::Version,
            Error::Checksum { .. } | Error::Format { .. } | Error::Json(_) => Failure::Corrupt,
            Error::OutputExists(_) => Failure::OutputExists,
            Error::GridMismatch(_) => Failure::Grid,
            Error::NonFinite { .. }
            | Error::NonFiniteLoss { .. }
            | Error::ZeroDistance { .. }
            | Error::SilentRir
            | Error::InsufficientRange { .. }
            | Error::C50Undefined => Failure::Numeric,
            Error::RoomFailed { source, .. } => Failure::of(source),
            Error::CacheMismatch => Failure::Internal,
        }
    }
}

struct CliError {
    failure: Failure,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            failure: Failure::of(&e),
            message: e.to_string(),
        }
    }
}

fn invalid(message: String) -> CliError {
    CliError {
        failure: Failure::Invalid,
        message,
    }
}

fn threads(flag: Option<usize>, file: Option<usize>) -> Result<usize, CliError> {
    if let Some(t) = flag.or(file) {
        return Ok(t.max(1));
    }
    match std::env::var("EDCFORGE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|t| t.max(1))
            .map_err(|_| invalid(format!("EDCFORGE_THREADS={v:?} is not a number"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn read_room(path: &Path) -> Result<RoomConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    RoomConfig::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = out.join(EFFECTIVE_CONFIG);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::Io { path, source: e }.into())
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(invalid)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed(cli.seed);
    let threads = threads(cli.threads, cfg.threads)?;
    cfg.threads = Some(threads);
    let out = cli.out_dir.as_path();

    match cli.command {
        Command::Generate(a) => {
            let g = &mut cfg.generate;
            g.n_rooms = a.n.unwrap_or(g.n_rooms);
            g.sim.max_order = a.max_order.unwrap_or(g.sim.max_order);
            g.grid.len = a.grid_len.unwrap_or(g.grid.len);
            g.grid.window_s = a.window_s.unwrap_or(g.grid.window_s);
            pipeline::prepare_out_dir(out, cli.overwrite)?;
            echo_config(&cfg, out)?;
            let ds = pipeline::generate(&cfg.generate, threads, out)?;
            Ok(format!(
                "generated {} rooms (train {}, val {}, test {}) in {}",
                ds.n_rooms(),
                ds.splits.train.len(),
                ds.splits.val.len(),
                ds.splits.test.len(),
                out.display()
            ))
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            t.config.max_epochs = a.epochs.unwrap_or(t.config.max_epochs);
            t.config.patience = a.patience.unwrap_or(t.config.patience);
            t.config.batch_size = a.batch_size.unwrap_or(t.config.batch_size);
            t.config.learning_rate = a.lr.unwrap_or(t.config.learning_rate);
            if let Some(s) = a.target_scaling {
                t.config.target_scaling = match s {
                    Scaling::None => TargetScaling::None,
                    Scaling::PerIndexMinMax => TargetScaling::PerIndexMinMax,
                };
            }
            t.model.hidden = a.hidden.unwrap_or(t.model.hidden);
            t.model.dense = a.dense.unwrap_or(t.model.dense);
            t.model.dropout = a.dropout.unwrap_or(t.model.dropout);
            if !(0.0..1.0).contains(&t.model.dropout) {
                return Err(invalid(format!("dropout {} must be in [0, 1)", t.model.dropout)));
            }
            let ds = dataset::load(&a.dataset)?;
            t.model.output = ds.manifest.grid.len;
            pipeline::prepare_out_dir(out, cli.overwrite)?;
            echo_config(&cfg, out)?;
            let ckpt = pipeline::train(&ds, cfg.train.model, &cfg.train.config, out)?;
            let best = &ckpt.history[ckpt.best_epoch];
            Ok(format!(
                "trained {} epochs, best epoch {} (val mse {:.3e}); wrote {}",
                ckpt.history.len(),
                ckpt.best_epoch,
                best.val_loss,
                out.join(pipeline::CHECKPOINT_FILE).display()
            ))
        }
        Command::Evaluate(a) => {
            let ds = dataset::load(&a.dataset)?;
            let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
            pipeline::prepare_out_dir(out, cli.overwrite)?;
            echo_config(&cfg, out)?;
            let e = pipeline::evaluate(&ds, &ckpt, threads, out)?;
            let s = &e.summary;
            let r2 = |v: Option<f64>| v.map_or("n/a".to_string(), |r| format!("{r:.3}"));
            Ok(format!(
                "{} test rooms: EDT mae {:.4} s r2 {}; T20 mae {:.4} s r2 {}; C50 mae {:.3} dB r2 {}",
                s.n_test_rooms,
                s.edt.mae,
                r2(s.edt.r2),
                s.t20.mae,
                r2(s.t20.r2),
                s.c50.mae,
                r2(s.c50.r2)
            ))
        }
        Command::Predict(a) => {
            let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
            let room = read_room(&a.room)?;
            pipeline::prepare_out_dir(out, cli.overwrite)?;
            echo_config(&cfg, out)?;
            let (edc, s) = pipeline::predict(&ckpt, &room, out)?;
            let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
            Ok(format!(
                "{} points; EDT {} s, T20 {} s, C50 {} dB; Sabine {} s, Eyring {} s",
                edc.len(),
                f(s.predicted.edt_s),
                f(s.predicted.t20_s),
                f(s.predicted.c50_db),
                f(s.baselines.sabine_t60_s),
                f(s.baselines.eyring_t60_s)
            ))
        }
        Command::Simulate(a) => {
            let sim = &mut cfg.simulate.sim;
            sim.max_order = a.max_order.unwrap_or(sim.max_order);
            if let Some(d) = a.duration_s {
                sim.duration = Duration::Seconds(d);
            }
            let room = read_room(&a.room)?;
            pipeline::prepare_out_dir(out, cli.overwrite)?;
            echo_config(&cfg, out)?;
            let s = pipeline::simulate(&room, &cfg.simulate.sim, &cfg.simulate.grid, out)?;
            let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
            Ok(format!(
                "{} samples; T60 {} s, EDT {} s, C50 {} dB; Eyring {} s",
                s.rir_samples,
                f(s.t60_s),
                f(s.full_rate.edt_s),
                f(s.full_rate.c50_db),
                f(s.baselines.eyring_t60_s)
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({
                "error": e.failure.kind(),
                "code": e.failure as u8,
                "message": e.message,
            });
            eprintln!("{line}");
            ExitCode::from(e.failure as u8)
        }
    }
}
