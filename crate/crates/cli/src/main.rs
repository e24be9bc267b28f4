use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use multigait::analysis::{analyze, write_analysis, AnalysisError};
use multigait::camp::{CampDataset, CampError};
use multigait::checkpoint::CheckpointError;
use multigait::config::{ConfigError, RunConfig};
use multigait::eval::{climb_test, tracking_test, EvalError, GaitMode};
use multigait::gait::NamedGait;
use multigait::parallel::Executor;
use multigait::sim::{SimError, TerrainKey, TerrainType};
use multigait::trainer::{load_policy, run_training, TrainerError, CHECKPOINT_FILE};

#[derive(Parser, Debug)]
#[command(name = "multigait", version, about = "Multi-gait quadruped locomotion sandbox")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is the deterministic sequential mode, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the reference motion dataset and its manifest.
    Dataset {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory (default: paths.dataset_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train, writing metrics every iteration and periodic checkpoints.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory (default: paths.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config iteration count
        #[arg(long)]
        iterations: Option<usize>,
        /// Overrides the config environment count
        #[arg(long)]
        num_envs: Option<usize>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Dataset directory (default: paths.dataset_dir).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: velocity tracking and stair climbing.
    Eval {
        /// Checkpoint file or run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Scenario::All)]
        scenario: Scenario,
        /// Named gait for the encoder path, or `adaptive` for the generator.
        #[arg(long, default_value = "adaptive")]
        gait: String,
        /// Stepping frequency in Hz for a named gait
        #[arg(long, default_value_t = 2.0)]
        frequency: f64,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latent-space analysis: embeddings, DTW matrix and gait diagrams.
    Analyze {
        /// Checkpoint file or run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory for embeddings, the DTW matrix and gait diagrams
        #[arg(long)]
        out: PathBuf,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand, Debug)]
enum ConfigAction {
    /// Write the full default configuration.
    Init {
        #[arg(long, default_value = "multigait.toml")]
        out: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// TOML config; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Scenario {
    Tracking,
    Climb,
    All,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "runtime failure: {m}"),
            Failure::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<CampError> for Failure {
    fn from(e: CampError) -> Self {
        match e {
            CampError::Io(_) => Failure::Io(e.to_string()),
            CampError::Parse { .. } | CampError::EmptyDataset => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) => Failure::Io(e.to_string()),
            SimError::Fault(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<TrainerError> for Failure {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::Config(m) => Failure::Validation(m),
            TrainerError::ConfigFile(e) => e.into(),
            TrainerError::Io(e) => e.into(),
            TrainerError::Checkpoint(e) => e.into(),
            TrainerError::Camp(e) => e.into(),
            TrainerError::Sim(e) => e.into(),
            TrainerError::State(m) => Failure::Validation(format!("checkpoint state: {m}")),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Sim(e) => e.into(),
            EvalError::Invalid(m) => Failure::Validation(m),
            EvalError::Gait(e) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io(e) => e.into(),
            AnalysisError::Eval(e) => e.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(arg: &ConfigArg, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = match &arg.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn executor(threads: usize) -> Result<Executor, Failure> {
    Executor::new(threads).map_err(|e| Failure::Runtime(e.to_string()))
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p.to_path_buf()
    }
}

fn gait_mode(name: &str, frequency: f64, base_height: f64) -> Result<GaitMode, Failure> {
    if name.eq_ignore_ascii_case("adaptive") {
        return Ok(GaitMode::Adaptive);
    }
    let gait: NamedGait = name.parse().map_err(|e: multigait::gait::GaitError| Failure::Validation(e.to_string()))?;
    Ok(GaitMode::named(gait, frequency, base_height)?)
}

fn cmd_dataset(cli: &Cli, config: &ConfigArg, out: &Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config, cli.seed)?;
    let dir = out.clone().unwrap_or_else(|| cfg.paths.dataset_dir.clone());
    let data = CampDataset::build(&cfg.reference)?;
    data.export(&dir)?;
    println!("wrote {} trajectories and manifest.csv to {}", data.len(), dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    cli: &Cli,
    config: &ConfigArg,
    out: &Option<PathBuf>,
    iterations: Option<usize>,
    num_envs: Option<usize>,
    resume: bool,
    dataset: &Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config, cli.seed)?;
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    if let Some(n) = num_envs {
        cfg.num_envs = n;
    }
    cfg.validate()?;
    let out = out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
    let data_dir = dataset.clone().unwrap_or_else(|| cfg.paths.dataset_dir.clone());
    if !data_dir.join("manifest.csv").exists() {
        return Err(Failure::Io(format!(
            "no dataset at {} (run `multigait dataset` first)",
            data_dir.display()
        )));
    }
    let data = CampDataset::import(&data_dir)?;
    let total = cfg.iterations;
    let rows = run_training(cfg, data, executor(cli.threads)?, &out, resume, |m| {
        eprintln!(
            "iter {:>5}/{total} reward {:+.4} match {:.3} rmse {:.3}",
            m.iteration, m.reward_total, m.contact_match, m.tracking_rmse
        );
    })?;
    println!("trained {} iterations; outputs in {}", rows.len(), out.display());
    Ok(())
}

fn cmd_eval(
    cli: &Cli,
    checkpoint: &Path,
    scenario: Scenario,
    gait: &str,
    frequency: f64,
    out: &Option<PathBuf>,
) -> Result<(), Failure> {
    let (cfg, nets) = load_policy(&checkpoint_path(checkpoint))?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let mode = gait_mode(gait, frequency, cfg.reference.base_height)?;
    let exec = executor(cli.threads)?;
    let mut report = json!({ "gait": gait, "seed": seed });
    if matches!(scenario, Scenario::Tracking | Scenario::All) {
        let rows = tracking_test(&nets, &cfg.sim, &cfg.eval, mode, seed, &exec)?;
        println!("velocity tracking ({} runs per speed):", cfg.eval.runs);
        for r in &rows {
            println!(
                "  {:>5.2} m/s  RMSE {:.4} ± {:.4}  falls {}",
                r.speed, r.mean, r.std, r.falls
            );
        }
        report["tracking"] = serde_json::to_value(&rows).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    if matches!(scenario, Scenario::Climb | Scenario::All) {
        let c = climb_test(&nets, &cfg.sim, &cfg.eval, mode, seed, &exec)?;
        println!(
            "stair climb (level {}): {}/{} runs covered {} m in under {} s",
            c.level,
            c.successes,
            c.times.len(),
            cfg.eval.climb_distance,
            cfg.eval.climb_time
        );
        report["climb"] = serde_json::to_value(&c).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(path, text)?;
        if matches!(scenario, Scenario::Climb | Scenario::All) {
            let key = TerrainKey {
                kind: TerrainType::Stairs,
                level: cfg.eval.stair_level,
                seed,
            };
            key.build(&cfg.sim.terrain)?.save(&path.with_extension("mghf"))?;
        }
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, checkpoint: &Path, out: &Path) -> Result<(), Failure> {
    let (cfg, nets) = load_policy(&checkpoint_path(checkpoint))?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let result = analyze(&nets, &cfg, seed, &executor(cli.threads)?)?;
    let written = write_analysis(&result, out)?;
    for d in &result.diagrams {
        println!("{:<14} contact match {:.3}", d.label, d.match_rate());
    }
    if !result.truncated.is_empty() {
        println!("ended early (fall): {}", result.truncated.join(", "));
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn cmd_config_init(out: &Path, force: bool) -> Result<(), Failure> {
    if out.exists() && !force {
        return Err(Failure::Validation(format!(
            "{} exists (use --force to overwrite)",
            out.display()
        )));
    }
    RunConfig::default().save(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Dataset { config, out } => cmd_dataset(cli, config, out),
        Command::Train {
            config,
            out,
            iterations,
            num_envs,
            resume,
            dataset,
        } => cmd_train(cli, config, out, *iterations, *num_envs, *resume, dataset),
        Command::Eval {
            checkpoint,
            scenario,
            gait,
            frequency,
            out,
        } => cmd_eval(cli, checkpoint, *scenario, gait, *frequency, out),
        Command::Analyze { checkpoint, out } => cmd_analyze(cli, checkpoint, out),
        Command::Config {
            action: ConfigAction::Init { out, force },
        } => cmd_config_init(out, *force),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
