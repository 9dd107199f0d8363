//! Command-line interface.
//!
//! Subcommands: `train`, `eval`, `replay`, `report`, and `selftest`. Exit
//! codes follow one contract everywhere: 0 on success, 2 for usage errors
//! (bad flags, missing or invalid configuration), 1 for runtime failures
//! (training, evaluation, or file errors). The output directory defaults
//! to `MMRL_OUT_DIR`, then to the current directory.

use crate::checkpoint::{self, Checkpoint, CheckpointError};
use crate::config::{self, ConfigError, RunConfig};
use crate::env::{Env, EnvError, TaskEnv};
use crate::eval::{evaluate, record_episode, Replay, ReplayError};
use crate::ppo::{IterationStats, PpoError, Trainer};
use crate::report::{ReportError, ReportTable};
use crate::traj::TrajectoryFamily;
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "mmrl",
    version,
    about = "Train and evaluate trajectory-tracking and grasping policies"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one PPO run per configured seed.
    Train(TrainArgs),
    /// Evaluate a checkpoint over the configured families.
    Eval(EvalArgs),
    /// Record a replay episode, or verify a stored one.
    Replay(ReplayArgs),
    /// Merge evaluation CSVs into one comparison table.
    Report(ReportArgs),
    /// Run the built-in numerical cross-checks.
    Selftest,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: $MMRL_OUT_DIR, then `.`].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Resume the checkpointed run; only its seed is trained.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint holding the policy to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Section label in the report, for example `nominal` or `widened`.
    #[arg(long, default_value = "nominal")]
    label: String,
    /// Families to evaluate, comma separated [default: from config].
    #[arg(long)]
    families: Option<String>,
    /// Override `eval.widen_factor` from the configuration.
    #[arg(long)]
    widen: Option<f64>,
    /// Override `eval.episodes_per_family`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Evaluation seed grid base.
    #[arg(long, default_value_t = 1000)]
    seed: u64,
    /// Output CSV [default: <out-dir>/<run>_<label>_eval.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to roll out (required unless --verify is given).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Verify a stored replay instead of recording one.
    #[arg(long)]
    verify: Option<PathBuf>,
    /// Trajectory family [default: first configured family].
    #[arg(long)]
    family: Option<String>,
    /// Episode seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output CSV [default: <out-dir>/<run>_replay.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation CSVs to merge, in order.
    #[arg(long, required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Merged CSV output; omit to print only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    /// Bad invocation or configuration; exits 2.
    Usage(String),
    /// Failure while doing the work; exits 1.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(PpoError, EnvError, CheckpointError, ReplayError, ReportError, std::io::Error);

/// Parses arguments and runs; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Replay(args) => replay(args),
        Command::Report(args) => report(args),
        Command::Selftest => selftest(),
    }
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| std::env::var_os("MMRL_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn env_builder(cfg: &RunConfig) -> impl Fn(usize, u64) -> Result<Box<dyn TaskEnv>, EnvError> + '_ {
    |slot, base_seed| {
        let family = cfg.family_for_slot(slot);
        Ok(Box::new(Env::new(cfg.env.clone(), family, base_seed)?) as Box<dyn TaskEnv>)
    }
}

fn checkpoint_path(dir: &Path, cfg: &RunConfig, seed: u64) -> PathBuf {
    dir.join(format!("{}_seed{}.ckpt.json", cfg.name, seed))
}

fn write_log_row(log: &mut impl std::io::Write, s: &IterationStats) -> std::io::Result<()> {
    writeln!(
        log,
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.iteration,
        s.env_steps,
        s.mean_distance,
        s.mean_episode_return,
        s.episodes,
        s.grasp_successes,
        s.update.policy_loss,
        s.update.value_loss,
        s.update.entropy,
        s.update.clip_fraction,
        s.update.grad_norm
    )
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config)?;
    let dir = out_dir(args.out_dir)?;
    let hash = cfg.semantic_hash();
    std::fs::write(dir.join(format!("{}.config.txt", cfg.name)), cfg.to_text())?;

    let resume = match &args.resume {
        Some(path) => Some(checkpoint::load(path)?),
        None => None,
    };
    let seeds: Vec<u64> = match &resume {
        Some(ck) => vec![ck.run_seed],
        None => cfg.ppo.seeds.clone(),
    };
    let mut resume = resume;
    for seed in seeds {
        let build = env_builder(&cfg);
        let mut trainer = Trainer::new(cfg.ppo.clone(), seed, &build)?;
        if let Some(ck) = resume.take() {
            ck.resume_into(&mut trainer, hash)?;
            println!(
                "resumed seed {seed} at iteration {} ({} env steps)",
                trainer.iteration_count(),
                trainer.env_steps()
            );
        }
        let log_path = dir.join(format!("{}_seed{}_train.csv", cfg.name, seed));
        let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
        writeln!(
            log,
            "iteration,env_steps,mean_distance,mean_episode_return,episodes,grasps,policy_loss,value_loss,entropy,clip_fraction,grad_norm"
        )?;
        let total_iterations = cfg.ppo.iterations();
        while !trainer.done() {
            let stats = trainer.iteration()?;
            write_log_row(&mut log, &stats)?;
            if stats.iteration % cfg.log_every == 0 {
                println!(
                    "seed {seed} iter {}/{} steps {} dist {:.3} ret {:.1} value_loss {:.3} ent {:.2}",
                    stats.iteration,
                    total_iterations,
                    stats.env_steps,
                    stats.mean_distance,
                    stats.mean_episode_return,
                    stats.update.value_loss,
                    stats.update.entropy
                );
            }
            if cfg.checkpoint_every > 0 && stats.iteration % cfg.checkpoint_every == 0 {
                let ck = Checkpoint::of_trainer(&trainer, hash);
                checkpoint::save(&checkpoint_path(&dir, &cfg, seed), &ck)?;
            }
        }
        log.flush()?;
        let ck = Checkpoint::of_trainer(&trainer, hash);
        let path = checkpoint_path(&dir, &cfg, seed);
        checkpoint::save(&path, &ck)?;
        println!("seed {seed} done: {} env steps, checkpoint {}", trainer.env_steps(), path.display());
    }
    Ok(())
}

fn parse_family_list(arg: &str) -> Result<Vec<TrajectoryFamily>, CliError> {
    arg.split(',')
        .map(str::trim)
        .map(|name| {
            TrajectoryFamily::from_name(name)
                .ok_or_else(|| CliError::Usage(format!("unknown trajectory family `{name}`")))
        })
        .collect()
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config)?;
    let dir = out_dir(args.out_dir)?;
    let ck = checkpoint::load(&args.checkpoint)?;
    let families = match &args.families {
        Some(list) => parse_family_list(list)?,
        None => cfg.families.clone(),
    };
    let mut settings = cfg.eval.clone();
    if let Some(widen) = args.widen {
        settings.widen_factor = widen;
    }
    if let Some(episodes) = args.episodes {
        settings.episodes_per_family = episodes;
    }
    let rows = evaluate(&ck.params, &cfg.env, &families, &settings, args.seed)?;
    let mut table = ReportTable::new();
    table.add_section(&args.label, &rows);
    print!("{}", table.to_pretty());
    let out = args
        .out
        .unwrap_or_else(|| dir.join(format!("{}_{}_eval.csv", cfg.name, args.label)));
    std::fs::write(&out, table.to_csv())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config)?;
    if let Some(stored) = &args.verify {
        let replay = Replay::from_csv(&std::fs::read_to_string(stored)?)?;
        replay.verify(&cfg.env)?;
        println!(
            "replay verified: {} steps of {} re-simulated bitwise",
            replay.rows.len(),
            replay.family.name()
        );
        return Ok(());
    }
    let checkpoint_arg = args.checkpoint.as_ref().ok_or_else(|| {
        CliError::Usage("either --checkpoint (record) or --verify is required".to_string())
    })?;
    let dir = out_dir(args.out_dir)?;
    let ck = checkpoint::load(checkpoint_arg)?;
    let family = match &args.family {
        Some(name) => TrajectoryFamily::from_name(name)
            .ok_or_else(|| CliError::Usage(format!("unknown trajectory family `{name}`")))?,
        None => cfg.families[0],
    };
    let replay = record_episode(&ck.params, &cfg.env, family, args.seed)?;
    replay.verify(&cfg.env)?;
    let out = args
        .out
        .unwrap_or_else(|| dir.join(format!("{}_replay.csv", cfg.name)));
    std::fs::write(&out, replay.to_csv())?;
    println!(
        "recorded {} steps of {} (return {:.2}, grasped {}), verified bitwise, wrote {}",
        replay.rows.len(),
        family.name(),
        replay.episode_return,
        replay.grasped,
        out.display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let mut merged = ReportTable::new();
    for path in &args.inputs {
        let table = ReportTable::from_csv(&std::fs::read_to_string(path)?)?;
        merged.rows.extend(table.rows);
    }
    print!("{}", merged.to_pretty());
    if let Some(out) = &args.out {
        std::fs::write(out, merged.to_csv())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn selftest() -> Result<(), CliError> {
    let mut failures = 0;
    for check in crate::selftest::run_all() {
        let verdict = if check.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {}: {:.3e} (tolerance {:.0e}; {})",
            check.name, check.value, check.tolerance, check.detail
        );
        if !check.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} selftest checks failed")));
    }
    println!("all selftest checks passed");
    Ok(())
}
