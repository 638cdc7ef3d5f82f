//! The `cm3` command line: train, eval, verify and export-plots.

pub mod config;
pub mod manifest;
pub mod plots;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::env::{EnvConfig, EnvKind, GameTask, LaneScenario};
use crate::error::Result;
use crate::game::{induce_single_agent_mdp, MultiGoalGame};
use crate::nn::{Checkpoint, Stage};
use crate::oracle::{run_suite, Suite, SuiteReport};
use crate::trainer::{self, read_metrics, EvalReport, Method, RunOptions, StageOutcome, TrainerConfig};

pub use config::RunConfig;
pub use manifest::{run_root, RunManifest, RunStatus, MANIFEST_FILE, RUN_ROOT_VAR};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Parser)]
#[command(name = "cm3", version, about = "Two-stage cooperative multi-goal multi-agent training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one curriculum stage.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Run exact property suites on enumerable games.
    Verify(VerifyArgs),
    /// Aggregate metrics files into mean and std curves.
    ExportPlots(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::One => Stage::One,
            StageArg::Two => Stage::Two,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration file.
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: Option<StageArg>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub env: Option<EnvKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stage-One checkpoint restored by CM3 and QV.
    #[arg(long)]
    pub from_checkpoint: Option<PathBuf>,
    /// Override the configured episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Output directory; defaults to a named directory under the run root.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Repeat the run a manifest describes.
    #[arg(long, conflicts_with_all = ["config", "stage", "method", "env", "seed", "from_checkpoint", "episodes"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "hand_coded")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<EnvKind>,
    /// Run configuration file supplying the environment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Lane-merge test configuration C1 to C4.
    #[arg(long)]
    pub scenario: Option<LaneScenario>,
    /// Scripted traffic vehicles for a lane-merge scenario.
    #[arg(long, default_value_t = 6)]
    pub background: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate the built-in optimal Checkers policy instead of a checkpoint.
    #[arg(long)]
    pub hand_coded: bool,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Identities,
    Gradients,
    Variance,
    CoopProb,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random games per suite; Monte-Carlo samples for the variance suite.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Metrics files, each optionally prefixed with `label=`.
    #[arg(long, required = true, num_args = 1..)]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => std::process::ExitCode::SUCCESS,
        Ok(false) => std::process::ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(2)
        }
    }
}

/// Returns whether every check passed.
pub fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train(args) => cmd_train(&args).map(|_| true),
        Command::Eval(args) => {
            let report = cmd_eval(&args)?;
            print_json(&report)?;
            Ok(true)
        }
        Command::Verify(args) => {
            let reports = cmd_verify(&args)?;
            let passed = reports.iter().all(|r| r.passed);
            print_json(&reports)?;
            Ok(passed)
        }
        Command::ExportPlots(args) => cmd_export_plots(&args).map(|_| true),
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

struct TrainTask<'a> {
    stage: Stage,
    trainer: &'a TrainerConfig,
    stage_one: Option<&'a Checkpoint>,
    options: &'a RunOptions,
}

impl GameTask for TrainTask<'_> {
    type Output = StageOutcome;

    fn run<G: MultiGoalGame>(self, game: G) -> Result<StageOutcome> {
        match self.stage {
            Stage::One => trainer::run_stage1(self.trainer, &induce_single_agent_mdp(&game)?, self.options),
            Stage::Two => trainer::run_stage2(self.trainer, &game, self.stage_one, self.trainer.method, self.options),
        }
    }
}

fn default_run_name(env: EnvKind, stage: Stage, method: Method, seed: u64) -> String {
    let stage = if stage == Stage::One { 1 } else { 2 };
    format!("{env}-stage{stage}-{method}-seed{seed}")
}

/// Train one stage and return the finished manifest.
pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<RunManifest> {
    let (env_config, trainer, seed, input_checkpoint) = match &args.manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            (m.env_config, m.trainer, m.seed, m.input_checkpoint)
        }
        None => {
            let run_config = match (&args.config, args.env) {
                (Some(path), env) => {
                    let c = RunConfig::load(path)?;
                    if let Some(kind) = env.filter(|k| *k != c.env.kind()) {
                        bail!("--env {kind} disagrees with the configured environment {}", c.env.kind());
                    }
                    c
                }
                (None, Some(kind)) => RunConfig::for_env(kind),
                (None, None) => bail!("give a configuration file or --env"),
            };
            let stage: Stage = args.stage.context("--stage is required")?.into();
            let method = match (stage, args.method) {
                (Stage::One, Some(m)) if m != Method::Cm3 => bail!("Stage One trains CM3's single-agent networks"),
                (Stage::One, _) => Method::Cm3,
                (Stage::Two, m) => m.context("--method is required for stage 2")?,
            };
            let mut trainer = run_config.trainer(stage, method)?;
            if let Some(e) = args.episodes {
                trainer.episodes = e;
            }
            let seed = args.seed.or(run_config.seed).unwrap_or(0);
            (run_config.env, trainer, seed, args.from_checkpoint.clone())
        }
    };
    let stage = trainer.stage;
    let method = trainer.method;
    let stage_one = match (&input_checkpoint, stage, method.uses_stage_one()) {
        (Some(path), Stage::Two, true) => Some(Checkpoint::load(path)?),
        (None, Stage::Two, true) => bail!("{method} needs a Stage-One checkpoint (--from-checkpoint)"),
        _ => None,
    };
    let kind = env_config.kind();
    let run_dir = args
        .run_dir
        .clone()
        .unwrap_or_else(|| run_root().join(default_run_name(kind, stage, method, seed)));
    std::fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let mut manifest = RunManifest {
        status: RunStatus::Running,
        seed,
        stage,
        method,
        env: kind,
        env_config: env_config.clone(),
        trainer: trainer.clone(),
        input_checkpoint: stage_one.as_ref().and(input_checkpoint),
        checkpoint: run_dir.join(CHECKPOINT_FILE),
        metrics: run_dir.join(METRICS_FILE),
        started_unix_ms: manifest::now_unix_ms(),
        finished_unix_ms: None,
        elapsed_secs: None,
        error: None,
    };
    manifest.write(&run_dir)?;
    let options = RunOptions {
        seed,
        metrics_path: Some(manifest.metrics.clone()),
        checkpoint_path: Some(manifest.checkpoint.clone()),
    };
    let outcome = env_config.visit(TrainTask {
        stage,
        trainer: &trainer,
        stage_one: stage_one.as_ref(),
        options: &options,
    });
    manifest.finish(outcome.as_ref().map(|_| ()).map_err(|e| e.to_string()));
    manifest.write(&run_dir)?;
    let outcome = outcome?;
    if let Some(eval) = &outcome.final_eval {
        eprintln!(
            "{}: joint return {:.3} ± {:.3}, success {:.2} over {} episodes",
            run_dir.display(),
            eval.joint_return,
            eval.joint_return_std,
            eval.success_rate,
            eval.episodes
        );
    }
    Ok(manifest)
}

struct EvalTask<'a> {
    checkpoint: Option<&'a Checkpoint>,
    episodes: usize,
    seed: u64,
}

impl GameTask for EvalTask<'_> {
    type Output = EvalReport;

    fn run<G: MultiGoalGame>(self, mut game: G) -> Result<EvalReport> {
        match self.checkpoint {
            Some(c) if c.stage == Stage::One => {
                let mut single = induce_single_agent_mdp(&game)?;
                trainer::evaluate(c, &mut single, self.episodes, self.seed)
            }
            Some(c) => trainer::evaluate(c, &mut game, self.episodes, self.seed),
            None => unreachable!("checked by the caller"),
        }
    }
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<EvalReport> {
    let mut env_config = match (&args.config, args.env) {
        (Some(path), _) => RunConfig::load(path)?.env,
        (None, Some(kind)) => EnvConfig::default_for(kind),
        (None, None) => {
            let path = args.checkpoint.as_deref().context("give --env or --config")?;
            let ckpt = Checkpoint::load(path)?;
            EnvConfig::default_for(ckpt.env.parse().context("checkpoint names no built-in environment")?)
        }
    };
    if let Some(scenario) = args.scenario {
        env_config = env_config.with_lane_scenario(scenario, args.background)?;
    }
    let report = if args.hand_coded {
        let EnvConfig::Checkers(c) = &env_config else {
            bail!("--hand-coded applies to checkers");
        };
        let mut world = crate::env::CheckersWorld::new(c.clone())?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(args.seed);
        let horizon = world.spec().horizon;
        trainer::evaluate_with(&mut world, args.episodes, horizon, &mut rng, |g, _| Ok(g.hand_coded_actions()))?
    } else {
        let path = args.checkpoint.as_deref().context("--checkpoint is required")?;
        let ckpt = Checkpoint::load(path)?;
        if ckpt.env != env_config.kind().name() {
            bail!("checkpoint was trained on {}, not {}", ckpt.env, env_config.kind());
        }
        env_config.visit(EvalTask {
            checkpoint: Some(&ckpt),
            episodes: args.episodes,
            seed: args.seed,
        })?
    };
    if let Some(out) = &args.out {
        crate::nn::checkpoint::write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(report)
}

/// Default trial counts: 50 games for identities, 20 for gradients, 1e5 samples for variance.
pub fn default_trials(suite: Suite) -> usize {
    match suite {
        Suite::Identities => 50,
        Suite::Gradients => 20,
        Suite::Variance => 100_000,
        Suite::CoopProb => 1,
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<Vec<SuiteReport>> {
    let suites: Vec<Suite> = match args.suite {
        SuiteArg::Identities => vec![Suite::Identities],
        SuiteArg::Gradients => vec![Suite::Gradients],
        SuiteArg::Variance => vec![Suite::Variance],
        SuiteArg::CoopProb => vec![Suite::CoopProb],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    suites
        .into_iter()
        .map(|s| Ok(run_suite(s, args.seed, args.trials.unwrap_or_else(|| default_trials(s)))?))
        .collect()
}

fn split_label(spec: &str) -> (String, &Path) {
    match spec.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), Path::new(path)),
        _ => ("run".to_string(), Path::new(spec)),
    }
}

pub fn cmd_export_plots(args: &ExportArgs) -> anyhow::Result<Vec<String>> {
    let runs = args
        .metrics
        .iter()
        .map(|spec| {
            let (label, path) = split_label(spec);
            Ok((label, read_metrics(path)?))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (points, warnings) = plots::aggregate(&runs)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    crate::nn::checkpoint::write_atomic(&args.out, plots::to_tsv(&points).as_bytes())?;
    Ok(warnings)
}
