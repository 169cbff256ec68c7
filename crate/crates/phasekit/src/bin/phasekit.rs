use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasekit::experiment::{self, ExperimentSpec, GenDataSpec, RunTaskSpec, StrategyKind, TrainSpec};
use phasekit::{Error, Result};
use phasekit_core::scenesim::Task;

#[derive(Parser)]
#[command(name = "phasekit", version, about = "Task-progress embeddings from multi-view image sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a randomized multi-view corpus.
    GenData(GenDataArgs),
    /// Train an embedding network on a corpus.
    Train(TrainArgs),
    /// Run closed-loop episodes against the simulator.
    RunTask(RunTaskArgs),
    /// Summarize every experiment under a directory into report.html.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Re-run a spec.json written by an earlier command.
    Replay {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Floor,
    Cup,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Floor => Task::Floor,
            TaskArg::Cup => Task::Cup,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uniform,
    Adjacent,
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON spec supplying defaults for every flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    margin: Option<f32>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Neighborhood for adjacent negatives.
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    val_triplets: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct RunTaskArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Checkpoint directory or training output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Floor goal frame (15 - goal object count); repeatable. Default: sweep 1..15.
    #[arg(long = "goal-index")]
    goal_index: Vec<u32>,
    /// Cup goal particle count; repeatable. Default: 0, 69, 138, 207, 275.
    #[arg(long = "goal-particles")]
    goal_particles: Vec<u32>,
    /// Initial objects (floor, default 15) or particles (cup, default 0).
    #[arg(long)]
    initial: Option<u32>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn from_config(path: &Option<PathBuf>) -> Result<Option<ExperimentSpec>> {
    path.as_deref().map(ExperimentSpec::load).transpose()
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("missing --{flag}")))
}

fn wrong_config(cmd: &str) -> Error {
    Error::Usage(format!("config file is not a {cmd} spec"))
}

fn gen_data(a: GenDataArgs) -> Result<GenDataSpec> {
    let base = match from_config(&a.config)? {
        Some(ExperimentSpec::GenData(s)) => Some(s),
        Some(_) => return Err(wrong_config("gen-data")),
        None => None,
    };
    let spec = GenDataSpec {
        task: required(a.task.map(Task::from).or(base.as_ref().map(|b| b.task)), "task")?,
        runs: required(a.runs.or(base.as_ref().map(|b| b.runs)), "runs")?,
        size: a.size.or(base.as_ref().map(|b| b.size)).unwrap_or(64),
        seed: a.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
        out: required(a.out.or(base.map(|b| b.out)), "out")?,
    };
    if spec.runs == 0 {
        return Err(Error::Usage("--runs must be at least 2".into()));
    }
    Ok(spec)
}

fn train(a: TrainArgs) -> Result<TrainSpec> {
    let b = match from_config(&a.config)? {
        Some(ExperimentSpec::Train(s)) => s,
        Some(_) => return Err(wrong_config("train")),
        None => TrainSpec::default(),
    };
    let has_config = a.config.is_some();
    Ok(TrainSpec {
        corpus: a.corpus.or(has_config.then(|| b.corpus.clone())).ok_or_else(|| Error::Usage("missing --corpus".into()))?,
        out: a.out.or(has_config.then(|| b.out.clone())).ok_or_else(|| Error::Usage("missing --out".into()))?,
        epochs: a.epochs.unwrap_or(b.epochs),
        margin: a.margin.unwrap_or(b.margin),
        strategy: a
            .strategy
            .map(|s| match s {
                StrategyArg::Uniform => StrategyKind::Uniform,
                StrategyArg::Adjacent => StrategyKind::Adjacent,
            })
            .unwrap_or(b.strategy),
        radius: a.radius.unwrap_or(b.radius),
        batch_size: a.batch_size.unwrap_or(b.batch_size),
        steps_per_epoch: a.steps_per_epoch.unwrap_or(b.steps_per_epoch),
        lr: a.lr.unwrap_or(b.lr),
        val_triplets: a.val_triplets.unwrap_or(b.val_triplets),
        seed: a.seed.unwrap_or(b.seed),
    })
}

fn run_task(a: RunTaskArgs) -> Result<RunTaskSpec> {
    let base = match from_config(&a.config)? {
        Some(ExperimentSpec::RunTask(s)) => Some(s),
        Some(_) => return Err(wrong_config("run-task")),
        None => None,
    };
    let task = required(a.task.map(Task::from).or(base.as_ref().map(|b| b.task)), "task")?;
    let checkpoint = required(a.checkpoint.or(base.as_ref().map(|b| b.checkpoint.clone())), "checkpoint")?;
    let out = required(a.out.or(base.as_ref().map(|b| b.out.clone())), "out")?;
    let mut spec = base.unwrap_or_else(|| RunTaskSpec::new(task, checkpoint.clone(), out.clone()));
    spec.task = task;
    spec.checkpoint = checkpoint;
    spec.out = out;
    let goals = match task {
        Task::Floor if !a.goal_particles.is_empty() => {
            return Err(Error::Usage("--goal-particles applies to the cup task".into()))
        }
        Task::Cup if !a.goal_index.is_empty() => return Err(Error::Usage("--goal-index applies to the floor task".into())),
        Task::Floor => a.goal_index,
        Task::Cup => a.goal_particles,
    };
    if !goals.is_empty() {
        spec.goals = goals;
    }
    spec.initial = a.initial.or(spec.initial);
    spec.episodes = a.episodes.unwrap_or(spec.episodes);
    spec.max_steps = a.max_steps.unwrap_or(spec.max_steps);
    spec.seed = a.seed.unwrap_or(spec.seed);
    Ok(spec)
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData(a) => Ok(gen_data(a)?.run()?.to_string()),
        Command::Train(a) => {
            let quiet = a.quiet;
            let spec = train(a)?;
            println!("margin {}", spec.margin);
            Ok(spec.run(!quiet)?.to_string())
        }
        Command::RunTask(a) => Ok(run_task(a)?.run()?.to_string()),
        Command::Report { dir } => {
            let digest = experiment::write_report(&dir)?;
            Ok(format!(
                "wrote {} (digest {})",
                dir.join(experiment::REPORT_HTML).display(),
                phasekit_core::digest::hex(digest)
            ))
        }
        Command::Replay { spec } => ExperimentSpec::load(&spec)?.run(true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
