//! Replayable experiment drivers behind the CLI.
//!
//! Every command writes a `spec.json` into its output directory; feeding that
//! file back through [`ExperimentSpec::run`] reproduces the same artifacts,
//! apart from wall-time columns.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use phasekit_core::agent::{
    cleaning_task, distance_to_go, pouring_task, run_cleaning_episode, run_pouring_episode, EpisodeConfig,
    EpisodeTrace, TerminalStatus, DEFAULT_MAX_STEPS,
};
use phasekit_core::digest::{crc64, hex};
use phasekit_core::sampler::SamplingStrategy;
use phasekit_core::scenesim::{Task, FLOOR_OBJECTS, FULL_CUP};
use phasekit_core::trainer::{self, AdamConfig, EpochRecord, TrainConfig, TrainObserver, TrainReport, DEFAULT_MARGIN};
use phasekit_core::{seed, EmbedderConfig, EmbedderParams, PHASES};
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_corpus, Corpus};
use crate::error::{self, Error, Result};
use crate::plot::{Chart, Series};
use crate::stats::{median, spearman, Summary};
use crate::{checkpoint, pool};

pub const SPEC_FILE: &str = "spec.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    GenData(GenDataSpec),
    Train(TrainSpec),
    RunTask(RunTaskSpec),
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        error::read_json(path)
    }

    /// Runs the command and returns the human-readable summary.
    pub fn run(&self, verbose: bool) -> Result<String> {
        match self {
            ExperimentSpec::GenData(s) => s.run().map(|r| r.to_string()),
            ExperimentSpec::Train(s) => s.run(verbose).map(|r| r.to_string()),
            ExperimentSpec::RunTask(s) => s.run().map(|r| r.to_string()),
        }
    }
}

fn save_spec(out: &Path, spec: ExperimentSpec) -> Result<()> {
    error::write_json(&out.join(SPEC_FILE), &spec)
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataSpec {
    pub task: Task,
    pub runs: usize,
    pub size: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataSummary {
    pub task: Task,
    pub runs: usize,
    pub sequences: usize,
    pub bytes: u64,
    pub digest: String,
}

impl std::fmt::Display for GenDataSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} runs, {} sequences, {} bytes, digest {}",
            self.task.name(),
            self.runs,
            self.sequences,
            self.bytes,
            self.digest
        )
    }
}

impl GenDataSpec {
    pub fn run(&self) -> Result<GenDataSummary> {
        let corpus = generate_corpus(self.task, self.runs, self.size, self.seed, &self.out)?;
        save_spec(&corpus.root, ExperimentSpec::GenData(self.clone()))?;
        Ok(GenDataSummary {
            task: self.task,
            runs: corpus.manifest.runs.len(),
            sequences: corpus.sequences(),
            bytes: corpus.bytes,
            digest: hex(corpus.digest),
        })
    }
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Uniform,
    Adjacent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub epochs: usize,
    pub margin: f32,
    pub strategy: StrategyKind,
    pub radius: usize,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub lr: f32,
    pub val_triplets: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSpec {
            corpus: PathBuf::from("corpus"),
            out: PathBuf::from("train"),
            epochs: c.epochs,
            margin: DEFAULT_MARGIN,
            strategy: StrategyKind::Uniform,
            radius: 1,
            batch_size: c.batch_size,
            steps_per_epoch: c.steps_per_epoch,
            lr: c.optimizer.lr,
            val_triplets: c.val_triplets,
            seed: c.seed,
        }
    }
}

pub const REPORT_CSV: &str = "report.csv";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const LOSS_CURVE: &str = "loss_curve.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub task: Task,
    pub corpus_digest: String,
    pub strategy: SamplingStrategy,
    pub seed: u64,
    pub report: TrainReport,
    pub final_params_digest: String,
    pub best_params_digest: String,
}

impl std::fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let last = self.report.last().expect("at least one epoch");
        write!(
            f,
            "{} epochs, strategy {}, margin {}: val loss {:.4}, val accuracy {:.3}, best epoch {}, {:.0}s",
            self.report.epochs.len(),
            self.strategy.label(),
            self.report.margin,
            last.val_loss,
            last.val_accuracy,
            self.report.best_epoch,
            last.seconds
        )
    }
}

impl TrainSpec {
    pub fn strategy(&self) -> Result<SamplingStrategy> {
        match self.strategy {
            StrategyKind::Uniform => Ok(SamplingStrategy::UniformNegative),
            StrategyKind::Adjacent => SamplingStrategy::adjacent(self.radius).map_err(|e| Error::Usage(e.to_string())),
        }
    }

    pub fn config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            margin: self.margin,
            batch_size: self.batch_size,
            steps_per_epoch: self.steps_per_epoch,
            epochs: self.epochs,
            optimizer: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            strategy: self.strategy()?,
            seed: self.seed,
            val_triplets: self.val_triplets,
        };
        config.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn run(&self, verbose: bool) -> Result<TrainSummary> {
        let config = self.config()?;
        let corpus = Corpus::open(&self.corpus)?;
        let source = corpus.load()?;
        let embedder = EmbedderConfig::standard(corpus.manifest.image_size);
        save_spec(&self.out, ExperimentSpec::Train(self.clone()))?;
        let mut observer = CheckpointObserver {
            start: Instant::now(),
            out: self.out.clone(),
            verbose,
            error: None,
        };
        let outcome = trainer::train(&source, &embedder, &config, &mut observer);
        if let Some(e) = observer.error {
            return Err(e);
        }
        let outcome = outcome?;
        checkpoint::save(&self.out.join("checkpoints/final"), &outcome.params, outcome.report.epochs.len())?;
        let summary = TrainSummary {
            task: corpus.task(),
            corpus_digest: hex(corpus.digest),
            strategy: config.strategy,
            seed: self.seed,
            report: outcome.report,
            final_params_digest: hex(outcome.params.digest()),
            best_params_digest: hex(outcome.best_params.digest()),
        };
        error::write(&self.out.join(REPORT_CSV), train_csv(&summary, &config).as_bytes())?;
        error::write(&self.out.join(LOSS_CURVE), loss_chart(&[&summary]).to_svg().as_bytes())?;
        error::write_json(&self.out.join(TRAIN_SUMMARY), &summary)?;
        Ok(summary)
    }
}

struct CheckpointObserver {
    start: Instant,
    out: PathBuf,
    verbose: bool,
    error: Option<Error>,
}

impl TrainObserver for CheckpointObserver {
    fn elapsed_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, record: &EpochRecord, params: &EmbedderParams, is_best: bool) -> Result<(), String> {
        if self.verbose {
            eprintln!(
                "epoch {:>3}  train {:.4}  val {:.4}  acc {:.3}  {:.0}s{}",
                record.epoch,
                record.train_loss,
                record.val_loss,
                record.val_accuracy,
                record.seconds,
                if is_best { "  *" } else { "" }
            );
        }
        let dir = self.out.join(format!("checkpoints/epoch_{}", record.epoch));
        let mut saved = checkpoint::save(&dir, params, record.epoch);
        if is_best && saved.is_ok() {
            saved = checkpoint::save(&self.out.join("checkpoints/best"), params, record.epoch);
        }
        saved.map(|_| ()).map_err(|e| {
            let msg = e.to_string();
            self.error = Some(e);
            msg
        })
    }
}

pub fn train_csv(summary: &TrainSummary, config: &TrainConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# task={} strategy={} margin={} lr={} batch_size={} steps_per_epoch={} seed={} corpus={}",
        summary.task.name(),
        summary.strategy.label(),
        config.margin,
        config.optimizer.lr,
        config.batch_size,
        config.steps_per_epoch,
        config.seed,
        summary.corpus_digest
    );
    s.push_str("epoch,train_loss,val_loss,val_acc,seconds\n");
    for r in &summary.report.epochs {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.4},{:.1}",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.seconds
        );
    }
    s
}

fn loss_chart(runs: &[&TrainSummary]) -> Chart {
    let mut series = Vec::new();
    for t in runs {
        let tag = format!("{} s{}", t.strategy.label(), t.seed);
        let pts = |f: fn(&EpochRecord) -> f32| t.report.epochs.iter().map(|r| (r.epoch as f64, f(r) as f64)).collect();
        series.push(Series::line(format!("train {tag}"), pts(|r| r.train_loss)));
        series.push(Series::line(format!("val {tag}"), pts(|r| r.val_loss)));
    }
    Chart {
        title: format!("{} triplet loss", runs.first().map_or("", |t| t.task.name())),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        series,
        scatter: false,
    }
}

// ---------------------------------------------------------------- run-task

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTaskSpec {
    pub task: Task,
    /// A checkpoint directory, or a training directory (its best checkpoint is used).
    pub checkpoint: PathBuf,
    /// Floor: goal frame indices. Cup: goal particle counts. Empty means the default sweep.
    pub goals: Vec<u32>,
    /// Objects on the floor or particles in the cup at the start; task default if absent.
    pub initial: Option<u32>,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunTaskSpec {
    pub fn new(task: Task, checkpoint: PathBuf, out: PathBuf) -> Self {
        RunTaskSpec {
            task,
            checkpoint,
            goals: Vec::new(),
            initial: None,
            episodes: match task {
                Task::Floor => 50,
                Task::Cup => 20,
            },
            max_steps: DEFAULT_MAX_STEPS,
            seed: 0,
            out,
        }
    }

    pub fn goal_settings(&self) -> Vec<u32> {
        if !self.goals.is_empty() {
            return self.goals.clone();
        }
        match self.task {
            // Goal counts 0..14 in ascending order.
            Task::Floor => (1..PHASES as u32).rev().collect(),
            Task::Cup => vec![0, 69, 138, 207, 275],
        }
    }

    pub fn initial_state(&self) -> u32 {
        self.initial.unwrap_or(match self.task {
            Task::Floor => FLOOR_OBJECTS as u32,
            Task::Cup => 0,
        })
    }

    fn check(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Usage("--episodes must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Usage("--max-steps must be at least 1".into()));
        }
        for &g in &self.goal_settings() {
            let ok = match self.task {
                Task::Floor => (g as usize) < PHASES,
                Task::Cup => g <= FULL_CUP,
            };
            if !ok {
                return Err(Error::Usage(format!("goal {g} is out of range for the {} task", self.task.name())));
            }
        }
        let init = self.initial_state();
        let ok = match self.task {
            Task::Floor => init as usize <= FLOOR_OBJECTS,
            Task::Cup => init <= FULL_CUP,
        };
        if !ok {
            return Err(Error::Usage(format!("initial state {init} is out of range")));
        }
        Ok(())
    }
}

/// Loads a checkpoint directory or a training directory's best checkpoint.
pub fn load_params(path: &Path) -> Result<EmbedderParams> {
    if path.join(checkpoint::MANIFEST).is_file() {
        checkpoint::load(path)
    } else if path.join("checkpoints/best").join(checkpoint::MANIFEST).is_file() {
        checkpoint::load(&path.join("checkpoints/best"))
    } else {
        Err(Error::NotFound(path.join(checkpoint::MANIFEST)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub goal_setting: u32,
    /// Objects or particles the goal image shows.
    pub goal: u32,
    pub episode: usize,
    pub run_seed: u64,
    pub initial: u32,
    pub final_state: u32,
    pub error: i64,
    pub steps: usize,
    pub status: TerminalStatus,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub goal_setting: u32,
    pub goal: u32,
    pub episodes: usize,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    pub std_error: f64,
    pub two_sigma: f64,
    pub variance: f64,
    pub converged: usize,
    pub median_spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTaskSummary {
    pub task: Task,
    pub initial: u32,
    pub params_digest: String,
    pub rows: Vec<AggregateRow>,
    pub episodes: Vec<EpisodeRow>,
    /// Mean and 2-sigma of distance-to-go per step over the longest setting.
    pub distance_curve: Vec<(usize, f64, f64)>,
}

impl std::fmt::Display for RunTaskSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} task, initial {}", self.task.name(), self.initial)?;
        writeln!(f, "goal  n  mean_err  mean_abs  2sigma  converged  spearman")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>4} {:>3} {:>9.3} {:>9.3} {:>7.3} {:>10} {:>9}",
                r.goal,
                r.episodes,
                r.mean_error,
                r.mean_abs_error,
                r.two_sigma,
                r.converged,
                r.median_spearman.map_or("-".into(), |s| format!("{s:.3}"))
            )?;
        }
        Ok(())
    }
}

pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const TASK_SUMMARY: &str = "run_task.json";
pub const ERROR_BARS: &str = "error_bars.svg";
pub const DISTANCE_PLOT: &str = "distance_to_go.svg";

fn goal_count(task: Task, setting: u32) -> u32 {
    match task {
        Task::Floor => FLOOR_OBJECTS as u32 - setting,
        Task::Cup => setting,
    }
}

fn setting_label(task: Task, setting: u32) -> String {
    match task {
        Task::Floor => format!("goal_count_{}", goal_count(task, setting)),
        Task::Cup => format!("goal_particles_{setting}"),
    }
}

pub fn episode_seed(global: u64, setting: u32, episode: usize) -> u64 {
    seed::derive(seed::derive(global, "setting", setting as u64), "episode", episode as u64)
}

/// Runs one episode of the spec's task.
pub fn run_single(spec: &RunTaskSpec, params: &EmbedderParams, setting: u32, episode: usize) -> Result<EpisodeTrace> {
    let run_seed = episode_seed(spec.seed, setting, episode);
    let config = EpisodeConfig {
        max_steps: spec.max_steps,
        observation_seed: seed::derive(run_seed, "observation", 0),
        image_size: params.config.input_size,
    };
    let initial = spec.initial_state();
    Ok(match spec.task {
        Task::Floor => {
            let t = cleaning_task(params, run_seed, setting as usize, initial, config.image_size)?;
            run_cleaning_episode(params, &t.policy, t.initial, t.goal_count, &config)?
        }
        Task::Cup => {
            let t = pouring_task(params, run_seed, setting, initial, config.image_size)?;
            run_pouring_episode(params, &t.policy, t.initial, t.setup.robot_view(), t.goal_particles, &config)?
        }
    })
}

pub fn trace_jsonl(trace: &EpisodeTrace) -> String {
    let mut s = String::new();
    for step in &trace.steps {
        s.push_str(&serde_json::to_string(step).expect("serializable step"));
        s.push('\n');
    }
    s
}

fn trace_spearman(trace: &EpisodeTrace) -> Option<f64> {
    let d: Vec<f64> = trace.steps.iter().map(|s| s.distance_to_goal as f64).collect();
    let x: Vec<f64> = (0..d.len()).map(|i| i as f64).collect();
    spearman(&x, &d)
}

impl RunTaskSpec {
    pub fn run(&self) -> Result<RunTaskSummary> {
        self.check()?;
        let params = load_params(&self.checkpoint)?;
        save_spec(&self.out, ExperimentSpec::RunTask(self.clone()))?;
        let settings = self.goal_settings();
        let jobs: Vec<(u32, usize)> = settings
            .iter()
            .flat_map(|&g| (0..self.episodes).map(move |k| (g, k)))
            .collect();
        let traces = pool::try_map(jobs.len(), pool::workers(), |i| {
            let (g, k) = jobs[i];
            let trace = run_single(self, &params, g, k)?;
            let rel = format!("traces/{}/episode_{k}.jsonl", setting_label(self.task, g));
            error::write(&self.out.join(rel), trace_jsonl(&trace).as_bytes())?;
            Ok::<_, Error>(trace)
        })?;
        let mut episodes = Vec::new();
        for (&(g, k), t) in jobs.iter().zip(&traces) {
            episodes.push(EpisodeRow {
                goal_setting: g,
                goal: t.goal_ground_truth,
                episode: k,
                run_seed: episode_seed(self.seed, g, k),
                initial: t.initial_ground_truth,
                final_state: t.final_ground_truth,
                error: t.error(),
                steps: t.steps.len(),
                status: t.status,
                spearman: trace_spearman(t),
            });
        }
        let mut rows = Vec::new();
        for &g in &settings {
            let eps: Vec<&EpisodeRow> = episodes.iter().filter(|e| e.goal_setting == g).collect();
            let errs: Vec<f64> = eps.iter().map(|e| e.error as f64).collect();
            let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
            let s = Summary::of(&errs);
            let rho: Vec<f64> = eps.iter().filter_map(|e| e.spearman).collect();
            rows.push(AggregateRow {
                goal_setting: g,
                goal: goal_count(self.task, g),
                episodes: eps.len(),
                mean_error: s.mean,
                mean_abs_error: Summary::of(&abs).mean,
                std_error: s.std,
                two_sigma: s.two_sigma(),
                variance: s.variance(),
                converged: eps.iter().filter(|e| e.status == TerminalStatus::ConvergedHold).count(),
                median_spearman: (!rho.is_empty()).then(|| median(&rho)),
            });
        }
        // Distance history over the setting farthest from the start state.
        let init = self.initial_state();
        let far = settings
            .iter()
            .copied()
            .max_by_key(|&g| (goal_count(self.task, g) as i64 - init as i64).abs())
            .expect("at least one goal");
        let far_traces: Vec<Vec<f64>> = jobs
            .iter()
            .zip(&traces)
            .filter(|((g, _), _)| *g == far)
            .map(|(_, t)| {
distance_to_go(t, &t.goal_embedding).into_iter().map(|d| d as f64).collect()
            })
            .collect();
        let longest = far_traces.iter().map(Vec::len).max().unwrap_or(0);
        let distance_curve = (0..longest)
            .map(|i| {
                let vals: Vec<f64> = far_traces.iter().filter_map(|d| d.get(i).copied()).collect();
                let s = Summary::of(&vals);
                (i, s.mean, s.two_sigma())
            })
            .collect();
        let summary = RunTaskSummary {
            task: self.task,
            initial: init,
            params_digest: hex(params.digest()),
            rows,
            episodes,
            distance_curve,
        };
        error::write(&self.out.join(EPISODES_CSV), episodes_csv(&summary).as_bytes())?;
        error::write(&self.out.join(AGGREGATE_CSV), aggregate_csv(&summary).as_bytes())?;
        error::write(&self.out.join(ERROR_BARS), error_chart(&[&summary]).to_svg().as_bytes())?;
        error::write(&self.out.join(DISTANCE_PLOT), distance_chart(&summary).to_svg().as_bytes())?;
        error::write_json(&self.out.join(TASK_SUMMARY), &summary)?;
        Ok(summary)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.4}"))
}

fn status_name(s: TerminalStatus) -> &'static str {
    match s {
        TerminalStatus::ConvergedHold => "converged_hold",
        TerminalStatus::MaxSteps => "max_steps",
        TerminalStatus::ActionError => "action_error",
    }
}

pub fn episodes_csv(summary: &RunTaskSummary) -> String {
    let mut s = String::from("goal_setting,goal,episode,run_seed,initial,final,error,steps,status,spearman\n");
    for e in &summary.episodes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            e.goal_setting,
            e.goal,
            e.episode,
            e.run_seed,
            e.initial,
            e.final_state,
            e.error,
            e.steps,
            status_name(e.status),
            fmt_opt(e.spearman)
        );
    }
    s
}

pub fn aggregate_csv(summary: &RunTaskSummary) -> String {
    let mut s = format!("# task={} initial={}\n", summary.task.name(), summary.initial);
    s.push_str("goal,episodes,mean_error,mean_abs_error,std_error,two_sigma,variance,converged,median_spearman\n");
    for r in &summary.rows {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}",
            r.goal,
            r.episodes,
            r.mean_error,
            r.mean_abs_error,
            r.std_error,
            r.two_sigma,
            r.variance,
            r.converged,
            fmt_opt(r.median_spearman)
        );
    }
    s
}

fn error_chart(runs: &[&RunTaskSummary]) -> Chart {
    let task = runs.first().map_or(Task::Floor, |r| r.task);
    let series = runs
        .iter()
        .map(|r| {
            let mut rows: Vec<&AggregateRow> = r.rows.iter().collect();
            rows.sort_by_key(|x| x.goal);
            Series::with_errors(
                format!("initial {}", r.initial),
                rows.iter().map(|x| (x.goal as f64, x.mean_error)).collect(),
                rows.iter().map(|x| x.two_sigma).collect(),
            )
        })
        .collect();
    let (title, x) = match task {
        Task::Floor => ("cleaning error (mean, 2 sigma)", "goal object count"),
        Task::Cup => ("pouring error (mean, 2 sigma)", "goal particles"),
    };
    Chart {
        title: title.into(),
        x_label: x.into(),
        y_label: "final - goal".into(),
        series,
        scatter: true,
    }
}

fn distance_chart(summary: &RunTaskSummary) -> Chart {
    Chart {
        title: format!("{} distance to go (mean, 2 sigma)", summary.task.name()),
        x_label: "step".into(),
        y_label: "embedding distance".into(),
        series: vec![Series::with_errors(
            "distance",
            summary.distance_curve.iter().map(|&(i, m, _)| (i as f64, m)).collect(),
            summary.distance_curve.iter().map(|&(_, _, e)| e).collect(),
        )],
        scatter: false,
    }
}

// ---------------------------------------------------------------- report

pub const REPORT_HTML: &str = "report.html";

fn find_specs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_specs(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == SPEC_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Collects every training and task run under `dir` into `dir/report.html`.
/// Returns the file's CRC-64.
pub fn write_report(dir: &Path) -> Result<u64> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut specs = Vec::new();
    find_specs(dir, &mut specs)?;
    let mut trains: Vec<(PathBuf, TrainSummary)> = Vec::new();
    let mut tasks: Vec<(PathBuf, RunTaskSummary)> = Vec::new();
    for spec in specs {
        let d = spec.parent().expect("file has a parent").to_path_buf();
        if d.join(TRAIN_SUMMARY).is_file() {
            let t: TrainSummary = error::read_json(&d.join(TRAIN_SUMMARY))?;
            trains.push((d, t));
        } else if d.join(TASK_SUMMARY).is_file() {
            let t: RunTaskSummary = error::read_json(&d.join(TASK_SUMMARY))?;
            tasks.push((d, t));
        }
    }
    if trains.is_empty() && tasks.is_empty() {
        return Err(Error::NoExperiments(dir.to_path_buf()));
    }
    let mut h = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>phasekit report</title>\n\
<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}table{border-collapse:collapse;margin:1em 0}\
td,th{border:1px solid #ccc;padding:2px 8px;text-align:right}th{background:#f4f4f4}</style></head><body>\n\
<h1>phasekit report</h1>\n",
    );
    for task in [Task::Floor, Task::Cup] {
        let tr: Vec<&(PathBuf, TrainSummary)> = trains.iter().filter(|(_, t)| t.task == task).collect();
        let tk: Vec<&(PathBuf, RunTaskSummary)> = tasks.iter().filter(|(_, t)| t.task == task).collect();
        if tr.is_empty() && tk.is_empty() {
            continue;
        }
        let _ = writeln!(h, "<h2>{} task</h2>", task.name());
        if !tr.is_empty() {
            h.push_str("<h3>Training</h3>\n<table><tr><th>run</th><th>strategy</th><th>seed</th><th>epochs</th>\
<th>epoch-1 val loss</th><th>final val loss</th><th>ratio</th><th>final val acc</th><th>best epoch</th><th>seconds</th></tr>\n");
            for (d, t) in &tr {
                let first = &t.report.epochs[0];
                let last = t.report.last().expect("epochs");
                let _ = writeln!(
                    h,
                    "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.4}</td><td>{:.4}</td><td>{:.3}</td><td>{:.3}</td><td>{}</td><td>{:.0}</td></tr>",
                    rel(dir, d),
                    t.strategy.label(),
                    t.seed,
                    t.report.epochs.len(),
                    first.val_loss,
                    last.val_loss,
                    last.val_loss / first.val_loss,
                    last.val_accuracy,
                    t.report.best_epoch,
                    last.seconds
                );
            }
            h.push_str("</table>\n");
            let refs: Vec<&TrainSummary> = tr.iter().map(|(_, t)| t).collect();
            let _ = writeln!(h, "<figure class=\"loss-curve\">{}</figure>", loss_chart(&refs).to_svg());
        }
        if !tk.is_empty() {
            h.push_str("<h3>Task episodes</h3>\n");
            for (d, t) in &tk {
                let _ = writeln!(
                    h,
                    "<p>{} (initial {}, params {})</p>\n<table><tr><th>goal</th><th>episodes</th><th>mean error</th>\
<th>mean |error|</th><th>2 sigma</th><th>converged</th><th>median spearman</th></tr>",
                    rel(dir, d),
                    t.initial,
                    t.params_digest
                );
                for r in &t.rows {
                    let _ = writeln!(
                        h,
                        "<tr><td>{}</td><td>{}</td><td>{:.3}</td><td>{:.3}</td><td>{:.3}</td><td>{}</td><td>{}</td></tr>",
                        r.goal,
                        r.episodes,
                        r.mean_error,
                        r.mean_abs_error,
                        r.two_sigma,
                        r.converged,
                        r.median_spearman.map_or("-".into(), |v| format!("{v:.3}"))
                    );
                }
                h.push_str("</table>\n");
            }
            let refs: Vec<&RunTaskSummary> = tk.iter().map(|(_, t)| t).collect();
            let _ = writeln!(h, "<figure class=\"error-bars\">{}</figure>", error_chart(&refs).to_svg());
            let _ = writeln!(h, "<figure class=\"distance\">{}</figure>", distance_chart(refs[0]).to_svg());
        }
    }
    h.push_str("</body></html>\n");
    error::write(&dir.join(REPORT_HTML), h.as_bytes())?;
    Ok(crc64(h.as_bytes()))
}
