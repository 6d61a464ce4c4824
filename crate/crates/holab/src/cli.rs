//! Command-line entry point: `holab gen|baseline|train|eval|compare`.
//!
//! Every subcommand is deterministic given `--seed` (fallback: the
//! `HOLAB_SEED` environment variable, then 0) and its inputs. Exit codes:
//! 0 success, 1 runtime failure, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evalkit::{
    compare, evaluate_agent, evaluate_baseline, render_table, EvalReport, Policy,
};
use crate::neural::Mlp;
use crate::ppo::{train_resumable, Checkpoint, EpochMetric, TrainConfig};
use crate::protocol::{run_baseline, write_event_log, ProtocolConfig};
use crate::rng::{child_seed, seeded};
use crate::tracegen::{
    build_dataset, read_trace, write_trace, RadioMap, RadioTrace, RouteSpec, Split,
};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "holab",
    version,
    about = "Handover optimization laboratory: 5G NR baseline vs. learned handover policies"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic radio traces per speed with a train/test split.
    Gen(GenArgs),
    /// Run the standard-compliant baseline over traces and write a report.
    Baseline(BaselineArgs),
    /// Train the PPO agent on the train split.
    Train(TrainArgs),
    /// Evaluate a trained agent (and optionally the baseline) on traces.
    Eval(EvalArgs),
    /// Compare baseline and agent report files per speed.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// TOML generation config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (one subdirectory per speed).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads across traces; keep 1 for bitwise-stable file order.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    /// Trace directories (e.g. one per speed).
    #[arg(long, required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
    /// Output report path (JSON array of per-trace reports).
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-trace event logs (JSON lines); omitted = no logs.
    #[arg(long)]
    events_dir: Option<PathBuf>,
    /// TOML protocol config override.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Which split to evaluate.
    #[arg(long, value_enum, default_value_t = SplitFilter::All)]
    split: SplitFilter,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory holding the training traces (train split).
    #[arg(long)]
    traces: PathBuf,
    /// Output directory for checkpoints and metrics.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML training config override.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved schedule and exit without training.
    #[arg(long)]
    dry_run: bool,
    /// Continue from the last per-iteration checkpoint in --out.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
    /// Trained checkpoint (required unless --policy baseline).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyArg::Agent)]
    policy: PolicyArg,
    /// TOML protocol config override.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitFilter::Test)]
    split: SplitFilter,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Baseline report JSON (from `holab baseline` or `holab eval`).
    #[arg(long)]
    baseline: PathBuf,
    /// Agent report JSON.
    #[arg(long)]
    agent: PathBuf,
    /// Output comparison JSON; the table is printed to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SplitFilter {
    Train,
    Test,
    All,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PolicyArg {
    Agent,
    Baseline,
    Both,
}

/// Parses arguments from the process environment, runs the subcommand and
/// maps errors to exit codes (configuration errors exit 2, runtime 1).
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

/// `--seed`, else `HOLAB_SEED`, else 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("HOLAB_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("HOLAB_SEED is not an integer: {v}"))),
        Err(_) => Ok(0),
    }
}

/// Strict TOML loading: unknown keys are configuration errors.
fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => load_toml(p),
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invalid(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs `f` over the items on up to `jobs` threads, preserving input order.
fn par_map<T, U, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<U>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker finished"))
        .collect()
}

// ---------------------------------------------------------------------------
// gen

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub map: RadioMap,
    pub speeds_kmh: Vec<f64>,
    pub n_routes: usize,
    /// First `n_train` routes form the train split, the rest the test split.
    pub n_train: usize,
    pub duration_s: f64,
    pub waypoints_per_route: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            map: RadioMap::default(),
            speeds_kmh: vec![3.0, 30.0, 50.0],
            n_routes: 15,
            n_train: 10,
            duration_s: 180.0,
            waypoints_per_route: 30,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        if self.speeds_kmh.is_empty() || self.speeds_kmh.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("speeds_kmh must be non-empty and positive".into()));
        }
        if self.n_routes == 0 || self.n_train >= self.n_routes {
            return Err(Error::Config(
                "need n_routes > n_train > 0 routes for a train/test split".into(),
            ));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration_s must be > 0".into()));
        }
        if self.waypoints_per_route < 2 {
            return Err(Error::Config("waypoints_per_route must be >= 2".into()));
        }
        Ok(())
    }
}

/// Random-walk waypoint polylines inside the map bounds, shared by all
/// speeds so the route geometry is identical across the speed set.
pub fn route_geometries(cfg: &GenConfig, seed: u64) -> Vec<Vec<[f64; 2]>> {
    let b = cfg.map.bounds;
    let margin = 0.05 * (b[2] - b[0]).min(b[3] - b[1]);
    let (lo_x, lo_y) = (b[0] + margin, b[1] + margin);
    let (hi_x, hi_y) = (b[2] - margin, b[3] - margin);
    (0..cfg.n_routes)
        .map(|i| {
            let mut rng = seeded(seed, &format!("route-geometry-{i}"));
            let mut p = [rng.gen_range(lo_x..hi_x), rng.gen_range(lo_y..hi_y)];
            let mut waypoints = vec![p];
            for _ in 1..cfg.waypoints_per_route {
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let len = rng.gen_range(150.0..450.0);
                p = [
                    (p[0] + len * angle.cos()).clamp(lo_x, hi_x),
                    (p[1] + len * angle.sin()).clamp(lo_y, hi_y),
                ];
                waypoints.push(p);
            }
            waypoints
        })
        .collect()
}

fn speed_dir_name(speed: f64) -> String {
    format!("speed-{speed}")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub id: String,
    pub speed_kmh: f64,
    pub split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_routes: usize,
    pub n_train: usize,
    pub speeds_kmh: Vec<f64>,
    pub traces: Vec<ManifestEntry>,
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg: GenConfig = load_or_default(&args.config)?;
    cfg.validate()?;
    let seed = resolve_seed(args.seed)?;
    let geometries = route_geometries(&cfg, seed);

    std::fs::create_dir_all(&args.out)?;
    let mut manifest = Manifest {
        seed,
        n_routes: cfg.n_routes,
        n_train: cfg.n_train,
        speeds_kmh: cfg.speeds_kmh.clone(),
        traces: Vec::new(),
    };
    for &speed in &cfg.speeds_kmh {
        let dir = args.out.join(speed_dir_name(speed));
        std::fs::create_dir_all(&dir)?;
        let routes: Vec<RouteSpec> = geometries
            .iter()
            .enumerate()
            .map(|(i, wp)| RouteSpec {
                waypoints: wp.clone(),
                speed_kmh: speed,
                duration_s: cfg.duration_s,
                seed: child_seed(seed, &format!("route-{i}-speed-{speed}")),
            })
            .collect();
        let dataset = par_map(args.jobs, &routes, |route| {
            Ok(build_dataset(&cfg.map, std::slice::from_ref(route), 1)?
                .pop()
                .expect("one route in, one trace out")
                .0)
        })?;
        for (i, trace) in dataset.iter().enumerate() {
            let split = if i < cfg.n_train { Split::Train } else { Split::Test };
            let path = dir.join(format!("{}.csv", trace.id));
            write_trace(&path, trace, Some(split))?;
            manifest.traces.push(ManifestEntry {
                path: path
                    .strip_prefix(&args.out)
                    .unwrap_or(&path)
                    .display()
                    .to_string(),
                id: trace.id.clone(),
                speed_kmh: speed,
                split,
            });
        }
    }
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} traces over {} speeds to {}",
        manifest.traces.len(),
        cfg.speeds_kmh.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// trace loading

/// All trace CSVs in the given directories (sorted per directory) whose
/// split passes the filter.
pub fn load_traces(dirs: &[PathBuf], filter: SplitFilterKind) -> Result<Vec<RadioTrace>> {
    let mut out = Vec::new();
    for dir in dirs {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            let (trace, split) = read_trace(&path)?;
            let keep = match filter {
                SplitFilterKind::Train => split == Some(Split::Train),
                SplitFilterKind::Test => split == Some(Split::Test),
                SplitFilterKind::All => true,
            };
            if keep {
                out.push(trace);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!(
            "no matching traces under {:?}",
            dirs.iter().map(|d| d.display().to_string()).collect::<Vec<_>>()
        )));
    }
    Ok(out)
}

/// Split selection for [`load_traces`] (library-facing mirror of the CLI
/// `--split` flag).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilterKind {
    Train,
    Test,
    All,
}

impl From<SplitFilter> for SplitFilterKind {
    fn from(f: SplitFilter) -> Self {
        match f {
            SplitFilter::Train => SplitFilterKind::Train,
            SplitFilter::Test => SplitFilterKind::Test,
            SplitFilter::All => SplitFilterKind::All,
        }
    }
}

// ---------------------------------------------------------------------------
// baseline

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let cfg: ProtocolConfig = load_or_default(&args.config)?;
    cfg.validate()?;
    let traces = load_traces(&args.traces, args.split.into())?;
    if let Some(dir) = &args.events_dir {
        std::fs::create_dir_all(dir)?;
    }
    let reports = par_map(args.jobs, &traces, |trace| {
        let report = evaluate_baseline(trace, &cfg)?;
        if let Some(dir) = &args.events_dir {
            let run = run_baseline(trace, &cfg)?;
            let name = format!("{}-{}.events.jsonl", trace.id, trace.speed_kmh);
            write_event_log(&dir.join(name), &run.events)?;
        }
        Ok(report)
    })?;
    write_json(&args.out, &reports)?;
    println!("baseline: {} traces -> {}", reports.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

pub fn checkpoint_path(out: &Path, iteration: usize) -> PathBuf {
    out.join(format!("checkpoint_iter{iteration}.json"))
}

pub fn metrics_path(out: &Path) -> PathBuf {
    out.join("metrics.csv")
}

const METRICS_HEADER: &str =
    "iteration,epoch,lr,trace_index,mean_reward,episodes_terminated,mean_loss";

fn metric_line(m: &EpochMetric) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        m.iteration, m.epoch, m.lr, m.trace_index, m.mean_reward, m.episodes_terminated, m.mean_loss
    )
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetric>> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(Error::parse(display, 1, "unexpected metrics header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(display, i + 1, "expected 7 columns"));
        }
        let bad = |msg: &str| Error::parse(display.clone(), i + 1, msg);
        out.push(EpochMetric {
            iteration: fields[0].parse().map_err(|_| bad("bad iteration"))?,
            epoch: fields[1].parse().map_err(|_| bad("bad epoch"))?,
            lr: fields[2].parse().map_err(|_| bad("bad lr"))?,
            trace_index: fields[3].parse().map_err(|_| bad("bad trace_index"))?,
            mean_reward: fields[4].parse().map_err(|_| bad("bad mean_reward"))?,
            episodes_terminated: fields[5].parse().map_err(|_| bad("bad episodes_terminated"))?,
            mean_loss: fields[6].parse().map_err(|_| bad("bad mean_loss"))?,
        });
    }
    Ok(out)
}

fn latest_checkpoint(out: &Path, n_iterations: usize) -> Result<Option<(usize, Checkpoint)>> {
    for it in (0..n_iterations).rev() {
        let path = checkpoint_path(out, it);
        if path.exists() {
            let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))?;
            return Ok(Some((it, ck)));
        }
    }
    Ok(None)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg: TrainConfig = load_or_default(&args.config)?;
    cfg.ppo.validate()?;
    let seed = resolve_seed(args.seed)?;

    if args.dry_run {
        println!("seed: {seed}");
        println!("rollout m = {}, epochs per rollout = {}", cfg.ppo.rollout_len, cfg.ppo.epochs_per_rollout);
        for (i, it) in cfg.ppo.schedule.iter().enumerate() {
            println!(
                "iteration {i}: (lr {:e}, {} epochs), batch {}, dataset {:?}, reset_on_pp {}",
                it.lr_start, it.epochs, it.batch_size, it.dataset_mode, it.reset_on_pp
            );
        }
        return Ok(());
    }

    let traces = load_traces(std::slice::from_ref(&args.traces), SplitFilterKind::Train)?;
    std::fs::create_dir_all(&args.out)?;

    let (start_iteration, resume_from, mut kept_metrics) = if args.resume {
        match latest_checkpoint(&args.out, cfg.ppo.schedule.len())? {
            Some((it, ck)) => {
                let kept = match read_metrics(&metrics_path(&args.out)) {
                    Ok(rows) => rows.into_iter().filter(|m| m.iteration <= it).collect(),
                    Err(_) => Vec::new(),
                };
                println!("resuming after iteration {it}");
                (it + 1, Some(ck), kept)
            }
            None => (0, None, Vec::new()),
        }
    } else {
        (0, None, Vec::new())
    };
    if start_iteration >= cfg.ppo.schedule.len() {
        println!("nothing to do: all {} iterations already completed", cfg.ppo.schedule.len());
        return Ok(());
    }

    // Metrics are rewritten up front (kept rows from a resumed run) and
    // appended per epoch so an interrupt loses at most one epoch row.
    let metrics_file = metrics_path(&args.out);
    {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&metrics_file)?);
        writeln!(f, "{METRICS_HEADER}")?;
        for m in &kept_metrics {
            writeln!(f, "{}", metric_line(m))?;
        }
    }
    let append_metric = |m: &EpochMetric| -> std::io::Result<()> {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(&metrics_file)?;
        writeln!(f, "{}", metric_line(m))
    };

    let mut io_error: Option<std::io::Error> = None;
    let run = train_resumable(&traces, &cfg, seed, start_iteration, resume_from, &mut |m| {
        if io_error.is_none() {
            if let Err(e) = append_metric(m) {
                io_error = Some(e);
            }
        }
        if m.epoch % 50 == 0 {
            println!(
                "iteration {} epoch {}: lr {:.3e}, mean reward {:.4}, terminations {}",
                m.iteration, m.epoch, m.lr, m.mean_reward, m.episodes_terminated
            );
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    kept_metrics.extend(run.metrics.iter().cloned());

    for ck in &run.checkpoints {
        if ck.iteration >= start_iteration {
            write_json(&checkpoint_path(&args.out, ck.iteration), ck)?;
        }
    }
    println!(
        "training complete: {} epochs, checkpoints in {}",
        kept_metrics.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval / compare

pub fn load_actor(path: &Path) -> Result<Mlp<f64>> {
    let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))?;
    Ok(ck.actor)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg: ProtocolConfig = load_or_default(&args.config)?;
    cfg.validate()?;
    let traces = load_traces(&args.traces, args.split.into())?;

    let actor = match args.policy {
        PolicyArg::Baseline => None,
        _ => {
            let path = args.checkpoint.as_ref().ok_or_else(|| {
                Error::Config("--checkpoint is required unless --policy baseline".into())
            })?;
            Some(load_actor(path)?)
        }
    };

    let mut reports: Vec<EvalReport> = Vec::new();
    if matches!(args.policy, PolicyArg::Baseline | PolicyArg::Both) {
        reports.extend(par_map(args.jobs, &traces, |t| evaluate_baseline(t, &cfg))?);
    }
    if let Some(actor) = &actor {
        reports.extend(par_map(args.jobs, &traces, |t| evaluate_agent(t, &cfg, actor))?);
    }
    write_json(&args.out, &reports)?;
    println!("eval: {} report rows -> {}", reports.len(), args.out.display());
    Ok(())
}

fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let baseline: Vec<EvalReport> = read_reports(&args.baseline)?
        .into_iter()
        .filter(|r| r.policy == Policy::Baseline)
        .collect();
    let agent: Vec<EvalReport> = read_reports(&args.agent)?
        .into_iter()
        .filter(|r| r.policy == Policy::Agent)
        .collect();
    let rows = compare(&baseline, &agent)?;
    print!("{}", render_table(&rows));
    if let Some(out) = &args.out {
        write_json(out, &rows)?;
    }
    Ok(())
}
