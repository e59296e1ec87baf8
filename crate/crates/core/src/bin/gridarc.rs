use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridarc::batch::{replay_lane, rollout_keys, BatchEngine, RandomPolicy};
use gridarc::bench::{
    emit_csv, emit_json, emit_speedup_table, read_throughput_csv, run_sweep, EnvTarget,
    MonotonicClock, ThroughputRow,
};
use gridarc::config::{data_root, identifier_config, load_config, make_from_config, AnyEnv, RunConfig};
use gridarc::environment::Environment;
use gridarc::fetch::{fetch_dataset, FetchOptions, SourceTable};
use gridarc::grid::PaddedGrid;
use gridarc::render::{self, Format, RenderMode, RenderSpec};
use gridarc::task::{parser_by_name, DatasetIndex};

#[derive(Parser)]
#[command(name = "gridarc", version, about = "Batched ARC puzzle environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every task file in a dataset directory and list failures.
    Validate {
        dir: PathBuf,
        #[arg(long, default_value = "arc-json")]
        parser: String,
        /// Largest accepted grid side.
        #[arg(long, default_value_t = 30)]
        max_side: usize,
    },
    /// Run a random policy and write one JSON line per lane step.
    Rollout {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        lanes: usize,
        #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
        policy: PolicyKind,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Throughput sweep over batch sizes.
    Bench {
        #[command(flatten)]
        target: Target,
        /// Comma-separated batch sizes; defaults to the config's sweep.
        #[arg(long, value_delimiter = ',')]
        batch_sizes: Option<Vec<usize>>,
        /// Sweep 2^0 through 2^20.
        #[arg(long)]
        full_sweep: bool,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        memory_budget: Option<u64>,
        #[arg(long)]
        json: bool,
        /// CSV of comparison throughputs; prints a speedup table.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Label for this run in the speedup table.
        #[arg(long, default_value = "batched")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a task or one transition of a seeded rollout.
    Render {
        #[command(subcommand)]
        what: RenderCommand,
    },
    /// Download and unpack a dataset.
    Fetch {
        name: String,
        /// Destination directory; defaults to the data root.
        #[arg(long)]
        dest: Option<PathBuf>,
        /// Source table replacing the built-in one.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Expected archive digest (hex).
        #[arg(long)]
        sha256: Option<String>,
        /// Accept an archive with no digest to check.
        #[arg(long)]
        allow_unpinned: bool,
    },
}

#[derive(Subcommand)]
enum RenderCommand {
    /// A task from the configured dataset.
    Task {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value_t = TaskView::CompleteTask)]
        view: TaskView,
        /// Demonstration pair for the pair and single views.
        #[arg(long, default_value_t = 0)]
        pair: usize,
        #[command(flatten)]
        output: RenderOutput,
    },
    /// Transition `step` of lane `lane` in the seeded random rollout.
    Step {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 0)]
        lane: usize,
        #[arg(long)]
        step: usize,
        #[command(flatten)]
        output: RenderOutput,
    },
}

#[derive(Args)]
struct Target {
    /// Config file (.yaml/.yml/.json) or identifier such as `Mini` or
    /// `Mini-<task_id>`.
    #[arg(long, short)]
    config: String,
    /// `key.path=value` override, repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RenderOutput {
    #[arg(long, value_enum, default_value_t = OutFormat::Svg)]
    format: OutFormat,
    #[arg(long, default_value_t = 20)]
    cell_px: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskView {
    CompleteTask,
    Pair,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Svg,
    Ansi,
    Ascii,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Svg => Format::Svg,
            OutFormat::Ansi => Format::Ansi,
            OutFormat::Ascii => Format::Ascii,
        }
    }
}

type Fallible<T> = Result<T, Box<dyn std::error::Error>>;

fn resolve(target: &Target) -> Fallible<RunConfig> {
    let p = Path::new(&target.config);
    let is_file = matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml" | "json"));
    let mut cfg = if is_file {
        load_config(p, &target.overrides)?
    } else {
        let base = identifier_config(&target.config, &data_root())?;
        if target.overrides.is_empty() {
            base
        } else {
            let mut tree = serde_json::to_value(&base)?;
            for o in &target.overrides {
                gridarc::config::apply_override(&mut tree, o)?;
            }
            gridarc::config::from_tree(tree)?
        }
    };
    if let Some(seed) = target.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Fallible<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn engine(workers: Option<usize>) -> Fallible<BatchEngine> {
    Ok(match workers {
        Some(w) => BatchEngine::new(w)?,
        None => BatchEngine::with_available_parallelism()?,
    })
}

fn validate(dir: &Path, parser: &str, max_side: usize) -> Fallible<bool> {
    let parser = parser_by_name(parser, max_side, max_side)?;
    let report = gridarc::task::validate_directory(dir, parser.as_ref())?;
    for (path, err) in &report.failures {
        println!("FAIL {}: {err}", path.display());
    }
    println!("{} parsed, {} failed", report.parsed, report.failures.len());
    Ok(report.is_clean())
}

fn rollout_env<const R: usize, const C: usize>(
    env: &Environment<R, C>,
    seed: u64,
    lanes: usize,
    steps: usize,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Fallible<()> {
    let engine = engine(workers)?;
    let (keys, policy_key) = rollout_keys(seed, lanes);
    let (mut state, ts) = engine.batch_reset(&keys, env);
    let mut obs = ts.into_iter().map(|t| t.observation).collect();
    let policy = RandomPolicy::new(env.action_spec().clone());
    let (summary, records) =
        engine.rollout(&mut state, &mut obs, &policy, policy_key, steps, env, env.auto_reset(), true);
    let mut jsonl = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut jsonl, r)?;
        jsonl.push(b'\n');
    }
    match out {
        Some(p) => std::fs::write(p, &jsonl)?,
        None => std::io::stdout().write_all(&jsonl)?,
    }
    let report = serde_json::json!({
        "lanes": lanes,
        "total_steps": summary.total_steps,
        "episodes": summary.episodes(),
        "successes": summary.successes(),
        "reward_sum": summary.reward_sum(),
    });
    eprintln!("{report}");
    Ok(())
}

fn bench_env<const R: usize, const C: usize>(
    env: Environment<R, C>,
    cfg: &gridarc::bench::BenchConfig,
) -> Fallible<Vec<gridarc::bench::BenchRecord>> {
    let mut target = EnvTarget::new(env, engine(cfg.workers)?, cfg.seed, cfg.memory_budget_bytes);
    Ok(run_sweep(cfg, &mut target, &MonotonicClock::new())?)
}

fn render_step_env<const R: usize, const C: usize>(
    env: &Environment<R, C>,
    seed: u64,
    lane: usize,
    step: usize,
    output: &RenderOutput,
) -> String {
    let policy = RandomPolicy::new(env.action_spec().clone());
    let rs = replay_lane(env, &policy, seed, lane, step, env.auto_reset());
    let spec = RenderSpec::<R, C>::new(RenderMode::RlStep).with_cell_px(output.cell_px);
    render::render_rl_step(&rs.before, &rs.action, &rs.after, rs.timestep.reward, &spec, output.format.into())
}

fn run(cli: Cli) -> Fallible<bool> {
    match cli.command {
        Command::Validate { dir, parser, max_side } => validate(&dir, &parser, max_side),
        Command::Rollout { target, steps, lanes, policy: PolicyKind::Random, out, workers } => {
            let cfg = resolve(&target)?;
            match make_from_config(&cfg)? {
                AnyEnv::Full(e) => rollout_env(&e, cfg.seed, lanes, steps, workers, out.as_deref())?,
                AnyEnv::Mini(e) => rollout_env(&e, cfg.seed, lanes, steps, workers, out.as_deref())?,
            }
            Ok(true)
        }
        Command::Bench {
            target,
            batch_sizes,
            full_sweep,
            steps,
            repeats,
            warmup,
            workers,
            memory_budget,
            json,
            baseline,
            mode,
            out,
        } => {
            let cfg = resolve(&target)?;
            let mut bench = cfg.bench.clone();
            if full_sweep {
                bench.batch_sizes = gridarc::bench::BenchConfig::full_sweep().batch_sizes;
            }
            if let Some(b) = batch_sizes {
                bench.batch_sizes = b;
            }
            bench.steps_per_env = steps.unwrap_or(bench.steps_per_env);
            bench.repeats = repeats.unwrap_or(bench.repeats);
            bench.warmup_runs = warmup.unwrap_or(bench.warmup_runs);
            bench.workers = workers.or(bench.workers);
            bench.memory_budget_bytes = memory_budget.or(bench.memory_budget_bytes);
            if target.seed.is_some() {
                bench.seed = cfg.seed;
            }
            let records = match make_from_config(&cfg)? {
                AnyEnv::Full(e) => bench_env(e, &bench)?,
                AnyEnv::Mini(e) => bench_env(e, &bench)?,
            };
            let mut bytes = if json { emit_json(&records).into_bytes() } else { emit_csv(&records) };
            if json {
                bytes.push(b'\n');
            }
            write_out(out.as_deref(), &bytes)?;
            if let Some(path) = baseline {
                let base = read_throughput_csv(&std::fs::read(path)?)?;
                let ours: Vec<ThroughputRow> =
                    records.iter().map(|r| ThroughputRow::from_record(r, &mode)).collect();
                println!("{}", emit_speedup_table(&ours, &base));
            }
            Ok(true)
        }
        Command::Render { what: RenderCommand::Task { target, task, view, pair, output } } => {
            let cfg = resolve(&target)?;
            let (rows, cols) = cfg.env.capacity.dims();
            let index = DatasetIndex::open(&cfg.dataset, rows, cols)?;
            let i = index
                .ids()
                .position(|id| id == task)
                .ok_or_else(|| format!("task \"{task}\" not in dataset"))?;
            let raw = index.load(i)?;
            let format: Format = output.format.into();
            let text = match view {
                TaskView::CompleteTask => {
                    let spec = RenderSpec::<30, 30>::new(RenderMode::CompleteTask).with_cell_px(output.cell_px);
                    render::render_complete_task(&raw, &spec, format)
                }
                TaskView::Pair | TaskView::Single => {
                    let p = raw.train.get(pair).ok_or_else(|| format!("task has no demonstration pair {pair}"))?;
                    let input = PaddedGrid::<30, 30>::from_rows(&p.input)?;
                    let output_grid = PaddedGrid::<30, 30>::from_rows(&p.output)?;
                    if matches!(view, TaskView::Pair) {
                        let spec = RenderSpec::new(RenderMode::Pair).with_cell_px(output.cell_px);
                        render::render_pair(&input, &output_grid, &spec, format)
                    } else {
                        let spec = RenderSpec::new(RenderMode::Single).with_cell_px(output.cell_px);
                        render::render_single(&input, &spec, format)
                    }
                }
            };
            write_out(output.out.as_deref(), text.as_bytes())?;
            Ok(true)
        }
        Command::Render { what: RenderCommand::Step { target, lane, step, output } } => {
            let cfg = resolve(&target)?;
            let text = match make_from_config(&cfg)? {
                AnyEnv::Full(e) => render_step_env(&e, cfg.seed, lane, step, &output),
                AnyEnv::Mini(e) => render_step_env(&e, cfg.seed, lane, step, &output),
            };
            write_out(output.out.as_deref(), text.as_bytes())?;
            Ok(true)
        }
        Command::Fetch { name, dest, table, sha256, allow_unpinned } => {
            let table = match table {
                Some(p) => SourceTable::from_file(&p)?,
                None => SourceTable::builtin(),
            };
            let dest = dest.unwrap_or_else(data_root);
            let path = fetch_dataset(&name, &dest, &table, &FetchOptions { sha256, allow_unpinned })?;
            println!("{}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
