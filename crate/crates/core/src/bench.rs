//! Throughput sweeps over batch sizes.
//!
//! Each batch size gets untimed warm-up runs followed by `repeats` timed
//! rollouts of `steps_per_env` steps per lane. Throughput is total steps
//! divided by wall time; the best repeat is the headline figure and the mean
//! is recorded alongside.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::{BatchEngine, BatchState, RandomPolicy};
use crate::env::Observation;
use crate::environment::Environment;
use crate::prng::PrngKey;

pub const CSV_HEADER: [&str; 7] = [
    "batch_size",
    "steps_total",
    "best_seconds",
    "mean_seconds",
    "throughput_sps",
    "warmup_seconds",
    "skipped_reason",
];

fn default_batch_sizes() -> Vec<usize> {
    (0..=14).map(|k| 1usize << k).collect()
}

fn default_steps() -> usize {
    100
}

fn default_repeats() -> usize {
    5
}

fn default_warmup() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub steps_per_env: usize,
    pub repeats: usize,
    pub warmup_runs: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    /// Upper bound on lane memory. Batch sizes above it are skipped.
    pub memory_budget_bytes: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_sizes: default_batch_sizes(),
            steps_per_env: default_steps(),
            repeats: default_repeats(),
            warmup_runs: default_warmup(),
            seed: 0,
            workers: None,
            memory_budget_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchConfigError {
    #[error("repeats must be at least 3, got {0}")]
    TooFewRepeats(usize),
    #[error("batch sizes must be positive and strictly ascending")]
    UnsortedBatchSizes,
}

impl BenchConfig {
    /// The sweep 2^0..=2^20.
    pub fn full_sweep() -> Self {
        Self { batch_sizes: (0..=20).map(|k| 1usize << k).collect(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), BenchConfigError> {
        if self.repeats < 3 {
            return Err(BenchConfigError::TooFewRepeats(self.repeats));
        }
        let ascending = self.batch_sizes.windows(2).all(|w| w[0] < w[1]);
        if !ascending || self.batch_sizes.first() == Some(&0) {
            return Err(BenchConfigError::UnsortedBatchSizes);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub batch_size: usize,
    pub steps_total: u64,
    pub best_seconds: Option<f64>,
    pub mean_seconds: Option<f64>,
    pub throughput_sps: Option<f64>,
    pub warmup_seconds: Option<f64>,
    pub repeat_seconds: Vec<f64>,
    pub skipped_reason: Option<String>,
}

impl BenchRecord {
    fn skipped(batch_size: usize, steps_per_env: usize, reason: String) -> Self {
        Self {
            batch_size,
            steps_total: (batch_size * steps_per_env) as u64,
            best_seconds: None,
            mean_seconds: None,
            throughput_sps: None,
            warmup_seconds: None,
            repeat_seconds: Vec::new(),
            skipped_reason: Some(reason),
        }
    }
}

/// Seconds from an arbitrary fixed origin.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Something that can be swept over batch sizes.
pub trait BenchTarget {
    /// Builds state for `batch_size` lanes. Never timed. An `Err` skips the
    /// batch size with the given reason.
    fn prepare(&mut self, batch_size: usize) -> Result<(), String>;

    /// Runs `steps_per_env` synchronous steps and returns the number of lane
    /// steps executed.
    fn run(&mut self, steps_per_env: usize) -> u64;
}

pub fn run_sweep(
    config: &BenchConfig,
    target: &mut dyn BenchTarget,
    clock: &dyn Clock,
) -> Result<Vec<BenchRecord>, BenchConfigError> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.batch_sizes.len());
    for &b in &config.batch_sizes {
        if let Err(reason) = target.prepare(b) {
            records.push(BenchRecord::skipped(b, config.steps_per_env, reason));
            continue;
        }
        let mut warmup = 0.0;
        for _ in 0..config.warmup_runs {
            let t0 = clock.now();
            target.run(config.steps_per_env);
            warmup += clock.now() - t0;
        }
        let mut times = Vec::with_capacity(config.repeats);
        let mut steps_total = 0;
        for _ in 0..config.repeats {
            let t0 = clock.now();
            steps_total = target.run(config.steps_per_env);
            times.push(clock.now() - t0);
        }
        let best = times.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        records.push(BenchRecord {
            batch_size: b,
            steps_total,
            best_seconds: Some(best),
            mean_seconds: Some(mean),
            throughput_sps: Some(steps_total as f64 / best),
            warmup_seconds: (config.warmup_runs > 0).then_some(warmup),
            repeat_seconds: times,
            skipped_reason: None,
        });
    }
    Ok(records)
}

/// Random-policy rollouts with auto-reset on a configured environment.
pub struct EnvTarget<const R: usize, const C: usize> {
    env: Environment<R, C>,
    engine: BatchEngine,
    policy: RandomPolicy,
    seed: PrngKey,
    memory_budget_bytes: Option<u64>,
    state: BatchState<R, C>,
    observations: Vec<Observation>,
    runs: u64,
}

impl<const R: usize, const C: usize> EnvTarget<R, C> {
    pub fn new(
        env: Environment<R, C>,
        engine: BatchEngine,
        seed: u64,
        memory_budget_bytes: Option<u64>,
    ) -> Self {
        let policy = RandomPolicy::new(env.action_spec().clone());
        Self {
            env,
            engine,
            policy,
            seed: PrngKey::from_seed(seed),
            memory_budget_bytes,
            state: BatchState::with_capacity(0),
            observations: Vec::new(),
            runs: 0,
        }
    }

    /// Estimated resident bytes for `batch_size` lanes, two observation
    /// buffers included.
    pub fn bytes_for(&self, batch_size: usize) -> u64 {
        let (ch, r, c) = self.env.observation_shape();
        let per_lane = BatchState::<R, C>::bytes_per_lane() + 2 * ch * r * c;
        batch_size as u64 * per_lane as u64
    }
}

impl<const R: usize, const C: usize> BenchTarget for EnvTarget<R, C> {
    fn prepare(&mut self, batch_size: usize) -> Result<(), String> {
        self.state = BatchState::with_capacity(0);
        self.observations = Vec::new();
        let need = self.bytes_for(batch_size);
        if let Some(budget) = self.memory_budget_bytes {
            if need > budget {
                return Err(format!("needs {need} bytes, budget is {budget}"));
            }
        }
        let probe = BatchState::<R, C>::try_with_capacity(batch_size)
            .map_err(|e| format!("allocation failed: {e}"))?;
        drop(probe);
        let keys = self.seed.fold_in(batch_size as u64).split(batch_size);
        let (state, ts) = self.engine.batch_reset(&keys, &self.env);
        self.state = state;
        self.observations = ts.into_iter().map(|t| t.observation).collect();
        self.runs = 0;
        Ok(())
    }

    fn run(&mut self, steps_per_env: usize) -> u64 {
        let key = self.seed.child(1).fold_in(self.runs);
        self.runs += 1;
        let (summary, _) = self.engine.rollout(
            &mut self.state,
            &mut self.observations,
            &self.policy,
            key,
            steps_per_env,
            &self.env,
            true,
            false,
        );
        summary.total_steps
    }
}

fn fixed(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

/// CSV with [`CSV_HEADER`]. Seconds carry 6 decimals, throughput 1.
pub fn emit_csv(records: &[BenchRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.batch_size.to_string(),
            r.steps_total.to_string(),
            fixed(r.best_seconds, 6),
            fixed(r.mean_seconds, 6),
            fixed(r.throughput_sps, 1),
            fixed(r.warmup_seconds, 6),
            r.skipped_reason.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn emit_json(records: &[BenchRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

/// One row of a comparison throughput table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ThroughputRow {
    pub batch_size: usize,
    pub throughput_sps: Option<f64>,
    #[serde(default)]
    pub mode: Option<String>,
}

impl ThroughputRow {
    pub fn from_record(r: &BenchRecord, mode: &str) -> Self {
        Self { batch_size: r.batch_size, throughput_sps: r.throughput_sps, mode: Some(mode.into()) }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("baseline csv: {0}")]
pub struct BaselineError(#[from] csv::Error);

/// Reads throughput rows from CSV. Needs `batch_size` and `throughput_sps`
/// columns; `mode` is optional and other columns are ignored.
pub fn read_throughput_csv(bytes: &[u8]) -> Result<Vec<ThroughputRow>, BaselineError> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize().collect::<Result<_, _>>().map_err(BaselineError)
}

/// Integer with comma thousands separators.
pub fn thousands(v: f64) -> String {
    let digits = format!("{:.0}", v.abs());
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if v < 0.0 && digits != "0" {
        out.insert(0, '-');
    }
    out
}

/// Speedup text with one decimal, e.g. `38.2×`.
pub fn format_speedup(ours: f64, baseline: f64) -> String {
    format!("{:.1}×", ours / baseline)
}

/// Aligned plain-text table joining `ours` and `baseline` on batch size.
/// Rows follow `ours`; a missing or unmeasured baseline leaves its columns
/// empty.
pub fn emit_speedup_table(ours: &[ThroughputRow], baseline: &[ThroughputRow]) -> String {
    let header = ["Batch Size", "Ours SPS", "Mode", "Baseline SPS", "Mode", "Speedup"];
    let mut rows: Vec<[String; 6]> = Vec::new();
    for o in ours {
        let b = baseline.iter().find(|b| b.batch_size == o.batch_size);
        let b_sps = b.and_then(|b| b.throughput_sps);
        let speedup = match (o.throughput_sps, b_sps) {
            (Some(x), Some(y)) if y > 0.0 => format_speedup(x, y),
            _ => String::new(),
        };
        rows.push([
            thousands(o.batch_size as f64),
            o.throughput_sps.map(thousands).unwrap_or_default(),
            o.mode.clone().unwrap_or_default(),
            b_sps.map(thousands).unwrap_or_default(),
            b.and_then(|b| b.mode.clone()).unwrap_or_default(),
            speedup,
        ]);
    }
    let mut width = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 6]| -> String {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            let pad = width[i] - cell.chars().count();
            // Text columns left-aligned, numbers right-aligned.
            if i == 2 || i == 4 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    out.push('\n');
    for row in &rows {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4], &row[5]]));
        out.push('\n');
    }
    out
}
