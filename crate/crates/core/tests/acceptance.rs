//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! `UPDATE_GOLDEN=1` rewrites the renderer golden files instead of
//! comparing against them.

mod common;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use common::bridge::{self, M};
use common::*;
use gridarc::batch::{rollout_keys, BatchEngine, Policy, RandomPolicy};
use gridarc::bench::{run_sweep, BenchConfig, BenchTarget, Clock, EnvTarget, MonotonicClock};
use gridarc::config::{identifier_config, make_from_config, AnyEnv, WrapperSpec};
use gridarc::env::{compute_reward, step_state};
use gridarc::grid::{auto_select, bounding_box, PaddedGrid};
use gridarc::ops::{apply_operation, NUM_OPS};
use gridarc::prng::PrngKey;
use gridarc::render::{self, Format, RenderMode, RenderSpec};
use gridarc::task::{build_task_buffer_lazy, parse_task_json, DatasetIndex, DatasetSpec, TaskBuffer};
use gridarc::{Action, EnvParams, Environment, Mode, OpId};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn op(id: u8) -> OpId {
    OpId::new(id).unwrap()
}

fn tmpdir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn mini_env(root: &Path, id: &str, wrappers: Vec<WrapperSpec>) -> Environment<5, 5> {
    let mut cfg = identifier_config(id, root).unwrap();
    cfg.wrappers = wrappers;
    match make_from_config(&cfg).unwrap() {
        AnyEnv::Mini(e) => e,
        AnyEnv::Full(_) => panic!("expected the 5×5 profile"),
    }
}

// ---------------------------------------------------------------------------

fn ops_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = PrngKey::from_seed(101).stream();
    let mut cases = 0usize;
    let mut applied = [0usize; NUM_OPS];
    for _ in 0..2_000 {
        let s = random_state(&mut rng, 5, 5);
        let sel = random_selection(&mut rng, 5, 5);
        let (working, input, clipboard) = bridge::parts(&s);
        let mask = bridge::mask(&sel);
        for id in 0..NUM_OPS as u8 {
            let got = apply_operation(op(id), &mask, &working, &input, &clipboard);
            let want = reference_apply(id, &sel, &s);
            let ok = got.working == bridge::grid(&want.state.working)
                && got.clipboard == bridge::clipboard(&want.state.clipboard)
                && got.applied == want.applied
                && got.submitted == want.submitted;
            if !ok {
                return Err(format!("op {id} diverges on {s:?} with selection {sel:?}"));
            }
            applied[id as usize] += want.applied as usize;
            cases += 1;
        }
    }
    if let Some(id) = applied.iter().position(|&n| n == 0) {
        return Err(format!("op {id} never applied; generator too narrow"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("{cases} cases took {secs:.1}s"))?;
    Ok(format!("{cases} cases, all 35 ops, {secs:.2}s"))
}

fn identities() -> Outcome {
    const N: usize = 1_000;
    let mut rng = PrngKey::from_seed(202).stream();
    let apply = |id: u8, m: &M, s: &(bridge::G, bridge::G, bridge::Cb)| {
        let o = apply_operation(op(id), m, &s.0, &s.1, &s.2);
        (o.working, s.1, o.clipboard)
    };
    let mut counts = [0usize; 5];
    for _ in 0..N {
        let rs = random_state(&mut rng, 5, 5);
        let s = bridge::parts(&rs);
        let (h, w) = s.0.dims();

        // rotate^4 on a square box, both directions
        let n = 1 + rng.below(h.min(w));
        let (r0, c0) = (rng.below(h - n + 1), rng.below(w - n + 1));
        let square = M::rect(r0, c0, r0 + n - 1, c0 + n - 1);
        for id in [24, 25] {
            let mut t = s;
            for _ in 0..4 {
                t = apply(id, &square, &t);
            }
            ensure(t.0 == s.0, || format!("rotate {id} ^4 on {rs:?} box {square:?}"))?;
        }
        counts[0] += 1;

        let sel = bridge::mask(&random_selection(&mut rng, 5, 5));
        for id in [26, 27] {
            let t = apply(id, &sel, &apply(id, &sel, &s));
            ensure(t.0 == s.0, || format!("flip {id} ^2 on {rs:?}"))?;
        }
        counts[1] += 1;

        let bb = bounding_box(&auto_select(&sel, &s.0), &s.0).unwrap();
        for (id, extent) in [(20, bb.height()), (21, bb.height()), (22, bb.width()), (23, bb.width())] {
            let mut t = s;
            for _ in 0..extent {
                t = apply(id, &sel, &t);
            }
            ensure(t.0 == s.0, || format!("move {id} ^{extent} on {rs:?}"))?;
        }
        counts[2] += 1;

        let copied = apply(28, &sel, &s);
        let restored = apply(29, &sel, &apply(31, &sel, &copied));
        ensure(restored.0 == s.0, || format!("copy, clear, paste on {rs:?}"))?;
        ensure(apply(29, &sel, &copied).0 == s.0, || format!("copy then paste on {rs:?}"))?;
        counts[3] += 1;

        let cut = apply(30, &sel, &s);
        let cleared = apply(31, &sel, &s);
        ensure(cut.0 == cleared.0 && cut.2 == copied.2, || format!("cut on {rs:?}"))?;
        counts[4] += 1;
    }
    Ok(format!(
        "rotate^4 {}, flip^2 {}, move^extent {}, copy/paste {}, cut {} cases",
        counts[0], counts[1], counts[2], counts[3], counts[4]
    ))
}

fn reward() -> Outcome {
    let train = EnvParams::default();
    let eval = EnvParams { mode: Mode::Eval, ..train };
    let worked = [
        (compute_reward(0.25, 0.75, false, false, &train), 0.48),
        (compute_reward(1.0, 1.0, true, true, &train), 9.98),
        (compute_reward(1.0, 1.0, true, true, &eval), 9.98),
        (compute_reward(0.5, 0.5, true, false, &eval), -1.02),
        (compute_reward(0.25, 0.75, false, false, &eval), -0.02),
    ];
    for (got, want) in worked {
        ensure(got == want, || format!("got {got:?}, want {want:?}"))?;
    }

    let dir = tmpdir();
    write_mini_dataset(dir.path());
    let env = mini_env(dir.path(), "Mini", vec![]);
    let mut rng = PrngKey::from_seed(303).stream();
    let mut steps = 0;
    for traj in 0..100u64 {
        let weight = 0.25 + 3.0 * rng.next_f64();
        let mut tp = *env.params();
        tp.reward.similarity_weight = weight;
        let ep = EnvParams { mode: Mode::Eval, ..tp };
        let (mut state, _) = env.reset(PrngKey::from_seed(traj));
        let (mut gap, mut shaped) = (0.0, 0.0);
        while !state.is_terminal() {
            let id = if rng.below(60) == 0 { 34 } else { rng.below(34) as u8 };
            let action = Action::new(op(id), bridge::mask(&random_selection(&mut rng, 5, 5)));
            let (a, ta) = step_state(&state, &action, &tp);
            let (b, tb) = step_state(&state, &action, &ep);
            ensure(a.bit_eq(&b), || format!("mode changed the state in trajectory {traj}"))?;
            gap += ta.reward - tb.reward;
            shaped += weight * (a.last_similarity - state.last_similarity);
            state = a;
            steps += 1;
        }
        ensure((gap - shaped).abs() <= 1e-9, || {
            format!("trajectory {traj}: train-eval {gap} vs weighted deltas {shaped}")
        })?;
    }
    Ok(format!("0.48, 9.98, -1.02, -0.02 exact; mode gate over 100 trajectories ({steps} steps)"))
}

fn channels() -> Outcome {
    let dir = tmpdir();
    write_mini_dataset(dir.path());
    let ctx = || WrapperSpec::Contextual { pairs: 5 };
    let configs: [(&str, Vec<WrapperSpec>, usize); 7] = [
        ("none", vec![], 1),
        ("answer", vec![WrapperSpec::Answer], 2),
        ("input", vec![WrapperSpec::Input], 2),
        ("contextual", vec![ctx()], 11),
        ("input+answer", vec![WrapperSpec::Input, WrapperSpec::Answer], 3),
        ("input+contextual", vec![WrapperSpec::Input, ctx()], 12),
        ("input+contextual+answer", vec![WrapperSpec::Input, ctx(), WrapperSpec::Answer], 13),
    ];
    let mut seen = Vec::new();
    for (name, wrappers, want) in configs {
        let env = mini_env(dir.path(), "Mini", wrappers);
        let (ch, r, c) = env.observation_shape();
        let (_, ts) = env.reset(PrngKey::from_seed(1));
        ensure(ch == want && ts.observation.channels == want, || format!("{name}: {ch} channels, want {want}"))?;
        ensure(ts.observation.data.len() == want * r * c, || format!("{name}: observation size"))?;
        seen.push(ch.to_string());
    }
    Ok(format!("channels {}", seen.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tmpdir();
    write_mini_dataset(dir.path());
    let run = |workers: usize, tag: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(format!("rollout-{workers}-{tag}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_gridarc"))
            .args(["rollout", "-c", "Mini", "--seed", "2024", "--steps", "60", "--lanes", "16"])
            .args(["--workers", &workers.to_string(), "--out"])
            .arg(&out)
            .env("GRIDARC_DATA", dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let first = run(1, "a")?;
    ensure(first == run(1, "b")?, || "two runs differ".into())?;
    ensure(first.iter().filter(|&&b| b == b'\n').count() == 60 * 16, || "line count".into())?;
    for w in [2, 4, 8] {
        ensure(first == run(w, "a")?, || format!("workers {w} differ from workers 1"))?;
    }

    // 64 lanes in one batch against 64 episodes run one after another.
    let env = mini_env(dir.path(), "Mini", vec![WrapperSpec::Bbox, WrapperSpec::Answer]);
    let policy = RandomPolicy::new(env.action_spec().clone());
    let (keys, pkey) = rollout_keys(99, 64);
    let engine = BatchEngine::new(4).unwrap();
    let (mut batch, ts) = engine.batch_reset(&keys, &env);
    let mut obs = ts.into_iter().map(|t| t.observation).collect();
    let steps = 200;
    let (_, records) = engine.rollout(&mut batch, &mut obs, &policy, pkey, steps, &env, false, true);
    for lane in 0..64 {
        let lane_key = pkey.fold_in(lane as u64);
        let (mut state, mut t) = env.reset(keys[lane]);
        for step in 0..steps {
            let (action, _) = policy.act(&t.observation, lane_key.fold_in(step as u64));
            let (next, nt) = env.step_with(&state, &action, false);
            let rec = &records[step * 64 + lane];
            ensure(
                rec.op == action.op.get()
                    && rec.reward.to_bits() == nt.reward.to_bits()
                    && rec.similarity.to_bits() == nt.info.similarity.to_bits()
                    && rec.step_kind == nt.step_kind,
                || format!("lane {lane} step {step} record differs"),
            )?;
            state = next;
            t = nt;
        }
        ensure(state.bit_eq(&batch.lane(lane)), || format!("lane {lane} final state differs"))?;
        ensure(t.observation == obs[lane], || format!("lane {lane} final observation differs"))?;
    }
    Ok("JSONL identical across 2 runs and workers 1/2/4/8; N=64 batch == 64 sequential".into())
}

fn task_buffer() -> Outcome {
    let tasks = mini_tasks();
    let dir = tmpdir();
    write_mini_dataset(dir.path());
    let env = mini_env(dir.path(), "Mini", vec![]);
    let buf = env.buffer();
    ensure(buf.num_tasks() == MINI_TASKS, || format!("{} tasks", buf.num_tasks()))?;

    let mut sorted = tasks.clone();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for (t, task) in sorted.iter().enumerate() {
        ensure(buf.task_ids[t] == task.id, || format!("slot {t} holds {}", buf.task_ids[t]))?;
        ensure(buf.demo_count[t] == task.train.len() && buf.test_count[t] == task.test.len(), || {
            format!("{}: pair counts", task.id)
        })?;
        for (p, (i, o)) in task.train.iter().enumerate() {
            ensure(&buf.demo_input(t, p).to_rows() == i && &buf.demo_output(t, p).to_rows() == o, || {
                format!("{} demo {p} round trip", task.id)
            })?;
        }
        for (p, (i, o)) in task.test.iter().enumerate() {
            ensure(&buf.test_input(t, p).to_rows() == i && &buf.test_output(t, p).to_rows() == o, || {
                format!("{} test {p} round trip", task.id)
            })?;
        }
        for p in task.train.len()..buf.max_demo {
            ensure(buf.demo_input(t, p).is_empty(), || format!("{} slot {p} not empty", task.id))?;
        }
    }
    let single = mini_env(dir.path(), &format!("Mini-{BENCH_TASK}"), vec![]);
    ensure(single.buffer().num_tasks() == 1, || "single-task identifier".into())?;

    // Same files written in different orders must build the same buffer.
    let mut rng = PrngKey::from_seed(404).stream();
    let reference = buf.clone();
    for round in 0..5 {
        let mut shuffled = tasks.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i + 1));
        }
        let d = dir.path().join(format!("shuffled-{round}"));
        write_tasks(&d, &shuffled);
        let index = DatasetIndex::open(&DatasetSpec::flat(&d), 5, 5).map_err(|e| e.to_string())?;
        let rebuilt: TaskBuffer<5, 5> = build_task_buffer_lazy(&index, 5, 2).map_err(|e| e.to_string())?;
        ensure(rebuilt == reference, || format!("shuffled build {round} differs"))?;
    }
    Ok(format!("T={MINI_TASKS}, counts and pad/crop round trip exact, 5 shuffled builds identical"))
}

fn throughput() -> Outcome {
    let dir = tmpdir();
    write_mini_dataset(dir.path());
    let env = mini_env(dir.path(), &format!("Mini-{BENCH_TASK}"), vec![WrapperSpec::Bbox, WrapperSpec::AutoReset]);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cfg = BenchConfig { repeats: 3, ..BenchConfig::default() };
    let start = Instant::now();
    let mut target = EnvTarget::new(env, BatchEngine::new(cores).unwrap(), cfg.seed, None);
    let records = run_sweep(&cfg, &mut target, &MonotonicClock::new()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let sps = |b: usize| {
        records.iter().find(|r| r.batch_size == b).and_then(|r| r.throughput_sps).unwrap_or(0.0)
    };
    let ratio = sps(4096) / sps(1);

    let mut problems = Vec::new();
    if ratio < 4.0 {
        problems.push(format!("batch 4096 / batch 1 = {ratio:.2}x < 4x"));
    }
    let mut best: f64 = 0.0;
    for r in records.iter().filter(|r| r.batch_size <= 1024) {
        let t = r.throughput_sps.unwrap_or(0.0);
        if t < 0.85 * best {
            problems.push(format!("batch {} at {t:.0} sps drops below 85% of {best:.0}", r.batch_size));
        }
        best = best.max(t);
    }
    if secs >= 600.0 {
        problems.push(format!("sweep took {secs:.0}s"));
    }
    let detail = format!(
        "{cores} core(s), batch 1 {:.0} sps, batch 1024 {:.0} sps, batch 4096 {:.0} sps, ratio {ratio:.2}x, sweep 2^0..2^14 in {secs:.1}s",
        sps(1),
        sps(1024),
        sps(4096)
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        if cores < 4 {
            problems.push("criterion assumes at least 4 cores".into());
        }
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

struct FakeClock(Cell<f64>);

impl Clock for FakeClock {
    fn now(&self) -> f64 {
        self.0.get()
    }
}

/// Advances the clock by 1000 s on warm-up runs and by a known amount on
/// timed runs.
struct Scripted<'a> {
    clock: &'a FakeClock,
    batch: usize,
    calls: usize,
    warmups: usize,
}

impl BenchTarget for Scripted<'_> {
    fn prepare(&mut self, batch_size: usize) -> Result<(), String> {
        self.clock.0.set(self.clock.0.get() + 500.0);
        self.batch = batch_size;
        self.calls = 0;
        Ok(())
    }

    fn run(&mut self, steps: usize) -> u64 {
        let dt = if self.calls < self.warmups { 1000.0 } else { 0.001 * (self.calls + 1) as f64 };
        self.calls += 1;
        self.clock.0.set(self.clock.0.get() + dt);
        (self.batch * steps) as u64
    }
}

fn bench_accounting() -> Outcome {
    let clock = FakeClock(Cell::new(0.0));
    let cfg = BenchConfig { batch_sizes: vec![1, 8, 64], repeats: 3, warmup_runs: 2, ..BenchConfig::default() };
    let mut target = Scripted { clock: &clock, batch: 0, calls: 0, warmups: cfg.warmup_runs };
    let records = run_sweep(&cfg, &mut target, &clock).map_err(|e| e.to_string())?;
    for r in &records {
        ensure(r.steps_total == r.batch_size as u64 * 100, || format!("batch {}: steps_total {}", r.batch_size, r.steps_total))?;
        // Timed runs are calls 3, 4, 5: 0.003, 0.004, 0.005 s.
        let best = r.best_seconds.unwrap();
        ensure((best - 0.003).abs() < 1e-9, || format!("best {best} includes untimed work"))?;
        ensure((r.mean_seconds.unwrap() - 0.004).abs() < 1e-9, || "mean".into())?;
        ensure((r.warmup_seconds.unwrap() - 2000.0).abs() < 1e-6, || "warm-up not recorded".into())?;
        ensure(r.repeat_seconds.len() == 3, || "repeat count".into())?;
        ensure((r.throughput_sps.unwrap() - r.steps_total as f64 / best).abs() < 1e-6, || "throughput".into())?;
    }

    // Real target: executed lane steps equal batch × 100.
    let dir = tmpdir();
    write_mini_dataset(dir.path());
    let env = mini_env(dir.path(), "Mini", vec![WrapperSpec::Bbox, WrapperSpec::AutoReset]);
    let mut real = EnvTarget::new(env, BatchEngine::new(1).unwrap(), 0, None);
    let cfg = BenchConfig { batch_sizes: vec![1, 3, 32], repeats: 3, ..BenchConfig::default() };
    for r in run_sweep(&cfg, &mut real, &MonotonicClock::new()).map_err(|e| e.to_string())? {
        ensure(r.steps_total == r.batch_size as u64 * 100, || format!("engine batch {}", r.batch_size))?;
    }
    Ok("steps_total = batch x 100; warm-up and prepare excluded from timings".into())
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Renders every fixture view. Names are stable file names.
fn render_all() -> Vec<(String, String)> {
    let mut out = Vec::new();
    let tiny = fixtures_dir().join("tiny");
    let mut names: Vec<_> = std::fs::read_dir(&tiny).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let formats = [(Format::Svg, "svg"), (Format::Ansi, "ansi"), (Format::Ascii, "txt")];
    for path in names {
        let id = path.file_stem().unwrap().to_str().unwrap().to_string();
        let task = parse_task_json(&id, &std::fs::read(&path).unwrap()).unwrap();
        let spec = RenderSpec::<30, 30>::new(RenderMode::CompleteTask);
        let pair_in = PaddedGrid::<30, 30>::from_rows(&task.train[0].input).unwrap();
        let pair_out = PaddedGrid::<30, 30>::from_rows(&task.train[0].output).unwrap();
        for (fmt, ext) in formats {
            out.push((format!("{id}.task.{ext}"), render::render_complete_task(&task, &spec, fmt)));
            out.push((format!("{id}.pair.{ext}"), render::render_pair(&pair_in, &pair_out, &spec, fmt)));
        }
    }

    // One recorded transition with a highlighted selection.
    let task = parse_task_json("fill_blue", &std::fs::read(fixtures_dir().join("tiny/fill_blue.json")).unwrap()).unwrap();
    let buffer: TaskBuffer<30, 30> = gridarc::task::build_task_buffer(&[task], 5, 2).unwrap();
    let env = Environment::new(
        Arc::new(buffer),
        EnvParams::default(),
        gridarc::wrappers::ObsSpec::working_only(),
        gridarc::wrappers::ActionSpec::new::<30, 30>(
            gridarc::wrappers::ActionKind::BBox,
            gridarc::wrappers::OpSubset::all(),
            false,
        )
        .unwrap(),
        false,
    )
    .unwrap();
    let (before, _) = env.reset(PrngKey::from_seed(5));
    let (action, _) = env.decode_action(&[0, 0, 1, 1, 1]).unwrap();
    let (after, ts) = env.step(&before, &action);
    let spec = RenderSpec::<30, 30>::new(RenderMode::RlStep);
    for (fmt, ext) in formats {
        out.push((format!("fill_blue.step.{ext}"), render::render_rl_step(&before, &action, &after, ts.reward, &spec, fmt)));
    }
    out
}

fn golden() -> Outcome {
    let dir = golden_dir();
    let first = render_all();
    ensure(first == render_all(), || "two renders differ".into())?;
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for (name, text) in &first {
            std::fs::write(dir.join(name), text).map_err(|e| e.to_string())?;
        }
        return Ok(format!("wrote {} golden files", first.len()));
    }
    for (name, text) in &first {
        let want = std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(want == text.as_bytes(), || format!("{name} differs from golden"))?;
    }
    Ok(format!("{} SVG/ANSI/ASCII outputs byte-identical to golden files", first.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("operation semantics oracle", ops_oracle),
        ("algebraic identities", identities),
        ("reward formula", reward),
        ("channel arithmetic", channels),
        ("determinism", determinism),
        ("task buffer", task_buffer),
        ("throughput scaling", throughput),
        ("bench accounting", bench_accounting),
        ("renderer golden files", golden),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
