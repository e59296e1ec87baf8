//! C interface to the gridarc environments.
//!
//! Handles are opaque. Every fallible function returns a status code
//! (`GA_OK` on success) and records a message readable with
//! [`ga_last_error`] on the calling thread. Panics never cross the boundary.
//!
//! Single environments and batches are stateful on this side: the handle
//! owns the current episode state. A single environment reset with `seed`
//! is identical to lane 0 of a batch reset with the same seed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use gridarc::batch::{rollout_keys, BatchEngine, BatchState};
use gridarc::config::{identifier_config, load_config, make_from_config, AnyEnv};
use gridarc::env::{Action, EnvState, StepKind, Timestep};
use gridarc::environment::Environment;

pub const GA_OK: i32 = 0;
pub const GA_ERR_NULL_POINTER: i32 = 1;
pub const GA_ERR_INVALID_ARGUMENT: i32 = 2;
pub const GA_ERR_CONFIG: i32 = 3;
pub const GA_ERR_DATASET: i32 = 4;
pub const GA_ERR_ACTION: i32 = 5;
pub const GA_ERR_BUFFER_TOO_SMALL: i32 = 6;
pub const GA_ERR_NOT_RESET: i32 = 7;
pub const GA_ERR_PANIC: i32 = 8;

pub const GA_STEP_FIRST: u8 = 0;
pub const GA_STEP_MID: u8 = 1;
pub const GA_STEP_LAST: u8 = 2;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (i32, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GA_OK,
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            GA_ERR_PANIC
        }
    }
}

fn classify(e: gridarc::Error) -> Failure {
    let code = match &e {
        gridarc::Error::Task(_) | gridarc::Error::Grid(_) | gridarc::Error::Io(_) => GA_ERR_DATASET,
        gridarc::Error::Wrapper(_) => GA_ERR_ACTION,
        _ => GA_ERR_CONFIG,
    };
    (code, e.to_string())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((GA_ERR_NULL_POINTER, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GA_ERR_INVALID_ARGUMENT, format!("{what} is not valid UTF-8")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<Option<&'a mut [T]>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    if len < need {
        return Err((GA_ERR_BUFFER_TOO_SMALL, format!("{what} holds {len}, needs {need}")));
    }
    Ok(Some(std::slice::from_raw_parts_mut(p, len)))
}

/// Static description of an environment's spaces.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GaEnvSpec {
    pub obs_channels: u32,
    pub obs_rows: u32,
    pub obs_cols: u32,
    /// Values per action: 1 when the space is flattened.
    pub action_arity: u32,
    /// Size of the flattened action space, or 0 when not flattened.
    pub flat_action_size: u64,
    pub num_ops: u32,
    pub num_tasks: u32,
    pub max_episode_steps: u32,
}

/// Scalar part of a timestep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GaStepResult {
    pub reward: f64,
    pub discount: f64,
    pub similarity: f64,
    /// One of `GA_STEP_FIRST`, `GA_STEP_MID`, `GA_STEP_LAST`.
    pub step_kind: u8,
    pub solved: u8,
    pub applied: u8,
}

impl From<&Timestep> for GaStepResult {
    fn from(t: &Timestep) -> Self {
        Self {
            reward: t.reward,
            discount: t.discount,
            similarity: t.info.similarity,
            step_kind: match t.step_kind {
                StepKind::First => GA_STEP_FIRST,
                StepKind::Mid => GA_STEP_MID,
                StepKind::Last => GA_STEP_LAST,
            },
            solved: t.info.solved.into(),
            applied: t.info.applied.into(),
        }
    }
}

enum Lane {
    Full(Environment<30, 30>, Option<EnvState<30, 30>>),
    Mini(Environment<5, 5>, Option<EnvState<5, 5>>),
}

/// One environment and its current episode.
pub struct GaEnv {
    lane: Lane,
}

enum Lanes {
    Full(Environment<30, 30>, Option<BatchState<30, 30>>),
    Mini(Environment<5, 5>, Option<BatchState<5, 5>>),
}

/// `lanes` environments stepped together.
pub struct GaBatch {
    lanes: Lanes,
    count: usize,
    engine: BatchEngine,
}

fn spec_of<const R: usize, const C: usize>(e: &Environment<R, C>) -> GaEnvSpec {
    let (ch, r, c) = e.observation_shape();
    let a = e.action_spec();
    GaEnvSpec {
        obs_channels: ch as u32,
        obs_rows: r as u32,
        obs_cols: c as u32,
        action_arity: if a.flat.is_some() { 1 } else { a.arity::<R, C>() as u32 },
        flat_action_size: a.flat.as_ref().map_or(0, |f| f.size() as u64),
        num_ops: a.ops.len() as u32,
        num_tasks: e.buffer().num_tasks() as u32,
        max_episode_steps: e.params().max_episode_steps,
    }
}

fn obs_size<const R: usize, const C: usize>(e: &Environment<R, C>) -> usize {
    let (ch, r, c) = e.observation_shape();
    ch * r * c
}

fn decode<const R: usize, const C: usize>(e: &Environment<R, C>, values: &[u64]) -> Result<Action<R, C>, Failure> {
    let values: Vec<usize> = values.iter().map(|&v| v as usize).collect();
    let decoded = if e.action_spec().flat.is_some() {
        match values.as_slice() {
            [flat] => e.decode_flat_action(*flat),
            _ => {
                return Err((GA_ERR_ACTION, format!("flattened action takes 1 value, got {}", values.len())));
            }
        }
    } else {
        e.decode_action(&values)
    };
    decoded.map(|(a, _)| a).map_err(|err| (GA_ERR_ACTION, err.to_string()))
}

fn build(config: &str, data_root: Option<&str>) -> Result<AnyEnv, Failure> {
    let p = Path::new(config);
    let is_file = matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml" | "json"));
    let cfg = if is_file {
        load_config(p, &[]).map_err(|e| (GA_ERR_CONFIG, e.to_string()))?
    } else {
        let root = data_root.map_or_else(gridarc::config::data_root, PathBuf::from);
        identifier_config(config, &root).map_err(|e| (GA_ERR_CONFIG, e.to_string()))?
    };
    make_from_config(&cfg).map_err(classify)
}

/// Creates an environment from a config file path (`.yaml`, `.yml`,
/// `.json`) or an identifier. `data_root` may be null, in which case
/// identifiers resolve against `$GRIDARC_DATA` or `data`.
#[no_mangle]
pub unsafe extern "C" fn ga_env_new(config: *const c_char, data_root: *const c_char, out: *mut *mut GaEnv) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err((GA_ERR_NULL_POINTER, "out is null".into()));
        }
        *out = ptr::null_mut();
        let config = c_str(config, "config")?;
        let root = if data_root.is_null() { None } else { Some(c_str(data_root, "data_root")?) };
        let lane = match build(config, root)? {
            AnyEnv::Full(e) => Lane::Full(e, None),
            AnyEnv::Mini(e) => Lane::Mini(e, None),
        };
        *out = Box::into_raw(Box::new(GaEnv { lane }));
        Ok(())
    })
}

/// Frees an environment. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ga_env_free(env: *mut GaEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ga_env_spec(env: *const GaEnv, out: *mut GaEnvSpec) -> i32 {
    guard(|| {
        let (Some(env), false) = (env.as_ref(), out.is_null()) else {
            return Err((GA_ERR_NULL_POINTER, "env or out is null".into()));
        };
        *out = match &env.lane {
            Lane::Full(e, _) => spec_of(e),
            Lane::Mini(e, _) => spec_of(e),
        };
        Ok(())
    })
}

/// Writes the size of each action component into `dims` (length
/// `action_arity` of the unflattened space, see [`GaEnvSpec`]).
#[no_mangle]
pub unsafe extern "C" fn ga_env_action_dims(env: *const GaEnv, dims: *mut u64, len: usize) -> i32 {
    guard(|| {
        let env = env.as_ref().ok_or((GA_ERR_NULL_POINTER, "env is null".to_string()))?;
        let d = match &env.lane {
            Lane::Full(e, _) => e.action_spec().dims::<30, 30>(),
            Lane::Mini(e, _) => e.action_spec().dims::<5, 5>(),
        };
        let Some(out) = out_slice(dims, len, d.len(), "dims")? else {
            return Err((GA_ERR_NULL_POINTER, "dims is null".into()));
        };
        for (o, v) in out.iter_mut().zip(d) {
            *o = v as u64;
        }
        Ok(())
    })
}

fn reset_lane<const R: usize, const C: usize>(
    e: &Environment<R, C>,
    slot: &mut Option<EnvState<R, C>>,
    seed: u64,
    obs: Option<&mut [u8]>,
) -> GaStepResult {
    let (keys, _) = rollout_keys(seed, 1);
    let (state, ts) = e.reset(keys[0]);
    *slot = Some(state);
    if let Some(o) = obs {
        o[..ts.observation.data.len()].copy_from_slice(&ts.observation.data);
    }
    GaStepResult::from(&ts)
}

/// Starts an episode. `obs` may be null; otherwise it receives
/// `channels·rows·cols` bytes, plane-major. `result` may be null.
#[no_mangle]
pub unsafe extern "C" fn ga_env_reset(
    env: *mut GaEnv,
    seed: u64,
    obs: *mut u8,
    obs_len: usize,
    result: *mut GaStepResult,
) -> i32 {
    guard(|| {
        let env = env.as_mut().ok_or((GA_ERR_NULL_POINTER, "env is null".to_string()))?;
        let r = match &mut env.lane {
            Lane::Full(e, s) => reset_lane(e, s, seed, out_slice(obs, obs_len, obs_size(e), "obs")?),
            Lane::Mini(e, s) => reset_lane(e, s, seed, out_slice(obs, obs_len, obs_size(e), "obs")?),
        };
        if let Some(out) = result.as_mut() {
            *out = r;
        }
        Ok(())
    })
}

fn step_lane<const R: usize, const C: usize>(
    e: &Environment<R, C>,
    slot: &mut Option<EnvState<R, C>>,
    action: &[u64],
    obs: Option<&mut [u8]>,
) -> Result<GaStepResult, Failure> {
    let state = slot.as_ref().ok_or((GA_ERR_NOT_RESET, "step before reset".to_string()))?;
    let a = decode(e, action)?;
    let (next, ts) = e.step(state, &a);
    *slot = Some(next);
    if let Some(o) = obs {
        o[..ts.observation.data.len()].copy_from_slice(&ts.observation.data);
    }
    Ok(GaStepResult::from(&ts))
}

/// Applies one action given as `action_len` component values (one value,
/// the flat index, for flattened spaces).
#[no_mangle]
pub unsafe extern "C" fn ga_env_step(
    env: *mut GaEnv,
    action: *const u64,
    action_len: usize,
    obs: *mut u8,
    obs_len: usize,
    result: *mut GaStepResult,
) -> i32 {
    guard(|| {
        let env = env.as_mut().ok_or((GA_ERR_NULL_POINTER, "env is null".to_string()))?;
        if action.is_null() {
            return Err((GA_ERR_NULL_POINTER, "action is null".into()));
        }
        let action = std::slice::from_raw_parts(action, action_len);
        let r = match &mut env.lane {
            Lane::Full(e, s) => step_lane(e, s, action, out_slice(obs, obs_len, obs_size(e), "obs")?)?,
            Lane::Mini(e, s) => step_lane(e, s, action, out_slice(obs, obs_len, obs_size(e), "obs")?)?,
        };
        if let Some(out) = result.as_mut() {
            *out = r;
        }
        Ok(())
    })
}

/// Creates a batch of `lanes` copies of `env`'s configuration. `workers` of
/// 0 uses every available core.
#[no_mangle]
pub unsafe extern "C" fn ga_batch_new(env: *const GaEnv, lanes: usize, workers: usize, out: *mut *mut GaBatch) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err((GA_ERR_NULL_POINTER, "out is null".into()));
        }
        *out = ptr::null_mut();
        let env = env.as_ref().ok_or((GA_ERR_NULL_POINTER, "env is null".to_string()))?;
        if lanes == 0 {
            return Err((GA_ERR_INVALID_ARGUMENT, "lanes must be positive".into()));
        }
        let engine = if workers == 0 {
            BatchEngine::with_available_parallelism()
        } else {
            BatchEngine::new(workers)
        }
        .map_err(|e| (GA_ERR_INVALID_ARGUMENT, e.to_string()))?;
        let l = match &env.lane {
            Lane::Full(e, _) => Lanes::Full(e.clone(), None),
            Lane::Mini(e, _) => Lanes::Mini(e.clone(), None),
        };
        *out = Box::into_raw(Box::new(GaBatch { lanes: l, count: lanes, engine }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ga_batch_free(batch: *mut GaBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

fn write_batch(ts: &[Timestep], obs: Option<&mut [u8]>, results: Option<&mut [GaStepResult]>) {
    if let Some(o) = obs {
        let mut at = 0;
        for t in ts {
            let d = &t.observation.data;
            o[at..at + d.len()].copy_from_slice(d);
            at += d.len();
        }
    }
    if let Some(r) = results {
        for (slot, t) in r.iter_mut().zip(ts) {
            *slot = GaStepResult::from(t);
        }
    }
}

fn batch_reset_lanes<const R: usize, const C: usize>(
    e: &Environment<R, C>,
    slot: &mut Option<BatchState<R, C>>,
    engine: &BatchEngine,
    n: usize,
    seed: u64,
) -> Vec<Timestep> {
    let (keys, _) = rollout_keys(seed, n);
    let (state, ts) = engine.batch_reset(&keys, e);
    *slot = Some(state);
    ts
}

/// Resets every lane. Lane `i` uses the same key a rollout with `seed`
/// would. `obs` receives `lanes·channels·rows·cols` bytes, `results` holds
/// `lanes` entries; both may be null.
#[no_mangle]
pub unsafe extern "C" fn ga_batch_reset(
    batch: *mut GaBatch,
    seed: u64,
    obs: *mut u8,
    obs_len: usize,
    results: *mut GaStepResult,
    results_len: usize,
) -> i32 {
    guard(|| {
        let b = batch.as_mut().ok_or((GA_ERR_NULL_POINTER, "batch is null".to_string()))?;
        let n = b.count;
        let need = match &b.lanes {
            Lanes::Full(e, _) => n * obs_size(e),
            Lanes::Mini(e, _) => n * obs_size(e),
        };
        let o = out_slice(obs, obs_len, need, "obs")?;
        let r = out_slice(results, results_len, n, "results")?;
        let ts = match &mut b.lanes {
            Lanes::Full(e, s) => batch_reset_lanes(e, s, &b.engine, n, seed),
            Lanes::Mini(e, s) => batch_reset_lanes(e, s, &b.engine, n, seed),
        };
        write_batch(&ts, o, r);
        Ok(())
    })
}

fn batch_step_lanes<const R: usize, const C: usize>(
    e: &Environment<R, C>,
    slot: &mut Option<BatchState<R, C>>,
    engine: &BatchEngine,
    n: usize,
    actions: &[u64],
) -> Result<Vec<Timestep>, Failure> {
    let state = slot.as_mut().ok_or((GA_ERR_NOT_RESET, "step before reset".to_string()))?;
    if actions.len() % n != 0 {
        return Err((GA_ERR_ACTION, format!("{} action values do not split over {n} lanes", actions.len())));
    }
    let per = actions.len() / n;
    let decoded = actions.chunks(per.max(1)).map(|a| decode(e, a)).collect::<Result<Vec<_>, _>>()?;
    Ok(engine.step_in_place(state, &decoded, e))
}

/// Steps every lane. `actions` holds `lanes·arity` values, lane-major.
#[no_mangle]
pub unsafe extern "C" fn ga_batch_step(
    batch: *mut GaBatch,
    actions: *const u64,
    actions_len: usize,
    obs: *mut u8,
    obs_len: usize,
    results: *mut GaStepResult,
    results_len: usize,
) -> i32 {
    guard(|| {
        let b = batch.as_mut().ok_or((GA_ERR_NULL_POINTER, "batch is null".to_string()))?;
        if actions.is_null() {
            return Err((GA_ERR_NULL_POINTER, "actions is null".into()));
        }
        let actions = std::slice::from_raw_parts(actions, actions_len);
        let n = b.count;
        let need = match &b.lanes {
            Lanes::Full(e, _) => n * obs_size(e),
            Lanes::Mini(e, _) => n * obs_size(e),
        };
        let o = out_slice(obs, obs_len, need, "obs")?;
        let r = out_slice(results, results_len, n, "results")?;
        let ts = match &mut b.lanes {
            Lanes::Full(e, s) => batch_step_lanes(e, s, &b.engine, n, actions)?,
            Lanes::Mini(e, s) => batch_step_lanes(e, s, &b.engine, n, actions)?,
        };
        write_batch(&ts, o, r);
        Ok(())
    })
}

/// Message for the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ga_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
