//! Data-parallel execution of many independent environment lanes.
//!
//! Lane state is stored as a structure of arrays. Lanes are split into
//! contiguous chunks, one per worker; since stepping a lane is a pure
//! function of that lane, results do not depend on the partition.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{Action, EnvState, Observation, StepKind, Timestep};
use crate::environment::Environment;
use crate::grid::PaddedGrid;
use crate::ops::{Clipboard, OpId};
use crate::prng::PrngKey;
use crate::wrappers::{ActionSpec, SelectionSummary};

/// `N` lanes of [`EnvState`], one contiguous vector per field.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState<const R: usize = 30, const C: usize = 30> {
    pub working: Vec<PaddedGrid<R, C>>,
    pub input_grid: Vec<PaddedGrid<R, C>>,
    pub target: Vec<PaddedGrid<R, C>>,
    pub clipboard: Vec<Clipboard<R, C>>,
    pub step_count: Vec<u32>,
    pub last_similarity: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub task_index: Vec<u32>,
    pub pair_index: Vec<u32>,
    pub rng: Vec<PrngKey>,
}

/// Mutable view of a contiguous run of lanes.
struct LanesMut<'a, const R: usize, const C: usize> {
    working: &'a mut [PaddedGrid<R, C>],
    input_grid: &'a mut [PaddedGrid<R, C>],
    target: &'a mut [PaddedGrid<R, C>],
    clipboard: &'a mut [Clipboard<R, C>],
    step_count: &'a mut [u32],
    last_similarity: &'a mut [f64],
    terminated: &'a mut [bool],
    truncated: &'a mut [bool],
    task_index: &'a mut [u32],
    pair_index: &'a mut [u32],
    rng: &'a mut [PrngKey],
}

impl<'a, const R: usize, const C: usize> LanesMut<'a, R, C> {
    fn len(&self) -> usize {
        self.working.len()
    }

    fn split_at(self, mid: usize) -> (Self, Self) {
        let (a0, b0) = self.working.split_at_mut(mid);
        let (a1, b1) = self.input_grid.split_at_mut(mid);
        let (a2, b2) = self.target.split_at_mut(mid);
        let (a3, b3) = self.clipboard.split_at_mut(mid);
        let (a4, b4) = self.step_count.split_at_mut(mid);
        let (a5, b5) = self.last_similarity.split_at_mut(mid);
        let (a6, b6) = self.terminated.split_at_mut(mid);
        let (a7, b7) = self.truncated.split_at_mut(mid);
        let (a8, b8) = self.task_index.split_at_mut(mid);
        let (a9, b9) = self.pair_index.split_at_mut(mid);
        let (a10, b10) = self.rng.split_at_mut(mid);
        (
            LanesMut {
                working: a0,
                input_grid: a1,
                target: a2,
                clipboard: a3,
                step_count: a4,
                last_similarity: a5,
                terminated: a6,
                truncated: a7,
                task_index: a8,
                pair_index: a9,
                rng: a10,
            },
            LanesMut {
                working: b0,
                input_grid: b1,
                target: b2,
                clipboard: b3,
                step_count: b4,
                last_similarity: b5,
                terminated: b6,
                truncated: b7,
                task_index: b8,
                pair_index: b9,
                rng: b10,
            },
        )
    }

    fn get(&self, i: usize) -> EnvState<R, C> {
        EnvState {
            working: self.working[i],
            input_grid: self.input_grid[i],
            target: self.target[i],
            clipboard: self.clipboard[i],
            step_count: self.step_count[i],
            last_similarity: self.last_similarity[i],
            terminated: self.terminated[i],
            truncated: self.truncated[i],
            task_index: self.task_index[i],
            pair_index: self.pair_index[i],
            rng: self.rng[i],
        }
    }

    fn put(&mut self, i: usize, s: EnvState<R, C>) {
        self.working[i] = s.working;
        self.input_grid[i] = s.input_grid;
        self.target[i] = s.target;
        self.clipboard[i] = s.clipboard;
        self.step_count[i] = s.step_count;
        self.last_similarity[i] = s.last_similarity;
        self.terminated[i] = s.terminated;
        self.truncated[i] = s.truncated;
        self.task_index[i] = s.task_index;
        self.pair_index[i] = s.pair_index;
        self.rng[i] = s.rng;
    }
}

impl<const R: usize, const C: usize> BatchState<R, C> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            working: Vec::with_capacity(n),
            input_grid: Vec::with_capacity(n),
            target: Vec::with_capacity(n),
            clipboard: Vec::with_capacity(n),
            step_count: Vec::with_capacity(n),
            last_similarity: Vec::with_capacity(n),
            terminated: Vec::with_capacity(n),
            truncated: Vec::with_capacity(n),
            task_index: Vec::with_capacity(n),
            pair_index: Vec::with_capacity(n),
            rng: Vec::with_capacity(n),
        }
    }

    /// Like [`with_capacity`](Self::with_capacity) but reports allocation
    /// failure instead of aborting.
    pub fn try_with_capacity(n: usize) -> Result<Self, std::collections::TryReserveError> {
        let mut s = Self::with_capacity(0);
        s.working.try_reserve_exact(n)?;
        s.input_grid.try_reserve_exact(n)?;
        s.target.try_reserve_exact(n)?;
        s.clipboard.try_reserve_exact(n)?;
        s.step_count.try_reserve_exact(n)?;
        s.last_similarity.try_reserve_exact(n)?;
        s.terminated.try_reserve_exact(n)?;
        s.truncated.try_reserve_exact(n)?;
        s.task_index.try_reserve_exact(n)?;
        s.pair_index.try_reserve_exact(n)?;
        s.rng.try_reserve_exact(n)?;
        Ok(s)
    }

    /// Approximate heap bytes used per lane.
    pub const fn bytes_per_lane() -> usize {
        3 * std::mem::size_of::<PaddedGrid<R, C>>()
            + std::mem::size_of::<Clipboard<R, C>>()
            + 3 * std::mem::size_of::<u32>()
            + std::mem::size_of::<f64>()
            + 2
            + std::mem::size_of::<PrngKey>()
    }

    pub fn len(&self) -> usize {
        self.working.len()
    }

    pub fn is_empty(&self) -> bool {
        self.working.is_empty()
    }

    pub fn push(&mut self, s: EnvState<R, C>) {
        self.working.push(s.working);
        self.input_grid.push(s.input_grid);
        self.target.push(s.target);
        self.clipboard.push(s.clipboard);
        self.step_count.push(s.step_count);
        self.last_similarity.push(s.last_similarity);
        self.terminated.push(s.terminated);
        self.truncated.push(s.truncated);
        self.task_index.push(s.task_index);
        self.pair_index.push(s.pair_index);
        self.rng.push(s.rng);
    }

    pub fn from_lanes(lanes: impl IntoIterator<Item = EnvState<R, C>>) -> Self {
        let mut s = Self::with_capacity(0);
        for l in lanes {
            s.push(l);
        }
        s
    }

    pub fn lane(&self, i: usize) -> EnvState<R, C> {
        EnvState {
            working: self.working[i],
            input_grid: self.input_grid[i],
            target: self.target[i],
            clipboard: self.clipboard[i],
            step_count: self.step_count[i],
            last_similarity: self.last_similarity[i],
            terminated: self.terminated[i],
            truncated: self.truncated[i],
            task_index: self.task_index[i],
            pair_index: self.pair_index[i],
            rng: self.rng[i],
        }
    }

    pub fn lanes(&self) -> impl Iterator<Item = EnvState<R, C>> + '_ {
        (0..self.len()).map(|i| self.lane(i))
    }

    fn view(&mut self) -> LanesMut<'_, R, C> {
        LanesMut {
            working: &mut self.working,
            input_grid: &mut self.input_grid,
            target: &mut self.target,
            clipboard: &mut self.clipboard,
            step_count: &mut self.step_count,
            last_similarity: &mut self.last_similarity,
            terminated: &mut self.terminated,
            truncated: &mut self.truncated,
            task_index: &mut self.task_index,
            pair_index: &mut self.pair_index,
            rng: &mut self.rng,
        }
    }

    /// Bitwise equality of every lane.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.lanes().zip(other.lanes()).all(|(a, b)| a.bit_eq(&b))
    }
}

/// Maps an observation and a per-(lane, step) key to an action.
pub trait Policy<const R: usize, const C: usize>: Sync {
    fn act(&self, observation: &Observation, key: PrngKey) -> (Action<R, C>, SelectionSummary);
}

/// Uniform sampling over an action space.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    spec: ActionSpec,
}

impl RandomPolicy {
    pub fn new(spec: ActionSpec) -> Self {
        Self { spec }
    }
}

impl<const R: usize, const C: usize> Policy<R, C> for RandomPolicy {
    fn act(&self, _observation: &Observation, key: PrngKey) -> (Action<R, C>, SelectionSummary) {
        let tuple = self.spec.sample::<R, C>(&mut key.stream());
        self.spec.decode(&tuple).expect("sampled tuple lies in the action space")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LaneStats {
    pub episodes: u64,
    pub successes: u64,
    pub reward_sum: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RolloutSummary {
    pub lanes: Vec<LaneStats>,
    pub total_steps: u64,
}

impl RolloutSummary {
    pub fn episodes(&self) -> u64 {
        self.lanes.iter().map(|l| l.episodes).sum()
    }

    pub fn successes(&self) -> u64 {
        self.lanes.iter().map(|l| l.successes).sum()
    }

    /// Sum of lane reward sums, folded in lane order.
    pub fn reward_sum(&self) -> f64 {
        self.lanes.iter().fold(0.0, |acc, l| acc + l.reward_sum)
    }
}

/// One line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub lane: usize,
    pub step: usize,
    pub op: u8,
    pub selection: SelectionSummary,
    pub reward: f64,
    pub similarity: f64,
    pub step_kind: StepKind,
}

/// Per-lane result of one rollout step.
struct LaneStep {
    timestep: Timestep,
    op: OpId,
    selection: SelectionSummary,
    ended: bool,
}

/// Owns the worker pool. With one worker everything runs on the calling
/// thread.
pub struct BatchEngine {
    pool: Option<rayon::ThreadPool>,
    workers: usize,
}

impl std::fmt::Debug for BatchEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchEngine").field("workers", &self.workers).finish()
    }
}

impl BatchEngine {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let workers = workers.max(1);
        let pool = if workers == 1 {
            None
        } else {
            Some(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
        };
        Ok(Self { pool, workers })
    }

    /// One worker per available core.
    pub fn with_available_parallelism() -> Result<Self, rayon::ThreadPoolBuildError> {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Applies `f` to every lane, writing the new state back and collecting
    /// outputs in lane order.
    fn map_lanes<const R: usize, const C: usize, Out, F>(
        &self,
        state: &mut BatchState<R, C>,
        f: F,
    ) -> Vec<Out>
    where
        Out: Send,
        F: Fn(usize, EnvState<R, C>) -> (EnvState<R, C>, Out) + Sync,
    {
        let n = state.len();
        let run = |start: usize, mut lanes: LanesMut<'_, R, C>| -> Vec<Out> {
            (0..lanes.len())
                .map(|i| {
                    let (next, out) = f(start + i, lanes.get(i));
                    lanes.put(i, next);
                    out
                })
                .collect()
        };
        match &self.pool {
            None => run(0, state.view()),
            Some(pool) => {
                let chunk = n.div_ceil(self.workers).max(1);
                let mut parts = Vec::with_capacity(self.workers);
                let mut rest = state.view();
                let mut start = 0;
                while rest.len() > chunk {
                    let (head, tail) = rest.split_at(chunk);
                    parts.push((start, head));
                    start += chunk;
                    rest = tail;
                }
                parts.push((start, rest));
                let outs: Vec<Vec<Out>> =
                    pool.install(|| parts.into_par_iter().map(|(s, l)| run(s, l)).collect());
                outs.into_iter().flatten().collect()
            }
        }
    }

    pub fn batch_reset<const R: usize, const C: usize>(
        &self,
        keys: &[PrngKey],
        env: &Environment<R, C>,
    ) -> (BatchState<R, C>, Vec<Timestep>) {
        let reset_all = || -> Vec<(EnvState<R, C>, Timestep)> {
            match &self.pool {
                None => keys.iter().map(|k| env.reset(*k)).collect(),
                Some(_) => {
                    let chunk = keys.len().div_ceil(self.workers).max(1);
                    keys.par_chunks(chunk)
                        .flat_map_iter(|ks| ks.iter().map(|k| env.reset(*k)))
                        .collect()
                }
            }
        };
        let pairs = match &self.pool {
            None => reset_all(),
            Some(pool) => pool.install(reset_all),
        };
        let mut state = BatchState::with_capacity(pairs.len());
        let mut steps = Vec::with_capacity(pairs.len());
        for (s, t) in pairs {
            state.push(s);
            steps.push(t);
        }
        (state, steps)
    }

    /// Steps every lane in place.
    pub fn step_in_place<const R: usize, const C: usize>(
        &self,
        state: &mut BatchState<R, C>,
        actions: &[Action<R, C>],
        env: &Environment<R, C>,
    ) -> Vec<Timestep> {
        assert_eq!(actions.len(), state.len(), "one action per lane");
        self.map_lanes(state, |i, s| env.step(&s, &actions[i]))
    }

    pub fn batch_step<const R: usize, const C: usize>(
        &self,
        state: &BatchState<R, C>,
        actions: &[Action<R, C>],
        env: &Environment<R, C>,
    ) -> (BatchState<R, C>, Vec<Timestep>) {
        let mut next = state.clone();
        let ts = self.step_in_place(&mut next, actions, env);
        (next, ts)
    }

    /// Observations of the current lane states.
    pub fn observe<const R: usize, const C: usize>(
        &self,
        state: &BatchState<R, C>,
        env: &Environment<R, C>,
    ) -> Vec<Observation> {
        state.lanes().map(|s| env.observe(&s)).collect()
    }

    /// Runs `steps` synchronous batch steps.
    ///
    /// The policy key for lane `i` at step `t` is
    /// `policy_key.fold_in(i).fold_in(t)`. `observations` holds the current
    /// observation of each lane and is updated in place. When `record` is
    /// set, one [`StepRecord`] per lane and step is returned, ordered by step
    /// then lane.
    #[allow(clippy::too_many_arguments)]
    pub fn rollout<const R: usize, const C: usize, P: Policy<R, C>>(
        &self,
        state: &mut BatchState<R, C>,
        observations: &mut Vec<Observation>,
        policy: &P,
        policy_key: PrngKey,
        steps: usize,
        env: &Environment<R, C>,
        auto_reset: bool,
        record: bool,
    ) -> (RolloutSummary, Vec<StepRecord>) {
        let n = state.len();
        assert_eq!(observations.len(), n, "one observation per lane");
        let mut summary = RolloutSummary { lanes: vec![LaneStats::default(); n], total_steps: 0 };
        let mut records = Vec::new();
        if record {
            records.reserve(n * steps);
        }
        let lane_keys: Vec<PrngKey> = (0..n as u64).map(|i| policy_key.fold_in(i)).collect();

        for t in 0..steps {
            let obs: &Vec<Observation> = observations;
            let outs = self.map_lanes(state, |i, s| {
                let (action, selection) = policy.act(&obs[i], lane_keys[i].fold_in(t as u64));
                let (next, timestep) = env.step_with(&s, &action, auto_reset);
                let ended = timestep.step_kind == StepKind::Last && !s.is_terminal();
                (next, LaneStep { timestep, op: action.op, selection, ended })
            });
            let mut new_obs = Vec::with_capacity(n);
            for (i, out) in outs.into_iter().enumerate() {
                let lane = &mut summary.lanes[i];
                lane.reward_sum += out.timestep.reward;
                if out.ended {
                    lane.episodes += 1;
                    if out.timestep.info.solved {
                        lane.successes += 1;
                    }
                }
                if record {
                    records.push(StepRecord {
                        lane: i,
                        step: t,
                        op: out.op.get(),
                        selection: out.selection,
                        reward: out.timestep.reward,
                        similarity: out.timestep.info.similarity,
                        step_kind: out.timestep.step_kind,
                    });
                }
                new_obs.push(out.timestep.observation);
            }
            *observations = new_obs;
            summary.total_steps += n as u64;
        }
        (summary, records)
    }
}

/// Keys for a seeded rollout. With `root = PrngKey::from_seed(seed)`, lane
/// `i` resets from `root.child(0).child(i)` and the policy key is
/// `root.child(1)`. Neither depends on the lane count, so any lane can be
/// replayed on its own.
pub fn rollout_keys(seed: u64, lanes: usize) -> (Vec<PrngKey>, PrngKey) {
    let root = PrngKey::from_seed(seed);
    (root.child(0).split(lanes), root.child(1))
}

/// One transition recovered by [`replay_lane`].
#[derive(Debug, Clone)]
pub struct ReplayedStep<const R: usize, const C: usize> {
    pub before: EnvState<R, C>,
    pub action: Action<R, C>,
    pub selection: SelectionSummary,
    pub after: EnvState<R, C>,
    pub timestep: Timestep,
}

/// Re-runs lane `lane` of a seeded rollout (see [`rollout_keys`]) alone and
/// returns its transition at `step`.
pub fn replay_lane<const R: usize, const C: usize, P: Policy<R, C>>(
    env: &Environment<R, C>,
    policy: &P,
    seed: u64,
    lane: usize,
    step: usize,
    auto_reset: bool,
) -> ReplayedStep<R, C> {
    let root = PrngKey::from_seed(seed);
    let lane_key = root.child(1).fold_in(lane as u64);
    let (mut state, mut ts) = env.reset(root.child(0).child(lane as u64));
    for t in 0.. {
        let (action, selection) = policy.act(&ts.observation, lane_key.fold_in(t as u64));
        let (next, next_ts) = env.step_with(&state, &action, auto_reset);
        if t == step {
            return ReplayedStep { before: state, action, selection, after: next, timestep: next_ts };
        }
        state = next;
        ts = next_ts;
    }
    unreachable!("loop returns at t == step")
}
