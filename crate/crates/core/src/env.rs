//! Stateless environment core: `reset` and `step` over explicit state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{similarity, PaddedGrid, SelectionMask};
use crate::ops::{apply_operation, Clipboard, OpId, NUM_OPS};
use crate::prng::PrngKey;
use crate::task::{sample_task, TaskBuffer};

/// Observation value for cells outside a grid's logical region.
pub const SENTINEL: u8 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("task buffer is empty")]
    EmptyBuffer,
    #[error("allowed operation set must be non-empty and contain submit (34)")]
    NoTerminator,
    #[error("max_episode_steps must be at least 1")]
    ZeroStepLimit,
    #[error("reward coefficient {0} must be finite and non-negative")]
    BadReward(&'static str),
    #[error("capacity profile {profile:?} does not match a {rows}x{cols} environment")]
    CapacityMismatch {
        profile: CapacityProfile,
        rows: usize,
        cols: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// Grid buffer size used by an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityProfile {
    /// 30 × 30.
    #[default]
    Full,
    /// 5 × 5.
    Mini,
}

impl CapacityProfile {
    pub fn dims(self) -> (usize, usize) {
        match self {
            CapacityProfile::Full => (crate::grid::FULL_ROWS, crate::grid::FULL_COLS),
            CapacityProfile::Mini => (crate::grid::MINI_ROWS, crate::grid::MINI_COLS),
        }
    }
}

/// Reward coefficients. Penalties are stored as non-negative magnitudes and
/// subtracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub similarity_weight: f64,
    pub success_bonus: f64,
    pub step_penalty: f64,
    pub unsolved_submission_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            similarity_weight: 1.0,
            success_bonus: 10.0,
            step_penalty: 0.02,
            unsolved_submission_penalty: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn zero() -> Self {
        Self {
            similarity_weight: 0.0,
            success_bonus: 0.0,
            step_penalty: 0.0,
            unsolved_submission_penalty: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let checks = [
            ("similarity_weight", self.similarity_weight, false),
            ("success_bonus", self.success_bonus, false),
            ("step_penalty", self.step_penalty, true),
            ("unsolved_submission_penalty", self.unsolved_submission_penalty, true),
        ];
        for (name, v, nonneg) in checks {
            if !v.is_finite() || (nonneg && v < 0.0) {
                return Err(EnvError::BadReward(name));
            }
        }
        Ok(())
    }
}

/// Set of operation ids, stored as a bitmask and serialized as a sorted list.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpSet(u64);

impl OpSet {
    pub fn all() -> Self {
        Self((1u64 << NUM_OPS) - 1)
    }

    pub fn from_ops(ops: impl IntoIterator<Item = OpId>) -> Self {
        Self(ops.into_iter().fold(0, |acc, op| acc | (1 << op.get())))
    }

    #[inline]
    pub fn contains(&self, op: OpId) -> bool {
        self.0 >> op.get() & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = OpId> + '_ {
        OpId::all().filter(|op| self.contains(*op))
    }
}

impl Default for OpSet {
    fn default() -> Self {
        Self::all()
    }
}

impl std::fmt::Debug for OpSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter().map(OpId::get)).finish()
    }
}

impl Serialize for OpSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(OpId::get))
    }
}

impl<'de> Deserialize<'de> for OpSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<i64>::deserialize(d)?;
        let ops = ids
            .into_iter()
            .map(|i| OpId::try_from(i).map_err(serde::de::Error::custom))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OpSet::from_ops(ops))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub reward: RewardConfig,
    pub mode: Mode,
    pub max_episode_steps: u32,
    pub allowed_ops: OpSet,
    pub capacity: CapacityProfile,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            mode: Mode::Train,
            max_episode_steps: 150,
            allowed_ops: OpSet::all(),
            capacity: CapacityProfile::Full,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.allowed_ops.is_empty() || !self.allowed_ops.contains(OpId::SUBMIT) {
            return Err(EnvError::NoTerminator);
        }
        if self.max_episode_steps == 0 {
            return Err(EnvError::ZeroStepLimit);
        }
        self.reward.validate()
    }

    pub fn check_capacity<const R: usize, const C: usize>(&self) -> Result<(), EnvError> {
        if self.capacity.dims() != (R, C) {
            return Err(EnvError::CapacityMismatch { profile: self.capacity, rows: R, cols: C });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action<const R: usize = 30, const C: usize = 30> {
    pub op: OpId,
    pub selection: SelectionMask<R, C>,
}

impl<const R: usize, const C: usize> Action<R, C> {
    pub fn new(op: OpId, selection: SelectionMask<R, C>) -> Self {
        Self { op, selection }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState<const R: usize = 30, const C: usize = 30> {
    pub working: PaddedGrid<R, C>,
    pub input_grid: PaddedGrid<R, C>,
    pub target: PaddedGrid<R, C>,
    pub clipboard: Clipboard<R, C>,
    pub step_count: u32,
    pub last_similarity: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub task_index: u32,
    pub pair_index: u32,
    pub rng: PrngKey,
}

impl<const R: usize, const C: usize> EnvState<R, C> {
    #[inline]
    pub fn is_terminal(&self) -> bool {
        self.terminated || self.truncated
    }

    /// Bitwise equality, treating similarity as its bit pattern.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.last_similarity.to_bits() == other.last_similarity.to_bits() && self == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    First,
    Mid,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub similarity: f64,
    pub solved: bool,
    pub applied: bool,
}

/// Stack of `channels` planes, each `rows × cols`, plane-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl Observation {
    pub fn with_capacity(channels: usize, rows: usize, cols: usize) -> Self {
        Self { channels: 0, rows, cols, data: Vec::with_capacity(channels * rows * cols) }
    }

    pub fn plane(&self, channel: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// Appends a grid as one plane; padding becomes [`SENTINEL`].
    pub fn push_grid<const R: usize, const C: usize>(&mut self, grid: &PaddedGrid<R, C>) {
        debug_assert_eq!((self.rows, self.cols), (R, C));
        let (h, w) = grid.dims();
        for (r, row) in grid.cells().iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                self.data.push(if r < h && c < w { v } else { SENTINEL });
            }
        }
        self.channels += 1;
    }

    /// Appends an all-sentinel plane.
    pub fn push_blank(&mut self) {
        self.data.extend(std::iter::repeat(SENTINEL).take(self.rows * self.cols));
        self.channels += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timestep {
    pub observation: Observation,
    pub reward: f64,
    pub step_kind: StepKind,
    pub discount: f64,
    pub info: StepInfo,
}

/// Everything in a [`Timestep`] except the observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub step_kind: StepKind,
    pub discount: f64,
    pub info: StepInfo,
}

impl Transition {
    pub fn with_observation(self, observation: Observation) -> Timestep {
        Timestep {
            observation,
            reward: self.reward,
            step_kind: self.step_kind,
            discount: self.discount,
            info: self.info,
        }
    }
}

/// Four-component reward. Similarity shaping applies in train mode only.
pub fn compute_reward(
    prev_sim: f64,
    new_sim: f64,
    submitted: bool,
    solved: bool,
    params: &EnvParams,
) -> f64 {
    let rc = &params.reward;
    let mut r = 0.0;
    if params.mode == Mode::Train {
        r += rc.similarity_weight * (new_sim - prev_sim);
    }
    if submitted && solved {
        r += rc.success_bonus;
    }
    r -= rc.step_penalty;
    if submitted && !solved {
        r -= rc.unsolved_submission_penalty;
    }
    r
}

/// One plane: working grid with padding as [`SENTINEL`].
pub fn base_observation<const R: usize, const C: usize>(state: &EnvState<R, C>) -> Observation {
    let mut obs = Observation::with_capacity(1, R, C);
    obs.push_grid(&state.working);
    obs
}

/// Builds the initial state without an observation.
pub fn reset_state<const R: usize, const C: usize>(
    key: PrngKey,
    params: &EnvParams,
    buffer: &TaskBuffer<R, C>,
) -> Result<(EnvState<R, C>, Transition), EnvError> {
    if buffer.is_empty() {
        return Err(EnvError::EmptyBuffer);
    }
    let (task, rest) = sample_task(key, buffer);
    let (pair_key, carry) = rest.split2();
    let (pair, input, target) = match params.mode {
        Mode::Train => {
            let p = pair_key.uniform_index(buffer.demo_count[task]);
            (p, *buffer.demo_input(task, p), *buffer.demo_output(task, p))
        }
        Mode::Eval => (0, *buffer.test_input(task, 0), *buffer.test_output(task, 0)),
    };
    let sim = similarity(&input, &target);
    let state = EnvState {
        working: input,
        input_grid: input,
        target,
        clipboard: Clipboard::empty(),
        step_count: 0,
        last_similarity: sim,
        terminated: false,
        truncated: false,
        task_index: task as u32,
        pair_index: pair as u32,
        rng: carry,
    };
    let tr = Transition {
        reward: 0.0,
        step_kind: StepKind::First,
        discount: 1.0,
        info: StepInfo { similarity: sim, solved: false, applied: false },
    };
    Ok((state, tr))
}

pub fn reset<const R: usize, const C: usize>(
    key: PrngKey,
    params: &EnvParams,
    buffer: &TaskBuffer<R, C>,
) -> Result<(EnvState<R, C>, Timestep), EnvError> {
    let (state, tr) = reset_state(key, params, buffer)?;
    let obs = base_observation(&state);
    Ok((state, tr.with_observation(obs)))
}

/// Applies one action without building an observation.
///
/// Stepping a terminal state returns it unchanged with zero reward and
/// `StepKind::Last`. An operation outside `allowed_ops` only advances the
/// step counter and costs the step penalty.
pub fn step_state<const R: usize, const C: usize>(
    state: &EnvState<R, C>,
    action: &Action<R, C>,
    params: &EnvParams,
) -> (EnvState<R, C>, Transition) {
    if state.is_terminal() {
        let tr = Transition {
            reward: 0.0,
            step_kind: StepKind::Last,
            discount: if state.terminated { 0.0 } else { 1.0 },
            info: StepInfo {
                similarity: state.last_similarity,
                solved: false,
                applied: false,
            },
        };
        return (*state, tr);
    }

    let mut next = *state;
    let prev_sim = state.last_similarity;
    let (mut submitted, mut applied) = (false, false);
    if params.allowed_ops.contains(action.op) {
        let out = apply_operation(
            action.op,
            &action.selection,
            &state.working,
            &state.input_grid,
            &state.clipboard,
        );
        next.working = out.working;
        next.clipboard = out.clipboard;
        submitted = out.submitted;
        applied = out.applied;
        if out.working != state.working {
            next.last_similarity = similarity(&next.working, &next.target);
        }
    }

    let new_sim = next.last_similarity;
    let solved = submitted && new_sim == 1.0;
    let reward = compute_reward(prev_sim, new_sim, submitted, solved, params);

    next.step_count += 1;
    next.terminated = submitted;
    next.truncated = !submitted && next.step_count >= params.max_episode_steps;

    let last = next.terminated || next.truncated;
    let tr = Transition {
        reward,
        step_kind: if last { StepKind::Last } else { StepKind::Mid },
        discount: if next.terminated { 0.0 } else { 1.0 },
        info: StepInfo { similarity: new_sim, solved, applied },
    };
    (next, tr)
}

pub fn step<const R: usize, const C: usize>(
    state: &EnvState<R, C>,
    action: &Action<R, C>,
    params: &EnvParams,
) -> (EnvState<R, C>, Timestep) {
    let (next, tr) = step_state(state, action, params);
    let obs = base_observation(&next);
    (next, tr.with_observation(obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{build_task_buffer, Pair, RawTask};

    type Buf = TaskBuffer<5, 5>;

    fn params(mode: Mode) -> EnvParams {
        EnvParams { mode, capacity: CapacityProfile::Mini, ..EnvParams::default() }
    }

    fn one_task() -> Buf {
        let t = RawTask {
            id: "t".into(),
            train: vec![Pair { input: vec![vec![1, 2]], output: vec![vec![2, 2]] }],
            test: vec![Pair { input: vec![vec![3]], output: vec![vec![4]] }],
        };
        build_task_buffer(&[t], 5, 2).unwrap()
    }

    fn op(id: u8) -> OpId {
        OpId::new(id).unwrap()
    }

    #[test]
    fn reward_worked_values() {
        let train = params(Mode::Train);
        let eval = params(Mode::Eval);
        assert!((compute_reward(0.25, 0.75, false, false, &train) - 0.48).abs() < 1e-12);
        assert!((compute_reward(1.0, 1.0, true, true, &eval) - 9.98).abs() < 1e-12);
        assert!((compute_reward(1.0, 1.0, true, true, &train) - 9.98).abs() < 1e-12);
        assert!((compute_reward(0.5, 0.5, true, false, &eval) + 1.02).abs() < 1e-12);
        assert!((compute_reward(0.25, 0.75, false, false, &eval) + 0.02).abs() < 1e-12);
    }

    #[test]
    fn reset_single_task_train() {
        let buf = one_task();
        let (s, ts) = reset(PrngKey::from_seed(1), &params(Mode::Train), &buf).unwrap();
        assert_eq!(s.working.to_rows(), vec![vec![1, 2]]);
        assert_eq!(s.target.to_rows(), vec![vec![2, 2]]);
        assert_eq!(s.step_count, 0);
        assert_eq!(s.last_similarity, 0.5);
        assert_eq!(ts.step_kind, StepKind::First);
        assert_eq!(ts.reward, 0.0);
        assert!(!s.clipboard.present);

        let (again, _) = reset(PrngKey::from_seed(1), &params(Mode::Train), &buf).unwrap();
        assert!(s.bit_eq(&again));
    }

    #[test]
    fn reset_eval_uses_test_pair() {
        let buf = one_task();
        let (s, _) = reset(PrngKey::from_seed(1), &params(Mode::Eval), &buf).unwrap();
        assert_eq!(s.working.to_rows(), vec![vec![3]]);
        assert_eq!(s.target.to_rows(), vec![vec![4]]);
    }

    #[test]
    fn solve_and_submit() {
        let buf = one_task();
        let p = params(Mode::Train);
        let (s, _) = reset(PrngKey::from_seed(1), &p, &buf).unwrap();
        let (s, ts) = step(&s, &Action::new(op(2), SelectionMask::empty()), &p);
        assert!((ts.reward - 0.48).abs() < 1e-12);
        assert_eq!(ts.step_kind, StepKind::Mid);
        let (s, ts) = step(&s, &Action::new(OpId::SUBMIT, SelectionMask::empty()), &p);
        assert!(s.terminated && !s.truncated);
        assert!(ts.info.solved);
        assert_eq!(ts.step_kind, StepKind::Last);
        assert_eq!(ts.discount, 0.0);
        assert!((ts.reward - 9.98).abs() < 1e-12);

        let (s2, ts2) = step(&s, &Action::new(op(1), SelectionMask::empty()), &p);
        assert!(s2.bit_eq(&s));
        assert_eq!(ts2.reward, 0.0);
        assert_eq!(ts2.step_kind, StepKind::Last);
    }

    #[test]
    fn truncation_at_limit() {
        let buf = one_task();
        let p = params(Mode::Train);
        let (mut s, _) = reset(PrngKey::from_seed(5), &p, &buf).unwrap();
        for i in 1..=150u32 {
            let (n, ts) = step(&s, &Action::new(op(31), SelectionMask::empty()), &p);
            assert_eq!(n.step_count, i);
            if i < 150 {
                assert_eq!(ts.step_kind, StepKind::Mid);
            } else {
                assert!(n.truncated && !n.terminated);
                assert_eq!(ts.step_kind, StepKind::Last);
                assert_eq!(ts.discount, 1.0);
            }
            s = n;
        }
    }

    #[test]
    fn disallowed_op_costs_only_step_penalty() {
        let buf = one_task();
        let mut p = params(Mode::Train);
        p.allowed_ops = OpSet::from_ops([op(0), OpId::SUBMIT]);
        let (s, _) = reset(PrngKey::from_seed(1), &p, &buf).unwrap();
        let (n, ts) = step(&s, &Action::new(op(2), SelectionMask::empty()), &p);
        assert_eq!(n.working, s.working);
        assert_eq!(n.step_count, 1);
        assert_eq!(ts.reward, -0.02);
        assert!(!ts.info.applied);
    }

    #[test]
    fn base_observation_sentinels() {
        let buf = one_task();
        let (s, ts) = reset(PrngKey::from_seed(1), &params(Mode::Train), &buf).unwrap();
        let obs = &ts.observation;
        assert_eq!(obs.channels, 1);
        assert_eq!(obs.data.iter().filter(|&&v| v == SENTINEL).count(), 25 - 2);
        let full = EnvState { working: PaddedGrid::<5, 5>::filled(5, 5, 3).unwrap(), ..s };
        assert!(!base_observation(&full).data.contains(&SENTINEL));

        let big = EnvState { working: PaddedGrid::<5, 5>::filled(4, 4, 3).unwrap(), ..s };
        let (shrunk, ts) = step(
            &big,
            &Action::new(op(33), SelectionMask::rect(0, 0, 1, 1)),
            &params(Mode::Train),
        );
        assert_eq!(shrunk.working.dims(), (2, 2));
        assert_eq!(ts.observation.data.iter().filter(|&&v| v == SENTINEL).count(), 21);
    }

    #[test]
    fn params_validation() {
        let mut p = EnvParams::default();
        assert!(p.validate().is_ok());
        p.allowed_ops = OpSet::from_ops([op(0)]);
        assert_eq!(p.validate(), Err(EnvError::NoTerminator));
        p.allowed_ops = OpSet::from_ops([]);
        assert_eq!(p.validate(), Err(EnvError::NoTerminator));
        let mut p = EnvParams::default();
        p.reward.step_penalty = -0.02;
        assert_eq!(p.validate(), Err(EnvError::BadReward("step_penalty")));
        assert!(EnvParams::default().check_capacity::<30, 30>().is_ok());
        assert!(EnvParams::default().check_capacity::<5, 5>().is_err());
    }
}
