//! Action and observation wrappers.
//!
//! Action wrappers turn point, bounding-box or raw-mask parameterizations
//! into the core `(op, mask)` form. Observation wrappers append channels to
//! the working-grid plane. Wrappers hold configuration only; all per-episode
//! data lives in [`EnvState`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{reset_state, Action, EnvError, EnvParams, EnvState, Mode, Observation, StepKind, Timestep};
use crate::grid::{bounding_box, PaddedGrid, SelectionMask};
use crate::ops::{InvalidOpId, OpId};
use crate::prng::PrngStream;
use crate::task::TaskBuffer;

/// Default number of demonstration pairs shown by the contextual wrapper.
pub const DEFAULT_CONTEXT_PAIRS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WrapperError {
    #[error("operation subset must be non-empty and contain submit (34)")]
    NoTerminator,
    #[error("operation subset lists op {0} twice")]
    DuplicateOp(u8),
    #[error(transparent)]
    InvalidOp(#[from] InvalidOpId),
    #[error("action has {got} components, expected {expected}")]
    Arity { got: usize, expected: usize },
    #[error("action component {index} = {value} outside 0..{size}")]
    ComponentOutOfRange { index: usize, value: usize, size: usize },
    #[error("flat action {0} outside the action space")]
    FlatOutOfRange(usize),
    #[error("action space of kind {0:?} cannot be flattened")]
    NotFlattenable(ActionKind),
    #[error("channel {0} cannot be resolved: buffer holds at most {1} demonstration pairs")]
    UnresolvableChannel(String, usize),
}

/// `(row, col, op)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointAction {
    pub row: usize,
    pub col: usize,
    pub op: OpId,
}

/// `(r1, c1, r2, c2, op)`; corners in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBoxAction {
    pub r1: usize,
    pub c1: usize,
    pub r2: usize,
    pub c2: usize,
    pub op: OpId,
}

pub fn point_to_mask<const R: usize, const C: usize>(a: PointAction) -> Action<R, C> {
    Action::new(a.op, SelectionMask::single(a.row, a.col))
}

pub fn bbox_to_mask<const R: usize, const C: usize>(a: BBoxAction) -> Action<R, C> {
    Action::new(a.op, SelectionMask::rect(a.r1, a.c1, a.r2, a.c2))
}

/// Row-major mixed-radix bijection between tuples and flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatSpace {
    dims: Vec<usize>,
    size: usize,
}

impl FlatSpace {
    /// `None` if any dimension is zero or the product overflows.
    pub fn new(dims: Vec<usize>) -> Option<Self> {
        let size = dims
            .iter()
            .try_fold(1usize, |acc, &d| if d == 0 { None } else { acc.checked_mul(d) })?;
        Some(Self { dims, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn encode(&self, tuple: &[usize]) -> Option<usize> {
        if tuple.len() != self.dims.len() {
            return None;
        }
        tuple.iter().zip(&self.dims).try_fold(0usize, |acc, (&x, &d)| {
            (x < d).then(|| acc * d + x)
        })
    }

    pub fn decode(&self, mut flat: usize) -> Option<Vec<usize>> {
        if flat >= self.size {
            return None;
        }
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        Some(out)
    }
}

/// Dense re-indexing of an allowed subset of operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct OpSubset {
    ops: Vec<OpId>,
}

impl OpSubset {
    pub fn new(allowed: &[OpId]) -> Result<Self, WrapperError> {
        if !allowed.contains(&OpId::SUBMIT) {
            return Err(WrapperError::NoTerminator);
        }
        let mut seen = 0u64;
        for op in allowed {
            if seen >> op.get() & 1 == 1 {
                return Err(WrapperError::DuplicateOp(op.get()));
            }
            seen |= 1 << op.get();
        }
        Ok(Self { ops: allowed.to_vec() })
    }

    pub fn all() -> Self {
        Self { ops: OpId::all().collect() }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn op(&self, index: usize) -> Option<OpId> {
        self.ops.get(index).copied()
    }

    pub fn index_of(&self, op: OpId) -> Option<usize> {
        self.ops.iter().position(|&o| o == op)
    }

    pub fn ops(&self) -> &[OpId] {
        &self.ops
    }
}

impl TryFrom<Vec<i64>> for OpSubset {
    type Error = WrapperError;

    fn try_from(v: Vec<i64>) -> Result<Self, Self::Error> {
        let ops = v.into_iter().map(OpId::try_from).collect::<Result<Vec<_>, _>>()?;
        OpSubset::new(&ops)
    }
}

impl From<OpSubset> for Vec<i64> {
    fn from(s: OpSubset) -> Self {
        s.ops.iter().map(|o| o.get() as i64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    /// `(op, bit_0, …, bit_{R·C-1})`.
    Mask,
    /// `(row, col, op)`.
    Point,
    /// `(r1, c1, r2, c2, op)`.
    BBox,
}

/// Compact description of an action's selection, as logged in trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SelectionSummary {
    Point([usize; 2]),
    BBox([usize; 4]),
    /// Bounding box of the raw mask, `None` for an empty mask.
    Mask(Option<[usize; 4]>),
}

/// An action space: parameterization, op subset and optional flattening.
/// The op component indexes into `ops`, so ops outside the subset cannot be
/// expressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub ops: OpSubset,
    pub flat: Option<FlatSpace>,
}

impl ActionSpec {
    pub fn new<const R: usize, const C: usize>(
        kind: ActionKind,
        ops: OpSubset,
        flatten: bool,
    ) -> Result<Self, WrapperError> {
        let mut spec = Self { kind, ops, flat: None };
        if flatten {
            if kind == ActionKind::Mask {
                return Err(WrapperError::NotFlattenable(kind));
            }
            let dims = spec.dims::<R, C>();
            spec.flat = Some(FlatSpace::new(dims).ok_or(WrapperError::NotFlattenable(kind))?);
        }
        Ok(spec)
    }

    /// Size of each tuple component.
    pub fn dims<const R: usize, const C: usize>(&self) -> Vec<usize> {
        let n = self.ops.len();
        match self.kind {
            ActionKind::Point => vec![R, C, n],
            ActionKind::BBox => vec![R, C, R, C, n],
            ActionKind::Mask => {
                let mut d = vec![n];
                d.extend(std::iter::repeat(2).take(R * C));
                d
            }
        }
    }

    pub fn arity<const R: usize, const C: usize>(&self) -> usize {
        match self.kind {
            ActionKind::Point => 3,
            ActionKind::BBox => 5,
            ActionKind::Mask => 1 + R * C,
        }
    }

    /// Converts a tuple into a core action.
    pub fn decode<const R: usize, const C: usize>(
        &self,
        tuple: &[usize],
    ) -> Result<(Action<R, C>, SelectionSummary), WrapperError> {
        let dims = self.dims::<R, C>();
        if tuple.len() != dims.len() {
            return Err(WrapperError::Arity { got: tuple.len(), expected: dims.len() });
        }
        for (index, (&value, &size)) in tuple.iter().zip(&dims).enumerate() {
            if value >= size {
                return Err(WrapperError::ComponentOutOfRange { index, value, size });
            }
        }
        Ok(match self.kind {
            ActionKind::Point => {
                let op = self.ops.ops[tuple[2]];
                let a = PointAction { row: tuple[0], col: tuple[1], op };
                (point_to_mask(a), SelectionSummary::Point([a.row, a.col]))
            }
            ActionKind::BBox => {
                let op = self.ops.ops[tuple[4]];
                let a = BBoxAction { r1: tuple[0], c1: tuple[1], r2: tuple[2], c2: tuple[3], op };
                let norm = [a.r1.min(a.r2), a.c1.min(a.c2), a.r1.max(a.r2), a.c1.max(a.c2)];
                (bbox_to_mask(a), SelectionSummary::BBox(norm))
            }
            ActionKind::Mask => {
                let op = self.ops.ops[tuple[0]];
                let bits = &tuple[1..];
                let mask = SelectionMask::from_fn(|r, c| bits[r * C + c] == 1);
                (Action::new(op, mask), SelectionSummary::Mask(mask_extent(&mask)))
            }
        })
    }

    /// Decodes a flat index; requires a flattened space.
    pub fn decode_flat<const R: usize, const C: usize>(
        &self,
        flat: usize,
    ) -> Result<(Action<R, C>, SelectionSummary), WrapperError> {
        let space = self.flat.as_ref().ok_or(WrapperError::NotFlattenable(self.kind))?;
        let tuple = space.decode(flat).ok_or(WrapperError::FlatOutOfRange(flat))?;
        self.decode(&tuple)
    }

    /// Uniformly random tuple.
    pub fn sample<const R: usize, const C: usize>(&self, rng: &mut PrngStream) -> Vec<usize> {
        self.dims::<R, C>().into_iter().map(|d| rng.below(d)).collect()
    }
}

fn mask_extent<const R: usize, const C: usize>(mask: &SelectionMask<R, C>) -> Option<[usize; 4]> {
    let full = PaddedGrid::<R, C>::filled(R, C, 0).ok()?;
    bounding_box(mask, &full).map(|b| [b.r0, b.c0, b.r1, b.c1])
}

/// Where an observation channel comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelSource {
    Working,
    Answer,
    Input,
    Clipboard,
    DemoInput(usize),
    DemoOutput(usize),
}

impl std::fmt::Display for ChannelSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelSource::Working => f.write_str("working"),
            ChannelSource::Answer => f.write_str("answer"),
            ChannelSource::Input => f.write_str("input"),
            ChannelSource::Clipboard => f.write_str("clipboard"),
            ChannelSource::DemoInput(k) => write!(f, "demo{}.input", k + 1),
            ChannelSource::DemoOutput(k) => write!(f, "demo{}.output", k + 1),
        }
    }
}

/// Which observation wrappers are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    pub answer: bool,
    pub input: bool,
    pub clipboard: bool,
    /// Number of demonstration pairs shown, if the contextual wrapper is on.
    pub contextual: Option<usize>,
}

/// Ordered channel list. The order is always working, answer, input,
/// clipboard, then demo pairs (input before output), restricted to the
/// enabled sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsSpec {
    channels: Vec<ChannelSource>,
}

impl ObsSpec {
    pub fn working_only() -> Self {
        Self { channels: vec![ChannelSource::Working] }
    }

    pub fn from_config(cfg: &ObsConfig) -> Self {
        let mut channels = vec![ChannelSource::Working];
        if cfg.answer {
            channels.push(ChannelSource::Answer);
        }
        if cfg.input {
            channels.push(ChannelSource::Input);
        }
        if cfg.clipboard {
            channels.push(ChannelSource::Clipboard);
        }
        for k in 0..cfg.contextual.unwrap_or(0) {
            channels.push(ChannelSource::DemoInput(k));
            channels.push(ChannelSource::DemoOutput(k));
        }
        Self { channels }
    }

    pub fn channels(&self) -> &[ChannelSource] {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Checks that every demo channel addresses a slot the buffer has.
    pub fn validate<const R: usize, const C: usize>(
        &self,
        buffer: &TaskBuffer<R, C>,
    ) -> Result<(), WrapperError> {
        for ch in &self.channels {
            if let ChannelSource::DemoInput(k) | ChannelSource::DemoOutput(k) = ch {
                if *k >= buffer.max_demo {
                    return Err(WrapperError::UnresolvableChannel(ch.to_string(), buffer.max_demo));
                }
            }
        }
        Ok(())
    }
}

/// Concatenates the spec's channels for one state.
///
/// Demo slots beyond the task's pair count are all-sentinel. In train mode
/// the pair being solved is blanked the same way, keeping the channel count
/// fixed.
pub fn augment_observation<const R: usize, const C: usize>(
    state: &EnvState<R, C>,
    spec: &ObsSpec,
    buffer: &TaskBuffer<R, C>,
    mode: Mode,
) -> Result<Observation, WrapperError> {
    spec.validate(buffer)?;
    Ok(observe_unchecked(state, spec, buffer, mode))
}

pub(crate) fn observe_unchecked<const R: usize, const C: usize>(
    state: &EnvState<R, C>,
    spec: &ObsSpec,
    buffer: &TaskBuffer<R, C>,
    mode: Mode,
) -> Observation {
    let task = state.task_index as usize;
    let count = buffer.demo_count[task];
    let hidden = |k: usize| k >= count || (mode == Mode::Train && k == state.pair_index as usize);
    let mut obs = Observation::with_capacity(spec.num_channels(), R, C);
    for ch in &spec.channels {
        match *ch {
            ChannelSource::Working => obs.push_grid(&state.working),
            ChannelSource::Answer => obs.push_grid(&state.target),
            ChannelSource::Input => obs.push_grid(&state.input_grid),
            ChannelSource::Clipboard => {
                if state.clipboard.present {
                    obs.push_grid(&state.clipboard.grid)
                } else {
                    obs.push_blank()
                }
            }
            ChannelSource::DemoInput(k) if !hidden(k) => obs.push_grid(buffer.demo_input(task, k)),
            ChannelSource::DemoOutput(k) if !hidden(k) => {
                obs.push_grid(buffer.demo_output(task, k))
            }
            ChannelSource::DemoInput(_) | ChannelSource::DemoOutput(_) => obs.push_blank(),
        }
    }
    obs
}

/// Splices a fresh episode into a lane whose timestep is terminal.
///
/// The reset key is the first child of the state's carried key. The returned
/// timestep keeps the terminal step's reward, step kind, discount and info,
/// but carries the new episode's first observation.
pub fn auto_reset<const R: usize, const C: usize>(
    state: EnvState<R, C>,
    timestep: Timestep,
    params: &EnvParams,
    buffer: &TaskBuffer<R, C>,
    observe: impl Fn(&EnvState<R, C>) -> Observation,
) -> Result<(EnvState<R, C>, Timestep), EnvError> {
    if timestep.step_kind != StepKind::Last {
        return Ok((state, timestep));
    }
    let (fresh, _) = reset_state(state.rng.child(0), params, buffer)?;
    let observation = observe(&fresh);
    Ok((fresh, Timestep { observation, ..timestep }))
}
