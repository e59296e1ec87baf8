//! A fully wrapped environment: task buffer, parameters, observation
//! channels, action space and auto-reset, bundled behind one handle.

use std::sync::Arc;

use crate::env::{reset_state, step_state, Action, EnvParams, EnvState, Observation, StepKind, Timestep};
use crate::prng::PrngKey;
use crate::task::TaskBuffer;
use crate::wrappers::{self, observe_unchecked, ActionSpec, ObsSpec, SelectionSummary, WrapperError};
use crate::Error;

#[derive(Debug, Clone)]
pub struct Environment<const R: usize = 30, const C: usize = 30> {
    buffer: Arc<TaskBuffer<R, C>>,
    params: EnvParams,
    obs: ObsSpec,
    actions: ActionSpec,
    auto_reset: bool,
}

impl<const R: usize, const C: usize> Environment<R, C> {
    pub fn new(
        buffer: Arc<TaskBuffer<R, C>>,
        params: EnvParams,
        obs: ObsSpec,
        actions: ActionSpec,
        auto_reset: bool,
    ) -> Result<Self, Error> {
        params.validate()?;
        params.check_capacity::<R, C>()?;
        if buffer.is_empty() {
            return Err(crate::env::EnvError::EmptyBuffer.into());
        }
        obs.validate(&buffer)?;
        Ok(Self { buffer, params, obs, actions, auto_reset })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn buffer(&self) -> &TaskBuffer<R, C> {
        &self.buffer
    }

    pub fn obs_spec(&self) -> &ObsSpec {
        &self.obs
    }

    pub fn action_spec(&self) -> &ActionSpec {
        &self.actions
    }

    pub fn auto_reset(&self) -> bool {
        self.auto_reset
    }

    /// `(channels, rows, cols)`.
    pub fn observation_shape(&self) -> (usize, usize, usize) {
        (self.obs.num_channels(), R, C)
    }

    pub fn observe(&self, state: &EnvState<R, C>) -> Observation {
        observe_unchecked(state, &self.obs, &self.buffer, self.params.mode)
    }

    pub fn reset(&self, key: PrngKey) -> (EnvState<R, C>, Timestep) {
        let (state, tr) = reset_state(key, &self.params, &self.buffer)
            .expect("buffer checked non-empty at construction");
        let obs = self.observe(&state);
        (state, tr.with_observation(obs))
    }

    /// One step. With auto-reset enabled, a terminal step is followed by an
    /// immediate reset of the lane.
    pub fn step(&self, state: &EnvState<R, C>, action: &Action<R, C>) -> (EnvState<R, C>, Timestep) {
        self.step_with(state, action, self.auto_reset)
    }

    pub fn step_with(
        &self,
        state: &EnvState<R, C>,
        action: &Action<R, C>,
        auto_reset: bool,
    ) -> (EnvState<R, C>, Timestep) {
        let (next, tr) = step_state(state, action, &self.params);
        let ts = tr.with_observation(self.observe(&next));
        if auto_reset && ts.step_kind == StepKind::Last {
            return wrappers::auto_reset(next, ts, &self.params, &self.buffer, |s| self.observe(s))
                .expect("buffer checked non-empty at construction");
        }
        (next, ts)
    }

    /// Decodes a tuple in this environment's action space.
    pub fn decode_action(
        &self,
        tuple: &[usize],
    ) -> Result<(Action<R, C>, SelectionSummary), WrapperError> {
        self.actions.decode(tuple)
    }

    pub fn decode_flat_action(
        &self,
        flat: usize,
    ) -> Result<(Action<R, C>, SelectionSummary), WrapperError> {
        self.actions.decode_flat(flat)
    }
}
