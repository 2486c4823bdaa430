//! Episodic Markov games: a normal-form game as a one-step environment, the
//! 9×9 grid Stag Hunt, and random exactly-linear games with known kernels.

mod grid;
mod matrix;
mod synthetic;

pub use grid::{
    DynamicStagHunt, GridAction, GridConfig, GridState, Interaction, Inventory, Resource,
    GRID_FEATURE_DIM, GRID_OBS_DIM, GRID_SIZE,
};
pub use matrix::{parse_payoff_file, MatrixGame};
pub use synthetic::{SyntheticConfig, SyntheticLinearMg};

use std::fmt::Debug;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linear_fa::FeatureMap;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("player {player} chose action {action} but has {count} actions")]
    InvalidAction {
        player: usize,
        action: usize,
        count: usize,
    },
    #[error("expected {expected} actions in the joint action, got {got}")]
    JointArity { expected: usize, got: usize },
    #[error("stage {h} is outside the horizon {horizon}")]
    StageOutOfRange { h: usize, horizon: usize },
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("payoff file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub action_counts: Vec<usize>,
    pub horizon: usize,
    pub feature_dim: usize,
    /// Bounds on every per-step, per-player reward.
    pub reward_range: (f64, f64),
    /// Whether the exact transition kernel is available.
    pub generative: bool,
}

impl EnvSpec {
    pub fn players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn num_joint(&self) -> usize {
        self.action_counts.iter().product()
    }

    /// Row-major decoding of a joint index, player 0 most significant.
    pub fn joint_actions(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.players()];
        for (slot, &c) in out.iter_mut().zip(&self.action_counts).rev() {
            *slot = joint % c;
            joint /= c;
        }
        out
    }

    pub fn check_joint(&self, joint: &[usize]) -> Result<(), EnvError> {
        if joint.len() != self.players() {
            return Err(EnvError::JointArity {
                expected: self.players(),
                got: joint.len(),
            });
        }
        for (player, (&action, &count)) in joint.iter().zip(&self.action_counts).enumerate() {
            if action >= count {
                return Err(EnvError::InvalidAction { player, action, count });
            }
        }
        Ok(())
    }

    pub fn check_stage(&self, h: usize) -> Result<(), EnvError> {
        if h >= self.horizon {
            return Err(EnvError::StageOutOfRange {
                h,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub rewards: Vec<f64>,
    pub next: S,
}

/// An episodic game with stages `0..horizon`. Implementations are pure
/// functions of their inputs and the supplied RNG.
pub trait MarkovGame: FeatureMap<State: Clone + Debug + PartialEq + Serialize + DeserializeOwned> {
    fn spec(&self) -> &EnvSpec;

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        joint: &[usize],
        h: usize,
        rng: &mut R,
    ) -> Result<Step<Self::State>, EnvError>;
}

/// Games whose transition kernel and mean rewards are known exactly.
pub trait GenerativeGame: MarkovGame {
    /// Every state reachable at stage `h`.
    fn states(&self, h: usize) -> Vec<Self::State>;

    /// Initial-state distribution.
    fn initial_distribution(&self) -> Vec<(Self::State, f64)>;

    /// Exact next-state distribution from `state` under `joint` at stage `h`.
    fn kernel(&self, state: &Self::State, joint: &[usize], h: usize) -> Vec<(Self::State, f64)>;

    fn mean_rewards(&self, state: &Self::State, joint: &[usize], h: usize) -> Vec<f64>;
}
