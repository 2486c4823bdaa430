//! Run configuration: one TOML file fully determines a run.

use std::path::{Path, PathBuf};

use rqre_core::envs::{
    DynamicStagHunt, EnvSpec, GridConfig, MarkovGame, MatrixGame, SyntheticConfig, SyntheticLinearMg,
};
use rqre_core::eval::EvalConfig;
use rqre_core::linear_fa::OviHyper;
use rqre_core::ovi::{StageSharing, TrainConfig};
use rqre_core::risk::RiskSpec;
use rqre_core::stage_solver::{Method, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "RQRE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Episodes between resumable checkpoints.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    pub env: EnvConfig,
    pub train: TrainSection,
    pub solver: SolverSection,
    #[serde(default = "risk_neutral")]
    pub env_risk: RiskSpec,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
}

fn default_checkpoint_every() -> usize {
    100
}

fn risk_neutral() -> RiskSpec {
    RiskSpec::RiskNeutral
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Matrix {
        /// `stag_hunt` or `coordination`; ignored when `payoff_file` is set.
        #[serde(default = "default_game")]
        game: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        /// Relative paths resolve against the config file's directory.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payoff_file: Option<PathBuf>,
    },
    Grid {
        #[serde(default = "default_grid_horizon")]
        horizon: usize,
        #[serde(default = "yes")]
        random_spawn: bool,
    },
    Synthetic {
        num_states: usize,
        dim: usize,
        horizon: usize,
        action_counts: Vec<usize>,
        #[serde(default)]
        construction_seed: u64,
        #[serde(default)]
        bernoulli_rewards: bool,
    },
}

fn default_game() -> String {
    "stag_hunt".into()
}

fn default_grid_horizon() -> usize {
    75
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: usize,
    pub horizon: usize,
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    #[serde(default = "one")]
    pub update_frequency: usize,
    #[serde(default = "unit")]
    pub reward_scale: f64,
    #[serde(default = "per_stage")]
    pub stage_sharing: StageSharing,
    #[serde(default = "one")]
    pub next_state_samples: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "unit")]
    pub lambda: f64,
    /// Overrides the entropy-aware value cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_clip: Option<f64>,
}

fn default_buffer() -> usize {
    1000
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn per_stage() -> StageSharing {
    StageSharing::PerStage
}

fn default_beta() -> f64 {
    0.1
}

/// A scalar shared by all players or one value per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPlayer {
    All(f64),
    Each(Vec<f64>),
}

impl PerPlayer {
    pub fn expand(&self, players: usize) -> Vec<f64> {
        match self {
            PerPlayer::All(v) => vec![*v; players],
            PerPlayer::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: PerPlayer,
    pub tau: PerPlayer,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_method() -> String {
    "fixed_point".into()
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    1000
}

fn default_damping() -> f64 {
    0.5
}

impl SolverSection {
    pub fn build(&self, players: usize) -> Result<SolverConfig, CliError> {
        let method: Method = self
            .method
            .parse()
            .map_err(|e| CliError::Config(format!("solver.method: {e}")))?;
        let cfg = SolverConfig {
            epsilon: self.epsilon.expand(players),
            tau: self.tau.expand(players),
            method,
            max_iters: self.max_iters,
            tol: self.tol,
            damping: self.damping,
        };
        cfg.validate(players).map_err(|e| CliError::Config(format!("solver: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub tau: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// A constructed environment.
pub enum Env {
    Matrix(MatrixGame),
    Grid(DynamicStagHunt),
    Synthetic(SyntheticLinearMg),
}

/// Runs `$body` with `$g` bound to the concrete environment.
#[macro_export]
macro_rules! with_env {
    ($env:expr, $g:ident => $body:expr) => {
        match $env {
            $crate::config::Env::Matrix($g) => $body,
            $crate::config::Env::Grid($g) => $body,
            $crate::config::Env::Synthetic($g) => $body,
        }
    };
}

impl Env {
    pub fn spec(&self) -> &EnvSpec {
        with_env!(self, g => g.spec())
    }
}

impl RunConfig {
    /// Parses a config file and applies the seed override.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let EnvConfig::Matrix { payoff_file: Some(p), .. } = &mut cfg.env {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{seed}` is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical serialization, stored as the run's config snapshot.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.snapshot().as_bytes()))
    }

    pub fn build_env(&self) -> Result<Env, CliError> {
        let err = |e: rqre_core::envs::EnvError| CliError::Config(format!("env: {e}"));
        Ok(match &self.env {
            EnvConfig::Matrix { game, alpha, payoff_file } => Env::Matrix(match payoff_file {
                Some(p) => MatrixGame::from_file(p).map_err(err)?,
                None => match game.as_str() {
                    "stag_hunt" => MatrixGame::stag_hunt(),
                    "coordination" => MatrixGame::coordination(alpha.unwrap_or(1.0)),
                    other => {
                        return Err(CliError::Config(format!(
                            "env.game: unknown game `{other}` (stag_hunt, coordination)"
                        )))
                    }
                },
            }),
            EnvConfig::Grid { horizon, random_spawn } => Env::Grid(
                DynamicStagHunt::new(GridConfig {
                    horizon: *horizon,
                    random_spawn: *random_spawn,
                })
                .map_err(err)?,
            ),
            EnvConfig::Synthetic {
                num_states,
                dim,
                horizon,
                action_counts,
                construction_seed,
                bernoulli_rewards,
            } => Env::Synthetic(
                SyntheticLinearMg::new(SyntheticConfig {
                    num_states: *num_states,
                    dim: *dim,
                    horizon: *horizon,
                    action_counts: action_counts.clone(),
                    seed: *construction_seed,
                    bernoulli_rewards: *bernoulli_rewards,
                })
                .map_err(err)?,
            ),
        })
    }

    pub fn train_config(&self, spec: &EnvSpec) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let solver = self.solver.build(spec.players())?;
        let mut hyper = OviHyper::auto(t.beta, t.lambda, t.horizon, &spec.action_counts, &solver.epsilon);
        if let Some(b) = t.b_clip {
            hyper.b_clip = b;
        }
        let cfg = TrainConfig {
            episodes: t.episodes,
            horizon: t.horizon,
            solver,
            hyper,
            buffer_capacity: t.buffer_capacity,
            update_frequency: t.update_frequency,
            env_risk: self.env_risk.clone(),
            seed: self.seed,
            reward_scale: t.reward_scale,
            stage_sharing: t.stage_sharing,
            next_state_samples: t.next_state_samples,
        };
        cfg.validate(spec).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), CliError> {
        let env = self.build_env()?;
        self.train_config(env.spec())?;
        self.eval.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.checkpoint_every == 0 {
            return Err(CliError::Config("checkpoint_every must be positive".into()));
        }
        if let Some(s) = &self.sweep {
            if s.tau.is_empty() || s.epsilon.is_empty() {
                return Err(CliError::Config("sweep axes must be nonempty".into()));
            }
        }
        Ok(())
    }

    /// This config with one sweep cell's `τ` and `ε` and its own directory.
    pub fn cell(&self, tau: f64, epsilon: f64) -> Self {
        let mut c = self.clone();
        c.sweep = None;
        c.solver.tau = PerPlayer::All(tau);
        c.solver.epsilon = PerPlayer::All(epsilon);
        c.output_dir = self.output_dir.join(format!("tau_{tau}__eps_{epsilon}"));
        c
    }
}
