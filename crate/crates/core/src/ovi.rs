//! Optimistic value iteration for risk-sensitive quantal response
//! equilibria.
//!
//! Every `update_frequency` episodes the learner runs a backward pass over
//! its transition buffer: next-state values come from solving the stage game
//! of the current optimistic Q estimates, regression targets add the
//! environment-risk adjusted continuation to the scaled reward, and ridge
//! regression refits each stage. Episodes are executed with the stage
//! equilibria of the current estimates at the visited states.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{EnvError, GenerativeGame, MarkovGame};
use crate::linear_fa::{
    EllipticalAudit, FaError, FittedDesign, OviHyper, PotentialReport, RidgeDesign,
    StageCheckpoint,
};
use crate::risk::{env_risk_estimate, FiniteDistribution, RiskError, RiskSpec};
use crate::stage_solver::{
    profile_value, solve_unchecked, MixedProfile, SolveDiagnostics, SolverConfig, SolverError,
    StagePayoff,
};

/// Window of the moving-average team return in the training log.
pub const RETURN_WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum OviError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("environment step failed at episode {episode}, stage {h}: {source}")]
    Env {
        episode: usize,
        h: usize,
        #[source]
        source: EnvError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Fa(#[from] FaError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("snapshot does not match this configuration: {0}")]
    Snapshot(String),
}

/// Whether each stage has its own regression or all stages share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSharing {
    PerStage,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub solver: SolverConfig,
    pub hyper: OviHyper,
    /// Most recent transitions kept per regression (per stage, or overall
    /// when stages are shared).
    pub buffer_capacity: usize,
    /// Refit every this many episodes.
    pub update_frequency: usize,
    pub env_risk: RiskSpec,
    pub seed: u64,
    /// Rewards are divided by this before regression.
    pub reward_scale: f64,
    pub stage_sharing: StageSharing,
    /// Next states drawn per transition; more than one needs a generative
    /// environment.
    pub next_state_samples: usize,
}

impl TrainConfig {
    pub fn validate(&self, spec: &crate::envs::EnvSpec) -> Result<(), OviError> {
        let bad = |m: String| Err(OviError::Config(m));
        if self.episodes == 0 || self.horizon == 0 || self.buffer_capacity == 0 || self.update_frequency == 0 {
            return bad("episodes, horizon, buffer_capacity and update_frequency must be positive".into());
        }
        if self.horizon != spec.horizon {
            return bad(format!(
                "horizon {} does not match the environment's {}",
                self.horizon, spec.horizon
            ));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad(format!("reward_scale must be positive, got {}", self.reward_scale));
        }
        if self.next_state_samples == 0 {
            return bad("next_state_samples must be at least 1".into());
        }
        if self.next_state_samples > 1 && !spec.generative {
            return bad("next_state_samples > 1 needs a generative environment".into());
        }
        self.solver.validate(spec.players())?;
        self.hyper.validate()?;
        self.env_risk.validate()?;
        Ok(())
    }

    /// Value cap at stage `h`: the global cap, tightened to what the
    /// remaining horizon can reach.
    pub fn stage_cap(&self, h: usize, action_counts: &[usize]) -> f64 {
        stage_cap(&self.hyper, &self.solver, self.horizon, h, action_counts)
    }
}

fn stage_cap(hyper: &OviHyper, solver: &SolverConfig, horizon: usize, h: usize, action_counts: &[usize]) -> f64 {
    let per_step = action_counts
        .iter()
        .zip(&solver.epsilon)
        .map(|(&a, &e)| 1.0 + (a as f64).ln() / e)
        .fold(0.0, f64::max);
    hyper.b_clip.min((horizon - h) as f64 * per_step)
}

/// One observed step, with any extra next-state samples drawn from the same
/// state and joint action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<S> {
    pub episode: usize,
    pub h: usize,
    pub state: S,
    pub joint: Vec<usize>,
    /// unscaled rewards of the realized step
    pub rewards: Vec<f64>,
    /// `next[0]` is the realized next state
    pub next: Vec<S>,
}

/// Frozen learner: one fitted regression per stage (or one shared), plus
/// everything needed to rebuild stage games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedAgents {
    pub sharing: StageSharing,
    pub horizon: usize,
    pub action_counts: Vec<usize>,
    pub feature_dim: usize,
    pub hyper: OviHyper,
    pub solver: SolverConfig,
    /// `None` until the first refit; such stages estimate `Q ≡ cap`.
    pub models: Vec<Option<FittedDesign>>,
}

impl TrainedAgents {
    /// Rebuilds frozen agents from saved regressions. A design that never
    /// absorbed data was never fitted.
    pub fn from_checkpoint(
        spec: &crate::envs::EnvSpec,
        cfg: &TrainConfig,
        stages: &[StageCheckpoint],
    ) -> Result<Self, OviError> {
        let expected = match cfg.stage_sharing {
            StageSharing::PerStage => cfg.horizon,
            StageSharing::Shared => 1,
        };
        if stages.len() != expected {
            return Err(OviError::Snapshot(format!(
                "expected {expected} regressions, checkpoint has {}",
                stages.len()
            )));
        }
        let mut models = Vec::with_capacity(stages.len());
        for s in stages {
            if s.design.dim() != spec.feature_dim || s.design.players() != spec.players() {
                return Err(OviError::Snapshot("design shape differs from the environment".into()));
            }
            s.design.validate()?;
            models.push(if s.design.count() > 0 { Some(s.design.fit()?) } else { None });
        }
        Ok(Self {
            sharing: cfg.stage_sharing,
            horizon: cfg.horizon,
            action_counts: spec.action_counts.clone(),
            feature_dim: spec.feature_dim,
            hyper: cfg.hyper,
            solver: cfg.solver.clone(),
            models,
        })
    }

    fn model(&self, h: usize) -> Option<&FittedDesign> {
        match self.sharing {
            StageSharing::PerStage => self.models[h].as_ref(),
            StageSharing::Shared => self.models[0].as_ref(),
        }
    }

    pub fn stage_cap(&self, h: usize) -> f64 {
        stage_cap(&self.hyper, &self.solver, self.horizon, h, &self.action_counts)
    }

    /// Ridge weights of `player` at stage `h` (zeros before the first refit).
    pub fn weights(&self, h: usize, player: usize) -> Vec<f64> {
        self.model(h)
            .map_or_else(|| vec![0.0; self.feature_dim], |m| m.weights(player).to_vec())
    }

    /// Per-player Q tensor at `(state, h)`; `optimistic` adds the bonus.
    pub fn q_tensor<G: MarkovGame>(&self, env: &G, state: &G::State, h: usize, optimistic: bool) -> StagePayoff {
        let spec = env.spec();
        let n = spec.players();
        let joints = spec.num_joint();
        let cap = self.stage_cap(h);
        let mut tensors = vec![vec![cap; joints]; n];
        if let Some(model) = self.model(h) {
            let hyper = OviHyper { b_clip: cap, ..self.hyper };
            let mut phi = vec![0.0; self.feature_dim];
            for j in 0..joints {
                env.evaluate(state, &spec.joint_actions(j), h, &mut phi);
                let bonus = if optimistic { model.bonus(&phi, hyper.beta) } else { 0.0 };
                for (i, t) in tensors.iter_mut().enumerate() {
                    t[j] = (model.linear(i, &phi) + bonus).clamp(0.0, cap);
                }
            }
        }
        StagePayoff::new(spec.action_counts.clone(), tensors).expect("well-formed tensor")
    }

    /// Stage equilibrium of the estimated game at `(state, h)`.
    pub fn policy<G: MarkovGame>(
        &self,
        env: &G,
        state: &G::State,
        h: usize,
        optimistic: bool,
    ) -> (StagePayoff, MixedProfile, SolveDiagnostics) {
        let payoff = self.q_tensor(env, state, h, optimistic);
        let (profile, diag) = solve_unchecked(&payoff, &self.solver, &MixedProfile::uniform(payoff.action_counts()));
        (payoff, profile, diag)
    }

    /// Per-player `V̂(state)` at stage `h`: the policy-risk value of the
    /// stage equilibrium (0 past the horizon).
    pub fn values<G: MarkovGame>(&self, env: &G, state: &G::State, h: usize, optimistic: bool) -> Vec<f64> {
        let n = env.spec().players();
        if h >= self.horizon {
            return vec![0.0; n];
        }
        let (payoff, profile, _) = self.policy(env, state, h, optimistic);
        (0..n)
            .map(|i| profile_value(&payoff, &profile, i, self.solver.epsilon[i], self.solver.tau[i]))
            .collect()
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub episode: usize,
    /// unscaled sum of all players' rewards
    pub team_return: f64,
    /// mean team return over the last `RETURN_WINDOW` episodes
    pub team_return_ma: f64,
    /// bonus at the executed joint action, averaged over stages and players
    pub mean_bonus: f64,
    pub solver_iterations: usize,
    pub unconverged_solves: usize,
    /// mean over stages of what the exploitability hook reported
    pub exploitability: Option<f64>,
}

impl TrainRow {
    pub const CSV_HEADER: &'static str =
        "episode,team_return,team_return_ma,mean_bonus,solver_iterations,unconverged_solves,exploitability";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode,
            self.team_return,
            self.team_return_ma,
            self.mean_bonus,
            self.solver_iterations,
            self.unconverged_solves,
            self.exploitability.map_or(String::new(), |e| e.to_string())
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
    /// one report per regression (stage, or the shared one)
    pub potential: Vec<PotentialReport>,
    /// regression targets outside `[0, 1 + B]` before clipping
    pub clipped_targets: usize,
    /// whether training stopped early at a hook's request
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn potential_holds(&self) -> bool {
        self.potential.iter().all(|p| p.passes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookAction {
    Continue,
    Stop,
}

/// Observers of a training run. All methods have no-op defaults.
pub trait TrainHooks<S> {
    /// Called with the executed stage policy; a returned value is logged as
    /// that stage's exploitability.
    fn stage_policy(&mut self, _episode: usize, _h: usize, _state: &S, _profile: &MixedProfile) -> Option<f64> {
        None
    }

    fn transition(&mut self, _t: &Transition<S>) {}

    fn episode_end(&mut self, _row: &TrainRow) -> HookAction {
        HookAction::Continue
    }

    /// Called every `snapshot_every()` episodes with the state needed to
    /// resume.
    fn snapshot(&mut self, _snap: &TrainerSnapshot<S>) -> Result<(), OviError> {
        Ok(())
    }

    fn snapshot_every(&self) -> Option<usize> {
        None
    }
}

pub struct NoHooks;

impl<S> TrainHooks<S> for NoHooks {}

/// Exploitability of each executed stage policy against the true stage game
/// of a normal-form environment, in scaled reward units.
pub struct TrueExploitability {
    pub payoff: StagePayoff,
    pub solver: SolverConfig,
}

impl TrueExploitability {
    pub fn new(payoff: &StagePayoff, reward_scale: f64, solver: SolverConfig) -> Self {
        Self {
            payoff: payoff.map(|_, _, v| v / reward_scale),
            solver,
        }
    }
}

impl<S> TrainHooks<S> for TrueExploitability {
    fn stage_policy(&mut self, _episode: usize, _h: usize, _state: &S, profile: &MixedProfile) -> Option<f64> {
        Some(crate::stage_solver::exploitability_with(&self.payoff, profile, &self.solver).max)
    }
}

/// Everything needed to continue a run bit-identically from `next_episode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSnapshot<S> {
    pub next_episode: usize,
    pub buffers: Vec<VecDeque<Transition<S>>>,
    pub recent_returns: VecDeque<f64>,
    pub clipped_targets: usize,
    /// whether each regression has been fitted
    pub fitted: Vec<bool>,
    #[serde(skip)]
    pub stages: Vec<StageCheckpoint>,
}

/// State of a run in progress.
pub struct Trainer<'a, G: MarkovGame> {
    env: &'a G,
    cfg: TrainConfig,
    buffers: Vec<VecDeque<Transition<G::State>>>,
    designs: Vec<RidgeDesign>,
    audits: Vec<EllipticalAudit>,
    agents: TrainedAgents,
    recent_returns: VecDeque<f64>,
    clipped_targets: usize,
    next_episode: usize,
}

fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64);
    rng
}

fn sample_joint<R: Rng + ?Sized>(profile: &MixedProfile, rng: &mut R) -> Vec<usize> {
    (0..profile.num_players())
        .map(|i| {
            WeightedIndex::new(profile.player(i))
                .expect("quantal responses have full support")
                .sample(rng)
        })
        .collect()
}

impl<'a, G> Trainer<'a, G>
where
    G: MarkovGame,
    G::State: Eq + Hash,
{
    pub fn new(env: &'a G, cfg: TrainConfig) -> Result<Self, OviError> {
        cfg.validate(env.spec())?;
        let spec = env.spec();
        let regressions = match cfg.stage_sharing {
            StageSharing::PerStage => cfg.horizon,
            StageSharing::Shared => 1,
        };
        let d = env.dim();
        let designs = (0..regressions)
            .map(|_| RidgeDesign::new(d, spec.players(), cfg.hyper.lambda))
            .collect::<Result<_, _>>()?;
        let audits = (0..regressions).map(|_| EllipticalAudit::new(d, cfg.hyper.lambda)).collect();
        let agents = TrainedAgents {
            sharing: cfg.stage_sharing,
            horizon: cfg.horizon,
            action_counts: spec.action_counts.clone(),
            feature_dim: d,
            hyper: cfg.hyper,
            solver: cfg.solver.clone(),
            models: vec![None; regressions],
        };
        Ok(Self {
            env,
            buffers: vec![VecDeque::new(); regressions],
            designs,
            audits,
            agents,
            recent_returns: VecDeque::new(),
            clipped_targets: 0,
            next_episode: 0,
            cfg,
        })
    }

    /// Continues from a snapshot taken by an identically configured run.
    pub fn resume(env: &'a G, cfg: TrainConfig, snap: TrainerSnapshot<G::State>) -> Result<Self, OviError> {
        let mut t = Self::new(env, cfg)?;
        let n = t.designs.len();
        if snap.buffers.len() != n || snap.stages.len() != n || snap.fitted.len() != n {
            return Err(OviError::Snapshot(format!(
                "expected {n} regressions, snapshot has {}",
                snap.stages.len()
            )));
        }
        for (k, stage) in snap.stages.into_iter().enumerate() {
            if stage.design.dim() != env.dim() || stage.design.lambda() != t.cfg.hyper.lambda {
                return Err(OviError::Snapshot("design shape or lambda differs".into()));
            }
            stage.design.validate()?;
            t.agents.models[k] = if snap.fitted[k] { Some(stage.design.fit()?) } else { None };
            t.designs[k] = stage.design;
            t.audits[k] = stage.audit;
        }
        t.buffers = snap.buffers;
        t.recent_returns = snap.recent_returns;
        t.clipped_targets = snap.clipped_targets;
        t.next_episode = snap.next_episode;
        Ok(t)
    }

    pub fn next_episode(&self) -> usize {
        self.next_episode
    }

    pub fn agents(&self) -> &TrainedAgents {
        &self.agents
    }

    pub fn snapshot(&self) -> TrainerSnapshot<G::State> {
        TrainerSnapshot {
            next_episode: self.next_episode,
            buffers: self.buffers.clone(),
            recent_returns: self.recent_returns.clone(),
            clipped_targets: self.clipped_targets,
            fitted: self.agents.models.iter().map(Option::is_some).collect(),
            stages: self
                .designs
                .iter()
                .zip(&self.audits)
                .map(|(design, audit)| StageCheckpoint {
                    design: design.clone(),
                    audit: audit.clone(),
                })
                .collect(),
        }
    }

    fn regression_index(&self, h: usize) -> usize {
        match self.cfg.stage_sharing {
            StageSharing::PerStage => h,
            StageSharing::Shared => 0,
        }
    }

    /// Runs the remaining episodes.
    pub fn run(mut self, hooks: &mut impl TrainHooks<G::State>) -> Result<(TrainedAgents, TrainLog), OviError> {
        let mut rows = Vec::new();
        let mut stopped_early = false;
        while self.next_episode < self.cfg.episodes {
            let k = self.next_episode;
            if k > 0 && k % self.cfg.update_frequency == 0 {
                self.refit()?;
            }
            let row = self.run_episode(k, hooks)?;
            self.next_episode += 1;
            let action = hooks.episode_end(&row);
            rows.push(row);
            if let Some(every) = hooks.snapshot_every() {
                if every > 0 && self.next_episode % every == 0 {
                    hooks.snapshot(&self.snapshot())?;
                }
            }
            if action == HookAction::Stop {
                stopped_early = true;
                break;
            }
        }
        // the final snapshot carries the designs the returned agents act on
        if let Some(every) = hooks.snapshot_every() {
            let done = self.next_episode == self.cfg.episodes;
            if done && (every == 0 || self.next_episode % every != 0) {
                hooks.snapshot(&self.snapshot())?;
            }
        }
        let potential: Vec<PotentialReport> = self.audits.iter().map(|a| a.report()).collect();
        // the bound is only guaranteed when every term φᵀΛ⁻¹φ is at most 1
        debug_assert!(
            self.cfg.hyper.lambda < 1.0 || potential.iter().all(|p| p.passes()),
            "elliptical potential exceeded its bound: {potential:?}"
        );
        let log = TrainLog {
            rows,
            potential,
            clipped_targets: self.clipped_targets,
            stopped_early,
        };
        Ok((self.agents, log))
    }

    fn run_episode(&mut self, k: usize, hooks: &mut impl TrainHooks<G::State>) -> Result<TrainRow, OviError> {
        let env = self.env;
        let h_total = self.cfg.horizon;
        let mut rng = episode_rng(self.cfg.seed, k);
        let mut state = env.reset(&mut rng);
        let mut team_return = 0.0;
        let mut bonus_sum = 0.0;
        let mut iterations = 0;
        let mut unconverged = 0;
        let mut gaps = Vec::new();
        let mut phi = vec![0.0; env.dim()];
        for h in 0..h_total {
            let (_, profile, diag) = self.agents.policy(env, &state, h, true);
            iterations += diag.iterations;
            if !diag.converged {
                unconverged += 1;
            }
            if let Some(g) = hooks.stage_policy(k, h, &state, &profile) {
                gaps.push(g);
            }
            let joint = sample_joint(&profile, &mut rng);
            let step = env
                .step(&state, &joint, h, &mut rng)
                .map_err(|source| OviError::Env { episode: k, h, source })?;
            let mut next = vec![step.next.clone()];
            for _ in 1..self.cfg.next_state_samples {
                let extra = env
                    .step(&state, &joint, h, &mut rng)
                    .map_err(|source| OviError::Env { episode: k, h, source })?;
                next.push(extra.next);
            }
            env.evaluate(&state, &joint, h, &mut phi);
            let r = self.regression_index(h);
            self.audits[r].record(&phi);
            if let Some(model) = self.agents.model(h) {
                bonus_sum += model.bonus(&phi, self.cfg.hyper.beta);
            } else {
                bonus_sum += self.agents.stage_cap(h);
            }
            team_return += step.rewards.iter().sum::<f64>();
            let transition = Transition {
                episode: k,
                h,
                state: state.clone(),
                joint,
                rewards: step.rewards,
                next,
            };
            hooks.transition(&transition);
            let buffer = &mut self.buffers[r];
            if buffer.len() == self.cfg.buffer_capacity {
                buffer.pop_front();
            }
            buffer.push_back(transition);
            state = step.next;
        }
        if self.recent_returns.len() == RETURN_WINDOW {
            self.recent_returns.pop_front();
        }
        self.recent_returns.push_back(team_return);
        Ok(TrainRow {
            episode: k,
            team_return,
            team_return_ma: self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64,
            mean_bonus: bonus_sum / h_total as f64,
            solver_iterations: iterations,
            unconverged_solves: unconverged,
            exploitability: if gaps.is_empty() {
                None
            } else {
                Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
            },
        })
    }

    /// Backward pass over the buffers.
    fn refit(&mut self) -> Result<(), OviError> {
        for r in (0..self.buffers.len()).rev() {
            let buffer = std::mem::take(&mut self.buffers[r]);
            let result = self.refit_one(r, &buffer);
            self.buffers[r] = buffer;
            result?;
        }
        Ok(())
    }

    fn refit_one(&mut self, r: usize, transitions: &VecDeque<Transition<G::State>>) -> Result<(), OviError> {
        let env = self.env;
        let mut cache: HashMap<(usize, &G::State), Vec<f64>> = HashMap::new();
        let mut targets = Vec::with_capacity(transitions.len());
        for t in transitions {
            for x in &t.next {
                if !cache.contains_key(&(t.h + 1, x)) {
                    let v = self.agents.values(env, x, t.h + 1, true);
                    cache.insert((t.h + 1, x), v);
                }
            }
            let next_values: Vec<&Vec<f64>> = t.next.iter().map(|x| &cache[&(t.h + 1, x)]).collect();
            let (y, clipped) = compute_targets(t, &next_values, &self.cfg)?;
            self.clipped_targets += clipped;
            targets.push(y);
        }
        let mut design = RidgeDesign::new(env.dim(), env.spec().players(), self.cfg.hyper.lambda)?;
        let mut phi = vec![0.0; env.dim()];
        for (t, y) in transitions.iter().zip(&targets) {
            env.evaluate(&t.state, &t.joint, t.h, &mut phi);
            design.update(&phi, y)?;
        }
        self.agents.models[r] = Some(design.fit()?);
        self.designs[r] = design;
        Ok(())
    }
}

/// Regression targets of one transition: scaled reward plus the
/// certainty-equivalent continuation `-ρ(-V̂)` under the empirical
/// next-state distribution, clipped to `[0, 1 + B]`. `next_values[j][i]` is
/// player i's value at the j-th sampled next state. Returns the targets and
/// how many needed clipping.
pub fn compute_targets<S>(
    t: &Transition<S>,
    next_values: &[&Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, usize), OviError> {
    if next_values.is_empty() {
        return Err(OviError::Config("transition has no next-state value".into()));
    }
    let players = t.rewards.len();
    let upper = 1.0 + cfg.hyper.b_clip;
    let mut clipped = 0;
    let mut out = Vec::with_capacity(players);
    for i in 0..players {
        let losses: Vec<f64> = next_values.iter().map(|v| -v[i]).collect();
        let continuation = if losses.len() == 1 {
            -losses[0]
        } else {
            let kernel = FiniteDistribution::uniform(vec![0.0; losses.len()])?;
            -env_risk_estimate(&losses, &kernel, &cfg.env_risk)?
        };
        let y = t.rewards[i] / cfg.reward_scale + continuation;
        if !(0.0..=upper).contains(&y) {
            clipped += 1;
        }
        out.push(y.clamp(0.0, upper));
    }
    Ok((out, clipped))
}

/// Runs a full training from scratch.
pub fn train<G>(
    env: &G,
    cfg: &TrainConfig,
    hooks: &mut impl TrainHooks<G::State>,
) -> Result<(TrainedAgents, TrainLog), OviError>
where
    G: MarkovGame,
    G::State: Eq + Hash,
{
    Trainer::new(env, cfg.clone())?.run(hooks)
}

/// Outcome of comparing optimistic estimates with exact one-step backups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimismReport {
    pub probes: usize,
    pub optimistic: usize,
    pub fraction: f64,
    /// most negative `Q̂ - backup` observed
    pub worst_gap: f64,
}

/// Probes random `(x, a, h, i)` and checks `Q̂ + tol ≥ r/scale - ρ(-V̂_{h+1})`,
/// the backup computed with the exact kernel and the learner's own
/// next-stage values.
pub fn optimism_audit<G, R>(
    agents: &TrainedAgents,
    env: &G,
    cfg: &TrainConfig,
    probes: usize,
    tol: f64,
    rng: &mut R,
) -> Result<OptimismReport, OviError>
where
    G: GenerativeGame,
    G::State: Eq + Hash,
    R: Rng + ?Sized,
{
    if !env.spec().generative {
        return Err(OviError::Config("optimism audit needs an exact kernel".into()));
    }
    let spec = env.spec().clone();
    let mut value_cache: HashMap<(usize, G::State), Vec<f64>> = HashMap::new();
    let mut tensor_cache: HashMap<(usize, G::State), StagePayoff> = HashMap::new();
    let mut optimistic = 0;
    let mut worst_gap = f64::INFINITY;
    for _ in 0..probes {
        let h = rng.gen_range(0..spec.horizon);
        let states = env.states(h);
        let x = states[rng.gen_range(0..states.len())].clone();
        let joint_index = rng.gen_range(0..spec.num_joint());
        let joint = spec.joint_actions(joint_index);
        let i = rng.gen_range(0..spec.players());
        let q = tensor_cache
            .entry((h, x.clone()))
            .or_insert_with(|| agents.q_tensor(env, &x, h, true))
            .tensor(i)[joint_index];
        let kernel = env.kernel(&x, &joint, h);
        let mut losses = Vec::with_capacity(kernel.len());
        let mut weights = Vec::with_capacity(kernel.len());
        for (next, p) in kernel {
            let v = value_cache
                .entry((h + 1, next.clone()))
                .or_insert_with(|| agents.values(env, &next, h + 1, true));
            losses.push(-v[i]);
            weights.push(p);
        }
        let dist = FiniteDistribution::new(vec![0.0; losses.len()], weights)?;
        let continuation = -env_risk_estimate(&losses, &dist, &cfg.env_risk)?;
        let backup = env.mean_rewards(&x, &joint, h)[i] / cfg.reward_scale + continuation;
        let gap = q - backup;
        worst_gap = worst_gap.min(gap);
        if gap + tol >= 0.0 {
            optimistic += 1;
        }
    }
    Ok(OptimismReport {
        probes,
        optimistic,
        fraction: if probes == 0 { 1.0 } else { optimistic as f64 / probes as f64 },
        worst_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::MatrixGame;

    fn matrix_cfg(episodes: usize) -> TrainConfig {
        let solver = SolverConfig::symmetric(2, 1.0, 0.0).with_tol(1e-8);
        TrainConfig {
            episodes,
            horizon: 1,
            hyper: OviHyper::auto(0.1, 1.0, 1, &[2, 2], &solver.epsilon),
            solver,
            buffer_capacity: 1000,
            update_frequency: 1,
            env_risk: RiskSpec::RiskNeutral,
            seed: 3,
            reward_scale: 4.0,
            stage_sharing: StageSharing::PerStage,
            next_state_samples: 1,
        }
    }

    #[test]
    fn single_episode_plays_uniformly_and_keeps_zero_weights() {
        let env = MatrixGame::stag_hunt();
        struct Capture(Vec<MixedProfile>);
        impl TrainHooks<()> for Capture {
            fn stage_policy(&mut self, _: usize, _: usize, _: &(), p: &MixedProfile) -> Option<f64> {
                self.0.push(p.clone());
                None
            }
        }
        let mut hooks = Capture(Vec::new());
        let (agents, log) = train(&env, &matrix_cfg(1), &mut hooks).unwrap();
        assert_eq!(log.rows.len(), 1);
        for dist in &hooks.0[0].0 {
            assert!(dist.iter().all(|&p| (p - 0.5).abs() < 1e-15));
        }
        assert!(agents.weights(0, 0).iter().all(|&w| w == 0.0));
    }

    #[test]
    fn terminal_targets_are_scaled_rewards() {
        let cfg = matrix_cfg(1);
        let t = Transition {
            episode: 0,
            h: 0,
            state: (),
            joint: vec![0, 0],
            rewards: vec![4.0, 2.0],
            next: vec![()],
        };
        let zero = vec![0.0, 0.0];
        let (y, clipped) = compute_targets(&t, &[&zero], &cfg).unwrap();
        assert_eq!(y, vec![1.0, 0.5]);
        assert_eq!(clipped, 0);
    }

    #[test]
    fn continuation_adds_under_risk_neutral_and_single_sample_entropic() {
        let mut cfg = matrix_cfg(1);
        cfg.reward_scale = 1.0;
        cfg.hyper.b_clip = 10.0;
        let t = Transition {
            episode: 0,
            h: 0,
            state: (),
            joint: vec![0, 0],
            rewards: vec![1.0, 1.0],
            next: vec![()],
        };
        let v = vec![2.0, 0.7];
        assert_eq!(compute_targets(&t, &[&v], &cfg).unwrap().0, vec![3.0, 1.7]);
        cfg.env_risk = RiskSpec::Entropic { tau: 3.0 };
        assert_eq!(compute_targets(&t, &[&v], &cfg).unwrap().0, vec![3.0, 1.7]);
    }

    #[test]
    fn entropic_env_risk_is_pessimistic_with_several_samples() {
        let mut cfg = matrix_cfg(1);
        cfg.reward_scale = 1.0;
        cfg.hyper.b_clip = 10.0;
        cfg.env_risk = RiskSpec::Entropic { tau: 1.0 };
        let t = Transition {
            episode: 0,
            h: 0,
            state: (),
            joint: vec![0, 0],
            rewards: vec![0.0],
            next: vec![(), ()],
        };
        let (a, b) = (vec![0.0], vec![2.0]);
        let y = compute_targets(&t, &[&a, &b], &cfg).unwrap().0[0];
        // -log((e^0 + e^-2)/2)
        let expected = -((1.0 + (-2f64).exp()) / 2.0).ln();
        assert!((y - expected).abs() < 1e-12);
        assert!(y < 1.0);
    }

    #[test]
    fn rejects_mismatched_horizon() {
        let env = MatrixGame::stag_hunt();
        let mut cfg = matrix_cfg(5);
        cfg.horizon = 2;
        assert!(matches!(train(&env, &cfg, &mut NoHooks), Err(OviError::Config(_))));
    }
}
