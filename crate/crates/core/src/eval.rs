//! Evaluation of trained (or hand-built) policies: self-play returns,
//! retention under a perturbed partner, cross-play, Stag Hunt outcome
//! fractions and exploitability traces. Every statistic is a function of
//! the config seed; rollout `n` uses stream `n` of that seed.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{DynamicStagHunt, EnvError, EnvSpec, GridAction, Interaction, MarkovGame};
use crate::ovi::TrainedAgents;
use crate::stage_solver::{exploitability_with, MixedProfile, SolverConfig, StagePayoff};

/// Version written in the header comment of every eval CSV.
pub const CSV_SCHEMA: &str = "rqre-eval/1";
pub const CSV_HEADER: &str = "condition,delta,pairing,metric,value,stderr,rollouts,seed";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("policy does not match the environment: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub rollouts: usize,
    /// Perturbation probabilities for the retention curve.
    pub deltas: Vec<f64>,
    /// Action the perturbed partner falls back to; `None` picks the
    /// environment default (see [`EvalConfig::deviation_for`]).
    pub deviation_action: Option<usize>,
    pub seed: u64,
    /// Named cross-play pairings; empty means every ordered pair.
    pub pairings: Vec<(String, String)>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rollouts: 200,
            deltas: vec![0.0, 0.1, 0.2, 0.3, 0.5],
            deviation_action: None,
            seed: 0,
            pairings: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.rollouts == 0 {
            return Err(EvalError::Config("rollouts must be at least 1".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(EvalError::Config(format!("delta {d} is outside [0, 1]")));
        }
        Ok(())
    }

    /// The fixed deviation: North on the grid, otherwise the partner's last
    /// action (hare in the Stag Hunt matrix game).
    pub fn deviation_for(&self, spec: &EnvSpec, seat: usize) -> Result<usize, EvalError> {
        let count = spec.action_counts[seat];
        let a = match self.deviation_action {
            Some(a) => a,
            None if spec.name == "dynamic_stag_hunt" => GridAction::North.index(),
            None => count - 1,
        };
        if a >= count {
            return Err(EvalError::Config(format!(
                "deviation action {a} out of range for {count} actions"
            )));
        }
        Ok(a)
    }
}

/// Anything that proposes a mixed profile at a state; each seat plays its
/// own marginal.
pub trait SeatPolicy<G: MarkovGame> {
    fn profile(&self, env: &G, state: &G::State, h: usize) -> MixedProfile;

    fn check(&self, _spec: &EnvSpec) -> Result<(), EvalError> {
        Ok(())
    }
}

/// Trained agents act on the bonus-free estimates.
impl<G: MarkovGame> SeatPolicy<G> for TrainedAgents {
    fn profile(&self, env: &G, state: &G::State, h: usize) -> MixedProfile {
        self.policy(env, state, h, false).1
    }

    fn check(&self, spec: &EnvSpec) -> Result<(), EvalError> {
        if self.action_counts != spec.action_counts || self.horizon != spec.horizon || self.feature_dim != spec.feature_dim {
            return Err(EvalError::Mismatch(format!(
                "agents trained for actions {:?}, horizon {}, d={}; env {} has {:?}, {}, d={}",
                self.action_counts,
                self.horizon,
                self.feature_dim,
                spec.name,
                spec.action_counts,
                spec.horizon,
                spec.feature_dim
            )));
        }
        Ok(())
    }
}

/// The same profile everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPolicy(pub MixedProfile);

impl FixedPolicy {
    /// Every player plays `actions[i]` with probability `1 - leak` and
    /// spreads `leak` over the rest.
    pub fn pure(action_counts: &[usize], actions: &[usize], leak: f64) -> Self {
        let dists = action_counts
            .iter()
            .zip(actions)
            .map(|(&n, &a)| {
                if n == 1 {
                    return vec![1.0];
                }
                (0..n)
                    .map(|b| if b == a { 1.0 - leak } else { leak / (n - 1) as f64 })
                    .collect()
            })
            .collect();
        Self(MixedProfile(dists))
    }
}

impl<G: MarkovGame> SeatPolicy<G> for FixedPolicy {
    fn profile(&self, _env: &G, _state: &G::State, _h: usize) -> MixedProfile {
        self.0.clone()
    }

    fn check(&self, spec: &EnvSpec) -> Result<(), EvalError> {
        let counts: Vec<usize> = self.0 .0.iter().map(Vec::len).collect();
        if counts != spec.action_counts {
            return Err(EvalError::Mismatch(format!(
                "profile shape {counts:?} vs actions {:?}",
                spec.action_counts
            )));
        }
        Ok(())
    }
}

/// A policy given by a closure of `(env, state, h)`.
pub struct FnPolicy<F>(pub F);

impl<G, F> SeatPolicy<G> for FnPolicy<F>
where
    G: MarkovGame,
    F: Fn(&G, &G::State, usize) -> MixedProfile,
{
    fn profile(&self, env: &G, state: &G::State, h: usize) -> MixedProfile {
        (self.0)(env, state, h)
    }
}

/// Mean and standard error across rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub team: Summary,
    pub per_player: Vec<Summary>,
}

/// One perturbed-partner condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub delta: f64,
    pub returns: ReturnStats,
    /// `R(δ)/R(0)`; absent when `R(0) = 0`.
    pub retention: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPlayEntry {
    /// agent in seat 0
    pub first: String,
    /// agent in seat 1
    pub second: String,
    /// mean reward of each seat
    pub rewards: (f64, f64),
    pub stderr: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFractions {
    pub stag_stag: f64,
    pub hare_hare: f64,
    pub mixed: f64,
    pub interactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitabilityTrace {
    pub gaps: Vec<f64>,
    /// mean over the last `window` gaps
    pub final_window_mean: f64,
    pub window: usize,
}

/// One row of the tidy eval CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub condition: String,
    pub delta: Option<f64>,
    pub pairing: String,
    pub metric: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub rollouts: usize,
    pub seed: u64,
}

/// Accumulates tidy records from the individual protocols.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, condition: &str, delta: Option<f64>, pairing: &str, metric: &str, value: Option<f64>, stderr: Option<f64>, rollouts: usize, seed: u64) {
        self.records.push(EvalRecord {
            condition: condition.into(),
            delta,
            pairing: pairing.into(),
            metric: metric.into(),
            value,
            stderr,
            rollouts,
            seed,
        });
    }

    fn push_returns(&mut self, condition: &str, delta: Option<f64>, pairing: &str, r: &ReturnStats, seed: u64) {
        self.push(condition, delta, pairing, "team_return", Some(r.team.mean), Some(r.team.stderr), r.team.n, seed);
        for (i, s) in r.per_player.iter().enumerate() {
            self.push(condition, delta, pairing, &format!("return_{i}"), Some(s.mean), Some(s.stderr), s.n, seed);
        }
    }

    pub fn add_self_play(&mut self, name: &str, r: &ReturnStats, cfg: &EvalConfig) {
        self.push_returns("self_play", None, name, r, cfg.seed);
    }

    pub fn add_retention(&mut self, pairing: &str, curve: &[RetentionPoint], cfg: &EvalConfig) {
        for p in curve {
            self.push_returns("perturbed_partner", Some(p.delta), pairing, &p.returns, cfg.seed);
            self.push("perturbed_partner", Some(p.delta), pairing, "retention", p.retention, None, cfg.rollouts, cfg.seed);
        }
    }

    pub fn add_cross_play(&mut self, entries: &[CrossPlayEntry], cfg: &EvalConfig) {
        for e in entries {
            let pairing = format!("{}|{}", e.first, e.second);
            self.push("cross_play", None, &pairing, "reward_seat0", Some(e.rewards.0), Some(e.stderr.0), cfg.rollouts, cfg.seed);
            self.push("cross_play", None, &pairing, "reward_seat1", Some(e.rewards.1), Some(e.stderr.1), cfg.rollouts, cfg.seed);
        }
    }

    pub fn add_outcomes(&mut self, name: &str, f: Option<&OutcomeFractions>, cfg: &EvalConfig) {
        let get = |g: fn(&OutcomeFractions) -> f64| f.map(g);
        self.push("outcomes", None, name, "stag_stag", get(|f| f.stag_stag), None, cfg.rollouts, cfg.seed);
        self.push("outcomes", None, name, "hare_hare", get(|f| f.hare_hare), None, cfg.rollouts, cfg.seed);
        self.push("outcomes", None, name, "mixed", get(|f| f.mixed), None, cfg.rollouts, cfg.seed);
        let n = f.map_or(0, |f| f.interactions) as f64;
        self.push("outcomes", None, name, "interactions", Some(n), None, cfg.rollouts, cfg.seed);
    }

    pub fn add_exploitability(&mut self, name: &str, trace: &ExploitabilityTrace, seed: u64) {
        for (k, g) in trace.gaps.iter().enumerate() {
            self.push("exploitability", None, name, &format!("gap_{k}"), Some(*g), None, 1, seed);
        }
        self.push("exploitability", None, name, "final_window_mean", Some(trace.final_window_mean), None, trace.window, seed);
    }

    /// Writes the schema comment, the header and one line per record.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), EvalError> {
        writeln!(w, "# schema: {CSV_SCHEMA}")?;
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                quote(&r.condition),
                opt(r.delta),
                quote(&r.pairing),
                quote(&r.metric),
                opt(r.value),
                opt(r.stderr),
                r.rollouts,
                r.seed
            )?;
        }
        Ok(())
    }
}

/// Replaces one seat's action by a fixed one with probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub seat: usize,
    pub action: usize,
    pub delta: f64,
}

fn rollout_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn sample<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(dist).map_or(0, |w| w.sample(rng))
}

/// Plays one episode with `seats[i]` controlling player i. Calls `observe`
/// after every step and returns per-player returns.
pub fn rollout<G: MarkovGame>(
    env: &G,
    seats: &[&dyn SeatPolicy<G>],
    perturbation: Option<Perturbation>,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(&G::State),
) -> Result<Vec<f64>, EvalError> {
    let spec = env.spec();
    let n = spec.players();
    let mut state = env.reset(rng);
    let mut returns = vec![0.0; n];
    let mut joint = vec![0; n];
    for h in 0..spec.horizon {
        let mut cached: Option<(usize, MixedProfile)> = None;
        for (i, seat) in seats.iter().enumerate() {
            // seats backed by the same policy share one solve
            let reuse = cached.as_ref().and_then(|(j, p)| {
                std::ptr::addr_eq(*seat as *const _, seats[*j] as *const _).then_some(p)
            });
            let dist = match reuse {
                Some(p) => p.player(i).to_vec(),
                None => {
                    let p = seat.profile(env, &state, h);
                    let d = p.player(i).to_vec();
                    cached = Some((i, p));
                    d
                }
            };
            joint[i] = sample(&dist, rng);
        }
        if let Some(p) = perturbation {
            if rng.gen::<f64>() < p.delta {
                joint[p.seat] = p.action;
            }
        }
        let step = env.step(&state, &joint, h, rng)?;
        for (r, x) in returns.iter_mut().zip(&step.rewards) {
            *r += x;
        }
        observe(&step.next);
        state = step.next;
    }
    Ok(returns)
}

fn check_seats<G: MarkovGame>(env: &G, seats: &[&dyn SeatPolicy<G>]) -> Result<(), EvalError> {
    let spec = env.spec();
    if seats.len() != spec.players() {
        return Err(EvalError::Mismatch(format!(
            "{} seats for {} players",
            seats.len(),
            spec.players()
        )));
    }
    seats.iter().try_for_each(|s| s.check(spec))
}

/// Return statistics over `cfg.rollouts` episodes.
pub fn play<G: MarkovGame>(
    env: &G,
    seats: &[&dyn SeatPolicy<G>],
    perturbation: Option<Perturbation>,
    cfg: &EvalConfig,
) -> Result<ReturnStats, EvalError> {
    cfg.validate()?;
    check_seats(env, seats)?;
    let n = env.spec().players();
    let mut team = Vec::with_capacity(cfg.rollouts);
    let mut per = vec![Vec::with_capacity(cfg.rollouts); n];
    for k in 0..cfg.rollouts {
        let mut rng = rollout_rng(cfg.seed, k);
        let r = rollout(env, seats, perturbation, &mut rng, |_| {})?;
        team.push(r.iter().sum());
        for (v, x) in per.iter_mut().zip(r) {
            v.push(x);
        }
    }
    Ok(ReturnStats {
        team: Summary::of(&team),
        per_player: per.iter().map(|v| Summary::of(v)).collect(),
    })
}

/// Agents play with their own partner.
pub fn self_play<G: MarkovGame>(agents: &dyn SeatPolicy<G>, env: &G, cfg: &EvalConfig) -> Result<ReturnStats, EvalError> {
    let seats = vec![agents; env.spec().players()];
    play(env, &seats, None, cfg)
}

/// Retention curve: `ego` fills seat 0, `partner` every other seat, and the
/// last seat takes the fixed deviation with probability δ.
pub fn perturbed_partner<G: MarkovGame>(
    ego: &dyn SeatPolicy<G>,
    partner: &dyn SeatPolicy<G>,
    env: &G,
    cfg: &EvalConfig,
) -> Result<Vec<RetentionPoint>, EvalError> {
    cfg.validate()?;
    if !cfg.deltas.contains(&0.0) {
        return Err(EvalError::Config("the delta grid must include 0".into()));
    }
    let n = env.spec().players();
    let seat = n - 1;
    let action = cfg.deviation_for(env.spec(), seat)?;
    let mut seats = vec![partner; n];
    seats[0] = ego;
    let mut points = Vec::with_capacity(cfg.deltas.len());
    for &delta in &cfg.deltas {
        let pert = (delta > 0.0).then_some(Perturbation { seat, action, delta });
        points.push(RetentionPoint {
            delta,
            returns: play(env, &seats, pert, cfg)?,
            retention: None,
        });
    }
    let base = points
        .iter()
        .find(|p| p.delta == 0.0)
        .map(|p| p.returns.team.mean)
        .expect("checked above");
    for p in &mut points {
        p.retention = if base == 0.0 {
            None
        } else if p.delta == 0.0 {
            Some(1.0)
        } else {
            Some(p.returns.team.mean / base)
        };
    }
    Ok(points)
}

/// Two-player cross-play in both seat orders. `agents` are named; the
/// pairings come from `cfg.pairings`, or every ordered pair when empty.
pub fn cross_play<G: MarkovGame>(
    agents: &[(&str, &dyn SeatPolicy<G>)],
    env: &G,
    cfg: &EvalConfig,
) -> Result<Vec<CrossPlayEntry>, EvalError> {
    if env.spec().players() != 2 {
        return Err(EvalError::Mismatch("cross-play needs two players".into()));
    }
    let find = |name: &str| {
        agents
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| EvalError::Config(format!("unknown agent `{name}` in pairings")))
    };
    let mut pairs = Vec::new();
    if cfg.pairings.is_empty() {
        for a in 0..agents.len() {
            for b in a..agents.len() {
                pairs.push((a, b));
            }
        }
    } else {
        for (a, b) in &cfg.pairings {
            pairs.push((find(a)?, find(b)?));
        }
    }
    let mut out = Vec::new();
    for (a, b) in pairs {
        let orders: &[(usize, usize)] = if a == b { &[(a, b)] } else { &[(a, b), (b, a)] };
        for &(x, y) in orders {
            let r = play(env, &[agents[x].1, agents[y].1], None, cfg)?;
            out.push(CrossPlayEntry {
                first: agents[x].0.to_string(),
                second: agents[y].0.to_string(),
                rewards: (r.per_player[0].mean, r.per_player[1].mean),
                stderr: (r.per_player[0].stderr, r.per_player[1].stderr),
            });
        }
    }
    Ok(out)
}

/// Fractions of resolved grid interactions by outcome; `None` when no
/// interaction happened in any rollout.
pub fn outcome_fractions(
    agents: &dyn SeatPolicy<DynamicStagHunt>,
    env: &DynamicStagHunt,
    cfg: &EvalConfig,
) -> Result<Option<OutcomeFractions>, EvalError> {
    cfg.validate()?;
    let seats = vec![agents; 2];
    check_seats(env, &seats)?;
    let mut counts = [0usize; 3];
    for k in 0..cfg.rollouts {
        let mut rng = rollout_rng(cfg.seed, k);
        rollout(env, &seats, None, &mut rng, |s| {
            if let Some(i) = s.last_interaction {
                counts[i as usize] += 1;
            }
        })?;
    }
    Ok(fractions(counts))
}

/// Turns (stag-stag, hare-hare, mixed) counts into fractions.
pub fn fractions(counts: [usize; 3]) -> Option<OutcomeFractions> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let f = |c: usize| c as f64 / total as f64;
    Some(OutcomeFractions {
        stag_stag: f(counts[Interaction::StagStag as usize]),
        hare_hare: f(counts[Interaction::HareHare as usize]),
        mixed: f(counts[Interaction::Mixed as usize]),
        interactions: total,
    })
}

/// Max-player exploitability of each checkpoint's bonus-free stage policy
/// against the true payoffs of a normal-form game. `reward_scale` converts
/// the true payoffs to the units the agents were trained in.
pub fn exploitability_trace<G: MarkovGame>(
    checkpoints: &[TrainedAgents],
    env: &G,
    state: &G::State,
    payoff: &StagePayoff,
    reward_scale: f64,
    solver: &SolverConfig,
    window: usize,
) -> Result<ExploitabilityTrace, EvalError> {
    if env.spec().horizon != 1 || !env.spec().generative {
        return Err(EvalError::Mismatch(
            "exploitability traces need a one-stage game with exact payoffs".into(),
        ));
    }
    if payoff.action_counts() != env.spec().action_counts.as_slice() {
        return Err(EvalError::Mismatch("payoff shape differs from the environment".into()));
    }
    let scaled = payoff.map(|_, _, v| v / reward_scale);
    let mut gaps = Vec::with_capacity(checkpoints.len());
    for agents in checkpoints {
        SeatPolicy::<G>::check(agents, env.spec())?;
        let profile = agents.policy(env, state, 0, false).1;
        gaps.push(exploitability_with(&scaled, &profile, solver).max);
    }
    let window = window.clamp(1, gaps.len().max(1));
    let tail = &gaps[gaps.len().saturating_sub(window)..];
    let final_window_mean = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    Ok(ExploitabilityTrace {
        gaps,
        final_window_mean,
        window,
    })
}
