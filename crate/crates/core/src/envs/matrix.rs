use std::path::Path;

use rand::Rng;

use super::{EnvError, EnvSpec, GenerativeGame, MarkovGame, Step};
use crate::linear_fa::FeatureMap;
use crate::stage_solver::StagePayoff;

/// A normal-form game played once: horizon 1, a single state, and one-hot
/// joint-action features.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    payoff: StagePayoff,
    spec: EnvSpec,
}

impl MatrixGame {
    pub fn new(name: impl Into<String>, payoff: StagePayoff) -> Self {
        let lo = payoff.tensors().iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let hi = payoff.tensors().iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let spec = EnvSpec {
            name: name.into(),
            action_counts: payoff.action_counts().to_vec(),
            horizon: 1,
            feature_dim: payoff.num_joint(),
            reward_range: (lo, hi),
            generative: true,
        };
        Self { payoff, spec }
    }

    pub fn stag_hunt() -> Self {
        Self::new("stag_hunt", StagePayoff::stag_hunt())
    }

    pub fn coordination(alpha: f64) -> Self {
        Self::new(format!("coordination({alpha})"), StagePayoff::coordination(alpha))
    }

    pub fn payoff(&self) -> &StagePayoff {
        &self.payoff
    }

    pub fn from_file(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "matrix".into());
        Ok(Self::new(name, parse_payoff_file(&text)?))
    }
}

/// Parses the plain-text payoff format:
///
/// ```text
/// players 2
/// actions 2 2
/// 4 0 2 2      # player 0, joint actions in row-major order
/// 4 2 0 2      # player 1
/// ```
///
/// Blank lines and `#` comments are ignored; each player's block may span
/// several lines.
pub fn parse_payoff_file(text: &str) -> Result<StagePayoff, EnvError> {
    let mut players: Option<usize> = None;
    let mut actions: Option<Vec<usize>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        last_line = line_no;
        let err = |message: String| EnvError::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("players") => {
                if players.is_some() {
                    return Err(err("duplicate `players` header".into()));
                }
                let n = tokens
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| err("`players` needs a positive integer".into()))?;
                if tokens.next().is_some() {
                    return Err(err("trailing tokens after `players n`".into()));
                }
                players = Some(n);
            }
            Some("actions") => {
                let n = players.ok_or_else(|| err("`actions` before `players`".into()))?;
                let counts = tokens
                    .map(|t| t.parse::<usize>().ok().filter(|&c| c > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| err("action counts must be positive integers".into()))?;
                if counts.len() != n {
                    return Err(err(format!("expected {n} action counts, got {}", counts.len())));
                }
                actions = Some(counts);
            }
            Some(first) => {
                if actions.is_none() {
                    return Err(err(format!(
                        "expected `players n` and `actions ...` headers before payoffs, found `{first}`"
                    )));
                }
                for t in std::iter::once(first).chain(tokens) {
                    let v: f64 = t
                        .parse()
                        .map_err(|_| err(format!("`{t}` is not a number")))?;
                    if !v.is_finite() {
                        return Err(err(format!("payoff `{t}` is not finite")));
                    }
                    values.push(v);
                }
            }
            None => {}
        }
    }
    let (n, counts) = match (players, actions) {
        (Some(n), Some(c)) => (n, c),
        _ => {
            return Err(EnvError::Parse {
                line: last_line.max(1),
                message: "missing `players` or `actions` header".into(),
            })
        }
    };
    let joint: usize = counts.iter().product();
    if values.len() != n * joint {
        return Err(EnvError::Parse {
            line: last_line,
            message: format!(
                "expected {} payoffs ({n} players x {joint} joint actions), got {}",
                n * joint,
                values.len()
            ),
        });
    }
    let tensors = values.chunks(joint).map(|c| c.to_vec()).collect();
    StagePayoff::new(counts, tensors).map_err(|e| EnvError::Parse {
        line: last_line,
        message: e.to_string(),
    })
}

impl FeatureMap for MatrixGame {
    type State = ();

    fn dim(&self) -> usize {
        self.spec.feature_dim
    }

    fn evaluate(&self, _: &(), joint: &[usize], _h: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[self.payoff.joint_index(joint)] = 1.0;
    }
}

impl MarkovGame for MatrixGame {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset<R: Rng + ?Sized>(&self, _rng: &mut R) {}

    fn step<R: Rng + ?Sized>(&self, _: &(), joint: &[usize], h: usize, _rng: &mut R) -> Result<Step<()>, EnvError> {
        self.spec.check_joint(joint)?;
        self.spec.check_stage(h)?;
        Ok(Step {
            rewards: self.mean_rewards(&(), joint, h),
            next: (),
        })
    }
}

impl GenerativeGame for MatrixGame {
    fn states(&self, _h: usize) -> Vec<()> {
        vec![()]
    }

    fn initial_distribution(&self) -> Vec<((), f64)> {
        vec![((), 1.0)]
    }

    fn kernel(&self, _: &(), _joint: &[usize], _h: usize) -> Vec<((), f64)> {
        vec![((), 1.0)]
    }

    fn mean_rewards(&self, _: &(), joint: &[usize], _h: usize) -> Vec<f64> {
        (0..self.payoff.num_players())
            .map(|i| self.payoff.utility(i, joint))
            .collect()
    }
}
