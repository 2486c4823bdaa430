use serde::{Deserialize, Serialize};

use super::SolverError;

/// Per-player utility tensors over joint actions of a normal-form game.
///
/// Joint actions are indexed row-major with player 0 most significant, so
/// for two players `joint = a0 * |A1| + a1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPayoff", into = "RawPayoff")]
pub struct StagePayoff {
    action_counts: Vec<usize>,
    tensors: Vec<Vec<f64>>,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Layout {
    strides: Vec<usize>,
    /// own[i][joint] = action of player i in `joint`
    own: Vec<Vec<u32>>,
    /// opp[i][joint] = index of the opponents' sub-profile in `joint`
    opp: Vec<Vec<u32>>,
    opp_counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawPayoff {
    action_counts: Vec<usize>,
    tensors: Vec<Vec<f64>>,
}

impl TryFrom<RawPayoff> for StagePayoff {
    type Error = SolverError;
    fn try_from(raw: RawPayoff) -> Result<Self, SolverError> {
        StagePayoff::new(raw.action_counts, raw.tensors)
    }
}

impl From<StagePayoff> for RawPayoff {
    fn from(p: StagePayoff) -> Self {
        RawPayoff {
            action_counts: p.action_counts,
            tensors: p.tensors,
        }
    }
}

impl StagePayoff {
    pub fn new(action_counts: Vec<usize>, tensors: Vec<Vec<f64>>) -> Result<Self, SolverError> {
        if action_counts.is_empty() || action_counts.iter().any(|&c| c == 0) {
            return Err(SolverError::InvalidPayoff(
                "every player needs at least one action".into(),
            ));
        }
        if tensors.len() != action_counts.len() {
            return Err(SolverError::InvalidPayoff(format!(
                "{} tensors for {} players",
                tensors.len(),
                action_counts.len()
            )));
        }
        let total: usize = action_counts.iter().product();
        for (i, t) in tensors.iter().enumerate() {
            if t.len() != total {
                return Err(SolverError::InvalidPayoff(format!(
                    "player {i} tensor has {} entries, expected {total}",
                    t.len()
                )));
            }
            if let Some(v) = t.iter().find(|v| !v.is_finite()) {
                return Err(SolverError::InvalidPayoff(format!(
                    "player {i} has non-finite utility {v}"
                )));
            }
        }
        let layout = Layout::build(&action_counts);
        Ok(Self {
            action_counts,
            tensors,
            layout,
        })
    }

    /// Two-player game from row-major matrices `u0[a0][a1]`, `u1[a0][a1]`.
    pub fn bimatrix(u0: &[Vec<f64>], u1: &[Vec<f64>]) -> Result<Self, SolverError> {
        let rows = u0.len();
        let cols = u0.first().map_or(0, Vec::len);
        let flat = |m: &[Vec<f64>]| -> Result<Vec<f64>, SolverError> {
            if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                return Err(SolverError::InvalidPayoff("ragged bimatrix".into()));
            }
            Ok(m.iter().flatten().copied().collect())
        };
        Self::new(vec![rows, cols], vec![flat(u0)?, flat(u1)?])
    }

    /// Symmetric two-player game where both players receive `m[own][other]`.
    pub fn symmetric(m: &[Vec<f64>]) -> Result<Self, SolverError> {
        let n = m.len();
        let transposed: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| m[b][a]).collect()).collect();
        Self::bimatrix(m, &transposed)
    }

    /// Stag Hunt with action 0 = stag, 1 = hare: mutual stag (4,4), mutual
    /// hare (2,2), and a stag-holder facing a hare-holder gets 0 while the
    /// hare-holder gets 2.
    pub fn stag_hunt() -> Self {
        Self::symmetric(&[vec![4.0, 0.0], vec![2.0, 2.0]]).expect("static payoff")
    }

    /// Coordination game `((1, 0), (0, α))` for both players.
    pub fn coordination(alpha: f64) -> Self {
        Self::symmetric(&[vec![1.0, 0.0], vec![0.0, alpha]]).expect("static payoff")
    }

    pub fn zeros(action_counts: Vec<usize>) -> Self {
        let total = action_counts.iter().product();
        let n = action_counts.len();
        Self::new(action_counts, vec![vec![0.0; total]; n]).expect("valid shape")
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_joint(&self) -> usize {
        self.tensors[0].len()
    }

    pub fn tensor(&self, player: usize) -> &[f64] {
        &self.tensors[player]
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    /// Joint index of an action tuple.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.layout.strides)
            .map(|(a, s)| a * s)
            .sum()
    }

    /// Action tuple of a joint index.
    pub fn joint_actions(&self, joint: usize) -> Vec<usize> {
        (0..self.num_players())
            .map(|i| self.layout.own[i][joint] as usize)
            .collect()
    }

    pub fn utility(&self, player: usize, actions: &[usize]) -> f64 {
        self.tensors[player][self.joint_index(actions)]
    }

    pub(crate) fn opp_count(&self, player: usize) -> usize {
        self.layout.opp_counts[player]
    }

    pub(crate) fn own_action(&self, player: usize, joint: usize) -> usize {
        self.layout.own[player][joint] as usize
    }

    pub(crate) fn opp_index(&self, player: usize, joint: usize) -> usize {
        self.layout.opp[player][joint] as usize
    }

    /// Largest minus smallest utility of one player.
    pub fn utility_range(&self, player: usize) -> f64 {
        let t = &self.tensors[player];
        let (lo, hi) = t
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Largest absolute utility over all players.
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Sup-norm distance between two payoffs of the same shape.
    pub fn sup_distance(&self, other: &StagePayoff) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .zip(other.tensors.iter().flatten())
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
    }

    /// Same shape, entries transformed by `f(player, joint, value)`.
    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> StagePayoff {
        let tensors = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| t.iter().enumerate().map(|(j, &v)| f(i, j, v)).collect())
            .collect();
        StagePayoff {
            action_counts: self.action_counts.clone(),
            tensors,
            layout: self.layout.clone(),
        }
    }
}

impl Layout {
    fn build(counts: &[usize]) -> Self {
        let n = counts.len();
        let total: usize = counts.iter().product();
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let mut own = vec![vec![0u32; total]; n];
        let mut opp = vec![vec![0u32; total]; n];
        let opp_counts: Vec<usize> = (0..n).map(|i| total / counts[i]).collect();
        for joint in 0..total {
            let actions: Vec<usize> = (0..n).map(|i| (joint / strides[i]) % counts[i]).collect();
            for i in 0..n {
                own[i][joint] = actions[i] as u32;
                let mut idx = 0;
                for j in (0..n).filter(|&j| j != i) {
                    idx = idx * counts[j] + actions[j];
                }
                opp[i][joint] = idx as u32;
            }
        }
        Self {
            strides,
            own,
            opp,
            opp_counts,
        }
    }
}

/// One mixed strategy per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile(pub Vec<Vec<f64>>);

impl MixedProfile {
    pub fn uniform(action_counts: &[usize]) -> Self {
        Self(
            action_counts
                .iter()
                .map(|&c| vec![1.0 / c as f64; c])
                .collect(),
        )
    }

    pub fn new(dists: Vec<Vec<f64>>) -> Result<Self, SolverError> {
        let p = Self(dists);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        for (i, d) in self.0.iter().enumerate() {
            let total: f64 = d.iter().sum();
            if d.is_empty() || d.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-10 {
                return Err(SolverError::InvalidProfile(format!(
                    "player {i} distribution {d:?} is not on the simplex"
                )));
            }
        }
        Ok(())
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn num_players(&self) -> usize {
        self.0.len()
    }

    /// Largest per-player ℓ1 distance.
    pub fn l1_distance(&self, other: &MixedProfile) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| l1(a, b))
            .fold(0.0, f64::max)
    }

    pub fn min_probability(&self) -> f64 {
        self.0.iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Probability of a joint action under independent play.
    pub fn joint_probability(&self, actions: &[usize]) -> f64 {
        self.0.iter().zip(actions).map(|(d, &a)| d[a]).product()
    }

    pub(crate) fn check_shape(&self, payoff: &StagePayoff) -> Result<(), SolverError> {
        if self.0.len() != payoff.num_players()
            || self
                .0
                .iter()
                .zip(payoff.action_counts())
                .any(|(d, &c)| d.len() != c)
        {
            return Err(SolverError::InvalidProfile(
                "profile shape does not match payoff".into(),
            ));
        }
        self.validate()
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
