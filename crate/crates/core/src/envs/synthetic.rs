//! Random Markov games that are exactly linear in their features:
//! `P_h(x'|x,a) = ⟨φ(x,a), μ_h(x')⟩` and `r_{i,h}(x,a) = ⟨φ(x,a), θ_{i,h}⟩`.
//!
//! Features are points of the probability simplex and every `μ_h[k]` is a
//! distribution over states, so each kernel row is a convex combination of
//! distributions and valid by construction.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, EnvSpec, GenerativeGame, MarkovGame, Step};
use crate::linear_fa::{dot, FeatureMap};

const MAX_STATES: usize = 20;
const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_states: usize,
    pub dim: usize,
    pub horizon: usize,
    pub action_counts: Vec<usize>,
    pub seed: u64,
    /// Draw each reward as a Bernoulli variable with mean `⟨φ, θ⟩` instead
    /// of emitting the mean.
    pub bernoulli_rewards: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_states: 6,
            dim: 6,
            horizon: 2,
            action_counts: vec![2, 2],
            seed: 0,
            bernoulli_rewards: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLinearMg {
    config: SyntheticConfig,
    spec: EnvSpec,
    /// features[x][joint]
    features: Vec<Vec<Vec<f64>>>,
    /// mu[h][k] is a distribution over states
    mu: Vec<Vec<Vec<f64>>>,
    /// theta[h][i]
    theta: Vec<Vec<Vec<f64>>>,
    /// seed actually used after retries
    construction_seed: u64,
}

fn simplex_point<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

impl SyntheticLinearMg {
    pub fn new(config: SyntheticConfig) -> Result<Self, EnvError> {
        let bad = |m: String| Err(EnvError::Construction(m));
        if config.num_states == 0 || config.num_states > MAX_STATES {
            return bad(format!("need 1..={MAX_STATES} states, got {}", config.num_states));
        }
        if config.dim == 0 || config.horizon == 0 {
            return bad("dimension and horizon must be positive".into());
        }
        if config.action_counts.is_empty() || config.action_counts.contains(&0) {
            return bad("every player needs at least one action".into());
        }
        for attempt in 0..MAX_ATTEMPTS {
            let seed = config.seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            if let Some(env) = Self::build(&config, seed) {
                return Ok(env);
            }
        }
        bad(format!(
            "no well-conditioned instance after {MAX_ATTEMPTS} attempts; increase states or actions relative to dim"
        ))
    }

    fn build(config: &SyntheticConfig, seed: u64) -> Option<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nx, d, h) = (config.num_states, config.dim, config.horizon);
        let joints: usize = config.action_counts.iter().product();
        let players = config.action_counts.len();
        let features: Vec<Vec<Vec<f64>>> = (0..nx)
            .map(|_| (0..joints).map(|_| simplex_point(&mut rng, d)).collect())
            .collect();
        // the regression is only identifiable if the features span R^d
        let mut gram = nalgebra::DMatrix::<f64>::zeros(d, d);
        for phi in features.iter().flatten() {
            let v = nalgebra::DVector::from_column_slice(phi);
            gram += &v * v.transpose();
        }
        let n = (nx * joints) as f64;
        if gram.symmetric_eigenvalues().min() / n < 1e-6 {
            return None;
        }
        let mu = (0..h)
            .map(|_| (0..d).map(|_| simplex_point(&mut rng, nx)).collect())
            .collect();
        let theta = (0..h)
            .map(|_| (0..players).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect())
            .collect();
        let spec = EnvSpec {
            name: "synthetic_linear".into(),
            action_counts: config.action_counts.clone(),
            horizon: h,
            feature_dim: d,
            reward_range: (0.0, 1.0),
            generative: true,
        };
        Some(Self {
            config: config.clone(),
            spec,
            features,
            mu,
            theta,
            construction_seed: seed,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn construction_seed(&self) -> u64 {
        self.construction_seed
    }

    pub fn num_states(&self) -> usize {
        self.config.num_states
    }

    /// `μ_h[k]`, a distribution over states.
    pub fn mu(&self, h: usize, k: usize) -> &[f64] {
        &self.mu[h][k]
    }

    pub fn theta(&self, h: usize, player: usize) -> &[f64] {
        &self.theta[h][player]
    }

    fn joint_index(&self, joint: &[usize]) -> usize {
        joint
            .iter()
            .zip(&self.config.action_counts)
            .fold(0, |acc, (&a, &c)| acc * c + a)
    }

    pub fn phi(&self, x: usize, joint: &[usize]) -> &[f64] {
        &self.features[x][self.joint_index(joint)]
    }

    /// `P_h(·|x, a)` as a dense vector over states.
    pub fn kernel_row(&self, x: usize, joint: &[usize], h: usize) -> Vec<f64> {
        let phi = self.phi(x, joint);
        let mut row = vec![0.0; self.num_states()];
        for (k, &p) in phi.iter().enumerate() {
            for (r, &m) in row.iter_mut().zip(&self.mu[h][k]) {
                *r += p * m;
            }
        }
        row
    }
}

impl FeatureMap for SyntheticLinearMg {
    type State = usize;

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn evaluate(&self, state: &usize, joint: &[usize], _h: usize, out: &mut [f64]) {
        out.copy_from_slice(self.phi(*state, joint));
    }
}

impl MarkovGame for SyntheticLinearMg {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.num_states())
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, joint: &[usize], h: usize, rng: &mut R) -> Result<Step<usize>, EnvError> {
        self.spec.check_joint(joint)?;
        self.spec.check_stage(h)?;
        let means = self.mean_rewards(state, joint, h);
        let rewards = if self.config.bernoulli_rewards {
            means.iter().map(|&m| if rng.gen::<f64>() < m { 1.0 } else { 0.0 }).collect()
        } else {
            means
        };
        let row = self.kernel_row(*state, joint, h);
        let next = WeightedIndex::new(&row)
            .map_err(|e| EnvError::Construction(format!("invalid kernel row: {e}")))?
            .sample(rng);
        Ok(Step { rewards, next })
    }
}

impl GenerativeGame for SyntheticLinearMg {
    fn states(&self, _h: usize) -> Vec<usize> {
        (0..self.num_states()).collect()
    }

    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        let p = 1.0 / self.num_states() as f64;
        (0..self.num_states()).map(|x| (x, p)).collect()
    }

    fn kernel(&self, state: &usize, joint: &[usize], h: usize) -> Vec<(usize, f64)> {
        self.kernel_row(*state, joint, h)
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .collect()
    }

    fn mean_rewards(&self, state: &usize, joint: &[usize], h: usize) -> Vec<f64> {
        let phi = self.phi(*state, joint);
        self.theta[h].iter().map(|t| dot(phi, t)).collect()
    }
}
