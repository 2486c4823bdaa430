//! Ridge-regression value estimates over linear features, with the
//! elliptical exploration bonus and clipping used by optimistic value
//! iteration.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed on `‖φ‖₂ ≤ 1`.
pub const FEATURE_NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FaError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature norm {norm} exceeds 1")]
    FeatureNorm { norm: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("design matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Joint state-action features `φ(x, a, h)` with `‖φ‖₂ ≤ 1`.
pub trait FeatureMap {
    type State;

    fn dim(&self) -> usize;

    /// Writes `φ(state, joint, h)` into `out` (length `dim()`); `h` is the
    /// zero-based stage.
    fn evaluate(&self, state: &Self::State, joint: &[usize], h: usize, out: &mut [f64]);
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest ℓ2 norm over a probe set of raw feature vectors; dividing by it
/// puts every probed vector in the unit ball.
pub fn probe_scale<'a>(probes: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let m = probes.into_iter().map(norm).fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Divides by `scale`, then rescales onto the unit sphere anything the probe
/// set missed.
pub fn normalize_features(v: &mut [f64], scale: f64) {
    v.iter_mut().for_each(|x| *x /= scale);
    let n = norm(v);
    if n > 1.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn check_phi(dim: usize, phi: &[f64]) -> Result<(), FaError> {
    if phi.len() != dim {
        return Err(FaError::DimensionMismatch {
            expected: dim,
            got: phi.len(),
        });
    }
    let n = norm(phi);
    if !(n <= 1.0 + FEATURE_NORM_SLACK) {
        return Err(FaError::FeatureNorm { norm: n });
    }
    Ok(())
}

/// `Λ = λI + Σ φφᵀ` together with the per-player sums `Σ φ ŷ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeDesign {
    lambda: f64,
    gram: DMatrix<f64>,
    target_sums: Vec<DVector<f64>>,
    count: usize,
}

impl RidgeDesign {
    pub fn new(dim: usize, players: usize, lambda: f64) -> Result<Self, FaError> {
        if dim == 0 || players == 0 {
            return Err(FaError::BadParameter("dimension and player count must be positive".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(FaError::BadParameter(format!("ridge lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            target_sums: vec![DVector::zeros(dim); players],
            count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn players(&self) -> usize {
        self.target_sums.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn target_sum(&self, player: usize) -> &DVector<f64> {
        &self.target_sums[player]
    }

    /// Absorbs one observation: `Λ += φφᵀ`, `Σφŷ_i += φ ŷ_i`.
    pub fn update(&mut self, phi: &[f64], targets: &[f64]) -> Result<(), FaError> {
        check_phi(self.dim(), phi)?;
        if targets.len() != self.players() {
            return Err(FaError::DimensionMismatch {
                expected: self.players(),
                got: targets.len(),
            });
        }
        let nz: Vec<usize> = (0..phi.len()).filter(|&i| phi[i] != 0.0).collect();
        for &i in &nz {
            for &j in &nz {
                self.gram[(i, j)] += phi[i] * phi[j];
            }
        }
        for (sum, &y) in self.target_sums.iter_mut().zip(targets) {
            for &i in &nz {
                sum[i] += phi[i] * y;
            }
        }
        self.count += 1;
        Ok(())
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, FaError> {
        self.gram
            .clone()
            .cholesky()
            .ok_or_else(|| FaError::NotPositiveDefinite("Cholesky factorization failed".into()))
    }

    /// Ridge weights `Λ⁻¹ Σ φ ŷ_i`.
    pub fn weights(&self, player: usize) -> Vec<f64> {
        match self.cholesky() {
            Ok(c) => c.solve(&self.target_sums[player]).as_slice().to_vec(),
            Err(_) => vec![f64::NAN; self.dim()],
        }
    }

    /// `β √(φᵀ Λ⁻¹ φ)`.
    pub fn bonus(&self, phi: &[f64], beta: f64) -> f64 {
        match self.cholesky() {
            Ok(c) => {
                let v = DVector::from_column_slice(phi);
                beta * v.dot(&c.solve(&v)).max(0.0).sqrt()
            }
            Err(_) => f64::NAN,
        }
    }

    /// Structural checks: finite, symmetric within 1e-12, and smallest
    /// eigenvalue at least `λ - 1e-9`.
    pub fn validate(&self) -> Result<(), FaError> {
        let d = self.dim();
        if self.gram.iter().any(|v| !v.is_finite()) {
            return Err(FaError::NotPositiveDefinite("non-finite entry".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (self.gram[(i, j)] - self.gram[(j, i)]).abs() > 1e-12 {
                    return Err(FaError::NotPositiveDefinite(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let shifted = &self.gram - DMatrix::identity(d, d) * (self.lambda - 1e-9);
        if shifted.cholesky().is_none() {
            let min = self.gram.clone().symmetric_eigenvalues().min();
            return Err(FaError::NotPositiveDefinite(format!(
                "smallest eigenvalue {min:.6e} below lambda {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Factorizes once and caches the weights of every player and `Λ⁻¹`.
    pub fn fit(&self) -> Result<FittedDesign, FaError> {
        let c = self.cholesky()?;
        let weights = self
            .target_sums
            .iter()
            .map(|t| c.solve(t).as_slice().to_vec())
            .collect();
        let inv = c.inverse();
        let d = self.dim();
        let mut inverse = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                inverse[i * d + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        Ok(FittedDesign { dim: d, weights, inverse })
    }
}

/// Weights and `Λ⁻¹` of a factorized design, for repeated evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedDesign {
    dim: usize,
    weights: Vec<Vec<f64>>,
    /// row-major `Λ⁻¹`
    inverse: Vec<f64>,
}

impl FittedDesign {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self, player: usize) -> &[f64] {
        &self.weights[player]
    }

    pub fn linear(&self, player: usize, phi: &[f64]) -> f64 {
        dot(&self.weights[player], phi)
    }

    /// `φᵀ Λ⁻¹ φ`, skipping zero coordinates of φ.
    pub fn quad_form(&self, phi: &[f64]) -> f64 {
        let d = self.dim;
        let nz: Vec<usize> = (0..d).filter(|&i| phi[i] != 0.0).collect();
        let mut total = 0.0;
        for &i in &nz {
            let row = &self.inverse[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for &j in &nz {
                acc += row[j] * phi[j];
            }
            total += phi[i] * acc;
        }
        total.max(0.0)
    }

    pub fn bonus(&self, phi: &[f64], beta: f64) -> f64 {
        if beta == 0.0 {
            0.0
        } else {
            beta * self.quad_form(phi).sqrt()
        }
    }

    /// Optimistic estimate `clip(wᵀφ + β√(φᵀΛ⁻¹φ), 0, B)`.
    pub fn q_estimate(&self, player: usize, phi: &[f64], hyper: &OviHyper) -> f64 {
        (self.linear(player, phi) + self.bonus(phi, hyper.beta)).clamp(0.0, hyper.b_clip)
    }

    /// Bonus-free estimate `clip(wᵀφ, 0, B)`.
    pub fn q_greedy(&self, player: usize, phi: &[f64], b_clip: f64) -> f64 {
        self.linear(player, phi).clamp(0.0, b_clip)
    }
}

/// Bonus coefficient, value cap, and ridge parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OviHyper {
    pub beta: f64,
    pub b_clip: f64,
    pub lambda: f64,
}

impl OviHyper {
    /// Cap set to the largest attainable value `max_i H (1 + log|A_i| / ε_i)`
    /// for per-step rewards in `[0, 1]`.
    pub fn auto(beta: f64, lambda: f64, horizon: usize, action_counts: &[usize], epsilon: &[f64]) -> Self {
        Self {
            beta,
            b_clip: value_cap(horizon, action_counts, epsilon),
            lambda,
        }
    }

    pub fn validate(&self) -> Result<(), FaError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(FaError::BadParameter(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.b_clip > 0.0 && self.b_clip.is_finite()) {
            return Err(FaError::BadParameter(format!("value cap must be positive, got {}", self.b_clip)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(FaError::BadParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

pub fn value_cap(horizon: usize, action_counts: &[usize], epsilon: &[f64]) -> f64 {
    action_counts
        .iter()
        .zip(epsilon)
        .map(|(&a, &e)| horizon as f64 * (1.0 + (a as f64).ln() / e))
        .fold(0.0, f64::max)
}

/// `q_estimate` straight from an unfactorized design.
pub fn q_estimate(design: &RidgeDesign, player: usize, phi: &[f64], hyper: &OviHyper) -> f64 {
    let w = design.weights(player);
    (dot(&w, phi) + design.bonus(phi, hyper.beta)).clamp(0.0, hyper.b_clip)
}

/// Cumulative elliptical potential against its logarithmic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub cumulative: f64,
    pub bound: f64,
    pub steps: usize,
}

impl PotentialReport {
    pub fn passes(&self) -> bool {
        self.cumulative <= self.bound
    }
}

pub fn potential_bound(dim: usize, steps: usize, lambda: f64) -> f64 {
    2.0 * dim as f64 * (1.0 + steps as f64 / lambda).ln()
}

/// Offline audit of a recorded trace of `(φ_k, Λ_k)` pairs where `Λ_k` is
/// the design before `φ_k` was absorbed.
pub fn elliptical_potential_audit(trace: &[(Vec<f64>, RidgeDesign)]) -> PotentialReport {
    let Some((_, first)) = trace.first() else {
        return PotentialReport {
            cumulative: 0.0,
            bound: 0.0,
            steps: 0,
        };
    };
    let cumulative = trace
        .iter()
        .map(|(phi, design)| design.bonus(phi, 1.0).powi(2))
        .sum();
    PotentialReport {
        cumulative,
        bound: potential_bound(first.dim(), trace.len(), first.lambda()),
        steps: trace.len(),
    }
}

/// Online version of [`elliptical_potential_audit`] over the full history of
/// absorbed features, keeping `Λ⁻¹` current by rank-one updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalAudit {
    lambda: f64,
    dim: usize,
    /// row-major `Λ⁻¹` of the full-history design
    inverse: Vec<f64>,
    cumulative: f64,
    steps: usize,
}

impl EllipticalAudit {
    pub fn new(dim: usize, lambda: f64) -> Self {
        let mut inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            inverse[i * dim + i] = 1.0 / lambda;
        }
        Self {
            lambda,
            dim,
            inverse,
            cumulative: 0.0,
            steps: 0,
        }
    }

    /// Adds `φᵀΛ⁻¹φ` to the running sum, then absorbs φ.
    pub fn record(&mut self, phi: &[f64]) -> f64 {
        let d = self.dim;
        let nz: Vec<usize> = (0..d).filter(|&i| phi[i] != 0.0).collect();
        // Λ⁻¹ is symmetric, so column i equals row i
        let mut u = vec![0.0; d];
        for &i in &nz {
            let row = &self.inverse[i * d..(i + 1) * d];
            for (s, r) in u.iter_mut().zip(row) {
                *s += r * phi[i];
            }
        }
        let q: f64 = nz.iter().map(|&i| phi[i] * u[i]).sum::<f64>().max(0.0);
        let denom = 1.0 + q;
        for i in 0..d {
            let si = u[i];
            if si == 0.0 {
                continue;
            }
            let row = &mut self.inverse[i * d..(i + 1) * d];
            for (r, &sj) in row.iter_mut().zip(&u) {
                *r -= si * sj / denom;
            }
        }
        self.cumulative += q;
        self.steps += 1;
        q
    }

    pub fn report(&self) -> PotentialReport {
        PotentialReport {
            cumulative: self.cumulative,
            bound: potential_bound(self.dim, self.steps, self.lambda),
            steps: self.steps,
        }
    }
}

const MAGIC: &[u8; 8] = b"RQREOVI\0";
const FORMAT_VERSION: u32 = 1;

/// One stage's entry in a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCheckpoint {
    pub design: RidgeDesign,
    pub audit: EllipticalAudit,
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, vs: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FaError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| FaError::Checkpoint(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64, FaError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, FaError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FaError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Writes per-stage designs and audits as little-endian 64-bit values after
/// a versioned header `(magic, version, d, λ, players, stages)`.
pub fn write_checkpoint(w: &mut impl Write, stages: &[StageCheckpoint]) -> Result<(), FaError> {
    let first = stages
        .first()
        .ok_or_else(|| FaError::Checkpoint("no stages to write".into()))?;
    let (d, players, lambda) = (first.design.dim(), first.design.players(), first.design.lambda());
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    put_u64(w, d as u64)?;
    put_f64s(w, [lambda])?;
    put_u64(w, players as u64)?;
    put_u64(w, stages.len() as u64)?;
    for s in stages {
        if s.design.dim() != d || s.design.players() != players || s.audit.dim != d {
            return Err(FaError::Checkpoint("stages disagree on shape".into()));
        }
        put_u64(w, s.design.count as u64)?;
        // column-major is fine: Λ is symmetric
        put_f64s(w, s.design.gram.iter().copied())?;
        for t in &s.design.target_sums {
            put_f64s(w, t.iter().copied())?;
        }
        put_u64(w, s.audit.steps as u64)?;
        put_f64s(w, [s.audit.cumulative])?;
        put_f64s(w, s.audit.inverse.iter().copied())?;
    }
    Ok(())
}

pub fn read_checkpoint(r: impl Read) -> Result<Vec<StageCheckpoint>, FaError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(FaError::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.bytes()?);
    if version != FORMAT_VERSION {
        return Err(FaError::Checkpoint(format!("unsupported format version {version}")));
    }
    let d = r.u64()? as usize;
    let lambda = r.f64()?;
    let players = r.u64()? as usize;
    let stages = r.u64()? as usize;
    if d == 0 || d > 1 << 16 || players == 0 || players > 1 << 10 || stages > 1 << 20 {
        return Err(FaError::Checkpoint(format!(
            "implausible header (d={d}, players={players}, stages={stages})"
        )));
    }
    let mut out = Vec::with_capacity(stages);
    for _ in 0..stages {
        let count = r.u64()? as usize;
        let gram = DMatrix::from_vec(d, d, r.f64s(d * d)?);
        let target_sums = (0..players)
            .map(|_| r.f64s(d).map(DVector::from_vec))
            .collect::<Result<_, _>>()?;
        let steps = r.u64()? as usize;
        let cumulative = r.f64()?;
        let inverse = r.f64s(d * d)?;
        out.push(StageCheckpoint {
            design: RidgeDesign {
                lambda,
                gram,
                target_sums,
                count,
            },
            audit: EllipticalAudit {
                lambda,
                dim: d,
                inverse,
                cumulative,
                steps,
            },
        });
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(FaError::Checkpoint("trailing bytes after last stage".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn single_update_arithmetic() {
        let mut design = RidgeDesign::new(2, 1, 1.0).unwrap();
        design.update(&[1.0, 0.0], &[1.0]).unwrap();
        assert_eq!(design.gram()[(0, 0)], 2.0);
        assert_eq!(design.gram()[(1, 1)], 1.0);
        assert_eq!(design.target_sum(0).as_slice(), &[1.0, 0.0]);
        let w = design.weights(0);
        assert!((w[0] - 0.5).abs() < 1e-15 && w[1].abs() < 1e-15);
    }

    #[test]
    fn zero_phi_only_counts() {
        let mut design = RidgeDesign::new(3, 2, 0.5).unwrap();
        let before = design.clone();
        design.update(&[0.0; 3], &[1.0, 2.0]).unwrap();
        assert_eq!(design.gram(), before.gram());
        assert_eq!(design.count(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut design = RidgeDesign::new(2, 1, 1.0).unwrap();
        assert!(matches!(
            design.update(&[1.0], &[0.0]),
            Err(FaError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            design.update(&[1.0, 1.0], &[0.0]),
            Err(FaError::FeatureNorm { .. })
        ));
        assert!(RidgeDesign::new(2, 1, 0.0).is_err());
    }

    #[test]
    fn bonus_rank_one_closed_form() {
        let mut design = RidgeDesign::new(3, 1, 1.0).unwrap();
        let e1 = [1.0, 0.0, 0.0];
        assert!((design.bonus(&e1, 0.1) - 0.1).abs() < 1e-15);
        let mut absorbed = 0;
        for k in [1, 10, 100] {
            while absorbed < k {
                design.update(&e1, &[0.0]).unwrap();
                absorbed += 1;
            }
            let expected = 0.1 / (1.0 + k as f64).sqrt();
            assert!((design.bonus(&e1, 0.1) - expected).abs() < 1e-14);
            let fitted = design.fit().unwrap();
            assert!((fitted.bonus(&e1, 0.1) - expected).abs() < 1e-14);
        }
        assert!((0.1 * 0.5f64.sqrt() - 0.07071).abs() < 1e-5);
    }

    #[test]
    fn q_estimate_clips() {
        let design = RidgeDesign::new(2, 1, 1.0).unwrap();
        let hyper = OviHyper {
            beta: 0.0,
            b_clip: 1.0,
            lambda: 1.0,
        };
        assert_eq!(q_estimate(&design, 0, &[0.6, 0.8], &hyper), 0.0);
        let tight = OviHyper {
            beta: 5.0,
            b_clip: 1.0,
            lambda: 1.0,
        };
        assert_eq!(q_estimate(&design, 0, &[0.6, 0.8], &tight), 1.0);
        let auto = OviHyper::auto(0.1, 1.0, 2, &[2, 2], &[1.0, 1.0]);
        assert!((auto.b_clip - 2.0 * (1.0 + 2f64.ln())).abs() < 1e-15);
        assert!((auto.b_clip - 3.38629).abs() < 1e-5);
    }

    #[test]
    fn fitted_quad_form_matches_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut design = RidgeDesign::new(6, 2, 0.7).unwrap();
        for _ in 0..40 {
            let phi = unit(&mut rng, 6);
            design.update(&phi, &[rng.gen(), rng.gen()]).unwrap();
        }
        let fitted = design.fit().unwrap();
        for _ in 0..20 {
            let phi = unit(&mut rng, 6);
            assert!((fitted.bonus(&phi, 1.0) - design.bonus(&phi, 1.0)).abs() < 1e-12);
            let w = design.weights(1);
            assert!((fitted.linear(1, &phi) - dot(&w, &phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn online_audit_matches_offline() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut design = RidgeDesign::new(4, 1, 1.0).unwrap();
        let mut audit = EllipticalAudit::new(4, 1.0);
        let mut trace = Vec::new();
        for _ in 0..200 {
            let phi = unit(&mut rng, 4);
            trace.push((phi.clone(), design.clone()));
            audit.record(&phi);
            design.update(&phi, &[0.0]).unwrap();
        }
        let offline = elliptical_potential_audit(&trace);
        let online = audit.report();
        assert!((offline.cumulative - online.cumulative).abs() < 1e-9);
        assert_eq!(offline.bound, online.bound);
        assert!(online.passes());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut stages = Vec::new();
        for _ in 0..3 {
            let mut design = RidgeDesign::new(5, 2, 1.5).unwrap();
            let mut audit = EllipticalAudit::new(5, 1.5);
            for _ in 0..7 {
                let phi = unit(&mut rng, 5);
                audit.record(&phi);
                design.update(&phi, &[rng.gen(), rng.gen()]).unwrap();
            }
            stages.push(StageCheckpoint { design, audit });
        }
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &stages).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, stages);

        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        bytes.push(0);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }

    #[test]
    fn validate_catches_indefinite_gram() {
        let mut design = RidgeDesign::new(2, 1, 1.0).unwrap();
        design.update(&[0.6, 0.8], &[1.0]).unwrap();
        assert!(design.validate().is_ok());
        design.gram[(0, 0)] = -3.0;
        assert!(design.validate().is_err());
    }

    #[test]
    fn normalization_clamps_to_unit_ball() {
        let probes = [vec![3.0, 4.0], vec![1.0, 0.0]];
        let scale = probe_scale(probes.iter().map(|v| v.as_slice()));
        assert_eq!(scale, 5.0);
        let mut outside = vec![6.0, 8.0];
        normalize_features(&mut outside, scale);
        assert!((norm(&outside) - 1.0).abs() < 1e-15);
    }
}
