//! Noise schedule, forward process, denoising objective and deterministic
//! DDIM sampling.
//!
//! Timesteps are 1-based: `t = 1..=T`, with `alpha_bar(0) = 1` for the clean
//! end of the chain. All batch arguments are row-major `n x d` buffers.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::StreamRng;
use crate::tensor::{AutodiffError, DenseVector, NodeId, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid schedule range: {0}")]
    InvalidRange(String),
    #[error("timestep {t} outside 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot take {steps} sampling steps from timestep {from}")]
    InvalidSteps { steps: usize, from: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Per-step `alpha_s = 1 - beta_s` and cumulative `alpha_bar_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear beta ramp from `beta_min` at `t = 1` to `beta_max` at `t = T`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, DiffusionError> {
        if steps < 2 {
            return Err(DiffusionError::InvalidRange(format!("need at least 2 timesteps, got {steps}")));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(DiffusionError::InvalidRange(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let span = (beta_max - beta_min) / (steps - 1) as f64;
        let alpha: Vec<f64> = (0..steps).map(|s| 1.0 - (beta_min + s as f64 * span)).collect();
        Self::from_alphas(alpha)
    }

    pub fn from_alphas(alpha: Vec<f64>) -> Result<Self, DiffusionError> {
        if alpha.len() < 2 {
            return Err(DiffusionError::InvalidRange("need at least 2 timesteps".into()));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(DiffusionError::InvalidRange(format!("alpha {a} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self { alpha, alpha_bar })
    }

    /// T = 100 with betas in [1e-3, 0.2].
    pub fn desk_default() -> Self {
        Self::linear(100, 1e-3, 0.2).expect("valid default schedule")
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn check_timestep(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::TimestepOutOfRange { t, max: self.steps() });
        }
        Ok(())
    }

    /// Hash of `T` and the exact alpha bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.steps() as u64).to_le_bytes());
        for a in &self.alpha {
            h.update(a.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// The noise-prediction network `eps_theta(x_t, t)`.
pub trait NoisePredictor {
    fn data_dim(&self) -> usize;

    fn param_len(&self) -> usize;

    /// Predicts noise for each row of `x` (`ts.len()` rows).
    fn predict(&self, x: &[f64], ts: &[usize]) -> Vec<f64>;

    /// Records the prediction on `tape`, registering every parameter exactly
    /// once in a fixed order. Returns the `n x d` prediction node.
    fn record(&self, tape: &mut Tape, x: &[f64], ts: &[usize]) -> NodeId;
}

/// `sqrt(ab) x0 + sqrt(1 - ab) eps` for an explicit `alpha_bar`.
pub fn mix(alpha_bar: f64, x0: &[f64], eps: &[f64]) -> Vec<f64> {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
}

pub fn forward_noise(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>, DiffusionError> {
    sched.check_timestep(t)?;
    if x0.len() != eps.len() {
        return Err(DiffusionError::DimensionMismatch { expected: x0.len(), found: eps.len() });
    }
    Ok(mix(sched.alpha_bar(t), x0, eps))
}

/// Inverts the forward process: `(x_t - sqrt(ab) x0) / sqrt(1 - ab)`.
pub fn recover_noise(x_t: &[f64], x0: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>, DiffusionError> {
    sched.check_timestep(t)?;
    if x0.len() != x_t.len() {
        return Err(DiffusionError::DimensionMismatch { expected: x_t.len(), found: x0.len() });
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t.iter().zip(x0).map(|(xt, x)| (xt - a * x) / b).collect())
}

/// `(1/n) sum_k ||target_k - eps_theta(x_k, t_k)||^2` and its gradient.
pub fn noise_regression<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    ts: &[usize],
    target: &[f64],
) -> Result<(f64, DenseVector), DiffusionError> {
    let n = ts.len();
    if n == 0 {
        return Err(DiffusionError::EmptyBatch);
    }
    let d = model.data_dim();
    for buf in [x_t, target] {
        if buf.len() != n * d {
            return Err(DiffusionError::DimensionMismatch { expected: n * d, found: buf.len() });
        }
    }
    let mut tape = Tape::new();
    let pred = model.record(&mut tape, x_t, ts);
    let tgt = tape.constant(n, d, target.to_vec());
    let resid = tape.sub(tgt, pred);
    let sq = tape.square(resid);
    let total = tape.sum(sq);
    let loss = tape.scale(total, 1.0 / n as f64);
    let grad = tape.backward(loss)?;
    Ok((tape.scalar(loss).expect("scalar loss"), grad))
}

/// One denoising-objective evaluation on `batch` with fresh `t ~ U{1..T}` and
/// `eps ~ N(0, I)` per item. Timesteps for the whole batch are drawn before
/// the noise.
pub fn train_step<P: NoisePredictor + ?Sized>(
    model: &P,
    batch: &[&[f64]],
    sched: &NoiseSchedule,
    rng: &mut StreamRng,
) -> Result<(f64, DenseVector), DiffusionError> {
    if batch.is_empty() {
        return Err(DiffusionError::EmptyBatch);
    }
    let d = model.data_dim();
    let ts: Vec<usize> = batch.iter().map(|_| rng.timestep(sched.steps())).collect();
    let mut x_t = Vec::with_capacity(batch.len() * d);
    let mut eps_all = Vec::with_capacity(batch.len() * d);
    for (x0, &t) in batch.iter().zip(&ts) {
        if x0.len() != d {
            return Err(DiffusionError::DimensionMismatch { expected: d, found: x0.len() });
        }
        let eps = rng.normal_vec(d);
        x_t.extend(forward_noise(x0, t, &eps, sched)?);
        eps_all.extend(eps);
    }
    noise_regression(model, &x_t, &ts, &eps_all)
}

/// Descending timestep grid with `steps` entries starting at `from`.
pub fn ddim_grid(from: usize, steps: usize) -> Result<Vec<usize>, DiffusionError> {
    if steps == 0 || steps > from {
        return Err(DiffusionError::InvalidSteps { steps, from });
    }
    Ok((0..steps).map(|k| from - k * from / steps).collect())
}

/// Deterministic DDIM from pure noise at `t = T`.
pub fn ddim_sample<P: NoisePredictor + ?Sized>(
    model: &P,
    x_big_t: &[f64],
    sched: &NoiseSchedule,
    steps: usize,
) -> Result<Vec<f64>, DiffusionError> {
    ddim_sample_from(model, x_big_t, sched.steps(), sched, steps)
}

/// Deterministic DDIM starting at an intermediate timestep. Each update forms
/// `x0_hat = (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)` and re-noises it to
/// the next grid point with the same `eps_hat`; the last step lands on `t = 0`.
pub fn ddim_sample_from<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    from: usize,
    sched: &NoiseSchedule,
    steps: usize,
) -> Result<Vec<f64>, DiffusionError> {
    ddim_sample_clipped(model, x_t, from, sched, steps, None)
}

/// [`ddim_sample_from`] with `x0_hat` clamped to `clip` at every step. The
/// noise estimate is then recomputed from the clamped `x0_hat`, so the
/// re-noised state stays consistent with `x_t`.
pub fn ddim_sample_clipped<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    from: usize,
    sched: &NoiseSchedule,
    steps: usize,
    clip: Option<(f64, f64)>,
) -> Result<Vec<f64>, DiffusionError> {
    sched.check_timestep(from)?;
    let d = model.data_dim();
    if x_t.is_empty() || x_t.len() % d != 0 {
        return Err(DiffusionError::DimensionMismatch { expected: d, found: x_t.len() });
    }
    let n = x_t.len() / d;
    let grid = ddim_grid(from, steps)?;
    let mut x = x_t.to_vec();
    for (k, &t) in grid.iter().enumerate() {
        let next = grid.get(k + 1).copied().unwrap_or(0);
        let eps_hat = model.predict(&x, &vec![t; n]);
        let (ab, ab_next) = (sched.alpha_bar(t), sched.alpha_bar(next));
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let (na, nb) = (ab_next.sqrt(), (1.0 - ab_next).sqrt());
        for (xv, e) in x.iter_mut().zip(&eps_hat) {
            let mut x0_hat = (*xv - sb * e) / sa;
            let mut e = *e;
            if let Some((lo, hi)) = clip {
                let clamped = x0_hat.clamp(lo, hi);
                if clamped != x0_hat {
                    e = (*xv - sa * clamped) / sb;
                    x0_hat = clamped;
                }
            }
            *xv = na * x0_hat + nb * e;
        }
    }
    Ok(x)
}

/// Full-stride deterministic sampler with optional `x0_hat` clamping.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampler {
    pub schedule: NoiseSchedule,
    pub clip: Option<(f64, f64)>,
}

impl Sampler {
    pub fn new(schedule: NoiseSchedule, clip: Option<(f64, f64)>) -> Self {
        Self { schedule, clip }
    }

    /// Denoises every row of `x_t` from `from` to `t = 0`, one step per timestep.
    pub fn denoise<P: NoisePredictor + ?Sized>(&self, model: &P, x_t: &[f64], from: usize) -> Result<Vec<f64>, DiffusionError> {
        ddim_sample_clipped(model, x_t, from, &self.schedule, from, self.clip)
    }

    pub fn sample<P: NoisePredictor + ?Sized>(&self, model: &P, x_big_t: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        self.denoise(model, x_big_t, self.schedule.steps())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    /// Predicts zero noise and owns `k` unused parameters.
    struct ZeroNet {
        d: usize,
        k: usize,
    }

    impl NoisePredictor for ZeroNet {
        fn data_dim(&self) -> usize {
            self.d
        }
        fn param_len(&self) -> usize {
            self.k
        }
        fn predict(&self, _x: &[f64], ts: &[usize]) -> Vec<f64> {
            vec![0.0; ts.len() * self.d]
        }
        fn record(&self, tape: &mut Tape, _x: &[f64], ts: &[usize]) -> NodeId {
            let _ = tape.param(1, self.k, vec![0.5; self.k]);
            tape.constant(ts.len(), self.d, vec![0.0; ts.len() * self.d])
        }
    }

    /// Knows the clean sample and returns the exact noise.
    struct Oracle<'a> {
        x0: &'a [f64],
        sched: &'a NoiseSchedule,
    }

    impl NoisePredictor for Oracle<'_> {
        fn data_dim(&self) -> usize {
            self.x0.len()
        }
        fn param_len(&self) -> usize {
            2
        }
        fn predict(&self, x: &[f64], ts: &[usize]) -> Vec<f64> {
            let d = self.x0.len();
            ts.iter()
                .enumerate()
                .flat_map(|(k, &t)| recover_noise(&x[k * d..(k + 1) * d], self.x0, t, self.sched).unwrap())
                .collect()
        }
        fn record(&self, tape: &mut Tape, x: &[f64], ts: &[usize]) -> NodeId {
            let _ = tape.param(1, 2, vec![1.0, -1.0]);
            let p = self.predict(x, ts);
            tape.constant(ts.len(), self.x0.len(), p)
        }
    }

    #[test]
    fn schedule_two_steps() {
        let s = NoiseSchedule::linear(2, 0.1, 0.1).unwrap();
        assert_eq!(s.alphas(), &[0.9, 0.9]);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn schedule_invariants() {
        let s = NoiseSchedule::desk_default();
        assert_eq!(s.steps(), 100);
        for t in 1..=100 {
            assert!(s.alpha(t) > 0.0 && s.alpha(t) < 1.0);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
        }
        assert!((s.alpha(1) - 0.999).abs() < 1e-15);
        assert!((s.alpha(100) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejects_bad_ranges() {
        assert!(NoiseSchedule::linear(1, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn fingerprint_tracks_schedule() {
        let a = NoiseSchedule::desk_default();
        assert_eq!(a.fingerprint(), NoiseSchedule::desk_default().fingerprint());
        assert_ne!(a.fingerprint(), NoiseSchedule::linear(50, 1e-3, 0.2).unwrap().fingerprint());
    }

    #[test]
    fn forward_limits() {
        let x0 = [0.5, -1.0];
        assert_eq!(mix(1.0, &x0, &[3.0, 4.0]), x0.to_vec());
        let s = NoiseSchedule::desk_default();
        let xt = forward_noise(&x0, 10, &[0.0, 0.0], &s).unwrap();
        let a = s.alpha_bar(10).sqrt();
        assert_eq!(xt, vec![a * 0.5, -a]);
        assert!(matches!(forward_noise(&x0, 0, &[0.0, 0.0], &s), Err(DiffusionError::TimestepOutOfRange { .. })));
        assert!(matches!(forward_noise(&x0, 101, &[0.0, 0.0], &s), Err(DiffusionError::TimestepOutOfRange { .. })));
        assert!(matches!(forward_noise(&x0, 5, &[0.0], &s), Err(DiffusionError::DimensionMismatch { .. })));
    }

    #[test]
    fn noise_recovery_identity() {
        let s = NoiseSchedule::desk_default();
        let mut rng = StreamRng::new(4, Purpose::Noise);
        for t in [1, 17, 50, 100] {
            let x0 = rng.normal_vec(12);
            let eps = rng.normal_vec(12);
            let xt = forward_noise(&x0, t, &eps, &s).unwrap();
            let back = recover_noise(&xt, &x0, t, &s).unwrap();
            for (a, b) in back.iter().zip(&eps) {
                assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_predictor_loss_is_chi_square_mean() {
        let s = NoiseSchedule::desk_default();
        let d = 6;
        let net = ZeroNet { d, k: 3 };
        let mut rng = StreamRng::new(2, Purpose::Noise);
        let data: Vec<Vec<f64>> = (0..2000).map(|k| vec![(k % 3) as f64 - 1.0; d]).collect();
        let batch: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let (loss, grad) = train_step(&net, &batch, &s, &mut rng).unwrap();
        // E||eps||^2 = d; the batch mean has std sqrt(2d / n).
        assert!((loss - d as f64).abs() < 4.0 * (2.0 * d as f64 / 2000.0).sqrt(), "loss {loss}");
        assert_eq!(grad.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        let s = NoiseSchedule::desk_default();
        let x0 = vec![0.3, -0.7, 1.1];
        let net = Oracle { x0: &x0, sched: &s };
        let mut rng = StreamRng::new(8, Purpose::Noise);
        let (loss, grad) = train_step(&net, &[x0.as_slice()], &s, &mut rng).unwrap();
        assert!(loss < 1e-20);
        assert_eq!(grad.as_slice(), &[0.0, 0.0]);
        assert!(matches!(train_step(&net, &[], &s, &mut rng), Err(DiffusionError::EmptyBatch)));
    }

    #[test]
    fn ddim_zero_predictor_closed_form() {
        let s = NoiseSchedule::desk_default();
        let net = ZeroNet { d: 3, k: 1 };
        let xt = [0.2, -1.0, 0.7];
        let out = ddim_sample(&net, &xt, &s, 100).unwrap();
        let scale = 1.0 / s.alpha_bar(100).sqrt();
        for (o, x) in out.iter().zip(&xt) {
            assert!((o - x * scale).abs() < 1e-9 * (x * scale).abs());
        }
        let strided = ddim_sample(&net, &xt, &s, 10).unwrap();
        for (o, x) in strided.iter().zip(&xt) {
            assert!((o - x * scale).abs() < 1e-9 * (x * scale).abs());
        }
    }

    #[test]
    fn ddim_oracle_recovers_clean_sample() {
        let s = NoiseSchedule::desk_default();
        let x0 = vec![0.25, -0.5];
        let net = Oracle { x0: &x0, sched: &s };
        let xt = forward_noise(&x0, 50, &[1.3, -0.4], &s).unwrap();
        let out = ddim_sample_from(&net, &xt, 50, &s, 50).unwrap();
        for (o, x) in out.iter().zip(&x0) {
            assert!((o - x).abs() < 1e-9);
        }
    }

    #[test]
    fn ddim_grid_and_errors() {
        assert_eq!(ddim_grid(10, 10).unwrap(), (1..=10).rev().collect::<Vec<_>>());
        assert_eq!(ddim_grid(100, 4).unwrap(), vec![100, 75, 50, 25]);
        assert!(ddim_grid(5, 6).is_err());
        assert!(ddim_grid(5, 0).is_err());
        let s = NoiseSchedule::desk_default();
        let net = ZeroNet { d: 2, k: 1 };
        assert!(matches!(
            ddim_sample_from(&net, &[0.0, 0.0], 101, &s, 10),
            Err(DiffusionError::TimestepOutOfRange { .. })
        ));
    }
}
