//! The noise-prediction MLP and its Adam optimizer state.
//!
//! Input rows are `[x_t, emb(t)]` where `emb` is a sinusoidal embedding of the
//! integer timestep. Hidden layers use the configured activation; the output
//! layer is linear. Parameters are stored flat, layer by layer, weight
//! (`fan_in x fan_out`, row-major) before bias.
//!
//! An optional [`Preconditioner`] wraps the MLP `F` so that
//!
//! ```text
//! x'  = x_t - sqrt(ab_t) mu
//! eps = c_skip(t) x' + c_out(t) F(c_in(t) x', emb(t))
//! ```
//!
//! with `v = ab sigma_d^2 + 1 - ab`, `c_in = 1/sqrt(v)`,
//! `c_skip = sqrt(1 - ab)/v` and `c_out = sqrt(ab) sigma_d / sqrt(v)`. The
//! skip term is the best linear noise predictor for data with mean `mu` and
//! per-coordinate variance `sigma_d^2`, so `F` only learns a unit-scale
//! residual.

use thiserror::Error;

use crate::diffusion::{NoisePredictor, NoiseSchedule};
use crate::rng::{Purpose, StreamRng};
use crate::tensor::dense::matmul_into;
use crate::tensor::tape::silu;
use crate::tensor::{DenseVector, NodeId, Tape};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiserError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("gradient has a non-finite entry at {index}")]
    NonFiniteGradient { index: usize },
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu(x),
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arch {
    layers: Vec<usize>,
    activation: Activation,
    embed_dim: usize,
}

impl Arch {
    /// `layers` lists every width from the input (`data_dim + embed_dim`) to
    /// the output (`data_dim`).
    pub fn new(layers: Vec<usize>, activation: Activation, embed_dim: usize) -> Result<Self, DenoiserError> {
        if layers.len() < 2 {
            return Err(DenoiserError::InvalidArch("need at least input and output widths".into()));
        }
        if layers.contains(&0) {
            return Err(DenoiserError::InvalidArch("zero-width layer".into()));
        }
        if embed_dim % 2 != 0 {
            return Err(DenoiserError::InvalidArch(format!("embedding dimension {embed_dim} must be even")));
        }
        let d = *layers.last().unwrap();
        if layers[0] != d + embed_dim {
            return Err(DenoiserError::InvalidArch(format!(
                "input width {} must equal data dim {d} + embedding dim {embed_dim}",
                layers[0]
            )));
        }
        Ok(Self { layers, activation, embed_dim })
    }

    /// `[d + 32, 128, 128, d]` with SiLU.
    pub fn desk(data_dim: usize) -> Self {
        Self::new(vec![data_dim + 32, 128, 128, data_dim], Activation::Silu, 32).expect("valid desk arch")
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn data_dim(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(fan_in, fan_out, offset)` per layer.
    fn blocks(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.layers.windows(2).scan(0usize, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some((w[0], w[1], start))
        })
    }
}

pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preconditioner {
    mean: Vec<f64>,
    sigma_data_sq: f64,
    alpha_bar: Vec<f64>,
}

impl Preconditioner {
    pub fn new(mean: Vec<f64>, sigma_data_sq: f64, sched: &NoiseSchedule) -> Result<Self, DenoiserError> {
        if !(sigma_data_sq > 0.0 && sigma_data_sq.is_finite()) {
            return Err(DenoiserError::InvalidArch(format!("data variance {sigma_data_sq} must be positive")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(DenoiserError::InvalidArch("non-finite data mean".into()));
        }
        let alpha_bar = (0..=sched.steps()).map(|t| sched.alpha_bar(t)).collect();
        Ok(Self { mean, sigma_data_sq, alpha_bar })
    }

    /// Per-coordinate mean and the average per-coordinate variance of `samples`.
    pub fn from_samples(samples: &[Vec<f64>], sched: &NoiseSchedule) -> Result<Self, DenoiserError> {
        let d = samples.first().map(Vec::len).unwrap_or(0);
        if samples.len() < 2 || d == 0 {
            return Err(DenoiserError::InvalidArch("need at least two samples for data statistics".into()));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
        }
        let var: f64 = samples
            .iter()
            .map(|s| s.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
            .sum::<f64>()
            / (n * d as f64);
        Self::new(mean, var, sched)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma_data_sq(&self) -> f64 {
        self.sigma_data_sq
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    /// `(c_skip, c_out, c_in, sqrt(ab))` at timestep `t`.
    pub fn coefficients(&self, t: usize) -> (f64, f64, f64, f64) {
        let ab = *self.alpha_bar.get(t).unwrap_or_else(|| panic!("timestep {t} beyond schedule of {}", self.steps()));
        let v = ab * self.sigma_data_sq + 1.0 - ab;
        ((1.0 - ab).sqrt() / v, (ab * self.sigma_data_sq).sqrt() / v.sqrt(), 1.0 / v.sqrt(), ab.sqrt())
    }

    /// Network input, skip term and output scale for a batch of rows.
    fn split(&self, x: &[f64], ts: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.mean.len();
        let mut input = Vec::with_capacity(x.len());
        let mut skip = Vec::with_capacity(x.len());
        let mut scale = Vec::with_capacity(x.len());
        for (k, &t) in ts.iter().enumerate() {
            let (c_skip, c_out, c_in, sa) = self.coefficients(t);
            for (xv, m) in x[k * d..(k + 1) * d].iter().zip(&self.mean) {
                let centered = xv - sa * m;
                input.push(c_in * centered);
                skip.push(c_skip * centered);
                scale.push(c_out);
            }
        }
        (input, skip, scale)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    arch: Arch,
    precond: Option<Preconditioner>,
    theta: DenseVector,
    state: AdamState,
}

impl DenoiserParams {
    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// zero biases, zero moments.
    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut rng = StreamRng::new(seed, Purpose::Init);
        let mut theta = vec![0.0; arch.param_count()];
        for (fan_in, fan_out, off) in arch.blocks() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in &mut theta[off..off + fan_in * fan_out] {
                *w = bound * (2.0 * rng.uniform() - 1.0);
            }
        }
        let n = theta.len();
        Self { arch, precond: None, theta: DenseVector::from_vec(theta), state: AdamState::zeros(n) }
    }

    pub fn with_preconditioner(mut self, precond: Preconditioner) -> Result<Self, DenoiserError> {
        if precond.mean.len() != self.arch.data_dim() {
            return Err(DenoiserError::DimensionMismatch { expected: self.arch.data_dim(), found: precond.mean.len() });
        }
        self.precond = Some(precond);
        Ok(self)
    }

    pub fn preconditioner(&self) -> Option<&Preconditioner> {
        self.precond.as_ref()
    }

    pub fn from_parts(arch: Arch, theta: DenseVector, state: AdamState) -> Result<Self, DenoiserError> {
        let n = arch.param_count();
        for len in [theta.len(), state.m.len(), state.v.len()] {
            if len != n {
                return Err(DenoiserError::DimensionMismatch { expected: n, found: len });
            }
        }
        Ok(Self { arch, precond: None, theta, state })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn theta(&self) -> &DenseVector {
        &self.theta
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    pub fn reset_optimizer(&mut self) {
        self.state = AdamState::zeros(self.theta.len());
    }

    /// Copy with the same architecture and the given weights.
    pub fn with_theta(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.theta.len());
        Self {
            arch: self.arch.clone(),
            precond: self.precond.clone(),
            theta: DenseVector::from_vec(theta.to_vec()),
            state: self.state.clone(),
        }
    }

    /// Indices of the weight (not bias) entries of layer `layer`.
    pub fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let (fan_in, fan_out, off) = self.arch.blocks().nth(layer).expect("layer index");
        off..off + fan_in * fan_out
    }

    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let (fan_in, fan_out, off) = self.arch.blocks().nth(layer).expect("layer index");
        off + fan_in * fan_out..off + fan_in * fan_out + fan_out
    }

    fn input_rows(&self, x: &[f64], ts: &[usize]) -> Vec<f64> {
        let d = self.arch.data_dim();
        let e = self.arch.embed_dim;
        let mut rows = Vec::with_capacity(ts.len() * (d + e));
        for (k, &t) in ts.iter().enumerate() {
            rows.extend_from_slice(&x[k * d..(k + 1) * d]);
            rows.extend(time_embedding(t, e));
        }
        rows
    }

    /// Noise prediction for a single sample.
    pub fn predict_noise(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>, DenoiserError> {
        let d = self.arch.data_dim();
        if x_t.len() != d {
            return Err(DenoiserError::DimensionMismatch { expected: d, found: x_t.len() });
        }
        Ok(self.predict(x_t, &[t]))
    }

    /// Adam with bias correction; increments the step counter.
    pub fn adam_update(&mut self, grad: &DenseVector, lr: f64) -> Result<(), DenoiserError> {
        if grad.len() != self.theta.len() {
            return Err(DenoiserError::DimensionMismatch { expected: self.theta.len(), found: grad.len() });
        }
        if !(lr > 0.0) {
            return Err(DenoiserError::InvalidLearningRate(lr));
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(DenoiserError::NonFiniteGradient { index });
        }
        self.state.step += 1;
        let k = self.state.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(k);
        let c2 = 1.0 - ADAM_BETA2.powi(k);
        let theta = self.theta.as_mut_slice();
        for i in 0..theta.len() {
            let g = grad[i];
            let m = ADAM_BETA1 * self.state.m[i] + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * self.state.v[i] + (1.0 - ADAM_BETA2) * g * g;
            self.state.m[i] = m;
            self.state.v[i] = v;
            theta[i] -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

impl NoisePredictor for DenoiserParams {
    fn data_dim(&self) -> usize {
        self.arch.data_dim()
    }

    fn param_len(&self) -> usize {
        self.theta.len()
    }

    fn predict(&self, x: &[f64], ts: &[usize]) -> Vec<f64> {
        match &self.precond {
            None => self.mlp(x, ts),
            Some(p) => {
                let (input, skip, scale) = p.split(x, ts);
                let f = self.mlp(&input, ts);
                f.iter().zip(&skip).zip(&scale).map(|((fv, s), c)| s + c * fv).collect()
            }
        }
    }

    fn record(&self, tape: &mut Tape, x: &[f64], ts: &[usize]) -> NodeId {
        match &self.precond {
            None => self.record_mlp(tape, x, ts),
            Some(p) => {
                let (n, d) = (ts.len(), self.arch.data_dim());
                let (input, skip, scale) = p.split(x, ts);
                let f = self.record_mlp(tape, &input, ts);
                let scale = tape.constant(n, d, scale);
                let skip = tape.constant(n, d, skip);
                let scaled = tape.mul(f, scale);
                tape.add(scaled, skip)
            }
        }
    }
}

impl DenoiserParams {
    fn mlp(&self, x: &[f64], ts: &[usize]) -> Vec<f64> {
        let n = ts.len();
        let theta = self.theta.as_slice();
        let mut h = self.input_rows(x, ts);
        let last = self.arch.layers.len() - 2;
        for (layer, (fan_in, fan_out, off)) in self.arch.blocks().enumerate() {
            let w = &theta[off..off + fan_in * fan_out];
            let b = &theta[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let mut out = vec![0.0; n * fan_out];
            matmul_into(&h, w, n, fan_in, fan_out, &mut out);
            for row in out.chunks_mut(fan_out) {
                for (o, bv) in row.iter_mut().zip(b) {
                    *o += bv;
                }
            }
            if layer != last {
                out.iter_mut().for_each(|v| *v = self.arch.activation.apply(*v));
            }
            h = out;
        }
        h
    }

    fn record_mlp(&self, tape: &mut Tape, x: &[f64], ts: &[usize]) -> NodeId {
        let n = ts.len();
        let theta = self.theta.as_slice();
        let mut h = tape.constant(n, self.arch.layers[0], self.input_rows(x, ts));
        let last = self.arch.layers.len() - 2;
        for (layer, (fan_in, fan_out, off)) in self.arch.blocks().enumerate() {
            let w = tape.param(fan_in, fan_out, theta[off..off + fan_in * fan_out].to_vec());
            let b = tape.param(1, fan_out, theta[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].to_vec());
            let z = tape.matmul(h, w);
            let z = tape.add_bias(z, b);
            h = if layer == last {
                z
            } else {
                match self.arch.activation {
                    Activation::Silu => tape.silu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            };
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_coords;

    #[test]
    fn arch_validation() {
        assert!(Arch::new(vec![34, 16, 2], Activation::Silu, 32).is_ok());
        assert!(matches!(Arch::new(vec![33, 16, 2], Activation::Silu, 32), Err(DenoiserError::InvalidArch(_))));
        assert!(matches!(Arch::new(vec![2], Activation::Silu, 0), Err(DenoiserError::InvalidArch(_))));
        assert!(matches!(Arch::new(vec![5, 2], Activation::Silu, 3), Err(DenoiserError::InvalidArch(_))));
        assert_eq!(Arch::desk(2).param_count(), 34 * 128 + 128 + 128 * 128 + 128 + 128 * 2 + 2);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = DenoiserParams::init(Arch::desk(2), 7);
        let b = DenoiserParams::init(Arch::desk(2), 7);
        let c = DenoiserParams::init(Arch::desk(2), 8);
        assert_eq!(a.theta(), b.theta());
        assert_ne!(a.theta(), c.theta());
        for layer in 0..3 {
            assert!(a.theta().as_slice()[a.bias_range(layer)].iter().all(|v| *v == 0.0));
        }
        assert!(a.state().m.iter().chain(&a.state().v).all(|v| *v == 0.0));
    }

    #[test]
    fn init_std_matches_fan_in_target() {
        let arch = Arch::new(vec![64, 128, 128, 64], Activation::Silu, 0).unwrap();
        let p = DenoiserParams::init(arch, 3);
        for (layer, fan_in) in [64usize, 128, 128].iter().enumerate() {
            let w = &p.theta().as_slice()[p.weight_range(layer)];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
            let target = 1.0 / (3.0 * *fan_in as f64).sqrt();
            assert!((std / target - 1.0).abs() < 0.1, "layer {layer}: {std} vs {target}");
        }
    }

    #[test]
    fn zero_weights_predict_zero_and_prediction_is_pure() {
        let p = DenoiserParams::init(Arch::desk(3), 1);
        let z = p.with_theta(&vec![0.0; p.param_len()]);
        assert_eq!(z.predict_noise(&[1.0, 2.0, 3.0], 40).unwrap(), vec![0.0; 3]);
        let a = p.predict_noise(&[0.1, -0.2, 0.3], 40).unwrap();
        let b = p.predict_noise(&[0.1, -0.2, 0.3], 40).unwrap();
        assert_eq!(a, b);
        assert!(matches!(p.predict_noise(&[0.0], 1), Err(DenoiserError::DimensionMismatch { .. })));
    }

    #[test]
    fn taped_and_plain_forward_agree_bitwise() {
        let p = DenoiserParams::init(Arch::desk(4), 2);
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).sin()).collect();
        let ts = [3, 50, 99];
        let mut tape = Tape::new();
        let out = p.record(&mut tape, &x, &ts);
        assert_eq!(tape.value(out), p.predict(&x, &ts).as_slice());
        assert_eq!(tape.param_len(), p.param_len());
    }

    #[test]
    fn weight_perturbation_matches_tape_partials() {
        let p = DenoiserParams::init(Arch::new(vec![10, 12, 2], Activation::Silu, 8).unwrap(), 5);
        let x = [0.4, -0.9];
        // d(sum of outputs)/d(theta) from the tape vs. finite differences.
        let mut tape = Tape::new();
        let out = p.record(&mut tape, &x, &[30]);
        let s = tape.sum(out);
        let g = tape.backward(s).unwrap();
        let coords: Vec<usize> = (0..p.param_len()).step_by(7).collect();
        let fd = finite_diff_coords(
            |th| p.with_theta(th).predict(&x, &[30]).iter().sum(),
            p.theta(),
            1e-5,
            &coords,
        )
        .unwrap();
        for (k, &c) in coords.iter().enumerate() {
            assert!((g[c] - fd[k]).abs() < 1e-6 * (1.0 + fd[k].abs()), "coord {c}");
        }
    }

    fn preconditioned(seed: u64) -> DenoiserParams {
        let sched = NoiseSchedule::desk_default();
        let samples: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64 * 0.9).sin(), (i as f64 * 0.4).cos() * 0.5]).collect();
        let pc = Preconditioner::from_samples(&samples, &sched).unwrap();
        DenoiserParams::init(Arch::new(vec![10, 12, 2], Activation::Silu, 8).unwrap(), seed).with_preconditioner(pc).unwrap()
    }

    #[test]
    fn preconditioned_taped_and_plain_forward_agree() {
        let p = preconditioned(4);
        let x = [0.3, -0.7, 1.2, 0.1];
        let ts = [1, 99];
        let mut tape = Tape::new();
        let out = p.record(&mut tape, &x, &ts);
        for (a, b) in tape.value(out).iter().zip(p.predict(&x, &ts).iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn preconditioned_gradient_matches_finite_differences() {
        let p = preconditioned(6);
        let x = [0.4, -0.9];
        let mut tape = Tape::new();
        let out = p.record(&mut tape, &x, &[70]);
        let s = tape.sum(out);
        let g = tape.backward(s).unwrap();
        let coords: Vec<usize> = (0..p.param_len()).step_by(5).collect();
        let fd = finite_diff_coords(|th| p.with_theta(th).predict(&x, &[70]).iter().sum(), p.theta(), 1e-5, &coords).unwrap();
        for (k, &c) in coords.iter().enumerate() {
            assert!((g[c] - fd[k]).abs() < 1e-6 * (1.0 + fd[k].abs()), "coord {c}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = DenoiserParams::init(Arch::desk(2), 1);
        let before = p.theta().clone();
        p.adam_update(&DenseVector::zeros(p.param_len()), 1e-3).unwrap();
        assert_eq!(p.theta(), &before);
        assert_eq!(p.state().step, 1);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = DenoiserParams::init(Arch::desk(2), 1);
        let before = p.theta().clone();
        let n = p.param_len();
        p.adam_update(&DenseVector::from_vec(vec![-0.37; n]), 1e-2).unwrap();
        for (a, b) in p.theta().iter().zip(before.iter()) {
            assert!(((a - b) - 1e-2).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let arch = Arch::new(vec![4, 2], Activation::Silu, 2).unwrap();
        let mut p = DenoiserParams::init(arch, 9);
        let target: Vec<f64> = (0..p.param_len()).map(|i| (i as f64 * 0.7).cos() * 0.05).collect();
        let mut lr = 1e-2;
        for _ in 0..1000 {
            let g: Vec<f64> = p.theta().iter().zip(&target).map(|(t, o)| 2.0 * (t - o)).collect();
            p.adam_update(&DenseVector::from_vec(g), lr).unwrap();
            lr *= 0.995;
        }
        for (t, o) in p.theta().iter().zip(&target) {
            assert!((t - o).abs() < 1e-3, "{t} vs {o}");
        }
    }

    #[test]
    fn adam_rejects_bad_inputs() {
        let mut p = DenoiserParams::init(Arch::desk(2), 1);
        let n = p.param_len();
        let mut g = vec![0.0; n];
        g[5] = f64::NAN;
        assert!(matches!(
            p.adam_update(&DenseVector::from_vec(g), 1e-3),
            Err(DenoiserError::NonFiniteGradient { index: 5 })
        ));
        assert!(p.adam_update(&DenseVector::zeros(n), 0.0).is_err());
        assert!(p.adam_update(&DenseVector::zeros(3), 1e-3).is_err());
    }
}
