//! Surrogate-guided instance unlearning.
//!
//! Each iteration draws one remember batch, one timestep and one noise tensor
//! that is shared by the remember and forget branches. The remember loss is
//! the ordinary denoising objective; the forget loss regresses the target's
//! noisy state onto the modified noise
//!
//! ```text
//! eps' = (x_t^f - sqrt(ab_t) x0^s) / sqrt(1 - ab_t)
//! ```
//!
//! so that denoising `x_t^f` reconstructs the surrogate `x0^s`. Gradients are
//! weighted by `lambda(t)` and `1 - lambda(t)`, and the forget gradient loses
//! its component along the remember gradient whenever the two conflict.

use log::warn;
use thiserror::Error;

use crate::denoiser::{DenoiserError, DenoiserParams};
use crate::diffusion::{forward_noise, noise_regression, recover_noise, DiffusionError, NoiseSchedule};
use crate::rng::{Purpose, StreamRng};
use crate::tensor::DenseVector;

/// Timestep scale the weighting slope is expressed in.
pub const T_REF: usize = 1000;
/// Below this remember-gradient norm no projection is attempted.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum UnlearnError {
    #[error("invalid unlearning task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error("non-finite loss at target {target}, iteration {iteration}")]
    NonFiniteLoss { target: usize, iteration: usize, snapshot: Box<DenoiserParams> },
}

/// `eps'(x_t^f, x0^s)`: the noise that would have produced `x_t^f` from the
/// surrogate.
pub fn modified_noise(x_t_f: &[f64], x0_s: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>, DiffusionError> {
    recover_noise(x_t_f, x0_s, t, sched)
}

/// `lambda(t) = 1 - beta * t * T_REF / steps`, clamped to `[0, 1]`.
pub fn timestep_weight(t: usize, beta: f64, steps: usize) -> f64 {
    let normalized = t as f64 * T_REF as f64 / steps as f64;
    (1.0 - beta * normalized).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weighting {
    TimestepAware { beta: f64 },
    Constant { lambda: f64 },
}

impl Weighting {
    pub fn lambda(&self, t: usize, steps: usize) -> f64 {
        match *self {
            Weighting::TimestepAware { beta } => timestep_weight(t, beta, steps),
            Weighting::Constant { lambda } => lambda.clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurgeryMode {
    /// Use `g_r + g_f` as is.
    None,
    /// Project the forget gradient off the remember gradient on conflict.
    ProjectForget,
    /// Project each gradient off the other on conflict.
    ProjectBoth,
}

impl SurgeryMode {
    pub fn name(self) -> &'static str {
        match self {
            SurgeryMode::None => "none",
            SurgeryMode::ProjectForget => "project_forget",
            SurgeryMode::ProjectBoth => "project_both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(SurgeryMode::None),
            "project_forget" => Some(SurgeryMode::ProjectForget),
            "project_both" => Some(SurgeryMode::ProjectBoth),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurgeryTrace {
    pub t: usize,
    pub lambda: f64,
    /// `g_r . g_f` before surgery.
    pub dot: f64,
    pub conflicted: bool,
    pub norm_r: f64,
    pub norm_f: f64,
    pub norm_f_prime: f64,
    /// `g_f' . g_r` after surgery.
    pub post_dot: f64,
    /// `g_f'` is bit-identical to `g_f`.
    pub forget_unchanged: bool,
}

/// `g_f - (g_r . g_f / ||g_r||^2) g_r` when `g_r . g_f < 0`, else `g_f`.
pub fn gradient_surgery(g_r: &DenseVector, g_f: &DenseVector) -> (DenseVector, SurgeryTrace) {
    assert_eq!(g_r.len(), g_f.len(), "gradient length mismatch");
    let dot = g_r.dot(g_f);
    let norm_r = g_r.norm();
    let conflicted = dot < 0.0;
    let g_f_prime = if conflicted && norm_r >= DEGENERATE_NORM {
        let mut out = g_f.clone();
        out.axpy(-dot / (norm_r * norm_r), g_r);
        out
    } else {
        if conflicted {
            warn!("remember gradient norm {norm_r:e} too small to project against");
        }
        g_f.clone()
    };
    let trace = SurgeryTrace {
        t: 0,
        lambda: f64::NAN,
        dot,
        conflicted,
        norm_r,
        norm_f: g_f.norm(),
        norm_f_prime: g_f_prime.norm(),
        post_dot: g_f_prime.dot(g_r),
        forget_unchanged: bits_equal(&g_f_prime, g_f),
    };
    (g_f_prime, trace)
}

fn bits_equal(a: &DenseVector, b: &DenseVector) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Combined update direction for the given surgery mode.
pub fn combine_gradients(mode: SurgeryMode, g_r: &DenseVector, g_f: &DenseVector) -> (DenseVector, SurgeryTrace) {
    let (g_f_prime, mut trace) = gradient_surgery(g_r, g_f);
    match mode {
        SurgeryMode::ProjectForget => (g_r.add(&g_f_prime), trace),
        SurgeryMode::None => {
            trace.norm_f_prime = trace.norm_f;
            trace.post_dot = trace.dot;
            trace.forget_unchanged = true;
            (g_r.add(g_f), trace)
        }
        SurgeryMode::ProjectBoth => {
            let (g_r_prime, _) = gradient_surgery(g_f, g_r);
            (g_r_prime.add(&g_f_prime), trace)
        }
    }
}

#[derive(Clone, Debug)]
pub struct UnlearnTask {
    pub forget: Vec<Vec<f64>>,
    pub surrogates: Vec<Vec<f64>>,
    pub remember: Vec<Vec<f64>>,
    pub iters: usize,
    pub lr: f64,
    pub weighting: Weighting,
    pub surgery: SurgeryMode,
    pub schedule: NoiseSchedule,
    pub remember_batch: usize,
    pub seed: u64,
    pub reset_optimizer_between_targets: bool,
    pub snapshot_every: usize,
}

impl UnlearnTask {
    pub fn validate(&self, data_dim: usize) -> Result<(), UnlearnError> {
        let bad = |m: String| Err(UnlearnError::InvalidTask(m));
        if self.forget.len() != self.surrogates.len() {
            return bad(format!("{} forget samples but {} surrogates", self.forget.len(), self.surrogates.len()));
        }
        if self.remember.is_empty() {
            return bad("remember set is empty".into());
        }
        if self.remember_batch == 0 {
            return bad("remember batch must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        for s in self.forget.iter().chain(&self.surrogates).chain(&self.remember) {
            if s.len() != data_dim {
                return bad(format!("sample of length {} for data dimension {data_dim}", s.len()));
            }
        }
        match self.weighting {
            Weighting::TimestepAware { beta } if !(0.0..1.0 / T_REF as f64).contains(&beta) => {
                bad(format!("weighting slope {beta} must satisfy 0 <= beta * {T_REF} < 1"))
            }
            Weighting::Constant { lambda } if !(0.0..=1.0).contains(&lambda) => {
                bad(format!("constant weight {lambda} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Independent random streams consumed by [`unlearn_step`].
#[derive(Clone, Debug)]
pub struct StepRngs {
    pub remember: StreamRng,
    pub timesteps: StreamRng,
    pub noise: StreamRng,
}

impl StepRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            remember: StreamRng::new(seed, Purpose::Remember),
            timesteps: StreamRng::new(seed, Purpose::Timesteps),
            noise: StreamRng::new(seed, Purpose::Noise),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub target: usize,
    pub iteration: usize,
    pub trace: SurgeryTrace,
    pub loss_remember: f64,
    pub loss_forget: f64,
    /// Normal variates drawn for this step; all are shared by both branches.
    pub noise_draws: u64,
    /// Largest deviation from `eps' - eps = sqrt(ab/(1-ab)) (x0^f - x0^s)`.
    pub modified_noise_err: f64,
}

impl StepRecord {
    pub fn to_trace_line(&self) -> String {
        let tr = &self.trace;
        format!(
            "target={} iteration={} t={} lambda={:.6e} dot={:.6e} conflicted={} norm_r={:.6e} norm_f={:.6e} \
             norm_f_prime={:.6e} loss_r={:.6e} loss_f={:.6e}",
            self.target,
            self.iteration,
            tr.t,
            tr.lambda,
            tr.dot,
            tr.conflicted,
            tr.norm_r,
            tr.norm_f,
            tr.norm_f_prime,
            self.loss_remember,
            self.loss_forget
        )
    }
}

/// Intermediate quantities of one iteration, before the optimizer update.
#[derive(Clone, Debug)]
pub struct StepGradients {
    pub t: usize,
    pub lambda: f64,
    pub remember_idx: Vec<usize>,
    pub eps: Vec<f64>,
    pub loss_remember: f64,
    pub loss_forget: f64,
    pub grad_remember: DenseVector,
    pub grad_forget: DenseVector,
    pub noise_draws: u64,
    pub modified_noise_err: f64,
}

/// Draws the batch, timestep and shared noise and evaluates both losses.
pub fn step_gradients(
    params: &DenoiserParams,
    task: &UnlearnTask,
    x0_f: &[f64],
    x0_s: &[f64],
    rngs: &mut StepRngs,
) -> Result<StepGradients, UnlearnError> {
    use crate::diffusion::NoisePredictor;
    let d = params.data_dim();
    let b = task.remember_batch;
    let sched = &task.schedule;
    let remember_idx: Vec<usize> = (0..b).map(|_| rngs.remember.below(task.remember.len())).collect();
    let t = rngs.timesteps.timestep(sched.steps());
    let draws_before = rngs.noise.normal_draws();
    let eps = rngs.noise.normal_vec(b * d);
    let noise_draws = rngs.noise.normal_draws() - draws_before;

    let mut x_t_r = Vec::with_capacity(b * d);
    let mut x_t_f = Vec::with_capacity(b * d);
    let mut eps_prime = Vec::with_capacity(b * d);
    let mut modified_noise_err: f64 = 0.0;
    let ab = sched.alpha_bar(t);
    let gap = (ab / (1.0 - ab)).sqrt();
    for (k, &ri) in remember_idx.iter().enumerate() {
        let e = &eps[k * d..(k + 1) * d];
        x_t_r.extend(forward_noise(&task.remember[ri], t, e, sched)?);
        let xf = forward_noise(x0_f, t, e, sched)?;
        let ep = modified_noise(&xf, x0_s, t, sched)?;
        for j in 0..d {
            let expected = gap * (x0_f[j] - x0_s[j]);
            modified_noise_err = modified_noise_err.max(((ep[j] - e[j]) - expected).abs());
        }
        x_t_f.extend(xf);
        eps_prime.extend(ep);
    }
    let ts = vec![t; b];
    let (loss_remember, grad_remember) = noise_regression(params, &x_t_r, &ts, &eps)?;
    let (loss_forget, grad_forget) = noise_regression(params, &x_t_f, &ts, &eps_prime)?;
    Ok(StepGradients {
        t,
        lambda: task.weighting.lambda(t, sched.steps()),
        remember_idx,
        eps,
        loss_remember,
        loss_forget,
        grad_remember,
        grad_forget,
        noise_draws,
        modified_noise_err,
    })
}

/// One unlearning iteration: losses, weighting, surgery and an Adam update.
pub fn unlearn_step(
    params: &mut DenoiserParams,
    task: &UnlearnTask,
    x0_f: &[f64],
    x0_s: &[f64],
    rngs: &mut StepRngs,
) -> Result<(SurgeryTrace, (f64, f64), u64, f64), UnlearnError> {
    let sg = step_gradients(params, task, x0_f, x0_s, rngs)?;
    let g_r = sg.grad_remember.scaled(sg.lambda);
    let g_f = sg.grad_forget.scaled(1.0 - sg.lambda);
    let (g, mut trace) = combine_gradients(task.surgery, &g_r, &g_f);
    trace.t = sg.t;
    trace.lambda = sg.lambda;
    params.adam_update(&g, task.lr)?;
    Ok((trace, (sg.loss_remember, sg.loss_forget), sg.noise_draws, sg.modified_noise_err))
}

/// Receives per-step records and periodic parameter snapshots.
pub trait RunObserver {
    fn on_step(&mut self, _record: &StepRecord) {}
    fn on_snapshot(&mut self, _target: usize, _iteration: usize, _params: &DenoiserParams) {}
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub params: DenoiserParams,
    pub records: Vec<StepRecord>,
}

/// Unlearns every forget sample in order, `task.iters` iterations each.
pub fn unlearn_run(
    params: &DenoiserParams,
    task: &UnlearnTask,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, UnlearnError> {
    use crate::diffusion::NoisePredictor;
    task.validate(params.data_dim())?;
    let mut params = params.clone();
    let mut rngs = StepRngs::new(task.seed);
    let mut records = Vec::with_capacity(task.iters * task.forget.len());
    for (target, (x0_f, x0_s)) in task.forget.iter().zip(&task.surrogates).enumerate() {
        if target > 0 && task.reset_optimizer_between_targets {
            params.reset_optimizer();
        }
        for iteration in 1..=task.iters {
            let before = params.clone();
            let (trace, (loss_remember, loss_forget), noise_draws, modified_noise_err) =
                unlearn_step(&mut params, task, x0_f, x0_s, &mut rngs)?;
            if !loss_remember.is_finite() || !loss_forget.is_finite() {
                return Err(UnlearnError::NonFiniteLoss { target, iteration, snapshot: Box::new(before) });
            }
            let record =
                StepRecord { target, iteration, trace, loss_remember, loss_forget, noise_draws, modified_noise_err };
            observer.on_step(&record);
            records.push(record);
            if task.snapshot_every > 0 && iteration % task.snapshot_every == 0 {
                observer.on_snapshot(target, iteration, &params);
            }
        }
    }
    Ok(RunOutput { params, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::Arch;
    use crate::diffusion::NoisePredictor;

    fn rvec(seed: u64, n: usize) -> DenseVector {
        DenseVector::from_vec(StreamRng::new(seed, Purpose::Eval).normal_vec(n))
    }

    #[test]
    fn modified_noise_equals_noise_for_identical_surrogate() {
        let s = NoiseSchedule::desk_default();
        let x0 = rvec(1, 5).into_vec();
        let eps = rvec(2, 5).into_vec();
        let xt = forward_noise(&x0, 37, &eps, &s).unwrap();
        let ep = modified_noise(&xt, &x0, 37, &s).unwrap();
        for (a, b) in ep.iter().zip(&eps) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn modified_noise_gap_identity() {
        let s = NoiseSchedule::desk_default();
        for t in [1, 20, 50, 99] {
            let x0_f = rvec(3 + t as u64, 6).into_vec();
            let x0_s = rvec(100 + t as u64, 6).into_vec();
            let eps = rvec(200 + t as u64, 6).into_vec();
            let xt = forward_noise(&x0_f, t, &eps, &s).unwrap();
            let ep = modified_noise(&xt, &x0_s, t, &s).unwrap();
            let ab = s.alpha_bar(t);
            for j in 0..6 {
                let expected = ab.sqrt() / (1.0 - ab).sqrt() * (x0_f[j] - x0_s[j]);
                assert!(((ep[j] - eps[j]) - expected).abs() < 1e-12 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn modified_noise_round_trip() {
        let s = NoiseSchedule::desk_default();
        let x0_f = rvec(7, 8).into_vec();
        let x0_s = rvec(8, 8).into_vec();
        let xt = forward_noise(&x0_f, 50, &rvec(9, 8).into_vec(), &s).unwrap();
        let ep = modified_noise(&xt, &x0_s, 50, &s).unwrap();
        let back = forward_noise(&x0_s, 50, &ep, &s).unwrap();
        for (a, b) in back.iter().zip(&xt) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(modified_noise(&xt, &x0_s, 0, &s).is_err());
        assert!(modified_noise(&xt, &x0_s[..3], 10, &s).is_err());
    }

    #[test]
    fn timestep_weight_values() {
        assert!((timestep_weight(100, 5e-5, 100) - 0.95).abs() < 1e-12);
        assert!((timestep_weight(100, 2e-4, 100) - 0.8).abs() < 1e-12);
        assert_eq!(timestep_weight(1000, 5e-5, 1000), timestep_weight(100, 5e-5, 100));
        for t in 1..=100 {
            assert_eq!(timestep_weight(t, 0.0, 100), 1.0);
        }
        assert_eq!(timestep_weight(100, 0.5, 100), 0.0);
        let mut prev = 1.0;
        for t in 1..=100 {
            let l = timestep_weight(t, 2e-4, 100);
            assert!((0.0..=1.0).contains(&l) && l <= prev);
            prev = l;
        }
    }

    #[test]
    fn surgery_annihilates_antiparallel() {
        let g_r = rvec(1, 10);
        let g_f = g_r.scaled(-2.5);
        let (gp, tr) = gradient_surgery(&g_r, &g_f);
        assert!(tr.conflicted);
        assert!(gp.norm() < 1e-12 * g_f.norm());
    }

    #[test]
    fn surgery_leaves_aligned_gradient() {
        let g_r = rvec(1, 10);
        let mut g_f = rvec(2, 10);
        if g_r.dot(&g_f) < 0.0 {
            g_f = g_f.scaled(-1.0);
        }
        let (gp, tr) = gradient_surgery(&g_r, &g_f);
        assert!(!tr.conflicted && tr.forget_unchanged);
        assert_eq!(gp, g_f);
        let (gp, tr) = gradient_surgery(&DenseVector::zeros(10), &g_f);
        assert!(!tr.conflicted);
        assert_eq!(gp, g_f);
    }

    #[test]
    fn surgery_matches_projection_oracle() {
        let g_r = rvec(11, 1000);
        let mut g_f = rvec(12, 1000);
        if g_r.dot(&g_f) > 0.0 {
            g_f = g_f.scaled(-1.0);
        }
        let (gp, tr) = gradient_surgery(&g_r, &g_f);
        assert!(tr.conflicted);
        assert!(gp.dot(&g_r).abs() <= 1e-10 * g_r.norm() * g_f.norm());
        assert!(tr.norm_f_prime <= tr.norm_f + 1e-12);
        // Oracle: subtract the component along the unit vector of g_r.
        let unit: Vec<f64> = g_r.iter().map(|v| v / g_r.norm()).collect();
        let along: f64 = g_f.iter().zip(&unit).map(|(a, b)| a * b).sum();
        for i in 0..1000 {
            assert!((gp[i] - (g_f[i] - along * unit[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_modes() {
        let g_r = DenseVector::from_vec(vec![1.0, 0.0]);
        let g_f = DenseVector::from_vec(vec![-1.0, 1.0]);
        assert_eq!(combine_gradients(SurgeryMode::None, &g_r, &g_f).0.as_slice(), &[0.0, 1.0]);
        assert_eq!(combine_gradients(SurgeryMode::ProjectForget, &g_r, &g_f).0.as_slice(), &[1.0, 1.0]);
        // g_r' = g_r - (-1/2) g_f = (0.5, 0.5)
        let both = combine_gradients(SurgeryMode::ProjectBoth, &g_r, &g_f).0;
        assert!((both[0] - 0.5).abs() < 1e-15 && (both[1] - 1.5).abs() < 1e-15);
    }

    fn small_task(weighting: Weighting, x0_f: &[f64], x0_s: &[f64], remember: Vec<Vec<f64>>) -> UnlearnTask {
        UnlearnTask {
            forget: vec![x0_f.to_vec()],
            surrogates: vec![x0_s.to_vec()],
            remember,
            iters: 3,
            lr: 1e-3,
            weighting,
            surgery: SurgeryMode::ProjectForget,
            schedule: NoiseSchedule::desk_default(),
            remember_batch: 4,
            seed: 5,
            reset_optimizer_between_targets: false,
            snapshot_every: 40,
        }
    }

    fn small_params() -> DenoiserParams {
        DenoiserParams::init(Arch::new(vec![3 + 8, 16, 3], crate::denoiser::Activation::Silu, 8).unwrap(), 2)
    }

    #[test]
    fn step_matches_hand_composed_pipeline() {
        let params = small_params();
        let x0_f = vec![0.5, -0.2, 0.1];
        let x0_s = vec![-0.5, 0.3, 0.0];
        let remember = vec![vec![1.0, 1.0, 0.0], vec![-1.0, 0.5, 0.2], vec![0.0, -0.7, 0.9]];
        let task = small_task(Weighting::TimestepAware { beta: 5e-4 }, &x0_f, &x0_s, remember);

        let mut stepped = params.clone();
        let mut rngs = StepRngs::new(task.seed);
        let (trace, _, draws, _) = unlearn_step(&mut stepped, &task, &x0_f, &x0_s, &mut rngs).unwrap();
        assert_eq!(draws, 4 * 3);

        // Replay the same draws by hand.
        let mut r = StepRngs::new(task.seed);
        let idx: Vec<usize> = (0..4).map(|_| r.remember.below(3)).collect();
        let t = r.timesteps.timestep(100);
        assert_eq!(t, trace.t);
        let eps = r.noise.normal_vec(12);
        let (mut xr, mut xf, mut ep) = (vec![], vec![], vec![]);
        for (k, &i) in idx.iter().enumerate() {
            let e = &eps[k * 3..(k + 1) * 3];
            xr.extend(forward_noise(&task.remember[i], t, e, &task.schedule).unwrap());
            let f = forward_noise(&x0_f, t, e, &task.schedule).unwrap();
            ep.extend(modified_noise(&f, &x0_s, t, &task.schedule).unwrap());
            xf.extend(f);
        }
        let (_, gr) = noise_regression(&params, &xr, &[t; 4], &eps).unwrap();
        let (_, gf) = noise_regression(&params, &xf, &[t; 4], &ep).unwrap();
        let lambda = timestep_weight(t, 5e-4, 100);
        let (gfp, _) = gradient_surgery(&gr.scaled(lambda), &gf.scaled(1.0 - lambda));
        let g = gr.scaled(lambda).add(&gfp);
        let mut manual = params.clone();
        manual.adam_update(&g, task.lr).unwrap();
        assert_eq!(manual.theta(), stepped.theta());
    }

    #[test]
    fn zero_slope_is_pure_remember_training() {
        let params = small_params();
        let x0_f = vec![0.5, -0.2, 0.1];
        let x0_s = vec![-0.5, 0.3, 0.0];
        let remember = vec![vec![1.0, 1.0, 0.0], vec![-1.0, 0.5, 0.2]];
        let task = small_task(Weighting::TimestepAware { beta: 0.0 }, &x0_f, &x0_s, remember);
        let mut stepped = params.clone();
        let mut rngs = StepRngs::new(task.seed);
        unlearn_step(&mut stepped, &task, &x0_f, &x0_s, &mut rngs).unwrap();

        let sg = step_gradients(&params, &task, &x0_f, &x0_s, &mut StepRngs::new(task.seed)).unwrap();
        assert_eq!(sg.lambda, 1.0);
        let mut manual = params.clone();
        manual.adam_update(&sg.grad_remember, task.lr).unwrap();
        assert_eq!(manual.theta(), stepped.theta());
    }

    #[test]
    fn identical_surrogate_collapses_to_training() {
        // With x0_s = x0_f and D_r = {x0_f} both branches see the same inputs
        // and targets, so lambda g + (1 - lambda) g = g up to rounding.
        let params = small_params();
        let x0 = vec![0.3, 0.1, -0.4];
        let task = small_task(Weighting::TimestepAware { beta: 5e-4 }, &x0, &x0, vec![x0.clone()]);
        let sg = step_gradients(&params, &task, &x0, &x0, &mut StepRngs::new(task.seed)).unwrap();
        assert!((sg.loss_remember - sg.loss_forget).abs() < 1e-12 * (1.0 + sg.loss_remember));
        let g_r = sg.grad_remember.scaled(sg.lambda);
        let g_f = sg.grad_forget.scaled(1.0 - sg.lambda);
        let (g, trace) = combine_gradients(SurgeryMode::ProjectForget, &g_r, &g_f);
        assert!(!trace.conflicted);
        let diff = g.sub(&sg.grad_remember).norm();
        assert!(diff <= 1e-12 * (1.0 + sg.grad_remember.norm()), "diff {diff}");
    }

    #[test]
    fn zero_iterations_leave_params_unchanged() {
        let params = small_params();
        let x0_f = vec![0.5, -0.2, 0.1];
        let mut task = small_task(Weighting::TimestepAware { beta: 5e-5 }, &x0_f, &[0.0; 3], vec![vec![0.0; 3]]);
        task.iters = 0;
        let out = unlearn_run(&params, &task, &mut NoObserver).unwrap();
        assert_eq!(out.params, params);
        assert!(out.records.is_empty());
    }

    #[test]
    fn run_emits_traces_and_snapshots() {
        struct Count(usize, usize);
        impl RunObserver for Count {
            fn on_step(&mut self, _r: &StepRecord) {
                self.0 += 1;
            }
            fn on_snapshot(&mut self, _t: usize, _i: usize, _p: &DenoiserParams) {
                self.1 += 1;
            }
        }
        let params = small_params();
        let mut task = small_task(
            Weighting::TimestepAware { beta: 5e-4 },
            &[0.5, -0.2, 0.1],
            &[0.0, 0.0, 0.0],
            vec![vec![1.0, 0.0, 0.0]],
        );
        task.forget.push(vec![0.1, 0.1, 0.1]);
        task.surrogates.push(vec![0.2, 0.2, 0.2]);
        task.iters = 80;
        let mut obs = Count(0, 0);
        let out = unlearn_run(&params, &task, &mut obs).unwrap();
        assert_eq!(out.records.len(), 160);
        assert_eq!((obs.0, obs.1), (160, 4));
        for r in &out.records {
            assert_eq!(r.noise_draws, 12);
            assert!(r.modified_noise_err < 1e-10);
            assert!(r.trace.post_dot >= -1e-10 * r.trace.norm_r * r.trace.norm_f_prime);
            assert!(r.trace.norm_f_prime <= r.trace.norm_f + 1e-12);
            assert!(r.trace.conflicted || r.trace.forget_unchanged);
            assert!(r.to_trace_line().starts_with(&format!("target={} iteration={}", r.target, r.iteration)));
        }
        assert_eq!(out.params.state().step, 160);
    }

    #[test]
    fn invalid_tasks_rejected() {
        let params = small_params();
        let base = small_task(Weighting::TimestepAware { beta: 5e-5 }, &[0.0; 3], &[0.0; 3], vec![vec![0.0; 3]]);
        let mut t = base.clone();
        t.surrogates.clear();
        assert!(matches!(unlearn_run(&params, &t, &mut NoObserver), Err(UnlearnError::InvalidTask(_))));
        let mut t = base.clone();
        t.remember.clear();
        assert!(t.validate(3).is_err());
        let mut t = base.clone();
        t.weighting = Weighting::TimestepAware { beta: 1e-3 };
        assert!(t.validate(3).is_err());
        let mut t = base;
        t.forget[0] = vec![0.0; 2];
        assert!(t.validate(params.data_dim()).is_err());
    }
}
