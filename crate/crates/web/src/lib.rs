//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Flat `Vec<f64>` results cross into JS as `Float64Array`s; row layouts are
//! noted on each export.

use wasm_bindgen::prelude::*;

use unprompt_core::data::{Dataset, GaussianMixture};
use unprompt_core::denoiser::{Activation, Arch, DenoiserParams, Preconditioner};
use unprompt_core::diffusion::{train_step, NoiseSchedule, Sampler};
use unprompt_core::harness::ridge_demo;
use unprompt_core::rng::{Purpose, StreamRng};
use unprompt_core::surrogate::{make_surrogate, SurrogateSpec, SurrogateStrategy};
use unprompt_core::unlearn::{timestep_weight, unlearn_run, NoObserver, SurgeryMode, UnlearnTask, Weighting};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Ridge label sweep on the demo instance: rows of
/// `[y_new, exact_shift, surrogate_shift, surrogate/exact]`.
#[wasm_bindgen]
pub fn ridge_sweep(points: usize) -> Result<Vec<f64>, JsError> {
    let demo = ridge_demo(points.max(2)).map_err(js_err)?;
    Ok(demo.rows.iter().flat_map(|r| [r.y_new, r.exact_shift, r.surrogate_shift, r.surrogate_shift / r.exact_shift]).collect())
}

/// `λ(t)` for `t = 1..=steps`.
#[wasm_bindgen]
pub fn lambda_curve(beta: f64, steps: usize) -> Vec<f64> {
    (1..=steps).map(|t| timestep_weight(t, beta, steps)).collect()
}

const STEPS: usize = 50;
const POINTS: usize = 512;
const BATCH: usize = 64;

/// Ring mixture, a small denoiser, and the unlearning of one mode.
#[wasm_bindgen]
pub struct MixtureDemo {
    spec: GaussianMixture,
    dataset: Dataset,
    schedule: NoiseSchedule,
    sampler: Sampler,
    params: DenoiserParams,
    seed: u64,
    trained: u64,
    batch_rng: StreamRng,
    noise_rng: StreamRng,
}

#[wasm_bindgen]
impl MixtureDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<MixtureDemo, JsError> {
        let seed = u64::from(seed);
        let spec = GaussianMixture::ring(6, 2.0, 0.15);
        let (points, labels) = spec.sample(POINTS, seed);
        let dataset = Dataset::Mixture { spec: spec.clone(), points, labels };
        let schedule = NoiseSchedule::linear(STEPS, 1e-3, 0.3).map_err(js_err)?;
        let arch = Arch::new(vec![2 + 16, 64, 64, 2], Activation::Silu, 16).map_err(js_err)?;
        let pc = Preconditioner::from_samples(dataset.samples(), &schedule).map_err(js_err)?;
        let params = DenoiserParams::init(arch, seed).with_preconditioner(pc).map_err(js_err)?;
        Ok(MixtureDemo {
            spec,
            dataset,
            sampler: Sampler::new(schedule.clone(), None),
            schedule,
            params,
            seed,
            trained: 0,
            batch_rng: StreamRng::substream(seed, Purpose::Data, 1),
            noise_rng: StreamRng::substream(seed, Purpose::Noise, 1),
        })
    }

    /// Training points as `[x, y, mode]` rows.
    pub fn data(&self) -> Vec<f64> {
        match &self.dataset {
            Dataset::Mixture { points, labels, .. } => points.iter().zip(labels).flat_map(|(p, &l)| [p[0], p[1], l as f64]).collect(),
            Dataset::Glyphs(_) => Vec::new(),
        }
    }

    pub fn modes(&self) -> usize {
        self.spec.centers.len()
    }

    pub fn trained_steps(&self) -> f64 {
        self.trained as f64
    }

    /// Runs `steps` Adam steps; returns the mean loss.
    pub fn train(&mut self, steps: usize, lr: f64) -> Result<f64, JsError> {
        let samples = self.dataset.samples();
        let mut total = 0.0;
        for _ in 0..steps {
            let batch: Vec<&[f64]> = (0..BATCH).map(|_| samples[self.batch_rng.below(samples.len())].as_slice()).collect();
            let (loss, grad) = train_step(&self.params, &batch, &self.schedule, &mut self.noise_rng).map_err(js_err)?;
            self.params.adam_update(&grad, lr).map_err(js_err)?;
            total += loss;
            self.trained += 1;
        }
        Ok(total / steps.max(1) as f64)
    }

    /// `count` DDIM samples as `[x, y]` rows; the same `count` gives the same
    /// starting noise, so samples before and after unlearning pair up.
    pub fn sample(&self, count: usize) -> Result<Vec<f64>, JsError> {
        let mut rng = StreamRng::new(self.seed, Purpose::Eval);
        let mut out = Vec::with_capacity(2 * count);
        for _ in 0..count {
            out.extend(self.sampler.sample(&self.params, &rng.normal_vec(2)).map_err(js_err)?);
        }
        Ok(out)
    }

    /// Fraction of `[x, y]` rows whose nearest mode is `mode`.
    pub fn mode_fraction(&self, xy: &[f64], mode: usize) -> f64 {
        let n = xy.len() / 2;
        let hits = xy.chunks_exact(2).filter(|p| self.spec.nearest_mode(p) == mode).count();
        hits as f64 / n.max(1) as f64
    }

    /// Unlearns the centre of `mode`, using its shift to the neighbouring mode
    /// as surrogate and every point of the other modes as the remember set.
    pub fn unlearn(&mut self, mode: usize, iters: usize, lr: f64, beta: f64) -> Result<(), JsError> {
        if mode >= self.modes() {
            return Err(JsError::new("mode out of range"));
        }
        let Dataset::Mixture { points, labels, .. } = &self.dataset else { unreachable!() };
        let c = self.spec.centers[mode];
        let target = vec![c[0], c[1]];
        let spec = SurrogateSpec { strategy: SurrogateStrategy::ModeShift, seed: self.seed };
        let surrogate = make_surrogate(&target, &spec, &self.dataset).map_err(js_err)?;
        let remember: Vec<Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l != mode).map(|(p, _)| p.clone()).collect();
        let task = UnlearnTask {
            forget: vec![target],
            surrogates: vec![surrogate],
            remember,
            iters,
            lr,
            weighting: Weighting::TimestepAware { beta },
            surgery: SurgeryMode::ProjectForget,
            schedule: self.schedule.clone(),
            remember_batch: 8,
            seed: self.seed,
            reset_optimizer_between_targets: false,
            snapshot_every: 0,
        };
        self.params = unlearn_run(&self.params, &task, &mut NoObserver).map_err(js_err)?.params;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_rows_are_quadruples() {
        let v = ridge_sweep(21).unwrap();
        assert_eq!(v.len() % 4, 0);
        assert!(v.chunks(4).any(|r| r[3] < 0.5));
    }

    #[test]
    fn lambda_curve_ends_at_half() {
        let c = lambda_curve(5e-4, 100);
        assert_eq!(c.len(), 100);
        assert!((c[99] - 0.5).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unlearning_a_mode_reduces_its_share() {
        let mut demo = MixtureDemo::new(3).unwrap();
        for _ in 0..6 {
            demo.train(250, 3e-3).unwrap();
        }
        let before = demo.sample(300).unwrap();
        let share_before = demo.mode_fraction(&before, 0);
        assert!(share_before > 0.08, "{share_before}");
        demo.unlearn(0, 600, 3e-3, 9e-4).unwrap();
        let after = demo.sample(300).unwrap();
        let share_after = demo.mode_fraction(&after, 0);
        // Mass moves to the surrogate's mode.
        assert!(demo.mode_fraction(&after, 1) > demo.mode_fraction(&before, 1));
        assert!(share_after < 0.5 * share_before, "{share_before} -> {share_after}");
    }
}
