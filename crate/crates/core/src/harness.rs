//! Experiment orchestration: pretraining, unlearning, evaluation, ablations
//! and the ridge demo, plus the on-disk layout shared by the CLI.
//!
//! Layout under the output root:
//!
//! ```text
//! checkpoints/pretrain-<hash>.ckpt   keyed by the pretraining sections of the config
//! checkpoints/unlearn-<hash>.ckpt    keyed by everything that shapes the unlearned model
//! runs/<cmd>-<config hash>-<timestamp>/config.cfg, reports, traces, snapshots
//! ```

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use thiserror::Error;

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::config::{ConfigError, DatasetKind, ExperimentConfig, LrDecay, StrategyKind, WeightingKind};
use crate::data::{Dataset, GaussianMixture, GlyphDataset};
use crate::denoiser::{Arch, DenoiserError, DenoiserParams, Preconditioner};
use crate::diffusion::{train_step, DiffusionError, NoiseSchedule, Sampler};
use crate::metrics::{forgetting_similarities, frechet_distance, generate, paired_drift, MetricError, MetricReport};
use crate::report::{export_report, fmt_sig, ReportError, ReportFormat};
use crate::ridge::{demo_instance, label_grid, RidgeError};
use crate::rng::{Purpose, StreamRng};
use crate::surrogate::{make_surrogate, SurrogateError, SurrogateSpec, SurrogateStrategy};
use crate::unlearn::{unlearn_run, NoObserver, RunObserver, RunOutput, StepRecord, SurgeryMode, UnlearnError, UnlearnTask};

/// Seed blocks for evaluation streams; seeds are `(master << 32) | (block << 24) | k`.
const PROBE_BLOCK: u64 = 1;
const DRIFT_BLOCK: u64 = 2;
const FRECHET_BLOCK: u64 = 3;
/// Pretraining draws from sub-stream 1 so it never overlaps unlearning draws.
const PRETRAIN_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing {what} checkpoint {path}; run `unprompt {hint} --config <same config>` first")]
    MissingCheckpoint { what: &'static str, path: PathBuf, hint: &'static str },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("I/O failure on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{0}")]
    Internal(String),
}

impl HarnessError {
    /// 2 config error, 3 missing artifact, 4 numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Surrogate(_) => 2,
            HarnessError::Checkpoint(CheckpointError::ScheduleMismatch { .. }) => 2,
            HarnessError::MissingCheckpoint { .. } | HarnessError::Checkpoint(_) => 3,
            HarnessError::Numerical(_) => 4,
            _ => 1,
        }
    }
}

impl From<UnlearnError> for HarnessError {
    fn from(e: UnlearnError) -> Self {
        match e {
            UnlearnError::InvalidTask(m) => HarnessError::Config(ConfigError::Invalid(m)),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<DiffusionError> for HarnessError {
    fn from(e: DiffusionError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

impl From<DenoiserError> for HarnessError {
    fn from(e: DenoiserError) -> Self {
        match e {
            DenoiserError::InvalidArch(m) => HarnessError::Config(ConfigError::Invalid(m)),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<MetricError> for HarnessError {
    fn from(e: MetricError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

impl From<RidgeError> for HarnessError {
    fn from(e: RidgeError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), reason: e.to_string() }
}

/// Everything derived from a config that the experiment steps share.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub dataset: Dataset,
    pub schedule: NoiseSchedule,
    pub sampler: Sampler,
    pub arch: Arch,
    /// Per-coordinate dataset mean, the centering for forgetting similarity.
    pub center: Vec<f64>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let dataset = match cfg.dataset.kind {
            DatasetKind::Glyphs => {
                Dataset::Glyphs(GlyphDataset::generate(cfg.dataset.glyphs, cfg.dataset.marked, cfg.dataset.copies, cfg.seed))
            }
            DatasetKind::Mixture => {
                let spec = GaussianMixture::ring(cfg.dataset.mixture_modes, cfg.dataset.mixture_radius, cfg.dataset.mixture_std);
                let (points, labels) = spec.sample(cfg.dataset.mixture_points, cfg.seed);
                Dataset::Mixture { spec, points, labels }
            }
        };
        let schedule = NoiseSchedule::linear(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let clip = if cfg.eval.clip { dataset.range() } else { None };
        let sampler = Sampler::new(schedule.clone(), clip);
        let d = dataset.dim();
        let mut layers = vec![d + cfg.model.embed_dim];
        layers.extend(&cfg.model.hidden);
        layers.push(d);
        let arch = Arch::new(layers, cfg.model.activation, cfg.model.embed_dim)?;
        let center = dataset.mean();
        Ok(Self { cfg, dataset, schedule, sampler, arch, center })
    }

    pub fn init_params(&self) -> Result<DenoiserParams, HarnessError> {
        let p = DenoiserParams::init(self.arch.clone(), self.cfg.seed);
        if self.cfg.model.precondition {
            Ok(p.with_preconditioner(Preconditioner::from_samples(self.dataset.samples(), &self.schedule)?)?)
        } else {
            Ok(p)
        }
    }

    /// Minibatch Adam on the denoising objective. `progress` sees every
    /// step's loss.
    pub fn pretrain(&self, progress: &mut dyn FnMut(usize, f64)) -> Result<DenoiserParams, HarnessError> {
        let pc = &self.cfg.pretrain;
        let mut params = self.init_params()?;
        let mut batch_rng = StreamRng::substream(self.cfg.seed, Purpose::Data, PRETRAIN_STREAM);
        let mut noise_rng = StreamRng::substream(self.cfg.seed, Purpose::Noise, PRETRAIN_STREAM);
        let samples = self.dataset.samples();
        for step in 0..pc.steps {
            let batch: Vec<&[f64]> = (0..pc.batch).map(|_| samples[batch_rng.below(samples.len())].as_slice()).collect();
            let (loss, grad) = train_step(&params, &batch, &self.schedule, &mut noise_rng)?;
            if !loss.is_finite() {
                return Err(HarnessError::Numerical(format!("pretraining loss became {loss} at step {step}")));
            }
            let lr = match pc.decay {
                LrDecay::Constant => pc.lr,
                LrDecay::Cosine => pc.lr * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / pc.steps as f64).cos()),
            };
            params.adam_update(&grad, lr.max(f64::MIN_POSITIVE))?;
            progress(step, loss);
        }
        Ok(params)
    }

    /// Every dataset index holding the same sample as one of `targets`; for
    /// the mixture, every point sharing a target's mode.
    pub fn copies_of_targets(&self, targets: &[usize]) -> Vec<usize> {
        match &self.dataset {
            Dataset::Glyphs(_) => {
                let samples = self.dataset.samples();
                (0..samples.len()).filter(|&i| targets.iter().any(|&t| samples[i] == samples[t])).collect()
            }
            Dataset::Mixture { labels, .. } => {
                (0..labels.len()).filter(|&i| targets.iter().any(|&t| labels[i] == labels[t])).collect()
            }
        }
    }

    pub fn surrogate_spec(&self, target_rank: usize) -> SurrogateSpec {
        let s = &self.cfg.surrogate;
        let strategy = match s.strategy {
            StrategyKind::Flip => SurrogateStrategy::Flip,
            StrategyKind::AddNoise => SurrogateStrategy::AddNoise { sigma: s.sigma },
            StrategyKind::ModeShift => SurrogateStrategy::ModeShift,
            StrategyKind::AttributeEdit => SurrogateStrategy::AttributeEdit { attribute: s.attribute, value: s.value, strength: s.strength },
        };
        SurrogateSpec { strategy, seed: self.cfg.seed.wrapping_add(target_rank as u64) }
    }

    /// Forget samples, their surrogates, and the remember set (every sample
    /// that is not a copy of a target).
    pub fn build_task(&self) -> Result<UnlearnTask, HarnessError> {
        let targets = self.cfg.forget_indices();
        let samples = self.dataset.samples();
        let forget: Vec<Vec<f64>> = targets.iter().map(|&i| samples[i].clone()).collect();
        let surrogates = forget
            .iter()
            .enumerate()
            .map(|(k, x)| make_surrogate(x, &self.surrogate_spec(k), &self.dataset))
            .collect::<Result<Vec<_>, _>>()?;
        let excluded = self.copies_of_targets(&targets);
        let remember: Vec<Vec<f64>> =
            (0..samples.len()).filter(|i| !excluded.contains(i)).map(|i| samples[i].clone()).collect();
        let u = &self.cfg.unlearn;
        Ok(UnlearnTask {
            forget,
            surrogates,
            remember,
            iters: u.iters,
            lr: u.lr,
            weighting: self.cfg.weighting(),
            surgery: u.surgery,
            schedule: self.schedule.clone(),
            remember_batch: u.remember_batch,
            seed: self.cfg.seed,
            reset_optimizer_between_targets: u.reset_optimizer,
            snapshot_every: u.snapshot_every,
        })
    }

    pub fn unlearn(&self, pre: &DenoiserParams, observer: &mut dyn RunObserver) -> Result<RunOutput, HarnessError> {
        Ok(unlearn_run(pre, &self.build_task()?, observer)?)
    }

    fn eval_seed(&self, block: u64, k: u64) -> u64 {
        (self.cfg.seed << 32) | (block << 24) | k
    }

    /// Whether a generated sample reproduces one of the forget targets: its
    /// nearest training sample is a target copy (glyphs) or it falls in a
    /// target's mode (mixture).
    fn is_forget_output(&self, x: &[f64], target_copies: &[usize]) -> bool {
        match &self.dataset {
            Dataset::Glyphs(_) => target_copies.contains(&self.dataset.nearest(x)),
            Dataset::Mixture { spec, labels, .. } => target_copies.iter().any(|&t| labels[t] == spec.nearest_mode(x)),
        }
    }

    /// First `count` seeds of `block` whose pretrained sample is not a forget
    /// output, with those samples.
    fn non_forget_seeds(
        &self,
        pre: &DenoiserParams,
        block: u64,
        count: usize,
        target_copies: &[usize],
    ) -> Result<(Vec<u64>, Vec<Vec<f64>>), HarnessError> {
        let (mut seeds, mut outs) = (Vec::with_capacity(count), Vec::with_capacity(count));
        let mut next = 0u64;
        while seeds.len() < count {
            let want = (count - seeds.len()) + (count - seeds.len()) / 8 + 1;
            if next + want as u64 >= 1 << 24 {
                return Err(HarnessError::Numerical("could not find enough non-forget evaluation seeds".into()));
            }
            let chunk: Vec<u64> = (next..next + want as u64).map(|k| self.eval_seed(block, k)).collect();
            next += want as u64;
            for (s, y) in chunk.iter().zip(generate(pre, &chunk, &self.sampler)?) {
                if seeds.len() < count && !self.is_forget_output(&y, target_copies) {
                    seeds.push(*s);
                    outs.push(y);
                }
            }
        }
        Ok((seeds, outs))
    }

    /// Pretrained-model side of the evaluation, shared by every post model.
    pub fn baseline(&self, pre: &DenoiserParams) -> Result<Baseline, HarnessError> {
        let targets = self.cfg.forget_indices();
        let copies = self.copies_of_targets(&targets);
        let e = &self.cfg.eval;
        let probe_seeds: Vec<u64> = (0..e.probe_seeds as u64).map(|k| self.eval_seed(PROBE_BLOCK, k)).collect();
        let (drift_seeds, drift_pre) = self.non_forget_seeds(pre, DRIFT_BLOCK, e.drift_seeds, &copies)?;
        let mut experiments = Vec::with_capacity(e.experiments);
        for x in 0..e.experiments as u64 {
            let (_, pre_a) = self.non_forget_seeds(pre, FRECHET_BLOCK + 2 * x, e.frechet_samples, &copies)?;
            let (seeds_b, pre_b) = self.non_forget_seeds(pre, FRECHET_BLOCK + 2 * x + 1, e.frechet_samples, &copies)?;
            let floor = frechet_distance(&pre_a, &pre_b)?;
            experiments.push(FrechetBlock { pre_a, seeds_b, floor });
        }
        let real: Vec<Vec<f64>> = (0..self.dataset.len()).filter(|i| !copies.contains(i)).map(|i| self.dataset.samples()[i].clone()).collect();
        Ok(Baseline { targets, probe_seeds, drift_seeds, drift_pre, experiments, real })
    }

    /// Forgetting per target and integrity of `post` against `pre`.
    pub fn evaluate(&self, pre: &DenoiserParams, post: &DenoiserParams, base: &Baseline, label: &str) -> Result<Evaluation, HarnessError> {
        let mut per_target = Vec::with_capacity(base.targets.len());
        for &t in &base.targets {
            let x0_f = &self.dataset.samples()[t];
            let sims = forgetting_similarities(pre, post, x0_f, self.cfg.eval.t_mid, &self.sampler, &base.probe_seeds, &self.center)?;
            let mean = sims.iter().sum::<f64>() / sims.len() as f64;
            per_target.push(TargetForgetting { index: t, similarity: mean, per_seed: sims });
        }
        let drift_post = generate(post, &base.drift_seeds, &self.sampler)?;
        let drift = paired_drift(&base.drift_pre, &drift_post)?;
        let (mut fd_pre, mut fd_floor, mut fd_real) = (0.0, 0.0, 0.0);
        for block in &base.experiments {
            let post_b = generate(post, &block.seeds_b, &self.sampler)?;
            fd_pre += frechet_distance(&block.pre_a, &post_b)?;
            fd_floor += block.floor;
            fd_real += frechet_distance(&base.real, &post_b)?;
        }
        let n = base.experiments.len() as f64;
        let worst = per_target.iter().map(|t| t.similarity).fold(f64::NEG_INFINITY, f64::max);
        let summary = MetricReport {
            label: label.to_string(),
            forgetting_similarity: worst,
            forgotten: worst < self.cfg.eval.threshold,
            per_seed_l2: drift.mean_l2,
            ssim: drift.mean_ssim,
            frechet_pre: fd_pre / n,
            frechet_floor: fd_floor / n,
            frechet_real: fd_real / n,
            n_seeds: base.drift_seeds.len(),
            config_hash: self.cfg.hash(),
        };
        if !summary.is_finite() {
            return Err(HarnessError::Numerical(format!("non-finite metric in report `{label}`")));
        }
        Ok(Evaluation { summary, per_target })
    }

    /// Unlearns from `pre` under each variant config and evaluates against a
    /// shared baseline. Variants must share this experiment's dataset,
    /// schedule, model and evaluation settings.
    pub fn sweep(&self, pre: &DenoiserParams, base: &Baseline, variants: &[(String, ExperimentConfig)]) -> Result<Vec<Evaluation>, HarnessError> {
        let run = |(label, cfg): &(String, ExperimentConfig)| -> Result<Evaluation, HarnessError> {
            let exp = Experiment { cfg: cfg.clone(), ..self.clone() };
            cfg.validate()?;
            let out = exp.unlearn(pre, &mut NoObserver)?;
            let mut ev = exp.evaluate(pre, &out.params, base, label)?;
            ev.summary.config_hash = cfg.hash();
            Ok(ev)
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<_> = {
            use rayon::prelude::*;
            variants.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<_> = variants.iter().map(run).collect();
        rows.into_iter().collect()
    }

    /// Constant-λ rows followed by timestep-aware rows.
    pub fn timestep_variants(&self) -> Vec<(String, ExperimentConfig)> {
        let mut out = Vec::new();
        for &lambda in &self.cfg.ablate.constant_lambdas {
            let mut c = self.cfg.clone();
            c.unlearn.weighting = WeightingKind::Constant;
            c.unlearn.lambda = lambda;
            out.push((format!("lambda={}", fmt_sig(lambda)), c));
        }
        for &beta in &self.cfg.ablate.betas {
            let mut c = self.cfg.clone();
            c.unlearn.weighting = WeightingKind::Timestep;
            c.unlearn.beta = beta;
            out.push((format!("lambda=1-{}t", fmt_sig(beta)), c));
        }
        out
    }

    pub fn surgery_variants(&self) -> Vec<(String, ExperimentConfig)> {
        [(SurgeryMode::None, "no projection"), (SurgeryMode::ProjectForget, "project g_f"), (SurgeryMode::ProjectBoth, "project g_f and g_r")]
            .into_iter()
            .map(|(mode, label)| {
                let mut c = self.cfg.clone();
                c.unlearn.surgery = mode;
                (label.to_string(), c)
            })
            .collect()
    }

    /// Baseline strategies, then the edit-strength sweep in increasing order.
    pub fn surrogate_variants(&self) -> Vec<(String, ExperimentConfig)> {
        let mut out = Vec::new();
        let mut flip = self.cfg.clone();
        flip.surrogate.strategy = StrategyKind::Flip;
        out.push(("flip".to_string(), flip));
        for &sigma in &self.cfg.ablate.noise_sigmas {
            let mut c = self.cfg.clone();
            c.surrogate.strategy = StrategyKind::AddNoise;
            c.surrogate.sigma = sigma;
            out.push((format!("add_noise sigma={}", fmt_sig(sigma)), c));
        }
        match self.cfg.dataset.kind {
            DatasetKind::Mixture => {
                let mut c = self.cfg.clone();
                c.surrogate.strategy = StrategyKind::ModeShift;
                out.push(("mode_shift".to_string(), c));
            }
            DatasetKind::Glyphs => {
                let mut strengths = self.cfg.ablate.strengths.clone();
                strengths.sort_by(f64::total_cmp);
                for s in strengths {
                    let mut c = self.cfg.clone();
                    c.surrogate.strategy = StrategyKind::AttributeEdit;
                    c.surrogate.strength = s;
                    out.push((format!("{} strength={}", c.surrogate.attribute.name(), fmt_sig(s)), c));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct FrechetBlock {
    pub pre_a: Vec<Vec<f64>>,
    pub seeds_b: Vec<u64>,
    /// Fréchet distance between the two pretrained sets.
    pub floor: f64,
}

#[derive(Clone, Debug)]
pub struct Baseline {
    pub targets: Vec<usize>,
    pub probe_seeds: Vec<u64>,
    pub drift_seeds: Vec<u64>,
    pub drift_pre: Vec<Vec<f64>>,
    pub experiments: Vec<FrechetBlock>,
    /// Training samples other than target copies.
    pub real: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetForgetting {
    pub index: usize,
    pub similarity: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `forgetting_similarity` is the worst (largest) per-target mean.
    pub summary: MetricReport,
    pub per_target: Vec<TargetForgetting>,
}

impl Evaluation {
    /// The summary row followed by one row per target.
    pub fn rows(&self) -> Vec<MetricReport> {
        let mut rows = vec![self.summary.clone()];
        for t in &self.per_target {
            rows.push(MetricReport {
                label: format!("{} target={}", self.summary.label, t.index),
                forgetting_similarity: t.similarity,
                forgotten: self.summary.forgotten || t.similarity < self.summary.forgetting_similarity,
                ..self.summary.clone()
            });
        }
        rows
    }
}

/// One row of the ridge demo's label sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeDemo {
    pub index: usize,
    pub rows: Vec<crate::ridge::SweepRow>,
    pub best: crate::ridge::SweepRow,
}

/// Sweeps the replacement label for the off-trend point of the demo instance
/// and keeps the configuration whose surrogate shift is smallest relative to
/// the exact-removal shift.
pub fn ridge_demo(points: usize) -> Result<RidgeDemo, HarnessError> {
    let problem = demo_instance();
    let index = problem.rows() - 1;
    let y_i = problem.y()[index];
    let grid = label_grid(y_i, 4.0, points);
    let rows = problem.comparison_sweep(index, &grid)?;
    let best = rows
        .iter()
        .min_by(|a, b| (a.surrogate_shift / a.exact_shift).total_cmp(&(b.surrogate_shift / b.exact_shift)))
        .cloned()
        .ok_or_else(|| HarnessError::Internal("empty ridge sweep".into()))?;
    Ok(RidgeDemo { index, rows, best })
}

/// Output root plus the commands' file conventions.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn pretrain_checkpoint(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.root.join("checkpoints").join(format!("pretrain-{}.ckpt", &cfg.pretrain_hash()[..16]))
    }

    pub fn unlearn_checkpoint(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.root.join("checkpoints").join(format!("unlearn-{}.ckpt", &cfg.unlearn_hash()[..16]))
    }

    /// Creates `runs/<cmd>-<hash>-<timestamp>` and writes the exact config.
    pub fn create_run_dir(&self, cmd: &str, cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let base = format!("{cmd}-{}-{stamp}", &cfg.hash()[..12]);
        let runs = self.root.join("runs");
        std::fs::create_dir_all(&runs).map_err(|e| io_err(&runs, e))?;
        let mut dir = runs.join(&base);
        let mut k = 1;
        while dir.exists() {
            dir = runs.join(format!("{base}-{k}"));
            k += 1;
        }
        std::fs::create_dir(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join("config.cfg");
        std::fs::write(&path, cfg.canonical()).map_err(|e| io_err(&path, e))?;
        Ok(dir)
    }

    fn load(&self, path: &Path, exp: &Experiment, what: &'static str, hint: &'static str) -> Result<DenoiserParams, HarnessError> {
        if !path.exists() {
            return Err(HarnessError::MissingCheckpoint { what, path: path.to_path_buf(), hint });
        }
        let ckpt = load_checkpoint(path, &exp.schedule)?;
        if ckpt.params.arch() != &exp.arch {
            return Err(HarnessError::Config(ConfigError::Invalid(format!(
                "{} holds a {:?} network but the config describes {:?}",
                path.display(),
                ckpt.params.arch().layers(),
                exp.arch.layers()
            ))));
        }
        Ok(ckpt.params)
    }

    pub fn load_pretrained(&self, exp: &Experiment) -> Result<DenoiserParams, HarnessError> {
        self.load(&self.pretrain_checkpoint(&exp.cfg), exp, "pretrained", "pretrain")
    }

    pub fn load_unlearned(&self, exp: &Experiment) -> Result<DenoiserParams, HarnessError> {
        self.load(&self.unlearn_checkpoint(&exp.cfg), exp, "unlearned", "unlearn")
    }
}

/// What a command produced.
#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub run_dir: PathBuf,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Pretrain,
    Unlearn,
    Eval,
    AblateTimestep,
    AblateSurgery,
    AblateSurrogate,
    RidgeDemo,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Pretrain,
        Command::Unlearn,
        Command::Eval,
        Command::AblateTimestep,
        Command::AblateSurgery,
        Command::AblateSurrogate,
        Command::RidgeDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Pretrain => "pretrain",
            Command::Unlearn => "unlearn",
            Command::Eval => "eval",
            Command::AblateTimestep => "ablate-timestep",
            Command::AblateSurgery => "ablate-surgery",
            Command::AblateSurrogate => "ablate-surrogate",
            Command::RidgeDemo => "ridge-demo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

struct TraceWriter {
    file: std::io::BufWriter<std::fs::File>,
    snapshots: PathBuf,
    schedule: NoiseSchedule,
    seed: u64,
    error: Option<HarnessError>,
}

impl RunObserver for TraceWriter {
    fn on_step(&mut self, record: &StepRecord) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.file, "{}", record.to_trace_line()) {
                self.error = Some(io_err(&self.snapshots, e));
            }
        }
    }

    fn on_snapshot(&mut self, target: usize, iteration: usize, params: &DenoiserParams) {
        if self.error.is_none() {
            let path = self.snapshots.join(format!("target{target}-iter{iteration}.ckpt"));
            if let Err(e) = save_checkpoint(params, &self.schedule, self.seed, &path) {
                self.error = Some(e.into());
            }
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_reports(dir: &Path, name: &str, rows: &[MetricReport]) -> Result<(), HarnessError> {
    export_report(rows, ReportFormat::Csv, &dir.join(format!("{name}.csv")))?;
    export_report(rows, ReportFormat::KvText, &dir.join(format!("{name}.txt")))?;
    Ok(())
}

fn summary_line(r: &MetricReport) -> String {
    format!(
        "{}: similarity {} forgotten {} ssim {} l2 {} frechet_pre {} (floor {}) frechet_real {}",
        r.label,
        fmt_sig(r.forgetting_similarity),
        r.forgotten,
        fmt_sig(r.ssim),
        fmt_sig(r.per_seed_l2),
        fmt_sig(r.frechet_pre),
        fmt_sig(r.frechet_floor),
        fmt_sig(r.frechet_real)
    )
}

/// Runs one command end to end, reading and writing under `ws`.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, ws: &Workspace) -> Result<CommandOutput, HarnessError> {
    if cmd == Command::RidgeDemo {
        cfg.validate()?;
        let dir = ws.create_run_dir(cmd.name(), cfg)?;
        let demo = ridge_demo(81)?;
        let mut csv = String::from("y_new,exact_shift,surrogate_shift,ratio\n");
        for r in &demo.rows {
            csv.push_str(&format!("{},{},{},{}\n", fmt_sig(r.y_new), fmt_sig(r.exact_shift), fmt_sig(r.surrogate_shift), fmt_sig(r.ratio)));
        }
        write_text(&dir.join("ridge_sweep.csv"), &csv)?;
        let b = &demo.best;
        let summary = vec![format!(
            "row {}: best y_new {} gives surrogate shift {} vs exact shift {} (ratio {})",
            demo.index,
            fmt_sig(b.y_new),
            fmt_sig(b.surrogate_shift),
            fmt_sig(b.exact_shift),
            fmt_sig(b.surrogate_shift / b.exact_shift)
        )];
        write_text(&dir.join("summary.txt"), &(summary.join("\n") + "\n"))?;
        return Ok(CommandOutput { run_dir: dir, summary });
    }
    let exp = Experiment::new(cfg.clone())?;
    // Checkpoints load before the run directory exists so a missing artifact
    // leaves no partial run behind.
    let pre = match cmd {
        Command::Pretrain => None,
        _ => Some(ws.load_pretrained(&exp)?),
    };
    let post = match cmd {
        Command::Eval => Some(ws.load_unlearned(&exp)?),
        _ => None,
    };
    let dir = ws.create_run_dir(cmd.name(), cfg)?;
    let summary = match cmd {
        Command::Pretrain => {
            let mut log = String::from("step,loss\n");
            let every = (cfg.pretrain.steps / 200).max(1);
            let params = exp.pretrain(&mut |step, loss| {
                if step % every == 0 || step + 1 == cfg.pretrain.steps {
                    log.push_str(&format!("{step},{}\n", fmt_sig(loss)));
                }
            })?;
            write_text(&dir.join("pretrain_loss.csv"), &log)?;
            let path = ws.pretrain_checkpoint(cfg);
            save_checkpoint(&params, &exp.schedule, cfg.seed, &path)?;
            save_checkpoint(&params, &exp.schedule, cfg.seed, &dir.join("pretrain.ckpt"))?;
            info!("pretrained checkpoint written to {}", path.display());
            vec![format!("checkpoint {}", path.display()), format!("sha256 {}", crate::checkpoint::file_hash(&path)?)]
        }
        Command::Unlearn => {
            let pre = pre.expect("loaded above");
            let snapshots = dir.join("snapshots");
            std::fs::create_dir_all(&snapshots).map_err(|e| io_err(&snapshots, e))?;
            let trace_path = dir.join("trace.log");
            let file = std::fs::File::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;
            let mut tw = TraceWriter { file: std::io::BufWriter::new(file), snapshots, schedule: exp.schedule.clone(), seed: cfg.seed, error: None };
            let out = exp.unlearn(&pre, &mut tw)?;
            tw.file.flush().map_err(|e| io_err(&trace_path, e))?;
            if let Some(e) = tw.error {
                return Err(e);
            }
            let path = ws.unlearn_checkpoint(cfg);
            save_checkpoint(&out.params, &exp.schedule, cfg.seed, &path)?;
            save_checkpoint(&out.params, &exp.schedule, cfg.seed, &dir.join("unlearn.ckpt"))?;
            let conflicted = out.records.iter().filter(|r| r.trace.conflicted).count();
            vec![
                format!("checkpoint {}", path.display()),
                format!("{} steps over {} target(s), {conflicted} conflicted", out.records.len(), cfg.forget_indices().len()),
            ]
        }
        Command::Eval => {
            let (pre, post) = (pre.expect("loaded above"), post.expect("loaded above"));
            let base = exp.baseline(&pre)?;
            let ev = exp.evaluate(&pre, &post, &base, "eval")?;
            let rows = ev.rows();
            write_reports(&dir, "report", &rows)?;
            rows.iter().map(summary_line).collect()
        }
        Command::AblateTimestep | Command::AblateSurgery | Command::AblateSurrogate => {
            let pre = pre.expect("loaded above");
            let base = exp.baseline(&pre)?;
            let variants = match cmd {
                Command::AblateTimestep => exp.timestep_variants(),
                Command::AblateSurgery => exp.surgery_variants(),
                _ => exp.surrogate_variants(),
            };
            let rows: Vec<MetricReport> = exp.sweep(&pre, &base, &variants)?.into_iter().map(|e| e.summary).collect();
            write_reports(&dir, "ablation", &rows)?;
            rows.iter().map(summary_line).collect()
        }
        Command::RidgeDemo => unreachable!("handled above"),
    };
    write_text(&dir.join("summary.txt"), &(summary.join("\n") + "\n"))?;
    Ok(CommandOutput { run_dir: dir, summary })
}
