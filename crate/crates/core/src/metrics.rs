//! Network-free evaluation: forget verification, same-seed drift, SSIM and
//! Fréchet distance on raw samples.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::diffusion::{forward_noise, DiffusionError, NoisePredictor, Sampler};
use crate::rng::{Purpose, StreamRng};

/// Similarity below which a target counts as forgotten.
pub const SIMILARITY_THRESHOLD: f64 = 0.4;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;
/// Diagonal loading applied when a side has fewer than `2d` samples.
pub const COVARIANCE_SHRINKAGE: f64 = 1e-6;

const PROBE_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("models differ: {0}")]
    ArchMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("eigendecomposition of a {dim}x{dim} covariance did not converge")]
    CovarianceFailure { dim: usize },
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Cosine similarity of `a - center` and `b - center`. Zero vectors give 0.
pub fn centered_cosine(a: &[f64], b: &[f64], center: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for ((x, y), c) in a.iter().zip(b).zip(center) {
        let (u, v) = (x - c, y - c);
        ab += u * v;
        aa += u * u;
        bb += v * v;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// Maps `[-1, 1]` pixels to `[0, 1]`, clamping.
pub fn to_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0)).collect()
}

/// Global single-window SSIM.
pub fn ssim(a: &[f64], b: &[f64], c1: f64, c2: f64) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, found: 0 });
    }
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        va += (x - mu_a) * (x - mu_a);
        vb += (y - mu_b) * (y - mu_b);
        cov += (x - mu_a) * (y - mu_b);
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    Ok(((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)))
}

fn check_pair<P: NoisePredictor + ?Sized>(pre: &P, post: &P) -> Result<(), MetricError> {
    if pre.data_dim() != post.data_dim() || pre.param_len() != post.param_len() {
        return Err(MetricError::ArchMismatch(format!(
            "{}-dim/{} params vs {}-dim/{} params",
            pre.data_dim(),
            pre.param_len(),
            post.data_dim(),
            post.param_len()
        )));
    }
    Ok(())
}

/// Noise used by the forget probe for `seed`.
pub fn probe_noise(seed: u64, dim: usize) -> Vec<f64> {
    StreamRng::substream(seed, Purpose::Eval, PROBE_STREAM).normal_vec(dim)
}

/// Initial `x_T` for sample seed `seed`.
pub fn sample_noise(seed: u64, dim: usize) -> Vec<f64> {
    StreamRng::substream(seed, Purpose::Eval, SAMPLE_STREAM).normal_vec(dim)
}

/// Runs deterministic DDIM from `from` on every row, in parallel chunks when
/// the `parallel` feature is on. Rows are independent, so the result does not
/// depend on the chunking.
pub fn denoise_rows<P: NoisePredictor + Sync + ?Sized>(
    model: &P,
    rows: &[Vec<f64>],
    from: usize,
    sampler: &Sampler,
) -> Result<Vec<Vec<f64>>, MetricError> {
    const CHUNK: usize = 64;
    let d = model.data_dim();
    let run = |chunk: &[Vec<f64>]| -> Result<Vec<Vec<f64>>, MetricError> {
        let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
        let out = sampler.denoise(model, &flat, from)?;
        Ok(out.chunks(d).map(<[f64]>::to_vec).collect())
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<_> = {
        use rayon::prelude::*;
        rows.par_chunks(CHUNK).map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<_> = rows.chunks(CHUNK).map(run).collect();
    let mut out = Vec::with_capacity(rows.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Full-length samples for the given seeds.
pub fn generate<P: NoisePredictor + Sync + ?Sized>(
    model: &P,
    seeds: &[u64],
    sampler: &Sampler,
) -> Result<Vec<Vec<f64>>, MetricError> {
    let noise: Vec<Vec<f64>> = seeds.iter().map(|&s| sample_noise(s, model.data_dim())).collect();
    denoise_rows(model, &noise, sampler.schedule.steps(), sampler)
}

/// Noises `x0_f` to `t_mid` with each seed's probe noise and denoises with
/// both models. Returns the per-seed centered cosine similarities.
pub fn forgetting_similarities<P: NoisePredictor + Sync + ?Sized>(
    pre: &P,
    post: &P,
    x0_f: &[f64],
    t_mid: usize,
    sampler: &Sampler,
    seeds: &[u64],
    center: &[f64],
) -> Result<Vec<f64>, MetricError> {
    check_pair(pre, post)?;
    let d = pre.data_dim();
    for len in [x0_f.len(), center.len()] {
        if len != d {
            return Err(MetricError::DimensionMismatch { expected: d, found: len });
        }
    }
    let noisy = seeds
        .iter()
        .map(|&s| forward_noise(x0_f, t_mid, &probe_noise(s, d), &sampler.schedule))
        .collect::<Result<Vec<_>, _>>()?;
    let y_pre = denoise_rows(pre, &noisy, t_mid, sampler)?;
    let y_post = denoise_rows(post, &noisy, t_mid, sampler)?;
    Ok(y_pre.iter().zip(&y_post).map(|(a, b)| centered_cosine(a, b, center)).collect())
}

/// [`forgetting_similarities`] for a single seed.
pub fn forgetting_similarity<P: NoisePredictor + Sync + ?Sized>(
    pre: &P,
    post: &P,
    x0_f: &[f64],
    t_mid: usize,
    sampler: &Sampler,
    eps_seed: u64,
    center: &[f64],
) -> Result<f64, MetricError> {
    Ok(forgetting_similarities(pre, post, x0_f, t_mid, sampler, &[eps_seed], center)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drift {
    pub mean_l2: f64,
    pub mean_ssim: f64,
}

/// Same-seed drift between paired output sets: mean `||a - b|| / sqrt(d)` and
/// mean SSIM on unit-range images.
pub fn paired_drift(pre: &[Vec<f64>], post: &[Vec<f64>]) -> Result<Drift, MetricError> {
    if pre.len() != post.len() {
        return Err(MetricError::DimensionMismatch { expected: pre.len(), found: post.len() });
    }
    if pre.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, found: 0 });
    }
    let (mut l2, mut s) = (0.0, 0.0);
    for (a, b) in pre.iter().zip(post) {
        let d = a.len() as f64;
        l2 += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / d.sqrt();
        s += ssim(&to_unit(a), &to_unit(b), SSIM_C1, SSIM_C2)?;
    }
    let n = pre.len() as f64;
    Ok(Drift { mean_l2: l2 / n, mean_ssim: s / n })
}

pub fn per_seed_drift<P: NoisePredictor + Sync + ?Sized>(
    pre: &P,
    post: &P,
    seeds: &[u64],
    sampler: &Sampler,
) -> Result<Drift, MetricError> {
    check_pair(pre, post)?;
    if seeds.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, found: 0 });
    }
    paired_drift(&generate(pre, seeds, sampler)?, &generate(post, seeds, sampler)?)
}

fn moments(samples: &[Vec<f64>], dim: usize, shrink: bool) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    let denom = (n - 1.0).max(1.0);
    for s in samples {
        let c: Vec<f64> = s.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += c[i] * c[j] / denom;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
        if shrink {
            cov[(i, i)] += COVARIANCE_SHRINKAGE;
        }
    }
    (mean, cov)
}

fn symmetric_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricError> {
    let dim = m.nrows();
    SymmetricEigen::try_new(m, 1e-14, 10_000).ok_or(MetricError::CovarianceFailure { dim })
}

/// Squared Fréchet distance between Gaussians fitted to the two sample sets:
/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`. The trace of the
/// square root is taken from the eigenvalues of `S_a^{1/2} S_b S_a^{1/2}`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricError> {
    let dim = a.first().map(Vec::len).unwrap_or(0);
    for (side, found) in [(a, a.len()), (b, b.len())] {
        if found < 2 {
            return Err(MetricError::TooFewSamples { needed: 2, found });
        }
        if let Some(bad) = side.iter().find(|s| s.len() != dim) {
            return Err(MetricError::DimensionMismatch { expected: dim, found: bad.len() });
        }
    }
    let shrink = a.len() < 2 * dim || b.len() < 2 * dim;
    let (mu_a, cov_a) = moments(a, dim, shrink);
    let (mu_b, cov_b) = moments(b, dim, shrink);
    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();

    let eig_a = symmetric_eigen(cov_a.clone())?;
    let roots = eig_a.eigenvalues.map(|l| l.max(0.0).sqrt());
    let sqrt_a = &eig_a.eigenvectors * DMatrix::from_diagonal(&roots) * eig_a.eigenvectors.transpose();
    let mut inner = &sqrt_a * &cov_b * &sqrt_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = symmetric_eigen(inner)?.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();

    let d2 = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(d2.max(0.0))
}

/// One evaluation row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub label: String,
    pub forgetting_similarity: f64,
    pub forgotten: bool,
    pub per_seed_l2: f64,
    pub ssim: f64,
    /// Fréchet distance between pretrained and unlearned samples.
    pub frechet_pre: f64,
    /// Fréchet distance between two independent pretrained sample sets.
    pub frechet_floor: f64,
    /// Fréchet distance between unlearned samples and the training data.
    pub frechet_real: f64,
    pub n_seeds: usize,
    pub config_hash: String,
}

impl MetricReport {
    pub fn is_finite(&self) -> bool {
        [self.forgetting_similarity, self.per_seed_l2, self.ssim, self.frechet_pre, self.frechet_floor, self.frechet_real]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
