//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every criterion reports even
//! when an earlier one fails. The process exits non-zero on any FAIL when
//! `ACCEPTANCE_STRICT=1` is set; otherwise failures are reported only.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unprompt_core::config::{ExperimentConfig, ForgetSpec, WeightingKind};
use unprompt_core::denoiser::DenoiserParams;
use unprompt_core::diffusion::{forward_noise, noise_regression, NoiseSchedule, NoisePredictor};
use unprompt_core::harness::{ridge_demo, Baseline, Evaluation, Experiment};
use unprompt_core::metrics::spearman;
use unprompt_core::ridge::{RidgeProblem, RowEdit};
use unprompt_core::unlearn::{modified_noise, NoObserver, RunOutput, SurgeryMode};
use unprompt_core::{DenseMatrix, DenseVector};

const RIDGE_INSTANCES: usize = 500;
const RIDGE_TOL: f64 = 1e-9;
const RIDGE_SECONDS: f64 = 5.0;
const RIDGE_DEMO_RATIO: f64 = 0.5;
const GRAD_COORDS: usize = 200;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const SURGERY_DOT_TOL: f64 = 1e-10;
const SURGERY_NORM_TOL: f64 = 1e-12;
const MOMENT_DRAWS: usize = 200_000;
const MOMENT_SIGMAS: f64 = 4.0;
const MOMENT_VAR_TOL: f64 = 0.05;
const ROUND_TRIP_CASES: usize = 1000;
const ROUND_TRIP_TOL: f64 = 1e-10;
const FORGET_THRESHOLD: f64 = 0.4;
const SSIM_SINGLE: f64 = 0.85;
const SSIM_MULTI: f64 = 0.80;
const FRECHET_FACTOR: f64 = 1.5;
const SINGLE_SECONDS: f64 = 600.0;
const SPEARMAN_MAX: f64 = -0.8;
const MIN_MAGNITUDES: usize = 5;
const REPLAY_TOL: f64 = 1e-10;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: &'static str, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, pass, detail });
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

fn random_problem(rng: &mut ChaCha8Rng) -> RidgeProblem {
    let n = rng.random_range(2..=50);
    let d = rng.random_range(1..=10);
    let penalty = 10f64.powf(rng.random_range(-3.0..=1.0));
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    RidgeProblem::new(DenseMatrix::from_row_major(n, d, x).unwrap(), DenseVector::from_vec(y), penalty).unwrap()
}

/// Ridge fit via nalgebra's LU on `X^T X + penalty I`.
fn nalgebra_fit(rows: &[Vec<f64>], y: &[f64], penalty: f64) -> Vec<f64> {
    let d = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let a = x.transpose() * &x + DMatrix::identity(d, d) * penalty;
    let b = x.transpose() * DVector::from_column_slice(y);
    a.lu().solve(&b).expect("ridge system is nonsingular").as_slice().to_vec()
}

fn rows_of(p: &RidgeProblem) -> (Vec<Vec<f64>>, Vec<f64>) {
    ((0..p.rows()).map(|i| p.x().row(i).to_vec()).collect(), p.y().as_slice().to_vec())
}

fn criterion_1(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst, mut worst_np) = (0.0f64, 0.0f64);
    for _ in 0..RIDGE_INSTANCES {
        let p = random_problem(&mut rng);
        let i = rng.random_range(0..p.rows());
        let theta = p.exact_unlearn(i).unwrap().theta_new;
        let oracle = p.retrain_oracle(&RowEdit::Remove { index: i }).unwrap();
        worst = worst.max(rel(theta.as_slice(), oracle.as_slice()));
        let (mut rows, mut y) = rows_of(&p);
        rows.remove(i);
        y.remove(i);
        worst_np = worst_np.max(rel(theta.as_slice(), &nalgebra_fit(&rows, &y, p.penalty())));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        out,
        "1",
        worst <= RIDGE_TOL && worst_np <= RIDGE_TOL && secs < RIDGE_SECONDS,
        format!("removal: max rel err {worst:.2e} vs refit, {worst_np:.2e} vs LU refit (tol {RIDGE_TOL:e}); {secs:.2}s (< {RIDGE_SECONDS}s)"),
    );
}

fn criterion_2(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let (mut worst, mut worst_np) = (0.0f64, 0.0f64);
    for _ in 0..RIDGE_INSTANCES {
        let p = random_problem(&mut rng);
        let i = rng.random_range(0..p.rows());
        let x_new: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y_new = rng.random_range(-2.0..2.0);
        let edit = RowEdit::Replace { index: i, x_new: DenseVector::from_vec(x_new.clone()), y_new };
        let theta = p.surrogate_unlearn(&edit).unwrap().theta_new;
        let oracle = p.retrain_oracle(&edit).unwrap();
        worst = worst.max(rel(theta.as_slice(), oracle.as_slice()));
        let (mut rows, mut y) = rows_of(&p);
        rows[i] = x_new;
        y[i] = y_new;
        worst_np = worst_np.max(rel(theta.as_slice(), &nalgebra_fit(&rows, &y, p.penalty())));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        out,
        "2",
        worst <= RIDGE_TOL && worst_np <= RIDGE_TOL && secs < RIDGE_SECONDS,
        format!("replacement: max rel err {worst:.2e} vs refit, {worst_np:.2e} vs LU refit (tol {RIDGE_TOL:e}); {secs:.2}s"),
    );
}

fn criterion_3(out: &mut Vec<Outcome>) {
    let demo = ridge_demo(81).unwrap();
    let b = &demo.best;
    // Independent shifts for the chosen label from nalgebra refits.
    let p = unprompt_core::ridge::demo_instance();
    let (rows, y) = rows_of(&p);
    let theta = nalgebra_fit(&rows, &y, p.penalty());
    let (mut r_rm, mut y_rm) = (rows.clone(), y.clone());
    r_rm.remove(demo.index);
    y_rm.remove(demo.index);
    let removed = nalgebra_fit(&r_rm, &y_rm, p.penalty());
    let mut y_rep = y.clone();
    y_rep[demo.index] = b.y_new;
    let replaced = nalgebra_fit(&rows, &y_rep, p.penalty());
    let dist = |a: &[f64]| a.iter().zip(&theta).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let (exact, surrogate) = (dist(&removed), dist(&replaced));
    report(
        out,
        "3",
        surrogate < RIDGE_DEMO_RATIO * exact && b.surrogate_shift < RIDGE_DEMO_RATIO * b.exact_shift,
        format!(
            "y_new {:.4}: |theta_s - theta*| {surrogate:.4e} vs |theta_x - theta*| {exact:.4e} (ratio {:.4} < {RIDGE_DEMO_RATIO})",
            b.y_new,
            surrogate / exact
        ),
    );
}

fn criterion_4(out: &mut Vec<Outcome>, exp: &Experiment) {
    let params = exp.init_params().unwrap();
    let n = params.param_len();
    let d = params.data_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = exp.dataset.samples();
    let ts: Vec<usize> = (0..4).map(|_| rng.random_range(1..=exp.schedule.steps())).collect();
    let mut x_t = Vec::new();
    let mut target = Vec::new();
    for &t in &ts {
        let x0 = &samples[rng.random_range(0..samples.len())];
        let eps: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        x_t.extend(forward_noise(x0, t, &eps, &exp.schedule).unwrap());
        target.extend(eps);
    }
    let loss = |p: &DenoiserParams| noise_regression(p, &x_t, &ts, &target).unwrap().0;
    let (_, grad) = noise_regression(&params, &x_t, &ts, &target).unwrap();
    let mut coords: Vec<usize> = (0..n).collect();
    for k in 0..GRAD_COORDS {
        let j = rng.random_range(k..n);
        coords.swap(k, j);
    }
    coords.truncate(GRAD_COORDS);
    let mut theta = params.theta().as_slice().to_vec();
    let (mut auto, mut fd) = (Vec::new(), Vec::new());
    for &c in &coords {
        let orig = theta[c];
        theta[c] = orig + GRAD_STEP;
        let up = loss(&params.with_theta(&theta));
        theta[c] = orig - GRAD_STEP;
        let down = loss(&params.with_theta(&theta));
        theta[c] = orig;
        auto.push(grad[c]);
        fd.push((up - down) / (2.0 * GRAD_STEP));
    }
    let err = rel(&auto, &fd);
    report(
        out,
        "4",
        n <= 100_000 && err <= GRAD_TOL,
        format!("{n} params, {GRAD_COORDS} coords: rel err {err:.2e} (tol {GRAD_TOL:e})"),
    );
}

fn criterion_5(out: &mut Vec<Outcome>, run: &RunOutput) {
    let (mut conflicted, mut bad) = (0usize, 0usize);
    for r in &run.records {
        let t = &r.trace;
        if t.conflicted {
            conflicted += 1;
            let ok = t.post_dot >= -SURGERY_DOT_TOL * t.norm_r * t.norm_f_prime && t.norm_f_prime <= t.norm_f + SURGERY_NORM_TOL;
            bad += usize::from(!ok);
        } else {
            bad += usize::from(!t.forget_unchanged);
        }
    }
    report(
        out,
        "5",
        bad == 0,
        format!("{} steps, {conflicted} conflicted, {bad} violations", run.records.len()),
    );
}

fn criterion_6(out: &mut Vec<Outcome>) {
    let sched = NoiseSchedule::desk_default();
    let x0 = [0.8, -0.3, 0.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = rand_distr::StandardNormal;
    let mut worst_z = 0.0f64;
    let mut worst_var = 0.0f64;
    for t in [1, sched.steps() / 2, sched.steps()] {
        let ab = sched.alpha_bar(t);
        let (mut sum, mut sq) = (vec![0.0; 4], vec![0.0; 4]);
        for _ in 0..MOMENT_DRAWS {
            let eps: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(normal)).collect();
            let x = forward_noise(&x0, t, &eps, &sched).unwrap();
            for k in 0..4 {
                sum[k] += x[k];
                sq[k] += x[k] * x[k];
            }
        }
        let m = MOMENT_DRAWS as f64;
        for k in 0..4 {
            let mean = sum[k] / m;
            let var = sq[k] / m - mean * mean;
            let want_var = 1.0 - ab;
            worst_z = worst_z.max((mean - ab.sqrt() * x0[k]).abs() / (want_var / m).sqrt());
            worst_var = worst_var.max((var / want_var - 1.0).abs());
        }
    }
    report(
        out,
        "6",
        worst_z <= MOMENT_SIGMAS && worst_var <= MOMENT_VAR_TOL,
        format!("t in {{1, T/2, T}}: max |mean z| {worst_z:.2} (<= {MOMENT_SIGMAS}), max var rel dev {worst_var:.4} (<= {MOMENT_VAR_TOL})"),
    );
}

fn criterion_7(out: &mut Vec<Outcome>) {
    let sched = NoiseSchedule::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..ROUND_TRIP_CASES {
        let d = rng.random_range(1..=64);
        let t = rng.random_range(1..=sched.steps());
        let x_t: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x0_s: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eps = modified_noise(&x_t, &x0_s, t, &sched).unwrap();
        let back = forward_noise(&x0_s, t, &eps, &sched).unwrap();
        worst = worst.max(back.iter().zip(&x_t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    report(out, "7", worst <= ROUND_TRIP_TOL, format!("{ROUND_TRIP_CASES} cases: max |x_t' - x_t| {worst:.2e} (tol {ROUND_TRIP_TOL:e})"));
}

fn single_passes(ev: &Evaluation) -> (bool, bool, bool) {
    let s = &ev.summary;
    (s.forgetting_similarity < FORGET_THRESHOLD, s.ssim >= SSIM_SINGLE, s.frechet_pre <= FRECHET_FACTOR * s.frechet_floor)
}

fn describe(ev: &Evaluation) -> String {
    let s = &ev.summary;
    let per: Vec<String> = ev.per_target.iter().map(|t| format!("{}:{:.3}", t.index, t.similarity)).collect();
    format!(
        "similarity [{}], ssim {:.4}, frechet_pre {:.4} vs floor {:.4} (x{:.2})",
        per.join(" "),
        s.ssim,
        s.frechet_pre,
        s.frechet_floor,
        s.frechet_pre / s.frechet_floor
    )
}

fn metrics_of(ev: &Evaluation) -> Vec<f64> {
    let s = &ev.summary;
    let mut v = vec![s.forgetting_similarity, s.per_seed_l2, s.ssim, s.frechet_pre, s.frechet_floor, s.frechet_real];
    v.extend(ev.per_target.iter().flat_map(|t| t.per_seed.iter().copied()));
    v
}

fn with_targets(cfg: &ExperimentConfig, k: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.unlearn.forget = ForgetSpec::Marked(k);
    c
}

fn main() {
    let mut out = Vec::new();
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_6(&mut out);
    criterion_7(&mut out);

    let cfg = ExperimentConfig::preset("paper-ddpm-analogue").unwrap();
    let exp = Experiment::new(cfg.clone()).unwrap();
    criterion_4(&mut out, &exp);

    let start = Instant::now();
    let pre = exp.pretrain(&mut |_, _| {}).unwrap();
    let pretrain_secs = start.elapsed().as_secs_f64();
    let base = exp.baseline(&pre).unwrap();
    let run = exp.unlearn(&pre, &mut NoObserver).unwrap();
    let single = exp.evaluate(&pre, &run.params, &base, "single").unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (a, b, c) = single_passes(&single);
    report(
        &mut out,
        "8",
        a && b && c && secs < SINGLE_SECONDS,
        format!(
            "(a) {} (b) {} (c) {}: {}; {secs:.0}s incl. {pretrain_secs:.0}s pretraining",
            if a { "ok" } else { "no" },
            if b { "ok" } else { "no" },
            if c { "ok" } else { "no" },
            describe(&single)
        ),
    );
    criterion_5(&mut out, &run);

    let multi_exp = Experiment { cfg: with_targets(&cfg, 4), ..exp.clone() };
    let multi_base = multi_exp.baseline(&pre).unwrap();
    let multi_run = multi_exp.unlearn(&pre, &mut NoObserver).unwrap();
    let multi = multi_exp.evaluate(&pre, &multi_run.params, &multi_base, "multi").unwrap();
    let all_forgotten = multi.per_target.iter().all(|t| t.similarity < FORGET_THRESHOLD);
    report(
        &mut out,
        "9",
        multi.per_target.len() == 4 && all_forgotten && multi.summary.ssim >= SSIM_MULTI,
        format!("4 sequential targets: {} (ssim >= {SSIM_MULTI})", describe(&multi)),
    );

    criterion_10(&mut out, &exp, &pre, &base);
    criterion_11(&mut out, &exp, &pre, &base);
    criterion_12(&mut out, &exp, &pre, &base);

    let start = Instant::now();
    let pre2 = exp.pretrain(&mut |_, _| {}).unwrap();
    let base2 = exp.baseline(&pre2).unwrap();
    let run2 = exp.unlearn(&pre2, &mut NoObserver).unwrap();
    let single2 = exp.evaluate(&pre2, &run2.params, &base2, "single").unwrap();
    let (m1, m2) = (metrics_of(&single), metrics_of(&single2));
    let worst = m1.iter().zip(&m2).map(|(x, y)| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let same_params = pre2.theta() == pre.theta() && run2.params.theta() == run.params.theta();
    report(
        &mut out,
        "13",
        same_params && m1.len() == m2.len() && worst <= REPLAY_TOL,
        format!(
            "replay: checkpoints identical {same_params}, {} metrics max rel dev {worst:.2e} (tol {REPLAY_TOL:e}); {:.0}s",
            m1.len(),
            start.elapsed().as_secs_f64()
        ),
    );

    let failed: Vec<&str> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("{}/{} criteria pass", out.len() - failed.len(), out.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        for o in out.iter().filter(|o| !o.pass) {
            println!("  {}: {}", o.id, o.detail);
        }
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}

fn criterion_10(out: &mut Vec<Outcome>, exp: &Experiment, pre: &DenoiserParams, base: &Baseline) {
    let variants = exp.timestep_variants();
    let rows = exp.sweep(pre, base, &variants).unwrap();
    for (v, r) in variants.iter().zip(&rows) {
        println!("  timestep ablation {:>20}: sim {:.3} ssim {:.4}", v.0, r.summary.forgetting_similarity, r.summary.ssim);
    }
    let constant = variants
        .iter()
        .zip(&rows)
        .find(|(v, _)| v.1.unlearn.weighting == WeightingKind::Constant && v.1.unlearn.lambda == 0.95)
        .map(|(_, r)| &r.summary)
        .expect("constant 0.95 row");
    // The timestep-aware row that forgets and is closest in forgetting to the
    // constant row.
    let matched = variants
        .iter()
        .zip(&rows)
        .filter(|(v, r)| {
            v.1.unlearn.weighting == WeightingKind::Timestep && v.1.unlearn.beta > 0.0 && r.summary.forgetting_similarity < FORGET_THRESHOLD
        })
        .min_by(|(_, a), (_, b)| {
            let da = (a.summary.forgetting_similarity - constant.forgetting_similarity).abs();
            let db = (b.summary.forgetting_similarity - constant.forgetting_similarity).abs();
            da.total_cmp(&db)
        });
    let (pass, detail) = match matched {
        Some((v, r)) => (
            constant.forgetting_similarity < FORGET_THRESHOLD && r.summary.ssim >= constant.ssim,
            format!(
                "{}: sim {:.3} ssim {:.4} vs constant 0.95: sim {:.3} ssim {:.4}",
                v.0, r.summary.forgetting_similarity, r.summary.ssim, constant.forgetting_similarity, constant.ssim
            ),
        ),
        None => (false, "no timestep-aware row forgets".to_string()),
    };
    report(out, "10", pass, detail);
}

fn criterion_11(out: &mut Vec<Outcome>, exp: &Experiment, pre: &DenoiserParams, base: &Baseline) {
    let variants = exp.surgery_variants();
    let rows = exp.sweep(pre, base, &variants).unwrap();
    let find = |mode: SurgeryMode| {
        variants.iter().zip(&rows).find(|(v, _)| v.1.unlearn.surgery == mode).map(|(_, r)| &r.summary).unwrap()
    };
    for (v, r) in variants.iter().zip(&rows) {
        println!("  surgery ablation {:>20}: sim {:.3} frechet_pre {:.4}", v.0, r.summary.forgetting_similarity, r.summary.frechet_pre);
    }
    let (f, both) = (find(SurgeryMode::ProjectForget), find(SurgeryMode::ProjectBoth));
    report(
        out,
        "11",
        f.forgetting_similarity < FORGET_THRESHOLD && both.forgetting_similarity < FORGET_THRESHOLD && f.frechet_pre <= both.frechet_pre,
        format!(
            "project g_f: sim {:.3} frechet {:.4}; project g_f, g_r: sim {:.3} frechet {:.4}",
            f.forgetting_similarity, f.frechet_pre, both.forgetting_similarity, both.frechet_pre
        ),
    );
}

fn criterion_12(out: &mut Vec<Outcome>, exp: &Experiment, pre: &DenoiserParams, base: &Baseline) {
    let variants: Vec<_> = exp
        .surrogate_variants()
        .into_iter()
        .filter(|(_, c)| c.surrogate.strategy == unprompt_core::config::StrategyKind::AttributeEdit)
        .collect();
    let rows = exp.sweep(pre, base, &variants).unwrap();
    let mags: Vec<f64> = variants.iter().map(|(_, c)| c.surrogate.strength).collect();
    let sims: Vec<f64> = rows.iter().map(|r| r.summary.forgetting_similarity).collect();
    let ssims: Vec<f64> = rows.iter().map(|r| r.summary.ssim).collect();
    for ((m, s), q) in mags.iter().zip(&sims).zip(&ssims) {
        println!("  strength {m:.2}: sim {s:.3} ssim {q:.4}");
    }
    let (rs, rq) = (spearman(&mags, &sims), spearman(&mags, &ssims));
    report(
        out,
        "12",
        mags.len() >= MIN_MAGNITUDES && rs <= SPEARMAN_MAX && rq <= SPEARMAN_MAX,
        format!("{} magnitudes: spearman(sim) {rs:.3}, spearman(ssim) {rq:.3} (<= {SPEARMAN_MAX})", mags.len()),
    );
}
