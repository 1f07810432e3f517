use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
base = paper-ddpm-analogue
seed = 5
dataset.glyphs = 12
dataset.marked = 2
dataset.copies = 2
schedule.steps = 10
model.hidden = 16
model.embed_dim = 4
pretrain.steps = 20
pretrain.batch = 4
unlearn.iters = 4
unlearn.snapshot_every = 2
eval.t_mid = 5
eval.probe_seeds = 2
eval.drift_seeds = 3
eval.frechet_samples = 6
eval.experiments = 1
ablate.strengths = 0.5, 1
";

fn unprompt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unprompt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("UNPROMPT_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("tiny.cfg");
    std::fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_dirs(out: &Path, prefix: &str) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(out.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .collect();
    v.sort();
    v
}

#[test]
fn pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");

    let r = unprompt(&["eval", "--config", &cfg], &out);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("pretrain"));

    for cmd in ["pretrain", "unlearn", "eval", "ablate-surrogate"] {
        let r = unprompt(&[cmd, "--config", &cfg], &out);
        assert_eq!(r.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let eval = &run_dirs(&out, "eval-")[0];
    let written = std::fs::read_to_string(eval.join("config.cfg")).unwrap();
    assert!(written.lines().any(|l| l == "seed = 5"), "{written}");
    assert!(eval.join("report.csv").exists() && eval.join("report.txt").exists());
    let ablation = std::fs::read_to_string(run_dirs(&out, "ablate-surrogate-")[0].join("ablation.csv")).unwrap();
    let labels: Vec<&str> = ablation.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["flip", "add_noise sigma=0.196078", "add_noise sigma=0.588235", "tone strength=0.5", "tone strength=1"]);
}

#[test]
fn seed_override_changes_checkpoint_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    assert_eq!(unprompt(&["pretrain", "--config", &cfg], &out).status.code(), Some(0));
    let r = unprompt(&["unlearn", "--config", &cfg, "--seed", "6"], &out);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_key = write_config(dir.path(), "unlearn.bogus = 1\n");
    assert_eq!(unprompt(&["pretrain", "--config", &bad_key], &out).status.code(), Some(2));
    let missing = dir.path().join("absent.cfg");
    assert_eq!(unprompt(&["pretrain", "--config", missing.to_str().unwrap()], &out).status.code(), Some(2));
    let bad_value = write_config(dir.path(), "unlearn.beta = 0.5\n");
    assert_eq!(unprompt(&["pretrain", "--config", &bad_value], &out).status.code(), Some(2));
    assert_eq!(unprompt(&["bogus", "--config", &bad_value], &out).status.code(), Some(2));
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pretrain.lr = 1e300\npretrain.decay = constant\nmodel.precondition = false\n");
    let r = unprompt(&["pretrain", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn ridge_demo_writes_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let r = unprompt(&["ridge-demo", "--config", "paper-ddpm-analogue"], &out);
    assert_eq!(r.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("best y_new"), "{stdout}");
    let sweep = std::fs::read_to_string(run_dirs(&out, "ridge-demo-")[0].join("ridge_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 81);
}
