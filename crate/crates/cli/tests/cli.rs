use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn smtgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smtgp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn toy(dir: &TempDir, which: &str, seed: &str) -> (PathBuf, PathBuf) {
    let train = dir.path().join(format!("train{which}_{seed}.csv"));
    let test = dir.path().join(format!("test{which}_{seed}.csv"));
    let o = smtgp(&["gen-toy", "--which", which, "--seed", seed, "--train-out", s(&train), "--test-out", s(&test)]);
    assert!(o.status.success(), "{}", stderr(&o));
    (train, test)
}

fn summary_value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn gen_toy_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a_train, a_test) = toy(&dir, "1", "7");
    let again = dir.path().join("again.csv");
    let again_test = dir.path().join("again_test.csv");
    smtgp(&["gen-toy", "--which", "1", "--seed", "7", "--train-out", s(&again), "--test-out", s(&again_test)]);
    assert_eq!(std::fs::read(&a_train).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(std::fs::read(&a_test).unwrap(), std::fs::read(&again_test).unwrap());

    let (train, test) = toy(&dir, "2", "1");
    assert_eq!(std::fs::read_to_string(train).unwrap().lines().count(), 251);
    assert_eq!(std::fs::read_to_string(test).unwrap().lines().count(), 501);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = smtgp(&["gen-toy", "--which", "3", "--train-out", "a", "--test-out", "b"]);
    assert_eq!(o.status.code(), Some(2));
    let (train, test) = toy(&dir, "1", "0");
    let out = dir.path().join("p.csv");
    let o = smtgp(&[
        "predict", "--train", s(&train), "--dx", "1", "--test", s(&test), "--method", "nope", "--preset", "toy1",
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = smtgp(&["crossval", "--train", s(&train), "--dx", "1", "--folds", "1", "--preset", "toy1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = smtgp(&["predict", "--train", s(&train), "--dx", "1", "--test", s(&test), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "no config source");
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = smtgp(&[
        "gen-toy", "--which", "1", "--train-out", s(&dir.path().join("no/such/dir.csv")), "--test-out", "x",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot write"));

    let (train, test) = toy(&dir, "1", "0");
    let cfg = write(&dir, "bad.json", r#"{"alpha": 2.0}"#);
    let out = dir.path().join("p.csv");
    let o = smtgp(&[
        "predict", "--train", s(&train), "--dx", "1", "--test", s(&test), "--preset", "toy1", "--config", s(&cfg),
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
    assert!(!out.exists());

    let ragged = write(&dir, "ragged.csv", "x1,y1\n0.1,0.2\n0.3\n");
    let o = smtgp(&[
        "predict", "--train", s(&ragged), "--dx", "1", "--test", s(&test), "--preset", "toy1", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn predict_writes_columns_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = toy(&dir, "1", "0");
    let out = dir.path().join("sm.csv");
    let o = smtgp(&[
        "predict", "--train", s(&train), "--dx", "1", "--test", s(&test), "--method", "sm", "--preset", "toy1",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,y1,error,phi,iterations");
    assert_eq!(text.lines().count(), 251);
    let mean = summary_value(&stdout(&o), "mean error:");
    let errors: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let direct = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!((mean - direct).abs() <= 1e-5 * direct);

    let out = dir.path().join("gpr.csv");
    let o = smtgp(&[
        "predict", "--train", s(&train), "--dx", "1", "--test", s(&test), "--method", "gpr", "--preset", "toy1",
        "--out", s(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().next().unwrap(), "index,y1,error,iterations");
}

#[test]
fn predict_without_targets_omits_errors() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(&dir, "train.csv", "x1,x2,y1,y2\n0,0,0,1\n1,0,1,1\n0,1,0,2\n1,1,1,2\n0.5,0.5,0.5,1.5\n");
    let test = write(&dir, "test.csv", "x1,x2\n0.2,0.3\n0.7,0.9\n");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"bandwidth2_x": 1, "bandwidth2_y": 1, "lambda_x": 1e-3, "lambda_y": 1e-3,
            "alpha": 0.5, "beta": 0.99, "max_iterations": 50}"#,
    );
    let out = dir.path().join("p.csv");
    let o = smtgp(&[
        "predict", "--train", s(&train), "--dx", "2", "--test", s(&test), "--method", "kl", "--config", s(&cfg),
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,y1,y2,iterations");
    assert_eq!(text.lines().count(), 3);
    assert!(!stdout(&o).contains("mean error"));
}

#[test]
fn crossval_single_cell_is_best() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = toy(&dir, "1", "0");
    let out = dir.path().join("cv.csv");
    let o = smtgp(&[
        "crossval", "--train", s(&train), "--dx", "1", "--folds", "2", "--alpha-grid", "0.9", "--betas", "1.5",
        "--preset", "toy1", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(summary_value(&stdout(&o), "best alpha:"), 0.9);
    assert_eq!(summary_value(&stdout(&o), "best beta:"), 1.5);
}

fn divergence(args: &[&str]) -> Output {
    let mut all = vec!["divergence"];
    all.extend_from_slice(args);
    smtgp(&all)
}

#[test]
fn divergence_forms_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "p.csv", "2,0.3\n0.3,1\n");
    let q = write(&dir, "q.csv", "1.5,-0.2\n-0.2,0.7\n");
    let pm = write(&dir, "pm.csv", "0.1,0.2\n");
    let qm = write(&dir, "qm.csv", "-0.3\n0.4\n");
    let base = ["--dim", "2", "--p-cov", s(&p), "--q-cov", s(&q), "--p-mean", s(&pm), "--q-mean", s(&qm)];
    let value = |extra: &[&str]| -> f64 {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        let o = divergence(&a);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).trim().parse().unwrap()
    };
    let orig = value(&["--alpha", "0.3", "--beta", "1.7", "--form", "original"]);
    let simp = value(&["--alpha", "0.3", "--beta", "1.7", "--form", "simplified"]);
    assert!((orig - simp).abs() <= 1e-9 * orig.abs());
    let ts = value(&["--alpha", "0.4", "--form", "tsallis"]);
    let sm = value(&["--alpha", "0.4", "--beta", "0.4", "--form", "simplified"]);
    assert_eq!(ts, sm);
    assert!(value(&["--form", "kl"]) > 0.0);
    assert!(value(&["--form", "bhatt"]) > 0.0);

    let o = divergence(&["--dim", "2", "--p-cov", s(&p), "--q-cov", s(&p), "--alpha", "0.5", "--beta", "2"]);
    assert!(stdout(&o).trim().parse::<f64>().unwrap().abs() <= 1e-12);

    let o = divergence(&["--dim", "2", "--p-cov", s(&p), "--q-cov", s(&q), "--form", "renyi"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = write(&dir, "bad.csv", "1,2\n2,1\n");
    let o = divergence(&["--dim", "2", "--p-cov", s(&bad), "--q-cov", s(&q), "--form", "kl"]);
    assert_eq!(o.status.code(), Some(1));
    let o = divergence(&["--dim", "3", "--p-cov", s(&p), "--q-cov", s(&q), "--form", "kl"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_prints_the_flop_model() {
    let o = smtgp(&["bench-divergence", "--dim", "32", "--reps", "3"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("flop model ratio: 5/3 (1.66667)"), "{}", stdout(&o));
    let o = smtgp(&["bench-divergence", "--dim", "32", "--reps", "3", "--nonzero-mean"]);
    assert!(stdout(&o).contains("flop model ratio: 3/2 (1.5)"), "{}", stdout(&o));
    assert_eq!(smtgp(&["bench-divergence", "--dim", "4"]).status.code(), Some(2));
}

#[test]
fn eta_curves_with_equal_etas_are_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eta.csv");
    let o = smtgp(&["eta-curves", "--eta1", "0.4", "--eta2", "0.4", "--out", s(&out)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 102);
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((v[1] - 0.4).abs() < 1e-15 && (v[2] - 0.4).abs() < 1e-15);
    }
    assert_eq!(smtgp(&["eta-curves", "--eta1=-1", "--eta2", "1", "--out", s(&out)]).status.code(), Some(1));
}

#[test]
fn certainty_on_toy1_is_negatively_correlated() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = toy(&dir, "1", "0");
    let out = dir.path().join("c.csv");
    let o = smtgp(&[
        "certainty", "--train", s(&train), "--dx", "1", "--test", s(&test), "--preset", "toy1", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(summary_value(&stdout(&o), "spearman rho:") < 0.0);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().next().unwrap(), "ln_phi,error");
    let o = smtgp(&[
        "certainty", "--train", s(&train), "--dx", "1", "--test", s(&test), "--preset", "toy1", "--method", "kl",
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
