use std::path::Path;
use std::process::Command;

use oscnet::cli::{self, RunManifest};

fn run(dir: &Path, config: Option<&str>, args: &[&str]) -> i32 {
    let mut full: Vec<String> = vec!["oscnet".into()];
    full.extend(args.iter().map(|s| s.to_string()));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(&path, text).unwrap();
        full.extend(["--config".into(), path.display().to_string()]);
    }
    full.extend(["--out".into(), dir.join("out").display().to_string(), "--workers".into(), "1".into()]);
    cli::run_from(full)
}

fn rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

const QUICK: &str = "[training]\nepochs = 4\n[curriculum]\nhorizon = 4.0\n[frc]\nn_points = 8\nhorizon = 30.0\n";

#[test]
fn generate_writes_ten_trajectories_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), Some(QUICK), &["generate"]), 0);
    let out = tmp.path().join("out/dataset");
    let csvs: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csvs.len(), 10);
    let first = std::fs::read(out.join("traj_03.csv")).unwrap();
    assert_eq!(run(tmp.path(), Some(QUICK), &["generate"]), 0);
    assert_eq!(std::fs::read(out.join("traj_03.csv")).unwrap(), first);
    assert_eq!(run(tmp.path(), Some(QUICK), &["generate", "--seed", "9"]), 0);
    assert_ne!(std::fs::read(out.join("traj_03.csv")).unwrap(), first);
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let nyquist = "[curriculum]\nband_lo = 9.0\nband_hi = 10.0\ndt = 0.4\n";
    assert_eq!(run(&tmp.path().join("a"), Some(nyquist), &["generate"]), 2);
    assert_eq!(run(&tmp.path().join("b"), Some(QUICK), &["train"]), 2, "missing dataset");
    assert_eq!(run(&tmp.path().join("c"), Some("bogus = 3\n"), &["generate"]), 2);
    assert_eq!(run(&tmp.path().join("d"), Some("[sweep]\ngrid = []\n"), &["sweep", "band_center"]), 2);
    assert_eq!(run(&tmp.path().join("e"), None, &["sweep"]), 2, "no sweep kind");
    assert_eq!(run(&tmp.path().join("f"), None, &["generate", "--preset", "nope"]), 2);
    assert_eq!(cli::run_from(["oscnet", "generate", "--workers", "0", "--out", "/nonexistent/x"]), 2);
    assert_eq!(cli::run_from(["oscnet", "frobnicate"]), 2);
}

#[test]
fn train_frc_stability_forecast_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for cmd in ["generate", "train", "forecast", "frc", "stability"] {
        assert_eq!(run(dir, Some(QUICK), &[cmd]), 0, "{cmd}");
    }
    let out = dir.join("out");
    assert_eq!(rows(&out.join("epochs.csv")), 4);
    assert_eq!(rows(&out.join("root_locus.csv")), 5, "epoch 0 plus one row per epoch");
    assert_eq!(rows(&out.join("frc/frc.csv")) >= 8, true);
    let report = std::fs::read_to_string(out.join("stability/report.toml")).unwrap();
    assert!(report.contains("verdict = \"stable\""), "{report}");

    for cmd in ["generate", "train", "forecast", "frc", "stability"] {
        let text = std::fs::read_to_string(out.join(format!("{cmd}.manifest.toml"))).unwrap();
        let m = RunManifest::from_toml(&text).unwrap();
        let sum: f64 = m.phases.iter().map(|p| p.percent).sum();
        assert!((sum - 100.0).abs() <= 0.1);
        for a in &m.artifacts {
            assert!(out.join(a).exists(), "{a}");
        }
    }

    // a model of another layout does not fit this configuration
    let v1 = format!("{QUICK}[network]\nvariant = \"V1\"\nlatent_dim = 8\nhidden = [8]\nactivation_stride = 1\ntrunk_hidden = [8]\n");
    let code = run(dir, Some(&v1), &["frc", "--model", out.join("model.txt").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn default_training_emits_one_record_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), None, &["generate"]), 0);
    assert_eq!(run(tmp.path(), None, &["train"]), 0);
    assert_eq!(rows(&tmp.path().join("out/epochs.csv")), 100);
}

#[test]
fn base_preset_trains_for_a_thousand_epochs() {
    let tmp = tempfile::tempdir().unwrap();
    let short = "[curriculum]\nhorizon = 0.5\nn_trajectories = 2\n[training]\nbatch_size = 64\n";
    assert_eq!(run(tmp.path(), Some(short), &["generate", "--preset", "ls1-base"]), 0);
    assert_eq!(run(tmp.path(), Some(short), &["train", "--preset", "ls1-base"]), 0);
    assert_eq!(rows(&tmp.path().join("out/epochs.csv")), 1000);
}

fn accuracy(report: &Path) -> f64 {
    let text = std::fs::read_to_string(report).unwrap();
    let line = text.lines().find(|l| l.starts_with("accuracy_pct")).unwrap();
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

#[test]
fn oracle_frc_is_envelope_limited() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&tmp.path().join("a"), None, &["frc", "--oracle"]), 0);
    assert!(accuracy(&tmp.path().join("a/out/frc/report.txt")) >= 99.9);

    let base = "[frc]\nn_points = 50\n";
    assert_eq!(run(&tmp.path().join("b"), Some(base), &["frc", "--oracle", "--preset", "ls1-base"]), 0);
    let out = tmp.path().join("b/out/frc");
    assert!(out.join("frc_absolute.csv").exists());
    assert!(out.join("frc_absolute.svg").exists());
    assert!(accuracy(&out.join("report.txt")) >= 99.9);
}

#[test]
fn divergence_exits_3_with_records_flushed() {
    let tmp = tempfile::tempdir().unwrap();
    let wild = "[training]\nepochs = 50\nlr_initial = 1e300\n[curriculum]\nhorizon = 2.0\n";
    assert_eq!(run(tmp.path(), Some(wild), &["generate"]), 0);
    assert_eq!(run(tmp.path(), Some(wild), &["train"]), 3);
    let csv = std::fs::read_to_string(tmp.path().join("out/epochs.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,lr,eig_re,eig_im"));
    assert!(tmp.path().join("out/train.manifest.toml").exists());
}

#[test]
fn binary_uses_output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_oscnet"))
        .args(["frc", "--oracle", "--preset", "ls1b", "--workers", "1"])
        .env(cli::OUT_ROOT_ENV, tmp.path())
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(tmp.path().join("ls1b/frc/frc.csv").exists());
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("accuracy"), "{stdout}");

    let status = Command::new(env!("CARGO_BIN_EXE_oscnet")).args(["train", "--out"]).arg(tmp.path().join("none")).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn sweep_continues_past_failed_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[sweep]\ngrid = [1.1, 500.0]\n[sweep.fixed]\nepochs = 2\ntrain_horizon = 1.0\nfrc_points = 4\nfrc_horizon = 10.0\n";
    assert_eq!(run(tmp.path(), Some(cfg), &["sweep", "band_center"]), 0);
    let out = tmp.path().join("out/sweep");
    assert_eq!(rows(&out.join("band_center.csv")), 2);
    assert!(out.join("band_center_failures.txt").exists());
    let all_bad = "[sweep]\ngrid = [500.0]\n[sweep.fixed]\nepochs = 2\n";
    assert_eq!(run(&tmp.path().join("x"), Some(all_bad), &["sweep", "band_center"]), 3);
}
