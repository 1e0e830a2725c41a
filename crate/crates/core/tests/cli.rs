use std::process::Command;

fn lgrpo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lgrpo"))
}

fn stdout_of(args: &[&str]) -> (bool, String, String) {
    let out = lgrpo().args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn probe_weights_dapo() {
    let (ok, out, _) = stdout_of(&["probe-weights", "--lengths", "10,20", "--scheme", "dapo"]);
    assert!(ok);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "i,length,h,g,s,f");
    assert_eq!(lines[1], "0,10,,,0.5,1");
    assert_eq!(lines[2], "1,20,,,0.5,1");
}

#[test]
fn probe_weights_lambda() {
    let (ok, out, _) = stdout_of(&["probe-weights", "--lengths", "10,20", "--scheme", "lambda-grpo", "--lambda", "1"]);
    assert!(ok);
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    assert!((row[0] - 8.0 / 9.0).abs() < 1e-15);
    assert!((row[3] - 0.8894).abs() < 1e-4);
    let (ok, _, _) = stdout_of(&["probe-weights", "--lengths", "10,20", "--lambda", "-2.5"]);
    assert!(ok);
}

#[test]
fn probe_weights_rejects_zero_length() {
    let (ok, _, err) = stdout_of(&["probe-weights", "--lengths", "0,20", "--scheme", "grpo"]);
    assert!(!ok);
    assert!(err.contains("length"), "{err}");
}

#[test]
fn grad_check_passes_and_fails_by_tolerance() {
    let (ok, out, _) = stdout_of(&["grad-check", "--trials", "1000", "--tol", "1e-5"]);
    assert!(ok, "{out}");
    let err: f64 = out.split("max_rel_error=").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!(err < 1e-5);
    let (ok, _, _) = stdout_of(&["grad-check", "--trials", "50", "--tol", "1e-30"]);
    assert!(!ok);
}

#[test]
fn train_and_resume_from_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "group_size = 4\nprompts_per_batch = 4\ntotal_steps = 6\ncheckpoint_every = 3\n").unwrap();
    let out = dir.path().join("out");
    let (ok, dump, err) = stdout_of(&[
        "train", "--config", cfg.to_str().unwrap(), "--scheme", "grpo", "--seed", "3",
        "--out", out.to_str().unwrap(), "--dump-samples",
    ]);
    assert!(ok, "{err}");
    assert_eq!(dump.lines().count(), 6 * 4 * 4);
    assert!(dump.lines().next().unwrap().starts_with("step=0 prompt=0 "));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 7);

    let (ok, _, err) = stdout_of(&["resume", "--checkpoint", out.join("step-000003.ckpt").to_str().unwrap()]);
    assert!(ok, "{err}");
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap(), metrics);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "groupsize = 4\n").unwrap();
    let (ok, _, err) = stdout_of(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!ok);
    assert!(err.contains("groupsize"), "{err}");

    let (ok, _, err) = stdout_of(&["resume", "--checkpoint", cfg.to_str().unwrap()]);
    assert!(!ok);
    assert!(err.contains("checkpoint"), "{err}");
}
