use std::path::Path;
use std::process::{Command, Output};

fn qfluct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfluct"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn small_run_writes_csv_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "experiment = closed-ft\nd = 2,3\nn = 2,3\nensemble = 6\nseed = 4\n");
    let out = dir.path().join("out.csv");
    let o = qfluct(&["closed-ft", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "experiment,seed,quantity,value,target,tolerance,pass");
    assert!(lines.all(|l| l.starts_with("closed-ft,") && l.ends_with(",true")));
    assert!(text.contains("\nclosed-ft,9,"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "ensemble = 4\n");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = qfluct(&["nonmarkov-ft", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    let a = run("17", "a.csv");
    let b = run("17", "b.csv");
    let c = run("18", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    for (name, text) in [
        ("syntax.cfg", "ensemble 4\n"),
        ("key.cfg", "colour = blue\n"),
        ("value.cfg", "d = 1\n"),
        ("mismatch.cfg", "experiment = kolmogorov\n"),
    ] {
        let cfg = write(dir.path(), name, text);
        let o = qfluct(&["markov-ft", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
        assert!(!out.exists());
    }
    let o = qfluct(&["markov-ft", "--config", "/nonexistent/q.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qfluct(&["no-such-experiment"]).status.code(), Some(2));
    assert_eq!(qfluct(&["closed-ft", "--seed", "abc"]).status.code(), Some(2));
}

#[test]
fn failing_rows_exit_1_with_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.cfg", "ensemble = 3\ntolerance = 1e-300\n");
    let out = dir.path().join("out.csv");
    let o = qfluct(&["markov-ft", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.lines().any(|l| l.ends_with(",false")));
    assert!(text.lines().any(|l| l.contains(",2,")));
}

#[test]
fn stdout_and_logging() {
    let o = Command::new(env!("CARGO_BIN_EXE_qfluct"))
        .args(["kolmogorov"])
        .env("QFLUCT_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("experiment,seed,quantity"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kolmogorov"));
}
