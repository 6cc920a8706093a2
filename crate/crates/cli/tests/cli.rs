use std::path::Path;
use std::process::{Command, Output};

fn gpbandit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpbandit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpbandit(
        dir.path(),
        &["run", "--preset", "desk", "--horizon", "60", "--trials", "2", "--workers", "2", "-o", "out", "n=30"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("completed=2"));
    for f in ["trial_0000.csv", "trial_0001.csv", "summary.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "missing {f}");
    }
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.cfg"),
        "# small run\npolicy = gp_ts\nlambda = noise\nn = 25\nhorizon = 40\ntrials = 1\n",
    )
    .unwrap();
    let o = gpbandit(dir.path(), &["run", "-c", "exp.cfg", "--policy", "random"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("policy=random"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing_lambda = gpbandit(dir.path(), &["run", "--horizon", "10", "--trials", "1"]);
    assert_eq!(missing_lambda.status.code(), Some(2));
    let bad_key = gpbandit(dir.path(), &["run", "--lambda", "noise", "frobnicate=1"]);
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_kernel = gpbandit(dir.path(), &["conc", "--kernel", "cubic"]);
    assert_eq!(bad_kernel.status.code(), Some(2));
}

#[test]
fn same_seed_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["run", "--lambda", "noise", "--horizon", "50", "--trials", "3", "--seed", "9", "-o", out, "n=20"]
    };
    assert!(gpbandit(dir.path(), &args("a")).status.success());
    let b = gpbandit(dir.path(), &{
        let mut v = args("b");
        v.extend(["--workers", "1"]);
        v
    });
    assert!(b.status.success());
    for f in ["trial_0000.csv", "trial_0002.csv", "summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn conc_reports_rate_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpbandit(dir.path(), &["conc", "--horizon", "30", "--trials", "100", "--rule", "chase", "-o", "cov.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("violations="));
    let text = std::fs::read_to_string(dir.path().join("cov.csv")).unwrap();
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn plotdata_merges_labelled_summaries() {
    let dir = tempfile::tempdir().unwrap();
    for (policy, out) in [("igp_ucb", "a"), ("random", "b")] {
        let o = gpbandit(
            dir.path(),
            &["run", "--lambda", "noise", "--policy", policy, "--horizon", "30", "--trials", "2", "-o", out, "n=20"],
        );
        assert!(o.status.success());
    }
    let o = gpbandit(dir.path(), &["plotdata", "ucb=a/summary.csv", "b/summary.csv", "-o", "fig.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("fig.csv")).unwrap();
    assert!(text.starts_with("policy,t,mean,std\nucb,1,"));
    assert!(text.contains("\nrandom,30,"));
    assert!(dir.path().join("fig.gp").exists());
}

#[test]
fn env_generate_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let g = gpbandit(dir.path(), &["env", "generate", "-o", "env.json", "--trial", "3", "n=15", "env=gp"]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    let i = gpbandit(dir.path(), &["env", "inspect", "env.json"]);
    assert!(i.status.success());
    assert_eq!(stdout(&g), stdout(&i));
    assert!(stdout(&i).starts_with("candidates=15 dim=1"));

    std::fs::write(dir.path().join("junk.json"), "{not json").unwrap();
    let bad = gpbandit(dir.path(), &["env", "inspect", "junk.json"]);
    assert_eq!(bad.status.code(), Some(2));
}
