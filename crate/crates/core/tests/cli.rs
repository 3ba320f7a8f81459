use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cocycle-lab"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cocycle-lab")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cocycle-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const SMALL_SCAN: &[&str] = &[
    "scan",
    "--set",
    "scan.e_count=12",
    "--set",
    "scan.n=4000",
    "--set",
    "scan.phases=2",
];

#[test]
fn scan_is_deterministic() {
    let cfg = configs().join("scan-four-lambda.cfg");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = run(&[&["--config", cfg.to_str().unwrap()], SMALL_SCAN].concat());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# cocycle-lab v1"));
    assert_eq!(lines.next(), Some("E,alpha,le,le_stderr,rho,dos,uh,herman"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn seed_changes_phase_sample() {
    let cfg = configs().join("scan-four-lambda.cfg");
    let base = [&["--config", cfg.to_str().unwrap()], SMALL_SCAN].concat();
    let a = run(&[base.as_slice(), &["--seed", "1"]].concat());
    let b = run(&[base.as_slice(), &["--seed", "2"]].concat());
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn out_flag_writes_file() {
    let cfg = configs().join("dc.cfg");
    let path = scratch("dc.csv");
    let out = run(&[
        "dc-sample",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "dc.samples=2000",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# cocycle-lab v1"));
    let summary = lines.next().unwrap();
    assert!(summary.contains("samples=2000"));
    let fraction: f64 = summary
        .split("fraction=")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(fraction > 0.8);
    assert_eq!(lines.next(), Some("alpha,class,eta,sigma,verdict,witness_k,witness_l"));
    let member: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(member[1..5], ["Dpq", "0.1", "3", "member"]);
    assert_eq!(lines.count(), 16);
}

#[test]
fn input_errors_exit_with_two() {
    let bad = scratch("bad.cfg");
    std::fs::write(
        &bad,
        "[potential]\nkind = poisson-peak\nK = 10\nlambda = 1e4\n[scan]\ne_count = lots\n",
    )
    .unwrap();
    let out = run(&["scan", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 6"), "{err}");

    let missing = run(&["scan", "--config", "/nonexistent/experiment.cfg"]);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = configs().join("scan-four-lambda.cfg");
    let override_err = run(&["scan", "--config", cfg.to_str().unwrap(), "--set", "no-equals-sign"]);
    assert_eq!(override_err.status.code(), Some(2));

    let no_potential = run(&["profile", "--set", "profile.energy=5"]);
    assert_eq!(no_potential.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    // at E = 5 the 2-step product is hyperbolic, so there is no normal form
    let cfg = configs().join("reduce.cfg");
    let out = run(&[
        "reduce",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "reduce.energy=5",
        "--set",
        "reduce.grid=256",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("normal-form"));
}

#[test]
fn windows_report_lists_ac_candidate() {
    let cfg = configs().join("windows-q2.cfg");
    let out = run(&[
        "windows",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "windows.spectrum_count=4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# cocycle-lab v1"));
    assert!(text.lines().any(|l| l.starts_with("ac,")));
    assert!(text.lines().any(|l| l.starts_with("two_step,")));
}
