use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sgm_core::cli::{self, csv_body_without_wall_time, ExperimentConfig, Flags, TRAJECTORY_HEADER};

fn sgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &["--ndiv", "6", "--nsaa", "8", "--iters", "25"];

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    sgm(&args)
}

#[test]
fn run_writes_three_files_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_small(&out, &["--lambda", "1,0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for lambda in ["1", "0.1"] {
        let d = out.join(format!("lambda_{lambda}"));
        let mut names: Vec<String> = fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["fields.csv", "rate.txt", "trajectory.csv"]);
        let traj = fs::read_to_string(d.join("trajectory.csv")).unwrap();
        assert_eq!(traj.lines().next().unwrap(), TRAJECTORY_HEADER);
        assert_eq!(traj.lines().count(), 26);
        let fields = fs::read_to_string(d.join("fields.csv")).unwrap();
        assert_eq!(fields.lines().count(), 1 + 49);
        let rate = fs::read_to_string(d.join("rate.txt")).unwrap();
        assert!(rate.starts_with("# verdict: "));
        let data: Vec<&str> = rate.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 25);
        assert!(data.iter().all(|l| l.split(' ').count() == 2));
    }
}

#[test]
fn repeated_runs_are_byte_identical_without_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_small(&a, &["--lambda", "0.1"]).status.success());
    assert!(run_small(&b, &["--lambda", "0.1"]).status.success());
    let read = |p: &Path| fs::read_to_string(p.join("lambda_0.1/trajectory.csv")).unwrap();
    assert_eq!(
        csv_body_without_wall_time(&read(&a)),
        csv_body_without_wall_time(&read(&b))
    );
    let fields = |p: &Path| fs::read(p.join("lambda_0.1/fields.csv")).unwrap();
    assert_eq!(fields(&a), fields(&b));
}

#[test]
fn single_lambda_gives_single_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_small(&out, &["--lambda", "0.01"]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn unwritable_output_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run_small(&blocker.join("out"), &["--lambda", "0.1"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: cannot write"), "{err}");
}

#[test]
fn failure_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/out");
    // lambda = 0 without an explicit theta fails after lambda = 0.1 finished.
    let o = run_small(&out, &["--lambda", "0.1,0"]);
    assert!(!o.status.success());
    assert!(!out.exists());
    assert!(!dir.path().join("nested").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    fs::write(
        &conf,
        "# test\nseed = 4\nnsaa = 3\nlambda = 1, 0.1\ntheta = 7.5\n",
    )
    .unwrap();
    let flags = Flags {
        config: Some(conf.clone()),
        lambda: Some("0.01".into()),
        nsaa: Some(9),
        ..Flags::default()
    };
    let cfg = ExperimentConfig::resolve(&cli::Command::Run, &flags).unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.n_saa, 9);
    assert_eq!(cfg.lambdas, vec![0.01]);
    assert_eq!(cfg.schedule(0.01).unwrap().theta, 7.5);

    fs::write(&conf, "nsaa = many\n").unwrap();
    let flags = Flags {
        config: Some(conf),
        ..Flags::default()
    };
    assert!(ExperimentConfig::resolve(&cli::Command::Run, &flags).is_err());

    let gc = ExperimentConfig::resolve(
        &cli::Command::GradCheck {
            inject_sign_flip: false,
        },
        &Flags::default(),
    )
    .unwrap();
    assert_eq!(gc.n_div, 6);
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf");
    let flags = Flags {
        config: Some(path),
        ..Flags::default()
    };
    let cfg = ExperimentConfig::resolve(&cli::Command::Run, &flags).unwrap();
    assert_eq!(
        (cfg.n_div, cfg.n_saa, cfg.iters, cfg.seed),
        (10, 200, 300, 10)
    );
    assert_eq!(cfg.lambdas, vec![1.0, 0.1, 0.01]);
}

#[test]
fn grad_check_exit_status() {
    let o = sgm(&["grad-check", "--lambda", "0.1,0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).matches("PASS").count(), 2);
    let o = sgm(&["grad-check", "--lambda", "0.1", "--inject-sign-flip"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn rate_check_reads_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run_small(&out, &["--lambda", "1"]).status.success());
    let traj = out.join("lambda_1/trajectory.csv");
    let o = sgm(&["rate-check", "--trajectory", traj.to_str().unwrap()]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let rate = fs::read_to_string(out.join("lambda_1/rate.txt")).unwrap();
    let verdict = if o.status.success() { "PASS" } else { "FAIL" };
    assert!(rate.starts_with(&format!("# verdict: {verdict}")));

    let o = sgm(&[
        "rate-check",
        "--trajectory",
        dir.path().join("missing.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn armijo_demo_reports_zero_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgm(&["armijo-demo", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("violations=0"));
    for name in ["armijo.csv", "rm.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
        assert_eq!(text.lines().count(), 10_001);
    }
    // The exported RM path is the one simulated for the summary.
    let rm = fs::read_to_string(dir.path().join("rm.csv")).unwrap();
    let schedule = sgm_core::optimizer::StepSchedule::new(0.5, 1.0).unwrap();
    let path = sgm_core::armijo::simulate_rm_1d(&schedule, 1.0, 10_000, 10).unwrap();
    let last: f64 = rm
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(6)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(last, path[9_999].abs());
}

#[test]
fn deterministic_reports_termination() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgm(&[
        "deterministic",
        "--lambda",
        "0.01",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("terminated at iteration"));
    assert!(dir
        .path()
        .join("deterministic_lambda_0.01/fields.csv")
        .exists());

    let o = sgm(&[
        "deterministic",
        "--lambda",
        "0.01",
        "--iters",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("ran 1 iterations") && !text.contains("terminated"));
}

#[test]
fn bad_flags_are_rejected() {
    assert!(!sgm(&["run", "--lambda", "abc"]).status.success());
    assert!(!sgm(&["run", "--iters", "0"]).status.success());
    assert!(!sgm(&["frobnicate"]).status.success());
}
