//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{max_abs_diff, DenseOracle};
use sgm_core::armijo::{simulate_armijo, simulate_rm_1d, ArmijoParams};
use sgm_core::cli::{cmd_run, csv_body_without_wall_time, Command, ExperimentConfig};
use sgm_core::mesh::FeFunction;
use sgm_core::optimizer::{run_deterministic, RunConfig, StepSchedule};
use sgm_core::oracle::{gradient_check, random_function, GradCheckConfig, ProblemSpec, SaaSet};
use sgm_core::pde::SolverTolerances;
use sgm_core::rand_field::KlSpec;
use sgm_core::rng::{stream, Stream};
use sgm_core::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

fn gradient_certification() -> Result<Outcome> {
    let start = Instant::now();
    let problem = ProblemSpec::reference(6, 0.1)?;
    let cfg = GradCheckConfig::default();
    let report = gradient_check(&problem, &cfg)?;
    let pass = report.entries.len() == 75
        && report.worst_rel_error < 1e-5
        && within(start, Duration::from_secs(30));
    outcome(
        pass,
        format!(
            "worst relative error {:.3e} over {} checks, {:.1?}",
            report.worst_rel_error,
            report.entries.len(),
            start.elapsed()
        ),
    )
}

fn state_solver() -> Result<Outcome> {
    let tol = SolverTolerances::default().with_newton_tol(1e-12);
    let problem = ProblemSpec::reference(10, 0.1)?;
    let saa = SaaSet::draw(problem.kl(), 20, 10)?;
    let u = FeFunction::constant(problem.space().dim(), 1.0);
    let mut worst_const = 0.0f64;
    for sample in saa.samples() {
        let y = problem.solver().solve_state(&u, sample, &tol)?.y;
        for c in y.values() {
            worst_const = worst_const.max((c + c.powi(5) - 1.0).abs());
        }
    }

    let small = ProblemSpec::reference(4, 0.1)?;
    let oracle = DenseOracle::reference(4);
    let saa = SaaSet::draw(small.kl(), 10, 11)?;
    let mut rng = stream(11, Stream::Probe);
    let mut worst_dense = 0.0f64;
    for sample in saa.samples() {
        let u = random_function(small.space(), &mut rng, -10.0, 10.0);
        let y = small.solver().solve_state(&u, sample, &tol)?.y;
        let dense = oracle.solve_state(&sample.xi, u.values());
        worst_dense = worst_dense.max(max_abs_diff(y.values(), dense.as_slice()));
    }
    outcome(
        worst_const < 1e-12 && worst_dense <= 1e-10,
        format!("(a) max |c + c^5 - 1| = {worst_const:.2e}; (b) max dense difference = {worst_dense:.2e}"),
    )
}

fn estimates() -> Result<Outcome> {
    let start = Instant::now();
    let problem = ProblemSpec::reference(10, 0.1)?;
    let solver = problem.solver();
    let tol = problem.tolerances();
    let saa = SaaSet::draw(problem.kl(), 100, 12)?;
    let mut rng = stream(12, Stream::Probe);
    let scales = [1.0, 10.0, 100.0];
    let (mut energy_ok, mut lip_ok) = (0, 0);
    let (mut energy_ratio, mut lip_ratio) = (0.0f64, 0.0f64);
    for (i, sample) in saa.samples().iter().enumerate() {
        let s = scales[i % 3];
        let u = random_function(problem.space(), &mut rng, -s, s);
        let y = solver.solve_state(&u, sample, tol)?.y;
        let e = solver.check_energy_bound(&y, &u, 1.05)?;
        energy_ok += usize::from(e.satisfied);
        energy_ratio = energy_ratio.max(e.lhs / e.rhs);

        let u1 = random_function(problem.space(), &mut rng, -s, s);
        let u2 = random_function(problem.space(), &mut rng, -s, s);
        let y1 = solver.solve_state(&u1, sample, tol)?.y;
        let y2 = solver.solve_state(&u2, sample, tol)?.y;
        let l = solver.check_state_lipschitz(&y1, &y2, &u1, &u2, 1.05)?;
        lip_ok += usize::from(l.satisfied);
        lip_ratio = lip_ratio.max(l.lhs / l.rhs);
    }
    outcome(
        energy_ok == 100 && lip_ok == 100 && within(start, Duration::from_secs(120)),
        format!(
            "energy {energy_ok}/100 (max ratio {energy_ratio:.3}), Lipschitz {lip_ok}/100 (max ratio {lip_ratio:.3}), {:.1?}",
            start.elapsed()
        ),
    )
}

fn desk_config(lambda: f64, out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(&Command::Run);
    cfg.lambdas = vec![lambda];
    cfg.n_div = 10;
    cfg.n_saa = 200;
    cfg.iters = 300;
    cfg.seed = 10;
    cfg.out = out.to_path_buf();
    cfg
}

fn rate_reproduction(tmp: &std::path::Path) -> Result<Outcome> {
    let mut pass = true;
    let mut details = Vec::new();
    for lambda in [1.0, 0.1, 0.01] {
        let start = Instant::now();
        let summary = cmd_run(&desk_config(lambda, &tmp.join("first")))?.remove(0);
        let t = &summary.trajectory;
        let m10 = t.min_grad_norm_sq_at(10).unwrap_or(f64::NAN);
        let m300 = t.min_grad_norm_sq_at(300).unwrap_or(f64::NAN);
        let verdict = summary.verdict.as_ref().is_some_and(|v| v.pass);
        let ok = m300 <= 0.2 * m10 && verdict && within(start, Duration::from_secs(600));
        pass &= ok;
        details.push(format!(
            "lambda={lambda}: min10 {m10:.3e} -> min300 {m300:.3e}, rate {}, {:.1?}",
            if verdict { "PASS" } else { "FAIL" },
            start.elapsed()
        ));
    }
    outcome(pass, details.join("; "))
}

fn deterministic_baseline() -> Result<Outcome> {
    let problem = ProblemSpec::reference(10, 0.01)?;
    let cfg = RunConfig::new(
        StepSchedule::new(2.0 / 0.01, 1.0)?,
        5000,
        FeFunction::constant(problem.space().dim(), 1.0),
        10,
    );
    let t = run_deterministic(&problem, &cfg)?;
    let min = t.last_min_grad_norm_sq().unwrap_or(f64::NAN);
    outcome(
        t.terminated_early && t.records.len() < 5000 && min <= 1e-8,
        format!(
            "stopped at iteration {} with min grad norm^2 {min:.3e}",
            t.records.len()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
}

fn armijo_counterexample() -> Result<Outcome> {
    let params = ArmijoParams::new(1.0, 0.5, 0.5)?;
    let run = simulate_armijo(&params, 0.1, 1.0, 10_000, 10)?;
    let schedule = StepSchedule::new(0.5, 1.0)?;
    let mut rm = Vec::new();
    let mut armijo = Vec::new();
    for seed in 10..30 {
        rm.push(
            simulate_rm_1d(&schedule, 1.0, 10_000, seed)?
                .last()
                .copied()
                .unwrap_or(1.0)
                .abs(),
        );
        armijo.push(
            simulate_armijo(&params, 0.1, 1.0, 10_000, seed)?
                .final_u
                .abs(),
        );
    }
    let (rm_med, armijo_med) = (median(rm), median(armijo));
    outcome(
        run.alpha == 0.5 && run.violations == 0 && rm_med < 0.05 && armijo_med >= 0.1,
        format!(
            "alpha {}, violations {}, median final |u|: RM {rm_med:.4}, Armijo {armijo_med:.4}",
            run.alpha, run.violations
        ),
    )
}

fn ellipticity() -> Result<Outcome> {
    let start = Instant::now();
    let kl = KlSpec::reference();
    let bounds = kl.bounds();
    let mut rng = stream(10, Stream::Field);
    let mut min = f64::INFINITY;
    let mut count = 0;
    for i in 0..1000 {
        let sample = kl.draw_sample(&mut rng, i);
        for p in 0..10 {
            for q in 0..10 {
                min = min.min(kl.evaluate(&sample, [p as f64 / 9.0, q as f64 / 9.0]));
                count += 1;
            }
        }
    }
    outcome(
        count == 100_000 && min >= bounds.tight && within(start, Duration::from_secs(10)),
        format!(
            "min over {count} evaluations {min:.6}, C_tight {:.9}, C_quoted {:.9}, {:.1?}",
            bounds.tight,
            bounds.quoted,
            start.elapsed()
        ),
    )
}

fn reproducibility(tmp: &std::path::Path) -> Result<Outcome> {
    let first = tmp.join("first/lambda_0.1/trajectory.csv");
    if !first.exists() {
        cmd_run(&desk_config(0.1, &tmp.join("first")))?;
    }
    cmd_run(&desk_config(0.1, &tmp.join("second")))?;
    let a = fs::read_to_string(first)?;
    let b = fs::read_to_string(tmp.join("second/lambda_0.1/trajectory.csv"))?;
    let (a, b) = (
        csv_body_without_wall_time(&a),
        csv_body_without_wall_time(&b),
    );
    outcome(
        a == b && a.lines().count() == 300,
        format!("{} rows compared, identical: {}", a.lines().count(), a == b),
    )
}

type Check<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Check)> = vec![
        ("gradient certification", Box::new(gradient_certification)),
        ("state solver", Box::new(state_solver)),
        ("energy and Lipschitz estimates", Box::new(estimates)),
        (
            "rate reproduction",
            Box::new(|| rate_reproduction(tmp.path())),
        ),
        ("deterministic baseline", Box::new(deterministic_baseline)),
        ("Armijo counterexample", Box::new(armijo_counterexample)),
        ("ellipticity", Box::new(ellipticity)),
        ("reproducibility", Box::new(|| reproducibility(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let line = match check() {
            Ok(o) => {
                failed += usize::from(!o.pass);
                format!(
                    "{} {name}: {}",
                    if o.pass { "PASS" } else { "FAIL" },
                    o.detail
                )
            }
            Err(e) => {
                failed += 1;
                format!("FAIL {name}: error: {e}")
            }
        };
        println!("criterion {}: {line}", i + 1);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
