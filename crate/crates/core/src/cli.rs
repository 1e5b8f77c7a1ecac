//! Batch front-end: configuration, experiment drivers and file output.
//!
//! Configuration comes from an optional flat `key = value` file and from
//! command-line flags; flags win. See `configs/keys.md` for the key list.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng as _;

use crate::armijo::{self, ArmijoParams};
use crate::error::{Error, Result};
use crate::mesh::FeFunction;
use crate::optimizer::{
    boundedness_monitor, rate_check, run_deterministic, run_sgd, BoundednessReport,
    IterationRecord, RateVerdict, RunConfig, Sampling, StepSchedule, Trajectory,
};
use crate::oracle::{gradient_check, GradCheckConfig, ProblemSpec, SaaSet};

pub const TRAJECTORY_HEADER: &str =
    "iter,t_n,j_saa,grad_norm_sq,min_grad_norm_sq,cum_step_sum,u_norm,sample_index,wall_ms";
pub const FIELDS_HEADER: &str = "x,y,control,state";

/// Worst relative error accepted by `grad-check`.
pub const GRAD_CHECK_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "sgm",
    version,
    about = "Stochastic gradient method for semilinear elliptic optimal control under uncertainty"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the stochastic gradient method for every lambda and write
    /// trajectories, rate verdicts and final fields.
    Run,
    /// Compare adjoint gradients with finite differences of the objective.
    GradCheck {
        /// Negate the adjoint gradient (mutation test hook).
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Apply the rate test to a trajectory CSV.
    RateCheck {
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Armijo backtracking versus Robbins–Monro on the scalar example.
    ArmijoDemo,
    /// Gradient descent with the mean coefficient.
    Deterministic,
}

#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub ndiv: Option<usize>,
    #[arg(long, global = true)]
    pub nsaa: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Comma-separated list of regularization weights.
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    /// Step numerator; defaults to 2 / lambda.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Step exponent.
    #[arg(long, global = true)]
    pub s: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Evaluate the full SAA gradient every this many iterations.
    #[arg(long, global = true)]
    pub cadence: Option<usize>,
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_div: usize,
    pub n_saa: usize,
    pub iters: usize,
    pub lambdas: Vec<f64>,
    pub theta: Option<f64>,
    pub s: f64,
    pub out: PathBuf,
    pub cadence: usize,
    pub newton_tol: f64,
    pub bias_tol0: Option<f64>,
    pub sampling: Sampling,
    pub probes: usize,
    pub stop_grad_norm_sq: f64,
    pub armijo: ArmijoParams,
    pub epsilon: f64,
    pub u1: f64,
    pub rm_theta: f64,
    pub seeds: usize,
}

const KEYS: &[&str] = &[
    "seed",
    "ndiv",
    "nsaa",
    "iters",
    "lambda",
    "theta",
    "s",
    "out",
    "cadence",
    "newton_tol",
    "bias_tol0",
    "sampling",
    "probes",
    "stop_grad_norm_sq",
    "armijo_beta",
    "armijo_t",
    "armijo_c",
    "epsilon",
    "u1",
    "rm_theta",
    "seeds",
];

/// Parses a flat `key = value` file. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

pub fn parse_lambda_list(value: &str) -> Result<Vec<f64>> {
    let lambdas = value
        .split(',')
        .map(|v| parse_value::<f64>("lambda", v.trim()))
        .collect::<Result<Vec<_>>>()?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("invalid lambda list '{value}'")));
    }
    Ok(lambdas)
}

impl ExperimentConfig {
    /// Defaults for `command`, then the config file, then flags.
    pub fn resolve(command: &Command, flags: &Flags) -> Result<Self> {
        let mut cfg = Self::defaults(command);
        if let Some(path) = &flags.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.apply(&parse_config_text(&text)?)?;
        }
        let mut overrides = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.insert(k.to_string(), v);
            }
        };
        put("seed", flags.seed.map(|v| v.to_string()));
        put("ndiv", flags.ndiv.map(|v| v.to_string()));
        put("nsaa", flags.nsaa.map(|v| v.to_string()));
        put("iters", flags.iters.map(|v| v.to_string()));
        put("lambda", flags.lambda.clone());
        put("theta", flags.theta.map(|v| v.to_string()));
        put("s", flags.s.map(|v| v.to_string()));
        put("out", flags.out.as_ref().map(|p| p.display().to_string()));
        put("cadence", flags.cadence.map(|v| v.to_string()));
        cfg.apply(&overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults(command: &Command) -> Self {
        let (n_div, iters) = match command {
            Command::GradCheck { .. } => (6, 300),
            Command::Deterministic => (10, 5000),
            Command::ArmijoDemo => (10, 10_000),
            _ => (10, 300),
        };
        ExperimentConfig {
            seed: 10,
            n_div,
            n_saa: 200,
            iters,
            lambdas: vec![1.0, 0.1, 0.01],
            theta: None,
            s: 1.0,
            out: PathBuf::from("out"),
            cadence: 1,
            newton_tol: 1e-10,
            bias_tol0: None,
            sampling: Sampling::SaaWithReplacement,
            probes: 5,
            stop_grad_norm_sq: 1e-8,
            armijo: ArmijoParams::default(),
            epsilon: 0.1,
            u1: 1.0,
            rm_theta: 0.5,
            seeds: 20,
        }
    }

    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in kv {
            match k.as_str() {
                "seed" => self.seed = parse_value(k, v)?,
                "ndiv" => self.n_div = parse_value(k, v)?,
                "nsaa" => self.n_saa = parse_value(k, v)?,
                "iters" => self.iters = parse_value(k, v)?,
                "lambda" => self.lambdas = parse_lambda_list(v)?,
                "theta" => self.theta = Some(parse_value(k, v)?),
                "s" => self.s = parse_value(k, v)?,
                "out" => self.out = PathBuf::from(v),
                "cadence" => self.cadence = parse_value(k, v)?,
                "newton_tol" => self.newton_tol = parse_value(k, v)?,
                "bias_tol0" => self.bias_tol0 = Some(parse_value(k, v)?),
                "sampling" => {
                    self.sampling = match v.as_str() {
                        "saa" => Sampling::SaaWithReplacement,
                        "streaming" => Sampling::Streaming,
                        _ => return Err(Error::Config(format!("invalid sampling '{v}'"))),
                    }
                }
                "probes" => self.probes = parse_value(k, v)?,
                "stop_grad_norm_sq" => self.stop_grad_norm_sq = parse_value(k, v)?,
                "armijo_beta" => self.armijo.beta = parse_value(k, v)?,
                "armijo_t" => self.armijo.t = parse_value(k, v)?,
                "armijo_c" => self.armijo.c = parse_value(k, v)?,
                "epsilon" => self.epsilon = parse_value(k, v)?,
                "u1" => self.u1 = parse_value(k, v)?,
                "rm_theta" => self.rm_theta = parse_value(k, v)?,
                "seeds" => self.seeds = parse_value(k, v)?,
                _ => return Err(Error::Config(format!("unknown key '{k}'"))),
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n_div == 0
            || self.n_saa == 0
            || self.iters == 0
            || self.cadence == 0
            || self.seeds == 0
        {
            return Err(Error::Config(
                "ndiv, nsaa, iters, cadence and seeds must be >= 1".into(),
            ));
        }
        if self.newton_tol.is_nan() || self.newton_tol <= 0.0 {
            return Err(Error::Config("newton_tol must be positive".into()));
        }
        ArmijoParams::new(self.armijo.beta, self.armijo.t, self.armijo.c)?;
        Ok(())
    }

    pub fn schedule(&self, lambda: f64) -> Result<StepSchedule> {
        let theta = match self.theta {
            Some(t) => t,
            None if lambda > 0.0 => 2.0 / lambda,
            None => {
                return Err(Error::Config(
                    "theta must be given explicitly when lambda = 0".into(),
                ))
            }
        };
        StepSchedule::new(theta, self.s)
    }

    fn problem(&self, lambda: f64) -> Result<ProblemSpec> {
        let p = ProblemSpec::reference(self.n_div, lambda)?;
        let tol = p.tolerances().with_newton_tol(self.newton_tol);
        p.with_tolerances(tol)
    }

    fn run_config(&self, problem: &ProblemSpec, lambda: f64) -> Result<RunConfig> {
        let mut rc = RunConfig::new(
            self.schedule(lambda)?,
            self.iters,
            FeFunction::constant(problem.space().dim(), self.u1),
            self.seed,
        );
        rc.cadence = self.cadence;
        rc.sampling = self.sampling;
        rc.bias_schedule = self.bias_tol0;
        Ok(rc)
    }
}

/// Locale-independent float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut s = String::new();
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for r in &trajectory.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.3}",
            r.iter,
            fmt_f64(r.step),
            fmt_opt(r.j_saa),
            fmt_opt(r.grad_norm_sq),
            fmt_opt(r.min_grad_norm_sq),
            fmt_f64(r.cum_step_sum),
            fmt_f64(r.u_norm),
            r.sample_index.map(|i| i.to_string()).unwrap_or_default(),
            r.wall_ms
        );
    }
    s
}

/// Reads the records of a trajectory CSV written by [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRAJECTORY_HEADER) {
        return Err(Error::Config("unexpected trajectory CSV header".into()));
    }
    let opt = |field: &str| -> Result<Option<f64>> {
        if field.is_empty() {
            Ok(None)
        } else {
            parse_value("csv field", field).map(Some)
        }
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 9 {
                return Err(Error::Config(format!("bad trajectory row '{line}'")));
            }
            Ok(IterationRecord {
                iter: parse_value("iter", f[0])?,
                step: parse_value("t_n", f[1])?,
                j_saa: opt(f[2])?,
                grad_norm_sq: opt(f[3])?,
                min_grad_norm_sq: opt(f[4])?,
                cum_step_sum: parse_value("cum_step_sum", f[5])?,
                u_norm: parse_value("u_norm", f[6])?,
                sample_index: if f[7].is_empty() {
                    None
                } else {
                    Some(parse_value("sample_index", f[7])?)
                },
                wall_ms: parse_value("wall_ms", f[8])?,
            })
        })
        .collect()
}

/// Drops the wall-clock column, leaving the reproducible part of a CSV.
pub fn csv_body_without_wall_time(text: &str) -> String {
    text.lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn verdict_label(verdict: Option<&RateVerdict>) -> &'static str {
    match verdict {
        Some(v) if v.pass => "PASS",
        Some(_) => "FAIL",
        None => "INSUFFICIENT",
    }
}

/// Gnuplot-readable `iter product` series with the verdict in comments.
/// `None` means too few full-gradient records for a verdict.
pub fn rate_file(verdict: Option<&RateVerdict>, bounded: Option<&BoundednessReport>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# verdict: {}", verdict_label(verdict));
    if let Some(v) = verdict {
        let _ = writeln!(s, "# early_median: {}", fmt_f64(v.early_median));
        let _ = writeln!(s, "# late_median: {}", fmt_f64(v.late_median));
    }
    if let Some(b) = bounded {
        let _ = writeln!(s, "# max_u_norm: {}", fmt_f64(b.max_u_norm));
        let _ = writeln!(s, "# growth_detected: {}", b.growth_detected);
        let _ = writeln!(s, "# gamma_probe: {}", fmt_f64(b.gamma_probe));
        let _ = writeln!(
            s,
            "# min_angle_inner_product: {}",
            fmt_opt(b.min_inner_product)
        );
    }
    s.push_str("# iter product\n");
    for (n, p) in verdict.map(|v| v.series.as_slice()).unwrap_or_default() {
        let _ = writeln!(s, "{n} {}", fmt_f64(*p));
    }
    s
}

pub fn fields_csv(problem: &ProblemSpec, control: &FeFunction, state: &FeFunction) -> String {
    let mut s = String::new();
    s.push_str(FIELDS_HEADER);
    s.push('\n');
    for (i, x) in problem.space().mesh().nodes().iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(x[0]),
            fmt_f64(x[1]),
            fmt_f64(control.values()[i]),
            fmt_f64(state.values()[i])
        );
    }
    s
}

/// Writes files under the output directory and removes everything it
/// created if the command fails.
struct OutputSet {
    created: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    fn new() -> Self {
        OutputSet {
            created: Vec::new(),
            committed: false,
        }
    }

    fn dir(&mut self, path: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut p = Some(path);
        while let Some(d) = p {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            p = d.parent();
        }
        fs::create_dir_all(path).map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })?;
        // Cleanup walks `created` backwards, so record parents first.
        self.created.extend(missing.into_iter().rev());
        Ok(())
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        let output = |source| Error::Output {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(output)?;
        self.created.push(path.to_path_buf());
        f.write_all(contents.as_bytes()).map_err(output)
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.created.iter().rev() {
            if p.is_dir() {
                let _ = fs::remove_dir(p);
            } else {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn lambda_dir(out: &Path, prefix: &str, lambda: f64) -> PathBuf {
    out.join(format!("{prefix}lambda_{lambda}"))
}

/// Per-lambda result of [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub lambda: f64,
    pub trajectory: Trajectory,
    pub verdict: Option<RateVerdict>,
    pub boundedness: BoundednessReport,
    pub dir: PathBuf,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let mut out = OutputSet::new();
    out.dir(&cfg.out)?;
    let mut summaries = Vec::new();
    for &lambda in &cfg.lambdas {
        let problem = cfg.problem(lambda)?;
        let saa = SaaSet::draw(problem.kl(), cfg.n_saa, cfg.seed)?;
        let mut rc = cfg.run_config(&problem, lambda)?;
        rc.keep_iterates = cfg.probes > 0;
        let trajectory = run_sgd(&problem, &saa, &rc)?;
        let verdict = match rate_check(&trajectory) {
            Ok(v) => Some(v),
            Err(Error::InsufficientRecords { .. }) => None,
            Err(e) => return Err(e),
        };
        let boundedness = boundedness_monitor(&trajectory, &problem, &saa, cfg.probes, None)?;

        let dir = lambda_dir(&cfg.out, "", lambda);
        out.dir(&dir)?;
        out.write(&dir.join("trajectory.csv"), &trajectory_csv(&trajectory))?;
        out.write(
            &dir.join("rate.txt"),
            &rate_file(verdict.as_ref(), Some(&boundedness)),
        )?;
        let state = trajectory
            .final_state
            .clone()
            .unwrap_or_else(|| problem.zero_control());
        out.write(
            &dir.join("fields.csv"),
            &fields_csv(&problem, &trajectory.final_control, &state),
        )?;
        summaries.push(RunSummary {
            lambda,
            trajectory: Trajectory {
                iterates: Vec::new(),
                ..trajectory
            },
            verdict,
            boundedness,
            dir,
        });
    }
    out.commit();
    Ok(summaries)
}

#[derive(Debug, Clone)]
pub struct GradCheckSummary {
    pub lambda: f64,
    pub worst_rel_error: f64,
    pub pass: bool,
}

pub fn cmd_grad_check(cfg: &ExperimentConfig, flip_sign: bool) -> Result<Vec<GradCheckSummary>> {
    cfg.lambdas
        .iter()
        .map(|&lambda| {
            let problem = cfg.problem(lambda)?;
            let gc = GradCheckConfig {
                seed: cfg.seed,
                flip_sign,
                ..GradCheckConfig::default()
            };
            let report = gradient_check(&problem, &gc)?;
            Ok(GradCheckSummary {
                lambda,
                worst_rel_error: report.worst_rel_error,
                pass: report.worst_rel_error < GRAD_CHECK_TOL,
            })
        })
        .collect()
}

pub fn cmd_rate_check(path: &Path) -> Result<RateVerdict> {
    let text = fs::read_to_string(path)?;
    let records = parse_trajectory_csv(&text)?;
    rate_check(&Trajectory {
        records,
        final_control: FeFunction::zeros(0),
        final_state: None,
        iterates: Vec::new(),
        terminated_early: false,
    })
}

#[derive(Debug, Clone)]
pub struct ArmijoSummary {
    pub alpha: f64,
    pub violations: usize,
    pub fraction_inside: f64,
    pub armijo_median_final: f64,
    pub rm_median_final: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Scalar-problem rows in the trajectory schema: `j_saa` is the expected
/// objective `u^2 + 1`, `grad_norm_sq` is `(2u)^2`, `t_n` is the step
/// taken and `sample_index` is 1 for `xi = +1`, 0 for `xi = -1`.
fn scalar_trajectory(steps: &[f64], us: &[f64], xis: &[f64]) -> Trajectory {
    let mut cum = 0.0;
    let mut min = f64::INFINITY;
    let records = steps
        .iter()
        .zip(us)
        .zip(xis)
        .enumerate()
        .map(|(i, ((&t, &u), &xi))| {
            cum += t;
            let g2 = 4.0 * u * u;
            min = min.min(g2);
            IterationRecord {
                iter: i + 1,
                step: t,
                j_saa: Some(u * u + 1.0),
                grad_norm_sq: Some(g2),
                min_grad_norm_sq: Some(min),
                cum_step_sum: cum,
                u_norm: u.abs(),
                sample_index: Some(usize::from(xi > 0.0)),
                wall_ms: 0.0,
            }
        })
        .collect();
    Trajectory {
        records,
        final_control: FeFunction::zeros(0),
        final_state: None,
        iterates: Vec::new(),
        terminated_early: false,
    }
}

fn coin(seed: u64) -> impl FnMut() -> f64 {
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Coin);
    move || if rng.random_bool(0.5) { 1.0 } else { -1.0 }
}

pub fn cmd_armijo(cfg: &ExperimentConfig) -> Result<ArmijoSummary> {
    let schedule = StepSchedule::new(cfg.rm_theta, cfg.s)?;
    let mut out = OutputSet::new();
    out.dir(&cfg.out)?;

    let report = armijo::simulate_armijo(&cfg.armijo, cfg.epsilon, cfg.u1, cfg.iters, cfg.seed)?;
    let (steps, us, xis): (Vec<f64>, Vec<f64>, Vec<f64>) = report.trajectory.iter().fold(
        (Vec::new(), Vec::new(), Vec::new()),
        |(mut a, mut b, mut c), &(t, u, xi)| {
            a.push(t);
            b.push(u);
            c.push(xi);
            (a, b, c)
        },
    );
    out.write(
        &cfg.out.join("armijo.csv"),
        &trajectory_csv(&scalar_trajectory(&steps, &us, &xis)),
    )?;

    let mut flip = coin(cfg.seed);
    let mut rm_xis = Vec::with_capacity(cfg.iters);
    let rm = armijo::simulate_rm_1d_with(&schedule, cfg.u1, cfg.iters, |_| {
        let xi = flip();
        rm_xis.push(xi);
        xi
    })?;
    let rm_steps: Vec<f64> = (1..=cfg.iters).map(|n| schedule.step(n)).collect();
    out.write(
        &cfg.out.join("rm.csv"),
        &trajectory_csv(&scalar_trajectory(&rm_steps, &rm[..cfg.iters], &rm_xis)),
    )?;

    let seeds = cfg.seed..cfg.seed + cfg.seeds as u64;
    let armijo_finals = seeds
        .clone()
        .map(|s| {
            armijo::simulate_armijo(&cfg.armijo, cfg.epsilon, cfg.u1, cfg.iters, s)
                .map(|r| r.final_u.abs())
        })
        .collect::<Result<Vec<_>>>()?;
    let rm_finals = seeds
        .map(|s| {
            armijo::simulate_rm_1d(&schedule, cfg.u1, cfg.iters, s)
                .map(|t| t.last().copied().unwrap_or(cfg.u1).abs())
        })
        .collect::<Result<Vec<_>>>()?;
    out.commit();
    Ok(ArmijoSummary {
        alpha: report.alpha,
        violations: report.violations,
        fraction_inside: report.fraction_inside,
        armijo_median_final: median(armijo_finals),
        rm_median_final: median(rm_finals),
    })
}

#[derive(Debug, Clone)]
pub struct DeterministicSummary {
    pub lambda: f64,
    pub trajectory: Trajectory,
    pub dir: PathBuf,
}

pub fn cmd_deterministic(cfg: &ExperimentConfig) -> Result<Vec<DeterministicSummary>> {
    let mut out = OutputSet::new();
    out.dir(&cfg.out)?;
    let mut summaries = Vec::new();
    for &lambda in &cfg.lambdas {
        let problem = cfg.problem(lambda)?;
        let mut rc = cfg.run_config(&problem, lambda)?;
        rc.stop_grad_norm_sq = Some(cfg.stop_grad_norm_sq);
        let trajectory = run_deterministic(&problem, &rc)?;
        let dir = lambda_dir(&cfg.out, "deterministic_", lambda);
        out.dir(&dir)?;
        out.write(&dir.join("trajectory.csv"), &trajectory_csv(&trajectory))?;
        let state = trajectory
            .final_state
            .clone()
            .unwrap_or_else(|| problem.zero_control());
        out.write(
            &dir.join("fields.csv"),
            &fields_csv(&problem, &trajectory.final_control, &state),
        )?;
        summaries.push(DeterministicSummary {
            lambda,
            trajectory,
            dir,
        });
    }
    out.commit();
    Ok(summaries)
}

/// Runs one command, printing a human-readable summary. Returns whether
/// the command's check (if any) passed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let cfg = ExperimentConfig::resolve(&cli.command, &cli.flags)?;
    match &cli.command {
        Command::Run => {
            for s in cmd_run(&cfg)? {
                println!(
                    "lambda={} iters={} min_grad_norm_sq={} rate={} max_u_norm={} dir={}",
                    s.lambda,
                    s.trajectory.records.len(),
                    fmt_opt(s.trajectory.last_min_grad_norm_sq()),
                    verdict_label(s.verdict.as_ref()),
                    fmt_f64(s.boundedness.max_u_norm),
                    s.dir.display()
                );
            }
            Ok(true)
        }
        Command::GradCheck { inject_sign_flip } => {
            let mut ok = true;
            for s in cmd_grad_check(&cfg, *inject_sign_flip)? {
                println!(
                    "lambda={} worst_rel_error={:e} {}",
                    s.lambda,
                    s.worst_rel_error,
                    if s.pass { "PASS" } else { "FAIL" }
                );
                ok &= s.pass;
            }
            Ok(ok)
        }
        Command::RateCheck { trajectory } => {
            let v = cmd_rate_check(trajectory)?;
            println!(
                "rate={} early_median={:e} late_median={:e}",
                if v.pass { "PASS" } else { "FAIL" },
                v.early_median,
                v.late_median
            );
            Ok(v.pass)
        }
        Command::ArmijoDemo => {
            let s = cmd_armijo(&cfg)?;
            println!(
                "alpha={} violations={} fraction_inside={} armijo_median_final_abs_u={} rm_median_final_abs_u={}",
                s.alpha, s.violations, s.fraction_inside, s.armijo_median_final, s.rm_median_final
            );
            Ok(s.violations == 0)
        }
        Command::Deterministic => {
            for s in cmd_deterministic(&cfg)? {
                let t = &s.trajectory;
                let min = fmt_opt(t.last_min_grad_norm_sq());
                if t.terminated_early {
                    println!(
                        "lambda={} terminated at iteration {} with min_grad_norm_sq={} <= {:e}",
                        s.lambda,
                        t.records.len(),
                        min,
                        cfg.stop_grad_norm_sq
                    );
                } else {
                    println!(
                        "lambda={} ran {} iterations, min_grad_norm_sq={}",
                        s.lambda,
                        t.records.len(),
                        min
                    );
                }
            }
            Ok(true)
        }
    }
}
