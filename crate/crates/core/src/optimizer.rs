//! Stochastic gradient method with Robbins–Monro steps `t_n = theta / n^s`.
//!
//! [`run_sgd`] performs `u_{n+1} = u_n - t_n G(u_n, xi_n)` with `xi_n` drawn
//! from a frozen SAA set. On cadence iterations the full SAA objective and
//! gradient are evaluated as well; their running minimum feeds the rate
//! check, which tests `min_{k<=n} ||grad j(u_k)||^2 = o(1 / sum_{k<=n} t_k)`.

use std::time::Instant;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mesh::FeFunction;
use crate::oracle::{ProblemSpec, SaaSet, StateCache};
use crate::rand_field::RandomSample;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub theta: f64,
    pub exponent: f64,
}

impl StepSchedule {
    pub fn new(theta: f64, exponent: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta must be positive, got {theta}"
            )));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step exponent must be positive, got {exponent}"
            )));
        }
        Ok(StepSchedule { theta, exponent })
    }

    /// `t_n` for `n >= 1`.
    pub fn step(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        self.theta / (n as f64).powf(self.exponent)
    }

    /// `sum t_n = inf` and `sum t_n^2 < inf`, i.e. `1/2 < s <= 1`.
    pub fn rm_valid(&self) -> bool {
        self.exponent > 0.5 && self.exponent <= 1.0
    }

    /// `sum_j t_j / sum_{k<=j} t_k = inf`, which holds iff `s <= 1`.
    pub fn rate_condition_valid(&self) -> bool {
        self.exponent <= 1.0
    }
}

/// Partial sums of a step sequence up to a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub horizon: usize,
    pub sum_steps: f64,
    pub sum_sq_steps: f64,
    /// `sum_{j<=horizon} t_j / sum_{k<=j} t_k`.
    pub rate_sum: f64,
    /// Analytic flags; `None` for custom sequences.
    pub rm_valid: Option<bool>,
    pub rate_condition: Option<bool>,
}

/// Numeric partial sums for an arbitrary positive step sequence.
pub fn partial_sums(steps: impl Fn(usize) -> f64, horizon: usize) -> Result<ScheduleReport> {
    if horizon < 10 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be >= 10, got {horizon}"
        )));
    }
    let (mut sum, mut sum_sq, mut rate_sum) = (0.0, 0.0, 0.0);
    for n in 1..=horizon {
        let t = steps(n);
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step t_{n} = {t} not positive"
            )));
        }
        sum += t;
        sum_sq += t * t;
        rate_sum += t / sum;
    }
    Ok(ScheduleReport {
        horizon,
        sum_steps: sum,
        sum_sq_steps: sum_sq,
        rate_sum,
        rm_valid: None,
        rate_condition: None,
    })
}

pub fn validate_schedule(schedule: &StepSchedule, horizon: usize) -> Result<ScheduleReport> {
    let schedule = StepSchedule::new(schedule.theta, schedule.exponent)?;
    let mut report = partial_sums(|n| schedule.step(n), horizon)?;
    report.rm_valid = Some(schedule.rm_valid());
    report.rate_condition = Some(schedule.rate_condition_valid());
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Uniform indices into the SAA set, with replacement.
    SaaWithReplacement,
    /// A fresh coefficient sample every iteration.
    Streaming,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub schedule: StepSchedule,
    pub n_iters: usize,
    pub initial_control: FeFunction,
    /// Evaluate the full SAA gradient every `cadence` iterations.
    pub cadence: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// Warm-start Newton from the last state computed for the same sample.
    pub warm_start: bool,
    /// Keep every iterate `u_n` in the trajectory.
    pub keep_iterates: bool,
    /// Inner Newton tolerance `tol0 / n^2` at iteration `n` instead of the
    /// problem's fixed tolerance.
    pub bias_schedule: Option<f64>,
    /// Stop once the running minimum of the squared SAA gradient norm falls
    /// to this value.
    pub stop_grad_norm_sq: Option<f64>,
}

impl RunConfig {
    pub fn new(
        schedule: StepSchedule,
        n_iters: usize,
        initial_control: FeFunction,
        seed: u64,
    ) -> Self {
        RunConfig {
            schedule,
            n_iters,
            initial_control,
            cadence: 1,
            seed,
            sampling: Sampling::SaaWithReplacement,
            warm_start: true,
            keep_iterates: false,
            bias_schedule: None,
            stop_grad_norm_sq: None,
        }
    }

    fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        if !self.schedule.rm_valid() {
            return Err(Error::InvalidParameter(format!(
                "step exponent {} outside (1/2, 1]",
                self.schedule.exponent
            )));
        }
        if self.n_iters == 0 || self.cadence == 0 {
            return Err(Error::InvalidParameter(
                "n_iters and cadence must be >= 1".into(),
            ));
        }
        if self.initial_control.len() != problem.space().dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.space().dim(),
                got: self.initial_control.len(),
            });
        }
        Ok(())
    }
}

/// State of iteration `n`, recorded before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub step: f64,
    /// `j_N(u_n)`, on cadence iterations only.
    pub j_saa: Option<f64>,
    /// `||grad j_N(u_n)||^2`, on cadence iterations only.
    pub grad_norm_sq: Option<f64>,
    pub min_grad_norm_sq: Option<f64>,
    pub cum_step_sum: f64,
    pub u_norm: f64,
    pub sample_index: Option<usize>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub final_control: FeFunction,
    /// State of the final control for the last sample drawn.
    pub final_state: Option<FeFunction>,
    /// `u_1, ..., u_n` when requested.
    pub iterates: Vec<FeFunction>,
    pub terminated_early: bool,
}

impl Trajectory {
    pub fn min_grad_norm_sq_at(&self, iter: usize) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.iter <= iter)
            .filter_map(|r| r.min_grad_norm_sq)
            .last()
    }

    pub fn last_min_grad_norm_sq(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.min_grad_norm_sq)
    }
}

fn finite(v: f64, what: &'static str, iter: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what, iter })
    }
}

pub fn run_sgd(problem: &ProblemSpec, saa: &SaaSet, config: &RunConfig) -> Result<Trajectory> {
    config.validate(problem)?;
    let mut index_rng = rng::stream(config.seed, Stream::Index);
    let mut stream_rng = rng::stream(config.seed, Stream::Streaming);
    let mut cache = config.warm_start.then(|| StateCache::new(saa.len()));

    let start = Instant::now();
    let mut u = config.initial_control.clone();
    let mut records = Vec::with_capacity(config.n_iters);
    let mut iterates = Vec::new();
    let mut cum = 0.0;
    let mut running_min: Option<f64> = None;
    let mut last_sample: Option<(Option<usize>, RandomSample)> = None;
    let mut terminated_early = false;

    for n in 1..=config.n_iters {
        let tol = iteration_tolerances(problem, config, n);
        let t_n = config.schedule.step(n);
        cum += t_n;

        let (j_saa, grad_norm_sq) = if (n - 1) % config.cadence == 0 {
            let full = problem
                .saa_evaluate(&u, saa, cache.as_mut(), &tol)
                .map_err(|e| e.at_iteration(n))?;
            let g2 = problem.grad_norm(&full.gradient)?.powi(2);
            (
                Some(finite(full.objective, "j_saa", n)?),
                Some(finite(g2, "grad_norm_sq", n)?),
            )
        } else {
            (None, None)
        };
        if let Some(g2) = grad_norm_sq {
            running_min = Some(running_min.map_or(g2, |m: f64| m.min(g2)));
        }

        let (index, sample) = match config.sampling {
            Sampling::SaaWithReplacement => {
                let i = index_rng.random_range(0..saa.len());
                (Some(i), saa.samples()[i].clone())
            }
            Sampling::Streaming => (None, problem.kl().draw_sample(&mut stream_rng, n as u64)),
        };
        let guess = match (&cache, index) {
            (Some(c), Some(i)) => c.get(i).cloned(),
            _ => None,
        };
        let eval = problem
            .evaluate(&u, &sample, guess.as_ref(), &tol)
            .map_err(|e| e.at_iteration(n))?;
        if !eval.gradient.is_finite() {
            return Err(Error::NonFinite {
                what: "stochastic gradient",
                iter: n,
            });
        }
        if let (Some(c), Some(i)) = (cache.as_mut(), index) {
            c.set(i, eval.state.clone());
        }

        records.push(IterationRecord {
            iter: n,
            step: t_n,
            j_saa,
            grad_norm_sq,
            min_grad_norm_sq: running_min,
            cum_step_sum: cum,
            u_norm: finite(problem.grad_norm(&u)?, "u_norm", n)?,
            sample_index: index,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if config.keep_iterates {
            iterates.push(u.clone());
        }
        last_sample = Some((index, sample));

        if matches!((running_min, config.stop_grad_norm_sq), (Some(m), Some(stop)) if m <= stop) {
            terminated_early = true;
            break;
        }
        u.axpy(-t_n, &eval.gradient);
    }

    let final_state = match last_sample {
        Some((index, sample)) => {
            let guess = match (&cache, index) {
                (Some(c), Some(i)) => c.get(i).cloned(),
                _ => None,
            };
            Some(
                problem
                    .solver()
                    .solve_state_from(&u, &sample, problem.tolerances(), guess.as_ref())?
                    .y,
            )
        }
        None => None,
    };
    Ok(Trajectory {
        records,
        final_control: u,
        final_state,
        iterates,
        terminated_early,
    })
}

fn iteration_tolerances(
    problem: &ProblemSpec,
    config: &RunConfig,
    n: usize,
) -> crate::pde::SolverTolerances {
    let base = *problem.tolerances();
    match config.bias_schedule {
        // Clamped so the inner solve stays above round-off.
        Some(tol0) => base.with_newton_tol((tol0 / (n * n) as f64).max(1e-13)),
        None => base,
    }
}

/// Plain gradient descent on the problem with the mean coefficient
/// `a = a0`, stopping once `min ||grad j||^2 <= stop_grad_norm_sq`
/// (default `1e-8`).
pub fn run_deterministic(problem: &ProblemSpec, config: &RunConfig) -> Result<Trajectory> {
    config.validate(problem)?;
    let stop = config.stop_grad_norm_sq.unwrap_or(1e-8);
    let sample = problem.kl().mean_sample();

    let start = Instant::now();
    let mut u = config.initial_control.clone();
    let mut state: Option<FeFunction> = None;
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    let mut cum = 0.0;
    let mut running_min = f64::INFINITY;
    let mut terminated_early = false;

    for n in 1..=config.n_iters {
        let tol = iteration_tolerances(problem, config, n);
        let t_n = config.schedule.step(n);
        cum += t_n;
        let guess = if config.warm_start {
            state.as_ref()
        } else {
            None
        };
        let eval = problem
            .evaluate(&u, &sample, guess, &tol)
            .map_err(|e| e.at_iteration(n))?;
        let g2 = finite(
            problem.grad_norm(&eval.gradient)?.powi(2),
            "grad_norm_sq",
            n,
        )?;
        running_min = running_min.min(g2);
        records.push(IterationRecord {
            iter: n,
            step: t_n,
            j_saa: Some(finite(eval.objective, "j_saa", n)?),
            grad_norm_sq: Some(g2),
            min_grad_norm_sq: Some(running_min),
            cum_step_sum: cum,
            u_norm: finite(problem.grad_norm(&u)?, "u_norm", n)?,
            sample_index: Some(0),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if config.keep_iterates {
            iterates.push(u.clone());
        }
        state = Some(eval.state);
        if running_min <= stop {
            terminated_early = true;
            break;
        }
        u.axpy(-t_n, &eval.gradient);
    }

    let final_state = problem
        .solver()
        .solve_state_from(&u, &sample, problem.tolerances(), state.as_ref())?
        .y;
    Ok(Trajectory {
        records,
        final_control: u,
        final_state: Some(final_state),
        iterates,
        terminated_early,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateVerdict {
    pub pass: bool,
    /// Median of `P_n` over records 5%–15%.
    pub early_median: f64,
    /// Median of `P_n` over the last 10% of records.
    pub late_median: f64,
    /// `(n, P_n)` with `P_n = min_{k<=n} ||grad j_N(u_k)||^2 * sum_{k<=n} t_k`.
    pub series: Vec<(usize, f64)>,
}

pub const RATE_MIN_RECORDS: usize = 20;

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Finite-horizon check of `min ||grad j||^2 = o(1 / sum t)`: passes when
/// the late windowed median of `P_n` is at most half the early one.
pub fn rate_check(trajectory: &Trajectory) -> Result<RateVerdict> {
    let series: Vec<(usize, f64)> = trajectory
        .records
        .iter()
        .filter_map(|r| {
            r.min_grad_norm_sq
                .filter(|_| r.grad_norm_sq.is_some())
                .map(|m| (r.iter, m * r.cum_step_sum))
        })
        .collect();
    let m = series.len();
    if m < RATE_MIN_RECORDS {
        return Err(Error::InsufficientRecords {
            needed: RATE_MIN_RECORDS,
            got: m,
        });
    }
    let p: Vec<f64> = series.iter().map(|s| s.1).collect();
    let early = &p[m * 5 / 100..(m * 15).div_ceil(100)];
    let late = &p[m * 90 / 100..];
    let early_median = median(early);
    let late_median = median(late);
    Ok(RateVerdict {
        pass: late_median <= 0.5 * early_median,
        early_median,
        late_median,
        series,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    pub max_u_norm: f64,
    /// Max norm over the second half of the run exceeds twice the max over
    /// the first half.
    pub growth_detected: bool,
    pub gamma_probe: f64,
    /// `(grad j_N(v), v)_L2` at rescaled iterates with `||v||^2 = gamma_probe`.
    pub angle_inner_products: Vec<f64>,
    pub min_inner_product: Option<f64>,
}

/// Reports the size of the iterates and probes the angle condition
/// `inf_{||u||^2 >= gamma} (grad j(u), u) >= 0` on rescaled iterates.
/// Purely diagnostic.
pub fn boundedness_monitor(
    trajectory: &Trajectory,
    problem: &ProblemSpec,
    saa: &SaaSet,
    probe_count: usize,
    gamma_probe: Option<f64>,
) -> Result<BoundednessReport> {
    let norms: Vec<f64> = trajectory.records.iter().map(|r| r.u_norm).collect();
    let max_u_norm = norms.iter().copied().fold(0.0, f64::max);
    let half = norms.len() / 2;
    let first = norms[..half].iter().copied().fold(0.0, f64::max);
    let second = norms[half..].iter().copied().fold(0.0, f64::max);
    let growth_detected = half > 0 && second > 2.0 * first;
    let gamma = gamma_probe.unwrap_or(4.0 * max_u_norm * max_u_norm);

    let candidates: Vec<&FeFunction> = if trajectory.iterates.is_empty() {
        vec![&trajectory.final_control]
    } else {
        trajectory.iterates.iter().collect()
    };
    let mut angle_inner_products = Vec::new();
    if gamma > 0.0 && probe_count > 0 {
        let picks = probe_count.min(candidates.len());
        for k in 0..picks {
            let v = candidates[k * (candidates.len() - 1) / (picks.max(2) - 1).max(1)];
            let norm = problem.grad_norm(v)?;
            if norm == 0.0 {
                continue;
            }
            let probe = v.scaled(gamma.sqrt() / norm);
            let g = problem.saa_gradient(&probe, saa)?;
            angle_inner_products.push(problem.space().l2_inner(&g, &probe)?);
        }
    }
    let min_inner_product = angle_inner_products.iter().copied().reduce(f64::min);
    Ok(BoundednessReport {
        max_u_norm,
        growth_detected,
        gamma_probe: gamma,
        angle_inner_products,
        min_inner_product,
    })
}
