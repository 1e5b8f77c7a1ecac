//! Scalar counterexample: Armijo backtracking with single-sample gradients
//! on `J(u, xi) = (u + xi)^2`, `xi = +-1` with equal probability.
//!
//! The minimizer of `E J(u, xi)` is `u = 0`. For this objective the
//! sufficient-decrease condition holds exactly when `alpha <= 1 - c`, so
//! the backtracked step is the same `alpha` at every iteration, and any
//! iterate with `|u_n| < eps` is thrown out of the `eps`-ball by the next
//! step whenever `eps < alpha / (1 - alpha)` and `eps < 1` (the second
//! condition only binds for `alpha > 1/2`). Robbins–Monro steps converge
//! instead.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::optimizer::StepSchedule;
use crate::rng::{self, Stream};

/// Backtracking parameters: trial steps `beta * t^m`, decrease constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub beta: f64,
    pub t: f64,
    pub c: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            beta: 1.0,
            t: 0.5,
            c: 0.5,
        }
    }
}

impl ArmijoParams {
    pub fn new(beta: f64, t: f64, c: f64) -> Result<Self> {
        let p = ArmijoParams { beta, t, c };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite())
            || !(self.t > 0.0 && self.t < 1.0)
            || !(self.c > 0.0 && self.c < 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "Armijo parameters need beta > 0, t in (0,1), c in (0,1): {self:?}"
            )));
        }
        Ok(())
    }

    /// `(m, beta t^m)` for the smallest `m >= 0` with `beta t^m <= 1 - c`.
    pub fn accepted_step(&self) -> (u32, f64) {
        let mut m = 0;
        let mut alpha = self.beta;
        while alpha > 1.0 - self.c {
            alpha *= self.t;
            m += 1;
        }
        (m, alpha)
    }
}

/// Largest `eps` for which the escape property holds at step `alpha`:
/// `u_{n+1} = (1 - 2 alpha) u_n - 2 alpha xi`, so `|u_{n+1}| > eps` for all
/// `|u_n| < eps` iff `eps (1 + |1 - 2 alpha|) <= 2 alpha`.
pub fn escape_radius(alpha: f64) -> f64 {
    2.0 * alpha / (1.0 + (1.0 - 2.0 * alpha).abs())
}

pub fn objective(u: f64, xi: f64) -> f64 {
    (u + xi) * (u + xi)
}

pub fn gradient(u: f64, xi: f64) -> f64 {
    2.0 * (u + xi)
}

/// One Armijo step from `u` with sample `xi`; returns `(alpha, u_next)`.
pub fn armijo_step(u: f64, xi: f64, params: &ArmijoParams) -> (f64, f64) {
    let (_, alpha) = params.accepted_step();
    (alpha, u - alpha * gradient(u, xi))
}

/// Backtracking by testing the sufficient-decrease inequality
/// `J(u + a p) <= J(u) + c a J'(u) p` literally, with `p = -J'(u)`.
pub fn armijo_step_by_search(
    u: f64,
    xi: f64,
    params: &ArmijoParams,
    max_m: u32,
) -> Option<(u32, f64)> {
    let g = gradient(u, xi);
    let p = -g;
    let mut alpha = params.beta;
    for m in 0..=max_m {
        if objective(u + alpha * p, xi) <= objective(u, xi) + params.c * alpha * g * p {
            return Some((m, alpha));
        }
        alpha *= params.t;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeReport {
    pub alpha: f64,
    pub epsilon: f64,
    /// Iterations with `|u_n| < eps` and `|u_{n+1}| <= eps`.
    pub violations: usize,
    /// Fraction of iterates `u_1..u_n` inside the open `eps`-ball.
    pub fraction_inside: f64,
    pub final_u: f64,
    /// `(alpha_n, u_n, xi_n)` per iteration.
    pub trajectory: Vec<(f64, f64, f64)>,
}

/// Runs Armijo steps with fair coin samples and checks the escape
/// property on every iteration.
pub fn simulate_armijo(
    params: &ArmijoParams,
    epsilon: f64,
    u1: f64,
    n_iters: usize,
    seed: u64,
) -> Result<EscapeReport> {
    let mut coin = rng::stream(seed, Stream::Coin);
    simulate_armijo_with(params, epsilon, u1, n_iters, |_| {
        if coin.random_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    })
}

/// [`simulate_armijo`] with a caller-supplied sample sequence.
pub fn simulate_armijo_with(
    params: &ArmijoParams,
    epsilon: f64,
    u1: f64,
    n_iters: usize,
    mut xi: impl FnMut(usize) -> f64,
) -> Result<EscapeReport> {
    params.validate()?;
    let (_, alpha) = params.accepted_step();
    if !(epsilon > 0.0 && epsilon < escape_radius(alpha)) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < eps < min(alpha / (1 - alpha), 1); eps = {epsilon}, alpha = {alpha}"
        )));
    }
    let mut u = u1;
    let mut violations = 0;
    let mut inside = 0;
    let mut trajectory = Vec::with_capacity(n_iters);
    for n in 1..=n_iters {
        let x = xi(n);
        let (a, next) = armijo_step(u, x, params);
        trajectory.push((a, u, x));
        if u.abs() < epsilon {
            inside += 1;
            if next.abs() <= epsilon {
                violations += 1;
            }
        }
        u = next;
    }
    Ok(EscapeReport {
        alpha,
        epsilon,
        violations,
        fraction_inside: inside as f64 / n_iters.max(1) as f64,
        final_u: u,
        trajectory,
    })
}

/// Robbins–Monro iteration `u_{n+1} = u_n - t_n 2 (u_n + xi_n)` with fair
/// coin samples. Returns `u_1, ..., u_{n_iters + 1}`.
pub fn simulate_rm_1d(
    schedule: &StepSchedule,
    u1: f64,
    n_iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut coin = rng::stream(seed, Stream::Coin);
    simulate_rm_1d_with(schedule, u1, n_iters, |_| {
        if coin.random_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    })
}

pub fn simulate_rm_1d_with(
    schedule: &StepSchedule,
    u1: f64,
    n_iters: usize,
    mut xi: impl FnMut(usize) -> f64,
) -> Result<Vec<f64>> {
    if !schedule.rm_valid() {
        return Err(Error::InvalidParameter(format!(
            "step exponent {} outside (1/2, 1]",
            schedule.exponent
        )));
    }
    let mut u = u1;
    let mut out = Vec::with_capacity(n_iters + 1);
    out.push(u);
    for n in 1..=n_iters {
        u -= schedule.step(n) * gradient(u, xi(n));
        out.push(u);
    }
    Ok(out)
}
