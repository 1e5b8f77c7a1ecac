//! Objective and gradient oracles for
//!
//! ```text
//! J(u, xi) = 1/2 ||y_u(xi) - y_D||^2 + lambda/2 ||u||^2
//! G(u, xi) = lambda u - p(u, xi)
//! ```
//!
//! and their sample average approximations over a frozen sample set. All
//! inner products and norms are taken in L2(D) through the mass matrix, so
//! `G` is the L2 Riesz representative of the derivative.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{FeFunction, FemSpace};
use crate::pde::{PdeSolver, SolverTolerances};
use crate::rand_field::{KlSpec, RandomSample};
use crate::rng::{self, Rng, Stream};

/// Tracking target `60 + 160 (x1 (x1 - 1) + x2 (x2 - 1))`.
pub fn reference_target(x: [f64; 2]) -> f64 {
    60.0 + 160.0 * (x[0] * (x[0] - 1.0) + x[1] * (x[1] - 1.0))
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    solver: PdeSolver,
    y_target: FeFunction,
    lambda: f64,
    tolerances: SolverTolerances,
}

/// Everything one state + adjoint solve yields for a single sample.
#[derive(Debug, Clone)]
pub struct SampleEvaluation {
    pub objective: f64,
    pub gradient: FeFunction,
    pub state: FeFunction,
    pub newton_iters: usize,
    pub newton_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SaaEvaluation {
    pub objective: f64,
    pub gradient: FeFunction,
    pub newton_iters: usize,
}

impl ProblemSpec {
    pub fn new(
        solver: PdeSolver,
        y_target: FeFunction,
        lambda: f64,
        tolerances: SolverTolerances,
    ) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if y_target.len() != solver.space().dim() {
            return Err(Error::DimensionMismatch {
                expected: solver.space().dim(),
                got: y_target.len(),
            });
        }
        tolerances.validate()?;
        Ok(ProblemSpec {
            solver,
            y_target,
            lambda,
            tolerances,
        })
    }

    /// Reference setup: 20-term expansion with `l = 0.5`, `a0 = 1`, and the
    /// quadratic tracking target, on an `n_div x n_div` mesh.
    pub fn reference(n_div: usize, lambda: f64) -> Result<Self> {
        let space = Arc::new(FemSpace::with_divisions(n_div)?);
        let y_target = space.interpolate(reference_target);
        let solver = PdeSolver::new(space, KlSpec::reference())?;
        Self::new(solver, y_target, lambda, SolverTolerances::default())
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.solver.clone(),
            self.y_target.clone(),
            lambda,
            self.tolerances,
        )
    }

    pub fn with_target(&self, y_target: FeFunction) -> Result<Self> {
        Self::new(self.solver.clone(), y_target, self.lambda, self.tolerances)
    }

    pub fn with_tolerances(&self, tolerances: SolverTolerances) -> Result<Self> {
        Self::new(
            self.solver.clone(),
            self.y_target.clone(),
            self.lambda,
            tolerances,
        )
    }

    pub fn solver(&self) -> &PdeSolver {
        &self.solver
    }

    pub fn space(&self) -> &Arc<FemSpace> {
        self.solver.space()
    }

    pub fn kl(&self) -> &KlSpec {
        self.solver.kl()
    }

    pub fn y_target(&self) -> &FeFunction {
        &self.y_target
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tolerances(&self) -> &SolverTolerances {
        &self.tolerances
    }

    pub fn zero_control(&self) -> FeFunction {
        FeFunction::zeros(self.space().dim())
    }

    fn regularization(&self, u: &FeFunction) -> Result<f64> {
        Ok(0.5 * self.lambda * self.space().l2_inner(u, u)?)
    }

    fn tracking(&self, y: &FeFunction) -> Result<f64> {
        let misfit = y.sub(&self.y_target);
        Ok(0.5 * self.space().l2_inner(&misfit, &misfit)?)
    }

    /// One state solve, one adjoint solve. `guess` warm-starts Newton.
    pub fn evaluate(
        &self,
        u: &FeFunction,
        sample: &RandomSample,
        guess: Option<&FeFunction>,
        tol: &SolverTolerances,
    ) -> Result<SampleEvaluation> {
        let stiffness = self.solver.stiffness(sample)?;
        let report = self.solver.newton(&stiffness, u, tol, guess)?;
        if !report.converged {
            return Err(Error::NewtonDiverged {
                iters: report.newton_iters,
                residual: report.final_residual,
            });
        }
        let p = self
            .solver
            .solve_adjoint_with(&stiffness, &report.y, &self.y_target, tol)?;
        let mut gradient = u.scaled(self.lambda);
        gradient.axpy(-1.0, &p);
        Ok(SampleEvaluation {
            objective: self.tracking(&report.y)? + self.regularization(u)?,
            gradient,
            state: report.y,
            newton_iters: report.newton_iters,
            newton_residual: report.final_residual,
        })
    }

    pub fn objective_sample(&self, u: &FeFunction, sample: &RandomSample) -> Result<f64> {
        self.objective_sample_tol(u, sample, &self.tolerances)
    }

    pub fn objective_sample_tol(
        &self,
        u: &FeFunction,
        sample: &RandomSample,
        tol: &SolverTolerances,
    ) -> Result<f64> {
        let y = self.solver.solve_state(u, sample, tol)?.y;
        Ok(self.tracking(&y)? + self.regularization(u)?)
    }

    pub fn stochastic_gradient(&self, u: &FeFunction, sample: &RandomSample) -> Result<FeFunction> {
        Ok(self.evaluate(u, sample, None, &self.tolerances)?.gradient)
    }

    pub fn saa_objective(&self, u: &FeFunction, saa: &SaaSet) -> Result<f64> {
        let values: Vec<Result<f64>> = saa
            .samples
            .par_iter()
            .map(|s| self.objective_sample(u, s))
            .collect();
        let mut sum = 0.0;
        for (i, v) in values.into_iter().enumerate() {
            sum += v.map_err(|e| e.at_sample(i))?;
        }
        Ok(sum / saa.len() as f64)
    }

    pub fn saa_gradient(&self, u: &FeFunction, saa: &SaaSet) -> Result<FeFunction> {
        Ok(self.saa_evaluate(u, saa, None, &self.tolerances)?.gradient)
    }

    /// Mean objective and gradient over `saa`. Samples are solved in
    /// parallel; the reduction runs in sample order, so the result does not
    /// depend on scheduling. With a cache, each sample's Newton solve starts
    /// from its previous state and the cache is refreshed.
    pub fn saa_evaluate(
        &self,
        u: &FeFunction,
        saa: &SaaSet,
        cache: Option<&mut StateCache>,
        tol: &SolverTolerances,
    ) -> Result<SaaEvaluation> {
        let results: Vec<Result<SampleEvaluation>> = match cache {
            Some(cache) => {
                if cache.states.len() != saa.len() {
                    return Err(Error::DimensionMismatch {
                        expected: saa.len(),
                        got: cache.states.len(),
                    });
                }
                saa.samples
                    .par_iter()
                    .zip(cache.states.par_iter_mut())
                    .map(|(s, slot)| {
                        let e = self.evaluate(u, s, slot.as_ref(), tol)?;
                        *slot = Some(e.state.clone());
                        Ok(e)
                    })
                    .collect()
            }
            None => saa
                .samples
                .par_iter()
                .map(|s| self.evaluate(u, s, None, tol))
                .collect(),
        };

        let mut objective = 0.0;
        let mut gradient = FeFunction::zeros(u.len());
        let mut newton_iters = 0;
        for (i, r) in results.into_iter().enumerate() {
            let e = r.map_err(|e| e.at_sample(i))?;
            objective += e.objective;
            gradient.axpy(1.0, &e.gradient);
            newton_iters += e.newton_iters;
        }
        let scale = 1.0 / saa.len() as f64;
        Ok(SaaEvaluation {
            objective: objective * scale,
            gradient: gradient.scaled(scale),
            newton_iters,
        })
    }

    /// `||g||_L2`.
    pub fn grad_norm(&self, g: &FeFunction) -> Result<f64> {
        self.space().l2_norm(g)
    }
}

/// Frozen, ordered list of coefficient samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaSet {
    samples: Vec<RandomSample>,
}

impl SaaSet {
    pub fn new(samples: Vec<RandomSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("SAA set must be non-empty".into()));
        }
        Ok(SaaSet { samples })
    }

    /// Draws `n` samples one after the other from the field stream of `seed`.
    pub fn draw(kl: &KlSpec, n: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Stream::Field);
        Self::new((0..n as u64).map(|i| kl.draw_sample(&mut rng, i)).collect())
    }

    pub fn samples(&self) -> &[RandomSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn concat(&self, other: &SaaSet) -> SaaSet {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        SaaSet { samples }
    }
}

/// Last computed state per SAA sample, used as Newton warm starts.
#[derive(Debug, Clone)]
pub struct StateCache {
    states: Vec<Option<FeFunction>>,
}

impl StateCache {
    pub fn new(n: usize) -> Self {
        StateCache {
            states: vec![None; n],
        }
    }

    pub fn get(&self, i: usize) -> Option<&FeFunction> {
        self.states.get(i).and_then(Option::as_ref)
    }

    pub fn set(&mut self, i: usize, state: FeFunction) {
        self.states[i] = Some(state);
    }
}

/// Nodal values drawn uniformly from `[lo, hi)`.
pub fn random_function(space: &FemSpace, rng: &mut Rng, lo: f64, hi: f64) -> FeFunction {
    FeFunction::from_values((0..space.dim()).map(|_| rng.random_range(lo..hi)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckEntry {
    pub control: usize,
    pub sample: usize,
    pub direction: usize,
    /// `(G, d)_L2` from the adjoint gradient.
    pub adjoint: f64,
    /// Central difference of the objective along `d`.
    pub finite_difference: f64,
    /// `|adjoint - fd| / max(1, |fd|)`.
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub worst_rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub n_controls: usize,
    pub n_samples: usize,
    pub n_directions: usize,
    pub fd_step: f64,
    pub newton_tol: f64,
    pub seed: u64,
    /// Mutation hook: negate the adjoint gradient before comparing.
    pub flip_sign: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            n_controls: 5,
            n_samples: 3,
            n_directions: 5,
            fd_step: 1e-4,
            newton_tol: 1e-12,
            seed: 10,
            flip_sign: false,
        }
    }
}

/// Compares adjoint directional derivatives with central differences of
/// the per-sample objective at random controls, samples and directions.
pub fn gradient_check(problem: &ProblemSpec, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let space = problem.space();
    let tol = problem.tolerances().with_newton_tol(cfg.newton_tol);
    let mut rng = rng::stream(cfg.seed, Stream::Probe);
    let controls: Vec<FeFunction> = (0..cfg.n_controls)
        .map(|_| random_function(space, &mut rng, -5.0, 5.0))
        .collect();
    let samples: Vec<RandomSample> = (0..cfg.n_samples as u64)
        .map(|i| problem.kl().draw_sample(&mut rng, i))
        .collect();
    let directions: Vec<FeFunction> = (0..cfg.n_directions)
        .map(|_| random_function(space, &mut rng, -1.0, 1.0))
        .collect();

    let mut jobs = Vec::new();
    for c in 0..controls.len() {
        for s in 0..samples.len() {
            jobs.push((c, s));
        }
    }
    let per_job: Vec<Result<Vec<GradCheckEntry>>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let u = &controls[c];
            let sample = &samples[s];
            let mut g = problem.evaluate(u, sample, None, &tol)?.gradient;
            if cfg.flip_sign {
                g = g.scaled(-1.0);
            }
            directions
                .iter()
                .enumerate()
                .map(|(d, dir)| {
                    let adjoint = space.l2_inner(&g, dir)?;
                    let mut up = u.clone();
                    up.axpy(cfg.fd_step, dir);
                    let mut um = u.clone();
                    um.axpy(-cfg.fd_step, dir);
                    let fd = (problem.objective_sample_tol(&up, sample, &tol)?
                        - problem.objective_sample_tol(&um, sample, &tol)?)
                        / (2.0 * cfg.fd_step);
                    Ok(GradCheckEntry {
                        control: c,
                        sample: s,
                        direction: d,
                        adjoint,
                        finite_difference: fd,
                        rel_error: (adjoint - fd).abs() / fd.abs().max(1.0),
                    })
                })
                .collect()
        })
        .collect();
    let mut entries = Vec::new();
    for r in per_job {
        entries.extend(r?);
    }
    let worst_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        worst_rel_error,
    })
}
