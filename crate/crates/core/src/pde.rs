//! Damped Newton solver for the semilinear state equation
//!
//! ```text
//! -div(a(x, xi) grad y) + y + N(y) = u   in D,   da/dn = 0 on dD,
//! ```
//!
//! and the adjoint equation `(A(a) + M + N'(y)) p = -M (y - y_target)`.
//!
//! The discrete residual is `R(y) = A(a) y + M y + n(y) - M u` where `n(y)`
//! integrates `N(y) phi_a` with the edge-midpoint rule. Its Jacobian, which
//! is also the adjoint operator, is `A(a) + M + W(N'(y))`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, SparseOperator};
use crate::mesh::{FeFunction, FemSpace, Nonlinearity, Quintic};
use crate::rand_field::{KlSpec, RandomSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    /// Newton stops once `||R(y)||_{M^-1} <= newton_tol * max(1, ||u||_L2)`.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Relative residual accepted from each linear solve.
    pub linear_tol: f64,
    /// Backtracking factor applied to rejected Newton steps.
    pub shrink: f64,
    /// Smallest damping factor tried before the line search gives up.
    pub min_step: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            newton_tol: 1e-10,
            newton_max_iters: 100,
            linear_tol: 1e-12,
            shrink: 0.5,
            min_step: 2f64.powi(-20),
        }
    }
}

impl SolverTolerances {
    pub fn with_newton_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.newton_tol, self.linear_tol, self.min_step]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.newton_max_iters == 0 || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid solver tolerances {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSolveReport {
    pub y: FeFunction,
    pub newton_iters: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Residual norm after every accepted step, starting with the initial
    /// guess.
    pub residual_history: Vec<f64>,
}

/// Outcome of one a priori estimate check: `lhs <= rhs * slack`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, slack: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            satisfied: lhs <= rhs * slack,
        }
    }
}

/// State and adjoint solver for one mesh and one coefficient expansion.
#[derive(Clone)]
pub struct PdeSolver {
    space: Arc<FemSpace>,
    kl: KlSpec,
    // sqrt(eta_i) phi_i at every triangle centroid, row per triangle.
    centroid_modes: Vec<Vec<f64>>,
    nonlinearity: Arc<dyn Nonlinearity>,
    coercivity: f64,
}

impl std::fmt::Debug for PdeSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeSolver")
            .field("nodes", &self.space.dim())
            .field("kl_terms", &self.kl.n_terms())
            .field("coercivity", &self.coercivity)
            .finish()
    }
}

impl PdeSolver {
    pub fn new(space: Arc<FemSpace>, kl: KlSpec) -> Result<Self> {
        let coercivity = kl.tight_lower_bound()?;
        let mesh = space.mesh();
        let centroid_modes = (0..mesh.triangle_count())
            .map(|t| kl.scaled_modes_at(mesh.centroid(t)))
            .collect();
        Ok(PdeSolver {
            space,
            kl,
            centroid_modes,
            nonlinearity: Arc::new(Quintic),
            coercivity,
        })
    }

    pub fn space(&self) -> &Arc<FemSpace> {
        &self.space
    }

    pub fn kl(&self) -> &KlSpec {
        &self.kl
    }

    /// Uniform lower bound of the coefficient used by the estimate checks.
    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    pub fn coefficient_at_centroids(&self, sample: &RandomSample) -> Vec<f64> {
        self.centroid_modes
            .iter()
            .map(|modes| {
                self.kl.a0
                    + modes
                        .iter()
                        .zip(&sample.xi)
                        .map(|(m, xi)| m * xi)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Diffusion stiffness `A(a(., xi))`.
    pub fn stiffness(&self, sample: &RandomSample) -> Result<SparseOperator> {
        if sample.xi.len() != self.kl.n_terms() {
            return Err(Error::DimensionMismatch {
                expected: self.kl.n_terms(),
                got: sample.xi.len(),
            });
        }
        self.space
            .assemble_stiffness_centroid(&self.coefficient_at_centroids(sample))
    }

    /// `R(y) = A y + M y + n(y) - M u`.
    pub fn residual(&self, stiffness: &SparseOperator, y: &FeFunction, u: &FeFunction) -> Vec<f64> {
        let mut r = stiffness.matvec(y.values());
        let my = self.space.mass_apply(y);
        let mu = self.space.mass_apply(u);
        let ny = self.space.nonlinear_load(y, self.nonlinearity.as_ref());
        for (i, ri) in r.iter_mut().enumerate() {
            *ri += my[i] + ny[i] - mu[i];
        }
        r
    }

    /// `A + M + W(N'(y))`, the state Jacobian and the adjoint operator.
    pub fn jacobian(&self, stiffness: &SparseOperator, y: &FeFunction) -> SparseOperator {
        stiffness.add_scaled(self.space.mass(), 1.0).add_scaled(
            &self.space.weighted_mass(y, self.nonlinearity.as_ref()),
            1.0,
        )
    }

    fn check_len(&self, v: &FeFunction) -> Result<()> {
        if v.len() != self.space.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn solve_state(
        &self,
        u: &FeFunction,
        sample: &RandomSample,
        tol: &SolverTolerances,
    ) -> Result<StateSolveReport> {
        self.solve_state_from(u, sample, tol, None)
    }

    /// Like [`Self::solve_state`], starting Newton from `guess` (zero when
    /// `None`).
    pub fn solve_state_from(
        &self,
        u: &FeFunction,
        sample: &RandomSample,
        tol: &SolverTolerances,
        guess: Option<&FeFunction>,
    ) -> Result<StateSolveReport> {
        let stiffness = self.stiffness(sample)?;
        let report = self.newton(&stiffness, u, tol, guess)?;
        if !report.converged {
            return Err(Error::NewtonDiverged {
                iters: report.newton_iters,
                residual: report.final_residual,
            });
        }
        Ok(report)
    }

    /// Damped Newton iteration. Non-convergence within the iteration cap is
    /// returned with `converged == false`; a stalled line search is an error.
    pub fn newton(
        &self,
        stiffness: &SparseOperator,
        u: &FeFunction,
        tol: &SolverTolerances,
        guess: Option<&FeFunction>,
    ) -> Result<StateSolveReport> {
        self.check_len(u)?;
        if let Some(g) = guess {
            self.check_len(g)?;
        }
        let space = &self.space;
        let target = tol.newton_tol * space.l2_norm(u)?.max(1.0);

        let mut y = guess
            .cloned()
            .unwrap_or_else(|| FeFunction::zeros(space.dim()));
        let mut r = self.residual(stiffness, &y, u);
        let mut r_norm = space.dual_norm(&r);
        let mut history = vec![r_norm];

        let mut iters = 0;
        while r_norm > target && iters < tol.newton_max_iters {
            iters += 1;
            let jac = self.jacobian(stiffness, &y);
            let factor = BandCholesky::factor(&jac)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta =
                FeFunction::from_values(factor.solve_refined(&jac, &rhs, tol.linear_tol)?);

            let mut step = 1.0;
            loop {
                let mut trial = y.clone();
                trial.axpy(step, &delta);
                let r_trial = self.residual(stiffness, &trial, u);
                let n_trial = space.dual_norm(&r_trial);
                if n_trial < r_norm {
                    y = trial;
                    r = r_trial;
                    r_norm = n_trial;
                    break;
                }
                step *= tol.shrink;
                if step < tol.min_step {
                    return Err(Error::LineSearchStalled {
                        iter: iters,
                        residual: r_norm,
                    });
                }
            }
            history.push(r_norm);
        }
        Ok(StateSolveReport {
            y,
            newton_iters: iters,
            final_residual: r_norm,
            converged: r_norm <= target,
            residual_history: history,
        })
    }

    pub fn solve_adjoint(
        &self,
        y: &FeFunction,
        sample: &RandomSample,
        y_target: &FeFunction,
        tol: &SolverTolerances,
    ) -> Result<FeFunction> {
        let stiffness = self.stiffness(sample)?;
        self.solve_adjoint_with(&stiffness, y, y_target, tol)
    }

    pub fn solve_adjoint_with(
        &self,
        stiffness: &SparseOperator,
        y: &FeFunction,
        y_target: &FeFunction,
        tol: &SolverTolerances,
    ) -> Result<FeFunction> {
        self.check_len(y)?;
        self.check_len(y_target)?;
        let jac = self.jacobian(stiffness, y);
        let factor = BandCholesky::factor(&jac)?;
        let rhs: Vec<f64> = self
            .space
            .mass_apply(&y.sub(y_target))
            .into_iter()
            .map(|v| -v)
            .collect();
        Ok(FeFunction::from_values(factor.solve_refined(
            &jac,
            &rhs,
            tol.linear_tol,
        )?))
    }

    /// Energy estimate `C ||y||_H1 <= ||u||_L2` with `C = min(C_tight, 1)`.
    pub fn check_energy_bound(
        &self,
        y: &FeFunction,
        u: &FeFunction,
        slack: f64,
    ) -> Result<BoundCheck> {
        let c = self.coercivity.min(1.0);
        Ok(BoundCheck::new(
            c * self.space.h1_norm(y)?,
            self.space.l2_norm(u)?,
            slack,
        ))
    }

    /// Lipschitz estimate `||y1 - y2||_H1 <= C^-1 ||u1 - u2||_L2`.
    pub fn check_state_lipschitz(
        &self,
        y1: &FeFunction,
        y2: &FeFunction,
        u1: &FeFunction,
        u2: &FeFunction,
        slack: f64,
    ) -> Result<BoundCheck> {
        let c = self.coercivity.min(1.0);
        Ok(BoundCheck::new(
            self.space.h1_norm(&y1.sub(y2))?,
            self.space.l2_norm(&u1.sub(u2))? / c,
            slack,
        ))
    }

    /// Empirical `||y||_inf / ||u||_L2`, the constant of the L-infinity
    /// state bound. `None` for `u = 0`.
    pub fn linf_ratio(&self, y: &FeFunction, u: &FeFunction) -> Result<Option<f64>> {
        let un = self.space.l2_norm(u)?;
        Ok((un > 0.0).then(|| y.linf_norm() / un))
    }
}

/// Root of `c + c^5 = rhs` by bisection, for constant-state checks.
pub fn constant_state(rhs: f64) -> f64 {
    let (mut lo, mut hi) = (-rhs.abs().max(1.0), rhs.abs().max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + mid.powi(5) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
