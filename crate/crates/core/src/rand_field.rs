//! Truncated Karhunen–Loève expansion of the diffusion coefficient
//!
//! ```text
//! a(x, xi) = a0 + sum_i sqrt(eta_i) phi_i(x) xi_i,   xi_i ~ U[-1, 1]
//! phi_{j,k}(x) = 2 cos(j pi x2) cos(k pi x1)
//! eta_{j,k}    = 1/4 exp(-pi (j^2 + k^2) l^2)
//! ```
//!
//! with the eigenpairs reordered by descending eigenvalue.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One retained term of the expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair {
    pub eigenvalue: f64,
    /// Frequency along `x2`.
    pub j: u32,
    /// Frequency along `x1`.
    pub k: u32,
}

impl Eigenpair {
    pub fn eigenfunction(&self, x: [f64; 2]) -> f64 {
        2.0 * (self.j as f64 * PI * x[1]).cos() * (self.k as f64 * PI * x[0]).cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlSpec {
    pub a0: f64,
    pub correlation_length: f64,
    eigenpairs: Vec<Eigenpair>,
    sqrt_eigenvalues: Vec<f64>,
}

/// Lower bounds for `a(x, xi)` over all admissible samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityBounds {
    /// `a0 - sum exp(-pi (j^2+k^2) l^2)`, the commonly quoted constant.
    /// Not a valid bound in general; reported only.
    pub quoted: f64,
    /// `a0 - sum 2 sqrt(eta_i)`, attained at the corner `x = (0, 0)`.
    pub tight: f64,
}

impl EllipticityBounds {
    /// The bound used by every diagnostic.
    pub fn value(&self) -> f64 {
        self.tight.min(self.quoted)
    }
}

fn eigenvalue(j: u32, k: u32, l: f64) -> f64 {
    0.25 * (-PI * f64::from(j * j + k * k) * l * l).exp()
}

impl KlSpec {
    pub fn new(n_terms: usize, correlation_length: f64, a0: f64) -> Result<Self> {
        if n_terms == 0 {
            return Err(Error::InvalidParameter("n_terms must be >= 1".into()));
        }
        if !(correlation_length > 0.0 && correlation_length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "correlation length must be positive, got {correlation_length}"
            )));
        }
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "a0 must be positive, got {a0}"
            )));
        }

        // The n-th smallest j^2 + k^2 needs j, k <= n.
        let max_freq = n_terms as u32;
        let mut pairs: Vec<(u32, u32, u32)> = (1..=max_freq)
            .flat_map(|j| (1..=max_freq).map(move |k| (j * j + k * k, j, k)))
            .collect();
        pairs.sort_unstable();
        pairs.truncate(n_terms);

        let eigenpairs: Vec<Eigenpair> = pairs
            .into_iter()
            .map(|(_, j, k)| Eigenpair {
                eigenvalue: eigenvalue(j, k, correlation_length),
                j,
                k,
            })
            .collect();
        let sqrt_eigenvalues = eigenpairs.iter().map(|p| p.eigenvalue.sqrt()).collect();
        let spec = KlSpec {
            a0,
            correlation_length,
            eigenpairs,
            sqrt_eigenvalues,
        };
        let bounds = spec.bounds();
        if bounds.tight <= 0.0 {
            return Err(Error::NonElliptic {
                bound: bounds.tight,
            });
        }
        Ok(spec)
    }

    /// The configuration of the reference experiment: 20 terms, `l = 0.5`,
    /// `a0 = 1`.
    pub fn reference() -> Self {
        Self::new(20, 0.5, 1.0).expect("reference expansion is elliptic")
    }

    pub fn n_terms(&self) -> usize {
        self.eigenpairs.len()
    }

    pub fn eigenpairs(&self) -> &[Eigenpair] {
        &self.eigenpairs
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_eigenvalues
    }

    pub fn bounds(&self) -> EllipticityBounds {
        let l2 = self.correlation_length * self.correlation_length;
        let quoted = self.a0
            - self
                .eigenpairs
                .iter()
                .map(|p| (-PI * f64::from(p.j * p.j + p.k * p.k) * l2).exp())
                .sum::<f64>();
        let tight = self.a0 - self.sqrt_eigenvalues.iter().map(|s| 2.0 * s).sum::<f64>();
        EllipticityBounds { quoted, tight }
    }

    /// Uniform lower bound of the coefficient, erroring if it is not positive.
    pub fn tight_lower_bound(&self) -> Result<f64> {
        let bound = self.bounds().value();
        if bound <= 0.0 {
            return Err(Error::NonElliptic { bound });
        }
        Ok(bound)
    }

    /// Values `sqrt(eta_i) phi_i(x)` of every mode at `x`.
    pub fn scaled_modes_at(&self, x: [f64; 2]) -> Vec<f64> {
        self.eigenpairs
            .iter()
            .zip(&self.sqrt_eigenvalues)
            .map(|(p, s)| s * p.eigenfunction(x))
            .collect()
    }

    pub fn evaluate(&self, sample: &RandomSample, x: [f64; 2]) -> f64 {
        debug_assert_eq!(sample.xi.len(), self.n_terms());
        self.a0
            + self
                .eigenpairs
                .iter()
                .zip(&self.sqrt_eigenvalues)
                .zip(&sample.xi)
                .map(|((p, s), xi)| s * p.eigenfunction(x) * xi)
                .sum::<f64>()
    }

    /// Draws `n_terms` independent uniforms on `[-1, 1]` in component order.
    pub fn draw_sample(&self, rng: &mut Rng, seed_id: u64) -> RandomSample {
        let xi = (0..self.n_terms())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        RandomSample { xi, seed_id }
    }

    /// The sample with every fluctuation switched off, `a = a0`.
    pub fn mean_sample(&self) -> RandomSample {
        RandomSample {
            xi: vec![0.0; self.n_terms()],
            seed_id: 0,
        }
    }
}

/// Coordinates `xi` of one coefficient realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSample {
    pub xi: Vec<f64>,
    /// Provenance tag, e.g. the position in the sampling stream.
    pub seed_id: u64,
}

impl RandomSample {
    pub fn new(xi: Vec<f64>, seed_id: u64) -> Result<Self> {
        if let Some(v) = xi.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "sample component {v} outside [-1, 1]"
            )));
        }
        Ok(RandomSample { xi, seed_id })
    }
}
