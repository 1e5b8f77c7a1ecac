//! Dense brute-force reference discretization, assembled without the
//! library's mesh, sparse or KL code.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

pub struct DenseOracle {
    pub n_div: usize,
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub mass: DMatrix<f64>,
    modes: Vec<(f64, u32, u32)>,
    a0: f64,
}

impl DenseOracle {
    /// Uniform mesh of `n_div^2` squares, each cut along the diagonal from
    /// lower-left to upper-right; KL expansion with `terms` modes.
    pub fn new(n_div: usize, terms: usize, l: f64, a0: f64) -> Self {
        let h = 1.0 / n_div as f64;
        let m = n_div + 1;
        let mut nodes = Vec::new();
        for r in 0..m {
            for c in 0..m {
                nodes.push([c as f64 * h, r as f64 * h]);
            }
        }
        let mut tris = Vec::new();
        for r in 0..n_div {
            for c in 0..n_div {
                let n00 = r * m + c;
                let (n10, n01, n11) = (n00 + 1, n00 + m, n00 + m + 1);
                tris.push([n00, n10, n11]);
                tris.push([n00, n11, n01]);
            }
        }

        let mut pairs = Vec::new();
        for j in 1..=terms as u32 {
            for k in 1..=terms as u32 {
                pairs.push((j * j + k * k, j, k));
            }
        }
        pairs.sort();
        let modes = pairs[..terms]
            .iter()
            .map(|&(s, j, k)| ((0.25 * (-PI * s as f64 * l * l).exp()).sqrt(), j, k))
            .collect();

        let n = nodes.len();
        let mut mass = DMatrix::zeros(n, n);
        let mut oracle = DenseOracle {
            n_div,
            nodes,
            tris,
            mass: DMatrix::zeros(0, 0),
            modes,
            a0,
        };
        for t in 0..oracle.tris.len() {
            let area = oracle.area(t);
            let tri = oracle.tris[t];
            for a in 0..3 {
                for b in 0..3 {
                    let f = if a == b { 2.0 } else { 1.0 };
                    mass[(tri[a], tri[b])] += area * f / 12.0;
                }
            }
        }
        oracle.mass = mass;
        oracle
    }

    pub fn reference(n_div: usize) -> Self {
        Self::new(n_div, 20, 0.5, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.tris[t].map(|i| self.nodes[i]);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])).abs()
    }

    pub fn coefficient(&self, xi: &[f64], x: [f64; 2]) -> f64 {
        self.a0
            + self
                .modes
                .iter()
                .zip(xi)
                .map(|(&(s, j, k), xi)| {
                    s * 2.0 * (j as f64 * PI * x[1]).cos() * (k as f64 * PI * x[0]).cos() * xi
                })
                .sum::<f64>()
    }

    /// Stiffness with the coefficient sampled at triangle centroids.
    pub fn stiffness(&self, xi: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (t, tri) in self.tris.iter().enumerate() {
            let p = tri.map(|i| self.nodes[i]);
            let c = [
                (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                (p[0][1] + p[1][1] + p[2][1]) / 3.0,
            ];
            let coeff = self.coefficient(xi, c);
            // Gradient of the hat function at vertex v: rotated opposite edge.
            let area = self.area(t);
            let grad = |v: usize| {
                let (q, r) = (p[(v + 1) % 3], p[(v + 2) % 3]);
                [(q[1] - r[1]) / (2.0 * area), (r[0] - q[0]) / (2.0 * area)]
            };
            for a_ in 0..3 {
                for b in 0..3 {
                    let (ga, gb) = (grad(a_), grad(b));
                    a[(tri[a_], tri[b])] += coeff * area * (ga[0] * gb[0] + ga[1] * gb[1]);
                }
            }
        }
        a
    }

    /// `int y^5 phi_i` and its Jacobian, three-point edge-midpoint rule.
    fn quintic(&self, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mut load = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, n);
        for (t, tri) in self.tris.iter().enumerate() {
            let w = self.area(t) / 3.0;
            for e in 0..3 {
                let (i, j) = (tri[e], tri[(e + 1) % 3]);
                let ym = 0.5 * (y[i] + y[j]);
                load[i] += w * 0.5 * ym.powi(5);
                load[j] += w * 0.5 * ym.powi(5);
                let d = w * 0.25 * 5.0 * ym.powi(4);
                for &(r, c) in &[(i, i), (i, j), (j, i), (j, j)] {
                    jac[(r, c)] += d;
                }
            }
        }
        (load, jac)
    }

    fn residual(&self, a: &DMatrix<f64>, y: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        a * y + &self.mass * y + self.quintic(y).0 - &self.mass * u
    }

    /// Damped Newton on the Euclidean residual, driven to round-off.
    pub fn solve_state(&self, xi: &[f64], u: &[f64]) -> DVector<f64> {
        let a = self.stiffness(xi);
        let u = DVector::from_column_slice(u);
        let mut y = DVector::zeros(self.dim());
        let mut r = self.residual(&a, &y, &u);
        for _ in 0..200 {
            let jac = &a + &self.mass + self.quintic(&y).1;
            let dy = jac.lu().solve(&(-&r)).expect("nonsingular Jacobian");
            let mut step = 1.0;
            loop {
                let trial = &y + step * &dy;
                let rt = self.residual(&a, &trial, &u);
                if rt.norm() < r.norm() || step < 1e-12 {
                    y = trial;
                    r = rt;
                    break;
                }
                step *= 0.5;
            }
            if dy.amax() < 1e-15 * (1.0 + y.amax()) {
                break;
            }
        }
        y
    }

    pub fn solve_adjoint(&self, xi: &[f64], y: &DVector<f64>, y_target: &[f64]) -> DVector<f64> {
        let jac = self.stiffness(xi) + &self.mass + self.quintic(y).1;
        let rhs = -(&self.mass * (y - DVector::from_column_slice(y_target)));
        jac.lu().solve(&rhs).expect("nonsingular adjoint system")
    }

    /// Objective and L2 gradient for one sample.
    pub fn evaluate(
        &self,
        xi: &[f64],
        u: &[f64],
        y_target: &[f64],
        lambda: f64,
    ) -> (f64, Vec<f64>) {
        let y = self.solve_state(xi, u);
        let p = self.solve_adjoint(xi, &y, y_target);
        let uv = DVector::from_column_slice(u);
        let e = &y - DVector::from_column_slice(y_target);
        let j = 0.5 * e.dot(&(&self.mass * &e)) + 0.5 * lambda * uv.dot(&(&self.mass * &uv));
        let g = lambda * uv - p;
        (j, g.iter().copied().collect())
    }

    pub fn target(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|x| 60.0 + 160.0 * (x[0] * (x[0] - 1.0) + x[1] * (x[1] - 1.0)))
            .collect()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
