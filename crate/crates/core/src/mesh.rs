//! Uniform triangulation of the unit square and P1 finite elements on it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dot, BandCholesky, SparseOperator, SparsityPattern};

/// Uniform mesh of `(0,1)^2`: each of the `n_div^2` squares is split along
/// its lower-left to upper-right diagonal. Nodes are numbered row-major,
/// by `y` then `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTopology {
    n_div: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

impl MeshTopology {
    pub fn new(n_div: usize) -> Result<Self> {
        if n_div == 0 {
            return Err(Error::InvalidParameter("n_div must be >= 1".into()));
        }
        let h = 1.0 / n_div as f64;
        let stride = n_div + 1;
        let nodes = (0..stride)
            .flat_map(|iy| (0..stride).map(move |ix| [ix as f64 * h, iy as f64 * h]))
            .collect();
        let mut triangles = Vec::with_capacity(2 * n_div * n_div);
        for iy in 0..n_div {
            for ix in 0..n_div {
                let n00 = iy * stride + ix;
                let n10 = n00 + 1;
                let n01 = n00 + stride;
                let n11 = n01 + 1;
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            }
        }
        Ok(MeshTopology {
            n_div,
            nodes,
            triangles,
        })
    }

    pub fn n_div(&self) -> usize {
        self.n_div
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_div as f64
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let stride = self.n_div + 1;
        let (ix, iy) = (node % stride, node / stride);
        ix == 0 || iy == 0 || ix == self.n_div || iy == self.n_div
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_area2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Area and constant gradients of the three local basis functions.
    fn element_geometry(&self, t: usize) -> (f64, [[f64; 2]; 3]) {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        let det = self.signed_area2(t);
        let grads = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        (0.5 * det, grads)
    }
}

/// Nodal coefficients of a continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    values: Vec<f64>,
}

impl FeFunction {
    pub fn from_values(values: Vec<f64>) -> Self {
        FeFunction { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        FeFunction { values: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &FeFunction) {
        assert_eq!(self.len(), other.len());
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += alpha * b);
    }

    pub fn scaled(&self, alpha: f64) -> FeFunction {
        FeFunction {
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &FeFunction) -> FeFunction {
        assert_eq!(self.len(), other.len());
        FeFunction {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Monotone nonlinearity `N(y)` of the state equation together with its
/// derivative.
pub trait Nonlinearity: Send + Sync {
    fn value(&self, y: f64) -> f64;
    fn derivative(&self, y: f64) -> f64;
}

/// `N(y) = y^5`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quintic;

impl Nonlinearity for Quintic {
    fn value(&self, y: f64) -> f64 {
        let y2 = y * y;
        y2 * y2 * y
    }

    fn derivative(&self, y: f64) -> f64 {
        let y2 = y * y;
        5.0 * y2 * y2
    }
}

/// P1 space on a [`MeshTopology`] with the constant-coefficient operators
/// precomputed.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: MeshTopology,
    pattern: Arc<SparsityPattern>,
    // CSR slot of local entry (a, b) for every triangle.
    slots: Vec<[[usize; 3]; 3]>,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    mass: SparseOperator,
    laplace: SparseOperator,
    mass_factor: BandCholesky,
}

// Edge midpoints (local node pairs) of the 3-point quadrature rule.
const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

impl FemSpace {
    pub fn new(mesh: MeshTopology) -> Result<Self> {
        let n = mesh.node_count();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in mesh.triangles() {
            for &a in tri {
                rows[a].extend_from_slice(tri);
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(rows));
        let slots: Vec<[[usize; 3]; 3]> = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[0; 3]; 3];
                for (la, &a) in tri.iter().enumerate() {
                    for (lb, &b) in tri.iter().enumerate() {
                        s[la][lb] = pattern.slot(a, b).expect("element entry in pattern");
                    }
                }
                s
            })
            .collect();
        let (areas, grads): (Vec<f64>, Vec<[[f64; 2]; 3]>) = (0..mesh.triangle_count())
            .map(|t| mesh.element_geometry(t))
            .unzip();

        let mass = mass_kernel(&pattern, &slots, &areas);
        let ones = vec![1.0; mesh.triangle_count()];
        let laplace = stiffness_kernel(&pattern, &slots, &areas, &grads, &ones)?;
        let mass_factor = BandCholesky::factor(&mass)?;
        Ok(FemSpace {
            mesh,
            pattern,
            slots,
            areas,
            grads,
            mass,
            laplace,
            mass_factor,
        })
    }

    pub fn with_divisions(n_div: usize) -> Result<Self> {
        Self::new(MeshTopology::new(n_div)?)
    }

    pub fn mesh(&self) -> &MeshTopology {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Consistent mass matrix `M_ab = int phi_a phi_b`.
    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    /// Stiffness matrix for `a = 1`.
    pub fn laplace(&self) -> &SparseOperator {
        &self.laplace
    }

    pub fn assemble_mass(&self) -> SparseOperator {
        mass_kernel(&self.pattern, &self.slots, &self.areas)
    }

    /// Stiffness matrix `int a grad phi_a . grad phi_b` with the coefficient
    /// evaluated at triangle centroids.
    pub fn assemble_stiffness(&self, coeff: impl Fn([f64; 2]) -> f64) -> Result<SparseOperator> {
        let values: Vec<f64> = (0..self.mesh.triangle_count())
            .map(|t| coeff(self.mesh.centroid(t)))
            .collect();
        self.assemble_stiffness_centroid(&values)
    }

    /// Same as [`Self::assemble_stiffness`] with one coefficient value per
    /// triangle.
    pub fn assemble_stiffness_centroid(&self, coeff: &[f64]) -> Result<SparseOperator> {
        if coeff.len() != self.mesh.triangle_count() {
            return Err(Error::DimensionMismatch {
                expected: self.mesh.triangle_count(),
                got: coeff.len(),
            });
        }
        stiffness_kernel(&self.pattern, &self.slots, &self.areas, &self.grads, coeff)
    }

    /// Load vector `int N(y) phi_a` by the edge-midpoint rule.
    pub fn nonlinear_load(&self, y: &FeFunction, n: &dyn Nonlinearity) -> Vec<f64> {
        let mut load = vec![0.0; self.dim()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let w = self.areas[t] / 3.0;
            for &(i, j) in &EDGES {
                let ym = 0.5 * (y.values[tri[i]] + y.values[tri[j]]);
                let f = 0.5 * w * n.value(ym);
                load[tri[i]] += f;
                load[tri[j]] += f;
            }
        }
        load
    }

    /// Weighted mass matrix `int N'(y) phi_a phi_b` by the edge-midpoint rule,
    /// the exact derivative of [`Self::nonlinear_load`].
    pub fn weighted_mass(&self, y: &FeFunction, n: &dyn Nonlinearity) -> SparseOperator {
        let mut w_op = SparseOperator::zeros(self.pattern.clone());
        let vals = w_op.values_mut();
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let w = self.areas[t] / 3.0;
            let slots = &self.slots[t];
            for &(i, j) in &EDGES {
                let ym = 0.5 * (y.values[tri[i]] + y.values[tri[j]]);
                let d = 0.25 * w * n.derivative(ym);
                vals[slots[i][i]] += d;
                vals[slots[j][j]] += d;
                vals[slots[i][j]] += d;
                vals[slots[j][i]] += d;
            }
        }
        w_op
    }

    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> FeFunction {
        FeFunction::from_values(self.mesh.nodes().iter().map(|&x| f(x)).collect())
    }

    fn check(&self, v: &FeFunction) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn l2_inner(&self, a: &FeFunction, b: &FeFunction) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mass.bilinear(a.values(), b.values()))
    }

    pub fn l2_norm(&self, v: &FeFunction) -> Result<f64> {
        Ok(self.l2_inner(v, v)?.max(0.0).sqrt())
    }

    /// `sqrt(v^T (A + M) v)` with `A` the unit-coefficient stiffness.
    pub fn h1_norm(&self, v: &FeFunction) -> Result<f64> {
        self.check(v)?;
        let s = self.laplace.quad_form(v.values()) + self.mass.quad_form(v.values());
        Ok(s.max(0.0).sqrt())
    }

    pub fn linf_norm(&self, v: &FeFunction) -> Result<f64> {
        self.check(v)?;
        Ok(v.linf_norm())
    }

    /// `M v` as a plain vector.
    pub fn mass_apply(&self, v: &FeFunction) -> Vec<f64> {
        self.mass.matvec(v.values())
    }

    /// Norm of a load vector in the dual of the discrete L2 space,
    /// `sqrt(r^T M^{-1} r)`.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        dot(r, &self.mass_factor.solve(r)).max(0.0).sqrt()
    }
}

fn mass_kernel(
    pattern: &Arc<SparsityPattern>,
    slots: &[[[usize; 3]; 3]],
    areas: &[f64],
) -> SparseOperator {
    let mut m = SparseOperator::zeros(pattern.clone());
    let vals = m.values_mut();
    for (s, &area) in slots.iter().zip(areas) {
        for la in 0..3 {
            for lb in 0..3 {
                let w = if la == lb { 2.0 } else { 1.0 };
                vals[s[la][lb]] += w * area / 12.0;
            }
        }
    }
    m
}

fn stiffness_kernel(
    pattern: &Arc<SparsityPattern>,
    slots: &[[[usize; 3]; 3]],
    areas: &[f64],
    grads: &[[[f64; 2]; 3]],
    coeff: &[f64],
) -> Result<SparseOperator> {
    let mut k = SparseOperator::zeros(pattern.clone());
    let vals = k.values_mut();
    for (t, s) in slots.iter().enumerate() {
        let a = coeff[t];
        if a.is_nan() || a <= 0.0 {
            return Err(Error::NonPositiveCoefficient {
                triangle: t,
                value: a,
            });
        }
        let g = &grads[t];
        let w = a * areas[t];
        for la in 0..3 {
            for lb in 0..3 {
                vals[s[la][lb]] += w * (g[la][0] * g[lb][0] + g[la][1] * g[lb][1]);
            }
        }
    }
    Ok(k)
}
