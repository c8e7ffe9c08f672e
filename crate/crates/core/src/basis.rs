//! Corrected RKPM shape functions with degree-1 reproduction.
//!
//! Each raw Gaussian `φ̃_k(X) = exp(−‖X − p_k‖²/r_k²)` is corrected to
//! `φ_k(X) = φ̃_k(X) P(p_k)ᵀ C(X)` where `M(X) C(X) = P(X)` and
//! `M(X) = Σ_k φ̃_k(X) P(p_k) P(p_k)ᵀ`. The monomials `P = (1, x, y, z)` are
//! taken in coordinates centered on the kernel centroid and scaled by the
//! half-extent of the centers, which keeps `M` well conditioned without
//! changing the resulting shape functions.
//!
//! Gradients differentiate the correction exactly: `M ∂C = ∂P − ∂M C`.

use nalgebra::{DMatrix, DVector, Matrix4, Point3, SymmetricEigen, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::KernelSet;

/// Kernels farther than this many radii from a query are treated as zero.
/// `exp(−49) ≈ 5e-22`, far below double-precision noise.
pub const SUPPORT_CUTOFF: f64 = 7.0;

/// Relative Tikhonov shift applied to `M` before factorization.
pub const MOMENT_REGULARIZATION: f64 = 1e-10;

/// A query is uncovered when the smallest eigenvalue of `M` falls below this
/// fraction of `tr(M)/4`.
pub const COVERAGE_THRESHOLD: f64 = 1e-8;

#[inline]
pub fn raw_kernel(x: &Point3<f64>, center: &Point3<f64>, radius: f64) -> f64 {
    (-(x - center).norm_squared() / (radius * radius)).exp()
}

#[inline]
pub fn raw_kernel_grad(x: &Point3<f64>, center: &Point3<f64>, radius: f64) -> Vector3<f64> {
    let d = x - center;
    let r2 = radius * radius;
    d * (-2.0 / r2 * (-d.norm_squared() / r2).exp())
}

/// Moment matrix, correction vector and their spatial derivatives at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub moment: Matrix4<f64>,
    pub correction: Vector4<f64>,
    pub d_moment: [Matrix4<f64>; 3],
    pub d_correction: [Vector4<f64>; 3],
}

/// Nonzero shape values and gradients at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEval {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub gradients: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct RkpmBasis {
    kernels: KernelSet,
    origin: Point3<f64>,
    scale: f64,
    cutoff: Option<f64>,
}

impl RkpmBasis {
    /// Basis with the default support cutoff.
    pub fn new(kernels: KernelSet) -> Self {
        Self::with_cutoff(kernels, Some(SUPPORT_CUTOFF))
    }

    /// `cutoff` is in units of each kernel's radius; `None` evaluates every
    /// kernel at every query.
    pub fn with_cutoff(kernels: KernelSet, cutoff: Option<f64>) -> Self {
        let n = kernels.centers.len() as f64;
        let origin = Point3::from(kernels.centers.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n);
        let bbox = crate::sampling::Aabb::from_points(&kernels.centers).expect("kernel set is non-empty");
        let scale = 0.5 * bbox.extents().max();
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Self {
            kernels,
            origin,
            scale,
            cutoff,
        }
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    /// Monomial vector `(1, x̂, ŷ, ẑ)` in the basis' normalized coordinates.
    #[inline]
    pub fn monomials(&self, x: &Point3<f64>) -> Vector4<f64> {
        let u = (x - self.origin) / self.scale;
        Vector4::new(1.0, u.x, u.y, u.z)
    }

    /// `∂P/∂x_s`, constant in `X`.
    #[inline]
    fn monomial_derivative(&self, s: usize) -> Vector4<f64> {
        let mut d = Vector4::zeros();
        d[s + 1] = 1.0 / self.scale;
        d
    }

    /// Indices of kernels whose support reaches `x`.
    pub fn active_kernels(&self, x: &Point3<f64>) -> Vec<usize> {
        match self.cutoff {
            None => (0..self.len()).collect(),
            Some(c) => (0..self.len())
                .filter(|&k| (x - self.kernels.centers[k]).norm_squared() < (c * self.kernels.radii[k]).powi(2))
                .collect(),
        }
    }

    fn correction_over(&self, x: &Point3<f64>, active: &[usize]) -> Result<Correction> {
        let mut moment = Matrix4::zeros();
        let mut d_moment = [Matrix4::zeros(); 3];
        for &k in active {
            let (p, r) = (&self.kernels.centers[k], self.kernels.radii[k]);
            let w = raw_kernel(x, p, r);
            let dw = raw_kernel_grad(x, p, r);
            let pk = self.monomials(p);
            let outer = pk * pk.transpose();
            moment += w * outer;
            for s in 0..3 {
                d_moment[s] += dw[s] * outer;
            }
        }

        let uncovered = || Error::UncoveredQueryPoint { points: vec![*x] };
        let trace = moment.trace();
        if !(trace.is_finite() && trace > 0.0) {
            return Err(uncovered());
        }
        let min_eig = SymmetricEigen::new(moment).eigenvalues.min();
        if min_eig < COVERAGE_THRESHOLD * trace / 4.0 {
            return Err(uncovered());
        }
        let shifted = moment + Matrix4::identity() * (MOMENT_REGULARIZATION * trace / 4.0);
        let chol = shifted.cholesky().ok_or_else(uncovered)?;
        // One refinement sweep against the unshifted matrix removes the bias
        // the shift introduces into the reproducing condition.
        let solve = |rhs: Vector4<f64>| {
            let c0 = chol.solve(&rhs);
            c0 + chol.solve(&(rhs - moment * c0))
        };

        let correction = solve(self.monomials(x));
        let d_correction =
            [0, 1, 2].map(|s| solve(self.monomial_derivative(s) - d_moment[s] * correction));
        Ok(Correction {
            moment,
            correction,
            d_moment,
            d_correction,
        })
    }

    pub fn moment_and_correction(&self, x: &Point3<f64>) -> Result<Correction> {
        self.correction_over(x, &self.active_kernels(x))
    }

    /// Values and gradients of every kernel that reaches `x`.
    pub fn evaluate(&self, x: &Point3<f64>) -> Result<ShapeEval> {
        let active = self.active_kernels(x);
        let corr = self.correction_over(x, &active)?;
        let mut values = Vec::with_capacity(active.len());
        let mut gradients = Vec::with_capacity(active.len());
        for &k in &active {
            let (p, r) = (&self.kernels.centers[k], self.kernels.radii[k]);
            let w = raw_kernel(x, p, r);
            let dw = raw_kernel_grad(x, p, r);
            let pk = self.monomials(p);
            let pc = pk.dot(&corr.correction);
            values.push(w * pc);
            gradients.push(Vector3::from_fn(|s, _| dw[s] * pc + w * pk.dot(&corr.d_correction[s])));
        }
        Ok(ShapeEval {
            indices: active,
            values,
            gradients,
        })
    }

    /// Dense `K`-vector of shape values at `x`.
    pub fn shape_values(&self, x: &Point3<f64>) -> Result<DVector<f64>> {
        let e = self.evaluate(x)?;
        let mut v = DVector::zeros(self.len());
        for (&k, &val) in e.indices.iter().zip(&e.values) {
            v[k] = val;
        }
        Ok(v)
    }

    /// Dense `K×3` matrix of shape gradients at `x`.
    pub fn shape_gradients(&self, x: &Point3<f64>) -> Result<DMatrix<f64>> {
        let e = self.evaluate(x)?;
        let mut g = DMatrix::zeros(self.len(), 3);
        for (&k, grad) in e.indices.iter().zip(&e.gradients) {
            g.set_row(k, &grad.transpose());
        }
        Ok(g)
    }

    /// Violations of the reproducing conditions at `x`, in normalized
    /// coordinates: `(max |Σ φ_k P(p_k) − P(x)|, max |Σ P(p_k) ∇φ_kᵀ − ∇P(x)|)`.
    /// The second term covers both `Σ∇φ_k = 0` and `Σ p_k∇φ_kᵀ = I`, the latter
    /// measured in units of the coordinate scale.
    pub fn reproduction_error(&self, x: &Point3<f64>, eval: &ShapeEval) -> (f64, f64) {
        let mut value_sum = Vector4::zeros();
        let mut grad_sum = nalgebra::Matrix4x3::zeros();
        for ((&k, &v), g) in eval.indices.iter().zip(&eval.values).zip(&eval.gradients) {
            let pk = self.monomials(&self.kernels.centers[k]);
            value_sum += v * pk;
            grad_sum += pk * g.transpose();
        }
        let value_err = (value_sum - self.monomials(x)).amax();
        let mut expected = nalgebra::Matrix4x3::zeros();
        for s in 0..3 {
            expected.set_column(s, &self.monomial_derivative(s));
        }
        // Scale gradient residuals by the coordinate scale so both conditions
        // are dimensionless.
        let grad_err = ((grad_sum - expected) * self.scale).amax();
        (value_err, grad_err)
    }
}

/// Shape values and gradients cached for a fixed set of query points, stored
/// row-sparse (only kernels within the support cutoff).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    n_kernels: usize,
    row_offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    gradients: Vec<Vector3<f64>>,
}

impl BasisTable {
    pub fn build(basis: &RkpmBasis, points: &[Point3<f64>]) -> Result<Self> {
        let evals: Vec<Result<ShapeEval>> = points.par_iter().map(|x| basis.evaluate(x)).collect();
        let mut uncovered = Vec::new();
        let mut table = BasisTable {
            n_kernels: basis.len(),
            row_offsets: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            gradients: Vec::new(),
        };
        for r in evals {
            match r {
                Ok(e) => {
                    table.indices.extend(e.indices);
                    table.values.extend(e.values);
                    table.gradients.extend(e.gradients);
                    table.row_offsets.push(table.indices.len());
                }
                Err(Error::UncoveredQueryPoint { points }) => uncovered.extend(points),
                Err(e) => return Err(e),
            }
        }
        if !uncovered.is_empty() {
            return Err(Error::UncoveredQueryPoint { points: uncovered });
        }
        Ok(table)
    }

    pub fn n_points(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn n_kernels(&self) -> usize {
        self.n_kernels
    }

    /// Active kernel indices, values and gradients of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64], &[Vector3<f64>]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (
            &self.indices[range.clone()],
            &self.values[range.clone()],
            &self.gradients[range],
        )
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `N×K` matrix of shape values.
    pub fn dense_values(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_points(), self.n_kernels);
        for i in 0..self.n_points() {
            let (idx, vals, _) = self.row(i);
            for (&k, &v) in idx.iter().zip(vals) {
                m[(i, k)] = v;
            }
        }
        m
    }

    /// `3N×K` matrix whose row `3i + s` holds `∂φ_k/∂x_s` at point `i`.
    pub fn dense_gradients(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3 * self.n_points(), self.n_kernels);
        for i in 0..self.n_points() {
            let (idx, _, grads) = self.row(i);
            for (&k, g) in idx.iter().zip(grads) {
                for s in 0..3 {
                    m[(3 * i + s, k)] = g[s];
                }
            }
        }
        m
    }
}
