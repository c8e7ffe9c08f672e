//! Skinning eigenmodes: the smallest generalized eigenpairs of the
//! weight-space Hessian against the RKPM mass matrix.
//!
//! For stable Neo-Hookean at rest the weight-space Hessian reduces to
//! `(H_w)_kl = Σ_i v_i (λ_i + 4μ_i) ∇φ_k(X_i)·∇φ_l(X_i)`, so no constitutive
//! Hessian is ever formed here.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, Point3};

use crate::basis::{BasisTable, RkpmBasis};
use crate::error::{Error, Result};
use crate::linalg::{at_b, m_orthonormalize};
use crate::sampling::IntegrationSet;

/// Relative diagonal shift applied to the mass matrix before the solve.
pub const MASS_REGULARIZATION: f64 = 1e-10;

/// Subspace inverse-iteration sweeps run after the dense solve.
pub const REFINEMENT_SWEEPS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpaceHessian {
    pub matrix: DMatrix<f64>,
    pub integration_count: usize,
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkpmMassMatrix {
    pub matrix: DMatrix<f64>,
}

fn check_table(table: &BasisTable, integ: &IntegrationSet) -> Result<()> {
    if table.n_points() != integ.len() {
        return Err(Error::ContractViolation(format!(
            "basis table has {} rows but the integration set has {} points",
            table.n_points(),
            integ.len()
        )));
    }
    Ok(())
}

/// `Gᵀ diag(w) G` for a row-stacked matrix `G`, with `w` repeated over
/// `rows_per_point` consecutive rows.
fn weighted_gram(g: DMatrix<f64>, weights: &[f64], rows_per_point: usize) -> DMatrix<f64> {
    let mut scaled = g;
    for (i, w) in weights.iter().enumerate() {
        let s = w.sqrt();
        for r in 0..rows_per_point {
            scaled.row_mut(rows_per_point * i + r).scale_mut(s);
        }
    }
    let gram = at_b(&scaled, &scaled);
    // Exact symmetry; the product is symmetric up to rounding only.
    (&gram + gram.transpose()) * 0.5
}

pub fn assemble_weight_hessian(table: &BasisTable, integ: &IntegrationSet, cutoff: Option<f64>) -> Result<WeightSpaceHessian> {
    check_table(table, integ)?;
    let w: Vec<f64> = (0..integ.len())
        .map(|i| integ.weights[i] * (integ.lame_lambda[i] + 4.0 * integ.lame_mu[i]))
        .collect();
    Ok(WeightSpaceHessian {
        matrix: weighted_gram(table.dense_gradients(), &w, 3),
        integration_count: integ.len(),
        cutoff,
    })
}

/// Weak-form Laplace matrix `L_kl = Σ_i v_i ∇φ_k(X_i)·∇φ_l(X_i)`, accumulated
/// row by row over the sparse table.
pub fn laplace_matrix(table: &BasisTable, integ: &IntegrationSet) -> Result<DMatrix<f64>> {
    check_table(table, integ)?;
    let k = table.n_kernels();
    let mut l = DMatrix::zeros(k, k);
    for i in 0..table.n_points() {
        let (idx, _, grads) = table.row(i);
        let v = integ.weights[i];
        for (a, ga) in idx.iter().zip(grads) {
            for (b, gb) in idx.iter().zip(grads) {
                l[(*a, *b)] += v * ga.dot(gb);
            }
        }
    }
    Ok(l)
}

pub fn assemble_mass_matrix(table: &BasisTable, integ: &IntegrationSet) -> Result<RkpmMassMatrix> {
    check_table(table, integ)?;
    Ok(RkpmMassMatrix {
        matrix: weighted_gram(table.dense_values(), &integ.weights, 1),
    })
}

/// Nodal coefficients of the skinning weight fields. Column 0 is the
/// constant mode; `m()` counts only the remaining columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningModes {
    pub coefficients: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl SkinningModes {
    /// Number of non-constant modes.
    pub fn m(&self) -> usize {
        self.coefficients.ncols() - 1
    }

    pub fn n_kernels(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Value of the constant weight field `W⁰`.
    pub fn constant_weight(&self) -> f64 {
        self.coefficients[(0, 0)]
    }

    /// The constant mode plus the first `m` non-constant modes.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.m());
        Self {
            coefficients: self.coefficients.columns(0, m + 1).into_owned(),
            eigenvalues: self.eigenvalues[..=m].to_vec(),
        }
    }

    /// `N×(m+1)` weights at every row of a basis table.
    pub fn weights_table(&self, table: &BasisTable) -> DMatrix<f64> {
        table.dense_values() * &self.coefficients
    }

    /// `3N×(m+1)` weight gradients; row `3i + s` holds `∂W/∂x_s` at point `i`.
    pub fn weight_gradients_table(&self, table: &BasisTable) -> DMatrix<f64> {
        table.dense_gradients() * &self.coefficients
    }

    /// Weights `W^j(X)` at an arbitrary query.
    pub fn weights_at(&self, basis: &RkpmBasis, x: &Point3<f64>) -> Result<DVector<f64>> {
        let phi = basis.shape_values(x)?;
        Ok(self.coefficients.transpose() * phi)
    }

    /// Serializes to the little-endian container: magic `RKPM`, version `u32`,
    /// `K u64`, `m u64`, the `K×(m+1)` coefficients row-major, then the `m+1`
    /// eigenvalues, all as `f64`.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MODES_MAGIC)?;
        w.write_all(&MODES_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_kernels() as u64).to_le_bytes())?;
        w.write_all(&(self.m() as u64).to_le_bytes())?;
        for r in 0..self.coefficients.nrows() {
            for c in 0..self.coefficients.ncols() {
                w.write_all(&self.coefficients[(r, c)].to_le_bytes())?;
            }
        }
        for e in &self.eigenvalues {
            w.write_all(&e.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> std::io::Result<Self> {
        let bad = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODES_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != MODES_VERSION {
            return Err(bad(format!("unsupported modes version {version}")));
        }
        let k = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        if k == 0 || m >= k {
            return Err(bad(format!("inconsistent header K = {k}, m = {m}")));
        }
        let mut coefficients = DMatrix::zeros(k, m + 1);
        for row in 0..k {
            for col in 0..=m {
                coefficients[(row, col)] = read_f64(&mut r)?;
            }
        }
        let eigenvalues = (0..=m).map(|_| read_f64(&mut r)).collect::<std::io::Result<_>>()?;
        Ok(Self {
            coefficients,
            eigenvalues,
        })
    }
}

pub const MODES_MAGIC: &[u8; 4] = b"RKPM";
pub const MODES_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Smallest `m + 1` generalized eigenpairs of `(H_w, 𝓜)`.
///
/// A dense Cholesky-reduced symmetric eigensolve supplies the starting
/// subspace, which is then polished by inverse subspace iteration with
/// Rayleigh–Ritz. The leading mode must come out constant; it is replaced by
/// the exact 𝓜-normalized constant vector and the remaining modes are
/// 𝓜-orthonormalized against it.
pub fn solve_modes(hessian: &WeightSpaceHessian, mass: &RkpmMassMatrix, m: usize) -> Result<SkinningModes> {
    let h = &hessian.matrix;
    let mm = &mass.matrix;
    let k = h.nrows();
    if h.ncols() != k || mm.nrows() != k || mm.ncols() != k {
        return Err(Error::ContractViolation("Hessian and mass matrix must both be K×K".into()));
    }
    if m + 1 > k {
        return Err(Error::ContractViolation(format!("{} modes requested from {k} kernels", m + 1)));
    }

    let shift = MASS_REGULARIZATION * mm.trace() / k as f64;
    let mass_reg = mm + DMatrix::identity(k, k) * shift;
    let chol = mass_reg.clone().cholesky().ok_or(Error::EigensolveFailed {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let l = chol.l();
    let lt = l.transpose();
    let inv_l_h = l.solve_lower_triangular(h).ok_or(Error::EigensolveFailed {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let reduced = l
        .solve_lower_triangular(&inv_l_h.transpose())
        .ok_or(Error::EigensolveFailed {
            iterations: 0,
            residual: f64::NAN,
        })?;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let max_iter = 64 * k;
    let eig = nalgebra::SymmetricEigen::try_new(reduced, f64::EPSILON, max_iter).ok_or(Error::EigensolveFailed {
        iterations: max_iter,
        residual: f64::NAN,
    })?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    // Keep a few extra vectors as a guard band for the subspace iteration.
    let width = (m + 1 + 8).min(k);
    let mut y = DMatrix::zeros(k, width);
    for (c, &i) in order.iter().take(width).enumerate() {
        y.set_column(c, &eig.eigenvectors.column(i));
    }
    let mut v = lt.solve_upper_triangular(&y).ok_or(Error::EigensolveFailed {
        iterations: 0,
        residual: f64::NAN,
    })?;

    // Inverse subspace iteration on (H + σ𝓜)⁻¹𝓜 with a small positive σ
    // (H_w is only semidefinite).
    let sigma = eig.eigenvalues[order[1.min(k - 1)]].abs().max(f64::MIN_POSITIVE) * 1e-2;
    let shifted = h + &mass_reg * sigma;
    if let Some(sc) = shifted.cholesky() {
        for _ in 0..REFINEMENT_SWEEPS {
            v = sc.solve(&(&mass_reg * &v));
            v = rayleigh_ritz(h, &mass_reg, &v)?.1;
        }
    }

    let mut c = v.columns(0, m + 1).into_owned();
    // Constant-mode check before replacing it with the exact constant.
    let c0 = c.column(0);
    let mean = c0.mean();
    let var = c0.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64;
    if !(mean != 0.0 && var / (mean * mean) < 1e-6) {
        return Err(Error::BasisDefect(format!(
            "leading eigenvector is not constant (relative variance {:e})",
            var / (mean * mean)
        )));
    }
    let ones = DVector::from_element(k, 1.0);
    let norm = (ones.dot(&(mm * &ones))).sqrt();
    c.set_column(0, &(ones / norm));
    m_orthonormalize(&mut c, mm);

    // Rotate the non-constant block so it diagonalizes H_w exactly within the span.
    if m > 0 {
        let rest = c.columns(1, m).into_owned();
        let (_, rotated) = rayleigh_ritz(h, mm, &rest)?;
        c.columns_mut(1, m).copy_from(&rotated);
    }
    for j in 1..=m {
        let col = c.column(j);
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            c.column_mut(j).neg_mut();
        }
    }
    let eigenvalues = (0..=m)
        .map(|j| {
            let cj = c.column(j);
            cj.dot(&(h * cj))
        })
        .collect();
    Ok(SkinningModes {
        coefficients: c,
        eigenvalues,
    })
}

/// Rayleigh–Ritz on the span of `v`: returns ascending Ritz values and the
/// corresponding 𝓜-orthonormal Ritz vectors.
fn rayleigh_ritz(h: &DMatrix<f64>, mm: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut q = v.clone();
    m_orthonormalize(&mut q, mm);
    let hq = q.transpose() * h * &q;
    let hq = (&hq + hq.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(hq, f64::EPSILON, 64 * v.ncols().max(1)).ok_or(
        Error::EigensolveFailed {
            iterations: 64 * v.ncols(),
            residual: f64::NAN,
        },
    )?;
    let mut order: Vec<usize> = (0..v.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut rot = DMatrix::zeros(v.ncols(), v.ncols());
    for (c, &i) in order.iter().enumerate() {
        rot.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((order.iter().map(|&i| eig.eigenvalues[i]).collect(), q * rot))
}

/// Full pipeline from a basis table: assemble both matrices and solve.
pub fn compute_modes(table: &BasisTable, integ: &IntegrationSet, cutoff: Option<f64>, m: usize) -> Result<SkinningModes> {
    let h = assemble_weight_hessian(table, integ, cutoff)?;
    let mass = assemble_mass_matrix(table, integ)?;
    solve_modes(&h, &mass, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_grid, Aabb, KernelSet, MaterialSpec, ShapeSource, Solid};

    fn small_box() -> (IntegrationSet, RkpmBasis, BasisTable) {
        let shape = ShapeSource::Solid(Solid::Box(Aabb::new(Point3::origin(), Point3::new(2.0, 1.0, 0.6))));
        let integ = sample_grid(&shape, &MaterialSpec::homogeneous(1e5, 0.3, 1e3), 600, 0).unwrap();
        let kernels = KernelSet::select(&integ, 60).unwrap();
        let basis = RkpmBasis::new(kernels);
        let table = BasisTable::build(&basis, &integ.points).unwrap();
        (integ, basis, table)
    }

    #[test]
    fn hessian_has_constant_null_vector_and_is_psd() {
        let (integ, basis, table) = small_box();
        let h = assemble_weight_hessian(&table, &integ, basis.cutoff()).unwrap().matrix;
        let ones = DVector::from_element(h.nrows(), 1.0);
        assert!((&h * ones).amax() < 1e-8 * h.amax() * h.nrows() as f64);
        let min = h.clone().symmetric_eigenvalues().min();
        assert!(min > -1e-8 * h.amax());
    }

    #[test]
    fn mass_matrix_row_sums_are_lumped_volumes() {
        let (integ, _, table) = small_box();
        let mm = assemble_mass_matrix(&table, &integ).unwrap().matrix;
        let total: f64 = mm.iter().sum();
        assert!((total - integ.total_volume()).abs() < 1e-9 * integ.total_volume());
        let phi = table.dense_values();
        for l in 0..mm.nrows() {
            let lumped: f64 = (0..integ.len()).map(|i| integ.weights[i] * phi[(i, l)]).sum();
            assert!((mm.row(l).sum() - lumped).abs() < 1e-9 * integ.total_volume());
        }
    }

    #[test]
    fn modes_are_mass_orthonormal_with_a_constant_leader() {
        let (integ, basis, table) = small_box();
        let modes = compute_modes(&table, &integ, basis.cutoff(), 10).unwrap();
        let mm = assemble_mass_matrix(&table, &integ).unwrap().matrix;
        let gram = modes.coefficients.transpose() * &mm * &modes.coefficients;
        assert!((gram - DMatrix::identity(11, 11)).amax() < 1e-6);
        assert!(modes.eigenvalues[0].abs() < 1e-6 * modes.eigenvalues[1]);
        assert!(modes.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let w = modes.weights_table(&table);
        let w0 = w.column(0);
        assert!((w0.max() - w0.min()).abs() < 1e-8);
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let (integ, basis, table) = small_box();
        let modes = compute_modes(&table, &integ, basis.cutoff(), 4).unwrap();
        let mut buf = Vec::new();
        modes.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RKPM");
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 8 * (60 * 5 + 5));
        let back = SkinningModes::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, modes);
        buf[0] = b'X';
        assert!(SkinningModes::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn too_many_modes_is_a_contract_violation() {
        let h = WeightSpaceHessian {
            matrix: DMatrix::identity(4, 4),
            integration_count: 0,
            cutoff: None,
        };
        let mass = RkpmMassMatrix {
            matrix: DMatrix::identity(4, 4),
        };
        assert!(matches!(solve_modes(&h, &mass, 4), Err(Error::ContractViolation(_))));
    }
}
