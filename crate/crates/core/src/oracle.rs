//! Full-order RKPM reference: energies over nodal displacements, their
//! finite-difference derivatives, full-order time stepping and least-squares
//! fits of trajectories onto a kinematic subspace.

use nalgebra::{DMatrix, Matrix3, Point3, Vector3};

use crate::basis::BasisTable;
use crate::elasticity::{energy_density, LameParams};
use crate::error::{Error, Result};
use crate::sampling::{Aabb, IntegrationSet};
use crate::simulate::{BoundaryCondition, Kinematics, Simulator, SolverOptions, Trajectory};

/// Largest kernel count the dense full-order solve accepts.
pub const MAX_FULL_ORDER_KERNELS: usize = 2000;

/// Relative step of the finite-difference weight-space Hessian.
pub const FD_STEP: f64 = 1e-5;

fn check_sizes(d: &DMatrix<f64>, table: &BasisTable, integ: &IntegrationSet) -> Result<()> {
    if d.nrows() != table.n_kernels() || d.ncols() != 3 || table.n_points() != integ.len() {
        return Err(Error::ContractViolation(format!(
            "displacements {}×{}, table {}×{}, integration set of {}",
            d.nrows(),
            d.ncols(),
            table.n_points(),
            table.n_kernels(),
            integ.len()
        )));
    }
    Ok(())
}

/// Deformation gradient `F = I + dᵀ∇φ(X_i)` at every integration point, with
/// `d` holding one displacement per kernel as its rows.
pub fn full_deformation_gradients(d: &DMatrix<f64>, table: &BasisTable) -> Vec<Matrix3<f64>> {
    (0..table.n_points())
        .map(|i| {
            let (idx, _, grads) = table.row(i);
            let mut f = Matrix3::identity();
            for (&k, g) in idx.iter().zip(grads) {
                let dk = Vector3::new(d[(k, 0)], d[(k, 1)], d[(k, 2)]);
                f += dk * g.transpose();
            }
            f
        })
        .collect()
}

/// `Σ_i v_i Ψ(F_i)` for nodal displacements `d` (K×3).
pub fn full_energy(d: &DMatrix<f64>, table: &BasisTable, integ: &IntegrationSet) -> Result<f64> {
    check_sizes(d, table, integ)?;
    let lame = point_lame(integ)?;
    Ok(full_deformation_gradients(d, table)
        .iter()
        .enumerate()
        .map(|(i, f)| integ.weights[i] * energy_density(f, &lame[i]))
        .sum())
}

fn point_lame(integ: &IntegrationSet) -> Result<Vec<LameParams>> {
    integ
        .lame_lambda
        .iter()
        .zip(&integ.lame_mu)
        .map(|(&l, &m)| LameParams::new(l, m))
        .collect()
}

/// Central-difference weight-space Hessian of [`full_energy`] at `d = 0`:
/// `H_w[k, l] = Σ_a ∂²E / ∂d[k, a] ∂d[l, a]`, with step `FD_STEP · diag`.
pub fn fd_weight_hessian(table: &BasisTable, integ: &IntegrationSet) -> Result<DMatrix<f64>> {
    let k = table.n_kernels();
    check_sizes(&DMatrix::zeros(k, 3), table, integ)?;
    let lame = point_lame(integ)?;
    let step = FD_STEP * integ.bounding_box().diagonal();

    // Each entry only sees the points where both kernels are active.
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..table.n_points() {
        for &kk in table.row(i).0 {
            support[kk].push(i);
        }
    }
    let energy_at = |points: &[usize], shifts: &[(usize, usize, f64)]| -> f64 {
        let mut total = 0.0;
        for &i in points {
            let (idx, _, grads) = table.row(i);
            let mut f = Matrix3::identity();
            for &(kk, a, s) in shifts {
                if let Some(pos) = idx.iter().position(|&x| x == kk) {
                    let g = grads[pos];
                    for c in 0..3 {
                        f[(a, c)] += s * g[c];
                    }
                }
            }
            total += integ.weights[i] * energy_density(&f, &lame[i]);
        }
        total
    };

    let mut h = DMatrix::zeros(k, k);
    for p in 0..k {
        for q in p..k {
            let points: Vec<usize> = if p == q {
                support[p].clone()
            } else {
                support[p].iter().copied().filter(|i| support[q].binary_search(i).is_ok()).collect()
            };
            if points.is_empty() {
                continue;
            }
            let mut sum = 0.0;
            for a in 0..3 {
                sum += if p == q {
                    let e0 = energy_at(&points, &[]);
                    let ep = energy_at(&points, &[(p, a, step)]);
                    let em = energy_at(&points, &[(p, a, -step)]);
                    (ep - 2.0 * e0 + em) / (step * step)
                } else {
                    let epp = energy_at(&points, &[(p, a, step), (q, a, step)]);
                    let epm = energy_at(&points, &[(p, a, step), (q, a, -step)]);
                    let emp = energy_at(&points, &[(p, a, -step), (q, a, step)]);
                    let emm = energy_at(&points, &[(p, a, -step), (q, a, -step)]);
                    (epp - epm - emp + emm) / (4.0 * step * step)
                };
            }
            h[(p, q)] = sum;
            h[(q, p)] = sum;
        }
    }
    Ok(h)
}

/// Full-order counterpart of the reduced simulator: every kernel carries a
/// 3D displacement.
pub fn full_order_simulator(
    table: &BasisTable,
    integ: &IntegrationSet,
    bcs: Vec<BoundaryCondition>,
    options: SolverOptions,
) -> Result<Simulator> {
    if table.n_kernels() > MAX_FULL_ORDER_KERNELS {
        return Err(Error::ContractViolation(format!(
            "full-order solve supports at most {MAX_FULL_ORDER_KERNELS} kernels, got {}",
            table.n_kernels()
        )));
    }
    Simulator::new(Kinematics::nodal(table, integ)?, integ.clone(), bcs, options)
}

/// Runs the full-order model from rest for `steps` implicit Euler steps.
pub fn full_order_solve(
    table: &BasisTable,
    integ: &IntegrationSet,
    bcs: Vec<BoundaryCondition>,
    options: SolverOptions,
    h: f64,
    steps: usize,
) -> Result<Trajectory> {
    full_order_simulator(table, integ, bcs, options)?.run(h, steps)
}

/// Least-squares fit of a trajectory onto a kinematic subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFit {
    /// Fitted DoFs per frame.
    pub z: Vec<nalgebra::DVector<f64>>,
    /// Mean squared point residual over points and frames, divided by the
    /// squared bounding-box diagonal of the reference's first frame.
    pub residual: f64,
    /// The position map was rank deficient; `z` is the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Relative singular-value cutoff of the least-squares fit.
pub const FIT_RANK_TOLERANCE: f64 = 1e-12;

/// Solves `min_z Σ_i ‖X_i + B_i z − x_i‖²` independently for every frame.
pub fn fit_basis_residual(reference: &[Vec<Point3<f64>>], kin: &Kinematics) -> Result<BasisFit> {
    let first = reference
        .first()
        .ok_or_else(|| Error::InvalidInput("reference trajectory has no frames".into()))?;
    if let Some(bad) = reference.iter().position(|f| f.len() != kin.n_points()) {
        return Err(Error::ContractViolation(format!(
            "reference frame {bad} has {} points, kinematics {}",
            reference[bad].len(),
            kin.n_points()
        )));
    }
    let diag = Aabb::from_points(first).expect("non-empty frame").diagonal();

    // Every coordinate row of U shares the same design matrix ψ.
    let svd = kin.values().clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = FIT_RANK_TOLERANCE * smax;
    let rank_deficient = svd.singular_values.iter().any(|&s| s <= cutoff);
    let u_mat = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let inv_s = svd.singular_values.map(|s| if s > cutoff { 1.0 / s } else { 0.0 });

    let n = kin.n_points();
    let mut total = 0.0;
    let mut zs = Vec::with_capacity(reference.len());
    for frame in reference {
        let disp = DMatrix::from_fn(n, 3, |i, a| frame[i][a] - kin.rest()[i][a]);
        let mut proj = u_mat.transpose() * &disp;
        for (r, s) in inv_s.iter().enumerate() {
            proj.row_mut(r).scale_mut(*s);
        }
        let ut = v_t.transpose() * proj;
        let fitted = kin.values() * &ut;
        total += (fitted - disp).norm_squared();
        zs.push(kin.pack(&ut.transpose()));
    }
    Ok(BasisFit {
        z: zs,
        residual: total / (n * reference.len()) as f64 / (diag * diag),
        rank_deficient,
    })
}
