use nalgebra::{DMatrix, Point3};
use rkpm_core::discretize::Discretization;
use rkpm_core::linalg::principal_angles;
use rkpm_core::modes::{
    assemble_mass_matrix, assemble_weight_hessian, compute_modes, laplace_matrix, solve_modes, MASS_REGULARIZATION,
};
use rkpm_core::sampling::{Aabb, MaterialRegion, MaterialSpec, RegionSelector, ShapeSource, Solid};

const CUTOFF: Option<f64> = Some(7.0);

// Unequal side lengths keep the low spectrum free of degeneracies.
fn slab() -> Discretization {
    let shape = ShapeSource::Solid(Solid::Box(Aabb::new(Point3::origin(), Point3::new(2.3, 1.0, 0.7))));
    Discretization::build(&shape, &MaterialSpec::homogeneous(1e6, 0.35, 1e3), 900, 120, 3, CUTOFF).unwrap()
}

fn mass(d: &Discretization) -> DMatrix<f64> {
    assemble_mass_matrix(&d.table, &d.integ).unwrap().matrix
}

/// Largest `m ≤ max` with a relative spectral gap of at least 5% after it.
fn gapped_count(eigenvalues: &[f64], max: usize) -> usize {
    (1..=max)
        .rev()
        .find(|&m| eigenvalues[m + 1] > 1.05 * eigenvalues[m])
        .expect("no spectral gap in range")
}

#[test]
fn modes_are_mass_orthonormal() {
    let d = slab();
    let modes = compute_modes(&d.table, &d.integ, CUTOFF, 16).unwrap();
    let m = mass(&d);
    let gram = modes.coefficients.transpose() * &m * &modes.coefficients;
    let err = (gram - DMatrix::identity(17, 17)).amax();
    assert!(err < 1e-6, "orthonormality error {err:e}");
}

#[test]
fn constant_mode_has_numerically_zero_eigenvalue() {
    let d = slab();
    let modes = compute_modes(&d.table, &d.integ, CUTOFF, 8).unwrap();
    let ev = &modes.eigenvalues;
    assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    assert!(ev[0].abs() < 1e-6 * ev[1], "λ0 = {:e}, λ1 = {:e}", ev[0], ev[1]);
    let c0 = modes.coefficients.column(0);
    let mean = c0.mean();
    assert!(c0.iter().all(|c| (c - mean).abs() < 1e-8 * mean.abs()));
}

#[test]
fn eigenvalues_scale_with_material() {
    let d = slab();
    let s = 3.7;
    let scaled = d.integ.with_scaled_material(s);
    let a = compute_modes(&d.table, &d.integ, CUTOFF, 12).unwrap();
    let b = compute_modes(&d.table, &scaled, CUTOFF, 12).unwrap();
    for j in 1..=12 {
        let rel = (b.eigenvalues[j] - s * a.eigenvalues[j]).abs() / (s * a.eigenvalues[j]);
        assert!(rel < 1e-8, "mode {j}: rel {rel:e}");
    }
    let k = gapped_count(&a.eigenvalues, 11);
    let m = mass(&d);
    let angles = principal_angles(
        &a.coefficients.columns(0, k + 1).into_owned(),
        &b.coefficients.columns(0, k + 1).into_owned(),
        Some(&m),
    );
    assert!(angles.iter().all(|t| *t < 1e-6), "{angles:?}");
}

#[test]
fn subspace_is_invariant_under_kernel_permutation() {
    let d = slab();
    let n = d.n_kernels();
    // Deterministic shuffle.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by_key(|&i| (i * 7919) % n);
    let kp = d.basis.kernels().permuted(&perm);
    let dp = Discretization::from_kernels(d.integ.clone(), kp, CUTOFF).unwrap();

    let a = compute_modes(&d.table, &d.integ, CUTOFF, 12).unwrap();
    let b = compute_modes(&dp.table, &dp.integ, CUTOFF, 12).unwrap();
    for j in 1..=12 {
        let rel = (a.eigenvalues[j] - b.eigenvalues[j]).abs() / a.eigenvalues[j];
        assert!(rel < 1e-8, "mode {j}: rel {rel:e}");
    }
    // Row r of the permuted problem belongs to kernel perm[r].
    let mut back = DMatrix::zeros(n, b.coefficients.ncols());
    for (r, &k) in perm.iter().enumerate() {
        back.set_row(k, &b.coefficients.row(r));
    }
    let k = gapped_count(&a.eigenvalues, 11);
    let angles = principal_angles(
        &a.coefficients.columns(0, k + 1).into_owned(),
        &back.columns(0, k + 1).into_owned(),
        Some(&mass(&d)),
    );
    assert!(angles.iter().all(|t| *t < 1e-6), "{angles:?}");
}

#[test]
fn homogeneous_modes_match_laplace_eigenmodes() {
    let d = slab();
    let modes = compute_modes(&d.table, &d.integ, CUTOFF, 10).unwrap();
    // Independent dense reduction: L x = λ M x through a Cholesky factor of M.
    let l = laplace_matrix(&d.table, &d.integ).unwrap();
    let k = d.n_kernels();
    let mut m = mass(&d);
    let shift = MASS_REGULARIZATION * m.trace() / k as f64;
    for i in 0..k {
        m[(i, i)] += shift;
    }
    let chol = m.clone().cholesky().unwrap();
    let linv = chol.l().try_inverse().unwrap();
    let c = &linv * &l * linv.transpose();
    let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vecs = DMatrix::from_fn(k, 11, |r, j| eig.eigenvectors[(r, order[j])]);
    let reference = linv.transpose() * vecs;

    let ratio = d.integ.lame_lambda[0] + 4.0 * d.integ.lame_mu[0];
    for j in 1..=10 {
        let expect = ratio * eig.eigenvalues[order[j]];
        assert!((modes.eigenvalues[j] - expect).abs() < 1e-8 * expect);
    }
    let ev: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let g = gapped_count(&ev, 9);
    let angles = principal_angles(
        &modes.coefficients.columns(0, g + 1).into_owned(),
        &reference.columns(0, g + 1).into_owned(),
        Some(&m),
    );
    assert!(angles.iter().all(|t| *t < 1e-6), "{angles:?}");
}

#[test]
fn first_mode_is_the_cosine_along_the_long_axis() {
    let d = slab();
    let modes = compute_modes(&d.table, &d.integ, CUTOFF, 3).unwrap();
    let w = modes.weights_table(&d.table);
    let n = d.integ.len();
    // Least-squares fit w1 ≈ a + b x.
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { d.integ.points[i].x });
    let y = w.column(1).into_owned();
    let coef = design.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    let resid = &y - design * coef;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = 1.0 - resid.norm_squared() / ss_tot;
    // cos(πx/L) against its best line: R² = 96/π⁴.
    let exact = 96.0 / std::f64::consts::PI.powi(4);
    assert!((r2 - exact).abs() < 5e-3, "R² = {r2}, continuum {exact}");
}

#[test]
fn weight_fields_are_orthonormal_under_quadrature() {
    let d = slab();
    let modes = compute_modes(&d.table, &d.integ, CUTOFF, 8).unwrap();
    let w = modes.weights_table(&d.table);
    let w0 = w.column(0);
    assert!(w0.iter().all(|v| (v - w0[0]).abs() < 1e-8));
    let mut gram = DMatrix::zeros(9, 9);
    for i in 0..d.integ.len() {
        let row = w.row(i);
        gram += row.transpose() * row * d.integ.weights[i];
    }
    assert!((gram - DMatrix::identity(9, 9)).amax() < 1e-6);
}

#[test]
fn mass_matrix_sums_to_volume_and_is_definite() {
    let d = slab();
    let m = mass(&d);
    assert!((m.sum() - d.integ.total_volume()).abs() < 1e-10 * d.integ.total_volume());
    let k = d.n_kernels();
    let mut shifted = m.clone();
    let shift = MASS_REGULARIZATION * m.trace() / k as f64;
    for i in 0..k {
        shifted[(i, i)] += shift;
    }
    let min = shifted.symmetric_eigenvalues().min();
    assert!(min > 0.0);
    assert!((m.clone() - m.transpose()).amax() == 0.0);
}

#[test]
fn weight_hessian_rows_sum_to_zero_for_layered_material() {
    let shape = ShapeSource::Solid(Solid::Box(Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0))));
    let material = MaterialSpec::homogeneous(1e6, 0.3, 1e3).with_region(MaterialRegion {
        selector: RegionSelector::Box(Aabb::new(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.5, 1.0, 1.0),
        )),
        young_modulus: Some(2e7),
        poisson_ratio: None,
        density: None,
    });
    let d = Discretization::build(&shape, &material, 500, 50, 0, CUTOFF).unwrap();
    let h = assemble_weight_hessian(&d.table, &d.integ, CUTOFF).unwrap().matrix;
    let scale = h.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
    assert!(h.row_sum().amax() < 1e-8 * scale);
    assert!(h.symmetric_eigenvalues().min() > -1e-8 * scale);
}

#[test]
fn solve_rejects_oversized_requests() {
    let d = slab();
    let h = assemble_weight_hessian(&d.table, &d.integ, CUTOFF).unwrap();
    let m = assemble_mass_matrix(&d.table, &d.integ).unwrap();
    assert!(solve_modes(&h, &m, d.n_kernels()).is_err());
}
