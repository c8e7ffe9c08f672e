//! Stable Neo-Hookean constitutive law.
//!
//! `Ψ(F) = ½[λ̄(det F − γ)² + μ̄ tr(FᵀF) − E₀]` with `λ̄ = λ + μ`, `μ̄ = μ`,
//! `γ = 1 + μ̄/λ̄` and `E₀` chosen so that `Ψ(I) = 0`.
//!
//! Matrices acting on `vec(F)` use the row-major flattening
//! `(F₁₁, F₁₂, F₁₃, F₂₁, …, F₃₃)`, i.e. entry `(a, s)` of `F` sits at `3a + s`.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Vector9 = SVector<f64, 9>;

/// Lamé parameters and the derived stable Neo-Hookean constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LameParams {
    pub lambda: f64,
    pub mu: f64,
    pub lambda_bar: f64,
    pub mu_bar: f64,
    pub gamma: f64,
    pub e0: f64,
}

impl LameParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let lambda_bar = lambda + mu;
        if !(mu.is_finite() && mu > 0.0 && lambda.is_finite() && lambda_bar > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Lamé parameters need mu > 0 and lambda + mu > 0 (lambda = {lambda}, mu = {mu})"
            )));
        }
        let mu_bar = mu;
        Ok(Self {
            lambda,
            mu,
            lambda_bar,
            mu_bar,
            gamma: 1.0 + mu_bar / lambda_bar,
            e0: mu_bar * mu_bar / lambda_bar + 3.0 * mu_bar,
        })
    }

    /// Standard isotropic conversion from Young's modulus and Poisson ratio.
    pub fn from_engineering(young_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        let (e, nu) = (young_modulus, poisson_ratio);
        if nu >= 0.5 {
            return Err(Error::IncompressibleLimit(nu));
        }
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::InvalidInput(format!("young_modulus must be > 0, got {e}")));
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::InvalidInput(format!("poisson_ratio must lie in [0, 0.5), got {nu}")));
        }
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        Self::new(lambda, mu)
    }

    /// Both Lamé parameters multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.lambda * factor, self.mu * factor).expect("positive scaling keeps parameters valid")
    }
}

#[inline]
pub fn vec_row_major(m: &Matrix3<f64>) -> Vector9 {
    Vector9::from_fn(|i, _| m[(i / 3, i % 3)])
}

#[inline]
pub fn unvec_row_major(v: &Vector9) -> Matrix3<f64> {
    Matrix3::from_fn(|a, s| v[3 * a + s])
}

/// Cofactor matrix `cof(F) = det(F) F⁻ᵀ`, defined for every `F`.
#[inline]
pub fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    let c0: Vector3<f64> = f.column(1).cross(&f.column(2));
    let c1: Vector3<f64> = f.column(2).cross(&f.column(0));
    let c2: Vector3<f64> = f.column(0).cross(&f.column(1));
    Matrix3::from_columns(&[c0, c1, c2])
}

pub fn energy_density(f: &Matrix3<f64>, p: &LameParams) -> f64 {
    // Expanded around the rest state: with δ = J − 1 and γ − 1 = μ̄/λ̄,
    // λ̄(J − γ)² − μ̄²/λ̄ = λ̄δ² − 2μ̄δ, so E₀ never has to be subtracted.
    let e = f - Matrix3::identity();
    let delta = det_minus_one(&e);
    let stretch = e.norm_squared() + 2.0 * e.trace();
    0.5 * (p.lambda_bar * delta * delta - 2.0 * p.mu_bar * delta + p.mu_bar * stretch)
}

/// `det(I + E) − 1` without forming `I + E`.
fn det_minus_one(e: &Matrix3<f64>) -> f64 {
    let tr = e.trace();
    let tr_sq = (e * e).trace();
    tr + 0.5 * (tr * tr - tr_sq) + e.determinant()
}

/// First Piola–Kirchhoff stress `μ̄F + λ̄(J − γ)J F⁻ᵀ`.
pub fn pk1_stress(f: &Matrix3<f64>, p: &LameParams) -> Result<Matrix3<f64>> {
    let inv_t = inverse_transpose(f)?;
    let j = f.determinant();
    Ok(p.mu_bar * f + p.lambda_bar * (j - p.gamma) * j * inv_t)
}

/// Hessian of `Ψ` with respect to `vec(F)`:
/// `μ̄I + λ̄(2J − γ) vec(JF⁻ᵀ)vec(F⁻ᵀ)ᵀ − λ̄(J − γ)J (F⁻ᵀ ⊗ F⁻¹)K`
/// where `K` is the transpose permutation `K vec(A) = vec(Aᵀ)`. The Kronecker
/// factors are ordered for the row-major flattening; in column-major form the
/// same term reads `(F⁻¹ ⊗ F⁻ᵀ)K`.
pub fn hessian_wrt_f(f: &Matrix3<f64>, p: &LameParams) -> Result<Matrix9> {
    let inv_t = inverse_transpose(f)?;
    let inv = inv_t.transpose();
    let j = f.determinant();
    let g = vec_row_major(&inv_t);
    let mut h = Matrix9::identity() * p.mu_bar;
    h += (p.lambda_bar * (2.0 * j - p.gamma) * j) * g * g.transpose();
    let kron_k = kronecker(&inv_t, &inv) * transpose_permutation();
    h -= (p.lambda_bar * (j - p.gamma) * j) * kron_k;
    Ok(h)
}

/// The same Hessian written through the cofactor matrix, so it stays defined
/// at singular and inverted `F`. This is the form used inside the solvers.
pub fn hessian_cofactor(f: &Matrix3<f64>, p: &LameParams) -> Matrix9 {
    let j = f.determinant();
    let cof = vec_row_major(&cofactor(f));
    let mut h = Matrix9::identity() * p.mu_bar;
    h += p.lambda_bar * cof * cof.transpose();
    // ∂²J/∂F_ab∂F_cd = ε_ace ε_bdf F_ef
    let scale = p.lambda_bar * (j - p.gamma);
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    if a == c || b == d {
                        continue;
                    }
                    let e = 3 - a - c;
                    let g = 3 - b - d;
                    let v = levi_civita(a, c, e) * levi_civita(b, d, g) * f[(e, g)];
                    h[(3 * a + b, 3 * c + d)] += scale * v;
                }
            }
        }
    }
    h
}

/// PK1 stress through the cofactor matrix; agrees with [`pk1_stress`] wherever
/// `F` is invertible.
pub fn pk1_cofactor(f: &Matrix3<f64>, p: &LameParams) -> Matrix3<f64> {
    let j = f.determinant();
    p.mu_bar * f + p.lambda_bar * (j - p.gamma) * cofactor(f)
}

#[inline]
fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

fn inverse_transpose(f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let j = f.determinant();
    let scale = f.norm().powi(3).max(f64::MIN_POSITIVE);
    if !j.is_finite() || j.abs() <= 1e-14 * scale {
        return Err(Error::NonInvertibleDeformation(j));
    }
    Ok(cofactor(f) / j)
}

/// `A ⊗ B` for 3×3 factors under the row-major flattening, so that
/// `(A ⊗ B) vec(X) = vec(A X Bᵀ)`.
pub fn kronecker(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix9 {
    Matrix9::from_fn(|r, c| a[(r / 3, c / 3)] * b[(r % 3, c % 3)])
}

/// Permutation with `K vec(A) = vec(Aᵀ)`.
pub fn transpose_permutation() -> Matrix9 {
    Matrix9::from_fn(|r, c| if c == 3 * (r % 3) + r / 3 { 1.0 } else { 0.0 })
}

/// `vec(I) vec(I)ᵀ`.
pub fn trace_outer() -> Matrix9 {
    Matrix9::from_fn(|r, c| if r % 4 == 0 && c % 4 == 0 { 1.0 } else { 0.0 })
}

/// Clamps the negative eigenvalues of a symmetric 9×9 matrix to zero.
pub fn psd_project(h: &Matrix9) -> Result<Matrix9> {
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let asym = (h - h.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::ContractViolation(format!(
            "psd_project needs a symmetric matrix (asymmetry {asym:e})"
        )));
    }
    Ok(psd_project_unchecked(h))
}

pub(crate) fn psd_project_unchecked(h: &Matrix9) -> Matrix9 {
    let sym = 0.5 * (h + h.transpose());
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    eig.eigenvectors * Matrix9::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Cauchy stress `σ = P Fᵀ / det F` with its principal values in ascending order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyStress {
    pub sigma: Matrix3<f64>,
    pub principal: [f64; 3],
}

pub fn cauchy_stress(f: &Matrix3<f64>, p: &LameParams) -> Result<CauchyStress> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::InvertedElement(j));
    }
    let sigma = pk1_stress(f, p)? * f.transpose() / j;
    let principal = principal_values(&sigma);
    Ok(CauchyStress { sigma, principal })
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn principal_values(m: &Matrix3<f64>) -> [f64; 3] {
    let sym = 0.5 * (m + m.transpose());
    let mut ev: [f64; 3] = SymmetricEigen::new(sym).eigenvalues.into();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper_beam() -> LameParams {
        LameParams::from_engineering(5e6, 0.45).unwrap()
    }

    fn random_f(rng: &mut ChaCha8Rng, det_range: (f64, f64)) -> Matrix3<f64> {
        loop {
            let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-0.6..0.6));
            let j = f.determinant();
            if j >= det_range.0 && j <= det_range.1 {
                return f;
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let angle = rng.random_range(-3.0..3.0);
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
    }

    /// Central difference of `Ψ` in every entry of `F`.
    fn fd_stress(f: &Matrix3<f64>, p: &LameParams, step: f64) -> Matrix3<f64> {
        Matrix3::from_fn(|a, s| {
            let mut fp = *f;
            let mut fm = *f;
            fp[(a, s)] += step;
            fm[(a, s)] -= step;
            (energy_density(&fp, p) - energy_density(&fm, p)) / (2.0 * step)
        })
    }

    fn fd_hessian(f: &Matrix3<f64>, p: &LameParams, step: f64) -> Matrix9 {
        let mut h = Matrix9::zeros();
        for c in 0..9 {
            let mut fp = *f;
            let mut fm = *f;
            fp[(c / 3, c % 3)] += step;
            fm[(c / 3, c % 3)] -= step;
            let dp = vec_row_major(&pk1_stress(&fp, p).unwrap());
            let dm = vec_row_major(&pk1_stress(&fm, p).unwrap());
            h.set_column(c, &((dp - dm) / (2.0 * step)));
        }
        h
    }

    #[test]
    fn paper_material_conversion() {
        let p = paper_beam();
        assert!((p.mu - 1.724_137_931e6).abs() < 1.0);
        assert!((p.lambda - 1.551_724_138e7).abs() < 10.0);
        // μ/(λ+μ) = 1 − 2ν, so γ = 2 − 2ν = 1.1.
        assert!((p.gamma - 1.1).abs() < 1e-14);
    }

    #[test]
    fn zero_poisson_ratio() {
        let p = LameParams::from_engineering(2.0, 0.0).unwrap();
        assert_eq!(p.lambda, 0.0);
        assert_eq!(p.mu, 1.0);
        assert!(matches!(LameParams::from_engineering(2.0, 0.5), Err(Error::IncompressibleLimit(_))));
    }

    #[test]
    fn rest_and_rotations_are_energy_free() {
        let p = paper_beam();
        assert_eq!(energy_density(&Matrix3::identity(), &p), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            assert!(energy_density(&r, &p).abs() < 1e-9 * p.mu_bar);
        }
    }

    #[test]
    fn doubled_identity_by_substitution() {
        let p = paper_beam();
        let f = Matrix3::identity() * 2.0;
        let expected = 0.5 * (p.lambda_bar * (8.0 - 1.1f64).powi(2) + 12.0 * p.mu_bar - p.e0);
        assert!((energy_density(&f, &p) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn rest_is_stress_free() {
        let p = paper_beam();
        let s = pk1_stress(&Matrix3::identity(), &p).unwrap();
        assert!(s.amax() < 1e-10 * p.mu_bar);
    }

    #[test]
    fn uniaxial_stretch_closed_form() {
        let p = paper_beam();
        let s = 1.3;
        let f = Matrix3::from_diagonal(&Vector3::new(s, 1.0, 1.0));
        let stress = pk1_stress(&f, &p).unwrap();
        // J = s, F⁻ᵀ = diag(1/s, 1, 1): P₁₁ = μ̄s + λ̄(s − γ), P₂₂ = μ̄ + λ̄(s − γ)s.
        let p11 = p.mu_bar * s + p.lambda_bar * (s - p.gamma);
        let p22 = p.mu_bar + p.lambda_bar * (s - p.gamma) * s;
        assert!((stress[(0, 0)] - p11).abs() < 1e-9 * p11.abs());
        assert!((stress[(1, 1)] - p22).abs() < 1e-9 * p22.abs());
        assert!(stress[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn stress_matches_finite_differences() {
        let p = paper_beam();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let f = random_f(&mut rng, (0.3, 3.0));
            let a = pk1_stress(&f, &p).unwrap();
            let fd = fd_stress(&f, &p, 1e-7);
            let rel = (a - fd).norm() / a.norm();
            assert!(rel < 1e-6, "rel {rel}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences_and_is_symmetric() {
        let p = paper_beam();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let f = random_f(&mut rng, (0.3, 3.0));
            let h = hessian_wrt_f(&f, &p).unwrap();
            assert!((h - h.transpose()).amax() < 1e-12 * h.amax());
            let fd = fd_hessian(&f, &p, 1e-7);
            let rel = (h - fd).norm() / h.norm();
            assert!(rel < 1e-5, "rel {rel}");
        }
    }

    #[test]
    fn cofactor_forms_agree_with_inverse_forms() {
        let p = paper_beam();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let f = random_f(&mut rng, (0.3, 3.0));
            let h = hessian_wrt_f(&f, &p).unwrap();
            assert!((h - hessian_cofactor(&f, &p)).amax() < 1e-9 * h.amax());
            let s = pk1_stress(&f, &p).unwrap();
            assert!((s - pk1_cofactor(&f, &p)).amax() < 1e-9 * s.amax());
        }
        // The cofactor form stays finite at a singular F.
        let singular = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!(hessian_cofactor(&singular, &p).iter().all(|v| v.is_finite()));
        assert!(matches!(pk1_stress(&singular, &p), Err(Error::NonInvertibleDeformation(_))));
        assert!(matches!(hessian_wrt_f(&singular, &p), Err(Error::NonInvertibleDeformation(_))));
    }

    #[test]
    fn rest_hessian_closed_form() {
        let p = paper_beam();
        let h = hessian_wrt_f(&Matrix3::identity(), &p).unwrap();
        let closed = Matrix9::identity() * p.mu_bar
            + p.lambda_bar * (2.0 - p.gamma) * trace_outer()
            + p.lambda_bar * (p.gamma - 1.0) * transpose_permutation();
        assert!((h - closed).amax() < 1e-9 * p.mu_bar);
    }

    #[test]
    fn transpose_permutation_matches_definition() {
        let a = Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        assert_eq!(transpose_permutation() * vec_row_major(&a), vec_row_major(&a.transpose()));
        let b = Matrix3::new(0.5, -1.0, 2.0, 0.0, 3.0, 1.0, -2.0, 1.0, 1.5);
        let x = Matrix3::new(1.0, 0.0, 2.0, -1.0, 1.0, 0.5, 0.0, 3.0, 1.0);
        assert!((kronecker(&a, &b) * vec_row_major(&x) - vec_row_major(&(a * x * b.transpose()))).amax() < 1e-12);
    }

    #[test]
    fn psd_projection() {
        let mut d = Matrix9::identity();
        d[(1, 1)] = -1.0;
        let pd = psd_project(&d).unwrap();
        let mut expected = Matrix9::identity();
        expected[(1, 1)] = 0.0;
        assert!((pd - expected).amax() < 1e-12);

        let p = paper_beam();
        let spd = hessian_wrt_f(&Matrix3::identity(), &p).unwrap();
        assert!((psd_project(&spd).unwrap() - spd).amax() < 1e-12 * spd.amax());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_f(&mut rng, (0.3, 0.5));
        let h = hessian_wrt_f(&f, &p).unwrap();
        let proj = psd_project(&h).unwrap();
        let diff_eigs = SymmetricEigen::new(proj - h).eigenvalues;
        assert!(diff_eigs.min() > -1e-10 * h.amax());
        assert!(SymmetricEigen::new(proj).eigenvalues.min() > -1e-9 * h.amax());
        assert!((psd_project(&proj).unwrap() - proj).amax() < 1e-9 * h.amax());

        let mut asym = Matrix9::identity();
        asym[(0, 1)] = 1.0;
        assert!(matches!(psd_project(&asym), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn cauchy_at_rest_rotation_and_stretch() {
        let p = paper_beam();
        let rest = cauchy_stress(&Matrix3::identity(), &p).unwrap();
        assert!(rest.sigma.amax() < 1e-8 * p.mu_bar);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = random_rotation(&mut rng);
        assert!(cauchy_stress(&r, &p).unwrap().sigma.amax() < 1e-6 * p.mu_bar);

        let f = Matrix3::from_diagonal(&Vector3::new(1.2, 1.0, 1.0));
        let c = cauchy_stress(&f, &p).unwrap();
        assert!((c.sigma - c.sigma.transpose()).amax() < 1e-8 * c.sigma.amax());
        let mut oracle: Vec<f64> = SymmetricEigen::new(c.sigma).eigenvalues.iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        for (a, b) in c.principal.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9 * c.sigma.amax());
        }
        assert!(c.principal[0] <= c.principal[1] && c.principal[1] <= c.principal[2]);

        let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(cauchy_stress(&flip, &p), Err(Error::InvertedElement(_))));
    }

    #[test]
    fn positive_away_from_rotations() {
        let p = paper_beam();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let f = random_f(&mut rng, (0.5, 2.0));
            // Frobenius distance to the nearest rotation via the polar factor.
            let svd = f.svd(true, true);
            let r = svd.u.unwrap() * svd.v_t.unwrap();
            if r.determinant() < 0.0 || (f - r).norm() < 0.1 {
                continue;
            }
            assert!(energy_density(&f, &p) > 0.0);
            checked += 1;
        }
    }
}
