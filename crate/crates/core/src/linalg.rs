//! Dense linear-algebra helpers shared by the modes, simulation and oracle code.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Points per parallel work item. Partial results are combined in chunk
/// order, so reductions are bit-identical for any thread count.
pub const CHUNK: usize = 256;

/// Maps `f` over `0..n` in fixed-size chunks and folds the per-chunk results
/// sequentially in index order.
pub fn chunked_reduce<T, F, R>(n: usize, f: F, mut combine: R, init: T) -> T
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
    R: FnMut(T, T) -> T,
{
    let chunks: Vec<T> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    let mut acc = init;
    for c in chunks {
        acc = combine(acc, c);
    }
    acc
}

/// `AᵀB` through an explicit transpose, which routes through the blocked
/// matrix product instead of per-entry dot products.
pub fn at_b(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}

/// Solves `H x = rhs` for symmetric `H` by Cholesky. When the factorization
/// fails, retries once with `H + 1e-8·tr(H)/n·I`. Returns the solution and
/// whether the ridge was needed.
pub fn solve_spd_with_ridge(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
    if let Some(x) = try_cholesky_solve(h.clone(), rhs) {
        return Some((x, false));
    }
    let n = h.nrows();
    let ridge = 1e-8 * h.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let shifted = h + DMatrix::identity(n, n) * ridge;
    try_cholesky_solve(shifted, rhs).map(|x| (x, true))
}

fn try_cholesky_solve(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let ch = h.cholesky()?;
    if ch.l_dirty().diagonal().iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let x = ch.solve(rhs);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Orthonormalizes the columns of `v` in the inner product `⟨x, y⟩ = xᵀ M y`
/// with two passes of modified Gram–Schmidt. Columns that become numerically
/// dependent are left as zero.
pub fn m_orthonormalize(v: &mut DMatrix<f64>, m: &DMatrix<f64>) {
    for _pass in 0..2 {
        for j in 0..v.ncols() {
            for i in 0..j {
                let vi = v.column(i).clone_owned();
                let mvj = m * v.column(j);
                let proj = vi.dot(&mvj);
                v.column_mut(j).axpy(-proj, &vi, 1.0);
            }
            let mvj = m * v.column(j);
            let norm = v.column(j).dot(&mvj).max(0.0).sqrt();
            if norm > 0.0 {
                v.column_mut(j).scale_mut(1.0 / norm);
            }
        }
    }
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b` under the inner product induced by the SPD matrix `gram`
/// (identity when `None`). Angles are recovered from sines, which keeps
/// small angles accurate.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>, gram: Option<&DMatrix<f64>>) -> Vec<f64> {
    let g = gram.cloned().unwrap_or_else(|| DMatrix::identity(a.nrows(), a.nrows()));
    let mut qa = a.clone();
    let mut qb = b.clone();
    m_orthonormalize(&mut qa, &g);
    m_orthonormalize(&mut qb, &g);
    let residual = &qb - &qa * (qa.transpose() * &g * &qb);
    let l = g.cholesky().expect("gram matrix must be SPD").l();
    let sines = (l.transpose() * residual).singular_values();
    let mut angles: Vec<f64> = sines.iter().map(|s| s.clamp(0.0, 1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}
