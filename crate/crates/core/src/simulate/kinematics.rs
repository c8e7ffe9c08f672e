use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};

use crate::basis::BasisTable;
use crate::error::{Error, Result};
use crate::modes::SkinningModes;
use crate::sampling::IntegrationSet;

/// How the flat DoF vector maps onto the `3×n` coefficient matrix `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofLayout {
    /// `m + 1` affine handles `Z_j ∈ R^{3×4}`, each row-flattened:
    /// `z[12j + 4a + q] = Z_j[a, q]`.
    Skinning { handles: usize },
    /// One displacement per RKPM node: `d[3k + a]`.
    Nodal { nodes: usize },
}

impl DofLayout {
    /// Number of columns of `U`.
    pub fn columns(&self) -> usize {
        match *self {
            DofLayout::Skinning { handles } => 4 * handles,
            DofLayout::Nodal { nodes } => nodes,
        }
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.columns()
    }

    /// Flat index of `U[axis, col]`.
    #[inline]
    pub fn dof(&self, axis: usize, col: usize) -> usize {
        match self {
            DofLayout::Skinning { .. } => 12 * (col / 4) + 4 * axis + col % 4,
            DofLayout::Nodal { .. } => 3 * col + axis,
        }
    }
}

/// A deformation map that is affine in its DoFs: for every integration point
/// `x_i = X_i + U ψ_i` and `F_i = I + U Aᵢᵀ`, with `ψ_i ∈ Rⁿ` stored as row `i`
/// of `values` and `A_i ∈ R^{3×n}` as rows `3i..3i+3` of `gradients`.
///
/// Linear blend skinning gives `ψ_i[4j + q] = W^j(X_i) X̄_q` and
/// `A_i[s, 4j + q] = ∂_s W^j(X_i) X̄_q + W^j(X_i) δ_qs`, where `X̄ = (X − o, 1)`
/// is homogeneous in coordinates centered on the rest centroid `o`. The
/// full-order RKPM field uses `ψ_i = φ(X_i)` and `A_i = ∇φ(X_i)ᵀ`.
#[derive(Debug, Clone)]
pub struct Kinematics {
    rest: Vec<Point3<f64>>,
    values: DMatrix<f64>,
    gradients: DMatrix<f64>,
    gradients_t: DMatrix<f64>,
    layout: DofLayout,
    frame_origin: Point3<f64>,
}

impl Kinematics {
    pub fn skinning(modes: &SkinningModes, table: &BasisTable, integ: &IntegrationSet) -> Result<Self> {
        if modes.n_kernels() != table.n_kernels() || table.n_points() != integ.len() {
            return Err(Error::ContractViolation(format!(
                "modes over {} kernels, table {}×{}, integration set of {}",
                modes.n_kernels(),
                table.n_points(),
                table.n_kernels(),
                integ.len()
            )));
        }
        let w = modes.weights_table(table);
        let dw = modes.weight_gradients_table(table);
        let handles = w.ncols();
        let n = integ.len();
        let origin = integ.centroid();
        let mut values = DMatrix::zeros(n, 4 * handles);
        let mut gradients = DMatrix::zeros(3 * n, 4 * handles);
        for i in 0..n {
            let xb = integ.points[i] - origin;
            let hom = [xb.x, xb.y, xb.z, 1.0];
            for j in 0..handles {
                let wij = w[(i, j)];
                for q in 0..4 {
                    values[(i, 4 * j + q)] = wij * hom[q];
                    for s in 0..3 {
                        let mut a = dw[(3 * i + s, j)] * hom[q];
                        if q == s {
                            a += wij;
                        }
                        gradients[(3 * i + s, 4 * j + q)] = a;
                    }
                }
            }
        }
        Ok(Self::from_parts(
            integ.points.clone(),
            values,
            gradients,
            DofLayout::Skinning { handles },
            origin,
        ))
    }

    pub fn nodal(table: &BasisTable, integ: &IntegrationSet) -> Result<Self> {
        if table.n_points() != integ.len() {
            return Err(Error::ContractViolation(format!(
                "table has {} rows, integration set has {} points",
                table.n_points(),
                integ.len()
            )));
        }
        Ok(Self::from_parts(
            integ.points.clone(),
            table.dense_values(),
            table.dense_gradients(),
            DofLayout::Nodal {
                nodes: table.n_kernels(),
            },
            integ.centroid(),
        ))
    }

    fn from_parts(
        rest: Vec<Point3<f64>>,
        values: DMatrix<f64>,
        gradients: DMatrix<f64>,
        layout: DofLayout,
        frame_origin: Point3<f64>,
    ) -> Self {
        let gradients_t = gradients.transpose();
        Self {
            rest,
            values,
            gradients,
            gradients_t,
            layout,
            frame_origin,
        }
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    pub fn n_points(&self) -> usize {
        self.rest.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.layout.n_dofs()
    }

    pub fn rest(&self) -> &[Point3<f64>] {
        &self.rest
    }

    /// Origin of the homogeneous coordinates `X̄` used by skinning handles.
    pub fn frame_origin(&self) -> Point3<f64> {
        self.frame_origin
    }

    /// `ψ`, one row per point.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Stacked `A`, rows `3i..3i+3` for point `i`.
    pub fn gradients(&self) -> &DMatrix<f64> {
        &self.gradients
    }

    pub(crate) fn gradients_t(&self) -> &DMatrix<f64> {
        &self.gradients_t
    }

    /// Rearranges a flat DoF vector into `U` (3×n).
    pub fn unpack(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.layout.columns();
        DMatrix::from_fn(3, n, |a, c| z[self.layout.dof(a, c)])
    }

    pub fn pack(&self, u: &DMatrix<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.n_dofs());
        for a in 0..3 {
            for c in 0..self.layout.columns() {
                z[self.layout.dof(a, c)] = u[(a, c)];
            }
        }
        z
    }

    /// Per-point displacements `U ψ_i` as an `N×3` matrix.
    pub fn displacements_u(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.values * u.transpose()
    }

    pub fn positions(&self, z: &DVector<f64>) -> Vec<Point3<f64>> {
        let d = self.displacements_u(&self.unpack(z));
        self.rest
            .iter()
            .enumerate()
            .map(|(i, x)| x + Vector3::new(d[(i, 0)], d[(i, 1)], d[(i, 2)]))
            .collect()
    }

    pub(crate) fn deformation_gradients_u(&self, u: &DMatrix<f64>) -> Vec<Matrix3<f64>> {
        let g = &self.gradients * u.transpose();
        (0..self.n_points())
            .map(|i| Matrix3::from_fn(|a, s| g[(3 * i + s, a)] + if a == s { 1.0 } else { 0.0 }))
            .collect()
    }

    pub fn deformation_gradients(&self, z: &DVector<f64>) -> Vec<Matrix3<f64>> {
        self.deformation_gradients_u(&self.unpack(z))
    }

    /// `B_i`: the 3×n_dofs matrix with `x_i = X_i + B_i z`.
    pub fn position_map(&self, i: usize) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(3, self.n_dofs());
        for a in 0..3 {
            for c in 0..self.layout.columns() {
                b[(a, self.layout.dof(a, c))] = self.values[(i, c)];
            }
        }
        b
    }

    /// `G_i`: the 9×n_dofs matrix with `vec(F_i − I) = G_i z` (row-major vec).
    pub fn gradient_map(&self, i: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(9, self.n_dofs());
        for a in 0..3 {
            for s in 0..3 {
                for c in 0..self.layout.columns() {
                    g[(3 * a + s, self.layout.dof(a, c))] = self.gradients[(3 * i + s, c)];
                }
            }
        }
        g
    }

    /// DoF vector for a global translation `t` carried by the constant handle.
    /// Only meaningful for skinning layouts; `w0` is the constant weight value.
    pub fn translation_dofs(&self, t: &Vector3<f64>, w0: f64) -> DVector<f64> {
        let mut u = DMatrix::zeros(3, self.layout.columns());
        match self.layout {
            DofLayout::Skinning { .. } => {
                for a in 0..3 {
                    u[(a, 3)] = t[a] / w0;
                }
            }
            DofLayout::Nodal { nodes } => {
                for k in 0..nodes {
                    for a in 0..3 {
                        u[(a, k)] = t[a];
                    }
                }
            }
        }
        self.pack(&u)
    }

    /// DoF vector for the rigid motion `x ↦ c + R(x − c) + t` carried by the
    /// constant handle (skinning layouts only).
    pub fn rigid_dofs(&self, rotation: &Matrix3<f64>, center: &Point3<f64>, t: &Vector3<f64>, w0: f64) -> DVector<f64> {
        assert!(matches!(self.layout, DofLayout::Skinning { .. }), "rigid_dofs needs a skinning layout");
        // x − X = (R − I)(X − o) + (R − I)(o − c) + t
        let lin = rotation - Matrix3::identity();
        let trans = lin * (self.frame_origin - center) + t;
        let mut u = DMatrix::zeros(3, self.layout.columns());
        for a in 0..3 {
            for q in 0..3 {
                u[(a, q)] = lin[(a, q)] / w0;
            }
            u[(a, 3)] = trans[a] / w0;
        }
        self.pack(&u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skinning_dof_order_is_handle_major_row_flattened() {
        let l = DofLayout::Skinning { handles: 3 };
        assert_eq!(l.n_dofs(), 36);
        // Z_1[2, 3] → 12 + 8 + 3
        assert_eq!(l.dof(2, 4 + 3), 23);
        let mut seen = vec![false; 36];
        for a in 0..3 {
            for c in 0..12 {
                seen[l.dof(a, c)] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn nodal_dof_order() {
        let l = DofLayout::Nodal { nodes: 5 };
        assert_eq!(l.dof(1, 2), 7);
        assert_eq!(l.n_dofs(), 15);
    }
}
