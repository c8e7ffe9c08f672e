//! One-call setup of integration points, kernels and the evaluated basis.

use crate::basis::{BasisTable, RkpmBasis};
use crate::error::Result;
use crate::sampling::{sample_grid, IntegrationSet, KernelSet, MaterialSpec, ShapeSource};

#[derive(Debug, Clone)]
pub struct Discretization {
    pub integ: IntegrationSet,
    pub basis: RkpmBasis,
    pub table: BasisTable,
}

impl Discretization {
    /// Samples `shape` with about `points` integration points, places
    /// `kernels` FPS kernels and tabulates the corrected basis at every
    /// integration point. `cutoff: None` keeps every kernel active everywhere.
    pub fn build(
        shape: &ShapeSource,
        material: &MaterialSpec,
        points: usize,
        kernels: usize,
        seed: u64,
        cutoff: Option<f64>,
    ) -> Result<Self> {
        let integ = sample_grid(shape, material, points, seed)?;
        let ks = KernelSet::select(&integ, kernels)?;
        Self::from_kernels(integ, ks, cutoff)
    }

    pub fn from_kernels(integ: IntegrationSet, kernels: KernelSet, cutoff: Option<f64>) -> Result<Self> {
        let basis = RkpmBasis::with_cutoff(kernels, cutoff);
        let table = BasisTable::build(&basis, &integ.points)?;
        Ok(Self { integ, basis, table })
    }

    pub fn n_kernels(&self) -> usize {
        self.basis.len()
    }
}
