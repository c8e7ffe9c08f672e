use nalgebra::DVector;

use super::Kinematics;
use crate::elasticity::{cauchy_stress, LameParams};
use crate::error::{Error, Result};
use crate::sampling::IntegrationSet;

/// Display range for principal stresses, in Pa.
pub const DEFAULT_STRESS_RANGE: (f64, f64) = (-1e6, 1e6);

/// Per-point principal Cauchy stresses (ascending, clamped to the requested
/// range). Points with `det F ≤ 0` carry zeros and are listed in `inverted`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub principal: Vec<[f64; 3]>,
    pub inverted: Vec<usize>,
}

impl StressField {
    /// Largest absolute principal stress over `points`.
    pub fn max_abs(&self, points: &[usize]) -> f64 {
        points
            .iter()
            .flat_map(|&i| self.principal[i])
            .fold(0.0, |m, s| m.max(s.abs()))
    }
}

pub fn evaluate_stress_field(z: &DVector<f64>, kin: &Kinematics, integ: &IntegrationSet, range: (f64, f64)) -> Result<StressField> {
    if kin.n_points() != integ.len() {
        return Err(Error::ContractViolation(format!(
            "kinematics over {} points, integration set of {}",
            kin.n_points(),
            integ.len()
        )));
    }
    if !(range.0 <= range.1) {
        return Err(Error::InvalidInput(format!("empty stress range [{}, {}]", range.0, range.1)));
    }
    let fs = kin.deformation_gradients(z);
    let mut field = StressField {
        principal: Vec::with_capacity(fs.len()),
        inverted: Vec::new(),
    };
    for (i, f) in fs.iter().enumerate() {
        let lame = LameParams::new(integ.lame_lambda[i], integ.lame_mu[i])?;
        match cauchy_stress(f, &lame) {
            Ok(s) => field.principal.push(s.principal.map(|p| p.clamp(range.0, range.1))),
            Err(Error::InvertedElement(_)) | Err(Error::NonInvertibleDeformation(_)) => {
                field.principal.push([0.0; 3]);
                field.inverted.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(field)
}
