//! Trajectory comparison metrics.

use nalgebra::Point3;
use serde::Serialize;

use crate::error::{HarnessError, Stage};
use crate::trajectory::TrajectoryFile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    /// Mean squared point distance over points and frames divided by the
    /// squared bounding-box diagonal of the reference's first frame.
    pub normalized_mse: f64,
    /// Largest point distance divided by the same diagonal.
    pub normalized_max_error: f64,
}

fn incomparable(message: String) -> HarnessError {
    HarnessError::Core {
        stage: Stage::Compare,
        source: rkpm_core::Error::IncomparableTrajectories(message),
    }
}

/// Compares `candidate` against `reference` frame by frame.
pub fn compare_frames(reference: &[Vec<Point3<f64>>], candidate: &[Vec<Point3<f64>>]) -> Result<Comparison, HarnessError> {
    if reference.is_empty() || reference.len() != candidate.len() {
        return Err(incomparable(format!("{} vs {} frames", reference.len(), candidate.len())));
    }
    let n = reference[0].len();
    if n == 0 {
        return Err(incomparable("reference has no points".into()));
    }
    if let Some(f) = reference.iter().zip(candidate).position(|(a, b)| a.len() != n || b.len() != n) {
        return Err(incomparable(format!(
            "frame {f}: {} vs {} points",
            reference[f].len(),
            candidate[f].len()
        )));
    }
    let diag = rkpm_core::sampling::Aabb::from_points(&reference[0]).expect("non-empty").diagonal();
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for (fa, fb) in reference.iter().zip(candidate) {
        for (a, b) in fa.iter().zip(fb) {
            let d2 = (a - b).norm_squared();
            sum += d2;
            max = max.max(d2);
        }
    }
    Ok(Comparison {
        normalized_mse: sum / (n * reference.len()) as f64 / (diag * diag),
        normalized_max_error: max.sqrt() / diag,
    })
}

/// Like [`compare_frames`], also requiring equal time steps.
pub fn compare(reference: &TrajectoryFile, candidate: &TrajectoryFile) -> Result<Comparison, HarnessError> {
    if (reference.h - candidate.h).abs() > 1e-12 * reference.h.abs().max(candidate.h.abs()) {
        return Err(incomparable(format!("time steps {} vs {}", reference.h, candidate.h)));
    }
    compare_frames(&reference.frames, &candidate.frames)
}
