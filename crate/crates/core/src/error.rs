use nalgebra::Point3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("insufficient points: requested {requested}, available {available}")]
    InsufficientPoints { requested: usize, available: usize },

    #[error("degenerate centers: centers {0} and {1} coincide")]
    DegenerateCenters(usize, usize),

    /// The moment matrix at a query point is too close to singular to reproduce
    /// linear fields. `points` lists every offending location.
    #[error("uncovered query point{}: {}", if points.len() > 1 { "s" } else { "" }, format_points(points))]
    UncoveredQueryPoint { points: Vec<Point3<f64>> },

    #[error("incompressible limit unsupported: poisson_ratio = {0}")]
    IncompressibleLimit(f64),

    #[error("non-invertible deformation (det F = {0:e})")]
    NonInvertibleDeformation(f64),

    #[error("inverted element (det F = {0:e})")]
    InvertedElement(f64),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("eigensolve failed after {iterations} iterations (residual {residual:e})")]
    EigensolveFailed { iterations: usize, residual: f64 },

    #[error("basis defect: {0}")]
    BasisDefect(String),

    #[error("diverged state: {0}")]
    DivergedState(String),

    #[error("incomparable trajectories: {0}")]
    IncomparableTrajectories(String),
}

fn format_points(points: &[Point3<f64>]) -> String {
    const SHOWN: usize = 4;
    let mut s = points
        .iter()
        .take(SHOWN)
        .map(|p| format!("({:.6}, {:.6}, {:.6})", p.x, p.y, p.z))
        .collect::<Vec<_>>()
        .join(", ");
    if points.len() > SHOWN {
        s.push_str(&format!(" and {} more", points.len() - SHOWN));
    }
    s
}

pub type Result<T> = std::result::Result<T, Error>;
