use nalgebra::{Point3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::sampling::Aabb;

/// Selects integration points for point-type boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum PointSelector {
    Box(Aabb),
    Indices(Vec<usize>),
}

impl PointSelector {
    pub fn select(&self, points: &[Point3<f64>]) -> Result<Vec<usize>> {
        let picked: Vec<usize> = match self {
            PointSelector::Box(b) => (0..points.len()).filter(|&i| b.contains(&points[i])).collect(),
            PointSelector::Indices(idx) => {
                if let Some(&bad) = idx.iter().find(|&&i| i >= points.len()) {
                    return Err(Error::InvalidInput(format!(
                        "selector index {bad} out of range ({} points)",
                        points.len()
                    )));
                }
                idx.clone()
            }
        };
        if picked.is_empty() {
            return Err(Error::InvalidInput(format!("boundary selector {self:?} matches no integration point")));
        }
        Ok(picked)
    }
}

/// Time-parameterized target for penalized points.
#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    /// Held at rest.
    Fixed,
    /// Rigid rotation about an axis, angle growing linearly from 0 to
    /// `total_angle` (radians) over `ramp_time` and held afterwards.
    Twist {
        axis_origin: Point3<f64>,
        axis_direction: Vector3<f64>,
        total_angle: f64,
        ramp_time: f64,
    },
    /// Translation at constant velocity.
    Pull { velocity: Vector3<f64> },
}

impl Motion {
    pub fn target(&self, rest: &Point3<f64>, t: f64) -> Point3<f64> {
        match self {
            Motion::Fixed => *rest,
            Motion::Twist {
                axis_origin,
                axis_direction,
                total_angle,
                ramp_time,
            } => {
                let frac = if *ramp_time > 0.0 { (t / ramp_time).clamp(0.0, 1.0) } else { 1.0 };
                let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis_direction), total_angle * frac);
                axis_origin + rot * (rest - axis_origin)
            }
            Motion::Pull { velocity } => rest + velocity * t,
        }
    }
}

/// Boundary conditions and external loads of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// Quadratic penalty `½κ‖x_i − target_i(t)‖²` on the selected points.
    /// `stiffness: None` uses the scene default.
    Penalty {
        selector: PointSelector,
        motion: Motion,
        stiffness: Option<f64>,
    },
    /// Frictionless half-space `x·n ≥ offset` enforced by the penalty
    /// `½κ_c v_i max(0, offset − x_i·n)²`.
    GroundPlane {
        normal: Vector3<f64>,
        offset: f64,
        stiffness: Option<f64>,
    },
    Gravity(Vector3<f64>),
}

impl BoundaryCondition {
    pub fn fix_region(region: Aabb) -> Self {
        BoundaryCondition::Penalty {
            selector: PointSelector::Box(region),
            motion: Motion::Fixed,
            stiffness: None,
        }
    }

    pub fn twist_handle(region: Aabb, axis_origin: Point3<f64>, axis_direction: Vector3<f64>, total_angle: f64, ramp_time: f64) -> Self {
        BoundaryCondition::Penalty {
            selector: PointSelector::Box(region),
            motion: Motion::Twist {
                axis_origin,
                axis_direction,
                total_angle,
                ramp_time,
            },
            stiffness: None,
        }
    }

    pub fn pull_points(selector: PointSelector, velocity: Vector3<f64>) -> Self {
        BoundaryCondition::Penalty {
            selector,
            motion: Motion::Pull { velocity },
            stiffness: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryCondition::Penalty { stiffness, motion, .. } => {
                check_stiffness(*stiffness)?;
                if let Motion::Twist { axis_direction, ramp_time, .. } = motion {
                    if axis_direction.norm() == 0.0 || !axis_direction.iter().all(|v| v.is_finite()) {
                        return Err(Error::InvalidInput("twist axis must be a nonzero finite vector".into()));
                    }
                    if !(*ramp_time >= 0.0) {
                        return Err(Error::InvalidInput("twist ramp time must be non-negative".into()));
                    }
                }
                Ok(())
            }
            BoundaryCondition::GroundPlane { normal, stiffness, .. } => {
                check_stiffness(*stiffness)?;
                if normal.norm() == 0.0 {
                    return Err(Error::InvalidInput("ground normal must be nonzero".into()));
                }
                Ok(())
            }
            BoundaryCondition::Gravity(g) => {
                if g.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("gravity must be finite".into()))
                }
            }
        }
    }
}

fn check_stiffness(k: Option<f64>) -> Result<()> {
    match k {
        Some(k) if !(k.is_finite() && k > 0.0) => Err(Error::InvalidInput(format!("penalty stiffness must be > 0, got {k}"))),
        _ => Ok(()),
    }
}
