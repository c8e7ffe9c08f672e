//! Versioned TOML scene description.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rkpm_core::sampling::{
    parse_point_cloud, Aabb, MaterialRegion, MaterialSpec, RegionSelector, ShapeSource, Solid, TriMesh,
};
use rkpm_core::simulate::{BoundaryCondition, Motion, PointSelector, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Stage};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub shape: ShapeConfig,
    pub material: MaterialConfig,
    pub sampling: SamplingConfig,
    pub modes: ModesConfig,
    pub time: TimeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary: Vec<BoundaryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<PlaneConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    /// Closed triangle mesh in OBJ format; grid-sampled with an inside test.
    Mesh { path: PathBuf },
    /// "x y z" per line, used directly as integration points.
    Cloud { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub selector: RegionSelectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub young_modulus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSelectorConfig {
    Box { min: [f64; 3], max: [f64; 3] },
    Shell { center: [f64; 3], inner_radius: f64, outer_radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub points: usize,
    pub kernels: usize,
    /// Keep every kernel active at every point instead of truncating at
    /// the support cutoff.
    #[serde(default)]
    pub dense_basis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    /// Non-constant modes.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub step: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    FixRegion {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<BoxConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indices: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
    TwistHandle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<BoxConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indices: Option<Vec<usize>>,
        axis_origin: [f64; 3],
        axis_direction: [f64; 3],
        angle_degrees: f64,
        /// Time at which the full angle is reached; defaults to the duration.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ramp_time: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
    PullPoints {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<BoxConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indices: Option<Vec<usize>>,
        velocity: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
    GroundPlane {
        normal: [f64; 3],
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
    Gravity {
        acceleration: [f64; 3],
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_projection: Option<bool>,
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn point(a: [f64; 3]) -> Point3<f64> {
    Point3::from(a)
}

fn finite3(a: &[f64; 3], field: &str) -> Result<(), HarnessError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(field_error(field, "must be finite"))
    }
}

fn positive(v: f64, field: &str) -> Result<(), HarnessError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_error(field, format!("must be > 0, got {v}")))
    }
}

fn check_box(b: &BoxConfig, field: &str) -> Result<Aabb, HarnessError> {
    finite3(&b.min, &format!("{field}.min"))?;
    finite3(&b.max, &format!("{field}.max"))?;
    if (0..3).any(|a| b.min[a] > b.max[a]) {
        return Err(field_error(field, "min must not exceed max"));
    }
    Ok(Aabb::new(point(b.min), point(b.max)))
}

fn selector(
    region: &Option<BoxConfig>,
    indices: &Option<Vec<usize>>,
    field: &str,
    shape_box: &Aabb,
) -> Result<PointSelector, HarnessError> {
    match (region, indices) {
        (Some(b), None) => {
            let aabb = check_box(b, &format!("{field}.region"))?;
            if !aabb.intersects(shape_box) {
                return Err(field_error(format!("{field}.region"), "does not intersect the shape"));
            }
            Ok(PointSelector::Box(aabb))
        }
        (None, Some(idx)) if !idx.is_empty() => Ok(PointSelector::Indices(idx.clone())),
        (None, Some(_)) => Err(field_error(format!("{field}.indices"), "must not be empty")),
        _ => Err(field_error(field, "exactly one of `region` or `indices` is required")),
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Reads a config file; relative shape paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(Stage::Config, path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.shape {
            ShapeConfig::Mesh { path } | ShapeConfig::Cloud { path } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config is always representable as TOML")
    }

    /// Number of implicit steps; the trajectory has one more frame.
    pub fn steps(&self) -> usize {
        ((self.time.duration / self.time.step) * (1.0 + 1e-12)).floor() as usize
    }

    /// Checks every field that can be checked without touching the disk.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != CONFIG_VERSION {
            return Err(field_error(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        let shape_box = self.shape_bbox()?;
        self.material_spec()?;
        if self.sampling.points < 8 {
            return Err(field_error("sampling.points", "must be at least 8"));
        }
        if self.sampling.kernels < 4 {
            return Err(field_error("sampling.kernels", "must be at least 4"));
        }
        if self.sampling.kernels > self.sampling.points {
            return Err(field_error("sampling.kernels", "must not exceed sampling.points"));
        }
        if self.modes.count == 0 {
            return Err(field_error("modes.count", "must be at least 1"));
        }
        if self.modes.count + 1 > self.sampling.kernels {
            return Err(field_error(
                "modes.count",
                format!("count + 1 must not exceed sampling.kernels ({})", self.sampling.kernels),
            ));
        }
        positive(self.time.step, "time.step")?;
        positive(self.time.duration, "time.duration")?;
        if self.steps() == 0 {
            return Err(field_error("time.duration", "must be at least time.step"));
        }
        if let Some(g) = &self.gravity {
            finite3(g, "gravity")?;
        }
        if let Some(c) = &self.contact {
            self.plane(c, "contact")?;
        }
        for (i, b) in self.boundary.iter().enumerate() {
            self.boundary_condition(b, &format!("boundary[{i}]"), &shape_box)?;
        }
        let s = &self.solver;
        if let Some(t) = s.tolerance {
            positive(t, "solver.tolerance")?;
        }
        if s.max_iterations == Some(0) {
            return Err(field_error("solver.max_iterations", "must be at least 1"));
        }
        if let Some(k) = s.penalty_stiffness {
            positive(k, "solver.penalty_stiffness")?;
        }
        Ok(())
    }

    fn shape_bbox(&self) -> Result<Aabb, HarnessError> {
        match &self.shape {
            ShapeConfig::Box { min, max } => check_box(&BoxConfig { min: *min, max: *max }, "shape"),
            ShapeConfig::Sphere { center, radius } => {
                finite3(center, "shape.center")?;
                positive(*radius, "shape.radius")?;
                let r = Vector3::repeat(*radius);
                Ok(Aabb::new(point(*center) - r, point(*center) + r))
            }
            // File-backed shapes are checked once loaded.
            ShapeConfig::Mesh { .. } | ShapeConfig::Cloud { .. } => Ok(Aabb::new(
                Point3::from(Vector3::repeat(f64::NEG_INFINITY)),
                Point3::from(Vector3::repeat(f64::INFINITY)),
            )),
        }
    }

    pub fn material_spec(&self) -> Result<MaterialSpec, HarnessError> {
        let m = &self.material;
        positive(m.young_modulus, "material.young_modulus")?;
        positive(m.density, "material.density")?;
        check_poisson(m.poisson_ratio, "material.poisson_ratio")?;
        let mut spec = MaterialSpec::homogeneous(m.young_modulus, m.poisson_ratio, m.density);
        for (i, r) in m.regions.iter().enumerate() {
            let field = format!("material.regions[{i}]");
            if let Some(e) = r.young_modulus {
                positive(e, &format!("{field}.young_modulus"))?;
            }
            if let Some(nu) = r.poisson_ratio {
                check_poisson(nu, &format!("{field}.poisson_ratio"))?;
            }
            if let Some(rho) = r.density {
                positive(rho, &format!("{field}.density"))?;
            }
            let selector = match &r.selector {
                RegionSelectorConfig::Box { min, max } => {
                    RegionSelector::Box(check_box(&BoxConfig { min: *min, max: *max }, &format!("{field}.selector"))?)
                }
                RegionSelectorConfig::Shell {
                    center,
                    inner_radius,
                    outer_radius,
                } => {
                    finite3(center, &format!("{field}.selector.center"))?;
                    if !(*inner_radius >= 0.0 && outer_radius > inner_radius && outer_radius.is_finite()) {
                        return Err(field_error(
                            format!("{field}.selector"),
                            "shell radii must satisfy 0 <= inner_radius < outer_radius",
                        ));
                    }
                    RegionSelector::Shell {
                        center: point(*center),
                        inner_radius: *inner_radius,
                        outer_radius: *outer_radius,
                    }
                }
            };
            spec = spec.with_region(MaterialRegion {
                selector,
                young_modulus: r.young_modulus,
                poisson_ratio: r.poisson_ratio,
                density: r.density,
            });
        }
        Ok(spec)
    }

    /// Loads the geometry, reading mesh and cloud files.
    pub fn shape_source(&self) -> Result<ShapeSource, HarnessError> {
        let read = |path: &Path| std::fs::read_to_string(path).map_err(|e| HarnessError::io(Stage::Sampling, path, e));
        let core = |e| HarnessError::Core {
            stage: Stage::Sampling,
            source: e,
        };
        let shape = match &self.shape {
            ShapeConfig::Box { min, max } => ShapeSource::Solid(Solid::Box(Aabb::new(point(*min), point(*max)))),
            ShapeConfig::Sphere { center, radius } => ShapeSource::Solid(Solid::Sphere {
                center: point(*center),
                radius: *radius,
            }),
            ShapeConfig::Mesh { path } => ShapeSource::Solid(Solid::Mesh(TriMesh::from_obj(&read(path)?).map_err(core)?)),
            ShapeConfig::Cloud { path } => ShapeSource::Cloud(parse_point_cloud(&read(path)?).map_err(core)?),
        };
        shape.validate().map_err(core)?;
        Ok(shape)
    }

    fn plane(&self, p: &PlaneConfig, field: &str) -> Result<BoundaryCondition, HarnessError> {
        finite3(&p.normal, &format!("{field}.normal"))?;
        let n = Vector3::from(p.normal);
        if n.norm() == 0.0 {
            return Err(field_error(format!("{field}.normal"), "must be non-zero"));
        }
        if !p.offset.is_finite() {
            return Err(field_error(format!("{field}.offset"), "must be finite"));
        }
        if let Some(k) = p.stiffness {
            positive(k, &format!("{field}.stiffness"))?;
        }
        Ok(BoundaryCondition::GroundPlane {
            normal: n.normalize(),
            offset: p.offset / n.norm(),
            stiffness: p.stiffness,
        })
    }

    fn boundary_condition(&self, b: &BoundaryConfig, field: &str, shape_box: &Aabb) -> Result<BoundaryCondition, HarnessError> {
        let stiff = |k: &Option<f64>| -> Result<Option<f64>, HarnessError> {
            if let Some(k) = k {
                positive(*k, &format!("{field}.stiffness"))?;
            }
            Ok(*k)
        };
        Ok(match b {
            BoundaryConfig::FixRegion {
                region,
                indices,
                stiffness,
            } => BoundaryCondition::Penalty {
                selector: selector(region, indices, field, shape_box)?,
                motion: Motion::Fixed,
                stiffness: stiff(stiffness)?,
            },
            BoundaryConfig::TwistHandle {
                region,
                indices,
                axis_origin,
                axis_direction,
                angle_degrees,
                ramp_time,
                stiffness,
            } => {
                finite3(axis_origin, &format!("{field}.axis_origin"))?;
                finite3(axis_direction, &format!("{field}.axis_direction"))?;
                if Vector3::from(*axis_direction).norm() == 0.0 {
                    return Err(field_error(format!("{field}.axis_direction"), "must be non-zero"));
                }
                if !angle_degrees.is_finite() {
                    return Err(field_error(format!("{field}.angle_degrees"), "must be finite"));
                }
                let ramp = ramp_time.unwrap_or(self.time.duration);
                positive(ramp, &format!("{field}.ramp_time"))?;
                BoundaryCondition::Penalty {
                    selector: selector(region, indices, field, shape_box)?,
                    motion: Motion::Twist {
                        axis_origin: point(*axis_origin),
                        axis_direction: Vector3::from(*axis_direction),
                        total_angle: angle_degrees.to_radians(),
                        ramp_time: ramp,
                    },
                    stiffness: stiff(stiffness)?,
                }
            }
            BoundaryConfig::PullPoints {
                region,
                indices,
                velocity,
                stiffness,
            } => {
                finite3(velocity, &format!("{field}.velocity"))?;
                BoundaryCondition::Penalty {
                    selector: selector(region, indices, field, shape_box)?,
                    motion: Motion::Pull {
                        velocity: Vector3::from(*velocity),
                    },
                    stiffness: stiff(stiffness)?,
                }
            }
            BoundaryConfig::GroundPlane {
                normal,
                offset,
                stiffness,
            } => self.plane(
                &PlaneConfig {
                    normal: *normal,
                    offset: *offset,
                    stiffness: *stiffness,
                },
                field,
            )?,
            BoundaryConfig::Gravity { acceleration } => {
                finite3(acceleration, &format!("{field}.acceleration"))?;
                BoundaryCondition::Gravity(Vector3::from(*acceleration))
            }
        })
    }

    /// All loads and constraints, including top-level gravity and contact.
    pub fn boundary_conditions(&self) -> Result<Vec<BoundaryCondition>, HarnessError> {
        let shape_box = self.shape_bbox()?;
        let mut out = Vec::new();
        if let Some(g) = self.gravity {
            finite3(&g, "gravity")?;
            out.push(BoundaryCondition::Gravity(Vector3::from(g)));
        }
        if let Some(c) = &self.contact {
            out.push(self.plane(c, "contact")?);
        }
        for (i, b) in self.boundary.iter().enumerate() {
            out.push(self.boundary_condition(b, &format!("boundary[{i}]"), &shape_box)?);
        }
        Ok(out)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        let s = &self.solver;
        if let Some(t) = s.tolerance {
            o.tolerance = t;
        }
        if let Some(n) = s.max_iterations {
            o.max_iterations = n;
        }
        if let Some(p) = s.psd_projection {
            o.psd_projection = p;
        }
        o.penalty_stiffness = s.penalty_stiffness;
        o
    }

    pub fn cutoff(&self) -> Option<f64> {
        if self.sampling.dense_basis {
            None
        } else {
            Some(rkpm_core::basis::SUPPORT_CUTOFF)
        }
    }
}

fn check_poisson(nu: f64, field: &str) -> Result<(), HarnessError> {
    if nu.is_finite() && nu > 0.0 && nu < 0.5 {
        Ok(())
    } else {
        Err(field_error(field, format!("must lie in (0, 0.5), got {nu}")))
    }
}

/// The 5 m × 1 m × 1 m beam with the standard test material.
pub fn beam_scene(m: usize) -> SceneConfig {
    SceneConfig {
        version: CONFIG_VERSION,
        seed: 0,
        shape: ShapeConfig::Box {
            min: [0.0; 3],
            max: [5.0, 1.0, 1.0],
        },
        material: MaterialConfig {
            young_modulus: 5e6,
            poisson_ratio: 0.45,
            density: 1e3,
            regions: Vec::new(),
        },
        sampling: SamplingConfig {
            points: 2000,
            kernels: 150,
            dense_basis: false,
        },
        modes: ModesConfig { count: m },
        time: TimeConfig {
            step: 0.01,
            duration: 1.0,
        },
        gravity: Some([0.0, 0.0, -9.81]),
        boundary: vec![BoundaryConfig::FixRegion {
            region: Some(BoxConfig {
                min: [-1.0, -1.0, -1.0],
                max: [0.5, 2.0, 2.0],
            }),
            indices: None,
            stiffness: None,
        }],
        contact: None,
        solver: SolverConfig::default(),
    }
}
