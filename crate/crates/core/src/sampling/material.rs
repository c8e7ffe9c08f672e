use nalgebra::Point3;

use super::shape::Aabb;
use crate::elasticity::LameParams;
use crate::error::{Error, Result};

/// Where a material override applies.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSelector {
    Box(Aabb),
    /// Points whose distance to `center` lies in `[inner_radius, outer_radius)`.
    Shell {
        center: Point3<f64>,
        inner_radius: f64,
        outer_radius: f64,
    },
}

impl RegionSelector {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            RegionSelector::Box(b) => b.contains(p),
            RegionSelector::Shell {
                center,
                inner_radius,
                outer_radius,
            } => {
                let r = (p - center).norm();
                r >= *inner_radius && r < *outer_radius
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRegion {
    pub selector: RegionSelector,
    pub young_modulus: Option<f64>,
    pub poisson_ratio: Option<f64>,
    pub density: Option<f64>,
}

/// Isotropic material with optional per-region overrides. Regions are applied
/// in order, so when several match a point the last one wins.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    pub regions: Vec<MaterialRegion>,
}

/// Engineering constants at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMaterial {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

impl PointMaterial {
    pub fn lame(&self) -> Result<LameParams> {
        LameParams::from_engineering(self.young_modulus, self.poisson_ratio)
    }
}

impl MaterialSpec {
    pub fn homogeneous(young_modulus: f64, poisson_ratio: f64, density: f64) -> Self {
        Self {
            young_modulus,
            poisson_ratio,
            density,
            regions: Vec::new(),
        }
    }

    pub fn with_region(mut self, region: MaterialRegion) -> Self {
        self.regions.push(region);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_constants(self.young_modulus, self.poisson_ratio, self.density, "default")?;
        for (i, r) in self.regions.iter().enumerate() {
            let ctx = format!("region {i}");
            check_constants(
                r.young_modulus.unwrap_or(self.young_modulus),
                r.poisson_ratio.unwrap_or(self.poisson_ratio),
                r.density.unwrap_or(self.density),
                &ctx,
            )?;
            if let RegionSelector::Shell {
                inner_radius,
                outer_radius,
                ..
            } = r.selector
            {
                if !(inner_radius >= 0.0 && outer_radius > inner_radius) {
                    return Err(Error::InvalidInput(format!(
                        "{ctx}: shell radii must satisfy 0 <= inner < outer"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, p: &Point3<f64>) -> PointMaterial {
        let mut m = PointMaterial {
            young_modulus: self.young_modulus,
            poisson_ratio: self.poisson_ratio,
            density: self.density,
        };
        for r in self.regions.iter().filter(|r| r.selector.contains(p)) {
            if let Some(e) = r.young_modulus {
                m.young_modulus = e;
            }
            if let Some(nu) = r.poisson_ratio {
                m.poisson_ratio = nu;
            }
            if let Some(rho) = r.density {
                m.density = rho;
            }
        }
        m
    }
}

fn check_constants(e: f64, nu: f64, rho: f64, ctx: &str) -> Result<()> {
    if !(e.is_finite() && e > 0.0) {
        return Err(Error::InvalidInput(format!("{ctx}: young_modulus must be > 0, got {e}")));
    }
    if nu >= 0.5 {
        return Err(Error::IncompressibleLimit(nu));
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidInput(format!(
            "{ctx}: poisson_ratio must lie in (0, 0.5), got {nu}"
        )));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidInput(format!("{ctx}: density must be > 0, got {rho}")));
    }
    Ok(())
}
