//! Integration points, material fields and kernel placement.
//!
//! Solids are sampled on a uniform grid over their bounding box and filtered
//! by their inside predicate; point clouds are used as-is. Kernel centers are
//! a farthest-point subset of the integration points, and each kernel's
//! Gaussian radius is the distance to its second-nearest neighbouring center.

mod material;
mod shape;

pub use material::{MaterialRegion, MaterialSpec, PointMaterial, RegionSelector};
pub use shape::{parse_point_cloud, Aabb, ShapeSource, Solid, TriMesh};

use nalgebra::Point3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Resolution of the voxel grid used to estimate how much of the bounding
/// box a shape occupies.
pub const OCCUPANCY_RESOLUTION: usize = 32;

/// Quadrature points with volume weights and per-point material.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationSet {
    pub points: Vec<Point3<f64>>,
    pub weights: Vec<f64>,
    pub lame_lambda: Vec<f64>,
    pub lame_mu: Vec<f64>,
    pub density: Vec<f64>,
}

impl IntegrationSet {
    /// Builds a set from points and weights, evaluating `material` at every point.
    pub fn new(points: Vec<Point3<f64>>, weights: Vec<f64>, material: &MaterialSpec) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::ContractViolation(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("integration weight must be positive, got {w}")));
        }
        material.validate()?;
        let n = points.len();
        let mut set = Self {
            points,
            weights,
            lame_lambda: Vec::with_capacity(n),
            lame_mu: Vec::with_capacity(n),
            density: Vec::with_capacity(n),
        };
        for p in &set.points {
            let m = material.at(p);
            let lame = m.lame()?;
            set.lame_lambda.push(lame.lambda);
            set.lame_mu.push(lame.mu);
            set.density.push(m.density);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().zip(&self.density).map(|(v, r)| v * r).sum()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.points).expect("integration set is never empty")
    }

    /// Mass-weighted centroid.
    pub fn centroid(&self) -> Point3<f64> {
        let mut c = nalgebra::Vector3::zeros();
        let mut m = 0.0;
        for ((p, v), r) in self.points.iter().zip(&self.weights).zip(&self.density) {
            c += p.coords * (v * r);
            m += v * r;
        }
        Point3::from(c / m)
    }

    /// Volume-weighted mean shear modulus.
    pub fn mean_mu(&self) -> f64 {
        let num: f64 = self.weights.iter().zip(&self.lame_mu).map(|(v, m)| v * m).sum();
        num / self.total_volume()
    }

    /// Copy with both Lamé fields multiplied by `factor`.
    pub fn with_scaled_material(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.lame_lambda.iter_mut().for_each(|l| *l *= factor);
        s.lame_mu.iter_mut().for_each(|m| *m *= factor);
        s
    }
}

/// Grid-samples a solid, or passes a point cloud through, producing
/// integration points with volume weights.
///
/// For solids the cell size is chosen so that the accepted count lands near
/// `target_count`. Clouds larger than `target_count` are randomly
/// subsampled with `seed`; smaller clouds are used whole.
pub fn sample_grid(
    shape: &ShapeSource,
    material: &MaterialSpec,
    target_count: usize,
    seed: u64,
) -> Result<IntegrationSet> {
    if target_count < 8 {
        return Err(Error::InvalidInput(format!("target_count must be >= 8, got {target_count}")));
    }
    let bbox = shape.validate()?;
    material.validate()?;
    match shape {
        ShapeSource::Solid(solid) => {
            let occupancy = occupancy_estimate(&bbox, |p| solid.contains(p));
            if occupancy == 0.0 {
                return Err(Error::DegenerateShape("no voxel of the bounding box lies inside the shape".into()));
            }
            let (points, cell_volume) = grid_interior(&bbox, target_count, occupancy, |p| solid.contains(p));
            if points.is_empty() {
                return Err(Error::DegenerateShape("no grid point lies inside the shape".into()));
            }
            let weights = vec![cell_volume; points.len()];
            IntegrationSet::new(points, weights, material)
        }
        ShapeSource::Cloud(cloud) => {
            let points: Vec<Point3<f64>> = if cloud.len() > target_count {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, cloud.len(), target_count).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| cloud[i]).collect()
            } else {
                cloud.clone()
            };
            let occupancy = cloud_occupancy(&bbox, cloud);
            let w = bbox.volume() * occupancy / points.len() as f64;
            let weights = vec![w; points.len()];
            IntegrationSet::new(points, weights, material)
        }
    }
}

/// Fraction of the `OCCUPANCY_RESOLUTION`³ voxel centres inside the shape.
pub fn occupancy_estimate(bbox: &Aabb, inside: impl Fn(&Point3<f64>) -> bool) -> f64 {
    let n = OCCUPANCY_RESOLUTION;
    let e = bbox.extents();
    let mut hits = 0usize;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = Point3::new(
                    bbox.min.x + (i as f64 + 0.5) * e.x / n as f64,
                    bbox.min.y + (j as f64 + 0.5) * e.y / n as f64,
                    bbox.min.z + (k as f64 + 0.5) * e.z / n as f64,
                );
                if inside(&p) {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 / (n * n * n) as f64
}

/// Fraction of voxels containing at least one cloud point.
fn cloud_occupancy(bbox: &Aabb, cloud: &[Point3<f64>]) -> f64 {
    let n = OCCUPANCY_RESOLUTION;
    let e = bbox.extents();
    let mut occupied = vec![false; n * n * n];
    for p in cloud {
        let cell = |a: usize| (((p[a] - bbox.min[a]) / e[a] * n as f64) as usize).min(n - 1);
        occupied[(cell(0) * n + cell(1)) * n + cell(2)] = true;
    }
    occupied.iter().filter(|&&o| o).count() as f64 / occupied.len() as f64
}

/// Per-axis cell counts for a grid of roughly cubic cells over `bbox` holding
/// about `target / occupancy` cells in total.
pub fn grid_resolution(bbox: &Aabb, target: usize, occupancy: f64) -> [usize; 3] {
    let e = bbox.extents();
    let cells = target as f64 / occupancy;
    let h = (bbox.volume() / cells).cbrt();
    // Relative slack absorbs rounding in extent / h for exact fits like 1.0 / 0.1.
    [0, 1, 2].map(|a| ((e[a] / h) * (1.0 - 1e-9)).ceil().max(1.0) as usize)
}

fn grid_interior(
    bbox: &Aabb,
    target: usize,
    occupancy: f64,
    inside: impl Fn(&Point3<f64>) -> bool,
) -> (Vec<Point3<f64>>, f64) {
    let res = grid_resolution(bbox, target, occupancy);
    let e = bbox.extents();
    let cell = [e.x / res[0] as f64, e.y / res[1] as f64, e.z / res[2] as f64];
    let mut points = Vec::new();
    for i in 0..res[0] {
        for j in 0..res[1] {
            for k in 0..res[2] {
                let p = Point3::new(
                    bbox.min.x + (i as f64 + 0.5) * cell[0],
                    bbox.min.y + (j as f64 + 0.5) * cell[1],
                    bbox.min.z + (k as f64 + 0.5) * cell[2],
                );
                if inside(&p) {
                    points.push(p);
                }
            }
        }
    }
    (points, cell[0] * cell[1] * cell[2])
}

/// Greedy farthest-point subset of `count` indices.
///
/// The first pick is the point nearest the centroid; each later pick
/// maximizes the distance to the already-picked set. Ties go to the lowest
/// index, so the result is fully deterministic.
pub fn farthest_point_sampling(points: &[Point3<f64>], count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::InvalidInput("farthest point sampling needs count >= 1".into()));
    }
    if count > points.len() {
        return Err(Error::InsufficientPoints {
            requested: count,
            available: points.len(),
        });
    }
    let centroid = Point3::from(points.iter().map(|p| p.coords).sum::<nalgebra::Vector3<f64>>() / points.len() as f64);
    let first = argmin(points.iter().map(|p| (p - centroid).norm_squared()));

    let mut picked = Vec::with_capacity(count);
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut next = first;
    for _ in 0..count {
        picked.push(next);
        let q = points[next];
        for (d, p) in min_dist.iter_mut().zip(points) {
            *d = d.min((p - q).norm_squared());
        }
        next = argmax(min_dist.iter().copied());
    }
    Ok(picked)
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Gaussian kernel centers `p_k` with per-kernel radii `r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub centers: Vec<Point3<f64>>,
    pub radii: Vec<f64>,
}

impl KernelSet {
    pub fn new(centers: Vec<Point3<f64>>, radii: Vec<f64>) -> Result<Self> {
        if centers.len() != radii.len() {
            return Err(Error::ContractViolation(format!(
                "{} centers but {} radii",
                centers.len(),
                radii.len()
            )));
        }
        if centers.len() < 4 {
            return Err(Error::InvalidInput(format!("need at least 4 kernels, got {}", centers.len())));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidInput(format!("kernel radius must be positive, got {r}")));
        }
        Ok(Self { centers, radii })
    }

    /// Centers from `center_points` with radii from [`kernel_radii`].
    pub fn from_centers(center_points: Vec<Point3<f64>>) -> Result<Self> {
        let radii = kernel_radii(&center_points)?;
        Self::new(center_points, radii)
    }

    /// Farthest-point subset of the integration points, as used for every scene.
    pub fn select(integ: &IntegrationSet, count: usize) -> Result<Self> {
        let idx = farthest_point_sampling(&integ.points, count)?;
        Self::from_centers(idx.into_iter().map(|i| integ.points[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn mean_radius(&self) -> f64 {
        self.radii.iter().sum::<f64>() / self.radii.len() as f64
    }

    /// Reorders kernels so that new kernel `i` is old kernel `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            centers: perm.iter().map(|&i| self.centers[i]).collect(),
            radii: perm.iter().map(|&i| self.radii[i]).collect(),
        }
    }
}

/// Distance from each center to its second-nearest other center.
pub fn kernel_radii(centers: &[Point3<f64>]) -> Result<Vec<f64>> {
    if centers.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "kernel radii need at least 3 centers, got {}",
            centers.len()
        )));
    }
    let mut radii = Vec::with_capacity(centers.len());
    for (k, p) in centers.iter().enumerate() {
        let (mut first, mut second) = (f64::INFINITY, f64::INFINITY);
        for (l, q) in centers.iter().enumerate() {
            if l == k {
                continue;
            }
            let d = (p - q).norm();
            if d == 0.0 {
                return Err(Error::DegenerateCenters(k.min(l), k.max(l)));
            }
            if d < first {
                second = first;
                first = d;
            } else if d < second {
                second = d;
            }
        }
        radii.push(second);
    }
    Ok(radii)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ShapeSource {
        ShapeSource::Solid(Solid::Box(Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0))))
    }

    fn steel() -> MaterialSpec {
        MaterialSpec::homogeneous(5e6, 0.45, 1e3)
    }

    #[test]
    fn unit_cube_target_1000_is_a_10_cubed_grid() {
        let s = sample_grid(&unit_box(), &steel(), 1000, 0).unwrap();
        assert_eq!(s.len(), 1000);
        for w in &s.weights {
            assert!((w - 1e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn beam_volume_within_five_percent() {
        let beam = ShapeSource::Solid(Solid::Box(Aabb::new(Point3::origin(), Point3::new(5.0, 1.0, 1.0))));
        let s = sample_grid(&beam, &steel(), 5000, 0).unwrap();
        assert!((s.total_volume() - 5.0).abs() < 0.05 * 5.0);
        assert!((s.len() as f64 - 5000.0).abs() < 0.1 * 5000.0);
    }

    #[test]
    fn sphere_acceptance_fraction_matches_volume_ratio() {
        let sphere = ShapeSource::Solid(Solid::Sphere {
            center: Point3::new(0.5, 0.5, 0.5),
            radius: 0.5,
        });
        let s = sample_grid(&sphere, &steel(), 8000, 0).unwrap();
        let res = grid_resolution(&Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)), 8000, {
            occupancy_estimate(&Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)), |p| {
                (p - Point3::new(0.5, 0.5, 0.5)).norm() <= 0.5
            })
        });
        let fraction = s.len() as f64 / (res[0] * res[1] * res[2]) as f64;
        assert!((fraction - std::f64::consts::PI / 6.0).abs() < 0.03, "fraction {fraction}");
        assert!(s.points.iter().all(|p| (p - Point3::new(0.5, 0.5, 0.5)).norm() <= 0.5));
    }

    #[test]
    fn empty_solid_is_degenerate() {
        let mesh = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            // Inward-facing single triangle: winding number never exceeds 1/2.
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let r = sample_grid(&ShapeSource::Solid(Solid::Mesh(mesh)), &steel(), 100, 0);
        assert!(matches!(r, Err(Error::DegenerateShape(_))), "{r:?}");
    }

    #[test]
    fn cloud_weights_use_voxel_occupancy() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    pts.push(Point3::new(i as f64, j as f64, k as f64) / 9.0);
                }
            }
        }
        let s = sample_grid(&ShapeSource::Cloud(pts.clone()), &steel(), 5000, 0).unwrap();
        assert_eq!(s.points, pts);
        let expected = 1000.0 / 32768.0 / 1000.0;
        assert!((s.weights[0] - expected).abs() < 1e-15);

        let sub = sample_grid(&ShapeSource::Cloud(pts), &steel(), 100, 7).unwrap();
        assert_eq!(sub.len(), 100);
    }

    #[test]
    fn fps_on_all_points_returns_all() {
        let corners: Vec<_> = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let mut idx = farthest_point_sampling(&corners, 8).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn fps_collinear_picks_endpoints() {
        let pts: Vec<_> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let idx = farthest_point_sampling(&pts, 3).unwrap();
        assert!(idx[0] == 1 || idx[0] == 2);
        assert!(idx.contains(&0) && idx.contains(&3));
    }

    #[test]
    fn fps_rejects_too_many() {
        let pts = vec![Point3::origin(); 3];
        assert!(matches!(
            farthest_point_sampling(&pts, 4),
            Err(Error::InsufficientPoints { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn radii_second_nearest() {
        let c = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(3.0, 0.0, 0.0)];
        let r = kernel_radii(&c).unwrap();
        assert_eq!(r, vec![3.0, 2.0, 3.0]);
    }

    #[test]
    fn radii_on_regular_grid_equal_spacing() {
        let h = 0.25;
        let mut c = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    c.push(Point3::new(i as f64, j as f64, k as f64) * h);
                }
            }
        }
        let r = kernel_radii(&c).unwrap();
        for (p, rk) in c.iter().zip(&r) {
            let interior = p.iter().all(|&v| v > 0.0 && v < 4.0 * h);
            if interior {
                assert!((rk - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_centers_are_rejected() {
        let c = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0)];
        assert_eq!(kernel_radii(&c), Err(Error::DegenerateCenters(0, 2)));
    }
}
