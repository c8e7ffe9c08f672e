use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    /// Smallest box containing every point. Returns `None` for an empty slice.
    pub fn from_points(points: &[Point3<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Aabb::new(*first, *first);
        for p in &points[1..] {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        self.extents().product()
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// True when the two (closed) boxes overlap.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn is_finite(&self) -> bool {
        self.min.iter().chain(self.max.iter()).all(|v| v.is_finite())
    }
}

/// Closed triangle mesh with a generalized-winding-number inside test.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no triangles".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidInput(format!(
                "triangle {t:?} references a vertex out of range ({} vertices)",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("mesh has non-finite vertex coordinates".into()));
        }
        Ok(Self { vertices, triangles })
    }

    /// Parses the `v` and `f` records of a Wavefront OBJ document. Polygonal
    /// faces are fan-triangulated; texture and normal indices are ignored.
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<f64> = tokens
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::InvalidInput(format!("obj line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::InvalidInput(format!(
                            "obj line {}: vertex needs 3 coordinates",
                            lineno + 1
                        )));
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = tokens
                        .map(|t| {
                            let head = t.split('/').next().unwrap_or("");
                            let i: i64 = head.parse().map_err(|e| {
                                Error::InvalidInput(format!("obj line {}: {e}", lineno + 1))
                            })?;
                            // OBJ indices are 1-based; negative values count back from the end.
                            let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                            usize::try_from(resolved).map_err(|_| {
                                Error::InvalidInput(format!("obj line {}: bad index {i}", lineno + 1))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(Error::InvalidInput(format!(
                            "obj line {}: face needs at least 3 vertices",
                            lineno + 1
                        )));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices).expect("validated mesh has vertices")
    }

    /// Generalized winding number: solid angle subtended by the surface over 4π.
    pub fn winding_number(&self, p: &Point3<f64>) -> f64 {
        let mut total = 0.0;
        for t in &self.triangles {
            let a = self.vertices[t[0]] - p;
            let b = self.vertices[t[1]] - p;
            let c = self.vertices[t[2]] - p;
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let numer = a.dot(&b.cross(&c));
            let denom = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * numer.atan2(denom);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.winding_number(p) > 0.5
    }
}

/// Analytic solid with an inside/outside predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Solid {
    Box(Aabb),
    Sphere { center: Point3<f64>, radius: f64 },
    Mesh(TriMesh),
}

impl Solid {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            Solid::Box(b) => b.contains(p),
            Solid::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Solid::Mesh(m) => m.contains(p),
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match self {
            Solid::Box(b) => *b,
            Solid::Sphere { center, radius } => {
                let r = Vector3::repeat(*radius);
                Aabb::new(center - r, center + r)
            }
            Solid::Mesh(m) => m.bounding_box(),
        }
    }
}

/// The object to be simulated: either a bare point cloud whose points are used
/// directly as integration points, or a solid that is grid-sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSource {
    Cloud(Vec<Point3<f64>>),
    Solid(Solid),
}

impl ShapeSource {
    pub fn bounding_box(&self) -> Option<Aabb> {
        match self {
            ShapeSource::Cloud(points) => Aabb::from_points(points),
            ShapeSource::Solid(s) => Some(s.bounding_box()),
        }
    }

    pub fn validate(&self) -> Result<Aabb> {
        if let ShapeSource::Cloud(points) = self {
            if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidInput("point cloud has non-finite coordinates".into()));
            }
            if points.len() < 4 {
                return Err(Error::InvalidInput(format!(
                    "point cloud needs at least 4 points, got {}",
                    points.len()
                )));
            }
        }
        if let ShapeSource::Solid(Solid::Sphere { radius, .. }) = self {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::InvalidInput(format!("sphere radius must be positive, got {radius}")));
            }
        }
        let bbox = self
            .bounding_box()
            .ok_or_else(|| Error::InvalidInput("empty shape".into()))?;
        if !bbox.is_finite() {
            return Err(Error::InvalidInput("non-finite bounding box".into()));
        }
        let e = bbox.extents();
        if e.iter().any(|&v| v <= 0.0) {
            return Err(Error::DegenerateShape(format!(
                "bounding box extents {:?} must all be positive",
                e.as_slice()
            )));
        }
        Ok(bbox)
    }
}

/// Parses a point cloud written as one "x y z" triple per line; commas and
/// whitespace both separate fields, blank lines and `#` comments are skipped.
pub fn parse_point_cloud(text: &str) -> Result<Vec<Point3<f64>>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "point cloud line {}: expected 3 fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut xyz = [0.0f64; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|e| Error::InvalidInput(format!("point cloud line {}: {e}", lineno + 1)))?;
        }
        if !xyz.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point cloud line {}: non-finite coordinate",
                lineno + 1
            )));
        }
        points.push(Point3::from(xyz));
    }
    Ok(points)
}
