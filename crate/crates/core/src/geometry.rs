//! Primitive representations, analytic point-to-surface distances, parametric
//! sampling and rigid motions.
//!
//! Every primitive is stored in the form used by the benchmark files: axes are
//! unit vectors whose first nonzero component is positive, radii are positive,
//! and cone apertures are half-angles in radians.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point cloud must contain at least one point")]
    EmptyCloud,
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
}

/// Unit direction in canonical orientation (first nonzero component > 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector3(Vector3);

impl UnitVector3 {
    pub fn new(v: Vector3) -> Result<Self, GeometryError> {
        canonicalize_axis(&v)
    }

    /// Unit z axis.
    pub fn z() -> Self {
        UnitVector3(Vector3::z())
    }

    pub fn as_vector(&self) -> &Vector3 {
        &self.0
    }

    pub fn into_inner(self) -> Vector3 {
        self.0
    }
}

impl std::ops::Deref for UnitVector3 {
    type Target = Vector3;

    fn deref(&self) -> &Vector3 {
        &self.0
    }
}

/// Normalizes `v` and flips its sign so that the first nonzero component is
/// positive. Vectors already of unit length (to within a few ulps) are not
/// renormalized, which makes the operation exactly idempotent.
pub fn canonicalize_axis(v: &Vector3) -> Result<UnitVector3, GeometryError> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::InvalidArgument(format!("non-finite axis {v:?}")));
    }
    let norm_sq = v.norm_squared();
    if norm_sq == 0.0 {
        return Err(GeometryError::InvalidArgument("zero-norm axis".into()));
    }
    let mut u = if (norm_sq - 1.0).abs() <= 1e-14 { *v } else { v / norm_sq.sqrt() };
    if let Some(first) = u.iter().copied().find(|c| *c != 0.0) {
        if first < 0.0 {
            u = -u;
        }
    }
    Ok(UnitVector3(u))
}

/// Right-handed orthonormal pair spanning the plane orthogonal to `axis`.
pub fn orthonormal_basis(axis: &Vector3) -> (Vector3, Vector3) {
    let a = axis.normalize();
    let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = helper.cross(&a).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    id: String,
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(id: impl Into<String>, points: Vec<Point3>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(PointCloud { id: id.into(), points })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.points)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.points)
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            id: self.id.clone(),
            points: self.points.iter().map(|p| t.apply_point(p)).collect(),
        }
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

/// Diagonal length of the axis-aligned bounding box of `points`.
pub fn bbox_diagonal(points: &[Point3]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let (lo, hi) = points.iter().fold((first.coords, first.coords), |(lo, hi), p| {
        (lo.inf(&p.coords), hi.sup(&p.coords))
    });
    (hi - lo).norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimitiveKind {
    Plane,
    Cylinder,
    Sphere,
    Cone,
    Torus,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 5] = [
        PrimitiveKind::Plane,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Sphere,
        PrimitiveKind::Cone,
        PrimitiveKind::Torus,
    ];

    /// Numeric code used in ground-truth files (plane = 1 ... torus = 5).
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    /// Zero-based index, handy for 5-element tables.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Plane => "plane",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Cone => "cone",
            PrimitiveKind::Torus => "torus",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

fn check_point(p: &Point3, what: &str) -> Result<(), GeometryError> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::InvalidArgument(format!("{what} is not finite")))
    }
}

fn check_positive(x: f64, what: &str) -> Result<(), GeometryError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidArgument(format!("{what} must be positive, got {x}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    normal: UnitVector3,
    point: Point3,
}

impl Plane {
    pub fn new(normal: Vector3, point: Point3) -> Result<Self, GeometryError> {
        check_point(&point, "plane point")?;
        Ok(Plane { normal: canonicalize_axis(&normal)?, point })
    }

    pub fn normal(&self) -> &UnitVector3 {
        &self.normal
    }

    pub fn point(&self) -> &Point3 {
        &self.point
    }

    /// Signed offset along the normal.
    pub fn offset(&self) -> f64 {
        self.normal.dot(&self.point.coords)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    radius: f64,
    axis: UnitVector3,
    axis_point: Point3,
}

impl Cylinder {
    pub fn new(radius: f64, axis: Vector3, axis_point: Point3) -> Result<Self, GeometryError> {
        check_positive(radius, "cylinder radius")?;
        check_point(&axis_point, "cylinder axis point")?;
        Ok(Cylinder { radius, axis: canonicalize_axis(&axis)?, axis_point })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn axis(&self) -> &UnitVector3 {
        &self.axis
    }

    pub fn axis_point(&self) -> &Point3 {
        &self.axis_point
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    radius: f64,
    center: Point3,
}

impl Sphere {
    pub fn new(radius: f64, center: Point3) -> Result<Self, GeometryError> {
        check_positive(radius, "sphere radius")?;
        check_point(&center, "sphere center")?;
        Ok(Sphere { radius, center })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &Point3 {
        &self.center
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cone {
    half_aperture: f64,
    axis: UnitVector3,
    vertex: Point3,
}

impl Cone {
    pub fn new(half_aperture: f64, axis: Vector3, vertex: Point3) -> Result<Self, GeometryError> {
        if !(half_aperture > 0.0 && half_aperture < FRAC_PI_2) {
            return Err(GeometryError::InvalidArgument(format!(
                "cone half aperture must lie in (0, pi/2), got {half_aperture}"
            )));
        }
        check_point(&vertex, "cone vertex")?;
        Ok(Cone { half_aperture, axis: canonicalize_axis(&axis)?, vertex })
    }

    pub fn half_aperture(&self) -> f64 {
        self.half_aperture
    }

    pub fn axis(&self) -> &UnitVector3 {
        &self.axis
    }

    pub fn vertex(&self) -> &Point3 {
        &self.vertex
    }
}

/// Torus of revolution. `major_radius` is the distance from the center to the
/// tube center (listed first in benchmark files), `minor_radius` the tube radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Torus {
    major_radius: f64,
    minor_radius: f64,
    axis: UnitVector3,
    center: Point3,
}

impl Torus {
    pub fn new(
        major_radius: f64,
        minor_radius: f64,
        axis: Vector3,
        center: Point3,
    ) -> Result<Self, GeometryError> {
        check_positive(major_radius, "torus major radius")?;
        check_positive(minor_radius, "torus minor radius")?;
        if minor_radius >= major_radius {
            return Err(GeometryError::InvalidArgument(format!(
                "torus requires major radius > minor radius, got {major_radius} <= {minor_radius}"
            )));
        }
        check_point(&center, "torus center")?;
        Ok(Torus { major_radius, minor_radius, axis: canonicalize_axis(&axis)?, center })
    }

    pub fn major_radius(&self) -> f64 {
        self.major_radius
    }

    pub fn minor_radius(&self) -> f64 {
        self.minor_radius
    }

    pub fn axis(&self) -> &UnitVector3 {
        &self.axis
    }

    pub fn center(&self) -> &Point3 {
        &self.center
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Plane(Plane),
    Cylinder(Cylinder),
    Sphere(Sphere),
    Cone(Cone),
    Torus(Torus),
}

/// Height along `axis` and the in-plane offset of `p` relative to `origin`.
fn axial_split(p: &Point3, origin: &Point3, axis: &Vector3) -> (f64, Vector3) {
    let d = p - origin;
    let h = d.dot(axis);
    (h, d - axis * h)
}

impl Primitive {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::Plane(_) => PrimitiveKind::Plane,
            Primitive::Cylinder(_) => PrimitiveKind::Cylinder,
            Primitive::Sphere(_) => PrimitiveKind::Sphere,
            Primitive::Cone(_) => PrimitiveKind::Cone,
            Primitive::Torus(_) => PrimitiveKind::Torus,
        }
    }

    /// Rotational axis, or the normal for planes. `None` for spheres.
    pub fn axis(&self) -> Option<&UnitVector3> {
        match self {
            Primitive::Plane(s) => Some(&s.normal),
            Primitive::Cylinder(s) => Some(&s.axis),
            Primitive::Sphere(_) => None,
            Primitive::Cone(s) => Some(&s.axis),
            Primitive::Torus(s) => Some(&s.axis),
        }
    }

    /// Euclidean distance from `p` to the complete (unbounded) surface.
    ///
    /// Cones are treated as double-napped: the axis is only known up to sign,
    /// so a point below the vertex is measured against the mirrored nappe.
    pub fn distance(&self, p: &Point3) -> f64 {
        match self {
            Primitive::Plane(s) => s.normal.dot(&(p - s.point)).abs(),
            Primitive::Sphere(s) => ((p - s.center).norm() - s.radius).abs(),
            Primitive::Cylinder(s) => {
                let (_, w) = axial_split(p, &s.axis_point, &s.axis);
                (w.norm() - s.radius).abs()
            }
            Primitive::Cone(s) => {
                let (h, w) = axial_split(p, &s.vertex, &s.axis);
                let (sin, cos) = s.half_aperture.sin_cos();
                (w.norm() * cos - h.abs() * sin).abs()
            }
            Primitive::Torus(s) => {
                let (h, w) = axial_split(p, &s.center, &s.axis);
                let rho = w.norm();
                ((rho - s.major_radius).hypot(h) - s.minor_radius).abs()
            }
        }
    }

    /// Unit surface normal at the foot point of `p`. Orientation follows the
    /// outward direction for closed surfaces and the stored normal for planes.
    pub fn surface_normal(&self, p: &Point3) -> Vector3 {
        let fallback = |v: Vector3, alt: Vector3| {
            if v.norm() > 1e-300 { v.normalize() } else { alt }
        };
        match self {
            Primitive::Plane(s) => s.normal.0,
            Primitive::Sphere(s) => fallback(p - s.center, Vector3::z()),
            Primitive::Cylinder(s) => {
                let (_, w) = axial_split(p, &s.axis_point, &s.axis);
                fallback(w, orthonormal_basis(&s.axis).0)
            }
            Primitive::Cone(s) => {
                let (h, w) = axial_split(p, &s.vertex, &s.axis);
                let radial = fallback(w, orthonormal_basis(&s.axis).0);
                let (sin, cos) = s.half_aperture.sin_cos();
                let side = if h < 0.0 { -1.0 } else { 1.0 };
                (radial * cos - s.axis.0 * (side * sin)).normalize()
            }
            Primitive::Torus(s) => {
                let (_, w) = axial_split(p, &s.center, &s.axis);
                let radial = fallback(w, orthonormal_basis(&s.axis).0);
                let tube_center = s.center + radial * s.major_radius;
                fallback(p - tube_center, radial)
            }
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Primitive {
        let rot = |a: &UnitVector3| {
            canonicalize_axis(&t.apply_vector(a)).expect("rotation preserves unit norm")
        };
        match self {
            Primitive::Plane(s) => {
                Primitive::Plane(Plane { normal: rot(&s.normal), point: t.apply_point(&s.point) })
            }
            Primitive::Cylinder(s) => Primitive::Cylinder(Cylinder {
                radius: s.radius,
                axis: rot(&s.axis),
                axis_point: t.apply_point(&s.axis_point),
            }),
            Primitive::Sphere(s) => {
                Primitive::Sphere(Sphere { radius: s.radius, center: t.apply_point(&s.center) })
            }
            Primitive::Cone(s) => Primitive::Cone(Cone {
                half_aperture: s.half_aperture,
                axis: rot(&s.axis),
                vertex: t.apply_point(&s.vertex),
            }),
            Primitive::Torus(s) => Primitive::Torus(Torus {
                major_radius: s.major_radius,
                minor_radius: s.minor_radius,
                axis: rot(&s.axis),
                center: t.apply_point(&s.center),
            }),
        }
    }
}

impl From<Plane> for Primitive {
    fn from(s: Plane) -> Self {
        Primitive::Plane(s)
    }
}

impl From<Cylinder> for Primitive {
    fn from(s: Cylinder) -> Self {
        Primitive::Cylinder(s)
    }
}

impl From<Sphere> for Primitive {
    fn from(s: Sphere) -> Self {
        Primitive::Sphere(s)
    }
}

impl From<Cone> for Primitive {
    fn from(s: Cone) -> Self {
        Primitive::Cone(s)
    }
}

impl From<Torus> for Primitive {
    fn from(s: Torus) -> Self {
        Primitive::Torus(s)
    }
}

pub fn distance_to_primitive(p: &Point3, prim: &Primitive) -> f64 {
    prim.distance(p)
}

pub fn transform_params(prim: &Primitive, t: &RigidTransform) -> Primitive {
    prim.transformed(t)
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.transformed(t)
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform(Isometry3<f64>);

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform(Isometry3::identity())
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3) -> Self {
        RigidTransform(Isometry3::from_parts(Translation3::from(translation), rotation))
    }

    pub fn translation(translation: Vector3) -> Self {
        Self::from_parts(UnitQuaternion::identity(), translation)
    }

    /// Rotation taking direction `from` onto direction `to` (about the origin).
    pub fn rotation_between(from: &Vector3, to: &Vector3) -> Self {
        let rot = UnitQuaternion::rotation_between(from, to).unwrap_or_else(|| {
            // antiparallel: half turn about any orthogonal direction
            let (e1, _) = orthonormal_basis(from);
            UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(e1), PI)
        });
        Self::from_parts(rot, Vector3::zeros())
    }

    /// Uniform random rotation composed with a translation drawn uniformly
    /// from the cube `[-max_shift, max_shift]^3`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_shift: f64) -> Self {
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let rotation = UnitQuaternion::from_quaternion(q);
        let shift = if max_shift > 0.0 {
            Vector3::from_fn(|_, _| rng.random_range(-max_shift..=max_shift))
        } else {
            Vector3::zeros()
        };
        Self::from_parts(rotation, shift)
    }

    pub fn rotation_matrix(&self) -> nalgebra::Matrix3<f64> {
        self.0.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation_vector(&self) -> Vector3 {
        self.0.translation.vector
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.0.transform_point(p)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.0.transform_vector(v)
    }

    pub fn inverse(&self) -> Self {
        RigidTransform(self.0.inverse())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform(self.0 * other.0)
    }
}

/// Region over which unbounded surfaces are sampled.
///
/// `extent` is the half side of the square patch for planes, the half height
/// for cylinders and the maximum height above the vertex for cones. Closed
/// surfaces ignore it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleExtent {
    pub extent: f64,
}

impl Default for SampleExtent {
    fn default() -> Self {
        SampleExtent { extent: 1.0 }
    }
}

/// Draws `n` points on the surface of `prim` with a generator seeded by `seed`.
///
/// Points are drawn one after another from the same stream, so the first `m`
/// points of an `n`-point sample equal the `m`-point sample for the same seed.
pub fn sample_surface(prim: &Primitive, n: usize, extent: SampleExtent, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_points(prim, n, extent.extent, &mut rng);
    PointCloud { id: format!("{}-samples", prim.kind()), points }
}

pub(crate) fn sample_points<R: Rng + ?Sized>(
    prim: &Primitive,
    n: usize,
    extent: f64,
    rng: &mut R,
) -> Vec<Point3> {
    let mut out = Vec::with_capacity(n);
    match prim {
        Primitive::Plane(s) => {
            let (e1, e2) = orthonormal_basis(&s.normal);
            for _ in 0..n {
                let u = rng.random_range(-extent..=extent);
                let v = rng.random_range(-extent..=extent);
                out.push(s.point + e1 * u + e2 * v);
            }
        }
        Primitive::Sphere(s) => {
            for _ in 0..n {
                let dir = loop {
                    let g = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                    let norm = g.norm();
                    if norm > 1e-12 {
                        break g / norm;
                    }
                };
                out.push(s.center + dir * s.radius);
            }
        }
        Primitive::Cylinder(s) => {
            let (e1, e2) = orthonormal_basis(&s.axis);
            for _ in 0..n {
                let t = rng.random_range(0.0..2.0 * PI);
                let h = rng.random_range(-extent..=extent);
                let (sin, cos) = t.sin_cos();
                out.push(s.axis_point + s.axis.0 * h + (e1 * cos + e2 * sin) * s.radius);
            }
        }
        Primitive::Cone(s) => {
            let (e1, e2) = orthonormal_basis(&s.axis);
            let tan = s.half_aperture.tan();
            for _ in 0..n {
                let t = rng.random_range(0.0..2.0 * PI);
                // area-uniform along the slant: density grows linearly with height
                let h = extent * rng.random::<f64>().sqrt();
                let (sin, cos) = t.sin_cos();
                out.push(s.vertex + s.axis.0 * h + (e1 * cos + e2 * sin) * (h * tan));
            }
        }
        Primitive::Torus(s) => {
            let (e1, e2) = orthonormal_basis(&s.axis);
            let (big, small) = (s.major_radius, s.minor_radius);
            for _ in 0..n {
                // rejection on the tube angle gives area-uniform samples
                let phi = loop {
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let accept = rng.random::<f64>() * (big + small);
                    if accept <= big + small * phi.cos() {
                        break phi;
                    }
                };
                let t = rng.random_range(0.0..2.0 * PI);
                let (st, ct) = t.sin_cos();
                let (sp, cp) = phi.sin_cos();
                let radial = e1 * ct + e2 * st;
                out.push(s.center + radial * (big + small * cp) + s.axis.0 * (small * sp));
            }
        }
    }
    out
}
