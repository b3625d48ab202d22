//! Direct least-squares estimation for each primitive family, plus local
//! normal estimation.
//!
//! Each fitter builds a closed-form initial estimate and then polishes it with
//! the damped Gauss-Newton refiner in [`crate::lm`] on orthogonal distances.

use nalgebra::{Matrix3, Matrix4, Matrix6, SymmetricEigen, Vector4, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    bbox_diagonal, canonicalize_axis, centroid, orthonormal_basis, Cone, Cylinder, GeometryError,
    Plane, Point3, Primitive, PrimitiveKind, Sphere, Torus, UnitVector3, Vector3,
};
use crate::knn::KdTree;
use crate::linalg::{direction_scatter, fit_circle_2d, scatter_about, sym_eigen_sorted};
use crate::lm::refine_primitive;

pub const DEFAULT_K_NEIGHBORS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("not enough points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate {kind} fit: {reason}")]
    Degenerate { kind: PrimitiveKind, reason: String },
    #[error("normal field has {normals} entries for {points} points")]
    NormalsMismatch { normals: usize, points: usize },
    #[error("neighbourhood size k={k} must be at least 3 and below the cloud size {n}")]
    BadNeighborhood { k: usize, n: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn degenerate(kind: PrimitiveKind, reason: impl Into<String>) -> FitError {
    FitError::Degenerate { kind, reason: reason.into() }
}

fn need(points: &[Point3], needed: usize) -> Result<(), FitError> {
    if points.len() < needed {
        Err(FitError::TooFewPoints { needed, got: points.len() })
    } else {
        Ok(())
    }
}

/// One canonical unit normal per point. Points whose neighbourhood has rank
/// below two are flagged and ignored by the normal-based estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    normals: Vec<UnitVector3>,
    valid: Vec<bool>,
}

impl NormalField {
    pub fn new(normals: Vec<UnitVector3>, valid: Vec<bool>) -> Self {
        assert_eq!(normals.len(), valid.len());
        NormalField { normals, valid }
    }

    /// Normals taken from an analytic surface, all valid.
    pub fn from_surface(points: &[Point3], prim: &Primitive) -> Self {
        let normals = points
            .iter()
            .map(|p| canonicalize_axis(&prim.surface_normal(p)).unwrap_or(UnitVector3::z()))
            .collect::<Vec<_>>();
        let valid = vec![true; normals.len()];
        NormalField { normals, valid }
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn normals(&self) -> &[UnitVector3] {
        &self.normals
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    /// `(point, normal)` pairs for the valid entries.
    pub fn valid_pairs<'a>(
        &'a self,
        points: &'a [Point3],
    ) -> impl Iterator<Item = (&'a Point3, &'a Vector3)> + 'a {
        points
            .iter()
            .zip(&self.normals)
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|((p, n), _)| (p, n.as_vector()))
    }
}

/// Local-PCA normals over the `k` nearest neighbours of each point.
pub fn estimate_normals(points: &[Point3], k: usize) -> Result<NormalField, FitError> {
    if k < 3 || points.len() <= k {
        return Err(FitError::BadNeighborhood { k, n: points.len() });
    }
    let tree = KdTree::new(points);
    let (normals, valid): (Vec<_>, Vec<_>) = points
        .par_iter()
        .map(|p| {
            let hood: Vec<Point3> =
                tree.nearest(p, k).iter().map(|n| points[n.index]).collect();
            let c = centroid(&hood);
            let (vals, vecs) = sym_eigen_sorted(&scatter_about(&hood, &c));
            let ok = vals[1] > vals[2] * 1e-12 && vals[2] > 0.0;
            match canonicalize_axis(&vecs[0]) {
                Ok(n) => (n, ok),
                Err(_) => (UnitVector3::z(), false),
            }
        })
        .unzip();
    Ok(NormalField { normals, valid })
}

fn check_normals(points: &[Point3], normals: &NormalField) -> Result<(), FitError> {
    if normals.len() != points.len() {
        return Err(FitError::NormalsMismatch { normals: normals.len(), points: points.len() });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub params: Primitive,
    /// RMS of point-to-surface distance over the whole input cloud.
    pub rms_residual: f64,
    /// RMS of the closed-form estimate before refinement.
    pub initial_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn rms_distance(points: &[Point3], prim: &Primitive) -> f64 {
    let sum: f64 = points.iter().map(|p| prim.distance(p).powi(2)).sum();
    (sum / points.len().max(1) as f64).sqrt()
}

/// Refines `init` on `points`; the refined primitive is kept only if it is
/// valid and does not increase the objective.
pub(crate) fn polish(init: Primitive, fit_points: &[Point3], all_points: &[Point3]) -> FitOutcome {
    let initial_rms = rms_distance(all_points, &init);
    let (refined, summary) = refine_primitive(&init, fit_points);
    let (params, iterations, converged) = match refined {
        Ok(p) if summary.cost <= summary.initial_cost => (p, summary.iterations, summary.converged),
        _ => (init, summary.iterations, false),
    };
    let rms_residual = rms_distance(all_points, &params);
    FitOutcome { params, rms_residual, initial_rms, iterations, converged }
}

/// Centroid and smallest-eigenvalue direction of the point scatter.
pub fn fit_plane(points: &[Point3]) -> Result<FitOutcome, FitError> {
    need(points, 3)?;
    let c = centroid(points);
    let (vals, vecs) = sym_eigen_sorted(&scatter_about(points, &c));
    if vals[1] <= vals[2] * 1e-12 || vals[2] <= 0.0 {
        return Err(degenerate(PrimitiveKind::Plane, "points are collinear or coincident"));
    }
    let params: Primitive = Plane::new(vecs[0], c)?.into();
    let rms_residual = rms_distance(points, &params);
    Ok(FitOutcome { params, rms_residual, initial_rms: rms_residual, iterations: 0, converged: true })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereOptions {
    /// Consensus search over random 30% subsets before the final fit.
    pub robust: bool,
    pub seed: u64,
}

impl Default for SphereOptions {
    fn default() -> Self {
        SphereOptions { robust: false, seed: 0 }
    }
}

const SPHERE_ROUNDS: usize = 100;
const SPHERE_SUBSET: f64 = 0.3;
const SPHERE_INLIER_FRACTION: f64 = 0.05;

/// Linear least squares on `|x|^2 = 2 C.x + (r^2 - |C|^2)`.
pub fn algebraic_sphere(points: &[Point3]) -> Result<Sphere, FitError> {
    need(points, 4)?;
    let c0 = centroid(points);
    let scale = bbox_diagonal(points);
    if scale == 0.0 {
        return Err(degenerate(PrimitiveKind::Sphere, "coincident points"));
    }
    let mut ata = Matrix4::<f64>::zeros();
    let mut atb = Vector4::<f64>::zeros();
    for p in points {
        let q = (p - c0) / scale;
        let row = Vector4::new(2.0 * q.x, 2.0 * q.y, 2.0 * q.z, 1.0);
        ata += row * row.transpose();
        atb += row * q.norm_squared();
    }
    let eig = SymmetricEigen::new(ata);
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    if lo <= hi * 1e-12 {
        return Err(degenerate(PrimitiveKind::Sphere, "points are coplanar"));
    }
    let sol = ata
        .cholesky()
        .ok_or_else(|| degenerate(PrimitiveKind::Sphere, "singular normal equations"))?
        .solve(&atb);
    let center = Vector3::new(sol.x, sol.y, sol.z);
    let r_sq = sol.w + center.norm_squared();
    if !(r_sq > 0.0) {
        return Err(degenerate(PrimitiveKind::Sphere, "negative squared radius"));
    }
    Ok(Sphere::new(r_sq.sqrt() * scale, c0 + center * scale)?)
}

fn sphere_inliers<'a>(points: &'a [Point3], s: &Sphere) -> Vec<Point3> {
    let tol = SPHERE_INLIER_FRACTION * s.radius();
    points
        .iter()
        .filter(|p| ((*p - s.center()).norm() - s.radius()).abs() <= tol)
        .copied()
        .collect()
}

pub fn fit_sphere(points: &[Point3], opts: SphereOptions) -> Result<FitOutcome, FitError> {
    need(points, 4)?;
    let mut init = algebraic_sphere(points)?;
    let mut fit_points = points.to_vec();
    if opts.robust {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let subset = ((points.len() as f64 * SPHERE_SUBSET).ceil() as usize).clamp(4, points.len());
        let mut best: Option<(usize, Sphere)> = None;
        for _ in 0..SPHERE_ROUNDS {
            let idx = sample(&mut rng, points.len(), subset);
            let chosen: Vec<Point3> = idx.iter().map(|i| points[i]).collect();
            let Ok(candidate) = algebraic_sphere(&chosen) else { continue };
            let count = sphere_inliers(points, &candidate).len();
            if best.as_ref().is_none_or(|(n, _)| count > *n) {
                best = Some((count, candidate));
            }
        }
        if let Some((_, candidate)) = best {
            let inliers = sphere_inliers(points, &candidate);
            if inliers.len() >= 4 {
                init = algebraic_sphere(&inliers).unwrap_or(candidate);
                fit_points = sphere_inliers(points, &init);
                if fit_points.len() < 4 {
                    fit_points = inliers;
                }
            }
        }
    }
    Ok(polish(init.into(), &fit_points, points))
}

/// Axis estimate from normals: cylinder normals are orthogonal to the axis, so
/// the axis is the smallest-eigenvalue direction of their scatter.
pub(crate) fn cylinder_axis_from_normals(
    points: &[Point3],
    normals: &NormalField,
) -> Result<Vector3, FitError> {
    let (m, n) = direction_scatter(normals.valid_pairs(points).map(|(_, n)| n));
    if n < 3 {
        return Err(degenerate(PrimitiveKind::Cylinder, "too few valid normals"));
    }
    let (vals, vecs) = sym_eigen_sorted(&m);
    if vals[1] <= vals[2] * 1e-6 {
        return Err(degenerate(PrimitiveKind::Cylinder, "normals are parallel (planar data)"));
    }
    if vals[0] >= 0.5 * vals[2] {
        return Err(degenerate(PrimitiveKind::Cylinder, "normal scatter is isotropic"));
    }
    Ok(vecs[0])
}

/// Closed-form cylinder: axis from normals, radius and axis point from a
/// circle fit to the points projected along that axis.
pub(crate) fn initial_cylinder(
    points: &[Point3],
    normals: &NormalField,
) -> Result<Cylinder, FitError> {
    let axis = cylinder_axis_from_normals(points, normals)?;
    let (e1, e2) = orthonormal_basis(&axis);
    let c = centroid(points);
    let planar: Vec<(f64, f64)> =
        points.iter().map(|p| ((p - c).dot(&e1), (p - c).dot(&e2))).collect();
    let (u, v, r) = fit_circle_2d(&planar)
        .ok_or_else(|| degenerate(PrimitiveKind::Cylinder, "projected points are collinear"))?;
    Ok(Cylinder::new(r, axis, c + e1 * u + e2 * v)?)
}

pub fn fit_cylinder(points: &[Point3], normals: &NormalField) -> Result<FitOutcome, FitError> {
    need(points, 6)?;
    check_normals(points, normals)?;
    let init = initial_cylinder(points, normals)?;
    Ok(polish(init.into(), points, points))
}

const MIN_CONE_ANGLE: f64 = 1.0 * std::f64::consts::PI / 180.0;
const MAX_CONE_ANGLE: f64 = 89.0 * std::f64::consts::PI / 180.0;

/// Apex as the least-squares intersection of the tangent planes.
pub(crate) fn cone_vertex_from_tangent_planes(
    points: &[Point3],
    normals: &NormalField,
) -> Result<Point3, FitError> {
    let mut m = Matrix3::<f64>::zeros();
    let mut b = Vector3::zeros();
    let mut count = 0usize;
    let c = centroid(points);
    for (p, n) in normals.valid_pairs(points) {
        let nn = n * n.transpose();
        m += nn;
        b += nn * (p - c);
        count += 1;
    }
    if count < 3 {
        return Err(degenerate(PrimitiveKind::Cone, "too few valid normals"));
    }
    let (vals, _) = sym_eigen_sorted(&m);
    if vals[0] <= vals[2] * 1e-6 {
        return Err(degenerate(
            PrimitiveKind::Cone,
            "tangent planes do not meet in a point (cylinder-like data)",
        ));
    }
    let v = m
        .cholesky()
        .ok_or_else(|| degenerate(PrimitiveKind::Cone, "singular vertex system"))?
        .solve(&b);
    Ok(c + v)
}

/// Closed-form cone: apex from tangent planes, then the unit directions from
/// the apex lie on a circle whose plane normal is the axis and whose angular
/// radius is the half aperture.
pub(crate) fn initial_cone(points: &[Point3], normals: &NormalField) -> Result<Cone, FitError> {
    let vertex = cone_vertex_from_tangent_planes(points, normals)?;
    let dirs: Vec<Point3> = points
        .iter()
        .filter_map(|p| {
            let d = p - vertex;
            let n = d.norm();
            (n > 0.0).then(|| Point3::from(d / n))
        })
        .collect();
    if dirs.len() < 3 {
        return Err(degenerate(PrimitiveKind::Cone, "points coincide with the apex"));
    }
    let mean = centroid(&dirs);
    let (vals, vecs) = sym_eigen_sorted(&scatter_about(&dirs, &mean));
    if vals[1] <= vals[2] * 1e-12 {
        return Err(degenerate(PrimitiveKind::Cone, "directions from apex are collinear"));
    }
    let mut axis = vecs[0];
    if axis.dot(&mean.coords) < 0.0 {
        axis = -axis;
    }
    let alpha = dirs
        .iter()
        .map(|u| u.coords.dot(&axis).clamp(-1.0, 1.0).acos())
        .sum::<f64>()
        / dirs.len() as f64;
    let alpha = alpha.clamp(MIN_CONE_ANGLE, MAX_CONE_ANGLE);
    Ok(Cone::new(alpha, axis, vertex)?)
}

/// How far (in bounding-box diagonals) an apex may sit from the data before
/// the cone is considered a cylinder in disguise.
const MAX_APEX_DISTANCE: f64 = 100.0;
/// Largest share of points allowed on the nappe opposite the data. Segments
/// are cut from a single nappe.
const MAX_OPPOSITE_NAPPE: f64 = 0.1;

/// Cone with a given axis direction. In coordinates `(u, v, h)` along the
/// direction, `u^2 + v^2 = (k h + b)^2` about an unknown axis point is linear
/// in `(2cu, 2cv, k^2, 2kb, const)`.
pub(crate) fn cone_from_axis(points: &[Point3], dir: &Vector3) -> Option<Cone> {
    let c = centroid(points);
    let (e1, e2) = orthonormal_basis(dir);
    let mut m = nalgebra::Matrix5::<f64>::zeros();
    let mut rhs = nalgebra::Vector5::<f64>::zeros();
    let coords: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - c;
            (d.dot(&e1), d.dot(&e2), d.dot(dir))
        })
        .collect();
    for &(u, v, h) in &coords {
        let row = nalgebra::Vector5::new(u, v, h * h, h, 1.0);
        m += row * row.transpose();
        rhs += row * (u * u + v * v);
    }
    let sol = m.cholesky()?.solve(&rhs);
    if !(sol[2] > 0.0) {
        return None;
    }
    let mut k = sol[2].sqrt();
    let mut b = sol[3] / (2.0 * k);
    let mean_h = coords.iter().map(|t| t.2).sum::<f64>() / coords.len() as f64;
    if k * mean_h + b < 0.0 {
        k = -k;
        b = -b;
    }
    let h0 = -b / k;
    let vertex = c + e1 * (sol[0] / 2.0) + e2 * (sol[1] / 2.0) + dir * h0;
    let axis = if k > 0.0 { *dir } else { -dir };
    let alpha = k.abs().atan().clamp(MIN_CONE_ANGLE, MAX_CONE_ANGLE);
    Cone::new(alpha, axis, vertex).ok()
}

/// Starting cones: the tangent-plane apex, then algebraic fits along the
/// revolution axis and the principal directions of points and normals.
pub(crate) fn cone_starts(points: &[Point3], normals: &NormalField) -> Vec<Cone> {
    let mut starts = Vec::new();
    let mut dirs: Vec<Vector3> = Vec::new();
    if let Ok(c) = initial_cone(points, normals) {
        dirs.push(c.axis().into_inner());
        starts.push(c);
    }
    if let Ok((_, axis)) = revolution_axis_from_normals(points, normals) {
        dirs.push(axis);
    }
    let c = centroid(points);
    let (_, point_dirs) = sym_eigen_sorted(&scatter_about(points, &c));
    let (normal_scatter, _) = direction_scatter(normals.valid_pairs(points).map(|(_, n)| n));
    let (_, normal_dirs) = sym_eigen_sorted(&normal_scatter);
    dirs.extend(point_dirs.iter().chain(&normal_dirs).copied());
    starts.extend(dirs.iter().filter_map(|d| cone_from_axis(points, d)));
    starts
}

pub fn fit_cone(points: &[Point3], normals: &NormalField) -> Result<FitOutcome, FitError> {
    need(points, 6)?;
    check_normals(points, normals)?;
    let mut best: Option<FitOutcome> = None;
    let mut last_err = degenerate(PrimitiveKind::Cone, "no starting estimate");
    for start in cone_starts(points, normals) {
        let out = polish(start.into(), points, points);
        match check_plausible(&out.params, points) {
            Ok(()) => {
                if best.as_ref().is_none_or(|b| out.rms_residual < b.rms_residual) {
                    best = Some(out);
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// Axis of a surface of revolution from its normal lines: every normal line
/// meets the axis, which is linear in the Pluecker coordinates of the axis.
pub fn revolution_axis_from_normals(
    points: &[Point3],
    normals: &NormalField,
) -> Result<(Point3, Vector3), FitError> {
    let c = centroid(points);
    let scale = bbox_diagonal(points);
    if scale == 0.0 {
        return Err(degenerate(PrimitiveKind::Torus, "coincident points"));
    }
    let mut m = Matrix6::<f64>::zeros();
    let mut count = 0usize;
    for (p, n) in normals.valid_pairs(points) {
        let q = (p - c) / scale;
        let moment = q.cross(n);
        let row = Vector6::new(moment.x, moment.y, moment.z, n.x, n.y, n.z);
        m += row * row.transpose();
        count += 1;
    }
    if count < 6 {
        return Err(degenerate(PrimitiveKind::Torus, "too few valid normals"));
    }
    let eig = SymmetricEigen::new(m);
    let imin = eig.eigenvalues.imin();
    let sol = eig.eigenvectors.column(imin);
    let dir = Vector3::new(sol[0], sol[1], sol[2]);
    let moment = Vector3::new(sol[3], sol[4], sol[5]);
    let len = dir.norm();
    if len < 1e-9 {
        return Err(degenerate(PrimitiveKind::Torus, "normals are parallel"));
    }
    let axis = dir / len;
    let foot = axis.cross(&(moment / len));
    Ok((c + foot * scale, axis))
}

/// Closed-form torus: axis from the normal lines, then the meridian section
/// `(rho, h)` of the points is a circle centred at `(major, h0)` with radius
/// `minor`.
pub(crate) fn initial_torus(points: &[Point3], normals: &NormalField) -> Result<Torus, FitError> {
    let (foot, axis) = revolution_axis_from_normals(points, normals)?;
    torus_from_axis(points, &foot, &axis)
}

pub(crate) fn torus_from_axis(
    points: &[Point3],
    foot: &Point3,
    axis: &Vector3,
) -> Result<Torus, FitError> {
    let meridian: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - foot;
            let h = d.dot(axis);
            ((d - axis * h).norm(), h)
        })
        .collect();
    let (rho0, h0, tube) = fit_circle_2d(&meridian)
        .ok_or_else(|| degenerate(PrimitiveKind::Torus, "meridian section is a line"))?;
    if !(rho0 > 0.0) {
        return Err(degenerate(PrimitiveKind::Torus, "spine circle has no positive radius"));
    }
    // minor radius as the mean distance of the points to the spine circle
    let minor = meridian.iter().map(|(r, h)| (r - rho0).hypot(h - h0)).sum::<f64>()
        / meridian.len() as f64;
    let minor = if minor > 0.0 { minor } else { tube };
    Ok(Torus::new(rho0, minor, *axis, foot + axis * h0)?)
}

/// How large (in bounding-box diagonals) the tube may be before the torus is
/// considered a cylinder or sphere in disguise.
const MAX_TORUS_RADIUS: f64 = 20.0;

/// Foot of the axis with direction `axis` that the normal lines meet in the
/// least-squares sense: `(axis x n) . (foot - p) = 0` for every normal line.
fn axis_foot_for_direction(
    points: &[Point3],
    normals: &NormalField,
    axis: &Vector3,
) -> Option<Point3> {
    let c = centroid(points);
    let (e1, e2) = orthonormal_basis(axis);
    let mut m = nalgebra::Matrix2::<f64>::zeros();
    let mut b = nalgebra::Vector2::<f64>::zeros();
    for (p, n) in normals.valid_pairs(points) {
        let w = axis.cross(n);
        let row = nalgebra::Vector2::new(w.dot(&e1), w.dot(&e2));
        m += row * row.transpose();
        b += row * w.dot(&(p - c));
    }
    let uv = m.cholesky()?.solve(&b);
    Some(c + e1 * uv.x + e2 * uv.y)
}

/// Starting tori: the normal-line axis, axes along the principal directions
/// of the points and of the normals, and the fixed fallback.
pub(crate) fn torus_starts(points: &[Point3], normals: &NormalField) -> Vec<Torus> {
    let mut starts = Vec::new();
    if let Ok(t) = initial_torus(points, normals) {
        starts.push(t);
    }
    let c = centroid(points);
    let (_, point_dirs) = sym_eigen_sorted(&scatter_about(points, &c));
    let (normal_scatter, _) = direction_scatter(normals.valid_pairs(points).map(|(_, n)| n));
    let (_, normal_dirs) = sym_eigen_sorted(&normal_scatter);
    for dir in point_dirs.iter().chain(&normal_dirs) {
        if let Some(foot) = axis_foot_for_direction(points, normals, dir) {
            if let Ok(t) = torus_from_axis(points, &foot, dir) {
                starts.push(t);
            }
        }
    }
    if let Ok(t) = Torus::new(1.0, 0.1, Vector3::z(), c) {
        starts.push(t);
    }
    starts
}

/// Polishes every start and keeps the plausible fit with the smallest
/// residual.
pub fn fit_torus(points: &[Point3], normals: &NormalField) -> Result<FitOutcome, FitError> {
    need(points, 10)?;
    check_normals(points, normals)?;
    let mut best: Option<FitOutcome> = None;
    let mut last_err = degenerate(PrimitiveKind::Torus, "no starting estimate");
    for start in torus_starts(points, normals) {
        let out = polish(start.into(), points, points);
        match check_plausible(&out.params, points) {
            Ok(()) => {
                if best.as_ref().is_none_or(|b| out.rms_residual < b.rms_residual) {
                    best = Some(out);
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// Rejects fits that only match the data as a limit of a simpler family:
/// flat cones, cones with a far apex or spanning both nappes, and tori with an unbounded
/// spine.
pub fn check_plausible(params: &Primitive, points: &[Point3]) -> Result<(), FitError> {
    let l = bbox_diagonal(points);
    match params {
        Primitive::Cone(c) => {
            if c.half_aperture() > MAX_CONE_ANGLE {
                return Err(degenerate(PrimitiveKind::Cone, "aperture flattened into a plane"));
            }
            if (c.vertex() - centroid(points)).norm() > MAX_APEX_DISTANCE * l {
                return Err(degenerate(PrimitiveKind::Cone, "apex at infinity"));
            }
            let above = points.iter().filter(|p| (*p - c.vertex()).dot(c.axis()) > 0.0).count();
            let minority = above.min(points.len() - above) as f64 / points.len() as f64;
            if minority > MAX_OPPOSITE_NAPPE {
                return Err(degenerate(PrimitiveKind::Cone, "data spread over both nappes"));
            }
        }
        Primitive::Torus(t) if t.major_radius() > MAX_TORUS_RADIUS * l => {
            return Err(degenerate(PrimitiveKind::Torus, "spine radius unbounded"));
        }
        _ => {}
    }
    Ok(())
}

/// Runs the fitter for `kind`.
pub fn fit_kind(
    kind: PrimitiveKind,
    points: &[Point3],
    normals: &NormalField,
    sphere: SphereOptions,
) -> Result<FitOutcome, FitError> {
    match kind {
        PrimitiveKind::Plane => fit_plane(points),
        PrimitiveKind::Cylinder => fit_cylinder(points, normals),
        PrimitiveKind::Sphere => fit_sphere(points, sphere),
        PrimitiveKind::Cone => fit_cone(points, normals),
        PrimitiveKind::Torus => fit_torus(points, normals),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_points, RigidTransform};
    use rand::Rng;
    use std::f64::consts::PI;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn angle_between_lines(a: &Vector3, b: &Vector3) -> f64 {
        a.normalize().dot(&b.normalize()).abs().min(1.0).acos()
    }

    #[test]
    fn plane_exact_and_symmetric_pair() {
        let mut r = rng(1);
        let mut pts: Vec<Point3> =
            (0..50).map(|_| Point3::new(r.random(), r.random(), 0.0)).collect();
        let fit = fit_plane(&pts).unwrap();
        let Primitive::Plane(p) = fit.params else { panic!() };
        assert!((p.normal().into_inner() - Vector3::z()).norm() < 1e-12);
        assert!(fit.rms_residual < 1e-15);

        let c = centroid(&pts);
        pts.push(c + Vector3::new(0.0, 0.0, 1e-3));
        pts.push(c - Vector3::new(0.0, 0.0, 1e-3));
        let Primitive::Plane(p) = fit_plane(&pts).unwrap().params else { panic!() };
        assert!((p.normal().into_inner() - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn plane_rejects_collinear() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(fit_plane(&pts), Err(FitError::Degenerate { .. })));
    }

    #[test]
    fn noisy_plane_normal_within_half_degree() {
        let mut r = rng(9);
        let truth = Vector3::new(0.3, -0.5, 0.8).normalize();
        let plane: Primitive = Plane::new(truth, Point3::new(1.0, 1.0, 1.0)).unwrap().into();
        let pts: Vec<Point3> = sample_points(&plane, 2000, 1.0, &mut r)
            .into_iter()
            .map(|p| p + Vector3::from_fn(|_, _| r.random_range(-0.01..0.01)))
            .collect();
        let Primitive::Plane(p) = fit_plane(&pts).unwrap().params else { panic!() };
        assert!(angle_between_lines(&p.normal(), &truth) < 0.5f64.to_radians());
    }

    #[test]
    fn sphere_exact_and_degenerate() {
        let truth: Primitive = Sphere::new(1.0, Point3::new(1.0, 2.0, 3.0)).unwrap().into();
        let pts = sample_points(&truth, 100, 1.0, &mut rng(2));
        let Primitive::Sphere(s) = fit_sphere(&pts, SphereOptions::default()).unwrap().params else {
            panic!()
        };
        assert!((s.radius() - 1.0).abs() < 1e-9);
        assert!((s.center() - Point3::new(1.0, 2.0, 3.0)).norm() < 1e-9);

        let flat = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        assert!(matches!(
            fit_sphere(&flat, SphereOptions::default()),
            Err(FitError::Degenerate { .. })
        ));
    }

    #[test]
    fn robust_sphere_ignores_outliers() {
        let mut r = rng(3);
        let center = Point3::new(1.0, 2.0, 3.0);
        let truth: Primitive = Sphere::new(1.0, center).unwrap().into();
        let mut pts = sample_points(&truth, 900, 1.0, &mut r);
        for _ in 0..100 {
            let dir = Vector3::from_fn(|_, _| r.random_range(-1.0..1.0)).normalize();
            pts.push(center + dir * 6.0);
        }
        let opts = SphereOptions { robust: true, seed: 5 };
        let Primitive::Sphere(s) = fit_sphere(&pts, opts).unwrap().params else { panic!() };
        assert!((s.radius() - 1.0).abs() < 0.01);
    }

    /// Half-turn cylinder patch of radius 1 about `axis` through `point`.
    fn cylinder_arc(axis: &Vector3, point: &Point3, n: usize, seed: u64) -> Vec<Point3> {
        let (e1, e2) = orthonormal_basis(axis);
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let t = r.random_range(0.0..PI);
                let h = r.random_range(-1.5..1.5);
                point + axis.normalize() * h + (e1 * t.cos() + e2 * t.sin())
            })
            .collect()
    }

    #[test]
    fn cylinder_half_arc_recovery() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let pts = cylinder_arc(&axis, &Point3::new(0.3, 0.1, -2.0), 2000, 4);
        let normals = estimate_normals(&pts, 20).unwrap();
        let fit = fit_cylinder(&pts, &normals).unwrap();
        let Primitive::Cylinder(c) = fit.params else { panic!() };
        assert!(angle_between_lines(&c.axis(), &axis) < 0.1f64.to_radians());
        assert!((c.radius() - 1.0).abs() < 1e-6);
        assert!(fit.rms_residual <= fit.initial_rms + 1e-12);
    }

    #[test]
    fn cylinder_on_plane_is_degenerate() {
        let mut r = rng(5);
        let pts: Vec<Point3> =
            (0..500).map(|_| Point3::new(r.random(), r.random(), 0.0)).collect();
        let normals = estimate_normals(&pts, 20).unwrap();
        assert!(fit_cylinder(&pts, &normals).is_err());
    }

    #[test]
    fn cylinder_fit_is_rigidly_equivariant() {
        let axis = Vector3::new(0.2, 0.1, 1.0).normalize();
        let pts = cylinder_arc(&axis, &Point3::new(0.0, 0.0, 0.0), 1500, 6);
        let t = RigidTransform::random(&mut rng(7), 3.0);
        let moved: Vec<Point3> = pts.iter().map(|p| t.apply_point(p)).collect();
        let base = fit_cylinder(&pts, &estimate_normals(&pts, 20).unwrap()).unwrap();
        let other = fit_cylinder(&moved, &estimate_normals(&moved, 20).unwrap()).unwrap();
        let (Primitive::Cylinder(a), Primitive::Cylinder(b)) = (base.params.transformed(&t), other.params)
        else {
            panic!()
        };
        assert!((a.radius() - b.radius()).abs() < 1e-6);
        assert!(angle_between_lines(&a.axis(), &b.axis()) < 1e-6);
        let probe = b.axis_point();
        assert!(Primitive::Cylinder(a).distance(probe) - a.radius() < 1e-6);
    }

    #[test]
    fn cone_recovery_from_exact_patch() {
        let alpha = 30f64.to_radians();
        let axis = Vector3::new(-0.3, 0.4, 1.0).normalize();
        let vertex = Point3::new(1.0, -1.0, 0.5);
        let truth: Primitive = Cone::new(alpha, axis, vertex).unwrap().into();
        let pts = sample_points(&truth, 2000, 2.0, &mut rng(8));
        let normals = estimate_normals(&pts, 20).unwrap();
        let fit = fit_cone(&pts, &normals).unwrap();
        let Primitive::Cone(c) = fit.params else { panic!() };
        assert!((c.half_aperture() - alpha).abs() < 0.2f64.to_radians());
        assert!((c.vertex() - vertex).norm() < 1e-3 * bbox_diagonal(&pts));
        let canon = canonicalize_axis(&c.axis()).unwrap();
        assert_eq!(canon, *c.axis());
    }

    #[test]
    fn cone_on_cylinder_data_fails() {
        let axis = Vector3::z();
        let (e1, e2) = orthonormal_basis(&axis);
        let mut r = rng(10);
        let pts: Vec<Point3> = (0..800)
            .map(|_| {
                let t = r.random_range(0.0..2.0 * PI);
                Point3::from(e1 * t.cos() + e2 * t.sin() + axis * r.random_range(-1.0..1.0))
            })
            .collect();
        let normals = NormalField::from_surface(
            &pts,
            &Cylinder::new(1.0, axis, Point3::origin()).unwrap().into(),
        );
        match fit_cone(&pts, &normals) {
            Err(_) => {}
            Ok(out) => {
                let Primitive::Cone(c) = out.params else { panic!() };
                assert!(!out.converged || c.half_aperture() < 1f64.to_radians());
            }
        }
    }

    #[test]
    fn torus_recovery_full_and_half() {
        let truth: Primitive =
            Torus::new(2.0, 0.5, Vector3::new(0.1, -0.2, 1.0), Point3::new(0.5, 0.5, 0.5))
                .unwrap()
                .into();
        let pts = sample_points(&truth, 3000, 1.0, &mut rng(11));
        let normals = estimate_normals(&pts, 20).unwrap();
        let Primitive::Torus(t) = fit_torus(&pts, &normals).unwrap().params else { panic!() };
        assert!((t.major_radius() - 2.0).abs() < 1e-3);
        assert!((t.minor_radius() - 0.5).abs() < 1e-3);

        // remove everything on one side of a plane through the center
        let Primitive::Torus(tt) = truth else { unreachable!() };
        let (e1, _) = orthonormal_basis(&tt.axis());
        let half: Vec<Point3> =
            pts.iter().filter(|p| (*p - tt.center()).dot(&e1) > 0.0).copied().collect();
        let normals = estimate_normals(&half, 20).unwrap();
        let Primitive::Torus(t) = fit_torus(&half, &normals).unwrap().params else { panic!() };
        assert!((t.major_radius() - 2.0).abs() < 0.04);
        assert!((t.minor_radius() - 0.5).abs() < 0.01);
    }

    #[test]
    fn torus_on_sphere_data_is_rejected() {
        let truth: Primitive = Sphere::new(1.0, Point3::origin()).unwrap().into();
        let pts = sample_points(&truth, 1000, 1.0, &mut rng(12));
        let normals = estimate_normals(&pts, 20).unwrap();
        match fit_torus(&pts, &normals) {
            Err(_) => {}
            Ok(out) => {
                let Primitive::Torus(t) = out.params else { panic!() };
                assert!(!out.converged || t.minor_radius() / t.major_radius() > 0.9);
            }
        }
    }

    #[test]
    fn normals_on_plane_and_sphere() {
        let mut r = rng(13);
        let pts: Vec<Point3> =
            (0..400).map(|_| Point3::new(r.random(), r.random(), 2.0)).collect();
        let nf = estimate_normals(&pts, 10).unwrap();
        assert!(nf.normals().iter().all(|n| (n.into_inner() - Vector3::z()).norm() < 1e-6));

        let sphere: Primitive = Sphere::new(1.0, Point3::origin()).unwrap().into();
        let pts = sample_points(&sphere, 5000, 1.0, &mut r);
        let nf = estimate_normals(&pts, 20).unwrap();
        let mut errs: Vec<f64> = pts
            .iter()
            .zip(nf.normals())
            .map(|(p, n)| angle_between_lines(n, &p.coords).to_degrees())
            .collect();
        errs.sort_by(f64::total_cmp);
        // random neighbourhoods are lopsided near a few points
        assert!(errs[errs.len() * 98 / 100] < 2.0);
        assert!(errs[errs.len() - 1] < 5.0);
        assert!(estimate_normals(&pts[..10], 20).is_err());
    }
}
