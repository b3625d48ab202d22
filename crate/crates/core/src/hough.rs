//! Hough-transform recognition.
//!
//! Planes are detected by voting in Hesse normal form `n(theta, phi) . p = rho`.
//! Curved families are first brought into a standard pose (axis along z,
//! center or vertex at the origin) from closed-form estimates, after which only
//! the few remaining shape parameters are voted on in a window around the
//! estimates. The winning cell is polished by least squares on its inliers.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, UnitQuaternion};
use rayon::prelude::*;
use thiserror::Error;

use crate::fitters::{
    self, check_plausible, fit_plane, initial_cone, initial_cylinder, initial_torus, polish, FitError, FitOutcome,
    NormalField,
};
use crate::geometry::{
    bbox_diagonal, centroid, Cone, Cylinder, Plane, Point3, Primitive, PrimitiveKind,
    RigidTransform, Sphere, Torus, Vector3,
};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_HALFWIDTH: f64 = 0.25;
pub const MIN_BINS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoughError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("at least {MIN_BINS} bins per dimension required, got {0}")]
    TooFewBins(usize),
    #[error("search half-width must lie in (0, 1], got {0}")]
    BadHalfwidth(f64),
    #[error("no vote fell inside the search window")]
    WindowMiss,
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Dense vote counts over a boxed parameter domain, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accumulator {
    dims: Vec<usize>,
    counts: Vec<u64>,
}

impl Accumulator {
    pub fn new(dims: &[usize]) -> Self {
        Accumulator { dims: dims.to_vec(), counts: vec![0; dims.iter().product()] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        idx
    }

    pub fn vote(&mut self, idx: &[usize]) {
        let f = self.flat_index(idx);
        self.counts[f] += 1;
    }

    pub fn get(&self, idx: &[usize]) -> u64 {
        self.counts[self.flat_index(idx)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Accumulator) {
        assert_eq!(self.dims, other.dims, "accumulator shapes differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Most voted cell; ties go to the lexicographically smallest index.
    pub fn argmax(&self) -> Option<(Vec<usize>, u64)> {
        let mut best: Option<(usize, u64)> = None;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > 0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best.map(|(i, c)| (self.unflatten(i), c))
    }

    pub fn is_boundary(&self, idx: &[usize]) -> bool {
        idx.iter().zip(&self.dims).any(|(&i, &d)| i == 0 || i + 1 == d)
    }
}

/// Uniform binning of `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Axis {
    lo: f64,
    hi: f64,
    bins: usize,
}

impl Axis {
    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    fn bin(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.bins - 1))
    }

    /// Window `center ± halfwidth`, with an odd bin count so that `center` is
    /// itself a bin center.
    fn window(center: f64, halfwidth: f64, bins: usize) -> Axis {
        Axis { lo: center - halfwidth, hi: center + halfwidth, bins: bins | 1 }
    }
}

/// Accumulates votes from `points` in parallel; `cast` emits the cells hit by
/// one point. Per-worker accumulators are merged by addition.
fn accumulate<F>(points: &[Point3], dims: &[usize], cast: F) -> Accumulator
where
    F: Fn(&Point3, &mut Accumulator) + Sync,
{
    points
        .par_chunks(64)
        .fold(
            || Accumulator::new(dims),
            |mut acc, chunk| {
                for p in chunk {
                    cast(p, &mut acc);
                }
                acc
            },
        )
        .reduce(
            || Accumulator::new(dims),
            |mut a, b| {
                a.merge(&b);
                a
            },
        )
}

fn unit_from_angles(theta: f64, phi: f64) -> Vector3 {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

/// Result of plane voting.
#[derive(Clone, Debug, PartialEq)]
pub struct HoughPlane {
    /// Winning `(theta, phi, rho)` cell.
    pub cell: [usize; 3],
    pub votes: u64,
    /// Normal and offset at the winning cell center.
    pub cell_normal: Vector3,
    pub cell_rho: f64,
    /// Bin widths of theta, phi and rho.
    pub widths: [f64; 3],
    /// Least-squares plane through the cell's inliers.
    pub plane: Plane,
    pub inliers: usize,
}

/// Plane voting over `theta in [0, pi/2]`, `phi in [0, 2 pi)` and
/// `rho in [-R, R]`, with offsets measured from the bounding-box center `o`
/// and `R` the largest distance from it. Returns `o` as well.
pub(crate) fn plane_accumulator(points: &[Point3], bins: [usize; 3]) -> (Accumulator, Axis3, Point3) {
    let origin = bbox_center(points);
    let r_max = points.iter().map(|p| (p - origin).norm()).fold(0.0, f64::max);
    let r_max = if r_max > 0.0 { r_max * (1.0 + 1e-9) } else { 1.0 };
    let axes = Axis3 {
        theta: Axis { lo: 0.0, hi: FRAC_PI_2, bins: bins[0] },
        phi: Axis { lo: 0.0, hi: 2.0 * PI, bins: bins[1] },
        rho: Axis { lo: -r_max, hi: r_max, bins: bins[2] },
    };
    let columns: Vec<Vector3> = (0..bins[0])
        .flat_map(|i| (0..bins[1]).map(move |j| (i, j)))
        .map(|(i, j)| unit_from_angles(axes.theta.center(i), axes.phi.center(j)))
        .collect();
    let acc = accumulate(points, &bins, |p, acc| {
        for (c, n) in columns.iter().enumerate() {
            let k = axes.rho.bin(n.dot(&(p - origin))).expect("rho range covers every point");
            acc.vote(&[c / bins[1], c % bins[1], k]);
        }
    });
    (acc, axes, origin)
}

fn bbox_center(points: &[Point3]) -> Point3 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    nalgebra::center(&lo, &hi)
}

/// Binning of the plane parameter space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Axis3 {
    theta: Axis,
    phi: Axis,
    rho: Axis,
}

pub fn hough_plane(points: &[Point3], bins: [usize; 3]) -> Result<HoughPlane, HoughError> {
    if points.len() < 3 {
        return Err(HoughError::TooFewPoints { needed: 3, got: points.len() });
    }
    if let Some(&b) = bins.iter().find(|&&b| b < MIN_BINS) {
        return Err(HoughError::TooFewBins(b));
    }
    let (acc, axes, origin) = plane_accumulator(points, bins);
    let (cell, votes) = acc.argmax().ok_or(HoughError::WindowMiss)?;
    let cell_normal = unit_from_angles(axes.theta.center(cell[0]), axes.phi.center(cell[1]));
    let cell_rho = axes.rho.center(cell[2]) + cell_normal.dot(&origin.coords);
    let tol = axes.rho.width();
    let inliers: Vec<Point3> = points
        .iter()
        .filter(|p| (cell_normal.dot(&p.coords) - cell_rho).abs() <= tol)
        .copied()
        .collect();
    let plane = match fit_plane(&inliers).map(|o| o.params) {
        Ok(Primitive::Plane(p)) => p,
        _ => Plane::new(cell_normal, Point3::from(cell_normal * cell_rho)).map_err(FitError::from)?,
    };
    Ok(HoughPlane {
        cell: [cell[0], cell[1], cell[2]],
        votes,
        cell_normal,
        cell_rho,
        widths: [axes.theta.width(), axes.phi.width(), axes.rho.width()],
        plane,
        inliers: inliers.len(),
    })
}

/// A cloud moved into the standard pose of one family.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizedCloud {
    pub points: Vec<Point3>,
    /// Maps world coordinates to the standard frame.
    pub transform: RigidTransform,
    /// Initial estimate in the standard frame.
    pub estimate: Primitive,
}

impl StandardizedCloud {
    pub fn new(points: Vec<Point3>, transform: RigidTransform, estimate: Primitive) -> Self {
        StandardizedCloud { points, transform, estimate }
    }

    /// Frame with `axis` along +z and `origin` at the origin.
    fn from_frame(world: &[Point3], axis: &Vector3, origin: &Point3, estimate: Primitive) -> Self {
        let rot = UnitQuaternion::rotation_between(axis, &Vector3::z()).unwrap_or_else(|| {
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
        });
        let transform = RigidTransform::from_parts(rot, -(rot * origin.coords));
        let points = world.iter().map(|p| transform.apply_point(p)).collect();
        StandardizedCloud { points, transform, estimate }
    }
}

/// Sphere center as the point closest to all normal lines.
pub fn sphere_center_from_normals(
    points: &[Point3],
    normals: &NormalField,
) -> Result<Point3, FitError> {
    let c = centroid(points);
    let mut m = Matrix3::<f64>::zeros();
    let mut b = Vector3::zeros();
    for (p, n) in normals.valid_pairs(points) {
        let proj = Matrix3::identity() - n * n.transpose();
        m += proj;
        b += proj * (p - c);
    }
    let sol = m.cholesky().map(|ch| ch.solve(&b));
    match sol {
        Some(v) if v.iter().all(|x| x.is_finite()) && m.symmetric_eigenvalues().min() > 1e-9 * m.trace() => {
            Ok(c + v)
        }
        _ => Ok(*fitters::algebraic_sphere(points)?.center()),
    }
}

/// Brings `points` into the standard pose of `kind` using closed-form
/// estimates.
pub fn standardize_pose(
    points: &[Point3],
    kind: PrimitiveKind,
    normals: &NormalField,
) -> Result<StandardizedCloud, HoughError> {
    let z = Vector3::z();
    let o = Point3::origin();
    let std = match kind {
        PrimitiveKind::Plane => {
            let Primitive::Plane(p) = fit_plane(points)?.params else { unreachable!() };
            StandardizedCloud::from_frame(points, p.normal(), p.point(), Plane::new(z, o).map_err(FitError::from)?.into())
        }
        PrimitiveKind::Sphere => {
            let c = sphere_center_from_normals(points, normals)?;
            let r = points.iter().map(|p| (p - c).norm()).sum::<f64>() / points.len() as f64;
            let est = Sphere::new(r, o).map_err(FitError::from)?;
            StandardizedCloud::new(
                points.iter().map(|p| Point3::from(p - c)).collect(),
                RigidTransform::translation(-c.coords),
                est.into(),
            )
        }
        PrimitiveKind::Cylinder => {
            let cyl = initial_cylinder(points, normals)?;
            let a = *cyl.axis().as_vector();
            // cylinders are translation invariant along the axis; use the axis
            // point nearest the world origin
            let foot = cyl.axis_point() - a * cyl.axis_point().coords.dot(&a);
            let est = Cylinder::new(cyl.radius(), z, o).map_err(FitError::from)?;
            StandardizedCloud::from_frame(points, &a, &foot, est.into())
        }
        PrimitiveKind::Cone => {
            let cone = initial_cone(points, normals)?;
            let v = *cone.vertex();
            let mut a = *cone.axis().as_vector();
            if points.iter().map(|p| (p - v).dot(&a)).sum::<f64>() < 0.0 {
                a = -a;
            }
            let est = Cone::new(cone.half_aperture(), z, o).map_err(FitError::from)?;
            StandardizedCloud::from_frame(points, &a, &v, est.into())
        }
        PrimitiveKind::Torus => {
            let t = initial_torus(points, normals)?;
            let est = Torus::new(t.major_radius(), t.minor_radius(), z, o).map_err(FitError::from)?;
            StandardizedCloud::from_frame(points, t.axis(), t.center(), est.into())
        }
    };
    Ok(std)
}

/// Outcome of reduced-space voting, mapped back to world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HoughEstimate {
    pub params: Primitive,
    pub cell: Vec<usize>,
    pub votes: u64,
    /// The winning cell touches the window border; the optimum may lie
    /// outside.
    pub on_boundary: bool,
    /// Width of a bin of the main size parameter, in model units.
    pub resolution: f64,
}

/// Votes on the residual shape parameters around `std.estimate`.
pub fn hough_refine(
    std: &StandardizedCloud,
    kind: PrimitiveKind,
    bins: usize,
    halfwidth: f64,
) -> Result<HoughEstimate, HoughError> {
    if bins < MIN_BINS {
        return Err(HoughError::TooFewBins(bins));
    }
    if !(halfwidth > 0.0 && halfwidth <= 1.0) {
        return Err(HoughError::BadHalfwidth(halfwidth));
    }
    if std.estimate.kind() != kind {
        return Err(FitError::Degenerate { kind, reason: "estimate of another family".into() }.into());
    }
    let pts = &std.points;
    if pts.len() < 3 {
        return Err(HoughError::TooFewPoints { needed: 3, got: pts.len() });
    }
    let l = bbox_diagonal(pts);
    let offset_bins = (bins / 4).max(MIN_BINS / 2);
    let radial = |r: f64| Axis { lo: r * (1.0 - halfwidth), hi: r * (1.0 + halfwidth), bins };

    let (acc, local, resolution): (Accumulator, Box<dyn Fn(&[usize]) -> Result<Primitive, FitError>>, f64) =
        match &std.estimate {
            Primitive::Plane(_) => {
                let hp = hough_plane(pts, [bins; 3])?;
                let widths = hp.widths;
                let dims = [bins; 3];
                let mut acc = Accumulator::new(&dims);
                let flat = acc.flat_index(&hp.cell);
                acc.counts[flat] = hp.votes;
                let plane = hp.plane;
                (acc, Box::new(move |_| Ok(plane.into())), widths[2])
            }
            Primitive::Sphere(s) => {
                let r_ax = radial(s.radius());
                let c_ax = Axis::window(0.0, halfwidth * s.radius(), offset_bins);
                let centers: Vec<Vector3> = (0..c_ax.bins.pow(3))
                    .map(|i| {
                        let (a, b, c) = (i / (c_ax.bins * c_ax.bins), (i / c_ax.bins) % c_ax.bins, i % c_ax.bins);
                        Vector3::new(c_ax.center(a), c_ax.center(b), c_ax.center(c))
                    })
                    .collect();
                let dims = [c_ax.bins, c_ax.bins, c_ax.bins, r_ax.bins];
                let acc = accumulate(pts, &dims, |p, acc| {
                    for (i, c) in centers.iter().enumerate() {
                        if let Some(k) = r_ax.bin((p.coords - c).norm()) {
                            let (a, b, cc) =
                                (i / (c_ax.bins * c_ax.bins), (i / c_ax.bins) % c_ax.bins, i % c_ax.bins);
                            acc.vote(&[a, b, cc, k]);
                        }
                    }
                });
                let local = move |cell: &[usize]| {
                    let c = Point3::new(c_ax.center(cell[0]), c_ax.center(cell[1]), c_ax.center(cell[2]));
                    Ok(Sphere::new(r_ax.center(cell[3]), c)?.into())
                };
                (acc, Box::new(local), r_ax.width())
            }
            Primitive::Cylinder(c) => {
                let r_ax = radial(c.radius());
                let o_ax = Axis::window(0.0, halfwidth * c.radius(), offset_bins);
                let dims = [o_ax.bins, o_ax.bins, r_ax.bins];
                let acc = accumulate(pts, &dims, |p, acc| {
                    for i in 0..o_ax.bins {
                        for j in 0..o_ax.bins {
                            let r = (p.x - o_ax.center(i)).hypot(p.y - o_ax.center(j));
                            if let Some(k) = r_ax.bin(r) {
                                acc.vote(&[i, j, k]);
                            }
                        }
                    }
                });
                let local = move |cell: &[usize]| {
                    let foot = Point3::new(o_ax.center(cell[0]), o_ax.center(cell[1]), 0.0);
                    Ok(Cylinder::new(r_ax.center(cell[2]), Vector3::z(), foot)?.into())
                };
                (acc, Box::new(local), r_ax.width())
            }
            Primitive::Cone(c) => {
                let a0 = c.half_aperture();
                let lo = (a0 * (1.0 - halfwidth)).max(0.5f64.to_radians());
                let hi = (a0 * (1.0 + halfwidth)).min(89.5f64.to_radians());
                let a_ax = Axis { lo, hi, bins };
                let z_ax = Axis::window(0.0, halfwidth * l, bins);
                let dims = [z_ax.bins, a_ax.bins];
                let acc = accumulate(pts, &dims, |p, acc| {
                    let rho = p.x.hypot(p.y);
                    for i in 0..z_ax.bins {
                        let h = p.z - z_ax.center(i);
                        if let Some(k) = a_ax.bin(rho.atan2(h.abs())) {
                            acc.vote(&[i, k]);
                        }
                    }
                });
                let local = move |cell: &[usize]| {
                    let v = Point3::new(0.0, 0.0, z_ax.center(cell[0]));
                    Ok(Cone::new(a_ax.center(cell[1]), Vector3::z(), v)?.into())
                };
                let mean_dist = pts.iter().map(|p| p.coords.norm()).sum::<f64>() / pts.len() as f64;
                (acc, Box::new(local), a_ax.width() * mean_dist)
            }
            Primitive::Torus(t) => {
                let big = radial(t.major_radius());
                let small = radial(t.minor_radius());
                let dims = [big.bins, small.bins];
                let acc = accumulate(pts, &dims, |p, acc| {
                    let rho = p.x.hypot(p.y);
                    for i in 0..big.bins {
                        if let Some(k) = small.bin((rho - big.center(i)).hypot(p.z)) {
                            acc.vote(&[i, k]);
                        }
                    }
                });
                let local = move |cell: &[usize]| {
                    let (major, minor) = (big.center(cell[0]), small.center(cell[1]));
                    if minor >= major {
                        return Err(FitError::Degenerate {
                            kind: PrimitiveKind::Torus,
                            reason: "voted tube wider than the spine radius".into(),
                        });
                    }
                    Ok(Torus::new(major, minor, Vector3::z(), Point3::origin())?.into())
                };
                (acc, Box::new(local), small.width())
            }
        };

    let (cell, votes) = acc.argmax().ok_or(HoughError::WindowMiss)?;
    let on_boundary = kind != PrimitiveKind::Plane && acc.is_boundary(&cell);
    let params = local(&cell)?.transformed(&std.transform.inverse());
    Ok(HoughEstimate { params, cell, votes, on_boundary, resolution })
}

/// Options of the end-to-end Hough path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughConfig {
    pub bins: usize,
    pub halfwidth: f64,
    /// Window re-centerings allowed when the peak sits on the border.
    pub max_recenter: usize,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig { bins: DEFAULT_BINS, halfwidth: DEFAULT_HALFWIDTH, max_recenter: 3 }
    }
}

/// Standardize, vote, then polish by least squares on the inliers of the
/// winning cell.
pub fn hough_fit(
    points: &[Point3],
    kind: PrimitiveKind,
    normals: &NormalField,
    cfg: HoughConfig,
) -> Result<FitOutcome, HoughError> {
    let mut std = standardize_pose(points, kind, normals)?;
    let mut est = hough_refine(&std, kind, cfg.bins, cfg.halfwidth)?;
    for _ in 0..cfg.max_recenter {
        if !est.on_boundary {
            break;
        }
        std.estimate = est.params.transformed(&std.transform);
        est = hough_refine(&std, kind, cfg.bins, cfg.halfwidth)?;
    }
    let tol = 3.0 * est.resolution.max(1e-12);
    let inliers: Vec<Point3> =
        points.iter().filter(|p| est.params.distance(p) <= tol).copied().collect();
    let fit_points = if inliers.len() >= points.len() / 2 { &inliers[..] } else { points };
    let out = polish(est.params, fit_points, points);
    check_plausible(&out.params, points)?;
    Ok(out)
}
