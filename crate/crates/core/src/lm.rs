//! Damped Gauss-Newton refinement of primitive parameters on geometric
//! (orthogonal) distances.
//!
//! Axes are parameterized by two spherical angles measured in a frame whose
//! first basis vector is the initial axis estimate, so the starting point sits
//! on the equator of the chart where both angles are well conditioned.

use nalgebra::{Matrix3, SMatrix, SVector};

use crate::geometry::{
    orthonormal_basis, Cone, Cylinder, GeometryError, Plane, Point3, Primitive, Sphere, Torus,
    Vector3,
};

pub const MAX_ITERATIONS: usize = 100;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;
const INITIAL_DAMPING: f64 = 1e-3;
const MAX_DAMPING: f64 = 1e16;

/// A signed residual per point whose absolute value is the point-to-surface
/// distance, with its analytic gradient with respect to `N` parameters.
pub trait ResidualModel<const N: usize> {
    fn residual(&self, params: &SVector<f64, N>, p: &Point3) -> f64;

    /// Residual and its gradient.
    fn residual_and_gradient(&self, params: &SVector<f64, N>, p: &Point3)
        -> (f64, SVector<f64, N>);

    fn to_primitive(&self, params: &SVector<f64, N>) -> Result<Primitive, GeometryError>;
}

#[derive(Clone, Debug)]
pub struct Refined<const N: usize> {
    pub params: SVector<f64, N>,
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn cost<const N: usize, M: ResidualModel<N>>(
    model: &M,
    params: &SVector<f64, N>,
    points: &[Point3],
) -> f64 {
    points.iter().map(|p| model.residual(params, p).powi(2)).sum()
}

/// Minimizes the sum of squared residuals. Steps are only accepted when they
/// lower the cost; damping is divided by 10 on success and multiplied by 10 on
/// failure.
pub fn refine<const N: usize, M: ResidualModel<N>>(
    model: &M,
    start: SVector<f64, N>,
    points: &[Point3],
) -> Refined<N> {
    let mut params = start;
    let initial_cost = cost(model, &params, points);
    let mut current = initial_cost;
    let mut damping = INITIAL_DAMPING;
    let mut converged = false;
    let mut iterations = 0;

    if !current.is_finite() {
        return Refined { params, initial_cost, cost: current, iterations, converged };
    }

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = SMatrix::<f64, N, N>::zeros();
        let mut jtr = SVector::<f64, N>::zeros();
        for p in points {
            let (r, g) = model.residual_and_gradient(&params, p);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        if current <= f64::MIN_POSITIVE || jtr.norm() == 0.0 {
            converged = true;
            break;
        }
        let diag_floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;

        let mut accepted = None;
        while damping <= MAX_DAMPING {
            let mut lhs = jtj;
            for i in 0..N {
                lhs[(i, i)] += damping * jtj[(i, i)].max(diag_floor);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-jtr)),
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            let candidate = params + step;
            let candidate_cost = cost(model, &candidate, points);
            if candidate_cost.is_finite() && candidate_cost < current {
                damping = (damping / 10.0).max(1e-15);
                accepted = Some((candidate, candidate_cost));
                break;
            }
            damping *= 10.0;
        }

        match accepted {
            Some((next, next_cost)) => {
                let rel = (current - next_cost) / current.max(f64::MIN_POSITIVE);
                params = next;
                current = next_cost;
                if rel < RELATIVE_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    Refined { params, initial_cost, cost: current, iterations, converged }
}

/// Spherical-angle chart around a reference direction.
#[derive(Clone, Copy, Debug)]
pub struct AxisChart {
    frame: Matrix3<f64>,
}

/// Axis and its partial derivatives for given chart angles.
#[derive(Clone, Copy, Debug)]
pub struct AxisJet {
    pub axis: Vector3,
    /// d axis / d theta (unit, orthogonal to the axis)
    pub e_theta: Vector3,
    /// unit vector with d axis / d phi = sin(theta) * e_phi
    pub e_phi: Vector3,
    pub sin_theta: f64,
    pub cos_theta: f64,
}

impl AxisChart {
    /// Chart in which `(theta, phi) = (pi/2, 0)` maps to `reference`.
    pub fn around(reference: &Vector3) -> Self {
        let a = reference.normalize();
        let (e1, e2) = orthonormal_basis(&a);
        AxisChart { frame: Matrix3::from_columns(&[a, e1, e2]) }
    }

    pub fn start_angles() -> (f64, f64) {
        (std::f64::consts::FRAC_PI_2, 0.0)
    }

    pub fn jet(&self, theta: f64, phi: f64) -> AxisJet {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        AxisJet {
            axis: self.frame * Vector3::new(st * cp, st * sp, ct),
            e_theta: self.frame * Vector3::new(ct * cp, ct * sp, -st),
            e_phi: self.frame * Vector3::new(-sp, cp, 0.0),
            sin_theta: st,
            cos_theta: ct,
        }
    }
}

struct Radial {
    d: Vector3,
    h: f64,
    rho: f64,
    /// w / rho, zero on the axis
    w_hat: Vector3,
}

fn radial(p: &Point3, origin: &Point3, axis: &Vector3) -> Radial {
    let d = p - origin;
    let h = d.dot(axis);
    let w = d - axis * h;
    let rho = w.norm();
    let w_hat = if rho > 0.0 { w / rho } else { Vector3::zeros() };
    Radial { d, h, rho, w_hat }
}

/// Plane: params `[theta, phi, offset]`, residual `a . p - offset`.
pub struct PlaneModel {
    pub chart: AxisChart,
}

impl PlaneModel {
    pub fn start(plane: &Plane) -> (Self, SVector<f64, 3>) {
        let (t, f) = AxisChart::start_angles();
        (PlaneModel { chart: AxisChart::around(plane.normal()) }, SVector::from([t, f, plane.offset()]))
    }
}

impl ResidualModel<3> for PlaneModel {
    fn residual(&self, x: &SVector<f64, 3>, p: &Point3) -> f64 {
        self.chart.jet(x[0], x[1]).axis.dot(&p.coords) - x[2]
    }

    fn residual_and_gradient(&self, x: &SVector<f64, 3>, p: &Point3) -> (f64, SVector<f64, 3>) {
        let j = self.chart.jet(x[0], x[1]);
        let r = j.axis.dot(&p.coords) - x[2];
        let g = SVector::from([
            p.coords.dot(&j.e_theta),
            j.sin_theta * p.coords.dot(&j.e_phi),
            -1.0,
        ]);
        (r, g)
    }

    fn to_primitive(&self, x: &SVector<f64, 3>) -> Result<Primitive, GeometryError> {
        let a = self.chart.jet(x[0], x[1]).axis;
        Ok(Plane::new(a, Point3::from(a * x[2]))?.into())
    }
}

/// Sphere: params `[cx, cy, cz, r]`.
pub struct SphereModel;

impl SphereModel {
    pub fn start(s: &Sphere) -> SVector<f64, 4> {
        let c = s.center();
        SVector::from([c.x, c.y, c.z, s.radius()])
    }
}

impl ResidualModel<4> for SphereModel {
    fn residual(&self, x: &SVector<f64, 4>, p: &Point3) -> f64 {
        (p.coords - x.fixed_rows::<3>(0)).norm() - x[3]
    }

    fn residual_and_gradient(&self, x: &SVector<f64, 4>, p: &Point3) -> (f64, SVector<f64, 4>) {
        let d = p.coords - x.fixed_rows::<3>(0);
        let n = d.norm();
        let u = if n > 0.0 { d / n } else { Vector3::zeros() };
        (n - x[3], SVector::from([-u.x, -u.y, -u.z, -1.0]))
    }

    fn to_primitive(&self, x: &SVector<f64, 4>) -> Result<Primitive, GeometryError> {
        Ok(Sphere::new(x[3], Point3::new(x[0], x[1], x[2]))?.into())
    }
}

/// Cylinder: params `[theta, phi, u, v, r]`; the axis point moves in the
/// plane orthogonal to the current axis, `P = anchor + u e_theta + v e_phi`.
pub struct CylinderModel {
    pub chart: AxisChart,
    pub anchor: Point3,
}

impl CylinderModel {
    pub fn start(c: &Cylinder) -> (Self, SVector<f64, 5>) {
        let (t, f) = AxisChart::start_angles();
        let model = CylinderModel { chart: AxisChart::around(c.axis()), anchor: *c.axis_point() };
        (model, SVector::from([t, f, 0.0, 0.0, c.radius()]))
    }

    fn axis_point(&self, j: &AxisJet, x: &SVector<f64, 5>) -> Point3 {
        self.anchor + j.e_theta * x[2] + j.e_phi * x[3]
    }
}

impl ResidualModel<5> for CylinderModel {
    fn residual(&self, x: &SVector<f64, 5>, p: &Point3) -> f64 {
        let j = self.chart.jet(x[0], x[1]);
        radial(p, &self.axis_point(&j, x), &j.axis).rho - x[4]
    }

    fn residual_and_gradient(&self, x: &SVector<f64, 5>, p: &Point3) -> (f64, SVector<f64, 5>) {
        let j = self.chart.jet(x[0], x[1]);
        let (u, v) = (x[2], x[3]);
        let q = radial(p, &self.axis_point(&j, x), &j.axis);
        // gradients with respect to the axis direction and the axis point
        let g_axis = -q.w_hat * q.h;
        let g_point = -q.w_hat;
        let da_dtheta = j.e_theta;
        let da_dphi = j.e_phi * j.sin_theta;
        let dp_dtheta = -j.axis * u;
        let dp_dphi = j.e_phi * (u * j.cos_theta) - (j.axis * j.sin_theta + j.e_theta * j.cos_theta) * v;
        let g = SVector::from([
            g_axis.dot(&da_dtheta) + g_point.dot(&dp_dtheta),
            g_axis.dot(&da_dphi) + g_point.dot(&dp_dphi),
            g_point.dot(&j.e_theta),
            g_point.dot(&j.e_phi),
            -1.0,
        ]);
        (q.rho - x[4], g)
    }

    fn to_primitive(&self, x: &SVector<f64, 5>) -> Result<Primitive, GeometryError> {
        let j = self.chart.jet(x[0], x[1]);
        Ok(Cylinder::new(x[4], j.axis, self.axis_point(&j, x))?.into())
    }
}

/// Single nappe opening along the chart axis: params
/// `[theta, phi, vx, vy, vz, alpha]`. The residual is `rho cos(alpha) -
/// h sin(alpha)` where the closest surface point lies on a generatrix and the
/// distance to the apex behind it.
pub struct ConeModel {
    pub chart: AxisChart,
}

impl ConeModel {
    pub fn start(c: &Cone) -> (Self, SVector<f64, 6>) {
        Self::start_oriented(c, c.axis())
    }

    /// Starts from `c` with the nappe opening along `direction` (either sign
    /// of the cone axis).
    pub fn start_oriented(c: &Cone, direction: &Vector3) -> (Self, SVector<f64, 6>) {
        let (t, f) = AxisChart::start_angles();
        let v = c.vertex();
        (
            ConeModel { chart: AxisChart::around(direction) },
            SVector::from([t, f, v.x, v.y, v.z, c.half_aperture()]),
        )
    }

    /// Orients the nappe toward the majority of `points`.
    pub fn start_toward(c: &Cone, points: &[Point3]) -> (Self, SVector<f64, 6>) {
        let a = *c.axis().as_vector();
        let side: f64 = points.iter().map(|p| (p - c.vertex()).dot(&a)).sum();
        Self::start_oriented(c, &if side < 0.0 { -a } else { a })
    }
}

impl ResidualModel<6> for ConeModel {
    fn residual(&self, x: &SVector<f64, 6>, p: &Point3) -> f64 {
        self.residual_and_gradient(x, p).0
    }

    fn residual_and_gradient(&self, x: &SVector<f64, 6>, p: &Point3) -> (f64, SVector<f64, 6>) {
        let j = self.chart.jet(x[0], x[1]);
        let q = radial(p, &Point3::new(x[2], x[3], x[4]), &j.axis);
        let (s, c) = x[5].sin_cos();
        if q.h * c + q.rho * s < 0.0 {
            // behind the apex
            let dist = q.d.norm();
            let g_vertex = if dist > 0.0 { -q.d / dist } else { Vector3::zeros() };
            let g = SVector::from([0.0, 0.0, g_vertex.x, g_vertex.y, g_vertex.z, 0.0]);
            return (dist, g);
        }
        let g_axis = -q.w_hat * (q.h * c) - q.d * s;
        let g_vertex = -q.w_hat * c + j.axis * s;
        let g = SVector::from([
            g_axis.dot(&j.e_theta),
            g_axis.dot(&j.e_phi) * j.sin_theta,
            g_vertex.x,
            g_vertex.y,
            g_vertex.z,
            -q.rho * s - q.h * c,
        ]);
        (q.rho * c - q.h * s, g)
    }

    fn to_primitive(&self, x: &SVector<f64, 6>) -> Result<Primitive, GeometryError> {
        let j = self.chart.jet(x[0], x[1]);
        Ok(Cone::new(x[5], j.axis, Point3::new(x[2], x[3], x[4]))?.into())
    }
}

/// Torus: params `[theta, phi, cx, cy, cz, major, minor]`.
pub struct TorusModel {
    pub chart: AxisChart,
}

impl TorusModel {
    pub fn start(t: &Torus) -> (Self, SVector<f64, 7>) {
        let (th, f) = AxisChart::start_angles();
        let c = t.center();
        (
            TorusModel { chart: AxisChart::around(t.axis()) },
            SVector::from([th, f, c.x, c.y, c.z, t.major_radius(), t.minor_radius()]),
        )
    }
}

impl ResidualModel<7> for TorusModel {
    fn residual(&self, x: &SVector<f64, 7>, p: &Point3) -> f64 {
        let j = self.chart.jet(x[0], x[1]);
        let q = radial(p, &Point3::new(x[2], x[3], x[4]), &j.axis);
        (q.rho - x[5]).hypot(q.h) - x[6]
    }

    fn residual_and_gradient(&self, x: &SVector<f64, 7>, p: &Point3) -> (f64, SVector<f64, 7>) {
        let j = self.chart.jet(x[0], x[1]);
        let q = radial(p, &Point3::new(x[2], x[3], x[4]), &j.axis);
        let dr = q.rho - x[5];
        let tube = dr.hypot(q.h);
        let inv = if tube > 0.0 { 1.0 / tube } else { 0.0 };
        let g_axis = (-q.w_hat * (dr * q.h) + q.d * q.h) * inv;
        let g_center = (-q.w_hat * dr - j.axis * q.h) * inv;
        let g = SVector::from([
            g_axis.dot(&j.e_theta),
            g_axis.dot(&j.e_phi) * j.sin_theta,
            g_center.x,
            g_center.y,
            g_center.z,
            -dr * inv,
            -1.0,
        ]);
        (tube - x[6], g)
    }

    fn to_primitive(&self, x: &SVector<f64, 7>) -> Result<Primitive, GeometryError> {
        let j = self.chart.jet(x[0], x[1]);
        Ok(Torus::new(x[5], x[6], j.axis, Point3::new(x[2], x[3], x[4]))?.into())
    }
}

/// Builds the residual model for `prim` and refines it on `points`.
pub fn refine_primitive(
    prim: &Primitive,
    points: &[Point3],
) -> (Result<Primitive, GeometryError>, RefineSummary) {
    fn run<const N: usize, M: ResidualModel<N>>(
        model: M,
        start: SVector<f64, N>,
        points: &[Point3],
    ) -> (Result<Primitive, GeometryError>, RefineSummary) {
        let out = refine(&model, start, points);
        let summary = RefineSummary {
            initial_cost: out.initial_cost,
            cost: out.cost,
            iterations: out.iterations,
            converged: out.converged,
        };
        (model.to_primitive(&out.params), summary)
    }
    match prim {
        Primitive::Plane(s) => {
            let (m, x) = PlaneModel::start(s);
            run(m, x, points)
        }
        Primitive::Sphere(s) => run(SphereModel, SphereModel::start(s), points),
        Primitive::Cylinder(s) => {
            let (m, x) = CylinderModel::start(s);
            run(m, x, points)
        }
        Primitive::Cone(s) => {
            let (m, x) = ConeModel::start_toward(s, points);
            run(m, x, points)
        }
        Primitive::Torus(s) => {
            let (m, x) = TorusModel::start(s);
            run(m, x, points)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineSummary {
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_surface, SampleExtent};

    #[test]
    fn residual_magnitude_is_surface_distance() {
        let torus: Primitive =
            Torus::new(2.0, 0.5, Vector3::new(0.3, 0.1, 1.0), Point3::new(1.0, 2.0, 0.0)).unwrap().into();
        let (m, x) = match &torus {
            Primitive::Torus(t) => TorusModel::start(t),
            _ => unreachable!(),
        };
        for p in [Point3::new(0.0, 0.0, 0.0), Point3::new(3.0, 1.0, 2.0)] {
            assert!((m.residual(&x, &p).abs() - torus.distance(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_recovers_perturbed_sphere() {
        let truth: Primitive = Sphere::new(1.3, Point3::new(0.5, -1.0, 2.0)).unwrap().into();
        let cloud = sample_surface(&truth, 300, SampleExtent::default(), 1);
        let start: Primitive = Sphere::new(1.0, Point3::new(0.7, -0.8, 2.2)).unwrap().into();
        let (fit, summary) = refine_primitive(&start, cloud.points());
        assert!(summary.converged && summary.cost <= summary.initial_cost);
        match fit.unwrap() {
            Primitive::Sphere(s) => {
                assert!((s.radius() - 1.3).abs() < 1e-9);
                assert!((s.center() - Point3::new(0.5, -1.0, 2.0)).norm() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }
}
