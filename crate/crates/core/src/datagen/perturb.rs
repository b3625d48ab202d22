use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::DataGenError;
use crate::geometry::{orthonormal_basis, Point3, PointCloud, Primitive, Vector3};

/// Perturbations below this size are reported as degenerate.
pub const MIN_OUTPUT_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationKind {
    A0,
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
    A8,
    A9,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 10] = [
        Self::A0,
        Self::A1,
        Self::A2,
        Self::A3,
        Self::A4,
        Self::A5,
        Self::A6,
        Self::A7,
        Self::A8,
        Self::A9,
    ];

    pub fn label(self) -> &'static str {
        ["A0", "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"][self as usize]
    }

    fn noise(self) -> Option<NoiseModel> {
        use PerturbationKind::*;
        match self {
            A1 | A5 | A7 => Some(NoiseModel::Uniform),
            A2 | A6 | A8 => Some(NoiseModel::Gaussian),
            _ => None,
        }
    }

    fn undersamples(self) -> bool {
        matches!(self, Self::A3 | Self::A5 | Self::A6)
    }

    fn holes(self) -> bool {
        matches!(self, Self::A4 | Self::A7 | Self::A8)
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PerturbationKind {
    type Err = DataGenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DataGenError::UnknownPerturbation(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseModel {
    /// Offsets ~ U(-1/n, 1/n), n in [3, 20].
    Uniform,
    /// Offsets ~ N(-1/n, 4/n^2), n in [10, 30].
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub n: u32,
    /// Share of points that receive noise.
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Removal {
    Undersample { fraction: f64 },
    Hole { center_index: usize, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deformation {
    pub center_index: usize,
    /// Covariance of the bump in the tangent chart at the center.
    pub covariance: Matrix2<f64>,
    /// Signed peak displacement.
    pub amplitude: f64,
}

/// A perturbation type together with all the quantities drawn for it.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub removal: Option<Removal>,
    pub noise: Option<NoiseSpec>,
    pub deformation: Option<Deformation>,
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        PerturbationSpec { kind: PerturbationKind::A0, removal: None, noise: None, deformation: None }
    }

    /// Draws the random quantities of `kind` for `cloud`.
    pub fn draw<R: Rng + ?Sized>(kind: PerturbationKind, cloud: &PointCloud, rng: &mut R) -> Self {
        let l = cloud.bbox_diagonal();
        let removal = if kind.undersamples() {
            Some(Removal::Undersample { fraction: rng.random_range(0.3..=0.7) })
        } else if kind.holes() {
            Some(Removal::Hole {
                center_index: rng.random_range(0..cloud.len()),
                radius: rng.random_range(0.05..=0.25) * l,
            })
        } else {
            None
        };
        let noise = kind.noise().map(|model| {
            let n = match model {
                NoiseModel::Uniform => rng.random_range(3..=20),
                NoiseModel::Gaussian => rng.random_range(10..=30),
            };
            NoiseSpec { model, n, fraction: rng.random_range(0.3..=1.0) }
        });
        let deformation = (kind == PerturbationKind::A9).then(|| {
            let s1 = rng.random_range(0.05..=0.25) * l;
            let s2 = rng.random_range(0.05..=0.25) * l;
            let (sin, cos) = rng.random_range(0.0..std::f64::consts::PI).sin_cos();
            let rot = Matrix2::new(cos, -sin, sin, cos);
            let covariance = rot * Matrix2::new(s1 * s1, 0.0, 0.0, s2 * s2) * rot.transpose();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Deformation {
                center_index: rng.random_range(0..cloud.len()),
                covariance,
                amplitude: sign * rng.random_range(0.03..=0.1) * l,
            }
        });
        PerturbationSpec { kind, removal, noise, deformation }
    }
}

fn remove(points: Vec<Point3>, removal: &Removal, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    match *removal {
        Removal::Undersample { fraction } => {
            let n = points.len();
            let drop = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
            let mut keep = vec![true; n];
            for i in sample(rng, n, drop) {
                keep[i] = false;
            }
            points.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
        }
        Removal::Hole { center_index, radius } => {
            let c = points[center_index.min(points.len() - 1)];
            points.into_iter().filter(|p| (p - c).norm() > radius).collect()
        }
    }
}

fn add_noise(points: &mut [Point3], noise: &NoiseSpec, rng: &mut ChaCha8Rng) {
    let n = noise.n as f64;
    let count = ((noise.fraction.clamp(0.0, 1.0) * points.len() as f64).round() as usize)
        .min(points.len());
    let chosen = sample(rng, points.len(), count).into_vec();
    match noise.model {
        NoiseModel::Uniform => {
            let d = Uniform::new_inclusive(-1.0 / n, 1.0 / n).expect("finite bounds");
            for i in chosen {
                points[i].coords += Vector3::from_fn(|_, _| d.sample(rng));
            }
        }
        NoiseModel::Gaussian => {
            let d = Normal::new(-1.0 / n, 2.0 / n).expect("positive deviation");
            for i in chosen {
                points[i].coords += Vector3::from_fn(|_, _| d.sample(rng));
            }
        }
    }
}

fn deform(points: &mut [Point3], def: &Deformation, surface: &Primitive) {
    let c = points[def.center_index.min(points.len() - 1)];
    let nc = surface.surface_normal(&c);
    let (t1, t2) = orthonormal_basis(&nc);
    let inv = def.covariance.try_inverse().unwrap_or_else(Matrix2::zeros);
    for p in points.iter_mut() {
        let np = surface.surface_normal(p);
        // the tangent chart only covers the side of the surface facing the bump
        if np.dot(&nc) <= 0.0 {
            continue;
        }
        let d = *p - c;
        let uv = nalgebra::Vector2::new(d.dot(&t1), d.dot(&t2));
        let g = def.amplitude * (-0.5 * uv.dot(&(inv * uv))).exp();
        p.coords += np * g;
    }
}

/// Applies `spec` to `cloud`. `surface` supplies outward normals for A9.
/// Structural edits happen before noise.
pub fn perturb(
    cloud: &PointCloud,
    spec: &PerturbationSpec,
    surface: &Primitive,
    seed: u64,
) -> Result<PointCloud, DataGenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = cloud.points().to_vec();
    if let Some(removal) = &spec.removal {
        points = remove(points, removal, &mut rng);
        if points.len() < MIN_OUTPUT_POINTS {
            return Err(DataGenError::DegenerateOutput {
                remaining: points.len(),
                min: MIN_OUTPUT_POINTS,
            });
        }
    }
    if let Some(noise) = &spec.noise {
        add_noise(&mut points, noise, &mut rng);
    }
    if let Some(def) = &spec.deformation {
        deform(&mut points, def, surface);
    }
    Ok(PointCloud::new(cloud.id().to_string(), points)?)
}
