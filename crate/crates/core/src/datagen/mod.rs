//! Synthetic benchmark segments.
//!
//! A segment is produced by sampling a primitive in canonical position
//! (centered at the origin, rotational axis along z), cutting it with random
//! half-spaces, moving it to a random pose and finally applying one of the
//! perturbation types A0..A9.

mod io;
mod perturb;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    sample_points, Cone, Cylinder, GeometryError, Plane, Point3, PointCloud, Primitive,
    PrimitiveKind, RigidTransform, Sphere, Torus, Vector3,
};

pub use io::{
    format_cloud, format_ground_truth, parse_cloud, parse_ground_truth, read_cloud_txt,
    read_gt_txt, read_manifest, write_cloud_txt, write_gt_txt, write_manifest, GroundTruthVector,
    ManifestRow,
};
pub use perturb::{
    perturb, Deformation, NoiseModel, NoiseSpec, PerturbationKind, PerturbationSpec, Removal,
};

#[derive(Debug, Error)]
pub enum DataGenError {
    #[error("cut retry budget exhausted after {attempts} attempts ({kind})")]
    RetryBudget { kind: PrimitiveKind, attempts: usize },
    #[error("point count must be at least {min}, got {got}")]
    PointCount { min: usize, got: usize },
    #[error("perturbation left {remaining} points (minimum {min})")]
    DegenerateOutput { remaining: usize, min: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty point cloud file")]
    EmptyFile,
    #[error("ground-truth vector for {kind} must have {expected} entries, got {got}")]
    VectorLength { kind: PrimitiveKind, expected: usize, got: usize },
    #[error("unknown primitive code {0}")]
    UnknownKind(f64),
    #[error("unknown perturbation type {0:?}")]
    UnknownPerturbation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] csv::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DataGenError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataGenError::Io { path: path.to_path_buf(), source }
    }
}

pub const MIN_SEGMENT_POINTS: usize = 100;
pub const CUT_ATTEMPTS: usize = 8;
/// Minimum share of the requested points that must survive the cuts.
pub const MIN_SURVIVING_FRACTION: f64 = 0.2;
/// Translations of the final pose are drawn from `[-MAX_SHIFT, MAX_SHIFT]^3`.
pub const MAX_SHIFT: f64 = 5.0;

/// Ranges of the randomly assigned shape quantities.
pub mod ranges {
    pub const RADIUS: (f64, f64) = (0.5, 3.0);
    /// Minor torus radius as a fraction of the major one.
    pub const TORUS_MINOR_FRACTION: (f64, f64) = (0.1, 0.9);
    pub const CONE_HALF_APERTURE_DEG: (f64, f64) = (10.0, 75.0);
    pub const EXTENT: (f64, f64) = (1.0, 4.0);
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// Random primitive of `kind` in canonical position, plus the sampling extent
/// used for unbounded surfaces.
pub fn random_shape<R: Rng + ?Sized>(kind: PrimitiveKind, rng: &mut R) -> (Primitive, f64) {
    let origin = Point3::origin();
    let z = Vector3::z();
    let prim: Primitive = match kind {
        PrimitiveKind::Plane => Plane::new(z, origin).map(Into::into),
        PrimitiveKind::Cylinder => {
            Cylinder::new(uniform(rng, ranges::RADIUS), z, origin).map(Into::into)
        }
        PrimitiveKind::Sphere => Sphere::new(uniform(rng, ranges::RADIUS), origin).map(Into::into),
        PrimitiveKind::Cone => {
            let (lo, hi) = ranges::CONE_HALF_APERTURE_DEG;
            Cone::new(uniform(rng, (lo.to_radians(), hi.to_radians())), z, origin).map(Into::into)
        }
        PrimitiveKind::Torus => {
            let major = uniform(rng, ranges::RADIUS);
            let (lo, hi) = ranges::TORUS_MINOR_FRACTION;
            let minor = major * uniform(rng, (lo, hi));
            Torus::new(major, minor, z, origin).map(Into::into)
        }
    }
    .expect("canonical parameters are valid by construction");
    (prim, uniform(rng, ranges::EXTENT))
}

/// Random canonical primitive of `kind`; deterministic in `seed`.
pub fn random_params(kind: PrimitiveKind, seed: u64) -> Primitive {
    random_shape(kind, &mut ChaCha8Rng::seed_from_u64(seed)).0
}

/// Closed half-space `normal . p >= offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub normal: Vector3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn contains(&self, p: &Point3) -> bool {
        self.normal.dot(&p.coords) >= self.offset
    }

    pub fn transformed(&self, t: &RigidTransform) -> HalfSpace {
        let normal = t.apply_vector(&self.normal);
        HalfSpace { normal, offset: self.offset + normal.dot(&t.translation_vector()) }
    }
}

/// A generated segment before perturbation.
#[derive(Clone, Debug)]
pub struct Segment {
    pub cloud: PointCloud,
    /// Ground truth in the final (world) pose.
    pub primitive: Primitive,
    /// Cuts applied, expressed in world coordinates.
    pub cuts: Vec<HalfSpace>,
    pub transform: RigidTransform,
}

impl Segment {
    pub fn ground_truth(&self) -> GroundTruthVector {
        GroundTruthVector::from_primitive(&self.primitive)
    }
}

/// Random cut through a random point of the cloud, keeping whichever side
/// holds at least [`MIN_SURVIVING_FRACTION`] of the points.
fn random_cut<R: Rng + ?Sized>(points: &[Point3], rng: &mut R) -> HalfSpace {
    let normal = loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        if v.norm() > 1e-9 {
            break v.normalize();
        }
    };
    let through = points[rng.random_range(0..points.len())];
    let cut = HalfSpace { normal, offset: normal.dot(&through.coords) };
    let kept = points.iter().filter(|p| cut.contains(p)).count();
    if (kept as f64) < MIN_SURVIVING_FRACTION * points.len() as f64 {
        HalfSpace { normal: -normal, offset: -cut.offset }
    } else {
        cut
    }
}

/// Samples, cuts and repositions one primitive segment.
pub fn generate_segment(
    kind: PrimitiveKind,
    seed: u64,
    point_count: usize,
) -> Result<Segment, DataGenError> {
    if point_count < MIN_SEGMENT_POINTS {
        return Err(DataGenError::PointCount { min: MIN_SEGMENT_POINTS, got: point_count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (canonical, extent) = random_shape(kind, &mut rng);
    let sampled = sample_points(&canonical, point_count, extent, &mut rng);
    let min_left = (MIN_SURVIVING_FRACTION * point_count as f64).ceil() as usize;

    for _ in 0..CUT_ATTEMPTS {
        let n_cuts = rng.random_range(1..=3);
        let mut kept = sampled.clone();
        let mut cuts = Vec::with_capacity(n_cuts);
        for _ in 0..n_cuts {
            let cut = random_cut(&kept, &mut rng);
            kept.retain(|p| cut.contains(p));
            cuts.push(cut);
            if kept.len() < min_left {
                break;
            }
        }
        if kept.len() < min_left {
            continue;
        }
        let transform = RigidTransform::random(&mut rng, MAX_SHIFT);
        let points = kept.iter().map(|p| transform.apply_point(p)).collect();
        return Ok(Segment {
            cloud: PointCloud::new(format!("{kind}-{seed}"), points)?,
            primitive: canonical.transformed(&transform),
            cuts: cuts.iter().map(|c| c.transformed(&transform)).collect(),
            transform,
        });
    }
    Err(DataGenError::RetryBudget { kind, attempts: CUT_ATTEMPTS })
}

/// SplitMix64 finalizer, used to derive independent per-segment seeds.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generated, perturbed segment ready to be written.
#[derive(Clone, Debug)]
pub struct BenchmarkItem {
    pub kind: PrimitiveKind,
    pub perturbation: PerturbationKind,
    pub index: usize,
    pub seed: u64,
    pub cloud: PointCloud,
    pub ground_truth: Primitive,
    pub spec: PerturbationSpec,
}

/// Attempts to produce a perturbed segment; removal perturbations that leave
/// too few points are redrawn with a derived seed.
pub fn generate_item(
    kind: PrimitiveKind,
    perturbation: PerturbationKind,
    index: usize,
    seed: u64,
    point_range: (usize, usize),
) -> Result<BenchmarkItem, DataGenError> {
    let mut last_err = None;
    for attempt in 0..CUT_ATTEMPTS as u64 {
        let attempt_seed = if attempt == 0 { seed } else { mix_seed(seed, attempt) };
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        rng.set_stream(1);
        let count = rng.random_range(point_range.0..=point_range.1.max(point_range.0));
        let segment = generate_segment(kind, attempt_seed, count)?;
        let spec = PerturbationSpec::draw(perturbation, &segment.cloud, &mut rng);
        match perturb(&segment.cloud, &spec, &segment.primitive, rng.random()) {
            Ok(cloud) => {
                return Ok(BenchmarkItem {
                    kind,
                    perturbation,
                    index,
                    seed,
                    cloud,
                    ground_truth: segment.primitive,
                    spec,
                })
            }
            Err(e @ DataGenError::DegenerateOutput { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(DataGenError::RetryBudget { kind, attempts: CUT_ATTEMPTS }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub per_kind: usize,
    pub perturbations: Vec<PerturbationKind>,
    pub kinds: Vec<PrimitiveKind>,
    pub point_range: (usize, usize),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            per_kind: 1,
            perturbations: vec![PerturbationKind::A0],
            kinds: PrimitiveKind::ALL.to_vec(),
            point_range: (1000, 2000),
        }
    }
}

/// Relative paths of an item's cloud and ground-truth files.
pub fn item_paths(perturbation: PerturbationKind, kind: PrimitiveKind, index: usize) -> (String, String) {
    let stem = format!("{}/{}_{:04}", perturbation.label(), kind.name(), index);
    (format!("{stem}.txt"), format!("{stem}_gt.txt"))
}

/// Generates every (perturbation, kind, index) item of `config` in parallel.
/// Items come back in a fixed order independent of scheduling.
pub fn generate_items(config: &DatasetConfig) -> Vec<Result<BenchmarkItem, DataGenError>> {
    let mut jobs = Vec::new();
    for &pert in &config.perturbations {
        for &kind in &config.kinds {
            for index in 0..config.per_kind {
                jobs.push((pert, kind, index));
            }
        }
    }
    jobs.par_iter()
        .map(|&(pert, kind, index)| {
            let global = (pert as u64) << 40 | (kind.index() as u64) << 32 | index as u64;
            let seed = mix_seed(config.seed, global);
            generate_item(kind, pert, index, seed, config.point_range)
        })
        .collect()
}

/// Writes the dataset below `out` and returns the manifest rows.
pub fn write_dataset(config: &DatasetConfig, out: &Path) -> Result<Vec<ManifestRow>, DataGenError> {
    let items = generate_items(config);
    let mut rows = Vec::with_capacity(items.len());
    for item in items {
        let item = item?;
        let (cloud_rel, gt_rel) = item_paths(item.perturbation, item.kind, item.index);
        let cloud_path = out.join(&cloud_rel);
        if let Some(dir) = cloud_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| DataGenError::io(dir, e))?;
        }
        write_cloud_txt(&cloud_path, &item.cloud)?;
        write_gt_txt(&out.join(&gt_rel), &GroundTruthVector::from_primitive(&item.ground_truth))?;
        rows.push(ManifestRow {
            file: cloud_rel,
            kind: item.kind.code(),
            perturbation: item.perturbation.label().to_string(),
            seed: item.seed,
        });
    }
    write_manifest(&out.join("manifest.csv"), &rows)?;
    Ok(rows)
}

/// Angle helper for tests and examples.
pub fn degrees(rad: f64) -> f64 {
    rad * 180.0 / PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_stay_in_ranges() {
        for seed in 0..10_000u64 {
            let Primitive::Sphere(s) = random_params(PrimitiveKind::Sphere, seed) else { panic!() };
            assert!((0.5..=3.0).contains(&s.radius()));
        }
        for seed in 0..2000u64 {
            let Primitive::Torus(t) = random_params(PrimitiveKind::Torus, seed) else { panic!() };
            assert!(t.minor_radius() < t.major_radius());
            let Primitive::Cone(c) = random_params(PrimitiveKind::Cone, seed) else { panic!() };
            let deg = degrees(c.half_aperture());
            assert!((10.0..=75.0).contains(&deg));
        }
        assert_eq!(random_params(PrimitiveKind::Cone, 5), random_params(PrimitiveKind::Cone, 5));
    }

    #[test]
    fn segments_lie_on_ground_truth_and_satisfy_cuts() {
        for kind in PrimitiveKind::ALL {
            for seed in 0..20 {
                let seg = generate_segment(kind, seed, 500).unwrap();
                assert!(seg.cloud.len() >= 100);
                assert!(!seg.cuts.is_empty());
                assert_eq!(seg.ground_truth().kind().unwrap(), kind);
                for p in seg.cloud.points() {
                    assert!(seg.primitive.distance(p) <= 1e-9, "{kind} off surface");
                    for cut in &seg.cuts {
                        // world-space cuts agree with the canonical predicate up to rounding
                        assert!(cut.normal.dot(&p.coords) >= cut.offset - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn segment_rejects_small_counts() {
        assert!(matches!(
            generate_segment(PrimitiveKind::Plane, 0, 50),
            Err(DataGenError::PointCount { .. })
        ));
    }

    #[test]
    fn segment_generation_is_deterministic() {
        let a = generate_segment(PrimitiveKind::Torus, 99, 800).unwrap();
        let b = generate_segment(PrimitiveKind::Torus, 99, 800).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.primitive, b.primitive);
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
    }
}
