//! Fitting measures and primitive-type recognition by lowest fitting error.

use rayon::prelude::*;
use thiserror::Error;

use crate::fitters::{estimate_normals, fit_kind, FitOutcome, NormalField, SphereOptions, DEFAULT_K_NEIGHBORS};
use crate::geometry::{
    bbox_diagonal, centroid, sample_surface, Cone, Cylinder, Plane, Point3, PointCloud, Primitive,
    PrimitiveKind, SampleExtent,
};
use crate::hough::{hough_fit, HoughConfig, DEFAULT_BINS, DEFAULT_HALFWIDTH};
use crate::knn::KdTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecognizeError {
    #[error("fitting error undefined: bounding-box diagonal is zero")]
    ZeroDiagonal,
    #[error("classification needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("every family failed: {}", format_failures(.0))]
    AllFamiliesFailed(Vec<(PrimitiveKind, String)>),
}

fn format_failures(f: &[(PrimitiveKind, String)]) -> String {
    f.iter().map(|(k, e)| format!("{k}: {e}")).collect::<Vec<_>>().join("; ")
}

/// Mean point-to-surface distance normalized by the bounding-box diagonal.
pub fn mfe(cloud: &PointCloud, prim: &Primitive) -> Result<f64, RecognizeError> {
    mfe_points(cloud.points(), prim)
}

pub fn mfe_points(points: &[Point3], prim: &Primitive) -> Result<f64, RecognizeError> {
    let l = bbox_diagonal(points);
    if !(l > 0.0) {
        return Err(RecognizeError::ZeroDiagonal);
    }
    let sum: f64 = points.iter().map(|p| prim.distance(p)).sum();
    Ok(sum / points.len() as f64 / l)
}

/// Largest distance from a cloud point to the surface.
pub fn directed_hausdorff(cloud: &PointCloud, prim: &Primitive) -> f64 {
    cloud.points().iter().map(|p| prim.distance(p)).fold(0.0, f64::max)
}

/// Dense sample of `prim` covering the region occupied by `points`.
///
/// Anchors of unbounded surfaces are moved next to the data, patches extend
/// `2 l` around it and cone samples are taken on the nappe holding the data.
pub fn surface_sample_near(prim: &Primitive, points: &[Point3], n: usize, seed: u64) -> Vec<Point3> {
    let c = centroid(points);
    let l = bbox_diagonal(points).max(f64::MIN_POSITIVE);
    let extent = SampleExtent { extent: 2.0 * l };
    match prim {
        Primitive::Plane(p) => {
            let foot = c - p.normal().as_vector() * (c - p.point()).dot(p.normal());
            let moved: Primitive = Plane::new(*p.normal().as_vector(), foot).expect("valid plane").into();
            sample_surface(&moved, n, extent, seed).into_points()
        }
        Primitive::Cylinder(cy) => {
            let a = cy.axis().as_vector();
            let foot = cy.axis_point() + a * (c - cy.axis_point()).dot(a);
            let moved: Primitive =
                Cylinder::new(cy.radius(), *a, foot).expect("valid cylinder").into();
            sample_surface(&moved, n, extent, seed).into_points()
        }
        Primitive::Cone(co) => {
            let v = *co.vertex();
            let a = co.axis().as_vector();
            let heights = points.iter().map(|p| (p - v).dot(a));
            let reach = heights.clone().map(f64::abs).fold(0.0, f64::max) + l;
            let mirrored = heights.sum::<f64>() < 0.0;
            let same: Primitive = Cone::new(co.half_aperture(), *a, v).expect("valid cone").into();
            let pts = sample_surface(&same, n, SampleExtent { extent: reach }, seed).into_points();
            if mirrored {
                // point reflection through the apex swaps the nappes
                pts.into_iter().map(|q| v - (q - v)).collect()
            } else {
                pts
            }
        }
        closed => sample_surface(closed, n, SampleExtent::default(), seed).into_points(),
    }
}

/// Nearest-sample distances from every cloud point.
fn sampled_distances(points: &[Point3], prim: &Primitive, samples: usize, seed: u64) -> Vec<f64> {
    let surface = surface_sample_near(prim, points, samples, seed);
    let tree = KdTree::new(&surface);
    points
        .par_iter()
        .map(|p| tree.nearest_one(p).map_or(f64::INFINITY, |n| n.dist_sq.sqrt()))
        .collect()
}

/// MFE against a finite surface sample instead of the analytic surface.
pub fn mfe_sampled(
    cloud: &PointCloud,
    prim: &Primitive,
    samples: usize,
    seed: u64,
) -> Result<f64, RecognizeError> {
    let l = cloud.bbox_diagonal();
    if !(l > 0.0) {
        return Err(RecognizeError::ZeroDiagonal);
    }
    let d = sampled_distances(cloud.points(), prim, samples, seed);
    Ok(d.iter().sum::<f64>() / d.len() as f64 / l)
}

pub fn directed_hausdorff_sampled(cloud: &PointCloud, prim: &Primitive, samples: usize, seed: u64) -> f64 {
    sampled_distances(cloud.points(), prim, samples, seed).into_iter().fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyConfig {
    pub use_hough: bool,
    pub k_neighbors: usize,
    pub bins: usize,
    pub halfwidth: f64,
    /// Seed of the robust sphere fitter.
    pub seed: u64,
    /// Relative MFE band within which the family with fewer parameters is
    /// preferred. Zero gives the plain argmin.
    pub parsimony: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            use_hough: false,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            bins: DEFAULT_BINS,
            halfwidth: DEFAULT_HALFWIDTH,
            seed: 0,
            parsimony: DEFAULT_PARSIMONY,
        }
    }
}

pub const MIN_CLASSIFY_POINTS: usize = 10;
pub const DEFAULT_PARSIMONY: f64 = 0.02;
/// Fitting errors closer than this are treated as equal.
pub const MFE_TIE: f64 = 1e-12;

/// Families from fewest to most shape parameters.
pub const BY_COMPLEXITY: [PrimitiveKind; 5] = [
    PrimitiveKind::Plane,
    PrimitiveKind::Sphere,
    PrimitiveKind::Cylinder,
    PrimitiveKind::Cone,
    PrimitiveKind::Torus,
];

/// Chooses among per-family MFEs: the simplest family whose MFE lies within
/// `(1 + parsimony) * min + MFE_TIE`. With `parsimony = 0` this is the argmin
/// with near-exact ties going to the simpler family.
pub fn select_family(mfe: &[Option<f64>; 5], parsimony: f64) -> Option<PrimitiveKind> {
    let min = mfe.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let bound = min * (1.0 + parsimony) + MFE_TIE;
    BY_COMPLEXITY.into_iter().find(|k| mfe[k.index()].is_some_and(|e| e <= bound))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifiedFit {
    pub kind: PrimitiveKind,
    pub params: Primitive,
    /// MFE per family in kind-code order; `None` where the fit failed.
    pub mfe: [Option<f64>; 5],
    pub fits: [Option<Primitive>; 5],
    pub failures: Vec<(PrimitiveKind, String)>,
}

impl ClassifiedFit {
    pub fn chosen_mfe(&self) -> f64 {
        self.mfe[self.kind.index()].expect("chosen family has an MFE")
    }
}

/// Fits one family with the configured method.
pub fn fit_family(
    points: &[Point3],
    kind: PrimitiveKind,
    normals: &NormalField,
    cfg: &ClassifyConfig,
) -> Result<FitOutcome, String> {
    if cfg.use_hough {
        let hc = HoughConfig { bins: cfg.bins, halfwidth: cfg.halfwidth, ..HoughConfig::default() };
        hough_fit(points, kind, normals, hc).map_err(|e| e.to_string())
    } else {
        let sphere = SphereOptions { robust: true, seed: cfg.seed };
        fit_kind(kind, points, normals, sphere).map_err(|e| e.to_string())
    }
}

/// Fits all five families and returns the one with the lowest MFE, up to the
/// parsimony band of [`select_family`].
pub fn classify(cloud: &PointCloud, cfg: &ClassifyConfig) -> Result<ClassifiedFit, RecognizeError> {
    let points = cloud.points();
    if points.len() < MIN_CLASSIFY_POINTS {
        return Err(RecognizeError::TooFewPoints { needed: MIN_CLASSIFY_POINTS, got: points.len() });
    }
    if !(cloud.bbox_diagonal() > 0.0) {
        return Err(RecognizeError::ZeroDiagonal);
    }
    let k = cfg.k_neighbors.clamp(3, points.len() - 1);
    let normals = estimate_normals(points, k);

    let results: Vec<Result<(Primitive, f64), String>> = PrimitiveKind::ALL
        .par_iter()
        .map(|&kind| {
            let normals = normals.as_ref().map_err(|e| e.to_string())?;
            let out = fit_family(points, kind, normals, cfg)?;
            let e = mfe_points(points, &out.params).map_err(|e| e.to_string())?;
            if e.is_finite() {
                Ok((out.params, e))
            } else {
                Err("non-finite fitting error".to_string())
            }
        })
        .collect();

    let mut mfe = [None; 5];
    let mut fits: [Option<Primitive>; 5] = Default::default();
    let mut failures = Vec::new();
    for (i, (kind, res)) in PrimitiveKind::ALL.iter().zip(results).enumerate() {
        match res {
            Ok((prim, e)) => {
                mfe[i] = Some(e);
                fits[i] = Some(prim);
            }
            Err(msg) => failures.push((*kind, msg)),
        }
    }
    let kind = select_family(&mfe, cfg.parsimony)
        .ok_or_else(|| RecognizeError::AllFamiliesFailed(failures.clone()))?;
    let i = kind.index();
    Ok(ClassifiedFit {
        kind,
        params: fits[i].clone().expect("present"),
        mfe,
        fits,
        failures,
    })
}
