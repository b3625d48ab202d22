//! Benchmark file formats: point clouds, ground-truth vectors and the
//! dataset manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataGenError;
use crate::geometry::{
    Cone, Cylinder, Plane, Point3, PointCloud, Primitive, PrimitiveKind, Sphere, Torus, Vector3,
};

/// `x y z` per line. Rust's shortest round-trip float formatting keeps the
/// text exact.
pub fn format_cloud(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn parse_cloud(id: &str, text: &str) -> Result<PointCloud, DataGenError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| DataGenError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 values, found {}", fields.len())));
        }
        let mut xyz = [0.0f64; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields) {
            *slot = field.parse().map_err(|_| parse_err(format!("invalid number {field:?}")))?;
            if !slot.is_finite() {
                return Err(parse_err(format!("non-finite value {field:?}")));
            }
        }
        points.push(Point3::from(xyz));
    }
    if points.is_empty() {
        return Err(DataGenError::EmptyFile);
    }
    Ok(PointCloud::new(id, points)?)
}

pub fn write_cloud_txt(path: &Path, cloud: &PointCloud) -> Result<(), DataGenError> {
    std::fs::write(path, format_cloud(cloud)).map_err(|e| DataGenError::io(path, e))
}

/// Reads a cloud; its id is the file stem.
pub fn read_cloud_txt(path: &Path) -> Result<PointCloud, DataGenError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataGenError::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_cloud(&id, &text)
}

/// Flat `[kind code, parameters...]` encoding of a primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthVector(Vec<f64>);

impl GroundTruthVector {
    pub fn expected_len(kind: PrimitiveKind) -> usize {
        match kind {
            PrimitiveKind::Plane => 7,
            PrimitiveKind::Cylinder => 8,
            PrimitiveKind::Sphere => 5,
            PrimitiveKind::Cone => 8,
            PrimitiveKind::Torus => 9,
        }
    }

    /// Checks the kind code and the length.
    pub fn new(values: Vec<f64>) -> Result<Self, DataGenError> {
        let kind = decode_kind(values.first().copied().unwrap_or(f64::NAN))?;
        let expected = Self::expected_len(kind);
        if values.len() != expected {
            return Err(DataGenError::VectorLength { kind, expected, got: values.len() });
        }
        Ok(GroundTruthVector(values))
    }

    pub fn from_primitive(prim: &Primitive) -> Self {
        let mut v = vec![prim.kind().code() as f64];
        let push3 = |v: &mut Vec<f64>, x: &Vector3| v.extend_from_slice(x.as_slice());
        match prim {
            Primitive::Plane(p) => {
                push3(&mut v, p.normal());
                push3(&mut v, &p.point().coords);
            }
            Primitive::Cylinder(c) => {
                v.push(c.radius());
                push3(&mut v, c.axis());
                push3(&mut v, &c.axis_point().coords);
            }
            Primitive::Sphere(s) => {
                v.push(s.radius());
                push3(&mut v, &s.center().coords);
            }
            Primitive::Cone(c) => {
                v.push(c.half_aperture());
                push3(&mut v, c.axis());
                push3(&mut v, &c.vertex().coords);
            }
            Primitive::Torus(t) => {
                v.push(t.major_radius());
                v.push(t.minor_radius());
                push3(&mut v, t.axis());
                push3(&mut v, &t.center().coords);
            }
        }
        GroundTruthVector(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn kind(&self) -> Result<PrimitiveKind, DataGenError> {
        decode_kind(self.0[0])
    }

    pub fn to_primitive(&self) -> Result<Primitive, DataGenError> {
        let v = &self.0;
        let vec3 = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
        let pt3 = |i: usize| Point3::from(vec3(i));
        let prim = match self.kind()? {
            PrimitiveKind::Plane => Plane::new(vec3(1), pt3(4))?.into(),
            PrimitiveKind::Cylinder => Cylinder::new(v[1], vec3(2), pt3(5))?.into(),
            PrimitiveKind::Sphere => Sphere::new(v[1], pt3(2))?.into(),
            PrimitiveKind::Cone => Cone::new(v[1], vec3(2), pt3(5))?.into(),
            PrimitiveKind::Torus => Torus::new(v[1], v[2], vec3(3), pt3(6))?.into(),
        };
        Ok(prim)
    }
}

fn decode_kind(code: f64) -> Result<PrimitiveKind, DataGenError> {
    if code.fract() != 0.0 || !(1.0..=5.0).contains(&code) {
        return Err(DataGenError::UnknownKind(code));
    }
    PrimitiveKind::from_code(code as u8).ok_or(DataGenError::UnknownKind(code))
}

pub fn format_ground_truth(gt: &GroundTruthVector) -> String {
    gt.values().iter().map(|x| format!("{x}\n")).collect()
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruthVector, DataGenError> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let x: f64 = t.parse().map_err(|_| DataGenError::Parse {
            line: i + 1,
            message: format!("invalid number {t:?}"),
        })?;
        values.push(x);
    }
    if values.is_empty() {
        return Err(DataGenError::EmptyFile);
    }
    GroundTruthVector::new(values)
}

pub fn write_gt_txt(path: &Path, gt: &GroundTruthVector) -> Result<(), DataGenError> {
    std::fs::write(path, format_ground_truth(gt)).map_err(|e| DataGenError::io(path, e))
}

pub fn read_gt_txt(path: &Path) -> Result<GroundTruthVector, DataGenError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataGenError::io(path, e))?;
    parse_ground_truth(&text)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// Cloud path relative to the dataset root.
    pub file: String,
    pub kind: u8,
    pub perturbation: String,
    pub seed: u64,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), DataGenError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["file", "kind", "perturbation", "seed"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| DataGenError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, DataGenError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
