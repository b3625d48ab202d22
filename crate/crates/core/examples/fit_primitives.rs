//! Fits every family to a clean segment of each kind and compares the
//! recovered parameters with the ground truth.

use primfit::datagen::{generate_segment, GroundTruthVector};
use primfit::fitters::{estimate_normals, fit_kind, SphereOptions};
use primfit::geometry::PrimitiveKind;
use primfit::recognize::mfe;

fn main() {
    for (i, kind) in PrimitiveKind::ALL.into_iter().enumerate() {
        let seg = generate_segment(kind, 100 + i as u64, 1500).expect("segment");
        let normals = estimate_normals(seg.cloud.points(), 20).expect("normals");
        let fit = fit_kind(kind, seg.cloud.points(), &normals, SphereOptions::default()).expect("fit");

        println!("{kind}: {} points, {} LM iterations", seg.cloud.len(), fit.iterations);
        println!("  truth  {:.4?}", GroundTruthVector::from_primitive(&seg.primitive).values());
        println!("  fitted {:.4?}", GroundTruthVector::from_primitive(&fit.params).values());
        println!("  MFE {:.2e}", mfe(&seg.cloud, &fit.params).unwrap());
    }
}
