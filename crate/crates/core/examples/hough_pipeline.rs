//! Voting-based recognition: plane Hough transform, pose standardization and
//! reduced-dimension voting, compared with the least-squares fitters.

use primfit::datagen::generate_segment;
use primfit::fitters::{estimate_normals, fit_kind, SphereOptions};
use primfit::geometry::PrimitiveKind;
use primfit::hough::{hough_fit, hough_plane, standardize_pose, HoughConfig};
use primfit::recognize::mfe_points;

fn main() {
    let plane = generate_segment(PrimitiveKind::Plane, 1, 2000).unwrap();
    let hp = hough_plane(plane.cloud.points(), [64; 3]).unwrap();
    println!(
        "plane: cell {:?} with {} votes, cell normal {:.3?}, refined on {} inliers",
        hp.cell, hp.votes, hp.cell_normal, hp.inliers
    );

    for kind in [PrimitiveKind::Cylinder, PrimitiveKind::Sphere, PrimitiveKind::Cone, PrimitiveKind::Torus] {
        let seg = generate_segment(kind, 2, 2000).unwrap();
        let pts = seg.cloud.points();
        let normals = estimate_normals(pts, 20).unwrap();
        let std = standardize_pose(pts, kind, &normals).unwrap();
        let hough = hough_fit(pts, kind, &normals, HoughConfig::default()).unwrap();
        let ls = fit_kind(kind, pts, &normals, SphereOptions::default()).unwrap();
        println!(
            "{kind}: initial estimate MFE {:.2e}, Hough {:.2e}, least squares {:.2e}",
            mfe_points(pts, &std.estimate.transformed(&std.transform.inverse())).unwrap(),
            mfe_points(pts, &hough.params).unwrap(),
            mfe_points(pts, &ls.params).unwrap()
        );
    }
}
