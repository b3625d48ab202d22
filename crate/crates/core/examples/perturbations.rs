//! Applies each artifact type to one cylinder segment and reports how the
//! cloud changes.

use primfit::datagen::{generate_item, PerturbationKind};
use primfit::geometry::PrimitiveKind;
use primfit::recognize::{directed_hausdorff, mfe};

fn main() {
    println!("{:<4} {:>6} {:>10} {:>10}  drawn", "type", "points", "MFE(gt)", "dHaus(gt)");
    for pert in PerturbationKind::ALL {
        let item = generate_item(PrimitiveKind::Cylinder, pert, 0, 7, (1500, 1500)).expect("item");
        let e = mfe(&item.cloud, &item.ground_truth).unwrap();
        let h = directed_hausdorff(&item.cloud, &item.ground_truth);
        let mut drawn = Vec::new();
        if let Some(r) = item.spec.removal {
            drawn.push(format!("{r:?}"));
        }
        if let Some(n) = item.spec.noise {
            drawn.push(format!("{:?} noise n={} on {:.0}%", n.model, n.n, 100.0 * n.fraction));
        }
        if let Some(d) = item.spec.deformation {
            drawn.push(format!("bump amplitude {:.3}", d.amplitude));
        }
        println!("{:<4} {:>6} {:>10.2e} {:>10.2e}  {}", pert.label(), item.cloud.len(), e, h, drawn.join("; "));
    }
}
