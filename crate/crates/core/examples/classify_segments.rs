//! Recognizes the primitive type of clean and noisy segments and prints the
//! per-family fitting errors behind each decision.
//!
//!     cargo run --release --example classify_segments -- a2 hough

use primfit::datagen::{generate_item, PerturbationKind};
use primfit::geometry::PrimitiveKind;
use primfit::recognize::{classify, ClassifyConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pert: PerturbationKind = args.first().map(|s| s.parse().expect("perturbation label")).unwrap_or(PerturbationKind::A0);
    let cfg = ClassifyConfig { use_hough: args.iter().any(|a| a == "hough"), ..ClassifyConfig::default() };

    let mut correct = 0;
    for kind in PrimitiveKind::ALL {
        for i in 0..3 {
            let item = generate_item(kind, pert, i, 1000 * kind.code() as u64 + i as u64, (1000, 2000)).unwrap();
            let fit = classify(&item.cloud, &cfg).unwrap();
            correct += usize::from(fit.kind == kind);
            let errs: Vec<String> = fit
                .mfe
                .iter()
                .map(|e| e.map_or("   -    ".into(), |e| format!("{e:.2e}")))
                .collect();
            println!("{pert} {kind:<8} -> {:<8} [{}]", fit.kind.name(), errs.join(" "));
        }
    }
    println!("{correct} / 15 correct");
}
