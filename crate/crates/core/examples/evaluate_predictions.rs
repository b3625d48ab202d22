//! Scores a handful of predictions and prints the report in both formats.

use primfit::datagen::{generate_item, GroundTruthVector, PerturbationKind};
use primfit::evalkit::{render_report, summarize, EvalRecord, ReportFormat};
use primfit::geometry::PrimitiveKind;
use primfit::recognize::{classify, directed_hausdorff, mfe, ClassifyConfig};

fn main() {
    let mut records = Vec::new();
    for pert in [PerturbationKind::A0, PerturbationKind::A2] {
        for kind in PrimitiveKind::ALL {
            for i in 0..4 {
                let item = generate_item(kind, pert, i, 7 * kind.code() as u64 + i as u64, (1000, 1500)).unwrap();
                let fit = classify(&item.cloud, &ClassifyConfig::default()).unwrap();
                records.push(EvalRecord {
                    perturbation: pert.label().to_string(),
                    truth: GroundTruthVector::from_primitive(&item.ground_truth),
                    predicted: GroundTruthVector::from_primitive(&fit.params),
                    mfe: mfe(&item.cloud, &fit.params).ok(),
                    hausdorff: Some(directed_hausdorff(&item.cloud, &fit.params)),
                });
            }
        }
    }
    let report = summarize("LS", &records).expect("records");
    println!("{}", render_report(std::slice::from_ref(&report), ReportFormat::Markdown));
    println!("{}", render_report(&[report], ReportFormat::Csv));
}
