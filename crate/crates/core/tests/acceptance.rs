//! Acceptance run: eight criteria, one PASS/FAIL line each. Exits non-zero
//! when any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::SVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use primfit::datagen::{
    format_cloud, format_ground_truth, generate_item, generate_items, generate_segment, mix_seed,
    parse_cloud, parse_ground_truth, random_params, BenchmarkItem, DatasetConfig, GroundTruthVector,
    PerturbationKind,
};
use primfit::evalkit::{class_metrics, confusion_matrix, summary_stats};
use primfit::fitters::{estimate_normals, fit_kind, fit_plane, SphereOptions};
use primfit::geometry::{Point3, Primitive, PrimitiveKind, Vector3};
use primfit::hough::{hough_fit, hough_plane, HoughConfig};
use primfit::lm::{AxisChart, ConeModel, CylinderModel, PlaneModel, ResidualModel, SphereModel, TorusModel};
use primfit::recognize::{classify, directed_hausdorff, mfe, mfe_points, ClassifyConfig};

const MASTER_SEED: u64 = 2024;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn angle_between_lines(a: &Vector3, b: &Vector3) -> f64 {
    a.normalize().dot(&b.normalize()).abs().min(1.0).acos()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---------------------------------------------------------------- 1

fn recovered(truth: &Primitive, fit: &Primitive, diag: f64) -> Result<(), String> {
    let deg = PI / 180.0;
    match (truth, fit) {
        (Primitive::Plane(t), Primitive::Plane(f)) => {
            let a = angle_between_lines(t.normal(), f.normal());
            (a <= 0.5 * deg).then_some(()).ok_or(format!("normal off by {:.3} deg", a / deg))
        }
        (Primitive::Sphere(t), Primitive::Sphere(f)) => {
            let e = rel(f.radius(), t.radius());
            (e <= 1e-6).then_some(()).ok_or(format!("radius rel error {e:.2e}"))
        }
        (Primitive::Cylinder(t), Primitive::Cylinder(f)) => {
            let e = rel(f.radius(), t.radius());
            let a = angle_between_lines(t.axis(), f.axis());
            (e <= 0.01 && a <= deg).then_some(()).ok_or(format!("radius {e:.2e}, axis {:.3} deg", a / deg))
        }
        (Primitive::Cone(t), Primitive::Cone(f)) => {
            let a = (t.half_aperture() - f.half_aperture()).abs();
            let v = (t.vertex() - f.vertex()).norm() / diag;
            (a <= deg && v <= 0.01).then_some(()).ok_or(format!("alpha {:.3} deg, vertex {v:.2e} l", a / deg))
        }
        (Primitive::Torus(t), Primitive::Torus(f)) => {
            let (e1, e2) = (rel(f.major_radius(), t.major_radius()), rel(f.minor_radius(), t.minor_radius()));
            (e1 <= 0.02 && e2 <= 0.02).then_some(()).ok_or(format!("radii {e1:.2e} / {e2:.2e}"))
        }
        _ => Err("wrong family".into()),
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let per_family = 100;
    let mut failures = Vec::new();
    for kind in PrimitiveKind::ALL {
        for i in 0..per_family {
            let seed = mix_seed(MASTER_SEED, 1 << 48 | (kind.index() as u64) << 32 | i);
            let count = 1000 + (seed % 1001) as usize;
            let seg = generate_segment(kind, seed, count).expect("segment");
            let pts = seg.cloud.points();
            let outcome = estimate_normals(pts, 20)
                .map_err(|e| e.to_string())
                .and_then(|n| fit_kind(kind, pts, &n, SphereOptions::default()).map_err(|e| e.to_string()))
                .and_then(|o| recovered(&seg.primitive, &o.params, seg.cloud.bbox_diagonal()));
            if let Err(e) = outcome {
                failures.push(format!("{kind} #{i}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed <= Duration::from_secs(120);
    let mut detail = format!("{} / {} recovered in {:.1?}", 5 * per_family as usize - failures.len(), 5 * per_family, elapsed);
    if !failures.is_empty() {
        detail += &format!("; first failures: {}", failures.iter().take(3).cloned().collect::<Vec<_>>().join(", "));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------- 2, 3, 4

struct Classified {
    item: BenchmarkItem,
    predicted: PrimitiveKind,
    mfe: f64,
    hausdorff: f64,
    diag: f64,
}

fn classify_set(pert: PerturbationKind, per_class: u64) -> (Vec<Classified>, Duration) {
    let start = Instant::now();
    let cfg = ClassifyConfig::default();
    let mut out = Vec::new();
    for kind in PrimitiveKind::ALL {
        for i in 0..per_class {
            // same seed for every perturbation: A2 adds noise to the A0 segment
            let seed = mix_seed(MASTER_SEED, (kind.index() as u64) << 32 | i);
            let item = generate_item(kind, pert, i as usize, seed, (1000, 2000)).expect("item");
            let fit = classify(&item.cloud, &cfg).expect("classify");
            let hausdorff = directed_hausdorff(&item.cloud, &fit.params);
            out.push(Classified {
                predicted: fit.kind,
                mfe: fit.chosen_mfe(),
                hausdorff,
                diag: item.cloud.bbox_diagonal(),
                item,
            });
        }
    }
    (out, start.elapsed())
}

fn macro_acc(set: &[Classified]) -> f64 {
    let pairs: Vec<(u8, u8)> = set.iter().map(|c| (c.item.kind.code(), c.predicted.code())).collect();
    let m = class_metrics(&confusion_matrix(&pairs).unwrap()).unwrap();
    m.macro_avg.acc.unwrap()
}

fn criterion_2(clean: &[Classified], elapsed: Duration) -> (Verdict, f64) {
    let acc = macro_acc(clean);
    let pass = acc >= 0.95 && elapsed <= Duration::from_secs(300);
    (verdict(pass, format!("macro ACC {acc:.4} (>= 0.95) in {elapsed:.1?}")), acc)
}

fn criterion_3(noisy: &[Classified], clean_acc: f64) -> Verdict {
    let acc = macro_acc(noisy);
    let pass = acc >= 0.85 && acc <= clean_acc;
    verdict(pass, format!("A2 macro ACC {acc:.4} (>= 0.85, <= A0 {clean_acc:.4})"))
}

fn criterion_4(clean: &[Classified], noisy: &[Classified]) -> Verdict {
    let mut bad_pairs = 0;
    for c in clean.iter().chain(noisy) {
        if c.hausdorff < c.mfe * c.diag {
            bad_pairs += 1;
        }
    }
    let gt_worst = clean
        .iter()
        .map(|c| mfe(&c.item.cloud, &c.item.ground_truth).unwrap())
        .fold(0.0, f64::max);
    let q2 = summary_stats(&clean.iter().map(|c| c.mfe).collect::<Vec<_>>()).unwrap().q2;
    let pass = bad_pairs == 0 && gt_worst <= 1e-9 && q2 <= 1e-2;
    verdict(
        pass,
        format!(
            "dHaus < MFE*l on {bad_pairs} of {} pairs; ground-truth MFE max {gt_worst:.2e}; clean MFE Q2 {q2:.2e}",
            clean.len() + noisy.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn oracle_rates(pairs: &[(u8, u8)], class: u8) -> [(u64, u64); 5] {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &(t, p) in pairs {
        match (t == class, p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    [(tp, tp + fp), (tn, tn + fn_), (tp, tp + fn_), (tn, tn + fp), (tp + tn, pairs.len() as u64)]
}

/// Quartile from the 1-based order-statistic definition
/// `Q(p) = (1 - g) x_j + g x_{j+1}` with `j = floor(n p + 1 - p)`.
fn oracle_quantile(values: &[f64], p: f64) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let m = 1.0 - p;
    let j = (n * p + m).floor();
    let g = n * p + m - j;
    let j = j as usize;
    let next = if j < x.len() { x[j] } else { x[j - 1] };
    (1.0 - g) * x[j - 1] + g * next
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=500);
        let pairs: Vec<(u8, u8)> = (0..n).map(|_| (rng.random_range(1..=5), rng.random_range(1..=5))).collect();
        let m = class_metrics(&confusion_matrix(&pairs).unwrap()).unwrap();
        let mut defined: [Vec<f64>; 5] = Default::default();
        for code in 1..=5u8 {
            let got = m.per_class[code as usize - 1].as_array();
            for (r, &(num, den)) in oracle_rates(&pairs, code).iter().enumerate() {
                let want = (den > 0).then(|| num as f64 / den as f64);
                if got[r] != want {
                    mismatches += 1;
                }
                defined[r].extend(want);
            }
        }
        for (r, vals) in defined.iter().enumerate() {
            let want = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            if m.macro_avg.as_array()[r] != want {
                mismatches += 1;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=300);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let s = summary_stats(&v).unwrap();
        for (p, got) in [(0.25, s.q1), (0.5, s.q2), (0.75, s.q3)] {
            worst = worst.max((oracle_quantile(&v, p) - got).abs());
        }
    }
    let pass = mismatches == 0 && worst <= 1e-12;
    verdict(pass, format!("{mismatches} metric mismatches over 1000 label sets; max quartile deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 6

fn jacobian_error<const N: usize, M: ResidualModel<N>>(model: &M, x: &SVector<f64, N>, p: &Point3) -> f64 {
    let (_, g) = model.residual_and_gradient(x, p);
    let h = 1e-6;
    let mut fd = SVector::<f64, N>::zeros();
    for i in 0..N {
        let (mut a, mut b) = (*x, *x);
        a[i] += h;
        b[i] -= h;
        fd[i] = (model.residual(&a, p) - model.residual(&b, p)) / (2.0 * h);
    }
    (g - fd).amax() / g.amax().max(1e-12)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3 {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point3 {
    Point3::from(random_unit(rng) * rng.random_range(0.1..1.0) * scale)
}

fn angles(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (t, f) = AxisChart::start_angles();
    (t + rng.random_range(-0.5..0.5), f + rng.random_range(-0.5..0.5))
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED + 6);
    let mut worst = [0.0f64; 5];
    for _ in 0..50 {
        let chart = AxisChart::around(&random_unit(&mut rng));
        let (t, f) = angles(&mut rng);
        let p = random_point(&mut rng, 3.0);

        let plane = PlaneModel { chart };
        let x = SVector::from([t, f, rng.random_range(-2.0..2.0)]);
        worst[0] = worst[0].max(jacobian_error(&plane, &x, &p));

        let x = SVector::from([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0, rng.random_range(0.5..3.0)]);
        worst[2] = worst[2].max(jacobian_error(&SphereModel, &x, &p));

        let cyl = CylinderModel { chart, anchor: random_point(&mut rng, 1.0) };
        let x = SVector::from([t, f, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.5..3.0)]);
        worst[1] = worst[1].max(jacobian_error(&cyl, &x, &p));

        // cone: keep the point off the apex-plane kink h cos(a) + rho sin(a) = 0
        let cone = ConeModel { chart };
        let x = loop {
            let v = random_point(&mut rng, 1.0);
            let x = SVector::from([t, f, v.x, v.y, v.z, rng.random_range(0.2..1.3)]);
            let axis = chart.jet(t, f).axis;
            let d = p - v;
            let h = d.dot(&axis);
            let rho = (d - axis * h).norm();
            if (h * x[5].cos() + rho * x[5].sin()).abs() > 1e-2 && rho > 1e-2 {
                break x;
            }
        };
        worst[3] = worst[3].max(jacobian_error(&cone, &x, &p));

        let torus = TorusModel { chart };
        let major = rng.random_range(1.0..3.0);
        let c = random_point(&mut rng, 1.0);
        let x = SVector::from([t, f, c.x, c.y, c.z, major, major * rng.random_range(0.1..0.9)]);
        worst[4] = worst[4].max(jacobian_error(&torus, &x, &p));
    }
    let pass = worst.iter().all(|&e| e <= 1e-4);
    let parts: Vec<String> = PrimitiveKind::ALL.iter().zip(worst).map(|(k, e)| format!("{k} {e:.1e}")).collect();
    verdict(pass, format!("max relative deviation over 50 configurations: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Verdict {
    let config = DatasetConfig {
        seed: MASTER_SEED,
        per_kind: 2,
        perturbations: PerturbationKind::ALL.to_vec(),
        ..DatasetConfig::default()
    };
    let mut differing = 0;
    let items = generate_items(&config);
    for item in &items {
        let item = item.as_ref().expect("item");
        let text = format_cloud(&item.cloud);
        if format_cloud(&parse_cloud("x", &text).unwrap()) != text {
            differing += 1;
        }
        let gt = format_ground_truth(&GroundTruthVector::from_primitive(&item.ground_truth));
        if format_ground_truth(&parse_ground_truth(&gt).unwrap()) != gt {
            differing += 1;
        }
    }
    let mut layout_errors = Vec::new();
    for (kind, len) in PrimitiveKind::ALL.iter().zip([7, 8, 5, 8, 9]) {
        let gt = GroundTruthVector::from_primitive(&random_params(*kind, 1));
        if gt.values().len() != len {
            layout_errors.push(format!("{kind} writes {} entries", gt.values().len()));
        }
        let mut v = gt.values().to_vec();
        for wrong in [len - 1, len + 1] {
            v.resize(wrong, 0.5);
            if GroundTruthVector::new(v.clone()).is_ok() {
                layout_errors.push(format!("{kind} accepted {wrong} entries"));
            }
        }
    }
    let pass = differing == 0 && layout_errors.is_empty();
    verdict(
        pass,
        format!("{differing} non-identical rewrites over {} items; layout errors: {}", items.len(), layout_errors.len()),
    )
}

// ---------------------------------------------------------------- 8

/// `(theta, phi, rho)` of a plane in the voting convention (normal with
/// non-negative z).
fn plane_coords(normal: &Vector3, offset: f64) -> (f64, f64, f64) {
    let (n, rho) = if normal.z < 0.0 { (-normal, -offset) } else { (*normal, offset) };
    (n.z.clamp(-1.0, 1.0).acos(), n.y.atan2(n.x).rem_euclid(2.0 * PI), rho)
}

fn criterion_8() -> Verdict {
    let mut plane_misses = Vec::new();
    let mut raw_cell_misses = 0;
    for i in 0..50u64 {
        let seg = generate_segment(PrimitiveKind::Plane, mix_seed(MASTER_SEED, 8 << 40 | i), 1500).unwrap();
        let pts = seg.cloud.points();
        let hp = hough_plane(pts, [64; 3]).unwrap();
        let Primitive::Plane(ls) = fit_plane(pts).unwrap().params else { unreachable!() };
        let off = |(t0, f0, r0): (f64, f64, f64), (t1, f1, r1): (f64, f64, f64)| {
            let df = (f0 - f1).abs().min(2.0 * PI - (f0 - f1).abs());
            [(t0 - t1).abs(), df, (r0 - r1).abs()]
        };
        let reference = plane_coords(ls.normal(), ls.offset());
        let d = off(plane_coords(hp.plane.normal(), hp.plane.offset()), reference);
        if d.iter().zip(hp.widths).any(|(x, w)| *x > w) {
            plane_misses.push(format!("#{i}: d(theta,phi,rho) = {d:.3?}"));
        }
        // the raw winning cell, before the inlier refinement
        let raw = off(plane_coords(&hp.cell_normal, hp.cell_rho), reference);
        if raw.iter().zip(hp.widths).any(|(x, w)| *x > w) {
            raw_cell_misses += 1;
        }
    }

    let mut ratio_fails = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for kind in [PrimitiveKind::Cylinder, PrimitiveKind::Sphere, PrimitiveKind::Cone, PrimitiveKind::Torus] {
        for i in 0..25u64 {
            let seg = generate_segment(kind, mix_seed(MASTER_SEED, 9 << 40 | (kind.index() as u64) << 32 | i), 1500).unwrap();
            let pts = seg.cloud.points();
            let normals = estimate_normals(pts, 20).unwrap();
            let ls = fit_kind(kind, pts, &normals, SphereOptions::default()).map(|o| mfe_points(pts, &o.params).unwrap());
            let hough = hough_fit(pts, kind, &normals, HoughConfig::default()).map(|o| mfe_points(pts, &o.params).unwrap());
            match (ls, hough) {
                (Ok(l), Ok(h)) => {
                    worst_ratio = worst_ratio.max(h / l.max(1e-300));
                    if h > 2.0 * l + 1e-12 {
                        ratio_fails.push(format!("{kind} #{i}: {h:.2e} vs {l:.2e}"));
                    }
                }
                (l, h) => ratio_fails.push(format!("{kind} #{i}: ls {:?} hough {:?}", l.err(), h.err())),
            }
        }
    }
    let pass = plane_misses.is_empty() && ratio_fails.is_empty();
    let mut detail = format!(
        "returned plane off by more than a bin on {} of 50 (raw cell center: {raw_cell_misses}); Hough MFE > 2 x LS + 1e-12 on {} of 100, worst ratio {worst_ratio:.2}",
        plane_misses.len(),
        ratio_fails.len()
    );
    for f in plane_misses.iter().chain(&ratio_fails).take(3) {
        detail += &format!("; {f}");
    }
    verdict(pass, detail)
}

fn main() {
    let mut all_pass = true;
    let mut report = |id: usize, name: &str, v: Verdict| {
        all_pass &= v.pass;
        println!("criterion {id} ({name}): {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };

    report(1, "clean recovery", criterion_1());
    let (clean, clean_time) = classify_set(PerturbationKind::A0, 20);
    let (noisy, _) = classify_set(PerturbationKind::A2, 20);
    let (v2, clean_acc) = criterion_2(&clean, clean_time);
    report(2, "clean classification", v2);
    report(3, "noise robustness", criterion_3(&noisy, clean_acc));
    report(4, "fitting-measure sanity", criterion_4(&clean, &noisy));
    report(5, "metric oracles", criterion_5());
    report(6, "Jacobians", criterion_6());
    report(7, "format fidelity", criterion_7());
    report(8, "Hough agreement", criterion_8());

    if !all_pass {
        std::process::exit(1);
    }
}
