//! Classification metrics, parameter-space distances, error statistics and
//! report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::datagen::GroundTruthVector;
use crate::geometry::PrimitiveKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("kind code {0} is outside 1..=5")]
    CodeOutOfRange(u8),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("cannot compare a {gt} vector with a {pred} vector")]
    KindMismatch { gt: PrimitiveKind, pred: PrimitiveKind },
    #[error("vector: {0}")]
    BadVector(String),
    #[error("statistics of an empty list")]
    EmptyValues,
    #[error("non-finite value in statistics input")]
    NonFinite,
    #[error("report line {line}: {message}")]
    ReportParse { line: usize, message: String },
}

/// Row = true class, column = predicted class, both in kind-code order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 5]; 5],
}

/// One-vs-rest counts for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneVsRest {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn kind_of(code: u8) -> Result<PrimitiveKind, EvalError> {
    PrimitiveKind::from_code(code).ok_or(EvalError::CodeOutOfRange(code))
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 5]; 5]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, truth: PrimitiveKind, predicted: PrimitiveKind) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: PrimitiveKind, predicted: PrimitiveKind) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[u64; 5]; 5] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..5).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, truth: PrimitiveKind) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    /// Fraction of correct pairs; `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.trace() as f64 / n as f64)
    }

    pub fn one_vs_rest(&self, class: PrimitiveKind) -> OneVsRest {
        let i = class.index();
        let tp = self.counts[i][i];
        let fp: u64 = (0..5).filter(|&j| j != i).map(|j| self.counts[j][i]).sum();
        let fn_: u64 = (0..5).filter(|&j| j != i).map(|j| self.counts[i][j]).sum();
        OneVsRest { tp, fp, fn_, tn: self.total() - tp - fp - fn_ }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }
}

/// Builds the matrix from `(true code, predicted code)` pairs.
pub fn confusion_matrix(pairs: &[(u8, u8)]) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::default();
    for &(t, p) in pairs {
        cm.add(kind_of(t)?, kind_of(p)?);
    }
    Ok(cm)
}

/// The five one-vs-rest rates; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Rates {
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub acc: Option<f64>,
}

impl Rates {
    pub const NAMES: [&'static str; 5] = ["PPV", "NPV", "TPR", "TNR", "ACC"];

    pub fn as_array(&self) -> [Option<f64>; 5] {
        [self.ppv, self.npv, self.tpr, self.tnr, self.acc]
    }

    fn from_array(a: [Option<f64>; 5]) -> Self {
        Rates { ppv: a[0], npv: a[1], tpr: a[2], tnr: a[3], acc: a[4] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    /// Indexed by kind code minus one.
    pub per_class: [Rates; 5],
    /// Mean over the classes where the rate is defined.
    pub macro_avg: Rates,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics, EvalError> {
    let n = cm.total();
    if n == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class = PrimitiveKind::ALL.map(|k| {
        let OneVsRest { tp, fp, fn_, tn } = cm.one_vs_rest(k);
        Rates {
            ppv: ratio(tp, tp + fp),
            npv: ratio(tn, tn + fn_),
            tpr: ratio(tp, tp + fn_),
            tnr: ratio(tn, tn + fp),
            acc: ratio(tp + tn, n),
        }
    });
    let mut avg = [None; 5];
    for (m, slot) in avg.iter_mut().enumerate() {
        let defined: Vec<f64> = per_class.iter().filter_map(|r| r.as_array()[m]).collect();
        if !defined.is_empty() {
            *slot = Some(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    Ok(ClassMetrics { per_class, macro_avg: Rates::from_array(avg) })
}

/// Positions of the axis inside a full ground-truth vector.
fn axis_range(kind: PrimitiveKind) -> std::ops::Range<usize> {
    match kind {
        PrimitiveKind::Plane => 1..4,
        PrimitiveKind::Cylinder | PrimitiveKind::Cone => 2..5,
        PrimitiveKind::Sphere => 0..0,
        PrimitiveKind::Torus => 3..6,
    }
}

/// Drops the kind code (and the anchor point of planes and cylinders, which
/// is not unique) and flips the axis to canonical sign.
pub fn reduced_vector(v: &GroundTruthVector) -> Result<Vec<f64>, EvalError> {
    let kind = v.kind().map_err(|e| EvalError::BadVector(e.to_string()))?;
    let mut out = v.values().to_vec();
    let axis = axis_range(kind);
    if let Some(&first) = out[axis.clone()].iter().find(|x| **x != 0.0) {
        if first < 0.0 {
            out[axis].iter_mut().for_each(|x| *x = -*x);
        }
    }
    let end = match kind {
        PrimitiveKind::Plane | PrimitiveKind::Cylinder => out.len() - 3,
        _ => out.len(),
    };
    Ok(out[1..end].to_vec())
}

/// Euclidean distance between reduced vectors of the same kind.
pub fn l2_param_distance(gt: &GroundTruthVector, pred: &GroundTruthVector) -> Result<f64, EvalError> {
    let bad = |e: crate::datagen::DataGenError| EvalError::BadVector(e.to_string());
    let (gk, pk) = (gt.kind().map_err(bad)?, pred.kind().map_err(bad)?);
    if gk != pk {
        return Err(EvalError::KindMismatch { gt: gk, pred: pk });
    }
    let (a, b) = (reduced_vector(gt)?, reduced_vector(pred)?);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorStats {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Linear interpolation between order statistics at `h = (n - 1) p`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary_stats(values: &[f64]) -> Result<ErrorStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyValues);
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    // shifted sum: exact for constant input
    let shift = sorted[sorted.len() / 2];
    let mean = shift + values.iter().map(|x| x - shift).sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(ErrorStats {
        q1: quantile_sorted(&sorted, 0.25),
        q2: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        mean,
        std: var.sqrt(),
    })
}

/// One evaluated cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub perturbation: String,
    pub truth: GroundTruthVector,
    pub predicted: GroundTruthVector,
    /// Fitting error of the predicted primitive; `None` if it could not be
    /// evaluated.
    pub mfe: Option<f64>,
    pub hausdorff: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Measure {
    L2,
    Mfe,
    Hausdorff,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::L2, Measure::Mfe, Measure::Hausdorff];

    pub fn label(self) -> &'static str {
        match self {
            Measure::L2 => "L2",
            Measure::Mfe => "MFE",
            Measure::Hausdorff => "dHaus",
        }
    }
}

/// Metrics of one classification table.
#[derive(Clone, Debug, PartialEq)]
pub struct ScopeMetrics {
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics,
}

impl ScopeMetrics {
    fn new(confusion: ConfusionMatrix) -> Option<Self> {
        class_metrics(&confusion).ok().map(|metrics| ScopeMetrics { confusion, metrics })
    }
}

/// Everything reported for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub whole: ScopeMetrics,
    /// Per perturbation label, sorted by label.
    pub per_perturbation: Vec<(String, ScopeMetrics)>,
    pub errors: Vec<(Measure, ErrorStats)>,
    /// Pairs left out of the L2 statistics because the kinds differ.
    pub l2_excluded: usize,
}

/// Aggregates evaluated clouds into one report; `None` for no records.
pub fn summarize(method: &str, records: &[EvalRecord]) -> Option<MethodReport> {
    let mut whole = ConfusionMatrix::default();
    let mut by_pert: BTreeMap<&str, ConfusionMatrix> = BTreeMap::new();
    let mut samples: BTreeMap<Measure, Vec<f64>> = BTreeMap::new();
    let mut l2_excluded = 0;
    for r in records {
        let (Ok(t), Ok(p)) = (r.truth.kind(), r.predicted.kind()) else { continue };
        whole.add(t, p);
        by_pert.entry(&r.perturbation).or_default().add(t, p);
        match l2_param_distance(&r.truth, &r.predicted) {
            Ok(d) => samples.entry(Measure::L2).or_default().push(d),
            Err(_) => l2_excluded += 1,
        }
        if let Some(e) = r.mfe {
            samples.entry(Measure::Mfe).or_default().push(e);
        }
        if let Some(h) = r.hausdorff {
            samples.entry(Measure::Hausdorff).or_default().push(h);
        }
    }
    let whole = ScopeMetrics::new(whole)?;
    let per_perturbation = by_pert
        .into_iter()
        .filter_map(|(label, cm)| ScopeMetrics::new(cm).map(|m| (label.to_string(), m)))
        .collect();
    let errors = samples
        .into_iter()
        .filter_map(|(m, v)| summary_stats(&v).ok().map(|s| (m, s)))
        .collect();
    Some(MethodReport { method: method.to_string(), whole, per_perturbation, errors, l2_excluded })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

const CLASS_LABELS: [&str; 6] = ["T1", "T2", "T3", "T4", "T5", "Avg"];
pub const CLASSIFICATION_HEADER: &str = "class,PPV,NPV,TPR,TNR,ACC";
pub const STATS_HEADER: &str = "measure,Q1,Q2,Q3,mean,std";

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn md_cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn rows_of(m: &ClassMetrics) -> impl Iterator<Item = (&'static str, [Option<f64>; 5])> + '_ {
    CLASS_LABELS
        .into_iter()
        .zip(m.per_class.iter().chain(std::iter::once(&m.macro_avg)))
        .map(|(label, r)| (label, r.as_array()))
}

fn stats_array(s: &ErrorStats) -> [f64; 5] {
    [s.q1, s.q2, s.q3, s.mean, s.std]
}

/// Renders whole-set and per-perturbation classification tables plus the
/// fitting-error statistics of every method.
pub fn render_report(reports: &[MethodReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Markdown => render_markdown(reports),
    }
}

fn render_csv(reports: &[MethodReport]) -> String {
    let mut out = String::new();
    let class_block = |out: &mut String, method: &str, scope: &str, m: &ClassMetrics| {
        let _ = writeln!(out, "# classification method={method} scope={scope}");
        let _ = writeln!(out, "{CLASSIFICATION_HEADER}");
        for (label, vals) in rows_of(m) {
            let cells: Vec<String> = vals.iter().map(|v| cell(*v)).collect();
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        out.push('\n');
    };
    for r in reports {
        class_block(&mut out, &r.method, "all", &r.whole.metrics);
        for (label, s) in &r.per_perturbation {
            class_block(&mut out, &r.method, label, &s.metrics);
        }
        let _ = writeln!(out, "# fitting-errors method={}", r.method);
        let _ = writeln!(out, "{STATS_HEADER}");
        for (m, s) in &r.errors {
            let cells: Vec<String> = stats_array(s).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{}", m.label(), cells.join(","));
        }
        out.push('\n');
    }
    out
}

fn render_markdown(reports: &[MethodReport]) -> String {
    let mut out = String::from("# Evaluation report\n\n");
    let header = format!("| Metric | Method | {} |\n", CLASS_LABELS.join(" | "));
    let rule = format!("|{}\n", "---|".repeat(2 + CLASS_LABELS.len()));

    let mut scopes: Vec<&str> = vec!["all"];
    for r in reports {
        for (label, _) in &r.per_perturbation {
            if !scopes.contains(&label.as_str()) {
                scopes.push(label);
            }
        }
    }
    for scope in scopes {
        let title = if scope == "all" { "Whole test set".to_string() } else { format!("Perturbation {scope}") };
        let _ = writeln!(out, "## {title}\n");
        out.push_str(&header);
        out.push_str(&rule);
        let lookup = |r: &MethodReport| -> Option<ScopeMetrics> {
            if scope == "all" {
                Some(r.whole.clone())
            } else {
                r.per_perturbation.iter().find(|(l, _)| l == scope).map(|(_, s)| s.clone())
            }
        };
        for (mi, name) in Rates::NAMES.iter().enumerate() {
            for r in reports {
                let Some(s) = lookup(r) else { continue };
                let cells: Vec<String> = rows_of(&s.metrics).map(|(_, v)| md_cell(v[mi])).collect();
                let _ = writeln!(out, "| {name} | {} | {} |", r.method, cells.join(" | "));
            }
        }
        out.push('\n');
        for r in reports {
            if let Some(s) = lookup(r) {
                let _ = writeln!(
                    out,
                    "{}: overall accuracy {} over {} clouds\n",
                    r.method,
                    md_cell(s.confusion.accuracy()),
                    s.confusion.total()
                );
            }
        }
    }

    out.push_str("## Fitting errors\n\n| Method | Measure | Q1 | Q2 | Q3 | Mean | Std |\n|---|---|---|---|---|---|---|\n");
    for r in reports {
        for (m, s) in &r.errors {
            let cells: Vec<String> = stats_array(s).iter().map(|v| format!("{v:.3e}")).collect();
            let _ = writeln!(out, "| {} | {} | {} |", r.method, m.label(), cells.join(" | "));
        }
    }
    for r in reports.iter().filter(|r| r.l2_excluded > 0) {
        let _ = writeln!(out, "\n{}: {} misclassified clouds left out of L2", r.method, r.l2_excluded);
    }
    out
}

/// One `#`-titled block of a CSV report.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub title: String,
    pub header: String,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

/// Reads back a report written in [`ReportFormat::Csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<CsvTable>, EvalError> {
    let mut tables: Vec<CsvTable> = Vec::new();
    let mut expect_header = false;
    for (i, line) in text.lines().enumerate() {
        let err = |message: &str| EvalError::ReportParse { line: i + 1, message: message.into() };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(title) = line.strip_prefix("# ") {
            tables.push(CsvTable { title: title.to_string(), header: String::new(), rows: vec![] });
            expect_header = true;
            continue;
        }
        let table = tables.last_mut().ok_or_else(|| err("row before any title"))?;
        if expect_header {
            if line != CLASSIFICATION_HEADER && line != STATS_HEADER {
                return Err(err("unknown header"));
            }
            table.header = line.to_string();
            expect_header = false;
            continue;
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| if f.is_empty() { Ok(None) } else { f.parse().map(Some) })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err("invalid number"))?;
        if values.len() != 5 {
            return Err(err("expected 5 values"));
        }
        table.rows.push((label, values));
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Cylinder, Plane, Point3, Primitive, Sphere, Vector3};

    fn gt(p: Primitive) -> GroundTruthVector {
        GroundTruthVector::from_primitive(&p)
    }

    #[test]
    fn diagonal_matrix() {
        let pairs: Vec<(u8, u8)> = (1..=5).flat_map(|k| std::iter::repeat((k, k)).take(20)).collect();
        let cm = confusion_matrix(&pairs).unwrap();
        for k in PrimitiveKind::ALL {
            assert_eq!(cm.get(k, k), 20);
            assert_eq!(cm.row_sum(k), 20);
        }
        let m = class_metrics(&cm).unwrap();
        assert!(m.per_class.iter().chain([&m.macro_avg]).all(|r| r.as_array() == [Some(1.0); 5]));
    }

    #[test]
    fn small_matrices() {
        assert_eq!(confusion_matrix(&[]).unwrap().total(), 0);
        let cm = confusion_matrix(&[(1, 2), (1, 2), (2, 1)]).unwrap();
        assert_eq!(cm.get(PrimitiveKind::Plane, PrimitiveKind::Cylinder), 2);
        assert_eq!(cm.get(PrimitiveKind::Cylinder, PrimitiveKind::Plane), 1);
        assert_eq!(confusion_matrix(&[(0, 1)]), Err(EvalError::CodeOutOfRange(0)));
        assert_eq!(confusion_matrix(&[(1, 6)]), Err(EvalError::CodeOutOfRange(6)));
        assert_eq!(class_metrics(&ConfusionMatrix::default()), Err(EvalError::EmptyMatrix));
    }

    #[test]
    fn absent_class_is_left_out_of_macro() {
        // no torus in truth or prediction: its PPV and TPR are undefined
        let cm = confusion_matrix(&[(1, 1), (2, 2), (3, 3), (4, 1)]).unwrap();
        let m = class_metrics(&cm).unwrap();
        let torus = m.per_class[4];
        assert_eq!((torus.ppv, torus.tpr), (None, None));
        assert_eq!(torus.acc, Some(1.0));
        // PPV defined for plane (1/2), cylinder (1), sphere (1)
        assert_eq!(m.macro_avg.ppv, Some((0.5 + 1.0 + 1.0) / 3.0));
    }

    #[test]
    fn published_macro_accuracy_is_the_row_mean() {
        // direct-method ACC rows, whole set and clean segments
        let whole = [0.9773, 0.9535, 0.9730, 0.9643, 0.9697];
        let clean = [1.0, 0.99, 0.99, 0.98, 0.98];
        let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
        assert!((mean(&whole) - 0.9676).abs() < 5e-5);
        assert!((mean(&clean) - 0.9880).abs() < 5e-5);
    }

    #[test]
    fn l2_examples() {
        let s = |r, x| gt(Sphere::new(r, Point3::new(x, 0.0, 0.0)).unwrap().into());
        assert_eq!(l2_param_distance(&s(1.0, 0.0), &s(1.0, 0.0)), Ok(0.0));
        let d = l2_param_distance(&s(1.0, 0.0), &s(1.1, 0.1)).unwrap();
        assert!((d - 0.02f64.sqrt()).abs() < 1e-12);

        let p = |x| gt(Plane::new(Vector3::z(), Point3::new(x, 2.0, 3.0)).unwrap().into());
        assert_eq!(l2_param_distance(&p(0.0), &p(7.0)), Ok(0.0));

        let c = gt(Cylinder::new(1.0, Vector3::z(), Point3::origin()).unwrap().into());
        assert!(matches!(l2_param_distance(&c, &p(0.0)), Err(EvalError::KindMismatch { .. })));
    }

    #[test]
    fn l2_canonicalizes_axes() {
        let a = GroundTruthVector::new(vec![2.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = GroundTruthVector::new(vec![2.0, 1.0, 0.0, 0.0, -1.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(l2_param_distance(&a, &b), Ok(0.0));
    }

    #[test]
    fn stats_examples() {
        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.q2, s.q3, s.mean), (1.75, 2.5, 3.25, 2.5));
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        let c = summary_stats(&[0.7; 9]).unwrap();
        assert_eq!((c.q1, c.q2, c.q3, c.mean, c.std), (0.7, 0.7, 0.7, 0.7, 0.0));
        assert_eq!(summary_stats(&[]), Err(EvalError::EmptyValues));
        assert_eq!(summary_stats(&[1.0, f64::NAN]), Err(EvalError::NonFinite));
    }

    #[test]
    fn uniform_median() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let s = summary_stats(&v).unwrap();
        assert!((s.q2 - 0.5).abs() < 0.02);
    }

    fn record(pert: &str, t: u8, p: u8) -> EvalRecord {
        let v = |k: u8| match k {
            3 => gt(Sphere::new(1.0, Point3::origin()).unwrap().into()),
            _ => gt(Plane::new(Vector3::z(), Point3::origin()).unwrap().into()),
        };
        EvalRecord { perturbation: pert.into(), truth: v(t), predicted: v(p), mfe: Some(0.01), hausdorff: Some(0.1) }
    }

    #[test]
    fn clean_single_method_report() {
        let recs: Vec<EvalRecord> = (0..4).map(|i| record("A0", if i % 2 == 0 { 1 } else { 3 }, 1)).collect();
        let rep = summarize("M", &recs).unwrap();
        assert_eq!(rep.per_perturbation.len(), 1);
        assert_eq!(rep.l2_excluded, 2);
        assert_eq!(rep.whole.confusion.accuracy(), Some(0.5));

        let csv = render_report(std::slice::from_ref(&rep), ReportFormat::Csv);
        let tables = parse_report_csv(&csv).unwrap();
        let class_tables = tables.iter().filter(|t| t.header == CLASSIFICATION_HEADER).count();
        let stats_tables = tables.iter().filter(|t| t.header == STATS_HEADER).count();
        assert_eq!((class_tables, stats_tables), (2, 1));

        let md = render_report(&[rep], ReportFormat::Markdown);
        assert!(md.contains("| Metric | Method | T1 | T2 | T3 | T4 | T5 | Avg |"));
    }

    #[test]
    fn csv_reads_back_exactly() {
        let recs: Vec<EvalRecord> =
            [("A0", 1, 1), ("A0", 3, 3), ("A2", 3, 1), ("A2", 1, 1)].iter().map(|&(a, t, p)| record(a, t, p)).collect();
        let rep = summarize("M1", &recs).unwrap();
        let tables = parse_report_csv(&render_report(std::slice::from_ref(&rep), ReportFormat::Csv)).unwrap();
        assert_eq!(tables[0].title, "classification method=M1 scope=all");
        for ((label, vals), (want_label, want)) in tables[0].rows.iter().zip(rows_of(&rep.whole.metrics)) {
            assert_eq!(label, want_label);
            assert_eq!(vals.as_slice(), want.as_slice());
        }
        let stats = tables.last().unwrap();
        let (m, s) = &rep.errors[0];
        assert_eq!(stats.rows[0].0, m.label());
        assert_eq!(stats.rows[0].1, stats_array(s).map(Some).to_vec());
    }

    #[test]
    fn bad_csv_is_rejected() {
        assert!(parse_report_csv("T1,1,1,1,1,1\n").is_err());
        assert!(parse_report_csv("# x\nfoo,bar\n").is_err());
        assert!(parse_report_csv(&format!("# x\n{CLASSIFICATION_HEADER}\nT1,1,q,1,1,1\n")).is_err());
    }
}
