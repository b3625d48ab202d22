//! Batch commands behind the `primfit` binary: dataset generation,
//! classification of a dataset and evaluation of predictions.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 failed
//! `--assert` threshold.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::{
    read_cloud_txt, read_gt_txt, read_manifest, write_dataset, write_gt_txt, DataGenError,
    DatasetConfig, GroundTruthVector, ManifestRow, PerturbationKind,
};
use crate::evalkit::{render_report, summarize, EvalRecord, MethodReport, ReportFormat};
use crate::fitters::DEFAULT_K_NEIGHBORS;
use crate::geometry::PrimitiveKind;
use crate::hough::{DEFAULT_BINS, DEFAULT_HALFWIDTH};
use crate::recognize::{classify, directed_hausdorff, mfe, ClassifyConfig, DEFAULT_PARSIMONY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "PRIMFIT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("assertion failed: {}", .0.join("; "))]
    Assertion(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Assertion(_) => EXIT_ASSERT,
        }
    }
}

impl From<DataGenError> for CliError {
    fn from(e: DataGenError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    AtLeast,
    AtMost,
}

/// Threshold on a report value, written `name>=value` or `name<=value`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assertion {
    pub metric: String,
    pub cmp: Comparison,
    pub threshold: f64,
}

impl std::str::FromStr for Assertion {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (metric, cmp, rest) = if let Some((m, v)) = s.split_once(">=") {
            (m, Comparison::AtLeast, v)
        } else if let Some((m, v)) = s.split_once("<=") {
            (m, Comparison::AtMost, v)
        } else {
            return Err(CliError::Usage(format!("assertion {s:?} needs >= or <=")));
        };
        let threshold = rest
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("assertion {s:?} has no numeric threshold")))?;
        Ok(Assertion { metric: metric.trim().to_string(), cmp, threshold })
    }
}

impl Assertion {
    pub fn holds(&self, value: f64) -> bool {
        match self.cmp {
            Comparison::AtLeast => value >= self.threshold,
            Comparison::AtMost => value <= self.threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub per_kind: usize,
    pub perturbations: Vec<PerturbationKind>,
    pub point_range: (usize, usize),
    pub use_hough: bool,
    pub k_neighbors: usize,
    pub bins: usize,
    pub halfwidth: f64,
    pub parsimony: f64,
    /// Method name used in report tables.
    pub method: String,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub assertions: Vec<Assertion>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            per_kind: 1,
            perturbations: vec![PerturbationKind::A0],
            point_range: DatasetConfig::default().point_range,
            use_hough: false,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            bins: DEFAULT_BINS,
            halfwidth: DEFAULT_HALFWIDTH,
            parsimony: DEFAULT_PARSIMONY,
            method: "primfit".into(),
            input: None,
            output: None,
            truth: None,
            assertions: Vec::new(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

pub fn parse_perturbations(list: &str) -> Result<Vec<PerturbationKind>, CliError> {
    let list = list.trim();
    if list.eq_ignore_ascii_case("all") {
        return Ok(PerturbationKind::ALL.to_vec());
    }
    list.split(',')
        .map(|s| s.trim().parse::<PerturbationKind>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

impl RunConfig {
    /// Applies one `key=value` setting. Keys match the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key.trim().replace('_', "-").as_str() {
            "seed" => self.seed = parse_value(key, value)?,
            "per-kind" => self.per_kind = parse_value(key, value)?,
            "perturbations" => self.perturbations = parse_perturbations(value)?,
            "min-points" => self.point_range.0 = parse_value(key, value)?,
            "max-points" => self.point_range.1 = parse_value(key, value)?,
            "use-hough" => self.use_hough = parse_value(key, value)?,
            "k" => self.k_neighbors = parse_value(key, value)?,
            "bins" => self.bins = parse_value(key, value)?,
            "halfwidth" => self.halfwidth = parse_value(key, value)?,
            "parsimony" => self.parsimony = parse_value(key, value)?,
            "method" => self.method = value.trim().to_string(),
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "out" => self.output = Some(PathBuf::from(value.trim())),
            "gt" => self.truth = Some(PathBuf::from(value.trim())),
            "assert" => self.assertions.push(value.parse()?),
            other => return Err(CliError::Usage(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults, then the config file, then the flags.
    pub fn from_sources(file: Option<&Path>, flags: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            cfg.apply_file_text(&text)?;
        }
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.per_kind == 0 {
            return Err(CliError::Usage("per-kind must be at least 1".into()));
        }
        if self.point_range.0 > self.point_range.1 {
            return Err(CliError::Usage("min-points exceeds max-points".into()));
        }
        if self.perturbations.is_empty() {
            return Err(CliError::Usage("no perturbations selected".into()));
        }
        if let (Some(i), Some(o)) = (&self.input, &self.output) {
            if i == o {
                return Err(CliError::Usage("input and output directories must differ".into()));
            }
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.seed,
            per_kind: self.per_kind,
            perturbations: self.perturbations.clone(),
            kinds: PrimitiveKind::ALL.to_vec(),
            point_range: self.point_range,
        }
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        ClassifyConfig {
            use_hough: self.use_hough,
            k_neighbors: self.k_neighbors,
            bins: self.bins,
            halfwidth: self.halfwidth,
            seed: self.seed,
            parsimony: self.parsimony,
        }
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
        p.as_deref().ok_or_else(|| CliError::Usage(format!("missing --{name}")))
    }
}

/// Runs `f` on a pool capped by `PRIMFIT_THREADS` when that is set.
fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => parse_value::<usize>(THREADS_ENV, &v)?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(pool.install(f))
}

fn emit(stdout: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(stdout, "{line}").map_err(|e| CliError::Data(format!("stdout: {e}")))
}

/// Generates the dataset into `--out`; prints one manifest line per cloud.
pub fn cmd_generate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<Vec<ManifestRow>, CliError> {
    cfg.validate()?;
    let out = cfg.require(&cfg.output, "out")?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let rows = in_pool(|| write_dataset(&cfg.dataset_config(), out))??;
    for r in &rows {
        emit(stdout, &format!("{},{},{},{}", r.file, r.kind, r.perturbation, r.seed))?;
    }
    info!("wrote {} clouds to {}", rows.len(), out.display());
    Ok(rows)
}

fn stem(file: &str) -> &str {
    file.strip_suffix(".txt").unwrap_or(file)
}

/// Relative path of the prediction written for a manifest entry.
pub fn prediction_path(file: &str) -> String {
    format!("{}_pred.txt", stem(file))
}

pub fn ground_truth_path(file: &str) -> String {
    format!("{}_gt.txt", stem(file))
}

fn load_manifest(dir: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let path = dir.join("manifest.csv");
    if !path.is_file() {
        return Err(CliError::Data(format!("missing manifest {}", path.display())));
    }
    Ok(read_manifest(&path)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub file: String,
    pub kind: PrimitiveKind,
    pub mfe: f64,
}

/// Classifies every cloud listed in `<input>/manifest.csv` and writes
/// `<out>/<stem>_pred.txt`. Clouds that fail are logged and skipped.
pub fn cmd_classify(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<Vec<Prediction>, CliError> {
    cfg.validate()?;
    let input = cfg.require(&cfg.input, "input")?;
    let out = cfg.require(&cfg.output, "out")?;
    let rows = load_manifest(input)?;
    if rows.is_empty() {
        warn!("manifest in {} lists no clouds", input.display());
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let ccfg = cfg.classify_config();

    let results: Vec<Result<Prediction, String>> = in_pool(|| {
        rows.par_iter()
            .map(|row| {
                let cloud = read_cloud_txt(&input.join(&row.file)).map_err(|e| e.to_string())?;
                let fit = classify(&cloud, &ccfg).map_err(|e| e.to_string())?;
                let target = out.join(prediction_path(&row.file));
                if let Some(dir) = target.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                }
                write_gt_txt(&target, &GroundTruthVector::from_primitive(&fit.params))
                    .map_err(|e| e.to_string())?;
                Ok(Prediction { file: row.file.clone(), kind: fit.kind, mfe: fit.chosen_mfe() })
            })
            .collect()
    })?;

    let mut done = Vec::new();
    for (row, res) in rows.iter().zip(results) {
        match res {
            Ok(p) => {
                emit(stdout, &format!("{},{},{:e}", p.file, p.kind.code(), p.mfe))?;
                done.push(p);
            }
            Err(e) => warn!("skipping {}: {e}", row.file),
        }
    }
    info!("classified {} of {} clouds", done.len(), rows.len());
    Ok(done)
}

/// Report value addressed by an assertion name such as `macro_acc`,
/// `accuracy` or `mfe_q2`.
pub fn report_value(report: &MethodReport, name: &str) -> Option<f64> {
    let name = name.to_ascii_lowercase();
    if name == "accuracy" {
        return report.whole.confusion.accuracy();
    }
    if let Some(rate) = name.strip_prefix("macro_") {
        let i = ["ppv", "npv", "tpr", "tnr", "acc"].iter().position(|r| *r == rate)?;
        return report.whole.metrics.macro_avg.as_array()[i];
    }
    let (measure, stat) = name.split_once('_')?;
    let (_, s) = report.errors.iter().find(|(m, _)| m.label().eq_ignore_ascii_case(measure))?;
    match stat {
        "q1" => Some(s.q1),
        "q2" => Some(s.q2),
        "q3" => Some(s.q3),
        "mean" => Some(s.mean),
        "std" => Some(s.std),
        _ => None,
    }
}

fn collect_predictions(dir: &Path, base: &Path, out: &mut Vec<String>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            collect_predictions(&path, base, out);
        } else if path.to_string_lossy().ends_with("_pred.txt") {
            if let Ok(rel) = path.strip_prefix(base) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluateSummary {
    pub report: MethodReport,
    /// Manifest entries without a usable prediction, plus predictions with no
    /// manifest entry.
    pub unmatched: Vec<String>,
}

/// Compares `<input>/<stem>_pred.txt` against the dataset at `--gt` and
/// writes `report.csv` and `report.md` into `--out`.
pub fn cmd_evaluate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<EvaluateSummary, CliError> {
    cfg.validate()?;
    let pred_dir = cfg.require(&cfg.input, "input")?;
    let gt_dir = cfg.require(&cfg.truth, "gt")?;
    let out = cfg.require(&cfg.output, "out")?;
    let rows = load_manifest(gt_dir)?;

    let evaluated: Vec<Result<EvalRecord, String>> = in_pool(|| {
        rows.par_iter()
            .map(|row| {
                let pred_path = pred_dir.join(prediction_path(&row.file));
                if !pred_path.is_file() {
                    return Err(format!("{}: no prediction", row.file));
                }
                let predicted = read_gt_txt(&pred_path).map_err(|e| format!("{}: {e}", row.file))?;
                let truth = read_gt_txt(&gt_dir.join(ground_truth_path(&row.file)))
                    .map_err(|e| format!("{}: {e}", row.file))?;
                let (mut fit_err, mut haus) = (None, None);
                if let Ok(prim) = predicted.to_primitive() {
                    if let Ok(cloud) = read_cloud_txt(&gt_dir.join(&row.file)) {
                        fit_err = mfe(&cloud, &prim).ok();
                        haus = Some(directed_hausdorff(&cloud, &prim));
                    }
                }
                Ok(EvalRecord {
                    perturbation: row.perturbation.clone(),
                    truth,
                    predicted,
                    mfe: fit_err,
                    hausdorff: haus,
                })
            })
            .collect()
    })?;

    let mut records = Vec::new();
    let mut unmatched = Vec::new();
    for res in evaluated {
        match res {
            Ok(r) => records.push(r),
            Err(e) => {
                warn!("excluded {e}");
                unmatched.push(e);
            }
        }
    }
    let mut stray = Vec::new();
    collect_predictions(pred_dir, pred_dir, &mut stray);
    stray.sort();
    for p in stray {
        if !rows.iter().any(|r| prediction_path(&r.file) == p) {
            warn!("excluded {p}: not in the manifest");
            unmatched.push(format!("{p}: not in the manifest"));
        }
    }

    let report = summarize(&cfg.method, &records)
        .ok_or_else(|| CliError::Data("no prediction matches the ground truth".into()))?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let reports = std::slice::from_ref(&report);
    for (name, fmt) in [("report.csv", ReportFormat::Csv), ("report.md", ReportFormat::Markdown)] {
        let path = out.join(name);
        std::fs::write(&path, render_report(reports, fmt)).map_err(|e| io_err(&path, e))?;
    }

    for name in ["accuracy", "macro_acc", "mfe_q2", "l2_q2", "dhaus_q2"] {
        if let Some(v) = report_value(&report, name) {
            emit(stdout, &format!("{name}={v}"))?;
        }
    }

    let mut failed = Vec::new();
    for a in &cfg.assertions {
        match report_value(&report, &a.metric) {
            Some(v) if a.holds(v) => {}
            Some(v) => failed.push(format!("{} = {v} (threshold {})", a.metric, a.threshold)),
            None => failed.push(format!("{} is not in the report", a.metric)),
        }
    }
    if !failed.is_empty() {
        return Err(CliError::Assertion(failed));
    }
    Ok(EvaluateSummary { report, unmatched })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# run\nseed = 7\nper_kind=3\nperturbations=a0,a2\nbins=32\n").unwrap();
        let flags = vec![("seed".to_string(), "9".to_string())];
        let cfg = RunConfig::from_sources(Some(&path), &flags).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.per_kind, 3);
        assert_eq!(cfg.bins, 32);
        assert_eq!(cfg.perturbations, vec![PerturbationKind::A0, PerturbationKind::A2]);
    }

    #[test]
    fn bad_settings_are_usage_errors() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.set("colour", "red").unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(cfg.set("seed", "x").unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(cfg.apply_file_text("seed 4").unwrap_err().exit_code(), EXIT_USAGE);
        cfg.per_kind = 0;
        assert!(cfg.validate().is_err());
        let same = RunConfig { input: Some("d".into()), output: Some("d".into()), ..RunConfig::default() };
        assert!(same.validate().is_err());
    }

    #[test]
    fn assertion_syntax() {
        let a: Assertion = "macro_acc>=0.95".parse().unwrap();
        assert_eq!((a.metric.as_str(), a.cmp, a.threshold), ("macro_acc", Comparison::AtLeast, 0.95));
        assert!(a.holds(0.95) && !a.holds(0.9));
        let b: Assertion = "mfe_q2 <= 1e-2".parse().unwrap();
        assert!(b.holds(0.001));
        assert!("macro_acc=1".parse::<Assertion>().is_err());
    }

    #[test]
    fn prediction_names() {
        assert_eq!(prediction_path("A0/plane_0003.txt"), "A0/plane_0003_pred.txt");
        assert_eq!(ground_truth_path("A0/plane_0003.txt"), "A0/plane_0003_gt.txt");
    }
}
