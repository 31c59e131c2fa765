//! The `synth`, `run` and `errormodel` commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hcascade_core::detector::calibrate::{baseline_profile, stage1_profile, stage2_profile, Calibration};
use hcascade_core::detector::{Detector, DetectorHandle, DetectorProfile, ExternalDetector, SimulatedDetector};
use hcascade_core::errormodel::{
    bayes_error, feature_count, modular_advantage, over_capacity, pdf_curves, Advantage,
};
use hcascade_core::eval::{
    classification_error, evaluate, evaluate_cascade, evaluate_stage1, fn_image_flags, match_dataset,
    pr_curve, stage2_in_scope_matches, EvalReport, MatchResult,
};
use hcascade_core::router::{compare_tree_vs_flat, route, CascadeOutput, RoutingConfig, RoutingMode, TreeVsFlat};
use hcascade_core::seeding::derive_seed;
use hcascade_core::synth::{synthesize, SynthConfig};
use hcascade_core::{ClassTaxonomy, Dataset, Detection, Level};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{base_dir, read_json, DetectorSpec, ErrorModelConfig, ExperimentConfig};
use crate::error::{CliError, CliResult, Context};
use crate::json17::{format_f64, to_string_pretty};

pub const DATASET_FILE: &str = "dataset.json";
pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.json";
pub const PR_CURVES_FILE: &str = "pr_curves.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let text = to_string_pretty(value).map_err(|e| CliError::Config(format!("serializing {name}: {e}")))?;
    write_file(dir, name, &text)
}

pub fn cmd_synth(config: &Path, seed: u64, out: &Path) -> CliResult<PathBuf> {
    let cfg: SynthConfig = read_json(config)?;
    let dataset = synthesize(&cfg, seed).context("synthesizing dataset")?;
    write_json(out, DATASET_FILE, &dataset)
}

/// Routing counters as they appear in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCounters {
    pub mode: RoutingMode,
    pub tau: f64,
    pub stage1_inferences: usize,
    pub stage2_inferences: usize,
    pub routed_positive_images: usize,
    pub fn_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub baseline: EvalReport,
    pub stage1: EvalReport,
    pub modular: EvalReport,
    /// Stage-2 error on objects routed to their own general class.
    pub stage2_in_scope_error: Option<f64>,
    pub trace: TraceCounters,
    pub tree_vs_flat: TreeVsFlat,
    /// `None` when an accuracy is undefined because nothing was matched.
    pub advantage: Option<Advantage>,
}

/// Everything the detectors produced in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub iou_threshold: f64,
    pub baseline: Vec<Vec<Detection>>,
    pub cascade: CascadeOutput,
}

fn optional_error(matches: &MatchResult) -> CliResult<Option<f64>> {
    match classification_error(matches) {
        Ok(e) => Ok(Some(e)),
        Err(hcascade_core::Error::NoMatches) => Ok(None),
        Err(e) => Err(e).context("classification error"),
    }
}

/// Builds the report from detector outputs alone.
pub fn report_from_trace(dataset: &Dataset, trace: &RunTrace) -> CliResult<RunReport> {
    let tax = &dataset.taxonomy;
    let thr = trace.iou_threshold;
    let baseline = evaluate(dataset, &trace.baseline, tax, Level::Fine, thr).context("evaluating baseline")?;
    let stage1 = evaluate_stage1(dataset, &trace.cascade, tax, thr).context("evaluating stage 1")?;
    let modular = evaluate_cascade(dataset, &trace.cascade, tax, thr).context("evaluating cascade")?;
    let in_scope = stage2_in_scope_matches(dataset, &trace.cascade, tax, thr).context("evaluating stage 2")?;
    let stage2_in_scope_error = optional_error(&in_scope)?;

    let coverage = trace.cascade.coverage(dataset, tax).context("routing coverage")?;
    let counters = TraceCounters {
        mode: trace.cascade.trace.mode,
        tau: trace.cascade.trace.tau,
        stage1_inferences: trace.cascade.trace.stage1_inferences,
        stage2_inferences: trace.cascade.trace.stage2_inferences,
        routed_positive_images: coverage.routed_positive_images,
        fn_images: coverage.fn_images,
    };
    let tree_vs_flat = compare_tree_vs_flat(&trace.cascade.trace, tax.generals.len());

    let advantage = match (baseline.classification_error, stage1.classification_error, stage2_in_scope_error) {
        (Some(e0), Some(e1), Some(e2)) => {
            let a = 1.0 - e0;
            Some(modular_advantage(a, (1.0 - e1) - a, (1.0 - e2) - a).context("advantage")?)
        }
        _ => None,
    };

    Ok(RunReport {
        seed: trace.seed,
        baseline,
        stage1,
        modular,
        stage2_in_scope_error,
        trace: counters,
        tree_vs_flat,
        advantage,
    })
}

fn build_detector(
    spec: Option<&DetectorSpec>,
    calibrated: impl FnOnce(&Calibration) -> hcascade_core::Result<DetectorProfile>,
    calibration: Option<&Calibration>,
    expected: &[&str],
    seed: u64,
    base: &Path,
    name: &str,
) -> CliResult<DetectorHandle> {
    let profile = match spec {
        Some(DetectorSpec::External(ext)) => {
            let det = ExternalDetector::spawn(ext.clone()).context(format!("starting {name} detector"))?;
            return Ok(det.into());
        }
        Some(DetectorSpec::Simulated { profile }) => profile.resolve(base)?,
        None => {
            let cal = calibration.ok_or_else(|| {
                CliError::Config(format!("no {name} detector given and no calibration to derive one"))
            })?;
            calibrated(cal).context(format!("calibrating {name} detector"))?
        }
    };
    profile.ensure_label_space(expected).context(format!("{name} detector"))?;
    let det = SimulatedDetector::new(profile, seed).context(format!("{name} detector"))?;
    Ok(det.into())
}

struct Detectors {
    baseline: DetectorHandle,
    stage1: DetectorHandle,
    stage2: BTreeMap<String, DetectorHandle>,
}

fn build_detectors(cfg: &ExperimentConfig, tax: &ClassTaxonomy, seed: u64, base: &Path) -> CliResult<Detectors> {
    let dcfg = &cfg.detectors;
    let cal = dcfg.calibration.as_ref();
    if let Some(extra) = dcfg.stage2.keys().find(|g| !tax.is_general(g)) {
        return Err(CliError::Config(format!("stage-2 detector for unknown general class `{extra}`")));
    }

    let fines: Vec<&str> = tax.fine_labels().collect();
    let baseline = build_detector(
        dcfg.baseline.as_ref(),
        |c| baseline_profile(tax, c),
        cal,
        &fines,
        derive_seed(seed, "baseline"),
        base,
        "baseline",
    )?;

    let generals: Vec<&str> = tax.general_labels().collect();
    let mut stage1 = build_detector(
        dcfg.stage1.as_ref(),
        |c| stage1_profile(tax, c),
        cal,
        &generals,
        derive_seed(seed, "stage1"),
        base,
        "stage-1",
    )?;
    if let DetectorHandle::Simulated(sim) = stage1 {
        stage1 = sim.with_taxonomy(tax.clone()).into();
    }

    let mut stage2 = BTreeMap::new();
    for g in &generals {
        let local: Vec<&str> = tax.fine_of(g).context("taxonomy")?.iter().map(String::as_str).collect();
        let det = build_detector(
            dcfg.stage2.get(*g),
            |c| stage2_profile(tax, g, c),
            cal,
            &local,
            derive_seed(seed, &format!("stage2/{g}")),
            base,
            &format!("stage-2 `{g}`"),
        )?;
        stage2.insert(g.to_string(), det);
    }
    Ok(Detectors {
        baseline,
        stage1,
        stage2,
    })
}

fn run_baseline(dataset: &Dataset, detector: &DetectorHandle) -> hcascade_core::Result<Vec<Vec<Detection>>> {
    let tax = &dataset.taxonomy;
    dataset
        .images
        .par_iter()
        .map(|image| {
            let dets = detector.detect(image).and_then(|dets| {
                match dets.iter().find(|d| !tax.is_fine(&d.label)) {
                    Some(bad) => Err(hcascade_core::Error::Protocol(format!(
                        "baseline label `{}` is not a fine class",
                        bad.label
                    ))),
                    None => Ok(dets),
                }
            });
            dets.map_err(|source| hcascade_core::Error::Detector {
                image: image.id.clone(),
                source: Box::new(source),
            })
        })
        .collect()
}

/// Output of [`cmd_run`].
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub out: PathBuf,
}

fn resolve_seed_out(cfg: &ExperimentConfig, seed: Option<u64>, out: Option<&Path>) -> CliResult<(u64, PathBuf)> {
    let seed = seed
        .or(cfg.seed)
        .ok_or_else(|| CliError::Config("no seed given on the command line or in the config".into()))?;
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory given on the command line or in the config".into()))?;
    Ok((seed, out))
}

/// Loads the dataset named by an experiment config, applying any taxonomy override.
pub fn load_experiment_dataset(cfg: &ExperimentConfig, base: &Path) -> CliResult<Dataset> {
    let path = base.join(&cfg.dataset);
    let mut dataset = hcascade_core::load_dataset(&path).context(format!("loading {}", path.display()))?;
    if let Some(tax) = &cfg.taxonomy {
        dataset.taxonomy = tax.resolve(base)?;
        dataset.validate().context("dataset against configured taxonomy")?;
    }
    Ok(dataset)
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: Option<&Path>, threads: usize) -> CliResult<RunOutcome> {
    let cfg: ExperimentConfig = read_json(config)?;
    let base = base_dir(config);
    let (seed, out) = resolve_seed_out(&cfg, seed, out)?;
    cfg.routing.validate().context("routing config")?;
    let dataset = load_experiment_dataset(&cfg, &base)?;
    let detectors = build_detectors(&cfg, &dataset.taxonomy, seed, &base)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let trace = pool.install(|| -> CliResult<RunTrace> {
        let baseline = run_baseline(&dataset, &detectors.baseline).context("running baseline")?;
        let cascade = run_cascade(&dataset, &detectors, &cfg.routing).context("routing cascade")?;
        Ok(RunTrace {
            seed,
            iou_threshold: cfg.eval.iou_threshold,
            baseline,
            cascade,
        })
    })?;
    let report = pool.install(|| report_from_trace(&dataset, &trace))?;

    write_json(&out, TRACE_FILE, &trace)?;
    write_file(&out, PR_CURVES_FILE, &pr_curves_csv(&dataset, &trace)?)?;
    write_json(&out, REPORT_FILE, &report)?;
    Ok(RunOutcome { report, out })
}

fn run_cascade(
    dataset: &Dataset,
    detectors: &Detectors,
    routing: &RoutingConfig,
) -> hcascade_core::Result<CascadeOutput> {
    route(dataset, &detectors.stage1, &detectors.stage2, &dataset.taxonomy, routing)
}

/// Precision/recall points of every class for the baseline and the cascade.
pub fn pr_curves_csv(dataset: &Dataset, trace: &RunTrace) -> CliResult<String> {
    let tax = &dataset.taxonomy;
    let thr = trace.iou_threshold;
    let baseline = match_dataset(dataset, &trace.baseline, tax, Level::Fine, thr).context("matching baseline")?;
    let modular = match_dataset(dataset, &trace.cascade.detections, tax, Level::Fine, thr).context("matching cascade")?;
    let flags = fn_image_flags(dataset, &trace.cascade, tax).context("routing coverage")?;
    let modular = modular.filter_images(|i| !flags[i]);

    let mut csv = String::from("detector,class,rank,confidence,recall,precision\n");
    for (name, matches) in [("baseline", &baseline), ("modular", &modular)] {
        for class in tax.fine_labels() {
            let points = match pr_curve(class, matches) {
                Ok(p) => p,
                Err(hcascade_core::Error::NoGroundTruth(_)) => continue,
                Err(e) => return Err(e).context("precision/recall curve"),
            };
            for (rank, p) in points.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{name},{class},{},{},{},{}",
                    rank + 1,
                    format_f64(p.confidence),
                    format_f64(p.recall),
                    format_f64(p.precision)
                );
            }
        }
    }
    Ok(csv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelSummary {
    pub seed: u64,
    pub pair: [String; 2],
    pub n_features: usize,
    pub bayes_error: f64,
    /// Per-class feature share S; present when the model has a feature budget.
    pub feature_count: Option<f64>,
    pub total_features: Option<u64>,
    /// Present when the model has both a budget and capacity parameters.
    pub over_capacity: Option<bool>,
}

pub fn cmd_errormodel(config: &Path, seed: u64, out: &Path) -> CliResult<ErrorModelSummary> {
    let cfg: ErrorModelConfig = read_json(config)?;
    let file = cfg.model.resolve(&base_dir(config))?;
    let model = file.model().context("feature model")?;
    let [c0, c1] = &cfg.pair;
    let rows = pdf_curves(&model, c0, c1).context("density curves")?;
    let bayes = bayes_error(&model, c0, c1).context("Bayes error")?;

    let mut csv = String::from("feature_index,w_density_c0,w_density_c1,min_term\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            r.feature_index,
            format_f64(r.w_density_c0),
            format_f64(r.w_density_c1),
            format_f64(r.min_term)
        );
    }
    write_file(out, CURVES_FILE, &csv)?;

    let feature_count = file.budget.as_ref().map(feature_count).transpose().context("feature budget")?;
    let summary = ErrorModelSummary {
        seed,
        pair: cfg.pair.clone(),
        n_features: model.n_features(),
        bayes_error: bayes,
        feature_count,
        total_features: file.budget.as_ref().map(|b| b.total()),
        over_capacity: match (&file.budget, &file.capacity) {
            (Some(b), Some(c)) => Some(over_capacity(b, c)),
            _ => None,
        },
    };
    write_json(out, SUMMARY_FILE, &summary)?;
    Ok(summary)
}
