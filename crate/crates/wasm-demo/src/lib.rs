//! Browser bindings: train-and-evaluate on a synthetic log, check LTL
//! formulas against a trace, and inspect a log's control flow.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and can be called natively.

use ppm_core::bucketing::{build_dfg, control_flow_vector, fit_kmeans, KMeansParams};
use ppm_core::classifiers::{ClassifierKind, ClassifierSpec};
use ppm_core::evaluation::{auc_by_prefix_length, overall_weighted_auc, report_svg, temporal_split, EvaluationReport, LengthRow};
use ppm_core::labeling::{LtlFormula, Labels};
use ppm_core::pipeline::{parse_bucketing, train_on_labeled, PipelineConfig, SequenceEncoding};
use ppm_core::prefixing::compute_max_eval_length;
use ppm_core::synthetic::{generate_synthetic, SyntheticParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Forest size used in the browser, smaller than the library default.
const DEMO_TREES: usize = 30;

#[derive(Serialize)]
struct CurveResult {
    method: String,
    classifier: String,
    train_cases: usize,
    test_cases: usize,
    rows: Vec<LengthRow>,
    overall_auc: Option<f64>,
    svg: String,
}

/// Generates a synthetic log, trains `method` (`<bucketing>_<encoding>`)
/// with `classifier` on the earlier 80% of cases and scores the rest by
/// prefix length.
pub fn auc_curve_json(n_traces: usize, noise: f64, seed: u64, method: &str, classifier: &str) -> Result<String, String> {
    let (bucketing, encoding) = method
        .split_once('_')
        .ok_or_else(|| format!("method `{method}` is not of the form <bucketing>_<encoding>"))?;
    let bucketing = parse_bucketing(bucketing).map_err(|e| e.to_string())?;
    let encoding: SequenceEncoding = encoding.parse().map_err(|e: ppm_core::Error| e.to_string())?;
    let spec = match classifier.parse::<ClassifierKind>().map_err(|e| e.to_string())?.default_spec() {
        ClassifierSpec::Rforest { max_features, .. } => ClassifierSpec::Rforest {
            n_estimators: DEMO_TREES,
            max_features,
        },
        other => other,
    };
    let mut cfg = PipelineConfig::new(bucketing, encoding, spec);
    cfg.seed = seed;
    cfg.validate().map_err(|e| e.to_string())?;

    let synth = generate_synthetic(&SyntheticParams {
        n_traces,
        noise,
        seed,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let max_len = compute_max_eval_length(&synth.log, &synth.labels, 0.9, 40).map_err(|e| e.to_string())?;
    cfg.prefix.max_len = max_len;
    let (train, test) = temporal_split(&synth.log, 0.8).map_err(|e| e.to_string())?;
    let train_labels: Labels = train
        .traces()
        .iter()
        .map(|t| (t.case_id().to_owned(), synth.labels[t.case_id()]))
        .collect();
    let model = train_on_labeled(&train, &train_labels, &cfg).map_err(|e| e.to_string())?;
    let rows = auc_by_prefix_length(&model, &test, &synth.labels, max_len).map_err(|e| e.to_string())?;
    let overall_auc = overall_weighted_auc(&rows);

    let report = EvaluationReport {
        method: cfg.method_name(),
        bucketing: cfg.bucketing.name().to_owned(),
        encoding: cfg.encoding.name().to_owned(),
        classifier: cfg.classifier.kind().name().to_owned(),
        seed,
        config: serde_json::to_value(&cfg).map_err(|e| e.to_string())?,
        rows: rows.clone(),
        overall_weighted_auc: overall_auc,
        offline_time_s: 0.0,
        online_time_ms_mean: 0.0,
        online_time_ms_std: 0.0,
    };
    to_json(&CurveResult {
        method: report.method.clone(),
        classifier: report.classifier.clone(),
        train_cases: train.len(),
        test_cases: test.len(),
        svg: report_svg(std::slice::from_ref(&report)),
        rows,
        overall_auc,
    })
}

#[derive(Serialize)]
struct FormulaResult {
    formula: String,
    activities: Vec<String>,
    /// Truth value at each 1-based position.
    truth: Vec<bool>,
    holds: bool,
}

/// Evaluates `formula` at every position of a comma-separated activity list.
pub fn check_formula_json(formula: &str, trace: &str) -> Result<String, String> {
    let parsed = LtlFormula::parse(formula).map_err(|e| e.to_string())?;
    let activities: Vec<String> = trace
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_owned)
        .collect();
    if activities.is_empty() {
        return Err("the trace needs at least one activity".into());
    }
    let refs: Vec<&str> = activities.iter().map(String::as_str).collect();
    let truth = parsed.truth_table(&refs);
    to_json(&FormulaResult {
        formula: parsed.to_string(),
        holds: truth[0],
        activities,
        truth,
    })
}

#[derive(Serialize)]
struct ClusterInfo {
    size: usize,
    positive_ratio: f64,
    /// Mean occurrences per activity, alphabet order.
    centroid: Vec<f64>,
}

#[derive(Serialize)]
struct InspectResult {
    cases: usize,
    alphabet: Vec<String>,
    edges: Vec<(String, String)>,
    dot: String,
    clusters: Vec<ClusterInfo>,
}

/// Directly-follows graph and a k-means clustering of the control-flow
/// vectors of a synthetic log's complete cases.
pub fn inspect_log_json(n_traces: usize, seed: u64, k: usize) -> Result<String, String> {
    let synth = generate_synthetic(&SyntheticParams {
        n_traces,
        seed,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let log = &synth.log;
    let dfg = build_dfg(log.traces());
    let alphabet = log.activity_alphabet().to_vec();
    let vectors: Vec<Vec<f64>> = log
        .traces()
        .iter()
        .map(|t| control_flow_vector(t.events(), &alphabet))
        .collect();
    let fit = fit_kmeans(&vectors, k, seed, KMeansParams::default()).map_err(|e| e.to_string())?;
    let mut clusters: Vec<ClusterInfo> = fit
        .centroids
        .iter()
        .map(|c| ClusterInfo {
            size: 0,
            positive_ratio: 0.0,
            centroid: c.clone(),
        })
        .collect();
    for (trace, &c) in log.traces().iter().zip(&fit.assignments) {
        clusters[c].size += 1;
        if synth.labels[trace.case_id()] {
            clusters[c].positive_ratio += 1.0;
        }
    }
    for c in &mut clusters {
        if c.size > 0 {
            c.positive_ratio /= c.size as f64;
        }
    }
    to_json(&InspectResult {
        cases: log.len(),
        alphabet,
        edges: dfg.edges.iter().cloned().collect(),
        dot: dfg.to_dot(),
        clusters,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn auc_curve(n_traces: usize, noise: f64, seed: u32, method: &str, classifier: &str) -> Result<String, JsError> {
    auc_curve_json(n_traces, noise, u64::from(seed), method, classifier).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn check_formula(formula: &str, trace: &str) -> Result<String, JsError> {
    check_formula_json(formula, trace).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn inspect_log(n_traces: usize, seed: u32, k: usize) -> Result<String, JsError> {
    inspect_log_json(n_traces, u64::from(seed), k).map_err(|e| JsError::new(&e))
}
