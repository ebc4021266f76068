//! Temporal splitting, AUC, per-prefix-length evaluation, timing and reports.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{EventLog, Trace};
use crate::labeling::Labels;
use crate::pipeline::{predict_prefix, TrainedModel};
use crate::prefixing::PrefixInstance;

/// Chronological split by case start; training events that overlap the test
/// period are removed.
pub fn temporal_split(log: &EventLog, ratio: f64) -> Result<(EventLog, EventLog)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut order: Vec<&Trace> = log.traces().iter().collect();
    order.sort_by(|a, b| a.start().cmp(&b.start()).then_with(|| a.case_id().cmp(b.case_id())));
    let n_train = ((ratio * order.len() as f64).ceil() as usize).min(order.len());
    if n_train == 0 || n_train == order.len() {
        return Err(Error::DegenerateSplit);
    }
    let test: Vec<Trace> = order[n_train..].iter().map(|t| (*t).clone()).collect();
    let cutoff = test.iter().map(Trace::start).min().expect("non-empty test side");
    let train: Vec<Trace> = order[..n_train]
        .iter()
        .filter_map(|t| {
            let keep = t.events().iter().take_while(|e| e.timestamp < cutoff).count();
            t.truncated(keep)
        })
        .collect();
    if train.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    Ok((log.with_traces(train)?, log.with_traces(test)?))
}

/// Area under the ROC curve with half credit for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps tied average ranks integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let ranks_x2 = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum_x2 += ranks_x2 * pos_in_group;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // U·2 = rank_sum·2 − p(p+1)
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    pub n_prefixes: usize,
    /// Absent when the test prefixes of this length are single-class.
    pub auc: Option<f64>,
}

/// Scores the length-`l` prefixes of every test trace with at least `l`
/// events, for `l` in `1..=max_eval_len`.
pub fn auc_by_prefix_length(
    model: &TrainedModel,
    test: &EventLog,
    labels: &Labels,
    max_eval_len: usize,
) -> Result<Vec<LengthRow>> {
    let prepared = model.prepare_log(test);
    let mut rows = Vec::with_capacity(max_eval_len);
    let sources: Vec<(std::sync::Arc<Trace>, bool)> = prepared
        .traces()
        .iter()
        .map(|t| {
            labels
                .get(t.case_id())
                .map(|l| (std::sync::Arc::new(t.clone()), *l))
                .ok_or_else(|| Error::MissingLabel(t.case_id().to_owned()))
        })
        .collect::<Result<_>>()?;
    for length in 1..=max_eval_len {
        let mut scores = Vec::new();
        let mut ys = Vec::new();
        for (trace, label) in &sources {
            if trace.len() >= length {
                let prefix = PrefixInstance::new(std::sync::Arc::clone(trace), length, *label);
                scores.push(predict_prefix(model, &prefix)?);
                ys.push(*label);
            }
        }
        let auc = roc_auc(&scores, &ys).ok();
        rows.push(LengthRow {
            length,
            n_prefixes: scores.len(),
            auc,
        });
    }
    Ok(rows)
}

/// `Σ n_l·auc_l / Σ n_l` over rows with an AUC.
pub fn overall_weighted_auc(rows: &[LengthRow]) -> Option<f64> {
    let (num, den) = rows.iter().fold((0.0, 0usize), |(num, den), r| match r.auc {
        Some(a) if r.n_prefixes > 0 => (num + a * r.n_prefixes as f64, den + r.n_prefixes),
        _ => (num, den),
    });
    (den > 0).then(|| num / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineTiming {
    pub samples: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Wall time of `train`, and per-event scoring time over a replay of
/// `stream` (every prefix of every trace, in order). One untimed warm-up
/// pass precedes the measured replay.
pub fn measure_times<T>(
    train: impl FnOnce() -> Result<T>,
    model_of: impl Fn(&T) -> &TrainedModel,
    stream: &EventLog,
) -> Result<(T, f64, OnlineTiming)> {
    let started = Instant::now();
    let trained = train()?;
    let offline = started.elapsed().as_secs_f64();
    let timing = measure_online(model_of(&trained), stream)?;
    Ok((trained, offline, timing))
}

pub fn measure_online(model: &TrainedModel, stream: &EventLog) -> Result<OnlineTiming> {
    let partials: Vec<Trace> = stream
        .traces()
        .iter()
        .flat_map(|t| (1..=t.len()).filter_map(move |l| t.truncated(l)))
        .collect();
    for p in &partials {
        crate::pipeline::predict_online(model, p)?;
    }
    let mut samples = Vec::with_capacity(partials.len());
    for p in &partials {
        let t = Instant::now();
        std::hint::black_box(crate::pipeline::predict_online(model, p)?);
        samples.push(t.elapsed().as_secs_f64() * 1000.0);
    }
    let n = samples.len();
    let (mean, std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    Ok(OnlineTiming {
        samples: n,
        mean_ms: mean,
        std_ms: std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub bucketing: String,
    pub encoding: String,
    pub classifier: String,
    pub seed: u64,
    /// Full configuration of the evaluated model.
    pub config: serde_json::Value,
    pub rows: Vec<LengthRow>,
    pub overall_weighted_auc: Option<f64>,
    pub offline_time_s: f64,
    pub online_time_ms_mean: f64,
    pub online_time_ms_std: f64,
}

pub const CSV_HEADER: &str = "method,bucketing,encoding,classifier,prefix_len,n,auc";

/// Per-length rows of one or more reports, without timing columns so that
/// reruns compare byte for byte.
pub fn report_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for row in &r.rows {
            let auc = row.auc.map(|a| format!("{a:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method, r.bucketing, r.encoding, r.classifier, row.length, row.n_prefixes, auc
            );
        }
    }
    out
}

pub fn report_json(report: &EvaluationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart of AUC against prefix length, one polyline per report.
pub fn report_svg(reports: &[EvaluationReport]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
    let max_len = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.length))
        .max()
        .unwrap_or(1)
        .max(2);
    let x = |l: usize| M + (l - 1) as f64 / (max_len - 1) as f64 * (W - 2.0 * M);
    let y = |auc: f64| H - M - auc * (H - 2.0 * M);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r##"<rect width="{W}" height="{H}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r##"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="#333333"/>"##,
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(out, r##"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="#333333"/>"##, H - M);
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" font-size="11" text-anchor="end">{tick:.2}</text>"##,
            M - 6.0,
            y(tick) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-size="12" text-anchor="middle">prefix length</text>"##,
        W / 2.0,
        H - 12.0
    );
    for (i, r) in reports.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let points: Vec<String> = r
            .rows
            .iter()
            .filter_map(|row| row.auc.map(|a| format!("{:.1},{:.1}", x(row.length), y(a))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            points.join(" "),
            xml_escape(&format!("{}_{}", r.method, r.classifier))
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{}</text>"#,
            W - M - 140.0,
            M + 14.0 * i as f64,
            xml_escape(&format!("{} {}", r.method, r.classifier))
        );
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

/// Writes `<stem>.csv|json|svg` into `dir` and returns the path.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat, dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    let (ext, body) = match format {
        ReportFormat::Csv => ("csv", report_csv(std::slice::from_ref(report))),
        ReportFormat::Json => ("json", report_json(report)?),
        ReportFormat::Svg => ("svg", report_svg(std::slice::from_ref(report))),
    };
    let path = dir.join(format!("{stem}.{ext}"));
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn weighted_auc_skips_absent_rows() {
        let rows = vec![
            LengthRow {
                length: 1,
                n_prefixes: 10,
                auc: Some(0.6),
            },
            LengthRow {
                length: 2,
                n_prefixes: 30,
                auc: Some(0.8),
            },
            LengthRow {
                length: 3,
                n_prefixes: 50,
                auc: None,
            },
        ];
        assert!((overall_weighted_auc(&rows).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(overall_weighted_auc(&rows[2..]), None);
    }
}
