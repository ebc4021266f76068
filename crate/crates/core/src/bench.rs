//! Run files and the benchmark protocol: temporal split, hyperparameter
//! search on the training part, final training, evaluation by prefix
//! length and timing, for every cell of a method grid.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{random_search_cv, ClassifierKind, ClassifierSpec, FoldGrouping, SearchOutcome, SearchSpace};
use crate::encoding::LevelFilterParams;
use crate::error::{Error, Result};
use crate::evaluation::{
    auc_by_prefix_length, measure_online, overall_weighted_auc, report_csv, report_json, report_svg, temporal_split,
    EvaluationReport,
};
use crate::event_log::{derive_time_features, parse_event_log, EventLog, SchemaConfig};
use crate::labeling::{Labeling, LabelingSpec, Labels};
use crate::pipeline::{fit_on_prefixes, parse_bucketing, PipelineConfig, SequenceEncoding, TrainedModel};
use crate::prefixing::{build_prefix_log, compute_max_eval_length, PrefixParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodGrid {
    pub bucketing: Vec<String>,
    pub encoding: Vec<String>,
    pub classifier: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub min_len: usize,
    /// Longest training prefix; defaults to the evaluation horizon.
    pub max_len: Option<usize>,
    pub gap: usize,
    pub min_level_count: usize,
    pub top_level_fraction: f64,
    pub min_bucket_size: usize,
    pub time_features: bool,
    pub boolean_agg: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        let levels = LevelFilterParams::default();
        FilterParams {
            min_len: 1,
            max_len: None,
            gap: 1,
            min_level_count: levels.min_count,
            top_level_fraction: levels.top_fraction,
            min_bucket_size: 30,
            time_features: true,
            boolean_agg: false,
        }
    }
}

fn default_trials() -> usize {
    10
}
fn default_folds() -> usize {
    3
}
fn default_split() -> f64 {
    0.8
}
fn default_quantile() -> f64 {
    0.9
}
fn default_cap() -> usize {
    40
}
fn default_estimators() -> usize {
    100
}
fn default_output() -> String {
    "results".into()
}

/// A run file. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub log: String,
    pub schema: String,
    pub labeling: LabelingSpec,
    pub grid: MethodGrid,
    #[serde(default)]
    pub filter: FilterParams,
    /// Search trials per cell; 0 trains with default hyperparameters.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub fold_grouping: FoldGrouping,
    #[serde(default)]
    pub search: SearchSpace,
    #[serde(default = "default_estimators")]
    pub n_estimators: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default = "default_quantile")]
    pub eval_quantile: f64,
    #[serde(default = "default_cap")]
    pub eval_cap: usize,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.bucketing.is_empty() || self.grid.encoding.is_empty() || self.grid.classifier.is_empty() {
            return Err(Error::InvalidConfig("method grid is empty".into()));
        }
        for b in &self.grid.bucketing {
            parse_bucketing(b)?;
        }
        for e in &self.grid.encoding {
            e.parse::<SequenceEncoding>()?;
        }
        for c in &self.grid.classifier {
            c.parse::<ClassifierKind>()?;
        }
        if self.n_estimators == 0 {
            return Err(Error::InvalidConfig("n_estimators must be positive".into()));
        }
        self.search.validate()
    }

    /// Every grid cell as a template configuration, in grid order.
    pub fn cells(&self) -> Result<Vec<PipelineConfig>> {
        let mut out = Vec::new();
        for b in &self.grid.bucketing {
            for e in &self.grid.encoding {
                for c in &self.grid.classifier {
                    let classifier = match c.parse::<ClassifierKind>()?.default_spec() {
                        ClassifierSpec::Rforest { max_features, .. } => ClassifierSpec::Rforest {
                            n_estimators: self.n_estimators,
                            max_features,
                        },
                        other => other,
                    };
                    let mut cfg = PipelineConfig::new(parse_bucketing(b)?, e.parse()?, classifier);
                    cfg.level_filter = LevelFilterParams {
                        min_count: self.filter.min_level_count,
                        top_fraction: self.filter.top_level_fraction,
                    };
                    cfg.min_bucket_size = self.filter.min_bucket_size;
                    cfg.time_features = self.filter.time_features;
                    cfg.boolean_agg = self.filter.boolean_agg;
                    cfg.seed = self.seed;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }

    /// The configured single method, for training a deployable model.
    pub fn single_cell(&self) -> Result<PipelineConfig> {
        let cells = self.cells()?;
        if cells.len() != 1 {
            return Err(Error::InvalidConfig(format!(
                "expected exactly one method in the grid, found {}",
                cells.len()
            )));
        }
        Ok(cells.into_iter().next().expect("one cell"))
    }
}

/// Data shared by all grid cells.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: EventLog,
    pub test: EventLog,
    pub labels: Labels,
    pub max_eval_len: usize,
}

pub fn load_log(cfg: &RunConfig, base: &Path) -> Result<EventLog> {
    let schema_path = base.join(&cfg.schema);
    let schema = SchemaConfig::from_path(&schema_path)?;
    let log_path = base.join(&cfg.log);
    let file = std::fs::File::open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    parse_event_log(std::io::BufReader::new(file), &schema)
}

/// Splits, labels and cuts. A median duration threshold is fixed on the
/// training part only.
pub fn prepare(log: &EventLog, labeling: &Labeling, cfg: &RunConfig) -> Result<PreparedData> {
    let (train_part, _) = temporal_split(log, cfg.split_ratio)?;
    let labeling = labeling.resolved(&train_part);
    let (cut, labels) = labeling.apply(log)?;
    let max_eval_len = compute_max_eval_length(&cut, &labels, cfg.eval_quantile, cfg.eval_cap)?;
    let (train, test) = temporal_split(&cut, cfg.split_ratio)?;
    Ok(PreparedData {
        train,
        test,
        labels,
        max_eval_len,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub method: String,
    pub classifier: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub report: EvaluationReport,
    pub model: TrainedModel,
}

/// Search, final training, evaluation and timing for one grid cell.
pub fn run_cell(template: &PipelineConfig, data: &PreparedData, cfg: &RunConfig) -> Result<CellOutcome> {
    let fitted = fit_with_search(template, &data.train, &data.labels, data.max_eval_len, cfg)?;
    let (chosen, model, offline_time_s) = (fitted.config, fitted.model, fitted.offline_time_s);

    let rows = auc_by_prefix_length(&model, &data.test, &data.labels, data.max_eval_len)?;
    let timing = measure_online(&model, &data.test)?;
    let report = EvaluationReport {
        method: chosen.method_name(),
        bucketing: chosen.bucketing.name().to_owned(),
        encoding: chosen.encoding.name().to_owned(),
        classifier: chosen.classifier.kind().name().to_owned(),
        seed: chosen.seed,
        config: serde_json::to_value(&chosen)?,
        overall_weighted_auc: overall_weighted_auc(&rows),
        rows,
        offline_time_s,
        online_time_ms_mean: timing.mean_ms,
        online_time_ms_std: timing.std_ms,
    };
    Ok(CellOutcome { report, model })
}

/// Result of searching and fitting one method on a training log.
#[derive(Debug, Clone)]
pub struct FittedMethod {
    pub config: PipelineConfig,
    pub model: TrainedModel,
    pub search: Option<SearchOutcome>,
    /// Seconds spent on the final fit, search excluded.
    pub offline_time_s: f64,
}

/// Runs the hyperparameter search when `cfg.trials > 0`, then fits the
/// chosen configuration on every prefix of `train`. `default_max_len` caps
/// prefix lengths unless the run file sets one.
pub fn fit_with_search(
    template: &PipelineConfig,
    train: &EventLog,
    labels: &Labels,
    default_max_len: usize,
    cfg: &RunConfig,
) -> Result<FittedMethod> {
    template.validate()?;
    let mut template = template.clone();
    template.prefix = PrefixParams {
        min_len: cfg.filter.min_len,
        max_len: cfg.filter.max_len.unwrap_or(default_max_len).max(cfg.filter.min_len),
        gap: cfg.filter.gap,
    };
    let featured = if template.time_features {
        derive_time_features(train)
    } else {
        train.clone()
    };
    let train_labels: Labels = featured
        .traces()
        .iter()
        .map(|t| {
            let id = t.case_id();
            labels
                .get(id)
                .map(|l| (id.to_owned(), *l))
                .ok_or_else(|| Error::MissingLabel(id.to_owned()))
        })
        .collect::<Result<_>>()?;

    let search = if cfg.trials > 0 {
        let prefixes = build_prefix_log(&featured, &train_labels, template.prefix)?;
        Some(random_search_cv(
            &prefixes,
            featured.schema(),
            &template,
            &cfg.search,
            cfg.trials,
            cfg.folds,
            cfg.fold_grouping,
            cfg.seed,
        )?)
    } else {
        None
    };
    let chosen = search.as_ref().map_or_else(|| template.clone(), |s| s.best.clone());

    let started = Instant::now();
    let prefixes = build_prefix_log(&featured, &train_labels, chosen.prefix)?;
    let model = fit_on_prefixes(&prefixes, featured.schema(), &chosen)?;
    let offline_time_s = started.elapsed().as_secs_f64();
    Ok(FittedMethod {
        config: chosen,
        model,
        search,
        offline_time_s,
    })
}

/// Trains the run file's single method on the whole log, for deployment.
pub fn train_from_run(cfg: &RunConfig, base: &Path) -> Result<FittedMethod> {
    let template = cfg.single_cell()?;
    template.validate()?;
    let log = load_log(cfg, base)?;
    let labeling = cfg.labeling.build(base)?.resolved(&log);
    let (cut, labels) = labeling.apply(&log)?;
    let max_len = compute_max_eval_length(&cut, &labels, cfg.eval_quantile, cfg.eval_cap)?;
    fit_with_search(&template, &cut, &labels, max_len, cfg)
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub reports: Vec<EvaluationReport>,
    pub skipped: Vec<SkippedCell>,
    pub output_dir: PathBuf,
}

/// Runs every grid cell and writes one CSV and JSON report per cell plus
/// `comparison.csv`, `comparison.svg` and `skipped.csv`. Cells run on a
/// pool of `jobs` workers; results keep grid order.
pub fn run_benchmark(cfg: &RunConfig, base: &Path, jobs: usize) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let log = load_log(cfg, base)?;
    let labeling = cfg.labeling.build(base)?;
    let data = prepare(&log, &labeling, cfg)?;
    let cells = cfg.cells()?;

    let run = |template: &PipelineConfig| -> std::result::Result<EvaluationReport, SkippedCell> {
        run_cell(template, &data, cfg).map(|o| o.report).map_err(|e| SkippedCell {
            method: template.method_name(),
            classifier: template.classifier.kind().name().to_owned(),
            reason: e.to_string(),
        })
    };
    let results: Vec<_> = run_cells(&cells, jobs, run)?;

    let output_dir = base.join(&cfg.output_dir);
    std::fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(report) => {
                let stem = format!("{}_{}", report.method, report.classifier);
                write_file(&output_dir.join(format!("{stem}.csv")), &report_csv(std::slice::from_ref(&report)))?;
                write_file(&output_dir.join(format!("{stem}.json")), &report_json(&report)?)?;
                reports.push(report);
            }
            Err(s) => skipped.push(s),
        }
    }
    write_file(&output_dir.join("comparison.csv"), &report_csv(&reports))?;
    write_file(&output_dir.join("comparison.svg"), &report_svg(&reports))?;
    let mut skipped_csv = String::from("method,classifier,reason\n");
    for s in &skipped {
        skipped_csv.push_str(&format!("{},{},\"{}\"\n", s.method, s.classifier, s.reason.replace('"', "\"\"")));
    }
    write_file(&output_dir.join("skipped.csv"), &skipped_csv)?;
    Ok(BenchmarkOutcome {
        reports,
        skipped,
        output_dir,
    })
}

#[cfg(feature = "parallel")]
fn run_cells<T: Send>(
    cells: &[PipelineConfig],
    jobs: usize,
    run: impl Fn(&PipelineConfig) -> T + Sync,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(&run).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_cells<T>(cells: &[PipelineConfig], _jobs: usize, run: impl Fn(&PipelineConfig) -> T) -> Result<Vec<T>> {
    Ok(cells.iter().map(run).collect())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
