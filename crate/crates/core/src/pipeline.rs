//! Offline training and online scoring of a bucketing × encoding ×
//! classifier method, plus model persistence.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bucketing::{assign_bucket, control_flow_vector, fit_bucketer, knn_select, BucketKey, BucketerState, BucketingMethod};
use crate::classifiers::{derive_seed, train_classifier, ClassifierSpec, TrainSet, TrainedClassifier};
use crate::encoding::{
    apply_standardizer, fit_level_filter, fit_standardizer, EncodingKind, FeatureMatrix, FeatureSpace, FilteredSchema,
    LevelFilterParams, RowMeta, Standardizer,
};
use crate::error::{Error, Result};
use crate::event_log::{derive_time_features, derive_trace_time_features, AttributeSchema, EventLog, Trace};
use crate::labeling::{Labeling, Labels};
use crate::prefixing::{build_prefix_log, PrefixInstance, PrefixLog, PrefixParams};

/// Sequence encoding of the dynamic part of a prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceEncoding {
    Laststate,
    Agg,
    Index,
}

impl SequenceEncoding {
    pub fn name(&self) -> &'static str {
        match self {
            SequenceEncoding::Laststate => "laststate",
            SequenceEncoding::Agg => "agg",
            SequenceEncoding::Index => "index",
        }
    }
}

impl std::str::FromStr for SequenceEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laststate" => Ok(SequenceEncoding::Laststate),
            "agg" => Ok(SequenceEncoding::Agg),
            "index" => Ok(SequenceEncoding::Index),
            other => Err(Error::InvalidConfig(format!("unknown encoding `{other}`"))),
        }
    }
}

/// Default neighbourhood and cluster counts when no search is run.
pub const DEFAULT_CLUSTERS: usize = 10;
pub const DEFAULT_NEIGHBOURS: usize = 50;

/// Parses `single`, `prefix`, `state`, `cluster` or `knn`.
pub fn parse_bucketing(name: &str) -> Result<BucketingMethod> {
    match name {
        "single" => Ok(BucketingMethod::Single),
        "prefix" => Ok(BucketingMethod::PrefixLength),
        "state" => Ok(BucketingMethod::State),
        "cluster" => Ok(BucketingMethod::Cluster { k: DEFAULT_CLUSTERS }),
        "knn" => Ok(BucketingMethod::Knn { k: DEFAULT_NEIGHBOURS }),
        other => Err(Error::InvalidConfig(format!("unknown bucketing `{other}`"))),
    }
}

/// The eleven bucketing × encoding combinations of the method taxonomy.
pub fn valid_methods() -> Vec<(BucketingMethod, SequenceEncoding)> {
    use SequenceEncoding::*;
    let mut out = Vec::new();
    for name in ["single", "knn", "state", "cluster"] {
        let b = parse_bucketing(name).expect("known name");
        out.push((b, Agg));
        out.push((b, Laststate));
    }
    for e in [Index, Laststate, Agg] {
        out.push((BucketingMethod::PrefixLength, e));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub bucketing: BucketingMethod,
    pub encoding: SequenceEncoding,
    pub classifier: ClassifierSpec,
    pub prefix: PrefixParams,
    pub level_filter: LevelFilterParams,
    pub min_bucket_size: usize,
    pub seed: u64,
    /// Adds the per-event time features before encoding.
    pub time_features: bool,
    /// Aggregation records occurrence flags instead of counts.
    pub boolean_agg: bool,
}

impl PipelineConfig {
    pub fn new(bucketing: BucketingMethod, encoding: SequenceEncoding, classifier: ClassifierSpec) -> Self {
        PipelineConfig {
            bucketing,
            encoding,
            classifier,
            prefix: PrefixParams::default(),
            level_filter: LevelFilterParams::default(),
            min_bucket_size: 30,
            seed: 0,
            time_features: true,
            boolean_agg: false,
        }
    }

    pub fn method_name(&self) -> String {
        format!("{}_{}", self.bucketing.name(), self.encoding.name())
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoding == SequenceEncoding::Index && self.bucketing != BucketingMethod::PrefixLength {
            return Err(Error::InvalidConfig(format!(
                "index encoding requires prefix-length bucketing, got `{}`",
                self.bucketing.name()
            )));
        }
        match self.bucketing {
            BucketingMethod::Cluster { k } | BucketingMethod::Knn { k } if k == 0 => {
                return Err(Error::InvalidConfig(format!("{} needs k >= 1", self.bucketing.name())));
            }
            _ => {}
        }
        self.classifier.validate()?;
        self.prefix.validate()
    }

    fn encoding_kind(&self, key: &BucketKey) -> EncodingKind {
        match (self.encoding, key) {
            (SequenceEncoding::Laststate, _) => EncodingKind::LastState,
            (SequenceEncoding::Agg, _) => EncodingKind::Aggregation,
            (SequenceEncoding::Index, BucketKey::Length(l)) => EncodingKind::Index(*l),
            (SequenceEncoding::Index, _) => unreachable!("validated: index encoding only with length buckets"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantReason {
    TooSmall,
    SingleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum BucketEntry {
    Trained {
        space: FeatureSpace,
        standardizer: Option<Standardizer>,
        classifier: TrainedClassifier,
        size: usize,
        positives: usize,
    },
    Constant {
        p: f64,
        reason: ConstantReason,
        size: usize,
        positives: usize,
    },
}

impl BucketEntry {
    pub fn size(&self) -> usize {
        match self {
            BucketEntry::Trained { size, .. } | BucketEntry::Constant { size, .. } => *size,
        }
    }
}

/// Encoded training instances kept for lazy neighbourhood training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnStore {
    pub space: FeatureSpace,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: PipelineConfig,
    pub schema: FilteredSchema,
    pub bucketer: BucketerState,
    /// Sorted by key.
    pub buckets: Vec<(BucketKey, BucketEntry)>,
    /// Training positive ratio, used for prefixes without a bucket.
    pub global_ratio: f64,
    pub knn: Option<KnnStore>,
}

impl TrainedModel {
    pub fn bucket(&self, key: &BucketKey) -> Option<&BucketEntry> {
        self.buckets
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| &self.buckets[i].1)
    }

    /// Adds the configured derived features to a log before prefixing.
    pub fn prepare_log(&self, log: &EventLog) -> EventLog {
        if self.config.time_features {
            derive_time_features(log)
        } else {
            log.clone()
        }
    }

    pub fn summary(&self) -> ModelSummary {
        let buckets = self
            .buckets
            .iter()
            .map(|(key, entry)| {
                let (size, positives, status) = match entry {
                    BucketEntry::Trained { size, positives, .. } => (*size, *positives, "trained".to_owned()),
                    BucketEntry::Constant {
                        size, positives, reason, ..
                    } => (
                        *size,
                        *positives,
                        match reason {
                            ConstantReason::TooSmall => "constant_too_small".to_owned(),
                            ConstantReason::SingleClass => "constant_single_class".to_owned(),
                        },
                    ),
                };
                BucketSummary {
                    key: key.to_string(),
                    size,
                    positives,
                    status,
                }
            })
            .collect();
        ModelSummary {
            method: self.config.method_name(),
            classifier: self.config.classifier,
            bucketing: self.config.bucketing,
            global_ratio: self.global_ratio,
            knn_instances: self.knn.as_ref().map(|s| s.rows.len()),
            buckets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub key: String,
    pub size: usize,
    pub positives: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub method: String,
    pub bucketing: BucketingMethod,
    pub classifier: ClassifierSpec,
    pub global_ratio: f64,
    pub knn_instances: Option<usize>,
    pub buckets: Vec<BucketSummary>,
}

/// Labels and cuts the log, then trains on its prefixes.
pub fn train_offline(log: &EventLog, labeling: &Labeling, config: &PipelineConfig) -> Result<TrainedModel> {
    let (cut, labels) = labeling.resolved(log).apply(log)?;
    train_on_labeled(&cut, &labels, config)
}

/// Trains on an already labeled (and cut) log.
pub fn train_on_labeled(log: &EventLog, labels: &Labels, config: &PipelineConfig) -> Result<TrainedModel> {
    config.validate()?;
    let log = if config.time_features {
        derive_time_features(log)
    } else {
        log.clone()
    };
    let prefixes = build_prefix_log(&log, labels, config.prefix)?;
    fit_on_prefixes(&prefixes, log.schema(), config)
}

const BUCKETER_STREAM: u64 = 0;
const BUCKET_STREAM: u64 = 1;
const KNN_STREAM: u64 = 2;

/// Fits every model component on a prefix log whose events already carry
/// the configured derived features.
pub fn fit_on_prefixes(prefixes: &PrefixLog, attributes: &[AttributeSchema], config: &PipelineConfig) -> Result<TrainedModel> {
    config.validate()?;
    if prefixes.is_empty() {
        return Err(Error::EmptyPrefixLog);
    }
    let schema = fit_level_filter(prefixes, attributes, config.level_filter);
    let bucketer = fit_bucketer(
        config.bucketing,
        prefixes,
        schema.alphabet(),
        derive_seed(config.seed, &[BUCKETER_STREAM]),
    )?;
    let global_ratio = prefixes.positive_ratio();

    if matches!(bucketer, BucketerState::Knn { .. }) {
        let space = FeatureSpace::new(config.encoding_kind(&BucketKey::Single), schema.clone())
            .with_boolean_aggregation(config.boolean_agg);
        let matrix = space.encode_all(&prefixes.instances)?;
        let store = KnnStore {
            rows: (0..matrix.rows()).map(|i| matrix.row(i).to_vec()).collect(),
            labels: matrix.labels(),
            space,
        };
        return Ok(TrainedModel {
            config: config.clone(),
            schema,
            bucketer,
            buckets: Vec::new(),
            global_ratio,
            knn: Some(store),
        });
    }

    let mut groups: BTreeMap<BucketKey, Vec<PrefixInstance>> = BTreeMap::new();
    for p in &prefixes.instances {
        groups.entry(assign_bucket(&bucketer, p)).or_default().push(p.clone());
    }
    let jobs: Vec<(usize, BucketKey, Vec<PrefixInstance>)> =
        groups.into_iter().enumerate().map(|(i, (k, v))| (i, k, v)).collect();
    let fit = |(i, key, members): &(usize, BucketKey, Vec<PrefixInstance>)| -> Result<(BucketKey, BucketEntry)> {
        let seed = derive_seed(config.seed, &[BUCKET_STREAM, *i as u64]);
        let entry = fit_bucket(config, &schema, key, members, seed)?;
        Ok((key.clone(), entry))
    };
    #[cfg(feature = "parallel")]
    let buckets: Result<Vec<_>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(fit).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let buckets: Result<Vec<_>> = jobs.iter().map(fit).collect();

    Ok(TrainedModel {
        config: config.clone(),
        schema,
        bucketer,
        buckets: buckets?,
        global_ratio,
        knn: None,
    })
}

fn fit_bucket(
    config: &PipelineConfig,
    schema: &FilteredSchema,
    key: &BucketKey,
    members: &[PrefixInstance],
    seed: u64,
) -> Result<BucketEntry> {
    let size = members.len();
    let positives = members.iter().filter(|p| p.label).count();
    let ratio = positives as f64 / size as f64;
    if size < config.min_bucket_size {
        return Ok(BucketEntry::Constant {
            p: ratio,
            reason: ConstantReason::TooSmall,
            size,
            positives,
        });
    }
    if positives == 0 || positives == size {
        return Ok(BucketEntry::Constant {
            p: ratio,
            reason: ConstantReason::SingleClass,
            size,
            positives,
        });
    }
    let space = FeatureSpace::new(config.encoding_kind(key), schema.clone()).with_boolean_aggregation(config.boolean_agg);
    let matrix = space.encode_all(members)?;
    let (classifier, standardizer) = train_with_scaling(&config.classifier, matrix, seed)?;
    Ok(BucketEntry::Trained {
        space,
        standardizer,
        classifier,
        size,
        positives,
    })
}

fn train_with_scaling(
    spec: &ClassifierSpec,
    matrix: FeatureMatrix,
    seed: u64,
) -> Result<(TrainedClassifier, Option<Standardizer>)> {
    let labels = matrix.labels();
    if spec.needs_standardizer() {
        let scaler = fit_standardizer(&matrix);
        let scaled = apply_standardizer(&matrix, &scaler);
        let clf = train_classifier(spec, TrainSet::new(&scaled, &labels)?, seed)?;
        Ok((clf, Some(scaler)))
    } else {
        Ok((train_classifier(spec, TrainSet::new(&matrix, &labels)?, seed)?, None))
    }
}

/// Scores a prefix whose events already carry the model's derived features.
pub fn predict_prefix(model: &TrainedModel, prefix: &PrefixInstance) -> Result<f64> {
    if let (Some(store), BucketerState::Knn { alphabet, vectors, k }) = (&model.knn, &model.bucketer) {
        return predict_knn(model, store, alphabet, vectors, *k, prefix);
    }
    let key = assign_bucket(&model.bucketer, prefix);
    match model.bucket(&key) {
        None => Ok(model.global_ratio),
        Some(BucketEntry::Constant { p, .. }) => Ok(*p),
        Some(BucketEntry::Trained {
            space,
            standardizer,
            classifier,
            ..
        }) => {
            let mut row = space.encode(prefix)?;
            if let Some(s) = standardizer {
                s.transform_row(&mut row);
            }
            classifier.predict_row(&row)
        }
    }
}

fn predict_knn(
    model: &TrainedModel,
    store: &KnnStore,
    alphabet: &[String],
    vectors: &[Vec<f64>],
    k: usize,
    prefix: &PrefixInstance,
) -> Result<f64> {
    let query = control_flow_vector(prefix.events(), alphabet);
    let neighbours = knn_select(vectors, &query, k)?;
    let positives = neighbours.iter().filter(|&&i| store.labels[i]).count();
    if positives == 0 || positives == neighbours.len() {
        return Ok(positives as f64 / neighbours.len() as f64);
    }
    let width = store.space.width();
    let mut values = Vec::with_capacity(width * neighbours.len());
    let mut row_meta = Vec::with_capacity(neighbours.len());
    for &i in &neighbours {
        values.extend_from_slice(&store.rows[i]);
        row_meta.push(RowMeta {
            case_id: String::new(),
            length: 0,
            label: store.labels[i],
        });
    }
    let matrix = FeatureMatrix {
        width,
        values,
        row_meta,
    };
    let seed = derive_seed(model.config.seed, &[KNN_STREAM]);
    let (classifier, standardizer) = train_with_scaling(&model.config.classifier, matrix, seed)?;
    let mut row = store.space.encode(prefix)?;
    if let Some(s) = standardizer {
        s.transform_row(&mut row);
    }
    classifier.predict_row(&row)
}

/// Scores a running case given its events so far.
pub fn predict_online(model: &TrainedModel, partial: &Trace) -> Result<f64> {
    let trace = if model.config.time_features {
        derive_trace_time_features(partial)
    } else {
        partial.clone()
    };
    predict_prefix(model, &PrefixInstance::whole(trace, false))
}

const MAGIC: &str = "PXC1\n";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: u32,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct ModelFile {
    model: TrainedModel,
}

/// Writes the `PXC1` header line followed by versioned JSON.
pub fn save_model<W: Write>(model: &TrainedModel, mut sink: W) -> Result<()> {
    sink.write_all(MAGIC.as_bytes())
        .map_err(|e| Error::io("<model sink>", e))?;
    serde_json::to_writer(
        &mut sink,
        &ModelFileRef {
            version: MODEL_VERSION,
            model,
        },
    )?;
    sink.write_all(b"\n").map_err(|e| Error::io("<model sink>", e))?;
    Ok(())
}

pub fn load_model<R: Read>(mut source: R) -> Result<TrainedModel> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| Error::Corrupt(format!("unreadable model file: {e}")))?;
    let body = text
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Corrupt("missing PXC1 header".into()))?;
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::Corrupt(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Corrupt("missing version field".into()))?;
    if version != MODEL_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version.min(u32::MAX as u64) as u32,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_methods() {
        let methods = valid_methods();
        assert_eq!(methods.len(), 11);
        for (b, e) in methods {
            let cfg = PipelineConfig::new(b, e, ClassifierSpec::Logit { c: 1.0 });
            assert!(cfg.validate().is_ok(), "{}", cfg.method_name());
        }
        let bad = PipelineConfig::new(BucketingMethod::Single, SequenceEncoding::Index, ClassifierSpec::Logit { c: 1.0 });
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn corrupt_headers() {
        assert!(matches!(load_model(&b"nope"[..]), Err(Error::Corrupt(_))));
        assert!(matches!(load_model(&b"PXC1\n{\"version\": 1"[..]), Err(Error::Corrupt(_))));
        assert!(matches!(
            load_model(&b"PXC1\n{\"version\": 2, \"model\": {}}"[..]),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }
}
