//! Seeded random hyperparameter search with grouped cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ClassifierSpec};
use crate::bucketing::BucketingMethod;
use crate::error::{Error, Result};
use crate::evaluation::roc_auc;
use crate::event_log::AttributeSchema;
use crate::pipeline::{fit_on_prefixes, predict_prefix, PipelineConfig};
use crate::prefixing::PrefixLog;

/// Sampling ranges, all bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    /// Random-forest feature fraction, drawn from `(lo, hi]`.
    pub rf_max_features: (f64, f64),
    /// Logistic regression uses `C = 2^x` for integer `x` in this range.
    pub logit_c_log2: (i32, i32),
    pub dtree_max_depth: (usize, usize),
    pub kmeans_k: (usize, usize),
    pub knn_k: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            rf_max_features: (0.0, 1.0),
            logit_c_log2: (-15, 15),
            dtree_max_depth: (4, 30),
            kmeans_k: (2, 50),
            knn_k: (2, 50),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (flo, fhi) = self.rf_max_features;
        let ok = (0.0..=1.0).contains(&flo)
            && flo < fhi
            && fhi <= 1.0
            && self.logit_c_log2.0 <= self.logit_c_log2.1
            && 1 <= self.dtree_max_depth.0
            && self.dtree_max_depth.0 <= self.dtree_max_depth.1
            && 1 <= self.kmeans_k.0
            && self.kmeans_k.0 <= self.kmeans_k.1
            && 1 <= self.knn_k.0
            && self.knn_k.0 <= self.knn_k.1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid search space {self:?}")))
        }
    }

    /// Draws the template's tunable parameters; the classifier parameter is
    /// drawn first, then the bucketing parameter.
    pub fn sample(&self, template: &PipelineConfig, rng: &mut ChaCha8Rng) -> PipelineConfig {
        let mut cfg = template.clone();
        cfg.classifier = match template.classifier {
            ClassifierSpec::Logit { .. } => {
                let x = rng.gen_range(self.logit_c_log2.0..=self.logit_c_log2.1);
                ClassifierSpec::Logit { c: 2f64.powi(x) }
            }
            ClassifierSpec::Dtree { .. } => ClassifierSpec::Dtree {
                max_depth: rng.gen_range(self.dtree_max_depth.0..=self.dtree_max_depth.1),
            },
            ClassifierSpec::Rforest { n_estimators, .. } => {
                let (lo, hi) = self.rf_max_features;
                // 1 - U[0,1) lies in (0, 1], so the lower bound is excluded.
                let u = 1.0 - rng.gen::<f64>();
                ClassifierSpec::Rforest {
                    n_estimators,
                    max_features: lo + (hi - lo) * u,
                }
            }
        };
        cfg.bucketing = match template.bucketing {
            BucketingMethod::Cluster { .. } => BucketingMethod::Cluster {
                k: rng.gen_range(self.kmeans_k.0..=self.kmeans_k.1),
            },
            BucketingMethod::Knn { .. } => BucketingMethod::Knn {
                k: rng.gen_range(self.knn_k.0..=self.knn_k.1),
            },
            other => other,
        };
        cfg
    }
}

/// How prefixes are assigned to folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldGrouping {
    /// All prefixes of a case share a fold.
    #[default]
    Case,
    /// Prefixes are assigned independently.
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: PipelineConfig,
    /// `None` for folds whose held-out part is single-class.
    pub fold_aucs: Vec<Option<f64>>,
    pub mean_auc: Option<f64>,
    /// Set when fitting failed for this trial.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: PipelineConfig,
    pub trials: Vec<TrialResult>,
}

/// Fold index of every prefix.
pub fn assign_folds(prefixes: &PrefixLog, folds: usize, grouping: FoldGrouping, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match grouping {
        FoldGrouping::Case => {
            let mut cases: Vec<&str> = prefixes.case_ids().into_iter().collect();
            cases.shuffle(&mut rng);
            let fold_of: BTreeMap<&str, usize> = cases.into_iter().enumerate().map(|(i, c)| (c, i % folds)).collect();
            prefixes.instances.iter().map(|p| fold_of[p.case_id()]).collect()
        }
        FoldGrouping::Prefix => {
            let mut order: Vec<usize> = (0..prefixes.len()).collect();
            order.shuffle(&mut rng);
            let mut out = vec![0; prefixes.len()];
            for (i, idx) in order.into_iter().enumerate() {
                out[idx] = i % folds;
            }
            out
        }
    }
}

const FOLD_STREAM: u64 = 0;
const TRIAL_STREAM: u64 = 1;

/// Picks the configuration with the highest mean held-out AUC over
/// `n_trials` sampled configurations; ties go to the earliest trial.
#[allow(clippy::too_many_arguments)]
pub fn random_search_cv(
    prefixes: &PrefixLog,
    attributes: &[AttributeSchema],
    template: &PipelineConfig,
    space: &SearchSpace,
    n_trials: usize,
    folds: usize,
    grouping: FoldGrouping,
    seed: u64,
) -> Result<SearchOutcome> {
    if n_trials == 0 || folds < 2 {
        return Err(Error::InvalidConfig("search needs n_trials >= 1 and folds >= 2".into()));
    }
    space.validate()?;
    template.validate()?;
    if !prefixes.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let fold_of = assign_folds(prefixes, folds, grouping, derive_seed(seed, &[FOLD_STREAM]));
    let mut trials = Vec::with_capacity(n_trials);
    let mut first_error = None;
    for t in 0..n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TRIAL_STREAM, t as u64]));
        let config = space.sample(template, &mut rng);
        match cross_validate(prefixes, attributes, &config, &fold_of, folds) {
            Ok(fold_aucs) => {
                let present: Vec<f64> = fold_aucs.iter().flatten().copied().collect();
                let mean_auc = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
                trials.push(TrialResult {
                    config,
                    fold_aucs,
                    mean_auc,
                    error: None,
                });
            }
            Err(e) => {
                let msg = e.to_string();
                first_error.get_or_insert(e);
                trials.push(TrialResult {
                    config,
                    fold_aucs: Vec::new(),
                    mean_auc: None,
                    error: Some(msg),
                });
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, trial) in trials.iter().enumerate() {
        if trial.error.is_some() {
            continue;
        }
        let score = trial.mean_auc.unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    match best {
        Some((i, _)) => Ok(SearchOutcome {
            best: trials[i].config.clone(),
            trials,
        }),
        None => Err(first_error.expect("every trial failed")),
    }
}

fn cross_validate(
    prefixes: &PrefixLog,
    attributes: &[AttributeSchema],
    config: &PipelineConfig,
    fold_of: &[usize],
    folds: usize,
) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let mut train = PrefixLog {
            instances: Vec::new(),
            params: prefixes.params,
        };
        let mut held_out = Vec::new();
        for (p, &fold) in prefixes.instances.iter().zip(fold_of) {
            if fold == f {
                held_out.push(p);
            } else {
                train.instances.push(p.clone());
            }
        }
        if train.is_empty() || held_out.is_empty() {
            out.push(None);
            continue;
        }
        let model = fit_on_prefixes(&train, attributes, config)?;
        let scores = held_out.iter().map(|p| predict_prefix(&model, p)).collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = held_out.iter().map(|p| p.label).collect();
        out.push(roc_auc(&scores, &labels).ok());
    }
    Ok(out)
}
