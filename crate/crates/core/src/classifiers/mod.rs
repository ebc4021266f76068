//! Binary probabilistic classifiers and hyperparameter search.

pub mod logit;
pub mod search;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::encoding::FeatureMatrix;
use crate::error::{Error, Result};

pub use logit::{fit_logit, logit_loss, logit_loss_and_grad, LogitFit, LogitParams};
pub use search::{random_search_cv, FoldGrouping, SearchOutcome, SearchSpace, TrialResult};
pub use tree::{fit_forest, fit_tree, DecisionTree, ForestParams, Node, TreeParams};

/// Mixes a base seed with a path of indices into an independent seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Design matrix with one label per row.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [bool],
}

impl<'a> TrainSet<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &'a [bool]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyPrefixLog);
        }
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                actual: x.rows(),
            });
        }
        Ok(TrainSet { x, y })
    }

    pub fn positive_ratio(&self) -> f64 {
        self.y.iter().filter(|&&l| l).count() as f64 / self.y.len() as f64
    }

    fn single_class(&self) -> bool {
        self.y.iter().all(|&l| l == self.y[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logit,
    Dtree,
    Rforest,
}

impl ClassifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Logit => "logit",
            ClassifierKind::Dtree => "dtree",
            ClassifierKind::Rforest => "rforest",
        }
    }

    /// Hyperparameters used when no search is run.
    pub fn default_spec(&self) -> ClassifierSpec {
        match self {
            ClassifierKind::Logit => ClassifierSpec::Logit { c: 1.0 },
            ClassifierKind::Dtree => ClassifierSpec::Dtree { max_depth: 10 },
            ClassifierKind::Rforest => ClassifierSpec::Rforest {
                n_estimators: 100,
                max_features: 0.5,
            },
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(ClassifierKind::Logit),
            "dtree" => Ok(ClassifierKind::Dtree),
            "rforest" => Ok(ClassifierKind::Rforest),
            other => Err(Error::InvalidConfig(format!("unknown classifier `{other}`"))),
        }
    }
}

/// A classifier kind with concrete hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Logit { c: f64 },
    Dtree { max_depth: usize },
    Rforest { n_estimators: usize, max_features: f64 },
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Logit { .. } => ClassifierKind::Logit,
            ClassifierSpec::Dtree { .. } => ClassifierKind::Dtree,
            ClassifierSpec::Rforest { .. } => ClassifierKind::Rforest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ClassifierSpec::Logit { c } => c.is_finite() && c > 0.0,
            ClassifierSpec::Dtree { max_depth } => max_depth >= 1,
            ClassifierSpec::Rforest {
                n_estimators,
                max_features,
            } => n_estimators >= 1 && max_features > 0.0 && max_features <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid classifier hyperparameters {self:?}")))
        }
    }

    /// Logistic regression expects standardised inputs.
    pub fn needs_standardizer(&self) -> bool {
        matches!(self, ClassifierSpec::Logit { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedClassifier {
    Logit { weights: Vec<f64>, bias: f64 },
    Dtree { tree: DecisionTree },
    Rforest { trees: Vec<DecisionTree> },
    Constant { p: f64 },
}

impl TrainedClassifier {
    /// Input width the classifier was trained on; `None` for constants.
    pub fn width(&self) -> Option<usize> {
        match self {
            TrainedClassifier::Logit { weights, .. } => Some(weights.len()),
            TrainedClassifier::Dtree { tree } => Some(tree.n_features),
            TrainedClassifier::Rforest { trees } => trees.first().map(|t| t.n_features),
            TrainedClassifier::Constant { .. } => None,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if let Some(w) = self.width() {
            if w != row.len() {
                return Err(Error::WidthMismatch {
                    expected: w,
                    actual: row.len(),
                });
            }
        }
        let p = match self {
            TrainedClassifier::Logit { weights, bias } => {
                let z: f64 = weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + bias;
                logit::sigmoid(z)
            }
            TrainedClassifier::Dtree { tree } => tree.predict_row(row),
            TrainedClassifier::Rforest { trees } => {
                trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
            }
            TrainedClassifier::Constant { p } => *p,
        };
        Ok(if p.is_nan() { 0.5 } else { p.clamp(0.0, 1.0) })
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if let Some(w) = self.width() {
            if w != x.width {
                return Err(Error::WidthMismatch {
                    expected: w,
                    actual: x.width,
                });
            }
        }
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

pub fn train_logit(set: TrainSet<'_>, params: LogitParams) -> TrainedClassifier {
    if set.single_class() {
        return TrainedClassifier::Constant { p: set.positive_ratio() };
    }
    let fit = fit_logit(set.x, set.y, params);
    TrainedClassifier::Logit {
        weights: fit.weights,
        bias: fit.bias,
    }
}

pub fn train_dtree(set: TrainSet<'_>, params: TreeParams, seed: u64) -> TrainedClassifier {
    TrainedClassifier::Dtree {
        tree: fit_tree(set.x, set.y, params, seed),
    }
}

pub fn train_rforest(set: TrainSet<'_>, params: ForestParams, seed: u64) -> TrainedClassifier {
    TrainedClassifier::Rforest {
        trees: fit_forest(set.x, set.y, params, seed),
    }
}

pub fn train_classifier(spec: &ClassifierSpec, set: TrainSet<'_>, seed: u64) -> Result<TrainedClassifier> {
    spec.validate()?;
    Ok(match *spec {
        ClassifierSpec::Logit { c } => train_logit(set, LogitParams::new(c)),
        ClassifierSpec::Dtree { max_depth } => train_dtree(set, TreeParams::with_depth(max_depth), seed),
        ClassifierSpec::Rforest {
            n_estimators,
            max_features,
        } => train_rforest(set, ForestParams::new(n_estimators, max_features), seed),
    })
}
