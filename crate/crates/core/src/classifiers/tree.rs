//! CART decision trees (Gini impurity) and bagged random forests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::encoding::FeatureMatrix;

/// Flat node layout: children are indices into the node vector; samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        score: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { score } => return *score,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        TreeParams {
            max_depth: Some(max_depth),
            min_leaf: 1,
            max_features: None,
        }
    }

    pub fn unlimited() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

const SCORE_EPS: f64 = 1e-12;

struct Candidate {
    /// `Σ_child (pos² + neg²) / size`; larger means lower weighted Gini.
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(best) => {
                if self.score > best.score + SCORE_EPS {
                    true
                } else if self.score < best.score - SCORE_EPS {
                    false
                } else {
                    (self.feature, self.threshold) < (best.feature, best.threshold)
                }
            }
        }
    }
}

/// Grows a tree on the rows listed in `sample` (duplicates allowed).
pub fn grow_tree(x: &FeatureMatrix, y: &[bool], sample: Vec<usize>, params: TreeParams, rng: &mut ChaCha8Rng) -> DecisionTree {
    let width = x.width;
    let mut nodes = vec![Node::Leaf { score: 0.0 }];
    let mut stack = vec![(0usize, sample, 0usize)];
    let mut features: Vec<usize> = (0..width).collect();
    let mut pairs: Vec<(f64, bool)> = Vec::new();

    while let Some((slot, rows, depth)) = stack.pop() {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| y[r]).count();
        let score = if n == 0 { 0.0 } else { pos as f64 / n as f64 };
        let depth_left = params.max_depth.is_none_or(|d| depth < d);
        if pos == 0 || pos == n || !depth_left || n < 2 * params.min_leaf.max(1) {
            nodes[slot] = Node::Leaf { score };
            continue;
        }

        let limit = params.max_features.map_or(width, |m| m.clamp(1, width.max(1)));
        if limit < width {
            features.shuffle(rng);
        } else {
            features.sort_unstable();
        }

        let mut best: Option<Candidate> = None;
        for (examined, &f) in features.iter().enumerate() {
            if examined >= limit && best.is_some() {
                break;
            }
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (x.row(r)[f], y[r])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let (mut lp, mut ln) = (0usize, 0usize);
            let (tp, tn) = (pos, n - pos);
            for i in 0..n - 1 {
                if pairs[i].1 {
                    lp += 1;
                } else {
                    ln += 1;
                }
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let left = i + 1;
                if left < params.min_leaf || n - left < params.min_leaf {
                    continue;
                }
                let (rp, rn) = (tp - lp, tn - ln);
                let s = ((lp * lp + ln * ln) as f64) / left as f64 + ((rp * rp + rn * rn) as f64) / (n - left) as f64;
                let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                let cand = Candidate {
                    score: s,
                    feature: f,
                    threshold,
                };
                if cand.beats(&best) {
                    best = Some(cand);
                }
            }
        }

        let Some(split) = best else {
            nodes[slot] = Node::Leaf { score };
            continue;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x.row(r)[split.feature] <= split.threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { score: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { score: 0.0 });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    DecisionTree {
        n_features: width,
        nodes,
    }
}

pub fn fit_tree(x: &FeatureMatrix, y: &[bool], params: TreeParams, seed: u64) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grow_tree(x, y, (0..y.len()).collect(), params, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// Fraction of features examined per split, in `(0, 1]`.
    pub max_features: f64,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn new(n_estimators: usize, max_features: f64) -> Self {
        ForestParams {
            n_estimators,
            max_features,
            bootstrap: true,
        }
    }
}

/// Fully grown trees on bootstrap samples; tree `i` draws from its own
/// seeded stream so the result does not depend on scheduling.
pub fn fit_forest(x: &FeatureMatrix, y: &[bool], params: ForestParams, seed: u64) -> Vec<DecisionTree> {
    let frac = params.max_features.clamp(f64::MIN_POSITIVE, 1.0);
    let per_split = ((frac * x.width as f64).ceil() as usize).max(1);
    let tree_params = TreeParams {
        max_depth: None,
        min_leaf: 1,
        max_features: Some(per_split),
    };
    let n = y.len();
    let grow = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
        let sample: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow_tree(x, y, sample, tree_params, &mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..params.n_estimators).into_par_iter().map(grow).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..params.n_estimators).map(grow).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_input_is_single_leaf() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]);
        let t = fit_tree(&x, &[true, true], TreeParams::unlimited(), 0);
        assert_eq!(t.nodes, [Node::Leaf { score: 1.0 }]);
    }

    #[test]
    fn xor_depth_two() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let y = [false, true, true, false];
        let t = fit_tree(&x, &y, TreeParams::with_depth(2), 0);
        for i in 0..4 {
            assert_eq!(t.predict_row(x.row(i)) > 0.5, y[i]);
        }
        // Every root split is worthless; the tie goes to feature 0.
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn leaf_score_is_positive_fraction() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]);
        let t = fit_tree(&x, &[true, true, true, false], TreeParams::unlimited(), 0);
        assert_eq!(t.predict_row(&[1.0]), 0.75);
    }

    #[test]
    fn midpoint_between_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = FeatureMatrix::from_rows(&[vec![a], vec![b]]);
        let t = fit_tree(&x, &[false, true], TreeParams::unlimited(), 0);
        assert_eq!(t.predict_row(&[a]), 0.0);
        assert_eq!(t.predict_row(&[b]), 1.0);
    }

    #[test]
    fn min_leaf_respected() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let params = TreeParams {
            max_depth: None,
            min_leaf: 2,
            max_features: None,
        };
        let t = fit_tree(&x, &[false, true, true, true], params, 0);
        assert_eq!(t.leaves(), 2);
        assert_eq!(t.predict_row(&[0.0]), 0.5);
    }

    #[test]
    fn forest_identical_rows() {
        let x = FeatureMatrix::from_rows(&vec![vec![3.0, 3.0]; 8]);
        let y = [true, false, true, false, false, false, true, false];
        let trees = fit_forest(&x, &y, ForestParams { bootstrap: false, ..ForestParams::new(5, 0.5) }, 1);
        for t in &trees {
            assert_eq!(t.predict_row(&[3.0, 3.0]), 3.0 / 8.0);
        }
    }
}
