//! Random forest of Gini-split decision trees, built from scratch.
//!
//! Each tree trains on a bootstrap resample (n draws with replacement) and
//! considers a random subset of `mtry` features per node. Splits are chosen by
//! weighted Gini impurity over candidate thresholds at midpoints between
//! consecutive distinct sorted values; ties break toward the lowest feature
//! index, then the lowest threshold, so training is order-independent. A node
//! splits only when impurity strictly improves. Leaves store (positive, total)
//! weight and predict their positive fraction; the forest predicts the mean
//! leaf fraction over trees.

use super::logreg::sample_weights;
use super::ModelError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, schemars::JsonSchema)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until purity or the leaf-size floor.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features sampled per node; `None` means `floor(sqrt(d))`.
    pub mtry: Option<usize>,
    pub class_weight: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, min_samples_leaf: 1, mtry: None, class_weight: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        positive: f64,
        total: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
}

impl DecisionTree {
    /// Positive-class fraction of the leaf the row lands in.
    pub fn leaf_fraction(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { positive, total } => return positive / total,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
}

impl ForestModel {
    /// Mean leaf fraction across trees.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_fraction(row)).sum();
        sum / self.trees.len() as f64
    }
}

/// Trains the forest; all randomness flows from `seed` through one per-tree
/// substream, so results match across thread counts and row permutations.
pub fn train_forest(x: &[Vec<f64>], y: &[u8], params: &ForestParams, seed: u64) -> Result<ForestModel, ModelError> {
    let n = x.len();
    let d = x[0].len();
    let mtry = params.mtry.unwrap_or_else(|| (d as f64).sqrt().floor() as usize).clamp(1, d);
    let weights = sample_weights(y, params.class_weight);

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| master.random()).collect();
    let trees: Vec<DecisionTree> = tree_seeds
        .into_par_iter()
        .map(|tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            DecisionTree { root: build_node(x, y, &weights, bootstrap, 0, params, mtry, d, &mut rng) }
        })
        .collect();
    Ok(ForestModel { trees, n_features: d })
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
    indices: Vec<usize>,
    depth: usize,
    params: &ForestParams,
    mtry: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let mut positive = 0.0;
    let mut total = 0.0;
    for &i in &indices {
        total += weights[i];
        positive += weights[i] * f64::from(y[i]);
    }
    let leaf = TreeNode::Leaf { positive, total };
    let pure = indices.iter().all(|&i| y[i] == y[indices[0]]);
    let depth_capped = params.max_depth.is_some_and(|m| depth >= m);
    if pure || depth_capped || indices.len() < 2 * params.min_samples_leaf {
        return leaf;
    }

    // Candidate features in ascending order so equal-impurity ties resolve to
    // the lowest feature index regardless of sampling order.
    let mut features = rand::seq::index::sample(rng, d, mtry).into_vec();
    features.sort_unstable();

    let parent_impurity = gini(positive, total);
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    for &f in &features {
        if let Some((impurity, threshold)) = best_split_on_feature(x, y, weights, &indices, f, params.min_samples_leaf)
        {
            // Strict improvement keeps the first (lowest feature, lowest threshold) among ties.
            if best.is_none_or(|(b, _, _)| impurity < b) {
                best = Some((impurity, f, threshold));
            }
        }
    }
    let Some((split_impurity, feature, threshold)) = best else {
        return leaf;
    };
    if parent_impurity - split_impurity <= 0.0 {
        return leaf;
    }
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.into_iter().partition(|&i| x[i][feature] <= threshold);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(build_node(x, y, weights, left_idx, depth + 1, params, mtry, d, rng)),
        right: Box::new(build_node(x, y, weights, right_idx, depth + 1, params, mtry, d, rng)),
    }
}

/// Lowest weighted child impurity on one feature, scanning thresholds at
/// midpoints of consecutive distinct values; `None` when no threshold leaves
/// `min_leaf` raw samples on both sides.
fn best_split_on_feature(
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
    indices: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut vals: Vec<(f64, u8, f64)> = indices.iter().map(|&i| (x[i][feature], y[i], weights[i])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));

    let total_count = vals.len();
    let mut total_pos = 0.0;
    let mut total_w = 0.0;
    for &(_, t, w) in &vals {
        total_w += w;
        total_pos += w * f64::from(t);
    }

    let mut best: Option<(f64, f64)> = None;
    let mut left_pos = 0.0;
    let mut left_w = 0.0;
    for (k, &(value, t, w)) in vals.iter().enumerate().take(total_count - 1) {
        left_pos += w * f64::from(t);
        left_w += w;
        let next = vals[k + 1].0;
        if next == value {
            continue; // only boundaries between distinct values are candidates
        }
        let left_count = k + 1;
        if left_count < min_leaf || total_count - left_count < min_leaf {
            continue;
        }
        let mut threshold = (value + next) / 2.0;
        if threshold >= next {
            threshold = value; // midpoint rounded up between adjacent floats
        }
        let right_pos = total_pos - left_pos;
        let right_w = total_w - left_w;
        let impurity = (left_w * gini(left_pos, left_w) + right_w * gini(right_pos, right_w)) / total_w;
        // Strict `<` keeps the lowest threshold among equal-impurity candidates.
        if best.is_none_or(|(b, _)| impurity < b) {
            best = Some((impurity, threshold));
        }
    }
    best
}

fn gini(positive: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = positive / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}
