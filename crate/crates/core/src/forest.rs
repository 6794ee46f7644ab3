//! Random forest of CART trees with the Gini criterion.
//!
//! Split candidates are compared in exact integer arithmetic: for a binary
//! split the weighted child impurity is minimized exactly when
//! `(r_l^2 + f_l^2) / n_l + (r_r^2 + f_r^2) / n_r` is maximized, and that
//! quantity is a ratio of integers. Ties therefore resolve the same way on
//! every platform.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Label;
use crate::ffrfd::{FeatureRow, FfrFd, Mode};

pub const MODEL_FORMAT: &str = "ffrfd-forest";
pub const MODEL_VERSION: u32 = 1;

/// Gini impurity `1 - p_real^2 - p_fake^2` of a node.
pub fn gini_impurity(n_real: usize, n_fake: usize) -> Result<f64> {
    let n = n_real + n_fake;
    if n == 0 {
        return Err(Error::InvalidArgument("Gini impurity of an empty node".into()));
    }
    let (pr, pf) = (n_real as f64 / n as f64, n_fake as f64 / n as f64);
    Ok(1.0 - pr * pr - pf * pf)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Non-negative rational `num / den`.
#[derive(Clone, Copy, Debug)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn gt(self, other: Ratio) -> bool {
        self.num * other.den > other.num * self.den
    }
}

#[derive(Clone, Copy, Default)]
struct Counts {
    real: u64,
    fake: u64,
}

impl Counts {
    fn add(&mut self, label: Label) {
        match label {
            Label::Real => self.real += 1,
            Label::Fake => self.fake += 1,
        }
    }

    fn total(self) -> u64 {
        self.real + self.fake
    }

    fn sum_sq(self) -> u128 {
        (self.real as u128).pow(2) + (self.fake as u128).pow(2)
    }
}

/// Exact split objective `sum_sq_l / n_l + sum_sq_r / n_r`.
fn split_score(left: Counts, right: Counts) -> Ratio {
    let (nl, nr) = (left.total() as u128, right.total() as u128);
    Ratio {
        num: left.sum_sq() * nr + right.sum_sq() * nl,
        den: nl * nr,
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid > a && mid <= b {
        mid
    } else {
        b
    }
}

/// Row-major sample matrix with labels.
struct Samples<'a> {
    x: &'a [f64],
    n_features: usize,
    labels: &'a [Label],
}

impl Samples<'_> {
    #[inline]
    fn value(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.n_features + f]
    }
}

fn find_split(
    data: &Samples<'_>,
    idx: &[usize],
    candidates: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitCandidate> {
    let m = idx.len();
    let min_leaf = min_samples_leaf.max(1);
    if m < 2 * min_leaf {
        return None;
    }
    let mut parent = Counts::default();
    for &i in idx {
        parent.add(data.labels[i]);
    }
    let parent_score = Ratio {
        num: parent.sum_sq(),
        den: m as u128,
    };

    let mut best: Option<(Ratio, usize, f64)> = None;
    let mut order: Vec<(f64, Label)> = Vec::with_capacity(m);
    for &f in candidates {
        order.clear();
        order.extend(idx.iter().map(|&i| (data.value(i, f), data.labels[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = Counts::default();
        for k in 1..m {
            left.add(order[k - 1].1);
            if k < min_leaf || m - k < min_leaf {
                continue;
            }
            let (a, b) = (order[k - 1].0, order[k].0);
            if a == b {
                continue;
            }
            let right = Counts {
                real: parent.real - left.real,
                fake: parent.fake - left.fake,
            };
            let score = split_score(left, right);
            if !score.gt(parent_score) {
                continue;
            }
            if best.is_none_or(|(s, _, _)| score.gt(s)) {
                best = Some((score, f, midpoint(a, b)));
            }
        }
    }

    best.map(|(score, feature, threshold)| {
        // decrease = (score - parent_score) / m
        let num = score.num * parent_score.den - parent_score.num * score.den;
        let den = score.den * parent_score.den * m as u128;
        SplitCandidate {
            feature,
            threshold,
            impurity_decrease: num as f64 / den as f64,
        }
    })
}

/// Best Gini split over the candidate features.
///
/// Thresholds are midpoints of consecutive distinct values; ties go to the lowest
/// feature index, then the lowest threshold. `None` if no split lowers impurity.
pub fn best_split(
    samples: &[&[f64]],
    labels: &[Label],
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Result<Option<SplitCandidate>> {
    let n_features = samples.first().map_or(0, |s| s.len());
    if samples.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    if samples.iter().any(|s| s.len() != n_features) {
        return Err(Error::Data("samples have different dimensions".into()));
    }
    if let Some(&f) = candidate_features.iter().find(|&&f| f >= n_features) {
        return Err(Error::InvalidArgument(format!(
            "feature {f} out of range for {n_features} features"
        )));
    }
    let x: Vec<f64> = samples.iter().flat_map(|s| s.iter().copied()).collect();
    let data = Samples {
        x: &x,
        n_features,
        labels,
    };
    let mut candidates = candidate_features.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let idx: Vec<usize> = (0..samples.len()).collect();
    Ok(find_split(&data, &idx, &candidates, min_samples_leaf))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        impurity_decrease: f64,
        n_samples: usize,
    },
    Leaf {
        n_real: usize,
        n_fake: usize,
    },
}

/// Flattened tree, root at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> (usize, usize) {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] < *threshold { *left } else { *right },
                TreeNode::Leaf { n_real, n_fake } => return (*n_real, *n_fake),
            }
        }
    }

    /// Fraction of fake training samples in the leaf reached by `x`.
    pub fn predict_fake_fraction(&self, x: &[f64]) -> f64 {
        let (r, f) = self.leaf_for(x);
        f as f64 / (r + f) as f64
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::CorruptModel("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if *feature >= n_features || !threshold.is_finite() {
                        return Err(Error::CorruptModel(format!("node {i} has an invalid split")));
                    }
                    // children are always stored after their parent
                    if *left <= i || *right <= i || *left >= n || *right >= n {
                        return Err(Error::CorruptModel(format!("node {i} has invalid children")));
                    }
                }
                TreeNode::Leaf { n_real, n_fake } => {
                    if n_real + n_fake == 0 {
                        return Err(Error::CorruptModel(format!("leaf {i} is empty")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per node; `None` means `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn resolved_max_features(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }
}

fn build_tree(data: &Samples<'_>, params: &ForestParams, tree_index: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(tree_index);

    let n = data.labels.len();
    let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let n_features = data.n_features;
    let max_features = params.resolved_max_features(n_features);
    let all_features: Vec<usize> = (0..n_features).collect();

    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { n_real: 0, n_fake: 0 }];
    let mut stack = vec![(0usize, boot, 0usize)];
    while let Some((slot, idx, depth)) = stack.pop() {
        let n_fake = idx.iter().filter(|&&i| data.labels[i].is_fake()).count();
        let n_real = idx.len() - n_fake;
        let leaf = TreeNode::Leaf { n_real, n_fake };
        if n_real == 0 || n_fake == 0 || params.max_depth.is_some_and(|d| depth >= d) {
            nodes[slot] = leaf;
            continue;
        }
        let mut candidates: Vec<usize> = sample(&mut rng, n_features, max_features).into_vec();
        candidates.sort_unstable();
        let mut split = find_split(data, &idx, &candidates, params.min_samples_leaf);
        if split.is_none() && max_features < n_features {
            // keep searching past max_features until a valid partition is found
            split = find_split(data, &idx, &all_features, params.min_samples_leaf);
        }
        let Some(split) = split else {
            nodes[slot] = leaf;
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| data.value(i, split.feature) < split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { n_real: 0, n_fake: 0 });
        nodes.push(TreeNode::Leaf { n_real: 0, n_fake: 0 });
        nodes[slot] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            impurity_decrease: split.impurity_decrease,
            n_samples: idx.len(),
        };
        stack.push((right, right_idx, depth + 1));
        stack.push((left, left_idx, depth + 1));
    }
    Tree { nodes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub format: String,
    pub version: u32,
    pub n_features: usize,
    pub params: ForestParams,
    pub detector: Option<String>,
    pub mode: Option<Mode>,
    pub d: Option<usize>,
    pub pattern_seed: Option<u64>,
    pub trees: Vec<Tree>,
}

/// Trains a forest on raw feature vectors.
pub fn train_forest(
    samples: &[&[f64]],
    labels: &[Label],
    params: &ForestParams,
) -> Result<RandomForestModel> {
    if samples.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    if samples.len() < 2 {
        return Err(Error::Data("need at least two training samples".into()));
    }
    let n_features = samples[0].len();
    if n_features == 0 {
        return Err(Error::Data("samples have no features".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != n_features) {
        return Err(Error::Incompatible(format!(
            "sample dimension {} differs from {n_features}",
            bad.len()
        )));
    }
    if samples.iter().flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("training features must be finite".into()));
    }
    let n_fake = labels.iter().filter(|l| l.is_fake()).count();
    if n_fake == 0 || n_fake == labels.len() {
        return Err(Error::Data("training data must contain both classes".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be positive".into()));
    }

    let x: Vec<f64> = samples.iter().flat_map(|s| s.iter().copied()).collect();
    let data = Samples {
        x: &x,
        n_features,
        labels,
    };
    let trees: Vec<Tree> = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| build_tree(&data, params, t))
        .collect();
    Ok(RandomForestModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        n_features,
        params: *params,
        detector: None,
        mode: None,
        d: None,
        pattern_seed: None,
        trees,
    })
}

/// Trains on feature-table rows and records their provenance in the model.
pub fn train_on_rows(
    rows: &[&FeatureRow],
    params: &ForestParams,
    pattern_seed: Option<u64>,
) -> Result<RandomForestModel> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Data("no training rows".into()))?;
    for row in rows {
        let f = &row.features;
        if f.detector != first.features.detector || f.mode != first.features.mode || f.d != first.features.d {
            return Err(Error::Incompatible(format!(
                "row {} ({}/{}/d={}) differs from {} ({}/{}/d={})",
                row.sample_id, f.detector, f.mode, f.d,
                first.sample_id, first.features.detector, first.features.mode, first.features.d
            )));
        }
    }
    let samples: Vec<&[f64]> = rows.iter().map(|r| r.features.values.as_slice()).collect();
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let mut model = train_forest(&samples, &labels, params)?;
    model.detector = Some(first.features.detector.clone());
    model.mode = Some(first.features.mode);
    model.d = Some(first.features.d);
    model.pattern_seed = pattern_seed;
    Ok(model)
}

impl RandomForestModel {
    /// Mean over trees of the fake fraction in the reached leaf.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Incompatible(format!(
                "feature vector has {} dimensions, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let total: f64 = self.trees.iter().map(|t| t.predict_fake_fraction(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Gini importances: per-tree sample-weighted impurity decrease per feature,
    /// normalized per tree, averaged over trees with splits and renormalized.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for tree in &self.trees {
            let mut per_tree = vec![0.0; self.n_features];
            for node in &tree.nodes {
                if let TreeNode::Internal {
                    feature,
                    impurity_decrease,
                    n_samples,
                    ..
                } = node
                {
                    per_tree[*feature] += *n_samples as f64 * impurity_decrease;
                }
            }
            let sum: f64 = per_tree.iter().sum();
            if sum > 0.0 {
                for (t, v) in total.iter_mut().zip(per_tree) {
                    *t += v / sum;
                }
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            for t in &mut total {
                *t /= sum;
            }
        }
        total
    }

    /// Refuses feature vectors built with a different detector, mode or dimension.
    pub fn check_compatible(&self, features: &FfrFd) -> Result<()> {
        if let Some(det) = &self.detector {
            if *det != features.detector {
                return Err(Error::Incompatible(format!(
                    "model was trained on {det} features, got {}",
                    features.detector
                )));
            }
        }
        if let Some(mode) = self.mode {
            if mode != features.mode {
                return Err(Error::Incompatible(format!(
                    "model was trained on {mode} features, got {}",
                    features.mode
                )));
            }
        }
        if let Some(d) = self.d {
            if d != features.d {
                return Err(Error::Incompatible(format!(
                    "model expects descriptor dimension {d}, got {}",
                    features.d
                )));
            }
        }
        if features.values.len() != self.n_features {
            return Err(Error::Incompatible(format!(
                "model expects {} features, got {}",
                self.n_features,
                features.values.len()
            )));
        }
        Ok(())
    }

    pub fn check_pattern_seed(&self, seed: Option<u64>) -> Result<()> {
        match (self.pattern_seed, seed) {
            (Some(a), Some(b)) if a != b => Err(Error::Incompatible(format!(
                "model used sampling pattern seed {a}, features used {b}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::CorruptModel("not a forest model file".into()));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptModel("missing version".into()))?;
        if version != MODEL_VERSION as u64 {
            return Err(Error::Version {
                found: version as u32,
                expected: MODEL_VERSION,
            });
        }
        let model: RandomForestModel =
            serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if model.trees.len() != model.params.n_trees {
            return Err(Error::CorruptModel(format!(
                "{} trees stored, params say {}",
                model.trees.len(),
                model.params.n_trees
            )));
        }
        for tree in &model.trees {
            tree.validate(model.n_features)?;
        }
        Ok(model)
    }
}

pub fn save_model(model: &RandomForestModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RandomForestModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RandomForestModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};
    use Label::{Fake, Real};

    /// Enumerates every feature and midpoint, scoring with rational arithmetic.
    fn exhaustive_split(x: &[Vec<f64>], y: &[Label]) -> Option<(usize, f64, (u128, u128))> {
        let gini_num = |rows: &[usize]| -> (u128, u128) {
            // weighted child term n_c - sum_sq / n_c is minimized; return sum_sq / n_c
            let f = rows.iter().filter(|&&i| y[i] == Fake).count() as u128;
            let r = rows.len() as u128 - f;
            (r * r + f * f, rows.len() as u128)
        };
        let add = |a: (u128, u128), b: (u128, u128)| (a.0 * b.1 + b.0 * a.1, a.1 * b.1);
        let all: Vec<usize> = (0..y.len()).collect();
        let parent = gini_num(&all);
        let mut best: Option<(usize, f64, (u128, u128))> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(|a, b| a.total_cmp(b));
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let left: Vec<usize> = all.iter().copied().filter(|&i| x[i][f] < t).collect();
                let right: Vec<usize> = all.iter().copied().filter(|&i| x[i][f] >= t).collect();
                let s = add(gini_num(&left), gini_num(&right));
                if s.0 * parent.1 <= parent.0 * s.1 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, _, b)) => s.0 * b.1 > b.0 * s.1,
                };
                if better {
                    best = Some((f, t, s));
                }
            }
        }
        best
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity(10, 0).unwrap(), 0.0);
        assert_eq!(gini_impurity(5, 5).unwrap(), 0.5);
        assert_eq!(gini_impurity(3, 1).unwrap(), 0.375);
        assert!(gini_impurity(0, 0).is_err());
    }

    #[test]
    fn perfect_one_dimensional_split() {
        let rows: Vec<[f64; 1]> = vec![[1.0], [2.0], [3.0], [4.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = best_split(&refs, &[Real, Real, Fake, Fake], &[0], 1).unwrap().unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.impurity_decrease, 0.5);
    }

    #[test]
    fn identical_values_have_no_split() {
        let rows = [[3.0, 3.0]; 4];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(best_split(&refs, &[Real, Fake, Real, Fake], &[0, 1], 1).unwrap(), None);
    }

    #[test]
    fn ties_prefer_lowest_feature_then_threshold() {
        // features 1 and 2 both separate perfectly; feature 2 has two equal thresholds
        let rows = [[0.0, 1.0, 5.0], [0.0, 2.0, 6.0], [0.0, 3.0, 7.0], [0.0, 4.0, 8.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = best_split(&refs, &[Real, Real, Fake, Fake], &[2, 1, 0], 1).unwrap().unwrap();
        assert_eq!((s.feature, s.threshold), (1, 2.5));
        // mirrored label patterns score equal; lowest threshold wins
        let rows = [[1.0], [2.0], [3.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = best_split(&refs, &[Real, Fake, Real], &[0], 1).unwrap().unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn split_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let x: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..5).map(|_| rng.random_range(0..6) as f64).collect())
                .collect();
            let y: Vec<Label> = (0..20).map(|_| if rng.random_bool(0.5) { Fake } else { Real }).collect();
            let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            let got = best_split(&refs, &y, &[0, 1, 2, 3, 4], 1).unwrap();
            let want = exhaustive_split(&x, &y);
            assert_eq!(got.map(|s| (s.feature, s.threshold)), want.map(|w| (w.0, w.1)));
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let rows: Vec<[f64; 1]> = (0..6).map(|i| [i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y = [Fake, Real, Real, Real, Real, Real];
        assert_eq!(best_split(&refs, &y, &[0], 1).unwrap().unwrap().threshold, 0.5);
        assert_eq!(best_split(&refs, &y, &[0], 2).unwrap().unwrap().threshold, 1.5);
    }

    fn clusters(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { Real } else { Fake };
            let center = if label == Fake { 3.0 } else { -3.0 };
            x.push((0..dim).map(|_| center + noise.sample(&mut rng)).collect());
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_clusters_are_fit_exactly() {
        let (x, y) = clusters(200, 256, 1);
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let params = ForestParams { n_trees: 50, ..Default::default() };
        let model = train_forest(&refs, &y, &params).unwrap();
        for (row, label) in refs.iter().zip(&y) {
            let p = model.predict_proba(row).unwrap();
            assert_eq!(p > 0.5, label.is_fake());
        }
        let imp = model.feature_importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn same_seed_gives_identical_model() {
        let (x, y) = clusters(60, 8, 2);
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let params = ForestParams { n_trees: 20, seed: 9, ..Default::default() };
        let a = train_forest(&refs, &y, &params).unwrap().to_json();
        let b = train_forest(&refs, &y, &params).unwrap().to_json();
        assert_eq!(a, b);
        let c = train_forest(&refs, &y, &ForestParams { seed: 10, ..params }).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn trees_fit_their_bootstrap_without_conflicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..80).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<Label> = (0..80).map(|_| if rng.random_bool(0.5) { Fake } else { Real }).collect();
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let model = train_forest(&refs, &y, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
        for tree in &model.trees {
            for node in &tree.nodes {
                if let TreeNode::Leaf { n_real, n_fake } = node {
                    assert!(*n_real == 0 || *n_fake == 0);
                }
            }
        }
    }

    #[test]
    fn single_class_training_is_rejected() {
        let rows = [[1.0], [2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(train_forest(&refs, &[Real, Real], &ForestParams::default()).is_err());
        let ragged: Vec<&[f64]> = vec![&[1.0], &[1.0, 2.0]];
        assert!(matches!(
            train_forest(&ragged, &[Real, Fake], &ForestParams::default()),
            Err(Error::Incompatible(_))
        ));
    }

    fn stump_model(n_real: usize, n_fake: usize) -> RandomForestModel {
        RandomForestModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            n_features: 8,
            params: ForestParams { n_trees: 1, ..Default::default() },
            detector: None,
            mode: None,
            d: None,
            pattern_seed: None,
            trees: vec![Tree { nodes: vec![TreeNode::Leaf { n_real, n_fake }] }],
        }
    }

    #[test]
    fn pure_leaf_forests_predict_extremes() {
        assert_eq!(stump_model(0, 5).predict_proba(&[0.0; 8]).unwrap(), 1.0);
        assert_eq!(stump_model(5, 0).predict_proba(&[0.0; 8]).unwrap(), 0.0);
        assert!(stump_model(5, 0).predict_proba(&[0.0; 7]).is_err());
    }

    #[test]
    fn prediction_matches_manual_traversal() {
        let (x, y) = clusters(40, 4, 3);
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let model = train_forest(&refs, &y, &ForestParams { n_trees: 7, ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-6.0..6.0)).collect();
            let mut total = 0.0;
            for tree in &model.trees {
                let mut i = 0;
                let (r, f) = loop {
                    match &tree.nodes[i] {
                        TreeNode::Internal { feature, threshold, left, right, .. } => {
                            i = if q[*feature] < *threshold { *left } else { *right };
                        }
                        TreeNode::Leaf { n_real, n_fake } => break (*n_real, *n_fake),
                    }
                };
                total += f as f64 / (r + f) as f64;
            }
            let p = model.predict_proba(&q).unwrap();
            assert_eq!(p, total / 7.0);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn single_split_importance() {
        let mut model = stump_model(1, 1);
        model.trees[0].nodes = vec![
            TreeNode::Internal { feature: 7, threshold: 0.5, left: 1, right: 2, impurity_decrease: 0.5, n_samples: 4 },
            TreeNode::Leaf { n_real: 2, n_fake: 0 },
            TreeNode::Leaf { n_real: 0, n_fake: 2 },
        ];
        let imp = model.feature_importances();
        assert_eq!(imp[7], 1.0);
        assert!(imp[..7].iter().all(|&v| v == 0.0));
        assert!(stump_model(1, 1).feature_importances().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_node_importance_by_hand() {
        // root: 6 samples (3r, 3f) on feature 0 -> left (3r, 1f), right (0r, 2f)
        // left: 4 samples on feature 2 -> pure
        let root_dec = 0.5 - (4.0 / 6.0) * 0.375;
        let left_dec = 0.375;
        let mut model = stump_model(1, 1);
        model.n_features = 3;
        model.trees[0].nodes = vec![
            TreeNode::Internal { feature: 0, threshold: 1.0, left: 1, right: 2, impurity_decrease: root_dec, n_samples: 6 },
            TreeNode::Internal { feature: 2, threshold: 1.0, left: 3, right: 4, impurity_decrease: left_dec, n_samples: 4 },
            TreeNode::Leaf { n_real: 0, n_fake: 2 },
            TreeNode::Leaf { n_real: 3, n_fake: 0 },
            TreeNode::Leaf { n_real: 0, n_fake: 1 },
        ];
        // weighted: root 6 * 0.25 = 1.5, left 4 * 0.375 = 1.5
        let imp = model.feature_importances();
        assert!((imp[0] - 0.5).abs() < 1e-15);
        assert_eq!(imp[1], 0.0);
        assert!((imp[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn model_file_round_trip_is_byte_identical() {
        let (x, y) = clusters(50, 6, 5);
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let mut model = train_forest(&refs, &y, &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        model.detector = Some("orb".into());
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        save_model(&model, &p1).unwrap();
        let loaded = load_model(&p1).unwrap();
        assert_eq!(loaded, model);
        save_model(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert!(load_model("").is_err());
    }

    #[test]
    fn version_and_corruption_are_detected() {
        let model = stump_model(1, 2);
        let text = model.to_json().replace("\"version\":1", "\"version\":2");
        assert!(matches!(RandomForestModel::from_json(&text), Err(Error::Version { found: 2, .. })));
        let text = model.to_json().replace("\"n_fake\":2", "\"n_fake\":\"x\"");
        assert!(matches!(RandomForestModel::from_json(&text), Err(Error::CorruptModel(_))));
        assert!(RandomForestModel::from_json("{").is_err());
    }

    #[test]
    fn mismatched_detector_is_refused() {
        let mut model = stump_model(1, 1);
        model.n_features = 1024;
        model.detector = Some("orb".into());
        model.d = Some(32);
        let sift = FfrFd::new(vec![0.0; 1024], Mode::NoAve, "sift", 128).unwrap();
        let err = model.check_compatible(&sift).unwrap_err();
        assert!(err.is_compatibility());
        assert!(err.to_string().contains("orb"));
    }
}
