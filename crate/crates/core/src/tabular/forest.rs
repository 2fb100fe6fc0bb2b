//! Random forest of CART classification trees (Gini impurity, bootstrap
//! samples, random feature subsets per node).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, LabeledDataset, Result, TabularError};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌈√d⌉` candidate features per node.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            MaxFeatures::All => d,
            MaxFeatures::Count(m) => m.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; index 0 is the root. `x[feature] <= threshold` goes
/// left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
    /// Seed each tree's bootstrap and feature draws were made from.
    pub tree_seeds: Vec<u64>,
    pub feature_importances: Vec<f64>,
    pub n_features: usize,
    pub n_classes: usize,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct Builder<'a> {
    ds: &'a LabeledDataset,
    cfg: &'a ForestConfig,
    n_candidates: usize,
    total: f64,
    nodes: Vec<TreeNode>,
    /// Weighted Gini decrease accumulated per feature.
    decrease: Vec<f64>,
    rng: ChaCha8Rng,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
    n_left: usize,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.ds.n_classes()];
        for &i in idx {
            c[self.ds.labels[i]] += 1;
        }
        c
    }

    fn best_split(&mut self, idx: &mut [usize], parent_gini: f64) -> Option<BestSplit> {
        let d = self.ds.n_features();
        let k = self.ds.n_classes();
        let n = idx.len();
        let mut candidates = sample(&mut self.rng, d, self.n_candidates).into_vec();
        candidates.sort_unstable();
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0usize; k];
        let mut right = vec![0usize; k];
        for feature in candidates {
            let x = &self.ds.features;
            idx.sort_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]));
            left.iter_mut().for_each(|c| *c = 0);
            right.iter_mut().for_each(|c| *c = 0);
            for &i in idx.iter() {
                right[self.ds.labels[i]] += 1;
            }
            for pos in 1..n {
                let moved = self.ds.labels[idx[pos - 1]];
                left[moved] += 1;
                right[moved] -= 1;
                let (a, b) = (x[[idx[pos - 1], feature]], x[[idx[pos], feature]]);
                if a == b {
                    continue;
                }
                let (nl, nr) = (pos, n - pos);
                let child = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let decrease = parent_gini - child;
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        decrease,
                        n_left: nl,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let node = self.nodes.len();
        let counts = self.class_counts(idx);
        let n = idx.len();
        self.nodes.push(TreeNode::Leaf {
            class: majority(&counts),
        });
        let g = gini(&counts, n);
        let depth_ok = self.cfg.max_depth.is_none_or(|m| depth < m);
        if g == 0.0 || !depth_ok || n < self.cfg.min_samples_split.max(2) {
            return node;
        }
        let Some(split) = self.best_split(idx, g) else {
            return node;
        };
        self.decrease[split.feature] += n as f64 / self.total * split.decrease;
        // re-sort on the chosen feature to partition
        let x = &self.ds.features;
        idx.sort_by(|&a, &b| x[[a, split.feature]].total_cmp(&x[[b, split.feature]]));
        let (l, r) = idx.split_at_mut(split.n_left);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        node
    }
}

fn build_tree(ds: &LabeledDataset, cfg: &ForestConfig, seed: u64) -> (DecisionTree, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ds.n_samples();
    let mut idx: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut b = Builder {
        ds,
        cfg,
        n_candidates: cfg.max_features.resolve(ds.n_features()),
        total: idx.len() as f64,
        nodes: Vec::new(),
        decrease: vec![0.0; ds.n_features()],
        rng,
    };
    b.grow(&mut idx, 0);
    (DecisionTree { nodes: b.nodes }, b.decrease)
}

/// Fit `n_trees` trees in parallel; tree `t` draws from `derive_seed(seed, t)`
/// so the model is identical to a sequential build.
pub fn train_forest(ds: &LabeledDataset, cfg: &ForestConfig) -> Result<ForestModel> {
    if cfg.n_trees == 0 {
        return Err(TabularError::InvalidConfig(
            "n_trees must be at least 1".into(),
        ));
    }
    let d = ds.n_features();
    let tree_seeds: Vec<u64> = (0..cfg.n_trees as u64)
        .map(|t| derive_seed(cfg.seed, t))
        .collect();
    let built: Vec<(DecisionTree, Vec<f64>)> = tree_seeds
        .par_iter()
        .map(|&s| build_tree(ds, cfg, s))
        .collect();
    let mut total = vec![0.0; d];
    for (_, dec) in &built {
        for (t, v) in total.iter_mut().zip(dec) {
            *t += v;
        }
    }
    let sum: f64 = total.iter().sum();
    let feature_importances = if sum > 0.0 {
        total.iter().map(|v| v / sum).collect()
    } else {
        // no split anywhere (e.g. single-label data)
        vec![1.0 / d as f64; d]
    };
    Ok(ForestModel {
        config: *cfg,
        trees: built.into_iter().map(|(t, _)| t).collect(),
        tree_seeds,
        feature_importances,
        n_features: d,
        n_classes: ds.n_classes(),
    })
}

pub fn feature_importances(m: &ForestModel) -> &[f64] {
    &m.feature_importances
}

impl ForestModel {
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut v = vec![0; self.n_classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }
}

impl Classifier for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, x: &[f64]) -> usize {
        majority(&self.votes(x))
    }
}
