//! Random forest of Gini-split CART trees with soft (leaf positive-fraction) output.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hashing::keyed_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means ⌊√n_features⌋.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(seed: u64) -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 16,
            min_samples_leaf: 5,
            max_features: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        positive_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by `row` (`x <= threshold` goes left).
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { positive_fraction } => return *positive_fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_features: usize,
    /// Columns passed through `sign(x)·log1p(|x|)` before training and scoring.
    pub log1p_columns: Vec<usize>,
    pub trees: Vec<Tree>,
}

fn squash(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
    config: &'a ForestConfig,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    buf: Vec<(f64, u8)>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        self.nodes.push(Node::Leaf {
            positive_fraction: pos as f64 / idx.len() as f64,
        });
        self.nodes.len() - 1
    }

    /// Best `(feature, threshold)` among `mtry` random features, if any split
    /// lowers the weighted Gini impurity.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.labels[i] == 1).count() as f64;
        let parent = gini(total_pos, n as f64);
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let feats = sample(&mut self.rng, self.columns.len(), self.mtry).into_vec();
        for f in feats {
            let col = &self.columns[f];
            self.buf.clear();
            self.buf.extend(idx.iter().map(|&i| (col[i], self.labels[i])));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0.0;
            for k in 0..n - 1 {
                left_pos += self.buf[k].1 as f64;
                let n_left = k + 1;
                if n_left < min_leaf || n - n_left < min_leaf || self.buf[k].0 == self.buf[k + 1].0 {
                    continue;
                }
                let nl = n_left as f64;
                let nr = (n - n_left) as f64;
                let score = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n as f64;
                if best.map_or(true, |(b, _, _)| score < b) {
                    let (lo, hi) = (self.buf[k].0, self.buf[k + 1].0);
                    let mut t = lo + (hi - lo) / 2.0;
                    if t >= hi {
                        t = lo;
                    }
                    best = Some((score, f, t));
                }
            }
        }
        match best {
            Some((score, f, t)) if score < parent - 1e-12 => Some((f, t)),
            _ => None,
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        let pure = pos == 0 || pos == idx.len();
        if pure || depth >= self.config.max_depth || idx.len() < 2 * self.config.min_samples_leaf.max(1) {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let col = &self.columns[feature];
        idx.sort_by(|&a, &b| (col[a] > threshold).cmp(&(col[b] > threshold)));
        let n_left = idx.iter().filter(|&&i| col[i] <= threshold).count();
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { positive_fraction: 0.0 });
        let (l, r) = idx.split_at_mut(n_left);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Fit a forest on `rows` (all of equal length) and 0/1 `labels`.
pub fn train_forest(rows: &[Vec<f64>], labels: &[u8], config: &ForestConfig, log1p_columns: &[usize]) -> Result<ForestModel> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if config.n_trees == 0 || config.max_depth == 0 {
        return Err(Error::InvalidArgument("n_trees and max_depth must be positive".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let n_features = rows[0].len();
    if n_features == 0 || rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::SchemaMismatch {
            expected: format!("{n_features} features in every row"),
            got: "ragged rows".into(),
        });
    }
    if let Some(&c) = log1p_columns.iter().find(|&&c| c >= n_features) {
        return Err(Error::InvalidArgument(format!("log1p column {c} out of range")));
    }
    let mut columns: Vec<Vec<f64>> = (0..n_features).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
    for &c in log1p_columns {
        columns[c].iter_mut().for_each(|x| *x = squash(*x));
    }
    let mtry = config
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
        .clamp(1, n_features);
    let n = rows.len();

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = keyed_rng(config.seed, "tree", t as u64);
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder {
                columns: &columns,
                labels,
                config,
                mtry,
                rng,
                nodes: Vec::new(),
                buf: Vec::with_capacity(n),
            };
            b.build(&mut idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();

    Ok(ForestModel {
        config: *config,
        n_features,
        log1p_columns: log1p_columns.to_vec(),
        trees,
    })
}

impl ForestModel {
    /// Mean leaf positive-fraction over all trees, in `[0, 1]`.
    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: format!("{} features", self.n_features),
                got: row.len().to_string(),
            });
        }
        let mut x = row.to_vec();
        for &c in &self.log1p_columns {
            x[c] = squash(x[c]);
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(&x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn score_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.score(r)).collect()
    }
}
