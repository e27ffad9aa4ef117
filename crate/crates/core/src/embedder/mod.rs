//! Skip-gram with negative sampling over walk corpora, with vocabulary growth
//! and warm-start retraining on delta walks.
//!
//! Incremental training only writes rows of nodes that occur in the delta
//! corpus. Negatives are drawn from the whole vocabulary, but the output
//! vectors of negatives outside the delta corpus are treated as constants.

use std::collections::{HashMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hashing::keyed_rng;
use crate::walkgen::WalkCorpus;
use crate::{Addr, Error, Result};

pub mod kernel;
mod persist;
mod table;

pub use table::EmbeddingTable;

use kernel::{sgd_step, AtomicMatrix, Scratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrainMode {
    /// Single thread, fixed pair order; bitwise reproducible.
    Deterministic,
    /// Lock-free concurrent updates over walks; not bitwise reproducible.
    Parallel { workers: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgnsHyper {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl SgnsHyper {
    pub fn new(seed: u64) -> Self {
        SgnsHyper {
            dim: 128,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            min_lr: 0.0001,
            seed,
            mode: TrainMode::Deterministic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.initial_lr) {
            return Err(Error::InvalidArgument(format!(
                "learning rates must satisfy 0 <= min_lr <= initial_lr, 0 < initial_lr; got {} / {}",
                self.min_lr, self.initial_lr
            )));
        }
        if let TrainMode::Parallel { workers: 0 } = self.mode {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unigram^0.75 sampler over the vocabulary.
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub const POWER: f64 = 0.75;

    pub fn new(counts: &[u64]) -> Option<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(Self::POWER)).collect();
        WeightedIndex::new(weights).ok().map(|dist| NegativeSampler { dist })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsModel {
    hyper: SgnsHyper,
    words: Vec<Addr>,
    index: HashMap<Addr, usize>,
    counts: Vec<u64>,
    input: Vec<f64>,
    output: Vec<f64>,
    snapshot_id: u64,
}

fn init_row(seed: u64, node: &str, which: u64, dim: usize) -> impl Iterator<Item = f64> {
    let mut rng = keyed_rng(seed, node, which);
    let half = 0.5 / dim as f64;
    (0..dim).map(move |_| rng.gen_range(-half..half))
}

impl SgnsModel {
    /// Train a fresh model on the full corpus of the first snapshot.
    pub fn bootstrap_train(corpus: &WalkCorpus, hyper: &SgnsHyper, snapshot_id: u64) -> Result<Self> {
        hyper.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut model = SgnsModel {
            hyper: *hyper,
            words: Vec::new(),
            index: HashMap::new(),
            counts: Vec::new(),
            input: Vec::new(),
            output: Vec::new(),
            snapshot_id,
        };
        model.grow_vocab(corpus);
        model.train(corpus, None)?;
        Ok(model)
    }

    /// Warm-start from `self` and retrain on the delta corpus of snapshot `snapshot_id`.
    ///
    /// Nodes that do not occur in `delta` keep bitwise-identical vectors.
    pub fn incremental_train(&self, delta: &WalkCorpus, hyper: &SgnsHyper, snapshot_id: u64) -> Result<Self> {
        hyper.validate()?;
        if hyper.dim != self.hyper.dim {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: model has {}, hyperparameters ask for {}",
                self.hyper.dim, hyper.dim
            )));
        }
        let mut model = self.clone();
        model.hyper = *hyper;
        model.snapshot_id = snapshot_id;
        if delta.is_empty() {
            return Ok(model);
        }
        model.grow_vocab(delta);
        let touched: HashSet<Addr> = delta.node_set();
        let mut trainable = vec![false; model.words.len()];
        for n in &touched {
            trainable[model.index[n]] = true;
        }
        model.train(delta, Some(&trainable))?;
        Ok(model)
    }

    /// Add unseen nodes with keyed random init and accumulate frequency counts.
    fn grow_vocab(&mut self, corpus: &WalkCorpus) {
        let d = self.hyper.dim;
        for walk in corpus.walks() {
            for node in &walk.nodes {
                let id = match self.index.get(node) {
                    Some(&id) => id,
                    None => {
                        let id = self.words.len();
                        self.words.push(node.clone());
                        self.index.insert(node.clone(), id);
                        self.counts.push(0);
                        self.input.extend(init_row(self.hyper.seed, node, 0, d));
                        self.output.extend(init_row(self.hyper.seed, node, 1, d));
                        id
                    }
                };
                self.counts[id] += 1;
            }
        }
    }

    fn train(&mut self, corpus: &WalkCorpus, trainable: Option<&[bool]>) -> Result<()> {
        let h = self.hyper;
        let seqs: Vec<Vec<usize>> = corpus
            .walks()
            .iter()
            .map(|w| w.nodes.iter().map(|n| self.index[n]).collect())
            .collect();
        let tokens: usize = seqs.iter().map(Vec::len).sum();
        let total = (tokens * h.epochs).max(1) as f64;
        let sampler = NegativeSampler::new(&self.counts).ok_or(Error::EmptyCorpus)?;
        let lr_at = |done: usize| (h.initial_lr - (h.initial_lr - h.min_lr) * done as f64 / total).max(h.min_lr);
        let may_update = |row: usize| trainable.map_or(true, |t| t[row]);

        let input = AtomicMatrix::from_vec(h.dim, &self.input);
        let output = AtomicMatrix::from_vec(h.dim, &self.output);
        let run = |seq: &[usize], rng: &mut ChaCha8Rng, done: usize, s: &mut Scratch, negs: &mut Vec<usize>| {
            for (i, &center) in seq.iter().enumerate() {
                let lr = lr_at(done + i);
                let lo = i.saturating_sub(h.window);
                let hi = (i + h.window).min(seq.len() - 1);
                for (j, &context) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    negs.clear();
                    for _ in 0..h.negatives {
                        let n = sampler.sample(rng);
                        if n != context {
                            negs.push(n);
                        }
                    }
                    sgd_step(&input, &output, center, context, negs, lr, may_update, s);
                }
            }
        };

        match h.mode {
            TrainMode::Deterministic => {
                let mut rng = keyed_rng(h.seed, "sgns", self.snapshot_id);
                let mut s = Scratch::new(h.dim);
                let mut negs = Vec::with_capacity(h.negatives);
                let mut done = 0;
                for _ in 0..h.epochs {
                    for seq in &seqs {
                        run(seq, &mut rng, done, &mut s, &mut negs);
                        done += seq.len();
                    }
                }
            }
            TrainMode::Parallel { workers } => {
                let mut offsets = Vec::with_capacity(seqs.len());
                let mut acc = 0;
                for s in &seqs {
                    offsets.push(acc);
                    acc += s.len();
                }
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
                pool.install(|| {
                    for epoch in 0..h.epochs {
                        seqs.par_iter().enumerate().for_each_init(
                            || (Scratch::new(h.dim), Vec::with_capacity(h.negatives)),
                            |(s, negs), (wi, seq)| {
                                let key = format!("sgns-par-{}-{epoch}", self.snapshot_id);
                                let mut rng = keyed_rng(h.seed, &key, wi as u64);
                                run(seq, &mut rng, epoch * tokens + offsets[wi], s, negs);
                            },
                        );
                    }
                });
            }
        }
        self.input = input.into_vec();
        self.output = output.into_vec();
        Ok(())
    }

    pub fn hyper(&self) -> &SgnsHyper {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn snapshot_id(&self) -> u64 {
        self.snapshot_id
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[Addr] {
        &self.words
    }

    pub fn count(&self, node: &str) -> Option<u64> {
        self.index.get(node).map(|&i| self.counts[i])
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn input_vector(&self, node: &str) -> Option<&[f64]> {
        let d = self.hyper.dim;
        self.index.get(node).map(|&i| &self.input[i * d..(i + 1) * d])
    }

    pub fn output_vector(&self, node: &str) -> Option<&[f64]> {
        let d = self.hyper.dim;
        self.index.get(node).map(|&i| &self.output[i * d..(i + 1) * d])
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }

    /// Input vectors of the whole vocabulary as an f32 table.
    pub fn export_embeddings(&self) -> EmbeddingTable {
        let d = self.hyper.dim;
        let rows: Vec<(Addr, Vec<f32>)> = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let v: Vec<f32> = self.input[i * d..(i + 1) * d].iter().map(|&x| x as f32).collect();
                (w.clone(), v)
            })
            .collect();
        EmbeddingTable::from_rows(d, self.snapshot_id, rows).expect("rows have model dimension")
    }
}
