//! In-memory end-to-end runs over epoch-partitioned transaction records:
//! dynamic vs propagated embeddings, feature-family ablations and the
//! walk-hyperparameter sweep. The CLI runs the same steps through files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedder::{EmbeddingTable, SgnsHyper, SgnsModel};
use crate::features::{amount_columns, assemble, behavioral_columns, embedding_columns, extract_all, row_len, AssembledRow};
use crate::propagator::{propagate_all, select_core_set, CoreSet, CoverageReport, DEFAULT_SAMPLE_N};
use crate::riskmodel::{evaluate, stratified_split, train_forest, EvalReport, ForestConfig, DEFAULT_THRESHOLD};
use crate::txgraph::{delta_nodes_in_window, NeighborSource, NeighborStore, TransactionRecord, DEFAULT_TOP_K};
use crate::walkgen::{generate_walks_partitioned, NodeSelection, WalkParams};
use crate::{Addr, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    All,
    Behavioral,
    Embedding,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Behavioral, FeatureSet::Embedding, FeatureSet::All];

    /// Column indices of an assembled row used by this feature set.
    pub fn columns(self, dim: usize) -> Vec<usize> {
        match self {
            FeatureSet::All => (0..row_len(dim)).collect(),
            FeatureSet::Behavioral => behavioral_columns().collect(),
            FeatureSet::Embedding => embedding_columns(dim).collect(),
        }
    }

    /// Positions, within [`FeatureSet::columns`], that get the log1p transform.
    pub fn log1p_positions(self, dim: usize) -> Vec<usize> {
        let amounts: BTreeSet<usize> = amount_columns().into_iter().collect();
        self.columns(dim)
            .iter()
            .enumerate()
            .filter(|(_, c)| amounts.contains(c))
            .map(|(i, _)| i)
            .collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::All => "all",
            FeatureSet::Behavioral => "behavioral",
            FeatureSet::Embedding => "embedding",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSet::All),
            "behavioral" => Ok(FeatureSet::Behavioral),
            "embedding" => Ok(FeatureSet::Embedding),
            _ => Err(Error::InvalidArgument(format!(
                "unknown feature set {s:?} (expected all, behavioral or embedding)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub walk: WalkParams,
    pub sgns: SgnsHyper,
    pub forest: ForestConfig,
    pub top_k: usize,
    pub sample_n: usize,
    /// Share of the first snapshot's nodes trained directly for propagation.
    pub core_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        ExperimentConfig {
            walk: WalkParams::new(seed),
            sgns: SgnsHyper::new(seed),
            forest: ForestConfig::new(seed),
            top_k: DEFAULT_TOP_K,
            sample_n: DEFAULT_SAMPLE_N,
            core_fraction: 0.3,
            test_fraction: 0.2,
            split_seed: seed,
            workers: 1,
        }
    }
}

/// Largest timestamp of each epoch, used as snapshot time bounds.
fn epoch_bounds(epochs: &[Vec<TransactionRecord>]) -> Vec<i64> {
    let mut bound = i64::MIN;
    epochs
        .iter()
        .map(|recs| {
            bound = recs.iter().map(|r| r.timestamp).fold(bound, i64::max);
            bound
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DynamicRun {
    /// Model after each snapshot; index 0 is the bootstrap model.
    pub models: Vec<SgnsModel>,
    /// Delta-walk source nodes of snapshots 2.., in order.
    pub delta_nodes: Vec<BTreeSet<Addr>>,
    /// Every node touched by the delta walks of snapshots 2.., in order.
    pub delta_walk_nodes: Vec<BTreeSet<Addr>>,
}

impl DynamicRun {
    pub fn final_model(&self) -> &SgnsModel {
        self.models.last().expect("at least one snapshot")
    }
}

/// Bootstrap on the first snapshot, then one warm-started increment per
/// later snapshot with walks from its delta nodes only.
pub fn dynamic_embeddings(epochs: &[Vec<TransactionRecord>], cfg: &ExperimentConfig) -> Result<DynamicRun> {
    if epochs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let bounds = epoch_bounds(epochs);
    let mut seen: Vec<TransactionRecord> = epochs[0].clone();
    let store = NeighborStore::from_records(&seen, cfg.top_k, 1)?;
    let corpus = generate_walks_partitioned(&NodeSelection::All, &store, &cfg.walk, cfg.workers)?;
    let mut models = vec![SgnsModel::bootstrap_train(&corpus, &cfg.sgns, 1)?];
    let mut delta_nodes = Vec::new();
    let mut delta_walk_nodes = Vec::new();
    for (i, recs) in epochs.iter().enumerate().skip(1) {
        let snap = i as u64 + 1;
        seen.extend_from_slice(recs);
        let store = NeighborStore::from_records(&seen, cfg.top_k, snap)?;
        let delta = delta_nodes_in_window(recs, bounds[i - 1], bounds[i]);
        let selection = NodeSelection::Nodes(delta.iter().cloned().collect());
        let walks = generate_walks_partitioned(&selection, &store, &cfg.walk, cfg.workers)?;
        let touched: BTreeSet<Addr> = walks.node_set().into_iter().collect();
        let next = models.last().expect("bootstrapped").incremental_train(&walks, &cfg.sgns, snap)?;
        models.push(next);
        delta_nodes.push(delta);
        delta_walk_nodes.push(touched);
    }
    Ok(DynamicRun {
        models,
        delta_nodes,
        delta_walk_nodes,
    })
}

/// Settings of [`core_propagation`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorePropagation {
    pub walk: WalkParams,
    pub sgns: SgnsHyper,
    pub top_k: usize,
    pub core_fraction: f64,
    pub sample_n: usize,
    pub seed: u64,
    pub core_snapshot: u64,
    pub workers: usize,
}

/// Sample a core from the nodes of `core_records`, train node2vec on the
/// subgraph the core induces, then propagate one hop over `target`.
pub fn core_propagation<S: NeighborSource>(
    core_records: &[TransactionRecord],
    target: &S,
    p: &CorePropagation,
) -> Result<(CoreSet, EmbeddingTable, CoverageReport)> {
    let candidates: BTreeSet<Addr> = core_records
        .iter()
        .flat_map(|r| [r.from.clone(), r.to.clone()])
        .collect();
    let size = (p.core_fraction * candidates.len() as f64).round() as usize;
    let core = select_core_set(&candidates, size, p.seed, p.core_snapshot)?;
    let induced: Vec<TransactionRecord> = core_records
        .iter()
        .filter(|r| core.contains(&r.from) && core.contains(&r.to))
        .cloned()
        .collect();
    let core_store = NeighborStore::from_records(&induced, p.top_k, p.core_snapshot)?;
    let corpus = generate_walks_partitioned(&NodeSelection::All, &core_store, &p.walk, p.workers)?;
    let core_table = SgnsModel::bootstrap_train(&corpus, &p.sgns, p.core_snapshot)?
        .export_embeddings()
        .restrict(&core.members);
    let (table, coverage) = propagate_all(&core_table, target, p.sample_n, p.seed, p.workers)?;
    Ok((core, table, coverage))
}

/// Core sampled from the first snapshot, propagated over the final one.
pub fn propagated_embeddings(
    epochs: &[Vec<TransactionRecord>],
    cfg: &ExperimentConfig,
) -> Result<(EmbeddingTable, CoverageReport)> {
    if epochs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let all: Vec<TransactionRecord> = epochs.iter().flatten().cloned().collect();
    let final_store = NeighborStore::from_records(&all, cfg.top_k, epochs.len() as u64)?;
    let settings = CorePropagation {
        walk: cfg.walk,
        sgns: cfg.sgns,
        top_k: cfg.top_k,
        core_fraction: cfg.core_fraction,
        sample_n: cfg.sample_n,
        seed: cfg.walk.seed,
        core_snapshot: 1,
        workers: cfg.workers,
    };
    let (_, table, coverage) = core_propagation(&epochs[0], &final_store, &settings)?;
    Ok((table, coverage))
}

/// One labelled row per address in `labels`, in address order.
pub fn feature_rows(
    records: &[TransactionRecord],
    labels: &BTreeMap<Addr, u8>,
    table: &EmbeddingTable,
) -> Result<Vec<AssembledRow>> {
    let addrs: Vec<Addr> = labels.keys().cloned().collect();
    let behavioral = extract_all(records, &addrs);
    addrs
        .iter()
        .map(|a| {
            let (native, token) = &behavioral[a];
            let mut row = assemble(a, native, token, table.get(a), table.dim())?;
            row.label = Some(labels[a]);
            Ok(row)
        })
        .collect()
}

/// Stratified split, forest on the training side, report on the held-out side.
pub fn train_and_evaluate(
    rows: &[AssembledRow],
    dim: usize,
    set: FeatureSet,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    let labels: Vec<u8> = rows
        .iter()
        .map(|r| r.label.ok_or_else(|| Error::malformed(r.address.to_string(), "row has no label")))
        .collect::<Result<_>>()?;
    let cols = set.columns(dim);
    let x: Vec<Vec<f64>> = rows.iter().map(|r| cols.iter().map(|&c| r.values[c]).collect()).collect();
    let split = stratified_split(&labels, cfg.test_fraction, cfg.split_seed);
    let train_x: Vec<Vec<f64>> = split.train.iter().map(|&i| x[i].clone()).collect();
    let train_y: Vec<u8> = split.train.iter().map(|&i| labels[i]).collect();
    let model = train_forest(&train_x, &train_y, &cfg.forest, &set.log1p_positions(dim))?;
    let scores = split
        .test
        .iter()
        .map(|&i| Ok((model.score(&x[i])?, labels[i])))
        .collect::<Result<Vec<_>>>()?;
    let mut report = evaluate(&scores, DEFAULT_THRESHOLD)?;
    report.split_seed = Some(split.seed);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_walks: usize,
    pub walk_length: usize,
    pub p: f64,
    pub q: f64,
    pub pr_auc: f64,
    pub f1: f64,
}

/// Cartesian product of walk hyperparameters.
pub fn walk_grid(rs: &[usize], ls: &[usize], ps: &[f64], qs: &[f64], seed: u64) -> Vec<WalkParams> {
    let mut out = Vec::new();
    for &num_walks in rs {
        for &walk_length in ls {
            for &p in ps {
                for &q in qs {
                    out.push(WalkParams {
                        num_walks,
                        walk_length,
                        p,
                        q,
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// Bootstrap embeddings on the full graph for every walk configuration and
/// report the held-out metrics of a classifier on `set`.
pub fn sweep(
    records: &[TransactionRecord],
    labels: &BTreeMap<Addr, u8>,
    grid: &[WalkParams],
    set: FeatureSet,
    cfg: &ExperimentConfig,
) -> Result<Vec<SweepRow>> {
    let store = NeighborStore::from_records(records, cfg.top_k, 1)?;
    let behavioral = extract_all(records, &labels.keys().cloned().collect::<Vec<_>>());
    let mut out = Vec::with_capacity(grid.len());
    for params in grid {
        let corpus = generate_walks_partitioned(&NodeSelection::All, &store, params, cfg.workers)?;
        let table = SgnsModel::bootstrap_train(&corpus, &cfg.sgns, 1)?.export_embeddings();
        let rows = labels
            .iter()
            .map(|(a, &y)| {
                let (native, token) = &behavioral[a];
                let mut row = assemble(a, native, token, table.get(a), table.dim())?;
                row.label = Some(y);
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let report = train_and_evaluate(&rows, table.dim(), set, cfg)?;
        out.push(SweepRow {
            num_walks: params.num_walks,
            walk_length: params.walk_length,
            p: params.p,
            q: params.q,
            pr_auc: report.pr_auc,
            f1: report.f1,
        });
    }
    Ok(out)
}
