//! Seeded synthetic evolving transaction graphs.
//!
//! Nodes live in communities of a stochastic block model. A fraction of the
//! communities is risky; inside a risky community a fixed share of members is
//! labelled high-risk, so the community alone predicts risk only partially.
//! High-risk members also transact differently (larger log-normal amounts,
//! more transfers, bursty timing), which gives a second, per-node signal. Some
//! low-risk nodes in ordinary communities share that behavior, so behavior
//! alone is ambiguous too; the two signals together pin risk down. Either
//! signal can be switched off.
//!
//! Epoch 1 holds the initial communities. Every later epoch grows each
//! existing community, opens a few new communities, and adds some late edges
//! between nodes that already existed, so consecutive snapshots differ.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::hashing::{derive_seed, keyed_rng};
use crate::riskmodel::RiskLabel;
use crate::txgraph::{Asset, TransactionRecord};
use crate::{Addr, Error, Result};

pub const LABEL_SOURCE: &str = "synth";

/// Transaction behavior of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Log-normal location and scale of transfer amounts.
    pub amount_mu: f64,
    pub amount_sigma: f64,
    /// Mean transfers a node sends along each of its edges per epoch.
    pub activity_rate: f64,
    /// Share of the epoch window the node's transfers fall into (1 = spread out).
    pub active_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_communities: usize,
    pub nodes_per_community: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Fraction of communities marked risky.
    pub risky_fraction: f64,
    /// Fraction of a risky community's members labelled high-risk.
    pub risky_member_fraction: f64,
    /// Fraction of low-risk nodes outside risky communities that transact like
    /// high-risk nodes (legitimate heavy traders).
    pub lookalike_fraction: f64,
    pub benign: ClassProfile,
    pub risky: ClassProfile,
    pub epochs: u64,
    /// Nodes added to every existing community per later epoch, relative to its initial size.
    pub node_growth: f64,
    pub new_communities_per_epoch: usize,
    /// Probability that an edge first appears in a uniformly chosen later epoch.
    pub late_edge_fraction: f64,
    pub token_fraction: f64,
    pub n_tokens: usize,
    pub start_time: i64,
    pub epoch_seconds: i64,
    /// Tie risk to community membership.
    pub graph_signal: bool,
    /// Give high-risk nodes their own transaction behavior.
    pub behavior_signal: bool,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        SynthConfig {
            n_communities: 20,
            nodes_per_community: 200,
            p_intra: 0.04,
            p_inter: 0.0002,
            risky_fraction: 0.25,
            risky_member_fraction: 0.7,
            lookalike_fraction: 0.2,
            benign: ClassProfile {
                amount_mu: 3.0,
                amount_sigma: 1.2,
                activity_rate: 1.0,
                active_window: 1.0,
            },
            risky: ClassProfile {
                amount_mu: 3.8,
                amount_sigma: 1.2,
                activity_rate: 1.6,
                active_window: 0.3,
            },
            epochs: 3,
            node_growth: 0.1,
            new_communities_per_epoch: 1,
            late_edge_fraction: 0.15,
            token_fraction: 0.2,
            n_tokens: 5,
            start_time: 1_600_000_000,
            epoch_seconds: 2_592_000,
            graph_signal: true,
            behavior_signal: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_communities == 0 || self.nodes_per_community == 0 {
            return bad("synthetic graph needs at least one community with at least one node".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        for (name, v) in [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("risky_fraction", self.risky_fraction),
            ("risky_member_fraction", self.risky_member_fraction),
            ("lookalike_fraction", self.lookalike_fraction),
            ("late_edge_fraction", self.late_edge_fraction),
            ("token_fraction", self.token_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, c) in [("benign", &self.benign), ("risky", &self.risky)] {
            let ok = c.amount_mu.is_finite()
                && c.amount_sigma.is_finite()
                && c.amount_sigma >= 0.0
                && c.activity_rate.is_finite()
                && c.activity_rate >= 0.0
                && c.active_window > 0.0
                && c.active_window <= 1.0;
            if !ok {
                return bad(format!("invalid {name} class profile"));
            }
        }
        if !(self.node_growth.is_finite() && self.node_growth >= 0.0) {
            return bad(format!("node_growth must be non-negative, got {}", self.node_growth));
        }
        if self.token_fraction > 0.0 && self.n_tokens == 0 {
            return bad("token_fraction > 0 needs n_tokens >= 1".into());
        }
        if self.start_time <= 0 || self.epoch_seconds < 10 {
            return bad("start_time must be positive and epoch_seconds at least 10".into());
        }
        Ok(())
    }

    /// Time bound (inclusive) of epoch `e` (1-based).
    pub fn epoch_end(&self, e: u64) -> i64 {
        self.start_time + e as i64 * self.epoch_seconds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthNode {
    pub address: Addr,
    pub community: usize,
    pub arrival_epoch: u64,
    pub class: u8,
    /// Transacts with the high-risk profile.
    pub risky_behavior: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    /// Records of epoch `e` at index `e - 1`, in canonical order.
    pub epochs: Vec<Vec<TransactionRecord>>,
    pub labels: Vec<RiskLabel>,
    pub nodes: Vec<SynthNode>,
}

impl SynthData {
    pub fn all_records(&self) -> impl Iterator<Item = &TransactionRecord> {
        self.epochs.iter().flatten()
    }

    pub fn community_of(&self) -> BTreeMap<Addr, usize> {
        self.nodes.iter().map(|n| (n.address.clone(), n.community)).collect()
    }

    pub fn label_map(&self) -> BTreeMap<Addr, u8> {
        self.nodes.iter().map(|n| (n.address.clone(), n.class)).collect()
    }
}

fn address(seed: u64, index: usize) -> Addr {
    let a = derive_seed(seed, "synth-addr-a", index as u64);
    let b = derive_seed(seed, "synth-addr-b", index as u64);
    let c = derive_seed(seed, "synth-addr-c", index as u64) as u32;
    Addr::from(format!("0x{c:08x}{a:016x}{b:016x}"))
}

/// Indices `j` in `lo..hi` each kept independently with probability `p`.
fn bernoulli_run(rng: &mut ChaCha8Rng, lo: usize, hi: usize, p: f64, out: &mut Vec<usize>) {
    if p <= 0.0 || lo >= hi {
        return;
    }
    if p >= 1.0 {
        out.extend(lo..hi);
        return;
    }
    let skip = Geometric::new(p).expect("p in (0, 1)");
    let mut j = lo as u64;
    loop {
        j += skip.sample(rng);
        if j >= hi as u64 {
            return;
        }
        out.push(j as usize);
        j += 1;
    }
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate <= 0.0 {
        0
    } else {
        Poisson::new(rate).expect("positive rate").sample(rng) as u64
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let cfg = config;
    let mut rng = keyed_rng(cfg.seed, "synth", 0);

    // Community sizes per arrival epoch.
    let growth = (cfg.node_growth * cfg.nodes_per_community as f64).round() as usize;
    let mut communities: Vec<u64> = vec![1; cfg.n_communities];
    for e in 2..=cfg.epochs {
        communities.extend(std::iter::repeat(e).take(cfg.new_communities_per_epoch));
    }
    let mut nodes: Vec<SynthNode> = Vec::new();
    let mut bounds = Vec::with_capacity(communities.len());
    for (c, &born) in communities.iter().enumerate() {
        let start = nodes.len();
        for e in born..=cfg.epochs {
            let n = if e == born { cfg.nodes_per_community } else { growth };
            for _ in 0..n {
                nodes.push(SynthNode {
                    address: address(cfg.seed, nodes.len()),
                    community: c,
                    arrival_epoch: e,
                    class: 0,
                    risky_behavior: false,
                });
            }
        }
        bounds.push(start..nodes.len());
    }

    // Labels.
    let n_risky_comm = (cfg.risky_fraction * communities.len() as f64).round() as usize;
    let mut comm_order: Vec<usize> = (0..communities.len()).collect();
    comm_order.shuffle(&mut rng);
    let mut risky_count = 0usize;
    let mut per_comm_risky: Vec<Vec<usize>> = Vec::new();
    let mut in_risky_comm = vec![false; nodes.len()];
    for &c in &comm_order[..n_risky_comm] {
        bounds[c].clone().for_each(|i| in_risky_comm[i] = true);
        let mut members: Vec<usize> = bounds[c].clone().collect();
        members.shuffle(&mut rng);
        let k = (cfg.risky_member_fraction * members.len() as f64).round() as usize;
        members.truncate(k);
        risky_count += k;
        per_comm_risky.push(members);
    }
    if cfg.graph_signal {
        for i in per_comm_risky.into_iter().flatten() {
            nodes[i].class = 1;
        }
    } else {
        let mut all: Vec<usize> = (0..nodes.len()).collect();
        all.shuffle(&mut rng);
        for &i in &all[..risky_count] {
            nodes[i].class = 1;
        }
    }
    let mut pool: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].class == 0 && (!cfg.graph_signal || !in_risky_comm[i]))
        .collect();
    pool.shuffle(&mut rng);
    pool.truncate((cfg.lookalike_fraction * pool.len() as f64).round() as usize);
    for n in &mut nodes {
        n.risky_behavior = n.class == 1 && cfg.behavior_signal;
    }
    if cfg.behavior_signal {
        pool.into_iter().for_each(|i| nodes[i].risky_behavior = true);
    }

    // Per-node, per-epoch active windows.
    let profile = |risky: bool| {
        if risky {
            &cfg.risky
        } else {
            &cfg.benign
        }
    };
    let span = cfg.epoch_seconds - 1;
    let windows: Vec<Vec<(i64, i64)>> = nodes
        .iter()
        .map(|n| {
            let len = ((span as f64 * profile(n.risky_behavior).active_window).round() as i64).clamp(1, span);
            (1..=cfg.epochs)
                .map(|e| {
                    let lo = cfg.epoch_end(e - 1) + 1;
                    let off = rng.gen_range(0..=span - len);
                    (lo + off, lo + off + len)
                })
                .collect()
        })
        .collect();

    // Edges.
    let mut epochs: Vec<Vec<TransactionRecord>> = vec![Vec::new(); cfg.epochs as usize];
    let mut partners = Vec::new();
    let tokens: Vec<Asset> = (0..cfg.n_tokens).map(|t| Asset::Token(format!("tok{t}"))).collect();
    let emit = |rng: &mut ChaCha8Rng, epochs: &mut Vec<Vec<TransactionRecord>>, from: usize, to: usize, e: u64| {
        let prof = profile(nodes[from].risky_behavior);
        let (lo, hi) = windows[from][(e - 1) as usize];
        let amount = LogNormal::new(prof.amount_mu, prof.amount_sigma)
            .expect("validated")
            .sample(rng);
        let amount = (amount * 1e6).round() / 1e6;
        let asset = if rng.gen_bool(cfg.token_fraction) {
            tokens[rng.gen_range(0..tokens.len())].clone()
        } else {
            Asset::Native
        };
        epochs[(e - 1) as usize].push(TransactionRecord {
            timestamp: rng.gen_range(lo..=hi),
            from: nodes[from].address.clone(),
            to: nodes[to].address.clone(),
            amount,
            asset,
        });
    };
    for i in 0..nodes.len() {
        let c = nodes[i].community;
        partners.clear();
        bernoulli_run(&mut rng, i + 1, bounds[c].end, cfg.p_intra, &mut partners);
        bernoulli_run(&mut rng, bounds[c].end, nodes.len(), cfg.p_inter, &mut partners);
        for &j in &partners {
            let mut e = nodes[i].arrival_epoch.max(nodes[j].arrival_epoch);
            if e < cfg.epochs && rng.gen_bool(cfg.late_edge_fraction) {
                e = rng.gen_range(e + 1..=cfg.epochs);
            }
            let sends_i = poisson(&mut rng, profile(nodes[i].risky_behavior).activity_rate);
            let sends_j = poisson(&mut rng, profile(nodes[j].risky_behavior).activity_rate);
            let (sends_i, sends_j) = if sends_i + sends_j == 0 {
                if rng.gen_bool(0.5) {
                    (1, 0)
                } else {
                    (0, 1)
                }
            } else {
                (sends_i, sends_j)
            };
            for _ in 0..sends_i {
                emit(&mut rng, &mut epochs, i, j, e);
            }
            for _ in 0..sends_j {
                emit(&mut rng, &mut epochs, j, i, e);
            }
        }
    }
    for recs in &mut epochs {
        recs.sort_by(|a, b| a.canonical_cmp(b));
    }
    let labels = nodes
        .iter()
        .map(|n| RiskLabel {
            address: n.address.clone(),
            class: n.class,
            source: LABEL_SOURCE.to_string(),
        })
        .collect();
    Ok(SynthData { epochs, labels, nodes })
}
