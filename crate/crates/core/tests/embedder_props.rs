use std::collections::HashMap;

use proptest::prelude::*;

use risksea::embedder::kernel::{pair_gradient, pair_loss};
use risksea::embedder::{NegativeSampler, SgnsHyper, SgnsModel, TrainMode};
use risksea::hashing::keyed_rng;
use risksea::txgraph::{Asset, NeighborStore, TransactionRecord};
use risksea::walkgen::{generate_walks_partitioned, NodeSelection, Walk, WalkCorpus, WalkParams};
use risksea::Addr;

fn store_from(edges: &[(String, String)]) -> NeighborStore {
    let recs: Vec<_> = edges
        .iter()
        .enumerate()
        .map(|(i, (a, b))| TransactionRecord::new(i as i64 + 1, a, b, 1.0, Asset::Native))
        .collect();
    NeighborStore::from_records(&recs, 200, 1).unwrap()
}

fn walks(store: &NeighborStore, sel: NodeSelection, r: usize, l: usize, seed: u64) -> WalkCorpus {
    let p = WalkParams {
        num_walks: r,
        walk_length: l,
        p: 1.0,
        q: 1.0,
        seed,
    };
    generate_walks_partitioned(&sel, store, &p, 1).unwrap()
}

fn hyper(dim: usize, seed: u64) -> SgnsHyper {
    SgnsHyper {
        dim,
        ..SgnsHyper::new(seed)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn clique_edges(prefix: &str, n: usize) -> Vec<(String, String)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            e.push((format!("{prefix}{i}"), format!("{prefix}{j}")));
        }
    }
    e
}

fn max_norm(model: &SgnsModel) -> f64 {
    model
        .words()
        .iter()
        .flat_map(|w| [model.input_vector(w).unwrap(), model.output_vector(w).unwrap()])
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let corpus = WalkCorpus::from_walks(
        ["a b c d e", "b c a e d", "e d c b a"]
            .iter()
            .enumerate()
            .map(|(i, s)| Walk {
                source: Addr::from(&s[..1]),
                index: i as u32,
                nodes: s.split(' ').map(Addr::from).collect(),
            })
            .collect(),
    );
    let model = SgnsModel::bootstrap_train(&corpus, &SgnsHyper { epochs: 3, ..hyper(6, 3) }, 1).unwrap();
    let vec_of = |w: &str, input: bool| -> Vec<f64> {
        if input {
            model.input_vector(w).unwrap().to_vec()
        } else {
            model.output_vector(w).unwrap().to_vec()
        }
    };
    let words = ["a", "b", "c", "d", "e"];
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (ci, center) in words.iter().enumerate() {
        let context = words[(ci + 1) % 5];
        let u = vec_of(center, true);
        let pos = vec_of(context, false);
        let negs_owned: Vec<Vec<f64>> = [(ci + 2) % 5, (ci + 3) % 5].iter().map(|&j| vec_of(words[j], false)).collect();
        let negs: Vec<&[f64]> = negs_owned.iter().map(Vec::as_slice).collect();
        let g = pair_gradient(&u, &pos, &negs);

        let check = |analytic: &[f64], perturb: &dyn Fn(usize, f64) -> f64| -> f64 {
            let mut worst: f64 = 0.0;
            for (k, a) in analytic.iter().enumerate() {
                let numeric = (perturb(k, h) - perturb(k, -h)) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
            worst
        };
        worst = worst.max(check(&g.center, &|k, e| {
            let mut v = u.clone();
            v[k] += e;
            pair_loss(&v, &pos, &negs)
        }));
        worst = worst.max(check(&g.positive, &|k, e| {
            let mut v = pos.clone();
            v[k] += e;
            pair_loss(&u, &v, &negs)
        }));
        for (ni, gn) in g.negatives.iter().enumerate() {
            worst = worst.max(check(gn, &|k, e| {
                let mut owned = negs_owned.clone();
                owned[ni][k] += e;
                let view: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
                pair_loss(&u, &pos, &view)
            }));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn barbell_bells_separate() {
    let mut edges = clique_edges("l", 15);
    edges.extend(clique_edges("r", 15));
    edges.push(("l0".into(), "r0".into()));
    let store = store_from(&edges);
    let corpus = walks(&store, NodeSelection::All, 20, 20, 4);
    let model = SgnsModel::bootstrap_train(&corpus, &hyper(16, 9), 1).unwrap();
    let names: Vec<String> = (0..15).map(|i| format!("l{i}")).chain((0..15).map(|i| format!("r{i}"))).collect();
    let mut within = Vec::new();
    let mut across = Vec::new();
    for i in 0..30 {
        for j in i + 1..30 {
            let c = cosine(model.input_vector(&names[i]).unwrap(), model.input_vector(&names[j]).unwrap());
            if (i < 15) == (j < 15) {
                within.push(c);
            } else {
                across.push(c);
            }
        }
    }
    let wins = within
        .iter()
        .map(|w| across.iter().filter(|a| w > a).count())
        .sum::<usize>();
    let frac = wins as f64 / (within.len() * across.len()) as f64;
    assert!(frac >= 0.9, "within > across for {frac}");
    assert!(max_norm(&model) < 100.0);
}

#[test]
fn planted_node_lands_in_its_community() {
    let mut edges = clique_edges("x", 10);
    edges.extend(clique_edges("y", 10));
    edges.extend(clique_edges("z", 10));
    edges.push(("x0".into(), "y0".into()));
    edges.push(("y5".into(), "z5".into()));
    let store1 = store_from(&edges);
    let h = hyper(16, 21);
    let base = SgnsModel::bootstrap_train(&walks(&store1, NodeSelection::All, 10, 10, 1), &h, 1).unwrap();

    let links: Vec<(String, String)> = (0..5).map(|i| ("new".to_string(), format!("x{i}"))).collect();
    edges.extend(links.iter().cloned());
    let store2 = store_from(&edges);
    let delta: Vec<Addr> = std::iter::once("new".to_string())
        .chain((0..5).map(|i| format!("x{i}")))
        .map(Addr::from)
        .collect();
    let model = base
        .incremental_train(&walks(&store2, NodeSelection::Nodes(delta), 20, 10, 2), &h, 2)
        .unwrap();

    let me = model.input_vector("new").unwrap();
    let mut ranked: Vec<(f64, &Addr)> = model
        .words()
        .iter()
        .filter(|w| &***w != "new")
        .map(|w| (cosine(me, model.input_vector(w).unwrap()), w))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (c, w) in &ranked[..5] {
        assert!(w.starts_with('x'), "neighbor {w} ({c}) outside the planted community: {:?}", &ranked[..5]);
    }
}

#[test]
fn negative_sampler_follows_three_quarter_power() {
    let counts = [1u64, 4, 9, 50, 3, 120, 7];
    let sampler = NegativeSampler::new(&counts).unwrap();
    let mut rng = keyed_rng(1, "neg-test", 0);
    let draws = 100_000;
    let mut seen = vec![0usize; counts.len()];
    for _ in 0..draws {
        seen[sampler.sample(&mut rng)] += 1;
    }
    let w: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let z: f64 = w.iter().sum();
    let l1: f64 = seen
        .iter()
        .zip(&w)
        .map(|(&s, &wi)| (s as f64 / draws as f64 - wi / z).abs())
        .sum();
    assert!(l1 < 0.02, "L1 {l1}");
}

#[test]
fn vocabulary_counts_accumulate_across_increments() {
    let store = store_from(&clique_edges("c", 6));
    let h = hyper(8, 1);
    let c1 = walks(&store, NodeSelection::All, 2, 5, 1);
    let m1 = SgnsModel::bootstrap_train(&c1, &h, 1).unwrap();
    let c2 = walks(&store, NodeSelection::Nodes(vec![Addr::from("c1")]), 3, 5, 2);
    let m2 = m1.incremental_train(&c2, &h, 2).unwrap();
    let mut expect: HashMap<Addr, u64> = HashMap::new();
    for w in c1.walks().iter().chain(c2.walks()) {
        for n in &w.nodes {
            *expect.entry(n.clone()).or_default() += 1;
        }
    }
    for w in m2.words() {
        assert_eq!(m2.count(w), expect.get(w).copied());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn untouched_nodes_keep_their_vectors(
        edges in prop::collection::vec((0usize..20, 0usize..20), 5..40),
        new_edges in prop::collection::vec((0usize..25, 0usize..25), 1..6),
        parallel in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let name = |i: usize| format!("n{i}");
        let e1: Vec<_> = edges.iter().map(|&(a, b)| (name(a), name(b))).collect();
        let s1 = store_from(&e1);
        let mode = if parallel { TrainMode::Parallel { workers: 3 } } else { TrainMode::Deterministic };
        let h = SgnsHyper { mode, epochs: 2, ..hyper(8, seed) };
        let m1 = SgnsModel::bootstrap_train(&walks(&s1, NodeSelection::All, 2, 6, seed), &h, 1).unwrap();

        let mut e2 = e1.clone();
        let added: Vec<_> = new_edges.iter().map(|&(a, b)| (name(a), name(b))).collect();
        e2.extend(added.iter().cloned());
        let s2 = store_from(&e2);
        let delta: Vec<Addr> = added.iter().flat_map(|(a, b)| [Addr::from(a.as_str()), Addr::from(b.as_str())]).collect();
        let dc = walks(&s2, NodeSelection::Nodes(delta), 2, 6, seed ^ 1);
        let m2 = m1.incremental_train(&dc, &h, 2).unwrap();

        let touched = dc.node_set();
        prop_assert!(m2.all_finite());
        prop_assert_eq!(m2.snapshot_id(), 2);
        for w in m1.words() {
            if !touched.contains(w) {
                prop_assert_eq!(m1.input_vector(w), m2.input_vector(w));
                prop_assert_eq!(m1.output_vector(w), m2.output_vector(w));
            }
        }
        for w in &touched {
            prop_assert!(m2.input_vector(w).is_some() && m2.output_vector(w).is_some());
        }
        prop_assert!(max_norm(&m2) < 100.0);
    }
}
