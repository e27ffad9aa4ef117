use std::collections::BTreeSet;

use proptest::prelude::*;

use risksea::embedder::EmbeddingTable;
use risksea::propagator::{propagate, propagate_all, sampled_neighbors, select_core_set};
use risksea::txgraph::{Asset, NeighborStore, TransactionRecord};
use risksea::Addr;

fn store_from(edges: &[(String, String)], k: usize) -> NeighborStore {
    let recs: Vec<_> = edges
        .iter()
        .enumerate()
        .map(|(i, (a, b))| TransactionRecord::new(i as i64 + 1, a, b, 1.0, Asset::Native))
        .collect();
    NeighborStore::from_records(&recs, k, 1).unwrap()
}

fn vector_for(i: usize, dim: usize) -> Vec<f32> {
    (0..dim).map(|k| ((i * 31 + k * 7) % 17) as f32 / 4.0 - 2.0).collect()
}

fn core_table(store: &NeighborStore, core: &BTreeSet<Addr>, dim: usize) -> EmbeddingTable {
    let rows = store
        .node_iter()
        .enumerate()
        .filter(|(_, a)| core.contains(*a))
        .map(|(i, a)| (a.clone(), vector_for(i, dim)))
        .collect::<Vec<_>>();
    EmbeddingTable::from_rows(dim, 1, rows).unwrap()
}

#[test]
fn coverage_equals_the_constructed_cut() {
    let mut edges = Vec::new();
    for i in 0..20 {
        edges.push((format!("core{i}"), format!("core{}", (i + 1) % 20)));
    }
    for i in 0..60 {
        edges.push((format!("reach{i}"), format!("core{}", i % 20)));
        edges.push((format!("reach{i}"), format!("reach{}", (i + 1) % 60)));
    }
    for i in 0..20 {
        edges.push((format!("far{i}"), format!("far{}", (i + 1) % 20)));
    }
    let store = store_from(&edges, 200);
    let core: BTreeSet<Addr> = (0..20).map(|i| Addr::from(format!("core{i}"))).collect();
    let table = core_table(&store, &core, 3);
    let (out, cov) = propagate_all(&table, &store, 5, 7, 2).unwrap();
    assert_eq!(cov.total, 100);
    assert_eq!(cov.covered, 80);
    assert_eq!(cov.fraction, 0.8);
    assert!(out.iter().all(|(a, _)| !a.starts_with("far")));
}

#[test]
fn identical_core_neighborhoods_give_identical_vectors() {
    let mut edges = Vec::new();
    for c in ["c1", "c2", "c3"] {
        edges.push(("u".to_string(), c.to_string()));
        edges.push(("v".to_string(), c.to_string()));
    }
    edges.push(("u".into(), "v".into()));
    let store = store_from(&edges, 200);
    let core: BTreeSet<Addr> = ["c1", "c2", "c3"].iter().map(|s| Addr::from(*s)).collect();
    let table = core_table(&store, &core, 4);
    let u = propagate("u", &table, &store, 5, 1).unwrap().unwrap();
    let v = propagate("v", &table, &store, 5, 99).unwrap().unwrap();
    assert_eq!(u, v);
}

#[test]
fn worker_count_does_not_change_propagated_table() {
    let edges: Vec<_> = (0..400)
        .flat_map(|i| [(format!("a{i}"), format!("a{}", (i * 13 + 1) % 400)), (format!("a{i}"), format!("a{}", (i + 7) % 400))])
        .collect();
    let store = store_from(&edges, 200);
    let nodes: Vec<Addr> = store.node_iter().cloned().collect();
    let core = select_core_set(&nodes, 100, 3, 1).unwrap();
    let table = core_table(&store, &core.members, 8);
    let reference = propagate_all(&table, &store, 5, 11, 1).unwrap();
    for workers in [4, 16] {
        let other = propagate_all(&table, &store, 5, 11, workers).unwrap();
        assert_eq!(reference.0.to_text(), other.0.to_text());
        assert_eq!(reference.1, other.1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn propagation_contract_holds_exhaustively(
        edges in prop::collection::vec((0usize..40, 0usize..40), 1..120),
        core_mask in prop::collection::vec(any::<bool>(), 40),
        k in 1usize..8,
        sample_n in 1usize..7,
        seed in any::<u64>(),
    ) {
        let edges: Vec<_> = edges.into_iter().map(|(a, b)| (format!("n{a}"), format!("n{b}"))).collect();
        let store = store_from(&edges, k);
        let core: BTreeSet<Addr> = (0..40).filter(|&i| core_mask[i]).map(|i| Addr::from(format!("n{i}"))).filter(|a| store.contains(a)).collect();
        let table = core_table(&store, &core, 3);
        let (out, cov) = propagate_all(&table, &store, sample_n, seed, 2).unwrap();

        let mut covered = 0;
        for (node, list) in store.iter() {
            let got = out.get(node);
            if core.contains(node) {
                prop_assert_eq!(got.unwrap(), table.get(node).unwrap());
                covered += 1;
                continue;
            }
            let hood: Vec<&Addr> = list.iter().map(|n| &n.node).filter(|n| core.contains(*n)).collect();
            if hood.is_empty() {
                prop_assert!(got.is_none());
                continue;
            }
            covered += 1;
            let picked = sampled_neighbors(node, &table, &store, sample_n, seed).unwrap();
            prop_assert_eq!(picked.len(), sample_n.min(hood.len()));
            let distinct: BTreeSet<&Addr> = picked.iter().collect();
            prop_assert_eq!(distinct.len(), picked.len());
            prop_assert!(picked.iter().all(|p| hood.contains(&p)));

            let got = got.unwrap();
            for d in 0..3 {
                let xs: Vec<f64> = picked.iter().map(|p| table.get(p).unwrap()[d] as f64).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                prop_assert!((got[d] as f64 - mean).abs() < 1e-5);
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(got[d] as f64 >= lo - 1e-6 && got[d] as f64 <= hi + 1e-6);
            }
        }
        prop_assert_eq!(cov.covered, covered);
        prop_assert_eq!(cov.total, store.len());
        prop_assert_eq!(out.len(), covered);
    }
}
