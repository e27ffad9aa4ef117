use std::collections::BTreeSet;

use proptest::prelude::*;

use risksea::features::{assemble, extract_all, extract_behavioral, row_len, Bucket, BehavioralVector, IN_OUT_PAIRS};
use risksea::txgraph::{Asset, TransactionRecord};
use risksea::Addr;

const PEERS: [&str; 5] = ["me", "p1", "p2", "p3", "p4"];

fn arb_records() -> impl Strategy<Value = Vec<TransactionRecord>> {
    prop::collection::vec(
        (1i64..400_000, 0usize..5, 0usize..5, 0u32..10_000, 0usize..3),
        0..30,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(t, a, b, amt, tok)| {
                let asset = match tok {
                    0 => Asset::Native,
                    1 => Asset::Token("alpha".into()),
                    _ => Asset::Token("beta".into()),
                };
                TransactionRecord::new(t, PEERS[a], PEERS[b], amt as f64 / 8.0, asset)
            })
            .collect()
    })
}

/// Straightforward recount, written without reference to the extractor.
fn oracle(address: &str, records: &[TransactionRecord], token: bool) -> Vec<f64> {
    let mine: Vec<&TransactionRecord> = records
        .iter()
        .filter(|r| r.asset.is_native() != token && (&*r.from == address || &*r.to == address))
        .collect();
    let width = if token { 18 } else { 17 };
    if mine.is_empty() {
        return vec![0.0; width];
    }
    let ins: Vec<f64> = mine.iter().filter(|r| &*r.to == address).map(|r| r.amount).collect();
    let outs: Vec<f64> = mine.iter().filter(|r| &*r.from == address).map(|r| r.amount).collect();
    let stats = |xs: &[f64]| -> (f64, f64, f64, f64) {
        if xs.is_empty() {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let n = xs.len() as f64;
        let s: f64 = xs.iter().sum();
        let m = s / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (s, m, xs.iter().cloned().fold(f64::MIN, f64::max), v.sqrt())
    };
    let (is, im, ix, isd) = stats(&ins);
    let (os, om, ox, osd) = stats(&outs);
    let senders: BTreeSet<&str> = mine.iter().filter(|r| &*r.to == address).map(|r| &*r.from).collect();
    let receivers: BTreeSet<&str> = mine.iter().filter(|r| &*r.from == address).map(|r| &*r.to).collect();
    let days: BTreeSet<i64> = mine.iter().map(|r| r.timestamp / 86_400).collect();
    let first = mine.iter().map(|r| r.timestamp).min().unwrap();
    let last = mine.iter().map(|r| r.timestamp).max().unwrap();
    let life = (last - first) as f64;
    let gap = if mine.len() > 1 { life / (mine.len() - 1) as f64 } else { 0.0 };
    let mut v = vec![
        ins.len() as f64,
        outs.len() as f64,
        is,
        os,
        im,
        om,
        ix,
        ox,
        isd,
        osd,
        senders.len() as f64,
        receivers.len() as f64,
        days.len() as f64,
        life,
        gap,
        (ins.len() as f64 + 1.0) / (outs.len() as f64 + 1.0),
        (is + 1.0) / (os + 1.0),
    ];
    if token {
        let toks: BTreeSet<&Asset> = mine.iter().map(|r| &r.asset).collect();
        v.push(toks.len() as f64);
    }
    v
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn statistics_equal_brute_force(records in arb_records()) {
        for a in PEERS {
            for (bucket, token) in [(Bucket::Native, false), (Bucket::Token, true)] {
                let got = extract_behavioral(a, &records, bucket);
                let want = oracle(a, &records, token);
                prop_assert!(close(&got.values, &want), "{a} {bucket:?}\n{:?}\n{want:?}", got.values);
                prop_assert!(got.values.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn record_order_does_not_matter(records in arb_records(), rot in 0usize..30) {
        let mut shuffled = records.clone();
        shuffled.reverse();
        if !shuffled.is_empty() {
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
        }
        let addrs: Vec<Addr> = PEERS.iter().map(|s| Addr::from(*s)).collect();
        prop_assert_eq!(extract_all(&records, &addrs), extract_all(&shuffled, &addrs));
    }

    #[test]
    fn reversing_direction_swaps_in_and_out(records in arb_records()) {
        // only records that touch "me" once, so the reversal is well defined
        let mine: Vec<TransactionRecord> = records
            .into_iter()
            .filter(|r| (&*r.from == "me") != (&*r.to == "me"))
            .collect();
        let flipped: Vec<TransactionRecord> = mine
            .iter()
            .map(|r| TransactionRecord { from: r.to.clone(), to: r.from.clone(), ..r.clone() })
            .collect();
        for bucket in [Bucket::Native, Bucket::Token] {
            let a = extract_behavioral("me", &mine, bucket).values;
            let b = extract_behavioral("me", &flipped, bucket).values;
            if a.iter().all(|v| *v == 0.0) {
                prop_assert!(b.iter().all(|v| *v == 0.0));
                continue;
            }
            for (i, o) in IN_OUT_PAIRS {
                prop_assert_eq!(a[i], b[o]);
                prop_assert_eq!(a[o], b[i]);
            }
            for same in 12..15 {
                prop_assert_eq!(a[same], b[same]);
            }
            for ratio in [15, 16] {
                prop_assert!((a[ratio] * b[ratio] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assembled_rows_have_canonical_length(dim in 0usize..20, present in any::<bool>()) {
        let emb: Vec<f32> = (0..dim).map(|i| i as f32 + 0.5).collect();
        let row = assemble(
            &Addr::from("me"),
            &BehavioralVector::zeros(Bucket::Native),
            &BehavioralVector::zeros(Bucket::Token),
            present.then_some(emb.as_slice()),
            dim,
        )
        .unwrap();
        prop_assert_eq!(row.values.len(), 17 + 18 + dim + 1);
        prop_assert_eq!(row.values.len(), row_len(dim));
        prop_assert_eq!(row.values[35 + dim], if present { 1.0 } else { 0.0 });
        for i in 0..dim {
            prop_assert_eq!(row.values[35 + i], if present { emb[i] as f64 } else { 0.0 });
        }
    }
}

#[test]
fn length_mismatch_is_an_error() {
    let short = BehavioralVector {
        bucket: Bucket::Native,
        values: vec![0.0; 3],
    };
    let tok = BehavioralVector::zeros(Bucket::Token);
    assert!(assemble(&Addr::from("x"), &short, &tok, None, 4).is_err());
    let nat = BehavioralVector::zeros(Bucket::Native);
    assert!(assemble(&Addr::from("x"), &nat, &tok, Some(&[1.0, 2.0]), 4).is_err());
}
