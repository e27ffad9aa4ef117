use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use risksea::riskmodel::EvalReport;
use risksea_cli::{run_args, CliError, Manifest, SplitFile};

const CONFIG: &str = r#"
[paths]
labels = "synth/labels.csv"

[store]
top_k = 20
partitions = 4
cache_capacity = 2

[walk]
seed = 11
num_walks = 4
walk_length = 8

[sgns]
seed = 12
dim = 8
epochs = 2

[propagation]
seed = 13

[forest]
seed = 14
n_trees = 15
max_depth = 8
min_samples_leaf = 2

[split]
seed = 15

[synth]
seed = 16
n_communities = 6
nodes_per_community = 25
p_intra = 0.2
p_inter = 0.002
risky_fraction = 0.34
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("risksea.toml");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn cli(cfg: &Path, workers: usize, args: &[&str]) -> Result<Vec<Manifest>, CliError> {
    let mut full = vec![
        "risksea".to_string(),
        "--config".into(),
        cfg.display().to_string(),
        "--workers".into(),
        workers.to_string(),
    ];
    full.extend(args.iter().map(|s| s.to_string()));
    run_args(full)
}

fn ok(cfg: &Path, workers: usize, args: &[&str]) -> Vec<Manifest> {
    cli(cfg, workers, args).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn ingest_and_embed(cfg: &Path, workers: usize, snapshot: u64) {
    let root = cfg.parent().unwrap();
    let input = root.join(format!("synth/epoch-{snapshot}.csv"));
    let s = snapshot.to_string();
    ok(cfg, workers, &["ingest", "--input", input.to_str().unwrap()]);
    ok(cfg, workers, &["snapshot", "--snapshot", &s]);
    if snapshot == 1 {
        ok(cfg, workers, &["embed", "--snapshot", &s]);
    } else {
        ok(cfg, workers, &["increment-embed", "--snapshot", &s]);
    }
}

fn full_pipeline(cfg: &Path, workers: usize) {
    ok(cfg, workers, &["synth"]);
    for s in 1..=3 {
        ingest_and_embed(cfg, workers, s);
    }
    ok(cfg, workers, &["features", "--snapshot", "3"]);
    let root = cfg.parent().unwrap();
    let features = root.join("features/features-3-dynamic.csv");
    ok(cfg, workers, &["train-risk", "--features", features.to_str().unwrap()]);
    ok(
        cfg,
        workers,
        &[
            "score",
            "--model",
            root.join("risk/model-all.json").to_str().unwrap(),
            "--features",
            features.to_str().unwrap(),
        ],
    );
    ok(
        cfg,
        workers,
        &[
            "evaluate",
            "--scores",
            root.join("risk/scores-all.csv").to_str().unwrap(),
            "--split",
            root.join("risk/split-all.json").to_str().unwrap(),
        ],
    );
}

#[test]
fn synthetic_end_to_end_produces_a_valid_report() {
    let (dir, cfg) = setup();
    full_pipeline(&cfg, 1);
    let root = dir.path();

    let report: EvalReport = serde_json::from_str(&fs::read_to_string(root.join("risk/report-all.json")).unwrap()).unwrap();
    for v in [report.precision, report.recall, report.f1, report.pr_auc] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(report.positives > 0 && report.negatives > 0);
    assert_eq!(report.split_seed, Some(15));
    let split: SplitFile = serde_json::from_str(&fs::read_to_string(root.join("risk/split-all.json")).unwrap()).unwrap();
    assert_eq!(report.positives + report.negatives, split.test.len());

    let scores = fs::read_to_string(root.join("risk/scores-all.csv")).unwrap();
    let mut lines = scores.lines();
    assert_eq!(lines.next(), Some("address,risk_score"));
    for l in lines {
        let s: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&s));
    }

    for name in ["ingest-1", "snapshot-1", "walk-1", "train-embed-1", "increment-embed-3", "evaluate-all"] {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(root.join(format!("manifests/{name}.json"))).unwrap()).unwrap();
        assert!(!m.outputs.is_empty(), "{name}");
        assert!(m.outputs.iter().all(|d| d.sha256.len() == 64));
    }

    ok(&cfg, 1, &["propagate", "--snapshot", "3"]);
    ok(&cfg, 1, &["features", "--snapshot", "3", "--embeddings", "propagated"]);
    assert!(root.join("features/features-3-propagated.csv").exists());
    let cov: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("embeddings/coverage-3.json")).unwrap()).unwrap();
    assert!(cov.is_object());
}

fn manifest_texts(root: &Path) -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(root.join("manifests"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_and_worker_counts_reproduce_every_output() {
    let (a, cfg_a) = setup();
    let (b, cfg_b) = setup();
    let (c, cfg_c) = setup();
    full_pipeline(&cfg_a, 1);
    full_pipeline(&cfg_b, 1);
    full_pipeline(&cfg_c, 3);
    let ma = manifest_texts(a.path());
    assert!(ma.len() >= 15);
    assert_eq!(ma, manifest_texts(b.path()));
    assert_eq!(ma, manifest_texts(c.path()));
    assert_eq!(
        fs::read(a.path().join("embeddings/embeddings-3.txt")).unwrap(),
        fs::read(c.path().join("embeddings/embeddings-3.txt")).unwrap()
    );
}

#[test]
fn empty_delta_carries_the_model_forward() {
    let (dir, cfg) = setup();
    ok(&cfg, 1, &["synth"]);
    ingest_and_embed(&cfg, 1, 1);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "timestamp,from,to,amount,asset\n").unwrap();
    ok(&cfg, 1, &["ingest", "--input", empty.to_str().unwrap()]);
    ok(&cfg, 1, &["snapshot"]);
    let m = ok(&cfg, 1, &["increment-embed"]);
    assert_eq!(m[0].notes["empty_delta"], serde_json::json!(true));
    let before = fs::read_to_string(dir.path().join("embeddings/embeddings-1.txt")).unwrap();
    let after = fs::read_to_string(dir.path().join("embeddings/embeddings-2.txt")).unwrap();
    let (h1, body1) = before.split_once('\n').unwrap();
    let (h2, body2) = after.split_once('\n').unwrap();
    assert!(h1.contains("snapshot=1") && h2.contains("snapshot=2"), "{h1} / {h2}");
    assert_eq!(body1, body2);
}

#[test]
fn increment_without_prior_model_is_a_config_error() {
    let (dir, cfg) = setup();
    ok(&cfg, 1, &["synth"]);
    for s in 1..=2 {
        let input = dir.path().join(format!("synth/epoch-{s}.csv"));
        ok(&cfg, 1, &["ingest", "--input", input.to_str().unwrap()]);
        ok(&cfg, 1, &["snapshot"]);
    }
    let err = cli(&cfg, 1, &["increment-embed"]).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.message().contains("prior model"), "{}", err.message());
    assert!(!dir.path().join("embeddings/embeddings-2.txt").exists());
}

#[test]
fn failing_stage_leaves_no_partial_outputs() {
    let (dir, cfg) = setup();
    ok(&cfg, 1, &["synth"]);
    ingest_and_embed(&cfg, 1, 1);
    let input = dir.path().join("synth/epoch-2.csv");
    ok(&cfg, 1, &["ingest", "--input", input.to_str().unwrap()]);
    ok(&cfg, 1, &["snapshot"]);
    fs::write(dir.path().join("models/model-1.ckpt"), b"not a checkpoint").unwrap();

    let err = cli(&cfg, 1, &["increment-embed"]).unwrap_err();
    assert!(matches!(err, CliError::Data(_)), "{err:?}");
    for p in [
        "walks/delta-1-2.json",
        "walks/walks-2-from-1.txt",
        "models/model-2.ckpt",
        "embeddings/embeddings-2.txt",
        "manifests/increment-embed-2.json",
    ] {
        assert!(!dir.path().join(p).exists(), "{p} left behind");
    }
}

#[test]
fn sweep_writes_one_row_per_configuration() {
    let (dir, cfg) = setup();
    ok(&cfg, 1, &["synth"]);
    let input = dir.path().join("synth/epoch-1.csv");
    ok(&cfg, 1, &["ingest", "--input", input.to_str().unwrap()]);
    ok(
        &cfg,
        1,
        &["sweep", "--num-walks", "1,2", "--walk-length", "4", "--p", "1", "--q", "0.5,2"],
    );
    let text = fs::read_to_string(dir.path().join("risk/sweep-1.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "num_walks,walk_length,p,q,pr_auc,f1");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((0.0..=1.0).contains(&f[4]) && (0.0..=1.0).contains(&f[5]));
    }
}

fn run_bin(cfg: &Path, args: &[&str]) -> (i32, String) {
    let out = Proc::new(env!("CARGO_BIN_EXE_risksea"))
        .arg("--config")
        .arg(cfg)
        .args(args)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn json_error(stderr: &str) -> serde_json::Value {
    let line = stderr.lines().last().expect("stderr line");
    serde_json::from_str(line).expect("stderr is a JSON line")
}

#[test]
fn exit_codes_and_structured_errors() {
    let (dir, cfg) = setup();

    let (code, err) = run_bin(&dir.path().join("absent.toml"), &["snapshot"]);
    assert_eq!(code, 2);
    assert_eq!(json_error(&err)["error"], "config");

    let (code, err) = run_bin(&cfg, &["train-embed"]);
    assert_eq!(code, 2);
    assert_eq!(json_error(&err)["stage"], "train-embed");

    let (code, _) = run_bin(&cfg, &["ingest", "--input", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(code, 2);

    let (code, _) = run_bin(&cfg, &["--workers", "0", "synth"]);
    assert_eq!(code, 2);

    let (code, _) = run_bin(&cfg, &["no-such-stage"]);
    assert_eq!(code, 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "when,who\n1,2\n").unwrap();
    let (code, err) = run_bin(&cfg, &["ingest", "--input", bad.to_str().unwrap()]);
    assert_eq!(code, 3);
    let e = json_error(&err);
    assert_eq!(e["error"], "data");
    assert_eq!(e["stage"], "ingest");
    assert!(!dir.path().join("edgelog/snapshot-1.csv").exists());

    let (code, _) = run_bin(&cfg, &["synth"]);
    assert_eq!(code, 0);
    let features = dir.path().join("garbage.csv");
    fs::write(&features, "not,a,feature,file\n").unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, "{}").unwrap();
    let (code, _) = run_bin(&cfg, &["score", "--model", model.to_str().unwrap(), "--features", features.to_str().unwrap()]);
    assert_eq!(code, 3);
}
