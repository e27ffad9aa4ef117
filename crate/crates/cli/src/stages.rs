use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use risksea::embedder::{EmbeddingTable, SgnsHyper, SgnsModel, TrainMode};
use risksea::experiment::{self, core_propagation, walk_grid, CorePropagation, ExperimentConfig, FeatureSet};
use risksea::features::{assemble, column_names, extract_all, read_feature_csv, write_feature_csv, SCHEMA_VERSION};
use risksea::riskmodel::{
    evaluate as eval_scores, read_label_csv, resolve_labels, stratified_split, train_forest, ForestModel,
};
use risksea::synthgen::generate;
use risksea::txgraph::{
    build_neighbor_store, store_dir, write_atomically, write_edge_csv, DiskNeighborStore, EdgeLog,
};
use risksea::walkgen::{generate_walks_partitioned, NodeSelection, WalkCorpus};
use risksea::Addr;

use crate::config::{Mode, PipelineConfig};
use crate::manifest::{digest, Manifest};
use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

/// Serialized risk classifier plus the feature schema it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModelFile {
    pub schema: String,
    pub feature_set: FeatureSet,
    pub dim: usize,
    pub columns: Vec<String>,
    pub forest: ForestModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<Addr>,
    pub test: Vec<Addr>,
}

struct StageRun {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    tag: Option<String>,
    seeds: BTreeMap<String, u64>,
    notes: BTreeMap<String, Value>,
}

impl StageRun {
    fn input(&mut self, p: &Path, hint: &str) -> Result<PathBuf> {
        if !p.exists() {
            return Err(CliError::Config(format!("missing input {}: {hint}", p.display())));
        }
        self.inputs.push(p.to_path_buf());
        Ok(p.to_path_buf())
    }

    fn output(&mut self, p: PathBuf) -> Result<PathBuf> {
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
        }
        self.outputs.push(p.clone());
        Ok(p)
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes.insert(key.into(), serde_json::to_value(value).expect("serializable note"));
    }

    fn seed(&mut self, key: &str, value: u64) {
        self.seeds.insert(key.into(), value);
    }
}

fn remove_partial(paths: &[PathBuf]) {
    for p in paths {
        if p.is_dir() {
            let _ = fs::remove_dir_all(p);
        } else {
            let _ = fs::remove_file(p);
        }
        let mut tmp = p.as_os_str().to_owned();
        tmp.push(".tmp");
        let _ = fs::remove_file(PathBuf::from(tmp));
    }
}

/// Run `body`, then write the stage manifest; on any failure remove every
/// output the stage registered.
fn execute<F>(cfg: &PipelineConfig, stage: &str, snapshot: Option<u64>, config: Value, body: F) -> Result<Manifest>
where
    F: FnOnce(&mut StageRun) -> Result<()>,
{
    let mut run = StageRun {
        inputs: Vec::new(),
        outputs: Vec::new(),
        tag: None,
        seeds: BTreeMap::new(),
        notes: BTreeMap::new(),
    };
    let finish = |run: &mut StageRun| -> Result<Manifest> {
        let root = &cfg.paths.root;
        let manifest = Manifest {
            stage: stage.to_string(),
            snapshot,
            inputs: run.inputs.iter().map(|p| digest(p, root)).collect::<Result<_>>()?,
            outputs: run.outputs.iter().map(|p| digest(p, root)).collect::<Result<_>>()?,
            config,
            seeds: std::mem::take(&mut run.seeds),
            notes: std::mem::take(&mut run.notes),
        };
        let mut name = stage.to_string();
        if let Some(s) = snapshot {
            name.push_str(&format!("-{s}"));
        }
        if let Some(t) = &run.tag {
            name.push_str(&format!("-{t}"));
        }
        let path = run.output(cfg.paths.manifests.join(format!("{name}.json")))?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomically(&path, |w| writeln!(w, "{text}"))?;
        Ok(manifest)
    };
    match body(&mut run).and_then(|_| finish(&mut run)) {
        Ok(m) => Ok(m),
        Err(e) => {
            remove_partial(&run.outputs);
            Err(e)
        }
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| data_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(write_atomically(path, |w| w.write_all(text.as_bytes()))?)
}

fn sgns_hyper(cfg: &PipelineConfig, workers: usize) -> SgnsHyper {
    let mut h = cfg.sgns;
    if let TrainMode::Parallel { .. } = h.mode {
        h.mode = TrainMode::Parallel { workers };
    }
    h
}

fn open_log(cfg: &PipelineConfig) -> Result<EdgeLog> {
    Ok(EdgeLog::open(&cfg.paths.edge_log)?)
}

/// Requested snapshot, or the latest one; must exist in the log.
fn resolve_snapshot(log: &EdgeLog, requested: Option<u64>) -> Result<u64> {
    let id = match requested {
        Some(id) => id,
        None => log
            .latest()
            .map(|s| s.snapshot_id)
            .ok_or_else(|| CliError::Config("no snapshot has been ingested yet".into()))?,
    };
    if log.snapshot(id).is_err() {
        return Err(CliError::Config(format!("snapshot {id} has not been ingested")));
    }
    Ok(id)
}

fn log_inputs(run: &mut StageRun, log: &EdgeLog, through: u64) -> Result<()> {
    for id in 1..=through {
        run.input(&log.dir().join(format!("snapshot-{id}.csv")), "edge log is incomplete")?;
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<BTreeMap<Addr, u8>> {
    let raw = read_label_csv(open(path)?).map_err(|e| data_err(path, e))?;
    Ok(resolve_labels(&raw))
}

fn label_path(cfg: &PipelineConfig, flag: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.paths.labels.clone())
}

fn require_label_path(cfg: &PipelineConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    label_path(cfg, flag).ok_or_else(|| CliError::Config("no label file: pass --labels or set paths.labels".into()))
}

fn file_stem(path: &Path, prefix: &str) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix(prefix).unwrap_or(&stem).to_string()
}

fn walk_file(cfg: &PipelineConfig, id: u64, from: Option<u64>) -> PathBuf {
    match from {
        None => cfg.paths.walks.join(format!("walks-{id}.txt")),
        Some(f) => cfg.paths.walks.join(format!("walks-{id}-from-{f}.txt")),
    }
}

fn model_file(cfg: &PipelineConfig, id: u64) -> PathBuf {
    cfg.paths.models.join(format!("model-{id}.ckpt"))
}

fn embedding_file(cfg: &PipelineConfig, id: u64) -> PathBuf {
    cfg.paths.embeddings.join(format!("embeddings-{id}.txt"))
}

fn store_hint(id: u64) -> String {
    format!("build it with `risksea snapshot --snapshot {id}`")
}

pub(crate) fn dispatch(cfg: &PipelineConfig, workers: usize, cmd: &Command) -> Result<Vec<Manifest>> {
    let one = |m: Result<Manifest>| m.map(|m| vec![m]);
    match cmd {
        Command::Ingest { input, snapshot } => one(ingest(cfg, input, *snapshot)),
        Command::Snapshot(a) => one(snapshot(cfg, a.snapshot)),
        Command::Delta { prev, cur } => one(delta(cfg, *prev, *cur)),
        Command::Walk { at, delta_from } => one(walk(cfg, workers, at.snapshot, *delta_from)),
        Command::TrainEmbed(a) => one(train_embed(cfg, workers, a.snapshot)),
        Command::IncrementEmbed { at, prev } => one(increment_embed(cfg, workers, at.snapshot, *prev)),
        Command::Embed(a) => match cfg.mode {
            Mode::Bootstrap => Ok(vec![
                walk(cfg, workers, a.snapshot, None)?,
                train_embed(cfg, workers, a.snapshot)?,
            ]),
            Mode::Increment => one(increment_embed(cfg, workers, a.snapshot, None)),
        },
        Command::Propagate(a) => one(propagate(cfg, workers, a.snapshot)),
        Command::Features { at, embeddings, labels } => one(features(cfg, at.snapshot, embeddings, labels)),
        Command::TrainRisk {
            features,
            labels,
            feature_set,
            name,
        } => one(train_risk(cfg, features, labels, feature_set, name)),
        Command::Score { model, features, out } => one(score(cfg, model, features, out)),
        Command::Evaluate {
            scores,
            labels,
            split,
            threshold,
            out,
        } => one(evaluate(cfg, scores, labels, split, *threshold, out)),
        Command::Synth { out } => one(synth(cfg, out)),
        Command::Sweep {
            at,
            labels,
            num_walks,
            walk_length,
            p,
            q,
            feature_set,
            out,
        } => one(sweep(
            cfg,
            workers,
            SweepArgs {
                snapshot: at.snapshot,
                labels,
                num_walks,
                walk_length,
                p,
                q,
                feature_set,
                out,
            },
        )),
    }
}

fn ingest(cfg: &PipelineConfig, input: &Path, requested: Option<u64>) -> Result<Manifest> {
    let mut log = open_log(cfg)?;
    let expected = log.latest().map_or(1, |s| s.snapshot_id + 1);
    let id = requested.unwrap_or(expected);
    if id != expected {
        return Err(CliError::Config(format!("next snapshot id must be {expected}, got {id}")));
    }
    execute(cfg, "ingest", Some(id), json!({}), |run| {
        let input = run.input(input, "edge-list CSV to ingest")?;
        let file = File::open(&input).map_err(|e| data_err(&input, e))?;
        run.output(log.dir().join(format!("snapshot-{id}.csv")))?;
        let report = log.ingest_csv(file, id)?;
        let snap = log.snapshot(id)?;
        run.note("new_nodes", report.new_nodes);
        run.note("new_edges", report.new_edges);
        run.note("rejected_rows", report.rejected.len());
        run.note("rejected_sample", &report.rejected[..report.rejected.len().min(20)]);
        run.note("time_upper_bound", snap.time_upper_bound);
        Ok(())
    })
}

fn snapshot(cfg: &PipelineConfig, requested: Option<u64>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, requested)?;
    execute(cfg, "snapshot", Some(id), json!({ "store": cfg.store }), |run| {
        log_inputs(run, &log, id)?;
        let dir = run.output(store_dir(&cfg.paths.stores, id))?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| data_err(&dir, e))?;
        }
        let store = build_neighbor_store(&log, id, cfg.store.top_k, cfg.store.partitions, &dir)?;
        run.note("node_count", store.len());
        Ok(())
    })
}

fn delta(cfg: &PipelineConfig, prev: Option<u64>, cur: Option<u64>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let cur = resolve_snapshot(&log, cur)?;
    let prev = prev.unwrap_or(cur.saturating_sub(1));
    if prev == 0 || prev >= cur {
        return Err(CliError::Config(format!("delta needs 1 <= prev < cur, got prev={prev} cur={cur}")));
    }
    resolve_snapshot(&log, Some(prev))?;
    execute(cfg, "delta", Some(cur), json!({ "prev": prev }), |run| {
        log_inputs(run, &log, cur)?;
        let set = log.compute_delta_nodes(prev, cur)?;
        let out = run.output(cfg.paths.walks.join(format!("delta-{prev}-{cur}.json")))?;
        write_text(&out, &serde_json::to_string_pretty(&set).expect("serializable"))?;
        run.note("delta_nodes", set.len());
        Ok(())
    })
}

fn walk(cfg: &PipelineConfig, workers: usize, requested: Option<u64>, from: Option<u64>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, requested)?;
    execute(cfg, "walk", Some(id), json!({ "walk": cfg.walk, "store": cfg.store }), |run| {
        if let Some(f) = from {
            run.tag = Some(format!("from-{f}"));
        }
        run.seed("walk", cfg.walk.seed);
        let dir = run.input(&store_dir(&cfg.paths.stores, id), &store_hint(id))?;
        let store = DiskNeighborStore::open(&dir, cfg.store.cache_capacity)?;
        let selection = match from {
            None => NodeSelection::All,
            Some(f) => {
                log_inputs(run, &log, id)?;
                NodeSelection::Nodes(log.compute_delta_nodes(f, id)?.nodes.into_iter().collect())
            }
        };
        let corpus = generate_walks_partitioned(&selection, &store, &cfg.walk, workers)?;
        let out = run.output(walk_file(cfg, id, from))?;
        write_atomically(&out, |w| corpus.write_to(w))?;
        run.note("walks", corpus.len());
        run.note("tokens", corpus.token_count());
        Ok(())
    })
}

fn write_model(run: &mut StageRun, cfg: &PipelineConfig, id: u64, model: &SgnsModel) -> Result<()> {
    let mp = run.output(model_file(cfg, id))?;
    let mut bytes = Vec::new();
    model.save(&mut bytes)?;
    write_atomically(&mp, |w| w.write_all(&bytes))?;
    let ep = run.output(embedding_file(cfg, id))?;
    let table = model.export_embeddings();
    write_atomically(&ep, |w| table.write_to(w))?;
    run.note("vocab", model.vocab_len());
    Ok(())
}

fn train_embed(cfg: &PipelineConfig, workers: usize, requested: Option<u64>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, requested)?;
    let hyper = sgns_hyper(cfg, workers);
    execute(cfg, "train-embed", Some(id), json!({ "sgns": cfg.sgns }), |run| {
        run.seed("sgns", hyper.seed);
        let wp = run.input(
            &walk_file(cfg, id, None),
            &format!("generate it with `risksea walk --snapshot {id}`"),
        )?;
        let corpus = WalkCorpus::read_from(open(&wp)?)?;
        let model = SgnsModel::bootstrap_train(&corpus, &hyper, id)?;
        write_model(run, cfg, id, &model)
    })
}

fn increment_embed(cfg: &PipelineConfig, workers: usize, requested: Option<u64>, prev: Option<u64>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, requested)?;
    let prev = prev.unwrap_or(id.saturating_sub(1));
    if prev == 0 || prev >= id {
        return Err(CliError::Config(format!(
            "increment needs a previous snapshot below {id}, got {prev}"
        )));
    }
    resolve_snapshot(&log, Some(prev))?;
    let hyper = sgns_hyper(cfg, workers);
    let config = json!({ "walk": cfg.walk, "sgns": cfg.sgns, "store": cfg.store, "prev": prev });
    execute(cfg, "increment-embed", Some(id), config, |run| {
        run.seed("walk", cfg.walk.seed);
        run.seed("sgns", hyper.seed);
        log_inputs(run, &log, id)?;
        let dir = run.input(&store_dir(&cfg.paths.stores, id), &store_hint(id))?;
        let mp = run.input(
            &model_file(cfg, prev),
            "increment mode requires a prior model; run train-embed or increment-embed for it first",
        )?;

        let delta = log.compute_delta_nodes(prev, id)?;
        let dp = run.output(cfg.paths.walks.join(format!("delta-{prev}-{id}.json")))?;
        write_text(&dp, &serde_json::to_string_pretty(&delta).expect("serializable"))?;

        let store = DiskNeighborStore::open(&dir, cfg.store.cache_capacity)?;
        let selection = NodeSelection::Nodes(delta.nodes.iter().cloned().collect());
        let walks = generate_walks_partitioned(&selection, &store, &cfg.walk, workers)?;
        let wp = run.output(walk_file(cfg, id, Some(prev)))?;
        write_atomically(&wp, |w| walks.write_to(w))?;

        let model = SgnsModel::load(open(&mp)?)?;
        let next = model.incremental_train(&walks, &hyper, id)?;
        write_model(run, cfg, id, &next)?;
        run.note("delta_nodes", delta.len());
        run.note("delta_walks", walks.len());
        run.note("empty_delta", delta.is_empty());
        if delta.is_empty() {
            run.note("model_copied_forward_from", prev);
        }
        Ok(())
    })
}

fn propagate(cfg: &PipelineConfig, workers: usize, requested: Option<u64>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, requested)?;
    let core_snapshot = cfg.propagation.core_snapshot;
    resolve_snapshot(&log, Some(core_snapshot))?;
    let settings = CorePropagation {
        walk: cfg.walk,
        sgns: sgns_hyper(cfg, workers),
        top_k: cfg.store.top_k,
        core_fraction: cfg.propagation.core_fraction,
        sample_n: cfg.propagation.sample_n,
        seed: cfg.propagation.seed,
        core_snapshot,
        workers,
    };
    let config = json!({ "propagation": cfg.propagation, "walk": cfg.walk, "sgns": cfg.sgns, "store": cfg.store });
    execute(cfg, "propagate", Some(id), config, |run| {
        run.seed("propagation", cfg.propagation.seed);
        run.seed("walk", cfg.walk.seed);
        run.seed("sgns", cfg.sgns.seed);
        log_inputs(run, &log, core_snapshot)?;
        let dir = run.input(&store_dir(&cfg.paths.stores, id), &store_hint(id))?;
        let store = DiskNeighborStore::open(&dir, cfg.store.cache_capacity)?;
        let records = log.records_through(core_snapshot)?;
        let (core, table, coverage) = core_propagation(&records, &store, &settings)?;
        let tp = run.output(cfg.paths.embeddings.join(format!("propagated-{id}.txt")))?;
        write_atomically(&tp, |w| table.write_to(w))?;
        let cp = run.output(cfg.paths.embeddings.join(format!("coverage-{id}.json")))?;
        write_text(&cp, &format!("{}\n", coverage.to_json_line()))?;
        let kp = run.output(cfg.paths.embeddings.join(format!("core-{id}.json")))?;
        write_text(&kp, &serde_json::to_string_pretty(&core).expect("serializable"))?;
        run.note("core_size", core.len());
        run.note("coverage", coverage);
        Ok(())
    })
}

fn features(cfg: &PipelineConfig, requested: Option<u64>, kind: &str, labels: &Option<PathBuf>) -> Result<Manifest> {
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, requested)?;
    let table_path = match kind {
        "dynamic" => embedding_file(cfg, id),
        "propagated" => cfg.paths.embeddings.join(format!("propagated-{id}.txt")),
        other => {
            return Err(CliError::Config(format!(
                "--embeddings must be dynamic or propagated, got {other:?}"
            )))
        }
    };
    execute(cfg, "features", Some(id), json!({ "embeddings": kind }), |run| {
        run.tag = Some(kind.to_string());
        log_inputs(run, &log, id)?;
        let tp = run.input(&table_path, "produce it with train-embed / increment-embed / propagate")?;
        let table = EmbeddingTable::read_from(open(&tp)?)?;
        let records = log.records_through(id)?;
        let mut addrs: BTreeSet<Addr> = records.iter().flat_map(|r| [r.from.clone(), r.to.clone()]).collect();
        if let Some(lp) = label_path(cfg, labels) {
            let lp = run.input(&lp, "label CSV")?;
            addrs.extend(read_labels(&lp)?.into_keys());
        }
        let addrs: Vec<Addr> = addrs.into_iter().collect();
        let behavioral = extract_all(&records, &addrs);
        let rows = addrs
            .iter()
            .map(|a| {
                let (n, t) = &behavioral[a];
                assemble(a, n, t, table.get(a), table.dim())
            })
            .collect::<risksea::Result<Vec<_>>>()?;
        let out = run.output(cfg.paths.features.join(format!("features-{id}-{kind}.csv")))?;
        let mut bytes = Vec::new();
        write_feature_csv(&mut bytes, &rows, table.dim())?;
        write_atomically(&out, |w| w.write_all(&bytes))?;
        run.note("rows", rows.len());
        run.note("with_embedding", rows.iter().filter(|r| table.contains(&r.address)).count());
        Ok(())
    })
}

fn parse_set(s: &str) -> Result<FeatureSet> {
    Ok(s.parse::<FeatureSet>()?)
}

fn train_risk(
    cfg: &PipelineConfig,
    features: &Path,
    labels: &Option<PathBuf>,
    set: &str,
    name: &Option<String>,
) -> Result<Manifest> {
    let set = parse_set(set)?;
    let name = name.clone().unwrap_or_else(|| set.to_string());
    let lp = require_label_path(cfg, labels)?;
    let config = json!({ "forest": cfg.forest, "split": cfg.split, "feature_set": set });
    execute(cfg, "train-risk", None, config, |run| {
        run.tag = Some(name.clone());
        run.seed("forest", cfg.forest.seed);
        run.seed("split", cfg.split.seed);
        let fp = run.input(features, "feature CSV from the features stage")?;
        let lp = run.input(&lp, "label CSV")?;
        let (dim, rows) = read_feature_csv(open(&fp)?)?;
        let labels = read_labels(&lp)?;
        let labelled: Vec<_> = rows.iter().filter_map(|r| labels.get(&r.address).map(|&y| (r, y))).collect();
        if labelled.is_empty() {
            return Err(CliError::Data("no feature row has a label".into()));
        }
        let cols = set.columns(dim);
        let ys: Vec<u8> = labelled.iter().map(|(_, y)| *y).collect();
        let split = stratified_split(&ys, cfg.split.test_fraction, cfg.split.seed);
        let x: Vec<Vec<f64>> = split
            .train
            .iter()
            .map(|&i| cols.iter().map(|&c| labelled[i].0.values[c]).collect())
            .collect();
        let y: Vec<u8> = split.train.iter().map(|&i| ys[i]).collect();
        let forest = train_forest(&x, &y, &cfg.forest, &set.log1p_positions(dim))?;
        let all_names = column_names(dim);
        let file = RiskModelFile {
            schema: SCHEMA_VERSION.to_string(),
            feature_set: set,
            dim,
            columns: cols.iter().map(|&c| all_names[c].clone()).collect(),
            forest,
        };
        let split_file = SplitFile {
            seed: split.seed,
            test_fraction: cfg.split.test_fraction,
            train: split.train.iter().map(|&i| labelled[i].0.address.clone()).collect(),
            test: split.test.iter().map(|&i| labelled[i].0.address.clone()).collect(),
        };
        let mp = run.output(cfg.paths.risk.join(format!("model-{name}.json")))?;
        write_text(&mp, &serde_json::to_string(&file).expect("serializable"))?;
        let sp = run.output(cfg.paths.risk.join(format!("split-{name}.json")))?;
        write_text(&sp, &serde_json::to_string_pretty(&split_file).expect("serializable"))?;
        run.note("train_rows", split.train.len());
        run.note("test_rows", split.test.len());
        Ok(())
    })
}

fn score(cfg: &PipelineConfig, model: &Path, features: &Path, out: &Option<PathBuf>) -> Result<Manifest> {
    let stem = file_stem(model, "model-");
    let out = out.clone().unwrap_or_else(|| cfg.paths.risk.join(format!("scores-{stem}.csv")));
    execute(cfg, "score", None, json!({}), |run| {
        run.tag = Some(stem.clone());
        let mp = run.input(model, "model from train-risk")?;
        let fp = run.input(features, "feature CSV")?;
        let file: RiskModelFile = serde_json::from_reader(open(&mp)?).map_err(|e| data_err(&mp, e))?;
        if file.schema != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "model schema {} does not match {SCHEMA_VERSION}",
                file.schema
            )));
        }
        let (dim, rows) = read_feature_csv(open(&fp)?)?;
        if dim != file.dim {
            return Err(CliError::Data(format!(
                "feature file has embedding dimension {dim}, model expects {}",
                file.dim
            )));
        }
        let cols = file.feature_set.columns(dim);
        let mut text = String::from("address,risk_score\n");
        for r in &rows {
            let x: Vec<f64> = cols.iter().map(|&c| r.values[c]).collect();
            let s = file.forest.score(&x)?;
            text.push_str(&format!("{},{s}\n", r.address));
        }
        let op = run.output(out.clone())?;
        write_text(&op, &text)?;
        run.note("rows", rows.len());
        Ok(())
    })
}

fn read_scores(path: &Path) -> Result<Vec<(Addr, f64)>> {
    let mut lines = open(path)?.lines();
    let header = lines.next().transpose().map_err(|e| data_err(path, e))?;
    if header.as_deref() != Some("address,risk_score") {
        return Err(data_err(path, "expected header address,risk_score"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| data_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (a, s) = line
            .split_once(',')
            .ok_or_else(|| data_err(path, format!("line {}: expected two fields", i + 2)))?;
        let s: f64 = s
            .parse()
            .map_err(|e| data_err(path, format!("line {}: {e}", i + 2)))?;
        out.push((Addr::from(a), s));
    }
    Ok(out)
}

fn evaluate(
    cfg: &PipelineConfig,
    scores: &Path,
    labels: &Option<PathBuf>,
    split: &Option<PathBuf>,
    threshold: f64,
    out: &Option<PathBuf>,
) -> Result<Manifest> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Config(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let stem = file_stem(scores, "scores-");
    let out = out.clone().unwrap_or_else(|| cfg.paths.risk.join(format!("report-{stem}.json")));
    let lp = require_label_path(cfg, labels)?;
    execute(cfg, "evaluate", None, json!({ "threshold": threshold }), |run| {
        run.tag = Some(stem.clone());
        let sp = run.input(scores, "score CSV from the score stage")?;
        let lp = run.input(&lp, "label CSV")?;
        let labels = read_labels(&lp)?;
        let keep: Option<(u64, BTreeSet<Addr>)> = match split {
            None => None,
            Some(p) => {
                let p = run.input(p, "split file from train-risk")?;
                let f: SplitFile = serde_json::from_reader(open(&p)?).map_err(|e| data_err(&p, e))?;
                Some((f.seed, f.test.into_iter().collect()))
            }
        };
        let pairs: Vec<(f64, u8)> = read_scores(&sp)?
            .into_iter()
            .filter(|(a, _)| keep.as_ref().map_or(true, |(_, k)| k.contains(a)))
            .filter_map(|(a, s)| labels.get(&a).map(|&y| (s, y)))
            .collect();
        let mut report = eval_scores(&pairs, threshold)?;
        report.split_seed = keep.map(|(s, _)| s);
        let op = run.output(out.clone())?;
        write_text(&op, &serde_json::to_string_pretty(&report).expect("serializable"))?;
        run.note("pr_auc", report.pr_auc);
        run.note("f1", report.f1);
        Ok(())
    })
}

fn synth(cfg: &PipelineConfig, out: &Option<PathBuf>) -> Result<Manifest> {
    let sc = cfg
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("the synth stage needs a [synth] section".into()))?;
    let dir = out.clone().unwrap_or_else(|| cfg.paths.synth.clone());
    execute(cfg, "synth", None, json!({ "synth": sc }), |run| {
        run.seed("synth", sc.seed);
        let data = generate(sc)?;
        for (i, recs) in data.epochs.iter().enumerate() {
            let p = run.output(dir.join(format!("epoch-{}.csv", i + 1)))?;
            write_atomically(&p, |w| write_edge_csv(w, recs))?;
        }
        let lp = run.output(dir.join("labels.csv"))?;
        write_atomically(&lp, |w| risksea::riskmodel::write_label_csv(w, &data.labels))?;
        let np = run.output(dir.join("nodes.csv"))?;
        write_atomically(&np, |w| {
            writeln!(w, "address,community,arrival_epoch,class")?;
            for n in &data.nodes {
                writeln!(w, "{},{},{},{}", n.address, n.community, n.arrival_epoch, n.class)?;
            }
            Ok(())
        })?;
        run.note("nodes", data.nodes.len());
        run.note("records_per_epoch", data.epochs.iter().map(Vec::len).collect::<Vec<_>>());
        Ok(())
    })
}

struct SweepArgs<'a> {
    snapshot: Option<u64>,
    labels: &'a Option<PathBuf>,
    num_walks: &'a [usize],
    walk_length: &'a [usize],
    p: &'a [f64],
    q: &'a [f64],
    feature_set: &'a str,
    out: &'a Option<PathBuf>,
}

fn sweep(cfg: &PipelineConfig, workers: usize, a: SweepArgs<'_>) -> Result<Manifest> {
    let set = parse_set(a.feature_set)?;
    let log = open_log(cfg)?;
    let id = resolve_snapshot(&log, a.snapshot)?;
    let lp = require_label_path(cfg, a.labels)?;
    let grid = walk_grid(a.num_walks, a.walk_length, a.p, a.q, cfg.walk.seed);
    if grid.is_empty() {
        return Err(CliError::Config("empty hyperparameter grid".into()));
    }
    for g in &grid {
        g.validate()?;
    }
    let exp = ExperimentConfig {
        walk: cfg.walk,
        sgns: sgns_hyper(cfg, workers),
        forest: cfg.forest,
        top_k: cfg.store.top_k,
        sample_n: cfg.propagation.sample_n,
        core_fraction: cfg.propagation.core_fraction,
        test_fraction: cfg.split.test_fraction,
        split_seed: cfg.split.seed,
        workers,
    };
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.risk.join(format!("sweep-{id}.csv")));
    let config = json!({
        "grid": { "num_walks": a.num_walks, "walk_length": a.walk_length, "p": a.p, "q": a.q },
        "feature_set": set, "sgns": cfg.sgns, "forest": cfg.forest, "split": cfg.split, "store": cfg.store,
    });
    execute(cfg, "sweep", Some(id), config, |run| {
        run.seed("walk", cfg.walk.seed);
        run.seed("sgns", cfg.sgns.seed);
        run.seed("forest", cfg.forest.seed);
        run.seed("split", cfg.split.seed);
        log_inputs(run, &log, id)?;
        let lp = run.input(&lp, "label CSV")?;
        let labels = read_labels(&lp)?;
        let records = log.records_through(id)?;
        let rows = experiment::sweep(&records, &labels, &grid, set, &exp)?;
        let mut text = String::from("num_walks,walk_length,p,q,pr_auc,f1\n");
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.num_walks, r.walk_length, r.p, r.q, r.pr_auc, r.f1
            ));
        }
        let op = run.output(out.clone())?;
        write_text(&op, &text)?;
        run.note("configs", rows.len());
        Ok(())
    })
}
