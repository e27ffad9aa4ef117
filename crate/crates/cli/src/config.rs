//! Pipeline configuration file (TOML).
//!
//! Every section that drives randomness must state its `seed`; all other keys
//! fall back to the library defaults. Relative paths resolve against the
//! directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use risksea::embedder::SgnsHyper;
use risksea::propagator::DEFAULT_SAMPLE_N;
use risksea::riskmodel::ForestConfig;
use risksea::synthgen::SynthConfig;
use risksea::txgraph::{DEFAULT_PARTITIONS, DEFAULT_TOP_K};
use risksea::walkgen::WalkParams;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bootstrap,
    Increment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreConfig {
    pub top_k: usize,
    pub partitions: usize,
    /// Neighbor lists kept by the walk stage's LRU cache.
    pub cache_capacity: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            top_k: DEFAULT_TOP_K,
            partitions: DEFAULT_PARTITIONS,
            cache_capacity: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    pub sample_n: usize,
    pub core_fraction: f64,
    /// Snapshot whose nodes form the core candidates.
    pub core_snapshot: u64,
    pub seed: u64,
}

impl PropagationConfig {
    fn new(seed: u64) -> Self {
        PropagationConfig {
            sample_n: DEFAULT_SAMPLE_N,
            core_fraction: 0.3,
            core_snapshot: 1,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Base for every default location below.
    pub root: PathBuf,
    pub edge_log: PathBuf,
    pub stores: PathBuf,
    pub walks: PathBuf,
    pub models: PathBuf,
    pub embeddings: PathBuf,
    pub features: PathBuf,
    pub risk: PathBuf,
    pub synth: PathBuf,
    pub manifests: PathBuf,
    pub labels: Option<PathBuf>,
}

impl Paths {
    fn under(root: &Path) -> Self {
        Paths {
            root: root.to_path_buf(),
            edge_log: root.join("edgelog"),
            stores: root.join("stores"),
            walks: root.join("walks"),
            models: root.join("models"),
            embeddings: root.join("embeddings"),
            features: root.join("features"),
            risk: root.join("risk"),
            synth: root.join("synth"),
            manifests: root.join("manifests"),
            labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub paths: Paths,
    pub store: StoreConfig,
    pub walk: WalkParams,
    pub sgns: SgnsHyper,
    pub propagation: PropagationConfig,
    pub forest: ForestConfig,
    pub split: SplitConfig,
    pub synth: Option<SynthConfig>,
}

const SECTIONS: [&str; 9] = [
    "mode",
    "paths",
    "store",
    "walk",
    "sgns",
    "propagation",
    "forest",
    "split",
    "synth",
];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Lay `overlay` over `base`, refusing keys `base` does not have.
fn merge(base: &mut toml::Table, overlay: &toml::Table, at: &str) -> Result<(), CliError> {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &format!("{at}.{k}"))?,
            (Some(slot), _) => *slot = v.clone(),
            (None, _) if k == "max_features" => {
                base.insert(k.clone(), v.clone());
            }
            (None, _) => return Err(config_err(format!("unknown key {at}.{k}"))),
        }
    }
    Ok(())
}

/// Section whose library defaults are built from its mandatory seed.
fn seeded<T, F>(doc: &toml::Table, name: &str, defaults: F) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce(u64) -> T,
{
    let table = match doc.get(name) {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(config_err(format!("[{name}] must be a table"))),
        None => return Err(config_err(format!("missing section [{name}] (its seed is mandatory)"))),
    };
    let seed = match table.get("seed") {
        Some(toml::Value::Integer(s)) if *s >= 0 => *s as u64,
        Some(_) => return Err(config_err(format!("{name}.seed must be a non-negative integer"))),
        None => return Err(config_err(format!("{name}.seed is mandatory"))),
    };
    let mut base = toml::Table::try_from(defaults(seed)).map_err(|e| config_err(format!("[{name}]: {e}")))?;
    merge(&mut base, table, name)?;
    base.try_into().map_err(|e| config_err(format!("[{name}]: {e}")))
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let doc: toml::Table = text.parse().map_err(|e| config_err(format!("config is not valid TOML: {e}")))?;
        if let Some(k) = doc.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(config_err(format!("unknown config section {k:?}")));
        }
        let mode = match doc.get("mode") {
            None => Mode::Bootstrap,
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|_| config_err("mode must be \"bootstrap\" or \"increment\""))?,
        };

        let root_rel = doc
            .get("paths")
            .and_then(|p| p.get("root"))
            .and_then(|r| r.as_str())
            .unwrap_or(".");
        let root = absolutize(base_dir, Path::new(root_rel));
        let mut paths = Paths::under(&root);
        if let Some(p) = doc.get("paths") {
            let t = p.as_table().ok_or_else(|| config_err("[paths] must be a table"))?;
            for (k, v) in t {
                let s = v.as_str().ok_or_else(|| config_err(format!("paths.{k} must be a string")))?;
                let p = absolutize(&root, Path::new(s));
                match k.as_str() {
                    "root" => {}
                    "edge_log" => paths.edge_log = p,
                    "stores" => paths.stores = p,
                    "walks" => paths.walks = p,
                    "models" => paths.models = p,
                    "embeddings" => paths.embeddings = p,
                    "features" => paths.features = p,
                    "risk" => paths.risk = p,
                    "synth" => paths.synth = p,
                    "manifests" => paths.manifests = p,
                    "labels" => paths.labels = Some(p),
                    _ => return Err(config_err(format!("unknown key paths.{k}"))),
                }
            }
        }

        let store = match doc.get("store") {
            None => StoreConfig::default(),
            Some(v) => {
                let mut base = toml::Table::try_from(StoreConfig::default()).expect("plain struct");
                let t = v.as_table().ok_or_else(|| config_err("[store] must be a table"))?;
                merge(&mut base, t, "store")?;
                base.try_into().map_err(|e| config_err(format!("[store]: {e}")))?
            }
        };

        let cfg = PipelineConfig {
            mode,
            paths,
            store,
            walk: seeded(&doc, "walk", WalkParams::new)?,
            sgns: seeded(&doc, "sgns", SgnsHyper::new)?,
            propagation: seeded(&doc, "propagation", PropagationConfig::new)?,
            forest: seeded(&doc, "forest", ForestConfig::new)?,
            split: seeded(&doc, "split", |seed| SplitConfig {
                test_fraction: 0.2,
                seed,
            })?,
            synth: if doc.contains_key("synth") {
                Some(seeded(&doc, "synth", SynthConfig::new)?)
            } else {
                None
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.walk.validate()?;
        self.sgns.validate()?;
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if self.store.top_k == 0 || self.store.partitions == 0 {
            return Err(config_err("store.top_k and store.partitions must be positive"));
        }
        if self.propagation.sample_n == 0 || !(0.0..=1.0).contains(&self.propagation.core_fraction) {
            return Err(config_err("propagation needs sample_n >= 1 and core_fraction in [0, 1]"));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(config_err("split.test_fraction must lie in (0, 1)"));
        }
        if self.forest.n_trees == 0 || self.forest.max_depth == 0 {
            return Err(config_err("forest.n_trees and forest.max_depth must be positive"));
        }
        Ok(())
    }
}
