//! Run configuration, content hashing, and the on-disk artifact index.
//!
//! One run is one directory: a `config.json`, the artifacts the commands
//! write, and an `index.json` recording each artifact's content hash and
//! parent artifacts. `verify` re-validates the whole directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::Vocab;
use crate::maze::MazeConfig;
use crate::model::ModelConfig;
use crate::synth::SynthSpec;
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("artifact {0} not found in index")]
    UnknownArtifact(String),
    #[error("run verification failed:\n{0}")]
    VerifyFailed(String),
}

/// Extraction-stage knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Fraction of the synthetic set held out for layer selection.
    pub holdout_frac: f64,
    /// Histogram bins for the overlap metric.
    pub hist_bins: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            holdout_frac: 0.2,
            hist_bins: 50,
        }
    }
}

/// Analysis-stage knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub logit_lens_k: usize,
    /// Overrides for the depth-fraction layer defaults.
    pub logit_lens_layer: Option<usize>,
    pub tile_mean_layer: Option<usize>,
    pub alphas: Vec<f64>,
    pub sweep_episodes: usize,
    pub track_per_class: usize,
    /// Per-class count for checkpoint-series extraction.
    pub series_per_class: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            logit_lens_k: 5,
            logit_lens_layer: None,
            tile_mean_layer: None,
            alphas: vec![-4.0, -2.0, 0.0, 2.0, 4.0],
            sweep_episodes: 300,
            track_per_class: 500,
            series_per_class: 150,
        }
    }
}

/// The single configuration document; unknown keys are rejected in every
/// section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: MazeConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub extract: ExtractConfig,
    pub analysis: AnalysisConfig,
    pub vocab: Vocab,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, StoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StoreError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Config(format!("{e}")))
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        self.env
            .validate()
            .map_err(|e| StoreError::Config(e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| StoreError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| StoreError::Config(e.to_string()))?;
        if self.model.vocab_size != self.vocab.size() {
            return Err(StoreError::Config(format!(
                "model.vocab_size {} != vocabulary size {}",
                self.model.vocab_size,
                self.vocab.size()
            )));
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Content hash of a config document, canonicalized through a sorted-key
/// JSON value so key order in the source file does not matter.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    sha256_hex(serde_json::to_string(&value).expect("canonical json").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sha256: String,
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexFile {
    config_hash: String,
    artifacts: BTreeMap<String, ArtifactEntry>,
}

/// Writer/verifier for one run directory.
pub struct RunStore {
    dir: PathBuf,
    config: RunConfig,
    config_hash: String,
    artifacts: BTreeMap<String, ArtifactEntry>,
}

impl RunStore {
    /// Creates the directory (if needed), writes `config.json`, and starts
    /// an empty index.
    pub fn create(dir: &Path, config: &RunConfig) -> Result<RunStore, StoreError> {
        config.validate()?;
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(config).expect("config serializes");
        std::fs::write(dir.join("config.json"), text)?;
        let store = RunStore {
            dir: dir.to_path_buf(),
            config: config.clone(),
            config_hash: config_hash(config),
            artifacts: BTreeMap::new(),
        };
        store.save_index()?;
        Ok(store)
    }

    /// Opens an existing run directory.
    pub fn open(dir: &Path) -> Result<RunStore, StoreError> {
        let config = RunConfig::from_file(&dir.join("config.json"))?;
        let index: IndexFile = match std::fs::read_to_string(dir.join("index.json")) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| StoreError::Config(format!("bad index.json: {e}")))?,
            Err(_) => IndexFile::default(),
        };
        Ok(RunStore {
            dir: dir.to_path_buf(),
            config_hash: config_hash(&config),
            config,
            artifacts: index.artifacts,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn path_of(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes an artifact and records its hash and parents in the index.
    pub fn put_bytes(
        &mut self,
        name: &str,
        bytes: &[u8],
        parents: &[&str],
    ) -> Result<PathBuf, StoreError> {
        for p in parents {
            if !self.artifacts.contains_key(*p) {
                return Err(StoreError::UnknownArtifact((*p).to_string()));
            }
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.artifacts.insert(
            name.to_string(),
            ArtifactEntry {
                sha256: sha256_hex(bytes),
                parents: parents.iter().map(|s| s.to_string()).collect(),
            },
        );
        self.save_index()?;
        Ok(path)
    }

    /// Records a file that was written directly to the run directory (for
    /// writers that stream, e.g. checkpoints).
    pub fn record_file(&mut self, name: &str, parents: &[&str]) -> Result<(), StoreError> {
        for p in parents {
            if !self.artifacts.contains_key(*p) {
                return Err(StoreError::UnknownArtifact((*p).to_string()));
            }
        }
        let bytes = std::fs::read(self.dir.join(name))?;
        self.artifacts.insert(
            name.to_string(),
            ArtifactEntry {
                sha256: sha256_hex(&bytes),
                parents: parents.iter().map(|s| s.to_string()).collect(),
            },
        );
        self.save_index()?;
        Ok(())
    }

    /// A JSON report with the run lineage embedded.
    pub fn put_report<T: Serialize>(
        &mut self,
        name: &str,
        report: &T,
        parents: &[&str],
    ) -> Result<PathBuf, StoreError> {
        let doc = serde_json::json!({
            "lineage": {
                "config_hash": self.config_hash,
                "parents": parents,
            },
            "report": serde_json::to_value(report).expect("report serializes"),
        });
        self.put_bytes(
            name,
            serde_json::to_string_pretty(&doc).expect("report json").as_bytes(),
            parents,
        )
    }

    pub fn has(&self, name: &str) -> bool {
        self.artifacts.contains_key(name)
    }

    fn save_index(&self) -> Result<(), StoreError> {
        let index = IndexFile {
            config_hash: self.config_hash.clone(),
            artifacts: self.artifacts.clone(),
        };
        let text = serde_json::to_string_pretty(&index).expect("index serializes");
        std::fs::write(self.dir.join("index.json"), text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Re-validates a run directory: the config hash, every artifact's content
/// hash, parent resolvability, and absence of unindexed files.
pub fn verify_run(dir: &Path) -> Result<VerifyReport, StoreError> {
    let config = RunConfig::from_file(&dir.join("config.json"))?;
    let index_text = std::fs::read_to_string(dir.join("index.json"))
        .map_err(|e| StoreError::Config(format!("missing index.json: {e}")))?;
    let index: IndexFile = serde_json::from_str(&index_text)
        .map_err(|e| StoreError::Config(format!("bad index.json: {e}")))?;
    let mut problems = Vec::new();
    let mut checked = 0;

    let expect_hash = config_hash(&config);
    if expect_hash != index.config_hash {
        problems.push(format!(
            "config hash mismatch: config.json gives {expect_hash}, index records {}",
            index.config_hash
        ));
    }

    for (name, entry) in &index.artifacts {
        checked += 1;
        match std::fs::read(dir.join(name)) {
            Ok(bytes) => {
                let h = sha256_hex(&bytes);
                if h != entry.sha256 {
                    problems.push(format!("{name}: content hash mismatch"));
                }
            }
            Err(e) => problems.push(format!("{name}: unreadable ({e})")),
        }
        for p in &entry.parents {
            if !index.artifacts.contains_key(p) {
                problems.push(format!("{name}: parent {p} is not an indexed artifact"));
            }
        }
    }

    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_string();
        if name == "config.json" || name == "index.json" {
            continue;
        }
        if !index.artifacts.contains_key(&name) {
            problems.push(format!("{name}: file present but not indexed"));
        }
    }

    Ok(VerifyReport { checked, problems })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_under_key_reordering() {
        let a = r#"{"env": {"width": 21, "wind_prob": 0.1}, "model": {"d_model": 32}}"#;
        let b = r#"{"model": {"d_model": 32}, "env": {"wind_prob": 0.1, "width": 21}}"#;
        let ca: RunConfig = serde_json::from_str(a).unwrap();
        let cb: RunConfig = serde_json::from_str(b).unwrap();
        assert_eq!(config_hash(&ca), config_hash(&cb));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"env": {"width": 21, "wndprob": 0.1}}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
        let bad_top = r#"{"environment": {}}"#;
        assert!(serde_json::from_str::<RunConfig>(bad_top).is_err());
    }

    #[test]
    fn defaults_parse_from_empty_object() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.env.width, 100);
        assert_eq!(cfg.model.d_model, 64);
        assert_eq!(cfg.analysis.alphas, vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
        assert_eq!(cfg.synth.base_seed, 474747);
        cfg.validate().unwrap();
    }

    #[test]
    fn store_roundtrip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let mut store = RunStore::create(dir.path(), &cfg).unwrap();
        store.put_bytes("a.txt", b"hello", &[]).unwrap();
        store.put_bytes("b.txt", b"world", &["a.txt"]).unwrap();
        store
            .put_report("r.json", &serde_json::json!({"x": 1}), &["b.txt"])
            .unwrap();
        let report = verify_run(dir.path()).unwrap();
        assert!(report.ok(), "{:?}", report.problems);
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn verify_catches_tampering_and_strays() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let mut store = RunStore::create(dir.path(), &cfg).unwrap();
        store.put_bytes("a.txt", b"hello", &[]).unwrap();
        std::fs::write(dir.path().join("a.txt"), b"tampered").unwrap();
        std::fs::write(dir.path().join("stray.txt"), b"x").unwrap();
        let report = verify_run(dir.path()).unwrap();
        assert!(!report.ok());
        assert!(report.problems.iter().any(|p| p.contains("a.txt")));
        assert!(report.problems.iter().any(|p| p.contains("stray.txt")));
    }

    #[test]
    fn unknown_parent_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = RunStore::create(dir.path(), &RunConfig::default()).unwrap();
        assert!(matches!(
            store.put_bytes("a.txt", b"x", &["missing"]),
            Err(StoreError::UnknownArtifact(_))
        ));
    }

    #[test]
    fn reopened_store_keeps_entries() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = RunStore::create(dir.path(), &RunConfig::default()).unwrap();
            store.put_bytes("a.txt", b"abc", &[]).unwrap();
        }
        let store = RunStore::open(dir.path()).unwrap();
        assert!(store.has("a.txt"));
    }
}
