//! Run directory layout:
//!
//! ```text
//! config.toml                         resolved config of the latest command
//! corpus/<lang>/<split>.tsv           generated datasets
//! corpus/fingerprint.txt              content hash, written last
//! checkpoints/seed-<i>/<method>.ckpt  weights
//! checkpoints/seed-<i>/<method>.json  training provenance
//! checkpoints/seed-<i>/timing.json    training wall-clock seconds
//! data/seed-<i>/pseudo.tsv            teacher pseudo-labeled set
//! metrics/seed-<i>/<method>.json      evaluation metrics
//! metrics/sweep_size.json, metrics/sweep_temp.json
//! tables/*.csv, curves/*.csv, report.json
//! ```
//!
//! Metrics files never contain timings or paths, so reruns reproduce them
//! byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::corpus::{CorpusSplits, Split};
use crate::evalx::{EvalResult, Method};
use crate::model::{load_checkpoint_as, save_checkpoint, Role};
use crate::pipelines::{Provenance, TrainedModel};

/// Evaluation of one trained checkpoint on every test language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub seed: u64,
    pub results: Vec<EvalResult>,
    /// Fraction of test examples predicted identically to the source test
    /// set, per language.
    pub agreement_with_source: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

pub struct RunDir {
    root: PathBuf,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_required(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::missing(path, format!("unreadable: {e}")))
}

fn read_required(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(path, "not found"),
        _ => CliError::io(path, e),
    })
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        write_atomic(&p, bytes)?;
        Ok(p)
    }

    fn seed_dir(kind: &str, index: usize) -> String {
        format!("{kind}/seed-{index}")
    }

    pub fn checkpoint_path(&self, index: usize, method: Method) -> PathBuf {
        self.path(&format!("{}/{method}.ckpt", Self::seed_dir("checkpoints", index)))
    }

    fn provenance_path(&self, index: usize, method: Method) -> PathBuf {
        self.path(&format!("{}/{method}.json", Self::seed_dir("checkpoints", index)))
    }

    pub fn metrics_path(&self, index: usize, method: Method) -> PathBuf {
        self.path(&format!("{}/{method}.json", Self::seed_dir("metrics", index)))
    }

    pub fn pseudo_path(&self, index: usize) -> PathBuf {
        self.path(&format!("{}/pseudo.tsv", Self::seed_dir("data", index)))
    }

    /// Writes the corpus, or checks that the one already present matches.
    pub fn ensure_corpus(&self, corpus: &CorpusSplits) -> Result<String, CliError> {
        let fingerprint = corpus.fingerprint();
        let fp_path = self.path("corpus/fingerprint.txt");
        if fp_path.exists() {
            let stored = read_required(&fp_path)?;
            if stored.trim() != fingerprint {
                return Err(CliError::config(
                    "corpus",
                    format!(
                        "{} already holds a different corpus ({}); choose another output.name",
                        self.root.display(),
                        stored.trim()
                    ),
                ));
            }
            return Ok(fingerprint);
        }
        for (lang, splits) in &corpus.languages {
            for split in Split::ALL {
                self.write(&format!("corpus/{lang}/{split}.tsv"), splits.get(split).to_tsv().as_bytes())?;
            }
        }
        write_atomic(&fp_path, format!("{fingerprint}\n").as_bytes())?;
        Ok(fingerprint)
    }

    pub fn has_model(&self, index: usize, method: Method) -> bool {
        self.checkpoint_path(index, method).exists() && self.provenance_path(index, method).exists()
    }

    /// Weights first, then provenance, so a present provenance file marks a
    /// complete checkpoint.
    pub fn save_model(&self, index: usize, method: Method, model: &TrainedModel) -> Result<(), CliError> {
        let ckpt = self.checkpoint_path(index, method);
        if let Some(dir) = ckpt.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        save_checkpoint(&model.params, &ckpt).map_err(|e| CliError::Failed(format!("{}: {e}", ckpt.display())))?;
        write_atomic(&self.provenance_path(index, method), &to_json(&model.provenance))
    }

    pub fn load_model(&self, index: usize, method: Method) -> Result<TrainedModel, CliError> {
        let ckpt = self.checkpoint_path(index, method);
        let prov = self.provenance_path(index, method);
        if !ckpt.exists() || !prov.exists() {
            return Err(CliError::missing(&ckpt, format!("no trained {method} checkpoint for seed {index}")));
        }
        let role = if method == Method::Teacher { Role::Teacher } else { Role::Student };
        let params =
            load_checkpoint_as(&ckpt, role).map_err(|e| CliError::missing(&ckpt, format!("unreadable: {e}")))?;
        Ok(TrainedModel { params, provenance: read_json(&prov)? })
    }

    pub fn record_timing(&self, index: usize, method: Method, seconds: f64) -> Result<(), CliError> {
        let rel = format!("{}/timing.json", Self::seed_dir("checkpoints", index));
        let path = self.path(&rel);
        let mut timings: BTreeMap<String, f64> = if path.exists() { read_json(&path)? } else { BTreeMap::new() };
        timings.insert(method.name().to_string(), seconds);
        self.write(&rel, &to_json(&timings))?;
        Ok(())
    }

    pub fn timings(&self, index: usize) -> Result<BTreeMap<String, f64>, CliError> {
        let path = self.path(&format!("{}/timing.json", Self::seed_dir("checkpoints", index)));
        if path.exists() {
            read_json(&path)
        } else {
            Ok(BTreeMap::new())
        }
    }

    pub fn save_metrics(&self, index: usize, m: &MethodMetrics) -> Result<PathBuf, CliError> {
        let p = self.metrics_path(index, m.method);
        write_atomic(&p, &to_json(m))?;
        Ok(p)
    }

    pub fn load_metrics(&self, index: usize, method: Method) -> Result<Option<MethodMetrics>, CliError> {
        let p = self.metrics_path(index, method);
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }
}
