//! File formats: JSONL datasets and attribution stores, JSON sidecars,
//! checkpoints, manifests, and CSV exports.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use oodrank_core::attribution::Attribution;
use oodrank_core::corpus::{Dataset, Example, Provenance, Split, Task, Vocabulary};
use oodrank_core::model::{Model, Recipe, TrainReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const VOCAB_FILE: &str = "vocab.json";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize)]
struct LineOut<'a, T> {
    #[serde(flatten)]
    item: &'a T,
    v: u32,
}

#[derive(Deserialize)]
struct LineIn<T> {
    #[serde(flatten)]
    item: T,
    v: Option<u32>,
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| AppError::Data(e.to_string()))?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Parse { path: path.into(), line: e.line(), message: e.to_string() })
}

pub fn jsonl_bytes<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &LineOut { item, v: FORMAT_VERSION })
            .map_err(|e| AppError::Data(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Reads a versioned JSONL file. Blank lines are skipped; every other line
/// must parse and carry `"v": 1`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut items = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(parse_line(path, k + 1, &line)?);
    }
    Ok(items)
}

fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T> {
    let parsed: LineIn<T> = serde_json::from_str(line)
        .map_err(|e| AppError::Parse { path: path.into(), line: line_no, message: e.to_string() })?;
    match parsed.v {
        Some(FORMAT_VERSION) => Ok(parsed.item),
        Some(v) => Err(AppError::Parse {
            path: path.into(),
            line: line_no,
            message: format!("unsupported format version {v} (expected {FORMAT_VERSION})"),
        }),
        None => Err(AppError::Parse { path: path.into(), line: line_no, message: "missing field `v`".into() }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub split: Split,
    pub provenance: Provenance,
}

pub fn dataset_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.name()))
}

/// Writes `<dir>/<split>.jsonl` and records the vocabulary and provenance
/// in the directory's sidecar files.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let path = dataset_path(dir, dataset.split);
    write_atomic(&path, &jsonl_bytes(&dataset.examples)?)?;
    let vocab_path = dir.join(VOCAB_FILE);
    match read_json::<Vocabulary>(&vocab_path) {
        Ok(existing) if existing == dataset.vocabulary => {}
        _ => write_json(&vocab_path, &dataset.vocabulary)?,
    }
    let prov_path = dir.join(PROVENANCE_FILE);
    let mut info: BTreeMap<String, DatasetInfo> =
        if prov_path.exists() { read_json(&prov_path)? } else { BTreeMap::new() };
    info.insert(
        dataset.split.name().into(),
        DatasetInfo { name: dataset.name.clone(), split: dataset.split, provenance: dataset.provenance.clone() },
    );
    write_json(&prov_path, &info)?;
    Ok(path)
}

pub fn read_vocabulary(dir: &Path) -> Result<Vocabulary> {
    read_json(&dir.join(VOCAB_FILE))
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path, split: Split) -> Result<Dataset> {
    let path = dataset_path(dir, split);
    let vocabulary = read_vocabulary(dir)?;
    let prov_path = dir.join(PROVENANCE_FILE);
    let info: BTreeMap<String, DatasetInfo> = if prov_path.exists() { read_json(&prov_path)? } else { BTreeMap::new() };
    let info = info.get(split.name()).cloned().unwrap_or_else(|| DatasetInfo {
        name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        split,
        provenance: Provenance::default(),
    });
    let examples = read_examples(&path)?;
    let dataset = Dataset { name: info.name, split, examples, vocabulary, provenance: info.provenance };
    dataset.validate()?;
    Ok(dataset)
}

/// Example lines from any JSONL file; an empty file yields no examples and
/// a warning.
pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    let examples: Vec<Example> = read_jsonl(path)?;
    if examples.is_empty() {
        log::warn!("{} contains no examples", path.display());
    }
    Ok(examples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab_digest: String,
    pub v: u32,
}

pub fn write_checkpoint(path: &Path, model: &Model, vocab: &Vocabulary) -> Result<()> {
    write_json(path, &Checkpoint { model: model.clone(), vocab_digest: vocab.digest(), v: FORMAT_VERSION })
}

pub fn read_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<Model> {
    let checkpoint: Checkpoint = read_json(path)?;
    if checkpoint.v != FORMAT_VERSION {
        return Err(AppError::Data(format!("{}: unsupported checkpoint version {}", path.display(), checkpoint.v)));
    }
    if checkpoint.vocab_digest != vocab.digest() {
        return Err(AppError::Data(format!("{}: checkpoint was trained on a different vocabulary", path.display())));
    }
    Ok(checkpoint.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub label: String,
    /// Checkpoint path relative to the manifest.
    pub checkpoint: String,
    pub ood_accuracy: f64,
    pub train_accuracy: f64,
    pub epoch_losses: Vec<f64>,
    pub recipe: Recipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRecipe {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub task: Task,
    pub vocab_digest: String,
    pub train_digest: String,
    pub ood_full_digest: String,
    pub members: Vec<ManifestMember>,
    pub excluded: Vec<ExcludedRecipe>,
    pub v: u32,
}

impl SuiteManifest {
    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(|m| m.label.clone()).collect()
    }
}

impl ManifestMember {
    pub fn new(label: &str, checkpoint: &str, ood_accuracy: f64, report: &TrainReport, recipe: &Recipe) -> Self {
        Self {
            label: label.into(),
            checkpoint: checkpoint.into(),
            ood_accuracy,
            train_accuracy: report.train_accuracy,
            epoch_losses: report.epoch_losses.clone(),
            recipe: recipe.clone(),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<SuiteManifest> {
    let manifest: SuiteManifest = read_json(path)?;
    if manifest.v != FORMAT_VERSION {
        return Err(AppError::Data(format!("{}: unsupported manifest version {}", path.display(), manifest.v)));
    }
    Ok(manifest)
}

/// Attribution rows of one store file, keyed by (model, example id).
pub type StoreRows = BTreeMap<(String, String), Attribution>;

/// Reads a store, keeping only rows that parse, validate, and match
/// `config_digest`. A truncated final line is dropped with a warning so an
/// interrupted run can resume.
pub fn read_store_lenient(path: &Path, config_digest: &str) -> Result<StoreRows> {
    let mut rows = StoreRows::new();
    if !path.exists() {
        return Ok(rows);
    }
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut dropped = 0usize;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line::<Attribution>(path, k + 1, &line) {
            Ok(row) if row.config_digest == config_digest && row.validate().is_ok() => {
                rows.insert((row.model.clone(), row.example_id.clone()), row);
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: ignored {dropped} stale or unreadable rows", path.display());
    }
    Ok(rows)
}

/// Reads a complete store strictly.
pub fn read_store(path: &Path) -> Result<StoreRows> {
    let rows: Vec<Attribution> = read_jsonl(path)?;
    let mut out = StoreRows::new();
    for row in rows {
        row.validate()?;
        let key = (row.model.clone(), row.example_id.clone());
        if out.insert(key, row).is_some() {
            return Err(AppError::Data(format!("{}: duplicate attribution rows", path.display())));
        }
    }
    Ok(out)
}

/// Appends rows to a store file, flushing once at the end.
pub fn append_rows(path: &Path, rows: &[Attribution]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| AppError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer.write_all(&jsonl_bytes(rows)?).map_err(|e| AppError::io(path, e))?;
    writer.flush().map_err(|e| AppError::io(path, e))
}

pub fn write_csv<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| AppError::Data(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| AppError::Data(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(oodrank_core::util::digest_hex(&bytes, 16))
}
