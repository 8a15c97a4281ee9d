//! Manifest I/O.
//!
//! A *pair manifest* is line-delimited JSON, UTF-8:
//!
//! ```text
//! {"name":"sketch-vs-photo","ground_truth":"pencil sketches"}
//! {"id":"a0","source":"imgs/a0.png","set":"A","caption":"..."}
//! {"id":"b0","source":"imgs/b0.png","set":"B"}
//! ```
//!
//! The first line is the pair header; every following line is one image
//! record tagged with the side it belongs to. Records may carry a
//! pre-computed `embedding` (any scale; it is normalized at load).
//!
//! A *record manifest* is the same without the header: a bare list of
//! records, all belonging to one side. Used by `describe --set-a/--set-b`.
//!
//! A *benchmark directory* holds pair manifests plus an `index.json`:
//!
//! ```text
//! {"splits": {"easy": ["pairs/p0.jsonl", "pairs/p1.jsonl"], "hard": [...]}}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BenchmarkManifest, Embedding, ImageRecord, ImageSetPair, Split};

#[derive(Debug, Serialize, Deserialize)]
struct PairHeader {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
}

fn manifest_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_record(path: &Path, lineno: usize, text: &str) -> Result<(Option<String>, ImageRecord)> {
    let line: RecordLine = serde_json::from_str(text)
        .map_err(|e| manifest_err(path, lineno, format!("bad record: {e}")))?;
    let embedding = match line.embedding {
        Some(v) => Some(
            Embedding::normalized(v)
                .map_err(|e| manifest_err(path, lineno, format!("record {:?}: {e}", line.id)))?,
        ),
        None => None,
    };
    Ok((
        line.set,
        ImageRecord {
            id: line.id,
            source: line.source,
            caption: line.caption,
            embedding,
        },
    ))
}

/// Load a pair manifest (header + tagged records).
pub fn load_pair_manifest(path: &Path) -> Result<ImageSetPair> {
    let file = std::fs::File::open(path)
        .map_err(|e| manifest_err(path, 0, format!("cannot open: {e}")))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header: PairHeader = loop {
        match lines.next() {
            None => return Err(manifest_err(path, 1, "empty manifest")),
            Some((idx, line)) => {
                let line = line.map_err(|e| manifest_err(path, idx + 1, e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .map_err(|e| manifest_err(path, idx + 1, format!("bad header: {e}")))?;
            }
        }
    };

    let mut set_a = Vec::new();
    let mut set_b = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| manifest_err(path, idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (set, record) = parse_record(path, idx + 1, &line)?;
        match set.as_deref() {
            Some("A") => set_a.push(record),
            Some("B") => set_b.push(record),
            Some(other) => {
                return Err(manifest_err(
                    path,
                    idx + 1,
                    format!("set must be \"A\" or \"B\", got {other:?}"),
                ))
            }
            None => return Err(manifest_err(path, idx + 1, "record is missing \"set\"")),
        }
    }

    ImageSetPair::new(header.name, set_a, set_b, header.ground_truth)
}

/// Load a record manifest: bare records, no header, `set` tags ignored.
pub fn load_record_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| manifest_err(path, 0, format!("cannot open: {e}")))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| manifest_err(path, idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (_, record) = parse_record(path, idx + 1, &line)?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(manifest_err(path, 1, "no records"));
    }
    Ok(records)
}

/// Write a pair manifest in the canonical format.
pub fn save_pair_manifest(path: &Path, pair: &ImageSetPair) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = PairHeader {
        name: pair.name.clone(),
        ground_truth: pair.ground_truth.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(io_internal)?)?;
    for (set, records) in [("A", &pair.set_a), ("B", &pair.set_b)] {
        for rec in records.iter() {
            let line = RecordLine {
                id: rec.id.clone(),
                source: rec.source.clone(),
                set: Some(set.to_string()),
                caption: rec.caption.clone(),
                embedding: rec.embedding.as_ref().map(|e| e.as_slice().to_vec()),
            };
            writeln!(out, "{}", serde_json::to_string(&line).map_err(io_internal)?)?;
        }
    }
    Ok(())
}

fn io_internal(e: serde_json::Error) -> Error {
    Error::Internal(format!("serialize: {e}"))
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchmarkIndex {
    splits: BTreeMap<String, Vec<String>>,
}

/// Load a benchmark directory via its `index.json`. Splits come back sorted
/// by name; `filter` keeps only the named split.
pub fn load_benchmark_dir(dir: &Path, filter: Option<&Split>) -> Result<Vec<BenchmarkManifest>> {
    let index_path = dir.join("index.json");
    let raw = std::fs::read_to_string(&index_path)
        .map_err(|e| manifest_err(&index_path, 0, format!("cannot open: {e}")))?;
    let index: BenchmarkIndex = serde_json::from_str(&raw)
        .map_err(|e| manifest_err(&index_path, 1, format!("bad index: {e}")))?;

    let mut out = Vec::new();
    for (split_name, files) in &index.splits {
        let split = Split::parse(split_name);
        if let Some(f) = filter {
            if *f != split {
                continue;
            }
        }
        let mut pairs = Vec::new();
        for rel in files {
            pairs.push(load_pair_manifest(&dir.join(rel))?);
        }
        let manifest = BenchmarkManifest { split, pairs };
        manifest.validate()?;
        out.push(manifest);
    }
    if out.is_empty() {
        return Err(Error::Validation(match filter {
            Some(s) => format!("benchmark {}: split {s} not found", dir.display()),
            None => format!("benchmark {}: no splits", dir.display()),
        }));
    }
    Ok(out)
}

/// Write a benchmark directory: one pair manifest per pair plus the index.
pub fn save_benchmark_dir(dir: &Path, manifests: &[BenchmarkManifest]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut splits = BTreeMap::new();
    for manifest in manifests {
        let mut files = Vec::new();
        for pair in &manifest.pairs {
            let rel = format!("pairs/{}__{}.jsonl", manifest.split, pair.name);
            save_pair_manifest(&dir.join(&rel), pair)?;
            files.push(rel);
        }
        splits.insert(manifest.split.as_str().to_string(), files);
    }
    let index_path = dir.join("index.json");
    let body = serde_json::to_string_pretty(&BenchmarkIndex { splits }).map_err(io_internal)?;
    std::fs::write(&index_path, body + "\n")?;
    Ok(index_path)
}
