//! Plain-text dataset format.
//!
//! A manifest is a CSV file with header `set_id,label,path`; relative paths
//! resolve against the manifest's directory. Each set file is a headerless
//! CSV with one row per feature dimension and one column per sample.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::set_model::ImageSet;

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub set_id: String,
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// Reads and validates a manifest (files are not opened).
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["set_id", "label", "path"] {
        return Err(parse_err(path, 1, "expected header `set_id,label,path`"));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        entries.push(ManifestEntry {
            set_id: record[0].to_string(),
            label: record[1].to_string(),
            path: PathBuf::from(&record[2]),
        });
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(DatasetManifest { root, entries })
}

/// Parses a `d x n` set file.
pub fn read_set_file(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .enumerate()
            .map(|(col, tok)| {
                tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    parse_err(
                        path,
                        line,
                        format!("column {}: `{tok}` is not a finite number", col + 1),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "empty set file"));
    }
    let (d, n) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(d, n, |i, j| rows[i][j]))
}

/// Writes a `d x n` matrix in the set-file format with round-trip exact values.
pub fn write_set_file(path: &Path, features: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for row in features.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads every set named in a manifest and checks dimensions and sample counts.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<ImageSet>> {
    let manifest = read_manifest(manifest_path)?;
    let mut sets = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let file = manifest.resolve(entry);
        let features = read_set_file(&file)?;
        if let Some(first) = sets.first().map(|s: &ImageSet| s.dim()) {
            if features.nrows() != first {
                return Err(Error::DimensionMismatch(format!(
                    "set `{}` ({}) has dimension {}, expected {first}",
                    entry.set_id,
                    file.display(),
                    features.nrows()
                )));
            }
        }
        if features.ncols() < 2 {
            return Err(Error::TooFewSamples {
                set_id: entry.set_id.clone(),
                samples: features.ncols(),
            });
        }
        sets.push(ImageSet::new(features, entry.label.clone(), entry.set_id.clone())?);
    }
    Ok(sets)
}

/// Writes `manifest.csv` plus one `sets/<set_id>.csv` per set under `dir`.
pub fn save_dataset(dir: &Path, sets: &[ImageSet]) -> Result<PathBuf> {
    let set_dir = dir.join("sets");
    fs::create_dir_all(&set_dir).map_err(|e| Error::io(&set_dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let mut manifest = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut text = String::from("set_id,label,path\n");
    for set in sets {
        if set.set_id.contains([',', '/', '\n']) || set.label.contains([',', '\n']) {
            return Err(Error::BadConfig(format!(
                "set id or label of `{}` is not CSV-safe",
                set.set_id
            )));
        }
        let rel = format!("sets/{}.csv", set.set_id);
        write_set_file(&dir.join(&rel), &set.features)?;
        text.push_str(&format!("{},{},{}\n", set.set_id, set.label, rel));
    }
    manifest
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
