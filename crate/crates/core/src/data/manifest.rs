//! Dataset manifests (JSON) and frame files (headerless CSV, one row per frame).
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "feature_pipeline": "synthetic",
//!   "tasks": [{"name": "AC", "class_count": 4, "class_names": ["Walking", ...]}],
//!   "sequences": [
//!     {"id": "seq0000", "source_id": "actor00",
//!      "files": {"mocap": "seq0000_mocap.csv"},
//!      "labels": {"AC": "Walking", "AF": 2}}
//!   ]
//! }
//! ```
//!
//! File paths are relative to the manifest's directory. Labels are class names
//! or class indices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FrameSequence, MultimodalSequence, TaskSpec};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    pub source_id: String,
    pub files: BTreeMap<String, String>,
    #[serde(default)]
    pub labels: BTreeMap<String, LabelValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    #[serde(default)]
    pub feature_pipeline: String,
    pub tasks: Vec<TaskSpec>,
    pub sequences: Vec<SequenceEntry>,
}

/// Reads frames from a headerless CSV file.
pub fn read_frames_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("ragged row: expected {d} values, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {}: `{field}` is not a number", col + 1),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {}: non-finite value", col + 1),
                });
            }
            values.push(x);
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "no frames".into(),
    })?;
    Ok(Array2::from_shape_vec((rows, dim), values).expect("rectangular"))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes frames as headerless CSV using shortest round-trip float formatting.
pub fn write_frames_csv(path: &Path, frames: &Array2<f64>) -> Result<()> {
    let mut out = String::with_capacity(frames.len() * 20);
    for row in frames.rows() {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn resolve_label(task: &TaskSpec, value: &LabelValue) -> Result<usize> {
    match value {
        LabelValue::Index(k) => {
            task.check_class(*k)?;
            Ok(*k)
        }
        LabelValue::Name(name) => task.class_index(name),
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::FormatVersion {
            found: manifest.format_version,
            expected: MANIFEST_VERSION,
        });
    }
    Ok(manifest)
}

/// Loads every sequence listed in a manifest. Frame files are read in parallel.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    crate::model::validate_task_list(&manifest.tasks)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let context = |id: &str, e: Error| match e {
        e @ (Error::Parse { .. } | Error::Io { .. }) => e,
        other => Error::Data(format!("{}: sequence `{id}`: {other}", manifest_path.display())),
    };

    let sequences: Vec<MultimodalSequence> = manifest
        .sequences
        .par_iter()
        .map(|entry| {
            let mut labels = BTreeMap::new();
            for (task_name, value) in &entry.labels {
                let task = manifest
                    .tasks
                    .iter()
                    .find(|t| &t.name == task_name)
                    .ok_or_else(|| context(&entry.id, Error::UnknownTask(task_name.clone())))?;
                labels.insert(task_name.clone(), resolve_label(task, value).map_err(|e| context(&entry.id, e))?);
            }
            if entry.files.is_empty() {
                return Err(context(&entry.id, Error::Data("no frame files listed".into())));
            }
            let mut parts = BTreeMap::new();
            for (modality, file) in &entry.files {
                let frames = read_frames_csv(&base.join(file))?;
                let part = FrameSequence::new(modality, frames, labels.clone(), &entry.source_id)
                    .map_err(|e| context(&entry.id, e))?;
                parts.insert(modality.clone(), part);
            }
            MultimodalSequence::new(&entry.id, &entry.source_id, parts, labels).map_err(|e| context(&entry.id, e))
        })
        .collect::<Result<_>>()?;

    let mut dims: BTreeMap<String, (usize, &str)> = BTreeMap::new();
    for (seq, entry) in sequences.iter().zip(&manifest.sequences) {
        for (m, p) in &seq.parts {
            let (d, first) = *dims.entry(m.clone()).or_insert((p.dim(), &entry.files[m]));
            if d != p.dim() {
                return Err(Error::Parse {
                    path: base.join(&entry.files[m]),
                    line: 1,
                    message: format!("modality `{m}` has {} columns but `{first}` has {d}", p.dim()),
                });
            }
        }
        if seq.parts.keys().ne(dims.keys()) {
            return Err(Error::Data(format!(
                "{}: sequence `{}` does not list the same modalities as the others",
                manifest_path.display(),
                seq.id
            )));
        }
    }
    Dataset::new(manifest.tasks, sequences)
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes a dataset as frame CSVs plus `manifest.json` in `dir`. Returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>, feature_pipeline: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries: Vec<SequenceEntry> = dataset
        .sequences
        .par_iter()
        .map(|seq| {
            let mut files = BTreeMap::new();
            for (m, part) in &seq.parts {
                let name = format!("{}_{}.csv", file_stem(&seq.id), file_stem(m));
                write_frames_csv(&dir.join(&name), &part.frames)?;
                files.insert(m.clone(), name);
            }
            let labels = seq
                .labels
                .iter()
                .map(|(t, &k)| {
                    let task = dataset.task(t)?;
                    let value = if task.class_names.is_empty() {
                        LabelValue::Index(k)
                    } else {
                        LabelValue::Name(task.class_name(k))
                    };
                    Ok((t.clone(), value))
                })
                .collect::<Result<_>>()?;
            Ok(SequenceEntry {
                id: seq.id.clone(),
                source_id: seq.source_id.clone(),
                files,
                labels,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        feature_pipeline: feature_pipeline.to_string(),
        tasks: dataset.tasks.clone(),
        sequences: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn loads_a_minimal_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2\n3,4\n5.5,-6e-1\n");
        write(
            dir.path(),
            "m.json",
            r#"{"format_version":1,"tasks":[{"name":"AF","class_count":2,"class_names":["Neutral","Happy"]}],
               "sequences":[{"id":"s","source_id":"p1","files":{"mocap":"a.csv"},"labels":{"AF":"Happy"}}]}"#,
        );
        let d = load_dataset(dir.path().join("m.json")).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.sequences[0].len(), 3);
        assert_eq!(d.sequences[0].labels["AF"], 1);
        assert_eq!(d.sequences[0].parts["mocap"].frames[[2, 1]], -0.6);
    }

    #[test]
    fn ragged_row_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2\n3,4\n5\n");
        match read_frames_csv(&dir.path().join("a.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        write(dir.path(), "b.csv", "1,2\n3,x\n");
        match read_frames_csv(&dir.path().join("b.csv")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1\n");
        write(
            dir.path(),
            "m.json",
            r#"{"format_version":1,"tasks":[{"name":"G","class_count":2}],
               "sequences":[{"id":"s","source_id":"p","files":{"m":"a.csv"},"labels":{"G":2}}]}"#,
        );
        let err = load_dataset(dir.path().join("m.json")).unwrap_err().to_string();
        assert!(err.contains("m.json") && err.contains("out of range"), "{err}");
        write(
            dir.path(),
            "n.json",
            r#"{"format_version":1,"tasks":[{"name":"G","class_count":2}],
               "sequences":[{"id":"s","source_id":"p","files":{"m":"missing.csv"},"labels":{"G":1}}]}"#,
        );
        let err = load_dataset(dir.path().join("n.json")).unwrap_err();
        assert!(matches!(err, Error::Io { ref path, .. } if path.ends_with("missing.csv")), "{err}");
    }

    #[test]
    fn rejects_other_versions() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.json", r#"{"format_version":2,"tasks":[],"sequences":[]}"#);
        assert!(matches!(load_dataset(dir.path().join("m.json")), Err(Error::FormatVersion { found: 2, .. })));
    }
}
