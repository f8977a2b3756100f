use ndarray::Array2;
use std::collections::BTreeMap;

use super::task::TaskSpec;
use crate::error::{Error, Result};

/// Frames of one modality, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub modality_id: String,
    pub frames: Array2<f64>,
    pub labels: BTreeMap<String, usize>,
    pub source_id: String,
}

impl FrameSequence {
    pub fn new(
        modality_id: impl Into<String>,
        frames: Array2<f64>,
        labels: BTreeMap<String, usize>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let seq = FrameSequence {
            modality_id: modality_id.into(),
            frames,
            labels,
            source_id: source_id.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.nrows() == 0 {
            return Err(Error::Data(format!(
                "modality `{}` has no frames",
                self.modality_id
            )));
        }
        if self.frames.ncols() == 0 {
            return Err(Error::Data(format!(
                "modality `{}` has zero-dimensional frames",
                self.modality_id
            )));
        }
        if let Some(pos) = self.frames.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                block: format!(
                    "frames of modality `{}` (row {})",
                    self.modality_id,
                    pos / self.frames.ncols()
                ),
            });
        }
        Ok(())
    }

    pub fn validate_labels(&self, tasks: &[TaskSpec]) -> Result<()> {
        validate_labels(&self.labels, tasks)
    }
}

pub(crate) fn validate_labels(labels: &BTreeMap<String, usize>, tasks: &[TaskSpec]) -> Result<()> {
    for (name, &class) in labels {
        let task = tasks
            .iter()
            .find(|t| &t.name == name)
            .ok_or_else(|| Error::UnknownTask(name.clone()))?;
        task.check_class(class)?;
    }
    Ok(())
}

/// Time-aligned frame sequences from several modalities sharing sequence-level labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSequence {
    pub id: String,
    pub source_id: String,
    pub parts: BTreeMap<String, FrameSequence>,
    pub labels: BTreeMap<String, usize>,
}

impl MultimodalSequence {
    pub fn new(
        id: impl Into<String>,
        source_id: impl Into<String>,
        parts: BTreeMap<String, FrameSequence>,
        labels: BTreeMap<String, usize>,
    ) -> Result<Self> {
        let seq = MultimodalSequence {
            id: id.into(),
            source_id: source_id.into(),
            parts,
            labels,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Wraps a single modality.
    pub fn single(id: impl Into<String>, part: FrameSequence) -> Result<Self> {
        let labels = part.labels.clone();
        let source = part.source_id.clone();
        let parts = [(part.modality_id.clone(), part)].into();
        Self::new(id, source, parts, labels)
    }

    pub fn len(&self) -> usize {
        self.parts.values().next().map_or(0, |p| p.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn part(&self, modality: &str) -> Result<&FrameSequence> {
        self.parts
            .get(modality)
            .ok_or_else(|| Error::MissingModality(modality.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::Data(format!("sequence `{}` has no modalities", self.id)));
        }
        let len = self.len();
        for (id, part) in &self.parts {
            part.validate()?;
            if &part.modality_id != id {
                return Err(Error::Data(format!(
                    "sequence `{}`: part keyed `{id}` claims modality `{}`",
                    self.id, part.modality_id
                )));
            }
            if part.len() != len {
                return Err(Error::Data(format!(
                    "sequence `{}`: modality `{id}` has {} frames, expected {len}",
                    self.id,
                    part.len()
                )));
            }
            if part.labels != self.labels {
                return Err(Error::Data(format!(
                    "sequence `{}`: modality `{id}` labels differ from the sequence labels",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A labelled collection of sequences with its task declarations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub tasks: Vec<TaskSpec>,
    pub sequences: Vec<MultimodalSequence>,
}

impl Dataset {
    pub fn new(tasks: Vec<TaskSpec>, sequences: Vec<MultimodalSequence>) -> Result<Self> {
        super::task::validate_task_list(&tasks)?;
        for s in &sequences {
            validate_labels(&s.labels, &tasks)
                .map_err(|e| Error::Data(format!("sequence `{}`: {e}", s.id)))?;
        }
        Ok(Dataset { tasks, sequences })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn task(&self, name: &str) -> Result<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    /// Modality ids and frame dimensions, taken from the first sequence.
    pub fn modality_dims(&self) -> BTreeMap<String, usize> {
        self.sequences
            .first()
            .map(|s| s.parts.iter().map(|(k, p)| (k.clone(), p.dim())).collect())
            .unwrap_or_default()
    }

    pub fn frame_count(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// The same sequences restricted to the given modalities.
    pub fn select_modalities(&self, modalities: &[&str]) -> Result<Dataset> {
        let sequences = self
            .sequences
            .iter()
            .map(|s| {
                let parts = modalities
                    .iter()
                    .map(|&m| Ok((m.to_string(), s.part(m)?.clone())))
                    .collect::<Result<_>>()?;
                Ok(MultimodalSequence {
                    parts,
                    ..s.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(self.subset(sequences))
    }

    pub fn subset(&self, sequences: Vec<MultimodalSequence>) -> Dataset {
        Dataset {
            tasks: self.tasks.clone(),
            sequences,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_empty_and_misaligned() {
        assert!(FrameSequence::new("m", Array2::zeros((0, 3)), BTreeMap::new(), "s").is_err());
        let a = FrameSequence::new("a", array![[1.0], [2.0]], BTreeMap::new(), "s").unwrap();
        let b = FrameSequence::new("b", array![[1.0]], BTreeMap::new(), "s").unwrap();
        let parts = [("a".to_string(), a), ("b".to_string(), b)].into();
        assert!(MultimodalSequence::new("x", "s", parts, BTreeMap::new()).is_err());
    }

    #[test]
    fn label_ranges_are_checked() {
        let tasks = vec![TaskSpec::new("t", 2).unwrap()];
        let seq = FrameSequence::new("m", array![[0.0]], [("t".to_string(), 2)].into(), "s").unwrap();
        assert!(matches!(seq.validate_labels(&tasks), Err(Error::ClassOutOfRange { .. })));
    }
}
