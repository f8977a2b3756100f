use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A named classification task with a fixed number of classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub class_count: usize,
    /// Optional human-readable class names, indexed by class.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, class_count: usize) -> Result<Self> {
        let task = TaskSpec {
            name: name.into(),
            class_count,
            class_names: Vec::new(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_class_names<S: Into<String>>(
        name: impl Into<String>,
        names: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let class_names: Vec<String> = names.into_iter().map(Into::into).collect();
        let task = TaskSpec {
            name: name.into(),
            class_count: class_names.len(),
            class_names,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("task name must not be empty".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Config(format!(
                "task `{}` needs at least 2 classes, got {}",
                self.name, self.class_count
            )));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.class_count {
            return Err(Error::Config(format!(
                "task `{}` declares {} classes but names {}",
                self.name,
                self.class_count,
                self.class_names.len()
            )));
        }
        Ok(())
    }

    /// Resolves a class given either its name or its decimal index.
    pub fn class_index(&self, label: &str) -> Result<usize> {
        if let Some(k) = self.class_names.iter().position(|n| n == label) {
            return Ok(k);
        }
        match label.parse::<usize>() {
            Ok(k) if k < self.class_count => Ok(k),
            Ok(k) => Err(Error::ClassOutOfRange {
                task: self.name.clone(),
                class: k,
                class_count: self.class_count,
            }),
            Err(_) => Err(Error::UnknownClass {
                task: self.name.clone(),
                class: label.to_string(),
            }),
        }
    }

    pub fn class_name(&self, class: usize) -> String {
        self.class_names
            .get(class)
            .cloned()
            .unwrap_or_else(|| class.to_string())
    }

    pub fn check_class(&self, class: usize) -> Result<()> {
        if class < self.class_count {
            Ok(())
        } else {
            Err(Error::ClassOutOfRange {
                task: self.name.clone(),
                class,
                class_count: self.class_count,
            })
        }
    }
}

/// Checks that task names are unique and every task is well formed.
pub fn validate_task_list(tasks: &[TaskSpec]) -> Result<()> {
    for (i, t) in tasks.iter().enumerate() {
        t.validate()?;
        if tasks[..i].iter().any(|u| u.name == t.name) {
            return Err(Error::Config(format!("duplicate task name `{}`", t.name)));
        }
    }
    Ok(())
}

/// Cartesian-product labelling of several tasks, as used by a single-task
/// discriminative layer that treats all label combinations as one flat class set.
///
/// Class indices are mixed-radix with the first task most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatLabeling {
    tasks: Vec<TaskSpec>,
}

pub(crate) const FLAT_SEPARATOR: char = '*';

impl FlatLabeling {
    pub fn new(tasks: &[TaskSpec]) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("flattened labelling needs at least one task".into()));
        }
        validate_task_list(tasks)?;
        Ok(FlatLabeling {
            tasks: tasks.to_vec(),
        })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn class_count(&self) -> usize {
        self.tasks.iter().map(|t| t.class_count).product()
    }

    /// The single task over the product label space.
    pub fn product_task(&self) -> TaskSpec {
        if self.tasks.len() == 1 {
            return self.tasks[0].clone();
        }
        let name = self
            .tasks
            .iter()
            .map(|t| t.name.as_str())
            .collect::<Vec<_>>()
            .join(&FLAT_SEPARATOR.to_string());
        TaskSpec {
            name,
            class_count: self.class_count(),
            class_names: Vec::new(),
        }
    }

    pub fn encode(&self, labels: &BTreeMap<String, usize>) -> Result<usize> {
        let mut index = 0;
        for t in &self.tasks {
            let k = *labels
                .get(&t.name)
                .ok_or_else(|| Error::MissingLabel(t.name.clone()))?;
            t.check_class(k)?;
            index = index * t.class_count + k;
        }
        Ok(index)
    }

    pub fn decode(&self, mut index: usize) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for t in self.tasks.iter().rev() {
            out.insert(t.name.clone(), index % t.class_count);
            index /= t.class_count;
        }
        out
    }

    /// Per-task marginals of a distribution over the product space.
    pub fn marginals(&self, joint: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.tasks.iter().map(|t| vec![0.0; t.class_count]).collect();
        for (index, &p) in joint.iter().enumerate() {
            let mut rest = index;
            for (ti, t) in self.tasks.iter().enumerate().rev() {
                out[ti][rest % t.class_count] += p;
                rest /= t.class_count;
            }
        }
        out
    }
}

/// Parameter counts of the hidden–label edges for a factored multi-task head
/// set versus one flattened head over the Cartesian product of all tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LabelEdgeAudit {
    pub hidden_dim: usize,
    pub task_count: usize,
    pub factored: usize,
    pub flattened: usize,
}

pub fn label_edge_audit(hidden_dim: usize, tasks: &[TaskSpec]) -> LabelEdgeAudit {
    let sum: usize = tasks.iter().map(|t| t.class_count).sum();
    let product: usize = tasks.iter().map(|t| t.class_count).product();
    LabelEdgeAudit {
        hidden_dim,
        task_count: tasks.len(),
        factored: hidden_dim * sum,
        flattened: hidden_dim * product,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn action_affect_gender_tasks() -> Vec<TaskSpec> {
        vec![
            TaskSpec::new("AC", 4).unwrap(),
            TaskSpec::new("AF", 4).unwrap(),
            TaskSpec::new("G", 2).unwrap(),
        ]
    }

    #[test]
    fn rejects_degenerate_tasks() {
        assert!(TaskSpec::new("x", 1).is_err());
        assert!(TaskSpec::new("", 3).is_err());
        let dup = vec![TaskSpec::new("a", 2).unwrap(), TaskSpec::new("a", 3).unwrap()];
        assert!(validate_task_list(&dup).is_err());
    }

    #[test]
    fn class_lookup_by_name_or_index() {
        let t = TaskSpec::with_class_names("AF", ["Neutral", "Happy", "Sad", "Angry"]).unwrap();
        assert_eq!(t.class_index("Sad").unwrap(), 2);
        assert_eq!(t.class_index("3").unwrap(), 3);
        assert!(matches!(t.class_index("Bored"), Err(Error::UnknownClass { .. })));
        assert!(matches!(t.class_index("4"), Err(Error::ClassOutOfRange { .. })));
    }

    #[test]
    fn flat_labeling_round_trips_and_marginalizes() {
        let flat = FlatLabeling::new(&action_affect_gender_tasks()).unwrap();
        assert_eq!(flat.class_count(), 32);
        assert_eq!(flat.product_task().name, "AC*AF*G");
        for index in 0..32 {
            let labels = flat.decode(index);
            assert_eq!(flat.encode(&labels).unwrap(), index);
        }
        let mut joint = vec![0.0; 32];
        joint[flat.encode(&[("AC".into(), 2), ("AF".into(), 1), ("G".into(), 1)].into()).unwrap()] = 1.0;
        let m = flat.marginals(&joint);
        assert_eq!(m[0], vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m[1], vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m[2], vec![0.0, 1.0]);
    }

    #[test]
    fn audit_counts_for_three_tasks() {
        let audit = label_edge_audit(30, &action_affect_gender_tasks());
        assert_eq!(audit.factored, 300);
        assert_eq!(audit.flattened, 960);
    }
}
