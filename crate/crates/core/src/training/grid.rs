//! Grid search over hidden width and history order, evaluated on held-out sources.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::split::{kfold_by_source, split_by_source};
use crate::error::{Error, Result};
use crate::inference::{evaluate, ClassifyOptions};
use crate::model::{new_model, Dataset, ModelConfig, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hidden: usize,
    pub history: usize,
    /// Overrides the training epochs for this point; 0 evaluates the untrained model.
    pub epochs: Option<usize>,
}

impl GridPoint {
    /// Cartesian product of hidden widths and history orders.
    pub fn product(hidden: &[usize], history: &[usize]) -> Vec<GridPoint> {
        hidden
            .iter()
            .flat_map(|&h| history.iter().map(move |&n| GridPoint { hidden: h, history: n, epochs: None }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub kind: ModelKind,
    pub points: Vec<GridPoint>,
    /// `≤ 1`: one split by source with `split_fraction` of sources for training;
    /// otherwise k-fold cross-validation over sources.
    pub folds: usize,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub point: GridPoint,
    /// 1 is best; failed cells rank after every successful one.
    pub rank: usize,
    pub mean_accuracy: Option<f64>,
    pub task_accuracy: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub tasks: Vec<String>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    /// `rank,hidden,history,epochs,mean_accuracy,<tasks...>,error`, best first.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["rank", "hidden", "history", "epochs", "mean_accuracy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.tasks.iter().cloned());
        header.push("error".into());
        w.write_record(&header).expect("in-memory write");
        for c in &self.cells {
            let mut row = vec![
                c.rank.to_string(),
                c.point.hidden.to_string(),
                c.point.history.to_string(),
                c.point.epochs.map_or(String::new(), |e| e.to_string()),
                c.mean_accuracy.map_or(String::new(), |a| format!("{a:.6}")),
            ];
            row.extend(
                self.tasks
                    .iter()
                    .map(|t| c.task_accuracy.get(t).map_or(String::new(), |a| format!("{a:.6}"))),
            );
            row.push(c.error.clone().unwrap_or_default());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn run_point(
    point: GridPoint,
    config: &GridConfig,
    folds: &[(Dataset, Dataset)],
    dims: &[(String, usize)],
    tasks: &[crate::model::TaskSpec],
) -> Result<BTreeMap<String, f64>> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for (train_set, test_set) in folds {
        let model_config = ModelConfig::new(config.kind, dims.iter().cloned(), point.hidden, point.history, tasks.to_vec());
        let model = new_model(&model_config, config.model_seed)?;
        let mut tc = config.train.clone();
        if let Some(e) = point.epochs {
            tc.epochs = e;
        }
        let (model, _) = train(model, train_set, &tc)?;
        let eval = evaluate(&model, test_set, ClassifyOptions::default())?;
        for (task, m) in eval.sequence_level {
            *sums.entry(task).or_default() += m.accuracy;
        }
    }
    sums.values_mut().for_each(|v| *v /= folds.len() as f64);
    Ok(sums)
}

/// Trains and evaluates one model per grid point. A failing cell is recorded
/// with its error and does not stop the sweep. Cells are returned best first.
pub fn grid_search(dataset: &Dataset, config: &GridConfig) -> Result<GridResult> {
    if config.points.is_empty() {
        return Err(Error::Config("grid search needs at least one grid point".into()));
    }
    let folds = if config.folds <= 1 {
        vec![split_by_source(dataset, config.split_fraction, config.split_seed)?]
    } else {
        kfold_by_source(dataset, config.folds, config.split_seed)?
    };
    let dims: Vec<(String, usize)> = dataset.modality_dims().into_iter().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<BTreeMap<String, f64>>> = pool.install(|| {
        config
            .points
            .par_iter()
            .map(|&p| run_point(p, config, &folds, &dims, &dataset.tasks))
            .collect()
    });

    let mut cells: Vec<GridCell> = config
        .points
        .iter()
        .zip(outcomes)
        .map(|(&point, outcome)| match outcome {
            Ok(task_accuracy) => {
                let mean = task_accuracy.values().sum::<f64>() / task_accuracy.len().max(1) as f64;
                GridCell {
                    point,
                    rank: 0,
                    mean_accuracy: Some(mean),
                    task_accuracy,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("grid point {point:?} failed: {e}");
                GridCell {
                    point,
                    rank: 0,
                    mean_accuracy: None,
                    task_accuracy: BTreeMap::new(),
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    // stable sort keeps grid order among ties
    cells.sort_by(|a, b| match (a.mean_accuracy, b.mean_accuracy) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    for (i, c) in cells.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(GridResult {
        tasks: dataset.tasks.iter().map(|t| t.name.clone()).collect(),
        cells,
    })
}
