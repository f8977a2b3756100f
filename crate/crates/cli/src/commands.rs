use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use mtcrbm::data::synth::FEATURE_PIPELINE;
use mtcrbm::data::{load_dataset, make_synthetic, read_frames_csv, save_dataset, select_split, write_frames_csv, SplitSide, SynthConfig};
use mtcrbm::inference::{classify_sequence, evaluate, ClassifyOptions};
use mtcrbm::model::{load_model, new_model, save_model, Dataset, FrameSequence, ModelBundle, ModelConfig, ModelKind, MultimodalSequence};
use mtcrbm::morphing::{morph_eval as run_morph_eval, morph_sequence, MorphEvalConfig, DEFAULT_BLEND};
use mtcrbm::training::{grid_search, train as run_train, GridConfig, GridPoint, TrainConfig};

use crate::{config, Failure};

type Outcome = Result<(), Failure>;

fn write_file(path: &Path, contents: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn parse_kind(kind: &str) -> Result<ModelKind, Failure> {
    kind.parse().map_err(|_| {
        let known: Vec<String> = ModelKind::ALL.iter().map(|k| k.as_str().replace('_', "-")).collect();
        Failure::usage(format!("unknown --kind `{kind}` (expected one of {})", known.join(", ")))
    })
}

fn parse_split(split: &str) -> Result<SplitSide, Failure> {
    split.parse().map_err(Failure::from)
}

/// Chooses the modalities a model of `kind` trains on.
fn modalities_for(kind: ModelKind, dataset: &Dataset, chosen: Option<&str>) -> Result<Vec<String>, Failure> {
    let all: Vec<String> = dataset.modality_dims().into_keys().collect();
    if all.is_empty() {
        return Err(Failure::data("dataset has no sequences"));
    }
    match chosen {
        Some(m) if all.iter().any(|a| a == m) => Ok(vec![m.to_string()]),
        Some(m) => Err(Failure::usage(format!("dataset has no modality `{m}` (found {})", all.join(", ")))),
        None if kind.is_multimodal() => Ok(all),
        None => Ok(vec![all[0].clone()]),
    }
}

fn restrict(dataset: &Dataset, modalities: &[String]) -> Result<Dataset, Failure> {
    let ids: Vec<&str> = modalities.iter().map(String::as_str).collect();
    Ok(dataset.select_modalities(&ids)?)
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Output directory for frame CSVs and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of sequences.
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    /// Per-frame noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 20)]
    pub sources: usize,
    /// Nominal frames per sequence.
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    /// Also write a second modality: the first plus noise of this deviation.
    #[arg(long)]
    pub second_modality_noise: Option<f64>,
    /// JSON file whose keys override these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn synth(args: SynthArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let cfg = SynthConfig {
        count: args.count,
        seed: args.seed,
        noise: args.noise,
        sources: args.sources,
        frames: args.frames,
        second_modality_noise: args.second_modality_noise,
        ..SynthConfig::default()
    };
    let dataset = make_synthetic(&cfg)?;
    let manifest = save_dataset(&dataset, &args.out, FEATURE_PIPELINE)?;
    println!("wrote {} sequences to {}", dataset.len(), manifest.display());
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// crbm, dcrbm, mtcrbm, mtcrbm-deep, mtmcrbm or mtmcrbm-deep.
    #[arg(long, default_value = "mtcrbm")]
    pub kind: String,
    #[arg(long, default_value_t = 30)]
    pub hidden: usize,
    /// History order (number of past frames).
    #[arg(long, default_value_t = 10)]
    pub history: usize,
    #[arg(long)]
    pub fusion_hidden: Option<usize>,
    #[arg(long)]
    pub fusion_history: Option<usize>,
    #[arg(long)]
    pub deep_hidden: Option<usize>,
    #[arg(long)]
    pub deep_history: Option<usize>,
    /// Modality for single-layer kinds (default: the first one).
    #[arg(long)]
    pub modality: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 2e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub cd_steps: usize,
    /// Seeds initialization and training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Which side of the source split to train on: train, test or all.
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long, default_value_t = 0.5)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Training report prefix; writes PREFIX.json and PREFIX.csv
    /// (default: the model path with `.report`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// `PREFIX.json` and `PREFIX.csv` for the training report.
fn report_paths(out: &Path, report: Option<&Path>) -> (PathBuf, PathBuf) {
    let prefix = report.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("report"));
    let with = |ext: &str| {
        let mut name = prefix.clone().into_os_string();
        name.push(ext);
        PathBuf::from(name)
    };
    (with(".json"), with(".csv"))
}

pub fn train(args: TrainArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let kind = parse_kind(&args.kind)?;
    let side = parse_split(&args.split)?;
    let dataset = load_dataset(&args.data)?;
    let modalities = modalities_for(kind, &dataset, args.modality.as_deref())?;
    let dataset = restrict(&select_split(&dataset, side, args.split_fraction, args.split_seed)?, &modalities)?;
    let dims = dataset.modality_dims();
    let mut model_config = ModelConfig::new(kind, dims, args.hidden, args.history, dataset.tasks.clone());
    model_config.fusion_hidden_dim = args.fusion_hidden;
    model_config.fusion_history_order = args.fusion_history;
    model_config.deep_hidden_dim = args.deep_hidden;
    model_config.deep_history_order = args.deep_history;
    let model = new_model(&model_config, args.seed)?;
    let train_config = TrainConfig {
        learning_rate: args.lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        epochs: args.epochs,
        minibatch_size: args.batch,
        cd_steps: args.cd_steps,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (model, report) = run_train(model, &dataset, &train_config)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    }
    save_model(&model, &args.out)?;
    let (json_path, csv_path) = report_paths(&args.out, args.report.as_deref());
    write_file(&json_path, &report.to_json())?;
    write_file(&csv_path, &report.to_csv())?;
    if let Some(last) = report.epochs.last() {
        println!(
            "trained {kind} on {} sequences: {} epochs, reconstruction error {:.4}",
            dataset.len(),
            report.epochs.len(),
            last.reconstruction_error
        );
    }
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mtcrbm")]
    pub kind: String,
    /// Hidden widths, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,50,70,100,200")]
    pub hidden: Vec<usize>,
    /// History orders, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    pub history: Vec<usize>,
    #[arg(long)]
    pub modality: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 2e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// 1 for a single source split, k ≥ 2 for k-fold cross-validation over sources.
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.5)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Parallel grid points (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Ranked results table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn gridsearch(args: GridArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let kind = parse_kind(&args.kind)?;
    if args.hidden.is_empty() || args.history.is_empty() {
        return Err(Failure::usage("--hidden and --history need at least one value each"));
    }
    let dataset = load_dataset(&args.data)?;
    let modalities = modalities_for(kind, &dataset, args.modality.as_deref())?;
    let dataset = restrict(&dataset, &modalities)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let grid = GridConfig {
        kind,
        points: GridPoint::product(&args.hidden, &args.history),
        folds: args.folds,
        split_fraction: args.split_fraction,
        split_seed: args.split_seed,
        model_seed: args.seed,
        train: TrainConfig {
            learning_rate: args.lr,
            momentum: args.momentum,
            weight_decay: args.weight_decay,
            epochs: args.epochs,
            minibatch_size: args.batch,
            seed: args.seed,
            ..TrainConfig::default()
        },
        workers,
    };
    let result = grid_search(&dataset, &grid)?;
    write_file(&args.out, &result.to_csv())?;
    if let Some(best) = result.cells.first() {
        match best.mean_accuracy {
            Some(acc) => println!(
                "best: hidden {} history {} mean accuracy {acc:.4}",
                best.point.hidden, best.point.history
            ),
            None => return Err(Failure::data("every grid point failed; see the error column")),
        }
    }
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which side of the source split to evaluate: train, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0.5)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Directory for accuracy.csv, confusion.csv and evaluation.json.
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let side = parse_split(&args.split)?;
    let model = load_model(&args.model)?;
    let dataset = load_dataset(&args.data)?;
    let dataset = select_split(&dataset, side, args.split_fraction, args.split_seed)?;
    let evaluation = evaluate(&model, &dataset, ClassifyOptions::default())?;
    let table = evaluation.accuracy_table_csv();
    write_file(&args.out.join("accuracy.csv"), &table)?;
    write_file(&args.out.join("confusion.csv"), &evaluation.confusion_csv())?;
    let json = serde_json::to_string_pretty(&evaluation).expect("evaluation serializes");
    write_file(&args.out.join("evaluation.json"), &(json + "\n"))?;
    print!("{table}");
    Ok(())
}

/// `FILE` for single-modality models, `MODALITY=FILE` (repeated) for fusion models.
fn read_input_sequence(model: &ModelBundle, specs: &[String], labels: BTreeMap<String, usize>) -> Result<MultimodalSequence, Failure> {
    let ids = model.modality_ids();
    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for spec in specs {
        match spec.split_once('=') {
            Some((m, f)) => {
                files.insert(m.to_string(), PathBuf::from(f));
            }
            None if ids.len() == 1 && specs.len() == 1 => {
                files.insert(ids[0].to_string(), PathBuf::from(spec));
            }
            None => {
                return Err(Failure::usage(format!(
                    "this model reads modalities {}; pass --seq MODALITY=FILE for each",
                    ids.join(", ")
                )))
            }
        }
    }
    let first = files
        .values()
        .next()
        .ok_or_else(|| Failure::usage("--seq is required"))?
        .clone();
    let id = first.file_stem().map_or("input".to_string(), |s| s.to_string_lossy().into_owned());
    let mut parts = BTreeMap::new();
    for m in ids {
        let file = files
            .remove(m)
            .ok_or_else(|| Failure::usage(format!("no --seq given for modality `{m}`")))?;
        let frames = read_frames_csv(&file)?;
        parts.insert(m.to_string(), FrameSequence::new(m, frames, labels.clone(), "input")?);
    }
    if let Some(extra) = files.keys().next() {
        return Err(Failure::usage(format!("the model has no modality `{extra}`")));
    }
    Ok(MultimodalSequence::new(id, "input", parts, labels)?)
}

/// `TASK=CLASS` pairs, with the class given by name or index.
fn parse_assignments(model: &ModelBundle, pairs: &[String], flag: &str) -> Result<BTreeMap<String, usize>, Failure> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let (task, class) = pair
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("{flag} expects TASK=CLASS, got `{pair}`")))?;
        let spec = model.task(task).map_err(|e| Failure::usage(e.to_string()))?;
        let index = spec.class_index(class).map_err(|e| Failure::usage(e.to_string()))?;
        out.insert(task.to_string(), index);
    }
    Ok(out)
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Frame CSV; `MODALITY=FILE` once per modality for fusion models.
    #[arg(long, required_unless_present = "data")]
    pub seq: Vec<String>,
    /// Classify every sequence of a manifest instead.
    #[arg(long, conflicts_with = "seq")]
    pub data: Option<PathBuf>,
    /// JSON-lines output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-frame posteriors, one CSV per sequence, into this directory.
    #[arg(long)]
    pub timeline_dir: Option<PathBuf>,
    /// Refuse input whose standardized mean |z| exceeds this (frames in other units).
    #[arg(long, default_value_t = 10.0)]
    pub unit_tolerance: f64,
    /// Skip the unit check.
    #[arg(long)]
    pub no_unit_check: bool,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn classify(args: ClassifyArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let model = load_model(&args.model)?;
    let sequences = match &args.data {
        Some(manifest) => load_dataset(manifest)?.sequences,
        None => vec![read_input_sequence(&model, &args.seq, BTreeMap::new())?],
    };
    let options = ClassifyOptions {
        unit_tolerance: (!args.no_unit_check).then_some(args.unit_tolerance),
    };
    let mut lines = String::new();
    for seq in &sequences {
        let result = classify_sequence(&model, seq, options)?;
        let timeline = match &args.timeline_dir {
            Some(dir) => {
                let file = dir.join(format!("{}_posteriors.csv", seq.id));
                write_file(&file, &result.timeline_csv(&model.tasks))?;
                Some(file.display().to_string())
            }
            None => None,
        };
        for record in result.records(timeline.as_deref()) {
            lines += &serde_json::to_string(&record).expect("record serializes");
            lines.push('\n');
        }
    }
    match &args.out {
        Some(out) => write_file(out, &lines),
        None => std::io::stdout()
            .write_all(lines.as_bytes())
            .map_err(|e| Failure::data(format!("stdout: {e}"))),
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct MorphArgs {
    /// An mtcrbm or dcrbm model.
    #[arg(long)]
    pub model: PathBuf,
    /// Frame CSV to morph.
    #[arg(long)]
    pub seq: String,
    /// Target label, `TASK=CLASS`; repeat for several tasks.
    #[arg(long = "set", required = true)]
    pub set: Vec<String>,
    /// Known labels of the input, `TASK=CLASS`. Tasks left unset use the classifier's decision.
    #[arg(long)]
    pub label: Vec<String>,
    /// Weight of the original sequence in the history window.
    #[arg(long, default_value_t = DEFAULT_BLEND)]
    pub blend: f64,
    /// Morphed frame CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn morph(args: MorphArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let model = load_model(&args.model)?;
    let targets = parse_assignments(&model, &args.set, "--set")?;
    let known = parse_assignments(&model, &args.label, "--label")?;
    let seq = read_input_sequence(&model, std::slice::from_ref(&args.seq), known)?;
    let morphed = morph_sequence(&model, &seq, &targets, args.blend)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    }
    write_frames_csv(&args.out, &morphed.frames)?;
    println!("wrote {} frames to {}", morphed.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct MorphEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0.5)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Task whose class is changed.
    #[arg(long, default_value = "AF")]
    pub style_task: String,
    /// Task indexing the table rows.
    #[arg(long, default_value = "AC")]
    pub group_task: String,
    /// Style class of the sequences to morph.
    #[arg(long, default_value = "Neutral")]
    pub source: String,
    /// Target style classes, comma-separated (default: every class but the source).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Add the source class as a target (null-morph control column).
    #[arg(long)]
    pub null_control: bool,
    #[arg(long, default_value_t = DEFAULT_BLEND)]
    pub blend: f64,
    /// Before/after table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn morph_eval(args: MorphEvalArgs) -> Outcome {
    let path = args.config.clone();
    let args = config::apply(args, path.as_deref())?;
    let side = parse_split(&args.split)?;
    let model = load_model(&args.model)?;
    let style = model.task(&args.style_task).map_err(|e| Failure::usage(e.to_string()))?;
    let source = style
        .class_index(&args.source)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mut targets = if args.targets.is_empty() {
        (0..style.class_count).filter(|&k| k != source).collect()
    } else {
        args.targets
            .iter()
            .map(|t| style.class_index(t).map_err(|e| Failure::usage(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?
    };
    if args.null_control && !targets.contains(&source) {
        targets.push(source);
    }
    let dataset = load_dataset(&args.data)?;
    let dataset = select_split(&dataset, side, args.split_fraction, args.split_seed)?;
    let config = MorphEvalConfig {
        style_task: args.style_task.clone(),
        group_task: args.group_task.clone(),
        source_class: source,
        target_classes: targets,
        blend: args.blend,
    };
    let table = run_morph_eval(&model, &dataset, &config)?;
    write_file(&args.out, &table.to_csv())?;
    let (raised, total) = table.raised();
    println!("target probability rose in {raised} of {total} cells");
    if let Some(delta) = table.null_delta() {
        println!("largest null-morph change {delta:.4}");
    }
    Ok(())
}
