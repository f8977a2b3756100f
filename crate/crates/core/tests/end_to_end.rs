//! Training runs on the synthetic dataset, through the public API.

use std::collections::BTreeMap;

use mtcrbm::data::synth::FEATURE_PIPELINE;
use mtcrbm::data::{load_dataset, make_synthetic, save_dataset, split_by_source, SynthConfig};
use mtcrbm::inference::{evaluate, ClassifyOptions};
use mtcrbm::model::{load_model, new_model, save_model, Dataset, ModelBundle, ModelConfig, ModelKind};
use mtcrbm::morphing::morph_sequence;
use mtcrbm::training::{train, TrainConfig};

fn split(config: &SynthConfig) -> (Dataset, Dataset) {
    let data = make_synthetic(config).unwrap().select_modalities(&["mocap"]).unwrap();
    split_by_source(&data, 0.5, 0).unwrap()
}

fn fit(kind: ModelKind, data: &Dataset, hidden: usize, history: usize, epochs: usize) -> ModelBundle {
    let config = ModelConfig::new(kind, data.modality_dims(), hidden, history, data.tasks.clone());
    let tc = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    train(new_model(&config, 0).unwrap(), data, &tc).unwrap().0
}

fn accuracy(model: &ModelBundle, data: &Dataset) -> BTreeMap<String, f64> {
    let eval = evaluate(model, data, ClassifyOptions::default()).unwrap();
    eval.sequence_level.into_iter().map(|(t, m)| (t, m.accuracy)).collect()
}

#[test]
fn deep_heads_match_or_beat_the_flat_model() {
    let (train_set, test_set) = split(&SynthConfig::default());
    let flat = accuracy(&fit(ModelKind::Mtcrbm, &train_set, 30, 10, 30), &test_set);
    let deep = accuracy(&fit(ModelKind::MtcrbmDeep, &train_set, 30, 10, 30), &test_set);
    let wins = flat.keys().filter(|t| deep[*t] >= flat[*t]).count();
    assert!(wins >= 2, "deep {deep:?} flat {flat:?}");
}

#[test]
fn files_round_trip_without_changing_results() {
    let config = SynthConfig {
        count: 96,
        sources: 6,
        ..SynthConfig::default()
    };
    let (train_set, test_set) = split(&config);
    let model = fit(ModelKind::Mtcrbm, &train_set, 12, 4, 3);
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(&test_set, dir.path().join("data"), FEATURE_PIPELINE).unwrap();
    save_model(&model, dir.path().join("model.json")).unwrap();

    let reloaded_data = load_dataset(&manifest).unwrap();
    let reloaded_model = load_model(dir.path().join("model.json")).unwrap();
    assert_eq!(reloaded_data.len(), test_set.len());
    assert_eq!(reloaded_model, model);
    let before = evaluate(&model, &test_set, ClassifyOptions::default()).unwrap();
    let after = evaluate(&reloaded_model, &reloaded_data, ClassifyOptions::default()).unwrap();
    assert_eq!(before.accuracy_table_csv(), after.accuracy_table_csv());
    assert_eq!(before.confusion_csv(), after.confusion_csv());
}

#[test]
fn morphing_a_trained_model_keeps_shape_and_is_repeatable() {
    let config = SynthConfig {
        count: 64,
        sources: 4,
        ..SynthConfig::default()
    };
    let (train_set, test_set) = split(&config);
    for kind in [ModelKind::Mtcrbm, ModelKind::Dcrbm] {
        let model = fit(kind, &train_set, 10, 3, 2);
        for seq in &test_set.sequences {
            let targets = BTreeMap::from([("AF".to_string(), 1)]);
            let original = &seq.parts["mocap"].frames;
            for blend in [0.0, 0.5, 1.0] {
                let morphed = morph_sequence(&model, seq, &targets, blend).unwrap();
                assert_eq!(morphed.frames.dim(), original.dim());
                assert!(morphed.frames.iter().all(|x| x.is_finite()));
                assert_eq!(morphed.labels["AF"], 1);
                assert_eq!(morphed.labels["AC"], seq.labels["AC"]);
                let again = morph_sequence(&model, seq, &targets, blend).unwrap();
                assert_eq!(again.frames, morphed.frames);
            }
        }
    }
}

#[test]
fn fusion_models_refuse_to_morph() {
    let config = SynthConfig {
        count: 32,
        sources: 4,
        second_modality_noise: Some(0.3),
        ..SynthConfig::default()
    };
    let data = make_synthetic(&config).unwrap();
    let model_config = ModelConfig::new(ModelKind::Mtmcrbm, data.modality_dims(), 6, 2, data.tasks.clone());
    let model = new_model(&model_config, 0).unwrap();
    let targets = BTreeMap::from([("AF".to_string(), 1)]);
    let err = morph_sequence(&model, &data.sequences[0], &targets, 0.5).unwrap_err();
    assert_eq!(err.category(), mtcrbm::ErrorCategory::Usage);
}
