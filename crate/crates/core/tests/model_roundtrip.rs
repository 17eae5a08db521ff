use std::fs;

use voxmeta_core::evaluation::{evaluate_model, train_experiment, ExperimentConfig, Task};
use voxmeta_core::ingest::write_embeddings;
use voxmeta_core::regression::{DesignMatrix, ModelFile, ModelKind};
use voxmeta_core::synthetic::{learnable_embeddings, LearnableSpec};

fn features(dir: &std::path::Path, dimension: usize) -> std::path::PathBuf {
    let corpus = learnable_embeddings(&LearnableSpec {
        speakers: 90,
        dimension,
        seed: 21,
        ..LearnableSpec::default()
    })
    .unwrap();
    let path = dir.join("features.csv");
    let mut bytes = Vec::new();
    write_embeddings(&mut bytes, &corpus.embeddings).unwrap();
    fs::write(&path, bytes).unwrap();
    path
}

#[test]
fn saved_models_predict_like_the_fitted_ones() {
    let dir = tempfile::tempdir().unwrap();
    let path = features(dir.path(), 12);
    for (task, kind) in [
        (Task::Age, ModelKind::Ols),
        (Task::Age, ModelKind::Ridge),
        (Task::Age, ModelKind::Lasso),
        (Task::Gender, ModelKind::Logistic),
    ] {
        let mut config = ExperimentConfig::new(task, &path, kind, 21);
        config.dimension = Some(12);
        let exp = train_experiment(&config).unwrap();
        let json = serde_json::to_string_pretty(&exp.model_file().unwrap()).unwrap();
        let loaded = serde_json::from_str::<ModelFile>(&json)
            .unwrap()
            .into_coefficients()
            .unwrap();
        let x = DesignMatrix::from_records(&exp.prepared.test).unwrap();
        assert_eq!(exp.model.predict(&x).unwrap(), loaded.predict(&x).unwrap(), "{kind:?}");
        assert_eq!(
            evaluate_model(&exp.model, task, &exp.prepared.test).unwrap(),
            evaluate_model(&loaded, task, &exp.prepared.test).unwrap()
        );
    }
}

#[test]
fn malformed_model_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = features(dir.path(), 4);
    let mut config = ExperimentConfig::new(Task::Age, &path, ModelKind::Ridge, 1);
    config.dimension = Some(4);
    config.lambda = Some(1.0);
    let file = train_experiment(&config).unwrap().model_file().unwrap();

    let mut short = file.clone();
    short.column_stds.pop();
    assert!(short.into_coefficients().is_err());

    let mut json: serde_json::Value = serde_json::to_value(&file).unwrap();
    json["weights"][0] = serde_json::Value::Null;
    assert!(serde_json::from_value::<ModelFile>(json).is_err());

    let loaded = file.into_coefficients().unwrap();
    let wrong_width = DesignMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]).unwrap();
    assert!(loaded.predict(&wrong_width).is_err());
}
