use alice_core::data::make_blobs;
use alice_core::interchange::{load_export, read_scores_csv, scores_to_csv, write_export, ExportSource, ScoreRow, FEATURES_FILE, LABELS_FILE, PREDICTIONS_FILE};
use alice_core::models::{train_toy, ToyKind};
use alice_core::{fit_gaussians, fit_logistic, transfer::OptimizerSettings, AliceEstimator, ErrorFunction, GaussianConfig, ProbabilityVector};

fn source() -> ExportSource {
    ExportSource {
        model: "blob-mlp".into(),
        layer: "input".into(),
        split: "test".into(),
    }
}

#[test]
fn hundred_row_export_round_trip() {
    let train = make_blobs(4, 4.0, 50, 0, 1, "b").unwrap();
    let test = make_blobs(4, 4.0, 25, 0, 2, "b").unwrap();
    let model = train_toy(ToyKind::mlp(), &train, 50, 0).unwrap();
    let preds = model.predict_batch(test.features().view()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = write_export(dir.path(), &source(), test.features(), test.label_space(), &preds, test.labels()).unwrap();
    assert_eq!(m.rows, 100);

    for file in [FEATURES_FILE, PREDICTIONS_FILE, LABELS_FILE] {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().count(), 101, "{file}");
    }
    let e = load_export(dir.path()).unwrap();
    assert_eq!((e.features.nrows(), e.features.ncols(), e.label_space().len()), (100, 2, 4));
    for p in &e.predictions {
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }
    assert_eq!(e.predictions, preds);
    assert_eq!(e.dataset(test.label_space().clone()).unwrap(), test);
}

#[test]
fn identity_model_export_is_one_hot() {
    let data = make_blobs(3, 4.0, 4, 10, 3, "b").unwrap();
    let preds: Vec<ProbabilityVector> = data.label_indices().into_iter().map(|j| ProbabilityVector::one_hot(3, j)).collect();
    let dir = tempfile::tempdir().unwrap();
    write_export(dir.path(), &source(), data.features(), data.label_space(), &preds, data.labels()).unwrap();
    let e = load_export(dir.path()).unwrap();
    for (p, y) in e.predictions.iter().zip(&e.labels) {
        assert_eq!(e.label_space().id_at(p.argmax()), *y);
        assert_eq!(p.max(), 1.0);
    }
    let header = std::fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
    assert!(header.starts_with("10,11,12\n"));
}

#[test]
fn fit_and_score_an_export() {
    let train = make_blobs(3, 4.0, 40, 0, 4, "b").unwrap();
    let val = make_blobs(3, 4.0, 20, 0, 5, "b").unwrap();
    let model = train_toy(ToyKind::logistic(), &train, 300, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let tp = model.predict_batch(train.features().view()).unwrap();
    write_export(dir.path(), &source(), train.features(), train.label_space(), &tp, train.labels()).unwrap();
    let e = load_export(dir.path()).unwrap();

    let predicted: Vec<_> = e.predictions.iter().map(|p| e.label_space().id_at(p.argmax())).collect();
    let set = fit_gaussians(e.features.view(), &predicted, e.label_space(), &GaussianConfig::default()).unwrap();
    let (transfer, _) = fit_logistic(&e.dataset(e.label_space().clone()).unwrap(), &val, &[1e-2, 1.0], &OptimizerSettings::default()).unwrap();
    let est = AliceEstimator::new(set, transfer, ErrorFunction::zero_one()).unwrap();
    let mut rows = Vec::new();
    for (i, p) in e.predictions.iter().enumerate().take(5) {
        let s = est.score(e.features.row(i), p, 0.5).unwrap();
        rows.push(ScoreRow {
            point_id: i,
            delta: 0.5,
            estimator: "alice".into(),
            score: s,
        });
    }
    let path = dir.path().join("scores.csv");
    std::fs::write(&path, scores_to_csv(&rows).unwrap()).unwrap();
    assert_eq!(read_scores_csv(&path).unwrap(), rows);
}
