use mvlstm::granger::{DEFAULT_LAG, DEFAULT_LEVEL};
use mvlstm::train::make_windows_with_stats;
use mvlstm::{
    evaluate, fit, generate, granger_rank, infer, make_windows, ArxSpec, InterpretReport, ModelFile, SplitFractions,
    TrainConfig,
};

fn short_config() -> TrainConfig {
    TrainConfig {
        window: 5,
        per_var_dim: 2,
        learning_rate: 5e-3,
        max_epochs: 15,
        patience: 5,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn synth_train_save_load_infer() {
    let frame = generate(&ArxSpec::lag1(&[0.9, 0.0, 0.3], 0.0, 0.1, 600, 3)).unwrap();
    let cfg = short_config();
    let ds = make_windows(&frame, cfg.window, SplitFractions::default()).unwrap();
    let result = fit(&ds, &cfg).unwrap();
    assert!(result.test_rmse.is_finite());
    assert_eq!(result.test_predictions.len(), ds.test.len());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    ModelFile::new(ds.names.clone(), ds.stats.clone(), result.params.clone())
        .unwrap()
        .save(&path)
        .unwrap();
    let model = ModelFile::load(&path).unwrap();
    assert_eq!(model.params, result.params);

    // windows rebuilt from the stored statistics reproduce the test predictions
    let again = make_windows_with_stats(&frame, cfg.window, SplitFractions::default(), &model.stats).unwrap();
    let ev = evaluate(&model.params, &again.test).unwrap();
    assert_eq!(ev.predictions, result.test_predictions);
    let first = infer(&model.params, &again.test[0].inputs).unwrap();
    assert_eq!(first.prediction, result.test_predictions[0]);
    assert_eq!(first.weights, result.test_alphas[0]);

    let granger = granger_rank(&frame, DEFAULT_LAG, DEFAULT_LEVEL).unwrap();
    let report = InterpretReport::build(&ds.names, &result.test_alphas, &granger, 10, None).unwrap();
    assert_eq!(report.n_instances, ds.test.len());
    assert_eq!(report.agreement.attention_order.len(), 3);
    assert_eq!(report.agreement.causal, ["x1", "x3"]);
    let total: f64 = report.variables.iter().map(|v| v.attention_mean).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn training_is_independent_of_thread_count() {
    let frame = generate(&ArxSpec::lag1(&[0.5, -0.4], 0.2, 0.2, 400, 9)).unwrap();
    let ds = make_windows(&frame, 5, SplitFractions::default()).unwrap();
    let run = |threads| fit(&ds, &TrainConfig { threads, ..short_config() }).unwrap();
    let (a, b) = (run(1), run(3));
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_curve, b.loss_curve);
}
