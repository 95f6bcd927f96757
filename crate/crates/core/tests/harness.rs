use drawering::data::{
    fit_encoders, gen_synthetic, split_by_fraction, synthetic_schema, EncodedDataset, SplitSpec,
    SynthKind,
};
use drawering::drawers::{DrawerConfig, DrawerKind, DrawerMode};
use drawering::harness::{
    analyze_head, compare, emit_report, evaluate_mse, train_model, train_once, ComparisonReport,
    ModelBundle, ReportFormat, TrainConfig,
};
use drawering::nn::LayerSpec;
use drawering::trainer::{MixConfig, ModelSpec};

fn dataset() -> (EncodedDataset, SplitSpec) {
    let kind = SynthKind::HeavyTail;
    let table = gen_synthetic(kind, 1500, 4);
    let splits = split_by_fraction(1500, 0.2, 0.2, 4).unwrap();
    (
        fit_encoders(&table, &synthetic_schema(kind), &splits.train).unwrap(),
        splits,
    )
}

fn small_config() -> TrainConfig {
    TrainConfig {
        model: ModelSpec {
            core: vec![
                LayerSpec::linear(0, 16),
                LayerSpec::Relu,
                LayerSpec::linear(16, 16),
                LayerSpec::Relu,
            ],
            head_g: vec![LayerSpec::linear(16, 1)],
            head_s: Some(vec![
                LayerSpec::linear(16, 8),
                LayerSpec::Relu,
                LayerSpec::linear(8, 0),
                LayerSpec::Sigmoid,
            ]),
        },
        drawers: DrawerConfig {
            kind: DrawerKind::Uneven,
            mode: DrawerMode::Nested,
            n: 3,
        },
        batch_size: 64,
        patience: 2,
        min_iterations: 2,
        max_iterations: Some(4),
        min_occupancy: 50,
        ..TrainConfig::desk_scale()
    }
}

#[test]
fn runs_are_deterministic_and_select_the_best_iteration() {
    let (data, splits) = dataset();
    let cfg = small_config();
    let a = train_model(&cfg, &data, &splits, None).unwrap();
    let b = train_once(&cfg, &data, &splits).unwrap();
    assert_eq!(a.result, b);

    let r = &a.result;
    let min = r
        .trace
        .iter()
        .map(|t| t.validation)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_validation, min);
    assert_eq!(r.trace[r.best_iteration - 1].validation, min);
    // The returned parameters are the ones that scored best on validation.
    assert_eq!(
        evaluate_mse(&a.model, &data, &splits.validation).unwrap(),
        min
    );
    assert_eq!(evaluate_mse(&a.model, &data, &splits.test).unwrap(), r.test);
    assert_eq!(r.iterations, r.trace.len());
}

#[test]
fn aux_settings_do_not_affect_a_plain_run() {
    let (data, splits) = dataset();
    let plain = small_config().original();
    let mut other = plain.clone();
    other.mix = MixConfig {
        alpha: 0.1,
        ..MixConfig::default()
    };
    other.drawers.n = 7;
    other.drawers.mode = DrawerMode::Disjoint;
    assert_eq!(
        train_once(&plain, &data, &splits).unwrap(),
        train_once(&other, &data, &splits).unwrap()
    );
}

#[test]
fn evaluation_never_runs_the_aux_head() {
    let (data, splits) = dataset();
    let run = train_model(&small_config(), &data, &splits, None).unwrap();
    let plain = run.model.without_aux();
    run.model.reset_op_counts();
    plain.reset_op_counts();
    let a = evaluate_mse(&run.model, &data, &splits.test).unwrap();
    let b = evaluate_mse(&plain, &data, &splits.test).unwrap();
    assert_eq!(a, b);
    let (core, g, s) = run.model.op_counts();
    assert_eq!(s, 0);
    assert!(core > 0 && g > 0);
    assert_eq!((core, g, s), plain.op_counts());
}

#[test]
fn head_analysis_shapes() {
    let (data, splits) = dataset();
    let run = train_model(&small_config(), &data, &splits, None).unwrap();
    let drawers = run.drawers.as_ref().unwrap();
    let analysis = analyze_head(&run.model, &data, &splits.test, drawers).unwrap();
    assert_eq!(analysis.rows.len(), splits.test.len());
    for row in &analysis.rows {
        assert_eq!(row.outputs.len(), drawers.len() - 1);
        assert!(row.true_index < drawers.len());
        assert!(row.outputs.iter().all(|p| (0.0..=1.0).contains(p)));
    }
    assert!(analysis.mean_adjacent_violation >= 0.0);

    let plain = train_model(&small_config().original(), &data, &splits, None).unwrap();
    assert!(analyze_head(&plain.model, &data, &splits.test, drawers).is_err());
}

#[test]
fn bundle_round_trip_predicts_identically() {
    let (data, splits) = dataset();
    let cfg = small_config();
    let run = train_model(&cfg, &data, &splits, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    ModelBundle::new(cfg, data.encoder.clone(), &run)
        .save(&path)
        .unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    let model = loaded.model().unwrap();
    assert_eq!(
        evaluate_mse(&model, &data, &splits.test).unwrap(),
        evaluate_mse(&run.model, &data, &splits.test).unwrap()
    );
    assert_eq!(loaded.encoder, data.encoder);
    assert_eq!(loaded.drawers, run.drawers);
}

#[test]
fn compare_pairs_seeds_and_emits_reports() {
    let (data, splits) = dataset();
    let mut cfg = small_config();
    cfg.seed = 100;
    cfg.max_iterations = Some(2);
    let report = compare(&cfg.original(), &cfg, 2, &data, &splits, 2).unwrap();
    assert_eq!(report.original.seeds(), vec![100, 101]);
    assert_eq!(report.extended.seeds(), vec![100, 101]);
    assert!(report.original.insufficient_runs);
    assert_eq!(report.paired_runs, 2);
    // Each entry equals an independent single run with the same seed.
    let solo = train_once(&cfg.with_seed(101), &data, &splits).unwrap();
    assert_eq!(report.extended.runs[1].result.as_ref().unwrap(), &solo);

    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    emit_report(&report, &json, ReportFormat::Json).unwrap();
    let back: ComparisonReport =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, report);

    let mut mismatched = cfg.clone();
    mismatched.batch_size = 32;
    assert!(compare(&cfg.original(), &mismatched, 1, &data, &splits, 1).is_err());
}

#[test]
fn failed_runs_are_recorded_not_raised() {
    let (data, splits) = dataset();
    let mut cfg = small_config();
    cfg.strict_occupancy = true;
    cfg.min_occupancy = 1_000_000;
    cfg.max_iterations = Some(1);
    let report = compare(&cfg.original(), &cfg, 1, &data, &splits, 1).unwrap();
    assert!(report.original.runs[0].result.is_some());
    assert!(report.extended.runs[0]
        .error
        .as_deref()
        .unwrap()
        .contains("fewer than"));
    assert!(report.extended.test.is_none());
    assert_eq!(report.errors().count(), 1);
}
