use staylor::attribution::attribute_cohort;
use staylor::rng::SeededRng;
use staylor::synthetic::{make_threshold_cohort, random_table};
use staylor::treemodel::{load_model, save_model, train_gbdt, train_gbdt_traced, TrainConfig};
use staylor::{Explainer, FeatureTable, TreeEnsemble};

#[test]
fn train_save_load_predicts_identically() {
    let cohort = make_threshold_cohort(300, 4).unwrap();
    let config = TrainConfig {
        num_trees: 40,
        ..TrainConfig::default()
    };
    let model = train_gbdt(&cohort.table, &cohort.targets, &config).unwrap();
    let text = save_model(&model).unwrap();
    let back: TreeEnsemble = load_model(&text).unwrap();
    assert_eq!(save_model(&back).unwrap(), text);
    let probe = random_table(1000, 5, 70, 0.2, 8).unwrap();
    let mut rng = SeededRng::new(3);
    for row in probe.rows() {
        let mut row = row.to_vec();
        for cell in row.iter_mut().flatten() {
            *cell = *cell / 30.0 + rng.next_f64();
        }
        assert_eq!(model.predict(&row).unwrap().to_bits(), back.predict(&row).unwrap().to_bits());
    }
}

#[test]
fn training_loss_never_increases() {
    let cohort = make_threshold_cohort(200, 2).unwrap();
    let config = TrainConfig {
        num_trees: 30,
        max_depth: 2,
        learning_rate: 0.5,
        ..TrainConfig::default()
    };
    let (_, history) = train_gbdt_traced(&cohort.table, &cohort.targets, &config).unwrap();
    assert_eq!(history.len(), 31);
    assert!(history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn csv_files_round_trip_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = make_threshold_cohort(100, 6).unwrap();
    let path = dir.path().join("data.csv");
    cohort.table.write_csv(&path).unwrap();
    let loaded = FeatureTable::load_csv(&path).unwrap();
    assert_eq!(loaded, cohort.table);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), loaded.to_csv_string());

    let model = train_gbdt(&loaded, &cohort.targets, &TrainConfig { num_trees: 20, ..TrainConfig::default() }).unwrap();
    let explainer = Explainer::new(&model, &loaded).unwrap();
    let shap = attribute_cohort(&explainer, &loaded).unwrap();
    for row in &shap.rows {
        let total = shap.baseline + row.centered.iter().sum::<f64>();
        assert!((total - row.prediction).abs() < 1e-9);
    }
}
