use staylor::attribution::{attribute_cohort, shapley_exact};
use staylor::synthetic::{random_ensemble, random_table};
use staylor::treemodel::{Ensemble, Tree};
use staylor::{oracle, Coalition, Explainer, FeatureTable, TreeEnsemble};

fn fixture(seed: u64) -> (TreeEnsemble, FeatureTable) {
    let k = 2 + (seed % 6) as usize;
    let model = random_ensemble(k, k - 1, 4, 1 + (seed % 4) as usize, 5, seed).unwrap();
    let table = random_table(48, k, 4, 0.1, seed + 1000).unwrap();
    (model, table)
}

#[test]
fn efficiency_and_null_player_on_random_ensembles() {
    for seed in 0..30 {
        let (model, table) = fixture(seed);
        let k = model.num_features();
        let explainer = Explainer::new(&model, &table).unwrap();
        let cohort = attribute_cohort(&explainer, &table).unwrap();
        for (r, row) in cohort.rows.iter().enumerate() {
            let total = cohort.baseline + row.centered.iter().sum::<f64>();
            assert!((total - row.prediction).abs() < 1e-9, "seed {seed} row {r}");
            let span = row.prediction - row.empty_value;
            assert!((row.raw.iter().sum::<f64>() - span).abs() < 1e-9);
            assert!(row.raw[k - 1].abs() < 1e-12, "unused feature got {}", row.raw[k - 1]);
        }
        for i in 0..k {
            let mean: f64 = cohort.centered_column(i).iter().sum::<f64>() / table.num_rows() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }
}

#[test]
fn linearity_on_random_ensembles() {
    for seed in 0..20 {
        let (a, table) = fixture(seed);
        let k = a.num_features();
        let b = random_ensemble(k, k, 4, 3, 4, seed + 500).unwrap();
        let sum = a.sum(&b).unwrap();
        let ea = Explainer::new(&a, &table).unwrap();
        let eb = Explainer::new(&b, &table).unwrap();
        let es = Explainer::new(&sum, &table).unwrap();
        for row in table.rows().take(16) {
            let pa = shapley_exact(&ea.context(row).unwrap()).unwrap();
            let pb = shapley_exact(&eb.context(row).unwrap()).unwrap();
            let ps = shapley_exact(&es.context(row).unwrap()).unwrap();
            for i in 0..k {
                assert!((pa[i] + pb[i] - ps[i]).abs() < 1e-9);
            }
        }
    }
}

fn swap01(model: &TreeEnsemble) -> TreeEnsemble {
    use staylor::treemodel::Node;
    let trees = model
        .trees()
        .iter()
        .map(|t| {
            let nodes = t
                .nodes()
                .iter()
                .map(|n| match n.clone() {
                    Node::Split { feature, threshold, left, right, default_left } => Node::Split {
                        feature: [1, 0].get(feature).copied().unwrap_or(feature),
                        threshold,
                        left,
                        right,
                        default_left,
                    },
                    leaf => leaf,
                })
                .collect();
            Tree::new(nodes, model.num_features()).unwrap()
        })
        .collect();
    Ensemble::new(0.0, model.feature_names().to_vec(), trees).unwrap()
}

#[test]
fn symmetry_for_exchangeable_features() {
    for seed in 0..10 {
        let base = random_ensemble(4, 4, 4, 3, 4, seed).unwrap();
        let model = base.sum(&swap01(&base)).unwrap();
        let half = random_table(20, 4, 4, 0.0, seed + 7).unwrap();
        let mut rows: Vec<Vec<Option<f64>>> = half.rows().map(<[_]>::to_vec).collect();
        rows.extend(half.rows().map(|r| vec![r[1], r[0], r[2], r[3]]));
        let bg = FeatureTable::new(half.names().to_vec(), rows).unwrap();
        let explainer = Explainer::new(&model, &bg).unwrap();
        let ctx = explainer.context(&[Some(2.0), Some(2.0), Some(1.0), Some(3.0)]).unwrap();
        let phi = shapley_exact(&ctx).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-9, "seed {seed}: {phi:?}");
    }
}

#[test]
fn grouped_evaluator_matches_oracle() {
    for seed in 0..12 {
        let (model, table) = fixture(seed);
        let grouped = Explainer::new(&model, &table).unwrap();
        let generic = Explainer::generic(&model, &table).unwrap();
        for row in table.rows().take(3) {
            let fast = shapley_exact(&grouped.context(row).unwrap()).unwrap();
            let slow = shapley_exact(&generic.context(row).unwrap()).unwrap();
            let brute = oracle::shapley(&model, row, &table).unwrap();
            for i in 0..model.num_features() {
                assert!((fast[i] - brute[i]).abs() < 1e-12);
                assert!((slow[i] - brute[i]).abs() < 1e-12);
            }
            let ctx = grouped.context(row).unwrap();
            let full = Coalition::full(model.num_features());
            assert_eq!(ctx.coalition_value(full).unwrap(), model.predict(row).unwrap());
        }
    }
}
