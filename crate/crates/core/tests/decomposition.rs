use staylor::interaction::{
    interaction_matrix, interactions_for_cohort, siv_main, siv_pair, taylor_main, taylor_pair, InteractionMethod,
};
use staylor::attribution::shapley_exact;
use staylor::synthetic::{make_eq5_function, random_ensemble, random_table};
use staylor::{oracle, Coalition, Explainer, FnModel, Rational64};

#[test]
fn identities_on_random_ensembles() {
    for seed in 0..30 {
        let k = 2 + (seed % 6) as usize;
        let model = random_ensemble(k, k, 4, 4, 4, seed).unwrap();
        let table = random_table(32, k, 4, 0.15, seed + 77).unwrap();
        let explainer = Explainer::new(&model, &table).unwrap();
        let cohort = interactions_for_cohort(&explainer, &table, InteractionMethod::Taylor).unwrap();
        for (r, m) in cohort.matrices.iter().enumerate() {
            for i in 0..k {
                assert!((cohort.shapley[r][i] - m.recompose(i)).abs() < 1e-9);
                for j in 0..k {
                    assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
            let span = cohort.predictions[r] - cohort.empty_values[r];
            assert!((m.total() - span).abs() < 1e-9);
        }
        for m in &cohort.centered {
            assert_eq!(m.num_features(), k);
        }
    }
}

#[test]
fn oracle_agreement_up_to_six_features() {
    for seed in 0..8 {
        let k = 3 + (seed % 4) as usize;
        let model = random_ensemble(k, k, 3, 3, 3, seed + 40).unwrap();
        let table = random_table(12, k, 3, 0.1, seed + 41).unwrap();
        let explainer = Explainer::new(&model, &table).unwrap();
        let row = table.row(0);
        let ctx = explainer.context(row).unwrap();
        let brute = oracle::decompose(&model, row, &table).unwrap();
        let taylor = interaction_matrix(&ctx, InteractionMethod::Taylor).unwrap();
        let siv = interaction_matrix(&ctx, InteractionMethod::Siv).unwrap();
        let phi = shapley_exact(&ctx).unwrap();
        for i in 0..k {
            assert!((taylor.main(i) - taylor_main(&ctx, i, &phi).unwrap()).abs() < 1e-12);
            assert!((siv.main(i) - siv_main(&ctx, i, &phi).unwrap()).abs() < 1e-12);
            for j in 0..k {
                assert!((taylor.get(i, j) - brute.taylor[i][j]).abs() < 1e-12);
                assert!((siv.get(i, j) - brute.siv[i][j]).abs() < 1e-12);
                if i != j {
                    assert_eq!(taylor.get(i, j), taylor_pair(&ctx, i, j).unwrap());
                    assert_eq!(siv.get(i, j), siv_pair(&ctx, i, j).unwrap());
                }
            }
        }
    }
}

#[test]
fn siv_and_taylor_diverge_on_three_way_product() {
    let spec = make_eq5_function(0.0, 0.0, 0.0, 0.0, 0.0);
    let cube = spec.background().unwrap();
    let model = FnModel::new(3, |r: &[Option<f64>]| r[0].unwrap() * r[1].unwrap() * r[2].unwrap());
    let explainer = Explainer::new(&model, &cube).unwrap();
    let ctx = explainer.context(&[Some(1.0); 3]).unwrap();
    let phi = shapley_exact(&ctx).unwrap();
    assert!(taylor_main(&ctx, 0, &phi).unwrap().abs() < 1e-12);
    assert!((siv_main(&ctx, 0, &phi).unwrap() + 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn eq5_recovery_in_exact_arithmetic() {
    let q = Rational64::new;
    let spec = make_eq5_function(q(3, 2), q(-1, 3), q(2, 7), q(5, 4), q(-7, 5));
    let bg = spec.background().unwrap();
    let explainer = Explainer::new(&spec, &bg).unwrap();
    for row in bg.rows() {
        let x: Vec<Rational64> = row.iter().map(|c| c.unwrap()).collect();
        let ctx = explainer.context(row).unwrap();
        let m = interaction_matrix(&ctx, InteractionMethod::Taylor).unwrap();
        assert_eq!(m.main(0), q(3, 2) * x[0]);
        assert_eq!(m.main(1), q(-1, 3) * x[1]);
        assert_eq!(m.main(2), q(2, 7) * x[2]);
        assert_eq!(m.get(0, 1), q(5, 4) * x[0] * x[1]);
        assert_eq!(m.get(0, 2), q(-7, 5) * x[0] * x[2]);
        assert_eq!(m.get(1, 2), q(0, 1));
        assert_eq!(m.total(), ctx.prediction() - ctx.coalition_value(Coalition::EMPTY).unwrap());
    }
}
