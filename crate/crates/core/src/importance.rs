//! Standard-deviation importance of SHAP columns and of decomposition terms.
//!
//! Rankings are by importance descending, ties broken by `(i, j)` ascending.
//! Values are summed in sorted order so the result does not depend on the
//! row order of the cohort.

use std::cmp::Ordering;

use num_traits::Float;

use crate::attribution::CohortAttributions;
use crate::interaction::CohortInteractions;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEntry<T> {
    pub feature1: String,
    /// Equal to `feature1` for single-feature and main terms.
    pub feature2: String,
    pub index1: usize,
    pub index2: usize,
    pub importance: T,
    /// 1-based.
    pub rank: usize,
}

impl<T> ImportanceEntry<T> {
    pub fn is_main(&self) -> bool {
        self.index1 == self.index2
    }
}

/// Population standard deviation, independent of the order of `values`.
pub fn population_std<T: Scalar + Float>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = T::from_count(sorted.len());
    let mean = sorted.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    let mut sq: Vec<T> = sorted.iter().map(|&v| (v - mean) * (v - mean)).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    (sq.iter().fold(T::zero(), |acc, &v| acc + v) / n).sqrt()
}

/// Sorts `(i, j, importance)` triples and assigns ranks.
pub fn rank_terms<T: Scalar + Float>(
    names: &[String],
    terms: Vec<(usize, usize, T)>,
) -> Vec<ImportanceEntry<T>> {
    let mut terms = terms;
    terms.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    terms
        .into_iter()
        .enumerate()
        .map(|(r, (i, j, importance))| ImportanceEntry {
            feature1: names[i].clone(),
            feature2: names[j].clone(),
            index1: i,
            index2: j,
            importance,
            rank: r + 1,
        })
        .collect()
}

/// Ranking of features by the spread of their centered SHAP values.
pub fn feature_importance<T: Scalar + Float>(cohort: &CohortAttributions<T>) -> Vec<ImportanceEntry<T>> {
    let terms = (0..cohort.num_features())
        .map(|i| (i, i, population_std(&cohort.centered_column(i))))
        .collect();
    rank_terms(&cohort.feature_names, terms)
}

/// Scale applied to off-diagonal entries before taking the spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermScale {
    Full,
    Half,
}

/// Whether the spread is taken over centered or raw entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermBasis {
    Centered,
    Raw,
}

/// Merged ranking of all `i ≤ j` terms by the spread of centered entries.
pub fn term_importance<T: Scalar + Float>(cohort: &CohortInteractions<T>) -> Vec<ImportanceEntry<T>> {
    term_importance_with(cohort, TermBasis::Centered, TermScale::Full)
}

/// Variant of [`term_importance`]. With [`TermBasis::Raw`] the importance is
/// the root mean square of the raw entries; [`TermScale::Half`] halves the
/// off-diagonal entries.
pub fn term_importance_with<T: Scalar + Float>(
    cohort: &CohortInteractions<T>,
    basis: TermBasis,
    scale: TermScale,
) -> Vec<ImportanceEntry<T>> {
    let k = cohort.num_features();
    let half = T::one() / (T::one() + T::one());
    let mut terms = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            let factor = if i != j && scale == TermScale::Half { half } else { T::one() };
            let importance = match basis {
                TermBasis::Centered => factor * population_std(&cohort.centered_entry(i, j)),
                TermBasis::Raw => factor * root_mean_square(&cohort.raw_entry(i, j)),
            };
            terms.push((i, j, importance));
        }
    }
    rank_terms(&cohort.feature_names, terms)
}

fn root_mean_square<T: Scalar + Float>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let mut sq: Vec<T> = values.iter().map(|&v| v * v).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    (sq.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_count(sq.len())).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::shap_for_cohort;
    use crate::coredata::{Cell, Table};
    use crate::interaction::{matrices_for_cohort, InteractionMethod};
    use crate::valuefn::FnModel;

    fn cube(k: usize) -> Table<f64> {
        let rows = (0..1u32 << k)
            .map(|m| {
                (0..k)
                    .map(|i| if m >> i & 1 == 1 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        Table::from_dense((0..k).map(|i| format!("x{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn population_std_examples() {
        assert_eq!(population_std(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(population_std(&[-1.0, 1.0]), 1.0);
        assert_eq!(population_std::<f64>(&[]), 0.0);
    }

    #[test]
    fn linear_ranking() {
        let model = FnModel::new(2, |r: &[Cell<f64>]| 2.0 * r[0].unwrap() + 3.0 * r[1].unwrap());
        let bg = cube(2);
        let cohort = shap_for_cohort(&model, &bg, &bg).unwrap();
        let ranked = feature_importance(&cohort);
        assert_eq!(ranked[0].feature1, "x1");
        assert_eq!(ranked[1].feature1, "x0");
        assert!((ranked[0].importance - 3.0).abs() < 1e-9);
        assert!((ranked[1].importance - 2.0).abs() < 1e-9);
        assert_eq!((ranked[0].rank, ranked[1].rank), (1, 2));
    }

    #[test]
    fn constant_model_terms() {
        let model = FnModel::new(3, |_: &[Cell<f64>]| 4.0);
        let bg = cube(3);
        let cohort = matrices_for_cohort(&model, &bg, &bg, InteractionMethod::Taylor).unwrap();
        let ranked = term_importance(&cohort);
        assert_eq!(ranked.len(), 6);
        assert!(ranked.iter().all(|e| e.importance == 0.0));
        let order: Vec<(usize, usize)> = ranked.iter().map(|e| (e.index1, e.index2)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn three_way_ties_in_index_order() {
        let model = FnModel::new(3, |r: &[Cell<f64>]| r[0].unwrap() * r[1].unwrap() * r[2].unwrap());
        let bg = cube(3);
        let cohort = matrices_for_cohort(&model, &bg, &bg, InteractionMethod::Taylor).unwrap();
        let ranked = term_importance(&cohort);
        let top: Vec<(usize, usize)> = ranked[..3].iter().map(|e| (e.index1, e.index2)).collect();
        assert_eq!(top, vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(ranked[0].importance, ranked[2].importance);
        assert!(ranked[3..].iter().all(|e| e.importance.abs() < 1e-12));
    }

    #[test]
    fn eq5_without_xy_interaction() {
        let model = FnModel::new(3, |r: &[Cell<f64>]| {
            let (x, y, z) = (r[0].unwrap(), r[1].unwrap(), r[2].unwrap());
            0.5 * x + 1.0 * y - 0.8 * z + 0.7 * x * z
        });
        let bg = cube(3);
        let cohort = matrices_for_cohort(&model, &bg, &bg, InteractionMethod::Taylor).unwrap();
        let ranked = term_importance(&cohort);
        let xy = ranked.iter().find(|e| (e.index1, e.index2) == (0, 1)).unwrap();
        assert!(xy.importance.abs() < 1e-12);
        let nonzero = ranked.iter().filter(|e| e.importance > 1e-12).count();
        assert!(xy.rank > nonzero);
    }

    #[test]
    fn scaling_and_permutation() {
        let f = |r: &[Cell<f64>]| {
            let x: Vec<f64> = r.iter().map(|c| c.unwrap()).collect();
            x[0] * x[1] + 0.7 * x[1] + 0.3 * x[2] + 0.2 * x[1] * x[2] + (x[0] + 0.5 * x[2]).max(0.0)
        };
        let bg = cube(3);
        let base = term_importance(
            &matrices_for_cohort(&FnModel::new(3, f), &bg, &bg, InteractionMethod::Taylor).unwrap(),
        );
        let scaled = term_importance(
            &matrices_for_cohort(
                &FnModel::new(3, move |r: &[Cell<f64>]| 2.5 * f(r)),
                &bg,
                &bg,
                InteractionMethod::Taylor,
            )
            .unwrap(),
        );
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!((a.index1, a.index2), (b.index1, b.index2));
            assert!((2.5 * a.importance - b.importance).abs() < 1e-9);
        }
        let order: Vec<usize> = (0..8).rev().collect();
        let shuffled = bg.select_rows(&order).unwrap();
        let permuted = term_importance(
            &matrices_for_cohort(&FnModel::new(3, f), &shuffled, &shuffled, InteractionMethod::Taylor)
                .unwrap(),
        );
        let key = |v: &[ImportanceEntry<f64>]| v.iter().map(|e| (e.index1, e.index2)).collect::<Vec<_>>();
        assert_eq!(key(&base), key(&permuted));
    }

    #[test]
    fn recomposition_matches_feature_importance() {
        let f = |r: &[Cell<f64>]| {
            let x: Vec<f64> = r.iter().map(|c| c.unwrap()).collect();
            (x[0] - x[1]).abs() * x[2] + x[1]
        };
        let bg = cube(3);
        let model = FnModel::new(3, f);
        let shap = shap_for_cohort(&model, &bg, &bg).unwrap();
        let terms = matrices_for_cohort(&model, &bg, &bg, InteractionMethod::Taylor).unwrap();
        for i in 0..3 {
            let direct = population_std(&shap.centered_column(i));
            let recomposed: Vec<f64> = terms.centered.iter().map(|m| m.recompose(i)).collect();
            assert!((direct - population_std(&recomposed)).abs() < 1e-9);
        }
    }
}
