//! Shapley values per instance and cohort-centered SHAP values.
//!
//! For an instance `x` the raw Shapley value of feature `i` is
//! `Φ_i = Σ_{S ⊆ N\{i}} w(|S|) [f_x(S ∪ {i}) − f_x(S)]`. Over a cohort the
//! reported SHAP value is `φ_i = Φ_i − mean_k Φ_i(x^(k))` and the baseline is
//! the mean prediction, so `φ_0 + Σ_i φ_i = f(x)` whenever the background is
//! the cohort itself.

use num_traits::Float;
use rayon::prelude::*;

use crate::coredata::Table;
use crate::error::Result;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::valuefn::{check_exact, shapley_weight, Coalition, Explainer, Model, ValueContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult<T> {
    /// Shapley values `Φ_i`.
    pub raw: Vec<T>,
    /// Cohort-centered SHAP values `φ_i`.
    pub centered: Vec<T>,
    /// Cohort mean prediction `φ_0`.
    pub baseline: T,
    pub prediction: T,
    /// `f_x(∅)`, the background mean of the model.
    pub empty_value: T,
    /// Standard errors of `raw` for sampled estimates.
    pub std_errors: Option<Vec<T>>,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortAttributions<T> {
    pub feature_names: Vec<String>,
    pub rows: Vec<AttributionResult<T>>,
    /// Column means of the raw values, subtracted during centering.
    pub raw_means: Vec<T>,
    pub baseline: T,
}

impl<T: Scalar> CohortAttributions<T> {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Centered values of feature `i` across the cohort.
    pub fn centered_column(&self, i: usize) -> Vec<T> {
        self.rows.iter().map(|r| r.centered[i]).collect()
    }
}

/// Shapley values from a complete table of coalition values (`values[mask]`).
pub fn shapley_from_values<T: Scalar>(values: &[T], k: usize) -> Result<Vec<T>> {
    debug_assert_eq!(values.len(), 1 << k);
    let weights = (0..k)
        .map(|s| shapley_weight::<T>(s, k))
        .collect::<Result<Vec<T>>>()?;
    let mut phi = vec![T::zero(); k];
    for (mask, &v) in values.iter().enumerate() {
        let s = Coalition::from_bits(mask as u64);
        let w = weights[s.len().min(k.saturating_sub(1))];
        for (i, p) in phi.iter_mut().enumerate() {
            if !s.contains(i) {
                *p += w * (values[s.with(i).bits() as usize] - v);
            }
        }
    }
    Ok(phi)
}

/// Exact Shapley values: one pass over all `2^K` cached coalition values.
pub fn shapley_exact<T: Scalar>(ctx: &ValueContext<'_, '_, T>) -> Result<Vec<T>> {
    let k = ctx.num_features();
    check_exact(k)?;
    let values = ctx.all_values()?;
    shapley_from_values(&values, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledShapley<T> {
    pub values: Vec<T>,
    pub std_errors: Vec<T>,
}

/// Permutation estimator: each of `samples` uniformly random orderings adds
/// features one at a time and records each feature's marginal contribution.
/// Reports the per-feature mean and the standard error of that mean.
pub fn shapley_sampled<T: Scalar + Float>(
    ctx: &ValueContext<'_, '_, T>,
    samples: usize,
    seed: u64,
) -> Result<SampledShapley<T>> {
    if samples < 2 {
        return Err(crate::Error::Domain(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    let k = ctx.num_features();
    let mut rng = SeededRng::new(seed);
    let mut order: Vec<usize> = (0..k).collect();
    let mut sum = vec![T::zero(); k];
    let mut contributions = vec![Vec::with_capacity(samples); k];
    let empty = ctx.coalition_value(Coalition::EMPTY)?;
    for _ in 0..samples {
        rng.shuffle(&mut order);
        let mut s = Coalition::EMPTY;
        let mut previous = empty;
        for &i in &order {
            s = s.with(i);
            let current = ctx.coalition_value(s)?;
            let delta = current - previous;
            sum[i] += delta;
            contributions[i].push(delta);
            previous = current;
        }
    }
    let n = T::from_count(samples);
    let values: Vec<T> = sum.iter().map(|&s| s / n).collect();
    let std_errors = contributions
        .iter()
        .zip(&values)
        .map(|(c, &mean)| {
            let ss = c.iter().fold(T::zero(), |a, &d| a + (d - mean) * (d - mean));
            (ss / (n - T::one()) / n).sqrt()
        })
        .collect();
    Ok(SampledShapley { values, std_errors })
}

fn center<T: Scalar>(
    feature_names: Vec<String>,
    mut rows: Vec<AttributionResult<T>>,
) -> CohortAttributions<T> {
    let k = feature_names.len();
    let n = T::from_count(rows.len());
    let mut raw_means = vec![T::zero(); k];
    let mut baseline = T::zero();
    for r in &rows {
        for (m, &v) in raw_means.iter_mut().zip(&r.raw) {
            *m += v;
        }
        baseline += r.prediction;
    }
    for m in &mut raw_means {
        *m = *m / n;
    }
    baseline = baseline / n;
    for r in &mut rows {
        r.centered = r.raw.iter().zip(&raw_means).map(|(&v, &m)| v - m).collect();
        r.baseline = baseline;
    }
    CohortAttributions {
        feature_names,
        rows,
        raw_means,
        baseline,
    }
}

fn feature_names<T: Scalar>(explainer: &Explainer<'_, T>, table: &Table<T>) -> Result<Vec<String>> {
    if table.num_features() != explainer.num_features() {
        return Err(crate::Error::Dimension {
            expected: explainer.num_features(),
            actual: table.num_features(),
        });
    }
    Ok(match explainer.model().as_ensemble() {
        Some(e) => e.feature_names().to_vec(),
        None => table.names().to_vec(),
    })
}

/// Exact attributions for every row of `table`, centered over the cohort.
pub fn attribute_cohort<T: Scalar>(
    explainer: &Explainer<'_, T>,
    table: &Table<T>,
) -> Result<CohortAttributions<T>> {
    let names = feature_names(explainer, table)?;
    check_exact(explainer.num_features())?;
    let rows = (0..table.num_rows())
        .into_par_iter()
        .map(|r| {
            let ctx = explainer.context(table.row(r))?;
            let raw = shapley_exact(&ctx)?;
            Ok(AttributionResult {
                raw,
                centered: Vec::new(),
                baseline: T::zero(),
                prediction: ctx.prediction(),
                empty_value: ctx.coalition_value(Coalition::EMPTY)?,
                std_errors: None,
                method: Method::Exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(center(names, rows))
}

/// Sampled attributions; row `r` uses the generator stream `(seed, r)`.
pub fn attribute_cohort_sampled<T: Scalar + Float>(
    explainer: &Explainer<'_, T>,
    table: &Table<T>,
    samples: usize,
    seed: u64,
) -> Result<CohortAttributions<T>> {
    let names = feature_names(explainer, table)?;
    let rows = (0..table.num_rows())
        .into_par_iter()
        .map(|r| {
            let ctx = explainer.context(table.row(r))?;
            let row_seed = SeededRng::for_stream(seed, r as u64).next_u64();
            let est = shapley_sampled(&ctx, samples, row_seed)?;
            Ok(AttributionResult {
                raw: est.values,
                centered: Vec::new(),
                baseline: T::zero(),
                prediction: ctx.prediction(),
                empty_value: ctx.coalition_value(Coalition::EMPTY)?,
                std_errors: Some(est.std_errors),
                method: Method::Sampled { samples, seed },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(center(names, rows))
}

/// Exact cohort attributions of `model` with absent features drawn from
/// `background`.
pub fn shap_for_cohort<T: Scalar>(
    model: &dyn Model<T>,
    table: &Table<T>,
    background: &Table<T>,
) -> Result<CohortAttributions<T>> {
    let explainer = Explainer::new(model, background)?;
    attribute_cohort(&explainer, table)
}
