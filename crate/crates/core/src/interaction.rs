//! Second-order Shapley-Taylor decomposition and the Shapley interaction
//! value (SIV) used for comparison.
//!
//! Pair terms are weighted sums of second differences
//! `Δ_ij(S) = f_x(S∪{i,j}) − f_x(S∪{i}) − f_x(S∪{j}) + f_x(S)` over
//! `S ⊆ N\{i,j}`:
//!
//! * Shapley-Taylor: weight `2|S|!(K−|S|−1)!/K!`, main term
//!   `Φ_ii = Φ_i − ½ Σ_{j≠i} Φ_ij`, so `Φ_i = Φ_ii + ½ Σ_{j≠i} Φ_ij`;
//! * SIV: weight `|S|!(K−|S|−2)!/(2(K−1)!)`, main term
//!   `Φ_ii = Φ_i − Σ_{j≠i} Φ_ij`.
//!
//! Under a pure three-way interaction SIV leaves a nonzero main term while
//! Shapley-Taylor does not; see the `three_way` tests.

use num_traits::Float;
use rayon::prelude::*;

use crate::attribution::{shapley_exact, shapley_from_values, shapley_sampled};
use crate::coredata::Table;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::valuefn::{check_exact, siv_weight, taylor_weight, Coalition, Explainer, Model, ValueContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InteractionMethod {
    Taylor,
    Siv,
}

impl InteractionMethod {
    pub fn label(self) -> &'static str {
        match self {
            InteractionMethod::Taylor => "taylor",
            InteractionMethod::Siv => "siv",
        }
    }

    fn weights<T: Scalar>(self, k: usize) -> Result<Vec<T>> {
        if k < 2 {
            return Ok(Vec::new());
        }
        (0..=k - 2)
            .map(|s| match self {
                InteractionMethod::Taylor => taylor_weight(s, k),
                InteractionMethod::Siv => siv_weight(s, k),
            })
            .collect()
    }

    /// Share of the pair terms removed from `Φ_i` to form the main term.
    fn pair_share<T: Scalar>(self) -> T {
        match self {
            InteractionMethod::Taylor => T::one() / (T::one() + T::one()),
            InteractionMethod::Siv => T::one(),
        }
    }
}

impl std::str::FromStr for InteractionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taylor" => Ok(Self::Taylor),
            "siv" => Ok(Self::Siv),
            other => Err(Error::Domain(format!("unknown interaction method {other:?}"))),
        }
    }
}

/// K×K symmetric matrix: main terms on the diagonal, pair terms off it.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix<T> {
    k: usize,
    values: Vec<T>,
    method: InteractionMethod,
}

impl<T: Scalar> InteractionMatrix<T> {
    fn zeros(k: usize, method: InteractionMethod) -> Self {
        Self {
            k,
            values: vec![T::zero(); k * k],
            method,
        }
    }

    /// Matrix from row-major `values`; they must be symmetric.
    pub fn from_values(k: usize, method: InteractionMethod, values: Vec<T>) -> Result<Self> {
        if values.len() != k * k {
            return Err(Error::Dimension {
                expected: k * k,
                actual: values.len(),
            });
        }
        for i in 0..k {
            for j in i + 1..k {
                if values[i * k + j] != values[j * k + i] {
                    return Err(Error::Domain(format!("entries ({i}, {j}) and ({j}, {i}) differ")));
                }
            }
        }
        Ok(Self { k, values, method })
    }

    pub fn num_features(&self) -> usize {
        self.k
    }

    pub fn method(&self) -> InteractionMethod {
        self.method
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.k + j]
    }

    fn set_pair(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.k + j] = v;
        self.values[j * self.k + i] = v;
    }

    pub fn main(&self, i: usize) -> T {
        self.get(i, i)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.k).map(|i| self.main(i)).collect()
    }

    /// `Φ_ii + share · Σ_{j≠i} Φ_ij`; with the method's own share this
    /// gives back the Shapley value.
    pub fn recompose(&self, i: usize) -> T {
        let share = self.method.pair_share::<T>();
        (0..self.k)
            .filter(|&j| j != i)
            .fold(self.main(i), |acc, j| acc + share * self.get(i, j))
    }

    /// `Σ_i Φ_ii + Σ_{i<j} Φ_ij`.
    pub fn total(&self) -> T {
        let mut total = T::zero();
        for i in 0..self.k {
            for j in i..self.k {
                total += self.get(i, j);
            }
        }
        total
    }

    fn minus(&self, other: &Self) -> Self {
        Self {
            k: self.k,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
            method: self.method,
        }
    }
}

fn check_pair(k: usize, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::Domain(format!(
            "pair ({i}, {j}) is diagonal; main terms come from the main-effect operation"
        )));
    }
    if i >= k || j >= k {
        return Err(Error::Domain(format!("pair ({i}, {j}) out of range for {k} features")));
    }
    Ok(())
}

fn pair_term<T: Scalar>(
    value: &impl Fn(Coalition) -> Result<T>,
    weights: &[T],
    k: usize,
    i: usize,
    j: usize,
) -> Result<T> {
    let rest = Coalition::full(k).without(i).without(j);
    let mut total = T::zero();
    for s in rest.subsets() {
        let delta = value(s.with(i).with(j))? - value(s.with(i))? - value(s.with(j))? + value(s)?;
        total += weights[s.len()] * delta;
    }
    Ok(total)
}

fn pair_with<T: Scalar>(
    ctx: &ValueContext<'_, '_, T>,
    i: usize,
    j: usize,
    method: InteractionMethod,
) -> Result<T> {
    let k = ctx.num_features();
    check_pair(k, i, j)?;
    check_exact(k)?;
    let weights = method.weights::<T>(k)?;
    pair_term(&|s| ctx.coalition_value(s), &weights, k, i.min(j), i.max(j))
}

fn main_with<T: Scalar>(
    ctx: &ValueContext<'_, '_, T>,
    i: usize,
    shapley_raw: &[T],
    method: InteractionMethod,
) -> Result<T> {
    let k = ctx.num_features();
    if shapley_raw.len() != k || i >= k {
        return Err(Error::Domain(format!(
            "feature {i} / {} Shapley values for {k} features",
            shapley_raw.len()
        )));
    }
    let share = method.pair_share::<T>();
    let mut main = shapley_raw[i];
    for j in (0..k).filter(|&j| j != i) {
        main -= share * pair_with(ctx, i, j, method)?;
    }
    Ok(main)
}

/// Shapley-Taylor interaction term `Φ(x_i, x_j)`, `i ≠ j`.
pub fn taylor_pair<T: Scalar>(ctx: &ValueContext<'_, '_, T>, i: usize, j: usize) -> Result<T> {
    pair_with(ctx, i, j, InteractionMethod::Taylor)
}

/// Shapley-Taylor main term `Φ(x_i, x_i) = Φ_i − ½ Σ_{j≠i} Φ(x_i, x_j)`.
pub fn taylor_main<T: Scalar>(
    ctx: &ValueContext<'_, '_, T>,
    i: usize,
    shapley_raw: &[T],
) -> Result<T> {
    main_with(ctx, i, shapley_raw, InteractionMethod::Taylor)
}

pub fn siv_pair<T: Scalar>(ctx: &ValueContext<'_, '_, T>, i: usize, j: usize) -> Result<T> {
    pair_with(ctx, i, j, InteractionMethod::Siv)
}

/// SIV main term `Φ_i − Σ_{j≠i} SIV(i, j)`.
pub fn siv_main<T: Scalar>(ctx: &ValueContext<'_, '_, T>, i: usize, shapley_raw: &[T]) -> Result<T> {
    main_with(ctx, i, shapley_raw, InteractionMethod::Siv)
}

/// Matrix and Shapley values from a complete coalition table.
pub fn matrix_from_values<T: Scalar>(
    values: &[T],
    k: usize,
    method: InteractionMethod,
) -> Result<(InteractionMatrix<T>, Vec<T>)> {
    let shapley = shapley_from_values(values, k)?;
    let weights = method.weights::<T>(k)?;
    let lookup = |s: Coalition| Ok(values[s.bits() as usize]);
    let mut matrix = InteractionMatrix::zeros(k, method);
    for i in 0..k {
        for j in i + 1..k {
            matrix.set_pair(i, j, pair_term(&lookup, &weights, k, i, j)?);
        }
    }
    let share = method.pair_share::<T>();
    for i in 0..k {
        let off = (0..k)
            .filter(|&j| j != i)
            .fold(T::zero(), |acc, j| acc + matrix.get(i, j));
        matrix.values[i * k + i] = shapley[i] - share * off;
    }
    Ok((matrix, shapley))
}

/// Full matrix for one instance (exact enumeration).
pub fn interaction_matrix<T: Scalar>(
    ctx: &ValueContext<'_, '_, T>,
    method: InteractionMethod,
) -> Result<InteractionMatrix<T>> {
    let k = ctx.num_features();
    check_exact(k)?;
    let values = ctx.all_values()?;
    matrix_from_values(&values, k, method).map(|(m, _)| m)
}

/// Per-instance matrices for a cohort, plus copies centered entry-wise on
/// the cohort mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortInteractions<T> {
    pub feature_names: Vec<String>,
    pub method: InteractionMethod,
    pub matrices: Vec<InteractionMatrix<T>>,
    pub centered: Vec<InteractionMatrix<T>>,
    pub shapley: Vec<Vec<T>>,
    pub predictions: Vec<T>,
    pub empty_values: Vec<T>,
    /// Standard errors of the pair terms, for sampled estimates.
    pub pair_std_errors: Option<Vec<InteractionMatrix<T>>>,
}

impl<T: Scalar> CohortInteractions<T> {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Centered entry `(i, j)` across the cohort.
    pub fn centered_entry(&self, i: usize, j: usize) -> Vec<T> {
        self.centered.iter().map(|m| m.get(i, j)).collect()
    }

    pub fn raw_entry(&self, i: usize, j: usize) -> Vec<T> {
        self.matrices.iter().map(|m| m.get(i, j)).collect()
    }
}

struct RowResult<T> {
    matrix: InteractionMatrix<T>,
    shapley: Vec<T>,
    prediction: T,
    empty: T,
    std_errors: Option<InteractionMatrix<T>>,
}

fn assemble<T: Scalar>(
    feature_names: Vec<String>,
    method: InteractionMethod,
    rows: Vec<RowResult<T>>,
) -> CohortInteractions<T> {
    let k = feature_names.len();
    let n = T::from_count(rows.len());
    let mut mean = InteractionMatrix::zeros(k, method);
    for r in &rows {
        for (m, &v) in mean.values.iter_mut().zip(&r.matrix.values) {
            *m += v;
        }
    }
    for m in &mut mean.values {
        *m = *m / n;
    }
    let mut out = CohortInteractions {
        feature_names,
        method,
        matrices: Vec::with_capacity(rows.len()),
        centered: Vec::with_capacity(rows.len()),
        shapley: Vec::with_capacity(rows.len()),
        predictions: Vec::with_capacity(rows.len()),
        empty_values: Vec::with_capacity(rows.len()),
        pair_std_errors: None,
    };
    let mut errors = Vec::new();
    for r in rows {
        out.centered.push(r.matrix.minus(&mean));
        out.matrices.push(r.matrix);
        out.shapley.push(r.shapley);
        out.predictions.push(r.prediction);
        out.empty_values.push(r.empty);
        if let Some(e) = r.std_errors {
            errors.push(e);
        }
    }
    if !errors.is_empty() {
        out.pair_std_errors = Some(errors);
    }
    out
}

fn names_for<T: Scalar>(explainer: &Explainer<'_, T>, table: &Table<T>) -> Result<Vec<String>> {
    if table.num_features() != explainer.num_features() {
        return Err(Error::Dimension {
            expected: explainer.num_features(),
            actual: table.num_features(),
        });
    }
    Ok(match explainer.model().as_ensemble() {
        Some(e) => e.feature_names().to_vec(),
        None => table.names().to_vec(),
    })
}

/// Exact matrices for every row of `table`.
pub fn interactions_for_cohort<T: Scalar>(
    explainer: &Explainer<'_, T>,
    table: &Table<T>,
    method: InteractionMethod,
) -> Result<CohortInteractions<T>> {
    let names = names_for(explainer, table)?;
    let k = explainer.num_features();
    check_exact(k)?;
    let rows = (0..table.num_rows())
        .into_par_iter()
        .map(|r| {
            let ctx = explainer.context(table.row(r))?;
            let values = ctx.all_values()?;
            let (matrix, shapley) = matrix_from_values(&values, k, method)?;
            Ok(RowResult {
                matrix,
                shapley,
                prediction: ctx.prediction(),
                empty: values[0],
                std_errors: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(names, method, rows))
}

/// Convenience form taking the model and background directly.
pub fn matrices_for_cohort<T: Scalar>(
    model: &dyn Model<T>,
    table: &Table<T>,
    background: &Table<T>,
    method: InteractionMethod,
) -> Result<CohortInteractions<T>> {
    let explainer = Explainer::new(model, background)?;
    interactions_for_cohort(&explainer, table, method)
}

/// Stratified estimate of the Shapley-Taylor pair term.
///
/// Size class `s` carries total weight `2(K−1−s)/(K(K−1))`; within a class
/// `draws` subsets of `N\{i,j}` with `s` members are drawn uniformly and
/// their second differences averaged. Returns the estimate and its standard
/// error.
pub fn taylor_pair_sampled<T: Scalar + Float>(
    ctx: &ValueContext<'_, '_, T>,
    i: usize,
    j: usize,
    draws: usize,
    rng: &mut SeededRng,
) -> Result<(T, T)> {
    let k = ctx.num_features();
    check_pair(k, i, j)?;
    if draws < 2 {
        return Err(Error::Domain(format!("need at least 2 draws per size, got {draws}")));
    }
    let others: Vec<usize> = (0..k).filter(|&f| f != i && f != j).collect();
    let mut pool = others.clone();
    let kk = T::from_count(k * (k - 1));
    let n = T::from_count(draws);
    let mut estimate = T::zero();
    let mut variance = T::zero();
    for size in 0..=others.len() {
        let mass = T::from_count(2 * (k - 1 - size)) / kk;
        let mut deltas = Vec::with_capacity(draws);
        for _ in 0..draws {
            for t in 0..size {
                let pick = t + rng.below((pool.len() - t) as u64) as usize;
                pool.swap(t, pick);
            }
            let s = Coalition::from_features(pool[..size].iter().copied());
            let delta = ctx.coalition_value(s.with(i).with(j))?
                - ctx.coalition_value(s.with(i))?
                - ctx.coalition_value(s.with(j))?
                + ctx.coalition_value(s)?;
            deltas.push(delta);
        }
        let mean = deltas.iter().fold(T::zero(), |a, &d| a + d) / n;
        let ss = deltas.iter().fold(T::zero(), |a, &d| a + (d - mean) * (d - mean));
        estimate += mass * mean;
        variance += mass * mass * ss / (n - T::one()) / n;
    }
    Ok((estimate, variance.sqrt()))
}

/// Sampled Shapley-Taylor matrices for every row of `table`: Shapley values
/// from `samples` permutations, pair terms from `samples` draws per size
/// class, main terms by subtraction. Row `r` uses generator stream `(seed, r)`.
pub fn interactions_for_cohort_sampled<T: Scalar + Float>(
    explainer: &Explainer<'_, T>,
    table: &Table<T>,
    samples: usize,
    seed: u64,
) -> Result<CohortInteractions<T>> {
    let names = names_for(explainer, table)?;
    let k = explainer.num_features();
    let method = InteractionMethod::Taylor;
    let rows = (0..table.num_rows())
        .into_par_iter()
        .map(|r| {
            let ctx = explainer.context(table.row(r))?;
            let mut rng = SeededRng::for_stream(seed, r as u64);
            let shapley = shapley_sampled(&ctx, samples, rng.next_u64())?.values;
            let mut matrix = InteractionMatrix::zeros(k, method);
            let mut errors = InteractionMatrix::zeros(k, method);
            for i in 0..k {
                for j in i + 1..k {
                    let (v, se) = taylor_pair_sampled(&ctx, i, j, samples, &mut rng)?;
                    matrix.set_pair(i, j, v);
                    errors.set_pair(i, j, se);
                }
            }
            let half = T::one() / (T::one() + T::one());
            for i in 0..k {
                let off = (0..k)
                    .filter(|&j| j != i)
                    .fold(T::zero(), |acc, j| acc + matrix.get(i, j));
                matrix.values[i * k + i] = shapley[i] - half * off;
            }
            Ok(RowResult {
                matrix,
                shapley,
                prediction: ctx.prediction(),
                empty: ctx.coalition_value(Coalition::EMPTY)?,
                std_errors: Some(errors),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(names, method, rows))
}

/// Exact Shapley values and the matrix, sharing one coalition table.
pub fn decompose<T: Scalar>(
    ctx: &ValueContext<'_, '_, T>,
    method: InteractionMethod,
) -> Result<(InteractionMatrix<T>, Vec<T>)> {
    let k = ctx.num_features();
    check_exact(k)?;
    let values = ctx.all_values()?;
    let out = matrix_from_values(&values, k, method)?;
    debug_assert!(shapley_exact(ctx).is_ok());
    Ok(out)
}
