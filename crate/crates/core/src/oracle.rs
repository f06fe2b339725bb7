//! Brute-force reference implementation.
//!
//! Every quantity is evaluated straight from its defining sum: coalition
//! values are recomputed from the background for each term (no cache), and
//! coefficients come from binomials rather than factorial ratios. It shares
//! no code with [`crate::valuefn`], [`crate::attribution`] or
//! [`crate::interaction`] and exists to cross-check them.

use crate::coredata::{Cell, Table};
use crate::error::{Error, Result};
use crate::valuefn::Model;

/// Background average of the model with `present` features taken from `instance`.
pub fn coalition_value(
    model: &dyn Model<f64>,
    instance: &[Cell<f64>],
    background: &Table<f64>,
    present: &[bool],
) -> Result<f64> {
    if background.num_rows() == 0 {
        return Err(Error::EmptyBackground);
    }
    if present.len() == instance.len() && present.iter().all(|&p| p) {
        return model.evaluate(instance);
    }
    let mut total = 0.0;
    for row in background.rows() {
        let z: Vec<Cell<f64>> = present
            .iter()
            .enumerate()
            .map(|(j, &p)| if p { instance[j] } else { row[j] })
            .collect();
        total += model.evaluate(&z)?;
    }
    Ok(total / background.num_rows() as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `visit` with every membership vector over `others` (features not in
/// `others` are absent) together with the number of members.
fn for_each_subset(
    k: usize,
    others: &[usize],
    mut visit: impl FnMut(&mut Vec<bool>, usize) -> Result<()>,
) -> Result<()> {
    let m = others.len();
    for code in 0..(1u64 << m) {
        let mut present = vec![false; k];
        let mut size = 0;
        for (b, &f) in others.iter().enumerate() {
            if code >> b & 1 == 1 {
                present[f] = true;
                size += 1;
            }
        }
        visit(&mut present, size)?;
    }
    Ok(())
}

fn check(model: &dyn Model<f64>, instance: &[Cell<f64>], background: &Table<f64>) -> Result<usize> {
    let k = model.num_features();
    if instance.len() != k || background.num_features() != k {
        return Err(Error::Dimension {
            expected: k,
            actual: instance.len().max(background.num_features()),
        });
    }
    Ok(k)
}

/// `Φ_i = Σ_{S ⊆ N\{i}} [f_x(S∪{i}) − f_x(S)] / (K · C(K−1, |S|))`.
pub fn shapley(
    model: &dyn Model<f64>,
    instance: &[Cell<f64>],
    background: &Table<f64>,
) -> Result<Vec<f64>> {
    let k = check(model, instance, background)?;
    (0..k)
        .map(|i| {
            let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            let mut phi = 0.0;
            for_each_subset(k, &others, |present, size| {
                let without = coalition_value(model, instance, background, present)?;
                present[i] = true;
                let with = coalition_value(model, instance, background, present)?;
                phi += (with - without) / (k as f64 * binomial(k - 1, size));
                Ok(())
            })?;
            Ok(phi)
        })
        .collect()
}

/// Weighted sum of second differences `Δ_ij f_x(S)` over `S ⊆ N\{i,j}`.
fn pair_sum(
    model: &dyn Model<f64>,
    instance: &[Cell<f64>],
    background: &Table<f64>,
    i: usize,
    j: usize,
    coefficient: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let k = check(model, instance, background)?;
    if i == j || i >= k || j >= k {
        return Err(Error::Domain(format!("invalid pair ({i}, {j})")));
    }
    let others: Vec<usize> = (0..k).filter(|&f| f != i && f != j).collect();
    let mut total = 0.0;
    for_each_subset(k, &others, |present, size| {
        let base = coalition_value(model, instance, background, present)?;
        present[i] = true;
        let with_i = coalition_value(model, instance, background, present)?;
        present[j] = true;
        let with_ij = coalition_value(model, instance, background, present)?;
        present[i] = false;
        let with_j = coalition_value(model, instance, background, present)?;
        total += coefficient(k, size) * (with_ij - with_i - with_j + base);
        Ok(())
    })?;
    Ok(total)
}

/// Shapley-Taylor pair term with coefficient `2 / (K · C(K−1, |S|))`.
pub fn taylor_pair(
    model: &dyn Model<f64>,
    instance: &[Cell<f64>],
    background: &Table<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    pair_sum(model, instance, background, i, j, |k, s| {
        2.0 / (k as f64 * binomial(k - 1, s))
    })
}

/// Shapley interaction value with coefficient `1 / (2(K−1) · C(K−2, |S|))`.
pub fn siv_pair(
    model: &dyn Model<f64>,
    instance: &[Cell<f64>],
    background: &Table<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    pair_sum(model, instance, background, i, j, |k, s| {
        1.0 / (2.0 * (k - 1) as f64 * binomial(k - 2, s))
    })
}

/// Full brute-force decomposition of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub shapley: Vec<f64>,
    /// Shapley-Taylor matrix: main terms on the diagonal.
    pub taylor: Vec<Vec<f64>>,
    /// Shapley interaction value matrix: main terms on the diagonal.
    pub siv: Vec<Vec<f64>>,
}

pub fn decompose(
    model: &dyn Model<f64>,
    instance: &[Cell<f64>],
    background: &Table<f64>,
) -> Result<Decomposition> {
    let k = check(model, instance, background)?;
    let shapley = shapley(model, instance, background)?;
    let mut taylor = vec![vec![0.0; k]; k];
    let mut siv = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                taylor[i][j] = taylor_pair(model, instance, background, i, j)?;
                siv[i][j] = siv_pair(model, instance, background, i, j)?;
            }
        }
    }
    for i in 0..k {
        let taylor_off: f64 = (0..k).filter(|&j| j != i).map(|j| taylor[i][j]).sum();
        let siv_off: f64 = (0..k).filter(|&j| j != i).map(|j| siv[i][j]).sum();
        taylor[i][i] = shapley[i] - 0.5 * taylor_off;
        siv[i][i] = shapley[i] - siv_off;
    }
    Ok(Decomposition {
        shapley,
        taylor,
        siv,
    })
}
