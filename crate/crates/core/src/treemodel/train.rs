//! Squared-loss gradient boosting with exact greedy splits.

use num_traits::Float;

use super::{goes_left, Ensemble, Node, Tree};
use crate::coredata::Table;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Recorded for reproducibility; exact greedy fitting draws no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Domain("max_depth must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Domain(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Domain("min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

pub fn train_gbdt<T: Scalar + Float>(
    table: &Table<T>,
    targets: &[T],
    config: &TrainConfig,
) -> Result<Ensemble<T>> {
    train_gbdt_traced(table, targets, config).map(|(model, _)| model)
}

/// Like [`train_gbdt`], also returning the training MSE before the first
/// stage and after each stage (`num_trees + 1` values).
pub fn train_gbdt_traced<T: Scalar + Float>(
    table: &Table<T>,
    targets: &[T],
    config: &TrainConfig,
) -> Result<(Ensemble<T>, Vec<T>)> {
    config.validate()?;
    let n = table.num_rows();
    if targets.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: targets.len(),
        });
    }
    if n < 2 * config.min_samples_leaf {
        return Err(Error::Domain(format!(
            "{n} rows cannot fill two leaves of {} samples",
            config.min_samples_leaf
        )));
    }
    let learning_rate = T::from_f64(config.learning_rate)
        .ok_or_else(|| Error::Domain("learning_rate not representable".into()))?;

    let base_score = accurate_mean(targets);
    let mut predictions = vec![base_score; n];
    let mut residuals: Vec<T> = targets.iter().map(|&y| y - base_score).collect();
    let mut losses = vec![mse(&residuals)];

    let sorted = SortedColumns::new(table);
    let mut trees = Vec::with_capacity(config.num_trees);
    for _ in 0..config.num_trees {
        let builder = TreeBuilder {
            table,
            sorted: &sorted,
            residuals: &residuals,
            config,
            learning_rate,
            nodes: Vec::new(),
        };
        let tree = builder.build()?;
        for (i, row) in table.rows().enumerate() {
            predictions[i] += tree.predict(row);
            residuals[i] = targets[i] - predictions[i];
        }
        losses.push(mse(&residuals));
        trees.push(tree);
    }
    let model = Ensemble::new(base_score, table.names().to_vec(), trees)?;
    Ok((model, losses))
}

/// Mean with one correction pass, so a constant column averages to itself.
fn accurate_mean<T: Scalar + Float>(values: &[T]) -> T {
    let n = T::from_count(values.len());
    let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
    let correction = values.iter().fold(T::zero(), |a, &v| a + (v - mean)) / n;
    mean + correction
}

fn mse<T: Scalar + Float>(residuals: &[T]) -> T {
    residuals.iter().fold(T::zero(), |a, &r| a + r * r) / T::from_count(residuals.len())
}

/// Row indices with a present value, per feature, ordered by (value, row).
struct SortedColumns<T> {
    present: Vec<Vec<(usize, T)>>,
    missing: Vec<Vec<usize>>,
}

impl<T: Scalar + Float> SortedColumns<T> {
    fn new(table: &Table<T>) -> Self {
        let k = table.num_features();
        let mut present = Vec::with_capacity(k);
        let mut missing = Vec::with_capacity(k);
        for f in 0..k {
            let mut col: Vec<(usize, T)> = Vec::new();
            let mut miss = Vec::new();
            for (i, cell) in table.column(f).enumerate() {
                match cell {
                    Some(v) => col.push((i, v)),
                    None => miss.push(i),
                }
            }
            col.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("NaN in table").then(a.0.cmp(&b.0)));
            present.push(col);
            missing.push(miss);
        }
        Self { present, missing }
    }
}

struct SplitChoice<T> {
    gain: T,
    feature: usize,
    threshold: T,
    default_left: bool,
}

struct TreeBuilder<'a, T> {
    table: &'a Table<T>,
    sorted: &'a SortedColumns<T>,
    residuals: &'a [T],
    config: &'a TrainConfig,
    learning_rate: T,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar + Float> TreeBuilder<'_, T> {
    fn build(mut self) -> Result<Tree<T>> {
        let rows: Vec<usize> = (0..self.table.num_rows()).collect();
        self.grow(&rows, 0);
        Tree::new(self.nodes, self.table.num_features())
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let sum = rows.iter().fold(T::zero(), |a, &r| a + self.residuals[r]);
        let leaf_value = self.learning_rate * sum / T::from_count(rows.len());
        self.nodes.push(Node::Leaf { value: leaf_value });

        if depth >= self.config.max_depth || rows.len() < 2 * self.config.min_samples_leaf {
            return id;
        }
        let Some(split) = self.best_split(rows, sum) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
            goes_left(
                &self.table.cell(r, split.feature),
                &split.threshold,
                split.default_left,
            )
        });
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            default_left: split.default_left,
        };
        id
    }

    /// Highest variance reduction over all features and midpoint thresholds.
    /// Ties keep the earliest candidate: lowest feature, then lowest
    /// threshold, then `default_left = true`.
    fn best_split(&self, rows: &[usize], total: T) -> Option<SplitChoice<T>> {
        let n_rows = self.table.num_rows();
        let mut in_node = vec![false; n_rows];
        for &r in rows {
            in_node[r] = true;
        }
        let n = T::from_count(rows.len());
        let parent_score = total * total / n;
        let min_leaf = self.config.min_samples_leaf;
        let mut best: Option<SplitChoice<T>> = None;

        for f in 0..self.table.num_features() {
            let column: Vec<(T, T)> = self.sorted.present[f]
                .iter()
                .filter(|(r, _)| in_node[*r])
                .map(|&(r, v)| (v, self.residuals[r]))
                .collect();
            let (missing_sum, missing_count) = self.sorted.missing[f]
                .iter()
                .filter(|&&r| in_node[r])
                .fold((T::zero(), 0usize), |(s, c), &r| (s + self.residuals[r], c + 1));
            let present_sum = column.iter().fold(T::zero(), |a, &(_, g)| a + g);

            let mut prefix = T::zero();
            for pos in 1..column.len() {
                prefix += column[pos - 1].1;
                let (lo, hi) = (column[pos - 1].0, column[pos].0);
                if !(lo < hi) {
                    continue;
                }
                let mut threshold = (lo + hi) / (T::one() + T::one());
                if !(threshold < hi) {
                    threshold = lo;
                }
                for default_left in [true, false] {
                    let (left_sum, left_count) = if default_left {
                        (prefix + missing_sum, pos + missing_count)
                    } else {
                        (prefix, pos)
                    };
                    let right_sum = present_sum + missing_sum - left_sum;
                    let right_count = rows.len() - left_count;
                    if left_count < min_leaf || right_count < min_leaf {
                        continue;
                    }
                    let gain = left_sum * left_sum / T::from_count(left_count)
                        + right_sum * right_sum / T::from_count(right_count)
                        - parent_score;
                    let better = match &best {
                        Some(b) => gain > b.gain,
                        None => gain > T::zero(),
                    };
                    if better {
                        best = Some(SplitChoice {
                            gain,
                            feature: f,
                            threshold,
                            default_left,
                        });
                    }
                }
            }
        }
        best
    }
}
