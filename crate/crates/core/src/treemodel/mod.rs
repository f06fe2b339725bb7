//! Additive ensembles of binary regression trees.
//!
//! Splits compare with `value <= threshold` (go left); missing cells follow
//! the node's `default_left` flag, so every row reaches exactly one leaf.

mod json;
mod train;

pub use json::{load_model, save_model};
pub use train::{train_gbdt, train_gbdt_traced, TrainConfig};

use crate::coredata::Cell;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Leaf {
        value: T,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        default_left: bool,
    },
}

/// Routing decision at a split for one cell.
#[inline]
pub fn goes_left<T: PartialOrd>(cell: &Cell<T>, threshold: &T, default_left: bool) -> bool {
    match cell {
        Some(v) => v <= threshold,
        None => default_left,
    }
}

/// A single regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    /// Validates that `nodes` form one tree rooted at node 0: every child id
    /// is in range, every non-root node has exactly one parent and is
    /// reachable, and split features lie in `[0, num_features)`.
    pub fn new(nodes: Vec<Node<T>>, num_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Structure("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = *node
            {
                if feature >= num_features {
                    return Err(Error::Structure(format!(
                        "node {id} splits on feature {feature} but the model has {num_features}"
                    )));
                }
                for child in [left, right] {
                    if child >= nodes.len() {
                        return Err(Error::Structure(format!(
                            "node {id} points to missing node {child}"
                        )));
                    }
                    if child == 0 || child == id {
                        return Err(Error::Structure(format!(
                            "node {id} points back to node {child} (cycle)"
                        )));
                    }
                    parents[child] += 1;
                }
            }
        }
        if let Some(id) = parents.iter().skip(1).position(|&p| p != 1) {
            let id = id + 1;
            return Err(Error::Structure(format!(
                "node {id} has {} parents; expected exactly one",
                parents[id]
            )));
        }
        // One parent per node plus a parentless root can still hide a
        // detached cycle, so walk from the root as well.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::Structure(format!("node {id} reached twice (cycle)")));
            }
            if let Node::Split { left, right, .. } = nodes[id] {
                stack.push(right);
                stack.push(left);
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(Error::Structure(format!(
                "node {id} is unreachable from the root (cycle)"
            )));
        }
        Ok(Self { nodes })
    }

    pub fn leaf(value: T) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Id of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[Cell<T>]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    default_left,
                } => {
                    id = if goes_left(&row[*feature], threshold, *default_left) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[Cell<T>]) -> T {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Distinct split features, ascending.
    pub fn features_used(&self) -> Vec<usize> {
        let mut features: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        features.sort_unstable();
        features.dedup();
        features
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// `prediction = base_score + Σ_t tree_t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    base_score: T,
    feature_names: Vec<String>,
    trees: Vec<Tree<T>>,
}

impl<T: Scalar> Ensemble<T> {
    pub fn new(base_score: T, feature_names: Vec<String>, trees: Vec<Tree<T>>) -> Result<Self> {
        crate::coredata::validate_names(&feature_names)?;
        let k = feature_names.len();
        for (t, tree) in trees.iter().enumerate() {
            if let Some(&f) = tree.features_used().last() {
                if f >= k {
                    return Err(Error::Structure(format!(
                        "tree {t} splits on feature {f} but the model has {k}"
                    )));
                }
            }
        }
        Ok(Self {
            base_score,
            feature_names,
            trees,
        })
    }

    pub fn base_score(&self) -> T {
        self.base_score
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn predict(&self, row: &[Cell<T>]) -> Result<T> {
        if row.len() != self.num_features() {
            return Err(Error::Dimension {
                expected: self.num_features(),
                actual: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[Cell<T>]) -> T {
        self.trees
            .iter()
            .fold(self.base_score, |acc, tree| acc + tree.predict(row))
    }

    /// The ensemble computing `self(x) + other(x)`.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.feature_names != other.feature_names {
            return Err(Error::Schema("ensembles have different feature names".into()));
        }
        let trees = self.trees.iter().chain(&other.trees).cloned().collect();
        Self::new(
            self.base_score + other.base_score,
            self.feature_names.clone(),
            trees,
        )
    }

    /// The ensemble computing `factor * self(x)`.
    pub fn scaled(&self, factor: T) -> Self {
        let trees = self
            .trees
            .iter()
            .map(|tree| Tree {
                nodes: tree
                    .nodes
                    .iter()
                    .map(|n| match n {
                        Node::Leaf { value } => Node::Leaf {
                            value: *value * factor,
                        },
                        split => split.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            base_score: self.base_score * factor,
            feature_names: self.feature_names.clone(),
            trees,
        }
    }
}
