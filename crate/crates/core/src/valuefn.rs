//! Coalition value function `f_x(S)`.
//!
//! `f_x(S)` is the interventional expectation of the model over an explicit
//! background table: for every background row `b`, the features in `S` take
//! the explained instance's cells and the rest keep `b`'s cells, and the
//! model outputs are averaged. Missing cells in the instance stay missing.
//!
//! Values are memoized per instance in a write-once cache. For tree
//! ensembles the average is computed exactly by grouping background rows
//! that route identically through each tree, which gives the same number
//! as the row-by-row definition up to floating-point reassociation.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{OnceLock, RwLock};

use crate::coredata::{Cell, Table};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::treemodel::{goes_left, Ensemble, Node};

/// Default limit on the number of features for exact enumeration.
pub const DEFAULT_EXACT_CAP: usize = 20;
/// Largest cap accepted from `STAYLOR_EXACT_CAP` (34! still fits in u128).
pub const MAX_EXACT_CAP: usize = 34;
pub const EXACT_CAP_ENV: &str = "STAYLOR_EXACT_CAP";
/// Contexts up to this many features use a flat `2^K` cache.
const DENSE_CACHE_FEATURES: usize = 16;
/// Bit-mask coalitions hold at most this many features.
pub const MAX_MASK_FEATURES: usize = 63;

/// Current exact-enumeration cap, honouring `STAYLOR_EXACT_CAP`.
pub fn exact_cap() -> usize {
    std::env::var(EXACT_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .map_or(DEFAULT_EXACT_CAP, |cap| cap.clamp(1, MAX_EXACT_CAP))
}

pub fn check_exact(k: usize) -> Result<()> {
    let cap = exact_cap();
    if k > cap {
        return Err(Error::ExactCap { k, cap });
    }
    Ok(())
}

/// A subset of feature indices stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn full(k: usize) -> Self {
        debug_assert!(k <= MAX_MASK_FEATURES);
        Self((1u64 << k) - 1)
    }

    pub fn from_features(features: impl IntoIterator<Item = usize>) -> Self {
        Self(features.into_iter().fold(0, |m, i| m | (1u64 << i)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[must_use]
    pub fn with(self, i: usize) -> Self {
        Self(self.0 | (1u64 << i))
    }

    #[must_use]
    pub fn without(self, i: usize) -> Self {
        Self(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        })
    }

    /// All subsets of `self`, in increasing mask order.
    pub fn subsets(self) -> impl Iterator<Item = Coalition> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(Coalition(cur))
        })
    }
}

fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, v| acc.checked_mul(v))
}

fn weight_ratio<T: Scalar>(num: u128, den: u128, k: usize) -> Result<T> {
    T::ratio(num, den).ok_or(Error::WeightOverflow {
        k,
        cap: DEFAULT_EXACT_CAP,
    })
}

fn check_weight_k(k: usize) -> Result<()> {
    let cap = exact_cap();
    if k > cap {
        return Err(Error::WeightOverflow { k, cap });
    }
    Ok(())
}

/// Shapley coefficient `|S|!(K-|S|-1)!/K!` for a coalition of `size`.
pub fn shapley_weight<T: Scalar>(size: usize, k: usize) -> Result<T> {
    check_weight_k(k)?;
    if k == 0 || size > k - 1 {
        return Err(Error::Domain(format!(
            "coalition size {size} invalid for {k} features"
        )));
    }
    let overflow = Error::WeightOverflow { k, cap: exact_cap() };
    let num = factorial(size)
        .zip(factorial(k - size - 1))
        .and_then(|(a, b)| a.checked_mul(b));
    match (num, factorial(k)) {
        (Some(num), Some(den)) => weight_ratio(num, den, k),
        _ => Err(overflow),
    }
}

/// Shapley-Taylor pair coefficient `2|S|!(K-|S|-1)!/K!`.
pub fn taylor_weight<T: Scalar>(size: usize, k: usize) -> Result<T> {
    check_weight_k(k)?;
    if k < 2 || size > k - 2 {
        return Err(Error::Domain(format!(
            "pair coalition size {size} invalid for {k} features"
        )));
    }
    let num = factorial(size)
        .zip(factorial(k - size - 1))
        .and_then(|(a, b)| a.checked_mul(b))
        .and_then(|v| v.checked_mul(2));
    match (num, factorial(k)) {
        (Some(num), Some(den)) => weight_ratio(num, den, k),
        _ => Err(Error::WeightOverflow { k, cap: exact_cap() }),
    }
}

/// Shapley interaction value coefficient `|S|!(K-|S|-2)!/(2(K-1)!)`.
pub fn siv_weight<T: Scalar>(size: usize, k: usize) -> Result<T> {
    check_weight_k(k)?;
    if k < 2 || size > k - 2 {
        return Err(Error::Domain(format!(
            "pair coalition size {size} invalid for {k} features"
        )));
    }
    let num = factorial(size)
        .zip(factorial(k - size - 2))
        .and_then(|(a, b)| a.checked_mul(b));
    let den = factorial(k - 1).and_then(|v| v.checked_mul(2));
    match (num, den) {
        (Some(num), Some(den)) => weight_ratio(num, den, k),
        _ => Err(Error::WeightOverflow { k, cap: exact_cap() }),
    }
}

/// Anything that maps a row of cells to a real output.
pub trait Model<T: Scalar>: Sync {
    fn num_features(&self) -> usize;

    fn evaluate(&self, row: &[Cell<T>]) -> Result<T>;

    /// Tree ensembles expose themselves so the grouped evaluator can be used.
    fn as_ensemble(&self) -> Option<&Ensemble<T>> {
        None
    }
}

impl<T: Scalar> Model<T> for Ensemble<T> {
    fn num_features(&self) -> usize {
        Ensemble::num_features(self)
    }

    fn evaluate(&self, row: &[Cell<T>]) -> Result<T> {
        self.predict(row)
    }

    fn as_ensemble(&self) -> Option<&Ensemble<T>> {
        Some(self)
    }
}

/// A closure over `k` features used as a model.
pub struct FnModel<F> {
    k: usize,
    f: F,
}

impl<F> FnModel<F> {
    pub fn new(k: usize, f: F) -> Self {
        Self { k, f }
    }
}

impl<T, F> Model<T> for FnModel<F>
where
    T: Scalar,
    F: Fn(&[Cell<T>]) -> T + Sync,
{
    fn num_features(&self) -> usize {
        self.k
    }

    fn evaluate(&self, row: &[Cell<T>]) -> Result<T> {
        if row.len() != self.k {
            return Err(Error::Dimension {
                expected: self.k,
                actual: row.len(),
            });
        }
        Ok((self.f)(row))
    }
}

type Bits = Vec<u64>;

fn bit(bits: &[u64], i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

/// Background rows that take the same direction at every split of a tree.
#[derive(Debug)]
struct RouteGroup {
    left: Bits,
    count: usize,
}

#[derive(Debug)]
struct TreePlan<T> {
    /// Global ids of the features this tree splits on, ascending.
    features: Vec<usize>,
    /// Local feature index per node (unused for leaves).
    node_feature: Vec<usize>,
    leaf_values: Vec<T>,
    groups: Vec<RouteGroup>,
}

fn routing_bits<T: Scalar>(nodes: &[Node<T>], row: &[Cell<T>]) -> Bits {
    let mut bits = vec![0u64; nodes.len().div_ceil(64)];
    for (id, node) in nodes.iter().enumerate() {
        if let Node::Split {
            feature,
            threshold,
            default_left,
            ..
        } = node
        {
            if goes_left(&row[*feature], threshold, *default_left) {
                bits[id / 64] |= 1 << (id % 64);
            }
        }
    }
    bits
}

impl<T: Scalar> TreePlan<T> {
    fn new(tree: &crate::treemodel::Tree<T>, background: &Table<T>) -> Self {
        let nodes = tree.nodes();
        let features = tree.features_used();
        let node_feature = nodes
            .iter()
            .map(|n| match n {
                Node::Split { feature, .. } => features.binary_search(feature).unwrap_or(0),
                Node::Leaf { .. } => usize::MAX,
            })
            .collect();
        let leaf_values = nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { value } => *value,
                Node::Split { .. } => T::zero(),
            })
            .collect();
        let mut index: HashMap<Bits, usize> = HashMap::new();
        let mut groups: Vec<RouteGroup> = Vec::new();
        for row in background.rows() {
            let bits = routing_bits(nodes, row);
            match index.get(&bits) {
                Some(&g) => groups[g].count += 1,
                None => {
                    index.insert(bits.clone(), groups.len());
                    groups.push(RouteGroup {
                        left: bits,
                        count: 1,
                    });
                }
            }
        }
        Self {
            features,
            node_feature,
            leaf_values,
            groups,
        }
    }

    fn local_mask(&self, s: Coalition) -> u64 {
        self.features
            .iter()
            .enumerate()
            .fold(0, |m, (l, &f)| if s.contains(f) { m | 1 << l } else { m })
    }
}

/// A leaf reachable for some coalitions, with the background count that
/// lands there when `required_in ⊆ S` and `required_out ∩ S = ∅` (local bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct LeafEntry {
    leaf: usize,
    required_in: u64,
    required_out: u64,
    count: usize,
}

fn leaf_entries<T: Scalar>(
    plan: &TreePlan<T>,
    nodes: &[Node<T>],
    instance_left: &[u64],
) -> Vec<LeafEntry> {
    let mut entries = Vec::new();
    let mut stack = Vec::new();
    for group in &plan.groups {
        stack.push((0usize, 0u64, 0u64));
        while let Some((id, req_in, req_out)) = stack.pop() {
            match &nodes[id] {
                Node::Leaf { .. } => entries.push(LeafEntry {
                    leaf: id,
                    required_in: req_in,
                    required_out: req_out,
                    count: group.count,
                }),
                Node::Split { left, right, .. } => {
                    let child = |go_left: bool| if go_left { *left } else { *right };
                    let x_left = bit(instance_left, id);
                    let b_left = bit(&group.left, id);
                    let f = 1u64 << plan.node_feature[id];
                    if x_left == b_left || req_in & f != 0 {
                        stack.push((child(x_left), req_in, req_out));
                    } else if req_out & f != 0 {
                        stack.push((child(b_left), req_in, req_out));
                    } else {
                        stack.push((child(x_left), req_in | f, req_out));
                        stack.push((child(b_left), req_in, req_out | f));
                    }
                }
            }
        }
    }
    entries.sort_unstable_by_key(|e| (e.leaf, e.required_in, e.required_out));
    let mut merged: Vec<LeafEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        match merged.last_mut() {
            Some(last)
                if (last.leaf, last.required_in, last.required_out)
                    == (e.leaf, e.required_in, e.required_out) =>
            {
                last.count += e.count;
            }
            _ => merged.push(e),
        }
    }
    merged
}

/// `Σ_leaf count(leaf) · value(leaf)` over leaves in ascending id order.
fn tree_total<T: Scalar>(entries: &[LeafEntry], leaf_values: &[T], local: u64) -> T {
    let mut total = T::zero();
    let mut current = usize::MAX;
    let mut count = 0usize;
    for e in entries {
        if local & e.required_in != e.required_in || local & e.required_out != 0 {
            continue;
        }
        if e.leaf != current {
            if count > 0 {
                total += T::from_count(count) * leaf_values[current];
            }
            current = e.leaf;
            count = 0;
        }
        count += e.count;
    }
    if count > 0 {
        total += T::from_count(count) * leaf_values[current];
    }
    total
}

/// A model paired with the background table used to fill absent features.
pub struct Explainer<'a, T: Scalar> {
    model: &'a dyn Model<T>,
    background: &'a Table<T>,
    plans: Option<Vec<TreePlan<T>>>,
}

impl<'a, T: Scalar> Explainer<'a, T> {
    /// Uses the grouped tree evaluator when `model` is a tree ensemble.
    pub fn new(model: &'a dyn Model<T>, background: &'a Table<T>) -> Result<Self> {
        let mut explainer = Self::generic(model, background)?;
        if let Some(ensemble) = model.as_ensemble() {
            if ensemble.feature_names() != background.names() {
                return Err(Error::Schema(
                    "background feature names differ from the model's".into(),
                ));
            }
            explainer.plans = Some(
                ensemble
                    .trees()
                    .iter()
                    .map(|t| TreePlan::new(t, background))
                    .collect(),
            );
        }
        Ok(explainer)
    }

    /// Always evaluates the model row by row.
    pub fn generic(model: &'a dyn Model<T>, background: &'a Table<T>) -> Result<Self> {
        if background.num_rows() == 0 {
            return Err(Error::EmptyBackground);
        }
        if background.num_features() != model.num_features() {
            return Err(Error::Dimension {
                expected: model.num_features(),
                actual: background.num_features(),
            });
        }
        if model.num_features() > MAX_MASK_FEATURES {
            return Err(Error::Domain(format!(
                "{} features exceed the {MAX_MASK_FEATURES}-feature coalition mask",
                model.num_features()
            )));
        }
        Ok(Self {
            model,
            background,
            plans: None,
        })
    }

    pub fn num_features(&self) -> usize {
        self.model.num_features()
    }

    pub fn model(&self) -> &'a dyn Model<T> {
        self.model
    }

    pub fn background(&self) -> &'a Table<T> {
        self.background
    }

    /// Memoized value function for one instance.
    pub fn context(&self, instance: &[Cell<T>]) -> Result<ValueContext<'_, 'a, T>> {
        let k = self.num_features();
        let cache = if k <= DENSE_CACHE_FEATURES {
            Cache::Dense((0..1usize << k).map(|_| OnceLock::new()).collect())
        } else {
            Cache::Sparse(RwLock::new(HashMap::new()))
        };
        ValueContext::build(self, instance, cache)
    }

    /// Value function without memoization.
    pub fn uncached_context(&self, instance: &[Cell<T>]) -> Result<ValueContext<'_, 'a, T>> {
        ValueContext::build(self, instance, Cache::Disabled)
    }
}

enum Cache<T> {
    Dense(Vec<OnceLock<T>>),
    Sparse(RwLock<HashMap<u64, T>>),
    Disabled,
}

/// `f_x(S)` for one explained instance.
pub struct ValueContext<'e, 'a, T: Scalar> {
    explainer: &'e Explainer<'a, T>,
    instance: Vec<Cell<T>>,
    prediction: T,
    entries: Option<Vec<Vec<LeafEntry>>>,
    cache: Cache<T>,
    evaluations: AtomicUsize,
}

impl<'e, 'a, T: Scalar> ValueContext<'e, 'a, T> {
    fn build(explainer: &'e Explainer<'a, T>, instance: &[Cell<T>], cache: Cache<T>) -> Result<Self> {
        let k = explainer.num_features();
        if instance.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: instance.len(),
            });
        }
        let prediction = explainer.model.evaluate(instance)?;
        let entries = match (&explainer.plans, explainer.model.as_ensemble()) {
            (Some(plans), Some(ensemble)) => Some(
                plans
                    .iter()
                    .zip(ensemble.trees())
                    .map(|(plan, tree)| {
                        let x_left = routing_bits(tree.nodes(), instance);
                        leaf_entries(plan, tree.nodes(), &x_left)
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(Self {
            explainer,
            instance: instance.to_vec(),
            prediction,
            entries,
            cache,
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn num_features(&self) -> usize {
        self.instance.len()
    }

    pub fn instance(&self) -> &[Cell<T>] {
        &self.instance
    }

    /// Model output at the instance, equal to `f_x(full set)`.
    pub fn prediction(&self) -> T {
        self.prediction
    }

    /// Number of distinct coalitions computed so far (cache misses).
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn coalition_value(&self, s: Coalition) -> Result<T> {
        let k = self.num_features();
        if s.bits() >> k != 0 {
            return Err(Error::Domain(format!(
                "coalition {:#x} names features beyond {k}",
                s.bits()
            )));
        }
        match &self.cache {
            Cache::Dense(slots) => {
                let slot = &slots[s.bits() as usize];
                if let Some(v) = slot.get() {
                    return Ok(*v);
                }
                let v = self.compute(s)?;
                if slot.set(v).is_ok() {
                    self.evaluations.fetch_add(1, Ordering::Relaxed);
                }
                Ok(*slot.get().expect("slot was just filled"))
            }
            Cache::Sparse(map) => {
                if let Some(v) = map.read().expect("cache lock").get(&s.bits()) {
                    return Ok(*v);
                }
                let v = self.compute(s)?;
                let mut map = map.write().expect("cache lock");
                let stored = *map.entry(s.bits()).or_insert_with(|| {
                    self.evaluations.fetch_add(1, Ordering::Relaxed);
                    v
                });
                Ok(stored)
            }
            Cache::Disabled => {
                self.evaluations.fetch_add(1, Ordering::Relaxed);
                self.compute(s)
            }
        }
    }

    /// `f_x(S)` for all `2^K` coalitions, indexed by mask.
    pub fn all_values(&self) -> Result<Vec<T>> {
        let k = self.num_features();
        check_exact(k)?;
        let n = 1usize << k;
        let Some(entries) = &self.entries else {
            return (0..n as u64)
                .map(|s| self.coalition_value(Coalition(s)))
                .collect();
        };
        if let Cache::Dense(slots) = &self.cache {
            if slots.iter().all(|s| s.get().is_some()) {
                return Ok(slots.iter().map(|s| *s.get().unwrap()).collect());
            }
        }
        let plans = self.explainer.plans.as_ref().expect("entries imply plans");
        let tables: Vec<Vec<T>> = plans
            .iter()
            .zip(entries)
            .map(|(plan, entries)| {
                (0..1u64 << plan.features.len())
                    .map(|local| tree_total(entries, &plan.leaf_values, local))
                    .collect()
            })
            .collect();
        let full = Coalition::full(k);
        let mut values = Vec::with_capacity(n);
        for s in 0..n as u64 {
            let s = Coalition(s);
            let v = if s == full {
                self.prediction
            } else {
                let sum = plans
                    .iter()
                    .zip(&tables)
                    .fold(T::zero(), |acc, (plan, table)| {
                        acc + table[plan.local_mask(s) as usize]
                    });
                self.combine_tree_sum(sum)
            };
            values.push(self.store(s, v));
        }
        Ok(values)
    }

    fn store(&self, s: Coalition, v: T) -> T {
        match &self.cache {
            Cache::Dense(slots) => {
                let slot = &slots[s.bits() as usize];
                if slot.set(v).is_ok() {
                    self.evaluations.fetch_add(1, Ordering::Relaxed);
                }
                *slot.get().unwrap()
            }
            Cache::Sparse(map) => {
                let mut map = map.write().expect("cache lock");
                *map.entry(s.bits()).or_insert_with(|| {
                    self.evaluations.fetch_add(1, Ordering::Relaxed);
                    v
                })
            }
            Cache::Disabled => {
                self.evaluations.fetch_add(1, Ordering::Relaxed);
                v
            }
        }
    }

    fn combine_tree_sum(&self, sum: T) -> T {
        let ensemble = self
            .explainer
            .model
            .as_ensemble()
            .expect("tree path requires an ensemble");
        ensemble.base_score() + sum / T::from_count(self.explainer.background.num_rows())
    }

    fn compute(&self, s: Coalition) -> Result<T> {
        if s == Coalition::full(self.num_features()) {
            return Ok(self.prediction);
        }
        match (&self.entries, &self.explainer.plans) {
            (Some(entries), Some(plans)) => {
                let sum = plans
                    .iter()
                    .zip(entries)
                    .fold(T::zero(), |acc, (plan, entries)| {
                        acc + tree_total(entries, &plan.leaf_values, plan.local_mask(s))
                    });
                Ok(self.combine_tree_sum(sum))
            }
            _ => self.compute_by_rows(s),
        }
    }

    fn compute_by_rows(&self, s: Coalition) -> Result<T> {
        let background = self.explainer.background;
        let mut z: Vec<Cell<T>> = vec![None; self.num_features()];
        let mut sum = T::zero();
        for row in background.rows() {
            for (j, cell) in z.iter_mut().enumerate() {
                *cell = if s.contains(j) {
                    self.instance[j]
                } else {
                    row[j]
                };
            }
            sum += self.explainer.model.evaluate(&z)?;
        }
        Ok(sum / T::from_count(background.num_rows()))
    }
}
