//! Separable test functions with known main and pairwise components, and the
//! synthetic cohorts built from them.
//!
//! A [`SeparableSpec`] is `F(x) = c + Σ_i f_i(x_i) + Σ_{i<j} g_ij(x_i, x_j)`
//! over finite per-feature grids. Construction rewrites the components so
//! that every `f_i` has zero mean and every `g_ij` has zero mean along both
//! arguments under the grid weights (the function itself is unchanged). With
//! the product-grid background the Shapley-Taylor main term of feature `i` is
//! then exactly `f_i(x_i)` and the pair term is exactly `g_ij(x_i, x_j)`.

use serde::{Deserialize, Serialize};

use crate::coredata::{Cell, Table};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::valuefn::Model;

/// Finite distribution of one feature: distinct sorted values with integer
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal<T> {
    values: Vec<T>,
    weights: Vec<usize>,
}

impl<T: Scalar> Marginal<T> {
    pub fn new(values: Vec<T>, weights: Vec<usize>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::Domain("marginal needs matching non-empty values and weights".into()));
        }
        if weights.contains(&0) {
            return Err(Error::Domain("marginal weights must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("marginal values must be strictly increasing".into()));
        }
        Ok(Self { values, weights })
    }

    pub fn uniform(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1; n])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn weights(&self) -> &[usize] {
        &self.weights
    }

    pub fn total_weight(&self) -> usize {
        self.weights.iter().sum()
    }

    pub fn index_of(&self, v: T) -> Option<usize> {
        self.values.iter().position(|&x| x == v)
    }

    fn weighted_mean(&self, f: impl Fn(usize) -> T) -> T {
        let total = (0..self.values.len()).fold(T::zero(), |acc, a| acc + T::from_count(self.weights[a]) * f(a));
        total / T::from_count(self.total_weight())
    }

    /// Draws a grid index with probability proportional to its weight.
    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let mut pick = rng.below(self.total_weight() as u64) as usize;
        for (a, &w) in self.weights.iter().enumerate() {
            if pick < w {
                return a;
            }
            pick -= w;
        }
        unreachable!("pick below total weight")
    }
}

/// Pairwise component `g_ij`, tabulated as `table[a][b]` over the grids of
/// features `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComponent<T> {
    pub i: usize,
    pub j: usize,
    pub table: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableSpec<T> {
    names: Vec<String>,
    marginals: Vec<Marginal<T>>,
    intercept: T,
    mains: Vec<Vec<T>>,
    pairs: Vec<PairComponent<T>>,
}

impl<T: Scalar> SeparableSpec<T> {
    /// Centers `mains` and double-centers `pairs`, moving the removed means
    /// into lower-order components so `evaluate` is unchanged.
    pub fn new(
        names: Vec<String>,
        marginals: Vec<Marginal<T>>,
        intercept: T,
        mains: Vec<Vec<T>>,
        pairs: Vec<PairComponent<T>>,
    ) -> Result<Self> {
        let k = names.len();
        crate::coredata::validate_names(&names)?;
        if marginals.len() != k || mains.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: marginals.len().min(mains.len()),
            });
        }
        for (i, (m, f)) in marginals.iter().zip(&mains).enumerate() {
            if m.values.len() != f.len() {
                return Err(Error::Domain(format!("main component {i} does not match its grid")));
            }
        }
        let mut seen = Vec::new();
        for p in &pairs {
            if p.i >= p.j || p.j >= k {
                return Err(Error::Domain(format!("pair ({}, {}) must satisfy i < j < {k}", p.i, p.j)));
            }
            if seen.contains(&(p.i, p.j)) {
                return Err(Error::Domain(format!("pair ({}, {}) given twice", p.i, p.j)));
            }
            seen.push((p.i, p.j));
            let (ni, nj) = (marginals[p.i].values.len(), marginals[p.j].values.len());
            if p.table.len() != ni || p.table.iter().any(|r| r.len() != nj) {
                return Err(Error::Domain(format!("pair ({}, {}) table is not {ni}×{nj}", p.i, p.j)));
            }
        }

        let mut spec = Self {
            names,
            marginals,
            intercept,
            mains,
            pairs,
        };
        for idx in 0..spec.pairs.len() {
            let PairComponent { i, j, .. } = spec.pairs[idx];
            let (mi, mj) = (&spec.marginals[i], &spec.marginals[j]);
            let table = &spec.pairs[idx].table;
            let row_means: Vec<T> = (0..mi.values.len())
                .map(|a| mj.weighted_mean(|b| table[a][b]))
                .collect();
            let col_means: Vec<T> = (0..mj.values.len())
                .map(|b| mi.weighted_mean(|a| table[a][b]))
                .collect();
            let grand = mi.weighted_mean(|a| row_means[a]);
            let mut centered = table.clone();
            for (a, row) in centered.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = *v - row_means[a] - col_means[b] + grand;
                }
            }
            spec.pairs[idx].table = centered;
            for (a, f) in spec.mains[i].iter_mut().enumerate() {
                *f += row_means[a] - grand;
            }
            for (b, f) in spec.mains[j].iter_mut().enumerate() {
                *f += col_means[b] - grand;
            }
            spec.intercept += grand;
        }
        for i in 0..k {
            let mean = spec.marginals[i].weighted_mean(|a| spec.mains[i][a]);
            for f in &mut spec.mains[i] {
                *f -= mean;
            }
            spec.intercept += mean;
        }
        Ok(spec)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_features(&self) -> usize {
        self.names.len()
    }

    pub fn marginals(&self) -> &[Marginal<T>] {
        &self.marginals
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    pub fn pairs(&self) -> &[PairComponent<T>] {
        &self.pairs
    }

    pub fn main_table(&self, i: usize) -> &[T] {
        &self.mains[i]
    }

    fn grid_indices(&self, row: &[Cell<T>]) -> Result<Vec<usize>> {
        if row.len() != self.num_features() {
            return Err(Error::Dimension {
                expected: self.num_features(),
                actual: row.len(),
            });
        }
        row.iter()
            .enumerate()
            .map(|(i, cell)| {
                let v = cell.ok_or_else(|| {
                    Error::Domain(format!("feature {} is missing; separable functions need every value", self.names[i]))
                })?;
                self.marginals[i]
                    .index_of(v)
                    .ok_or_else(|| Error::Domain(format!("{v} is not on the grid of feature {}", self.names[i])))
            })
            .collect()
    }

    pub fn evaluate(&self, row: &[Cell<T>]) -> Result<T> {
        let idx = self.grid_indices(row)?;
        let mut total = self.intercept;
        for (i, &a) in idx.iter().enumerate() {
            total += self.mains[i][a];
        }
        for p in &self.pairs {
            total += p.table[idx[p.i]][idx[p.j]];
        }
        Ok(total)
    }

    /// Ground-truth main component `f_i(x_i)`.
    pub fn main_effect(&self, i: usize, value: T) -> Result<T> {
        let a = self.marginals[i]
            .index_of(value)
            .ok_or_else(|| Error::Domain(format!("{value} is not on the grid of feature {}", self.names[i])))?;
        Ok(self.mains[i][a])
    }

    /// Ground-truth pair component `g_ij(x_i, x_j)` (zero for absent pairs).
    pub fn pair_effect(&self, i: usize, j: usize, xi: T, xj: T) -> Result<T> {
        if i == j {
            return Err(Error::Domain(format!("pair ({i}, {j}) is diagonal")));
        }
        let (i, j, xi, xj) = if i < j { (i, j, xi, xj) } else { (j, i, xj, xi) };
        let miss = |f: usize, v: T| Error::Domain(format!("{v} is not on the grid of feature {}", self.names[f]));
        let a = self.marginals[i].index_of(xi).ok_or_else(|| miss(i, xi))?;
        let b = self.marginals[j].index_of(xj).ok_or_else(|| miss(j, xj))?;
        Ok(self
            .pairs
            .iter()
            .find(|p| p.i == i && p.j == j)
            .map_or(T::zero(), |p| p.table[a][b]))
    }

    /// Largest absolute main mean or pair marginal mean; zero up to rounding.
    pub fn centering_residual(&self) -> T {
        let mut worst = T::zero();
        let mut track = |v: T| {
            if v.abs() > worst {
                worst = v.abs();
            }
        };
        for (i, m) in self.marginals.iter().enumerate() {
            track(m.weighted_mean(|a| self.mains[i][a]));
        }
        for p in &self.pairs {
            let (mi, mj) = (&self.marginals[p.i], &self.marginals[p.j]);
            for a in 0..mi.values.len() {
                track(mj.weighted_mean(|b| p.table[a][b]));
            }
            for b in 0..mj.values.len() {
                track(mi.weighted_mean(|a| p.table[a][b]));
            }
        }
        worst
    }

    /// Product-grid background: every grid combination, repeated by the
    /// product of its weights.
    pub fn background(&self) -> Result<Table<T>> {
        let k = self.num_features();
        let mut rows: Vec<Vec<Cell<T>>> = vec![Vec::new()];
        for m in &self.marginals {
            let mut next = Vec::with_capacity(rows.len() * m.total_weight());
            for row in &rows {
                for (a, &v) in m.values.iter().enumerate() {
                    for _ in 0..m.weights[a] {
                        let mut r = row.clone();
                        r.push(Some(v));
                        next.push(r);
                    }
                }
            }
            rows = next;
        }
        debug_assert!(rows.iter().all(|r| r.len() == k));
        Table::new(self.names.clone(), rows)
    }

    /// Distinct grid points, one row each, in lexicographic grid order.
    pub fn grid(&self) -> Result<Table<T>> {
        let uniform = Self {
            marginals: self
                .marginals
                .iter()
                .map(|m| Marginal {
                    values: m.values.clone(),
                    weights: vec![1; m.values.len()],
                })
                .collect(),
            ..self.clone()
        };
        uniform.background()
    }
}

impl<T: Scalar> Model<T> for SeparableSpec<T> {
    fn num_features(&self) -> usize {
        SeparableSpec::num_features(self)
    }

    fn evaluate(&self, row: &[Cell<T>]) -> Result<T> {
        SeparableSpec::evaluate(self, row)
    }
}

fn pm_one<T: Scalar>() -> Marginal<T> {
    Marginal {
        values: vec![-T::one(), T::one()],
        weights: vec![1, 1],
    }
}

/// `F(x, y, z) = a·x + b·y + c·z + d·x·y + e·x·z` on the uniform `{−1, 1}³`
/// cube; the components are already centered there.
pub fn make_eq5_function<T: Scalar>(a: T, b: T, c: T, d: T, e: T) -> SeparableSpec<T> {
    let line = |s: T| vec![-s, s];
    let product = |s: T| vec![vec![s, -s], vec![-s, s]];
    SeparableSpec::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![pm_one(), pm_one(), pm_one()],
        T::zero(),
        vec![line(a), line(b), line(c)],
        vec![
            PairComponent { i: 0, j: 1, table: product(d) },
            PairComponent { i: 0, j: 2, table: product(e) },
        ],
    )
    .expect("static eq5 layout is valid")
}

pub const THRESHOLD_NAMES: [&str; 5] = ["b", "age", "n1", "n2", "n3"];
pub const THRESHOLD: f64 = 1.2;
pub const THRESHOLD_STEP: f64 = -0.3;
pub const THRESHOLD_INTERACTION: f64 = 0.3;
pub const THRESHOLD_NOISE_STD: f64 = 0.05;
pub const THRESHOLD_EQUATION: &str =
    "target = -0.3*s(b) + 0.3*s(b)*h(age) + noise, s(b) = 1[b > 1.2], h(age) = (70 - age)/50, noise ~ N(0, 0.05^2); \
     b uniform on {0.3, 0.4, ..., 2.0}, age uniform on {20, 25, ..., 65}, n1 in {0, 1} with weights (3, 1), \
     n2 uniform on {0, 1, 2}, n3 in {-1, 0, 1} with weights (1, 2, 1)";

/// Separable form of the threshold cohort's noiseless target.
pub fn threshold_spec() -> SeparableSpec<f64> {
    let b: Vec<f64> = (3..=20).map(|i| i as f64 / 10.0).collect();
    let age: Vec<f64> = (4..=13).map(|i| (i * 5) as f64).collect();
    let step = |v: f64| if v > THRESHOLD { 1.0 } else { 0.0 };
    let h = |a: f64| (70.0 - a) / 50.0;
    let main_b = b.iter().map(|&v| THRESHOLD_STEP * step(v)).collect();
    let pair = b
        .iter()
        .map(|&vb| age.iter().map(|&va| THRESHOLD_INTERACTION * step(vb) * h(va)).collect())
        .collect();
    let marginals = vec![
        Marginal::uniform(b.clone()).expect("increasing grid"),
        Marginal::uniform(age.clone()).expect("increasing grid"),
        Marginal::new(vec![0.0, 1.0], vec![3, 1]).expect("increasing grid"),
        Marginal::uniform(vec![0.0, 1.0, 2.0]).expect("increasing grid"),
        Marginal::new(vec![-1.0, 0.0, 1.0], vec![1, 2, 1]).expect("increasing grid"),
    ];
    let mains = marginals.iter().map(|m| vec![0.0; m.values().len()]);
    let mut mains: Vec<Vec<f64>> = mains.collect();
    mains[0] = main_b;
    SeparableSpec::new(
        THRESHOLD_NAMES.iter().map(|s| s.to_string()).collect(),
        marginals,
        0.0,
        mains,
        vec![PairComponent { i: 0, j: 1, table: pair }],
    )
    .expect("static threshold layout is valid")
}

/// Noiseless threshold target, written directly from the generating equation.
pub fn threshold_signal(b: f64, age: f64) -> f64 {
    let s = if b > THRESHOLD { 1.0 } else { 0.0 };
    THRESHOLD_STEP * s + THRESHOLD_INTERACTION * s * (70.0 - age) / 50.0
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub table: Table<f64>,
    pub targets: Vec<f64>,
    pub noise: Vec<f64>,
    pub spec: SeparableSpec<f64>,
}

/// `n` independent rows of the threshold design. Row `r` draws its features
/// and noise from generator stream `(seed, r)`.
pub fn make_threshold_cohort(n: usize, seed: u64) -> Result<SyntheticCohort> {
    if n < 100 {
        return Err(Error::Domain(format!("threshold cohort needs at least 100 rows, got {n}")));
    }
    let spec = threshold_spec();
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for r in 0..n {
        let mut rng = SeededRng::for_stream(seed, r as u64);
        let row: Vec<f64> = spec
            .marginals()
            .iter()
            .map(|m| m.values()[m.sample(&mut rng)])
            .collect();
        let eps = THRESHOLD_NOISE_STD * rng.normal();
        targets.push(threshold_signal(row[0], row[1]) + eps);
        noise.push(eps);
        rows.push(row);
    }
    let table = Table::from_dense(spec.names().to_vec(), rows)?;
    Ok(SyntheticCohort {
        table,
        targets,
        noise,
        spec,
    })
}

/// Sidecar description of a generated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub preset: String,
    pub equation: String,
    pub seed: u64,
    pub rows: usize,
    pub noise_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub features: Vec<ManifestFeature>,
    pub pairs: Vec<ManifestPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFeature {
    pub name: String,
    pub values: Vec<f64>,
    pub weights: Vec<usize>,
    /// Centered main component on the grid.
    pub main: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    pub feature1: String,
    pub feature2: String,
    /// Doubly centered component, rows over `feature1`'s grid.
    pub table: Vec<Vec<f64>>,
}

impl Manifest {
    pub fn describe(spec: &SeparableSpec<f64>, preset: &str, equation: &str, seed: u64, rows: usize) -> Self {
        Self {
            preset: preset.to_owned(),
            equation: equation.to_owned(),
            seed,
            rows,
            noise_std: 0.0,
            threshold: None,
            coefficients: Vec::new(),
            intercept: spec.intercept(),
            features: spec
                .names()
                .iter()
                .enumerate()
                .map(|(i, name)| ManifestFeature {
                    name: name.clone(),
                    values: spec.marginals()[i].values().to_vec(),
                    weights: spec.marginals()[i].weights().to_vec(),
                    main: spec.main_table(i).to_vec(),
                })
                .collect(),
            pairs: spec
                .pairs()
                .iter()
                .map(|p| ManifestPair {
                    feature1: spec.names()[p.i].clone(),
                    feature2: spec.names()[p.j].clone(),
                    table: p.table.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the separable function recorded in the manifest.
    pub fn spec(&self) -> Result<SeparableSpec<f64>> {
        let names: Vec<String> = self.features.iter().map(|f| f.name.clone()).collect();
        let marginals = self
            .features
            .iter()
            .map(|f| Marginal::new(f.values.clone(), f.weights.clone()))
            .collect::<Result<Vec<_>>>()?;
        let index = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Schema(format!("manifest pair names unknown feature {name:?}")))
        };
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                Ok(PairComponent {
                    i: index(&p.feature1)?,
                    j: index(&p.feature2)?,
                    table: p.table.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SeparableSpec::new(
            names,
            marginals,
            self.intercept,
            self.features.iter().map(|f| f.main.clone()).collect(),
            pairs,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Table of `n` rows over `k` features with integer values in `0..levels`;
/// each cell is missing with probability `missing`.
pub fn random_table(n: usize, k: usize, levels: u64, missing: f64, seed: u64) -> Result<Table<f64>> {
    let mut rng = SeededRng::new(seed);
    let rows = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let v = rng.below(levels) as f64;
                    (rng.next_f64() >= missing).then_some(v)
                })
                .collect()
        })
        .collect();
    Table::new((0..k).map(|i| format!("f{i}")).collect(), rows)
}

/// Random ensemble over `k` features whose splits use only features
/// `0..split_features`, with thresholds at `v + 0.5` for `v` in `0..levels-1`
/// and standard normal leaves. Trees have depth at most `max_depth`.
pub fn random_ensemble(
    k: usize,
    split_features: usize,
    levels: u64,
    max_depth: usize,
    num_trees: usize,
    seed: u64,
) -> Result<crate::treemodel::Ensemble<f64>> {
    use crate::treemodel::{Ensemble, Node, Tree};

    fn grow(
        nodes: &mut Vec<Node<f64>>,
        depth: usize,
        max_depth: usize,
        split_features: usize,
        levels: u64,
        rng: &mut SeededRng,
    ) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        if depth == max_depth || (depth > 0 && rng.next_f64() < 0.25) {
            nodes[id] = Node::Leaf { value: rng.normal() };
            return id;
        }
        let feature = rng.below(split_features as u64) as usize;
        let threshold = rng.below(levels.max(2) - 1) as f64 + 0.5;
        let default_left = rng.below(2) == 0;
        let left = grow(nodes, depth + 1, max_depth, split_features, levels, rng);
        let right = grow(nodes, depth + 1, max_depth, split_features, levels, rng);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            default_left,
        };
        id
    }

    if split_features == 0 || split_features > k {
        return Err(Error::Domain(format!("split features must lie in 1..={k}")));
    }
    let mut rng = SeededRng::new(seed);
    let trees = (0..num_trees)
        .map(|_| {
            let mut nodes = Vec::new();
            grow(&mut nodes, 0, max_depth, split_features, levels, &mut rng);
            Tree::new(nodes, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(rng.normal(), (0..k).map(|i| format!("f{i}")).collect(), trees)
}

/// Outcome of one ground-truth check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Largest observed deviation.
    pub deviation: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_owned(),
            passed: deviation <= tolerance,
            deviation,
            tolerance,
        }
    }
}

/// Checks the separation identities of `spec` on the distinct rows of
/// `instances` (at most `max_rows` of them) against its product-grid
/// background, plus agreement with the brute-force oracle on the first
/// `oracle_rows`. When `targets` is given, also checks that it differs from
/// the function by no more than `noise_bound`.
pub fn verify_spec(
    spec: &SeparableSpec<f64>,
    instances: &Table<f64>,
    targets: Option<(&[f64], f64)>,
    max_rows: usize,
    oracle_rows: usize,
    tolerance: f64,
) -> Result<Vec<Check>> {
    use crate::attribution::shapley_exact;
    use crate::interaction::{interaction_matrix, InteractionMethod};
    use crate::valuefn::{Coalition, Explainer};

    if instances.names() != spec.names() {
        return Err(Error::Schema(format!(
            "data columns {:?} do not match the generator's features {:?}",
            instances.names(),
            spec.names()
        )));
    }
    let mut picked: Vec<usize> = Vec::new();
    for r in 0..instances.num_rows() {
        if picked.len() == max_rows {
            break;
        }
        if !picked.iter().any(|&p| instances.row(p) == instances.row(r)) {
            picked.push(r);
        }
    }
    let background = spec.background()?;
    let explainer = Explainer::new(spec, &background)?;
    let k = spec.num_features();
    let (mut main_dev, mut pair_dev, mut identity_dev, mut complete_dev, mut oracle_dev) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (n, &r) in picked.iter().enumerate() {
        let row = instances.row(r);
        let x: Vec<f64> = row
            .iter()
            .map(|c| c.ok_or_else(|| Error::Domain(format!("row {r} has a missing value"))))
            .collect::<Result<_>>()?;
        let ctx = explainer.context(row)?;
        let phi = shapley_exact(&ctx)?;
        let m = interaction_matrix(&ctx, InteractionMethod::Taylor)?;
        for i in 0..k {
            main_dev = main_dev.max((m.main(i) - spec.main_effect(i, x[i])?).abs());
            identity_dev = identity_dev.max((phi[i] - m.recompose(i)).abs());
            for j in i + 1..k {
                pair_dev = pair_dev.max((m.get(i, j) - spec.pair_effect(i, j, x[i], x[j])?).abs());
            }
        }
        let span = ctx.prediction() - ctx.coalition_value(Coalition::EMPTY)?;
        complete_dev = complete_dev.max((m.total() - span).abs());
        if n < oracle_rows {
            let brute = crate::oracle::decompose(spec, row, &background)?;
            for i in 0..k {
                oracle_dev = oracle_dev.max((brute.shapley[i] - phi[i]).abs());
                for j in 0..k {
                    oracle_dev = oracle_dev.max((brute.taylor[i][j] - m.get(i, j)).abs());
                }
            }
        }
    }
    let mut checks = vec![
        Check::new("centering", spec.centering_residual(), 1e-12),
        Check::new("main_recovery", main_dev, tolerance),
        Check::new("pair_recovery", pair_dev, tolerance),
        Check::new("decomposition_identity", identity_dev, tolerance),
        Check::new("completeness", complete_dev, tolerance),
        Check::new("oracle_agreement", oracle_dev, 1e-12),
    ];
    if let Some((targets, noise_bound)) = targets {
        if targets.len() != instances.num_rows() {
            return Err(Error::Dimension {
                expected: instances.num_rows(),
                actual: targets.len(),
            });
        }
        let mut worst = 0.0f64;
        for (r, row) in instances.rows().enumerate() {
            worst = worst.max((targets[r] - spec.evaluate(row)?).abs());
        }
        checks.push(Check::new("target_residual", worst, noise_bound));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::shap_for_cohort;
    use crate::interaction::{matrices_for_cohort, InteractionMethod};
    use crate::oracle;
    use num_rational::Rational64;

    #[test]
    fn zero_eq5_is_constant_zero() {
        let spec = make_eq5_function(0.0, 0.0, 0.0, 0.0, 0.0);
        let bg = spec.background().unwrap();
        assert_eq!(bg.num_rows(), 8);
        assert!(bg.rows().all(|r| spec.evaluate(r).unwrap() == 0.0));
    }

    #[test]
    fn eq5_single_main_and_single_pair() {
        let spec = make_eq5_function(1.0, 0.0, 0.0, 0.0, 0.0);
        let bg = spec.background().unwrap();
        let d = oracle::decompose(&spec, &[Some(1.0); 3], &bg).unwrap();
        assert!((d.shapley[0] - 1.0).abs() < 1e-12);
        assert!(d.taylor[0][1].abs() < 1e-12 && d.taylor[0][2].abs() < 1e-12);

        let spec = make_eq5_function(0.0, 0.0, 0.0, 1.0, 0.0);
        let d = oracle::decompose(&spec, &[Some(1.0); 3], &bg).unwrap();
        assert!((d.shapley[0] - 0.5).abs() < 1e-12);
        assert!((d.shapley[1] - 0.5).abs() < 1e-12);
        assert!(d.shapley[2].abs() < 1e-12);
    }

    #[test]
    fn eq5_matches_closed_form() {
        let spec = make_eq5_function(0.3f64, -1.0, 2.0, 0.5, -0.25);
        for row in spec.background().unwrap().rows() {
            let (x, y, z) = (row[0].unwrap(), row[1].unwrap(), row[2].unwrap());
            let expect = 0.3 * x - y + 2.0 * z + 0.5 * x * y - 0.25 * x * z;
            assert!((spec.evaluate(row).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn off_grid_and_missing_are_domain_errors() {
        let spec = make_eq5_function(1.0, 1.0, 1.0, 1.0, 1.0);
        assert!(matches!(spec.evaluate(&[Some(0.5), Some(1.0), Some(1.0)]), Err(Error::Domain(_))));
        assert!(matches!(spec.evaluate(&[None, Some(1.0), Some(1.0)]), Err(Error::Domain(_))));
    }

    #[test]
    fn centering_preserves_function() {
        let marginals = vec![
            Marginal::new(vec![0.0, 1.0, 3.0], vec![1, 2, 1]).unwrap(),
            Marginal::uniform(vec![-2.0, 5.0]).unwrap(),
        ];
        let raw_pair = vec![vec![1.0, 4.0], vec![-2.0, 0.5], vec![3.0, 3.0]];
        let raw_main = vec![vec![2.0, 0.0, 1.0], vec![7.0, -1.0]];
        let spec = SeparableSpec::new(
            vec!["p".into(), "q".into()],
            marginals,
            0.25f64,
            raw_main.clone(),
            vec![PairComponent { i: 0, j: 1, table: raw_pair.clone() }],
        )
        .unwrap();
        assert!(spec.centering_residual() < 1e-12);
        for a in 0..3 {
            for b in 0..2 {
                let row = [Some(spec.marginals()[0].values()[a]), Some(spec.marginals()[1].values()[b])];
                let expect = 0.25 + raw_main[0][a] + raw_main[1][b] + raw_pair[a][b];
                assert!((spec.evaluate(&row).unwrap() - expect).abs() < 1e-12);
            }
        }
        assert_eq!(spec.background().unwrap().num_rows(), 8);
        assert_eq!(spec.grid().unwrap().num_rows(), 6);
    }

    #[test]
    fn ground_truth_recovery_weighted() {
        let spec = SeparableSpec::new(
            vec!["p".into(), "q".into(), "r".into()],
            vec![
                Marginal::new(vec![0.0, 1.0, 3.0], vec![1, 2, 1]).unwrap(),
                Marginal::uniform(vec![-2.0, 5.0]).unwrap(),
                Marginal::new(vec![0.0, 1.0], vec![3, 1]).unwrap(),
            ],
            1.0,
            vec![vec![2.0, 0.0, 1.0], vec![7.0, -1.0], vec![0.5, 0.0]],
            vec![
                PairComponent { i: 0, j: 1, table: vec![vec![1.0, 4.0], vec![-2.0, 0.5], vec![3.0, 3.0]] },
                PairComponent { i: 1, j: 2, table: vec![vec![0.0, 2.0], vec![1.0, -1.0]] },
            ],
        )
        .unwrap();
        let bg = spec.background().unwrap();
        let grid = spec.grid().unwrap();
        let cohort = matrices_for_cohort(&spec, &grid, &bg, InteractionMethod::Taylor).unwrap();
        for (r, m) in cohort.matrices.iter().enumerate() {
            let x: Vec<f64> = grid.row(r).iter().map(|c| c.unwrap()).collect();
            for i in 0..3 {
                assert!((m.main(i) - spec.main_effect(i, x[i]).unwrap()).abs() < 1e-9);
                for j in 0..3 {
                    if i != j {
                        let g = spec.pair_effect(i, j, x[i], x[j]).unwrap();
                        assert!((m.get(i, j) - g).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_rational_eq5() {
        let r = Rational64::from_integer;
        let spec = make_eq5_function(r(1), r(2), r(-3), Rational64::new(1, 2), r(4));
        let bg = spec.background().unwrap();
        let cohort = matrices_for_cohort(&spec, &bg, &bg, InteractionMethod::Taylor).unwrap();
        for (row, m) in bg.rows().zip(&cohort.matrices) {
            let x = row[0].unwrap();
            assert_eq!(m.main(0), x);
            assert_eq!(m.get(0, 1), Rational64::new(1, 2) * x * row[1].unwrap());
            assert_eq!(m.get(1, 2), r(0));
        }
        let shap = shap_for_cohort(&spec, &bg, &bg).unwrap();
        assert_eq!(shap.baseline, r(0));
    }

    #[test]
    fn threshold_cohort_properties() {
        let a = make_threshold_cohort(100, 1).unwrap();
        let b = make_threshold_cohort(100, 1).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.targets, b.targets);
        assert!(make_threshold_cohort(99, 1).is_err());
        for i in 2..5 {
            assert!(a.spec.main_table(i).iter().all(|&v| v == 0.0));
        }
        for (r, row) in a.table.rows().enumerate() {
            let signal = threshold_signal(row[0].unwrap(), row[1].unwrap());
            assert!((a.targets[r] - signal - a.noise[r]).abs() < 1e-15);
            assert!((a.spec.evaluate(row).unwrap() - signal).abs() < 1e-12);
        }
        assert!(a.spec.centering_residual() < 1e-12);
        assert!(a.spec.main_effect(0, 2.0).unwrap() < a.spec.main_effect(0, 1.0).unwrap());
    }

    #[test]
    fn verify_passes_on_generated_data() {
        let spec = make_eq5_function(1.0, -2.0, 0.5, 0.25, 3.0);
        let grid = spec.grid().unwrap();
        let targets: Vec<f64> = grid.rows().map(|r| spec.evaluate(r).unwrap()).collect();
        let checks = verify_spec(&spec, &grid, Some((&targets, 1e-12)), 64, 8, 1e-9).unwrap();
        assert_eq!(checks.len(), 7);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");

        let cohort = make_threshold_cohort(100, 9).unwrap();
        let bound = 6.0 * THRESHOLD_NOISE_STD;
        let checks = verify_spec(&cohort.spec, &cohort.table, Some((&cohort.targets, bound)), 8, 1, 1e-9).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");

        let wrong: Vec<f64> = targets.iter().map(|t| t + 1.0).collect();
        let checks = verify_spec(&spec, &grid, Some((&wrong, 1e-12)), 64, 0, 1e-9).unwrap();
        assert!(!checks.last().unwrap().passed);
    }

    #[test]
    fn random_fixtures_are_deterministic() {
        let a = random_ensemble(5, 4, 4, 3, 6, 11).unwrap();
        assert_eq!(a, random_ensemble(5, 4, 4, 3, 6, 11).unwrap());
        assert!(a.trees().iter().all(|t| t.depth() <= 3 && t.features_used().iter().all(|&f| f < 4)));
        let t = random_table(50, 5, 4, 0.1, 2).unwrap();
        assert_eq!(t, random_table(50, 5, 4, 0.1, 2).unwrap());
        assert!(t.rows().flatten().any(|c| c.is_none()));
        assert!(random_ensemble(3, 0, 4, 2, 1, 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let spec = threshold_spec();
        let manifest = Manifest::describe(&spec, "threshold", THRESHOLD_EQUATION, 3, 100);
        let back = Manifest::from_json(&manifest.to_json().unwrap()).unwrap();
        assert_eq!(back, manifest);
        let rebuilt = back.spec().unwrap();
        for row in spec.grid().unwrap().rows().step_by(37) {
            assert!((rebuilt.evaluate(row).unwrap() - spec.evaluate(row).unwrap()).abs() < 1e-12);
        }
    }
}
