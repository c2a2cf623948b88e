//! k-nearest-neighbor retrieval with a fixed `(distance, id)` total order.
//!
//! Every neighbor set holds its owner. The remaining `k - 1` members are the
//! closest other points, ties broken by lower id. Euclidean distances are
//! stored squared (same order, no rounding from a square root).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Hamming,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub owner: usize,
    /// `(id, distance)` sorted by `(distance, id)`.
    pub neighbors: Vec<(usize, f64)>,
    pub metric: Metric,
}

impl NeighborSet {
    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.neighbors.iter().map(|&(id, _)| id)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.neighbors.iter().any(|&(v, _)| v == id)
    }
}

/// Jaccard overlap of the member ids of two neighbor sets.
pub fn jaccard(a: &NeighborSet, b: &NeighborSet) -> f64 {
    let mut x: Vec<usize> = a.ids().collect();
    let mut y: Vec<usize> = b.ids().collect();
    x.sort_unstable();
    y.sort_unstable();
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = x.len() + y.len() - common;
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}

/// Rule for deriving k from the population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KPolicy {
    /// `ceil(ln n)`
    Log,
    /// `ceil(sqrt n)`
    Sqrt,
    Fixed(usize),
}

impl KPolicy {
    /// Resolved k, at least 1 and at most `n` (when `n > 0`).
    pub fn resolve(self, n: usize) -> usize {
        let k = match self {
            KPolicy::Log => (n.max(1) as f64).ln().ceil() as usize,
            KPolicy::Sqrt => (n as f64).sqrt().ceil() as usize,
            KPolicy::Fixed(k) => k,
        };
        k.max(1).min(n.max(1))
    }
}

impl FromStr for KPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "log" => Ok(KPolicy::Log),
            "sqrt" => Ok(KPolicy::Sqrt),
            other => other
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .map(KPolicy::Fixed)
                .ok_or_else(|| Error::InvalidParameter(format!("k policy {other:?}: expected log, sqrt or a positive integer"))),
        }
    }
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::Log => f.write_str("log"),
            KPolicy::Sqrt => f.write_str("sqrt"),
            KPolicy::Fixed(k) => write!(f, "{k}"),
        }
    }
}

/// Anything with pairwise distances between `0..len()`.
pub trait PointSet: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn dist(&self, i: usize, j: usize) -> f64;
    fn metric(&self) -> Metric;
}

/// Dense rows under Hamming (count of differing coordinates) or squared
/// Euclidean distance.
pub struct DenseRows<'a> {
    points: ArrayView2<'a, f64>,
    metric: Metric,
}

impl<'a> DenseRows<'a> {
    pub fn new(points: ArrayView2<'a, f64>, metric: Metric) -> Self {
        DenseRows { points, metric }
    }
}

pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Hamming => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

impl PointSet for DenseRows<'_> {
    fn len(&self) -> usize {
        self.points.nrows()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let a = self.points.row(i);
        let b = self.points.row(j);
        match (a.as_slice(), b.as_slice()) {
            (Some(a), Some(b)) => distance(self.metric, a, b),
            _ => distance(self.metric, &a.to_vec(), &b.to_vec()),
        }
    }

    fn metric(&self) -> Metric {
        self.metric
    }
}

/// Binary rows packed into 64-bit words; Hamming distance by popcount.
pub struct BitRows {
    words: Vec<u64>,
    per_row: usize,
    rows: usize,
}

impl BitRows {
    /// Any nonzero entry is a one.
    pub fn pack<T: Copy + PartialEq + Default>(rows: ArrayView2<'_, T>) -> Self {
        let per_row = rows.ncols().div_ceil(64).max(1);
        let mut words = vec![0u64; per_row * rows.nrows()];
        for (r, row) in rows.axis_iter(Axis(0)).enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != T::default() {
                    words[r * per_row + c / 64] |= 1 << (c % 64);
                }
            }
        }
        BitRows {
            words,
            per_row,
            rows: rows.nrows(),
        }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.per_row..(i + 1) * self.per_row]
    }
}

impl PointSet for BitRows {
    fn len(&self) -> usize {
        self.rows
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a ^ b).count_ones())
            .sum::<u32>() as f64
    }

    fn metric(&self) -> Metric {
        Metric::Hamming
    }
}

fn by_distance_then_id(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

fn clamp_k(k: usize, n: usize) -> usize {
    if k > n {
        log::warn!("k = {k} exceeds {n} points; clamped");
    }
    k.clamp(1, n.max(1))
}

/// Owner plus the `k - 1` best of `others`, sorted by `(distance, id)`.
fn finish(owner: usize, mut others: Vec<(usize, f64)>, k: usize, metric: Metric) -> NeighborSet {
    let take = k - 1;
    if others.len() > take {
        if take > 0 {
            others.select_nth_unstable_by(take - 1, by_distance_then_id);
        }
        others.truncate(take);
    }
    others.push((owner, 0.0));
    others.sort_by(by_distance_then_id);
    NeighborSet {
        owner,
        neighbors: others,
        metric,
    }
}

/// Exact neighbor set of a single point.
pub fn exact_knn_of<P: PointSet + ?Sized>(points: &P, owner: usize, k: usize) -> NeighborSet {
    let n = points.len();
    let others: Vec<(usize, f64)> = (0..n)
        .filter(|&v| v != owner)
        .map(|v| (v, points.dist(owner, v)))
        .collect();
    finish(owner, others, k.clamp(1, n), points.metric())
}

/// Exact k-NN of every point by full scan.
pub fn exact_knn_points<P: PointSet>(points: &P, k: usize) -> Vec<NeighborSet> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let k = clamp_k(k, n);
    (0..n)
        .into_par_iter()
        .map(|u| exact_knn_of(points, u, k))
        .collect()
}

pub fn exact_knn(points: ArrayView2<'_, f64>, k: usize, metric: Metric) -> Vec<NeighborSet> {
    exact_knn_points(&DenseRows::new(points, metric), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshConfig {
    pub trees: usize,
    pub leaf_capacity: usize,
}

impl Default for LshConfig {
    fn default() -> Self {
        LshConfig {
            trees: 10,
            leaf_capacity: 64,
        }
    }
}

/// Forest of random-hyperplane partition trees. Each tree splits a node's
/// points at the median of their projections onto a Gaussian direction until
/// leaves hold at most `leaf_capacity` points.
#[derive(Debug, Clone)]
pub struct LshForest {
    /// `leaves[t]` partitions `0..n`.
    leaves: Vec<Vec<Vec<usize>>>,
    /// `leaf_of[t][u]` is the leaf of `u` in tree `t`.
    leaf_of: Vec<Vec<u32>>,
    pub leaf_capacity: usize,
    pub seed: u64,
    n: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KnnStats {
    /// Points whose candidate pool was topped up with random ids.
    pub backfilled_points: usize,
    pub mean_candidates: f64,
    /// Wall-clock seconds spent building indexes and querying them. Not
    /// serialized, so reports stay reproducible.
    #[serde(skip)]
    pub index_seconds: f64,
}

impl LshForest {
    pub fn build(points: ArrayView2<'_, f64>, config: LshConfig, seed: u64) -> Self {
        let n = points.nrows();
        let cap = config.leaf_capacity.max(1);
        let trees = config.trees.max(1);
        let leaves: Vec<Vec<Vec<usize>>> = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(seed, Domain::LshTree, t as u64, 0, 0);
                let mut out = Vec::new();
                let mut stack = vec![(0..n).collect::<Vec<usize>>()];
                while let Some(ids) = stack.pop() {
                    if ids.len() <= cap {
                        out.push(ids);
                        continue;
                    }
                    let dir: Vec<f64> = (0..points.ncols()).map(|_| rng.sample(StandardNormal)).collect();
                    let mut proj: Vec<(usize, f64)> = ids
                        .iter()
                        .map(|&i| (i, points.row(i).iter().zip(&dir).map(|(x, w)| x * w).sum()))
                        .collect();
                    proj.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                    let mid = proj.len() / 2;
                    let right: Vec<usize> = proj[mid..].iter().map(|p| p.0).collect();
                    let left: Vec<usize> = proj[..mid].iter().map(|p| p.0).collect();
                    stack.push(right);
                    stack.push(left);
                }
                out
            })
            .collect();
        let leaf_of = leaves
            .iter()
            .map(|tree| {
                let mut of = vec![0u32; n];
                for (li, leaf) in tree.iter().enumerate() {
                    for &u in leaf {
                        of[u] = li as u32;
                    }
                }
                of
            })
            .collect();
        LshForest {
            leaves,
            leaf_of,
            leaf_capacity: cap,
            seed,
            n,
        }
    }

    pub fn tree_count(&self) -> usize {
        self.leaves.len()
    }

    /// Union of the leaves holding `u`, without `u`, ascending.
    pub fn candidates(&self, u: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self
            .leaves
            .iter()
            .zip(&self.leaf_of)
            .flat_map(|(tree, of)| tree[of[u] as usize].iter().copied())
            .filter(|&v| v != u)
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Approximate k-NN: exact re-ranking within the forest's candidates.
pub fn lsh_knn(
    forest: &LshForest,
    points: ArrayView2<'_, f64>,
    k: usize,
    metric: Metric,
) -> (Vec<NeighborSet>, KnnStats) {
    let n = points.nrows();
    assert_eq!(forest.len(), n, "forest was built over a different point set");
    if n == 0 {
        return (Vec::new(), KnnStats::default());
    }
    let k = clamp_k(k, n);
    let rows = DenseRows::new(points, metric);
    let results: Vec<(NeighborSet, usize, bool)> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut cand = forest.candidates(u);
            let pool = cand.len();
            let short = pool < k - 1;
            if short {
                let mut rng = rng::stream(forest.seed, Domain::LshBackfill, u as u64, 0, 0);
                let mut taken = vec![false; n];
                taken[u] = true;
                for &c in &cand {
                    taken[c] = true;
                }
                while cand.len() < k - 1 {
                    let v = rng.random_range(0..n);
                    if !taken[v] {
                        taken[v] = true;
                        cand.push(v);
                    }
                }
            }
            let others = cand.into_iter().map(|v| (v, rows.dist(u, v))).collect();
            (finish(u, others, k, metric), pool, short)
        })
        .collect();
    let stats = KnnStats {
        backfilled_points: results.iter().filter(|r| r.2).count(),
        mean_candidates: results.iter().map(|r| r.1 as f64).sum::<f64>() / n as f64,
        index_seconds: 0.0,
    };
    (results.into_iter().map(|r| r.0).collect(), stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum IndexMode {
    Exact,
    Lsh(LshConfig),
}

/// k-NN of every row under the chosen index; LSH forests are rebuilt from
/// `seed` on every call.
pub fn knn(
    points: ArrayView2<'_, f64>,
    k: usize,
    metric: Metric,
    mode: IndexMode,
    seed: u64,
) -> (Vec<NeighborSet>, KnnStats) {
    match mode {
        IndexMode::Exact => {
            let sets = exact_knn(points, k, metric);
            let mean = points.nrows().saturating_sub(1) as f64;
            (
                sets,
                KnnStats {
                    backfilled_points: 0,
                    mean_candidates: mean,
                    index_seconds: 0.0,
                },
            )
        }
        IndexMode::Lsh(config) => {
            let forest = LshForest::build(points, config, seed);
            lsh_knn(&forest, points, k, metric)
        }
    }
}

/// Mean fraction of exact neighbors recovered by `approx`.
pub fn recall(exact: &[NeighborSet], approx: &[NeighborSet]) -> f64 {
    let total: f64 = exact
        .iter()
        .zip(approx)
        .map(|(e, a)| {
            let hit = e.ids().filter(|&id| a.contains(id)).count();
            hit as f64 / e.len() as f64
        })
        .sum();
    total / exact.len().max(1) as f64
}
