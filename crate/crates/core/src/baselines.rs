//! Comparison predictors with the same inputs and outputs as the mean-field
//! inference: static and dynamic collaborative filtering, core-seeded label
//! propagation, and a randomized bounded-confidence (Hegselmann-Krause) model.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_extract::CorePartition;
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::inference::initialize_beliefs;
use crate::rng::{self, Domain};
use crate::trajectory::{l11_distance, macro_mean_norm, within_tolerance, StepRecord, Trajectory};

/// Per-periphery-member scores in `[0, 1]`, rows in partition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub scores: Array2<f64>,
    pub method: String,
    pub config: BTreeMap<String, String>,
}

impl ScoreMatrix {
    pub fn new(scores: Array2<f64>, method: &str) -> Self {
        ScoreMatrix {
            scores,
            method: method.to_string(),
            config: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    /// One line per row: the node name, then the scores. Floats are written
    /// in shortest round-trip form, so a write/read cycle is lossless.
    pub fn write_tsv(&self, names: &[&str], w: &mut impl Write) -> std::io::Result<()> {
        assert_eq!(names.len(), self.scores.nrows(), "one name per score row");
        for (name, row) in names.iter().zip(self.scores.rows()) {
            write!(w, "{name}")?;
            for v in row {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Reads a `name<TAB>v_1 ... v_d` matrix. Blank lines and `#` comments are
/// skipped. Used for both score files and ground-truth files.
pub fn read_named_matrix(path: &std::path::Path) -> Result<(Vec<String>, Array2<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default().to_string();
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("bad value {f:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected {d} values, found {}", row.len()),
                })
            }
            _ => {}
        }
        names.push(name);
        values.extend(row);
    }
    let d = dim.unwrap_or(0);
    let m = Array2::from_shape_vec((names.len(), d), values).expect("rows have equal length");
    Ok((names, m))
}

/// Static collaborative filtering: the mean label vector of the followed core.
pub fn cf_bipartite(part: &CorePartition, g: &LabeledGraph) -> Result<ScoreMatrix> {
    Ok(ScoreMatrix::new(initialize_beliefs(part, g)?.phi, "cf-bipartite"))
}

fn periphery_rows(part: &CorePartition, values: &Array2<f64>, reached: &[bool], fill: f64) -> Array2<f64> {
    let mut out = Array2::from_elem((part.periphery.len(), values.ncols()), fill);
    for (r, &u) in part.periphery.iter().enumerate() {
        if reached[u] {
            out.row_mut(r).assign(&values.row(u));
        }
    }
    out
}

/// Dynamic collaborative filtering over the whole graph. Core members keep
/// their labels; every other node repeatedly takes the mean of its labeled
/// neighbors (edges read as undirected). Synchronous updates. Nodes the
/// labels never reach score 0.5.
pub fn cf_dynamic(
    g: &LabeledGraph,
    part: &CorePartition,
    max_steps: usize,
    threshold: f64,
) -> (ScoreMatrix, Trajectory) {
    let n = g.node_count();
    let d = g.dim();
    let adj = g.undirected_adjacency();
    let is_core = part.is_core(n);
    let mut values = Array2::<f64>::zeros((n, d));
    let mut labeled = vec![false; n];
    for &c in &part.core {
        values.row_mut(c).assign(&g.label_row(c).mapv(f64::from));
        labeled[c] = true;
    }

    let mut traj = Trajectory::default();
    for t in 0..max_steps {
        let updates: Vec<Option<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|u| {
                if is_core[u] {
                    return None;
                }
                let mut acc = vec![0.0; d];
                let mut count = 0usize;
                for &v in &adj[u] {
                    if labeled[v] {
                        count += 1;
                        for (a, x) in acc.iter_mut().zip(values.row(v)) {
                            *a += x;
                        }
                    }
                }
                (count > 0).then(|| acc.into_iter().map(|a| a / count as f64).collect())
            })
            .collect();

        let mut displacement = 0.0;
        let mut newly = 0usize;
        let mut next = values.clone();
        for (u, upd) in updates.into_iter().enumerate() {
            if let Some(row) = upd {
                if labeled[u] {
                    displacement += row.iter().zip(values.row(u)).map(|(a, b)| (a - b).abs()).sum::<f64>();
                } else {
                    newly += 1;
                    labeled[u] = true;
                }
                next.row_mut(u).assign(&ndarray::ArrayView1::from(&row));
            }
        }
        values = next;
        traj.records.push(StepRecord {
            step: t,
            displacement,
            macro_mean_norm: macro_mean_norm(values.view()),
        });
        if newly == 0 && within_tolerance(displacement, threshold) {
            traj.stopping_step = Some(t);
            break;
        }
    }
    let scores = periphery_rows(part, &values, &labeled, 0.5);
    let sm = ScoreMatrix::new(scores, "cf-dynamic")
        .with("max_steps", max_steps)
        .with("threshold", threshold);
    (sm, traj)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub rounds: usize,
    pub stable: bool,
    /// Periphery members without any neighbor.
    pub isolated: usize,
    /// Periphery members that never received a label.
    pub unreached: usize,
}

/// Core-seeded label propagation, one independent majority vote per label
/// coordinate. Nodes are visited in a seeded random order each round and see
/// updates made earlier in the same round. A newly labeled node breaks a tie
/// with a seeded coin; an already labeled node keeps its bit on a tie, so a
/// configuration where every bit is a majority bit is stable.
pub fn label_propagation(
    g: &LabeledGraph,
    part: &CorePartition,
    seed: u64,
    max_rounds: usize,
) -> (ScoreMatrix, PropagationStats) {
    let n = g.node_count();
    let d = g.dim();
    let adj = g.undirected_adjacency();
    let is_core = part.is_core(n);
    let mut bits = Array2::<u8>::zeros((n, d));
    let mut labeled = vec![false; n];
    for &c in &part.core {
        bits.row_mut(c).assign(&g.label_row(c));
        labeled[c] = true;
    }
    let mut order: Vec<usize> = (0..n).filter(|&u| !is_core[u]).collect();
    let mut stats = PropagationStats::default();

    for round in 0..max_rounds {
        let mut shuffle_rng = rng::stream(seed, Domain::LabelPropagation, round as u64, 0, 0);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut changed = false;
        for &u in &order {
            let voters: Vec<usize> = adj[u].iter().copied().filter(|&v| labeled[v]).collect();
            if voters.is_empty() {
                continue;
            }
            let fresh = !labeled[u];
            for i in 0..d {
                let ones = voters.iter().filter(|&&v| bits[[v, i]] != 0).count();
                let zeros = voters.len() - ones;
                let bit = if ones > zeros {
                    1
                } else if zeros > ones {
                    0
                } else if fresh {
                    let mut coin = rng::stream(seed, Domain::LabelPropagation, round as u64, (u * d + i) as u64 + 1, 0);
                    u8::from(coin.random::<bool>())
                } else {
                    bits[[u, i]]
                };
                if bits[[u, i]] != bit {
                    bits[[u, i]] = bit;
                    changed = true;
                }
            }
            if fresh {
                labeled[u] = true;
                changed = true;
            }
        }
        stats.rounds = round + 1;
        if !changed {
            stats.stable = true;
            break;
        }
    }

    let mut scores = Array2::zeros((part.periphery.len(), d));
    for (r, &u) in part.periphery.iter().enumerate() {
        if adj[u].is_empty() {
            stats.isolated += 1;
        } else if !labeled[u] {
            stats.unreached += 1;
        } else {
            scores.row_mut(r).assign(&bits.row(u).mapv(f64::from));
        }
    }
    if stats.isolated > 0 {
        log::warn!("{} isolated periphery members scored all-zero", stats.isolated);
    }
    let sm = ScoreMatrix::new(scores, "label-prop")
        .with("seed", seed)
        .with("max_rounds", max_rounds);
    (sm, stats)
}

/// Neighbors of `u` within squared Euclidean `radius2`, then `k` of them
/// sampled uniformly without replacement (all of them if there are fewer).
fn ball_sample(phi: ArrayView2<'_, f64>, u: usize, k: usize, radius2: f64, seed: u64, t: usize) -> Vec<usize> {
    let x = phi.row(u);
    let ball: Vec<usize> = (0..phi.nrows())
        .filter(|&v| {
            v == u
                || phi
                    .row(v)
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    <= radius2
        })
        .collect();
    if ball.len() <= k {
        return ball;
    }
    let mut rng = rng::stream(seed, Domain::RandomHk, t as u64, u as u64, 0);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ball.len(), k)
        .into_iter()
        .map(|j| ball[j])
        .collect();
    picked.sort_unstable();
    picked
}

/// One Random HK step on beliefs `phi`.
pub fn random_hk_step(phi: ArrayView2<'_, f64>, k: usize, radius: f64, seed: u64, t: usize) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = (0..phi.nrows())
        .into_par_iter()
        .map(|u| {
            let chosen = ball_sample(phi, u, k, radius * radius, seed, t);
            let mut acc = vec![0.0; phi.ncols()];
            for &v in &chosen {
                for (a, x) in acc.iter_mut().zip(phi.row(v)) {
                    *a += x;
                }
            }
            acc.into_iter().map(|a| a / chosen.len() as f64).collect()
        })
        .collect();
    let mut next = Array2::zeros(phi.dim());
    for (u, row) in rows.into_iter().enumerate() {
        next.row_mut(u).assign(&ndarray::ArrayView1::from(&row));
    }
    next
}

/// Randomized bounded-confidence dynamics started from the static
/// collaborative-filtering scores.
#[allow(clippy::too_many_arguments)]
pub fn random_hk(
    part: &CorePartition,
    g: &LabeledGraph,
    k: usize,
    radius: f64,
    threshold: f64,
    max_steps: usize,
    seed: u64,
) -> Result<(ScoreMatrix, Trajectory)> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be non-negative, got {radius}")));
    }
    let mut phi = initialize_beliefs(part, g)?.phi;
    let mut traj = Trajectory::default();
    for t in 0..max_steps {
        let next = random_hk_step(phi.view(), k, radius, seed, t);
        let displacement = l11_distance(next.view(), phi.view());
        phi = next;
        traj.records.push(StepRecord {
            step: t,
            displacement,
            macro_mean_norm: macro_mean_norm(phi.view()),
        });
        if within_tolerance(displacement, threshold) {
            traj.stopping_step = Some(t);
            break;
        }
    }
    let sm = ScoreMatrix::new(phi, "random-hk")
        .with("k", k)
        .with("radius", radius)
        .with("threshold", threshold)
        .with("max_steps", max_steps)
        .with("seed", seed);
    Ok((sm, traj))
}

/// The radius used when none is given: `sqrt(d / 2)`.
pub fn default_radius(d: usize) -> f64 {
    (d as f64 / 2.0).sqrt()
}
