//! The stochastic nearest-neighbor influence process.
//!
//! Each user holds a binary opinion vector. Every step she finds her k
//! Hamming-nearest users (herself included), sets her Bernoulli parameters to
//! their mean opinion and resamples every coordinate independently.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::knn::{exact_knn_of, exact_knn_points, BitRows, NeighborSet};
use crate::rng::{self, Domain};
use crate::trajectory::{l11_distance, macro_mean_norm, within_tolerance, StepRecord, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    /// Realizations, entries 0/1.
    pub x: Array2<u8>,
    /// Bernoulli parameters.
    pub xi: Array2<f64>,
    /// After a step: `xi = counts / k` exactly.
    pub counts: Option<Array2<u32>>,
    pub t: usize,
}

impl OpinionState {
    pub fn users(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Source of realizations `X^(t) ~ Be(xi^(t))`.
pub trait Realizer {
    fn realize(&mut self, xi: ArrayView2<'_, f64>, t: usize) -> Array2<u8>;
}

/// Independent Bernoulli draws; the draw for `(u, i, t)` depends only on
/// `(seed, u, i, t)`.
#[derive(Debug, Clone, Copy)]
pub struct CounterBernoulli {
    pub seed: u64,
}

impl Realizer for CounterBernoulli {
    fn realize(&mut self, xi: ArrayView2<'_, f64>, t: usize) -> Array2<u8> {
        sample_bernoulli(xi, self.seed, t)
    }
}

pub fn sample_bernoulli(xi: ArrayView2<'_, f64>, seed: u64, t: usize) -> Array2<u8> {
    let (n, d) = xi.dim();
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut r = rng::stream(seed, Domain::Bernoulli, t as u64, u as u64, 0);
            (0..d)
                .map(|i| u8::from(rng::unit_f64(&mut r) < xi[[u, i]]))
                .collect()
        })
        .collect();
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("shape")
}

/// Replays given realizations, then falls back to seeded draws.
#[derive(Debug, Clone)]
pub struct Scripted {
    pub realizations: Vec<Array2<u8>>,
    pub fallback: CounterBernoulli,
}

impl Realizer for Scripted {
    fn realize(&mut self, xi: ArrayView2<'_, f64>, t: usize) -> Array2<u8> {
        match self.realizations.get(t) {
            Some(x) => x.clone(),
            None => self.fallback.realize(xi, t),
        }
    }
}

/// Hamming k-NN over the realizations.
pub fn realization_neighbors(x: ArrayView2<'_, u8>, k: usize) -> Vec<NeighborSet> {
    exact_knn_points(&BitRows::pack(x), k)
}

/// Sum of neighbor realizations per user.
fn neighbor_counts(x: ArrayView2<'_, u8>, sets: &[NeighborSet]) -> Array2<u32> {
    let d = x.ncols();
    let flat: Vec<u32> = sets
        .par_iter()
        .flat_map_iter(|set| {
            let mut row = vec![0u32; d];
            for v in set.ids() {
                for (c, &b) in row.iter_mut().zip(x.row(v).iter()) {
                    *c += u32::from(b);
                }
            }
            row
        })
        .collect();
    Array2::from_shape_vec((sets.len(), d), flat).expect("shape")
}

/// One transition with the given realizer.
pub fn step_with(state: &OpinionState, k: usize, realizer: &mut dyn Realizer) -> OpinionState {
    let sets = realization_neighbors(state.x.view(), k);
    let k_eff = sets.first().map_or(1, NeighborSet::len) as f64;
    let counts = neighbor_counts(state.x.view(), &sets);
    let xi = counts.mapv(|c| f64::from(c) / k_eff);
    let t = state.t + 1;
    let x = realizer.realize(xi.view(), t);
    OpinionState {
        x,
        xi,
        counts: Some(counts),
        t,
    }
}

/// One transition with counter-based Bernoulli sampling.
pub fn nnim_step(state: &OpinionState, k: usize, seed: u64) -> OpinionState {
    step_with(state, k, &mut CounterBernoulli { seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub k: usize,
    pub epsilon: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Keep `xi` every this many steps (0 = never).
    pub snapshot_every: usize,
}

fn check_unit(xi: ArrayView2<'_, f64>) -> Result<()> {
    if xi.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter("initial parameters must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Samples `X^0 ~ Be(xi0)` and steps until the parameter displacement meets
/// `epsilon`. The expected state `E[X^(t)]` is `xi^(t)` exactly.
pub fn run_nnim(xi0: ArrayView2<'_, f64>, config: SimulationConfig) -> Result<(OpinionState, Trajectory)> {
    run_nnim_with(xi0, config, &mut CounterBernoulli { seed: config.seed })
}

pub fn run_nnim_with(
    xi0: ArrayView2<'_, f64>,
    config: SimulationConfig,
    realizer: &mut dyn Realizer,
) -> Result<(OpinionState, Trajectory)> {
    check_unit(xi0)?;
    if config.epsilon < 0.0 || config.epsilon.is_nan() {
        return Err(Error::InvalidParameter("epsilon must be non-negative".into()));
    }
    if config.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut state = OpinionState {
        x: realizer.realize(xi0, 0),
        xi: xi0.to_owned(),
        counts: None,
        t: 0,
    };
    let mut traj = Trajectory::default();
    if config.snapshot_every > 0 {
        traj.snapshots.push((0, state.xi.clone()));
    }
    for t in 0..config.max_steps {
        let next = step_with(&state, config.k, realizer);
        let displacement = l11_distance(next.xi.view(), state.xi.view());
        traj.records.push(StepRecord {
            step: t,
            displacement,
            macro_mean_norm: macro_mean_norm(next.xi.view()),
        });
        state = next;
        if config.snapshot_every > 0 && state.t.is_multiple_of(config.snapshot_every) {
            traj.snapshots.push((state.t, state.xi.clone()));
        }
        if within_tolerance(displacement, config.epsilon) {
            traj.stopping_step = Some(t);
            break;
        }
    }
    if !traj.converged() {
        log::warn!("stochastic process did not settle within {} steps", config.max_steps);
    }
    Ok((state, traj))
}

/// Neighbor count rule for the homophilic index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HomophilyK {
    /// `|N+(w)| + 1`
    OutDegreePlusOne,
    /// `ceil(ln N)`
    CeilLogN,
    Fixed(usize),
}

/// Per-node terms of the homophilic index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyTerms {
    pub rmse: Vec<f64>,
    pub weight: Vec<f64>,
}

pub fn homophily_terms(g: &LabeledGraph, policy: HomophilyK) -> HomophilyTerms {
    let n = g.node_count();
    let d = g.dim() as f64;
    let bits = BitRows::pack(g.labels().view());
    let denom = (g.edge_count() + n) as f64;
    let labels = g.labels();
    let per_node: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|w| {
            let k = match policy {
                HomophilyK::OutDegreePlusOne => g.out_degree(w) + 1,
                HomophilyK::CeilLogN => (n as f64).ln().ceil() as usize,
                HomophilyK::Fixed(k) => k,
            }
            .clamp(1, n);
            let mut alpha = vec![0.0; g.dim()];
            for v in std::iter::once(w).chain(g.out_neighbors(w).iter().copied()) {
                for (a, &b) in alpha.iter_mut().zip(labels.row(v).iter()) {
                    *a += f64::from(b);
                }
            }
            let a_count = (g.out_degree(w) + 1) as f64;
            let set = exact_knn_of(&bits, w, k);
            let mut beta = vec![0.0; g.dim()];
            for v in set.ids() {
                for (s, &b) in beta.iter_mut().zip(labels.row(v).iter()) {
                    *s += f64::from(b);
                }
            }
            let b_count = set.len() as f64;
            let sq: f64 = alpha
                .iter()
                .zip(&beta)
                .map(|(a, b)| (a / a_count - b / b_count).powi(2))
                .sum();
            ((sq / d).sqrt(), a_count / denom)
        })
        .collect();
    let (rmse, weight) = per_node.into_iter().unzip();
    HomophilyTerms { rmse, weight }
}

/// `100 * (1 - sum_w weight_w * RMSE(alpha_w, beta_w))` over all nodes.
pub fn homophilic_index(g: &LabeledGraph, policy: HomophilyK) -> f64 {
    let terms = homophily_terms(g, policy);
    let weighted: f64 = terms.rmse.iter().zip(&terms.weight).map(|(r, w)| r * w).sum();
    100.0 * (1.0 - weighted)
}
