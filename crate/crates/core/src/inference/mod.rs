//! Mean-field inference of peripheral beliefs.
//!
//! Beliefs start at the mean label vector of the followed core members
//! (optionally in a PCA space fitted on core rows), then repeatedly move to the
//! mean of their k nearest beliefs (self included), optionally pulled back
//! towards the start with weight `alpha`:
//!
//! ```text
//! phi_u <- (sum_{v in K(u)} phi_v + alpha * phi0_u) / (k + alpha)
//! ```

pub mod pca;
pub mod rational;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::core_extract::CorePartition;
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::knn::{self, IndexMode, KPolicy, KnnStats, Metric, NeighborSet};
use crate::rng;
use crate::trajectory::{l11_distance, within_tolerance, StepRecord, Trajectory};

pub use pca::{fit_pca, PcaTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Original,
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMatrix {
    /// One row per periphery member, in partition order.
    pub phi: Array2<f64>,
    pub space: Space,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub mu: Array1<f64>,
}

impl MacroState {
    pub fn from_beliefs(phi: ArrayView2<'_, f64>) -> Self {
        let mu = phi
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(phi.ncols()));
        MacroState { mu }
    }
}

/// Label rows of the core members as reals, in core pick order.
pub fn core_label_matrix(part: &CorePartition, g: &LabeledGraph) -> Array2<f64> {
    let mut m = Array2::zeros((part.core.len(), g.dim()));
    for (r, &c) in part.core.iter().enumerate() {
        m.row_mut(r).assign(&g.label_row(c).mapv(f64::from));
    }
    m
}

/// Mean label vector of the followed core members, per periphery member.
pub fn initialize_beliefs(part: &CorePartition, g: &LabeledGraph) -> Result<BeliefMatrix> {
    let mut phi = Array2::zeros((part.periphery.len(), g.dim()));
    for (r, (&u, follows)) in part.periphery.iter().zip(&part.bipartite).enumerate() {
        if follows.is_empty() {
            return Err(Error::NoCoreFollow { node: u });
        }
        let mut row = phi.row_mut(r);
        for &c in follows {
            row.zip_mut_with(&g.label_row(c), |acc, &b| *acc += f64::from(b));
        }
        row /= follows.len() as f64;
    }
    Ok(BeliefMatrix {
        phi,
        space: Space::Original,
        t: 0,
    })
}

/// Euclidean k-NN sets of the current beliefs.
pub fn neighbor_sets(
    phi: ArrayView2<'_, f64>,
    k: usize,
    index: IndexMode,
    seed: u64,
) -> (Vec<NeighborSet>, KnnStats) {
    knn::knn(phi, k, Metric::Euclidean, index, seed)
}

/// `(sum_{v in K(u)} phi_v + alpha * phi0_u) / (|K(u)| + alpha)` for every row.
pub fn apply_update(
    phi: ArrayView2<'_, f64>,
    sets: &[NeighborSet],
    alpha: f64,
    phi0: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut next = Array2::zeros(phi.dim());
    for (u, set) in sets.iter().enumerate() {
        let mut row = next.row_mut(u);
        for v in set.ids() {
            row += &phi.row(v);
        }
        if alpha > 0.0 {
            row.scaled_add(alpha, &phi0.row(u));
        }
        row /= set.len() as f64 + alpha;
    }
    next
}

/// One mean-field step.
pub fn inference_step(
    beliefs: &BeliefMatrix,
    k: usize,
    index: IndexMode,
    alpha: f64,
    phi0: &BeliefMatrix,
    seed: u64,
) -> Result<BeliefMatrix> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be non-negative, got {alpha}")));
    }
    if phi0.phi.dim() != beliefs.phi.dim() {
        return Err(Error::Shape("initial beliefs are not row-aligned with current ones".into()));
    }
    let (sets, _) = neighbor_sets(beliefs.phi.view(), k, index, seed);
    Ok(BeliefMatrix {
        phi: apply_update(beliefs.phi.view(), &sets, alpha, phi0.phi.view()),
        space: beliefs.space,
        t: beliefs.t + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub k: KPolicy,
    /// Stopping threshold on the `L_{1,1}` displacement.
    pub threshold: f64,
    pub max_steps: usize,
    pub alpha: f64,
    /// Share of core variance kept by PCA; `None` runs in label space.
    pub pca_variance: Option<f64>,
    pub index: IndexMode,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            k: KPolicy::Log,
            threshold: 1e-3,
            max_steps: 100,
            alpha: 0.0,
            pca_variance: Some(0.95),
            index: IndexMode::Lsh(knn::LshConfig::default()),
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub input_dim: usize,
    pub reduced_dim: usize,
    pub explained_ratio: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    /// Final beliefs in label space, clipped to `[0, 1]`.
    pub beliefs: BeliefMatrix,
    pub macro_state: MacroState,
    pub trajectory: Trajectory,
    pub k: usize,
    pub pca: Option<PcaSummary>,
    pub knn: KnnStats,
}

/// Iterates the update from `start` until the displacement meets
/// `threshold` or `max_steps` is reached. `macro_norm` maps a state to the
/// norm recorded in the trajectory.
pub fn iterate(
    start: &BeliefMatrix,
    k: usize,
    config: &InferenceConfig,
    macro_norm: impl Fn(ArrayView2<'_, f64>) -> f64,
) -> (BeliefMatrix, Trajectory, KnnStats) {
    let mut current = start.clone();
    let mut traj = Trajectory::default();
    let mut stats = KnnStats::default();
    for t in 0..config.max_steps {
        let step_seed = rng::derive(config.seed, &[t as u64]);
        let started = std::time::Instant::now();
        let (sets, s) = neighbor_sets(current.phi.view(), k, config.index, step_seed);
        stats.index_seconds += started.elapsed().as_secs_f64();
        stats.backfilled_points += s.backfilled_points;
        stats.mean_candidates = s.mean_candidates;
        let phi = apply_update(current.phi.view(), &sets, config.alpha, start.phi.view());
        let displacement = l11_distance(phi.view(), current.phi.view());
        traj.records.push(StepRecord {
            step: t,
            displacement,
            macro_mean_norm: macro_norm(phi.view()),
        });
        current = BeliefMatrix {
            phi,
            space: current.space,
            t: t + 1,
        };
        if within_tolerance(displacement, config.threshold) {
            traj.stopping_step = Some(t);
            break;
        }
    }
    (current, traj, stats)
}

/// The full inference pipeline on a partition.
pub fn run_inference(
    part: &CorePartition,
    g: &LabeledGraph,
    config: &InferenceConfig,
) -> Result<InferenceOutcome> {
    let init = initialize_beliefs(part, g)?;
    let n = part.periphery.len();
    let k = config.k.resolve(n);
    if !(config.alpha >= 0.0) {
        return Err(Error::InvalidParameter("alpha must be non-negative".into()));
    }

    let pca = match config.pca_variance {
        Some(keep) if part.core.len() >= 2 && n > 0 => {
            Some(fit_pca(core_label_matrix(part, g).view(), keep)?)
        }
        Some(_) => {
            log::warn!("fewer than two core members; PCA skipped");
            None
        }
        None => None,
    };

    let (beliefs, trajectory, knn_stats) = match &pca {
        Some(p) => {
            let start = BeliefMatrix {
                phi: p.transform(init.phi.view()),
                space: Space::Reduced,
                t: 0,
            };
            let norm = |z: ArrayView2<'_, f64>| {
                let mean = z.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(z.ncols()));
                let mu = p.inverse_transform(mean.insert_axis(Axis(0)).view());
                mu.iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            let (reduced, traj, stats) = iterate(&start, k, config, norm);
            let phi = p.inverse_transform(reduced.phi.view()).mapv(|v| v.clamp(0.0, 1.0));
            (
                BeliefMatrix {
                    phi,
                    space: Space::Original,
                    t: reduced.t,
                },
                traj,
                stats,
            )
        }
        None => {
            let (mut b, traj, stats) = iterate(&init, k, config, crate::trajectory::macro_mean_norm);
            b.phi.mapv_inplace(|v| v.clamp(0.0, 1.0));
            (b, traj, stats)
        }
    };
    if !trajectory.converged() && config.max_steps > 0 {
        log::warn!("inference did not converge within {} steps", config.max_steps);
    }
    Ok(InferenceOutcome {
        macro_state: MacroState::from_beliefs(beliefs.phi.view()),
        beliefs,
        trajectory,
        k,
        pca: pca.map(|p| PcaSummary {
            input_dim: p.input_dim(),
            reduced_dim: p.reduced_dim(),
            explained_ratio: p.explained_ratio,
            degenerate: p.degenerate,
        }),
        knn: knn_stats,
    })
}

/// Clamp used when evaluating logarithms in the bound.
pub const BOUND_CLAMP: f64 = 1e-12;

/// `sum_i sum_u sum_{v in K(u)} [prev_vi ln next_ui + (1 - prev_vi) ln(1 - next_ui)]`
/// with `next` clamped to `[BOUND_CLAMP, 1 - BOUND_CLAMP]`.
pub fn variational_bound(
    prev: ArrayView2<'_, f64>,
    next: ArrayView2<'_, f64>,
    sets: &[NeighborSet],
) -> f64 {
    let mut total = 0.0;
    for (u, set) in sets.iter().enumerate() {
        for (i, &q) in next.row(u).iter().enumerate() {
            let q = q.clamp(BOUND_CLAMP, 1.0 - BOUND_CLAMP);
            let (lq, lnq) = (q.ln(), (1.0 - q).ln());
            for v in set.ids() {
                let p = prev[[v, i]];
                total += p * lq + (1.0 - p) * lnq;
            }
        }
    }
    total
}
