//! Empirical checks of the convergence theory of the mean-field dynamics.
//!
//! Everything here runs the unregularized update (`alpha = 0`) with exact
//! k-NN and no PCA. One-dimensional runs use exact rational arithmetic so that
//! "reached a fixed point" means state equality, not a tolerance.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_nnim, SimulationConfig};
use crate::error::{Error, Result};
use crate::inference::rational::{self, Rational};
use crate::inference::{iterate, BeliefMatrix, InferenceConfig, Space};
use crate::knn::{exact_knn, jaccard, IndexMode, KPolicy, Metric};
use crate::rng::{self, Domain};
use crate::trajectory::macro_mean_norm;

/// Grid of the random 1D instances: values are `i / GRID` for integer `i`.
pub const GRID: i64 = 1000;

/// Random 1D instance with values on the `1/GRID` lattice in `[0, 1]`.
pub fn random_instance(n: usize, seed: u64, trial: usize) -> Vec<Rational> {
    let mut r = rng::stream(seed, Domain::Instance, trial as u64, 0, 0);
    (0..n).map(|_| rational::ratio(r.random_range(0..=GRID), GRID)).collect()
}

/// Failed trial, kept so it can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: String,
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    /// Initial state as exact fractions.
    pub initial: Vec<String>,
    /// First few states of the run, as floats.
    pub trajectory: Vec<Vec<f64>>,
    pub reason: String,
}

fn counterexample(check: &str, trial: usize, seed: u64, k: usize, states: &[Vec<Rational>], reason: String) -> Counterexample {
    Counterexample {
        check: check.to_string(),
        trial,
        seed,
        k,
        initial: states[0].iter().map(|x| x.to_string()).collect(),
        trajectory: states
            .iter()
            .take(64)
            .map(|s| s.iter().map(rational::to_f64).collect())
            .collect(),
        reason,
    }
}

/// Writes one JSON file per counterexample into `dir`.
pub fn dump_counterexamples(dir: &Path, items: &[Counterexample]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in items {
        let path = dir.join(format!("{}-k{}-trial{}.json", c.check, c.k, c.trial));
        let body = serde_json::to_string_pretty(c).expect("serializable");
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub step_cap: usize,
    pub converged: usize,
    pub pass_rate: f64,
    /// Slowest exact fixed point among converged trials.
    pub max_steps: usize,
    /// Converged trials with a value class smaller than `k`.
    pub small_class_violations: usize,
    /// Converged trials whose distance comparisons are separated by at least
    /// [`SEPARATION`] at every step.
    pub separated: usize,
    /// Separated trials whose floating-point run groups users differently.
    pub float_disagreements: usize,
    pub counterexamples: Vec<Counterexample>,
}

/// Partition of users into classes of values within `tol` of each other
/// (chained along the sorted order), as a class label per user.
pub fn tolerance_classes(values: &[f64], tol: f64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..values.len()).collect();
    ids.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut class = vec![0; values.len()];
    let mut c = 0;
    for w in 0..ids.len() {
        if w > 0 && values[ids[w]] - values[ids[w - 1]] > tol {
            c += 1;
        }
        class[ids[w]] = c;
    }
    class
}

/// Margin below which floating point may order two distances differently
/// from exact arithmetic.
pub const SEPARATION: f64 = 1e-6;

/// Smallest difference between two distances `|x_v - x_u|` and `|x_w - x_u|`
/// (with `x_v != x_w`) over all owners `u` and all states. Exact ties count
/// as zero separation.
pub fn min_separation(states: &[Vec<Rational>]) -> f64 {
    let mut best = f64::INFINITY;
    for s in states {
        let x: Vec<f64> = s.iter().map(rational::to_f64).collect();
        for u in 0..x.len() {
            let mut d: Vec<(f64, usize)> = (0..x.len()).filter(|&v| v != u).map(|v| ((x[v] - x[u]).abs(), v)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in d.windows(2) {
                if s[w[0].1] != s[w[1].1] {
                    best = best.min(w[1].0 - w[0].0);
                }
            }
        }
    }
    best
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|u| (0..a.len()).all(|v| (a[u] == a[v]) == (b[u] == b[v])))
}

/// Floating-point 1D run with the production update.
pub fn float_run_1d(initial: &[f64], k: usize, max_steps: usize) -> Vec<f64> {
    let start = BeliefMatrix {
        phi: Array2::from_shape_vec((initial.len(), 1), initial.to_vec()).expect("column"),
        space: Space::Original,
        t: 0,
    };
    let config = InferenceConfig {
        k: KPolicy::Fixed(k),
        threshold: 0.0,
        max_steps,
        alpha: 0.0,
        pca_variance: None,
        index: IndexMode::Exact,
        seed: 0,
    };
    let (end, _, _) = iterate(&start, k, &config, macro_mean_norm);
    end.phi.column(0).to_vec()
}

/// Runs `trials` random rational instances and asks each to hit an exact
/// fixed point within `step_cap` steps.
pub fn check_finite_convergence(n: usize, k: usize, trials: usize, seed: u64, step_cap: usize) -> ConvergenceReport {
    let outcomes: Vec<(bool, usize, bool, bool, bool, Option<Counterexample>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let run = rational::run(random_instance(n, seed, trial), k, step_cap);
            match run.fixed_point_at {
                Some(t) => {
                    let fixed = run.last();
                    let small = rational::class_sizes(fixed).iter().any(|&s| s < k.min(n));
                    let init: Vec<f64> = run.states[0].iter().map(rational::to_f64).collect();
                    let float_end = float_run_1d(&init, k, t + 1);
                    let exact_classes = tolerance_classes(&fixed.iter().map(rational::to_f64).collect::<Vec<_>>(), 0.0);
                    let float_classes = tolerance_classes(&float_end, 1e-9);
                    let separated = min_separation(&run.states) >= SEPARATION;
                    let agree = same_partition(&exact_classes, &float_classes);
                    (true, t, small, separated, separated && !agree, None)
                }
                None => {
                    let cx = counterexample(
                        "convergence",
                        trial,
                        seed,
                        k,
                        &run.states,
                        format!("no exact fixed point within {step_cap} steps"),
                    );
                    (false, 0, false, false, false, Some(cx))
                }
            }
        })
        .collect();
    let converged = outcomes.iter().filter(|o| o.0).count();
    ConvergenceReport {
        n,
        k,
        trials,
        step_cap,
        converged,
        pass_rate: if trials == 0 { 1.0 } else { converged as f64 / trials as f64 },
        max_steps: outcomes.iter().filter(|o| o.0).map(|o| o.1).max().unwrap_or(0),
        small_class_violations: outcomes.iter().filter(|o| o.2).count(),
        separated: outcomes.iter().filter(|o| o.3).count(),
        float_disagreements: outcomes.iter().filter(|o| o.4).count(),
        counterexamples: outcomes.into_iter().filter_map(|o| o.5).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub k: usize,
    pub threshold: f64,
    pub constant: f64,
    /// Steps until the displacement met the threshold, per trial.
    pub steps: Vec<usize>,
    pub median_steps: f64,
    /// `constant * ln(1/threshold) / ln k`.
    pub bound: f64,
    pub holds: bool,
    /// Trials that hit the step cap.
    pub capped: usize,
    /// Mean least-squares slope of `ln(displacement)` against `t`.
    pub fitted_slope: f64,
    /// `-ln(k) / 2`, the rate suggested by the theory.
    pub reference_slope: f64,
}

fn slope(ys: &[f64]) -> Option<f64> {
    if ys.len() < 2 {
        return None;
    }
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in ys.iter().enumerate() {
        let dx = x as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

pub fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    }
}

/// Random 1D instance in floating point, uniform on `[0, 1)`.
pub fn random_float_instance(n: usize, seed: u64, trial: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, Domain::Instance, trial as u64, 1, 0);
    (0..n).map(|_| rng::unit_f64(&mut r)).collect()
}

/// Steps-to-threshold of the floating-point dynamics on random 1D instances,
/// against `constant * ln(1/threshold) / ln k`.
pub fn check_iteration_bound(
    n: usize,
    k: usize,
    threshold: f64,
    trials: usize,
    seed: u64,
    constant: f64,
) -> Result<BoundReport> {
    if k < 2 {
        return Err(Error::InvalidParameter("the bound needs k >= 2".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter("threshold must be positive".into()));
    }
    let bound = constant * (1.0 / threshold).ln() / (k as f64).ln();
    let cap = (4.0 * bound).ceil() as usize + 1;
    let runs: Vec<(usize, bool, Option<f64>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let init = random_float_instance(n, seed, trial);
            let start = BeliefMatrix {
                phi: Array2::from_shape_vec((n, 1), init).expect("column"),
                space: Space::Original,
                t: 0,
            };
            let config = InferenceConfig {
                k: KPolicy::Fixed(k),
                threshold,
                max_steps: cap,
                alpha: 0.0,
                pca_variance: None,
                index: IndexMode::Exact,
                seed,
            };
            let (_, traj, _) = iterate(&start, k, &config, macro_mean_norm);
            let logs: Vec<f64> = traj
                .displacements()
                .into_iter()
                .take_while(|&d| d > 0.0)
                .map(f64::ln)
                .collect();
            match traj.stopping_step {
                Some(t) => (t, false, slope(&logs)),
                None => (cap, true, slope(&logs)),
            }
        })
        .collect();
    let steps: Vec<usize> = runs.iter().map(|r| r.0).collect();
    let slopes: Vec<f64> = runs.iter().filter_map(|r| r.2).collect();
    let med = median(&steps);
    Ok(BoundReport {
        n,
        k,
        threshold,
        constant,
        median_steps: med,
        bound,
        holds: med <= bound,
        capped: runs.iter().filter(|r| r.1).count(),
        fitted_slope: if slopes.is_empty() { 0.0 } else { slopes.iter().sum::<f64>() / slopes.len() as f64 },
        reference_slope: -(k as f64).ln() / 2.0,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub ordering_violations: usize,
    /// Steps where some coordinate's max-min range grew.
    pub range_violations: usize,
    pub planted_trials: usize,
    /// Planted trials whose clusters split within the step cap.
    pub splits_detected: usize,
    /// Planted trials where the gap between the clusters shrank after the split.
    pub split_violations: usize,
    /// Planted trials ending with exactly two values (within 1e-9).
    pub two_final_values: usize,
    pub counterexamples: Vec<Counterexample>,
}

/// Two clusters of `n / 2` (and `n - n/2`) points, centered at 0.25 and 0.75
/// (a gap of 0.5), each spread uniformly over a width of 0.05.
pub fn planted_instance(n: usize, seed: u64, trial: usize) -> Vec<Rational> {
    let mut r = rng::stream(seed, Domain::Instance, trial as u64, 2, 0);
    (0..n)
        .map(|u| {
            let center = if u < n / 2 { 250 } else { 750 };
            rational::ratio(center - 25 + r.random_range(0..=50), GRID)
        })
        .collect()
}

fn ordering_preserved(prev: &[Rational], next: &[Rational]) -> bool {
    let order = rational::ranking(prev);
    order.windows(2).all(|w| {
        // strict order before may collapse to a tie, never invert
        next[w[0]] <= next[w[1]] || prev[w[0]] == prev[w[1]]
    })
}

fn range(values: &[Rational]) -> Rational {
    let max = values.iter().max().expect("non-empty");
    let min = values.iter().min().expect("non-empty");
    max - min
}

fn crosses(values: &[Rational], k: usize, left: usize) -> bool {
    (0..values.len()).any(|u| {
        rational::neighbors(values, u, k)
            .into_iter()
            .any(|v| (u < left) != (v < left))
    })
}

fn gap(values: &[Rational], left: usize) -> Rational {
    let a = values[..left].iter().max().expect("left cluster");
    let b = values[left..].iter().min().expect("right cluster");
    b - a
}

/// Ordering persistence on random instances and split persistence on
/// planted two-cluster instances.
pub fn check_ordering_and_splits(n: usize, k: usize, trials: usize, seed: u64, step_cap: usize) -> OrderingReport {
    let random: Vec<(usize, usize, Option<Counterexample>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let run = rational::run(random_instance(n, seed, trial), k, step_cap);
            let mut order_bad = 0;
            let mut range_bad = 0;
            let mut cx = None;
            for t in 1..run.states.len() {
                let (prev, next) = (&run.states[t - 1], &run.states[t]);
                if !ordering_preserved(prev, next) {
                    order_bad += 1;
                    cx.get_or_insert_with(|| {
                        counterexample("ordering", trial, seed, k, &run.states, format!("order inverted at step {t}"))
                    });
                }
                if range(next) > range(prev) {
                    range_bad += 1;
                }
            }
            (usize::from(order_bad > 0), range_bad, cx)
        })
        .collect();

    let left = n / 2;
    let planted: Vec<(bool, bool, bool, Option<Counterexample>)> = if left == 0 || n - left == 0 {
        Vec::new()
    } else {
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let run = rational::run(planted_instance(n, seed, trial), k, step_cap);
                let split_at = run.states.iter().position(|s| !crosses(s, k, left));
                let mut violated = false;
                let mut cx = None;
                if let Some(s) = split_at {
                    for t in s + 1..run.states.len() {
                        let before = gap(&run.states[t - 1], left);
                        let after = gap(&run.states[t], left);
                        if after < before || crosses(&run.states[t], k, left) {
                            violated = true;
                            cx = Some(counterexample(
                                "split",
                                trial,
                                seed,
                                k,
                                &run.states,
                                format!("split at step {s} closed again at step {t}"),
                            ));
                            break;
                        }
                    }
                }
                let last: Vec<f64> = run.last().iter().map(rational::to_f64).collect();
                let classes = tolerance_classes(&last, 1e-9);
                let distinct = classes.iter().max().map_or(0, |m| m + 1);
                (split_at.is_some(), violated, distinct == 2, cx)
            })
            .collect()
    };

    let mut counterexamples: Vec<Counterexample> = Vec::new();
    let ordering_violations = random.iter().map(|r| r.0).sum();
    let range_violations = random.iter().map(|r| r.1).sum();
    counterexamples.extend(random.into_iter().filter_map(|r| r.2));
    let splits_detected = planted.iter().filter(|p| p.0).count();
    let split_violations = planted.iter().filter(|p| p.1).count();
    let two_final_values = planted.iter().filter(|p| p.2).count();
    let planted_trials = planted.len();
    counterexamples.extend(planted.into_iter().filter_map(|p| p.3));
    OrderingReport {
        n,
        k,
        trials,
        ordering_violations,
        range_violations,
        planted_trials,
        splits_detected,
        split_violations,
        two_final_values,
        counterexamples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub d: usize,
    pub delta: f64,
    pub samples: usize,
    /// `sqrt(d ln(1/delta) / 2)`.
    pub deviation: f64,
    /// Share of samples with `|H - E[H]| > deviation`.
    pub mean_exceedance: f64,
    /// Share of samples with `|H - ||p - q||^2| > d/2 + deviation`.
    pub distance_exceedance: f64,
    pub holds: bool,
}

/// Monte-Carlo check that the Hamming distance `H` of two independent
/// Bernoulli vectors concentrates around its mean. McDiarmid's inequality
/// (each coordinate moves `H` by at most 1) gives
/// `P(H - E H > s) <= exp(-2 s^2 / d)`; with `s = sqrt(d ln(1/delta) / 2)`
/// the two-sided deviation should be rare at level `delta`. Since
/// `|E H - ||p - q||^2| <= d/2`, the distance form is checked as well.
pub fn check_hamming_concentration(d: usize, delta: f64, samples: usize, seed: u64) -> ConcentrationReport {
    let mut r = rng::stream(seed, Domain::Instance, d as u64, 3, 0);
    let p: Array1<f64> = (0..d).map(|_| rng::unit_f64(&mut r)).collect();
    let q: Array1<f64> = (0..d).map(|_| rng::unit_f64(&mut r)).collect();
    let expected: f64 = p.iter().zip(&q).map(|(a, b)| a * (1.0 - b) + b * (1.0 - a)).sum();
    let sq: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
    let deviation = (d as f64 * (1.0 / delta).ln() / 2.0).sqrt();

    let hits: Vec<(bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, Domain::Instance, d as u64, 4 + s as u64, 0);
            let h = (0..d)
                .filter(|&i| (rng::unit_f64(&mut r) < p[i]) != (rng::unit_f64(&mut r) < q[i]))
                .count() as f64;
            ((h - expected).abs() > deviation, (h - sq).abs() > d as f64 / 2.0 + deviation)
        })
        .collect();
    let mean_exceedance = hits.iter().filter(|h| h.0).count() as f64 / samples.max(1) as f64;
    let distance_exceedance = hits.iter().filter(|h| h.1).count() as f64 / samples.max(1) as f64;
    ConcentrationReport {
        d,
        delta,
        samples,
        deviation,
        mean_exceedance,
        distance_exceedance,
        holds: mean_exceedance <= delta && distance_exceedance <= delta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub k: usize,
    /// Mean Jaccard overlap per step between the Hamming k-NN sets of the
    /// realizations and the Euclidean k-NN sets of the parameters.
    pub overlap: Vec<f64>,
}

/// Runs the stochastic process and measures, step by step, how much the
/// realized neighborhoods agree with the neighborhoods of the parameters.
pub fn knn_overlap_diagnostic(xi0: ndarray::ArrayView2<'_, f64>, k: usize, steps: usize, seed: u64) -> Result<OverlapReport> {
    let config = SimulationConfig {
        k,
        epsilon: 0.0,
        max_steps: steps,
        seed,
        snapshot_every: 1,
    };
    let (_, traj) = run_nnim(xi0, config)?;
    let mut overlap = Vec::with_capacity(traj.snapshots.len());
    for (t, xi) in &traj.snapshots {
        let x = crate::dynamics::sample_bernoulli(xi.view(), seed, *t);
        let realized = crate::dynamics::realization_neighbors(x.view(), k);
        let expected = exact_knn(xi.view(), k, Metric::Euclidean);
        let mean = realized.iter().zip(&expected).map(|(a, b)| jaccard(a, b)).sum::<f64>() / realized.len().max(1) as f64;
        overlap.push(mean);
    }
    Ok(OverlapReport { k, overlap })
}

/// The three-agent example: `xi0 = (1/2, 1/2, 1/2)`, `k = 2`, realizations
/// `(0, 1, 1)` then `(1, 1, 1)`. Parameters go `(1/2, 1, 1)`, then
/// `(1, 1, 1)` for good, so the displacements are 1, 1/2, 0 and the process
/// stops at step 2 for `epsilon = 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkedExampleReport {
    /// Parameters `xi^(0..=3)` from the stochastic simulator.
    pub stochastic_xi: Vec<Vec<f64>>,
    /// Parameters obtained by applying the mean-field update to each
    /// realization.
    pub mean_field_xi: Vec<Vec<f64>>,
    pub stochastic_tau: Option<usize>,
    pub mean_field_tau: Option<usize>,
    pub expected_tau: usize,
    pub matches: bool,
}

pub fn worked_example() -> Result<WorkedExampleReport> {
    use crate::dynamics::{run_nnim_with, CounterBernoulli, Scripted};
    use crate::inference::inference_step;
    use crate::trajectory::{l11_distance, within_tolerance};

    let epsilon = 0.5;
    let xi0 = Array2::from_elem((3, 1), 0.5);
    let realizations = vec![
        Array2::from_shape_vec((3, 1), vec![0u8, 1, 1]).expect("shape"),
        Array2::from_shape_vec((3, 1), vec![1u8, 1, 1]).expect("shape"),
    ];
    let mut realizer = Scripted {
        realizations: realizations.clone(),
        fallback: CounterBernoulli { seed: 0 },
    };
    let config = SimulationConfig {
        k: 2,
        epsilon,
        max_steps: 10,
        seed: 0,
        snapshot_every: 1,
    };
    let (_, traj) = run_nnim_with(xi0.view(), config, &mut realizer)?;
    let column = |m: &Array2<f64>| m.column(0).to_vec();
    let stochastic_xi: Vec<Vec<f64>> = traj.snapshots.iter().map(|(_, xi)| column(xi)).collect();

    // Mean-field path: the update applied to the realized states. After the
    // second step every parameter is 1, so every later draw is 1 surely.
    let mut phis = vec![xi0.clone()];
    let mut mean_field_tau = None;
    for t in 0..10 {
        let x = match realizations.get(t) {
            Some(x) => x.mapv(f64::from),
            None => phis[t].mapv(|p| if p >= 1.0 { 1.0 } else { 0.0 }),
        };
        let b = BeliefMatrix { phi: x, space: Space::Original, t };
        let next = inference_step(&b, 2, IndexMode::Exact, 0.0, &b, 0)?.phi;
        let displacement = l11_distance(next.view(), phis[t].view());
        phis.push(next);
        if within_tolerance(displacement, epsilon) {
            mean_field_tau = Some(t);
            break;
        }
    }
    let mean_field_xi: Vec<Vec<f64>> = phis.iter().map(column).collect();
    let expected_tau = 2;
    let expected = vec![vec![0.5; 3], vec![0.5, 1.0, 1.0], vec![1.0; 3], vec![1.0; 3]];
    let matches = stochastic_xi == expected
        && mean_field_xi == expected
        && traj.stopping_step == Some(expected_tau)
        && mean_field_tau == Some(expected_tau);
    Ok(WorkedExampleReport {
        stochastic_xi,
        mean_field_xi,
        stochastic_tau: traj.stopping_step,
        mean_field_tau,
        expected_tau,
        matches,
    })
}
