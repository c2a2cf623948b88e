//! Library results checked against independent, deliberately naive oracles.

use nalgebra::DMatrix;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nnim::baselines::cf_dynamic;
use nnim::core_extract::{bgmc, greedy_mc, partition_from_core};
use nnim::dynamics::{homophilic_index, homophily_terms, HomophilyK};
use nnim::graph::LabeledGraph;
use nnim::inference::{fit_pca, inference_step, variational_bound, BeliefMatrix, Space};
use nnim::knn::{self, exact_knn, exact_knn_points, BitRows, IndexMode, LshConfig, LshForest, Metric};
use nnim::metrics::{auc_micro, top50_label_set};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_digraph(n: usize, p: f64, r: &mut ChaCha8Rng) -> LabeledGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let labels = Array2::from_shape_fn((n, 3), |_| u8::from(r.random_bool(0.5)));
    LabeledGraph::from_edges(n, &edges, labels, true).unwrap().0
}

// ---------------------------------------------------------------- k-NN

/// `O(n^2 d)` scan with the (distance, id) order.
fn brute_knn(rows: &[Vec<f64>], k: usize, dist: impl Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<usize>> {
    (0..rows.len())
        .map(|u| {
            let mut all: Vec<(f64, usize)> = (0..rows.len()).map(|v| (dist(&rows[u], &rows[v]), v)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            // self plus the k - 1 best others, listed in (distance, id) order
            let mut chosen: Vec<(f64, usize)> = vec![(0.0, u)];
            chosen.extend(all.into_iter().filter(|p| p.1 != u).take(k - 1));
            chosen.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            chosen.into_iter().map(|p| p.1).collect()
        })
        .collect()
}

fn ids_of(sets: &[knn::NeighborSet]) -> Vec<Vec<usize>> {
    sets.iter().map(|s| s.ids().collect()).collect()
}

#[test]
fn hamming_knn_matches_brute_force_scan() {
    let mut r = rng(1);
    let x = Array2::from_shape_fn((50, 8), |_| u8::from(r.random_bool(0.5)));
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|row| row.iter().map(|&b| f64::from(b)).collect()).collect();
    let hamming = |a: &[f64], b: &[f64]| a.iter().zip(b).filter(|(p, q)| p != q).count() as f64;
    let expected = brute_knn(&rows, 5, hamming);
    assert_eq!(ids_of(&exact_knn_points(&BitRows::pack(x.view()), 5)), expected);
    assert_eq!(ids_of(&exact_knn(x.mapv(f64::from).view(), 5, Metric::Hamming)), expected);
}

#[test]
fn euclidean_knn_matches_brute_force_scan() {
    let mut r = rng(2);
    let x = Array2::from_shape_fn((60, 3), |_| r.random::<f64>());
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|row| row.to_vec()).collect();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    for k in [1, 2, 7, 60] {
        assert_eq!(ids_of(&exact_knn(x.view(), k, Metric::Euclidean)), brute_knn(&rows, k, sq));
    }
}

#[test]
fn line_geometry() {
    let sets = exact_knn(array![[0.0], [0.5], [1.0]].view(), 2, Metric::Euclidean);
    assert_eq!(ids_of(&sets), vec![vec![0, 1], vec![1, 0], vec![2, 1]]);
}

fn lsh_recall(points: &Array2<f64>, k: usize, config: LshConfig, seed: u64) -> f64 {
    let exact = exact_knn(points.view(), k, Metric::Euclidean);
    let forest = LshForest::build(points.view(), config, seed);
    let (approx, _) = knn::lsh_knn(&forest, points.view(), k, Metric::Euclidean);
    knn::recall(&exact, &approx)
}

#[test]
fn lsh_recall_on_gaussian_points() {
    let mut r = rng(3);
    let points = Array2::from_shape_fn((500, 16), |_| r.sample::<f64, _>(StandardNormal));
    let rec = lsh_recall(&points, 7, LshConfig::default(), 17);
    assert!(rec >= 0.9, "recall {rec}");
}

#[test]
fn lsh_recall_on_uniform_points_with_defaults() {
    let mut r = rng(4);
    let points = Array2::from_shape_fn((1000, 8), |_| r.random::<f64>());
    let rec = lsh_recall(&points, 7, LshConfig::default(), 17);
    assert!(rec >= 0.85, "recall {rec}");
}

#[test]
fn single_big_leaf_is_exact() {
    let mut r = rng(5);
    let points = Array2::from_shape_fn((80, 4), |_| r.random::<f64>());
    let config = LshConfig {
        trees: 1,
        leaf_capacity: 80,
    };
    let forest = LshForest::build(points.view(), config, 9);
    let (approx, stats) = knn::lsh_knn(&forest, points.view(), 6, Metric::Euclidean);
    assert_eq!(approx, exact_knn(points.view(), 6, Metric::Euclidean));
    assert_eq!(stats.backfilled_points, 0);
    let (again, _) = knn::knn(points.view(), 6, Metric::Euclidean, IndexMode::Lsh(config), 9);
    assert_eq!(again, approx);
}

// ---------------------------------------------------------------- coverage

/// Followers plus self, restricted to engaged nodes.
fn cover_sets(g: &LabeledGraph, tau: usize) -> Vec<Vec<usize>> {
    (0..g.node_count())
        .map(|v| {
            let mut s: Vec<usize> = std::iter::once(v)
                .chain(g.in_neighbors(v).iter().copied())
                .filter(|&w| g.out_degree(w) >= tau)
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect()
}

fn covered_by(sets: &[Vec<usize>], picks: &[usize], n: usize) -> usize {
    let mut hit = vec![false; n];
    for &p in picks {
        for &w in &sets[p] {
            hit[w] = true;
        }
    }
    hit.iter().filter(|&&h| h).count()
}

/// Textbook greedy: recompute every gain each round; ties to higher
/// in-degree, then lower id; stop on zero gain.
fn naive_greedy(g: &LabeledGraph, budget: usize, tau: usize) -> Vec<usize> {
    let n = g.node_count();
    let sets = cover_sets(g, tau);
    let mut picks: Vec<usize> = Vec::new();
    while picks.len() < budget.min(n) {
        let base = covered_by(&sets, &picks, n);
        let mut best: Option<(usize, usize, usize)> = None;
        for v in (0..n).filter(|v| !picks.contains(v)) {
            let gain = covered_by(&sets, &[picks.clone(), vec![v]].concat(), n) - base;
            let key = (gain, g.in_degree(v), usize::MAX - v);
            if best.is_none_or(|b| key > (b.0, b.1, usize::MAX - b.2)) {
                best = Some((gain, g.in_degree(v), v));
            }
        }
        match best {
            Some((gain, _, v)) if gain > 0 => picks.push(v),
            _ => break,
        }
    }
    picks
}

fn exhaustive_opt(sets: &[Vec<usize>], n: usize, budget: usize) -> usize {
    fn rec(sets: &[Vec<usize>], n: usize, start: usize, left: usize, picks: &mut Vec<usize>, best: &mut usize) {
        *best = (*best).max(covered_by(sets, picks, n));
        if left == 0 {
            return;
        }
        for v in start..n {
            picks.push(v);
            rec(sets, n, v + 1, left - 1, picks, best);
            picks.pop();
        }
    }
    let mut best = 0;
    rec(sets, n, 0, budget, &mut Vec::new(), &mut best);
    best
}

#[test]
fn greedy_matches_naive_greedy() {
    let mut r = rng(6);
    for trial in 0..60 {
        let n = 5 + trial % 15;
        let g = random_digraph(n, 0.25, &mut r);
        for budget in 1..=4 {
            for tau in [0, 1, 2] {
                let part = greedy_mc(&g, budget, tau).unwrap();
                if budget < n {
                    assert_eq!(part.core, naive_greedy(&g, budget, tau), "trial {trial} K={budget} tau={tau}");
                }
            }
        }
    }
}

#[test]
fn greedy_is_within_one_minus_one_over_e_of_opt() {
    let mut r = rng(7);
    let bound = 1.0 - (-1.0f64).exp();
    let mut checked = 0;
    for trial in 0..150 {
        let n = 4 + trial % 11; // up to 14 nodes
        let g = random_digraph(n, 0.2, &mut r);
        let tau = trial % 3;
        let sets = cover_sets(&g, tau);
        for budget in 1..=3.min(n - 1) {
            let part = greedy_mc(&g, budget, tau).unwrap();
            let got = covered_by(&sets, &part.core, n);
            let opt = exhaustive_opt(&sets, n, budget);
            assert!(got as f64 >= bound * opt as f64, "trial {trial}: greedy {got} vs opt {opt}");
            checked += 1;
        }
    }
    assert!(checked > 300);
}

#[test]
fn bgmc_agrees_with_greedy_when_first_bucket_holds_the_picks() {
    // 8 nodes; hubs 0 and 1 have the largest in-degrees
    let edges = [(2, 0), (3, 0), (4, 0), (5, 1), (6, 1), (7, 1), (2, 1), (5, 0), (0, 1), (3, 4)];
    let (g, _) = LabeledGraph::from_edges(8, &edges, Array2::zeros((8, 1)), true).unwrap();
    let oracle = greedy_mc(&g, 2, 1).unwrap();
    let bucketed = bgmc(&g, 2, 2.0, 1).unwrap();
    assert_eq!(bucketed.core, oracle.core);
    assert_eq!(bucketed.coverage_fraction, oracle.coverage_fraction);
}

// ---------------------------------------------------------------- AUC

fn pairwise_auc(truth: &Array2<u8>, scores: &Array2<f64>, cols: &[usize]) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for u in 0..truth.nrows() {
        for &i in cols {
            if truth[[u, i]] == 1 {
                pos.push(scores[[u, i]]);
            } else {
                neg.push(scores[[u, i]]);
            }
        }
    }
    let mut credit = 0.0;
    for p in &pos {
        for q in &neg {
            credit += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    100.0 * credit / (pos.len() * neg.len()) as f64
}

#[test]
fn auc_matches_pairwise_count_on_500_instances() {
    let mut r = rng(8);
    let mut done = 0;
    while done < 500 {
        let rows = r.random_range(1..12);
        let cols = r.random_range(1..6);
        let truth = Array2::from_shape_fn((rows, cols), |_| u8::from(r.random_bool(0.4)));
        // coarse grid so ties are common
        let scores = Array2::from_shape_fn((rows, cols), |_| (r.random_range(0..8) as f64) / 7.0);
        let all: Vec<usize> = (0..cols).collect();
        let top = top50_label_set(truth.view());
        for subset in [None, Some(top.as_slice())] {
            let c = subset.unwrap_or(&all);
            let positives = truth.rows().into_iter().map(|row| c.iter().filter(|&&i| row[i] == 1).count()).sum::<usize>();
            let cells = rows * c.len();
            if positives == 0 || positives == cells {
                assert!(auc_micro(truth.view(), scores.view(), subset).is_err());
                continue;
            }
            let got = auc_micro(truth.view(), scores.view(), subset).unwrap();
            let want = pairwise_auc(&truth, &scores, c);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        done += 1;
    }
}

#[test]
fn top50_matches_naive_sort() {
    let mut r = rng(9);
    for _ in 0..200 {
        let d = r.random_range(1..10);
        let truth = Array2::from_shape_fn((15, d), |_| u8::from(r.random_bool(0.3)));
        let mut counted: Vec<(usize, usize)> = (0..d)
            .map(|i| (truth.column(i).iter().map(|&b| b as usize).sum(), i))
            .collect();
        // bubble sort by count desc, index asc
        for a in 0..d {
            for b in 0..d - 1 - a {
                let (x, y) = (counted[b], counted[b + 1]);
                if x.0 < y.0 || (x.0 == y.0 && x.1 > y.1) {
                    counted.swap(b, b + 1);
                }
            }
        }
        let mut want: Vec<usize> = counted.iter().take(d.div_ceil(2)).map(|p| p.1).collect();
        want.sort_unstable();
        assert_eq!(top50_label_set(truth.view()), want);
    }
}

// ---------------------------------------------------------------- inference

fn beliefs(phi: Array2<f64>) -> BeliefMatrix {
    BeliefMatrix {
        phi,
        space: Space::Original,
        t: 0,
    }
}

#[test]
fn inference_step_matches_hand_recurrence() {
    let mut r = rng(10);
    for trial in 0..50 {
        let x: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
        let x0: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
        for alpha in [0.0, 1.0] {
            let cur = beliefs(Array2::from_shape_vec((5, 1), x.clone()).unwrap());
            let start = beliefs(Array2::from_shape_vec((5, 1), x0.clone()).unwrap());
            let next = inference_step(&cur, 3, IndexMode::Exact, alpha, &start, 0).unwrap();
            for u in 0..5 {
                let mut others: Vec<usize> = (0..5).filter(|&v| v != u).collect();
                others.sort_by(|&a, &b| (x[a] - x[u]).abs().partial_cmp(&(x[b] - x[u]).abs()).unwrap().then(a.cmp(&b)));
                let sum = x[u] + x[others[0]] + x[others[1]];
                let want = (sum + alpha * x0[u]) / (3.0 + alpha);
                assert!((next.phi[[u, 0]] - want).abs() < 1e-12, "trial {trial} u {u}");
            }
        }
    }
}

#[test]
fn pca_matches_svd_oracle() {
    let mut r = rng(11);
    let rows = Array2::from_shape_fn((50, 20), |_| f64::from(u8::from(r.random_bool(0.4))));
    let pca = fit_pca(rows.view(), 0.95).unwrap();

    // oracle: singular values of the centered matrix
    let mean: Vec<f64> = (0..20).map(|j| rows.column(j).sum() / 50.0).collect();
    let centered = DMatrix::from_fn(50, 20, |i, j| rows[[i, j]] - mean[j]);
    let svd = centered.clone().svd(false, true);
    let mut variances: Vec<f64> = svd.singular_values.iter().map(|s| s * s / 49.0).collect();
    variances.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = variances.iter().sum();
    let mut acc = 0.0;
    let mut want_dim = 0;
    for v in &variances {
        acc += v;
        want_dim += 1;
        if acc / total >= 0.95 {
            break;
        }
    }
    assert_eq!(pca.reduced_dim(), want_dim);
    assert!(pca.explained_ratio >= 0.95);
    assert!((pca.explained_ratio - acc / total).abs() < 1e-10);
    for (got, want) in pca.explained_variance.iter().zip(&variances) {
        assert!((got - want).abs() < 1e-10);
    }
    // components are orthonormal
    let c = &pca.components;
    let gram = c.dot(&c.t());
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((gram[[i, j]] - e).abs() < 1e-10);
        }
    }
    // and each one is an eigenvector of the covariance
    let cov = centered.transpose() * &centered / 49.0;
    for (row, lambda) in c.rows().into_iter().zip(&pca.explained_variance) {
        let v = nalgebra::DVector::from_iterator(20, row.iter().copied());
        let residual = &cov * &v - &v * *lambda;
        assert!(residual.norm() < 1e-9);
    }
}

#[test]
fn variational_bound_matches_direct_sum() {
    let prev = array![[0.1], [0.4], [0.45], [0.9]];
    let next = array![[0.3], [0.35], [0.6], [0.99]];
    let sets = exact_knn(prev.view(), 2, Metric::Euclidean);
    // K(0)={0,1}, K(1)={1,2}, K(2)={2,1}, K(3)={3,2}
    let k = [[0, 1], [1, 2], [2, 1], [3, 2]];
    assert_eq!(ids_of(&sets), k.iter().map(|s| s.to_vec()).collect::<Vec<_>>());
    let mut want = 0.0;
    for u in 0..4 {
        for &v in &k[u] {
            let p: f64 = prev[[v, 0]];
            let q: f64 = next[[u, 0]];
            want += p * q.ln() + (1.0 - p) * (1.0 - q).ln();
        }
    }
    assert!((variational_bound(prev.view(), next.view(), &sets) - want).abs() < 1e-12);
}

#[test]
fn mean_field_update_maximizes_the_bound() {
    let mut r = rng(12);
    for _ in 0..20 {
        let prev = Array2::from_shape_fn((12, 3), |_| r.random_range(0.05..0.95));
        let b = beliefs(prev.clone());
        let next = inference_step(&b, 4, IndexMode::Exact, 0.0, &b, 0).unwrap().phi;
        let sets = exact_knn(prev.view(), 4, Metric::Euclidean);
        let best = variational_bound(prev.view(), next.view(), &sets);
        for _ in 0..20 {
            let bumped = next.mapv(|v| (v + r.random_range(-0.05..0.05)).clamp(0.01, 0.99));
            assert!(variational_bound(prev.view(), bumped.view(), &sets) <= best + 1e-12);
        }
    }
}

// ---------------------------------------------------------------- cf_dynamic

/// Layer-by-layer oracle: explicit synchronous mean over labeled neighbors.
fn cf_dynamic_oracle(g: &LabeledGraph, core: &[usize], steps: usize) -> Vec<Option<Vec<f64>>> {
    let n = g.node_count();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        for &v in g.out_neighbors(u) {
            if !nbrs[u].contains(&v) {
                nbrs[u].push(v);
            }
            if !nbrs[v].contains(&u) {
                nbrs[v].push(u);
            }
        }
    }
    let mut val: Vec<Option<Vec<f64>>> = vec![None; n];
    for &c in core {
        val[c] = Some(g.label_row(c).iter().map(|&b| f64::from(b)).collect());
    }
    for _ in 0..steps {
        let mut next = val.clone();
        for u in (0..n).filter(|u| !core.contains(u)) {
            let known: Vec<&Vec<f64>> = nbrs[u].iter().filter_map(|&v| val[v].as_ref()).collect();
            if !known.is_empty() {
                let d = known[0].len();
                next[u] = Some((0..d).map(|i| known.iter().map(|row| row[i]).sum::<f64>() / known.len() as f64).collect());
            }
        }
        val = next;
    }
    val
}

#[test]
fn cf_dynamic_matches_fixed_point_oracle() {
    let mut r = rng(13);
    for trial in 0..20 {
        let g = random_digraph(10, 0.2, &mut r);
        let engaged = vec![true; 10];
        let core = vec![0, 1];
        let part = partition_from_core(&g, core.clone(), &engaged, 2);
        let (scores, traj) = cf_dynamic(&g, &part, 500, 1e-12);
        let steps = traj.steps_executed();
        let oracle = cf_dynamic_oracle(&g, &core, steps);
        for (row, &u) in part.periphery.iter().enumerate() {
            let want = oracle[u].clone().unwrap_or_else(|| vec![0.5; 3]);
            for (got, want) in scores.scores.row(row).iter().zip(&want) {
                assert!((got - want).abs() < 1e-12, "trial {trial}");
            }
        }
    }
}

// ---------------------------------------------------------------- homophily

#[test]
fn homophilic_index_six_node_hand_computation() {
    let labels = array![[1u8, 0], [1, 0], [1, 1], [0, 1], [0, 1], [0, 0]];
    let edges = [(0, 1), (0, 2), (1, 0), (2, 3), (3, 4), (4, 3), (5, 0)];
    let (g, _) = LabeledGraph::from_edges(6, &edges, labels, true).unwrap();
    // alpha (self + out-neighbors) vs beta (self + nearest other, ties to the
    // lower id):
    //   node 0: alpha (1, 1/3), beta (1, 0)   -> rmse sqrt(1/18), weight 3/13
    //   node 2: alpha (1/2, 1), beta (1, 1/2) -> rmse 1/2,        weight 2/13
    //   all other nodes: alpha == beta
    let terms = homophily_terms(&g, HomophilyK::Fixed(2));
    let want_rmse = [(1.0f64 / 18.0).sqrt(), 0.0, 0.5, 0.0, 0.0, 0.0];
    let want_weight = [3.0, 2.0, 2.0, 2.0, 2.0, 2.0].map(|w: f64| w / 13.0);
    for w in 0..6 {
        assert!((terms.rmse[w] - want_rmse[w]).abs() < 1e-15, "rmse {w}");
        assert!((terms.weight[w] - want_weight[w]).abs() < 1e-15, "weight {w}");
    }
    let want = 100.0 * (1.0 - (1.0 + 1.0 / 2f64.sqrt()) / 13.0);
    assert!((homophilic_index(&g, HomophilyK::Fixed(2)) - want).abs() < 1e-12);
}
