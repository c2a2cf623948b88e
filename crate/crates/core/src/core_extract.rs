//! Influencer core extraction by bucketed greedy maximum coverage.
//!
//! A node covers itself and its followers (in-neighbors). Only engaged nodes
//! (out-degree at least `tau`) count towards coverage.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorePartition {
    /// Core members in pick order.
    pub core: Vec<usize>,
    /// Covered engaged non-core nodes, ascending. Row order of every score
    /// matrix derived from this partition.
    pub periphery: Vec<usize>,
    /// For each periphery member (aligned with `periphery`), the core members
    /// it follows, ascending.
    pub bipartite: Vec<Vec<usize>>,
    /// Engaged nodes left uncovered after the budget ran out.
    pub uncovered: Vec<usize>,
    pub budget: usize,
    pub engaged_count: usize,
    pub covered_engaged: usize,
    pub coverage_fraction: f64,
    pub core_fraction: f64,
    pub bipartite_edge_fraction: f64,
}

impl CorePartition {
    pub fn periphery_len(&self) -> usize {
        self.periphery.len()
    }

    pub fn bipartite_edges(&self) -> usize {
        self.bipartite.iter().map(Vec::len).sum()
    }

    pub fn is_core(&self, n: usize) -> Vec<bool> {
        let mut flags = vec![false; n];
        for &c in &self.core {
            flags[c] = true;
        }
        flags
    }

    /// Writes `u<TAB>c` rows, using original node names.
    pub fn write_bipartite_tsv(&self, g: &LabeledGraph, w: &mut impl Write) -> std::io::Result<()> {
        for (&u, follows) in self.periphery.iter().zip(&self.bipartite) {
            for &c in follows {
                writeln!(w, "{}\t{}", g.name(u), g.name(c))?;
            }
        }
        Ok(())
    }
}

/// `K = ceil(N^p)`, at least 1.
pub fn budget_for_exponent(n: usize, p: f64) -> usize {
    ((n as f64).powf(p).ceil() as usize).max(1)
}

/// Cumulative bucket ends `min(N, ceil(gamma^r K))`, r = 1, 2, ...
pub fn bucket_schedule(n: usize, budget: usize, gamma: f64) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut r = 1i32;
    loop {
        let end = ((gamma.powi(r) * budget as f64).ceil() as usize).min(n);
        if ends.last() != Some(&end) {
            ends.push(end);
        }
        if end >= n || end == 0 || r > 4096 {
            break;
        }
        r += 1;
    }
    if ends.last() != Some(&n) {
        ends.push(n);
    }
    ends
}

/// Nodes sorted by in-degree descending, ties by lower id.
pub fn in_degree_order(g: &LabeledGraph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.sort_by_key(|&v| (Reverse(g.in_degree(v)), v));
    order
}

/// Bucketed greedy maximum coverage.
pub fn bgmc(g: &LabeledGraph, budget: usize, gamma: f64, tau: usize) -> Result<CorePartition> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {gamma}")));
    }
    check_budget(budget)?;
    let order = in_degree_order(g);
    let schedule = bucket_schedule(g.node_count(), budget, gamma);
    run_greedy(g, budget, tau, &order, &schedule)
}

/// Plain greedy maximum coverage over all nodes.
pub fn greedy_mc(g: &LabeledGraph, budget: usize, tau: usize) -> Result<CorePartition> {
    check_budget(budget)?;
    let order = in_degree_order(g);
    run_greedy(g, budget, tau, &order, &[g.node_count()])
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidParameter("core budget must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    gain: usize,
    in_degree: usize,
    id: Reverse<usize>,
}

fn run_greedy(
    g: &LabeledGraph,
    budget: usize,
    tau: usize,
    order: &[usize],
    schedule: &[usize],
) -> Result<CorePartition> {
    let n = g.node_count();
    let engaged: Vec<bool> = (0..n).map(|v| g.out_degree(v) >= tau).collect();
    if budget >= n {
        log::warn!("core budget {budget} >= {n} nodes; every node joins the core");
        return Ok(partition_from_core(g, (0..n).collect(), &engaged, budget));
    }

    let mut uncovered = engaged.clone();
    let mut remaining = engaged.iter().filter(|&&e| e).count();
    let gain = |v: usize, uncovered: &[bool]| -> usize {
        usize::from(uncovered[v]) + g.in_neighbors(v).iter().filter(|&&f| uncovered[f]).count()
    };

    let mut core = Vec::with_capacity(budget);
    let mut start = 0;
    'buckets: for &end in schedule {
        if core.len() >= budget || remaining == 0 {
            break;
        }
        let mut heap: BinaryHeap<Key> = order[start..end]
            .iter()
            .map(|&v| Key {
                gain: gain(v, &uncovered),
                in_degree: g.in_degree(v),
                id: Reverse(v),
            })
            .filter(|k| k.gain > 0)
            .collect();
        start = end;
        while let Some(top) = heap.pop() {
            let v = top.id.0;
            let fresh = Key {
                gain: gain(v, &uncovered),
                ..top
            };
            if fresh.gain == 0 {
                continue;
            }
            // stale gains only overestimate, so a fresh key that still beats
            // the next stored key is the exact greedy choice
            if heap.peek().is_none_or(|next| fresh.cmp(next) != Ordering::Less) {
                core.push(v);
                for x in std::iter::once(v).chain(g.in_neighbors(v).iter().copied()) {
                    if uncovered[x] {
                        uncovered[x] = false;
                        remaining -= 1;
                    }
                }
                if core.len() >= budget || remaining == 0 {
                    break 'buckets;
                }
            } else {
                heap.push(fresh);
            }
        }
    }
    Ok(partition_from_core(g, core, &engaged, budget))
}

/// Builds the periphery from a fixed core. Engaged nodes following no core
/// member are excluded and listed in `uncovered`.
pub fn partition_from_core(
    g: &LabeledGraph,
    core: Vec<usize>,
    engaged: &[bool],
    budget: usize,
) -> CorePartition {
    let n = g.node_count();
    let mut is_core = vec![false; n];
    for &c in &core {
        is_core[c] = true;
    }
    let mut periphery = Vec::new();
    let mut bipartite = Vec::new();
    let mut uncovered = Vec::new();
    let mut covered_engaged = 0;
    for v in 0..n {
        if !engaged[v] {
            continue;
        }
        if is_core[v] {
            covered_engaged += 1;
            continue;
        }
        let follows: Vec<usize> = g
            .out_neighbors(v)
            .iter()
            .copied()
            .filter(|&c| is_core[c])
            .collect();
        if follows.is_empty() {
            uncovered.push(v);
        } else {
            covered_engaged += 1;
            periphery.push(v);
            bipartite.push(follows);
        }
    }
    let engaged_count = engaged.iter().filter(|&&e| e).count();
    let bip_edges: usize = bipartite.iter().map(Vec::len).sum();
    if !uncovered.is_empty() {
        log::info!("{} engaged nodes left uncovered and excluded", uncovered.len());
    }
    CorePartition {
        coverage_fraction: ratio(covered_engaged, engaged_count),
        core_fraction: ratio(core.len(), n),
        bipartite_edge_fraction: ratio(bip_edges, g.edge_count()),
        core,
        periphery,
        bipartite,
        uncovered,
        budget,
        engaged_count,
        covered_engaged,
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub exponent: f64,
    pub budget: usize,
    pub coverage_fraction: f64,
    pub core_fraction: f64,
}

/// Coverage of `bgmc` at `K = ceil(N^p)` for each exponent.
pub fn coverage_curve(
    g: &LabeledGraph,
    exponents: &[f64],
    gamma: f64,
    tau: usize,
) -> Result<Vec<CoveragePoint>> {
    exponents
        .iter()
        .map(|&p| {
            let budget = budget_for_exponent(g.node_count(), p);
            let part = bgmc(g, budget, gamma, tau)?;
            Ok(CoveragePoint {
                exponent: p,
                budget,
                coverage_fraction: part.coverage_fraction,
                core_fraction: part.core_fraction,
            })
        })
        .collect()
}

pub fn write_coverage_tsv(points: &[CoveragePoint], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "p\tK\tcoverage\tcore_fraction")?;
    for pt in points {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}",
            pt.exponent, pt.budget, pt.coverage_fraction, pt.core_fraction
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn graph(n: usize, edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::from_edges(n, edges, Array2::zeros((n, 1)), true).unwrap().0
    }

    fn star(leaves: usize) -> LabeledGraph {
        let edges: Vec<_> = (1..=leaves).map(|l| (l, 0)).collect();
        graph(leaves + 1, &edges)
    }

    #[test]
    fn star_hub_is_the_core() {
        let g = star(6);
        for gamma in [1.5, 2.0, 4.0] {
            let p = bgmc(&g, 1, gamma, 1).unwrap();
            assert_eq!(p.core, vec![0]);
            assert_eq!(p.coverage_fraction, 1.0);
            assert_eq!(p.periphery, vec![1, 2, 3, 4, 5, 6]);
            assert!(p.bipartite.iter().all(|b| b == &vec![0]));
        }
    }

    #[test]
    fn two_disjoint_stars() {
        // hub 0 with leaves 1..=4, hub 5 with leaves 6..=8
        let mut edges: Vec<_> = (1..=4).map(|l| (l, 0)).collect();
        edges.extend((6..=8).map(|l| (l, 5)));
        let g = graph(9, &edges);
        let p = greedy_mc(&g, 2, 1).unwrap();
        assert_eq!(p.core, vec![0, 5]);
        assert_eq!(p.coverage_fraction, 1.0);
    }

    #[test]
    fn saturated_budget() {
        let g = star(4);
        let p = greedy_mc(&g, 5, 1).unwrap();
        assert_eq!(p.core.len(), 5);
        assert!(p.periphery.is_empty());
        assert_eq!(p.coverage_fraction, 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = star(3);
        assert!(bgmc(&g, 0, 2.0, 1).is_err());
        assert!(bgmc(&g, 1, 1.0, 1).is_err());
    }

    #[test]
    fn schedule_matches_cumulative_sizes() {
        assert_eq!(bucket_schedule(100, 3, 2.0), vec![6, 12, 24, 48, 96, 100]);
        assert_eq!(bucket_schedule(10, 4, 3.0), vec![10]);
        assert_eq!(bucket_schedule(7, 1, 1.5), vec![2, 3, 4, 6, 7]);
    }

    #[test]
    fn zero_gain_candidates_are_skipped() {
        // node 0 has the highest in-degree but none of its followers is engaged
        let edges = vec![(1, 0), (2, 0), (4, 0), (5, 3), (6, 3), (5, 7), (6, 7), (5, 8), (6, 8)];
        let g = graph(9, &edges);
        let p = bgmc(&g, 1, 2.0, 2).unwrap();
        // first bucket is {0, 3} by in-degree order (3 before 7, 8 by id)
        assert_eq!(p.core, vec![3]);
        assert_eq!(p.coverage_fraction, 1.0);
    }

    #[test]
    fn uncovered_engaged_nodes_are_excluded() {
        // 1 -> 0, 2 -> 0, 3 -> 4 ; tau=1 engaged = {1,2,3}
        let g = graph(5, &[(1, 0), (2, 0), (3, 4)]);
        let p = bgmc(&g, 1, 2.0, 1).unwrap();
        assert_eq!(p.core, vec![0]);
        assert_eq!(p.periphery, vec![1, 2]);
        assert_eq!(p.uncovered, vec![3]);
        assert!((p.coverage_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.bipartite_edge_fraction - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_curve_boundaries() {
        let g = star(5);
        let pts = coverage_curve(&g, &[0.0, 1.0], 2.0, 1).unwrap();
        assert_eq!(pts[0].budget, 1);
        assert_eq!(pts[0].coverage_fraction, 1.0);
        assert_eq!(pts[1].budget, 6);
        assert_eq!(pts[1].coverage_fraction, 1.0);
        let mut buf = Vec::new();
        write_coverage_tsv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
    }
}
