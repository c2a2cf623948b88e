//! Synthetic inputs: homophilic two-block graphs and random point clouds.

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{LabeledGraph, LoadReport};
use crate::rng::{self, Domain};

/// Two communities, each with its own influencers and its own label profile.
/// Ordinary users follow a handful of influencers, mostly from their own
/// block, and befriend a few users of their own block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBlockConfig {
    pub nodes: usize,
    pub dim: usize,
    pub influencers_per_block: usize,
    pub follows_per_user: usize,
    /// Probability that a follow goes to the other block's influencers.
    pub cross_follow: f64,
    pub friends_per_user: usize,
    /// Label probability on a block's own labels, and on the rest.
    pub profile_high: f64,
    pub profile_low: f64,
    pub seed: u64,
}

impl Default for TwoBlockConfig {
    /// Roughly the size of the dblp-dyn co-authorship graph (1.23K nodes,
    /// 43 labels).
    fn default() -> Self {
        TwoBlockConfig {
            nodes: 1230,
            dim: 43,
            influencers_per_block: 40,
            follows_per_user: 4,
            cross_follow: 0.2,
            friends_per_user: 1,
            profile_high: 0.6,
            profile_low: 0.05,
            seed: 17,
        }
    }
}

/// Node ids: influencers of block 0, influencers of block 1, then users
/// alternating between the blocks. Block `b` favors the labels `i` with
/// `i % 2 == b`.
pub fn two_block_graph(cfg: &TwoBlockConfig) -> Result<(LabeledGraph, LoadReport)> {
    let m = cfg.influencers_per_block;
    let n = cfg.nodes.max(2 * m);
    let block = |v: usize| if v < 2 * m { v / m.max(1) } else { (v - 2 * m) % 2 };
    let mut r = rng::stream(cfg.seed, Domain::Instance, 0xb10c, 0, 0);

    let mut labels = Array2::<u8>::zeros((n, cfg.dim));
    for v in 0..n {
        for i in 0..cfg.dim {
            let p = if i % 2 == block(v) { cfg.profile_high } else { cfg.profile_low };
            labels[[v, i]] = u8::from(rng::unit_f64(&mut r) < p);
        }
    }

    let influencers: [Vec<usize>; 2] = [(0..m).collect(), (m..2 * m).collect()];
    let users: [Vec<usize>; 2] = [
        (2 * m..n).filter(|&v| block(v) == 0).collect(),
        (2 * m..n).filter(|&v| block(v) == 1).collect(),
    ];
    let mut edges = Vec::new();
    // influencers follow a few peers of their own block
    for block in &influencers {
        for &c in block {
            for &p in block.choose_multiple(&mut r, 3.min(m)) {
                if p != c {
                    edges.push((c, p));
                }
            }
        }
    }
    for u in 2 * m..n {
        let own = block(u);
        let mut followed = Vec::with_capacity(cfg.follows_per_user);
        while followed.len() < cfg.follows_per_user.min(2 * m) {
            let b = if rng::unit_f64(&mut r) < cfg.cross_follow { 1 - own } else { own };
            let c = influencers[b][r.random_range(0..m)];
            if !followed.contains(&c) {
                followed.push(c);
            }
        }
        edges.extend(followed.into_iter().map(|c| (u, c)));
        for &f in users[own].choose_multiple(&mut r, cfg.friends_per_user + 1) {
            if f != u {
                edges.push((u, f));
            }
        }
    }
    LabeledGraph::from_edges(n, &edges, labels, true)
}

/// `n x d` points uniform on the unit cube.
pub fn uniform_points(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, Domain::Instance, 0x9017, 0, 0);
    Array2::from_shape_simple_fn((n, d), || rng::unit_f64(&mut r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_block_shape_and_determinism() {
        let cfg = TwoBlockConfig {
            nodes: 200,
            dim: 6,
            influencers_per_block: 10,
            ..TwoBlockConfig::default()
        };
        let (g, _) = two_block_graph(&cfg).unwrap();
        assert_eq!(g.node_count(), 200);
        assert_eq!(g.dim(), 6);
        for u in 20..200 {
            assert!(g.out_degree(u) >= cfg.follows_per_user);
        }
        let (h, _) = two_block_graph(&cfg).unwrap();
        assert_eq!(g.labels(), h.labels());
        assert_eq!(g.edge_count(), h.edge_count());
    }

    #[test]
    fn points_in_unit_cube() {
        let p = uniform_points(50, 3, 1);
        assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(p, uniform_points(50, 3, 1));
    }
}
