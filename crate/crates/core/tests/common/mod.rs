//! Random lattice generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use qhedge::{alive_mask, canonicalize, Edge, ExercisePolicy, MarketLattice, Node, NodeId, PayoffSpec, RNMeasureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random tree with `stages` stages and `min..=max` children per node.
/// Child prices straddle the parent price so the market is arbitrage free.
pub fn random_tree(rng: &mut ChaCha8Rng, stages: usize, min_children: usize, max_children: usize) -> MarketLattice<f64> {
    let mut nodes = vec![Node { id: 0, stage: 0, price: rng.random_range(5.0..15.0), edges: vec![] }];
    let mut frontier = vec![0usize];
    for stage in 1..stages {
        let mut next = Vec::new();
        for &k in &frontier {
            let price = nodes[k].price;
            let n = rng.random_range(min_children..=max_children);
            let mut moves: Vec<f64> = (0..n).map(|_| rng.random_range(-0.4..0.5)).collect();
            // force at least one strict down and one strict up move
            moves[0] = -rng.random_range(0.05..0.4);
            moves[1] = rng.random_range(0.05..0.5);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (j, m) in moves.iter().enumerate() {
                let id = nodes.len() as NodeId;
                // the last edge absorbs rounding so probabilities sum to one
                let prob = if j + 1 == n {
                    1.0 - raw[..n - 1].iter().map(|r| r / total).sum::<f64>()
                } else {
                    raw[j] / total
                };
                nodes[k].edges.push(Edge { to: id, prob });
                nodes.push(Node { id, stage, price: price * (1.0 + m), edges: vec![] });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    let discounts = (1..stages).map(|_| rng.random_range(0.9..=1.0)).collect();
    MarketLattice::new(stages, discounts, nodes).expect("generated lattice is valid")
}

/// A random payoff table with strictly positive cash flows.
pub fn random_payoff(rng: &mut ChaCha8Rng, lattice: &MarketLattice<f64>) -> PayoffSpec<f64> {
    PayoffSpec::Table(lattice.nodes().iter().map(|n| (n.id, rng.random_range(0.1..10.0))).collect())
}

/// A random canonical policy exercising each node with probability `rate`.
pub fn random_policy(rng: &mut ChaCha8Rng, lattice: &MarketLattice<f64>, rate: f64) -> ExercisePolicy {
    let mask: Vec<bool> = (0..lattice.len()).map(|k| k > 0 && rng.random_bool(rate)).collect();
    canonicalize(&ExercisePolicy::from_mask(lattice, &mask), lattice).unwrap()
}

pub fn alive_count(lattice: &MarketLattice<f64>, policy: &ExercisePolicy) -> usize {
    alive_mask(lattice, &policy.mask(lattice).unwrap()).into_iter().filter(|x| *x).count()
}

/// The unique risk-neutral measure of a lattice whose nodes all have two children.
pub fn binomial_rn_measure(lattice: &MarketLattice<f64>) -> RNMeasureSpec<f64> {
    let mut edges = BTreeMap::new();
    for node in lattice.nodes() {
        if let [down, up] = node.edges.as_slice() {
            let (d, u) = (lattice.node(down.to).unwrap().price, lattice.node(up.to).unwrap().price);
            let q = (node.price - d) / (u - d);
            edges.insert(node.id, BTreeMap::from([(down.to, 1.0 - q), (up.to, q)]));
        }
    }
    RNMeasureSpec { edges }
}

/// Relative closeness with the scale floored at one.
pub fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * y.abs().max(1.0)
}

/// Strict relative closeness.
pub fn strict_rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * y.abs()
}
