//! No-arbitrage value intervals of an exercise policy.
//!
//! The supremum (infimum) over equivalent martingale measures of the
//! discounted realized cash flow is computed over the closure of the set of
//! martingale measures by backward induction. At each continuation node the
//! conditional distribution solves a small linear program over
//! `{m >= 0, sum m = 1, sum m F' = F}`; the vertices of that polytope put mass
//! on one child priced exactly at `F` or on a pair of children straddling
//! `F`, so the optimum is found by enumerating them.
//!
//! An end of the interval is closed only when a strictly positive
//! distribution attains it at every node, which happens exactly when the
//! local objective is constant on the whole polytope.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{MarketLattice, NodeId, PayoffSpec};
use crate::optimize::RNMeasureSpec;
use crate::policy::{alive_mask, ExercisePolicy};
use crate::scalar::Scalar;

/// Relative tolerance for membership tests and flatness of a node objective.
pub const BOUNDS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueInterval<T> {
    pub lo: T,
    pub hi: T,
    pub open_lo: bool,
    pub open_hi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundEnd {
    Min,
    Max,
}

/// Optimizing conditional distributions for one end of the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessMeasure<T> {
    pub end: BoundEnd,
    pub measure: RNMeasureSpec<T>,
    /// True if some distribution has a zero component (not equivalent).
    pub boundary: bool,
}

/// Vertex of the per-node feasible polytope: `(position in children, mass)`.
type Vertex<T> = Vec<(usize, T)>;

fn vertices<T: Scalar>(price: T, child_prices: &[T], node: NodeId) -> Result<Vec<Vertex<T>>> {
    let below = child_prices.iter().any(|f| *f < price);
    let above = child_prices.iter().any(|f| *f > price);
    let flat = child_prices.iter().all(|f| *f == price);
    if !(below && above) && !flat {
        return Err(Error::Arbitrage(node));
    }
    let mut out = Vec::new();
    for (j, fj) in child_prices.iter().enumerate() {
        if *fj == price {
            out.push(vec![(j, T::one())]);
        }
    }
    for (j, fj) in child_prices.iter().enumerate() {
        for (k, fk) in child_prices.iter().enumerate() {
            if *fj < price && price < *fk {
                let span = *fk - *fj;
                let (lo, hi) = (j.min(k), j.max(k));
                let (m_lo, m_hi) =
                    if lo == j { ((*fk - price) / span, (price - *fj) / span) } else { ((price - *fj) / span, (*fk - price) / span) };
                out.push(vec![(lo, m_lo), (hi, m_hi)]);
            }
        }
    }
    Ok(out)
}

fn objective<T: Scalar>(vertex: &Vertex<T>, child_values: &[T]) -> T {
    vertex.iter().fold(T::zero(), |acc, (j, m)| acc + *m * child_values[*j])
}

fn flat_tol<T: Scalar>(x: T) -> T {
    T::noise_floor(BOUNDS_TOL) * x.abs().max_of(T::one())
}

struct NodeSolution<T> {
    value: T,
    /// Full distribution over children.
    distribution: Vec<T>,
    attained_inside: bool,
}

fn solve_node<T: Scalar>(verts: &[Vertex<T>], child_values: &[T], discount: T, end: BoundEnd) -> NodeSolution<T> {
    let values: Vec<T> = verts.iter().map(|v| objective(v, child_values)).collect();
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        let better = match end {
            BoundEnd::Max => *v > values[best],
            BoundEnd::Min => *v < values[best],
        };
        if better {
            best = k;
        }
    }
    let hi = values.iter().fold(values[0], |m, v| m.max_of(*v));
    let lo = values.iter().fold(values[0], |m, v| m.min_of(*v));
    let attained_inside = hi - lo <= flat_tol(hi);
    let mut distribution = vec![T::zero(); child_values.len()];
    if attained_inside {
        // the centroid of all vertices is strictly positive on every child
        let share = T::one() / T::from_f64(verts.len() as f64).expect("vertex count is representable");
        for vertex in verts {
            for (j, m) in vertex {
                distribution[*j] = distribution[*j] + *m * share;
            }
        }
    } else {
        for (j, m) in &verts[best] {
            distribution[*j] = *m;
        }
    }
    NodeSolution { value: discount * values[best], distribution, attained_inside }
}

struct Sweep<T> {
    value: T,
    open: bool,
    distributions: BTreeMap<NodeId, BTreeMap<NodeId, T>>,
}

fn sweep<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    end: BoundEnd,
) -> Result<Sweep<T>> {
    let cash = payoff.resolve(lattice)?;
    let exercise = policy.mask(lattice)?;
    let alive = alive_mask(lattice, &exercise);
    let mut values = vec![T::zero(); lattice.len()];
    let mut open = false;
    let mut distributions = BTreeMap::new();
    for k in lattice.backward_order() {
        if !alive[k] {
            continue;
        }
        let node = &lattice.nodes()[k];
        if exercise[k] {
            values[k] = cash[k];
            continue;
        }
        if lattice.is_terminal(node) {
            continue;
        }
        let kids = lattice.children_of(k);
        let prices: Vec<T> = kids.iter().map(|&c| lattice.nodes()[c].price).collect();
        let child_values: Vec<T> = kids.iter().map(|&c| values[c]).collect();
        let verts = vertices(node.price, &prices, node.id)?;
        let solution = solve_node(&verts, &child_values, lattice.discount(node.stage + 1), end);
        open |= !solution.attained_inside;
        values[k] = solution.value;
        distributions.insert(node.id, node.edges.iter().map(|e| e.to).zip(solution.distribution).collect());
    }
    Ok(Sweep { value: values[0], open, distributions })
}

/// Interval of values of `policy` over all equivalent martingale measures.
pub fn value_bounds<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
) -> Result<ValueInterval<T>> {
    let lo = sweep(lattice, payoff, policy, BoundEnd::Min)?;
    let hi = sweep(lattice, payoff, policy, BoundEnd::Max)?;
    Ok(ValueInterval { lo: lo.value, hi: hi.value, open_lo: lo.open, open_hi: hi.open })
}

/// Membership with open-endpoint semantics and a relative tolerance.
pub fn contains<T: Scalar>(interval: &ValueInterval<T>, x: T) -> bool {
    let eps = flat_tol(interval.hi);
    let above_lo = if interval.open_lo { x > interval.lo + eps } else { x >= interval.lo - eps };
    let below_hi = if interval.open_hi { x < interval.hi - eps } else { x <= interval.hi + eps };
    above_lo && below_hi
}

/// Per-node distributions attaining the closed-form bound at `end`.
pub fn witness_measure<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    end: BoundEnd,
) -> Result<WitnessMeasure<T>> {
    let result = sweep(lattice, payoff, policy, end)?;
    let boundary = result.distributions.values().flat_map(|d| d.values()).any(|m| *m <= T::zero());
    Ok(WitnessMeasure { end, measure: RNMeasureSpec { edges: result.distributions }, boundary })
}
