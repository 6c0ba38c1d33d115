//! The variance-optimal (VO) martingale measure induced by an exercise policy.
//!
//! At a continuation node the one-step VO weight of child `'` is
//! `P(') a' (1 - q dF) / sum(P a' (1 - q dF))`. Chaining these weights until
//! the policy stops gives a possibly signed measure over stopped outcomes,
//! under which the stopped futures price is a martingale and the discounted
//! realized cash flow has expectation equal to the hedge coefficient `b`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hedging::{compute_coefficients, HedgeCoefficients, NodeRole};
use crate::lattice::{MarketLattice, NodeId, PayoffSpec};
use crate::policy::ExercisePolicy;
use crate::scalar::Scalar;

/// Weights at or below this are not strictly positive.
pub const EQUIVALENCE_TOL: f64 = 1e-12;
/// Normalizers at or below this in magnitude make the measure degenerate.
pub const NORMALIZER_TOL: f64 = 1e-14;

/// One-step VO weights, per continuation node, keyed by child id.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedEdgeMeasure<T> {
    pub weights: BTreeMap<NodeId, BTreeMap<NodeId, T>>,
}

/// Where the option stops, reached from the measure's starting node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoppedOutcome {
    /// Node ids from the starting node to the stopping node, inclusive.
    pub path: Vec<NodeId>,
    pub stage: usize,
    pub exercised: bool,
}

impl StoppedOutcome {
    pub fn node(&self) -> NodeId {
        *self.path.last().expect("non-empty path")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedStoppedMeasure<T> {
    pub from: NodeId,
    /// Sorted by path.
    pub outcomes: Vec<(StoppedOutcome, T)>,
}

impl<T: Scalar> SignedStoppedMeasure<T> {
    pub fn total(&self) -> T {
        self.outcomes.iter().fold(T::zero(), |acc, (_, w)| acc + *w)
    }

    /// Weight aggregated by stopping node (on trees each node appears once).
    pub fn by_node(&self) -> BTreeMap<NodeId, T> {
        let mut out = BTreeMap::new();
        for (o, w) in &self.outcomes {
            let e = out.entry(o.node()).or_insert_with(T::zero);
            *e = *e + *w;
        }
        out
    }
}

fn continuation<T: Scalar>(coeffs: &HedgeCoefficients<T>, k: usize, id: NodeId) -> Result<crate::hedging::TradeRule<T>> {
    coeffs.at(k).and_then(|e| e.trade).ok_or(Error::NodeState { node: id, expected: "an alive continuation node" })
}

fn step_weights<T: Scalar>(coeffs: &HedgeCoefficients<T>, lattice: &MarketLattice<T>, k: usize) -> Result<Vec<T>> {
    let node = &lattice.nodes()[k];
    let rule = continuation(coeffs, k, node.id)?;
    let raw: Vec<T> = node
        .edges
        .iter()
        .zip(lattice.children_of(k))
        .map(|(e, &c)| {
            let next = coeffs.at(c).ok_or(Error::CoefficientMismatch(e.to))?;
            let df = lattice.nodes()[c].price - node.price;
            Ok(e.prob * next.a * (T::one() - rule.q * df))
        })
        .collect::<Result<_>>()?;
    let norm = raw.iter().fold(T::zero(), |acc, w| acc + *w);
    if norm.abs() <= T::noise_floor(NORMALIZER_TOL) {
        return Err(Error::DegenerateMeasure { node: node.id, value: norm.to_f64() });
    }
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

/// One-step VO weights at an alive continuation node, keyed by child id.
pub fn one_step_weights<T: Scalar>(
    coeffs: &HedgeCoefficients<T>,
    lattice: &MarketLattice<T>,
    node: NodeId,
) -> Result<BTreeMap<NodeId, T>> {
    let k = lattice.require(node)?;
    let weights = step_weights(coeffs, lattice, k)?;
    Ok(lattice.nodes()[k].edges.iter().map(|e| e.to).zip(weights).collect())
}

/// One-step weights at every alive continuation node.
pub fn signed_edge_measure<T: Scalar>(
    coeffs: &HedgeCoefficients<T>,
    lattice: &MarketLattice<T>,
) -> Result<SignedEdgeMeasure<T>> {
    let mut weights = BTreeMap::new();
    for (k, node) in lattice.nodes().iter().enumerate() {
        if coeffs.at(k).is_some_and(|e| e.role == NodeRole::Continue) {
            weights.insert(node.id, one_step_weights(coeffs, lattice, node.id)?);
        }
    }
    Ok(SignedEdgeMeasure { weights })
}

/// Products of one-step weights along every path prefix from `from` to the
/// stage where `coeffs.policy()` stops.
pub fn stopped_path_weights<T: Scalar>(
    coeffs: &HedgeCoefficients<T>,
    lattice: &MarketLattice<T>,
    from: NodeId,
) -> Result<SignedStoppedMeasure<T>> {
    let start = lattice.require(from)?;
    let entry = coeffs.at(start).ok_or(Error::NodeState { node: from, expected: "alive under the policy" })?;
    if entry.role == NodeRole::Exercise {
        return Err(Error::NodeState { node: from, expected: "unexercised" });
    }
    let mut outcomes = Vec::new();
    let mut stack = vec![(vec![start], T::one())];
    while let Some((prefix, weight)) = stack.pop() {
        let k = *prefix.last().unwrap();
        let role = coeffs.at(k).ok_or(Error::CoefficientMismatch(lattice.nodes()[k].id))?.role;
        if role != NodeRole::Continue {
            outcomes.push((
                StoppedOutcome {
                    path: prefix.iter().map(|&p| lattice.nodes()[p].id).collect(),
                    stage: lattice.nodes()[k].stage,
                    exercised: role == NodeRole::Exercise,
                },
                weight,
            ));
            continue;
        }
        let step = step_weights(coeffs, lattice, k)?;
        for (&c, w) in lattice.children_of(k).iter().zip(step) {
            let mut next = prefix.clone();
            next.push(c);
            stack.push((next, weight * w));
        }
    }
    outcomes.sort_by(|x, y| x.0.cmp(&y.0));
    Ok(SignedStoppedMeasure { from, outcomes })
}

/// `E^VO[D_{i,iota} C_iota]` from `from`, or `C(from)` if the policy exercises there.
pub fn vo_expected_value_with<T: Scalar>(
    coeffs: &HedgeCoefficients<T>,
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    from: NodeId,
) -> Result<T> {
    let k = lattice.require(from)?;
    let node = &lattice.nodes()[k];
    if coeffs.policy().exercises_at(from) {
        return payoff.cash_flow(node);
    }
    let measure = stopped_path_weights(coeffs, lattice, from)?;
    let mut total = T::zero();
    for (outcome, weight) in &measure.outcomes {
        if !outcome.exercised {
            continue;
        }
        let stop = lattice.node(outcome.node()).ok_or(Error::UnknownNode(outcome.node()))?;
        let discount = lattice.compound_discount(node.stage, outcome.stage)?;
        total = total + *weight * discount * payoff.cash_flow(stop)?;
    }
    Ok(total)
}

/// Value of `policy` at `from` under its own VO measure.
pub fn vo_expected_value<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    from: NodeId,
) -> Result<T> {
    let coeffs = compute_coefficients(lattice, payoff, policy)?;
    vo_expected_value_with(&coeffs, lattice, payoff, from)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceVerdict<T> {
    pub equivalent: bool,
    /// Outcomes whose weight is not strictly positive.
    pub offending: Vec<(StoppedOutcome, T)>,
}

pub fn is_equivalent_measure<T: Scalar>(measure: &SignedStoppedMeasure<T>) -> EquivalenceVerdict<T> {
    let floor = T::noise_floor(EQUIVALENCE_TOL);
    let offending: Vec<_> = measure.outcomes.iter().filter(|(_, w)| *w <= floor).cloned().collect();
    EquivalenceVerdict { equivalent: offending.is_empty(), offending }
}

/// `E^VO[F_{iota ^ j}] - F_i` for the measure's starting node at stage `i < j`.
pub fn check_stopped_martingale<T: Scalar>(
    measure: &SignedStoppedMeasure<T>,
    lattice: &MarketLattice<T>,
    horizon: usize,
) -> Result<T> {
    let from = lattice.node(measure.from).ok_or(Error::UnknownNode(measure.from))?;
    if horizon <= from.stage || horizon >= lattice.stage_count() {
        return Err(Error::StageIndex { i: from.stage, j: horizon, stages: lattice.stage_count() });
    }
    let mut expectation = T::zero();
    for (outcome, weight) in &measure.outcomes {
        let offset = outcome.stage.min(horizon) - from.stage;
        let id = outcome.path[offset];
        let price = lattice.node(id).ok_or(Error::UnknownNode(id))?.price;
        expectation = expectation + *weight * price;
    }
    Ok(expectation - from.price)
}
