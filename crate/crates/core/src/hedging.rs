//! Quadratic hedging of a fixed exercise policy by backward induction.
//!
//! At every node where the option is alive, the minimal expected squared
//! replication error as a function of the current portfolio value `V` is the
//! parabola `J(V) = a (b - V)^2 + c`. Exercise and expiry nodes are the
//! boundary: `a = D_{i,I-1}^{-2}`, `b` = realized cash flow, `c = 0`. At a
//! continuation node with children `'` and `dF = F' - F`:
//!
//! ```text
//! q = E[a' dF] / E[a' dF^2]
//! a = E[a' (1 - q dF)^2] / D^2
//! p = E[a' b' dF] / E[a' dF^2]
//! b = E[a' (b' - p dF)(1 - q dF)] / (a D)
//! c = E[c'] + E[a' (b' - p dF)^2] - a b^2
//! ```
//!
//! and the optimal futures position is `p - q V / D`.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::lattice::{MarketLattice, NodeId, PayoffSpec};
use crate::policy::{alive_mask, ExercisePolicy};
use crate::scalar::Scalar;

/// `E[a' dF^2]` must exceed this multiple of the squared node price.
pub const SINGULARITY_TOL: f64 = 1e-12;
/// Smallest admissible quadratic weight `a` at an alive node.
pub const WEIGHT_TOL: f64 = 1e-300;

/// Position of a node relative to a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Alive, not exercised, not terminal: the hedge trades.
    Continue,
    Exercise,
    /// Last stage reached unexercised; the option pays nothing.
    Expire,
}

/// Linear futures trade rule `theta(V) = p - q V / D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeRule<T> {
    pub p: T,
    pub q: T,
    /// One-period discount factor to the next stage.
    pub discount: T,
}

impl<T: Scalar> TradeRule<T> {
    pub fn position(&self, value: T) -> T {
        self.p - self.q * value / self.discount
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoefficients<T> {
    pub role: NodeRole,
    pub a: T,
    pub b: T,
    pub c: T,
    /// Present only at continuation nodes.
    pub trade: Option<TradeRule<T>>,
}

impl<T: Scalar> NodeCoefficients<T> {
    /// `a (b - V)^2 + c`.
    pub fn value_function(&self, value: T) -> T {
        let gap = self.b - value;
        self.a * gap * gap + self.c
    }

    pub(crate) fn boundary(role: NodeRole, weight: T, cash_flow: T) -> Self {
        Self { role, a: weight, b: cash_flow, c: T::zero(), trade: None }
    }
}

/// Coefficients of every node that is alive under the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeCoefficients<T> {
    policy: ExercisePolicy,
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    entries: Vec<Option<NodeCoefficients<T>>>,
}

impl<T: Scalar> HedgeCoefficients<T> {
    pub fn policy(&self) -> &ExercisePolicy {
        &self.policy
    }

    /// Coefficients at `id`, `None` when the node is never reached alive.
    pub fn get(&self, id: NodeId) -> Option<&NodeCoefficients<T>> {
        self.index.get(&id).and_then(|&k| self.entries[k].as_ref())
    }

    pub(crate) fn at(&self, k: usize) -> Option<&NodeCoefficients<T>> {
        self.entries[k].as_ref()
    }

    pub fn root(&self) -> &NodeCoefficients<T> {
        self.entries[0].as_ref().expect("root is always alive")
    }

    /// `(id, coefficients)` over alive nodes in `(stage, id)` order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeCoefficients<T>)> {
        self.ids.iter().zip(&self.entries).filter_map(|(id, e)| e.as_ref().map(|e| (*id, e)))
    }

    pub fn to_map(&self) -> BTreeMap<NodeId, NodeCoefficients<T>> {
        self.iter().map(|(id, e)| (id, *e)).collect()
    }

    /// Whether this table was built for `policy` on `lattice`.
    pub fn matches(&self, lattice: &MarketLattice<T>, policy: &ExercisePolicy) -> bool {
        self.policy == *policy
            && self.ids.len() == lattice.len()
            && self.ids.iter().zip(lattice.nodes()).all(|(id, n)| *id == n.id)
    }
}

/// Boundary weight `D_{i,I-1}^{-2}` per stage.
pub(crate) fn terminal_weights<T: Scalar>(lattice: &MarketLattice<T>) -> Vec<T> {
    let last = lattice.last_stage();
    (0..lattice.stage_count())
        .map(|i| {
            let d = lattice.compound_discount(i, last).expect("stage in range");
            T::one() / (d * d)
        })
        .collect()
}

/// One backward step at continuation position `k` given its children.
pub(crate) fn continuation_step<T: Scalar>(
    lattice: &MarketLattice<T>,
    k: usize,
    child: impl Fn(usize) -> NodeCoefficients<T>,
) -> Result<NodeCoefficients<T>> {
    let node = &lattice.nodes()[k];
    let discount = lattice.discount(node.stage + 1);
    let kids: Vec<(T, T, NodeCoefficients<T>)> = node
        .edges
        .iter()
        .zip(lattice.children_of(k))
        .map(|(e, &c)| (e.prob, lattice.nodes()[c].price - node.price, child(c)))
        .collect();

    let (mut s1, mut s2) = (T::zero(), T::zero());
    for (prob, df, next) in &kids {
        s1 = s1 + *prob * next.a * *df;
        s2 = s2 + *prob * next.a * *df * *df;
    }
    if s2 <= T::noise_floor(SINGULARITY_TOL) * node.price * node.price || s2 <= T::zero() {
        return Err(Error::Singular { node: node.id, value: s2.to_f64() });
    }
    let q = s1 / s2;

    let (mut a_sum, mut pb) = (T::zero(), T::zero());
    for (prob, df, next) in &kids {
        let tilt = T::one() - q * *df;
        a_sum = a_sum + *prob * next.a * tilt * tilt;
        pb = pb + *prob * next.a * next.b * *df;
    }
    let a = a_sum / (discount * discount);
    if a <= T::noise_floor(WEIGHT_TOL) {
        return Err(Error::DegenerateWeight { node: node.id, value: a.to_f64() });
    }
    let p = pb / s2;

    let (mut b_sum, mut c_cont, mut c_res) = (T::zero(), T::zero(), T::zero());
    for (prob, df, next) in &kids {
        let residual = next.b - p * *df;
        b_sum = b_sum + *prob * next.a * residual * (T::one() - q * *df);
        c_cont = c_cont + *prob * next.c;
        c_res = c_res + *prob * next.a * residual * residual;
    }
    let b = b_sum / (a * discount);
    let c = c_cont + c_res - a * b * b;
    Ok(NodeCoefficients { role: NodeRole::Continue, a, b, c, trade: Some(TradeRule { p, q, discount }) })
}

/// Backward induction of `(a, b, c, p, q)` over the alive region of `policy`.
pub fn compute_coefficients<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
) -> Result<HedgeCoefficients<T>> {
    let cash = payoff.resolve(lattice)?;
    let exercise = policy.mask(lattice)?;
    let alive = alive_mask(lattice, &exercise);
    let weights = terminal_weights(lattice);
    let mut entries: Vec<Option<NodeCoefficients<T>>> = vec![None; lattice.len()];
    for k in lattice.backward_order() {
        if !alive[k] {
            continue;
        }
        let node = &lattice.nodes()[k];
        let entry = if exercise[k] {
            NodeCoefficients::boundary(NodeRole::Exercise, weights[node.stage], cash[k])
        } else if lattice.is_terminal(node) {
            NodeCoefficients::boundary(NodeRole::Expire, weights[node.stage], T::zero())
        } else {
            continuation_step(lattice, k, |c| entries[c].expect("children of alive nodes are alive"))?
        };
        entries[k] = Some(entry);
    }
    let ids: Vec<NodeId> = lattice.nodes().iter().map(|n| n.id).collect();
    let index = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    Ok(HedgeCoefficients { policy: policy.clone(), ids, index, entries })
}

/// The minimal production cost `b` at the root.
pub fn optimal_initial_capital<T: Scalar>(coeffs: &HedgeCoefficients<T>) -> T {
    coeffs.root().b
}

/// `a (b - V)^2 + c` at an alive node.
pub fn evaluate_value_function<T: Scalar>(coeffs: &HedgeCoefficients<T>, node: NodeId, value: T) -> Result<T> {
    coeffs
        .get(node)
        .map(|e| e.value_function(value))
        .ok_or(Error::NodeState { node, expected: "alive under the policy" })
}

/// Optimal futures position `p - q V / D_{i+1}` at a continuation node.
pub fn trade_decision<T: Scalar>(coeffs: &HedgeCoefficients<T>, node: NodeId, value: T) -> Result<T> {
    coeffs
        .get(node)
        .and_then(|e| e.trade)
        .map(|rule| rule.position(value))
        .ok_or(Error::NodeState { node, expected: "an alive continuation node" })
}

/// Expected squared replication error when the initial capital is pinned to `v0`.
pub fn anchored_objective<T: Scalar>(coeffs: &HedgeCoefficients<T>, v0: T) -> T {
    coeffs.root().value_function(v0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example_lattice, NODE_16, NODE_2_56, NODE_6_4, ROOT};
    use crate::lattice::{Edge, Node};
    use crate::Exact;
    use approx::assert_abs_diff_eq;

    fn rn_policy() -> ExercisePolicy {
        ExercisePolicy::from_nodes([NODE_6_4, NODE_16])
    }

    #[test]
    fn example_one_production_costs() {
        let lattice = example_lattice::<f64>();
        let call3 = PayoffSpec::call(3.0);
        let vo = compute_coefficients(&lattice, &call3, &ExercisePolicy::from_nodes([NODE_6_4])).unwrap();
        assert_abs_diff_eq!(optimal_initial_capital(&vo), 1.5286, epsilon = 5e-4);

        let rn = compute_coefficients(&lattice, &call3, &rn_policy()).unwrap();
        let root = rn.root();
        assert_abs_diff_eq!(root.b, 4787.0 / 10020.0, epsilon = 1e-12);
        let rule = root.trade.unwrap();
        assert_abs_diff_eq!(rule.q, 2275.0 / 28904.0, epsilon = 1e-12);
        assert_abs_diff_eq!(root.a, 0.0831995572, epsilon = 1e-9);
        assert_abs_diff_eq!(root.c, 0.0032604790, epsilon = 1e-9);
        assert_abs_diff_eq!(rule.p, 1.0156466233, epsilon = 1e-9);
    }

    #[test]
    fn example_two_production_costs() {
        let lattice = example_lattice::<f64>();
        let call7 = PayoffSpec::call(7.0);
        let never = compute_coefficients(&lattice, &call7, &ExercisePolicy::never()).unwrap();
        assert_eq!(optimal_initial_capital(&never), 0.0);
        let at16 = compute_coefficients(&lattice, &call7, &ExercisePolicy::from_nodes([NODE_16])).unwrap();
        assert_abs_diff_eq!(optimal_initial_capital(&at16), -243.0 / 334.0, epsilon = 1e-12);
    }

    #[test]
    fn value_function_and_trades() {
        let lattice = example_lattice::<f64>();
        let coeffs = compute_coefficients(&lattice, &PayoffSpec::call(3.0), &rn_policy()).unwrap();
        let root = *coeffs.root();
        assert_eq!(evaluate_value_function(&coeffs, ROOT, root.b).unwrap(), root.c);
        assert_abs_diff_eq!(evaluate_value_function(&coeffs, ROOT, 0.0).unwrap(), 0.0222499308, epsilon = 1e-9);
        assert_abs_diff_eq!(evaluate_value_function(&coeffs, NODE_6_4, 3.4).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trade_decision(&coeffs, ROOT, root.b).unwrap(), 490.0 / 501.0, epsilon = 1e-12);
        assert_eq!(trade_decision(&coeffs, ROOT, 0.0).unwrap(), root.trade.unwrap().p);
        assert!(trade_decision(&coeffs, NODE_6_4, 0.0).is_err());
        assert_abs_diff_eq!(anchored_objective(&coeffs, 83.0 / 140.0), 0.0043629496, epsilon = 1e-9);
        assert_eq!(anchored_objective(&coeffs, root.b), root.c);
    }

    #[test]
    fn dead_nodes_have_no_coefficients() {
        let lattice = example_lattice::<f64>();
        let coeffs = compute_coefficients(&lattice, &PayoffSpec::call(3.0), &ExercisePolicy::from_nodes([ROOT])).unwrap();
        assert!(coeffs.get(NODE_2_56).is_none());
        assert!(evaluate_value_function(&coeffs, NODE_2_56, 0.0).is_err());
        assert_abs_diff_eq!(coeffs.root().b, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn zero_payoff_trades_nothing() {
        let lattice = example_lattice::<f64>();
        let coeffs = compute_coefficients(&lattice, &PayoffSpec::call(100.0), &ExercisePolicy::never()).unwrap();
        assert_eq!(trade_decision(&coeffs, ROOT, 0.0).unwrap(), 0.0);
        assert_eq!(anchored_objective(&coeffs, 0.0), 0.0);
    }

    #[test]
    fn deterministic_step_is_singular() {
        let lattice = MarketLattice::new(
            2,
            vec![1.0],
            vec![
                Node { id: 0, stage: 0, price: 2.0, edges: vec![Edge { to: 1, prob: 1.0 }] },
                Node { id: 1, stage: 1, price: 2.0, edges: vec![] },
            ],
        )
        .unwrap();
        let err = compute_coefficients(&lattice, &PayoffSpec::call(1.0), &ExercisePolicy::never()).unwrap_err();
        assert!(matches!(err, Error::Singular { node: 0, .. }));
    }

    #[test]
    fn exact_arithmetic_matches_floats() {
        let exact = compute_coefficients(&example_lattice::<Exact>(), &PayoffSpec::call(Exact::from_integer(3)), &rn_policy())
            .unwrap();
        assert_eq!(exact.root().b, Exact::new(4787, 10020));
        assert_eq!(exact.root().trade.unwrap().q, Exact::new(2275, 28904));
        let float = compute_coefficients(&example_lattice::<f64>(), &PayoffSpec::call(3.0), &rn_policy()).unwrap();
        assert_abs_diff_eq!(exact.root().b.to_f64(), float.root().b, epsilon = 1e-14);
        assert_abs_diff_eq!(exact.root().c.to_f64(), float.root().c, epsilon = 1e-15);
        let single = compute_coefficients(&example_lattice::<f32>(), &PayoffSpec::call(3.0f32), &rn_policy()).unwrap();
        assert_abs_diff_eq!(single.root().b as f64, float.root().b, epsilon = 1e-4);
    }
}
