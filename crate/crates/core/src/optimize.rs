//! Exercise-policy optimization.
//!
//! Three regimes are provided:
//!
//! * [`optimize_vo_naive`] maximizes the minimal production cost `b_0` over
//!   every canonical policy. The objective is not decomposable because the
//!   VO measure moves with the policy, so the search is exhaustive.
//! * [`optimize_vo_time_consistent`] builds the policy backward: each node
//!   compares its cash flow with the VO value of continuing one more step
//!   while every descendant follows its already-fixed decision.
//! * [`optimize_risk_neutral`] is ordinary optimal stopping under a
//!   user-supplied equivalent martingale measure.
//!
//! Both backward optimizers exercise only on strict improvement.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hedging::{compute_coefficients, continuation_step, terminal_weights, NodeCoefficients, NodeRole};
use crate::lattice::{MarketLattice, NodeId, PayoffSpec, ValidationReport};
use crate::measure::EQUIVALENCE_TOL;
use crate::policy::{alive_mask, canonicalize, enumerate_policies, ExercisePolicy};
use crate::scalar::Scalar;

/// Relative tolerance used to detect ties between objective values.
pub const TIE_TOL: f64 = 1e-12;
pub const RN_SUM_TOL: f64 = 1e-10;
pub const RN_MARTINGALE_TOL: f64 = 1e-8;

/// Conditional transition probabilities of a risk-neutral measure:
/// `from -> (to -> probability)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RNMeasureSpec<T> {
    pub edges: BTreeMap<NodeId, BTreeMap<NodeId, T>>,
}

impl<T: Scalar> RNMeasureSpec<T> {
    pub fn prob(&self, from: NodeId, to: NodeId) -> Option<T> {
        self.edges.get(&from).and_then(|m| m.get(&to)).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub policies_evaluated: u64,
    pub ties: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult<T> {
    pub policy: ExercisePolicy,
    pub value: T,
    /// Optimal value at every node (time-consistent and risk-neutral only).
    pub per_node_values: Option<BTreeMap<NodeId, T>>,
    pub diagnostics: Diagnostics,
}

fn tie_tol<T: Scalar>(reference: T) -> T {
    T::noise_floor(TIE_TOL) * reference.abs().max_of(T::one())
}

/// Exhaustive maximization of `b_0` over canonical policies.
///
/// Ties within [`TIE_TOL`] go to the policy with fewer exercise nodes, then to
/// the earlier one in enumeration order.
pub fn optimize_vo_naive<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    cap: u64,
) -> Result<OptimizationResult<T>> {
    payoff.validate(lattice).into_result()?;
    let candidates: Vec<ExercisePolicy> = enumerate_policies(lattice, cap)?.collect();
    let values: Vec<Result<T>> = candidates
        .par_iter()
        .map(|policy| compute_coefficients(lattice, payoff, policy).map(|c| c.root().b))
        .collect();

    let mut best: Option<(usize, T)> = None;
    let mut ties = 0;
    for (k, value) in values.into_iter().enumerate() {
        let value = value?;
        let Some((best_k, best_value)) = best else {
            best = Some((k, value));
            continue;
        };
        let tol = tie_tol(best_value);
        if value > best_value + tol {
            best = Some((k, value));
        } else if (value - best_value).abs() <= tol {
            ties += 1;
            if candidates[k].exercise_count() < candidates[best_k].exercise_count() {
                best = Some((k, value));
            }
        }
    }
    let (k, value) = best.expect("at least one policy");
    Ok(OptimizationResult {
        policy: candidates[k].clone(),
        value,
        per_node_values: None,
        diagnostics: Diagnostics { policies_evaluated: candidates.len() as u64, ties },
    })
}

/// Backward construction of the time-consistent VO policy.
pub fn optimize_vo_time_consistent<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
) -> Result<OptimizationResult<T>> {
    let cash = payoff.resolve(lattice)?;
    let weights = terminal_weights(lattice);
    let mut entries: Vec<Option<NodeCoefficients<T>>> = vec![None; lattice.len()];
    let mut exercise = vec![false; lattice.len()];
    let mut ties = 0;
    for k in lattice.backward_order() {
        let node = &lattice.nodes()[k];
        let weight = weights[node.stage];
        let continuing = if lattice.is_terminal(node) {
            NodeCoefficients::boundary(NodeRole::Expire, weight, T::zero())
        } else {
            continuation_step(lattice, k, |c| entries[c].expect("later stages are done"))?
        };
        let tol = tie_tol(continuing.b);
        if (cash[k] - continuing.b).abs() <= tol {
            ties += 1;
        }
        entries[k] = Some(if cash[k] > continuing.b + tol {
            exercise[k] = true;
            NodeCoefficients::boundary(NodeRole::Exercise, weight, cash[k])
        } else {
            continuing
        });
    }
    let per_node_values = lattice.nodes().iter().zip(&entries).map(|(n, e)| (n.id, e.unwrap().b)).collect();
    let policy = canonicalize(&ExercisePolicy::from_mask(lattice, &exercise), lattice)?;
    Ok(OptimizationResult {
        policy,
        value: entries[0].unwrap().b,
        per_node_values: Some(per_node_values),
        diagnostics: Diagnostics { policies_evaluated: 0, ties },
    })
}

/// Positivity, normalization and martingale checks for every continuation node.
pub fn validate_rn_measure<T: Scalar>(lattice: &MarketLattice<T>, rn: &RNMeasureSpec<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let positive = T::noise_floor(EQUIVALENCE_TOL);
    for node in lattice.nodes() {
        let given = rn.edges.get(&node.id);
        if node.edges.is_empty() {
            if given.is_some_and(|m| !m.is_empty()) {
                report.push("terminal node has risk-neutral edges", Some(node.id), None);
            }
            continue;
        }
        let Some(given) = given else {
            report.push("missing risk-neutral distribution", Some(node.id), None);
            continue;
        };
        for to in given.keys() {
            if !node.edges.iter().any(|e| e.to == *to) {
                report.push("edge not in lattice", Some(node.id), Some((node.id, *to)));
            }
        }
        let (mut total, mut mean) = (T::zero(), T::zero());
        for edge in &node.edges {
            let key = Some((node.id, edge.to));
            let Some(p) = given.get(&edge.to).copied() else {
                report.push("missing probability", Some(node.id), key);
                continue;
            };
            if p <= positive {
                report.push(format!("non-positive probability {p}"), Some(edge.to), key);
            }
            total = total + p;
            mean = mean + p * lattice.node(edge.to).expect("validated lattice").price;
        }
        if (total - T::one()).abs() > T::noise_floor(RN_SUM_TOL) {
            report.push(format!("probabilities do not sum to 1 (sum {total})"), Some(node.id), None);
        }
        let residual = mean - node.price;
        if residual.abs() > T::noise_floor(RN_MARTINGALE_TOL) * node.price.abs() {
            report.push(format!("martingale violation (residual {residual})"), Some(node.id), None);
        }
    }
    report
}

fn require_rn<T: Scalar>(lattice: &MarketLattice<T>, rn: &RNMeasureSpec<T>) -> Result<()> {
    match validate_rn_measure(lattice, rn).violations.into_iter().next() {
        None => Ok(()),
        Some(v) => Err(Error::RiskNeutral(v.to_string())),
    }
}

/// Probabilities of the lattice edges under `rn`, by child position.
fn rn_probs<T: Scalar>(lattice: &MarketLattice<T>, rn: &RNMeasureSpec<T>, k: usize) -> Vec<T> {
    let node = &lattice.nodes()[k];
    node.edges.iter().map(|e| rn.prob(node.id, e.to).expect("validated measure")).collect()
}

/// `E^RN[D_{0,iota} C_iota]` for `policy` (zero for expiry).
pub fn rn_policy_value<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    rn: &RNMeasureSpec<T>,
) -> Result<T> {
    require_rn(lattice, rn)?;
    let cash = payoff.resolve(lattice)?;
    let exercise = policy.mask(lattice)?;
    let alive = alive_mask(lattice, &exercise);
    // discounted risk-neutral mass of reaching each node alive
    let mut mass = vec![T::zero(); lattice.len()];
    mass[0] = T::one();
    let mut value = T::zero();
    for k in 0..lattice.len() {
        if !alive[k] {
            continue;
        }
        if exercise[k] {
            value = value + mass[k] * cash[k];
            continue;
        }
        let node = &lattice.nodes()[k];
        if lattice.is_terminal(node) {
            continue;
        }
        let discount = lattice.discount(node.stage + 1);
        for (&c, p) in lattice.children_of(k).iter().zip(rn_probs(lattice, rn, k)) {
            mass[c] = mass[c] + mass[k] * discount * p;
        }
    }
    Ok(value)
}

/// Optimal stopping under `rn`: `V = max{C, D E^RN[V']}`.
pub fn optimize_risk_neutral<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    rn: &RNMeasureSpec<T>,
) -> Result<OptimizationResult<T>> {
    require_rn(lattice, rn)?;
    let cash = payoff.resolve(lattice)?;
    let mut values = vec![T::zero(); lattice.len()];
    let mut exercise = vec![false; lattice.len()];
    let mut ties = 0;
    for k in lattice.backward_order() {
        let node = &lattice.nodes()[k];
        let continuation = if lattice.is_terminal(node) {
            T::zero()
        } else {
            let expected = lattice
                .children_of(k)
                .iter()
                .zip(rn_probs(lattice, rn, k))
                .fold(T::zero(), |acc, (&c, p)| acc + p * values[c]);
            lattice.discount(node.stage + 1) * expected
        };
        let tol = tie_tol(continuation);
        if (cash[k] - continuation).abs() <= tol {
            ties += 1;
        }
        if cash[k] > continuation + tol {
            exercise[k] = true;
            values[k] = cash[k];
        } else {
            values[k] = continuation;
        }
    }
    let policy = canonicalize(&ExercisePolicy::from_mask(lattice, &exercise), lattice)?;
    Ok(OptimizationResult {
        policy,
        value: values[0],
        per_node_values: Some(lattice.nodes().iter().map(|n| n.id).zip(values).collect()),
        diagnostics: Diagnostics { policies_evaluated: 0, ties },
    })
}

/// Nodes after the first stage, reached alive under `policy`, where the
/// residual policy is not optimal for the naive VO problem re-posed there.
pub fn time_consistency_violations<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    cap: u64,
) -> Result<Vec<NodeId>> {
    let exercise = policy.mask(lattice)?;
    let alive = alive_mask(lattice, &exercise);
    let mut violations = Vec::new();
    for (k, node) in lattice.nodes().iter().enumerate() {
        if node.stage == 0 || !alive[k] {
            continue;
        }
        let sub = lattice.subtree(node.id)?;
        let residual = canonicalize(&policy.restrict(&sub), &sub)?;
        let own = compute_coefficients(&sub, payoff, &residual)?.root().b;
        let best = optimize_vo_naive(&sub, payoff, cap)?.value;
        if best > own + tie_tol(own) {
            violations.push(node.id);
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example_lattice, example_rn_measure, NODE_16, NODE_2_56, NODE_6_4, ROOT};
    use crate::lattice::Node;
    use crate::policy::DEFAULT_POLICY_CAP;
    use approx::assert_abs_diff_eq;

    #[test]
    fn naive_vo_example_one() {
        let lattice = example_lattice::<f64>();
        let result = optimize_vo_naive(&lattice, &PayoffSpec::call(3.0), DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(result.policy, ExercisePolicy::from_nodes([NODE_6_4]));
        assert_abs_diff_eq!(result.value, 1.5286, epsilon = 5e-4);
        assert_eq!(result.diagnostics.policies_evaluated, 9);
    }

    #[test]
    fn naive_vo_example_two() {
        let lattice = example_lattice::<f64>();
        let result = optimize_vo_naive(&lattice, &PayoffSpec::call(7.0), DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(result.policy, ExercisePolicy::never());
        assert_eq!(result.value, 0.0);
        assert!(result.diagnostics.ties > 0);
    }

    #[test]
    fn naive_vo_single_node() {
        let lattice = MarketLattice::new(1, vec![], vec![Node { id: 0, stage: 0, price: 5.0, edges: vec![] }]).unwrap();
        let result = optimize_vo_naive(&lattice, &PayoffSpec::call(3.0), DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(result.policy, ExercisePolicy::from_nodes([0]));
        assert_eq!(result.value, 2.0);
    }

    #[test]
    fn time_consistent_examples() {
        let lattice = example_lattice::<f64>();
        let k3 = optimize_vo_time_consistent(&lattice, &PayoffSpec::call(3.0)).unwrap();
        assert_eq!(k3.policy, ExercisePolicy::from_nodes([NODE_6_4, NODE_16]));
        assert_abs_diff_eq!(k3.value, 4787.0 / 10020.0, epsilon = 1e-12);
        let k7 = optimize_vo_time_consistent(&lattice, &PayoffSpec::call(7.0)).unwrap();
        assert_eq!(k7.policy, ExercisePolicy::from_nodes([ROOT]));
        assert_eq!(k7.value, 0.0);
    }

    #[test]
    fn single_period_put_exercises_in_the_money() {
        let lattice = example_lattice::<f64>();
        let tc = optimize_vo_time_consistent(&lattice, &PayoffSpec::put(20.0)).unwrap();
        // the put is linear in F, so continuing at the root ties with its 16.8
        assert_eq!(tc.policy, ExercisePolicy::from_nodes([NODE_2_56, NODE_6_4, NODE_16]));
        assert_eq!(tc.per_node_values.unwrap()[&NODE_16], 4.0);
        assert_abs_diff_eq!(tc.value, 16.8, epsilon = 1e-12);
    }

    #[test]
    fn risk_neutral_examples() {
        let lattice = example_lattice::<f64>();
        for r in [0.001, 1.0 / 42.0, 0.047] {
            let rn = example_rn_measure::<f64>(r);
            let k3 = optimize_risk_neutral(&lattice, &PayoffSpec::call(3.0), &rn).unwrap();
            assert_eq!(k3.policy, ExercisePolicy::from_nodes([NODE_6_4, NODE_16]));
            let k7 = optimize_risk_neutral(&lattice, &PayoffSpec::call(7.0), &rn).unwrap();
            assert_eq!(k7.policy, ExercisePolicy::from_nodes([NODE_16]));
        }
        let rn = example_rn_measure::<f64>(1.0 / 42.0);
        let zero = optimize_risk_neutral(&lattice, &PayoffSpec::call(100.0), &rn).unwrap();
        assert_eq!(zero.policy, ExercisePolicy::never());
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn rn_values() {
        let lattice = example_lattice::<f64>();
        let rn = example_rn_measure::<f64>(1.0 / 42.0);
        let call3 = PayoffSpec::call(3.0);
        let v = rn_policy_value(&lattice, &call3, &ExercisePolicy::from_nodes([NODE_6_4, NODE_16]), &rn).unwrap();
        assert_abs_diff_eq!(v, 0.592857142857, epsilon = 1e-9);
        assert_eq!(rn_policy_value(&lattice, &call3, &ExercisePolicy::never(), &rn).unwrap(), 0.0);
        assert_abs_diff_eq!(rn_policy_value(&lattice, &call3, &ExercisePolicy::from_nodes([ROOT]), &rn).unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn rn_validation() {
        let lattice = example_lattice::<f64>();
        assert!(validate_rn_measure(&lattice, &example_rn_measure(1.0 / 42.0)).is_empty());
        let boundary = validate_rn_measure(&lattice, &example_rn_measure(1.0 / 21.0));
        assert_eq!(boundary.violations.len(), 1);
        assert!(boundary.violations[0].message.starts_with("non-positive probability"));
        assert_eq!(boundary.violations[0].node, Some(NODE_6_4));

        let uniform = RNMeasureSpec {
            edges: BTreeMap::from([(ROOT, [NODE_2_56, NODE_6_4, NODE_16].into_iter().map(|id| (id, 1.0 / 3.0)).collect())]),
        };
        let report = validate_rn_measure(&lattice, &uniform);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.starts_with("martingale violation"));
        assert!(matches!(
            rn_policy_value(&lattice, &PayoffSpec::call(3.0), &ExercisePolicy::never(), &uniform),
            Err(Error::RiskNeutral(_))
        ));
    }

    #[test]
    fn naive_policy_is_time_inconsistent_at_sixteen() {
        let lattice = example_lattice::<f64>();
        let call3 = PayoffSpec::call(3.0);
        let naive = optimize_vo_naive(&lattice, &call3, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(time_consistency_violations(&lattice, &call3, &naive.policy, DEFAULT_POLICY_CAP).unwrap(), vec![NODE_16]);
        let tc = optimize_vo_time_consistent(&lattice, &call3).unwrap();
        assert!(time_consistency_violations(&lattice, &call3, &tc.policy, DEFAULT_POLICY_CAP).unwrap().is_empty());
    }
}
