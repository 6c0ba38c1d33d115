//! Exercise policies, stopping stages and realized cash flows.
//!
//! A policy is Markovian: one exercise bit per lattice node. A policy is in
//! canonical form when every node that cannot be reached with the option
//! still alive carries a zero. Leaving the option unexercised at the last
//! stage means it expires worthless.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lattice::{MarketLattice, NodeId, Path, PayoffSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExercisePolicy {
    exercise: BTreeSet<NodeId>,
}

impl ExercisePolicy {
    pub fn never() -> Self {
        Self::default()
    }

    pub fn from_nodes(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        Self { exercise: nodes.into_iter().collect() }
    }

    /// Node ids where the decision rule is 1.
    pub fn exercise_nodes(&self) -> &BTreeSet<NodeId> {
        &self.exercise
    }

    pub fn exercises_at(&self, id: NodeId) -> bool {
        self.exercise.contains(&id)
    }

    pub fn exercise_count(&self) -> usize {
        self.exercise.len()
    }

    /// Decision bit per node position.
    pub fn mask<T: Scalar>(&self, lattice: &MarketLattice<T>) -> Result<Vec<bool>> {
        let mut mask = vec![false; lattice.len()];
        for &id in &self.exercise {
            mask[lattice.require(id)?] = true;
        }
        Ok(mask)
    }

    /// Policy exercising where `mask` (indexed in node order) is set.
    pub fn from_mask<T: Scalar>(lattice: &MarketLattice<T>, mask: &[bool]) -> Self {
        Self::from_nodes(lattice.nodes().iter().zip(mask).filter(|(_, &x)| x).map(|(n, _)| n.id))
    }

    /// Restriction to the node ids present in `lattice` (e.g. a subtree).
    pub fn restrict<T: Scalar>(&self, lattice: &MarketLattice<T>) -> Self {
        Self::from_nodes(self.exercise.iter().copied().filter(|id| lattice.node(*id).is_some()))
    }
}

/// Which positions can be reached with the option still alive.
pub fn alive_mask<T: Scalar>(lattice: &MarketLattice<T>, exercise: &[bool]) -> Vec<bool> {
    let mut alive = vec![false; lattice.len()];
    alive[0] = true;
    for k in 0..lattice.len() {
        if alive[k] && !exercise[k] {
            for &c in lattice.children_of(k) {
                alive[c] = true;
            }
        }
    }
    alive
}

/// Zeroes every decision at nodes that cannot be reached while alive.
pub fn canonicalize<T: Scalar>(policy: &ExercisePolicy, lattice: &MarketLattice<T>) -> Result<ExercisePolicy> {
    let mut mask = policy.mask(lattice)?;
    let alive = alive_mask(lattice, &mask);
    for (bit, a) in mask.iter_mut().zip(&alive) {
        *bit &= *a;
    }
    Ok(ExercisePolicy::from_mask(lattice, &mask))
}

pub fn is_canonical<T: Scalar>(policy: &ExercisePolicy, lattice: &MarketLattice<T>) -> Result<bool> {
    Ok(canonicalize(policy, lattice)? == *policy)
}

/// Where a policy stops along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stop {
    pub stage: usize,
    pub node: NodeId,
    /// False when the option ran to the last stage unexercised.
    pub exercised: bool,
}

/// First stage on `path` whose decision is 1, or the last stage (expired).
pub fn stopping_stage(policy: &ExercisePolicy, path: &Path) -> Stop {
    for (stage, &id) in path.nodes.iter().enumerate() {
        if policy.exercises_at(id) {
            return Stop { stage, node: id, exercised: true };
        }
    }
    let stage = path.nodes.len() - 1;
    Stop { stage, node: path.nodes[stage], exercised: false }
}

/// `(stopping stage, realized cash flow)`; an expired option pays zero.
pub fn policy_cash_flow<T: Scalar>(
    policy: &ExercisePolicy,
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    path: &Path,
) -> Result<(usize, T)> {
    let stop = stopping_stage(policy, path);
    if !stop.exercised {
        return Ok((stop.stage, T::zero()));
    }
    let node = lattice.node(stop.node).ok_or(Error::UnknownNode(stop.node))?;
    Ok((stop.stage, payoff.cash_flow(node)?))
}

/// Default enumeration cap (`2^20` policies).
pub const DEFAULT_POLICY_CAP: u64 = 1 << 20;

/// Streams every canonical policy once, in lexicographic order over nodes
/// sorted by `(stage, id)` with the "continue" bit before the "exercise" bit.
pub fn enumerate_policies<T: Scalar>(lattice: &MarketLattice<T>, cap: u64) -> Result<PolicyEnumerator<'_, T>> {
    let free_nodes = lattice.len();
    let fits = u32::try_from(free_nodes).ok().and_then(|n| 1u64.checked_shl(n)).is_some_and(|count| count <= cap);
    if !fits {
        return Err(Error::Capacity { free_nodes, cap });
    }
    Ok(PolicyEnumerator { lattice, stack: vec![(0, vec![false; lattice.len()], vec![false; lattice.len()])] })
}

pub struct PolicyEnumerator<'a, T> {
    lattice: &'a MarketLattice<T>,
    /// (next position, exercise bits, alive bits)
    stack: Vec<(usize, Vec<bool>, Vec<bool>)>,
}

impl<T: Scalar> Iterator for PolicyEnumerator<'_, T> {
    type Item = ExercisePolicy;

    fn next(&mut self) -> Option<ExercisePolicy> {
        while let Some((k, bits, mut alive)) = self.stack.pop() {
            if k == self.lattice.len() {
                return Some(ExercisePolicy::from_mask(self.lattice, &bits));
            }
            // alive[k] is final once every parent (lower position) is decided
            if k == 0 {
                alive[0] = true;
            }
            if !alive[k] {
                self.stack.push((k + 1, bits, alive));
                continue;
            }
            let mut exercised = bits.clone();
            exercised[k] = true;
            self.stack.push((k + 1, exercised, alive.clone()));
            for &c in self.lattice.children_of(k) {
                alive[c] = true;
            }
            self.stack.push((k + 1, bits, alive));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example_lattice, NODE_2_56, NODE_16, NODE_6_4, ROOT};
    use crate::lattice::Node;

    #[test]
    fn canonicalize_kills_descendants_of_exercise() {
        let lattice = example_lattice::<f64>();
        let all = ExercisePolicy::from_nodes([ROOT, NODE_2_56, NODE_6_4, NODE_16]);
        assert_eq!(canonicalize(&all, &lattice).unwrap(), ExercisePolicy::from_nodes([ROOT]));
        let only = ExercisePolicy::from_nodes([NODE_6_4]);
        assert_eq!(canonicalize(&only, &lattice).unwrap(), only);
        assert_eq!(canonicalize(&ExercisePolicy::never(), &lattice).unwrap(), ExercisePolicy::never());
        assert_eq!(canonicalize(&ExercisePolicy::from_nodes([42]), &lattice), Err(Error::UnknownNode(42)));
    }

    #[test]
    fn stopping_and_cash_flow() {
        let lattice = example_lattice::<f64>();
        let to = |id| Path::new(&lattice, vec![ROOT, id]).unwrap();
        let vo = ExercisePolicy::from_nodes([NODE_6_4]);
        assert_eq!(stopping_stage(&vo, &to(NODE_6_4)), Stop { stage: 1, node: NODE_6_4, exercised: true });
        assert_eq!(stopping_stage(&vo, &to(NODE_16)), Stop { stage: 1, node: NODE_16, exercised: false });
        let root = ExercisePolicy::from_nodes([ROOT]);
        assert_eq!(stopping_stage(&root, &to(NODE_2_56)).stage, 0);

        let call3 = PayoffSpec::call(3.0);
        let rn = ExercisePolicy::from_nodes([NODE_6_4, NODE_16]);
        assert_eq!(policy_cash_flow(&rn, &lattice, &call3, &to(NODE_16)).unwrap(), (1, 13.0));
        assert_eq!(policy_cash_flow(&vo, &lattice, &call3, &to(NODE_16)).unwrap(), (1, 0.0));
        let call7 = PayoffSpec::call(7.0);
        assert_eq!(policy_cash_flow(&ExercisePolicy::never(), &lattice, &call7, &to(NODE_16)).unwrap(), (1, 0.0));
    }

    #[test]
    fn enumerates_example_policies() {
        let lattice = example_lattice::<f64>();
        let all: Vec<_> = enumerate_policies(&lattice, DEFAULT_POLICY_CAP).unwrap().collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], ExercisePolicy::never());
        assert_eq!(all[8], ExercisePolicy::from_nodes([ROOT]));
        assert_eq!(all[1], ExercisePolicy::from_nodes([NODE_16]));
    }

    #[test]
    fn single_node_has_two_policies() {
        let lattice = MarketLattice::new(1, vec![], vec![Node { id: 0, stage: 0, price: 1.0, edges: vec![] }]).unwrap();
        assert_eq!(enumerate_policies(&lattice, 2).unwrap().count(), 2);
        assert!(matches!(enumerate_policies(&lattice, 1), Err(Error::Capacity { free_nodes: 1, cap: 1 })));
    }

    #[test]
    fn capacity_error_for_wide_lattice() {
        let mut nodes = vec![Node { id: 0, stage: 0, price: 1.0, edges: vec![] }];
        for k in 1..30u64 {
            nodes[0].edges.push(crate::lattice::Edge { to: k, prob: 1.0 / 29.0 });
            nodes.push(Node { id: k, stage: 1, price: k as f64, edges: vec![] });
        }
        let total: f64 = nodes[0].edges.iter().map(|e| e.prob).sum();
        nodes[0].edges[0].prob += 1.0 - total;
        let lattice = MarketLattice::new(2, vec![1.0], nodes).unwrap();
        assert!(matches!(
            enumerate_policies(&lattice, 1 << 20),
            Err(Error::Capacity { free_nodes: 30, .. })
        ));
    }
}
