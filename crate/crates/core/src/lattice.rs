//! Futures-price lattice, discount structure and option payoffs.
//!
//! A [`MarketLattice`] is a finite stage-layered DAG (usually a tree) of
//! futures-price nodes. Edges carry statistical transition probabilities and
//! each period `i -> i+1` carries a deterministic discount factor `D_{i+1}`.
//! The raw, possibly invalid, form is [`LatticeSpec`]; converting it into a
//! `MarketLattice` enforces every structural invariant.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T> {
    pub to: NodeId,
    pub prob: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub id: NodeId,
    pub stage: usize,
    pub price: T,
    pub edges: Vec<Edge<T>>,
}

/// Unvalidated lattice description, as read from a file or built by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec<T> {
    pub stages: usize,
    /// `discounts[k]` is the factor from stage `k+1` back to stage `k`.
    pub discounts: Vec<T>,
    pub nodes: Vec<Node<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub message: String,
    pub node: Option<NodeId>,
    pub edge: Option<(NodeId, NodeId)>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        match (self.node, self.edge) {
            (_, Some((from, to))) => write!(f, " (edge {from} -> {to})"),
            (Some(node), None) => write!(f, " (node {node})"),
            (None, None) => Ok(()),
        }
    }
}

/// Every violated invariant found by a validation pass; empty iff valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn push(&mut self, message: impl Into<String>, node: Option<NodeId>, edge: Option<(NodeId, NodeId)>) {
        self.violations.push(Violation { message: message.into(), node, edge });
    }

    pub(crate) fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::Validation { message: v.to_string(), node: v.node }),
        }
    }
}

/// Probability sums are checked to this tolerance (scaled for `f32`).
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Checks every structural invariant of a lattice description.
pub fn validate_lattice<T: Scalar>(spec: &LatticeSpec<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    if spec.stages == 0 {
        report.push("stage count must be at least 1", None, None);
    }
    let expected = spec.stages.saturating_sub(1);
    if spec.discounts.len() != expected {
        report.push(
            format!("expected {expected} discount factors, found {}", spec.discounts.len()),
            None,
            None,
        );
    }
    for (k, d) in spec.discounts.iter().enumerate() {
        if !(*d > T::zero() && *d <= T::one()) {
            report.push(format!("discount factor D_{} = {d} outside (0, 1]", k + 1), None, None);
        }
    }

    let mut by_id: HashMap<NodeId, &Node<T>> = HashMap::new();
    for node in &spec.nodes {
        if by_id.insert(node.id, node).is_some() {
            report.push("duplicate node id", Some(node.id), None);
        }
    }

    let roots: Vec<&Node<T>> = spec.nodes.iter().filter(|n| n.stage == 0).collect();
    if roots.len() != 1 {
        report.push(format!("expected exactly one node at stage 0, found {}", roots.len()), None, None);
    }

    let tol = T::noise_floor(PROBABILITY_SUM_TOL);
    for node in &spec.nodes {
        if node.stage >= spec.stages {
            report.push(format!("stage {} beyond last stage {}", node.stage, expected), Some(node.id), None);
        }
        if node.price < T::zero() {
            report.push("price < 0", Some(node.id), None);
        }
        let terminal = node.stage + 1 == spec.stages;
        if terminal && !node.edges.is_empty() {
            report.push("terminal node has outgoing edges", Some(node.id), None);
        }
        if !terminal && node.stage < spec.stages && node.edges.is_empty() {
            report.push("non-terminal node has no outgoing edges", Some(node.id), None);
        }
        let mut seen = HashSet::new();
        let mut total = T::zero();
        for edge in &node.edges {
            let key = Some((node.id, edge.to));
            if !seen.insert(edge.to) {
                report.push("duplicate edge", Some(node.id), key);
            }
            if !(edge.prob > T::zero() && edge.prob <= T::one()) {
                report.push(format!("edge probability {} outside (0, 1]", edge.prob), Some(node.id), key);
            }
            total = total + edge.prob;
            match by_id.get(&edge.to) {
                None => report.push("edge to unknown node", Some(node.id), key),
                Some(child) if child.stage != node.stage + 1 => {
                    report.push("edge does not connect consecutive stages", Some(node.id), key)
                }
                Some(_) => {}
            }
        }
        if !node.edges.is_empty() && (total - T::one()).abs() > tol {
            report.push(format!("probabilities do not sum to 1 (sum {total})"), Some(node.id), None);
        }
    }

    if let [root] = roots.as_slice() {
        let mut reached = HashSet::from([root.id]);
        let mut queue = VecDeque::from([root.id]);
        while let Some(id) = queue.pop_front() {
            if let Some(node) = by_id.get(&id) {
                for edge in &node.edges {
                    if by_id.contains_key(&edge.to) && reached.insert(edge.to) {
                        queue.push_back(edge.to);
                    }
                }
            }
        }
        for node in &spec.nodes {
            if !reached.contains(&node.id) {
                report.push("unreachable node", Some(node.id), None);
            }
        }
    }
    report
}

/// Validated, immutable futures-price lattice.
///
/// Nodes are stored in `(stage, id)` order and each node's edges are sorted
/// by child id; every expectation in the crate sums children in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketLattice<T> {
    stages: usize,
    discounts: Vec<T>,
    nodes: Vec<Node<T>>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    index: HashMap<NodeId, usize>,
}

impl<T: Scalar> TryFrom<LatticeSpec<T>> for MarketLattice<T> {
    type Error = Error;

    fn try_from(spec: LatticeSpec<T>) -> Result<Self> {
        validate_lattice(&spec).into_result()?;
        let LatticeSpec { stages, discounts, mut nodes } = spec;
        nodes.sort_by_key(|n| (n.stage, n.id));
        for node in &mut nodes {
            node.edges.sort_by_key(|e| e.to);
        }
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(k, n)| (n.id, k)).collect();
        let children: Vec<Vec<usize>> =
            nodes.iter().map(|n| n.edges.iter().map(|e| index[&e.to]).collect()).collect();
        let mut parents = vec![Vec::new(); nodes.len()];
        for (k, kids) in children.iter().enumerate() {
            for &c in kids {
                parents[c].push(k);
            }
        }
        Ok(Self { stages, discounts, nodes, children, parents, index })
    }
}

impl<T: Scalar> MarketLattice<T> {
    pub fn new(stages: usize, discounts: Vec<T>, nodes: Vec<Node<T>>) -> Result<Self> {
        Self::try_from(LatticeSpec { stages, discounts, nodes })
    }

    /// Number of exercise dates `I`.
    pub fn stage_count(&self) -> usize {
        self.stages
    }

    pub fn last_stage(&self) -> usize {
        self.stages - 1
    }

    /// Per-period factors `D_1 .. D_{I-1}`.
    pub fn discounts(&self) -> &[T] {
        &self.discounts
    }

    /// One-period factor `D_i` from stage `i` back to `i - 1` (`i >= 1`).
    pub fn discount(&self, i: usize) -> T {
        self.discounts[i - 1]
    }

    /// `D_{i,j}`: product of `D_{i+1} .. D_j`, one when `i == j`.
    pub fn compound_discount(&self, i: usize, j: usize) -> Result<T> {
        if i > j || j >= self.stages {
            return Err(Error::StageIndex { i, j, stages: self.stages });
        }
        Ok(self.discounts[i..j].iter().fold(T::one(), |acc, d| acc * *d))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in `(stage, id)` order.
    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn root(&self) -> &Node<T> {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> Option<&Node<T>> {
        self.index.get(&id).map(|&k| &self.nodes[k])
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn require(&self, id: NodeId) -> Result<usize> {
        self.index_of(id).ok_or(Error::UnknownNode(id))
    }

    /// Positions of the children of the node at position `k`, id-sorted.
    pub fn children_of(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    pub fn parents_of(&self, k: usize) -> &[usize] {
        &self.parents[k]
    }

    pub fn is_terminal(&self, node: &Node<T>) -> bool {
        node.stage + 1 == self.stages
    }

    /// True when every node has at most one parent.
    pub fn is_tree(&self) -> bool {
        self.parents.iter().all(|p| p.len() <= 1)
    }

    /// Positions in reverse `(stage, id)` order, the sweep order of every
    /// backward induction.
    pub fn backward_order(&self) -> impl Iterator<Item = usize> {
        (0..self.nodes.len()).rev()
    }

    /// Sub-lattice of everything reachable from `id`, with stages shifted
    /// so that `id` sits at stage 0. Node ids are preserved.
    pub fn subtree(&self, id: NodeId) -> Result<Self> {
        let start = self.require(id)?;
        let offset = self.nodes[start].stage;
        let mut keep = vec![false; self.nodes.len()];
        keep[start] = true;
        for k in start..self.nodes.len() {
            if keep[k] {
                for &c in &self.children[k] {
                    keep[c] = true;
                }
            }
        }
        let nodes = self
            .nodes
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| Node { stage: n.stage - offset, ..n.clone() })
            .collect();
        Self::new(self.stages - offset, self.discounts[offset..].to_vec(), nodes)
    }

    pub fn to_spec(&self) -> LatticeSpec<T> {
        LatticeSpec { stages: self.stages, discounts: self.discounts.clone(), nodes: self.nodes.clone() }
    }

    /// Every root-to-terminal path with its statistical probability.
    pub fn paths(&self) -> Vec<(Path, T)> {
        let mut out = Vec::new();
        let mut stack = vec![(vec![0usize], T::one())];
        while let Some((prefix, prob)) = stack.pop() {
            let last = *prefix.last().unwrap();
            if self.children[last].is_empty() {
                let ids = prefix.iter().map(|&k| self.nodes[k].id).collect();
                out.push((Path { nodes: ids }, prob));
                continue;
            }
            for (edge, &c) in self.nodes[last].edges.iter().zip(&self.children[last]).rev() {
                let mut next = prefix.clone();
                next.push(c);
                stack.push((next, prob * edge.prob));
            }
        }
        out
    }
}

/// One realization of the price process: node ids for stages `0 ..= I-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub nodes: Vec<NodeId>,
}

impl Path {
    /// Checks that `nodes` starts at the root and follows lattice edges to the
    /// last stage.
    pub fn new<T: Scalar>(lattice: &MarketLattice<T>, nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.len() != lattice.stage_count() {
            return Err(Error::Validation {
                message: format!("path has {} nodes, lattice has {} stages", nodes.len(), lattice.stage_count()),
                node: None,
            });
        }
        if nodes.first() != Some(&lattice.root().id) {
            return Err(Error::Validation { message: "path does not start at the root".into(), node: nodes.first().copied() });
        }
        for pair in nodes.windows(2) {
            let from = lattice.node(pair[0]).ok_or(Error::UnknownNode(pair[0]))?;
            if !from.edges.iter().any(|e| e.to == pair[1]) {
                return Err(Error::Validation { message: format!("no edge {} -> {}", pair[0], pair[1]), node: Some(pair[0]) });
            }
        }
        Ok(Self { nodes })
    }
}

/// How the option's cash flow `C_i(F_i)` is resolved at a node.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffSpec<T> {
    Call { strike: T },
    Put { strike: T },
    /// Explicit cash flow per node id.
    Table(BTreeMap<NodeId, T>),
}

impl<T: Scalar> PayoffSpec<T> {
    pub fn call(strike: T) -> Self {
        Self::Call { strike }
    }

    pub fn put(strike: T) -> Self {
        Self::Put { strike }
    }

    /// `C_i(F_i)` at `node`; never negative.
    pub fn cash_flow(&self, node: &Node<T>) -> Result<T> {
        match self {
            Self::Call { strike } => Ok((node.price - *strike).max_of(T::zero())),
            Self::Put { strike } => Ok((*strike - node.price).max_of(T::zero())),
            Self::Table(values) => values.get(&node.id).copied().ok_or(Error::MissingPayoff(node.id)),
        }
    }

    /// Scales every cash flow by `factor`.
    pub fn scaled(&self, factor: T, lattice: &MarketLattice<T>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for node in lattice.nodes() {
            table.insert(node.id, self.cash_flow(node)? * factor);
        }
        Ok(Self::Table(table))
    }

    pub fn validate(&self, lattice: &MarketLattice<T>) -> ValidationReport {
        let mut report = ValidationReport::default();
        match self {
            Self::Call { strike } | Self::Put { strike } => {
                if *strike < T::zero() {
                    report.push("strike < 0", None, None);
                }
            }
            Self::Table(values) => {
                for node in lattice.nodes() {
                    match values.get(&node.id) {
                        None => report.push("payoff table has no entry", Some(node.id), None),
                        Some(v) if *v < T::zero() => report.push("cash flow < 0", Some(node.id), None),
                        Some(_) => {}
                    }
                }
            }
        }
        report
    }

    /// Cash flow at every node position, after validating the payoff.
    pub(crate) fn resolve(&self, lattice: &MarketLattice<T>) -> Result<Vec<T>> {
        self.validate(lattice).into_result()?;
        lattice.nodes().iter().map(|n| self.cash_flow(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::example_lattice;

    fn chain() -> LatticeSpec<f64> {
        LatticeSpec {
            stages: 3,
            discounts: vec![0.9, 0.8],
            nodes: vec![
                Node { id: 0, stage: 0, price: 1.0, edges: vec![Edge { to: 1, prob: 1.0 }] },
                Node { id: 1, stage: 1, price: 1.0, edges: vec![Edge { to: 2, prob: 1.0 }] },
                Node { id: 2, stage: 2, price: 1.0, edges: vec![] },
            ],
        }
    }

    #[test]
    fn example_lattice_is_valid() {
        let lattice = example_lattice::<f64>();
        assert_eq!(lattice.len(), 4);
        assert!(validate_lattice(&lattice.to_spec()).is_empty());
        assert_eq!(lattice.compound_discount(0, 1).unwrap(), 1.0);
    }

    #[test]
    fn compound_discount_products() {
        let lattice = MarketLattice::try_from(chain()).unwrap();
        assert!((lattice.compound_discount(0, 2).unwrap() - 0.72).abs() < 1e-15);
        assert_eq!(lattice.compound_discount(1, 1).unwrap(), 1.0);
        assert_eq!(lattice.compound_discount(2, 1), Err(Error::StageIndex { i: 2, j: 1, stages: 3 }));
        assert!(lattice.compound_discount(0, 3).is_err());
    }

    #[test]
    fn single_node_lattice() {
        let lattice = MarketLattice::new(1, vec![], vec![Node { id: 7, stage: 0, price: 5.0, edges: vec![] }]).unwrap();
        assert_eq!(lattice.root().id, 7);
        assert_eq!(lattice.paths().len(), 1);
    }

    #[test]
    fn reports_each_broken_invariant() {
        let mut spec = chain();
        spec.nodes[1].price = -1.0;
        let report = validate_lattice(&spec);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].message, "price < 0");

        let mut spec = chain();
        spec.nodes.push(Node { id: 9, stage: 2, price: 1.0, edges: vec![] });
        let report = validate_lattice(&spec);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].message, "unreachable node");
        assert_eq!(report.violations[0].node, Some(9));

        let mut spec = chain();
        spec.nodes[0].edges[0].prob = 0.99;
        let report = validate_lattice(&spec);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.starts_with("probabilities do not sum to 1"));

        let mut spec = chain();
        spec.discounts[1] = 1.2;
        assert_eq!(validate_lattice(&spec).violations.len(), 1);

        let mut spec = chain();
        spec.nodes[2].edges.push(Edge { to: 0, prob: 1.0 });
        assert!(!validate_lattice(&spec).is_empty());

        let mut spec = chain();
        spec.nodes[1].stage = 0;
        assert!(!validate_lattice(&spec).is_empty());
    }

    #[test]
    fn construction_fails_with_first_violation() {
        let mut spec = chain();
        spec.nodes[0].edges[0].prob = 0.99;
        match MarketLattice::try_from(spec) {
            Err(Error::Validation { message, node }) => {
                assert!(message.contains("probabilities do not sum to 1"));
                assert_eq!(node, Some(0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cash_flows() {
        let node = |price: f64| Node { id: 1, stage: 1, price, edges: vec![] };
        let call3 = PayoffSpec::call(3.0);
        assert!((call3.cash_flow(&node(6.4)).unwrap() - 3.4).abs() < 1e-12);
        assert_eq!(call3.cash_flow(&node(2.56)).unwrap(), 0.0);
        assert_eq!(PayoffSpec::call(7.0).cash_flow(&node(16.0)).unwrap(), 9.0);
        assert_eq!(PayoffSpec::put(3.0).cash_flow(&node(2.0)).unwrap(), 1.0);
        let table = PayoffSpec::Table(BTreeMap::from([(2, 1.0)]));
        assert_eq!(table.cash_flow(&node(1.0)), Err(Error::MissingPayoff(1)));
    }

    #[test]
    fn subtree_shifts_stages() {
        let lattice = example_lattice::<f64>();
        let sub = lattice.subtree(3).unwrap();
        assert_eq!(sub.stage_count(), 1);
        assert_eq!(sub.root().id, 3);
        assert_eq!(sub.root().price, 16.0);
    }
}
