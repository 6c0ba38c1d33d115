//! JSON documents for lattices, payoffs, policies, risk-neutral measures and
//! coefficient dumps.
//!
//! Numeric fields are read as the literal decimal text of the document (or a
//! string holding a decimal or `n/d` fraction) and converted exactly once by
//! [`Scalar::parse_decimal`]. Values are written with
//! [`Scalar::to_exact_string`], so a lattice survives a write/read cycle
//! bit-for-bit.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::{json, Map, Number, Value};

use crate::error::{Error, Result};
use crate::hedging::HedgeCoefficients;
use crate::lattice::{Edge, LatticeSpec, MarketLattice, Node, NodeId, PayoffSpec};
use crate::optimize::RNMeasureSpec;
use crate::policy::ExercisePolicy;
use crate::scalar::Scalar;

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn scalar<T: Scalar>(value: &Value, what: &str) -> Result<T> {
    let text = match value {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        other => return Err(Error::Parse(format!("{what}: expected a number, found {other}"))),
    };
    T::parse_decimal(&text).ok_or_else(|| Error::Parse(format!("{what}: cannot read {text:?} as a number")))
}

/// JSON number when the exact text is a valid JSON literal, string otherwise.
pub fn number<T: Scalar>(x: T) -> Value {
    let text = x.to_exact_string();
    match text.parse::<Number>() {
        Ok(n) => Value::Number(n),
        Err(_) => Value::String(text),
    }
}

/// 17 significant digits for floating types, exact text for rationals.
pub fn number17<T: Scalar>(x: T) -> Value {
    if T::EXACT {
        return number(x);
    }
    format!("{:.16e}", x.to_f64()).parse::<Number>().map(Value::Number).unwrap_or(Value::Null)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeDoc {
    stages: usize,
    discounts: Vec<Value>,
    nodes: Vec<NodeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    stage: usize,
    price: Value,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    to: NodeId,
    p: Value,
}

/// Reads the raw lattice description without validating it.
pub fn parse_lattice_spec<T: Scalar>(source: &[u8]) -> Result<LatticeSpec<T>> {
    let doc: LatticeDoc = serde_json::from_slice(source).map_err(parse_err)?;
    let discounts =
        doc.discounts.iter().enumerate().map(|(k, d)| scalar(d, &format!("discounts[{k}]"))).collect::<Result<_>>()?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| {
            let edges = n
                .edges
                .iter()
                .map(|e| Ok(Edge { to: e.to, prob: scalar(&e.p, &format!("node {} edge to {}", n.id, e.to))? }))
                .collect::<Result<_>>()?;
            Ok(Node { id: n.id, stage: n.stage, price: scalar(&n.price, &format!("node {} price", n.id))?, edges })
        })
        .collect::<Result<_>>()?;
    Ok(LatticeSpec { stages: doc.stages, discounts, nodes })
}

/// Parses and validates a lattice document.
pub fn load_lattice<T: Scalar>(source: &[u8]) -> Result<MarketLattice<T>> {
    MarketLattice::try_from(parse_lattice_spec(source)?)
}

pub fn lattice_to_json<T: Scalar>(lattice: &MarketLattice<T>) -> Value {
    let nodes: Vec<Value> = lattice
        .nodes()
        .iter()
        .map(|n| {
            let edges: Vec<Value> = n.edges.iter().map(|e| json!({ "to": e.to, "p": number(e.prob) })).collect();
            json!({ "id": n.id, "stage": n.stage, "price": number(n.price), "edges": edges })
        })
        .collect();
    json!({
        "stages": lattice.stage_count(),
        "discounts": lattice.discounts().iter().map(|d| number(*d)).collect::<Vec<_>>(),
        "nodes": nodes,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PayoffDoc {
    kind: String,
    strike: Option<Value>,
    values: Option<BTreeMap<String, Value>>,
}

pub fn load_payoff<T: Scalar>(source: &[u8]) -> Result<PayoffSpec<T>> {
    let doc: PayoffDoc = serde_json::from_slice(source).map_err(parse_err)?;
    let strike = || -> Result<T> {
        let value = doc.strike.as_ref().ok_or_else(|| Error::Parse(format!("{} payoff needs a strike", doc.kind)))?;
        scalar(value, "strike")
    };
    match doc.kind.as_str() {
        "call" => Ok(PayoffSpec::Call { strike: strike()? }),
        "put" => Ok(PayoffSpec::Put { strike: strike()? }),
        "table" => {
            let values = doc.values.as_ref().ok_or_else(|| Error::Parse("table payoff needs values".into()))?;
            let mut table = BTreeMap::new();
            for (key, value) in values {
                let id: NodeId = key.parse().map_err(|_| Error::Parse(format!("payoff key {key:?} is not a node id")))?;
                table.insert(id, scalar(value, &format!("payoff of node {id}"))?);
            }
            Ok(PayoffSpec::Table(table))
        }
        other => Err(Error::Parse(format!("unknown payoff kind {other:?}"))),
    }
}

pub fn payoff_to_json<T: Scalar>(payoff: &PayoffSpec<T>) -> Value {
    match payoff {
        PayoffSpec::Call { strike } => json!({ "kind": "call", "strike": number(*strike) }),
        PayoffSpec::Put { strike } => json!({ "kind": "put", "strike": number(*strike) }),
        PayoffSpec::Table(values) => {
            let map: Map<String, Value> = values.iter().map(|(id, v)| (id.to_string(), number(*v))).collect();
            json!({ "kind": "table", "values": map })
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    exercise: Vec<NodeId>,
}

pub fn load_policy(source: &[u8]) -> Result<ExercisePolicy> {
    let doc: PolicyDoc = serde_json::from_slice(source).map_err(parse_err)?;
    Ok(ExercisePolicy::from_nodes(doc.exercise))
}

pub fn policy_to_json(policy: &ExercisePolicy) -> Value {
    json!({ "exercise": policy.exercise_nodes().iter().collect::<Vec<_>>() })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureDoc {
    edges: Vec<MeasureEdgeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureEdgeDoc {
    from: NodeId,
    to: NodeId,
    p: Value,
}

pub fn load_rn_measure<T: Scalar>(source: &[u8]) -> Result<RNMeasureSpec<T>> {
    let doc: MeasureDoc = serde_json::from_slice(source).map_err(parse_err)?;
    let mut edges: BTreeMap<NodeId, BTreeMap<NodeId, T>> = BTreeMap::new();
    for e in &doc.edges {
        let p = scalar(&e.p, &format!("measure edge {} -> {}", e.from, e.to))?;
        if edges.entry(e.from).or_default().insert(e.to, p).is_some() {
            return Err(Error::Parse(format!("duplicate measure edge {} -> {}", e.from, e.to)));
        }
    }
    Ok(RNMeasureSpec { edges })
}

pub fn rn_measure_to_json<T: Scalar>(measure: &RNMeasureSpec<T>) -> Value {
    let edges: Vec<Value> = measure
        .edges
        .iter()
        .flat_map(|(from, row)| row.iter().map(move |(to, p)| json!({ "from": from, "to": to, "p": number(*p) })))
        .collect();
    json!({ "edges": edges })
}

/// Node id -> `{a, b, c, p?, q?}` for every alive node.
pub fn coefficients_to_json<T: Scalar>(coeffs: &HedgeCoefficients<T>) -> Value {
    let mut map = Map::new();
    for (id, entry) in coeffs.iter() {
        let mut row = Map::new();
        row.insert("a".into(), number17(entry.a));
        row.insert("b".into(), number17(entry.b));
        row.insert("c".into(), number17(entry.c));
        if let Some(rule) = entry.trade {
            row.insert("p".into(), number17(rule.p));
            row.insert("q".into(), number17(rule.q));
        }
        map.insert(id.to_string(), Value::Object(row));
    }
    Value::Object(map)
}
