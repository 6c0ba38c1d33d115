//! The single-period call example used throughout the docs and tests, and a
//! reproduction table of its reference figures.
//!
//! The futures trades at 3.2 today and at 2.56, 6.4 or 16 one period later
//! with statistical probabilities 0.05, 0.05 and 0.90; the interest rate is
//! zero. Calls struck at 3 and at 7 are studied. Every equivalent martingale
//! measure of this market puts mass `r` in `(0, 1/21)` on 16,
//! `5/6 + 5r/2` on 2.56 and `1/6 - 7r/2` on 6.4.

use std::collections::BTreeMap;

use crate::bounds::{contains, value_bounds};
use crate::error::Result;
use crate::hedging::compute_coefficients;
use crate::lattice::{Edge, MarketLattice, Node, NodeId, PayoffSpec};
use crate::measure::{is_equivalent_measure, one_step_weights, stopped_path_weights};
use crate::optimize::{
    optimize_risk_neutral, optimize_vo_naive, optimize_vo_time_consistent, rn_policy_value, time_consistency_violations,
    RNMeasureSpec,
};
use crate::policy::{ExercisePolicy, DEFAULT_POLICY_CAP};
use crate::scalar::Scalar;

pub const ROOT: NodeId = 0;
pub const NODE_2_56: NodeId = 1;
pub const NODE_6_4: NodeId = 2;
pub const NODE_16: NodeId = 3;

fn lit<T: Scalar>(text: &str) -> T {
    T::parse_decimal(text).expect("literal")
}

pub fn example_lattice<T: Scalar>() -> MarketLattice<T> {
    let leaf = |id, price| Node { id, stage: 1, price: lit::<T>(price), edges: vec![] };
    MarketLattice::new(
        2,
        vec![T::one()],
        vec![
            Node {
                id: ROOT,
                stage: 0,
                price: lit("3.2"),
                edges: vec![
                    Edge { to: NODE_2_56, prob: lit("0.05") },
                    Edge { to: NODE_6_4, prob: lit("0.05") },
                    Edge { to: NODE_16, prob: lit("0.90") },
                ],
            },
            leaf(NODE_2_56, "2.56"),
            leaf(NODE_6_4, "6.4"),
            leaf(NODE_16, "16"),
        ],
    )
    .expect("example lattice is valid")
}

/// The member of the example's risk-neutral family putting mass `r` on 16.
pub fn example_rn_measure<T: Scalar>(r: T) -> RNMeasureSpec<T> {
    let (two, five, six, seven) = (lit::<T>("2"), lit::<T>("5"), lit::<T>("6"), lit::<T>("7"));
    let row = BTreeMap::from([
        (NODE_2_56, five / six + five * r / two),
        (NODE_6_4, T::one() / six - seven * r / two),
        (NODE_16, r),
    ]);
    RNMeasureSpec { edges: BTreeMap::from([(ROOT, row)]) }
}

/// Tolerance absorbing the rounding of the reference figures.
pub const REFERENCE_TOL: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReproRow {
    pub example: u8,
    pub quantity: String,
    /// Reference value (booleans as 0/1); a derived value where `note` says so.
    pub reference: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReproReport {
    pub rows: Vec<ReproRow>,
}

impl ReproReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    fn value(&mut self, example: u8, quantity: &str, reference: f64, computed: f64, tolerance: f64) -> &mut ReproRow {
        let pass = (reference - computed).abs() <= tolerance;
        self.rows.push(ReproRow {
            example,
            quantity: quantity.to_string(),
            reference,
            computed,
            tolerance,
            pass,
            note: None,
        });
        self.rows.last_mut().unwrap()
    }

    fn flag(&mut self, example: u8, quantity: &str, holds: bool) {
        self.value(example, quantity, 1.0, if holds { 1.0 } else { 0.0 }, 0.0);
    }
}

fn note(row: &mut ReproRow, text: &str) {
    row.note = Some(text.to_string());
}

/// Runs both worked examples end to end.
pub fn reproduce_examples() -> Result<ReproReport> {
    let lattice = example_lattice::<f64>();
    let rn = example_rn_measure(1.0 / 42.0);
    let mut report = ReproReport::default();

    // strike 3
    let call3 = PayoffSpec::call(3.0);
    let rn_policy = ExercisePolicy::from_nodes([NODE_6_4, NODE_16]);
    let coeffs = compute_coefficients(&lattice, &call3, &rn_policy)?;
    let weights = one_step_weights(&coeffs, &lattice, ROOT)?;
    report.value(1, "VO weight at F=2.56", 0.6312, weights[&NODE_2_56], 5e-4);
    report.value(1, "VO weight at F=6.4", 0.4496, weights[&NODE_6_4], 5e-4);
    report.value(1, "VO weight at F=16", -0.0808, weights[&NODE_16], 5e-4);
    let verdict = is_equivalent_measure(&stopped_path_weights(&coeffs, &lattice, ROOT)?);
    report.flag(1, "VO measure is not equivalent (negative at F=16)", !verdict.equivalent);

    let naive = optimize_vo_naive(&lattice, &call3, DEFAULT_POLICY_CAP)?;
    report.flag(1, "naive VO policy exercises only at F=6.4", naive.policy == ExercisePolicy::from_nodes([NODE_6_4]));
    report.value(1, "naive VO production cost", 1.5286, naive.value, 5e-4);

    let tc = optimize_vo_time_consistent(&lattice, &call3)?;
    report.flag(1, "TC policy exercises at F in {6.4, 16}", tc.policy == rn_policy);
    let row = report.value(1, "TC production cost", 0.4777, tc.value, REFERENCE_TOL);
    note(row, "exact value 4787/10020 = 0.4777445");

    let rn_opt = optimize_risk_neutral(&lattice, &call3, &rn)?;
    report.flag(1, "RN-optimal policy exercises when F > 3", rn_opt.policy == rn_policy);
    report.value(1, "RN-optimal policy production cost", 0.4777, coeffs.root().b, REFERENCE_TOL);

    let naive_bounds = value_bounds(&lattice, &call3, &naive.policy)?;
    report.value(1, "naive VO policy no-arbitrage lo", 0.0, naive_bounds.lo, 1e-4);
    report.value(1, "naive VO policy no-arbitrage hi", 0.5667, naive_bounds.hi, 1e-4);
    report.flag(1, "naive VO cost outside its interval", !contains(&naive_bounds, naive.value));
    let rn_bounds = value_bounds(&lattice, &call3, &rn_policy)?;
    report.value(1, "RN policy no-arbitrage lo", 0.5667, rn_bounds.lo, 1e-4);
    report.value(1, "RN policy no-arbitrage hi", 0.6190, rn_bounds.hi, 1e-4);
    report.flag(1, "RN policy cost outside its interval", !contains(&rn_bounds, coeffs.root().b));
    report.flag(
        1,
        "naive VO policy is time inconsistent exactly at F=16",
        time_consistency_violations(&lattice, &call3, &naive.policy, DEFAULT_POLICY_CAP)? == vec![NODE_16],
    );

    // strike 7
    let call7 = PayoffSpec::call(7.0);
    let naive = optimize_vo_naive(&lattice, &call7, DEFAULT_POLICY_CAP)?;
    report.flag(2, "naive VO policy never exercises", naive.policy == ExercisePolicy::never());
    report.value(2, "naive VO production cost", 0.0, naive.value, 0.0);
    let rn_opt = optimize_risk_neutral(&lattice, &call7, &rn)?;
    let at16 = ExercisePolicy::from_nodes([NODE_16]);
    report.flag(2, "RN-optimal policy exercises only at F=16", rn_opt.policy == at16);
    let cost = compute_coefficients(&lattice, &call7, &at16)?.root().b;
    let row = report.value(2, "RN-optimal policy production cost", -0.7254, cost, REFERENCE_TOL);
    note(row, "exact value -243/334 = -0.7275449");
    let tc = optimize_vo_time_consistent(&lattice, &call7)?;
    report.flag(2, "TC policy exercises immediately (zero cash flow)", tc.policy == ExercisePolicy::from_nodes([ROOT]));
    let bounds = value_bounds(&lattice, &call7, &at16)?;
    report.value(2, "RN policy no-arbitrage lo", 0.0, bounds.lo, 1e-9);
    let row = report.value(2, "RN policy no-arbitrage hi", 3.0 / 7.0, bounds.hi, 1e-9);
    note(row, "derived 3/7 = 9 * (1/21); quoted figure is 1.7/3 = 0.5667");
    report.flag(2, "RN policy cost outside its interval", !contains(&bounds, cost));
    let rn_value = rn_policy_value(&lattice, &call7, &at16, &rn)?;
    report.flag(2, "RN value of policy inside its interval", contains(&bounds, rn_value));

    Ok(report)
}
