//! Quadratic hedging and exercise-policy optimization for American options on
//! a futures contract in a finite, incomplete, discrete-time market.
//!
//! The engines are generic over [`Scalar`]; `f64` is the working type and
//! [`Exact`] rationals reproduce small examples without rounding.
//!
//! ```
//! use qhedge::examples::{example_lattice, NODE_6_4};
//! use qhedge::{compute_coefficients, ExercisePolicy, PayoffSpec};
//!
//! let lattice = example_lattice::<f64>();
//! let policy = ExercisePolicy::from_nodes([NODE_6_4]);
//! let coeffs = compute_coefficients(&lattice, &PayoffSpec::call(3.0), &policy).unwrap();
//! assert!((coeffs.root().b - 1.5286).abs() < 5e-4);
//! ```

pub mod bounds;
pub mod error;
pub mod examples;
pub mod hedging;
pub mod io;
pub mod lattice;
pub mod measure;
pub mod optimize;
pub mod policy;
pub mod scalar;
pub mod simulation;

pub use bounds::{contains, value_bounds, witness_measure, BoundEnd, ValueInterval, WitnessMeasure};
pub use error::{Error, Result};
pub use hedging::{
    anchored_objective, compute_coefficients, evaluate_value_function, optimal_initial_capital, trade_decision,
    HedgeCoefficients, NodeCoefficients, NodeRole, TradeRule,
};
pub use lattice::{validate_lattice, Edge, LatticeSpec, MarketLattice, Node, NodeId, Path, PayoffSpec, ValidationReport};
pub use measure::{
    check_stopped_martingale, is_equivalent_measure, one_step_weights, signed_edge_measure, stopped_path_weights,
    vo_expected_value, vo_expected_value_with, EquivalenceVerdict, SignedEdgeMeasure, SignedStoppedMeasure,
    StoppedOutcome,
};
pub use optimize::{
    optimize_risk_neutral, optimize_vo_naive, optimize_vo_time_consistent, rn_policy_value, time_consistency_violations,
    validate_rn_measure, Diagnostics, OptimizationResult, RNMeasureSpec,
};
pub use policy::{alive_mask, canonicalize, enumerate_policies, policy_cash_flow, stopping_stage, ExercisePolicy, Stop};
pub use scalar::Scalar;
pub use simulation::{run_hedge, sample_paths, summarize, InitialCapital, PnlStats, SimulationConfig};

/// Exact rational scalar.
pub type Exact = num_rational::Ratio<i128>;

pub type Lattice = MarketLattice<f64>;
pub type Payoff = PayoffSpec<f64>;
pub type Coefficients = HedgeCoefficients<f64>;
pub type Interval = ValueInterval<f64>;
pub type RnMeasure = RNMeasureSpec<f64>;

pub type ExactLattice = MarketLattice<Exact>;
pub type ExactPayoff = PayoffSpec<Exact>;
pub type ExactCoefficients = HedgeCoefficients<Exact>;
pub type ExactInterval = ValueInterval<Exact>;
