//! `qhedge`: quadratic hedging and exercise-policy analysis of American
//! options on futures lattices.
//!
//! Exit status: 0 on success, 1 when an input fails validation (or a
//! reproduction row fails), 2 on usage errors such as unknown flags or
//! unreadable files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qhedge::examples::{example_lattice, example_rn_measure, reproduce_examples, NODE_16, NODE_6_4};
use qhedge::io::{
    coefficients_to_json, lattice_to_json, load_payoff, load_policy, load_rn_measure, number17, parse_lattice_spec,
    payoff_to_json, policy_to_json, rn_measure_to_json,
};
use qhedge::simulation::hedge_records;
use qhedge::{
    anchored_objective, canonicalize, check_stopped_martingale, compute_coefficients, contains, is_equivalent_measure,
    optimize_risk_neutral, optimize_vo_naive, optimize_vo_time_consistent, rn_policy_value, run_hedge,
    signed_edge_measure, stopped_path_weights, summarize, time_consistency_violations, validate_lattice,
    validate_rn_measure, value_bounds, witness_measure, BoundEnd, Exact, ExercisePolicy, HedgeCoefficients,
    InitialCapital, MarketLattice, NodeRole, PayoffSpec, RNMeasureSpec, Scalar, SimulationConfig,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "qhedge", version, about = "Quadratic hedging of American options on futures lattices")]
struct Cli {
    /// Emit a JSON document instead of the human-readable report.
    #[arg(long, global = true)]
    json: bool,

    /// Use exact rational arithmetic (small models only).
    #[arg(long, global = true)]
    exact: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a lattice (and optionally a payoff, policy and risk-neutral measure).
    Validate(ValidateArgs),
    /// Hedging coefficients, production cost and trade rule of a policy.
    Hedge(HedgeArgs),
    /// Variance-optimal measure induced by a policy.
    Measure(PolicyArgs),
    /// Optimal exercise policy.
    Optimize(OptimizeArgs),
    /// No-arbitrage interval of a policy's value.
    Bounds(BoundsArgs),
    /// Monte Carlo check of the hedging error.
    Simulate(SimulateArgs),
    /// Reproduce the two worked examples.
    Examples(ExamplesArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Lattice file (alternative to --model).
    lattice: Option<PathBuf>,
    #[arg(long, conflicts_with = "lattice")]
    model: Option<PathBuf>,
    #[arg(long)]
    payoff: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    measure: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    payoff: PathBuf,
}

#[derive(Args)]
struct PolicyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    policy: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Anchor {
    /// The policy's value under the risk-neutral measure given by --measure.
    Rn,
}

#[derive(Args)]
struct CapitalArgs {
    /// Initial capital; defaults to the minimal production cost.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "anchor")]
    v0: Option<String>,
    #[arg(long, value_enum, requires = "measure")]
    anchor: Option<Anchor>,
    #[arg(long)]
    measure: Option<PathBuf>,
}

#[derive(Args)]
struct HedgeArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    capital: CapitalArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Maximize the production cost over all policies.
    Vo,
    /// Time-consistent backward induction.
    Tc,
    /// Optimal stopping under a risk-neutral measure.
    Rn,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "vo")]
    method: Method,
    /// Risk-neutral measure (required for --method rn).
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Maximum number of policies to enumerate.
    #[arg(long, default_value_t = qhedge::policy::DEFAULT_POLICY_CAP)]
    cap: u64,
    /// Also report nodes where the policy is not time consistent.
    #[arg(long)]
    check_consistency: bool,
    /// Write the optimal policy document here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Values to test for membership (repeatable).
    #[arg(long = "value", allow_hyphen_values = true)]
    values: Vec<String>,
    /// Also report the optimizing measures at both ends.
    #[arg(long)]
    witness: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    capital: CapitalArgs,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-path CSV (path_id, iota, cashflow, terminal_wealth, error).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExamplesArgs {
    /// Write the example lattice, payoffs, policies and measure into this directory.
    #[arg(long)]
    emit: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Invalid(anyhow::Error),
}

impl From<qhedge::Error> for Failure {
    fn from(e: qhedge::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if e.chain().any(|c| c.is::<qhedge::Error>()) {
            Failure::Invalid(e)
        } else {
            Failure::Usage(e)
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

/// Rendered result of a subcommand.
struct Report {
    text: String,
    json: Value,
    ok: bool,
}

fn read(path: &Path) -> Run<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::Usage)
}

fn lattice<T: Scalar>(path: &Path) -> Run<MarketLattice<T>> {
    let spec = parse_lattice_spec::<T>(&read(path)?)?;
    Ok(MarketLattice::try_from(spec).with_context(|| format!("invalid lattice {}", path.display()))?)
}

fn payoff<T: Scalar>(path: &Path, lattice: &MarketLattice<T>) -> Run<PayoffSpec<T>> {
    let payoff = load_payoff::<T>(&read(path)?)?;
    let report = payoff.validate(lattice);
    if let Some(v) = report.violations.first() {
        return Err(Failure::Invalid(anyhow::anyhow!("invalid payoff {}: {v}", path.display())));
    }
    Ok(payoff)
}

fn policy<T: Scalar>(path: &Path, lattice: &MarketLattice<T>) -> Run<ExercisePolicy> {
    let policy = load_policy(&read(path)?)?;
    Ok(canonicalize(&policy, lattice)?)
}

fn rn_measure<T: Scalar>(path: &Path, lattice: &MarketLattice<T>) -> Run<RNMeasureSpec<T>> {
    let measure = load_rn_measure::<T>(&read(path)?)?;
    if let Some(v) = validate_rn_measure(lattice, &measure).violations.first() {
        return Err(Failure::Invalid(anyhow::anyhow!("invalid risk-neutral measure {}: {v}", path.display())));
    }
    Ok(measure)
}

fn scalar<T: Scalar>(text: &str, what: &str) -> Run<T> {
    T::parse_decimal(text).ok_or_else(|| Failure::Usage(anyhow::anyhow!("{what}: cannot read {text:?} as a number")))
}

fn show<T: Scalar>(x: T) -> String {
    if T::EXACT {
        let text = x.to_exact_string();
        if text.contains('/') {
            return format!("{text} (≈{:.10})", x.to_f64());
        }
        return text;
    }
    format!("{:.10}", x.to_f64())
}

fn ids(policy: &ExercisePolicy) -> String {
    let ids: Vec<String> = policy.exercise_nodes().iter().map(|id| id.to_string()).collect();
    format!("{{{}}}", ids.join(", "))
}

fn role(role: NodeRole) -> &'static str {
    match role {
        NodeRole::Continue => "continue",
        NodeRole::Exercise => "exercise",
        NodeRole::Expire => "expire",
    }
}

/// Initial capital from `--v0` / `--anchor rn`, if either is given.
fn capital<T: Scalar>(
    args: &CapitalArgs,
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
) -> Run<Option<T>> {
    if let Some(text) = &args.v0 {
        return Ok(Some(scalar(text, "--v0")?));
    }
    match (args.anchor, &args.measure) {
        (Some(Anchor::Rn), Some(path)) => {
            let measure = rn_measure(path, lattice)?;
            Ok(Some(rn_policy_value(lattice, payoff, policy, &measure)?))
        }
        _ => Ok(None),
    }
}

fn validate<T: Scalar>(args: &ValidateArgs) -> Run<Report> {
    let path = args
        .lattice
        .as_ref()
        .or(args.model.as_ref())
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("a lattice file is required")))?;
    let spec = parse_lattice_spec::<T>(&read(path)?)?;
    let mut problems: Vec<String> =
        validate_lattice(&spec).violations.iter().map(|v| format!("lattice: {v}")).collect();
    if problems.is_empty() {
        let lattice = MarketLattice::try_from(spec)?;
        if let Some(p) = &args.payoff {
            let payoff = load_payoff::<T>(&read(p)?)?;
            problems.extend(payoff.validate(&lattice).violations.iter().map(|v| format!("payoff: {v}")));
        }
        if let Some(p) = &args.policy {
            let policy = load_policy(&read(p)?)?;
            if let Err(e) = policy.mask(&lattice) {
                problems.push(format!("policy: {e}"));
            }
        }
        if let Some(p) = &args.measure {
            let measure = load_rn_measure::<T>(&read(p)?)?;
            problems.extend(validate_rn_measure(&lattice, &measure).violations.iter().map(|v| format!("measure: {v}")));
        }
    }
    let ok = problems.is_empty();
    let text = if ok { "OK\n".to_string() } else { problems.iter().map(|p| format!("{p}\n")).collect() };
    Ok(Report { text, json: json!({ "valid": ok, "violations": problems }), ok })
}

fn hedge_table<T: Scalar>(lattice: &MarketLattice<T>, coeffs: &HedgeCoefficients<T>) -> String {
    let mut out = format!("{:>6} {:>5} {:>14} {:>9} {:>16} {:>16} {:>16} {:>16} {:>16}\n", "node", "stage", "price", "role", "a", "b", "c", "p", "q");
    for (id, entry) in coeffs.iter() {
        let node = lattice.node(id).expect("coefficients belong to the lattice");
        let (p, q) = entry.trade.map_or((String::new(), String::new()), |t| (show(t.p), show(t.q)));
        let _ = writeln!(
            out,
            "{id:>6} {:>5} {:>14} {:>9} {:>16} {:>16} {:>16} {p:>16} {q:>16}",
            node.stage,
            show(node.price),
            role(entry.role),
            show(entry.a),
            show(entry.b),
            show(entry.c)
        );
    }
    out
}

fn hedge<T: Scalar>(args: &HedgeArgs) -> Run<Report> {
    let lattice = lattice::<T>(&args.policy.model.model)?;
    let payoff = payoff(&args.policy.model.payoff, &lattice)?;
    let policy = policy(&args.policy.policy, &lattice)?;
    let coeffs = compute_coefficients(&lattice, &payoff, &policy)?;
    let root = *coeffs.root();
    let mut text = format!("policy {}\n", ids(&policy));
    text += &hedge_table(&lattice, &coeffs);
    let _ = writeln!(text, "production cost b0 = {}", show(root.b));
    let _ = writeln!(text, "residual risk   c0 = {}", show(root.c));
    let mut doc = json!({
        "policy": policy_to_json(&policy),
        "production_cost": number17(root.b),
        "residual_risk": number17(root.c),
        "coefficients": coefficients_to_json(&coeffs),
    });
    if let Some(v0) = capital(&args.capital, &lattice, &payoff, &policy)? {
        let objective = anchored_objective(&coeffs, v0);
        let _ = writeln!(text, "J0({}) = {}", show(v0), show(objective));
        doc["v0"] = number17(v0);
        doc["objective"] = number17(objective);
        if let Some(rule) = root.trade {
            let _ = writeln!(text, "theta0({}) = {}", show(v0), show(rule.position(v0)));
            doc["theta0"] = number17(rule.position(v0));
        }
    }
    Ok(Report { text, json: doc, ok: true })
}

fn measure<T: Scalar>(args: &PolicyArgs) -> Run<Report> {
    let lattice = lattice::<T>(&args.model.model)?;
    let payoff = payoff(&args.model.payoff, &lattice)?;
    let policy = policy(&args.policy, &lattice)?;
    let coeffs = compute_coefficients(&lattice, &payoff, &policy)?;
    let edges = signed_edge_measure(&coeffs, &lattice)?;
    let mut text = format!("policy {}\none-step weights:\n", ids(&policy));
    let mut weights_doc = Vec::new();
    for (from, row) in &edges.weights {
        for (to, w) in row {
            let _ = writeln!(text, "  {from:>6} -> {to:<6} {}", show(*w));
            weights_doc.push(json!({ "from": from, "to": to, "w": number17(*w) }));
        }
    }
    let root = lattice.root().id;
    let mut doc = json!({ "policy": policy_to_json(&policy), "weights": weights_doc });
    if coeffs.root().role == NodeRole::Exercise {
        text += "policy exercises at the root; no stopped measure\n";
        return Ok(Report { text, json: doc, ok: true });
    }
    let stopped = stopped_path_weights(&coeffs, &lattice, root)?;
    text += "stopped outcomes (path, stage, exercised, weight):\n";
    let mut outcomes = Vec::new();
    for (outcome, w) in &stopped.outcomes {
        let path: Vec<String> = outcome.path.iter().map(|id| id.to_string()).collect();
        let _ = writeln!(text, "  {:<24} {:>3} {:>5} {}", path.join("-"), outcome.stage, outcome.exercised, show(*w));
        outcomes.push(json!({ "path": outcome.path, "stage": outcome.stage, "exercised": outcome.exercised, "w": number17(*w) }));
    }
    let verdict = is_equivalent_measure(&stopped);
    let _ = writeln!(
        text,
        "equivalent to P: {}{}",
        verdict.equivalent,
        if verdict.equivalent { String::new() } else { format!(" ({} non-positive outcomes)", verdict.offending.len()) }
    );
    let mut residuals = Vec::new();
    for horizon in 1..lattice.stage_count() {
        let r = check_stopped_martingale(&stopped, &lattice, horizon)?;
        let _ = writeln!(text, "martingale residual at stage {horizon}: {}", show(r));
        residuals.push(number17(r));
    }
    doc["outcomes"] = Value::Array(outcomes);
    doc["equivalent"] = json!(verdict.equivalent);
    doc["martingale_residuals"] = Value::Array(residuals);
    Ok(Report { text, json: doc, ok: true })
}

fn optimize<T: Scalar>(args: &OptimizeArgs) -> Run<Report> {
    let lattice = lattice::<T>(&args.model.model)?;
    let payoff = payoff(&args.model.payoff, &lattice)?;
    let result = match args.method {
        Method::Vo => optimize_vo_naive(&lattice, &payoff, args.cap)?,
        Method::Tc => optimize_vo_time_consistent(&lattice, &payoff)?,
        Method::Rn => {
            let Some(path) = &args.measure else {
                return Err(Failure::Usage(anyhow::anyhow!("--method rn requires --measure")));
            };
            optimize_risk_neutral(&lattice, &payoff, &rn_measure(path, &lattice)?)?
        }
    };
    let production_cost = compute_coefficients(&lattice, &payoff, &result.policy)?.root().b;
    let mut text = format!("policy {}\nvalue {}\n", ids(&result.policy), show(result.value));
    if args.method == Method::Rn {
        let _ = writeln!(text, "production cost {}", show(production_cost));
    }
    let _ = writeln!(
        text,
        "policies evaluated {}, ties {}",
        result.diagnostics.policies_evaluated, result.diagnostics.ties
    );
    let mut doc = json!({
        "policy": policy_to_json(&result.policy),
        "value": number17(result.value),
        "production_cost": number17(production_cost),
        "policies_evaluated": result.diagnostics.policies_evaluated,
        "ties": result.diagnostics.ties,
    });
    if args.check_consistency {
        let violations = time_consistency_violations(&lattice, &payoff, &result.policy, args.cap)?;
        let listed: Vec<String> = violations.iter().map(|id| id.to_string()).collect();
        let _ = writeln!(text, "time inconsistent at nodes [{}]", listed.join(", "));
        doc["time_inconsistent_at"] = json!(violations);
    }
    if let Some(out) = &args.out {
        write_json(out, &policy_to_json(&result.policy))?;
    }
    Ok(Report { text, json: doc, ok: true })
}

fn bounds<T: Scalar>(args: &BoundsArgs) -> Run<Report> {
    let lattice = lattice::<T>(&args.policy.model.model)?;
    let payoff = payoff(&args.policy.model.payoff, &lattice)?;
    let policy = policy(&args.policy.policy, &lattice)?;
    let interval = value_bounds(&lattice, &payoff, &policy)?;
    let mut text = format!(
        "policy {}\ninterval {}{}, {}{}\n",
        ids(&policy),
        if interval.open_lo { "(" } else { "[" },
        show(interval.lo),
        show(interval.hi),
        if interval.open_hi { ")" } else { "]" }
    );
    let mut doc = json!({
        "policy": policy_to_json(&policy),
        "lo": number17(interval.lo),
        "hi": number17(interval.hi),
        "open_lo": interval.open_lo,
        "open_hi": interval.open_hi,
    });
    let mut verdicts = Vec::new();
    for value in &args.values {
        let x: T = scalar(value, "--value")?;
        let inside = contains(&interval, x);
        let _ = writeln!(text, "{value}: {}", if inside { "inside" } else { "outside" });
        verdicts.push(json!({ "value": number17(x), "inside": inside }));
    }
    doc["membership"] = Value::Array(verdicts);
    if args.witness {
        for (end, key) in [(BoundEnd::Min, "witness_min"), (BoundEnd::Max, "witness_max")] {
            let w = witness_measure(&lattice, &payoff, &policy, end)?;
            let _ = writeln!(text, "{key} (boundary: {}):", w.boundary);
            for (from, row) in &w.measure.edges {
                for (to, m) in row {
                    let _ = writeln!(text, "  {from:>6} -> {to:<6} {}", show(*m));
                }
            }
            doc[key] = json!({ "boundary": w.boundary, "measure": rn_measure_to_json(&w.measure) });
        }
    }
    Ok(Report { text, json: doc, ok: true })
}

fn simulate<T: Scalar>(args: &SimulateArgs) -> Run<Report> {
    let lattice = lattice::<T>(&args.policy.model.model)?;
    let payoff = payoff(&args.policy.model.payoff, &lattice)?;
    let policy = policy(&args.policy.policy, &lattice)?;
    let coeffs = compute_coefficients(&lattice, &payoff, &policy)?;
    let v0 = capital(&args.capital, &lattice, &payoff, &policy)?;
    let initial_capital = v0.map_or(InitialCapital::Optimal, InitialCapital::Fixed);
    let config = SimulationConfig { path_count: args.paths, seed: args.seed, initial_capital };
    let stats = run_hedge(&lattice, &payoff, &policy, &coeffs, &config)?;
    let predicted = anchored_objective(&coeffs, v0.unwrap_or(coeffs.root().b));
    let report = summarize(&stats, predicted.to_f64());
    if let Some(out) = &args.out {
        let records = hedge_records(&lattice, &payoff, &policy, &coeffs, &config)?;
        let mut writer = csv::Writer::from_path(out).with_context(|| format!("cannot write {}", out.display()))?;
        writer.write_record(["path_id", "iota", "cashflow", "terminal_wealth", "error"]).context("csv")?;
        for r in &records {
            writer
                .write_record([
                    r.path_id.to_string(),
                    r.iota.to_string(),
                    r.cash_flow.to_exact_string(),
                    r.terminal_wealth.to_exact_string(),
                    r.error.to_exact_string(),
                ])
                .context("csv")?;
        }
        writer.flush().context("csv")?;
    }
    let mut text = format!("policy {}, {} paths, seed {}\n", ids(&policy), stats.path_count, args.seed);
    let _ = writeln!(text, "initial capital        {}", show(v0.unwrap_or(coeffs.root().b)));
    let _ = writeln!(text, "mean error             {:.6e} ± {:.2e}", stats.mean_error, stats.mean_error_se);
    let _ = writeln!(text, "mean squared error     {:.6e} ± {:.2e}", stats.mean_squared_error, stats.mean_squared_error_se);
    let _ = writeln!(text, "predicted J0(V0)       {:.6e}", report.predicted);
    let _ = writeln!(text, "unhedged second moment {:.6e} ± {:.2e}", stats.unhedged_second_moment, stats.unhedged_second_moment_se);
    let _ = writeln!(text, "max |error|            {:.6e}", stats.max_abs_error);
    let _ = writeln!(text, "z = {:+.3} -> {}", report.z_score, if report.pass { "pass" } else { "fail" });
    let doc = json!({
        "policy": policy_to_json(&policy),
        "paths": stats.path_count,
        "seed": args.seed,
        "initial_capital": number17(v0.unwrap_or(coeffs.root().b)),
        "mean_error": stats.mean_error,
        "mean_error_se": stats.mean_error_se,
        "mean_squared_error": stats.mean_squared_error,
        "mean_squared_error_se": stats.mean_squared_error_se,
        "unhedged_second_moment": stats.unhedged_second_moment,
        "unhedged_second_moment_se": stats.unhedged_second_moment_se,
        "max_abs_error": stats.max_abs_error,
        "predicted": report.predicted,
        "z_score": if report.z_score.is_finite() { json!(report.z_score) } else { Value::Null },
        "pass": report.pass,
    });
    Ok(Report { text, json: doc, ok: true })
}

fn write_json(path: &Path, doc: &Value) -> Run<()> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display())).map_err(Failure::Usage)
}

fn emit_models(dir: &Path) -> Run<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(Failure::Usage)?;
    let lattice = example_lattice::<Exact>();
    let r = Exact::new(1, 42);
    write_json(&dir.join("ex1.lattice"), &lattice_to_json(&lattice))?;
    write_json(&dir.join("call3.payoff"), &payoff_to_json(&PayoffSpec::call(Exact::from_integer(3))))?;
    write_json(&dir.join("call7.payoff"), &payoff_to_json(&PayoffSpec::call(Exact::from_integer(7))))?;
    write_json(&dir.join("naive_vo.policy"), &policy_to_json(&ExercisePolicy::from_nodes([NODE_6_4])))?;
    write_json(&dir.join("rn_opt.policy"), &policy_to_json(&ExercisePolicy::from_nodes([NODE_6_4, NODE_16])))?;
    write_json(&dir.join("at16.policy"), &policy_to_json(&ExercisePolicy::from_nodes([NODE_16])))?;
    write_json(&dir.join("rn.measure"), &rn_measure_to_json(&example_rn_measure(r)))?;
    Ok(())
}

fn examples(args: &ExamplesArgs) -> Run<Report> {
    if let Some(dir) = &args.emit {
        emit_models(dir)?;
    }
    let report = reproduce_examples()?;
    let mut text = format!(
        "{:<3} {:<52} {:>12} {:>12} {:>10} {:>9}  {}\n",
        "ex", "quantity", "reference", "computed", "|Δ|", "tolerance", "result"
    );
    let mut rows = Vec::new();
    for row in &report.rows {
        let delta = (row.reference - row.computed).abs();
        let _ = writeln!(
            text,
            "{:<3} {:<52} {:>12.6} {:>12.6} {:>10.2e} {:>9.0e}  {}{}",
            row.example,
            row.quantity,
            row.reference,
            row.computed,
            delta,
            row.tolerance,
            if row.pass { "pass" } else { "FAIL" },
            row.note.as_ref().map(|n| format!("  [{n}]")).unwrap_or_default()
        );
        rows.push(json!({
            "example": row.example,
            "quantity": row.quantity,
            "reference": row.reference,
            "computed": row.computed,
            "delta": delta,
            "tolerance": row.tolerance,
            "pass": row.pass,
            "note": row.note,
        }));
    }
    let ok = report.all_pass();
    let _ = writeln!(text, "{}", if ok { "all rows pass" } else { "some rows FAIL" });
    Ok(Report { text, json: json!({ "rows": rows, "all_pass": ok }), ok })
}

fn dispatch<T: Scalar>(command: &Command) -> Run<Report> {
    match command {
        Command::Validate(args) => validate::<T>(args),
        Command::Hedge(args) => hedge::<T>(args),
        Command::Measure(args) => measure::<T>(args),
        Command::Optimize(args) => optimize::<T>(args),
        Command::Bounds(args) => bounds::<T>(args),
        Command::Simulate(args) => simulate::<T>(args),
        Command::Examples(args) => examples(args),
    }
}

fn run(cli: &Cli) -> Run<Report> {
    if cli.exact {
        dispatch::<Exact>(&cli.command)
    } else {
        dispatch::<f64>(&cli.command)
    }
}

fn print(report: &Report, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(&report.json)?);
    } else {
        print!("{}", report.text);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            if let Err(e) = print(&report, cli.json) {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
