//! Monte Carlo execution of the quadratic hedge under the statistical measure.
//!
//! Path `k` is drawn from a ChaCha8 stream selected by `(seed, k)`, so any
//! subset of paths can be regenerated independently and parallel runs agree
//! bit-for-bit with serial ones. Paths are processed in fixed-size chunks
//! whose partial sums are combined in chunk order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hedging::{HedgeCoefficients, NodeRole};
use crate::lattice::{MarketLattice, NodeId, Path, PayoffSpec};
use crate::policy::ExercisePolicy;
use crate::scalar::Scalar;

const CHUNK: u64 = 4096;

/// Initial bond position of the simulated hedge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCapital<T> {
    /// The minimal production cost `b_0`.
    Optimal,
    /// Pinned to a given value, e.g. a risk-neutral price.
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig<T> {
    pub path_count: u64,
    pub seed: u64,
    pub initial_capital: InitialCapital<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnlStats {
    pub path_count: u64,
    pub mean_error: f64,
    pub mean_error_se: f64,
    pub mean_squared_error: f64,
    pub mean_squared_error_se: f64,
    /// Second moment with no futures trading.
    pub unhedged_second_moment: f64,
    pub unhedged_second_moment_se: f64,
    pub max_abs_error: f64,
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<T> {
    pub path_id: u64,
    pub iota: usize,
    pub stop_node: NodeId,
    pub cash_flow: T,
    pub terminal_wealth: T,
    /// `(cash flow - wealth) / D_{iota,I-1}`.
    pub error: T,
    pub unhedged_error: T,
}

/// Inverse-CDF tables over id-sorted children.
struct Sampler<'a, T> {
    lattice: &'a MarketLattice<T>,
    cumulative: Vec<Vec<f64>>,
}

impl<'a, T: Scalar> Sampler<'a, T> {
    fn new(lattice: &'a MarketLattice<T>) -> Self {
        let cumulative = lattice
            .nodes()
            .iter()
            .map(|n| {
                let mut acc = 0.0;
                n.edges
                    .iter()
                    .map(|e| {
                        acc += e.prob.to_f64();
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { lattice, cumulative }
    }

    fn rng(seed: u64, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        rng
    }

    fn child(&self, k: usize, rng: &mut ChaCha8Rng) -> usize {
        let kids = self.lattice.children_of(k);
        if kids.len() == 1 {
            return kids[0];
        }
        let u: f64 = rng.random();
        let cdf = &self.cumulative[k];
        let pick = cdf.iter().position(|c| u < *c).unwrap_or(kids.len() - 1);
        kids[pick]
    }

    fn path(&self, seed: u64, path: u64) -> Vec<usize> {
        let mut rng = Self::rng(seed, path);
        let mut k = 0;
        let mut out = vec![0];
        while !self.lattice.children_of(k).is_empty() {
            k = self.child(k, &mut rng);
            out.push(k);
        }
        out
    }
}

/// Path `index` of the stream identified by `seed`.
pub fn sample_path<T: Scalar>(lattice: &MarketLattice<T>, seed: u64, index: u64) -> Path {
    let positions = Sampler::new(lattice).path(seed, index);
    Path { nodes: positions.into_iter().map(|k| lattice.nodes()[k].id).collect() }
}

pub fn sample_paths<T: Scalar>(lattice: &MarketLattice<T>, n: u64, seed: u64) -> Vec<Path> {
    let sampler = Sampler::new(lattice);
    (0..n)
        .into_par_iter()
        .map(|k| Path { nodes: sampler.path(seed, k).into_iter().map(|p| lattice.nodes()[p].id).collect() })
        .collect()
}

struct HedgeRun<'a, T> {
    lattice: &'a MarketLattice<T>,
    coeffs: &'a HedgeCoefficients<T>,
    cash: Vec<T>,
    tail_discount: Vec<T>,
    v0: T,
}

impl<'a, T: Scalar> HedgeRun<'a, T> {
    fn new(
        lattice: &'a MarketLattice<T>,
        payoff: &PayoffSpec<T>,
        policy: &ExercisePolicy,
        coeffs: &'a HedgeCoefficients<T>,
        capital: InitialCapital<T>,
    ) -> Result<Self> {
        if !coeffs.matches(lattice, policy) {
            return Err(Error::CoefficientMismatch(lattice.root().id));
        }
        let cash = payoff.resolve(lattice)?;
        let last = lattice.last_stage();
        let tail_discount =
            (0..lattice.stage_count()).map(|i| lattice.compound_discount(i, last)).collect::<Result<_>>()?;
        let v0 = match capital {
            InitialCapital::Optimal => coeffs.root().b,
            InitialCapital::Fixed(v) => v,
        };
        Ok(Self { lattice, coeffs, cash, tail_discount, v0 })
    }

    /// Walks the hedge along a path; `next` yields the child of a position.
    fn run(&self, path_id: u64, mut next: impl FnMut(usize) -> usize) -> Result<PathRecord<T>> {
        let mut k = 0;
        let mut wealth = self.v0;
        let mut bond_only = self.v0;
        loop {
            let node = &self.lattice.nodes()[k];
            let entry = self.coeffs.at(k).ok_or(Error::CoefficientMismatch(node.id))?;
            let cash_flow = match entry.role {
                NodeRole::Exercise => self.cash[k],
                NodeRole::Expire => T::zero(),
                NodeRole::Continue => {
                    let rule = entry.trade.ok_or(Error::CoefficientMismatch(node.id))?;
                    let position = rule.position(wealth);
                    let child = next(k);
                    let df = self.lattice.nodes()[child].price - node.price;
                    wealth = wealth / rule.discount + df * position;
                    bond_only = bond_only / rule.discount;
                    k = child;
                    continue;
                }
            };
            let tail = self.tail_discount[node.stage];
            return Ok(PathRecord {
                path_id,
                iota: node.stage,
                stop_node: node.id,
                cash_flow,
                terminal_wealth: wealth,
                error: (cash_flow - wealth) / tail,
                unhedged_error: (cash_flow - bond_only) / tail,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    e: f64,
    e2: f64,
    e4: f64,
    u2: f64,
    u4: f64,
    max_abs: f64,
}

impl Moments {
    fn add(&mut self, error: f64, unhedged: f64) {
        let e2 = error * error;
        let u2 = unhedged * unhedged;
        self.n += 1;
        self.e += error;
        self.e2 += e2;
        self.e4 += e2 * e2;
        self.u2 += u2;
        self.u4 += u2 * u2;
        self.max_abs = self.max_abs.max(error.abs());
    }

    fn merge(self, other: Self) -> Self {
        Self {
            n: self.n + other.n,
            e: self.e + other.e,
            e2: self.e2 + other.e2,
            e4: self.e4 + other.e4,
            u2: self.u2 + other.u2,
            u4: self.u4 + other.u4,
            max_abs: self.max_abs.max(other.max_abs),
        }
    }

    fn stats(&self) -> PnlStats {
        let n = self.n as f64;
        let se = |mean: f64, second: f64| {
            if self.n < 2 {
                return 0.0;
            }
            let var = ((second / n - mean * mean) * n / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        };
        let mean_error = self.e / n;
        let mse = self.e2 / n;
        let unhedged = self.u2 / n;
        PnlStats {
            path_count: self.n,
            mean_error,
            mean_error_se: se(mean_error, self.e2),
            mean_squared_error: mse,
            mean_squared_error_se: se(mse, self.e4),
            unhedged_second_moment: unhedged,
            unhedged_second_moment_se: se(unhedged, self.u4),
            max_abs_error: self.max_abs,
        }
    }
}

fn chunk_moments<T: Scalar>(run: &HedgeRun<'_, T>, sampler: &Sampler<'_, T>, seed: u64, range: std::ops::Range<u64>) -> Result<Moments> {
    let mut m = Moments::default();
    for path in range {
        let mut rng = Sampler::<T>::rng(seed, path);
        let record = run.run(path, |k| sampler.child(k, &mut rng))?;
        m.add(record.error.to_f64(), record.unhedged_error.to_f64());
    }
    Ok(m)
}

/// Simulates the hedge of `policy` and aggregates replication errors.
pub fn run_hedge<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    coeffs: &HedgeCoefficients<T>,
    config: &SimulationConfig<T>,
) -> Result<PnlStats> {
    let run = HedgeRun::new(lattice, payoff, policy, coeffs, config.initial_capital)?;
    let sampler = Sampler::new(lattice);
    let chunks = config.path_count.div_ceil(CHUNK);
    let partial: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            chunk_moments(&run, &sampler, config.seed, start..(start + CHUNK).min(config.path_count))
        })
        .collect();
    let mut total = Moments::default();
    for m in partial {
        total = total.merge(m?);
    }
    Ok(total.stats())
}

/// Per-path records, for CSV export.
pub fn hedge_records<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    coeffs: &HedgeCoefficients<T>,
    config: &SimulationConfig<T>,
) -> Result<Vec<PathRecord<T>>> {
    let run = HedgeRun::new(lattice, payoff, policy, coeffs, config.initial_capital)?;
    let sampler = Sampler::new(lattice);
    (0..config.path_count)
        .into_par_iter()
        .map(|path| {
            let mut rng = Sampler::<T>::rng(config.seed, path);
            run.run(path, |k| sampler.child(k, &mut rng))
        })
        .collect()
}

/// Probability-weighted squared error over every lattice path.
pub fn exhaustive_mean_squared_error<T: Scalar>(
    lattice: &MarketLattice<T>,
    payoff: &PayoffSpec<T>,
    policy: &ExercisePolicy,
    coeffs: &HedgeCoefficients<T>,
    capital: InitialCapital<T>,
) -> Result<T> {
    let run = HedgeRun::new(lattice, payoff, policy, coeffs, capital)?;
    let mut total = T::zero();
    for (path, prob) in lattice.paths() {
        let positions: Vec<usize> = path.nodes.iter().map(|id| lattice.index_of(*id).unwrap()).collect();
        let mut step = 0;
        let record = run.run(0, |_| {
            step += 1;
            positions[step]
        })?;
        total = total + prob * record.error * record.error;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationReport {
    pub stats: PnlStats,
    pub predicted: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// z-score of the empirical mean-squared error against `predicted`; passes at `|z| <= 3`.
pub fn summarize(stats: &PnlStats, predicted: f64) -> SimulationReport {
    let gap = stats.mean_squared_error - predicted;
    let z_score = if stats.mean_squared_error_se > 0.0 {
        gap / stats.mean_squared_error_se
    } else if gap.abs() <= 1e-12 * predicted.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY.copysign(gap)
    };
    SimulationReport { stats: *stats, predicted, z_score, pass: z_score.abs() <= 3.0 }
}
