//! Indirect implementations of the optimal allocation: an all-pay
//! contribution game for any economy, a price-and-subsidy game for two
//! buyers with positive value effects, and a subscription game with
//! exclusivity bids for two buyers with negative value effects.
//!
//! Each game is built together with its equilibrium strategy. Strategy maps
//! are tabulated from the direct mechanism's interim schedule, and the
//! outcome functions compose their inverses with the allocation boundaries.
//! [`verify_equilibrium`] sweeps deviations by Monte Carlo and
//! [`verify_outcome_equivalence`] compares outcomes with the direct
//! mechanism on a type lattice.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{outcome_for, outcome_pair};
use crate::economy::{presets, uniform_grid, Economy};
use crate::error::{Error, Result};
use crate::payments::{csv_error, interim_schedule, served_bounds, InterimMethod, PairInterim, ServedBounds};
use crate::quadrature::{bisect_root, locate_segments_on};
use crate::verification::{benchmark_cutoffs, region_grid, BenchmarkCutoffs, EffectSign, RegionLabel};

/// Knots per tabulated strategy map or boundary curve.
pub const TABLE_KNOTS: usize = 2001;
/// Offset for one-sided limits at tier cutoffs.
pub const LIMIT_OFFSET: f64 = 1e-9;
/// Largest decrease tolerated in a tabulated monotone map, relative to its scale.
pub const MONOTONE_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_EQUILIBRIUM_DRAWS: usize = 50_000;
/// Deviation gains up to `2·SE + GAIN_SLACK` pass.
pub const GAIN_SLACK: f64 = 1e-6;
pub const PAYMENT_TOLERANCE: f64 = 1e-5;

/// Below this consumption probability the conditional payment is taken from
/// quadrature instead of the ratio `M / Q`.
const CONDITIONAL_CUTOFF: f64 = 1e-3;
const BOUNDARY_ROOT_TOLERANCE: f64 = 1e-15;
/// Largest midpoint interpolation error left in the all-pay payment table.
const REFINE_TOLERANCE: f64 = 1e-9;
const REFINE_ROUNDS: usize = 40;
/// Off-path actions appended to every two-dimensional deviation grid.
const OFF_PATH_ACTIONS: usize = 8;

/// Piecewise-linear monotone map with monotone inversion.
///
/// Intervals flagged as jumps are treated as vertical: inverting a value
/// inside the gap returns the left knot.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    /// Values times `sign`, nondecreasing.
    signed: Vec<f64>,
    sign: f64,
    jumps: Vec<bool>,
}

impl MonotoneTable {
    /// Builds a table from strictly increasing knots and monotone values.
    /// Decreases within [`MONOTONE_TOLERANCE`] are flattened.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidArgument("a table needs at least two knots with one value each".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("table knots and values must be finite".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("table knots must be strictly increasing".into()));
        }
        let sign = if ys[ys.len() - 1] >= ys[0] { 1.0 } else { -1.0 };
        let scale = ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
        let mut signed: Vec<f64> = ys.iter().map(|y| sign * y).collect();
        for i in 1..signed.len() {
            let drop = signed[i - 1] - signed[i];
            if drop > MONOTONE_TOLERANCE * scale {
                return Err(Error::Precondition(format!("tabulated map is not monotone near {} (reversal {drop:e})", xs[i])));
            }
            signed[i] = signed[i].max(signed[i - 1]);
        }
        let jumps = vec![false; xs.len() - 1];
        Ok(Self { xs, signed, sign, jumps })
    }

    /// Tabulates `f` on `count` equally spaced knots of `[lo, hi]`.
    pub fn tabulate(lo: f64, hi: f64, count: usize, f: impl FnMut(f64) -> f64) -> Result<Self> {
        let xs = uniform_grid(lo, hi, count);
        let ys = xs.iter().copied().map(f).collect();
        Self::new(xs, ys)
    }

    fn with_jumps(mut self, jumps: &[usize]) -> Self {
        for &i in jumps {
            self.jumps[i] = true;
        }
        self
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Smallest and largest tabulated value.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.sign * self.signed[0], self.sign * self.signed[self.signed.len() - 1]);
        (a.min(b), a.max(b))
    }

    pub fn is_increasing(&self) -> bool {
        self.sign > 0.0
    }

    pub fn is_strictly_monotone(&self) -> bool {
        self.signed.windows(2).all(|w| w[1] > w[0])
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().zip(&self.signed).map(move |(&x, &s)| (x, self.sign * s))
    }

    /// Linear interpolation, clamped to the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x);
        let s = if i == 0 {
            self.signed[0]
        } else if i == n {
            self.signed[n - 1]
        } else {
            let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.signed[i - 1], self.signed[i]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        };
        self.sign * s
    }

    /// As [`eval`](Self::eval) but infinite outside the domain, continuing
    /// the map's direction.
    pub fn eval_ext(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        if x < lo {
            -self.sign * f64::INFINITY
        } else if x > hi {
            self.sign * f64::INFINITY
        } else {
            self.eval(x)
        }
    }

    fn inverse_signed(&self, s: f64) -> f64 {
        let n = self.xs.len();
        let i = self.signed.partition_point(|&y| y < s);
        if i == 0 {
            return self.xs[0];
        }
        if i == n {
            return self.xs[n - 1];
        }
        let (y0, y1) = (self.signed[i - 1], self.signed[i]);
        if self.jumps[i - 1] && s < y1 {
            return self.xs[i - 1];
        }
        self.xs[i - 1] + (self.xs[i] - self.xs[i - 1]) * (s - y0) / (y1 - y0)
    }

    /// Smallest argument attaining `y`, clamped to the domain.
    pub fn inverse(&self, y: f64) -> f64 {
        self.inverse_signed(self.sign * y)
    }

    /// As [`inverse`](Self::inverse) but infinite outside the range.
    pub fn inverse_ext(&self, y: f64) -> f64 {
        let s = self.sign * y;
        if s < self.signed[0] {
            f64::NEG_INFINITY
        } else if s > self.signed[self.signed.len() - 1] {
            f64::INFINITY
        } else {
            self.inverse_signed(s)
        }
    }
}

/// Realised outcome for one buyer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GameOutcome {
    pub consume: bool,
    /// Consumer-set size seen by a consuming buyer, zero otherwise.
    pub set_size: usize,
    pub payment: f64,
}

impl GameOutcome {
    const ABSTAIN: GameOutcome = GameOutcome { consume: false, set_size: 0, payment: 0.0 };

    fn excluded(payment: f64) -> Self {
        Self { consume: false, set_size: 0, payment }
    }

    fn served(set_size: usize, payment: f64) -> Self {
        Self { consume: true, set_size, payment }
    }
}

/// A simultaneous-move game with a constructed symmetric equilibrium.
///
/// Payments depend only on the player's own action and realised outcome.
pub trait IndirectGame: Sync {
    type Action: Copy + PartialEq + fmt::Debug + Send + Sync;
    /// An action with the thresholds it imposes precomputed.
    type Play: Clone + Send + Sync;

    fn label(&self) -> &str;
    fn economy(&self) -> &Economy;
    /// Equilibrium action of a type.
    fn strategy(&self, theta: f64) -> Self::Action;
    fn prepare(&self, action: Self::Action) -> Self::Play;
    fn resolve(&self, own: &Self::Play, others: &[Self::Play]) -> GameOutcome;
    /// Deviation candidates: equilibrium actions of other types and off-path actions.
    fn deviation_grid(&self, count: usize) -> Vec<Self::Action>;
    /// Names of the numeric components of an action.
    fn action_columns(&self) -> &'static [&'static str];
    fn action_values(&self, action: Self::Action) -> Vec<f64>;

    /// Opponent types where the outcome may change regardless of own type.
    fn type_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Profiles that fall in an overlap of the outcome rules.
    fn is_ambiguous(&self, _own: &Self::Play, _others: &[Self::Play]) -> bool {
        false
    }

    fn outcome(&self, own: Self::Action, others: &[Self::Action]) -> GameOutcome {
        let others: Vec<Self::Play> = others.iter().map(|&a| self.prepare(a)).collect();
        self.resolve(&self.prepare(own), &others)
    }
}

/// Equilibrium actions on a type grid as CSV (`theta` then the action columns).
pub fn strategy_csv<G: IndirectGame>(game: &G, grid: &[f64]) -> Result<String> {
    let mut writer = csv_writer();
    let mut header = vec!["theta"];
    header.extend_from_slice(game.action_columns());
    writer.write_record(&header).map_err(csv_error)?;
    for &theta in grid {
        let mut row = vec![theta.to_string()];
        row.extend(game.action_values(game.strategy(theta)).iter().map(f64::to_string));
        writer.write_record(&row).map_err(csv_error)?;
    }
    finish_csv(writer)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Interim payments and consumption of buyer 0 at ascending types.
struct InterimTable {
    payment: Vec<f64>,
    q: Vec<Vec<f64>>,
}

fn interim_table(pairs: &PairInterim<'_>, thetas: &[f64]) -> Result<InterimTable> {
    let payment = pairs.envelope(thetas)?;
    let q = thetas.iter().map(|&t| pairs.allocation(t)).collect::<Result<Vec<_>>>()?;
    Ok(InterimTable { payment, q })
}

/// Expected payment conditional on consuming.
fn conditional_payment(pairs: &PairInterim<'_>, theta: f64, payment: f64, q: &[f64]) -> Result<f64> {
    let total: f64 = q.iter().sum();
    if total >= CONDITIONAL_CUTOFF {
        return Ok(payment / total);
    }
    pairs
        .point(theta)?
        .1
        .ok_or_else(|| Error::Precondition(format!("type {theta} never consumes inside its tier")))
}

/// Opponent type where `residual(θ, ·)` changes sign, tabulated over own
/// types in `[lo, hi]`. Without a sign change the nearer support end is used.
fn boundary_curve(economy: &Economy, lo: f64, hi: f64, residual: impl Fn(f64, f64) -> f64) -> Result<MonotoneTable> {
    let upper = economy.upper();
    MonotoneTable::tabulate(lo, hi, TABLE_KNOTS, |theta| {
        let r = |t: f64| residual(theta, t);
        bisect_root(0.0, upper, BOUNDARY_ROOT_TOLERANCE, r).unwrap_or_else(|| {
            let (a, b) = (r(0.0), r(upper));
            if (a > 0.0) == (b > a) {
                0.0
            } else {
                upper
            }
        })
    })
}

/// Type cutoffs `x < y < z` delimiting the four action tiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TierCutoffs {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

fn four_region_cutoffs(economy: &Economy, expected: EffectSign) -> Result<TierCutoffs> {
    match benchmark_cutoffs(economy)? {
        BenchmarkCutoffs::FourRegion { x, y, z, sign } if sign == expected => Ok(TierCutoffs { x, y, z }),
        other => Err(Error::OutsideRegime(format!("needs four regions with {expected:?} value effects, found {other:?}"))),
    }
}

/// Action tier of a two-dimensional game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tier {
    Abstain,
    Low,
    Middle,
    Top,
    /// Off-path: pays the price, never consumes.
    Dominated,
}

fn within(value: f64, (lo, hi): (f64, f64)) -> bool {
    value >= lo && value <= hi
}

/// Appends off-path actions and fills the rest with equilibrium actions of
/// equally spaced types.
fn mixed_grid<A: Copy>(upper: f64, count: usize, off_path: Vec<A>, strategy: impl Fn(f64) -> A) -> Vec<A> {
    let extra = off_path.len().min(count / 2);
    let mut grid: Vec<A> = uniform_grid(0.0, upper, (count - extra).max(1)).into_iter().map(strategy).collect();
    grid.extend(off_path.into_iter().take(extra));
    grid.truncate(count);
    grid
}

/// Build options for [`build_allpay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllPayOptions {
    /// Knots of the interim payment table.
    pub knots: usize,
    /// Opponent draws for the Monte Carlo schedule (more than two buyers).
    pub draws: usize,
    pub seed: u64,
    /// Resolution of the served-type search.
    pub search_resolution: usize,
}

impl Default for AllPayOptions {
    fn default() -> Self {
        Self { knots: TABLE_KNOTS, draws: 4_000, seed: 0, search_resolution: 201 }
    }
}

/// All-pay contribution game: every buyer pays the selected price, and the
/// allocation treats admissible prices as reports of the type that pays
/// that interim amount.
#[derive(Debug, Clone)]
pub struct AllPayGame {
    economy: Economy,
    bounds: ServedBounds,
    payments: MonotoneTable,
    admissible: (f64, f64),
}

/// A price with the type it reveals, if admissible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllPayPlay {
    pub price: f64,
    pub revealed: Option<f64>,
}

impl AllPayGame {
    pub fn served_bounds(&self) -> ServedBounds {
        self.bounds
    }

    /// Prices `[M(y̲), M(ȳ)]` that map to a type; others besides zero are dominated.
    pub fn admissible_prices(&self) -> (f64, f64) {
        self.admissible
    }

    pub fn payment_table(&self) -> &MonotoneTable {
        &self.payments
    }
}

impl fmt::Display for AllPayGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "game: all-pay contribution")?;
        writeln!(f, "served types: [{}, {}]", self.bounds.y_lower, self.bounds.y_upper)?;
        write!(f, "admissible prices: [{}, {}]", self.admissible.0, self.admissible.1)
    }
}

/// Locates jumps of the interim gross value between grid points by
/// bisection down to adjacent floats.
fn gross_jumps(pairs: &PairInterim<'_>, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let economy = pairs.economy();
    let gross = |t: f64| -> Result<f64> {
        Ok(pairs.allocation(t)?.iter().enumerate().map(|(k, q)| q * economy.value(t, k + 1)).sum())
    };
    let values = grid.iter().map(|&t| gross(t)).collect::<Result<Vec<_>>>()?;
    let steps: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut brackets = Vec::new();
    for i in 0..steps.len() {
        let neighbour = steps.get(i.wrapping_sub(1)).copied().unwrap_or(0.0).max(steps.get(i + 1).copied().unwrap_or(0.0));
        if steps[i] <= 1e-6 || steps[i] <= 5.0 * neighbour {
            continue;
        }
        let (mut a, mut b) = (grid[i], grid[i + 1]);
        let (mut ga, mut gb) = (values[i], values[i + 1]);
        loop {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let gm = gross(mid)?;
            if (gm - ga).abs() >= (gb - gm).abs() {
                b = mid;
                gb = gm;
            } else {
                a = mid;
                ga = gm;
            }
        }
        if (gb - ga).abs() > 0.5 * steps[i] {
            brackets.push((a, b));
        }
    }
    Ok(brackets)
}

fn pair_payment_table(economy: &Economy, bounds: &ServedBounds, knots: usize) -> Result<MonotoneTable> {
    let pairs = PairInterim::new(economy, 0)?;
    let upper = economy.upper();
    let mut grid = uniform_grid(0.0, upper, knots);
    grid.extend([bounds.y_lower, bounds.y_upper]);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let brackets = gross_jumps(&pairs, &grid)?;
    for &(a, b) in &brackets {
        grid.extend([a, b]);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let payments = pairs.envelope(&grid)?;
    let (grid, payments) = refine_kinks(&pairs, grid, payments, &brackets)?;
    let jumps: Vec<usize> = brackets.iter().filter_map(|&(a, _)| grid.iter().position(|&t| t == a)).collect();
    Ok(MonotoneTable::new(grid, payments)?.with_jumps(&jumps))
}

/// Bisects every non-jump interval whose midpoint deviates from the linear
/// interpolant by more than [`REFINE_TOLERANCE`].
fn refine_kinks(
    pairs: &PairInterim<'_>,
    mut grid: Vec<f64>,
    mut payments: Vec<f64>,
    jumps: &[(f64, f64)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut suspects: Vec<(f64, f64, f64, f64)> = grid
        .windows(2)
        .zip(payments.windows(2))
        .filter(|(x, _)| !jumps.iter().any(|&(a, _)| a == x[0]))
        .map(|(x, y)| (x[0], x[1], y[0], y[1]))
        .collect();
    for _ in 0..REFINE_ROUNDS {
        suspects.retain(|&(a, b, _, _)| b - a > 1e-12);
        if suspects.is_empty() {
            break;
        }
        let mids: Vec<f64> = suspects.iter().map(|&(a, b, _, _)| 0.5 * (a + b)).collect();
        let values = suspects
            .iter()
            .zip(&mids)
            .map(|(&(a, _, ya, _), &m)| pairs.envelope_step(a, ya, m))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::new();
        for ((&(a, b, ya, yb), &m), &ym) in suspects.iter().zip(&mids).zip(&values) {
            if (ym - 0.5 * (ya + yb)).abs() > REFINE_TOLERANCE {
                grid.push(m);
                payments.push(ym);
                next.extend([(a, m, ya, ym), (m, b, ym, yb)]);
            }
        }
        suspects = next;
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| grid[i].total_cmp(&grid[j]));
    Ok((order.iter().map(|&i| grid[i]).collect(), order.iter().map(|&i| payments[i]).collect()))
}

/// Builds the all-pay contribution game from the interim payment schedule:
/// exact quadrature for two buyers, common-draw Monte Carlo otherwise.
pub fn build_allpay(economy: &Economy, options: AllPayOptions) -> Result<AllPayGame> {
    if options.knots < 2 {
        return Err(Error::InvalidArgument("the payment table needs at least two knots".into()));
    }
    let bounds = served_bounds(economy, options.search_resolution)?;
    let payments = if economy.n() == 2 {
        pair_payment_table(economy, &bounds, options.knots)?
    } else {
        let grid = uniform_grid(0.0, economy.upper(), options.knots);
        let method = InterimMethod::MonteCarlo { seed: options.seed, draws: options.draws };
        MonotoneTable::new(grid.clone(), interim_schedule(economy, 0, &grid, method)?.payments())?
    };
    if !payments.is_increasing() && payments.range().0 != payments.range().1 {
        return Err(Error::Precondition("interim payments decrease with type".into()));
    }
    let admissible = (payments.eval(bounds.y_lower), payments.eval(economy.upper()));
    Ok(AllPayGame { economy: economy.clone(), bounds, payments, admissible })
}

impl IndirectGame for AllPayGame {
    type Action = f64;
    type Play = AllPayPlay;

    fn label(&self) -> &str {
        "allpay"
    }

    fn economy(&self) -> &Economy {
        &self.economy
    }

    fn strategy(&self, theta: f64) -> f64 {
        if theta < self.bounds.y_lower {
            0.0
        } else if theta < self.bounds.y_upper {
            self.payments.eval(theta)
        } else {
            self.admissible.1
        }
    }

    fn prepare(&self, price: f64) -> AllPayPlay {
        let revealed = within(price, self.admissible).then(|| self.payments.inverse(price));
        AllPayPlay { price, revealed }
    }

    fn resolve(&self, own: &AllPayPlay, others: &[AllPayPlay]) -> GameOutcome {
        let Some(theta) = own.revealed else {
            return GameOutcome::excluded(own.price);
        };
        // Abstaining or dominated opponents are treated as the lowest type.
        let (consume, size) = match others {
            [other] => outcome_pair(&self.economy, theta, other.revealed.unwrap_or(0.0), 0),
            _ => {
                let mut profile = Vec::with_capacity(others.len() + 1);
                profile.push(theta);
                profile.extend(others.iter().map(|o| o.revealed.unwrap_or(0.0)));
                outcome_for(&self.economy, &profile, 0)
            }
        };
        GameOutcome { consume, set_size: size, payment: own.price }
    }

    fn deviation_grid(&self, count: usize) -> Vec<f64> {
        let (low, high) = self.admissible;
        let off_path = vec![
            0.25 * low,
            0.5 * low,
            0.99 * low,
            1.01 * high,
            1.05 * high,
            1.1 * high,
            1.5 * high,
            2.0 * high,
        ];
        debug_assert_eq!(off_path.len(), OFF_PATH_ACTIONS);
        mixed_grid(self.economy.upper(), count, off_path, |t| self.strategy(t))
    }

    fn action_columns(&self) -> &'static [&'static str] {
        &["price"]
    }

    fn action_values(&self, price: f64) -> Vec<f64> {
        vec![price]
    }

    fn type_breakpoints(&self) -> Vec<f64> {
        vec![self.bounds.y_lower, self.bounds.y_upper]
    }
}

/// Tier maps shared by the two-buyer games, tabulated on the open tiers.
struct TierSchedules<'a> {
    pairs: PairInterim<'a>,
    cutoffs: TierCutoffs,
    upper: f64,
}

impl<'a> TierSchedules<'a> {
    fn new(economy: &'a Economy, cutoffs: TierCutoffs) -> Result<Self> {
        Ok(Self { pairs: PairInterim::new(economy, 0)?, cutoffs, upper: economy.upper() })
    }

    fn tiers(&self) -> [(f64, f64); 3] {
        let TierCutoffs { x, y, z } = self.cutoffs;
        [(x + LIMIT_OFFSET, y - LIMIT_OFFSET), (y + LIMIT_OFFSET, z - LIMIT_OFFSET), (z + LIMIT_OFFSET, self.upper)]
    }

    /// Interim payment at a single type.
    fn payment_at(&self, theta: f64) -> Result<f64> {
        Ok(self.pairs.point(theta)?.0.payment)
    }

    /// Tabulates `map(θ, M, Q)` on tier `index`.
    fn tabulate(&self, index: usize, map: impl Fn(f64, f64, &[f64]) -> Result<f64>) -> Result<MonotoneTable> {
        let (lo, hi) = self.tiers()[index];
        let grid = uniform_grid(lo, hi, TABLE_KNOTS);
        let table = interim_table(&self.pairs, &grid)?;
        let values = grid
            .iter()
            .zip(table.payment.iter().zip(&table.q))
            .map(|(&t, (&m, q))| map(t, m, q))
            .collect::<Result<Vec<_>>>()?;
        MonotoneTable::new(grid, values)
    }
}

fn require_strict(name: &str, table: &MonotoneTable) -> Result<()> {
    if table.is_increasing() && table.is_strictly_monotone() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("strategy map {name} is not strictly increasing")))
    }
}

/// Price-and-subsidy game for positive value effects.
///
/// Tiers: abstain `(0, 0)`; low types post the entry price with a subsidy
/// request paid only when served; middle types post a price that is always
/// paid; top types post the top price plus a subsidy and are always served.
#[derive(Debug, Clone)]
pub struct GiftGame {
    economy: Economy,
    cutoffs: TierCutoffs,
    entry_price: f64,
    top_price: f64,
    subsidy_low: MonotoneTable,
    price_middle: MonotoneTable,
    subsidy_top: MonotoneTable,
    /// Opponent type above which a low type is served jointly.
    partner_for_low: MonotoneTable,
    /// Opponent type above which a middle type is served jointly.
    partner_for_middle: MonotoneTable,
}

/// Action of the gift game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GiftAction {
    pub price: f64,
    pub subsidy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GiftPlay {
    pub tier: Tier,
    pub action: GiftAction,
    /// Low tier: smallest top-tier subsidy that serves this player.
    /// Middle tier: smallest opponent price that serves this player.
    pub threshold: f64,
}

/// Builds the gift game for the `π` family with uniform types on `[0, 1]`.
pub fn build_gift_game(pi: f64, cost: f64) -> Result<GiftGame> {
    let economy = presets::pi_family(pi, cost)?;
    let cutoffs = four_region_cutoffs(&economy, EffectSign::Positive)?;
    let schedules = TierSchedules::new(&economy, cutoffs)?;
    let entry_price = schedules.payment_at(cutoffs.y - LIMIT_OFFSET)?;
    let top_price = schedules.payment_at(cutoffs.z - LIMIT_OFFSET)?;
    let pairs = &schedules.pairs;
    let subsidy_low = schedules.tabulate(0, |t, m, q| Ok(conditional_payment(pairs, t, m, q)? - entry_price))?;
    let price_middle = schedules.tabulate(1, |_, m, _| Ok(m))?;
    let subsidy_top = schedules.tabulate(2, |_, m, _| Ok(m - top_price))?;
    for (name, table) in [("low subsidy", &subsidy_low), ("middle price", &price_middle), ("top subsidy", &subsidy_top)] {
        require_strict(name, table)?;
    }
    let psi = |t: f64, k: usize| economy.psi(t, k);
    let c = economy.cost();
    let partner_for_low = boundary_curve(&economy, cutoffs.x, cutoffs.y, |a, t| psi(a, 2) + psi(t, 2) - psi(t, 1))?;
    let partner_for_middle = boundary_curve(&economy, cutoffs.y, cutoffs.z, |a, t| psi(a, 2) + psi(t, 2) - c)?;
    Ok(GiftGame {
        economy,
        cutoffs,
        entry_price,
        top_price,
        subsidy_low,
        price_middle,
        subsidy_top,
        partner_for_low,
        partner_for_middle,
    })
}

impl GiftGame {
    pub fn cutoffs(&self) -> TierCutoffs {
        self.cutoffs
    }

    /// Price of the low tier.
    pub fn entry_price(&self) -> f64 {
        self.entry_price
    }

    /// Price of the top tier.
    pub fn top_price(&self) -> f64 {
        self.top_price
    }

    /// Strategy maps of the low, middle and top tiers.
    pub fn strategy_maps(&self) -> [&MonotoneTable; 3] {
        [&self.subsidy_low, &self.price_middle, &self.subsidy_top]
    }

    pub fn tier_of(&self, action: GiftAction) -> Tier {
        let GiftAction { price, subsidy } = action;
        if price == 0.0 && subsidy == 0.0 {
            Tier::Abstain
        } else if price == self.entry_price && within(subsidy, self.subsidy_low.range()) {
            Tier::Low
        } else if subsidy == 0.0 && price > self.entry_price && price <= self.top_price {
            Tier::Middle
        } else if price == self.top_price && within(subsidy, self.subsidy_top.range()) {
            Tier::Top
        } else {
            Tier::Dominated
        }
    }
}

impl fmt::Display for GiftGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let TierCutoffs { x, y, z } = self.cutoffs;
        writeln!(f, "game: price and subsidy")?;
        writeln!(f, "cutoffs: x = {x}, y = {y}, z = {z}")?;
        writeln!(f, "entry price: {}", self.entry_price)?;
        writeln!(f, "top price: {}", self.top_price)?;
        writeln!(f, "low subsidies: {:?}", self.subsidy_low.range())?;
        write!(f, "top subsidies: {:?}", self.subsidy_top.range())
    }
}

impl IndirectGame for GiftGame {
    type Action = GiftAction;
    type Play = GiftPlay;

    fn label(&self) -> &str {
        "gift"
    }

    fn economy(&self) -> &Economy {
        &self.economy
    }

    fn strategy(&self, theta: f64) -> GiftAction {
        let TierCutoffs { x, y, z } = self.cutoffs;
        if theta <= x {
            GiftAction { price: 0.0, subsidy: 0.0 }
        } else if theta <= y {
            GiftAction { price: self.entry_price, subsidy: self.subsidy_low.eval(theta) }
        } else if theta <= z {
            GiftAction { price: self.price_middle.eval(theta), subsidy: 0.0 }
        } else {
            GiftAction { price: self.top_price, subsidy: self.subsidy_top.eval(theta) }
        }
    }

    fn prepare(&self, action: GiftAction) -> GiftPlay {
        let tier = self.tier_of(action);
        let threshold = match tier {
            Tier::Low => {
                let revealed = self.subsidy_low.inverse(action.subsidy);
                self.subsidy_top.eval_ext(self.partner_for_low.eval(revealed))
            }
            Tier::Middle => {
                let revealed = self.price_middle.inverse(action.price);
                self.price_middle.eval_ext(self.partner_for_middle.eval(revealed))
            }
            _ => f64::NAN,
        };
        GiftPlay { tier, action, threshold }
    }

    fn resolve(&self, own: &GiftPlay, others: &[GiftPlay]) -> GameOutcome {
        let other = &others[0];
        let GiftAction { price, subsidy } = own.action;
        match own.tier {
            Tier::Abstain => GameOutcome::ABSTAIN,
            Tier::Dominated => GameOutcome::excluded(price),
            Tier::Low => {
                if other.tier == Tier::Top && other.action.subsidy >= own.threshold {
                    GameOutcome::served(2, price + subsidy)
                } else {
                    GameOutcome::ABSTAIN
                }
            }
            Tier::Middle => {
                let partner = matches!(other.tier, Tier::Middle | Tier::Top) && other.action.price >= own.threshold;
                if partner {
                    GameOutcome::served(2, price)
                } else {
                    GameOutcome::excluded(price)
                }
            }
            Tier::Top => {
                let joint = match other.tier {
                    Tier::Middle | Tier::Top => true,
                    Tier::Low => subsidy >= other.threshold,
                    Tier::Abstain | Tier::Dominated => false,
                };
                GameOutcome::served(if joint { 2 } else { 1 }, price + subsidy)
            }
        }
    }

    fn deviation_grid(&self, count: usize) -> Vec<GiftAction> {
        let (low_min, low_max) = self.subsidy_low.range();
        let (top_min, top_max) = self.subsidy_top.range();
        let middle = 0.5 * (self.entry_price + self.top_price);
        let action = |price, subsidy| GiftAction { price, subsidy };
        let off_path = vec![
            action(self.entry_price, low_max + 0.01),
            action(self.entry_price, low_min - 0.01),
            action(middle, 0.05),
            action(self.top_price, top_max + 0.05),
            action(self.top_price, 0.5 * top_min),
            action(1.1 * self.top_price, 0.0),
            action(0.5 * self.entry_price, 0.0),
            action(0.0, 0.1),
        ];
        debug_assert_eq!(off_path.len(), OFF_PATH_ACTIONS);
        mixed_grid(self.economy.upper(), count, off_path, |t| self.strategy(t))
    }

    fn action_columns(&self) -> &'static [&'static str] {
        &["price", "subsidy"]
    }

    fn action_values(&self, action: GiftAction) -> Vec<f64> {
        vec![action.price, action.subsidy]
    }

    fn type_breakpoints(&self) -> Vec<f64> {
        vec![self.cutoffs.x, self.cutoffs.y, self.cutoffs.z]
    }
}

/// Subscription game with exclusivity bids for negative value effects.
///
/// Tiers: abstain `(0, 0)`; low types post a flexible price paid only when
/// served, always jointly; subscribers pay a fixed fee and bid to consume
/// alone; premium subscribers pay a higher fee, are always served and bid
/// to consume alone. Bids are paid only when consuming alone.
#[derive(Debug, Clone)]
pub struct ExclusivityGame {
    economy: Economy,
    cutoffs: TierCutoffs,
    subscription_fee: f64,
    premium_fee: f64,
    price_low: MonotoneTable,
    bid_middle: MonotoneTable,
    bid_top: MonotoneTable,
    /// Opponent type above which a low type reaches the provision line.
    joint_floor: MonotoneTable,
    /// Opponent type below which a type is served jointly rather than the opponent alone.
    joint_ceiling: MonotoneTable,
    /// Opponent type below which a type consumes alone.
    solo_ceiling: MonotoneTable,
}

/// Action of the exclusivity game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExclusivityAction {
    pub price: f64,
    pub bid: f64,
}

/// Thresholds an action imposes on the opponent's outcome rules; unused
/// entries are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExclusivityPlay {
    pub tier: Tier,
    pub action: ExclusivityAction,
    /// Low tier: smallest low-tier opponent price giving joint service.
    pub partner_price: f64,
    /// Low tier: opponent subscriber bids below this keep joint service.
    pub subscriber_bid_cap: f64,
    /// Low tier: opponent premium bids below this keep joint service.
    pub premium_bid_cap: f64,
    /// Low or middle tier: subscriber bid that buys exclusivity against this player.
    pub subscriber_solo_bid: f64,
    /// Middle or top tier: subscriber bids at or below this are excluded by this player.
    pub subscriber_exclusion_bid: f64,
    /// Middle tier: premium bid that buys exclusivity against this player.
    pub premium_solo_bid: f64,
}

/// Builds the exclusivity game for the `π` family with uniform types on `[0, 1]`.
pub fn build_exclusivity_game(pi: f64, cost: f64) -> Result<ExclusivityGame> {
    let economy = presets::pi_family(pi, cost)?;
    let cutoffs = four_region_cutoffs(&economy, EffectSign::Negative)?;
    let schedules = TierSchedules::new(&economy, cutoffs)?;
    let subscription_fee = schedules.payment_at(cutoffs.y + LIMIT_OFFSET)?;
    let premium_fee = schedules.payment_at(cutoffs.z + LIMIT_OFFSET)?;
    let pairs = &schedules.pairs;
    let price_low = schedules.tabulate(0, |t, m, q| conditional_payment(pairs, t, m, q))?;
    let solo_bid = |fee: f64| {
        move |t: f64, m: f64, q: &[f64]| {
            if q[0] <= 0.0 {
                return Err(Error::Precondition(format!("type {t} never consumes alone inside its tier")));
            }
            Ok((m - fee) / q[0])
        }
    };
    let bid_middle = schedules.tabulate(1, solo_bid(subscription_fee))?;
    let bid_top = schedules.tabulate(2, solo_bid(premium_fee))?;
    for (name, table) in [("low price", &price_low), ("subscriber bid", &bid_middle), ("premium bid", &bid_top)] {
        require_strict(name, table)?;
    }
    let (low_min, low_max) = price_low.range();
    if !(low_min > 0.0 && low_max < subscription_fee && subscription_fee < premium_fee) {
        return Err(Error::Precondition(format!(
            "price tiers overlap: low prices [{low_min}, {low_max}], fees {subscription_fee} and {premium_fee}"
        )));
    }
    let psi = |t: f64, k: usize| economy.psi(t, k);
    let c = economy.cost();
    let upper = economy.upper();
    let joint_floor = boundary_curve(&economy, cutoffs.x, cutoffs.y, |a, t| psi(a, 2) + psi(t, 2) - c)?;
    let joint_ceiling = boundary_curve(&economy, cutoffs.x, cutoffs.z, |a, t| psi(a, 2) + psi(t, 2) - psi(t, 1))?;
    let solo_ceiling = boundary_curve(&economy, cutoffs.y, upper, |a, t| psi(a, 1) - psi(a, 2) - psi(t, 2))?;
    Ok(ExclusivityGame {
        economy,
        cutoffs,
        subscription_fee,
        premium_fee,
        price_low,
        bid_middle,
        bid_top,
        joint_floor,
        joint_ceiling,
        solo_ceiling,
    })
}

impl ExclusivityGame {
    pub fn cutoffs(&self) -> TierCutoffs {
        self.cutoffs
    }

    pub fn subscription_fee(&self) -> f64 {
        self.subscription_fee
    }

    pub fn premium_fee(&self) -> f64 {
        self.premium_fee
    }

    /// Strategy maps of the low, middle and top tiers.
    pub fn strategy_maps(&self) -> [&MonotoneTable; 3] {
        [&self.price_low, &self.bid_middle, &self.bid_top]
    }

    pub fn tier_of(&self, action: ExclusivityAction) -> Tier {
        let ExclusivityAction { price, bid } = action;
        if price == 0.0 && bid == 0.0 {
            Tier::Abstain
        } else if bid == 0.0 && within(price, self.price_low.range()) {
            Tier::Low
        } else if price == self.subscription_fee && within(bid, (0.0, self.bid_middle.range().1)) {
            Tier::Middle
        } else if price == self.premium_fee && within(bid, (0.0, self.bid_top.range().1)) {
            Tier::Top
        } else {
            Tier::Dominated
        }
    }
}

impl fmt::Display for ExclusivityGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let TierCutoffs { x, y, z } = self.cutoffs;
        writeln!(f, "game: subscription tiers with exclusivity bids")?;
        writeln!(f, "cutoffs: x = {x}, y = {y}, z = {z}")?;
        writeln!(f, "low prices: {:?}", self.price_low.range())?;
        writeln!(f, "subscription fee: {}", self.subscription_fee)?;
        writeln!(f, "premium fee: {}", self.premium_fee)?;
        writeln!(f, "subscriber bids: {:?}", self.bid_middle.range())?;
        write!(f, "premium bids: {:?}", self.bid_top.range())
    }
}

impl IndirectGame for ExclusivityGame {
    type Action = ExclusivityAction;
    type Play = ExclusivityPlay;

    fn label(&self) -> &str {
        "exclusivity"
    }

    fn economy(&self) -> &Economy {
        &self.economy
    }

    fn strategy(&self, theta: f64) -> ExclusivityAction {
        let TierCutoffs { x, y, z } = self.cutoffs;
        if theta <= x {
            ExclusivityAction { price: 0.0, bid: 0.0 }
        } else if theta <= y {
            ExclusivityAction { price: self.price_low.eval(theta), bid: 0.0 }
        } else if theta <= z {
            ExclusivityAction { price: self.subscription_fee, bid: self.bid_middle.eval(theta) }
        } else {
            ExclusivityAction { price: self.premium_fee, bid: self.bid_top.eval(theta) }
        }
    }

    fn prepare(&self, action: ExclusivityAction) -> ExclusivityPlay {
        let tier = self.tier_of(action);
        let mut play = ExclusivityPlay {
            tier,
            action,
            partner_price: f64::NAN,
            subscriber_bid_cap: f64::NAN,
            premium_bid_cap: f64::NAN,
            subscriber_solo_bid: f64::NAN,
            subscriber_exclusion_bid: f64::NAN,
            premium_solo_bid: f64::NAN,
        };
        let solo_partner = |t: f64| self.solo_ceiling.inverse_ext(t);
        let excluded_partner = |t: f64| self.joint_ceiling.inverse_ext(t);
        match tier {
            Tier::Low => {
                let t = self.price_low.inverse(action.price);
                play.partner_price = self.price_low.eval_ext(self.joint_floor.eval(t));
                play.subscriber_bid_cap = self.bid_middle.eval_ext(self.joint_ceiling.eval(t));
                play.premium_bid_cap = self.bid_top.eval_ext(self.joint_ceiling.eval(t));
                play.subscriber_solo_bid = self.bid_middle.eval_ext(solo_partner(t));
            }
            Tier::Middle => {
                let t = self.bid_middle.inverse(action.bid);
                play.subscriber_solo_bid = self.bid_middle.eval_ext(solo_partner(t));
                play.subscriber_exclusion_bid = self.bid_middle.eval_ext(excluded_partner(t));
                play.premium_solo_bid = self.bid_top.eval_ext(solo_partner(t));
            }
            Tier::Top => {
                let t = self.bid_top.inverse(action.bid);
                play.subscriber_exclusion_bid = self.bid_middle.eval_ext(excluded_partner(t));
            }
            Tier::Abstain | Tier::Dominated => {}
        }
        play
    }

    fn resolve(&self, own: &ExclusivityPlay, others: &[ExclusivityPlay]) -> GameOutcome {
        let other = &others[0];
        let ExclusivityAction { price, bid } = own.action;
        match own.tier {
            Tier::Abstain => GameOutcome::ABSTAIN,
            Tier::Dominated => GameOutcome::excluded(price),
            Tier::Low => {
                let joint = match other.tier {
                    Tier::Low => other.action.price >= own.partner_price,
                    Tier::Middle => other.action.bid < own.subscriber_bid_cap,
                    Tier::Top => other.action.bid < own.premium_bid_cap,
                    Tier::Abstain | Tier::Dominated => false,
                };
                if joint {
                    GameOutcome::served(2, price)
                } else {
                    GameOutcome::ABSTAIN
                }
            }
            Tier::Middle => {
                let solo = GameOutcome::served(1, price + bid);
                let joint = GameOutcome::served(2, price);
                match other.tier {
                    Tier::Abstain | Tier::Dominated => solo,
                    Tier::Low if bid >= other.subscriber_solo_bid => solo,
                    Tier::Low => joint,
                    Tier::Middle if bid >= other.subscriber_solo_bid => solo,
                    Tier::Middle | Tier::Top if bid <= other.subscriber_exclusion_bid => GameOutcome::excluded(price),
                    Tier::Middle | Tier::Top => joint,
                }
            }
            Tier::Top => {
                let solo = GameOutcome::served(1, price + bid);
                match other.tier {
                    Tier::Abstain | Tier::Dominated | Tier::Low => solo,
                    Tier::Middle if bid >= other.premium_solo_bid => solo,
                    Tier::Middle | Tier::Top => GameOutcome::served(2, price),
                }
            }
        }
    }

    fn deviation_grid(&self, count: usize) -> Vec<ExclusivityAction> {
        let (low_min, low_max) = self.price_low.range();
        let action = |price, bid| ExclusivityAction { price, bid };
        let off_path = vec![
            action(self.subscription_fee, self.bid_middle.range().1 + 0.02),
            action(self.premium_fee, self.bid_top.range().1 + 0.02),
            action(0.5 * (low_max + self.subscription_fee), 0.0),
            action(self.subscription_fee, -0.01),
            action(0.5 * low_min, 0.0),
            action(1.1 * self.premium_fee, 0.0),
            action(low_max, 0.05),
            action(0.0, 0.05),
        ];
        debug_assert_eq!(off_path.len(), OFF_PATH_ACTIONS);
        mixed_grid(self.economy.upper(), count, off_path, |t| self.strategy(t))
    }

    fn action_columns(&self) -> &'static [&'static str] {
        &["price", "bid"]
    }

    fn action_values(&self, action: ExclusivityAction) -> Vec<f64> {
        vec![action.price, action.bid]
    }

    fn type_breakpoints(&self) -> Vec<f64> {
        vec![self.cutoffs.x, self.cutoffs.y, self.cutoffs.z]
    }

    fn is_ambiguous(&self, own: &ExclusivityPlay, others: &[ExclusivityPlay]) -> bool {
        let other = &others[0];
        own.tier == Tier::Middle
            && other.tier == Tier::Middle
            && other.subscriber_exclusion_bid >= other.subscriber_solo_bid
            && own.action.bid >= other.subscriber_solo_bid
            && own.action.bid <= other.subscriber_exclusion_bid
    }
}

/// Opponent profiles with each coordinate stratified over the quantiles and
/// independently shuffled.
pub fn stratified_opponents(economy: &Economy, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = economy.distribution();
    let columns: Vec<Vec<f64>> = (1..economy.n())
        .map(|_| {
            let mut column: Vec<f64> =
                (0..draws).map(|i| dist.quantile((i as f64 + rng.gen::<f64>()) / draws as f64)).collect();
            column.shuffle(&mut rng);
            column
        })
        .collect();
    (0..draws).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

/// Worst deviation found for one type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationRow {
    pub theta: f64,
    /// Expected payoff under the equilibrium strategy.
    pub payoff: f64,
    pub payoff_stderr: f64,
    /// Index into the report's deviation list of the largest gain.
    pub best_deviation: usize,
    pub gain: f64,
    pub gain_stderr: f64,
    /// Largest `gain − 2·SE` over all deviations.
    pub worst_margin: f64,
}

/// Lattice comparison with the direct mechanism.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceSummary {
    pub resolution: usize,
    pub mismatches_outside_band: usize,
    pub mismatches_in_band: usize,
    /// Up to five mismatched profiles outside the band.
    pub mismatch_examples: Vec<(f64, f64)>,
    /// Profiles hitting an overlap of the outcome rules.
    pub ambiguous_profiles: usize,
    pub max_payment_error: f64,
    pub payment_witness: f64,
    /// Lattice types within the limit offset of a tier cutoff, left out of the payment comparison.
    pub payment_skipped: usize,
}

impl EquivalenceSummary {
    pub fn passed(&self) -> bool {
        self.mismatches_outside_band == 0 && self.max_payment_error <= PAYMENT_TOLERANCE
    }
}

/// Deviation sweep and outcome-equivalence results for one game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub game: String,
    pub draws: usize,
    pub seed: u64,
    /// Deviation actions, formatted.
    pub deviations: Vec<String>,
    pub rows: Vec<DeviationRow>,
    pub equivalence: Option<EquivalenceSummary>,
}

impl EquilibriumReport {
    /// Row with the largest deviation gain.
    pub fn worst_row(&self) -> Option<&DeviationRow> {
        self.rows.iter().max_by(|a, b| a.gain.total_cmp(&b.gain))
    }

    pub fn equilibrium_passed(&self) -> bool {
        self.rows.iter().all(|r| r.worst_margin <= GAIN_SLACK)
    }

    pub fn passed(&self) -> bool {
        self.equilibrium_passed() && self.equivalence.as_ref().is_none_or(EquivalenceSummary::passed)
    }

    pub fn with_equivalence(mut self, other: EquilibriumReport) -> Self {
        self.equivalence = other.equivalence;
        self
    }

    /// Per-type worst deviations.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv_writer();
        writer
            .write_record(["theta", "payoff", "stderr_payoff", "best_deviation", "gain", "stderr_gain"])
            .map_err(csv_error)?;
        for row in &self.rows {
            let record = [
                row.theta.to_string(),
                row.payoff.to_string(),
                row.payoff_stderr.to_string(),
                self.deviations[row.best_deviation].clone(),
                row.gain.to_string(),
                row.gain_stderr.to_string(),
            ];
            writer.write_record(&record).map_err(csv_error)?;
        }
        finish_csv(writer)
    }
}

impl fmt::Display for EquilibriumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "game: {}", self.game)?;
        if !self.rows.is_empty() {
            writeln!(f, "types: {}, deviations: {}, draws: {}, seed: {}", self.rows.len(), self.deviations.len(), self.draws, self.seed)?;
            if let Some(row) = self.worst_row() {
                writeln!(
                    f,
                    "largest gain: {:e} (SE {:e}) at type {} deviating to {}",
                    row.gain, row.gain_stderr, row.theta, self.deviations[row.best_deviation]
                )?;
            }
            writeln!(f, "equilibrium: {}", if self.equilibrium_passed() { "PASS" } else { "FAIL" })?;
        }
        if let Some(eq) = &self.equivalence {
            writeln!(
                f,
                "lattice {0}x{0}: {1} mismatches outside the boundary band, {2} inside, {3} ambiguous",
                eq.resolution, eq.mismatches_outside_band, eq.mismatches_in_band, eq.ambiguous_profiles
            )?;
            writeln!(
                f,
                "largest interim payment error: {:e} at type {} ({} cutoff types skipped)",
                eq.max_payment_error, eq.payment_witness, eq.payment_skipped
            )?;
            writeln!(f, "equivalence: {}", if eq.passed() { "PASS" } else { "FAIL" })?;
        }
        write!(f, "verdict: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Outcome codes (set size if served, else 0) of one action against every
/// opponent draw, and the payment attached to each code.
struct ActionRecord {
    codes: Vec<u8>,
    payment_by_code: Vec<f64>,
}

fn record_action<G: IndirectGame>(game: &G, action: G::Action, opponents: &[Vec<G::Play>]) -> Result<ActionRecord> {
    let own = game.prepare(action);
    let mut payment_by_code = vec![f64::NAN; game.economy().n() + 1];
    let mut codes = Vec::with_capacity(opponents.len());
    for others in opponents {
        let outcome = game.resolve(&own, others);
        let code = if outcome.consume { outcome.set_size } else { 0 };
        let stored = &mut payment_by_code[code];
        if stored.is_nan() {
            *stored = outcome.payment;
        } else if (*stored - outcome.payment).abs() > 1e-12 * stored.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "payment of action {action:?} varies within one outcome ({} vs {})",
                stored, outcome.payment
            )));
        }
        codes.push(code as u8);
    }
    Ok(ActionRecord { codes, payment_by_code })
}

fn mean_and_stderr(sum: f64, sum_sq: f64, count: f64) -> (f64, f64) {
    let mean = sum / count;
    let variance = ((sum_sq / count - mean * mean) * count / (count - 1.0)).max(0.0);
    (mean, (variance / count).sqrt())
}

/// Monte Carlo deviation sweep with common opponent draws.
///
/// For every type on `type_grid`, estimates the equilibrium payoff and the
/// gain from each action in `deviations`, with standard errors of the
/// paired differences.
pub fn verify_equilibrium<G: IndirectGame>(
    game: &G,
    type_grid: &[f64],
    deviations: &[G::Action],
    draws: usize,
    seed: u64,
) -> Result<EquilibriumReport> {
    let economy = game.economy();
    if type_grid.is_empty() || deviations.is_empty() {
        return Err(Error::InvalidArgument("type and deviation grids must be nonempty".into()));
    }
    if draws < 2 {
        return Err(Error::InvalidArgument("at least two opponent draws are needed".into()));
    }
    if let Some(&t) = type_grid.iter().find(|&&t| !(0.0..=economy.upper()).contains(&t)) {
        return Err(Error::OutOfSupport { buyer: 0, value: t, upper: economy.upper() });
    }
    let opponents: Vec<Vec<G::Play>> = stratified_opponents(economy, draws, seed)
        .into_iter()
        .map(|types| types.into_iter().map(|t| game.prepare(game.strategy(t))).collect())
        .collect();
    let records: Vec<ActionRecord> =
        deviations.par_iter().map(|&a| record_action(game, a, &opponents)).collect::<Result<_>>()?;
    let codes = economy.n() + 1;
    let count = draws as f64;
    let rows = type_grid
        .par_iter()
        .map(|&theta| -> Result<DeviationRow> {
            let truthful = record_action(game, game.strategy(theta), &opponents)?;
            let value: Vec<f64> = (0..codes).map(|k| if k == 0 { 0.0 } else { economy.value(theta, k) }).collect();
            let utility = |rec: &ActionRecord, code: usize| value[code] - rec.payment_by_code[code];
            let mut own_counts = vec![0usize; codes];
            for &c in &truthful.codes {
                own_counts[c as usize] += 1;
            }
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for (c, &n) in own_counts.iter().enumerate().filter(|(_, &n)| n > 0) {
                let u = utility(&truthful, c);
                sum += n as f64 * u;
                sum_sq += n as f64 * u * u;
            }
            let (payoff, payoff_stderr) = mean_and_stderr(sum, sum_sq, count);
            let mut row = DeviationRow {
                theta,
                payoff,
                payoff_stderr,
                best_deviation: 0,
                gain: f64::NEG_INFINITY,
                gain_stderr: 0.0,
                worst_margin: f64::NEG_INFINITY,
            };
            let mut joint = vec![0usize; codes * codes];
            for (d, rec) in records.iter().enumerate() {
                joint.iter_mut().for_each(|c| *c = 0);
                for (&a, &b) in rec.codes.iter().zip(&truthful.codes) {
                    joint[a as usize * codes + b as usize] += 1;
                }
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for (cell, &n) in joint.iter().enumerate().filter(|(_, &n)| n > 0) {
                    let diff = utility(rec, cell / codes) - utility(&truthful, cell % codes);
                    sum += n as f64 * diff;
                    sum_sq += n as f64 * diff * diff;
                }
                let (gain, stderr) = mean_and_stderr(sum, sum_sq, count);
                if gain > row.gain {
                    row.best_deviation = d;
                    row.gain = gain;
                    row.gain_stderr = stderr;
                }
                row.worst_margin = row.worst_margin.max(gain - 2.0 * stderr);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumReport {
        game: game.label().to_string(),
        draws,
        seed,
        deviations: deviations.iter().map(|a| format!("{a:?}")).collect(),
        rows,
        equivalence: None,
    })
}

/// Expected payment of type `theta` in the game's equilibrium, integrating
/// exactly over the opponent type.
pub fn equilibrium_interim_payment<G: IndirectGame>(game: &G, pairs: &PairInterim<'_>, theta: f64) -> Result<f64> {
    let economy = game.economy();
    let upper = economy.upper();
    let own = game.prepare(game.strategy(theta));
    let mut points = uniform_grid(0.0, upper, TABLE_KNOTS);
    for seg in pairs.segments(theta)? {
        points.extend([seg.lo, seg.hi]);
    }
    points.extend(game.type_breakpoints());
    points.retain(|t| (0.0..=upper).contains(t));
    points.sort_by(f64::total_cmp);
    points.dedup();
    let play = |t: f64| game.resolve(&own, &[game.prepare(game.strategy(t))]);
    let segments = locate_segments_on(&points, |t| {
        let o = play(t);
        (o.consume, o.set_size)
    })?;
    let dist = economy.distribution();
    Ok(segments.iter().map(|s| (dist.cdf(s.hi) - dist.cdf(s.lo)) * play(0.5 * (s.lo + s.hi)).payment).sum())
}

/// Plays the equilibrium on a `resolution²` lattice of type pairs and
/// compares consumption and set sizes with the direct mechanism, then
/// compares interim payments at the lattice types.
pub fn verify_outcome_equivalence<G: IndirectGame>(game: &G, resolution: usize) -> Result<EquilibriumReport> {
    let economy = game.economy();
    if economy.n() != 2 {
        return Err(Error::Precondition("outcome equivalence is checked for two buyers".into()));
    }
    let direct = region_grid(economy, resolution)?;
    let band = direct.boundary_band();
    let centres: Vec<f64> = (0..resolution).map(|i| direct.centre(i)).collect();
    let plays: Vec<G::Play> = centres.iter().map(|&t| game.prepare(game.strategy(t))).collect();
    let mut summary = EquivalenceSummary {
        resolution,
        mismatches_outside_band: 0,
        mismatches_in_band: 0,
        mismatch_examples: Vec::new(),
        ambiguous_profiles: 0,
        max_payment_error: 0.0,
        payment_witness: f64::NAN,
        payment_skipped: 0,
    };
    for i in 0..resolution {
        for j in 0..resolution {
            let first = game.resolve(&plays[i], std::slice::from_ref(&plays[j]));
            let second = game.resolve(&plays[j], std::slice::from_ref(&plays[i]));
            let label = RegionLabel::from_consumption(first.consume, second.consume);
            let consumers = first.consume as usize + second.consume as usize;
            let sizes_agree = [first, second].iter().all(|o| !o.consume || o.set_size == consumers);
            if game.is_ambiguous(&plays[i], std::slice::from_ref(&plays[j])) {
                summary.ambiguous_profiles += 1;
            }
            if label == direct.label(i, j) && sizes_agree {
                continue;
            }
            if band[i * resolution + j] {
                summary.mismatches_in_band += 1;
            } else {
                summary.mismatches_outside_band += 1;
                if summary.mismatch_examples.len() < 5 {
                    summary.mismatch_examples.push((centres[i], centres[j]));
                }
            }
        }
    }
    let pairs = PairInterim::new(economy, 0)?;
    let direct_payments = pairs.envelope(&centres)?;
    let game_payments = centres
        .par_iter()
        .map(|&t| equilibrium_interim_payment(game, &pairs, t))
        .collect::<Result<Vec<_>>>()?;
    let breakpoints = game.type_breakpoints();
    for ((&t, &direct_m), &game_m) in centres.iter().zip(&direct_payments).zip(&game_payments) {
        // A type on a tier cutoff has no single interim payment.
        if breakpoints.iter().any(|b| (t - b).abs() <= LIMIT_OFFSET) {
            summary.payment_skipped += 1;
            continue;
        }
        let error = (direct_m - game_m).abs();
        if error > summary.max_payment_error || summary.payment_witness.is_nan() {
            summary.max_payment_error = error;
            summary.payment_witness = t;
        }
    }
    Ok(EquilibriumReport {
        game: game.label().to_string(),
        draws: 0,
        seed: 0,
        deviations: Vec::new(),
        rows: Vec::new(),
        equivalence: Some(summary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_inverts_increasing_and_decreasing_maps() {
        let up = MonotoneTable::tabulate(0.0, 1.0, 11, |x| x * x).unwrap();
        assert!(up.is_increasing() && up.is_strictly_monotone());
        assert!((up.inverse(up.eval(0.37)) - 0.37).abs() < 1e-12);
        assert_eq!(up.eval_ext(-0.1), f64::NEG_INFINITY);
        assert_eq!(up.inverse_ext(1.5), f64::INFINITY);
        let down = MonotoneTable::tabulate(0.0, 1.0, 11, |x| 1.0 - x).unwrap();
        assert!(!down.is_increasing());
        assert!((down.inverse(0.25) - 0.75).abs() < 1e-12);
        assert_eq!(down.eval_ext(2.0), f64::NEG_INFINITY);
        assert_eq!(down.inverse_ext(2.0), f64::NEG_INFINITY);
    }

    #[test]
    fn flats_invert_to_their_left_end_and_jumps_to_the_low_side() {
        let flat = MonotoneTable::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(flat.inverse(0.0), 0.0);
        let step = MonotoneTable::new(vec![0.0, 0.5, 0.5 + 1e-13, 1.0], vec![0.0, 0.1, 0.9, 1.0]).unwrap().with_jumps(&[1]);
        assert_eq!(step.inverse(0.5), 0.5);
        assert_eq!(step.inverse(0.9), 0.5 + 1e-13);
    }

    #[test]
    fn reversals_are_rejected() {
        assert!(matches!(MonotoneTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5]), Err(Error::Precondition(_))));
        assert!(MonotoneTable::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
    }
}
