//! Checks of the computed mechanism: ex-post incentive sweeps, cutoff
//! partitions, region grids, the benchmark cutoffs of the two-buyer family
//! and the large-market posted-price limit.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocation::{outcome_for, solve_allocation, RankedProfile};
use crate::economy::{presets, Economy, ProfitNetworkEffect, TypeDistribution, ValuationModel};
use crate::error::{Error, Result};
use crate::payments::{csv_error, entry_cutoff, insert_own, opponent_draws, own_type_segments, transfer};
use crate::quadrature::{bisect_root, locate_segments};
use crate::report::VerificationReport;

/// Largest ex-post gain from misreporting accepted by [`check_dsic`].
pub const DSIC_TOLERANCE: f64 = 1e-8;
/// Most negative ex-post utility accepted by [`check_ir`].
pub const IR_TOLERANCE: f64 = 1e-10;

fn validate_grid(name: &str, grid: &[f64], upper: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if grid.iter().any(|&t| !(t >= 0.0 && t <= upper)) {
        return Err(Error::InvalidArgument(format!("{name} leaves the support")));
    }
    Ok(())
}

/// Ex-post outcome `(q, k, m)` of one buyer.
#[derive(Debug, Clone, Copy)]
struct OwnContract {
    consumes: bool,
    size: usize,
    payment: f64,
}

impl OwnContract {
    fn utility(&self, economy: &Economy, theta: f64) -> f64 {
        if self.consumes {
            economy.value(theta, self.size) - self.payment
        } else {
            -self.payment
        }
    }
}

fn contract(economy: &Economy, profile: &[f64], buyer: usize) -> Result<OwnContract> {
    let (consumes, size) = outcome_for(economy, profile, buyer);
    let payment = transfer(economy, profile, buyer)?;
    Ok(OwnContract { consumes, size, payment })
}

/// Ex-post dominant-strategy check: no report on `report_grid` beats the
/// truth for any type on `own_grid`, any buyer and any sampled opponents.
pub fn check_dsic(economy: &Economy, own_grid: &[f64], report_grid: &[f64], draws: usize, seed: u64) -> Result<VerificationReport> {
    validate_grid("own grid", own_grid, economy.upper())?;
    validate_grid("report grid", report_grid, economy.upper())?;
    if draws == 0 {
        return Err(Error::InvalidArgument("at least one opponent draw is required".into()));
    }
    let sample = opponent_draws(economy, draws, seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for buyer in 0..economy.n() {
        for opponents in &sample {
            let offers = report_grid
                .iter()
                .map(|&r| contract(economy, &insert_own(opponents, buyer, r), buyer))
                .collect::<Result<Vec<_>>>()?;
            for &theta in own_grid {
                let truthful = contract(economy, &insert_own(opponents, buyer, theta), buyer)?.utility(economy, theta);
                for (offer, &r) in offers.iter().zip(report_grid) {
                    let gain = offer.utility(economy, theta) - truthful;
                    if gain > worst {
                        worst = gain;
                        witness = Some(format!("buyer {buyer}, type {theta}, report {r}, opponents {opponents:?}"));
                    }
                }
            }
        }
    }
    Ok(VerificationReport::from_violation("dsic", worst.max(0.0), DSIC_TOLERANCE, witness)
        .with_note(format!("{} types x {} reports x {draws} draws, seed {seed}", own_grid.len(), report_grid.len())))
}

/// Ex-post participation: truthful utility is nonnegative for every sampled combination.
pub fn check_ir(economy: &Economy, own_grid: &[f64], draws: usize, seed: u64) -> Result<VerificationReport> {
    validate_grid("own grid", own_grid, economy.upper())?;
    if draws == 0 {
        return Err(Error::InvalidArgument("at least one opponent draw is required".into()));
    }
    let sample = opponent_draws(economy, draws, seed);
    let mut lowest = f64::INFINITY;
    let mut witness = None;
    for buyer in 0..economy.n() {
        for opponents in &sample {
            for &theta in own_grid {
                let u = contract(economy, &insert_own(opponents, buyer, theta), buyer)?.utility(economy, theta);
                if u < lowest {
                    lowest = u;
                    witness = Some(format!("buyer {buyer}, type {theta}, opponents {opponents:?}"));
                }
            }
        }
    }
    Ok(VerificationReport::from_violation("ir", (-lowest).max(0.0), IR_TOLERANCE, witness)
        .with_note(format!("lowest utility {lowest}")))
}

/// Own-type interval served with a constant consumer-set size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSegment {
    pub lo: f64,
    pub hi: f64,
    pub set_size: usize,
}

/// Own-type structure of the allocation against fixed opponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffPartition {
    pub buyer: usize,
    pub opponents: Vec<f64>,
    /// Lowest served own type; `None` when the buyer is never served.
    pub entry_cutoff: Option<f64>,
    /// Served segments above the entry cutoff, ascending.
    pub segments: Vec<SizeSegment>,
    /// Whether every higher segment offers a weakly preferred set size.
    pub ordered: bool,
}

impl CutoffPartition {
    /// Interior cutoffs where the set size changes.
    pub fn size_cutoffs(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.lo).collect()
    }
}

/// Own-type scan cells for partitions.
const PARTITION_SCAN: usize = 400;

/// Sweeps own type against fixed opponents and bisects every allocation jump.
pub fn extract_cutoff_partition(economy: &Economy, buyer: usize, opponents: &[f64]) -> Result<CutoffPartition> {
    if opponents.len() + 1 != economy.n() || buyer >= economy.n() {
        return Err(Error::InvalidArgument("opponent profile does not match the economy".into()));
    }
    let upper = economy.upper();
    if let Some((idx, &value)) = opponents.iter().enumerate().find(|(_, &t)| !(t >= 0.0 && t <= upper)) {
        return Err(Error::OutOfSupport { buyer: idx, value, upper });
    }
    let mut profile = insert_own(opponents, buyer, 0.0);
    let segments = locate_segments(0.0, upper, PARTITION_SCAN, |x| {
        profile[buyer] = x;
        outcome_for(economy, &profile, buyer)
    })?;
    let first_served = segments.iter().position(|s| s.key.0);
    if let Some(start) = first_served {
        if let Some(gap) = segments[start..].iter().find(|s| !s.key.0) {
            return Err(Error::Precondition(format!("buyer loses the good again at own type {}", gap.lo)));
        }
    }
    let served: Vec<SizeSegment> = segments
        .iter()
        .filter(|s| s.key.0)
        .map(|s| SizeSegment { lo: s.lo, hi: s.hi, set_size: s.key.1 })
        .collect();
    let mut sizes: Vec<usize> = served.iter().map(|s| s.set_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() > economy.n() {
        return Err(Error::Precondition(format!("{} distinct set sizes for {} buyers", sizes.len(), economy.n())));
    }
    // A type at a size cutoff weakly prefers the size offered just above it.
    let ordered = served.windows(2).all(|w| {
        let at = w[1].lo;
        let (below, above) = (economy.value(at, w[0].set_size), economy.value(at, w[1].set_size));
        above >= below - 1e-12 * below.abs().max(1.0)
    });
    Ok(CutoffPartition {
        buyer,
        opponents: opponents.to_vec(),
        entry_cutoff: served.first().map(|s| s.lo),
        segments: served,
        ordered,
    })
}

/// Own-type monotonicity of consumption and preferred-size ordering over sampled opponents.
pub fn check_cutoff_structure(economy: &Economy, draws: usize, seed: u64) -> Result<VerificationReport> {
    let sample = opponent_draws(economy, draws, seed);
    let mut failures = 0usize;
    let mut witness = None;
    for opponents in &sample {
        let partition = extract_cutoff_partition(economy, 0, opponents);
        let ok = matches!(&partition, Ok(p) if p.ordered);
        if !ok {
            failures += 1;
            witness.get_or_insert_with(|| format!("opponents {opponents:?}"));
        }
    }
    Ok(VerificationReport::from_violation("cutoff_structure", failures as f64, 0.0, witness)
        .with_note(format!("{draws} opponent draws, seed {seed}")))
}

/// Consumer set of a two-buyer profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RegionLabel {
    Nobody,
    First,
    Second,
    Both,
}

impl RegionLabel {
    pub fn from_consumption(first: bool, second: bool) -> Self {
        match (first, second) {
            (false, false) => RegionLabel::Nobody,
            (true, false) => RegionLabel::First,
            (false, true) => RegionLabel::Second,
            (true, true) => RegionLabel::Both,
        }
    }

    pub fn consumes(self, buyer: usize) -> bool {
        matches!((self, buyer), (RegionLabel::Both, _) | (RegionLabel::First, 0) | (RegionLabel::Second, 1))
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionLabel::Nobody => "∅",
            RegionLabel::First => "{1}",
            RegionLabel::Second => "{2}",
            RegionLabel::Both => "{1,2}",
        })
    }
}

/// Consumer-set labels of a two-buyer economy at the centres of a square lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    resolution: usize,
    upper: f64,
    /// Row-major: `labels[i * resolution + j]` is the cell `(θ₁ index i, θ₂ index j)`.
    labels: Vec<RegionLabel>,
}

impl RegionGrid {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Centre coordinate of cell index `i`.
    pub fn centre(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.upper / self.resolution as f64
    }

    pub fn label(&self, i: usize, j: usize) -> RegionLabel {
        self.labels[i * self.resolution + j]
    }

    pub fn labels(&self) -> &[RegionLabel] {
        &self.labels
    }

    /// Cells whose 3×3 neighbourhood carries more than one label.
    pub fn boundary_band(&self) -> Vec<bool> {
        let n = self.resolution;
        let mut band = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let here = self.label(i, j);
                let rows = i.saturating_sub(1)..=(i + 1).min(n - 1);
                band[i * n + j] = rows.into_iter().any(|a| {
                    (j.saturating_sub(1)..=(j + 1).min(n - 1)).any(|b| self.label(a, b) != here)
                });
            }
        }
        band
    }

    /// CSV with columns `theta1, theta2, label`.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(["theta1", "theta2", "label"]).map_err(csv_error)?;
        for i in 0..self.resolution {
            for j in 0..self.resolution {
                let row = [self.centre(i).to_string(), self.centre(j).to_string(), self.label(i, j).to_string()];
                writer.write_record(&row).map_err(csv_error)?;
            }
        }
        let bytes = writer.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Solves the allocation at every cell centre of a `resolution²` lattice.
pub fn region_grid(economy: &Economy, resolution: usize) -> Result<RegionGrid> {
    if economy.n() != 2 {
        return Err(Error::Precondition("region grids need exactly two buyers".into()));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let upper = economy.upper();
    let centre = |i: usize| (i as f64 + 0.5) * upper / resolution as f64;
    let mut labels = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (a, b) = (centre(i), centre(j));
            let (q0, _) = outcome_for(economy, &[a, b], 0);
            let (q1, _) = outcome_for(economy, &[a, b], 1);
            labels.push(RegionLabel::from_consumption(q0, q1));
        }
    }
    Ok(RegionGrid { resolution, upper, labels })
}

/// Network-effect direction of a four-region benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EffectSign {
    Positive,
    Negative,
}

/// Allocation cutoffs of the two-buyer benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BenchmarkCutoffs {
    /// All four consumer sets occur; `x < y < z`.
    FourRegion { x: f64, y: f64, z: f64, sign: EffectSign },
    /// Joint consumption never occurs: a second-price auction with reserve `reserve`.
    Reserve { reserve: f64 },
    /// Solo consumption never occurs: provided jointly iff `θ₁ + θ₂ ≥ line_sum` (linear virtual values).
    PublicGood { lowest: f64, line_sum: f64 },
}

fn root_on_support(economy: &Economy, what: &str, f: impl FnMut(f64) -> f64) -> Result<f64> {
    bisect_root(0.0, economy.upper(), 1e-15, f)
        .ok_or_else(|| Error::OutsideRegime(format!("no {what} cutoff inside the support")))
}

/// Cutoffs `(x, y, z)` of a two-buyer economy without profit effects, from the allocation geometry.
///
/// Positive effects: `ψ(z,1) = c`, `ψ(y,2) + ψ(z,2) = c`, `ψ(x,2) + ψ(θ̄,2) = ψ(θ̄,1)`.
/// Negative effects: `ψ(y,1) = c`, `ψ(x,2) + ψ(y,2) = c`, `ψ(z,2) + ψ(θ̄,2) = ψ(θ̄,1)`.
pub fn benchmark_cutoffs(economy: &Economy) -> Result<BenchmarkCutoffs> {
    if economy.n() != 2 {
        return Err(Error::Precondition("benchmark cutoffs need exactly two buyers".into()));
    }
    if economy.profit_effect().values().iter().any(|&p| p != economy.phi(0)) {
        return Err(Error::Precondition("benchmark cutoffs assume no profit network effects".into()));
    }
    let top = economy.upper();
    let c = economy.cost();
    let psi = |t: f64, k: usize| economy.psi(t, k);
    let (solo_top, joint_top) = (economy.value(top, 1), economy.value(top, 2));
    let slack = 1e-12 * solo_top.abs().max(joint_top.abs()).max(1.0);
    if (solo_top - joint_top).abs() <= slack {
        return Err(Error::OutsideRegime("no value network effects".into()));
    }
    if psi(top, 1) < c {
        let lowest = root_on_support(economy, "provision", |t| psi(t, 2) + psi(top, 2) - c)?;
        return Ok(BenchmarkCutoffs::PublicGood { lowest, line_sum: lowest + top });
    }
    if joint_top > solo_top {
        let z = root_on_support(economy, "solo", |t| psi(t, 1) - c)?;
        let y = root_on_support(economy, "joint entry", |t| psi(t, 2) + psi(z, 2) - c)?;
        let x = root_on_support(economy, "lowest", |t| psi(t, 2) + psi(top, 2) - psi(top, 1))?;
        if !(x < y && y < z && z < top) {
            return Err(Error::OutsideRegime(format!("cutoffs ({x}, {y}, {z}) are not ordered")));
        }
        Ok(BenchmarkCutoffs::FourRegion { x, y, z, sign: EffectSign::Positive })
    } else {
        let y = root_on_support(economy, "solo", |t| psi(t, 1) - c)?;
        if 2.0 * psi(top, 2) <= psi(top, 1) + slack {
            return Ok(BenchmarkCutoffs::Reserve { reserve: y });
        }
        let x = root_on_support(economy, "lowest", |t| psi(t, 2) + psi(y, 2) - c)?;
        let z = root_on_support(economy, "always joint", |t| psi(t, 2) + psi(top, 2) - psi(top, 1))?;
        if !(x < y && y < z && z < top) {
            return Err(Error::OutsideRegime(format!("cutoffs ({x}, {y}, {z}) are not ordered")));
        }
        Ok(BenchmarkCutoffs::FourRegion { x, y, z, sign: EffectSign::Negative })
    }
}

/// Benchmark cutoffs for the `π` family with uniform types on `[0, 1]`.
pub fn solve_benchmark_cutoffs(pi: f64, cost: f64) -> Result<BenchmarkCutoffs> {
    benchmark_cutoffs(&presets::pi_family(pi, cost)?)
}

/// Own-type entry cutoff of buyer 0 against one opponent type.
pub fn pair_entry_cutoff(economy: &Economy, opponent: f64) -> Option<f64> {
    entry_cutoff(economy, 0, &[0.0, opponent])
}

/// Economies `v(θ, k) = g(k) θ`, profit effect `φ(k)` and cost `c` for any
/// number of buyers, with `g(k) → g*`.
#[derive(Clone)]
pub struct LargeMarketFamily {
    label: String,
    slope: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    limit_slope: f64,
    phi: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    cost: f64,
    distribution: TypeDistribution,
}

impl fmt::Debug for LargeMarketFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LargeMarketFamily")
            .field("label", &self.label)
            .field("limit_slope", &self.limit_slope)
            .field("cost", &self.cost)
            .finish()
    }
}

impl LargeMarketFamily {
    pub fn new(
        label: impl Into<String>,
        slope: impl Fn(usize) -> f64 + Send + Sync + 'static,
        limit_slope: f64,
        phi: impl Fn(usize) -> f64 + Send + Sync + 'static,
        cost: f64,
        distribution: TypeDistribution,
    ) -> Self {
        Self { label: label.into(), slope: Arc::new(slope), limit_slope, phi: Arc::new(phi), cost, distribution }
    }

    /// `g(k) = scale − decay / k` and `φ(k) = phi_weight · ln(1 + k)`.
    pub fn saturating(scale: f64, decay: f64, phi_weight: f64, cost: f64, distribution: TypeDistribution) -> Self {
        Self::new(
            format!("saturating({scale}, {decay}), phi = {phi_weight} ln(1+k)"),
            move |k| scale - decay / k as f64,
            scale,
            move |k| phi_weight * (1.0 + k as f64).ln(),
            cost,
            distribution,
        )
    }

    /// `g(1) = π`, `g(k ≥ 2) = 1 − π`, no profit effect, uniform types on `[0, 1]`.
    pub fn pi_family(pi: f64, cost: f64) -> Result<Self> {
        Ok(Self::new(
            format!("pi = {pi}"),
            move |k| if k <= 1 { pi } else { 1.0 - pi },
            1.0 - pi,
            |_| 0.0,
            cost,
            TypeDistribution::uniform(1.0)?,
        ))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Member with `n` buyers. Large members use a coarser assumption-check grid.
    pub fn economy(&self, n: usize) -> Result<Economy> {
        let slopes: Vec<f64> = (1..=n).map(|k| (self.slope)(k)).collect();
        let resolution = if n > 50 { 101 } else { crate::economy::DEFAULT_CHECK_RESOLUTION };
        Economy::with_check_resolution(
            n,
            self.cost,
            self.distribution.clone(),
            ValuationModel::LinearInK { slopes },
            ProfitNetworkEffect::from_fn(n, |k| (self.phi)(k))?,
            resolution,
        )
    }

    /// Values and the profit effect must be increasing and concave in `k`.
    fn check_shape(&self, max_n: usize) -> Result<()> {
        let tol = 1e-12;
        let g: Vec<f64> = (1..=max_n).map(|k| (self.slope)(k)).collect();
        let phi: Vec<f64> = (0..=max_n).map(|k| (self.phi)(k)).collect();
        for (name, seq) in [("value slope", &g), ("profit effect", &phi)] {
            if seq.windows(2).any(|w| w[1] < w[0] - tol) {
                return Err(Error::Precondition(format!("{name} decreases in the set size")));
            }
            if seq.windows(3).any(|w| w[2] - w[1] > w[1] - w[0] + tol) {
                return Err(Error::Precondition(format!("{name} is not concave in the set size")));
            }
        }
        if !(self.limit_slope > 0.0) || g.iter().any(|&s| s > self.limit_slope + tol) {
            return Err(Error::Precondition("value slopes must approach a positive limit from below".into()));
        }
        Ok(())
    }

    /// Root of the limiting virtual value `ψ*(p) = g*(p − (1 − F(p))/f(p))`.
    pub fn posted_price(&self) -> Result<f64> {
        let dist = &self.distribution;
        bisect_root(0.0, dist.upper(), 1e-15, |p| self.limit_slope * (p - dist.inverse_hazard(p)))
            .ok_or_else(|| Error::Precondition("limiting virtual value has no root".into()))
    }
}

/// Simulated acceptance behaviour at one market size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketSizeSummary {
    pub n: usize,
    pub replications: usize,
    pub mean_threshold: f64,
    pub max_threshold_error: f64,
    pub mean_fraction: f64,
    pub max_fraction_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub family: String,
    pub posted_price: f64,
    pub limit_fraction: f64,
    pub sizes: Vec<MarketSizeSummary>,
}

impl LimitReport {
    /// Largest-market summary: every replication's threshold within
    /// `threshold_tol` of the price, and the fraction served, pooled over
    /// replications, within `fraction_tol` of the limit.
    pub fn verdict(&self, threshold_tol: f64, fraction_tol: f64) -> VerificationReport {
        match self.sizes.last() {
            None => VerificationReport::new("posted_price_limit", false, f64::INFINITY, threshold_tol, None),
            Some(last) => {
                let pooled_error = (last.mean_fraction - self.limit_fraction).abs();
                let worst = (last.max_threshold_error / threshold_tol).max(pooled_error / fraction_tol);
                VerificationReport::new(
                    "posted_price_limit",
                    worst <= 1.0,
                    last.max_threshold_error,
                    threshold_tol,
                    Some(format!("N = {}", last.n)),
                )
                .with_note(format!(
                    "price {}, mean threshold {}, mean fraction {} vs {}, worst single-replication fraction error {}",
                    self.posted_price, last.mean_threshold, last.mean_fraction, self.limit_fraction, last.max_fraction_error
                ))
            }
        }
    }
}

/// Empirical own-type acceptance threshold and allocated fraction of the
/// optimal mechanism along `sizes`, against the limiting posted price.
pub fn posted_price_limit(family: &LargeMarketFamily, sizes: &[usize], replications: usize, seed: u64) -> Result<LimitReport> {
    let max_n = sizes.iter().copied().max().ok_or_else(|| Error::InvalidArgument("no market sizes".into()))?;
    if replications == 0 || sizes.contains(&0) {
        return Err(Error::InvalidArgument("need positive market sizes and replications".into()));
    }
    family.check_shape(max_n)?;
    let price = family.posted_price()?;
    let limit_fraction = 1.0 - family.distribution.cdf(price);
    let mut summaries = Vec::with_capacity(sizes.len());
    for (stream, &n) in sizes.iter().enumerate() {
        let economy = family.economy(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let (mut thresholds, mut fractions) = (Vec::new(), Vec::new());
        for _ in 0..replications {
            let profile: Vec<f64> = (0..n).map(|_| family.distribution.quantile(rng.gen::<f64>())).collect();
            let allocation = solve_allocation(&economy, &profile)?;
            let sorted = RankedProfile::new(&profile);
            let k = allocation.set_size;
            let theta = sorted.sorted_thetas();
            let threshold = match k {
                0 => theta[0],
                k if k == n => theta[n - 1],
                k => 0.5 * (theta[k - 1] + theta[k]),
            };
            thresholds.push(threshold);
            fractions.push(k as f64 / n as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let worst = |v: &[f64], target: f64| v.iter().fold(0.0f64, |m, x| m.max((x - target).abs()));
        summaries.push(MarketSizeSummary {
            n,
            replications,
            mean_threshold: mean(&thresholds),
            max_threshold_error: worst(&thresholds, price),
            mean_fraction: mean(&fractions),
            max_fraction_error: worst(&fractions, limit_fraction),
        });
    }
    Ok(LimitReport { family: family.label.clone(), posted_price: price, limit_fraction, sizes: summaries })
}

/// Own-type payment constancy: between allocation jumps the transfer is flat
/// when the value's dependence on type is the same on both sides.
pub fn transfer_is_flat_between_jumps(economy: &Economy, opponents: &[f64], buyer: usize, probes: usize) -> Result<bool> {
    let upper = economy.upper();
    let profile = insert_own(opponents, buyer, upper);
    let segments = own_type_segments(economy, &profile, buyer, upper)?;
    for seg in segments.iter().filter(|s| s.key.0) {
        let width = seg.hi - seg.lo;
        let probe = |f: f64| -> Result<f64> {
            let mut p = profile.clone();
            p[buyer] = seg.lo + f * width;
            transfer(economy, &p, buyer)
        };
        let reference = probe(0.5)?;
        for g in 1..probes {
            let m = probe(g as f64 / probes as f64)?;
            if (m - reference).abs() > 1e-10 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Draws a regular economy: linear values `g(k)·θ` with increasing,
/// decreasing or flat `g`, or a `π` family when `n = 2`, uniform types and
/// a profit effect of either sign.
pub fn random_regular_economy<R: Rng>(rng: &mut R, n: usize) -> Result<Economy> {
    let upper = rng.gen_range(0.5..2.0);
    let valuation = if n == 2 && rng.gen_bool(0.3) {
        ValuationModel::PiFamily { pi: rng.gen_range(0.0..=1.0) }
    } else {
        let mut slopes: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        match rng.gen_range(0..3) {
            0 => slopes.sort_by(f64::total_cmp),
            1 => slopes.sort_by(|a, b| b.total_cmp(a)),
            _ => slopes.fill(1.0),
        }
        ValuationModel::LinearInK { slopes }
    };
    let phi: Vec<f64> = (0..=n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    Economy::new(
        n,
        rng.gen_range(0.0..1.5 * n as f64 * upper),
        TypeDistribution::uniform(upper)?,
        valuation,
        ProfitNetworkEffect::from_table(phi)?,
    )
}

/// Greedy solver against subset enumeration on random economies and profiles.
///
/// Profits must agree within `1e-9`; consumer sets must agree whenever the
/// enumeration's runner-up margin exceeds `1e-7`.
pub fn oracle_check(economies: usize, profiles: usize, max_n: usize, seed: u64) -> Result<VerificationReport> {
    const PROFIT_TOLERANCE: f64 = 1e-9;
    const MARGIN_FLOOR: f64 = 1e-7;
    if !(2..=crate::allocation::BRUTE_FORCE_MAX_BUYERS).contains(&max_n) {
        return Err(Error::InvalidArgument(format!("buyer count bound {max_n} outside 2..=20")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut witness, mut set_mismatches) = (0.0f64, None, 0usize);
    for e in 0..economies {
        let n = rng.gen_range(2..=max_n);
        let economy = random_regular_economy(&mut rng, n)?;
        for _ in 0..profiles {
            let profile: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=economy.upper())).collect();
            let greedy = solve_allocation(&economy, &profile)?;
            let brute = crate::allocation::brute_force_allocation(&economy, &profile)?;
            let gap = (greedy.profit - brute.allocation.profit).abs();
            let sets_differ = brute.runner_up_margin > MARGIN_FLOOR && greedy.consume != brute.allocation.consume;
            if sets_differ {
                set_mismatches += 1;
            }
            if gap > worst || (sets_differ && witness.is_none()) {
                worst = worst.max(gap);
                witness = Some(format!("economy {e} (N = {n}), profile {profile:?}"));
            }
        }
    }
    Ok(VerificationReport::new(
        "oracle_equivalence",
        worst <= PROFIT_TOLERANCE && set_mismatches == 0,
        worst,
        PROFIT_TOLERANCE,
        witness,
    )
    .with_note(format!("{economies} economies x {profiles} profiles, seed {seed}, {set_mismatches} consumer-set mismatches")))
}
