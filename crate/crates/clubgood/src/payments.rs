//! Ex-post transfers from the revenue-equivalence integral, interim
//! schedules, the served-type bounds and the triviality classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocation::{outcome_for, outcome_pair, solve_allocation};
use crate::economy::{uniform_grid, Economy};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive, locate_segments, locate_segments_on, Segment};

/// Own-type scan cells used before bisecting allocation jumps.
const OWN_TYPE_SCAN: usize = 16;
/// Opponent-type scan cells for the interim quadrature.
const OPPONENT_SCAN: usize = 128;
/// Absolute tolerance of the adaptive panels in interim integrals.
const INTERIM_TOLERANCE: f64 = 1e-12;
/// Widest opponent-type panel, as a fraction of the support, in interim integrals.
const MAX_PANEL_FRACTION: f64 = 1.0 / 32.0;
/// Second difference of a sampled cutoff curve above which a kink is assumed.
const KINK_THRESHOLD: f64 = 1e-9;
/// Default Monte Carlo sample size for interim schedules.
pub const DEFAULT_MC_DRAWS: usize = 100_000;

/// Payments `m̄_i` for every buyer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferVector {
    pub payments: Vec<f64>,
}

/// `(consumes, set size)` of one buyer; the set size is zero when excluded.
pub(crate) type OwnOutcome = (bool, usize);

fn with_own_type(profile: &[f64], buyer: usize, theta: f64, scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(profile);
    scratch[buyer] = theta;
}

/// Segments of own type `[0, θ_i]` on which buyer `buyer`'s outcome is constant.
pub(crate) fn own_type_segments(economy: &Economy, profile: &[f64], buyer: usize, upto: f64) -> Result<Vec<Segment<OwnOutcome>>> {
    if profile.len() == 2 {
        let other = profile[1 - buyer];
        return locate_segments(0.0, upto, OWN_TYPE_SCAN, |x| outcome_pair(economy, x, other, buyer));
    }
    let mut scratch = Vec::with_capacity(profile.len());
    locate_segments(0.0, upto, OWN_TYPE_SCAN, |x| {
        with_own_type(profile, buyer, x, &mut scratch);
        outcome_for(economy, &scratch, buyer)
    })
}

/// `m̄_i = q v(θ_i, k) − ∫₀^{θ_i} q(x) ∂v(x, k(x))/∂x dx`. The integrand is a
/// derivative of `v` on every constant segment, so each panel integrates to a
/// value difference.
pub(crate) fn transfer(economy: &Economy, profile: &[f64], buyer: usize) -> Result<f64> {
    let theta = profile[buyer];
    let (consumes, size) = outcome_for(economy, profile, buyer);
    if !consumes {
        return Ok(0.0);
    }
    let segments = own_type_segments(economy, profile, buyer, theta)?;
    let rent: f64 = segments
        .iter()
        .filter(|s| s.key.0)
        .map(|s| economy.value(s.hi, s.key.1) - economy.value(s.lo, s.key.1))
        .sum();
    Ok(economy.value(theta, size) - rent)
}

/// Ex-post transfers of the optimal direct mechanism.
pub fn expost_transfers(economy: &Economy, profile: &[f64]) -> Result<TransferVector> {
    solve_allocation(economy, profile)?;
    let payments = (0..profile.len()).map(|i| transfer(economy, profile, i)).collect::<Result<Vec<_>>>()?;
    Ok(TransferVector { payments })
}

/// How interim expectations over opponents are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InterimMethod {
    /// Jump-aware quadrature over the single opponent (two buyers only).
    Quadrature,
    /// Seeded Monte Carlo with common opponent draws across the grid.
    MonteCarlo { seed: u64, draws: usize },
}

/// Interim allocation probabilities and expected payment at one type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterimPoint {
    pub theta: f64,
    /// `q_by_size[k - 1] = Q^k(θ)`.
    pub q_by_size: Vec<f64>,
    pub payment: f64,
    pub payment_stderr: Option<f64>,
}

impl InterimPoint {
    pub fn consumption(&self) -> f64 {
        self.q_by_size.iter().sum()
    }
}

/// `Q^k` and `M` for one buyer on a type grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterimSchedule {
    pub buyer: usize,
    pub method: InterimMethod,
    pub points: Vec<InterimPoint>,
}

impl InterimSchedule {
    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    pub fn payments(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.payment).collect()
    }

    /// CSV with columns `theta, Q_1..Q_N, M, stderr_M`.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.points.first().map_or(0, |p| p.q_by_size.len());
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["theta".to_string()];
        header.extend((1..=n).map(|k| format!("Q_{k}")));
        header.push("M".into());
        header.push("stderr_M".into());
        writer.write_record(&header).map_err(csv_error)?;
        for p in &self.points {
            let mut row = vec![p.theta.to_string()];
            row.extend(p.q_by_size.iter().map(|q| q.to_string()));
            row.push(p.payment.to_string());
            row.push(p.payment_stderr.map(|s| s.to_string()).unwrap_or_default());
            writer.write_record(&row).map_err(csv_error)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

pub(crate) fn csv_error(err: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output failed: {err}"))
}

fn pair_profile(buyer: usize, own: f64, other: f64) -> [f64; 2] {
    if buyer == 0 {
        [own, other]
    } else {
        [other, own]
    }
}

fn require_pair(economy: &Economy, buyer: usize) -> Result<()> {
    if economy.n() != 2 {
        return Err(Error::Precondition("quadrature over opponents needs exactly two buyers".into()));
    }
    if buyer > 1 {
        return Err(Error::InvalidArgument(format!("buyer index {buyer} out of range")));
    }
    Ok(())
}

/// Boundary of own-type segments: position and the outcomes on either side.
type OwnBoundary = (f64, OwnOutcome, OwnOutcome);

fn own_boundaries(economy: &Economy, buyer: usize, opponent: f64) -> Result<Vec<OwnBoundary>> {
    let segments = own_type_segments(economy, &pair_profile(buyer, 0.0, opponent), buyer, economy.upper())?;
    Ok(segments.windows(2).map(|w| (w[0].hi, w[0].key, w[1].key)).collect())
}

fn signature(boundaries: &[OwnBoundary]) -> Vec<(OwnOutcome, OwnOutcome)> {
    boundaries.iter().map(|b| (b.1, b.2)).collect()
}

/// Golden-section minimiser on `[lo, hi]`; returns the best point seen.
pub(crate) fn golden_min(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for _ in 0..100 {
        if b - a < 1e-14 * hi.abs().max(1.0) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Opponent types at which the own-type cutoff curves change structure or
/// reach a local extremum. Consumption windows that open in a narrow band of
/// opponent types always contain one of these points.
fn critical_opponent_types(economy: &Economy, buyer: usize) -> Result<Vec<f64>> {
    const PROBE_GRID: usize = 257;
    let grid = uniform_grid(0.0, economy.upper(), PROBE_GRID);
    let table = grid.iter().map(|&t| own_boundaries(economy, buyer, t)).collect::<Result<Vec<_>>>()?;
    let sigs: Vec<_> = table.iter().map(|b| signature(b)).collect();
    let mut probes = Vec::new();
    for g in 0..grid.len() - 1 {
        if sigs[g] == sigs[g + 1] {
            continue;
        }
        let (mut lo, mut hi) = (grid[g], grid[g + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if signature(&own_boundaries(economy, buyer, mid)?) == sigs[g] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        probes.extend([lo, hi]);
    }
    // Kinks of a cutoff curve between grid points: intersect the secant
    // lines from either side.
    for g in 1..grid.len().saturating_sub(3) {
        if (g - 1..=g + 2).any(|h| sigs[h] != sigs[g]) {
            continue;
        }
        for j in 0..table[g].len() {
            let b = |h: usize| table[h][j].0;
            let bend = |h: usize| b(h - 1) - 2.0 * b(h) + b(h + 1);
            if bend(g).abs() <= KINK_THRESHOLD || bend(g + 1).abs() <= KINK_THRESHOLD {
                continue;
            }
            let left = (b(g) - b(g - 1)) / (grid[g] - grid[g - 1]);
            let right = (b(g + 2) - b(g + 1)) / (grid[g + 2] - grid[g + 1]);
            if (left - right).abs() > 0.0 {
                let t = (b(g + 1) - b(g) + left * grid[g] - right * grid[g + 1]) / (left - right);
                if t > grid[g] && t < grid[g + 1] {
                    probes.push(t);
                }
            }
        }
    }
    for g in 1..grid.len() - 1 {
        if sigs[g - 1] != sigs[g] || sigs[g + 1] != sigs[g] {
            continue;
        }
        for j in 0..table[g].len() {
            let (left, mid, right) = (table[g - 1][j].0, table[g][j].0, table[g + 1][j].0);
            let is_min = (mid < left && mid <= right) || (mid <= left && mid < right);
            let is_max = (mid > left && mid >= right) || (mid >= left && mid > right);
            for sign in [(is_min, 1.0), (is_max, -1.0)].into_iter().filter(|s| s.0).map(|s| s.1) {
                let (t, _) = golden_min(grid[g - 1], grid[g + 1], |t| match own_boundaries(economy, buyer, t) {
                    Ok(b) if signature(&b) == sigs[g] => sign * b[j].0,
                    _ => f64::INFINITY,
                });
                probes.push(t);
            }
        }
    }
    Ok(probes)
}

/// Interim quantities for one buyer of a two-buyer economy, integrating
/// exactly over the opponent's type.
#[derive(Debug, Clone)]
pub struct PairInterim<'a> {
    economy: &'a Economy,
    buyer: usize,
    scan: Vec<f64>,
    /// Opponent types where ex-post transfers may kink; panels split there.
    critical: Vec<f64>,
}

impl<'a> PairInterim<'a> {
    pub fn new(economy: &'a Economy, buyer: usize) -> Result<Self> {
        require_pair(economy, buyer)?;
        let upper = economy.upper();
        let mut critical = critical_opponent_types(economy, buyer)?;
        critical.extend(economy.distribution().breakpoints());
        critical.retain(|t| (0.0..=upper).contains(t));
        critical.sort_by(f64::total_cmp);
        critical.dedup();
        let mut scan = uniform_grid(0.0, upper, OPPONENT_SCAN + 1);
        scan.extend_from_slice(&critical);
        scan.sort_by(f64::total_cmp);
        scan.dedup();
        Ok(Self { economy, buyer, scan, critical })
    }

    pub fn economy(&self) -> &'a Economy {
        self.economy
    }

    /// Opponent-type segments of constant own outcome, split at critical
    /// opponent types and density breakpoints.
    pub fn segments(&self, theta: f64) -> Result<Vec<Segment<OwnOutcome>>> {
        let (economy, buyer) = (self.economy, self.buyer);
        let segments = locate_segments_on(&self.scan, |t| outcome_pair(economy, theta, t, buyer))?;
        let mut split = Vec::with_capacity(segments.len() + self.critical.len());
        for seg in segments {
            let mut lo = seg.lo;
            for &b in self.critical.iter().filter(|&&b| b > seg.lo && b < seg.hi) {
                split.push(Segment { lo, hi: b, key: seg.key });
                lo = b;
            }
            split.push(Segment { lo, hi: seg.hi, key: seg.key });
        }
        Ok(split)
    }

    /// `Q^k(θ)`: exact probability masses of the located panels.
    pub fn allocation(&self, theta: f64) -> Result<Vec<f64>> {
        let dist = self.economy.distribution();
        let mut q = vec![0.0; 2];
        for seg in self.segments(theta)?.into_iter().filter(|s| s.key.0) {
            q[seg.key.1 - 1] += dist.cdf(seg.hi) - dist.cdf(seg.lo);
        }
        Ok(q)
    }

    /// Interim point by quadrature. Also returns the expected payment
    /// conditional on consuming, which stays accurate when the consumption
    /// probability is tiny.
    pub fn point(&self, theta: f64) -> Result<(InterimPoint, Option<f64>)> {
        let (economy, buyer) = (self.economy, self.buyer);
        let dist = economy.distribution();
        let mut q = vec![0.0; 2];
        let mut payment = 0.0;
        let mut failure = None;
        for seg in self.segments(theta)?.into_iter().filter(|s| s.key.0) {
            q[seg.key.1 - 1] += dist.cdf(seg.hi) - dist.cdf(seg.lo);
            let panels = ((seg.hi - seg.lo) / (MAX_PANEL_FRACTION * economy.upper())).ceil().max(1.0) as usize;
            let width = (seg.hi - seg.lo) / panels as f64;
            for p in 0..panels {
                let lo = seg.lo + width * p as f64;
                let hi = if p + 1 == panels { seg.hi } else { lo + width };
                payment += adaptive(lo, hi, INTERIM_TOLERANCE / panels as f64, |t| {
                    match transfer(economy, &pair_profile(buyer, theta, t), buyer) {
                        Ok(m) => m * dist.pdf(t),
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                });
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        let total: f64 = q.iter().sum();
        let conditional = if total > 0.0 { Some(payment / total) } else { None };
        Ok((InterimPoint { theta, q_by_size: q, payment, payment_stderr: None }, conditional))
    }

    /// `Σ_k Q^k(θ) v(θ, k) − ∫₀^θ Σ_k Q^k(t) ∂v(t, k)/∂t dt` on an ascending grid.
    pub fn envelope(&self, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("grid must be ascending".into()));
        }
        let mut rent = 0.0;
        let mut previous = 0.0;
        let mut out = Vec::with_capacity(grid.len());
        for &theta in grid {
            rent += self.rent_between(previous, theta)?;
            previous = theta;
            out.push(self.gross(theta)? - rent);
        }
        Ok(out)
    }

    /// Interim payment at `theta` from a known payment at `anchor < theta`,
    /// integrating only over `[anchor, theta]`.
    pub fn envelope_step(&self, anchor: f64, anchor_payment: f64, theta: f64) -> Result<f64> {
        if theta < anchor {
            return Err(Error::InvalidArgument("envelope step must move upwards".into()));
        }
        let rent_at_anchor = self.gross(anchor)? - anchor_payment;
        Ok(self.gross(theta)? - rent_at_anchor - self.rent_between(anchor, theta)?)
    }

    /// `Σ_k Q^k(θ) v(θ, k)`.
    fn gross(&self, theta: f64) -> Result<f64> {
        let q = self.allocation(theta)?;
        Ok(q.iter().enumerate().map(|(k, qk)| qk * self.economy.value(theta, k + 1)).sum())
    }

    /// `∫ Σ_k Q^k(t) ∂v(t, k)/∂t dt` over `[lo, hi]`.
    fn rent_between(&self, lo: f64, hi: f64) -> Result<f64> {
        let economy = self.economy;
        let mut failure = None;
        let marginal = |t: f64| -> f64 {
            match self.allocation(t) {
                Ok(q) => q.iter().enumerate().map(|(k, qk)| qk * economy.dvalue(t, k + 1)).sum(),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        let rent = adaptive(lo, hi, INTERIM_TOLERANCE, marginal);
        match failure {
            Some(e) => Err(e),
            None => Ok(rent),
        }
    }
}

/// Segment lists describing the same allocation map, ignoring pieces
/// narrower than `tol` and boundaries that moved by at most `tol`.
fn same_map(a: &[Segment<OwnOutcome>], b: &[Segment<OwnOutcome>], tol: f64) -> bool {
    let merged = |segs: &[Segment<OwnOutcome>]| {
        let mut out: Vec<(f64, OwnOutcome)> = Vec::new();
        for s in segs.iter().filter(|s| s.hi - s.lo > tol) {
            match out.last_mut() {
                Some(last) if last.1 == s.key => last.0 = s.hi,
                _ => out.push((s.hi, s.key)),
            }
        }
        out
    };
    let (a, b) = (merged(a), merged(b));
    a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.1 == y.1 && (x.0 - y.0).abs() <= tol)
}

/// `Q^k(θ)` for two buyers.
pub fn interim_allocation(economy: &Economy, buyer: usize, theta: f64) -> Result<Vec<f64>> {
    PairInterim::new(economy, buyer)?.allocation(theta)
}

/// Draws `draws` opponent profiles of `n - 1` iid types.
pub(crate) fn opponent_draws(economy: &Economy, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = economy.distribution();
    (0..draws).map(|_| (1..economy.n()).map(|_| dist.quantile(rng.gen::<f64>())).collect()).collect()
}

pub(crate) fn insert_own(opponents: &[f64], buyer: usize, theta: f64) -> Vec<f64> {
    let mut profile = Vec::with_capacity(opponents.len() + 1);
    profile.extend_from_slice(&opponents[..buyer]);
    profile.push(theta);
    profile.extend_from_slice(&opponents[buyer..]);
    profile
}

fn monte_carlo_point(economy: &Economy, buyer: usize, theta: f64, draws: &[Vec<f64>]) -> Result<InterimPoint> {
    let n = economy.n();
    let mut q = vec![0.0; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for opponents in draws {
        let profile = insert_own(opponents, buyer, theta);
        let (consumes, size) = outcome_for(economy, &profile, buyer);
        if consumes {
            q[size - 1] += 1.0;
            let m = transfer(economy, &profile, buyer)?;
            sum += m;
            sum_sq += m * m;
        }
    }
    let count = draws.len() as f64;
    for value in &mut q {
        *value /= count;
    }
    let mean = sum / count;
    let variance = if draws.len() > 1 { ((sum_sq / count - mean * mean) * count / (count - 1.0)).max(0.0) } else { 0.0 };
    Ok(InterimPoint { theta, q_by_size: q, payment: mean, payment_stderr: Some((variance / count).sqrt()) })
}

/// Interim schedule of `buyer` on `grid`.
pub fn interim_schedule(economy: &Economy, buyer: usize, grid: &[f64], method: InterimMethod) -> Result<InterimSchedule> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("interim grid is empty".into()));
    }
    if buyer >= economy.n() {
        return Err(Error::InvalidArgument(format!("buyer index {buyer} out of range")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|&t| !(t >= 0.0 && t <= economy.upper())) {
        return Err(Error::InvalidArgument("grid must be ascending inside the support".into()));
    }
    let points = match method {
        InterimMethod::Quadrature => {
            let solver = PairInterim::new(economy, buyer)?;
            grid.iter().map(|&theta| solver.point(theta).map(|(p, _)| p)).collect::<Result<Vec<_>>>()?
        }
        InterimMethod::MonteCarlo { seed, draws } => {
            if draws == 0 {
                return Err(Error::InvalidArgument("Monte Carlo needs at least one draw".into()));
            }
            let sample = opponent_draws(economy, draws, seed);
            grid.iter().map(|&theta| monte_carlo_point(economy, buyer, theta, &sample)).collect::<Result<Vec<_>>>()?
        }
    };
    Ok(InterimSchedule { buyer, method, points })
}

/// Envelope-formula interim payments on an ascending grid (two buyers).
pub fn envelope_payments(economy: &Economy, buyer: usize, grid: &[f64]) -> Result<Vec<f64>> {
    PairInterim::new(economy, buyer)?.envelope(grid)
}

/// Lowest type ever served and the smallest type whose allocation map equals the top type's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ServedBounds {
    pub y_lower: f64,
    pub y_upper: f64,
    /// Opponent sample size behind the bound on the top side.
    pub resolution: usize,
}

/// Own-type entry cutoff of `buyer` against `opponents` (own entry ignored).
/// `None` when the buyer is never served.
pub fn entry_cutoff(economy: &Economy, buyer: usize, profile: &[f64]) -> Option<f64> {
    let mut scratch = Vec::with_capacity(profile.len());
    let mut served = |x: f64| {
        with_own_type(profile, buyer, x, &mut scratch);
        outcome_for(economy, &scratch, buyer).0
    };
    let upper = economy.upper();
    if !served(upper) {
        return None;
    }
    if served(0.0) {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > 1e-13 * upper.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if served(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Opponent profiles used by the bound searches: a full grid for two
/// buyers, a descending-sorted lattice otherwise.
fn opponent_sample(economy: &Economy, resolution: usize) -> Vec<Vec<f64>> {
    let upper = economy.upper();
    let dims = economy.n() - 1;
    if dims == 1 {
        return uniform_grid(0.0, upper, resolution).into_iter().map(|t| vec![t]).collect();
    }
    let mut per_axis = 2usize;
    while (per_axis + 1).pow(dims as u32) <= resolution.clamp(4, 20_000) {
        per_axis += 1;
    }
    let axis = uniform_grid(0.0, upper, per_axis);
    let mut out = Vec::new();
    let mut idx = vec![0usize; dims];
    loop {
        if idx.windows(2).all(|w| w[0] >= w[1]) {
            out.push(idx.iter().map(|&g| axis[g]).collect());
        }
        let mut d = 0;
        loop {
            if d == dims {
                return out;
            }
            idx[d] += 1;
            if idx[d] < per_axis {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn cutoff_against(economy: &Economy, opponents: &[f64]) -> f64 {
    entry_cutoff(economy, 0, &insert_own(opponents, 0, 0.0)).unwrap_or(f64::INFINITY)
}

/// Golden-section refinement of the lowest entry cutoff along one opponent coordinate.
fn refine_min(economy: &Economy, opponents: &mut [f64], coord: usize, lo: f64, hi: f64) -> f64 {
    let original = opponents[coord];
    let current = cutoff_against(economy, opponents);
    let mut trial = opponents.to_vec();
    let (t, value) = golden_min(lo, hi, |t| {
        trial[coord] = t;
        cutoff_against(economy, &trial)
    });
    if value < current {
        opponents[coord] = t;
        value
    } else {
        opponents[coord] = original;
        current
    }
}

/// Served-type bounds `(y̲, ȳ)`.
pub fn served_bounds(economy: &Economy, search_resolution: usize) -> Result<ServedBounds> {
    let verdict = classify_trivial(economy);
    if verdict.verdict != Triviality::NonTrivial {
        return Err(Error::TrivialEconomy(format!("{:?}", verdict.verdict)));
    }
    if search_resolution < 3 {
        return Err(Error::InvalidArgument("search resolution must be at least 3".into()));
    }
    let upper = economy.upper();
    let sample = opponent_sample(economy, search_resolution);
    let step = upper / (search_resolution - 1) as f64;

    // Lower bound: best sampled opponent profile, then coordinate refinement.
    let (mut best_opp, mut best) = (sample[0].clone(), f64::INFINITY);
    for opp in &sample {
        let value = cutoff_against(economy, opp);
        if value < best {
            best = value;
            best_opp = opp.clone();
        }
    }
    if !best.is_finite() {
        return Err(Error::TrivialEconomy("no type is ever served".into()));
    }
    let width = if economy.n() == 2 { step } else { upper / 4.0 };
    for _sweep in 0..3 {
        for coord in 0..best_opp.len() {
            let centre = best_opp[coord];
            let (lo, hi) = ((centre - width).max(0.0), (centre + width).min(upper));
            best = best.min(refine_min(economy, &mut best_opp, coord, lo, hi));
        }
    }

    // Upper bound: smallest type whose allocation map equals the top type's.
    let tol = 1e-9 * upper.max(1.0);
    let matches_top: Box<dyn Fn(f64) -> Result<bool>> = if economy.n() == 2 {
        let solver = PairInterim::new(economy, 0)?;
        let top = solver.segments(upper)?;
        Box::new(move |theta| Ok(same_map(&solver.segments(theta)?, &top, tol)))
    } else {
        let profiles: Vec<Vec<f64>> = sample.iter().map(|opp| insert_own(opp, 0, upper)).collect();
        let map_of = move |theta: f64| -> Vec<OwnOutcome> {
            profiles
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    p[0] = theta;
                    outcome_for(economy, &p, 0)
                })
                .collect()
        };
        let top = map_of(upper);
        Box::new(move |theta| Ok(map_of(theta) == top))
    };
    let grid = uniform_grid(0.0, upper, search_resolution);
    let mut y_upper = 0.0;
    for g in (0..grid.len() - 1).rev() {
        if !matches_top(grid[g])? {
            let (mut lo, mut hi) = (grid[g], grid[g + 1]);
            while hi - lo > 1e-12 * upper.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if matches_top(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            y_upper = hi;
            break;
        }
    }
    Ok(ServedBounds { y_lower: best, y_upper: y_upper.max(best), resolution: sample.len() })
}

/// Classification of economies where the optimum is degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Triviality {
    NeverProvide,
    AlwaysProvideFree,
    NonTrivial,
}

/// One evaluated inequality `lhs ≥ rhs` (or `lhs < rhs` for the never-provide family).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivialityVerdict {
    pub verdict: Triviality,
    pub never_provide: Vec<Witness>,
    pub always_provide: Vec<Witness>,
}

/// Never provide iff `k ψ(θ̄, k) < C(k)` for every `k`; always provide for
/// free iff `N ψ(0, N) ≥ C(N)` and `(N − k) ψ(0, N) ≥ γ(k, N, 0)` for `k < N`.
pub fn classify_trivial(economy: &Economy) -> TrivialityVerdict {
    let n = economy.n();
    let top = economy.upper();
    let never_provide: Vec<Witness> = (1..=n)
        .map(|k| {
            let lhs = k as f64 * economy.psi(top, k);
            let rhs = economy.adjusted_cost_unchecked(k);
            Witness { label: format!("{k}·ψ(θ̄,{k}) < C({k})"), lhs, rhs, holds: lhs < rhs }
        })
        .collect();
    let bottom = economy.psi(0.0, n);
    let mut always_provide = vec![{
        let lhs = n as f64 * bottom;
        let rhs = economy.adjusted_cost_unchecked(n);
        Witness { label: format!("{n}·ψ(0,{n}) ≥ C({n})"), lhs, rhs, holds: lhs >= rhs }
    }];
    for k in 1..n {
        let lhs = (n - k) as f64 * bottom;
        let zeros = vec![0.0; k];
        let rhs = economy.phi(k) - economy.phi(n)
            + zeros.iter().map(|&t| economy.psi(t, k) - economy.psi(t, n)).sum::<f64>();
        always_provide.push(Witness { label: format!("({n}−{k})·ψ(0,{n}) ≥ γ({k},{n},0)"), lhs, rhs, holds: lhs >= rhs });
    }
    let verdict = if never_provide.iter().all(|w| w.holds) {
        Triviality::NeverProvide
    } else if always_provide.iter().all(|w| w.holds) {
        Triviality::AlwaysProvideFree
    } else {
        Triviality::NonTrivial
    };
    TrivialityVerdict { verdict, never_provide, always_provide }
}
