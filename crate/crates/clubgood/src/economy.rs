//! Model primitives: type distribution, valuations, profit network effect,
//! virtual values and the standing-assumption checks run at construction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::report::VerificationReport;

/// Grid resolution used by the construction-time assumption checks.
pub const DEFAULT_CHECK_RESOLUTION: usize = 1001;

/// Relative slack below which a value difference counts as zero.
const ZERO_SLACK: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
enum DistributionKind {
    Uniform,
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

/// Distribution of a single buyer's type on `[0, upper]` with a positive density.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    upper: f64,
    kind: DistributionKind,
}

impl TypeDistribution {
    pub fn uniform(upper: f64) -> Result<Self> {
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidEconomy(format!("support upper bound must be positive, got {upper}")));
        }
        Ok(Self { upper, kind: DistributionKind::Uniform })
    }

    /// Piecewise-linear cdf through `(type, cdf)` knots. The first knot must be
    /// `(0, 0)`, the last `(upper, 1)`, and both coordinates strictly increase,
    /// so the density is a positive step function.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidEconomy("a piecewise-linear cdf needs at least two knots".into()));
        }
        let (first, last) = (knots[0], knots[knots.len() - 1]);
        if first != (0.0, 0.0) {
            return Err(Error::InvalidEconomy("the first cdf knot must be (0, 0)".into()));
        }
        if last.1 != 1.0 || !(last.0.is_finite() && last.0 > 0.0) {
            return Err(Error::InvalidEconomy("the last cdf knot must be (upper, 1) with upper > 0".into()));
        }
        for pair in knots.windows(2) {
            let ((t0, f0), (t1, f1)) = (pair[0], pair[1]);
            if !(t1 > t0) || !(f1 > f0) {
                return Err(Error::InvalidEconomy(format!(
                    "cdf knots must strictly increase in both coordinates: ({t0}, {f0}) then ({t1}, {f1})"
                )));
            }
        }
        Ok(Self { upper: last.0, kind: DistributionKind::PiecewiseLinear { knots } })
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, DistributionKind::Uniform)
    }

    fn segment(knots: &[(f64, f64)], theta: f64) -> usize {
        // Index j of the segment [knot j, knot j+1] containing theta (right-continuous).
        let upper_index = knots.partition_point(|&(t, _)| t <= theta);
        upper_index.saturating_sub(1).min(knots.len() - 2)
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        let theta = theta.clamp(0.0, self.upper);
        match &self.kind {
            DistributionKind::Uniform => theta / self.upper,
            DistributionKind::PiecewiseLinear { knots } => {
                let j = Self::segment(knots, theta);
                let ((t0, f0), (t1, f1)) = (knots[j], knots[j + 1]);
                f0 + (f1 - f0) * (theta - t0) / (t1 - t0)
            }
        }
    }

    /// Density; right-continuous at interior knots, left limit at the top.
    pub fn pdf(&self, theta: f64) -> f64 {
        match &self.kind {
            DistributionKind::Uniform => 1.0 / self.upper,
            DistributionKind::PiecewiseLinear { knots } => {
                let j = Self::segment(knots, theta.clamp(0.0, self.upper));
                let ((t0, f0), (t1, f1)) = (knots[j], knots[j + 1]);
                (f1 - f0) / (t1 - t0)
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DistributionKind::Uniform => u * self.upper,
            DistributionKind::PiecewiseLinear { knots } => {
                let upper_index = knots.partition_point(|&(_, f)| f <= u);
                let j = upper_index.saturating_sub(1).min(knots.len() - 2);
                let ((t0, f0), (t1, f1)) = (knots[j], knots[j + 1]);
                t0 + (t1 - t0) * (u - f0) / (f1 - f0)
            }
        }
    }

    /// `(1 - F) / f`, the inverse hazard rate.
    pub fn inverse_hazard(&self, theta: f64) -> f64 {
        match &self.kind {
            DistributionKind::Uniform => self.upper - theta.clamp(0.0, self.upper),
            DistributionKind::PiecewiseLinear { .. } => (1.0 - self.cdf(theta)) / self.pdf(theta),
        }
    }

    /// Interior points where the density may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            DistributionKind::Uniform => Vec::new(),
            DistributionKind::PiecewiseLinear { knots } => {
                knots[1..knots.len() - 1].iter().map(|&(t, _)| t).collect()
            }
        }
    }

    pub fn knots(&self) -> Option<&[(f64, f64)]> {
        match &self.kind {
            DistributionKind::Uniform => None,
            DistributionKind::PiecewiseLinear { knots } => Some(knots),
        }
    }
}

type ValueFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

/// User-supplied valuation. Without a derivative, central finite differences
/// with step `1e-6 * upper` are used (one-sided at the support ends).
#[derive(Clone)]
pub struct CustomValuation {
    label: String,
    value: Arc<ValueFn>,
    derivative: Option<Arc<ValueFn>>,
}

impl CustomValuation {
    pub fn new(label: impl Into<String>, value: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), value: Arc::new(value), derivative: None }
    }

    pub fn with_derivative(mut self, derivative: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }
}

impl fmt::Debug for CustomValuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomValuation")
            .field("label", &self.label)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

/// Consumption value `v(θ, k)` of a type when `k` buyers consume.
#[derive(Debug, Clone)]
pub enum ValuationModel {
    /// `v(θ, k) = θ`.
    NoNetworkEffects,
    /// `v(θ, 1) = πθ`, `v(θ, k ≥ 2) = (1 − π)θ`.
    PiFamily { pi: f64 },
    /// `v(θ, k) = slopes[k − 1] · θ`.
    LinearInK { slopes: Vec<f64> },
    Custom(CustomValuation),
}

impl ValuationModel {
    /// `v(θ, k) = θ (scale − decay / k)` for `k = 1..=n`.
    pub fn saturating(scale: f64, decay: f64, n: usize) -> Self {
        let slopes = (1..=n).map(|k| scale - decay / k as f64).collect();
        ValuationModel::LinearInK { slopes }
    }

    pub fn value(&self, theta: f64, k: usize) -> f64 {
        match self {
            ValuationModel::NoNetworkEffects => theta,
            ValuationModel::PiFamily { pi } => {
                if k <= 1 {
                    pi * theta
                } else {
                    (1.0 - pi) * theta
                }
            }
            ValuationModel::LinearInK { slopes } => slopes[k - 1] * theta,
            ValuationModel::Custom(custom) => (custom.value)(theta, k),
        }
    }

    /// Analytic `∂v/∂θ` when available.
    pub fn analytic_derivative(&self, theta: f64, k: usize) -> Option<f64> {
        match self {
            ValuationModel::NoNetworkEffects => Some(1.0),
            ValuationModel::PiFamily { pi } => Some(if k <= 1 { *pi } else { 1.0 - pi }),
            ValuationModel::LinearInK { slopes } => Some(slopes[k - 1]),
            ValuationModel::Custom(custom) => custom.derivative.as_ref().map(|d| d(theta, k)),
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        match self {
            ValuationModel::Custom(custom) => custom.has_derivative(),
            _ => true,
        }
    }

    fn finite_difference(&self, theta: f64, k: usize, upper: f64) -> f64 {
        let h = 1e-6 * upper;
        if theta - h < 0.0 {
            (self.value(theta + h, k) - self.value(theta, k)) / h
        } else if theta + h > upper {
            (self.value(theta, k) - self.value(theta - h, k)) / h
        } else {
            (self.value(theta + h, k) - self.value(theta - h, k)) / (2.0 * h)
        }
    }
}

/// Direct profit term `φ(k)` for `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitNetworkEffect {
    values: Vec<f64>,
}

impl ProfitNetworkEffect {
    pub fn zero(n: usize) -> Self {
        Self { values: vec![0.0; n + 1] }
    }

    pub fn from_table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEconomy("profit network effect needs finite values for k = 0..N".into()));
        }
        Ok(Self { values })
    }

    pub fn from_fn(n: usize, phi: impl Fn(usize) -> f64) -> Result<Self> {
        Self::from_table((0..=n).map(phi).collect())
    }

    pub fn phi(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A club-good economy with `N` iid buyers.
#[derive(Debug, Clone)]
pub struct Economy {
    n: usize,
    cost: f64,
    distribution: TypeDistribution,
    valuation: ValuationModel,
    profit_effect: ProfitNetworkEffect,
    active: Vec<bool>,
    check_resolution: usize,
}

impl Economy {
    /// Builds an economy and validates monotone values, uniform network-effect
    /// direction, single crossing and regularity on the default grid.
    pub fn new(
        n: usize,
        cost: f64,
        distribution: TypeDistribution,
        valuation: ValuationModel,
        profit_effect: ProfitNetworkEffect,
    ) -> Result<Self> {
        Self::with_check_resolution(n, cost, distribution, valuation, profit_effect, DEFAULT_CHECK_RESOLUTION)
    }

    pub fn with_check_resolution(
        n: usize,
        cost: f64,
        distribution: TypeDistribution,
        valuation: ValuationModel,
        profit_effect: ProfitNetworkEffect,
        check_resolution: usize,
    ) -> Result<Self> {
        let economy = Self::unchecked(n, cost, distribution, valuation, profit_effect, check_resolution)?;
        economy.check_values()?;
        economy.check_direction()?;
        if let Some(err) = economy.single_crossing_violation(check_resolution) {
            return Err(err);
        }
        if let Some(err) = economy.regularity_violation(check_resolution) {
            return Err(err);
        }
        Ok(economy)
    }

    /// Builds without the regularity and single-crossing checks; structural
    /// validation still applies. Used to inspect deliberately irregular models.
    pub fn unchecked(
        n: usize,
        cost: f64,
        distribution: TypeDistribution,
        valuation: ValuationModel,
        profit_effect: ProfitNetworkEffect,
        check_resolution: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidEconomy("at least one buyer is required".into()));
        }
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(Error::InvalidEconomy(format!("cost must be finite and nonnegative, got {cost}")));
        }
        if profit_effect.values.len() != n + 1 {
            return Err(Error::InvalidEconomy(format!(
                "profit network effect must list {} values (k = 0..N), got {}",
                n + 1,
                profit_effect.values.len()
            )));
        }
        if check_resolution < 2 {
            return Err(Error::InvalidArgument("check grid needs at least two points".into()));
        }
        match &valuation {
            ValuationModel::PiFamily { pi } if !(0.0..=1.0).contains(pi) => {
                return Err(Error::InvalidEconomy(format!("π must lie in [0, 1], got {pi}")));
            }
            ValuationModel::LinearInK { slopes } => {
                if slopes.len() < n {
                    return Err(Error::InvalidEconomy(format!(
                        "linear valuation needs {n} slopes, got {}",
                        slopes.len()
                    )));
                }
                if slopes[..n].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidEconomy("slopes must be finite and nonnegative".into()));
                }
            }
            _ => {}
        }
        let upper = distribution.upper();
        let grid = uniform_grid(0.0, upper, check_resolution);
        let active = (1..=n).map(|k| grid.iter().any(|&t| valuation.value(t, k) != 0.0)).collect();
        Ok(Self { n, cost, distribution, valuation, profit_effect, active, check_resolution })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn upper(&self) -> f64 {
        self.distribution.upper()
    }

    pub fn distribution(&self) -> &TypeDistribution {
        &self.distribution
    }

    pub fn valuation(&self) -> &ValuationModel {
        &self.valuation
    }

    pub fn profit_effect(&self) -> &ProfitNetworkEffect {
        &self.profit_effect
    }

    pub fn check_resolution(&self) -> usize {
        self.check_resolution
    }

    /// Set sizes whose value is not identically zero. Worthless sizes (such as
    /// solo consumption when π = 0) are exempt from the strictness checks.
    pub fn is_active_size(&self, k: usize) -> bool {
        self.active[k - 1]
    }

    pub fn value(&self, theta: f64, k: usize) -> f64 {
        self.valuation.value(theta, k)
    }

    pub fn dvalue(&self, theta: f64, k: usize) -> f64 {
        match self.valuation.analytic_derivative(theta, k) {
            Some(d) => d,
            None => self.valuation.finite_difference(theta, k, self.upper()),
        }
    }

    /// `ψ(θ, k) = v − (1 − F)/f · ∂v/∂θ` without domain checks.
    #[inline]
    pub(crate) fn psi(&self, theta: f64, k: usize) -> f64 {
        self.value(theta, k) - self.distribution.inverse_hazard(theta) * self.dvalue(theta, k)
    }

    pub fn virtual_value(&self, theta: f64, k: usize) -> Result<f64> {
        self.check_size(k, 1)?;
        self.check_type(theta)?;
        if self.distribution.pdf(theta) <= 0.0 {
            return Err(Error::InvalidEconomy(format!("density vanishes at {theta}")));
        }
        Ok(self.psi(theta, k))
    }

    /// `C(k) = c − (φ(k) − φ(0))`.
    pub fn adjusted_cost(&self, k: usize) -> Result<f64> {
        self.check_size(k, 0)?;
        Ok(self.adjusted_cost_unchecked(k))
    }

    #[inline]
    pub(crate) fn adjusted_cost_unchecked(&self, k: usize) -> f64 {
        self.cost - (self.profit_effect.phi(k) - self.profit_effect.phi(0))
    }

    pub fn phi(&self, k: usize) -> f64 {
        self.profit_effect.phi(k)
    }

    /// Revenue hurdle for growing the top-`k` set by `j` buyers:
    /// `φ(k) − φ(k+j) + Σ_{i≤k} [ψ(θ_i, k) − ψ(θ_i, k+j)]`.
    pub fn gamma(&self, k: usize, j: usize, prefix: &[f64]) -> Result<f64> {
        if j == 0 || k + j > self.n {
            return Err(Error::InvalidArgument(format!("need j ≥ 1 and k + j ≤ N, got k={k}, j={j}")));
        }
        if prefix.len() != k {
            return Err(Error::InvalidArgument(format!("prefix must hold {k} types, got {}", prefix.len())));
        }
        if prefix.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("prefix must be sorted in descending order".into()));
        }
        for (idx, &t) in prefix.iter().enumerate() {
            self.check_type(t).map_err(|_| Error::OutOfSupport { buyer: idx, value: t, upper: self.upper() })?;
        }
        let incumbents: f64 = prefix.iter().map(|&t| self.psi(t, k) - self.psi(t, k + j)).sum();
        Ok(self.phi(k) - self.phi(k + j) + incumbents)
    }

    fn check_size(&self, k: usize, min: usize) -> Result<()> {
        if k < min || k > self.n {
            return Err(Error::InvalidArgument(format!("set size {k} outside {min}..={}", self.n)));
        }
        Ok(())
    }

    fn check_type(&self, theta: f64) -> Result<()> {
        if !(theta >= 0.0 && theta <= self.upper()) {
            return Err(Error::InvalidArgument(format!("type {theta} outside [0, {}]", self.upper())));
        }
        Ok(())
    }

    fn grid(&self, resolution: usize) -> Vec<f64> {
        uniform_grid(0.0, self.upper(), resolution)
    }

    fn check_values(&self) -> Result<()> {
        let grid = self.grid(self.check_resolution);
        for k in 1..=self.n {
            let values: Vec<f64> = grid.iter().map(|&t| self.value(t, k)).collect();
            if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidEconomy(format!("value for set size {k} must be finite and nonnegative")));
            }
            if !self.is_active_size(k) {
                continue;
            }
            for (g, pair) in values.windows(2).enumerate() {
                if !(pair[1] > pair[0]) {
                    return Err(Error::ValueNotIncreasing { set_size: k, theta: grid[g] });
                }
            }
        }
        Ok(())
    }

    fn check_direction(&self) -> Result<()> {
        let grid = self.grid(self.check_resolution);
        for low in 1..=self.n {
            for high in low + 1..=self.n {
                let mut seen = 0i8;
                for &t in grid.iter().filter(|&&t| t > 0.0) {
                    let sign = self.effect_sign(t, low, high);
                    if sign == 0 {
                        continue;
                    }
                    if seen == 0 {
                        seen = sign;
                    } else if sign != seen {
                        return Err(Error::MixedDirection { low, high, theta: t });
                    }
                }
            }
        }
        Ok(())
    }

    fn effect_sign(&self, theta: f64, low: usize, high: usize) -> i8 {
        let (a, b) = (self.value(theta, high), self.value(theta, low));
        let diff = a - b;
        if diff.abs() <= ZERO_SLACK * a.abs().max(b.abs()).max(1.0) {
            0
        } else if diff > 0.0 {
            1
        } else {
            -1
        }
    }

    fn regularity_violation(&self, resolution: usize) -> Option<Error> {
        let grid = self.grid(resolution);
        for k in (1..=self.n).filter(|&k| self.is_active_size(k)) {
            let mut previous = self.psi(grid[0], k);
            for &t in &grid[1..] {
                let current = self.psi(t, k);
                if !(current > previous) {
                    return Some(Error::NotRegular { set_size: k, theta: t, step: current - previous });
                }
                previous = current;
            }
        }
        None
    }

    fn single_crossing_violation(&self, resolution: usize) -> Option<Error> {
        let grid = self.grid(resolution);
        for low in 1..=self.n {
            for high in low + 1..=self.n {
                let diffs: Vec<f64> = grid.iter().map(|&t| self.value(t, high) - self.value(t, low)).collect();
                let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1.0);
                for g in 1..grid.len() {
                    let change = diffs[g] - diffs[g - 1];
                    let level = diffs[g];
                    if change.abs() <= ZERO_SLACK * scale || level.abs() <= ZERO_SLACK * scale {
                        continue;
                    }
                    if change.signum() != level.signum() {
                        return Some(Error::SingleCrossing {
                            low,
                            high,
                            lower_type: grid[g - 1],
                            upper_type: grid[g],
                        });
                    }
                }
            }
        }
        None
    }

    /// Samples ψ(·, k) on a uniform grid and reports the smallest adjacent step.
    pub fn check_regularity(&self, grid_resolution: usize) -> Result<VerificationReport> {
        if grid_resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        let grid = self.grid(grid_resolution);
        let mut worst = f64::INFINITY;
        let mut witness = None;
        for k in (1..=self.n).filter(|&k| self.is_active_size(k)) {
            for pair in grid.windows(2) {
                let step = self.psi(pair[1], k) - self.psi(pair[0], k);
                if step < worst {
                    worst = step;
                    witness = Some(format!("set size {k}, types {} -> {}", pair[0], pair[1]));
                }
            }
        }
        let passed = worst > 0.0;
        Ok(VerificationReport::new("regularity", passed, -worst, 0.0, witness)
            .with_note(format!("grid resolution {grid_resolution}")))
    }

    /// Checks that value differences between set sizes move with type in the
    /// direction of their sign.
    pub fn check_single_crossing(&self, grid_resolution: usize) -> Result<VerificationReport> {
        if grid_resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        let report = match self.single_crossing_violation(grid_resolution) {
            None => VerificationReport::new("single_crossing", true, 0.0, 0.0, None),
            Some(err) => VerificationReport::new("single_crossing", false, 1.0, 0.0, Some(err.to_string())),
        };
        Ok(report.with_note(format!("grid resolution {grid_resolution}")))
    }
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|g| if g + 1 == count { hi } else { lo + step * g as f64 }).collect()
        }
    }
}

/// Convenience constructors for the parameterizations used throughout.
pub mod presets {
    use super::*;

    /// Two buyers, uniform types on [0, 1], `v = πθ` alone and `(1 − π)θ` jointly.
    pub fn pi_family(pi: f64, cost: f64) -> Result<Economy> {
        Economy::new(
            2,
            cost,
            TypeDistribution::uniform(1.0)?,
            ValuationModel::PiFamily { pi },
            ProfitNetworkEffect::zero(2),
        )
    }

    /// Two buyers, uniform types, `v = θ`, profit effects `(0, φ1, φ2)`.
    pub fn no_value_effects(cost: f64, phi1: f64, phi2: f64) -> Result<Economy> {
        Economy::new(
            2,
            cost,
            TypeDistribution::uniform(1.0)?,
            ValuationModel::NoNetworkEffects,
            ProfitNetworkEffect::from_table(vec![0.0, phi1, phi2])?,
        )
    }
}
