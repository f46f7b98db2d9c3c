//! End-to-end checks behind `clubgood verify-all`, one report per criterion.

use serde::Serialize;

use crate::economy::{presets, uniform_grid, Economy, ProfitNetworkEffect, TypeDistribution, ValuationModel};
use crate::error::Result;
use crate::indirect::{
    build_allpay, build_exclusivity_game, build_gift_game, verify_equilibrium, verify_outcome_equivalence, AllPayOptions,
    EquilibriumReport, IndirectGame, DEFAULT_EQUILIBRIUM_DRAWS,
};
use crate::payments::{classify_trivial, envelope_payments, interim_schedule, InterimMethod, Triviality};
use crate::report::VerificationReport;
use crate::verification::{
    benchmark_cutoffs, check_dsic, check_ir, oracle_check, posted_price_limit, region_grid, BenchmarkCutoffs,
    LargeMarketFamily, RegionLabel,
};

/// Sweep sizes. `Full` matches the published acceptance thresholds; `Quick`
/// shrinks every grid and sample for smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SuiteScale {
    Full,
    Quick,
}

impl SuiteScale {
    fn pick(self, full: usize, quick: usize) -> usize {
        match self {
            SuiteScale::Full => full,
            SuiteScale::Quick => quick,
        }
    }
}

/// Criterion number with its report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub criterion: usize,
    pub report: VerificationReport,
}

const CUTOFF_TOLERANCE: f64 = 1e-8;

/// Two-buyer linear economy `v = g(k) θ` with `c = 1/2` on `[0, 1]`.
fn panel(slopes: [f64; 2], phi: [f64; 2]) -> Result<Economy> {
    Economy::new(
        2,
        0.5,
        TypeDistribution::uniform(1.0)?,
        ValuationModel::LinearInK { slopes: slopes.to_vec() },
        ProfitNetworkEffect::from_table(vec![0.0, phi[0], phi[1]])?,
    )
}

/// The four region panels with their slopes and profit effects.
pub fn region_panels() -> Result<Vec<(&'static str, Economy)>> {
    let third = 1.0 / 3.0;
    Ok(vec![
        ("no effects", panel([1.0, 1.0], [0.0, 0.0])?),
        ("flat profit effect", panel([1.0, 1.0], [0.1, 0.1])?),
        ("rising profit effect", panel([1.0, 1.0], [0.1, 0.2])?),
        ("rising values", panel([3.0 * third, 4.0 * third], [0.1, 0.2])?),
    ])
}

fn pi_economies() -> Result<Vec<(f64, Economy)>> {
    [1.0, 2.0 / 3.0, 5.0 / 8.0, 3.0 / 8.0, 0.0].into_iter().map(|pi| Ok((pi, presets::pi_family(pi, 0.25)?))).collect()
}

/// Region label from the linear closed forms `Σ g(|S|)(2θᵢ − 1) ≥ c − φ(|S|)`.
fn linear_region(theta: (f64, f64), slopes: [f64; 2], phi: [f64; 2], cost: f64) -> RegionLabel {
    let (a, b) = theta;
    let candidates = [
        (RegionLabel::Nobody, 0.0),
        (RegionLabel::First, slopes[0] * (2.0 * a - 1.0) - cost + phi[0]),
        (RegionLabel::Second, slopes[0] * (2.0 * b - 1.0) - cost + phi[0]),
        (RegionLabel::Both, slopes[1] * (2.0 * a + 2.0 * b - 2.0) - cost + phi[1]),
    ];
    candidates.iter().fold(candidates[0], |best, &c| if c.1 > best.1 { c } else { best }).0
}

fn criterion_regions(scale: SuiteScale) -> Result<VerificationReport> {
    let resolution = scale.pick(2001, 201);
    let specs = [([1.0, 1.0], [0.0, 0.0]), ([1.0, 1.0], [0.1, 0.1]), ([1.0, 1.0], [0.1, 0.2]), ([1.0, 4.0 / 3.0], [0.1, 0.2])];
    let mut mismatches = 0usize;
    let mut witness = None;
    for ((name, economy), (slopes, phi)) in region_panels()?.into_iter().zip(specs) {
        let grid = region_grid(&economy, resolution)?;
        let band = grid.boundary_band();
        for i in 0..resolution {
            for j in 0..resolution {
                if band[i * resolution + j] {
                    continue;
                }
                let expected = linear_region((grid.centre(i), grid.centre(j)), slopes, phi, 0.5);
                if grid.label(i, j) != expected {
                    mismatches += 1;
                    witness.get_or_insert_with(|| format!("{name}: cell ({i}, {j})"));
                }
            }
        }
    }
    Ok(VerificationReport::from_violation("region_panels", mismatches as f64, 0.0, witness)
        .with_note(format!("resolution {resolution}, mismatched cells outside the band: {mismatches}")))
}

fn criterion_cutoffs() -> Result<VerificationReport> {
    let expected: [&[f64]; 5] = [&[0.625], &[11.0 / 16.0], &[19.0 / 30.0, 0.7, 5.0 / 6.0], &[0.3, 11.0 / 30.0, 5.0 / 6.0], &[1.125]];
    let mut worst = 0.0f64;
    let mut witness = None;
    for ((pi, economy), want) in pi_economies()?.into_iter().zip(expected) {
        let got: Vec<f64> = match benchmark_cutoffs(&economy)? {
            BenchmarkCutoffs::Reserve { reserve } => vec![reserve],
            BenchmarkCutoffs::FourRegion { x, y, z, .. } => vec![x, y, z],
            BenchmarkCutoffs::PublicGood { line_sum, .. } => vec![line_sum],
        };
        let error = if got.len() == want.len() {
            got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        if error > worst {
            worst = error;
            witness = Some(format!("pi = {pi}: {got:?}"));
        }
    }
    Ok(VerificationReport::from_violation("benchmark_cutoffs", worst, CUTOFF_TOLERANCE, witness))
}

fn criterion_incentives(scale: SuiteScale, seed: u64) -> Result<VerificationReport> {
    let points = scale.pick(101, 21);
    let draws = scale.pick(500, 40);
    let grid = uniform_grid(0.0, 1.0, points);
    let mut economies: Vec<(String, Economy)> = region_panels()?.into_iter().map(|(n, e)| (n.to_string(), e)).collect();
    economies.extend(pi_economies()?.into_iter().map(|(pi, e)| (format!("pi = {pi}"), e)));
    let mut failures = Vec::new();
    let (mut worst_gain, mut worst_ir) = (0.0f64, 0.0f64);
    for (name, economy) in &economies {
        let dsic = check_dsic(economy, &grid, &grid, draws, seed)?;
        let ir = check_ir(economy, &grid, draws, seed)?;
        worst_gain = worst_gain.max(dsic.worst_violation);
        worst_ir = worst_ir.max(ir.worst_violation);
        for report in [dsic, ir].into_iter().filter(|r| !r.passed) {
            failures.push(format!("{name}: {report}"));
        }
    }
    let passed = failures.is_empty();
    Ok(VerificationReport::new("incentive_sweeps", passed, worst_gain, crate::verification::DSIC_TOLERANCE, failures.first().cloned())
        .with_note(format!("{} economies, {points} types, {draws} draws, largest participation shortfall {worst_ir:e}", economies.len())))
}

fn criterion_interim_monotone() -> Result<VerificationReport> {
    let grid = uniform_grid(0.0, 1.0, 401);
    let mut worst = 0.0f64;
    let mut witness = None;
    for pi in [0.0, 3.0 / 8.0, 5.0 / 8.0, 1.0] {
        let m = interim_schedule(&presets::pi_family(pi, 0.25)?, 0, &grid, InterimMethod::Quadrature)?.payments();
        for (i, w) in m.windows(2).enumerate() {
            let drop = w[0] - w[1];
            if drop > worst {
                worst = drop;
                witness = Some(format!("pi = {pi}, type {}", grid[i + 1]));
            }
        }
    }
    Ok(VerificationReport::from_violation("interim_monotone", worst, 1e-9, witness))
}

fn criterion_envelope() -> Result<VerificationReport> {
    let grid = uniform_grid(0.0, 1.0, 401);
    let mut worst = 0.0f64;
    let mut witness = None;
    for pi in [3.0 / 8.0, 5.0 / 8.0, 1.0] {
        let economy = presets::pi_family(pi, 0.25)?;
        let direct = interim_schedule(&economy, 0, &grid, InterimMethod::Quadrature)?.payments();
        let envelope = envelope_payments(&economy, 0, &grid)?;
        for ((a, b), t) in direct.iter().zip(&envelope).zip(&grid) {
            if (a - b).abs() > worst {
                worst = (a - b).abs();
                witness = Some(format!("pi = {pi}, type {t}"));
            }
        }
    }
    let rival = envelope_payments(&presets::pi_family(1.0, 0.25)?, 0, &grid)?;
    let closed_form = grid
        .iter()
        .zip(&rival)
        .filter(|(&t, _)| t > 0.625)
        .map(|(&t, &m)| (m - (t * t / 2.0 + 25.0 / 128.0)).abs())
        .fold(0.0, f64::max);
    let passed = worst <= 1e-6 && closed_form <= 1e-8;
    Ok(VerificationReport::new("envelope_consistency", passed, worst, 1e-6, witness)
        .with_note(format!("rival closed-form error {closed_form:e}")))
}

fn summarise_game<G: IndirectGame>(name: String, game: &G, scale: SuiteScale, seed: u64) -> Result<(String, EquilibriumReport)> {
    let types = uniform_grid(0.0, game.economy().upper(), scale.pick(101, 21));
    let deviations = game.deviation_grid(scale.pick(201, 41));
    let draws = scale.pick(DEFAULT_EQUILIBRIUM_DRAWS, 4_000);
    let report = verify_equilibrium(game, &types, &deviations, draws, seed)?
        .with_equivalence(verify_outcome_equivalence(game, scale.pick(201, 61))?);
    Ok((name, report))
}

/// Builds every indirect game of the benchmark family and runs both checks.
pub fn indirect_reports(scale: SuiteScale, seed: u64) -> Result<Vec<(String, EquilibriumReport)>> {
    let mut reports = Vec::new();
    for pi in [3.0 / 8.0, 5.0 / 8.0, 1.0] {
        let game = build_allpay(&presets::pi_family(pi, 0.25)?, AllPayOptions::default())?;
        reports.push(summarise_game(format!("allpay, pi = {pi}"), &game, scale, seed)?);
    }
    reports.push(summarise_game("gift, pi = 0.375".into(), &build_gift_game(3.0 / 8.0, 0.25)?, scale, seed)?);
    reports.push(summarise_game("exclusivity, pi = 0.625".into(), &build_exclusivity_game(5.0 / 8.0, 0.25)?, scale, seed)?);
    Ok(reports)
}

fn criterion_indirect(scale: SuiteScale, seed: u64) -> Result<VerificationReport> {
    let reports = indirect_reports(scale, seed)?;
    let worst_margin = reports
        .iter()
        .flat_map(|(_, r)| r.rows.iter().map(|row| row.worst_margin))
        .fold(f64::NEG_INFINITY, f64::max);
    let failed: Vec<&str> = reports.iter().filter(|(_, r)| !r.passed()).map(|(n, _)| n.as_str()).collect();
    let mut report = VerificationReport::new(
        "indirect_games",
        failed.is_empty(),
        worst_margin,
        crate::indirect::GAIN_SLACK,
        failed.first().map(|s| s.to_string()),
    );
    for (name, r) in &reports {
        let eq = r.equivalence.as_ref().expect("equivalence attached");
        report = report.with_note(format!(
            "{name}: largest gain {:e}, mismatches outside band {}, payment error {:e}",
            r.worst_row().map_or(0.0, |w| w.gain),
            eq.mismatches_outside_band,
            eq.max_payment_error
        ));
    }
    Ok(report)
}

/// Family used for the large-market check: `v = θ (2 − 1/k)`, `φ(k) = ln(1 + k)/10`, `c = 1`.
pub fn limit_family() -> Result<LargeMarketFamily> {
    Ok(LargeMarketFamily::saturating(2.0, 1.0, 0.1, 1.0, TypeDistribution::uniform(1.0)?))
}

fn criterion_limit(scale: SuiteScale, seed: u64) -> Result<VerificationReport> {
    let n = scale.pick(1000, 200);
    let replications = scale.pick(50, 5);
    let report = posted_price_limit(&limit_family()?, &[n], replications, seed)?;
    Ok(report.verdict(0.02, 0.05))
}

/// The three reference economies of the triviality classification.
pub fn triviality_instances() -> Result<Vec<(Triviality, Economy)>> {
    let linear = |cost: f64, phi: Vec<f64>| -> Result<Economy> {
        Economy::new(2, cost, TypeDistribution::uniform(1.0)?, ValuationModel::NoNetworkEffects, ProfitNetworkEffect::from_table(phi)?)
    };
    Ok(vec![
        (Triviality::NeverProvide, linear(10.0, vec![0.0; 3])?),
        (Triviality::AlwaysProvideFree, linear(0.0, vec![0.0, 5.0, 10.0])?),
        (Triviality::NonTrivial, presets::pi_family(5.0 / 8.0, 0.25)?),
    ])
}

fn criterion_triviality() -> Result<VerificationReport> {
    let mut wrong = Vec::new();
    for (expected, economy) in triviality_instances()? {
        let verdict = classify_trivial(&economy);
        let consistent = verdict
            .never_provide
            .iter()
            .all(|w| w.holds == (w.lhs < w.rhs))
            && verdict.always_provide.iter().all(|w| w.holds == (w.lhs >= w.rhs));
        if verdict.verdict != expected || !consistent {
            wrong.push(format!("expected {expected:?}, got {:?}", verdict.verdict));
        }
    }
    Ok(VerificationReport::from_violation("triviality", wrong.len() as f64, 0.0, wrong.first().cloned()))
}

/// Runs every criterion in order.
pub fn run_suite(scale: SuiteScale, seed: u64) -> Result<Vec<SuiteEntry>> {
    let (economies, profiles) = (scale.pick(500, 50), scale.pick(200, 40));
    let reports = vec![
        oracle_check(economies, profiles, 8, seed)?,
        criterion_regions(scale)?,
        criterion_cutoffs()?,
        criterion_incentives(scale, seed)?,
        criterion_interim_monotone()?,
        criterion_envelope()?,
        criterion_indirect(scale, seed)?,
        criterion_limit(scale, seed)?,
        criterion_triviality()?,
    ];
    Ok(reports.into_iter().enumerate().map(|(i, report)| SuiteEntry { criterion: i + 1, report }).collect())
}
