//! Acceptance run: one PASS/FAIL line per criterion, each backed by a
//! test-side oracle that does not go through the library's own checks.

use std::process::ExitCode;
use std::time::Instant;

use clubgood::allocation::solve_allocation;
use clubgood::economy::{presets, uniform_grid, Economy};
use clubgood::indirect::{build_allpay, AllPayOptions, IndirectGame};
use clubgood::payments::{classify_trivial, envelope_payments, expost_transfers, interim_schedule, InterimMethod, Triviality};
use clubgood::suite::{indirect_reports, limit_family, region_panels, triviality_instances, SuiteScale};
use clubgood::verification::{
    benchmark_cutoffs, check_dsic, check_ir, posted_price_limit, random_regular_economy, region_grid, BenchmarkCutoffs,
    RegionLabel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

type Piece = fn(f64) -> f64;
type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// `v − (1 − F)/f · ∂v/∂θ` from the primitives.
fn virtual_value(economy: &Economy, theta: f64, k: usize) -> f64 {
    let dist = economy.distribution();
    economy.value(theta, k) - (1.0 - dist.cdf(theta)) / dist.pdf(theta) * economy.dvalue(theta, k)
}

fn subset_profit(economy: &Economy, profile: &[f64], mask: u32) -> f64 {
    let size = mask.count_ones() as usize;
    let members = (0..profile.len()).filter(|i| mask & (1 << i) != 0);
    let surplus: f64 = members.map(|i| virtual_value(economy, profile[i], size)).sum();
    surplus + economy.phi(size) - if size > 0 { economy.cost() } else { 0.0 }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_gap, mut set_mismatches, mut signs) = (0.0f64, 0usize, [0usize; 2]);
    for _ in 0..500 {
        let n = rng.gen_range(2..=8);
        let economy = random_regular_economy(&mut rng, n).unwrap();
        let rising = economy.value(1.0, n) > economy.value(1.0, 1);
        signs[rising as usize] += 1;
        for _ in 0..200 {
            let profile: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=economy.upper())).collect();
            let mut profits: Vec<(f64, u32)> = (0..1u32 << n).map(|m| (subset_profit(&economy, &profile, m), m)).collect();
            profits.sort_by(|a, b| b.0.total_cmp(&a.0));
            let solved = solve_allocation(&economy, &profile).unwrap();
            worst_gap = worst_gap.max((solved.profit - profits[0].0).abs());
            let solved_mask = solved.consumers().iter().fold(0u32, |m, &i| m | 1 << i);
            if profits[0].0 - profits[1].0 > 1e-7 && solved_mask != profits[0].1 {
                set_mismatches += 1;
            }
        }
    }
    Outcome::new(
        worst_gap <= 1e-9 && set_mismatches == 0,
        format!("worst profit gap {worst_gap:e}, set mismatches {set_mismatches}, falling/rising values {signs:?}"),
    )
}

/// Linear panels: `ψ(θ, k) = g(k)(2θ − 1)`.
fn panel_label(a: f64, b: f64, slopes: [f64; 2], phi: [f64; 2]) -> RegionLabel {
    let cost = 0.5;
    let options = [
        (0.0, RegionLabel::Nobody),
        (slopes[0] * (2.0 * a - 1.0) + phi[0] - cost, RegionLabel::First),
        (slopes[0] * (2.0 * b - 1.0) + phi[0] - cost, RegionLabel::Second),
        (slopes[1] * (2.0 * (a + b) - 2.0) + phi[1] - cost, RegionLabel::Both),
    ];
    options.iter().copied().reduce(|best, o| if o.0 > best.0 { o } else { best }).unwrap().1
}

fn region_reproduction() -> Outcome {
    let resolution = 2001;
    let step = 1.0 / resolution as f64;
    // Slopes, profit effects, single-buyer threshold, joint boundary θ₁ + θ₂.
    let panels = [
        ([1.0, 1.0], [0.0, 0.0], 0.75, 1.25),
        ([1.0, 1.0], [0.1, 0.1], 0.7, 1.2),
        ([1.0, 1.0], [0.1, 0.2], 0.7, 23.0 / 20.0),
        ([1.0, 4.0 / 3.0], [0.1, 0.2], 0.7, 89.0 / 80.0),
    ];
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for ((name, economy), (slopes, phi, threshold, line)) in region_panels().unwrap().into_iter().zip(panels) {
        let started = Instant::now();
        let grid = region_grid(&economy, resolution).unwrap();
        let band = grid.boundary_band();
        let mut wrong = 0usize;
        for i in 0..resolution {
            for j in 0..resolution {
                if band[i * resolution + j] {
                    continue;
                }
                checked += 1;
                if grid.label(i, j) != panel_label(grid.centre(i), grid.centre(j), slopes, phi) {
                    wrong += 1;
                }
            }
        }
        let solo_entry = (0..resolution).find(|&i| grid.label(i, 0) == RegionLabel::First).map(|i| grid.centre(i));
        let joint_entry = (0..resolution).find(|&i| grid.label(i, i) == RegionLabel::Both).map(|i| 2.0 * grid.centre(i));
        let solo_ok = solo_entry.is_some_and(|t| (t - threshold).abs() <= step);
        let joint_ok = joint_entry.is_some_and(|s| (s - line).abs() <= 2.0 * step);
        let elapsed = started.elapsed().as_secs_f64();
        if wrong > 0 || !solo_ok || !joint_ok || elapsed > 60.0 {
            failures.push(format!("{name}: {wrong} cells, solo {solo_entry:?}, joint {joint_entry:?}, {elapsed:.1}s"));
        }
    }
    Outcome::new(failures.is_empty(), if failures.is_empty() { format!("{checked} cells outside the band agree") } else { failures.join("; ") })
}

fn cutoff_values() -> Outcome {
    let cases: [(f64, &[f64]); 5] = [
        (1.0, &[5.0 / 8.0]),
        (2.0 / 3.0, &[11.0 / 16.0]),
        (5.0 / 8.0, &[19.0 / 30.0, 7.0 / 10.0, 5.0 / 6.0]),
        (3.0 / 8.0, &[3.0 / 10.0, 11.0 / 30.0, 5.0 / 6.0]),
        (0.0, &[1.0 / 8.0, 9.0 / 8.0]),
    ];
    let mut worst = 0.0f64;
    let mut shape_errors = Vec::new();
    for (pi, expected) in cases {
        let got = match benchmark_cutoffs(&presets::pi_family(pi, 0.25).unwrap()).unwrap() {
            BenchmarkCutoffs::Reserve { reserve } => vec![reserve],
            BenchmarkCutoffs::FourRegion { x, y, z, .. } => vec![x, y, z],
            BenchmarkCutoffs::PublicGood { lowest, line_sum } => vec![lowest, line_sum],
        };
        if got.len() != expected.len() {
            shape_errors.push(format!("pi = {pi}: {got:?}"));
            continue;
        }
        worst = got.iter().zip(expected).map(|(g, e)| (g - e).abs()).fold(worst, f64::max);
    }
    Outcome::new(worst <= 1e-8 && shape_errors.is_empty(), format!("worst cutoff error {worst:e} {}", shape_errors.join("; ")))
}

fn benchmark_economies() -> Vec<(String, Economy)> {
    let mut all: Vec<(String, Economy)> = region_panels().unwrap().into_iter().map(|(n, e)| (n.to_string(), e)).collect();
    for pi in [1.0, 2.0 / 3.0, 5.0 / 8.0, 3.0 / 8.0, 0.0] {
        all.push((format!("pi = {pi}"), presets::pi_family(pi, 0.25).unwrap()));
    }
    all
}

/// Ex-post utility of a buyer of type `theta` who reports `report`.
fn utility(economy: &Economy, theta: f64, report: f64, opponents: &[f64]) -> f64 {
    let profile: Vec<f64> = std::iter::once(report).chain(opponents.iter().copied()).collect();
    let allocation = solve_allocation(economy, &profile).unwrap();
    let transfers = expost_transfers(economy, &profile).unwrap();
    let value = if allocation.consume[0] { economy.value(theta, allocation.set_size) } else { 0.0 };
    value - transfers.payments[0]
}

fn incentive_sweeps() -> Outcome {
    let started = Instant::now();
    let grid = uniform_grid(0.0, 1.0, 101);
    let (mut lib_gain, mut lib_ir, mut lib_ok) = (0.0f64, 0.0f64, true);
    let (mut own_gain, mut own_ir) = (0.0f64, 0.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let coarse = uniform_grid(0.0, 1.0, 21);
    for (_, economy) in benchmark_economies() {
        let dsic = check_dsic(&economy, &grid, &grid, 500, SEED).unwrap();
        let ir = check_ir(&economy, &grid, 500, SEED).unwrap();
        lib_ok &= dsic.passed && ir.passed;
        lib_gain = lib_gain.max(dsic.worst_violation);
        lib_ir = lib_ir.max(ir.worst_violation);
        for _ in 0..10 {
            let opponent = [rng.gen_range(0.0..=1.0)];
            for &theta in &coarse {
                let truthful = utility(&economy, theta, theta, &opponent);
                own_ir = own_ir.max(-truthful);
                for &report in &coarse {
                    own_gain = own_gain.max(utility(&economy, theta, report, &opponent) - truthful);
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let passed = lib_ok && lib_gain <= 1e-8 && lib_ir <= 1e-10 && own_gain <= 1e-8 && own_ir <= 1e-10 && elapsed < 300.0;
    Outcome::new(
        passed,
        format!("sweep gain {lib_gain:e}, shortfall {lib_ir:e}; recomputed gain {own_gain:e}, shortfall {own_ir:e}; {elapsed:.0}s"),
    )
}

/// Expected payment of the two-buyer `π` family, piecewise in the own type.
fn interim_payment_closed_form(pi: f64, theta: f64) -> Option<f64> {
    let t2 = theta * theta;
    if pi == 1.0 {
        return Some(if theta < 0.625 { 0.0 } else { t2 / 2.0 + 25.0 / 128.0 });
    }
    let (cuts, pieces): ([f64; 3], [Piece; 3]) = if pi == 5.0 / 8.0 {
        (
            [19.0 / 30.0, 0.7, 5.0 / 6.0],
            [|t| (900.0 * t - 361.0) / 1920.0, |t| (700.0 * t + 269.0) / 1920.0, |t| (40.0 * t + 161.0) / 480.0],
        )
    } else if pi == 3.0 / 8.0 {
        ([0.3, 11.0 / 30.0, 5.0 / 6.0], [|t| (100.0 * t - 9.0) / 128.0, |t| 5.0 * t / 16.0 - 7.0 / 960.0, |t| (24.0 * t + 139.0) / 480.0])
    } else {
        return None;
    };
    if cuts.iter().any(|c| (theta - c).abs() < 1e-6) {
        return None;
    }
    Some(match cuts.iter().filter(|&&c| theta > c).count() {
        0 => 0.0,
        piece => pieces[piece - 1](t2),
    })
}

fn interim_monotonicity() -> Outcome {
    let grid = uniform_grid(0.0, 1.0, 401);
    let (mut worst_drop, mut worst_closed) = (0.0f64, 0.0f64);
    for pi in [0.0, 3.0 / 8.0, 5.0 / 8.0, 1.0] {
        let m = interim_schedule(&presets::pi_family(pi, 0.25).unwrap(), 0, &grid, InterimMethod::Quadrature).unwrap().payments();
        worst_drop = m.windows(2).map(|w| w[0] - w[1]).fold(worst_drop, f64::max);
        for (t, v) in grid.iter().zip(&m) {
            if let Some(exact) = interim_payment_closed_form(pi, *t) {
                worst_closed = worst_closed.max((v - exact).abs());
            }
        }
    }
    Outcome::new(
        worst_drop <= 1e-9 && worst_closed <= 1e-8,
        format!("largest adjacent decrease {worst_drop:e}, closed-form error {worst_closed:e}"),
    )
}

fn envelope_consistency() -> Outcome {
    let grid = uniform_grid(0.0, 1.0, 401);
    let (mut worst_gap, mut worst_closed) = (0.0f64, 0.0f64);
    for pi in [3.0 / 8.0, 5.0 / 8.0, 1.0] {
        let economy = presets::pi_family(pi, 0.25).unwrap();
        let direct = interim_schedule(&economy, 0, &grid, InterimMethod::Quadrature).unwrap().payments();
        let envelope = envelope_payments(&economy, 0, &grid).unwrap();
        for ((t, a), b) in grid.iter().zip(&direct).zip(&envelope) {
            worst_gap = worst_gap.max((a - b).abs());
            if pi == 1.0 && *t > 0.625 {
                worst_closed = worst_closed.max((b - interim_payment_closed_form(1.0, *t).unwrap()).abs());
            }
        }
    }
    Outcome::new(
        worst_gap <= 1e-6 && worst_closed <= 1e-8,
        format!("direct vs envelope {worst_gap:e}, rival closed form {worst_closed:e}"),
    )
}

fn indirect_implementations() -> Outcome {
    let mut notes = Vec::new();
    let mut passed = true;
    for (name, report) in indirect_reports(SuiteScale::Full, SEED).unwrap() {
        // Best deviation per type, and the margin over every deviation.
        let worst_excess = report
            .rows
            .iter()
            .map(|r| (r.gain - 2.0 * r.gain_stderr).max(r.worst_margin) - 1e-6)
            .fold(f64::NEG_INFINITY, f64::max);
        let eq = report.equivalence.as_ref().unwrap();
        let ok = report.rows.len() == 101
            && report.deviations.len() >= 201
            && report.draws == 50_000
            && eq.resolution == 201
            && worst_excess <= 0.0
            && eq.mismatches_outside_band == 0
            && eq.max_payment_error <= 1e-5;
        passed &= ok;
        notes.push(format!("{name} [{}]: excess {worst_excess:.2e}, payment {:.1e}", if ok { "ok" } else { "bad" }, eq.max_payment_error));
    }
    // Equilibrium contributions of the rival-good game are the interim payments.
    let game = build_allpay(&presets::pi_family(1.0, 0.25).unwrap(), AllPayOptions::default()).unwrap();
    let strategy_error = [0.7, 0.8, 0.95].iter().map(|&t| (game.strategy(t) - (t * t / 2.0 + 25.0 / 128.0)).abs()).fold(0.0, f64::max);
    let below_reserve = game.strategy(0.5);
    passed &= strategy_error <= 1e-6 && below_reserve == 0.0;
    notes.push(format!("rival contributions error {strategy_error:e}"));
    Outcome::new(passed, notes.join("; "))
}

fn large_market() -> Outcome {
    let started = Instant::now();
    let family = limit_family().unwrap();
    let economy = family.economy(4).unwrap();
    let shape_ok = (1..=4).all(|k| (economy.value(0.6, k) - 0.6 * (2.0 - 1.0 / k as f64)).abs() < 1e-12);
    let report = posted_price_limit(&family, &[1000], 50, SEED).unwrap();
    let last = report.sizes.last().unwrap();
    // Limit virtual value 2θ − 2(1 − θ) vanishes at 1/2, serving half the market.
    let price_ok = (report.posted_price - 0.5).abs() <= 1e-9 && (report.limit_fraction - 0.5).abs() <= 1e-9;

    let large = family.economy(1000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 8);
    let (mut own_threshold, mut own_served) = (0.0f64, 0usize);
    for _ in 0..5 {
        let profile: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let allocation = solve_allocation(&large, &profile).unwrap();
        let served: Vec<f64> = allocation.consumers().iter().map(|&i| profile[i]).collect();
        let lowest = served.iter().copied().fold(f64::INFINITY, f64::min);
        own_threshold = own_threshold.max((lowest - 0.5).abs());
        own_served += served.len();
    }
    let own_fraction = (own_served as f64 / 5000.0 - 0.5).abs();
    let pooled_error = (last.mean_fraction - report.limit_fraction).abs();
    let elapsed = started.elapsed().as_secs_f64();
    let passed = shape_ok
        && price_ok
        && last.n == 1000
        && last.replications == 50
        && last.max_threshold_error <= 0.02
        && pooled_error <= 0.05
        && own_threshold <= 0.02
        && own_fraction <= 0.05
        && elapsed < 120.0;
    Outcome::new(
        passed,
        format!(
            "price {}, worst threshold error {:.4}, pooled fraction error {pooled_error:.4} (worst replication {:.4}); resampled {own_threshold:.4}, {own_fraction:.4}; {elapsed:.0}s",
            report.posted_price, last.max_threshold_error, last.max_fraction_error
        ),
    )
}

fn triviality_classification() -> Outcome {
    let mut problems = Vec::new();
    let expected = [Triviality::NeverProvide, Triviality::AlwaysProvideFree, Triviality::NonTrivial];
    for ((want, economy), expected) in triviality_instances().unwrap().into_iter().zip(expected) {
        assert_eq!(want, expected);
        let n = economy.n();
        let top = economy.upper();
        let adjusted = |k: usize| economy.cost() - (economy.phi(k) - economy.phi(0));
        let never = (1..=n).all(|k| (k as f64) * virtual_value(&economy, top, k) < adjusted(k));
        let bottom = virtual_value(&economy, 0.0, n);
        // Hurdle for growing the bottom-typed top-k set to everyone.
        let gamma = |k: usize| {
            economy.phi(k) - economy.phi(n) + k as f64 * (virtual_value(&economy, 0.0, k) - virtual_value(&economy, 0.0, n))
        };
        let always = n as f64 * bottom >= adjusted(n) && (1..n).all(|k| (n - k) as f64 * bottom >= gamma(k));
        let own = if never {
            Triviality::NeverProvide
        } else if always {
            Triviality::AlwaysProvideFree
        } else {
            Triviality::NonTrivial
        };
        let verdict = classify_trivial(&economy);
        let witnesses_ok = verdict.never_provide.iter().enumerate().all(|(i, w)| {
            let k = i + 1;
            (w.lhs - k as f64 * virtual_value(&economy, top, k)).abs() < 1e-12
                && (w.rhs - adjusted(k)).abs() < 1e-12
                && w.holds == (w.lhs < w.rhs)
        }) && verdict.always_provide.iter().enumerate().all(|(i, w)| {
            let (lhs, rhs) = if i == 0 { (n as f64 * bottom, adjusted(n)) } else { ((n - i) as f64 * bottom, gamma(i)) };
            (w.lhs - lhs).abs() < 1e-12 && (w.rhs - rhs).abs() < 1e-12 && w.holds == (w.lhs >= w.rhs)
        });
        if verdict.verdict != expected || own != expected || !witnesses_ok {
            problems.push(format!("{expected:?}: library {:?}, recomputed {own:?}", verdict.verdict));
        }
    }
    Outcome::new(problems.is_empty(), if problems.is_empty() { "three instances agree".into() } else { problems.join("; ") })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("region panels", region_reproduction),
        ("benchmark cutoffs", cutoff_values),
        ("incentive sweeps", incentive_sweeps),
        ("interim monotonicity", interim_monotonicity),
        ("envelope consistency", envelope_consistency),
        ("indirect implementations", indirect_implementations),
        ("large-market limit", large_market),
        ("triviality classification", triviality_classification),
    ];
    let mut all_passed = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        all_passed &= outcome.passed;
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {verdict} ({:.1}s) {}", i + 1, started.elapsed().as_secs_f64(), outcome.detail);
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
