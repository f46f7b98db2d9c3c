use approx::assert_abs_diff_eq;
use clubgood::economy::{presets, uniform_grid, Economy, ProfitNetworkEffect, TypeDistribution, ValuationModel};
use clubgood::payments::expost_transfers;
use clubgood::allocation::solve_allocation;
use clubgood::verification::*;
use clubgood::Error;
use proptest::prelude::*;

fn rising_values_panel() -> Economy {
    Economy::new(
        2,
        0.5,
        TypeDistribution::uniform(1.0).unwrap(),
        ValuationModel::LinearInK { slopes: vec![1.0, 4.0 / 3.0] },
        ProfitNetworkEffect::from_table(vec![0.0, 0.1, 0.2]).unwrap(),
    )
    .unwrap()
}

#[test]
fn region_grid_panels() {
    let grid = region_grid(&presets::no_value_effects(0.5, 0.0, 0.0).unwrap(), 200).unwrap();
    for i in 0..200 {
        for j in 0..200 {
            let (a, b) = (grid.centre(i), grid.centre(j));
            if a > 0.75 && b < 0.5 {
                assert_eq!(grid.label(i, j), RegionLabel::First);
            }
            if a < 0.5 && b < 0.5 {
                assert_eq!(grid.label(i, j), RegionLabel::Nobody);
            }
        }
    }
    // Single-buyer threshold moves to 7/10 with flat profit effects.
    let grid = region_grid(&presets::no_value_effects(0.5, 0.1, 0.1).unwrap(), 100).unwrap();
    assert_eq!(grid.label(70, 5), RegionLabel::First);
    assert_eq!(grid.label(69, 5), RegionLabel::Nobody);
    assert!(region_grid(&rising_values_panel(), 10).is_ok());
}

#[test]
fn region_csv_and_band() {
    let grid = region_grid(&presets::no_value_effects(0.5, 0.0, 0.0).unwrap(), 4).unwrap();
    let csv = grid.to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta1,theta2,label");
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[1], "0.125,0.125,∅");
    assert!(csv.contains("\"{1,2}\""));
    let band = grid.boundary_band();
    assert!(!band[0]);
    assert!(band.iter().any(|&b| b));
}

#[test]
fn benchmark_cutoff_examples() {
    let eps = 1e-12;
    match solve_benchmark_cutoffs(5.0 / 8.0, 0.25).unwrap() {
        BenchmarkCutoffs::FourRegion { x, y, z, sign } => {
            assert_eq!(sign, EffectSign::Negative);
            assert_abs_diff_eq!(x, 19.0 / 30.0, epsilon = eps);
            assert_abs_diff_eq!(y, 0.7, epsilon = eps);
            assert_abs_diff_eq!(z, 5.0 / 6.0, epsilon = eps);
        }
        other => panic!("{other:?}"),
    }
    match solve_benchmark_cutoffs(3.0 / 8.0, 0.25).unwrap() {
        BenchmarkCutoffs::FourRegion { x, y, z, sign } => {
            assert_eq!(sign, EffectSign::Positive);
            assert_abs_diff_eq!(x, 0.3, epsilon = eps);
            assert_abs_diff_eq!(y, 11.0 / 30.0, epsilon = eps);
            assert_abs_diff_eq!(z, 5.0 / 6.0, epsilon = eps);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(solve_benchmark_cutoffs(1.0, 0.25).unwrap(),
        BenchmarkCutoffs::Reserve { reserve } if (reserve - 0.625).abs() < eps));
    assert!(matches!(solve_benchmark_cutoffs(2.0 / 3.0, 0.25).unwrap(),
        BenchmarkCutoffs::Reserve { reserve } if (reserve - 11.0 / 16.0).abs() < eps));
    assert!(matches!(solve_benchmark_cutoffs(0.0, 0.25).unwrap(),
        BenchmarkCutoffs::PublicGood { lowest, line_sum } if (lowest - 0.125).abs() < eps && (line_sum - 1.125).abs() < eps));
    assert!(matches!(solve_benchmark_cutoffs(0.5, 0.25), Err(Error::OutsideRegime(_))));
}

#[test]
fn benchmark_cutoffs_match_entry_cutoff_curve() {
    for pi in [3.0 / 8.0, 5.0 / 8.0] {
        let economy = presets::pi_family(pi, 0.25).unwrap();
        let BenchmarkCutoffs::FourRegion { x, y, z, sign } = benchmark_cutoffs(&economy).unwrap() else { panic!() };
        let curve: Vec<f64> = uniform_grid(0.0, 1.0, 3001).iter().map(|&t| pair_entry_cutoff(&economy, t).unwrap()).collect();
        let lowest = curve.iter().cloned().fold(f64::INFINITY, f64::min);
        let highest = curve.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(lowest, x, epsilon = 1e-9);
        assert_abs_diff_eq!(highest, z, epsilon = 1e-9);
        let at = if sign == EffectSign::Negative { 0.0 } else { z };
        assert_abs_diff_eq!(pair_entry_cutoff(&economy, at).unwrap(), y, epsilon = 1e-9);
    }
}

#[test]
fn partition_examples() {
    let negative = presets::pi_family(5.0 / 8.0, 0.25).unwrap();
    let p = extract_cutoff_partition(&negative, 0, &[0.68]).unwrap();
    assert!(p.ordered);
    assert_eq!(p.segments.iter().map(|s| s.set_size).collect::<Vec<_>>(), vec![2, 1]);
    let entry = p.entry_cutoff.unwrap();
    // Two-sided probes around the entry cutoff.
    assert!(!solve_allocation(&negative, &[entry - 1e-8, 0.68]).unwrap().consume[0]);
    assert!(solve_allocation(&negative, &[entry + 1e-8, 0.68]).unwrap().consume[0]);

    let positive = presets::pi_family(3.0 / 8.0, 0.25).unwrap();
    let p = extract_cutoff_partition(&positive, 0, &[0.9]).unwrap();
    assert!(p.ordered);
    assert_eq!(p.segments.last().unwrap().set_size, 2);

    let plain = presets::no_value_effects(0.5, 0.0, 0.0).unwrap();
    let p = extract_cutoff_partition(&plain, 0, &[0.3]).unwrap();
    assert_eq!(p.segments.len(), 1);
    assert_abs_diff_eq!(p.entry_cutoff.unwrap(), 0.75, epsilon = 1e-10);
    assert!(p.size_cutoffs().is_empty());

    assert!(extract_cutoff_partition(&plain, 0, &[0.3, 0.2]).is_err());
}

#[test]
fn truthful_reporting_beats_overreporting() {
    let economy = presets::pi_family(5.0 / 8.0, 0.25).unwrap();
    let utility = |report: f64| {
        let alloc = solve_allocation(&economy, &[report, 0.72]).unwrap();
        let m = expost_transfers(&economy, &[report, 0.72]).unwrap().payments[0];
        (if alloc.consume[0] { economy.value(0.75, alloc.set_size) } else { 0.0 }) - m
    };
    assert!(utility(0.95) - utility(0.75) < 0.0);
}

#[test]
fn incentive_sweeps_pass_on_benchmarks() {
    let own = uniform_grid(0.0, 1.0, 21);
    for economy in [presets::pi_family(5.0 / 8.0, 0.25).unwrap(), presets::no_value_effects(0.5, 0.1, 0.2).unwrap()] {
        let dsic = check_dsic(&economy, &own, &own, 20, 3).unwrap();
        assert!(dsic.passed, "{dsic}");
        let ir = check_ir(&economy, &own, 20, 3).unwrap();
        assert!(ir.passed, "{ir}");
        let structure = check_cutoff_structure(&economy, 20, 4).unwrap();
        assert!(structure.passed, "{structure}");
    }
    let economy = presets::pi_family(3.0 / 8.0, 0.25).unwrap();
    assert!(check_dsic(&economy, &[], &own, 5, 1).is_err());
    assert!(check_ir(&economy, &own, 0, 1).is_err());
}

#[test]
fn transfers_are_flat_between_jumps() {
    let economy = presets::pi_family(5.0 / 8.0, 0.25).unwrap();
    for t in [0.1, 0.5, 0.68, 0.9] {
        assert!(transfer_is_flat_between_jumps(&economy, &[t], 0, 16).unwrap());
    }
}

#[test]
fn posted_price_limit_small_markets() {
    let family = LargeMarketFamily::saturating(2.0, 1.0, 0.1, 1.0, TypeDistribution::uniform(1.0).unwrap());
    assert_abs_diff_eq!(family.posted_price().unwrap(), 0.5, epsilon = 1e-14);
    let report = posted_price_limit(&family, &[20, 200], 10, 9).unwrap();
    assert_eq!(report.sizes.len(), 2);
    assert!(report.sizes[1].max_threshold_error < report.sizes[0].max_threshold_error + 0.05);
    assert_abs_diff_eq!(report.limit_fraction, 0.5, epsilon = 1e-14);

    let rival = LargeMarketFamily::pi_family(0.7, 0.25).unwrap();
    assert!(matches!(posted_price_limit(&rival, &[10], 2, 1), Err(Error::Precondition(_))));
    assert!(posted_price_limit(&family, &[], 2, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn consumption_is_monotone_in_own_type(pi in 0.0f64..=1.0, opponent in 0.0f64..=1.0) {
        let economy = presets::pi_family(pi, 0.25).unwrap();
        let partition = extract_cutoff_partition(&economy, 0, &[opponent]).unwrap();
        prop_assert!(partition.ordered);
        let grid = uniform_grid(0.0, 1.0, 401);
        let consumes: Vec<bool> = grid.iter().map(|&t| solve_allocation(&economy, &[t, opponent]).unwrap().consume[0]).collect();
        prop_assert!(consumes.windows(2).all(|w| w[0] <= w[1]));
    }
}
