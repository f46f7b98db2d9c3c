use approx::assert_abs_diff_eq;
use clubgood::allocation::solve_allocation;
use clubgood::economy::{presets, uniform_grid};
use clubgood::indirect::*;
use clubgood::payments::{expost_transfers, PairInterim};
use clubgood::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn gift() -> &'static GiftGame {
    static GAME: OnceLock<GiftGame> = OnceLock::new();
    GAME.get_or_init(|| build_gift_game(3.0 / 8.0, 0.25).unwrap())
}

fn exclusivity() -> &'static ExclusivityGame {
    static GAME: OnceLock<ExclusivityGame> = OnceLock::new();
    GAME.get_or_init(|| build_exclusivity_game(5.0 / 8.0, 0.25).unwrap())
}

fn allpay_rival() -> &'static AllPayGame {
    static GAME: OnceLock<AllPayGame> = OnceLock::new();
    GAME.get_or_init(|| build_allpay(&presets::pi_family(1.0, 0.25).unwrap(), AllPayOptions::default()).unwrap())
}

#[test]
fn rival_allpay_bids_follow_the_closed_form() {
    let game = allpay_rival();
    // Interim payment of an all-pay auction with reserve 5/8.
    let oracle = |t: f64| t * t / 2.0 + 25.0 / 128.0;
    assert_abs_diff_eq!(game.strategy(0.8), 0.5153125, epsilon = 1e-9);
    for t in [0.63, 0.7, 0.85, 0.99] {
        assert_abs_diff_eq!(game.strategy(t), oracle(t), epsilon = 1e-8);
    }
    let bounds = game.served_bounds();
    assert_abs_diff_eq!(bounds.y_lower, 0.625, epsilon = 1e-8);
    assert_eq!(game.strategy(0.6), 0.0);
    assert_eq!(game.outcome(0.0, &[game.strategy(0.9)]), GameOutcome { consume: false, set_size: 0, payment: 0.0 });
    let high = game.outcome(game.strategy(0.9), &[game.strategy(0.7)]);
    let low = game.outcome(game.strategy(0.7), &[game.strategy(0.9)]);
    assert!(high.consume && high.set_size == 1 && !low.consume);
    assert_eq!(high.payment, game.strategy(0.9));
    assert_eq!(low.payment, game.strategy(0.7));
}

#[test]
fn allpay_dominated_prices_never_serve() {
    let game = allpay_rival();
    let (lo, hi) = game.admissible_prices();
    for price in [0.5 * lo, lo - 1e-6, hi + 1e-6, 2.0 * hi] {
        for opponent in [0.0, 0.3, 0.9] {
            let out = game.outcome(price, &[game.strategy(opponent)]);
            assert!(!out.consume);
            assert_eq!(out.payment, price);
        }
    }
    // Raising a price never lowers consumption.
    let opponents = uniform_grid(0.0, 1.0, 51);
    let prices = uniform_grid(0.0, 1.1 * hi, 200);
    for &o in &opponents {
        let served: Vec<bool> = prices
            .iter()
            .filter(|&&p| p == 0.0 || (p >= lo && p <= hi))
            .map(|&p| game.outcome(p, &[game.strategy(o)]).consume)
            .collect();
        assert!(served.windows(2).all(|w| !w[0] || w[1]));
    }
}

#[test]
fn gift_tiers_and_fees() {
    let game = gift();
    let TierCutoffs { x, y, z } = game.cutoffs();
    assert_abs_diff_eq!(x, 0.3, epsilon = 1e-8);
    assert_abs_diff_eq!(y, 11.0 / 30.0, epsilon = 1e-8);
    assert_abs_diff_eq!(z, 5.0 / 6.0, epsilon = 1e-8);
    // Left limits of the closed-form interim payment at y and z.
    let left = |t: f64| if t <= y { (100.0 * t * t - 9.0) / 128.0 } else { 5.0 * t * t / 16.0 - 7.0 / 960.0 };
    assert_abs_diff_eq!(game.entry_price(), 5.0 / 144.0, epsilon = 1e-8);
    assert_abs_diff_eq!(game.top_price(), 151.0 / 720.0, epsilon = 1e-8);
    assert_abs_diff_eq!(game.entry_price(), left(y), epsilon = 1e-8);
    assert_abs_diff_eq!(game.top_price(), left(z), epsilon = 1e-8);
    let abstain = game.strategy(0.2);
    assert_eq!(abstain, GiftAction { price: 0.0, subsidy: 0.0 });
    for opponent in [0.1, 0.5, 0.95] {
        let out = game.outcome(abstain, &[game.strategy(opponent)]);
        assert!(!out.consume && out.payment == 0.0);
    }
    let both_top = game.outcome(game.strategy(0.9), &[game.strategy(0.95)]);
    assert!(both_top.consume && both_top.set_size == 2);
}

#[test]
fn gift_dominated_actions_pay_and_never_consume() {
    let game = gift();
    let opponents = uniform_grid(0.0, 1.0, 41);
    for action in game.deviation_grid(60).into_iter().filter(|&a| game.tier_of(a) == Tier::Dominated) {
        for &o in &opponents {
            let out = game.outcome(action, &[game.strategy(o)]);
            assert!(!out.consume);
            assert_eq!(out.payment, action.price);
        }
    }
    let stray = GiftAction { price: 0.1, subsidy: 0.1 };
    assert_eq!(game.tier_of(stray), Tier::Dominated);
}

#[test]
fn strategy_maps_are_strictly_increasing() {
    let check = |maps: [&MonotoneTable; 3]| {
        for map in maps {
            let (lo, hi) = map.domain();
            let values: Vec<f64> = uniform_grid(lo, hi, 401).into_iter().map(|t| map.eval(t)).collect();
            assert!(values.windows(2).all(|w| w[1] > w[0]), "map on [{lo}, {hi}] is not strictly increasing");
        }
    };
    check(gift().strategy_maps());
    check(exclusivity().strategy_maps());
}

#[test]
fn exclusivity_tiers_and_fees() {
    let game = exclusivity();
    let TierCutoffs { x, y, z } = game.cutoffs();
    assert_abs_diff_eq!(x, 19.0 / 30.0, epsilon = 1e-8);
    assert_abs_diff_eq!(y, 0.7, epsilon = 1e-8);
    assert_abs_diff_eq!(z, 5.0 / 6.0, epsilon = 1e-8);
    // Right limits of the closed-form interim payment at y and z.
    assert_abs_diff_eq!(game.subscription_fee(), (700.0 * y * y + 269.0) / 1920.0, epsilon = 1e-8);
    assert_abs_diff_eq!(game.premium_fee(), (40.0 * z * z + 161.0) / 480.0, epsilon = 1e-8);
    // Low tiers never consume alone.
    let opponents = uniform_grid(0.0, 1.0, 101);
    for own in uniform_grid(x + 1e-6, y, 21) {
        for &o in &opponents {
            let out = game.outcome(game.strategy(own), &[game.strategy(o)]);
            assert!(!out.consume || out.set_size == 2);
        }
    }
    // A premium subscriber facing a low type consumes alone.
    let out = game.outcome(game.strategy(0.9), &[game.strategy(0.5)]);
    assert!(out.consume && out.set_size == 1);
    let off = ExclusivityAction { price: 0.3, bid: 0.2 };
    assert_eq!(game.tier_of(off), Tier::Dominated);
    for &o in &opponents {
        let out = game.outcome(off, &[game.strategy(o)]);
        assert!(!out.consume && out.payment == 0.3);
    }
}

#[test]
fn outside_regime_is_rejected() {
    assert!(matches!(build_gift_game(5.0 / 8.0, 0.25), Err(Error::OutsideRegime(_))));
    assert!(matches!(build_exclusivity_game(3.0 / 8.0, 0.25), Err(Error::OutsideRegime(_))));
    assert!(matches!(build_gift_game(1.0, 0.25), Err(Error::OutsideRegime(_))));
}

#[test]
fn identity_deviation_gains_nothing() {
    let game = gift();
    let types = [0.2, 0.35, 0.6, 0.9];
    for &t in &types {
        let report = verify_equilibrium(game, &[t], &[game.strategy(t)], 2_000, 3).unwrap();
        assert_eq!(report.rows[0].gain, 0.0);
        assert_eq!(report.rows[0].gain_stderr, 0.0);
    }
    let game = exclusivity();
    for &t in &[0.65, 0.75, 0.9] {
        let report = verify_equilibrium(game, &[t], &[game.strategy(t)], 2_000, 3).unwrap();
        assert_eq!(report.rows[0].gain, 0.0);
    }
}

#[test]
fn dominated_gift_deviations_do_not_pay() {
    let game = gift();
    let dominated: Vec<GiftAction> =
        game.deviation_grid(60).into_iter().filter(|&a| game.tier_of(a) == Tier::Dominated).collect();
    assert!(!dominated.is_empty());
    let report = verify_equilibrium(game, &uniform_grid(0.0, 1.0, 21), &dominated, 2_000, 5).unwrap();
    for row in &report.rows {
        assert!(row.gain <= 1e-12, "type {} gains {} by a dominated action", row.theta, row.gain);
    }
}

/// Recomputes a reported gain with a direct loop over the same draws.
fn naive_gain<G: IndirectGame>(game: &G, theta: f64, deviation: G::Action, draws: usize, seed: u64) -> f64 {
    let economy = game.economy();
    let utility = |action: G::Action, others: &[G::Action]| {
        let out = game.outcome(action, others);
        let value = if out.consume { economy.value(theta, out.set_size) } else { 0.0 };
        value - out.payment
    };
    let opponents = stratified_opponents(economy, draws, seed);
    let total: f64 = opponents
        .iter()
        .map(|types| {
            let others: Vec<G::Action> = types.iter().map(|&t| game.strategy(t)).collect();
            utility(deviation, &others) - utility(game.strategy(theta), &others)
        })
        .sum();
    total / draws as f64
}

#[test]
fn small_sweeps_pass_and_witnesses_recompute() {
    let (draws, seed) = (5_000, 11);
    let types = uniform_grid(0.0, 1.0, 21);
    let gift = gift();
    let report = verify_equilibrium(gift, &types, &gift.deviation_grid(40), draws, seed).unwrap();
    assert!(report.equilibrium_passed(), "{report}");
    let worst = report.worst_row().unwrap();
    let deviation = gift.deviation_grid(40)[worst.best_deviation];
    assert_abs_diff_eq!(naive_gain(gift, worst.theta, deviation, draws, seed), worst.gain, epsilon = 1e-12);

    let excl = exclusivity();
    let report = verify_equilibrium(excl, &types, &excl.deviation_grid(40), draws, seed).unwrap();
    assert!(report.equilibrium_passed(), "{report}");
    let worst = report.worst_row().unwrap();
    let deviation = excl.deviation_grid(40)[worst.best_deviation];
    assert_abs_diff_eq!(naive_gain(excl, worst.theta, deviation, draws, seed), worst.gain, epsilon = 1e-12);

    let rival = allpay_rival();
    let report = verify_equilibrium(rival, &types, &rival.deviation_grid(40), draws, seed).unwrap();
    assert!(report.equilibrium_passed(), "{report}");
    let csv = report.to_csv().unwrap();
    assert!(csv.starts_with("theta,payoff,stderr_payoff,best_deviation,gain,stderr_gain\n"));
    assert_eq!(csv.lines().count(), types.len() + 1);
}

#[test]
fn lattice_outcomes_match_the_direct_mechanism() {
    for report in [
        verify_outcome_equivalence(gift(), 60).unwrap(),
        verify_outcome_equivalence(exclusivity(), 60).unwrap(),
        verify_outcome_equivalence(allpay_rival(), 60).unwrap(),
    ] {
        let eq = report.equivalence.as_ref().unwrap();
        assert_eq!(eq.mismatches_outside_band, 0, "{report}");
        assert!(eq.max_payment_error <= PAYMENT_TOLERANCE, "{report}");
        assert!(report.passed());
    }
}

#[test]
fn equilibrium_payments_match_interim_payments() {
    let game = gift();
    let pairs = PairInterim::new(game.economy(), 0).unwrap();
    let thetas = [0.2, 0.32, 0.36, 0.5, 0.8, 0.84, 0.97];
    let direct = pairs.envelope(&thetas).unwrap();
    for (&t, &m) in thetas.iter().zip(&direct) {
        assert_abs_diff_eq!(equilibrium_interim_payment(game, &pairs, t).unwrap(), m, epsilon = 1e-7);
    }
}

#[test]
fn allpay_revenue_matches_direct_revenue() {
    for pi in [3.0 / 8.0, 5.0 / 8.0, 1.0] {
        let economy = presets::pi_family(pi, 0.25).unwrap();
        let game = build_allpay(&economy, AllPayOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 20_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let profile = [rng.gen::<f64>(), rng.gen::<f64>()];
            let direct: f64 = expost_transfers(&economy, &profile).unwrap().payments.iter().sum();
            let indirect: f64 = profile.iter().map(|&t| game.strategy(t)).sum();
            let diff = indirect - direct;
            sum += diff;
            sum_sq += diff * diff;
        }
        let mean = sum / draws as f64;
        let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!(mean.abs() <= 4.0 * se + 1e-6, "pi {pi}: revenue gap {mean} with SE {se}");
    }
}

#[test]
fn exclusivity_turns_into_a_solo_auction_near_full_rivalry() {
    let solo_share = |pi: f64| {
        let game = build_exclusivity_game(pi, 0.25).unwrap();
        let economy = game.economy();
        let grid = uniform_grid(0.0005, 0.9995, 400);
        let (mut provided, mut solo) = (0usize, 0usize);
        for &a in &grid {
            for &b in &grid {
                let out = game.outcome(game.strategy(a), &[game.strategy(b)]);
                let other = game.outcome(game.strategy(b), &[game.strategy(a)]);
                if out.consume || other.consume {
                    provided += 1;
                    if (out.consume && out.set_size == 1) || (other.consume && other.set_size == 1) {
                        solo += 1;
                    }
                }
                if a == b && a > 0.9 {
                    assert_eq!(solve_allocation(economy, &[a, b]).unwrap().provided, out.consume || other.consume);
                }
            }
        }
        solo as f64 / provided as f64
    };
    let shares: Vec<f64> = [0.63, 0.65, 0.66].into_iter().map(solo_share).collect();
    assert!(shares.windows(2).all(|w| w[1] > w[0]), "{shares:?}");
    assert!(shares[2] > 0.9, "{shares:?}");
}

#[test]
fn strategy_csv_lists_actions() {
    let csv = strategy_csv(gift(), &[0.2, 0.5, 0.9]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta,price,subsidy");
    assert_eq!(lines[1], "0.2,0,0");
    assert_eq!(lines.len(), 4);
}
