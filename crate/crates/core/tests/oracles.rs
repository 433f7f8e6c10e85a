use econ_audit::auction::{
    optimal_reserve, resolve_auction_round, sample_round_environment, sample_valuation,
    AuctionSessionConfig, ValuationDistribution, BIDDER_COUNTS,
};
use econ_audit::newsvendor::{optimal_quantity, resolve_newsvendor_round, MAX_DEMAND};
use econ_audit::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// English clock auction: the price starts at the reserve and rises one unit
/// at a time; bidders leave once the price passes their valuation.
fn clock_auction(reserve: u32, valuations: &[u32]) -> (bool, u32) {
    let mut price = reserve;
    loop {
        let active = valuations.iter().filter(|&&v| v >= price).count();
        match active {
            0 if price == reserve => return (false, 0),
            0 => return (true, price - 1),
            1 => return (true, if price == reserve { reserve } else { price - 1 }),
            _ => price += 1,
        }
    }
}

#[test]
fn profit_rule_matches_clock_auction_exhaustively() {
    let mut mismatches = 0;
    for r in 0..=100 {
        for v1 in 0..=100u32 {
            let single = resolve_auction_round(r, &[v1]).unwrap();
            if (single.sale, single.profit) != clock_auction(r, &[v1]) {
                mismatches += 1;
            }
            for v2 in 0..=v1 {
                let got = resolve_auction_round(r, &[v1, v2]).unwrap();
                if (got.sale, got.profit) != clock_auction(r, &[v1, v2]) {
                    mismatches += 1;
                }
            }
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn profit_rule_with_more_bidders() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20_000 {
        let n = BIDDER_COUNTS[rng.random_range(0..4)];
        let mut v: Vec<u32> = (0..n).map(|_| rng.random_range(0..=100)).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        let r = rng.random_range(0..=100);
        let got = resolve_auction_round(r, &v).unwrap();
        assert_eq!(
            (got.sale, got.profit),
            clock_auction(r, &v),
            "r={r} v={v:?}"
        );
    }
}

#[test]
fn worked_examples() {
    let a = resolve_auction_round(60, &[90, 75]).unwrap();
    assert!(a.sale && a.profit == 75);
    let b = resolve_auction_round(40, &[60, 30]).unwrap();
    assert!(b.sale && b.profit == 40);
    let c = resolve_auction_round(60, &[55, 20]).unwrap();
    assert!(!c.sale && c.profit == 0);
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn valuation_moments() {
    // (mean, sd) of 100*U^3 and 100*U^(1/3)
    let analytic = [
        (
            ValuationDistribution::CubeRoot,
            25.0,
            (1e4 * (1.0 / 7.0 - 1.0 / 16.0f64)).sqrt(),
        ),
        (
            ValuationDistribution::Cube,
            75.0,
            (1e4 * (0.6 - 0.5625f64)).sqrt(),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (dist, mu, sd) in analytic {
        let xs: Vec<f64> = (0..100_000)
            .map(|_| f64::from(sample_valuation(dist, rng.random::<f64>()).unwrap()))
            .collect();
        let (m, s) = moments(&xs);
        assert!((m - mu).abs() < 0.4, "{dist:?} mean {m}");
        assert!((s - sd).abs() < 0.4, "{dist:?} sd {s}");
        let (am, asd) = dist.moments();
        assert!((am - mu).abs() < 1e-12 && (asd - sd).abs() < 1e-12);
    }
}

#[test]
fn bidder_counts_are_uniform() {
    let mut cfg = AuctionSessionConfig::new(ValuationDistribution::Cube, 17);
    cfg.total_rounds = 40_000;
    let mut counts = [0usize; 4];
    for t in 1..=cfg.total_rounds {
        let env = sample_round_environment(&cfg, t).unwrap();
        counts[BIDDER_COUNTS
            .iter()
            .position(|&n| n == env.num_bidders)
            .unwrap()] += 1;
        assert_eq!(env.valuations.len() as u32, env.num_bidders);
    }
    for c in counts {
        assert!((c as f64 / 40_000.0 - 0.25).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn reserve_oracle_near_myerson() {
    for (dist, myerson) in [
        (ValuationDistribution::CubeRoot, 100.0 * 27.0 / 64.0),
        (ValuationDistribution::Cube, 100.0 * 0.25f64.powf(1.0 / 3.0)),
    ] {
        let curve = optimal_reserve(dist, 40_000, 1, 11).unwrap();
        assert!(
            (f64::from(curve.best_reserve) - myerson).abs() <= 3.0,
            "{dist:?} {}",
            curve.best_reserve
        );
    }
}

/// Expected profit under uniform integer demand on 0..=300, exactly.
fn expected_profit(q: u32, p: i64, c: i64) -> Rational {
    let total: i64 = (0..=MAX_DEMAND)
        .map(|d| {
            resolve_newsvendor_round(q, d, Rational::from(p), Rational::from(c))
                .unwrap()
                .to_integer()
        })
        .sum();
    Rational::new(total, i64::from(MAX_DEMAND) + 1)
}

#[test]
fn newsvendor_quantity_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..8 {
        let p: i64 = rng.random_range(2..=30);
        let c: i64 = rng.random_range(1..p);
        let best = (0..=300u32)
            .max_by_key(|&q| expected_profit(q, p, c))
            .unwrap();
        let q = optimal_quantity(p as f64, c as f64).unwrap();
        assert!(
            (i64::from(best) - i64::from(q)).abs() <= 2,
            "p={p} c={c} brute={best} q*={q}"
        );
        assert_eq!(
            optimal_quantity(Rational::from(p), Rational::from(c)).unwrap(),
            q
        );
    }
}

#[test]
fn newsvendor_profit_identity() {
    for q in (0..=300).step_by(7) {
        for d in (0..=300).step_by(11) {
            let got =
                resolve_newsvendor_round(q, d, Rational::new(25, 2), Rational::from(3)).unwrap();
            let want = Rational::new(25, 2) * Rational::from(i64::from(q.min(d)))
                - Rational::from(3 * i64::from(q));
            assert_eq!(got, want);
        }
    }
}
