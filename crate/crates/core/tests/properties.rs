use std::collections::BTreeMap;

use econ_audit::agents::validate_action_text;
use econ_audit::auction::{clamp_action, resolve_auction_round};
use econ_audit::interventions::{parse_round_lines, RoundLinesError};
use econ_audit::metrics::{
    behavioral_entropy, ks_distance, pearson_r, premium_capture_rate, sell_through_rate,
    welch_t_test,
};
use econ_audit::transcript::{ActionFlags, Outcome, RoundRecord, Task};
use econ_audit::Rational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trace() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..=100, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ks_symmetric_and_bounded(a in trace(), b in trace()) {
        let ab: Rational = ks_distance(&a, &b).unwrap();
        let ba: Rational = ks_distance(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= Rational::from(0) && ab <= Rational::from(1));
        let self_d: Rational = ks_distance(&a, &a).unwrap();
        prop_assert_eq!(self_d, Rational::from(0));
        let f: f64 = ks_distance(&a, &b).unwrap();
        prop_assert!((f - *ab.numer() as f64 / *ab.denom() as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_invariant_under_monotone_map(a in trace(), b in trace()) {
        let g = |v: &u32| i64::from(*v) * 3 - 40;
        let ga: Vec<i64> = a.iter().map(g).collect();
        let gb: Vec<i64> = b.iter().map(g).collect();
        let before: Rational = ks_distance(&a, &b).unwrap();
        let after: Rational = ks_distance(&ga, &gb).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn entropy_bounds(a in trace()) {
        let h: f64 = behavioral_entropy(&a).unwrap();
        let mut distinct = a.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (distinct.len() as f64).log2() + 1e-9);
        if distinct.len() == 1 {
            prop_assert!(h.abs() < 1e-12);
        }
    }

    #[test]
    fn str_and_pcr(rounds in prop::collection::vec((0u32..=100, 0u32..=100, 0u32..=100), 1..60)) {
        let mut sales = Vec::new();
        let mut reserves = Vec::new();
        let mut seconds = Vec::new();
        for (r, x, y) in rounds {
            let (hi, lo) = (x.max(y), x.min(y));
            sales.push(resolve_auction_round(r, &[hi, lo]).unwrap().sale);
            reserves.push(r);
            seconds.push(lo);
        }
        let str_: Rational = sell_through_rate(&sales).unwrap();
        prop_assert!(str_ >= Rational::from(0) && str_ <= Rational::from(1));
        let pcr = premium_capture_rate::<Rational>(&sales, &reserves, &seconds).unwrap();
        prop_assert_eq!(pcr.defined, sales.iter().any(|&s| s));
        prop_assert!(pcr.value >= Rational::from(0) && pcr.value <= Rational::from(1));
    }

    #[test]
    fn pearson_symmetric(pairs in prop::collection::vec((0u32..=100, 0u32..=100), 3..40)) {
        let a: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let b: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        match (pearson_r(&a, &b), pearson_r(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&x));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn action_text_never_escapes_range(text in ".{0,40}", lo in 0i64..50, span in 0i64..300) {
        let hi = lo + span;
        let v = validate_action_text(&text, (lo, hi));
        prop_assert!(i64::from(v.value) >= lo && i64::from(v.value) <= hi);
    }

    #[test]
    fn clamp_stays_legal(x in any::<i64>()) {
        let (a, clamped) = clamp_action(x, Task::Auction);
        prop_assert!(a <= 100);
        prop_assert_eq!(clamped, !(0..=100).contains(&x));
        let (n, _) = clamp_action(x, Task::Newsvendor);
        prop_assert!(n <= 300);
    }

    #[test]
    fn round_lines_round_trip(values in prop::collection::vec(0u32..=100, 30), upper in any::<bool>()) {
        let text: String = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{} {}: {v}\n", if upper { "Round" } else { "round" }, 31 + i))
            .collect();
        let parsed = parse_round_lines(&text, 31..=60, (0, 100)).unwrap();
        let got: Vec<u32> = parsed.values.values().map(|v| v.value).collect();
        prop_assert_eq!(got, values);
        prop_assert!(parsed.values.values().all(|v| v.is_valid()));
        prop_assert_eq!(parsed.junk_lines, 0);
    }

    #[test]
    fn record_json_round_trip(round in 1u32..100, action in 0u32..=100, vals in prop::collection::vec(0u32..=100, 1..=10), sale: bool) {
        let mut vals = vals;
        vals.sort_unstable_by(|a, b| b.cmp(a));
        let rec = RoundRecord {
            round,
            action,
            profit: f64::from(action),
            outcome: Outcome::Auction { num_bidders: vals.len() as u32, valuations: vals, sale },
            flags: ActionFlags { clamped: sale, ..ActionFlags::default() },
        };
        let back: RoundRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        prop_assert_eq!(back, rec);
    }
}

enum Line {
    Value(u32, u32),
    NoNumber(u32),
    OutOfRange(u32, u32),
    Junk(String),
}

/// 1000 corrupted batch responses: each round appears 0-2 times, some lines
/// carry no number, some target rounds outside the window, plus junk.
#[test]
fn fuzzed_round_lines_classify_correctly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let junk = [
        "",
        "Sure! Here are my predictions:",
        "---",
        "round",
        "round x: 5",
        "rounds 31-60",
        "```",
        "Note: prices vary",
    ];
    for case in 0..1000 {
        let mut lines = Vec::new();
        let drop_rate = [0.0, 0.02, 0.1][case % 3];
        for r in 31..=60u32 {
            if rng.random_bool(drop_rate) {
                continue;
            }
            let copies = if rng.random_bool(0.1) { 2 } else { 1 };
            for _ in 0..copies {
                if rng.random_bool(0.03) {
                    lines.push(Line::NoNumber(r));
                } else {
                    lines.push(Line::Value(r, rng.random_range(0..=100)));
                }
            }
        }
        for _ in 0..rng.random_range(0..4) {
            lines.push(Line::Junk(
                junk[rng.random_range(0..junk.len())].to_string(),
            ));
        }
        if rng.random_bool(0.2) {
            lines.push(Line::OutOfRange(rng.random_range(61..90), 7));
        }
        // shuffle
        for i in (1..lines.len()).rev() {
            lines.swap(i, rng.random_range(0..=i));
        }
        let mut expected: BTreeMap<u32, u32> = BTreeMap::new();
        let mut text = String::new();
        for line in &lines {
            match line {
                Line::Value(r, v) => {
                    expected.insert(*r, *v);
                    text.push_str(&format!("round {r}: {v}\n"));
                }
                Line::NoNumber(r) => text.push_str(&format!("round {r}: [reserve_price]\n")),
                Line::OutOfRange(r, v) => text.push_str(&format!("round {r}: {v}\n")),
                Line::Junk(s) => text.push_str(&format!("{s}\n")),
            }
        }
        let complete = (31..=60).all(|r| expected.contains_key(&r));
        let result = parse_round_lines(&text, 31..=60, (0, 100));
        let partial = match (&result, complete) {
            (Ok(p), true) => p,
            (Err(RoundLinesError::Incomplete { missing, partial }), false) => {
                let want: Vec<u32> = (31..=60).filter(|r| !expected.contains_key(r)).collect();
                assert_eq!(missing, &want, "case {case}");
                partial
            }
            _ => panic!("case {case}: misclassified, complete={complete}\n{text}"),
        };
        let got: BTreeMap<u32, u32> = partial.values.iter().map(|(r, v)| (*r, v.value)).collect();
        assert_eq!(got, expected, "case {case}");
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn welch_rejection_rate_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let reps = 1000;
    let mut rejected = 0;
    for _ in 0..reps {
        let a: Vec<f64> = (0..20).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..35).map(|_| 3.0 * normal(&mut rng)).collect();
        if welch_t_test(&a, &b).unwrap().p < 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / reps as f64;
    assert!((0.03..=0.07).contains(&rate), "rejection rate {rate}");
}
