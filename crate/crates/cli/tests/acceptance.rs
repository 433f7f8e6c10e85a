//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any asserted criterion fails. Criterion 10 needs a live endpoint and is
//! reported only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use econ_audit::auction::{
    optimal_reserve, resolve_auction_round, sample_round_environment, AuctionSessionConfig,
    ValuationDistribution, BIDDER_COUNTS,
};
use econ_audit::interventions::{
    parse_round_lines, sample_prompts, InterventionSpec, RoundLinesError, TemplateSet,
};
use econ_audit::metrics::{
    behavioral_entropy, ks_distance, mean_order_bias, pearson_r, premium_capture_rate,
    sell_through_rate, welch_t_test,
};
use econ_audit::newsvendor::{optimal_quantity, resolve_newsvendor_round, MAX_DEMAND};
use econ_audit::transcript::Task;
use econ_audit::Rational;
use econ_audit_cli::analyze::analyze;
use econ_audit_cli::humans::{generate_synthetic_humans, write_traces};
use econ_audit_cli::manifest::SessionStatus;
use econ_audit_cli::run::{resume_experiment, run_experiment, RunOptions};
use econ_audit_cli::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);
type ReserveCase = (ValuationDistribution, f64, usize, fn(f64) -> f64);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    check(
        elapsed <= Duration::from_secs(limit_secs),
        format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64()),
    )
}

// 1 ---------------------------------------------------------------------

/// English clock auction starting at the reserve, one unit per tick.
fn clock_auction(reserve: u32, valuations: &[u32]) -> (bool, u32) {
    let mut price = reserve;
    loop {
        match valuations.iter().filter(|&&v| v >= price).count() {
            0 if price == reserve => return (false, 0),
            0 => return (true, price - 1),
            1 => return (true, if price == reserve { reserve } else { price - 1 }),
            _ => price += 1,
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut cases = 0u64;
    let mut mismatches = 0u64;
    for r in 0..=100 {
        for v1 in 0..=100u32 {
            for v2 in 0..=v1 {
                cases += 1;
                let got = resolve_auction_round(r, &[v1, v2]).map_err(|e| e.to_string())?;
                if (got.sale, got.profit) != clock_auction(r, &[v1, v2]) {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0,
        format!("{mismatches} mismatches in {cases} cases"),
    )?;
    let ex = [
        (60, vec![90, 75], (true, 75)),
        (40, vec![60, 30], (true, 40)),
        (60, vec![55, 20], (false, 0)),
    ];
    for (r, v, want) in ex {
        let got = resolve_auction_round(r, &v).map_err(|e| e.to_string())?;
        check(
            (got.sale, got.profit) == want,
            format!("worked example r={r} v={v:?} gave {got:?}"),
        )?;
    }
    within(elapsed, 10)?;
    Ok(format!(
        "{cases} cases, 0 mismatches, 3 worked examples, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// 2 ---------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for (dist, mu, sd) in [
        (ValuationDistribution::CubeRoot, 25.0, 28.4),
        (ValuationDistribution::Cube, 75.0, 19.4),
    ] {
        let mut cfg = AuctionSessionConfig::new(dist, 2024);
        let mut xs: Vec<f64> = Vec::with_capacity(200_000);
        let mut counts = BTreeMap::<u32, usize>::new();
        cfg.total_rounds = 200_000;
        let mut rounds = 0usize;
        let mut t = 1;
        while xs.len() < 200_000 {
            let env = sample_round_environment(&cfg, t).map_err(|e| e.to_string())?;
            *counts.entry(env.num_bidders).or_default() += 1;
            rounds += 1;
            t += 1;
            for v in env.valuations {
                if xs.len() < 200_000 {
                    xs.push(f64::from(v));
                }
            }
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let s = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        check(
            (m - mu).abs() <= 0.5,
            format!("{dist:?} mean {m:.3} vs {mu}"),
        )?;
        check((s - sd).abs() <= 0.5, format!("{dist:?} sd {s:.3} vs {sd}"))?;
        for nb in BIDDER_COUNTS {
            let f = *counts.get(&nb).unwrap_or(&0) as f64 / rounds as f64;
            check(
                (f - 0.25).abs() <= 0.01,
                format!("{dist:?} bidder count {nb} frequency {f:.4}"),
            )?;
        }
        notes.push(format!("{}: mean {m:.2} sd {s:.2}", dist.as_str()));
    }
    let elapsed = start.elapsed();
    within(elapsed, 5)?;
    Ok(format!(
        "{}, {:.2}s",
        notes.join("; "),
        elapsed.as_secs_f64()
    ))
}

// 3 ---------------------------------------------------------------------

/// Exact expected profit per round for integer valuations (inverse CDF
/// rounded to nearest), averaged over the bidder counts.
fn exact_reserve_curve(cdf: fn(f64) -> f64) -> Vec<f64> {
    let g = |k: i64| -> f64 {
        if k < 0 {
            0.0
        } else if k >= 100 {
            1.0
        } else {
            cdf((k as f64 + 0.5) / 100.0)
        }
    };
    (0..=100i64)
        .map(|r| {
            let total: f64 = [1i32, 4, 7, 10]
                .iter()
                .map(|&n| {
                    let nf = f64::from(n);
                    if n == 1 {
                        return r as f64 * (1.0 - g(r - 1));
                    }
                    let second = |x: i64| {
                        let q = g(x);
                        if x < 0 {
                            0.0
                        } else {
                            q.powi(n) + nf * q.powi(n - 1) * (1.0 - q)
                        }
                    };
                    let q = g(r - 1);
                    let only_top = nf * q.powi(n - 1) * (1.0 - q);
                    let tail: f64 = (r..=100)
                        .map(|x| x as f64 * (second(x) - second(x - 1)))
                        .sum();
                    r as f64 * only_top + tail
                })
                .sum();
            total / 4.0
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] >= v[b] { i } else { b })
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let cases: [ReserveCase; 2] = [
        (
            ValuationDistribution::CubeRoot,
            100.0 * 27.0 / 64.0,
            43,
            |x| x.cbrt(),
        ),
        (
            ValuationDistribution::Cube,
            100.0 * 0.25f64.powf(1.0 / 3.0),
            63,
            |x| x.powi(3),
        ),
    ];
    for (dist, myerson, exact_best, cdf) in cases {
        let exact = exact_reserve_curve(cdf);
        let peak = argmax(&exact);
        check(
            peak == exact_best,
            format!("{dist:?} exact curve peaks at {peak}"),
        )?;
        check(
            exact[..=peak].windows(2).all(|w| w[1] >= w[0])
                && exact[peak..].windows(2).all(|w| w[1] <= w[0]),
            format!("{dist:?} exact curve not unimodal"),
        )?;

        let curve = optimal_reserve(dist, 200_000, 1, 99).map_err(|e| e.to_string())?;
        let r = f64::from(curve.best_reserve);
        check(
            (r - myerson).abs() <= 2.0,
            format!("{dist:?} r* = {r}, analytic {myerson:.2}"),
        )?;
        check(
            curve.is_unimodal_within(3.0),
            format!("{dist:?} sampled curve has a reversal beyond 3 standard errors"),
        )?;
        let worst = curve
            .curve
            .iter()
            .zip(&exact)
            .map(|((_, p), e)| (p - e).abs())
            .fold(0.0, f64::max);
        check(
            worst < 0.5,
            format!("{dist:?} sampled curve strays {worst:.3} from exact"),
        )?;
        notes.push(format!(
            "{} r*={} (analytic {myerson:.2}, exact {peak}), strictly unimodal: {}",
            dist.as_str(),
            curve.best_reserve,
            curve.is_unimodal()
        ));
    }
    let elapsed = start.elapsed();
    within(elapsed, 60)?;
    Ok(format!(
        "{}, {:.2}s",
        notes.join("; "),
        elapsed.as_secs_f64()
    ))
}

// 4 ---------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0i64;
    for _ in 0..20 {
        // prices and costs on a cent grid, 0 < c < p
        let p_cents: i64 = rng.random_range(200..=3000);
        let c_cents: i64 = rng.random_range(1..p_cents);
        let p = Rational::new(p_cents, 100);
        let c = Rational::new(c_cents, 100);
        // exact expectation under uniform demand on 0..=300
        let best = (0..=300u32)
            .max_by_key(|&q| {
                (0..=MAX_DEMAND)
                    .map(|d| resolve_newsvendor_round(q, d, p, c).expect("valid"))
                    .sum::<Rational>()
            })
            .expect("nonempty");
        let q = optimal_quantity(p, c).map_err(|e| e.to_string())?;
        let qf = optimal_quantity(p_cents as f64 / 100.0, c_cents as f64 / 100.0)
            .map_err(|e| e.to_string())?;
        check(
            q == qf,
            format!("exact and float optimum differ at p={p} c={c}"),
        )?;
        let gap = (i64::from(best) - i64::from(q)).abs();
        worst = worst.max(gap);
        check(
            gap <= 2,
            format!("p={p} c={c}: brute force {best}, optimal_quantity {q}"),
        )?;
    }
    let elapsed = start.elapsed();
    within(elapsed, 30)?;
    Ok(format!(
        "20 pairs, max |argmax - q*| = {worst}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// 5 ---------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let r = |n, d| Rational::new(n, d);
    let ks = |a: &[u32], b: &[u32]| ks_distance::<u32, Rational>(a, b).map_err(|e| e.to_string());
    check(ks(&[1, 2, 3], &[1, 2, 3])? == r(0, 1), "ks identical")?;
    check(ks(&[0, 0], &[1, 1])? == r(1, 1), "ks disjoint")?;
    check(ks(&[1, 2, 3], &[2, 3, 4])? == r(1, 3), "ks shifted")?;
    let h = |a: &[u32]| behavioral_entropy::<u32, f64>(a).map_err(|e| e.to_string());
    check(h(&[5, 5, 5, 5])?.abs() < 1e-9, "entropy degenerate")?;
    check((h(&[1, 2, 1, 2])? - 1.0).abs() < 1e-9, "entropy two values")?;
    check((h(&[1, 1, 2, 4])? - 1.5).abs() < 1e-9, "entropy 1.5")?;
    let str_: Rational =
        sell_through_rate(&[true, true, false, true]).map_err(|e| e.to_string())?;
    check(str_ == r(3, 4), "STR 0.75")?;
    let pcr0 = premium_capture_rate::<Rational>(&[true, true], &[10, 20], &[30, 20])
        .map_err(|e| e.to_string())?;
    check(pcr0.value == r(0, 1) && pcr0.defined, "PCR 0")?;
    let pcr1 =
        premium_capture_rate::<Rational>(&[true], &[40], &[30]).map_err(|e| e.to_string())?;
    check(pcr1.value == r(1, 1), "PCR 1")?;
    let none =
        premium_capture_rate::<Rational>(&[false], &[40], &[30]).map_err(|e| e.to_string())?;
    check(!none.defined && none.value == r(0, 1), "PCR without sales")?;
    let b = |q: &[u32], s: &[u32]| mean_order_bias::<Rational>(q, s).map_err(|e| e.to_string());
    check(b(&[150, 150], &[150, 150])? == r(0, 1), "bias oracle")?;
    check(b(&[160, 170], &[150, 160])? == r(10, 1), "bias shift")?;
    check(b(&[100, 200], &[150, 150])? == r(0, 1), "bias cancel")?;
    let same = welch_t_test::<f64>(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0])
        .map_err(|e| e.to_string())?;
    check(same.t == 0.0 && same.p == 1.0, "welch identical")?;
    // scipy.stats.ttest_ind(a, b, equal_var=False)
    let a = [19.8, 20.4, 19.6, 17.8, 18.5, 18.9, 18.3, 18.9, 19.5, 22.0];
    let bb = [
        28.2, 26.6, 20.1, 23.3, 25.2, 22.1, 17.7, 27.6, 20.6, 13.7, 23.2, 17.5, 20.6, 18.0, 23.9,
        21.6, 24.3, 20.4, 23.9, 13.3,
    ];
    let w = welch_t_test::<f64>(&a, &bb).map_err(|e| e.to_string())?;
    check(
        (w.t + 2.225512039969852).abs() < 1e-9
            && (w.df - 24.524634944257343).abs() < 1e-9
            && (w.p - 0.035484530830010325).abs() < 1e-9,
        format!("welch reference {w:?}"),
    )?;
    let p = |x: &[f64], y: &[f64]| pearson_r(x, y).map_err(|e| e.to_string());
    check(
        (p(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])? - 1.0).abs() < 1e-9,
        "pearson +1",
    )?;
    check(
        (p(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])? + 1.0).abs() < 1e-9,
        "pearson -1",
    )?;
    check(
        pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err(),
        "pearson zero variance",
    )?;

    // properties over 1000 random traces
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let la = rng.random_range(1..80);
        let lb = rng.random_range(1..80);
        let hi = rng.random_range(1..=100u32);
        let xa: Vec<u32> = (0..la).map(|_| rng.random_range(0..=hi)).collect();
        let xb: Vec<u32> = (0..lb).map(|_| rng.random_range(0..=hi)).collect();
        let d1 = ks(&xa, &xb)?;
        check(d1 == ks(&xb, &xa)?, format!("ks asymmetric on trace {i}"))?;
        let g: Vec<i64> = xa.iter().map(|&v| 2 * i64::from(v) + 5).collect();
        let gb: Vec<i64> = xb.iter().map(|&v| 2 * i64::from(v) + 5).collect();
        check(
            ks_distance::<i64, Rational>(&g, &gb).map_err(|e| e.to_string())? == d1,
            format!("ks not transform invariant on trace {i}"),
        )?;
        let e = h(&xa)?;
        let mut distinct = xa.clone();
        distinct.sort_unstable();
        distinct.dedup();
        check(
            e >= -1e-12 && e <= (distinct.len() as f64).log2() + 1e-9,
            format!("entropy bound on trace {i}"),
        )?;
    }
    Ok("examples exact; KS symmetry, transform invariance, entropy bounds over 1000 traces".into())
}

// shared fixtures ---------------------------------------------------------

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        Fixture { _dir: dir, root }
    }

    fn humans(&self, task: Task, n: usize, seed: u64) -> Result<PathBuf, String> {
        let d = self.root.join(format!("humans_{}", task.as_str()));
        let traces = generate_synthetic_humans(seed, n, task, task.default_rounds(), 0.5)
            .map_err(|e| e.to_string())?;
        write_traces(&d, &traces).map_err(|e| e.to_string())?;
        Ok(d)
    }

    fn config(&self, name: &str, body: &str) -> Result<ExperimentConfig, String> {
        let p = self.root.join(name);
        std::fs::write(&p, body).map_err(|e| e.to_string())?;
        let cfg = ExperimentConfig::load(&p).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

// 6 ---------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let fx = Fixture::new();
    let mut notes = Vec::new();
    for task in [Task::Auction, Task::Newsvendor] {
        let humans = fx.humans(task, 40, 61)?;
        let cfg = fx.config(
            &format!("replay_{}.toml", task.as_str()),
            &format!(
                r#"
task = "{}"
num_agents = 40
replications = 1
conditions = ["intrinsicality"]
seed = 61
output_dir = "replay_{}"
human_trace_dir = "{}"

[[agents]]
name = "replay"
kind = "replay"
trace_dir = "{}"
"#,
                task.as_str(),
                task.as_str(),
                humans.display(),
                humans.display()
            ),
        )?;
        let summary =
            run_experiment(&cfg, None, &RunOptions::default()).map_err(|e| e.to_string())?;
        check(summary.exit_code() == 0, "replay run did not complete")?;
        let report = analyze(&cfg, &cfg.output_path(), None).map_err(|e| e.to_string())?;
        let src = &report.sources[0];
        let ks = src.ks_vs_human.as_ref().ok_or("no KS computed")?;
        check(ks.pairs.len() == 40, format!("{} KS pairs", ks.pairs.len()))?;
        check(
            ks.pairs.iter().all(|p| p.ks == 0.0),
            "nonzero KS against own trace",
        )?;
        let human = report.human.as_ref().ok_or("no human summary")?;
        for (a, h) in src.summary.iter().zip(&human.summary) {
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
            check(
                a.variable == h.variable
                    && close(a.mean, h.mean)
                    && close(a.sd, h.sd)
                    && close(a.min, h.min)
                    && close(a.max, h.max),
                format!("{} row differs: {a:?} vs {h:?}", a.variable),
            )?;
        }
        notes.push(format!("{}: 40 pairs KS=0, rows match", task.as_str()));
    }
    Ok(notes.join("; "))
}

// 7 ---------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let templates = TemplateSet::builtin();
    let mut n = 0;
    for task in [Task::Auction, Task::Newsvendor] {
        for spec in InterventionSpec::all(task) {
            let name = format!("{}_{}.txt", task.as_str(), spec.label());
            let want =
                std::fs::read_to_string(golden.join(&name)).map_err(|e| format!("{name}: {e}"))?;
            let got = sample_prompts(&templates, task, &spec).map_err(|e| e.to_string())?;
            check(got == want, format!("{name} differs from golden"))?;
            n += 1;
        }
    }
    let read = |f: &str| std::fs::read_to_string(golden.join(f)).map_err(|e| e.to_string());
    check(
        read("auction_instruction-seeking.txt")?.contains("You are a risk-seeking decision maker"),
        "risk-seeking sentence missing",
    )?;
    check(
        read("auction_imitation-direct.txt")?.contains("round 31: [reserve_price]"),
        "imitation output format missing",
    )?;
    check(templates.lint().is_empty(), "template lint issues")?;
    Ok(format!(
        "{n} goldens byte-identical, verbatim strings present, lint clean"
    ))
}

// 8 ---------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for case in 0..1000 {
        let values: Vec<u32> = (0..30).map(|_| rng.random_range(0..=100)).collect();
        let text: String = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("round {}: {v}\n", 31 + i))
            .collect();
        let parsed =
            parse_round_lines(&text, 31..=60, (0, 100)).map_err(|e| format!("case {case}: {e}"))?;
        let got: Vec<u32> = parsed.values.values().map(|v| v.value).collect();
        check(got == values, format!("round trip failed in case {case}"))?;
    }
    let junk = [
        "",
        "Here are my answers:",
        "```",
        "round",
        "round ?: 5",
        "Thanks!",
    ];
    let mut incomplete = 0;
    for case in 0..1000 {
        let mut lines: Vec<(Option<u32>, String)> = Vec::new();
        let mut present = BTreeMap::new();
        for r in 31..=60u32 {
            if rng.random_bool(0.03) {
                continue;
            }
            let copies = if rng.random_bool(0.1) { 2 } else { 1 };
            for _ in 0..copies {
                let v: u32 = rng.random_range(0..=100);
                lines.push((Some(r), format!("Round {r}: {v}")));
                lines.push((None, String::new()));
                lines.pop();
                present.insert(r, v);
            }
        }
        for _ in 0..rng.random_range(0..5) {
            lines.push((None, junk[rng.random_range(0..junk.len())].to_string()));
        }
        for i in (1..lines.len()).rev() {
            lines.swap(i, rng.random_range(0..=i));
        }
        // later duplicates win, so recompute the expected value in order
        let mut expected = BTreeMap::new();
        for (r, l) in &lines {
            if let Some(r) = r {
                let v: u32 = l
                    .rsplit(' ')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .expect("rendered");
                expected.insert(*r, v);
            }
        }
        let _ = present;
        let text = lines
            .iter()
            .map(|(_, l)| l.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let complete = (31..=60).all(|r| expected.contains_key(&r));
        let outcome = std::panic::catch_unwind(|| parse_round_lines(&text, 31..=60, (0, 100)))
            .map_err(|_| format!("parser panicked on case {case}"))?;
        let values = match (outcome, complete) {
            (Ok(p), true) => p.values,
            (Err(RoundLinesError::Incomplete { partial, .. }), false) => {
                incomplete += 1;
                partial.values
            }
            (other, _) => {
                return Err(format!(
                    "case {case} misclassified: complete={complete}, got {other:?}"
                ))
            }
        };
        let got: BTreeMap<u32, u32> = values.into_iter().map(|(r, v)| (r, v.value)).collect();
        check(got == expected, format!("case {case}: wrong values"))?;
    }
    Ok(format!("1000 round trips exact; 1000 fuzzed responses ({incomplete} incomplete) classified correctly"))
}

// 9 ---------------------------------------------------------------------

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else {
            return;
        };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                out.insert(
                    p.strip_prefix(root).expect("under root").to_path_buf(),
                    std::fs::read(&p).unwrap_or_default(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_9() -> Outcome {
    let fx = Fixture::new();
    let humans = fx.humans(Task::Auction, 40, 77)?;
    let cfg = fx.config(
        "det.toml",
        &format!(
            r#"
task = "auction"
num_agents = 40
replications = 3
conditions = ["intrinsicality", "instruction-seeking", "imitation-direct"]
seed = 77
output_dir = "det"
human_trace_dir = "{}"
oracle_samples = 20000

[[agents]]
name = "oracle"
kind = "oracle"

[[agents]]
name = "const30"
kind = "constant"
value = 30

[[agents]]
name = "replay"
kind = "replay"
trace_dir = "{}"
"#,
            humans.display(),
            humans.display()
        ),
    )?;
    let full = |dir: &Path, workers: usize| -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
        let s = run_experiment(
            &cfg,
            Some(dir),
            &RunOptions {
                workers: Some(workers),
                ..RunOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        check(s.exit_code() == 0, "run incomplete")?;
        analyze(&cfg, dir, None).map_err(|e| e.to_string())?;
        Ok(files_under(dir))
    };
    let a = full(&fx.root.join("a"), 4)?;
    let b = full(&fx.root.join("b"), 2)?;
    check(a.len() > 1000, format!("only {} output files", a.len()))?;
    check(a == b, "two runs from one config differ")?;

    // interrupted run: halt mid-way, leave a torn line, then resume
    let c = fx.root.join("c");
    let halted = run_experiment(
        &cfg,
        Some(&c),
        &RunOptions {
            workers: Some(3),
            halt_after_rounds: Some(25_000),
        },
    )
    .map_err(|e| e.to_string())?;
    check(halted.halted, "halt did not trigger")?;
    let pending: Vec<_> = halted
        .manifest
        .sessions
        .iter()
        .filter(|s| s.status == SessionStatus::Pending)
        .collect();
    check(!pending.is_empty(), "nothing left to resume")?;
    let partial = pending
        .iter()
        .map(|s| c.join(&s.path))
        .find(|p| p.exists())
        .ok_or("no partial transcript on disk")?;
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&partial)
            .map_err(|e| e.to_string())?;
        f.write_all(br#"{"round":999,"action":"#)
            .map_err(|e| e.to_string())?;
    }
    let complete_before: BTreeMap<String, std::time::SystemTime> = halted
        .manifest
        .sessions
        .iter()
        .filter(|s| s.status == SessionStatus::Complete)
        .map(|s| {
            let m = std::fs::metadata(c.join(&s.path))
                .and_then(|m| m.modified())
                .expect("written");
            (s.path.clone(), m)
        })
        .collect();
    let resumed = resume_experiment(
        &cfg,
        Some(&c),
        &RunOptions {
            workers: Some(5),
            ..RunOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    check(resumed.exit_code() == 0, "resume incomplete")?;
    for (p, t) in &complete_before {
        let now = std::fs::metadata(c.join(p))
            .and_then(|m| m.modified())
            .map_err(|e| e.to_string())?;
        check(
            now == *t,
            format!("completed session {p} was rewritten on resume"),
        )?;
    }
    analyze(&cfg, &c, None).map_err(|e| e.to_string())?;
    check(
        files_under(&c) == a,
        "resumed run differs from uninterrupted run",
    )?;
    Ok(format!(
        "{} files byte-identical across 2 runs; halted with {} pending, resumed without touching {} completed sessions, identical",
        a.len(),
        pending.len(),
        complete_before.len()
    ))
}

// 10 --------------------------------------------------------------------

enum Live {
    Skipped(String),
    Reported(String),
}

fn criterion_10() -> Result<Live, String> {
    let (Ok(endpoint), Ok(model)) = (
        std::env::var("ECON_AUDIT_LIVE_ENDPOINT"),
        std::env::var("ECON_AUDIT_LIVE_MODEL"),
    ) else {
        return Ok(Live::Skipped(
            "set ECON_AUDIT_LIVE_ENDPOINT, ECON_AUDIT_LIVE_MODEL and ECON_AUDIT_LIVE_KEY_ENV to run".into(),
        ));
    };
    let key_env =
        std::env::var("ECON_AUDIT_LIVE_KEY_ENV").unwrap_or_else(|_| "OPENAI_API_KEY".into());
    let fx = Fixture::new();
    let (humans, human_note) = match std::env::var("ECON_AUDIT_LIVE_HUMANS") {
        Ok(d) => (PathBuf::from(d), "supplied"),
        Err(_) => (fx.humans(Task::Auction, 5, 1010)?, "SYNTHETIC"),
    };
    let cfg = fx.config(
        "live.toml",
        &format!(
            r#"
task = "auction"
num_agents = 5
replications = 3
conditions = ["intrinsicality", "imitation-direct"]
seed = 1010
output_dir = "live"
human_trace_dir = "{}"

[remote]
requests_per_minute = 60

[[agents]]
name = "live"
kind = "remote"
endpoint = "{endpoint}"
model = "{model}"
api_key_env = "{key_env}"
"#,
            humans.display()
        ),
    )?;
    let run = run_experiment(&cfg, None, &RunOptions::default()).map_err(|e| e.to_string())?;
    let report = analyze(&cfg, &cfg.output_path(), None).map_err(|e| e.to_string())?;
    let mut total = 0usize;
    let mut clean = 0usize;
    for s in &run.manifest.sessions {
        if s.condition != "intrinsicality" || s.status != SessionStatus::Complete {
            continue;
        }
        let t =
            econ_audit::transcript::SessionTranscript::read_from(&cfg.output_path().join(&s.path))
                .map_err(|e| e.to_string())?;
        total += t.rounds.len();
        clean += t.rounds.iter().filter(|r| r.flags.is_clean()).count();
    }
    let ks = |cond: &str| {
        report
            .sources
            .iter()
            .find(|s| s.condition == cond)
            .and_then(|s| s.ks_vs_human.as_ref())
            .map(|k| k.mean)
    };
    let pearson = report
        .sources
        .iter()
        .find(|s| s.condition == "intrinsicality")
        .and_then(|s| s.replication_pearson.as_ref())
        .map(|p| p.mean);
    Ok(Live::Reported(format!(
        "format-valid {clean}/{total} ({:.1}%), replication Pearson {:?}, KS direct imitation {:?} vs intrinsicality {:?} ({human_note} humans), exit code {}",
        100.0 * clean as f64 / total.max(1) as f64,
        pearson,
        ks("imitation-direct"),
        ks("intrinsicality"),
        run.exit_code()
    )))
}

fn main() {
    // cargo passes harness flags such as --list; answer them without running
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: Vec<Criterion> = vec![
        (1, "profit-rule oracle", criterion_1),
        (2, "sampling moments", criterion_2),
        (3, "optimal-reserve oracle", criterion_3),
        (4, "newsvendor fractile", criterion_4),
        (5, "metric unit suite", criterion_5),
        (6, "replay fidelity", criterion_6),
        (7, "prompt golden files", criterion_7),
        (8, "imitation parser", criterion_8),
        (9, "determinism and resume", criterion_9),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {n} {name}: {detail} ({secs:.2}s)"),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {n} {name}: {e} ({secs:.2}s)");
            }
        }
    }
    match criterion_10() {
        Ok(Live::Skipped(why)) => println!("[SKIP] 10 live reproduction probe: {why}"),
        Ok(Live::Reported(detail)) => println!("[INFO] 10 live reproduction probe: {detail}"),
        Err(e) => println!("[INFO] 10 live reproduction probe: could not run: {e}"),
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: criteria 1-9 passed");
}
