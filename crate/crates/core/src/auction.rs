//! Repeated second-price auction with a seller-chosen reserve price.
//!
//! Buyers bid truthfully: each drops out of the ascending auction at its
//! valuation. The item sells when the highest drop-out price reaches the
//! reserve, and the seller receives the larger of the reserve and the
//! second-highest drop-out price (0 when there is only one buyer).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, Observation, RoundParams};
use crate::rng::{self, Domain};
use crate::scalar::Real;
use crate::transcript::{
    ActionFlags, Outcome, RoundRecord, SessionTranscript, Task, TranscriptHeader,
};

pub const BIDDER_COUNTS: [u32; 4] = [1, 4, 7, 10];
pub const MAX_VALUATION: u32 = 100;
pub const MAX_RESERVE: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
}

/// Buyer valuation distribution on the integer support `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationDistribution {
    /// `F(v) = (v/100)^(1/3)`: mass piled near zero, mean 25.
    CubeRoot,
    /// `F(v) = (v/100)^3`: mass piled near 100, mean 75.
    Cube,
}

impl ValuationDistribution {
    pub fn cdf(self, v: f64) -> f64 {
        let x = (v / 100.0).clamp(0.0, 1.0);
        match self {
            ValuationDistribution::CubeRoot => x.cbrt(),
            ValuationDistribution::Cube => x.powi(3),
        }
    }

    /// Continuous inverse CDF on `[0, 100]`.
    pub fn quantile<S: Real>(self, u: S) -> S {
        let hundred = S::from_int(100);
        match self {
            ValuationDistribution::CubeRoot => hundred * u * u * u,
            ValuationDistribution::Cube => hundred * u.cbrt(),
        }
    }

    /// Mean and standard deviation of the continuous distribution.
    pub fn moments(self) -> (f64, f64) {
        // x = v/100: E[x] = 1/4, E[x^2] = 1/7 (cube root); 3/4, 3/5 (cube)
        let (m1, m2) = match self {
            ValuationDistribution::CubeRoot => (0.25, 1.0 / 7.0),
            ValuationDistribution::Cube => (0.75, 0.6),
        };
        (100.0 * m1, 100.0 * (m2 - m1 * m1).sqrt())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValuationDistribution::CubeRoot => "cube_root",
            ValuationDistribution::Cube => "cube",
        }
    }
}

impl std::str::FromStr for ValuationDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cube_root" | "cuberoot" => Ok(ValuationDistribution::CubeRoot),
            "cube" => Ok(ValuationDistribution::Cube),
            other => Err(format!("unknown valuation distribution '{other}'")),
        }
    }
}

/// One line of a bidder schedule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionScheduleEntry {
    pub round: u32,
    pub num_bidders: u32,
    pub valuations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundEnvironment {
    pub num_bidders: u32,
    /// Sorted descending.
    pub valuations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionSessionConfig {
    pub total_rounds: u32,
    pub distribution: ValuationDistribution,
    pub rng_seed: u64,
    /// Fixed environments, one per round; overrides sampling entirely.
    pub bidder_schedule: Option<Vec<AuctionScheduleEntry>>,
}

impl AuctionSessionConfig {
    pub fn new(distribution: ValuationDistribution, rng_seed: u64) -> Self {
        AuctionSessionConfig {
            total_rounds: Task::Auction.default_rounds(),
            distribution,
            rng_seed,
            bidder_schedule: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.total_rounds == 0 {
            return Err(SimError::Validation("total_rounds must be positive".into()));
        }
        if let Some(schedule) = &self.bidder_schedule {
            if schedule.len() != self.total_rounds as usize {
                return Err(SimError::Validation(format!(
                    "bidder schedule has {} rounds, expected {}",
                    schedule.len(),
                    self.total_rounds
                )));
            }
            for (i, entry) in schedule.iter().enumerate() {
                if entry.round != i as u32 + 1 {
                    return Err(SimError::Validation(format!(
                        "schedule entry {} has round {}",
                        i + 1,
                        entry.round
                    )));
                }
                if entry.num_bidders as usize != entry.valuations.len() {
                    return Err(SimError::Validation(format!(
                        "round {}: num_bidders {} but {} valuations",
                        entry.round,
                        entry.num_bidders,
                        entry.valuations.len()
                    )));
                }
                check_valuations(&entry.valuations)
                    .map_err(|e| SimError::Validation(format!("round {}: {e}", entry.round)))?;
            }
        }
        Ok(())
    }

    /// The full environment sequence, sampled or taken from the schedule.
    pub fn environments(&self) -> Result<Vec<RoundEnvironment>, SimError> {
        (1..=self.total_rounds)
            .map(|t| sample_round_environment(self, t))
            .collect()
    }
}

/// Maps a uniform draw to an integer valuation via the inverse CDF, rounding
/// to nearest with ties to even.
pub fn sample_valuation<S: Real>(dist: ValuationDistribution, u: S) -> Result<u32, SimError> {
    if !(u >= S::zero() && u <= S::one()) {
        return Err(SimError::Domain(format!(
            "uniform draw {:?} outside [0, 1]",
            u
        )));
    }
    let v = round_ties_even(dist.quantile(u));
    let v = v
        .to_u32()
        .ok_or_else(|| SimError::Domain(format!("valuation {v:?} not representable")))?;
    Ok(v.min(MAX_VALUATION))
}

fn round_ties_even<S: Real>(x: S) -> S {
    let floor = x.floor();
    let frac = x - floor;
    let half = S::from_int(1) / S::from_int(2);
    if frac > half {
        floor + S::one()
    } else if frac < half {
        floor
    } else {
        let two = S::from_int(2);
        if (floor / two).floor() * two == floor {
            floor
        } else {
            floor + S::one()
        }
    }
}

/// Environment for round `t` (1-based). Sampled rounds draw from a stream
/// keyed by `(rng_seed, t)`.
pub fn sample_round_environment(
    cfg: &AuctionSessionConfig,
    t: u32,
) -> Result<RoundEnvironment, SimError> {
    if t == 0 || t > cfg.total_rounds {
        return Err(SimError::Domain(format!(
            "round {t} outside 1..={}",
            cfg.total_rounds
        )));
    }
    if let Some(schedule) = &cfg.bidder_schedule {
        let entry = schedule.get(t as usize - 1).ok_or_else(|| {
            SimError::Validation(format!("bidder schedule has no entry for round {t}"))
        })?;
        return Ok(RoundEnvironment {
            num_bidders: entry.num_bidders,
            valuations: entry.valuations.clone(),
        });
    }
    let mut rng = rng::stream(cfg.rng_seed, Domain::AuctionRound, u64::from(t));
    Ok(draw_environment(cfg.distribution, &mut rng, None))
}

fn draw_environment<R: rand::Rng>(
    dist: ValuationDistribution,
    rng: &mut R,
    num_bidders: Option<u32>,
) -> RoundEnvironment {
    let n = num_bidders.unwrap_or_else(|| BIDDER_COUNTS[rng.random_range(0..BIDDER_COUNTS.len())]);
    let mut valuations: Vec<u32> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            sample_valuation(dist, u).expect("draw in [0, 1)")
        })
        .collect();
    valuations.sort_unstable_by(|a, b| b.cmp(a));
    RoundEnvironment {
        num_bidders: n,
        valuations,
    }
}

fn check_valuations(valuations: &[u32]) -> Result<(), String> {
    if valuations.is_empty() {
        return Err("no bidders".into());
    }
    if let Some(v) = valuations.iter().find(|&&v| v > MAX_VALUATION) {
        return Err(format!("valuation {v} outside [0, {MAX_VALUATION}]"));
    }
    if valuations.windows(2).any(|w| w[0] < w[1]) {
        return Err("valuations not sorted descending".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuctionResult {
    pub sale: bool,
    pub profit: u32,
}

/// Resolves one round for reserve `reserve` against descending `valuations`.
pub fn resolve_auction_round(reserve: u32, valuations: &[u32]) -> Result<AuctionResult, SimError> {
    if reserve > MAX_RESERVE {
        return Err(SimError::Validation(format!(
            "reserve {reserve} outside [0, {MAX_RESERVE}]"
        )));
    }
    check_valuations(valuations).map_err(SimError::Validation)?;
    let highest = valuations[0];
    let second = valuations.get(1).copied().unwrap_or(0);
    if highest < reserve {
        return Ok(AuctionResult {
            sale: false,
            profit: 0,
        });
    }
    Ok(AuctionResult {
        sale: true,
        profit: second.max(reserve),
    })
}

/// Expected profit per round over a reserve grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReserveCurve {
    pub best_reserve: u32,
    pub curve: Vec<(u32, f64)>,
    /// Standard error of `curve[i + 1].1 - curve[i].1` over the samples.
    pub step_se: Vec<f64>,
}

impl ReserveCurve {
    pub fn expected_profit(&self, reserve: u32) -> Option<f64> {
        self.curve
            .iter()
            .find(|(r, _)| *r == reserve)
            .map(|(_, p)| *p)
    }

    /// True when the curve rises (weakly) to its maximum and then falls
    /// (weakly).
    pub fn is_unimodal(&self) -> bool {
        let values: Vec<f64> = self.curve.iter().map(|(_, p)| *p).collect();
        let mut i = 0;
        while i + 1 < values.len() && values[i + 1] >= values[i] {
            i += 1;
        }
        values[i..].windows(2).all(|w| w[1] <= w[0])
    }

    /// Unimodality around `best_reserve` that ignores reversals smaller than
    /// `z` standard errors of the step.
    pub fn is_unimodal_within(&self, z: f64) -> bool {
        let best = self
            .curve
            .iter()
            .position(|(r, _)| *r == self.best_reserve)
            .unwrap_or(0);
        self.curve
            .windows(2)
            .zip(&self.step_se)
            .enumerate()
            .all(|(i, (w, se))| {
                let step = w[1].1 - w[0].1;
                if i < best {
                    step >= -z * se
                } else {
                    step <= z * se
                }
            })
    }
}

/// Monte-Carlo expected profit for every reserve on the grid
/// `0, step, 2*step, ..., 100`, using `num_samples` rounds split evenly over
/// the bidder counts. All candidates share the same sampled rounds.
pub fn optimal_reserve(
    dist: ValuationDistribution,
    num_samples: usize,
    grid_step: u32,
    seed: u64,
) -> Result<ReserveCurve, SimError> {
    if num_samples < 10_000 {
        return Err(SimError::Validation(format!(
            "num_samples {num_samples} below 10000"
        )));
    }
    let mut rng = rng::stream(seed, Domain::OracleSamples, 0);
    let top_two: Vec<(u32, u32)> = (0..num_samples)
        .map(|i| {
            let n = BIDDER_COUNTS[i % BIDDER_COUNTS.len()];
            let env = draw_environment(dist, &mut rng, Some(n));
            (
                env.valuations[0],
                env.valuations.get(1).copied().unwrap_or(0),
            )
        })
        .collect();
    optimal_reserve_from_samples(&top_two, grid_step)
}

/// Expected-profit grid search over pre-drawn `(highest, second)` valuation
/// pairs. Ties go to the larger reserve.
pub fn optimal_reserve_from_samples(
    top_two: &[(u32, u32)],
    grid_step: u32,
) -> Result<ReserveCurve, SimError> {
    if grid_step == 0 {
        return Err(SimError::Validation("grid step must be positive".into()));
    }
    if top_two.is_empty() {
        return Err(SimError::Validation("no samples".into()));
    }
    let grid: Vec<u32> = (0..=MAX_RESERVE).step_by(grid_step as usize).collect();
    let mut totals = vec![0u64; grid.len()];
    let mut step_sq = vec![0u64; grid.len().saturating_sub(1)];
    let mut row = vec![0u32; grid.len()];
    for &(b1, b2) in top_two {
        for ((slot, cell), &r) in totals.iter_mut().zip(row.iter_mut()).zip(&grid) {
            *cell = if r <= b1 { b2.max(r) } else { 0 };
            *slot += u64::from(*cell);
        }
        for (sq, w) in step_sq.iter_mut().zip(row.windows(2)) {
            let d = u64::from(w[0].abs_diff(w[1]));
            *sq += d * d;
        }
    }
    let n = top_two.len() as f64;
    let step_se = step_sq
        .iter()
        .zip(totals.windows(2))
        .map(|(&sq, w)| {
            let mean = (w[1] as f64 - w[0] as f64) / n;
            let var = (sq as f64 / n - mean * mean).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    let curve: Vec<(u32, f64)> = grid
        .iter()
        .zip(&totals)
        .map(|(&r, &s)| (r, s as f64 / n))
        .collect();
    let best_idx = totals
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s >= totals[best] { i } else { best });
    Ok(ReserveCurve {
        best_reserve: grid[best_idx],
        curve,
        step_se,
    })
}

/// Plays a full session from round 1.
pub fn run_auction_session(
    cfg: &AuctionSessionConfig,
    agent: &mut dyn Agent,
    header: TranscriptHeader,
) -> Result<SessionTranscript, SimError> {
    let mut transcript = SessionTranscript::new(header);
    continue_auction_session(cfg, agent, &mut transcript, |_| Ok(()))?;
    Ok(transcript)
}

/// Plays the rounds missing from `transcript`, calling `on_round` after each
/// one is appended. Agent or sink failures stop the session and are stored
/// in `transcript.failure`; the completed prefix is kept.
pub fn continue_auction_session<F>(
    cfg: &AuctionSessionConfig,
    agent: &mut dyn Agent,
    transcript: &mut SessionTranscript,
    mut on_round: F,
) -> Result<(), SimError>
where
    F: FnMut(&RoundRecord) -> Result<(), String>,
{
    cfg.validate()?;
    transcript.header.total_rounds = cfg.total_rounds;
    transcript.failure = None;
    transcript.protocol_failure = false;
    let start = transcript.rounds.len() as u32 + 1;
    for t in start..=cfg.total_rounds {
        let env = sample_round_environment(cfg, t)?;
        let obs = Observation {
            task: Task::Auction,
            round: t,
            params: RoundParams::Auction {
                num_bidders: env.num_bidders,
            },
            history: &transcript.rounds,
        };
        let decision = match agent.decide(&obs) {
            Ok(d) => d,
            Err(e) => {
                transcript.protocol_failure = e.is_protocol();
                transcript.failure = Some(format!("round {t}: {e}"));
                return Ok(());
            }
        };
        let (reserve, clamped) = clamp_action(decision.value, Task::Auction);
        let result = resolve_auction_round(reserve, &env.valuations)?;
        let record = RoundRecord {
            round: t,
            action: reserve,
            profit: f64::from(result.profit),
            outcome: Outcome::Auction {
                num_bidders: env.num_bidders,
                valuations: env.valuations,
                sale: result.sale,
            },
            flags: decision.flags.merge(ActionFlags {
                clamped,
                ..ActionFlags::default()
            }),
        };
        transcript.rounds.push(record);
        if let Err(e) = on_round(transcript.rounds.last().expect("just pushed")) {
            transcript.failure = Some(format!("round {t}: {e}"));
            return Ok(());
        }
    }
    Ok(())
}

/// Clamps a raw action into the task's legal range.
pub fn clamp_action(value: i64, task: Task) -> (u32, bool) {
    let (lo, hi) = task.legal_range();
    let clamped = value.clamp(lo, hi);
    (clamped as u32, clamped != value)
}
