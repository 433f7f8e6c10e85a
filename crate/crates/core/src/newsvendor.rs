//! Repeated single-period newsvendor game with uniform integer demand on
//! `[0, 300]` and per-round prices and costs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Observation, RoundParams};
use crate::auction::{clamp_action, SimError};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;
use crate::transcript::{
    ActionFlags, Outcome, RoundRecord, SessionTranscript, Task, TranscriptHeader,
};

pub const MAX_DEMAND: u32 = 300;
pub const MAX_ORDER: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceCost {
    pub price: f64,
    pub cost: f64,
}

impl PriceCost {
    pub fn new(price: f64, cost: f64) -> Self {
        PriceCost { price, cost }
    }

    pub fn fractile(&self) -> f64 {
        (self.price - self.cost) / self.price
    }
}

/// One line of a newsvendor schedule file. `demand` is optional; when every
/// line carries one, the file also fixes the demand sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorScheduleEntry {
    pub round: u32,
    pub price: f64,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewsvendorSessionConfig {
    pub total_rounds: u32,
    pub price_cost_schedule: Vec<PriceCost>,
    pub rng_seed: u64,
    pub demand_schedule: Option<Vec<u32>>,
}

impl NewsvendorSessionConfig {
    pub fn new(price_cost_schedule: Vec<PriceCost>, rng_seed: u64) -> Self {
        NewsvendorSessionConfig {
            total_rounds: price_cost_schedule.len() as u32,
            price_cost_schedule,
            rng_seed,
            demand_schedule: None,
        }
    }

    /// Builds a config from schedule-file entries.
    pub fn from_entries(
        entries: &[NewsvendorScheduleEntry],
        rng_seed: u64,
    ) -> Result<Self, SimError> {
        for (i, e) in entries.iter().enumerate() {
            if e.round != i as u32 + 1 {
                return Err(SimError::Validation(format!(
                    "schedule entry {} has round {}",
                    i + 1,
                    e.round
                )));
            }
        }
        let mut cfg = Self::new(
            entries
                .iter()
                .map(|e| PriceCost::new(e.price, e.cost))
                .collect(),
            rng_seed,
        );
        let demands: Option<Vec<u32>> = entries.iter().map(|e| e.demand).collect();
        if demands.is_none() && entries.iter().any(|e| e.demand.is_some()) {
            return Err(SimError::Validation(
                "demand must be given for every round or none".into(),
            ));
        }
        cfg.demand_schedule = demands;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.total_rounds == 0 {
            return Err(SimError::Validation("total_rounds must be positive".into()));
        }
        if self.price_cost_schedule.len() != self.total_rounds as usize {
            return Err(SimError::Validation(format!(
                "price/cost schedule has {} rounds, expected {}",
                self.price_cost_schedule.len(),
                self.total_rounds
            )));
        }
        for (i, pc) in self.price_cost_schedule.iter().enumerate() {
            check_price_cost(pc.price, pc.cost)
                .map_err(|e| SimError::Validation(format!("round {}: {e}", i + 1)))?;
        }
        if let Some(d) = &self.demand_schedule {
            if d.len() != self.total_rounds as usize {
                return Err(SimError::Validation(format!(
                    "demand schedule has {} rounds, expected {}",
                    d.len(),
                    self.total_rounds
                )));
            }
            if let Some(bad) = d.iter().find(|&&x| x > MAX_DEMAND) {
                return Err(SimError::Validation(format!(
                    "demand {bad} outside [0, 300]"
                )));
            }
        }
        Ok(())
    }

    pub fn price_cost(&self, t: u32) -> Result<PriceCost, SimError> {
        self.check_round(t)?;
        Ok(self.price_cost_schedule[t as usize - 1])
    }

    fn check_round(&self, t: u32) -> Result<(), SimError> {
        if t == 0 || t > self.total_rounds {
            return Err(SimError::Domain(format!(
                "round {t} outside 1..={}",
                self.total_rounds
            )));
        }
        Ok(())
    }
}

/// Default price/cost schedule: cycles through high-margin (fractile above
/// one half) and low-margin (fractile below one half) rounds.
pub fn default_price_cost_schedule(rounds: u32) -> Vec<PriceCost> {
    const CYCLE: [(f64, f64); 6] = [
        (10.0, 2.0),
        (10.0, 8.0),
        (12.0, 3.0),
        (12.0, 9.0),
        (15.0, 5.0),
        (15.0, 10.0),
    ];
    (0..rounds as usize)
        .map(|i| {
            let (p, c) = CYCLE[i % CYCLE.len()];
            PriceCost::new(p, c)
        })
        .collect()
}

/// Demand for round `t`: uniform over the 301 integers `0..=300`, drawn
/// from a stream keyed by `(rng_seed, t)` unless a demand schedule is set.
pub fn sample_demand(cfg: &NewsvendorSessionConfig, t: u32) -> Result<u32, SimError> {
    cfg.check_round(t)?;
    if let Some(d) = &cfg.demand_schedule {
        return Ok(d[t as usize - 1]);
    }
    let mut rng = rng::stream(cfg.rng_seed, Domain::NewsvendorDemand, u64::from(t));
    Ok(rng.random_range(0..=MAX_DEMAND))
}

fn check_price_cost<S: Scalar>(price: S, cost: S) -> Result<(), String> {
    // written so that NaN fails
    if !(cost > S::zero() && price > cost) {
        return Err(format!(
            "price {price:?} and cost {cost:?} must satisfy 0 < cost < price"
        ));
    }
    Ok(())
}

/// Critical-fractile order quantity `round(300 (p - c) / p)`.
pub fn optimal_quantity<S: Scalar>(price: S, cost: S) -> Result<u32, SimError> {
    check_price_cost(price.clone(), cost.clone()).map_err(SimError::Domain)?;
    let q = S::from_int(i64::from(MAX_DEMAND)) * (price.clone() - cost) / price;
    let q = q
        .to_f64()
        .ok_or_else(|| SimError::Domain("fractile not representable".into()))?
        .round();
    Ok((q as u32).min(MAX_ORDER))
}

/// `price * min(q, demand) - cost * q`. May be negative.
pub fn resolve_newsvendor_round<S: Scalar>(
    order: u32,
    demand: u32,
    price: S,
    cost: S,
) -> Result<S, SimError> {
    if order > MAX_ORDER {
        return Err(SimError::Validation(format!(
            "order {order} outside [0, 300]"
        )));
    }
    if demand > MAX_DEMAND {
        return Err(SimError::Validation(format!(
            "demand {demand} outside [0, 300]"
        )));
    }
    check_price_cost(price.clone(), cost.clone()).map_err(SimError::Validation)?;
    let sold = S::from_int(i64::from(order.min(demand)));
    Ok(price * sold - cost * S::from_int(i64::from(order)))
}

pub fn run_newsvendor_session(
    cfg: &NewsvendorSessionConfig,
    agent: &mut dyn Agent,
    header: TranscriptHeader,
) -> Result<SessionTranscript, SimError> {
    let mut transcript = SessionTranscript::new(header);
    continue_newsvendor_session(cfg, agent, &mut transcript, |_| Ok(()))?;
    Ok(transcript)
}

/// Plays the rounds missing from `transcript`; see
/// [`crate::auction::continue_auction_session`] for the failure contract.
pub fn continue_newsvendor_session<F>(
    cfg: &NewsvendorSessionConfig,
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
        let pc = cfg.price_cost(t)?;
        let obs = Observation {
            task: Task::Newsvendor,
            round: t,
            params: RoundParams::Newsvendor {
                price: pc.price,
                cost: pc.cost,
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
        let (order, clamped) = clamp_action(decision.value, Task::Newsvendor);
        let demand = sample_demand(cfg, t)?;
        let profit = resolve_newsvendor_round(order, demand, pc.price, pc.cost)?;
        let q_star = optimal_quantity(pc.price, pc.cost)?;
        transcript.rounds.push(RoundRecord {
            round: t,
            action: order,
            profit,
            outcome: Outcome::Newsvendor {
                price: pc.price,
                cost: pc.cost,
                demand,
                q_star,
                bias: i64::from(order) - i64::from(q_star),
            },
            flags: decision.flags.merge(ActionFlags {
                clamped,
                ..ActionFlags::default()
            }),
        });
        if let Err(e) = on_round(transcript.rounds.last().expect("just pushed")) {
            transcript.failure = Some(format!("round {t}: {e}"));
            return Ok(());
        }
    }
    Ok(())
}
