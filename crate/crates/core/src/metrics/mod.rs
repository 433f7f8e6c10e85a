//! Behavioral-fidelity metrics and the statistics used to compare agent
//! populations with human ones.

mod distribution;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distribution::{
    behavioral_entropy, behavioral_entropy_binned, ecdf_at, ecdf_table, ks_distance,
};
pub use stats::{
    mean, mean_ci, pearson_r, sample_variance, summary, welch_t_test, CiMethod, MeanCi, Summary,
    WelchTest, BOOTSTRAP_RESAMPLES,
};

use crate::scalar::{Real, Scalar};
use crate::transcript::{RoundRecord, SessionTranscript, Task};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{what} needs at least {need} values, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("correlation undefined for a constant sequence")]
    UndefinedCorrelation,
    #[error("sample contains unordered values (NaN)")]
    Unordered,
    #[error("value not representable in the scalar type")]
    Overflow,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("{0}")]
    WrongTask(&'static str),
}

/// Fraction of rounds that ended in a sale.
pub fn sell_through_rate<S: Scalar>(sales: &[bool]) -> Result<S, MetricError> {
    if sales.is_empty() {
        return Err(MetricError::Empty("sale flags"));
    }
    let sold = sales.iter().filter(|&&s| s).count();
    Ok(S::from_count(sold) / S::from_count(sales.len()))
}

/// A rate whose denominator may be zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate<S> {
    pub value: S,
    /// False when the denominator was zero and `value` was set to 0.
    pub defined: bool,
}

/// Among sold rounds, the fraction where the reserve exceeded the
/// second-highest valuation. 0 (flagged undefined) with no sales.
pub fn premium_capture_rate<S: Scalar>(
    sales: &[bool],
    reserves: &[u32],
    second_highest: &[u32],
) -> Result<Rate<S>, MetricError> {
    if sales.len() != reserves.len() {
        return Err(MetricError::LengthMismatch(sales.len(), reserves.len()));
    }
    if sales.len() != second_highest.len() {
        return Err(MetricError::LengthMismatch(
            sales.len(),
            second_highest.len(),
        ));
    }
    let sold = sales.iter().filter(|&&s| s).count();
    if sold == 0 {
        return Ok(Rate {
            value: S::zero(),
            defined: false,
        });
    }
    let captured = sales
        .iter()
        .zip(reserves)
        .zip(second_highest)
        .filter(|((&s, &r), &b2)| s && r > b2)
        .count();
    Ok(Rate {
        value: S::from_count(captured) / S::from_count(sold),
        defined: true,
    })
}

/// Mean of `order - optimal` per round, sign preserved.
pub fn mean_order_bias<S: Scalar>(orders: &[u32], optimal: &[u32]) -> Result<S, MetricError> {
    if orders.len() != optimal.len() {
        return Err(MetricError::LengthMismatch(orders.len(), optimal.len()));
    }
    if orders.is_empty() {
        return Err(MetricError::Empty("orders"));
    }
    let total: i64 = orders
        .iter()
        .zip(optimal)
        .map(|(&q, &s)| i64::from(q) - i64::from(s))
        .sum();
    Ok(S::from_int(total) / S::from_count(orders.len()))
}

/// Column view of a window of rounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionTrace {
    pub actions: Vec<u32>,
    pub profits: Vec<f64>,
    pub sales: Vec<bool>,
    pub second_highest: Vec<u32>,
    pub num_bidders: Vec<u32>,
    pub q_star: Vec<u32>,
}

impl DecisionTrace {
    pub fn from_rounds<'a>(rounds: impl IntoIterator<Item = &'a RoundRecord>) -> Self {
        let mut t = DecisionTrace::default();
        for r in rounds {
            t.actions.push(r.action);
            t.profits.push(r.profit);
            match &r.outcome {
                crate::transcript::Outcome::Auction {
                    num_bidders, sale, ..
                } => {
                    t.sales.push(*sale);
                    t.second_highest.push(r.second_highest().unwrap_or(0));
                    t.num_bidders.push(*num_bidders);
                }
                crate::transcript::Outcome::Newsvendor { q_star, .. } => t.q_star.push(*q_star),
            }
        }
        t
    }

    pub fn actions_f64(&self) -> Vec<f64> {
        self.actions.iter().map(|&a| f64::from(a)).collect()
    }
}

/// Inclusive round window used by every per-agent metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundWindow {
    pub first: u32,
    pub last: u32,
}

impl RoundWindow {
    pub const ALL: RoundWindow = RoundWindow {
        first: 1,
        last: u32::MAX,
    };

    pub fn contains(&self, round: u32) -> bool {
        (self.first..=self.last).contains(&round)
    }

    pub fn select<'a>(&self, t: &'a SessionTranscript) -> Vec<&'a RoundRecord> {
        t.rounds.iter().filter(|r| self.contains(r.round)).collect()
    }
}

impl std::fmt::Display for RoundWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == RoundWindow::ALL {
            write!(f, "all")
        } else {
            write!(f, "{}-{}", self.first, self.last)
        }
    }
}

impl std::str::FromStr for RoundWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(RoundWindow::ALL);
        }
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("window '{s}' is not 'all' or 'first-last'"))?;
        let first: u32 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad window start '{a}'"))?;
        let last: u32 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad window end '{b}'"))?;
        if first == 0 || last < first {
            return Err(format!("empty window '{s}'"));
        }
        Ok(RoundWindow { first, last })
    }
}

/// Per-agent metric values over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_index: Option<usize>,
    pub rounds: usize,
    pub total_profit: f64,
    pub mean_action: f64,
    pub sd_action: f64,
    pub entropy_bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sell_through_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premium_capture_rate: Option<Rate<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_bias: Option<f64>,
    /// Rounds whose action was clamped, extracted or re-prompted.
    pub flagged_rounds: usize,
}

pub fn agent_metrics(
    transcript: &SessionTranscript,
    window: RoundWindow,
    entropy_bin_width: u32,
) -> Result<AgentMetrics, MetricError> {
    let rounds = window.select(transcript);
    let trace = DecisionTrace::from_rounds(rounds.iter().copied());
    if trace.actions.is_empty() {
        return Err(MetricError::Empty("round window"));
    }
    let actions = trace.actions_f64();
    let s = summary(&actions)?;
    let ints: Vec<i64> = trace.actions.iter().map(|&a| i64::from(a)).collect();
    let (str_, pcr, bias) = match transcript.header.task {
        Task::Auction => (
            Some(sell_through_rate(&trace.sales)?),
            Some(premium_capture_rate(
                &trace.sales,
                &trace.actions,
                &trace.second_highest,
            )?),
            None,
        ),
        Task::Newsvendor => (
            None,
            None,
            Some(mean_order_bias(&trace.actions, &trace.q_star)?),
        ),
    };
    Ok(AgentMetrics {
        agent_id: transcript.header.agent_id.clone(),
        profile_index: transcript.header.profile_index,
        rounds: trace.actions.len(),
        total_profit: trace.profits.iter().sum(),
        mean_action: s.mean,
        sd_action: s.sd,
        entropy_bits: behavioral_entropy_binned(&ints, entropy_bin_width)?,
        sell_through_rate: str_,
        premium_capture_rate: pcr,
        mean_bias: bias,
        flagged_rounds: rounds.iter().filter(|r| !r.flags.is_clean()).count(),
    })
}

/// Mean action per bidder count with a confidence interval, pooled over
/// every supplied auction round.
pub fn reserve_by_bidder_count<'a>(
    rounds: impl IntoIterator<Item = &'a RoundRecord>,
    method: CiMethod,
    seed: u64,
) -> Result<BTreeMap<u32, MeanCi>, MetricError> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in rounds {
        let n = r.num_bidders().ok_or(MetricError::WrongTask(
            "bidder grouping needs auction rounds",
        ))?;
        groups.entry(n).or_default().push(f64::from(r.action));
    }
    if groups.is_empty() {
        return Err(MetricError::Empty("auction rounds"));
    }
    groups
        .into_iter()
        .map(|(n, xs)| Ok((n, mean_ci(&xs, method, seed ^ u64::from(n))?)))
        .collect()
}

/// Table-2 style row: one variable of one source, pooled over agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: String,
    pub variable: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Entropy (bits) of the pooled values.
    pub entropy: f64,
    pub n: usize,
}

impl SummaryRow {
    pub fn from_values<T: Ord + Copy + Into<f64>>(
        source: &str,
        variable: &str,
        values: &[T],
    ) -> Result<Self, MetricError> {
        let xs: Vec<f64> = values.iter().map(|&v| v.into()).collect();
        let s = summary(&xs)?;
        Ok(SummaryRow {
            source: source.to_string(),
            variable: variable.to_string(),
            mean: s.mean,
            sd: s.sd,
            min: s.min,
            max: s.max,
            entropy: behavioral_entropy(values)?,
            n: s.n,
        })
    }

    /// Same, for real-valued data; entropy is over exact bit patterns.
    pub fn from_reals(source: &str, variable: &str, values: &[f64]) -> Result<Self, MetricError> {
        let s = summary(values)?;
        let keys: Vec<u64> = values.iter().map(|v| canonical_bits(*v)).collect();
        Ok(SummaryRow {
            source: source.to_string(),
            variable: variable.to_string(),
            mean: s.mean,
            sd: s.sd,
            min: s.min,
            max: s.max,
            entropy: behavioral_entropy(&keys)?,
            n: s.n,
        })
    }
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// KS distance between one agent and its paired human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedKs {
    pub agent_id: String,
    pub human_id: String,
    pub ks: f64,
}

/// Mean KS over pairs; errors on an empty slice.
pub fn mean_ks<S: Real>(pairs: &[S]) -> Result<S, MetricError> {
    mean(pairs)
}
