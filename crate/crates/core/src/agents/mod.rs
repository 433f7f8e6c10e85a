//! Decision interface and concrete agents.

mod profile;
mod remote;
mod validate;

use thiserror::Error;

pub use profile::{load_profiles, synthetic_profiles, AgentProfile};
pub use remote::{
    query_remote_model, RateLimiter, RemoteAgent, RemoteClient, RemoteError, RemoteModelConfig,
    RequestBudget, SUPPORTED_TEMPERATURES,
};
pub use validate::{validate_action_text, ActionStatus, ValidatedAction};

use crate::auction::{optimal_reserve, SimError, ValuationDistribution};
use crate::interventions::PromptError;
use crate::newsvendor::optimal_quantity;
use crate::transcript::{ActionFlags, Outcome, RoundRecord, Task};

/// Per-round parameters the agent sees before acting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundParams {
    Auction { num_bidders: u32 },
    Newsvendor { price: f64, cost: f64 },
}

impl RoundParams {
    /// The publicly known parameters of a recorded round.
    pub fn from_record(r: &RoundRecord) -> Self {
        match r.outcome {
            Outcome::Auction { num_bidders, .. } => RoundParams::Auction { num_bidders },
            Outcome::Newsvendor { price, cost, .. } => RoundParams::Newsvendor { price, cost },
        }
    }
}

/// What an agent sees at round `round`: the round parameters plus every
/// completed round so far.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub task: Task,
    pub round: u32,
    pub params: RoundParams,
    pub history: &'a [RoundRecord],
}

/// Raw agent output; the session clamps `value` into the legal range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub value: i64,
    pub flags: ActionFlags,
}

impl Decision {
    pub fn clean(value: i64) -> Self {
        Decision {
            value,
            flags: ActionFlags::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("replay trace exhausted at round {round} (trace has {len} actions)")]
    TraceExhausted { round: u32, len: usize },
    #[error("{agent} agent does not support the {task} task")]
    Unsupported {
        agent: &'static str,
        task: &'static str,
    },
    #[error("prompt assembly failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("prompt of {chars} characters exceeds the context limit of {limit}")]
    ContextOverflow { chars: usize, limit: usize },
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl AgentError {
    /// True for failures caused by the remote endpoint speaking an
    /// unexpected protocol (malformed bodies, unexpected statuses).
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            AgentError::Remote(RemoteError::Protocol(_))
                | AgentError::Remote(RemoteError::Status { .. })
        )
    }
}

pub trait Agent {
    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision, AgentError>;
}

/// Optimal-policy agent. Auction reserves are fixed per distribution and
/// computed up front; newsvendor orders follow the critical fractile.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAgent {
    pub auction_reserve: Option<u32>,
}

/// Every agent kind the harness can run.
#[derive(Debug)]
pub enum AgentHandle {
    /// Replays `actions[t - 1]` at round `t`.
    Replay(Vec<u32>),
    /// Always outputs the same raw value (clamped by the session).
    Constant(i64),
    Oracle(OracleAgent),
    /// Newsvendor heuristic: order last round's realized demand; the
    /// fractile optimum in round 1.
    DemandChasing,
    Remote(Box<RemoteAgent>),
    /// Replays human actions for the context rounds, then defers to `inner`.
    WithContext {
        context: Vec<u32>,
        inner: Box<AgentHandle>,
    },
}

impl AgentHandle {
    pub fn oracle_auction(
        dist: ValuationDistribution,
        num_samples: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        let curve = optimal_reserve(dist, num_samples, 1, seed)?;
        Ok(AgentHandle::Oracle(OracleAgent {
            auction_reserve: Some(curve.best_reserve),
        }))
    }

    pub fn oracle_with_reserve(reserve: u32) -> Self {
        AgentHandle::Oracle(OracleAgent {
            auction_reserve: Some(reserve),
        })
    }

    pub fn oracle_newsvendor() -> Self {
        AgentHandle::Oracle(OracleAgent {
            auction_reserve: None,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentHandle::Replay(_) => "replay",
            AgentHandle::Constant(_) => "constant",
            AgentHandle::Oracle(_) => "oracle",
            AgentHandle::DemandChasing => "demand_chasing",
            AgentHandle::Remote(_) => "remote",
            AgentHandle::WithContext { .. } => "with_context",
        }
    }
}

impl Agent for AgentHandle {
    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision, AgentError> {
        match self {
            AgentHandle::Replay(actions) => actions
                .get(obs.round as usize - 1)
                .map(|&a| Decision::clean(i64::from(a)))
                .ok_or(AgentError::TraceExhausted {
                    round: obs.round,
                    len: actions.len(),
                }),
            AgentHandle::Constant(v) => Ok(Decision::clean(*v)),
            AgentHandle::Oracle(oracle) => match obs.params {
                RoundParams::Auction { .. } => oracle
                    .auction_reserve
                    .map(|r| Decision::clean(i64::from(r)))
                    .ok_or(AgentError::Unsupported {
                        agent: "newsvendor oracle",
                        task: "auction",
                    }),
                RoundParams::Newsvendor { price, cost } => {
                    Ok(Decision::clean(i64::from(optimal_quantity(price, cost)?)))
                }
            },
            AgentHandle::DemandChasing => match obs.params {
                RoundParams::Auction { .. } => Err(AgentError::Unsupported {
                    agent: "demand-chasing",
                    task: "auction",
                }),
                RoundParams::Newsvendor { price, cost } => {
                    let q = match obs.history.last().and_then(RoundRecord::demand) {
                        Some(d) => d,
                        None => optimal_quantity(price, cost)?,
                    };
                    Ok(Decision::clean(i64::from(q)))
                }
            },
            AgentHandle::Remote(remote) => remote.decide(obs),
            AgentHandle::WithContext { context, inner } => {
                match context.get(obs.round as usize - 1) {
                    Some(&a) => Ok(Decision::clean(i64::from(a))),
                    None => inner.decide(obs),
                }
            }
        }
    }
}
