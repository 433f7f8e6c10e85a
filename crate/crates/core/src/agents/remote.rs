//! Chat-completion client and the agent that drives it.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{validate_action_text, Agent, AgentError, AgentProfile, Decision, Observation};
use crate::interventions::{
    build_prompts, parse_round_lines, ImitationSplit, InterventionSpec, Level, PromptContext,
    PromptError, RoundLines, RoundLinesError, TaskSetting,
};
use crate::transcript::ActionFlags;

/// Temperatures covered by the robustness sweep.
pub const SUPPORTED_TEMPERATURES: [f64; 4] = [0.0, 0.3, 0.7, 1.0];

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("request failed after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("credentials unavailable: {0}")]
    Credentials(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request budget exhausted")]
    BudgetExhausted,
}

fn default_temperature() -> f64 {
    1.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteModelConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Total attempts per request, including the first.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Environment variable holding the bearer token. No auth header when unset.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// First backoff delay; doubles after every failed attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Prompts longer than this (system + user, in chars) are refused.
    #[serde(default)]
    pub max_prompt_chars: Option<usize>,
}

impl RemoteModelConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteModelConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            timeout_secs: default_timeout_secs(),
            api_key_env: None,
            backoff_base_ms: default_backoff_ms(),
            max_prompt_chars: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint.trim().is_empty() {
            return Err("endpoint is empty".into());
        }
        if self.model.trim().is_empty() {
            return Err("model is empty".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature {} must be >= 0", self.temperature));
        }
        if self.max_retries == 0 {
            return Err("max_retries must be at least 1".into());
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err("timeout_secs must be positive".into());
        }
        Ok(())
    }

    fn api_key(&self) -> Result<Option<String>, RemoteError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| {
                RemoteError::Credentials(format!("environment variable {var} is not set"))
            }),
        }
    }
}

/// Token bucket shared by every session of an experiment.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: f64) -> Self {
        let requests = requests.max(f64::MIN_POSITIVE);
        RateLimiter {
            per_minute: requests,
            state: Mutex::new((requests.max(1.0), Instant::now())),
        }
    }

    /// Blocks until a request slot is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("rate limiter poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                let refill = now.duration_since(*last).as_secs_f64() * self.per_minute / 60.0;
                *tokens = (*tokens + refill).min(self.per_minute.max(1.0));
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                (1.0 - *tokens) * 60.0 / self.per_minute
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Hard cap on the number of HTTP requests an experiment may issue.
#[derive(Debug)]
pub struct RequestBudget {
    remaining: AtomicU64,
}

impl RequestBudget {
    pub fn new(limit: u64) -> Self {
        RequestBudget {
            remaining: AtomicU64::new(limit),
        }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining.load(Ordering::SeqCst)
    }

    pub fn take(&self) -> Result<(), RemoteError> {
        self.remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .map(|_| ())
            .map_err(|_| RemoteError::BudgetExhausted)
    }
}

#[derive(Clone)]
pub struct RemoteClient {
    cfg: RemoteModelConfig,
    http: ureq::Agent,
    limiter: Option<Arc<RateLimiter>>,
    budget: Option<Arc<RequestBudget>>,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish()
    }
}

impl RemoteClient {
    pub fn new(cfg: RemoteModelConfig) -> Result<Self, RemoteError> {
        cfg.validate().map_err(RemoteError::InvalidRequest)?;
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteClient {
            cfg,
            http,
            limiter: None,
            budget: None,
        })
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_budget(mut self, budget: Arc<RequestBudget>) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn config(&self) -> &RemoteModelConfig {
        &self.cfg
    }

    /// Sends one system + user exchange and returns the assistant text,
    /// retrying transport failures, 429 and 5xx responses with exponential
    /// backoff.
    pub fn complete(&self, system_text: &str, user_text: &str) -> Result<String, RemoteError> {
        if system_text.trim().is_empty() || user_text.trim().is_empty() {
            return Err(RemoteError::InvalidRequest("empty prompt text".into()));
        }
        let key = self.cfg.api_key()?;
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        });
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 1..=self.cfg.max_retries {
            if attempt > 1 {
                let factor = 1u64 << (attempt - 2).min(16);
                let delay = self.cfg.backoff_base_ms.saturating_mul(factor).min(30_000);
                std::thread::sleep(Duration::from_millis(delay));
            }
            if let Some(budget) = &self.budget {
                budget.take()?;
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let mut req = self.http.post(&self.cfg.endpoint);
            if let Some(k) = &key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            let response = match req.send_json(&body) {
                Ok(r) => r,
                Err(e) => {
                    last_status = None;
                    last_message = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = response
                .into_body()
                .read_to_string()
                .map_err(|e| RemoteError::Protocol(format!("unreadable body: {e}")));
            match status {
                200..=299 => return extract_content(&text?),
                429 | 500..=599 => {
                    last_status = Some(status);
                    last_message = text.unwrap_or_default();
                }
                _ => {
                    return Err(RemoteError::Status {
                        status,
                        body: text.unwrap_or_default(),
                    })
                }
            }
        }
        Err(RemoteError::Transport {
            attempts: self.cfg.max_retries,
            status: last_status,
            message: last_message,
        })
    }
}

fn extract_content(body: &str) -> Result<String, RemoteError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| RemoteError::Protocol(format!("invalid JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| RemoteError::Protocol("missing choices[0].message.content".into()))
}

/// One-off query without rate limiting or budget.
pub fn query_remote_model(
    cfg: &RemoteModelConfig,
    system_text: &str,
    user_text: &str,
) -> Result<String, RemoteError> {
    RemoteClient::new(cfg.clone())?.complete(system_text, user_text)
}

/// Agent backed by a remote chat model. Single-integer conditions issue one
/// request per round; imitation issues one batch request covering every
/// target round the first time a target round is reached.
#[derive(Debug)]
pub struct RemoteAgent {
    client: RemoteClient,
    spec: InterventionSpec,
    profile: AgentProfile,
    setting: TaskSetting,
    imitation: Option<ImitationSplit>,
    batch: Option<BTreeMap<u32, Decision>>,
}

impl RemoteAgent {
    pub fn new(
        client: RemoteClient,
        spec: InterventionSpec,
        profile: AgentProfile,
        setting: TaskSetting,
    ) -> Self {
        RemoteAgent {
            client,
            spec,
            profile,
            setting,
            imitation: None,
            batch: None,
        }
    }

    pub fn with_imitation(mut self, split: ImitationSplit) -> Self {
        self.imitation = Some(split);
        self
    }

    fn check_length(&self, system: &str, user: &str) -> Result<(), AgentError> {
        if let Some(limit) = self.client.config().max_prompt_chars {
            let chars = system.chars().count() + user.chars().count();
            if chars > limit {
                return Err(AgentError::ContextOverflow { chars, limit });
            }
        }
        Ok(())
    }

    fn decide_single(&mut self, obs: &Observation<'_>) -> Result<Decision, AgentError> {
        let bundle = build_prompts(
            &self.spec,
            &self.profile,
            &self.setting,
            PromptContext::Round(obs),
        )?;
        self.check_length(&bundle.system_text, &bundle.user_text)?;
        let legal = self.setting.task.legal_range();
        let first = validate_action_text(
            &self
                .client
                .complete(&bundle.system_text, &bundle.user_text)?,
            legal,
        );
        if first.is_valid() {
            return Ok(Decision::clean(i64::from(first.value)));
        }
        let retry_user = format!(
            "{}\n\nYour previous response was not a valid answer. Respond with only an integer between {} and {}.",
            bundle.user_text, legal.0, legal.1
        );
        let second = validate_action_text(
            &self.client.complete(&bundle.system_text, &retry_user)?,
            legal,
        );
        Ok(Decision {
            value: i64::from(second.value),
            flags: second.flags().merge(ActionFlags {
                reprompted: true,
                ..ActionFlags::default()
            }),
        })
    }

    fn fetch_batch(&mut self) -> Result<BTreeMap<u32, Decision>, AgentError> {
        let split = self
            .imitation
            .as_ref()
            .ok_or(PromptError::MissingPlaceholder(
                "participant history".into(),
            ))?;
        let targets = split.target_range().ok_or(PromptError::EmptyTargets)?;
        let bundle = build_prompts(
            &self.spec,
            &self.profile,
            &self.setting,
            PromptContext::Imitation(split),
        )?;
        self.check_length(&bundle.system_text, &bundle.user_text)?;
        let legal = self.setting.task.legal_range();
        let text = self
            .client
            .complete(&bundle.system_text, &bundle.user_text)?;
        let (lines, reprompted) = match parse_round_lines(&text, targets.clone(), legal) {
            Ok(lines) => (lines, false),
            Err(RoundLinesError::Incomplete { missing, partial }) => {
                let missing_list: Vec<String> = missing.iter().map(u32::to_string).collect();
                let retry_user = format!(
                    "{}\n\nYour previous response was missing rounds {}. Respond with one line per round for rounds {} to {}, in the required format.",
                    bundle.user_text,
                    missing_list.join(", "),
                    targets.start(),
                    targets.end()
                );
                let retry = self.client.complete(&bundle.system_text, &retry_user)?;
                let merged = match parse_round_lines(&retry, targets.clone(), legal) {
                    Ok(lines) => partial.overlay(lines),
                    Err(RoundLinesError::Incomplete { partial: p2, .. }) => partial.overlay(p2),
                    Err(e) => return Err(PromptError::from(e).into()),
                };
                (merged, true)
            }
            Err(e) => return Err(PromptError::from(e).into()),
        };
        Ok(decisions_from_lines(&lines, targets, legal, reprompted))
    }
}

fn decisions_from_lines(
    lines: &RoundLines,
    targets: std::ops::RangeInclusive<u32>,
    legal: (i64, i64),
    reprompted: bool,
) -> BTreeMap<u32, Decision> {
    targets
        .map(|round| {
            let decision = match lines.values.get(&round) {
                Some(v) => Decision {
                    value: i64::from(v.value),
                    flags: v.flags().merge(ActionFlags {
                        reprompted,
                        duplicate_round: lines.duplicates.contains(&round),
                        ..ActionFlags::default()
                    }),
                },
                None => Decision {
                    value: (legal.0 + legal.1) / 2,
                    flags: ActionFlags {
                        format_violation: true,
                        reprompted,
                        ..ActionFlags::default()
                    },
                },
            };
            (round, decision)
        })
        .collect()
}

impl Agent for RemoteAgent {
    fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision, AgentError> {
        if self.spec.level != Level::Imitation {
            return self.decide_single(obs);
        }
        if self.batch.is_none() {
            self.batch = Some(self.fetch_batch()?);
        }
        self.batch
            .as_ref()
            .and_then(|b| b.get(&obs.round).copied())
            .ok_or_else(|| PromptError::RoundOutsideTargets(obs.round).into())
    }
}
