//! Prompt assembly for the three intervention levels and parsing of batch
//! imitation responses.

mod rounds;
mod sample;
mod templates;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rounds::{
    parse_round_lines, split_trace_for_imitation, ImitationSplit, RoundLines, RoundLinesError,
    TargetRound,
};
pub use sample::sample_prompts;
pub use templates::{render, LintIssue, TemplateSet, TemplateSpec, TEMPLATE_SPECS};

use crate::agents::{AgentProfile, Observation, RoundParams};
use crate::auction::{sample_valuation, ValuationDistribution};
use crate::rng::{self, Domain};
use crate::transcript::{Outcome, RoundRecord, Task};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no value for template placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("empty value for template placeholder {{{0}}}")]
    EmptyValue(String),
    #[error("profile field '{0}' is empty")]
    EmptyProfileField(&'static str),
    #[error("invalid intervention: {0}")]
    InvalidSpec(String),
    #[error("template asset: {0}")]
    Asset(String),
    #[error("imitation has no target rounds")]
    EmptyTargets,
    #[error("round {0} is not an imitation target round")]
    RoundOutsideTargets(u32),
    #[error("trace has {len} rounds; imitation needs more than {context}")]
    TraceTooShort { len: usize, context: u32 },
    #[error(transparent)]
    RoundLines(#[from] RoundLinesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Intrinsicality,
    Instruction,
    Imitation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Risk {
    Seeking,
    Averse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImitationVariant {
    Direct,
    ContextAware,
    TheoryGuided,
}

/// Which intervention governs prompt assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<Risk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imitation_variant: Option<ImitationVariant>,
    /// Human rounds shown before imitation (30 auction, 15 newsvendor).
    pub context_rounds: u32,
}

impl InterventionSpec {
    pub fn intrinsicality(task: Task) -> Self {
        InterventionSpec {
            level: Level::Intrinsicality,
            risk: None,
            imitation_variant: None,
            context_rounds: task.default_context_rounds(),
        }
    }

    pub fn instruction(task: Task, risk: Risk) -> Self {
        InterventionSpec {
            level: Level::Instruction,
            risk: Some(risk),
            ..Self::intrinsicality(task)
        }
    }

    pub fn imitation(task: Task, variant: ImitationVariant) -> Self {
        InterventionSpec {
            level: Level::Imitation,
            imitation_variant: Some(variant),
            ..Self::intrinsicality(task)
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let risk_ok = self.risk.is_some() == (self.level == Level::Instruction);
        let variant_ok = self.imitation_variant.is_some() == (self.level == Level::Imitation);
        if !risk_ok {
            return Err(PromptError::InvalidSpec(
                "risk must be set exactly for the instruction level".into(),
            ));
        }
        if !variant_ok {
            return Err(PromptError::InvalidSpec(
                "imitation variant must be set exactly for the imitation level".into(),
            ));
        }
        if self.level == Level::Imitation && self.context_rounds == 0 {
            return Err(PromptError::InvalidSpec(
                "context_rounds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stable condition label, e.g. `instruction-seeking`, `imitation-direct`.
    pub fn label(&self) -> String {
        match (self.level, self.risk, self.imitation_variant) {
            (Level::Instruction, Some(r), _) => format!("instruction-{}", risk_str(r)),
            (Level::Imitation, _, Some(v)) => format!("imitation-{}", variant_str(v)),
            _ => "intrinsicality".to_string(),
        }
    }

    /// Parses a condition label (`intrinsicality`, `instruction-seeking`,
    /// `imitation:theory-guided`, ...) using the task's default context length.
    pub fn parse(label: &str, task: Task) -> Result<Self, PromptError> {
        let norm = label.trim().to_ascii_lowercase().replace([':', '_'], "-");
        let spec = match norm.as_str() {
            "intrinsicality" => Self::intrinsicality(task),
            "instruction-seeking" | "instruction-risk-seeking" => {
                Self::instruction(task, Risk::Seeking)
            }
            "instruction-averse" | "instruction-risk-averse" => {
                Self::instruction(task, Risk::Averse)
            }
            "imitation-direct" => Self::imitation(task, ImitationVariant::Direct),
            "imitation-context-aware" => Self::imitation(task, ImitationVariant::ContextAware),
            "imitation-theory-guided" => Self::imitation(task, ImitationVariant::TheoryGuided),
            _ => {
                return Err(PromptError::InvalidSpec(format!(
                    "unknown condition '{label}'"
                )))
            }
        };
        Ok(spec)
    }

    /// Every condition, in a fixed order.
    pub fn all(task: Task) -> Vec<Self> {
        vec![
            Self::intrinsicality(task),
            Self::instruction(task, Risk::Seeking),
            Self::instruction(task, Risk::Averse),
            Self::imitation(task, ImitationVariant::Direct),
            Self::imitation(task, ImitationVariant::ContextAware),
            Self::imitation(task, ImitationVariant::TheoryGuided),
        ]
    }
}

fn risk_str(r: Risk) -> &'static str {
    match r {
        Risk::Seeking => "seeking",
        Risk::Averse => "averse",
    }
}

fn variant_str(v: ImitationVariant) -> &'static str {
    match v {
        ImitationVariant::Direct => "direct",
        ImitationVariant::ContextAware => "context-aware",
        ImitationVariant::TheoryGuided => "theory-guided",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseGrammar {
    /// One bare integer.
    SingleInteger,
    /// `round <k>: <int>` per target round.
    RoundLines,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub expected_response_grammar: ResponseGrammar,
}

/// Static facts about the game the prompts describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSetting {
    pub task: Task,
    /// Selects the illustrative drop-out block in the auction instructions.
    pub distribution: Option<ValuationDistribution>,
    pub total_rounds: u32,
}

impl TaskSetting {
    pub fn auction(distribution: ValuationDistribution) -> Self {
        TaskSetting {
            task: Task::Auction,
            distribution: Some(distribution),
            total_rounds: Task::Auction.default_rounds(),
        }
    }

    pub fn newsvendor() -> Self {
        TaskSetting {
            task: Task::Newsvendor,
            distribution: None,
            total_rounds: Task::Newsvendor.default_rounds(),
        }
    }
}

/// The per-round observation (intrinsicality, instruction) or the human
/// trace split (imitation).
#[derive(Debug, Clone, Copy)]
pub enum PromptContext<'a> {
    Round(&'a Observation<'a>),
    Imitation(&'a ImitationSplit),
}

/// Renders the prompts for one request using the built-in templates.
pub fn build_prompts(
    spec: &InterventionSpec,
    profile: &AgentProfile,
    setting: &TaskSetting,
    ctx: PromptContext<'_>,
) -> Result<PromptBundle, PromptError> {
    build_prompts_with(&TemplateSet::builtin(), spec, profile, setting, ctx)
}

pub fn build_prompts_with(
    templates: &TemplateSet,
    spec: &InterventionSpec,
    profile: &AgentProfile,
    setting: &TaskSetting,
    ctx: PromptContext<'_>,
) -> Result<PromptBundle, PromptError> {
    spec.validate()?;
    match (spec.level, ctx) {
        (Level::Imitation, PromptContext::Imitation(split)) => {
            imitation_prompts(templates, spec, setting, split)
        }
        (Level::Imitation, PromptContext::Round(_)) => Err(PromptError::InvalidSpec(
            "imitation prompts need a trace split, not a single round".into(),
        )),
        (_, PromptContext::Imitation(_)) => Err(PromptError::InvalidSpec(
            "only the imitation level takes a trace split".into(),
        )),
        (_, PromptContext::Round(obs)) => round_prompts(templates, spec, profile, setting, obs),
    }
}

fn round_prompts(
    templates: &TemplateSet,
    spec: &InterventionSpec,
    profile: &AgentProfile,
    setting: &TaskSetting,
    obs: &Observation<'_>,
) -> Result<PromptBundle, PromptError> {
    let (mut system_text, user_text) = match setting.task {
        Task::Auction => {
            if let Some(field) = profile.first_empty_field() {
                return Err(PromptError::EmptyProfileField(field));
            }
            let num_bidders = match obs.params {
                RoundParams::Auction { num_bidders } => num_bidders,
                RoundParams::Newsvendor { .. } => {
                    return Err(PromptError::MissingPlaceholder(
                        "current_num_bidders".into(),
                    ))
                }
            };
            let system = templates.render(
                "auction_intrinsicality_system",
                &[
                    ("age", profile.age.to_string()),
                    ("gender", profile.gender.clone()),
                    ("race", profile.race.clone()),
                    ("program", profile.program.clone()),
                    (
                        "experiment_instructions",
                        auction_instructions(templates, setting)?,
                    ),
                ],
            )?;
            let (last, history) = match obs.history.last() {
                None => (NO_PREVIOUS.to_string(), NO_PREVIOUS.to_string()),
                Some(last) => (
                    auction_round_line(last),
                    obs.history
                        .iter()
                        .map(auction_round_line)
                        .collect::<Vec<_>>()
                        .join("\n"),
                ),
            };
            let user = templates.render(
                "auction_intrinsicality_user",
                &[
                    ("last_round_info", last),
                    ("history", history),
                    ("current_round", obs.round.to_string()),
                    ("current_num_bidders", num_bidders.to_string()),
                ],
            )?;
            (system, user)
        }
        Task::Newsvendor => {
            let (price, cost) = match obs.params {
                RoundParams::Newsvendor { price, cost } => (price, cost),
                RoundParams::Auction { .. } => {
                    return Err(PromptError::MissingPlaceholder("price".into()))
                }
            };
            let system = templates.render("newsvendor_intrinsicality_system", &[])?;
            let current = templates.render(
                "newsvendor_intrinsicality_user",
                &[
                    ("round", obs.round.to_string()),
                    ("price", fmt_num(price)),
                    ("cost", fmt_num(cost)),
                ],
            )?;
            let user = if obs.history.is_empty() {
                current
            } else {
                let history = obs
                    .history
                    .iter()
                    .map(newsvendor_round_line)
                    .collect::<Vec<_>>()
                    .join("\n");
                let block = templates.render("newsvendor_history", &[("history", history)])?;
                format!("{block}\n\n{current}")
            };
            (system, user)
        }
    };
    if let Some(risk) = spec.risk {
        let name = format!("{}_instruction_{}", setting.task.as_str(), risk_str(risk));
        system_text.push_str("\n\n");
        system_text.push_str(templates.get(&name)?);
    }
    Ok(PromptBundle {
        system_text,
        user_text,
        expected_response_grammar: ResponseGrammar::SingleInteger,
    })
}

fn imitation_prompts(
    templates: &TemplateSet,
    spec: &InterventionSpec,
    setting: &TaskSetting,
    split: &ImitationSplit,
) -> Result<PromptBundle, PromptError> {
    let targets = split.target_range().ok_or(PromptError::EmptyTargets)?;
    let variant = spec
        .imitation_variant
        .ok_or_else(|| PromptError::InvalidSpec("missing imitation variant".into()))?;
    let task_name = format!(
        "{}_task_{}",
        setting.task.as_str(),
        variant_str(variant).replace('-', "_")
    );
    let task_text = templates.get(&task_name)?.to_string();
    let context_last = split.context.last().map_or(0, |r| r.round);
    let common = [
        ("total_rounds", setting.total_rounds.to_string()),
        ("task", task_text),
        ("first_target", targets.start().to_string()),
        ("last_round", targets.end().to_string()),
        ("context_last", context_last.to_string()),
    ];
    let (system_text, user_text) = match setting.task {
        Task::Auction => {
            let mut values = common.to_vec();
            values.push((
                "experiment_instructions",
                auction_instructions(templates, setting)?,
            ));
            let system = templates.render("auction_imitation_system", &values)?;
            values.push((
                "first_auction_result_texts",
                split
                    .context
                    .iter()
                    .map(auction_round_line)
                    .collect::<Vec<_>>()
                    .join("\n"),
            ));
            values.push((
                "last_bid_information_texts",
                split
                    .targets
                    .iter()
                    .map(|t| match t.params {
                        RoundParams::Auction { num_bidders } => {
                            format!("Period {}: Number of Buyers: {}", t.round, num_bidders)
                        }
                        RoundParams::Newsvendor { .. } => format!("Period {}", t.round),
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
            ));
            let user = templates.render("auction_imitation_user", &values)?;
            (system, user)
        }
        Task::Newsvendor => {
            let mut values = common.to_vec();
            let system = templates.render("newsvendor_imitation_system", &values)?;
            values.push((
                "context_text",
                split
                    .context
                    .iter()
                    .map(newsvendor_round_line)
                    .collect::<Vec<_>>()
                    .join("\n"),
            ));
            values.push((
                "future_demand_text",
                split
                    .targets
                    .iter()
                    .map(|t| match t.params {
                        RoundParams::Newsvendor { price, cost } => format!(
                            "Round {}: Price: {} USD, Cost: {} USD",
                            t.round,
                            fmt_num(price),
                            fmt_num(cost)
                        ),
                        RoundParams::Auction { .. } => format!("Round {}", t.round),
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
            ));
            let user = templates.render("newsvendor_imitation_user", &values)?;
            (system, user)
        }
    };
    Ok(PromptBundle {
        system_text,
        user_text,
        expected_response_grammar: ResponseGrammar::RoundLines,
    })
}

const NO_PREVIOUS: &str = "No previous rounds.";

/// Seed for the illustrative drop-out sample shown with the cube
/// distribution.
const CUBE_SAMPLE_SEED: u64 = 100;

/// Appendix-style experiment instructions for the auction, with the
/// illustrative sample block matching the session's distribution.
pub fn auction_instructions(
    templates: &TemplateSet,
    setting: &TaskSetting,
) -> Result<String, PromptError> {
    let dist = setting
        .distribution
        .ok_or_else(|| PromptError::MissingPlaceholder("sample_table".into()))?;
    let (table, distribution) = match dist {
        ValuationDistribution::CubeRoot => (
            templates.get("auction_sample_table_cube_root")?.to_string(),
            templates
                .get("auction_sample_distribution_cube_root")?
                .to_string(),
        ),
        ValuationDistribution::Cube => illustrative_sample(dist, CUBE_SAMPLE_SEED),
    };
    templates.render(
        "auction_instructions",
        &[
            ("sample_table", table),
            ("sample_distribution", distribution),
        ],
    )
}

/// 100 seeded drop-out prices as a 10x10 table plus a histogram summary.
fn illustrative_sample(dist: ValuationDistribution, seed: u64) -> (String, String) {
    let mut rng = rng::stream(seed, Domain::Environment, 0);
    let values: Vec<u32> = (0..100)
        .map(|_| sample_valuation(dist, rng.random::<f64>()).expect("draw in [0, 1)"))
        .collect();
    let table = values
        .chunks(10)
        .map(|row| row.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n");
    let mut bins = [0usize; 10];
    for &v in &values {
        let bin = if v <= 10 { 0 } else { ((v - 1) / 10) as usize };
        bins[bin.min(9)] += 1;
    }
    let mut lines = vec![
        "Chart Title: Drop-Out-Price Sample Distribution".to_string(),
        "X-axis: Drop-Out-Price (10 price ranges)".to_string(),
        "Y-axis: Frequency (percentage of rounds)".to_string(),
    ];
    for (i, count) in bins.iter().enumerate() {
        let lo = if i == 0 { 0 } else { i * 10 + 1 };
        lines.push(format!(
            "- The {}-{} range: {}% of rounds.",
            lo,
            (i + 1) * 10,
            count
        ));
    }
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64;
    lines.push("Below the graph:".to_string());
    lines.push(format!("- Average: {}", mean.round()));
    lines.push(format!("- Min: {}", values.iter().min().expect("nonempty")));
    lines.push(format!("- Max: {}", values.iter().max().expect("nonempty")));
    (table, lines.join("\n"))
}

/// One auction round as shown to the seller after it completes.
pub fn auction_round_line(r: &RoundRecord) -> String {
    match &r.outcome {
        Outcome::Auction {
            num_bidders,
            valuations,
            sale,
        } => {
            let drops: Vec<String> = valuations
                .iter()
                .map(|&v| {
                    if v >= r.action {
                        v.to_string()
                    } else {
                        "None".into()
                    }
                })
                .collect();
            let winning = if *sale {
                fmt_num(r.profit)
            } else {
                "None".into()
            };
            format!(
                "Period {}: Reserve Price: {}, Number of Buyers: {}, Drop-Out Prices: [{}], Winning Bid: {}, Profit: {}",
                r.round,
                r.action,
                num_bidders,
                drops.join(", "),
                winning,
                fmt_num(r.profit)
            )
        }
        Outcome::Newsvendor { .. } => newsvendor_round_line(r),
    }
}

pub fn newsvendor_round_line(r: &RoundRecord) -> String {
    match &r.outcome {
        Outcome::Newsvendor {
            price,
            cost,
            demand,
            ..
        } => format!(
            "Round {}: Price: {} USD, Cost: {} USD, Order: {}, Demand: {}, Profit: {} USD",
            r.round,
            fmt_num(*price),
            fmt_num(*cost),
            r.action,
            demand,
            fmt_num(r.profit)
        ),
        Outcome::Auction { .. } => auction_round_line(r),
    }
}

/// Integers without a decimal point, everything else in shortest form.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x}")
    }
}
