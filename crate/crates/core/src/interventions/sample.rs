use super::{
    build_prompts_with, split_trace_for_imitation, InterventionSpec, Level, PromptContext,
    PromptError, TaskSetting, TemplateSet,
};
use crate::agents::{AgentHandle, AgentProfile, Observation};
use crate::auction::{run_auction_session, AuctionSessionConfig, ValuationDistribution};
use crate::newsvendor::{
    default_price_cost_schedule, run_newsvendor_session, NewsvendorSessionConfig,
};
use crate::transcript::{SessionTranscript, Task, TranscriptHeader};

const SAMPLE_SEED: u64 = 7;
const SAMPLE_ROUND: u32 = 3;

fn sample_trace(task: Task) -> Result<SessionTranscript, PromptError> {
    let rounds = task.default_rounds();
    let header = TranscriptHeader::new("sample", task, SAMPLE_SEED, rounds);
    let out = match task {
        Task::Auction => {
            let cfg = AuctionSessionConfig::new(ValuationDistribution::CubeRoot, SAMPLE_SEED);
            let mut agent = AgentHandle::Replay((0..rounds).map(|t| 20 + (t * 13) % 50).collect());
            run_auction_session(&cfg, &mut agent, header)
        }
        Task::Newsvendor => {
            let cfg =
                NewsvendorSessionConfig::new(default_price_cost_schedule(rounds), SAMPLE_SEED);
            let mut agent =
                AgentHandle::Replay((0..rounds).map(|t| 100 + (t * 37) % 150).collect());
            run_newsvendor_session(&cfg, &mut agent, header)
        }
    };
    out.map_err(|e| PromptError::Asset(format!("sample trace: {e}")))
}

/// Renders one condition against a fixed sample trace: round 3 for the
/// per-round levels, the default context split for imitation. Used to review
/// template changes.
pub fn sample_prompts(
    templates: &TemplateSet,
    task: Task,
    spec: &InterventionSpec,
) -> Result<String, PromptError> {
    let trace = sample_trace(task)?;
    let setting = match task {
        Task::Auction => TaskSetting::auction(ValuationDistribution::CubeRoot),
        Task::Newsvendor => TaskSetting::newsvendor(),
    };
    let profile = AgentProfile {
        age: 20,
        gender: "female".into(),
        race: "Asian".into(),
        program: "economics".into(),
    };
    let bundle = if spec.level == Level::Imitation {
        let split = split_trace_for_imitation(&trace, spec.context_rounds)?;
        build_prompts_with(
            templates,
            spec,
            &profile,
            &setting,
            PromptContext::Imitation(&split),
        )?
    } else {
        let idx = SAMPLE_ROUND as usize - 1;
        let rec = &trace.rounds[idx];
        let obs = Observation {
            task,
            round: SAMPLE_ROUND,
            params: crate::agents::RoundParams::from_record(rec),
            history: &trace.rounds[..idx],
        };
        build_prompts_with(
            templates,
            spec,
            &profile,
            &setting,
            PromptContext::Round(&obs),
        )?
    };
    Ok(format!(
        "=== SYSTEM ===\n{}\n=== USER ===\n{}\n",
        bundle.system_text, bundle.user_text
    ))
}
