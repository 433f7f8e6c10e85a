//! Session planning and execution with incremental persistence and resume.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use econ_audit::agents::{
    load_profiles, synthetic_profiles, AgentHandle, AgentProfile, RateLimiter, RemoteAgent,
    RemoteClient, RequestBudget,
};
use econ_audit::auction::{
    continue_auction_session, optimal_reserve, AuctionScheduleEntry, AuctionSessionConfig,
    ValuationDistribution,
};
use econ_audit::interventions::{
    split_trace_for_imitation, InterventionSpec, Level, TaskSetting, TemplateSet,
};
use econ_audit::newsvendor::{
    continue_newsvendor_session, default_price_cost_schedule, NewsvendorScheduleEntry,
    NewsvendorSessionConfig,
};
use econ_audit::rng::derive_seed;
use econ_audit::transcript::{
    read_jsonl, Fnv64, Outcome, SessionTranscript, Task, TranscriptHeader, TranscriptWriter,
};

use crate::config::{AgentKind, AgentSpec, ExperimentConfig};
use crate::error::{CliError, Result, EXIT_OK, EXIT_PARTIAL, EXIT_PROTOCOL};
use crate::ingest::{load_traces, LoadedTrace};
use crate::manifest::{Fingerprint, RunManifest, SessionEntry, SessionStatus, MANIFEST_FILE};

const PROFILE_SALT: u64 = 0x7072_6f66;
const ORACLE_SALT: u64 = 0x6f72_6163;
const HALTED: &str = "halted by request";

/// Seed of the environment faced by profile index `i`.
pub fn environment_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `workers` from the config.
    pub workers: Option<usize>,
    /// Stop every worker once this many rounds have been played, leaving
    /// sessions pending as if the process had been killed.
    pub halt_after_rounds: Option<u64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub halted: bool,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.failed().any(|s| s.protocol_error) {
            EXIT_PROTOCOL
        } else if self.manifest.count(SessionStatus::Failed) > 0 || self.halted {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

/// Everything loaded from disk or computed once per run.
pub struct Inputs {
    pub humans: Option<Vec<LoadedTrace>>,
    pub profiles: Vec<AgentProfile>,
    pub price_cost: Option<Vec<NewsvendorScheduleEntry>>,
    pub replay: BTreeMap<String, Vec<Vec<u32>>>,
    pub oracle_reserves: BTreeMap<ValuationDistribution, u32>,
    pub templates: TemplateSet,
    limiter: Option<Arc<RateLimiter>>,
    budget: Option<Arc<RequestBudget>>,
}

impl Inputs {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.num_agents;
        let humans = match &cfg.human_trace_dir {
            Some(d) => Some(load_traces(&cfg.resolve(d), cfg.task)?),
            None => None,
        };
        if let Some(h) = &humans {
            let needed = cfg.needs_humans()? || cfg.match_human_environments;
            if needed && h.len() < n {
                return Err(CliError::Config(format!(
                    "{} human traces for {n} agents",
                    h.len()
                )));
            }
            if cfg.match_human_environments {
                if let Some(bad) = h
                    .iter()
                    .take(n)
                    .find(|t| t.transcript.rounds.len() != cfg.rounds() as usize)
                {
                    return Err(CliError::Config(format!(
                        "{}: {} rounds, config has {}",
                        bad.path.display(),
                        bad.transcript.rounds.len(),
                        cfg.rounds()
                    )));
                }
            }
        }
        let profiles = match &cfg.profiles {
            Some(p) => load_profiles(&cfg.resolve(p))?,
            None => synthetic_profiles(derive_seed(cfg.seed, PROFILE_SALT), n),
        };
        if profiles.len() < n {
            return Err(CliError::Config(format!(
                "{} profiles for {n} agents",
                profiles.len()
            )));
        }
        if let Some((i, field)) = profiles
            .iter()
            .take(n)
            .enumerate()
            .find_map(|(i, p)| p.first_empty_field().map(|f| (i, f)))
        {
            return Err(CliError::Config(format!("profile {i}: empty {field}")));
        }
        let price_cost = match &cfg.price_cost_schedule {
            Some(p) => {
                let entries: Vec<NewsvendorScheduleEntry> = read_jsonl(&cfg.resolve(p))?;
                NewsvendorSessionConfig::from_entries(&entries, 0)
                    .map_err(|e| CliError::Config(format!("price_cost_schedule: {e}")))?;
                if entries.len() != cfg.rounds() as usize {
                    return Err(CliError::Config(format!(
                        "price_cost_schedule has {} rounds, config has {}",
                        entries.len(),
                        cfg.rounds()
                    )));
                }
                Some(entries)
            }
            None => None,
        };
        let mut replay = BTreeMap::new();
        for a in &cfg.agents {
            if let AgentKind::Replay { trace_dir } = &a.kind {
                let traces = load_traces(&cfg.resolve(trace_dir), cfg.task)?;
                if traces.len() < n {
                    return Err(CliError::Config(format!(
                        "agent '{}': {} replay traces for {n} agents",
                        a.name,
                        traces.len()
                    )));
                }
                replay.insert(
                    a.name.clone(),
                    traces.into_iter().map(|t| t.transcript.actions()).collect(),
                );
            }
            if let AgentKind::Remote(r) = &a.kind {
                if let Some(var) = &r.api_key_env {
                    if std::env::var(var).map(|v| v.is_empty()).unwrap_or(true) {
                        return Err(CliError::Config(format!(
                            "agent '{}': credential variable {var} is not set",
                            a.name
                        )));
                    }
                }
            }
        }
        let mut inputs = Inputs {
            humans,
            profiles,
            price_cost,
            replay,
            oracle_reserves: BTreeMap::new(),
            templates: TemplateSet::builtin(),
            limiter: cfg
                .remote
                .requests_per_minute
                .map(|r| Arc::new(RateLimiter::per_minute(r))),
            budget: cfg
                .remote
                .max_requests
                .map(|b| Arc::new(RequestBudget::new(b))),
        };
        if cfg.task == Task::Auction && cfg.agents.iter().any(|a| a.kind == AgentKind::Oracle) {
            for i in 0..n {
                let dist = inputs.distribution(cfg, i);
                if let Entry::Vacant(slot) = inputs.oracle_reserves.entry(dist) {
                    let curve = optimal_reserve(
                        dist,
                        cfg.oracle_samples,
                        1,
                        derive_seed(cfg.seed, ORACLE_SALT),
                    )?;
                    slot.insert(curve.best_reserve);
                }
            }
        }
        // surface schedule problems before any session starts
        for i in 0..n {
            inputs.environment(cfg, i)?;
        }
        Ok(inputs)
    }

    fn matched_human(&self, cfg: &ExperimentConfig, i: usize) -> Option<&SessionTranscript> {
        if !cfg.match_human_environments {
            return None;
        }
        self.humans
            .as_ref()
            .and_then(|h| h.get(i))
            .map(|t| &t.transcript)
    }

    pub fn human(&self, i: usize) -> Option<&SessionTranscript> {
        self.humans
            .as_ref()
            .and_then(|h| h.get(i))
            .map(|t| &t.transcript)
    }

    /// Auction valuation distribution for profile index `i`.
    pub fn distribution(&self, cfg: &ExperimentConfig, i: usize) -> ValuationDistribution {
        if let Some(d) = self
            .matched_human(cfg, i)
            .and_then(|h| h.header.distribution)
        {
            return d;
        }
        let cube_root = (cfg.cube_root_fraction * cfg.num_agents as f64).round() as usize;
        if i < cube_root {
            ValuationDistribution::CubeRoot
        } else {
            ValuationDistribution::Cube
        }
    }

    pub fn environment(&self, cfg: &ExperimentConfig, i: usize) -> Result<SessionEnv> {
        let seed = environment_seed(cfg.seed, i);
        let rounds = cfg.rounds();
        let schedule_file = cfg
            .schedule_dir
            .as_ref()
            .map(|d| cfg.resolve(d).join(format!("agent_{i:02}.jsonl")));
        if let Some(f) = &schedule_file {
            if !f.is_file() {
                return Err(CliError::Config(format!(
                    "missing schedule {}",
                    f.display()
                )));
            }
        }
        let bad = |e: econ_audit::auction::SimError| CliError::Config(format!("profile {i}: {e}"));
        match cfg.task {
            Task::Auction => {
                let mut env = AuctionSessionConfig::new(self.distribution(cfg, i), seed);
                env.total_rounds = rounds;
                if let Some(f) = &schedule_file {
                    env.bidder_schedule = Some(read_jsonl(f)?);
                } else if let Some(h) = self.matched_human(cfg, i) {
                    env.bidder_schedule = Some(
                        h.rounds
                            .iter()
                            .map(|r| match &r.outcome {
                                Outcome::Auction {
                                    num_bidders,
                                    valuations,
                                    ..
                                } => Ok(AuctionScheduleEntry {
                                    round: r.round,
                                    num_bidders: *num_bidders,
                                    valuations: valuations.clone(),
                                }),
                                Outcome::Newsvendor { .. } => {
                                    Err(CliError::Config("task mismatch".into()))
                                }
                            })
                            .collect::<Result<_>>()?,
                    );
                }
                env.validate().map_err(bad)?;
                Ok(SessionEnv::Auction(env))
            }
            Task::Newsvendor => {
                let entries: Vec<NewsvendorScheduleEntry> = if let Some(f) = &schedule_file {
                    read_jsonl(f)?
                } else if let Some(h) = self.matched_human(cfg, i) {
                    h.rounds
                        .iter()
                        .filter_map(|r| match r.outcome {
                            Outcome::Newsvendor {
                                price,
                                cost,
                                demand,
                                ..
                            } => Some(NewsvendorScheduleEntry {
                                round: r.round,
                                price,
                                cost,
                                demand: Some(demand),
                            }),
                            Outcome::Auction { .. } => None,
                        })
                        .collect()
                } else if let Some(pc) = &self.price_cost {
                    pc.clone()
                } else {
                    default_price_cost_schedule(rounds)
                        .into_iter()
                        .enumerate()
                        .map(|(k, pc)| NewsvendorScheduleEntry {
                            round: k as u32 + 1,
                            price: pc.price,
                            cost: pc.cost,
                            demand: None,
                        })
                        .collect()
                };
                let env = NewsvendorSessionConfig::from_entries(&entries, seed).map_err(bad)?;
                if env.total_rounds != rounds {
                    return Err(CliError::Config(format!(
                        "profile {i}: schedule has {} rounds, config has {rounds}",
                        env.total_rounds
                    )));
                }
                Ok(SessionEnv::Newsvendor(env))
            }
        }
    }

    pub fn fingerprint(&self, cfg: &ExperimentConfig) -> Fingerprint {
        let human_traces = self
            .humans
            .iter()
            .flatten()
            .map(|t| {
                let mut h = Fnv64::new();
                h.write(&std::fs::read(&t.path).unwrap_or_default());
                let name = t
                    .path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (name, format!("{:016x}", h.finish()))
            })
            .collect();
        Fingerprint {
            seed: cfg.seed,
            environment_seeds: (0..cfg.num_agents)
                .map(|i| environment_seed(cfg.seed, i))
                .collect(),
            templates: self.templates.fingerprint(),
            human_traces,
            oracle_reserves: self
                .oracle_reserves
                .iter()
                .map(|(d, r)| (d.as_str().to_string(), *r))
                .collect(),
        }
    }

    fn build_agent(
        &self,
        cfg: &ExperimentConfig,
        agent: &AgentSpec,
        spec: &InterventionSpec,
        i: usize,
    ) -> Result<AgentHandle> {
        let setting = match cfg.task {
            Task::Auction => TaskSetting {
                distribution: Some(self.distribution(cfg, i)),
                total_rounds: cfg.rounds(),
                ..TaskSetting::auction(self.distribution(cfg, i))
            },
            Task::Newsvendor => TaskSetting {
                total_rounds: cfg.rounds(),
                ..TaskSetting::newsvendor()
            },
        };
        let split = if spec.level == Level::Imitation {
            let human = self
                .human(i)
                .ok_or_else(|| CliError::Config(format!("no human trace for profile {i}")))?;
            Some(split_trace_for_imitation(human, spec.context_rounds)?)
        } else {
            None
        };
        let base = match &agent.kind {
            AgentKind::Oracle => match cfg.task {
                Task::Auction => AgentHandle::oracle_with_reserve(
                    self.oracle_reserves[&self.distribution(cfg, i)],
                ),
                Task::Newsvendor => AgentHandle::oracle_newsvendor(),
            },
            AgentKind::Constant { value } => AgentHandle::Constant(*value),
            AgentKind::DemandChasing => AgentHandle::DemandChasing,
            AgentKind::Replay { .. } => AgentHandle::Replay(self.replay[&agent.name][i].clone()),
            AgentKind::Remote(r) => {
                let mut client =
                    RemoteClient::new(r.clone()).map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(l) = &self.limiter {
                    client = client.with_limiter(Arc::clone(l));
                }
                if let Some(b) = &self.budget {
                    client = client.with_budget(Arc::clone(b));
                }
                let mut remote = RemoteAgent::new(client, *spec, self.profiles[i].clone(), setting);
                if let Some(s) = &split {
                    remote = remote.with_imitation(s.clone());
                }
                AgentHandle::Remote(Box::new(remote))
            }
        };
        Ok(match split {
            Some(s) => AgentHandle::WithContext {
                context: s.context_actions(),
                inner: Box::new(base),
            },
            None => base,
        })
    }

    pub fn header(&self, cfg: &ExperimentConfig, entry: &SessionEntry) -> TranscriptHeader {
        let i = entry.profile_index;
        let mut h = TranscriptHeader::new(
            format!(
                "{}-{}-r{}-{:02}",
                entry.agent, entry.condition, entry.replication, i
            ),
            cfg.task,
            environment_seed(cfg.seed, i),
            cfg.rounds(),
        );
        h.config_hash = cfg.hash();
        h.profile_index = Some(i);
        h.source = format!("{}:{}", entry.agent, entry.condition);
        if cfg.task == Task::Auction {
            h.distribution = Some(self.distribution(cfg, i));
        }
        let agent = cfg.agents.iter().find(|a| a.name == entry.agent);
        h.meta.insert("agent".into(), entry.agent.clone().into());
        h.meta
            .insert("condition".into(), entry.condition.clone().into());
        h.meta
            .insert("replication".into(), entry.replication.into());
        if let Some(AgentKind::Remote(r)) = agent.map(|a| &a.kind) {
            h.meta.insert("model".into(), r.model.clone().into());
            h.meta.insert("temperature".into(), r.temperature.into());
        }
        h
    }
}

#[derive(Debug, Clone)]
pub enum SessionEnv {
    Auction(AuctionSessionConfig),
    Newsvendor(NewsvendorSessionConfig),
}

/// Every session of the experiment, in a fixed order.
pub fn plan_sessions(cfg: &ExperimentConfig) -> Result<Vec<SessionEntry>> {
    let specs = cfg.specs()?;
    let mut out = Vec::new();
    for agent in &cfg.agents {
        for spec in &specs {
            let cond = spec.label();
            for rep in 1..=cfg.replications {
                for i in 0..cfg.num_agents {
                    out.push(SessionEntry {
                        id: format!("{}/{cond}/rep{rep}/agent_{i:02}", agent.name),
                        path: format!("sessions/{}/{cond}/rep{rep}/agent_{i:02}.jsonl", agent.name),
                        agent: agent.name.clone(),
                        condition: cond.clone(),
                        replication: rep,
                        profile_index: i,
                        status: SessionStatus::Pending,
                        rounds_done: 0,
                        error: None,
                        protocol_error: false,
                        finished_unix: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Starts a fresh run in `out_dir` (the config's output directory when
/// `None`). Refuses to overwrite an existing manifest.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let out = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_path());
    if out.join(MANIFEST_FILE).exists() {
        return Err(CliError::Config(format!(
            "{} already holds a run; use resume",
            out.display()
        )));
    }
    let inputs = Inputs::prepare(cfg)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(out.display().to_string(), e))?;
    let mut manifest = RunManifest::new(cfg.hash(), inputs.fingerprint(cfg), plan_sessions(cfg)?);
    manifest.save(&out)?;
    execute(cfg, &inputs, &out, manifest, opts)
}

/// Continues a run: completed sessions are left untouched, pending and
/// failed ones continue from their persisted prefix.
pub fn resume_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let out = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_path());
    let manifest = RunManifest::load(&out)?;
    if manifest.config_hash != cfg.hash() {
        return Err(CliError::Config(format!(
            "config hash {} does not match the run's {}",
            cfg.hash(),
            manifest.config_hash
        )));
    }
    let inputs = Inputs::prepare(cfg)?;
    let fp = inputs.fingerprint(cfg);
    if fp.human_traces != manifest.fingerprint.human_traces
        || fp.templates != manifest.fingerprint.templates
        || fp.oracle_reserves != manifest.fingerprint.oracle_reserves
    {
        return Err(CliError::Config(
            "inputs changed since the run started".into(),
        ));
    }
    execute(cfg, &inputs, &out, manifest, opts)
}

struct Halt {
    remaining: Option<AtomicI64>,
    stopped: AtomicBool,
}

impl Halt {
    /// Counts one round; true once the limit is reached.
    fn tick(&self) -> bool {
        match &self.remaining {
            Some(r) => {
                if r.fetch_sub(1, Ordering::SeqCst) <= 1 {
                    self.stopped.store(true, Ordering::SeqCst);
                }
                self.stopped.load(Ordering::SeqCst)
            }
            None => false,
        }
    }
}

enum SessionResult {
    Complete(u32),
    Failed {
        rounds: u32,
        error: String,
        protocol: bool,
    },
    Halted,
}

fn execute(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    out: &Path,
    manifest: RunManifest,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let jobs: Vec<usize> = manifest
        .sessions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.status != SessionStatus::Complete)
        .map(|(k, _)| k)
        .collect();
    let halt = Halt {
        remaining: opts.halt_after_rounds.map(|n| AtomicI64::new(n as i64)),
        stopped: AtomicBool::new(false),
    };
    let workers = opts
        .workers
        .unwrap_or(cfg.workers)
        .max(1)
        .min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let manifest = Mutex::new(manifest);
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if halt.stopped.load(Ordering::SeqCst) || first_error.lock().unwrap().is_some() {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = jobs.get(k) else { break };
                let entry = manifest.lock().unwrap().sessions[idx].clone();
                let result = run_session(cfg, inputs, out, &entry, &halt);
                let mut m = manifest.lock().unwrap();
                let e = &mut m.sessions[idx];
                match result {
                    Ok(SessionResult::Complete(rounds)) => {
                        e.status = SessionStatus::Complete;
                        e.rounds_done = rounds;
                        e.error = None;
                        e.protocol_error = false;
                        e.finished_unix = Some(crate::manifest::now_unix());
                    }
                    Ok(SessionResult::Failed {
                        rounds,
                        error,
                        protocol,
                    }) => {
                        e.status = SessionStatus::Failed;
                        e.rounds_done = rounds;
                        e.error = Some(error);
                        e.protocol_error = protocol;
                    }
                    Ok(SessionResult::Halted) => {}
                    Err(err) => {
                        first_error.lock().unwrap().get_or_insert(err);
                        break;
                    }
                }
                if let Err(err) = m.save(out) {
                    first_error.lock().unwrap().get_or_insert(err);
                    break;
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    Ok(RunSummary {
        manifest: manifest.into_inner().unwrap(),
        halted: halt.stopped.load(Ordering::SeqCst),
    })
}

fn run_session(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    out: &Path,
    entry: &SessionEntry,
    halt: &Halt,
) -> Result<SessionResult> {
    let path: PathBuf = out.join(&entry.path);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(parent.display().to_string(), e))?;
    }
    let header = inputs.header(cfg, entry);
    let existing = match SessionTranscript::read_from(&path) {
        Ok(t) if t.header == header && t.rounds.len() <= cfg.rounds() as usize => t.rounds,
        _ => Vec::new(),
    };
    let mut writer = TranscriptWriter::open(&path, &header, &existing)?;
    let mut transcript = SessionTranscript::new(header);
    transcript.rounds = existing;
    let agent_spec = cfg
        .agents
        .iter()
        .find(|a| a.name == entry.agent)
        .ok_or_else(|| CliError::Config(format!("unknown agent '{}'", entry.agent)))?;
    let spec = InterventionSpec::parse(&entry.condition, cfg.task)?;
    let mut agent = inputs.build_agent(cfg, agent_spec, &spec, entry.profile_index)?;
    let sink = |r: &econ_audit::transcript::RoundRecord| -> std::result::Result<(), String> {
        writer.append(r).map_err(|e| e.to_string())?;
        if halt.tick() {
            Err(HALTED.to_string())
        } else {
            Ok(())
        }
    };
    match inputs.environment(cfg, entry.profile_index)? {
        SessionEnv::Auction(env) => {
            continue_auction_session(&env, &mut agent, &mut transcript, sink)?
        }
        SessionEnv::Newsvendor(env) => {
            continue_newsvendor_session(&env, &mut agent, &mut transcript, sink)?
        }
    }
    let rounds = transcript.rounds.len() as u32;
    Ok(match transcript.failure {
        Some(msg) if msg.ends_with(HALTED) => SessionResult::Halted,
        Some(error) => SessionResult::Failed {
            rounds,
            error,
            protocol: transcript.protocol_failure,
        },
        None => SessionResult::Complete(rounds),
    })
}
