//! Experiment configuration, loaded from a single TOML file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use econ_audit::agents::{RemoteModelConfig, SUPPORTED_TEMPERATURES};
use econ_audit::interventions::{InterventionSpec, Level};
use econ_audit::metrics::{CiMethod, RoundWindow};
use econ_audit::transcript::{Fnv64, Task};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn default_num_agents() -> usize {
    40
}
fn default_replications() -> u32 {
    3
}
fn default_workers() -> usize {
    4
}
fn default_cube_root_fraction() -> f64 {
    0.5
}
fn default_oracle_samples() -> usize {
    200_000
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Oracle,
    Constant {
        value: i64,
    },
    DemandChasing,
    /// One trace file per profile index, in file-name order.
    Replay {
        trace_dir: PathBuf,
    },
    Remote(RemoteModelConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    /// Short label used in output paths and report sources.
    pub name: String,
    #[serde(flatten)]
    pub kind: AgentKind,
}

impl AgentSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self.kind, AgentKind::Remote(_))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteLimits {
    /// Global cap across all workers.
    pub requests_per_minute: Option<f64>,
    /// Hard request budget for the whole experiment.
    pub max_requests: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Rounds used for every non-imitation metric.
    #[serde(default = "default_window")]
    pub window: String,
    /// Rounds used for imitation conditions (and their human comparison).
    /// Defaults to the rounds after the imitation context.
    pub imitation_window: Option<String>,
    #[serde(default = "default_bin_width")]
    pub entropy_bin_width: u32,
    #[serde(default)]
    pub ci: CiMethod,
    /// Replication whose sessions form the population statistics.
    #[serde(default = "default_replication")]
    pub replication: u32,
}

fn default_window() -> String {
    "all".into()
}
fn default_bin_width() -> u32 {
    1
}
fn default_replication() -> u32 {
    1
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window: default_window(),
            imitation_window: None,
            entropy_bin_width: default_bin_width(),
            ci: CiMethod::default(),
            replication: default_replication(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default = "default_num_agents")]
    pub num_agents: usize,
    /// Rounds per session; the task default when omitted.
    pub rounds: Option<u32>,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Condition labels such as `intrinsicality`, `instruction-seeking`,
    /// `imitation-direct`.
    pub conditions: Vec<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Auction: share of profile indices facing the CubeRoot distribution
    /// (the first ones); the rest face Cube.
    #[serde(default = "default_cube_root_fraction")]
    pub cube_root_fraction: f64,
    /// Monte-Carlo samples for the auction oracle's reserve.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    /// Line-delimited profiles; synthetic ones from `seed` when absent.
    pub profiles: Option<PathBuf>,
    /// Human traces, one file per profile index in file-name order.
    pub human_trace_dir: Option<PathBuf>,
    /// When human traces are present, agents face the same environment as
    /// the human with their profile index.
    #[serde(default = "default_true")]
    pub match_human_environments: bool,
    /// Directory of per-index schedules `agent_XX.jsonl`; overrides both
    /// sampling and human matching.
    pub schedule_dir: Option<PathBuf>,
    /// Newsvendor: line-delimited `{price, cost}` per round.
    pub price_cost_schedule: Option<PathBuf>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub remote: RemoteLimits,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Directory the config was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn rounds(&self) -> u32 {
        self.rounds.unwrap_or_else(|| self.task.default_rounds())
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn specs(&self) -> Result<Vec<InterventionSpec>> {
        self.conditions
            .iter()
            .map(|c| {
                InterventionSpec::parse(c, self.task).map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn needs_humans(&self) -> Result<bool> {
        Ok(self.specs()?.iter().any(|s| s.level == Level::Imitation))
    }

    pub fn window(&self) -> Result<RoundWindow> {
        self.analysis.window.parse().map_err(CliError::Config)
    }

    /// Analysis window for a condition.
    pub fn window_for(&self, spec: &InterventionSpec) -> Result<RoundWindow> {
        if spec.level != Level::Imitation {
            return self.window();
        }
        match &self.analysis.imitation_window {
            Some(w) => w.parse().map_err(CliError::Config),
            None => Ok(RoundWindow {
                first: spec.context_rounds + 1,
                last: self.rounds(),
            }),
        }
    }

    /// Checks everything that can be checked without running: value
    /// ranges, condition labels, agent definitions and referenced paths.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CliError::Config(m));
        if self.num_agents == 0 {
            return err("num_agents must be at least 1".into());
        }
        if self.replications == 0 {
            return err("replications must be at least 1".into());
        }
        if self.workers == 0 {
            return err("workers must be at least 1".into());
        }
        if self.rounds() == 0 {
            return err("rounds must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.cube_root_fraction) {
            return err(format!(
                "cube_root_fraction {} outside [0, 1]",
                self.cube_root_fraction
            ));
        }
        if self.conditions.is_empty() {
            return err("at least one condition is required".into());
        }
        let specs = self.specs()?;
        let labels: BTreeSet<String> = specs.iter().map(InterventionSpec::label).collect();
        if labels.len() != specs.len() {
            return err("duplicate conditions".into());
        }
        for s in &specs {
            if s.level == Level::Imitation && s.context_rounds >= self.rounds() {
                return err(format!(
                    "{}: {} context rounds leave nothing to predict in {} rounds",
                    s.label(),
                    s.context_rounds,
                    self.rounds()
                ));
            }
        }
        if self.agents.is_empty() {
            return err("at least one [[agents]] entry is required".into());
        }
        let mut names = BTreeSet::new();
        for a in &self.agents {
            if a.name.is_empty()
                || !a
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
            {
                return err(format!("agent name '{}' must be [A-Za-z0-9._-]+", a.name));
            }
            if !names.insert(a.name.as_str()) {
                return err(format!("duplicate agent name '{}'", a.name));
            }
            match &a.kind {
                AgentKind::DemandChasing if self.task == Task::Auction => {
                    return err(format!(
                        "agent '{}': demand_chasing is a newsvendor heuristic",
                        a.name
                    ));
                }
                AgentKind::Replay { trace_dir } => {
                    self.require_dir(trace_dir, "replay trace_dir")?
                }
                AgentKind::Remote(r) => {
                    r.validate()
                        .map_err(|m| CliError::Config(format!("agent '{}': {m}", a.name)))?;
                    if !SUPPORTED_TEMPERATURES.contains(&r.temperature) {
                        return err(format!(
                            "agent '{}': temperature {} not in {:?}",
                            a.name, r.temperature, SUPPORTED_TEMPERATURES
                        ));
                    }
                }
                _ => {}
            }
        }
        if self.task == Task::Auction
            && self.agents.iter().any(|a| a.kind == AgentKind::Oracle)
            && self.oracle_samples < 10_000
        {
            return err("oracle_samples must be at least 10000".into());
        }
        if let Some(rpm) = self.remote.requests_per_minute {
            if rpm.is_nan() || rpm <= 0.0 {
                return err("remote.requests_per_minute must be positive".into());
            }
        }
        if let Some(p) = &self.profiles {
            self.require_file(p, "profiles")?;
        }
        if let Some(p) = &self.price_cost_schedule {
            if self.task != Task::Newsvendor {
                return err("price_cost_schedule only applies to the newsvendor task".into());
            }
            self.require_file(p, "price_cost_schedule")?;
        }
        if let Some(d) = &self.schedule_dir {
            self.require_dir(d, "schedule_dir")?;
        }
        match &self.human_trace_dir {
            Some(d) => self.require_dir(d, "human_trace_dir")?,
            None if self.needs_humans()? => {
                return err("imitation conditions need human_trace_dir".into());
            }
            None => {}
        }
        self.window()?;
        for s in &specs {
            self.window_for(s)?;
        }
        if self.analysis.entropy_bin_width == 0 {
            return err("analysis.entropy_bin_width must be positive".into());
        }
        if self.analysis.replication == 0 || self.analysis.replication > self.replications {
            return err(format!(
                "analysis.replication {} outside 1..={}",
                self.analysis.replication, self.replications
            ));
        }
        Ok(())
    }

    fn require_file(&self, p: &Path, what: &str) -> Result<()> {
        let full = self.resolve(p);
        if full.is_file() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "{what}: {} is not a file",
                full.display()
            )))
        }
    }

    fn require_dir(&self, p: &Path, what: &str) -> Result<()> {
        let full = self.resolve(p);
        if full.is_dir() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "{what}: {} is not a directory",
                full.display()
            )))
        }
    }

    /// Hash of every setting that affects results. Output location and
    /// worker count are excluded so relocated or re-parallelised runs of
    /// the same experiment share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        let mut h = Fnv64::new();
        h.write(&json);
        format!("{:016x}", h.finish())
    }
}
