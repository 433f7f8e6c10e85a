//! Round records, session transcripts and the line-delimited JSON format
//! used for transcripts, schedules, profiles and human traces.
//!
//! A transcript file is one header object followed by one [`RoundRecord`]
//! per line. Rounds are appended as they complete, so an interrupted run
//! leaves a valid prefix behind.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::ValuationDistribution;

pub const TRANSCRIPT_SCHEMA: &str = "econ-audit/transcript";
pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Auction,
    Newsvendor,
}

impl Task {
    /// Inclusive legal action range.
    pub fn legal_range(self) -> (i64, i64) {
        match self {
            Task::Auction => (0, 100),
            Task::Newsvendor => (0, 300),
        }
    }

    pub fn default_rounds(self) -> u32 {
        match self {
            Task::Auction => 60,
            Task::Newsvendor => 30,
        }
    }

    /// Default number of human rounds shown before imitation starts.
    pub fn default_context_rounds(self) -> u32 {
        match self {
            Task::Auction => 30,
            Task::Newsvendor => 15,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Auction => "auction",
            Task::Newsvendor => "newsvendor",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auction" => Ok(Task::Auction),
            "newsvendor" => Ok(Task::Newsvendor),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

/// Marks left on a round when the stored action differs from what the agent
/// literally produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionFlags {
    #[serde(default, skip_serializing_if = "is_false")]
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub format_violation: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub reprompted: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub duplicate_round: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ActionFlags {
    pub fn is_clean(&self) -> bool {
        *self == ActionFlags::default()
    }

    pub fn merge(self, other: ActionFlags) -> ActionFlags {
        ActionFlags {
            clamped: self.clamped || other.clamped,
            format_violation: self.format_violation || other.format_violation,
            reprompted: self.reprompted || other.reprompted,
            duplicate_round: self.duplicate_round || other.duplicate_round,
        }
    }
}

/// Environment realization and task-specific results for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Outcome {
    Auction {
        num_bidders: u32,
        /// Bidder valuations, sorted descending.
        valuations: Vec<u32>,
        sale: bool,
    },
    Newsvendor {
        price: f64,
        cost: f64,
        demand: u32,
        q_star: u32,
        bias: i64,
    },
}

/// One decision round: what the agent chose, what the environment did and
/// what it earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub action: u32,
    pub profit: f64,
    #[serde(flatten)]
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "ActionFlags::is_clean")]
    pub flags: ActionFlags,
}

impl RoundRecord {
    pub fn task(&self) -> Task {
        match self.outcome {
            Outcome::Auction { .. } => Task::Auction,
            Outcome::Newsvendor { .. } => Task::Newsvendor,
        }
    }

    pub fn sale(&self) -> Option<bool> {
        match self.outcome {
            Outcome::Auction { sale, .. } => Some(sale),
            Outcome::Newsvendor { .. } => None,
        }
    }

    /// Second-highest valuation, 0 with a single bidder.
    pub fn second_highest(&self) -> Option<u32> {
        match &self.outcome {
            Outcome::Auction { valuations, .. } => Some(valuations.get(1).copied().unwrap_or(0)),
            Outcome::Newsvendor { .. } => None,
        }
    }

    pub fn num_bidders(&self) -> Option<u32> {
        match self.outcome {
            Outcome::Auction { num_bidders, .. } => Some(num_bidders),
            Outcome::Newsvendor { .. } => None,
        }
    }

    pub fn demand(&self) -> Option<u32> {
        match self.outcome {
            Outcome::Newsvendor { demand, .. } => Some(demand),
            Outcome::Auction { .. } => None,
        }
    }

    pub fn bias(&self) -> Option<i64> {
        match self.outcome {
            Outcome::Newsvendor { bias, .. } => Some(bias),
            Outcome::Auction { .. } => None,
        }
    }
}

/// First line of every transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub schema: String,
    pub version: u32,
    pub agent_id: String,
    pub task: Task,
    pub seed: u64,
    pub config_hash: String,
    pub total_rounds: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<ValuationDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_index: Option<usize>,
    /// Label of the population this session belongs to (model + condition,
    /// or "human").
    pub source: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub synthetic: bool,
    /// Free-form run metadata (e.g. how imitation context was rendered).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl TranscriptHeader {
    pub fn new(agent_id: impl Into<String>, task: Task, seed: u64, total_rounds: u32) -> Self {
        TranscriptHeader {
            schema: TRANSCRIPT_SCHEMA.to_string(),
            version: TRANSCRIPT_VERSION,
            agent_id: agent_id.into(),
            task,
            seed,
            config_hash: String::new(),
            total_rounds,
            distribution: None,
            profile_index: None,
            source: String::new(),
            synthetic: false,
            meta: serde_json::Map::new(),
        }
    }
}

/// Ordered rounds of one full game plus identity metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTranscript {
    pub header: TranscriptHeader,
    pub rounds: Vec<RoundRecord>,
    /// Set when the session stopped early; `rounds` keeps the completed prefix.
    pub failure: Option<String>,
    /// Whether `failure` came from the remote endpoint misbehaving (bad
    /// status or malformed body) rather than transport or local errors.
    pub protocol_failure: bool,
}

impl SessionTranscript {
    pub fn new(header: TranscriptHeader) -> Self {
        SessionTranscript {
            header,
            rounds: Vec::new(),
            failure: None,
            protocol_failure: false,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.rounds.len() == self.header.total_rounds as usize
    }

    pub fn actions(&self) -> Vec<u32> {
        self.rounds.iter().map(|r| r.action).collect()
    }

    pub fn profits(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.profit).collect()
    }

    pub fn total_profit(&self) -> f64 {
        self.rounds.iter().map(|r| r.profit).sum()
    }

    /// Rounds whose index lies in `[first, last]`.
    pub fn window(&self, first: u32, last: u32) -> impl Iterator<Item = &RoundRecord> {
        self.rounds
            .iter()
            .filter(move |r| r.round >= first && r.round <= last)
    }

    /// Hash of the environment realization (bidders, valuations, prices,
    /// costs, demands), independent of the agent's actions.
    pub fn environment_hash(&self) -> String {
        let mut h = Fnv64::new();
        for r in &self.rounds {
            h.write(&r.round.to_le_bytes());
            match &r.outcome {
                Outcome::Auction {
                    num_bidders,
                    valuations,
                    ..
                } => {
                    h.write(&num_bidders.to_le_bytes());
                    for v in valuations {
                        h.write(&v.to_le_bytes());
                    }
                }
                Outcome::Newsvendor {
                    price,
                    cost,
                    demand,
                    ..
                } => {
                    h.write(&price.to_bits().to_le_bytes());
                    h.write(&cost.to_bits().to_le_bytes());
                    h.write(&demand.to_le_bytes());
                }
            }
        }
        format!("{:016x}", h.finish())
    }

    pub fn write_to(&self, path: &Path) -> Result<(), FormatError> {
        let io_err = |source| FormatError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        write_json_line(&mut w, &self.header).map_err(io_err)?;
        for r in &self.rounds {
            write_json_line(&mut w, r).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    /// Reads a transcript. A trailing line without a newline that fails to
    /// parse is treated as an interrupted append and dropped.
    pub fn read_from(path: &Path) -> Result<Self, FormatError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: p.clone(),
            source,
        })?;
        let complete_tail = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        let mut iter = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = iter.next().ok_or_else(|| FormatError::Schema {
            path: p.clone(),
            message: "empty transcript".into(),
        })?;
        let header: TranscriptHeader =
            serde_json::from_str(first).map_err(|e| FormatError::Parse {
                path: p.clone(),
                line: 1,
                message: e.to_string(),
            })?;
        if header.schema != TRANSCRIPT_SCHEMA {
            return Err(FormatError::Schema {
                path: p,
                message: format!("unexpected schema '{}'", header.schema),
            });
        }
        if header.version != TRANSCRIPT_VERSION {
            return Err(FormatError::Schema {
                path: p,
                message: format!("unsupported version {}", header.version),
            });
        }
        let mut rounds = Vec::new();
        for (i, line) in iter {
            match serde_json::from_str::<RoundRecord>(line) {
                Ok(r) => rounds.push(r),
                Err(_) if i + 1 == lines.len() && !complete_tail => break,
                Err(e) => {
                    return Err(FormatError::Parse {
                        path: p,
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(SessionTranscript {
            header,
            rounds,
            failure: None,
            protocol_failure: false,
        })
    }
}

/// Appends rounds to a transcript file as they complete.
pub struct TranscriptWriter {
    out: BufWriter<File>,
    path: String,
}

impl TranscriptWriter {
    /// Creates `path` with `header`, or reopens it for appending when it
    /// already holds `existing_rounds` valid rounds (the file is rewritten
    /// to exactly that prefix first, dropping any torn line).
    pub fn open(
        path: &Path,
        header: &TranscriptHeader,
        existing_rounds: &[RoundRecord],
    ) -> Result<Self, FormatError> {
        let p = path.display().to_string();
        let io_err = |source| FormatError::Io {
            path: p.clone(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut out = BufWriter::new(file);
        write_json_line(&mut out, header).map_err(io_err)?;
        for r in existing_rounds {
            write_json_line(&mut out, r).map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(TranscriptWriter { out, path: p })
    }

    pub fn append(&mut self, record: &RoundRecord) -> Result<(), FormatError> {
        write_json_line(&mut self.out, record)
            .and_then(|_| self.out.flush())
            .map_err(|source| FormatError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

/// Reads one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| FormatError::Io {
        path: p.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FormatError::Io {
            path: p.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            path: p.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), FormatError> {
    let io_err = |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        write_json_line(&mut w, item).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Appends a single JSON line to `path`, creating it if needed.
pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<(), FormatError> {
    let io_err = |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    write_json_line(&mut f, item).map_err(io_err)
}

/// 64-bit FNV-1a.
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}
