//! Loading externally supplied traces.
//!
//! A trace directory holds one file per participant; files are taken in
//! name order and the position becomes the profile index. Two formats are
//! accepted:
//!
//! * `.jsonl`: native transcripts (header line plus one record per round).
//! * `.csv`: one row per round with a header row. Columns, case-insensitive:
//!   - `round` (required)
//!   - `action`, or one of `reserve`, `reserve_price`, `order`, `quantity`
//!   - auction: `num_bidders`, `valuations` (integers separated by `;` or
//!     spaces), optional `distribution` (`cube_root` / `cube`)
//!   - newsvendor: `price`, `cost`, `demand`
//!   - optional `profit`; when present it must equal the recomputed profit.
//!
//!   Sale, profit, optimum and bias are recomputed from these fields.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use econ_audit::auction::{resolve_auction_round, ValuationDistribution};
use econ_audit::newsvendor::{optimal_quantity, resolve_newsvendor_round};
use econ_audit::transcript::{
    ActionFlags, FormatError, Outcome, RoundRecord, SessionTranscript, Task, TranscriptHeader,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub path: PathBuf,
    pub transcript: SessionTranscript,
}

/// Trace files in `dir`, sorted by file name.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::io(dir.display().to_string(), e))?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && (ext == "jsonl" || ext == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every trace in `dir`, checking the task and assigning profile
/// indices by position.
pub fn load_traces(dir: &Path, task: Task) -> Result<Vec<LoadedTrace>> {
    let mut out = Vec::new();
    for (i, path) in trace_files(dir)?.into_iter().enumerate() {
        let mut transcript = if path.extension().is_some_and(|e| e == "csv") {
            read_csv_trace(&path, task)?
        } else {
            SessionTranscript::read_from(&path)?
        };
        if transcript.header.task != task {
            return Err(CliError::Config(format!(
                "{}: {} trace where {} was expected",
                path.display(),
                transcript.header.task.as_str(),
                task.as_str()
            )));
        }
        if transcript.rounds.is_empty() {
            return Err(CliError::Config(format!("{}: no rounds", path.display())));
        }
        transcript.header.profile_index = Some(i);
        out.push(LoadedTrace { path, transcript });
    }
    Ok(out)
}

fn schema_err(path: &Path, message: String) -> CliError {
    CliError::Format(FormatError::Schema {
        path: path.display().to_string(),
        message,
    })
}

const ACTION_ALIASES: [&str; 5] = ["action", "reserve", "reserve_price", "order", "quantity"];

pub fn read_csv_trace(path: &Path, task: Task) -> Result<SessionTranscript> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_ascii_lowercase(), i))
        .collect();
    let col = |name: &str| headers.get(name).copied();
    let need =
        |name: &str| col(name).ok_or_else(|| schema_err(path, format!("missing column '{name}'")));
    let round_col = need("round")?;
    let action_col = ACTION_ALIASES.iter().find_map(|a| col(a)).ok_or_else(|| {
        schema_err(
            path,
            format!("missing action column (one of {ACTION_ALIASES:?})"),
        )
    })?;
    let profit_col = col("profit");
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace")
        .to_string();
    let mut header = TranscriptHeader::new(id, task, 0, 0);
    header.source = "human".into();
    let mut rounds = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |c: usize| row.get(c).unwrap_or("");
        let int = |c: usize, what: &str| -> Result<i64> {
            let s = field(c);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0)
                .map(|v| v as i64)
                .ok_or_else(|| {
                    schema_err(path, format!("line {line}: {what} '{s}' is not an integer"))
                })
        };
        let real = |c: usize, what: &str| -> Result<f64> {
            let s = field(c);
            s.parse::<f64>()
                .map_err(|_| schema_err(path, format!("line {line}: {what} '{s}' is not a number")))
        };
        let round = int(round_col, "round")?;
        if round != rounds.len() as i64 + 1 {
            return Err(schema_err(
                path,
                format!(
                    "line {line}: expected round {}, found {round}",
                    rounds.len() + 1
                ),
            ));
        }
        let (lo, hi) = task.legal_range();
        let action = int(action_col, "action")?;
        if !(lo..=hi).contains(&action) {
            return Err(schema_err(
                path,
                format!("line {line}: action {action} outside [{lo}, {hi}]"),
            ));
        }
        let action = action as u32;
        let (profit, outcome) = match task {
            Task::Auction => {
                if let Some(c) = col("distribution") {
                    let d: ValuationDistribution = field(c)
                        .parse()
                        .map_err(|m: String| schema_err(path, format!("line {line}: {m}")))?;
                    header.distribution = Some(d);
                }
                let n = int(need("num_bidders")?, "num_bidders")? as u32;
                let mut vals = Vec::new();
                for tok in field(need("valuations")?).split(|c: char| c == ';' || c.is_whitespace())
                {
                    if tok.is_empty() {
                        continue;
                    }
                    vals.push(tok.parse::<u32>().map_err(|_| {
                        schema_err(path, format!("line {line}: bad valuation '{tok}'"))
                    })?);
                }
                vals.sort_unstable_by(|a, b| b.cmp(a));
                if vals.len() != n as usize {
                    return Err(schema_err(
                        path,
                        format!("line {line}: {} valuations for {n} bidders", vals.len()),
                    ));
                }
                let res = resolve_auction_round(action, &vals)
                    .map_err(|e| schema_err(path, format!("line {line}: {e}")))?;
                (
                    f64::from(res.profit),
                    Outcome::Auction {
                        num_bidders: n,
                        valuations: vals,
                        sale: res.sale,
                    },
                )
            }
            Task::Newsvendor => {
                let price = real(need("price")?, "price")?;
                let cost = real(need("cost")?, "cost")?;
                let demand = int(need("demand")?, "demand")?;
                let demand = u32::try_from(demand)
                    .map_err(|_| schema_err(path, format!("line {line}: negative demand")))?;
                let bad = |e: econ_audit::auction::SimError| {
                    schema_err(path, format!("line {line}: {e}"))
                };
                let profit = resolve_newsvendor_round(action, demand, price, cost).map_err(bad)?;
                let q_star = optimal_quantity(price, cost).map_err(bad)?;
                (
                    profit,
                    Outcome::Newsvendor {
                        price,
                        cost,
                        demand,
                        q_star,
                        bias: i64::from(action) - i64::from(q_star),
                    },
                )
            }
        };
        if let Some(c) = profit_col {
            let given = real(c, "profit")?;
            if (given - profit).abs() > 1e-9 {
                return Err(schema_err(
                    path,
                    format!("line {line}: profit {given} but the rules give {profit}"),
                ));
            }
        }
        rounds.push(RoundRecord {
            round: round as u32,
            action,
            profit,
            outcome,
            flags: ActionFlags::default(),
        });
    }
    header.total_rounds = rounds.len() as u32;
    Ok(SessionTranscript {
        header,
        rounds,
        failure: None,
        protocol_failure: false,
    })
}
