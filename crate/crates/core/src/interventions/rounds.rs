use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use thiserror::Error;

use super::PromptError;
use crate::agents::{validate_action_text, RoundParams, ValidatedAction};
use crate::transcript::{RoundRecord, SessionTranscript};

/// Parsed `round <k>: <value>` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundLines {
    pub values: BTreeMap<u32, ValidatedAction>,
    /// Rounds that appeared more than once; the last occurrence was kept.
    pub duplicates: BTreeSet<u32>,
    /// Non-blank lines that did not yield an expected round.
    pub junk_lines: usize,
}

impl RoundLines {
    /// `self` with every round present in `newer` replaced by `newer`'s value.
    pub fn overlay(mut self, newer: RoundLines) -> RoundLines {
        self.values.extend(newer.values);
        self.duplicates.extend(newer.duplicates);
        self.junk_lines += newer.junk_lines;
        self
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RoundLinesError {
    #[error("incomplete response: missing rounds {}", join(missing))]
    Incomplete {
        missing: Vec<u32>,
        partial: RoundLines,
    },
    #[error("expected round range is empty")]
    EmptyRange,
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
}

/// Parses a batch response covering `expected` rounds.
///
/// Accepts `round <k>: <value>` lines case-insensitively, ignores blank
/// lines, and validates each value like a single-integer response. A round
/// counts as present only when its value contains an integer.
pub fn parse_round_lines(
    text: &str,
    expected: RangeInclusive<u32>,
    legal: (i64, i64),
) -> Result<RoundLines, RoundLinesError> {
    if expected.is_empty() {
        return Err(RoundLinesError::EmptyRange);
    }
    let mut out = RoundLines::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = split_round_line(line)
            .filter(|(round, _)| expected.contains(round))
            .map(|(round, value)| (round, validate_action_text(value, legal)))
            .filter(|(_, v)| v.has_number());
        match parsed {
            Some((round, v)) => {
                if out.values.insert(round, v).is_some() {
                    out.duplicates.insert(round);
                }
            }
            None => out.junk_lines += 1,
        }
    }
    let missing: Vec<u32> = expected.filter(|r| !out.values.contains_key(r)).collect();
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(RoundLinesError::Incomplete {
            missing,
            partial: out,
        })
    }
}

fn split_round_line(line: &str) -> Option<(u32, &str)> {
    let head = line.get(..5)?;
    if !head.eq_ignore_ascii_case("round") {
        return None;
    }
    let rest = line[5..].trim_start();
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let round = rest[..digits].parse().ok()?;
    let value = rest[digits..].trim_start().strip_prefix(':')?;
    Some((round, value))
}

/// A round the model must predict, with the information it may see.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRound {
    pub round: u32,
    pub params: RoundParams,
}

/// Human context rounds plus the rounds left for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ImitationSplit {
    pub context: Vec<RoundRecord>,
    pub targets: Vec<TargetRound>,
}

impl ImitationSplit {
    pub fn target_range(&self) -> Option<RangeInclusive<u32>> {
        Some(self.targets.first()?.round..=self.targets.last()?.round)
    }

    /// Human actions for the context rounds, in order.
    pub fn context_actions(&self) -> Vec<u32> {
        self.context.iter().map(|r| r.action).collect()
    }
}

/// Splits a human trace into `context_rounds` shown rounds and the
/// remaining target rounds. Targets keep only bidder counts (auction) or
/// price and cost (newsvendor); valuations and demand stay hidden.
pub fn split_trace_for_imitation(
    trace: &SessionTranscript,
    context_rounds: u32,
) -> Result<ImitationSplit, PromptError> {
    if trace.rounds.len() <= context_rounds as usize {
        return Err(PromptError::TraceTooShort {
            len: trace.rounds.len(),
            context: context_rounds,
        });
    }
    let (context, rest) = trace.rounds.split_at(context_rounds as usize);
    let targets = rest
        .iter()
        .map(|r| TargetRound {
            round: r.round,
            params: RoundParams::from_record(r),
        })
        .collect();
    Ok(ImitationSplit {
        context: context.to_vec(),
        targets,
    })
}
