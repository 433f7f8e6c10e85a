//! Prompt template assets and strict `{placeholder}` rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::PromptError;
use crate::transcript::Fnv64;

/// A template name and the exact placeholder set its text must contain.
#[derive(Debug, Clone, Copy)]
pub struct TemplateSpec {
    pub name: &'static str,
    pub placeholders: &'static [&'static str],
    builtin: &'static str,
}

macro_rules! asset {
    ($name:literal, [$($p:literal),*]) => {
        TemplateSpec {
            name: $name,
            placeholders: &[$($p),*],
            builtin: include_str!(concat!("../../templates/", $name, ".txt")),
        }
    };
}

pub const TEMPLATE_SPECS: &[TemplateSpec] = &[
    asset!(
        "auction_instructions",
        ["sample_table", "sample_distribution"]
    ),
    asset!("auction_sample_table_cube_root", []),
    asset!("auction_sample_distribution_cube_root", []),
    asset!(
        "auction_intrinsicality_system",
        [
            "age",
            "gender",
            "race",
            "program",
            "experiment_instructions"
        ]
    ),
    asset!(
        "auction_intrinsicality_user",
        [
            "last_round_info",
            "history",
            "current_round",
            "current_num_bidders"
        ]
    ),
    asset!("auction_instruction_seeking", []),
    asset!("auction_instruction_averse", []),
    asset!(
        "auction_imitation_system",
        [
            "total_rounds",
            "experiment_instructions",
            "task",
            "first_target",
            "last_round"
        ]
    ),
    asset!(
        "auction_imitation_user",
        [
            "context_last",
            "first_auction_result_texts",
            "first_target",
            "last_round",
            "last_bid_information_texts"
        ]
    ),
    asset!("auction_task_direct", []),
    asset!("auction_task_context_aware", []),
    asset!("auction_task_theory_guided", []),
    asset!("newsvendor_intrinsicality_system", []),
    asset!("newsvendor_intrinsicality_user", ["round", "price", "cost"]),
    asset!("newsvendor_history", ["history"]),
    asset!("newsvendor_instruction_seeking", []),
    asset!("newsvendor_instruction_averse", []),
    asset!(
        "newsvendor_imitation_system",
        ["total_rounds", "task", "first_target", "last_round"]
    ),
    asset!(
        "newsvendor_imitation_user",
        [
            "context_last",
            "context_text",
            "first_target",
            "last_round",
            "future_demand_text"
        ]
    ),
    asset!("newsvendor_task_direct", []),
    asset!("newsvendor_task_context_aware", []),
    asset!("newsvendor_task_theory_guided", []),
];

/// A complete set of template texts, keyed by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    texts: BTreeMap<&'static str, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            texts: TEMPLATE_SPECS
                .iter()
                .map(|s| (s.name, normalize(s.builtin)))
                .collect(),
        }
    }

    /// Loads `<name>.txt` for every known template from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut texts = BTreeMap::new();
        for spec in TEMPLATE_SPECS {
            let path = dir.join(format!("{}.txt", spec.name));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PromptError::Asset(format!("{}: {e}", path.display())))?;
            texts.insert(spec.name, normalize(&text));
        }
        Ok(TemplateSet { texts })
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.texts
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::Asset(format!("unknown template '{name}'")))
    }

    pub fn render(&self, name: &str, values: &[(&str, String)]) -> Result<String, PromptError> {
        render(self.get(name)?, values)
    }

    /// Placeholder mismatches between each text and its declared set.
    pub fn lint(&self) -> Vec<LintIssue> {
        let mut issues = Vec::new();
        for spec in TEMPLATE_SPECS {
            let Some(text) = self.texts.get(spec.name) else {
                issues.push(LintIssue {
                    template: spec.name.to_string(),
                    message: "missing".into(),
                });
                continue;
            };
            let found = placeholders_in(text);
            let declared: BTreeSet<String> =
                spec.placeholders.iter().map(|s| s.to_string()).collect();
            for p in declared.difference(&found) {
                issues.push(LintIssue {
                    template: spec.name.to_string(),
                    message: format!("declared placeholder {{{p}}} does not appear"),
                });
            }
            for p in found.difference(&declared) {
                issues.push(LintIssue {
                    template: spec.name.to_string(),
                    message: format!("undeclared placeholder {{{p}}}"),
                });
            }
        }
        issues
    }

    /// Per-template content hashes, for run manifests.
    pub fn fingerprint(&self) -> BTreeMap<String, String> {
        self.texts
            .iter()
            .map(|(name, text)| {
                let mut h = Fnv64::new();
                h.write(text.as_bytes());
                (name.to_string(), format!("{:016x}", h.finish()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintIssue {
    pub template: String,
    pub message: String,
}

impl std::fmt::Display for LintIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.template, self.message)
    }
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n")
        .trim_end_matches('\n')
        .to_string()
}

fn placeholder_at(text: &str, open: usize) -> Option<(&str, usize)> {
    let rest = &text[open + 1..];
    let close = rest.find('}')?;
    let name = &rest[..close];
    let ok = !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_');
    ok.then_some((name, open + 1 + close + 1))
}

pub(crate) fn placeholders_in(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let open = i + off;
        match placeholder_at(text, open) {
            Some((name, end)) => {
                out.insert(name.to_string());
                i = end;
            }
            None => i = open + 1,
        }
    }
    out
}

/// Single-pass substitution. Every placeholder must have a nonempty value;
/// substituted values are not rescanned.
pub fn render(text: &str, values: &[(&str, String)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len() + 256);
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let open = i + off;
        out.push_str(&text[i..open]);
        match placeholder_at(text, open) {
            Some((name, end)) => {
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| v)
                    .ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?;
                if value.trim().is_empty() {
                    return Err(PromptError::EmptyValue(name.to_string()));
                }
                out.push_str(value);
                i = end;
            }
            None => {
                out.push('{');
                i = open + 1;
            }
        }
    }
    out.push_str(&text[i..]);
    Ok(out)
}
