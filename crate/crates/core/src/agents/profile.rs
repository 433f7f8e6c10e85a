use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};
use crate::transcript::{read_jsonl, FormatError};

/// Demographic fields substituted into the auction system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub age: u32,
    pub gender: String,
    pub race: String,
    pub program: String,
}

impl AgentProfile {
    /// Name of the first empty text field, if any.
    pub fn first_empty_field(&self) -> Option<&'static str> {
        [
            ("gender", &self.gender),
            ("race", &self.race),
            ("program", &self.program),
        ]
        .into_iter()
        .find(|(_, v)| v.trim().is_empty())
        .map(|(k, _)| k)
    }
}

const GENDERS: [&str; 3] = ["male", "female", "non-binary"];
const RACES: [&str; 5] = ["White", "Asian", "Black", "Hispanic", "Multiracial"];
const PROGRAMS: [&str; 8] = [
    "economics",
    "mechanical engineering",
    "business administration",
    "psychology",
    "computer science",
    "biology",
    "political science",
    "mathematics",
];

/// `n` synthetic student profiles. Profile `i` depends only on `(seed, i)`.
pub fn synthetic_profiles(seed: u64, n: usize) -> Vec<AgentProfile> {
    (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Profiles, i as u64);
            AgentProfile {
                age: rng.random_range(18..=24),
                gender: GENDERS.choose(&mut rng).expect("nonempty").to_string(),
                race: RACES.choose(&mut rng).expect("nonempty").to_string(),
                program: PROGRAMS.choose(&mut rng).expect("nonempty").to_string(),
            }
        })
        .collect()
}

pub fn load_profiles(path: &Path) -> Result<Vec<AgentProfile>, FormatError> {
    read_jsonl(path)
}
