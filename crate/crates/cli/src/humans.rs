//! Synthetic stand-in for human participant traces.
//!
//! Auction participants start from a personal anchor, raise the reserve
//! with the number of bidders, drift as a random walk and occasionally
//! jump to 0 or 100. Newsvendor participants blend the fractile optimum
//! with last round's demand (demand chasing). Every file is marked
//! synthetic in its header.

use std::path::{Path, PathBuf};

use econ_audit::agents::{Agent, AgentError, Decision, Observation, RoundParams};
use econ_audit::auction::{run_auction_session, AuctionSessionConfig, ValuationDistribution};
use econ_audit::newsvendor::{
    default_price_cost_schedule, optimal_quantity, run_newsvendor_session, NewsvendorSessionConfig,
};
use econ_audit::rng::{self, Domain};
use econ_audit::transcript::{RoundRecord, SessionTranscript, Task, TranscriptHeader};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};
use crate::run::environment_seed;

pub const SYNTHETIC_SOURCE: &str = "SYNTHETIC";

struct SyntheticHuman {
    rng: ChaCha8Rng,
    anchor: f64,
    slope: f64,
    walk: f64,
    extreme_rate: f64,
    chase: f64,
}

impl SyntheticHuman {
    fn new(seed: u64, i: usize) -> Self {
        let mut rng = rng::stream(seed, Domain::SyntheticHumans, i as u64);
        SyntheticHuman {
            anchor: rng.random_range(10.0..70.0),
            slope: rng.random_range(0.5..3.0),
            walk: 0.0,
            extreme_rate: rng.random_range(0.0..0.12),
            chase: rng.random_range(0.3..0.8),
            rng,
        }
    }

    fn noise(&mut self, scale: f64) -> f64 {
        (self.rng.random::<f64>() - 0.5) * 2.0 * scale
    }
}

impl Agent for SyntheticHuman {
    fn decide(&mut self, obs: &Observation<'_>) -> std::result::Result<Decision, AgentError> {
        self.walk = 0.8 * self.walk + self.noise(8.0);
        let value = match obs.params {
            RoundParams::Auction { num_bidders } => {
                if self.rng.random_bool(self.extreme_rate) {
                    if self.rng.random_bool(0.5) {
                        100.0
                    } else {
                        0.0
                    }
                } else {
                    self.anchor + self.slope * (f64::from(num_bidders) - 4.0) + self.walk
                }
            }
            RoundParams::Newsvendor { price, cost } => {
                let q_star = f64::from(optimal_quantity(price, cost)?);
                let last = obs
                    .history
                    .last()
                    .and_then(RoundRecord::demand)
                    .map(f64::from);
                let target = match last {
                    Some(d) => self.chase * d + (1.0 - self.chase) * q_star,
                    None => 150.0,
                };
                target + 2.0 * self.walk
            }
        };
        Ok(Decision::clean(value.round() as i64))
    }
}

/// Generates `n` synthetic traces. Trace `i` plays the environment an
/// experiment with the same seed assigns to profile index `i`, and the
/// first `round(cube_root_fraction * n)` auction traces face CubeRoot.
pub fn generate_synthetic_humans(
    seed: u64,
    n: usize,
    task: Task,
    rounds: u32,
    cube_root_fraction: f64,
) -> Result<Vec<SessionTranscript>> {
    if n == 0 {
        return Err(CliError::Config("n must be at least 1".into()));
    }
    if rounds == 0 {
        return Err(CliError::Config("rounds must be at least 1".into()));
    }
    let cube_root = (cube_root_fraction * n as f64).round() as usize;
    (0..n)
        .map(|i| {
            let env_seed = environment_seed(seed, i);
            let mut header =
                TranscriptHeader::new(format!("synthetic_{i:02}"), task, env_seed, rounds);
            header.source = "human".into();
            header.synthetic = true;
            header.profile_index = Some(i);
            header
                .meta
                .insert("generator".into(), SYNTHETIC_SOURCE.into());
            header.meta.insert("generator_seed".into(), seed.into());
            let mut agent = SyntheticHuman::new(seed, i);
            let t = match task {
                Task::Auction => {
                    let dist = if i < cube_root {
                        ValuationDistribution::CubeRoot
                    } else {
                        ValuationDistribution::Cube
                    };
                    header.distribution = Some(dist);
                    let mut cfg = AuctionSessionConfig::new(dist, env_seed);
                    cfg.total_rounds = rounds;
                    run_auction_session(&cfg, &mut agent, header)?
                }
                Task::Newsvendor => {
                    let cfg =
                        NewsvendorSessionConfig::new(default_price_cost_schedule(rounds), env_seed);
                    run_newsvendor_session(&cfg, &mut agent, header)?
                }
            };
            if let Some(f) = &t.failure {
                return Err(CliError::Analysis(format!("synthetic trace {i}: {f}")));
            }
            Ok(t)
        })
        .collect()
}

/// Writes traces as `human_XX.jsonl` into `dir`.
pub fn write_traces(dir: &Path, traces: &[SessionTranscript]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = dir.join(format!("human_{i:02}.jsonl"));
            t.write_to(&p)?;
            Ok(p)
        })
        .collect()
}
