//! Population metrics, human comparisons and plot-data files for a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use econ_audit::interventions::InterventionSpec;
use econ_audit::metrics::{
    agent_metrics, behavioral_entropy_binned, ecdf_table, ks_distance, mean, pearson_r,
    reserve_by_bidder_count, welch_t_test, AgentMetrics, MeanCi, PairedKs, RoundWindow, SummaryRow,
    WelchTest,
};
use econ_audit::rng::derive_seed;
use econ_audit::transcript::{RoundRecord, SessionTranscript, Task};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::ingest::load_traces;
use crate::manifest::{RunManifest, SessionStatus};

pub const REPORT_SCHEMA: &str = "econ-audit/report";
pub const HUMAN_SOURCE: &str = "human";
const CI_SALT: u64 = 0x6369;

#[derive(Debug, Clone, Serialize)]
pub struct FailedSession {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct KsSummary {
    pub mean: f64,
    pub pairs: Vec<PairedKs>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationPearson {
    pub mean: f64,
    pub min: f64,
    pub pairs: usize,
    /// Pairs skipped because one sequence was constant and the other not.
    pub undefined: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceReport {
    pub source: String,
    pub agent: String,
    pub condition: String,
    pub window: String,
    pub n_agents: usize,
    pub summary: Vec<SummaryRow>,
    pub pooled_entropy: f64,
    pub mean_agent_entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_sell_through_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_premium_capture_rate: Option<f64>,
    /// Agents without a sale, excluded from the PCR mean.
    pub pcr_undefined_agents: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_order_bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reserve_by_bidders: Option<BTreeMap<u32, MeanCi>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_vs_human: Option<KsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welch_vs_human: Option<WelchTest<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welch_vs_intrinsicality: Option<WelchTest<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replication_pearson: Option<ReplicationPearson>,
    pub agents: Vec<AgentMetrics>,
    /// Pooled action histogram; written to its own file.
    #[serde(skip)]
    pub action_counts: BTreeMap<u32, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub schema: String,
    pub config_hash: String,
    pub task: Task,
    pub replication_analyzed: u32,
    pub failed_sessions: Vec<FailedSession>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human: Option<SourceReport>,
    pub sources: Vec<SourceReport>,
}

fn action_variable(task: Task) -> &'static str {
    match task {
        Task::Auction => "reserve_price",
        Task::Newsvendor => "order_quantity",
    }
}

struct Population<'a> {
    source: String,
    agent: String,
    condition: String,
    window: RoundWindow,
    transcripts: Vec<&'a SessionTranscript>,
}

fn windowed(t: &SessionTranscript, w: RoundWindow) -> Vec<&RoundRecord> {
    w.select(t)
}

fn windowed_actions(t: &SessionTranscript, w: RoundWindow) -> Vec<u32> {
    windowed(t, w).iter().map(|r| r.action).collect()
}

fn population_report(cfg: &ExperimentConfig, pop: &Population<'_>) -> Result<SourceReport> {
    let bin = cfg.analysis.entropy_bin_width;
    let task = cfg.task;
    let agents: Vec<AgentMetrics> = pop
        .transcripts
        .iter()
        .map(|t| agent_metrics(t, pop.window, bin))
        .collect::<std::result::Result<_, _>>()?;
    let rounds: Vec<&RoundRecord> = pop
        .transcripts
        .iter()
        .flat_map(|t| windowed(t, pop.window))
        .collect();
    let actions: Vec<u32> = rounds.iter().map(|r| r.action).collect();
    let profits: Vec<f64> = rounds.iter().map(|r| r.profit).collect();
    let ints: Vec<i64> = actions.iter().map(|&a| i64::from(a)).collect();
    let summary = vec![
        SummaryRow::from_values(&pop.source, action_variable(task), &actions)?,
        SummaryRow::from_reals(&pop.source, "profit", &profits)?,
    ];
    let entropies: Vec<f64> = agents.iter().map(|a| a.entropy_bits).collect();
    let strs: Vec<f64> = agents.iter().filter_map(|a| a.sell_through_rate).collect();
    let pcrs: Vec<f64> = agents
        .iter()
        .filter_map(|a| a.premium_capture_rate)
        .filter(|r| r.defined)
        .map(|r| r.value)
        .collect();
    let biases: Vec<f64> = agents.iter().filter_map(|a| a.mean_bias).collect();
    let reserve_by_bidders = match task {
        Task::Auction => Some(reserve_by_bidder_count(
            rounds.iter().copied(),
            cfg.analysis.ci,
            derive_seed(cfg.seed, CI_SALT),
        )?),
        Task::Newsvendor => None,
    };
    Ok(SourceReport {
        source: pop.source.clone(),
        agent: pop.agent.clone(),
        condition: pop.condition.clone(),
        window: pop.window.to_string(),
        n_agents: agents.len(),
        summary,
        pooled_entropy: behavioral_entropy_binned(&ints, bin)?,
        mean_agent_entropy: mean(&entropies)?,
        mean_sell_through_rate: (!strs.is_empty()).then(|| mean(&strs)).transpose()?,
        mean_premium_capture_rate: (!pcrs.is_empty()).then(|| mean(&pcrs)).transpose()?,
        pcr_undefined_agents: agents
            .iter()
            .filter(|a| a.premium_capture_rate.is_some_and(|r| !r.defined))
            .count(),
        mean_order_bias: (!biases.is_empty()).then(|| mean(&biases)).transpose()?,
        reserve_by_bidders,
        ks_vs_human: None,
        welch_vs_human: None,
        welch_vs_intrinsicality: None,
        replication_pearson: None,
        agents,
        action_counts: actions.iter().fold(BTreeMap::new(), |mut m, &a| {
            *m.entry(a).or_insert(0) += 1;
            m
        }),
    })
}

/// Pearson between every pair of replications of the same profile index.
/// Two identical constant sequences count as 1; a constant sequence paired
/// with a varying one is undefined and skipped.
fn replication_pearson(
    by_rep: &BTreeMap<u32, Vec<&SessionTranscript>>,
) -> Option<ReplicationPearson> {
    let mut by_index: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for ts in by_rep.values() {
        for t in ts {
            let idx = t.header.profile_index.unwrap_or(0);
            by_index
                .entry(idx)
                .or_default()
                .push(t.actions().into_iter().map(f64::from).collect());
        }
    }
    let mut rs = Vec::new();
    let mut undefined = 0;
    for seqs in by_index.values() {
        for a in 0..seqs.len() {
            for b in a + 1..seqs.len() {
                match pearson_r(&seqs[a], &seqs[b]) {
                    Ok(r) => rs.push(r),
                    Err(_) if seqs[a] == seqs[b] => rs.push(1.0),
                    Err(_) => undefined += 1,
                }
            }
        }
    }
    if rs.is_empty() && undefined == 0 {
        return None;
    }
    Some(ReplicationPearson {
        mean: if rs.is_empty() {
            f64::NAN
        } else {
            rs.iter().sum::<f64>() / rs.len() as f64
        },
        min: rs.iter().copied().fold(f64::INFINITY, f64::min),
        pairs: rs.len(),
        undefined,
    })
}

fn per_agent_means(ts: &[&SessionTranscript], w: RoundWindow) -> Vec<f64> {
    ts.iter()
        .map(|t| {
            let a = windowed_actions(t, w);
            a.iter().map(|&x| f64::from(x)).sum::<f64>() / a.len().max(1) as f64
        })
        .collect()
}

/// Loads the run, computes every report and writes them under
/// `<run_dir>/analysis`. `human_dir` overrides the config's trace directory.
pub fn analyze(
    cfg: &ExperimentConfig,
    run_dir: &Path,
    human_dir: Option<&Path>,
) -> Result<MetricReport> {
    cfg.validate()?;
    let manifest = RunManifest::load(run_dir)?;
    if manifest.config_hash != cfg.hash() {
        return Err(CliError::Config(format!(
            "run {} was produced by config {}, not {}",
            run_dir.display(),
            manifest.config_hash,
            cfg.hash()
        )));
    }
    let human_dir: Option<PathBuf> = human_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.human_trace_dir.as_ref().map(|d| cfg.resolve(d)));
    let humans: Option<Vec<SessionTranscript>> = match &human_dir {
        Some(d) => Some(
            load_traces(d, cfg.task)?
                .into_iter()
                .map(|t| t.transcript)
                .collect(),
        ),
        None => None,
    };

    let mut failed_sessions = Vec::new();
    let mut loaded: BTreeMap<(String, String), BTreeMap<u32, Vec<SessionTranscript>>> =
        BTreeMap::new();
    for s in &manifest.sessions {
        if s.status != SessionStatus::Complete {
            failed_sessions.push(FailedSession {
                id: s.id.clone(),
                error: s.error.clone().unwrap_or_else(|| "not run".into()),
            });
            continue;
        }
        let t = SessionTranscript::read_from(&run_dir.join(&s.path))?;
        loaded
            .entry((s.agent.clone(), s.condition.clone()))
            .or_default()
            .entry(s.replication)
            .or_default()
            .push(t);
    }

    let base_window = cfg.window()?;
    let human_report = match &humans {
        Some(h) if !h.is_empty() => Some(population_report(
            cfg,
            &Population {
                source: HUMAN_SOURCE.into(),
                agent: HUMAN_SOURCE.into(),
                condition: HUMAN_SOURCE.into(),
                window: base_window,
                transcripts: h.iter().collect(),
            },
        )?),
        _ => None,
    };

    // keep the configured agent and condition order
    let specs = cfg.specs()?;
    let mut sources = Vec::new();
    for agent in &cfg.agents {
        let intrinsic_means = loaded
            .get(&(agent.name.clone(), "intrinsicality".to_string()))
            .and_then(|reps| reps.get(&cfg.analysis.replication))
            .map(|ts| per_agent_means(&ts.iter().collect::<Vec<_>>(), base_window));
        for spec in &specs {
            let cond = spec.label();
            let Some(reps) = loaded.get(&(agent.name.clone(), cond.clone())) else {
                continue;
            };
            let Some(pop_ts) = reps.get(&cfg.analysis.replication) else {
                continue;
            };
            let window = cfg.window_for(spec)?;
            let pop = Population {
                source: format!("{}:{cond}", agent.name),
                agent: agent.name.clone(),
                condition: cond.clone(),
                window,
                transcripts: pop_ts.iter().collect(),
            };
            let mut report = population_report(cfg, &pop)?;
            if let Some(h) = &humans {
                let (ks, welch) = compare_with_humans(&pop, h)?;
                report.ks_vs_human = Some(ks);
                report.welch_vs_human = welch;
            }
            if spec != &InterventionSpec::intrinsicality(cfg.task) {
                if let Some(base) = &intrinsic_means {
                    let means = per_agent_means(&pop.transcripts, base_window);
                    report.welch_vs_intrinsicality = welch_t_test(&means, base).ok();
                }
            }
            let by_rep: BTreeMap<u32, Vec<&SessionTranscript>> = reps
                .iter()
                .map(|(r, ts)| (*r, ts.iter().collect()))
                .collect();
            report.replication_pearson = replication_pearson(&by_rep);
            sources.push(report);
        }
    }

    let report = MetricReport {
        schema: REPORT_SCHEMA.into(),
        config_hash: manifest.config_hash.clone(),
        task: cfg.task,
        replication_analyzed: cfg.analysis.replication,
        failed_sessions,
        human: human_report,
        sources,
    };
    write_outputs(&run_dir.join("analysis"), cfg.task, &report)?;
    Ok(report)
}

/// Pairs agent `i` with human `i`; errors listing every unpaired agent.
fn compare_with_humans(
    pop: &Population<'_>,
    humans: &[SessionTranscript],
) -> Result<(KsSummary, Option<WelchTest<f64>>)> {
    let unpaired: Vec<String> = pop
        .transcripts
        .iter()
        .filter(|t| t.header.profile_index.is_none_or(|i| i >= humans.len()))
        .map(|t| t.header.agent_id.clone())
        .collect();
    if !unpaired.is_empty() {
        return Err(CliError::Analysis(format!(
            "{}: no human trace to pair with {}",
            pop.source,
            unpaired.join(", ")
        )));
    }
    let mut pairs = Vec::new();
    let mut paired_humans = Vec::new();
    for t in &pop.transcripts {
        let h = &humans[t.header.profile_index.expect("checked above")];
        let a = windowed_actions(t, pop.window);
        let b = windowed_actions(h, pop.window);
        let ks: f64 = ks_distance(&a, &b)?;
        pairs.push(PairedKs {
            agent_id: t.header.agent_id.clone(),
            human_id: h.header.agent_id.clone(),
            ks,
        });
        paired_humans.push(h);
    }
    let ks_values: Vec<f64> = pairs.iter().map(|p| p.ks).collect();
    let welch = welch_t_test(
        &per_agent_means(&pop.transcripts, pop.window),
        &per_agent_means(&paired_humans, pop.window),
    )
    .ok();
    Ok((
        KsSummary {
            mean: mean(&ks_values)?,
            pairs,
        },
        welch,
    ))
}

fn num(x: f64) -> String {
    format!("{x}")
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<std::fs::File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        Ok(Csv { path, w })
    }

    fn row(&mut self, fields: Vec<String>) -> Result<()> {
        Ok(self.w.write_record(&fields)?)
    }

    fn finish(mut self) -> Result<()> {
        self.w
            .flush()
            .map_err(|e| CliError::io(self.path.display().to_string(), e))
    }
}

fn write_outputs(dir: &Path, task: Task, report: &MetricReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    let rp = dir.join("report.json");
    std::fs::write(&rp, json).map_err(|e| CliError::io(rp.display().to_string(), e))?;

    let all: Vec<&SourceReport> = report.human.iter().chain(&report.sources).collect();

    let mut summary_csv = Csv::create(
        dir,
        "summary.csv",
        &["source", "variable", "Mean", "SD", "Min", "Max", "S", "n"],
    )?;
    for s in &all {
        for r in &s.summary {
            summary_csv.row(vec![
                r.source.clone(),
                r.variable.clone(),
                num(r.mean),
                num(r.sd),
                num(r.min),
                num(r.max),
                num(r.entropy),
                r.n.to_string(),
            ])?;
        }
    }
    summary_csv.finish()?;

    let mut ent = Csv::create(
        dir,
        "entropy.csv",
        &["source", "pooled_entropy", "mean_agent_entropy"],
    )?;
    for s in &all {
        ent.row(vec![
            s.source.clone(),
            num(s.pooled_entropy),
            num(s.mean_agent_entropy),
        ])?;
    }
    ent.finish()?;

    let mut ecdf = Csv::create(dir, "entropy_ecdf.csv", &["source", "entropy", "ecdf"])?;
    let mut ksf = Csv::create(
        dir,
        "ks_entropy.csv",
        &["source", "agent_id", "human_id", "ks", "entropy"],
    )?;
    let mut dist = Csv::create(
        dir,
        "action_distribution.csv",
        &["source", "action", "count", "fraction"],
    )?;
    for s in &all {
        let es: Vec<f64> = s.agents.iter().map(|a| a.entropy_bits).collect();
        for (v, f) in ecdf_table::<f64, f64>(&es)? {
            ecdf.row(vec![s.source.clone(), num(v), num(f)])?;
        }
        if let Some(ks) = &s.ks_vs_human {
            for (p, a) in ks.pairs.iter().zip(&s.agents) {
                ksf.row(vec![
                    s.source.clone(),
                    p.agent_id.clone(),
                    p.human_id.clone(),
                    num(p.ks),
                    num(a.entropy_bits),
                ])?;
            }
        }
        let total: usize = s.action_counts.values().sum();
        for (a, c) in &s.action_counts {
            dist.row(vec![
                s.source.clone(),
                a.to_string(),
                c.to_string(),
                num(*c as f64 / total as f64),
            ])?;
        }
    }
    ecdf.finish()?;
    ksf.finish()?;
    dist.finish()?;

    let mut welch = Csv::create(dir, "welch.csv", &["source", "baseline", "t", "df", "p"])?;
    let mut pear = Csv::create(
        dir,
        "replication_pearson.csv",
        &["source", "mean", "min", "pairs", "undefined"],
    )?;
    for s in &report.sources {
        for (base, w) in [
            (HUMAN_SOURCE, &s.welch_vs_human),
            ("intrinsicality", &s.welch_vs_intrinsicality),
        ] {
            if let Some(w) = w {
                welch.row(vec![
                    s.source.clone(),
                    base.into(),
                    num(w.t),
                    num(w.df),
                    num(w.p),
                ])?;
            }
        }
        if let Some(p) = &s.replication_pearson {
            pear.row(vec![
                s.source.clone(),
                num(p.mean),
                num(p.min),
                p.pairs.to_string(),
                p.undefined.to_string(),
            ])?;
        }
    }
    welch.finish()?;
    pear.finish()?;

    match task {
        Task::Auction => {
            let mut rb = Csv::create(
                dir,
                "reserve_by_bidders.csv",
                &["source", "num_bidders", "n", "mean", "ci_low", "ci_high"],
            )?;
            let mut sp = Csv::create(
                dir,
                "str_pcr.csv",
                &["source", "agent_id", "str", "pcr", "pcr_defined"],
            )?;
            for s in &all {
                for (n, ci) in s.reserve_by_bidders.iter().flatten() {
                    rb.row(vec![
                        s.source.clone(),
                        n.to_string(),
                        ci.n.to_string(),
                        num(ci.mean),
                        num(ci.low),
                        num(ci.high),
                    ])?;
                }
                for a in &s.agents {
                    let pcr = a.premium_capture_rate.expect("auction metrics");
                    sp.row(vec![
                        s.source.clone(),
                        a.agent_id.clone(),
                        num(a.sell_through_rate.expect("auction metrics")),
                        num(pcr.value),
                        pcr.defined.to_string(),
                    ])?;
                }
            }
            rb.finish()?;
            sp.finish()?;
        }
        Task::Newsvendor => {
            let mut ob = Csv::create(dir, "order_bias.csv", &["source", "agent_id", "mean_bias"])?;
            for s in &all {
                for a in &s.agents {
                    ob.row(vec![
                        s.source.clone(),
                        a.agent_id.clone(),
                        num(a.mean_bias.expect("newsvendor metrics")),
                    ])?;
                }
            }
            ob.finish()?;
        }
    }
    Ok(())
}
