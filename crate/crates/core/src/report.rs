//! Report pipelines over event logs, organized as a name-keyed registry of
//! [`Analysis`] implementations. Each analysis reads logs (and ground
//! truth where it exists), writes CSV tables into the output directory and
//! returns a one-line summary. The `report` command runs every registered
//! analysis; the per-pipeline commands select one by name.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{Direction, EventKind, EventLog, LogError};
use crate::estimator::{
    aggregate_by_address, category_stats, cluster_estimate_consistency, count_super_peers,
    count_unique_peers, degree_histogram, estimate_from_logs, estimate_unreachable,
    match_addresses, total_slots_from_estimates, validate_estimates, DegreeEstimate,
    EstimatorError, EstimatorParams, MatchParams, PeerCluster, UnreachableError, UserAgentShare,
};
use crate::model::{categorize_as, AsCategory, AsCategoryMap, NetAddress};
use crate::probe::{analyze_probe_log, probe_campaign_summary, ProbeError, ProbeResult};
use crate::truth::GroundTruth;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Unreachable(#[from] UnreachableError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("analysis {analysis} needs {what}")]
    MissingInput {
        analysis: &'static str,
        what: &'static str,
    },
    #[error("unknown analysis {name:?} (registered: {known})")]
    UnknownAnalysis { name: String, known: String },
}

/// Direct slot-accounting inputs; each one set overrides the value the
/// pipeline would derive from logs and estimates.
#[derive(Debug, Clone, Default)]
pub struct UnreachableInputs {
    pub total_slots: Option<f64>,
    pub reachable_count: Option<f64>,
    pub super_count: Option<f64>,
    pub semi_super_count: Option<f64>,
}

/// Inputs shared by all analyses.
pub struct ReportCtx {
    pub monitor_logs: Vec<EventLog>,
    pub sentinel_logs: Vec<EventLog>,
    pub tester_logs: Vec<EventLog>,
    pub truth: Option<GroundTruth>,
    pub estimator: EstimatorParams,
    pub match_params: MatchParams,
    /// Estimates above this degree are excluded from slot accounting.
    pub degree_cutoff: f64,
    /// Outgoing connections assumed per reachable peer.
    pub reachable_outgoing: f64,
    pub profile: Vec<UserAgentShare>,
    pub unreachable: UnreachableInputs,
    /// Remaps peer ASNs to categories, replacing the ground truth's
    /// category labels in histogram breakdowns.
    pub as_map: Option<AsCategoryMap>,
    pub day_ms: u64,
    pub out_dir: PathBuf,
}

impl ReportCtx {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        ReportCtx {
            monitor_logs: Vec::new(),
            sentinel_logs: Vec::new(),
            tester_logs: Vec::new(),
            truth: None,
            estimator: EstimatorParams::default(),
            match_params: MatchParams::default(),
            degree_cutoff: 130.0,
            reachable_outgoing: 10.0,
            profile: Vec::new(),
            unreachable: UnreachableInputs::default(),
            as_map: None,
            day_ms: 86_400_000,
            out_dir: out_dir.into(),
        }
    }

    /// Loads simulation outputs from a directory: `monitor-*.log`,
    /// `sentinel-*.log`, `tester-*.log`, `truth.json` and the resolved
    /// `scenario.json` (for parameter and profile defaults).
    pub fn load_dir(
        dir: impl AsRef<Path>,
        out_dir: impl Into<PathBuf>,
    ) -> Result<Self, ReportError> {
        let dir = dir.as_ref();
        let mut ctx = ReportCtx::new(out_dir);
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".log") {
                let log = EventLog::load(&path)?;
                if name.starts_with("monitor-") {
                    ctx.monitor_logs.push(log);
                } else if name.starts_with("sentinel-") {
                    ctx.sentinel_logs.push(log);
                } else if name.starts_with("tester-") {
                    ctx.tester_logs.push(log);
                }
            } else if name == "truth.json" {
                ctx.truth = Some(GroundTruth::load(&path)?);
            } else if name == "scenario.json" {
                if let Ok(config) = crate::scenario::ScenarioConfig::load(&path) {
                    ctx.estimator = config.estimator;
                    ctx.match_params = config.match_params;
                    ctx.profile = config.user_agent_profile;
                }
            }
        }
        Ok(ctx)
    }

    fn estimates(&self) -> Result<Vec<DegreeEstimate>, ReportError> {
        if self.monitor_logs.is_empty() {
            return Err(ReportError::MissingInput {
                analysis: "estimate",
                what: "at least one monitor log",
            });
        }
        self.estimator.validate()?;
        Ok(estimate_from_logs(&self.monitor_logs, &self.estimator)?)
    }

    fn clusters(&self) -> Vec<PeerCluster> {
        match_addresses(&self.monitor_logs, &self.match_params)
    }

    /// Addresses the monitors were connected to (their dialed remotes).
    fn observed_addresses(&self) -> BTreeSet<NetAddress> {
        let mut observed = BTreeSet::new();
        for log in &self.monitor_logs {
            for event in &log.events {
                if let EventKind::ConnOpen {
                    remote_addr,
                    direction: Direction::Outbound,
                    ..
                } = &event.kind
                {
                    observed.insert(*remote_addr);
                }
            }
        }
        observed
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }
}

/// What one analysis produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalysisOutcome {
    Done {
        files: Vec<PathBuf>,
        summary: String,
    },
    /// Inputs this run does not have; `report` moves on.
    Skipped(&'static str),
}

/// One report pipeline.
pub trait Analysis {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError>;
}

/// Name-keyed analysis table.
pub struct AnalysisRegistry {
    analyses: Vec<Box<dyn Analysis>>,
}

impl Default for AnalysisRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl AnalysisRegistry {
    pub fn with_builtins() -> Self {
        AnalysisRegistry {
            analyses: vec![
                Box::new(EstimateAnalysis),
                Box::new(MatchAnalysis),
                Box::new(ProbeAnalysis),
                Box::new(UnreachableAnalysis),
                Box::new(HistogramAnalysis),
                Box::new(ValidateAnalysis),
            ],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.analyses.iter().map(|a| a.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Analysis, ReportError> {
        self.analyses
            .iter()
            .find(|a| a.name() == name)
            .map(|a| a.as_ref())
            .ok_or_else(|| ReportError::UnknownAnalysis {
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    /// Runs every analysis in registration order, skipping those whose
    /// inputs are absent. Returns (name, outcome) pairs.
    pub fn run_all(
        &self,
        ctx: &ReportCtx,
    ) -> Result<Vec<(&'static str, AnalysisOutcome)>, ReportError> {
        let mut results = Vec::new();
        for analysis in &self.analyses {
            let outcome = match analysis.run(ctx) {
                Ok(outcome) => outcome,
                Err(ReportError::MissingInput { what, .. }) => AnalysisOutcome::Skipped(what),
                Err(e) => return Err(e),
            };
            results.push((analysis.name(), outcome));
        }
        Ok(results)
    }
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn fmt_f64(value: f64) -> String {
    format!("{value:.6}")
}

// ---------------------------------------------------------------------------

struct EstimateAnalysis;

impl Analysis for EstimateAnalysis {
    fn name(&self) -> &'static str {
        "estimate"
    }

    fn description(&self) -> &'static str {
        "per-address daily degree estimates from monitor logs"
    }

    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError> {
        let estimates = ctx.estimates()?;
        let path = ctx.path("estimates.csv");
        write_csv(
            &path,
            &["address", "day", "estimate", "samples"],
            estimates.iter().map(|e| {
                vec![
                    e.subject.to_string(),
                    e.day.to_string(),
                    fmt_f64(e.estimate),
                    e.samples.to_string(),
                ]
            }),
        )?;
        let subjects: BTreeSet<_> = estimates.iter().map(|e| e.subject).collect();
        Ok(AnalysisOutcome::Done {
            files: vec![path],
            summary: format!(
                "{} estimates across {} addresses",
                estimates.len(),
                subjects.len()
            ),
        })
    }
}

struct MatchAnalysis;

impl Analysis for MatchAnalysis {
    fn name(&self) -> &'static str {
        "match"
    }

    fn description(&self) -> &'static str {
        "clusters of addresses that belong to the same peer"
    }

    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError> {
        if ctx.monitor_logs.is_empty() {
            return Err(ReportError::MissingInput {
                analysis: "match",
                what: "at least one monitor log",
            });
        }
        let clusters = ctx.clusters();
        let path = ctx.path("clusters.csv");
        let mut rows = Vec::new();
        for (id, cluster) in clusters.iter().enumerate() {
            for addr in &cluster.addresses {
                rows.push(vec![id.to_string(), addr.to_string()]);
            }
        }
        write_csv(&path, &["cluster_id", "address"], rows)?;
        let merged: usize = clusters
            .iter()
            .map(|c| c.addresses.len().saturating_sub(1))
            .sum();
        Ok(AnalysisOutcome::Done {
            files: vec![path],
            summary: format!(
                "{} clusters collapsing {} extra addresses",
                clusters.len(),
                merged
            ),
        })
    }
}

struct ProbeAnalysis;

impl Analysis for ProbeAnalysis {
    fn name(&self) -> &'static str {
        "probe"
    }

    fn description(&self) -> &'static str {
        "slot-availability outcomes reconstructed from tester logs"
    }

    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError> {
        if ctx.tester_logs.is_empty() {
            return Err(ReportError::MissingInput {
                analysis: "probe",
                what: "at least one tester log",
            });
        }
        let mut rows = Vec::new();
        let mut per_tester: Vec<Vec<ProbeResult>> = Vec::new();
        for log in &ctx.tester_logs {
            let outcomes = analyze_probe_log(log);
            rows.extend(outcomes.iter().map(|o| {
                vec![
                    log.label.clone(),
                    o.target.to_string(),
                    o.class.to_string(),
                    o.flags
                        .iter()
                        .map(|&f| if f { '1' } else { '0' })
                        .collect::<String>(),
                ]
            }));
            per_tester.push(outcomes.into_iter().map(ProbeResult::Completed).collect());
        }
        let probe_path = ctx.path("probe.csv");
        write_csv(&probe_path, &["tester", "target", "class", "flags"], rows)?;

        let summary = probe_campaign_summary(&per_tester)?;
        let summary_path = ctx.path("probe_summary.csv");
        write_csv(
            &summary_path,
            &["class", "mean_count", "fraction"],
            summary.per_class.iter().map(|(class, stat)| {
                vec![
                    class.to_string(),
                    fmt_f64(stat.mean_count),
                    fmt_f64(stat.fraction),
                ]
            }),
        )?;
        let mut line = String::new();
        for (class, stat) in &summary.per_class {
            let _ = write!(line, "{class} {:.1}% ", stat.fraction * 100.0);
        }
        Ok(AnalysisOutcome::Done {
            files: vec![probe_path, summary_path],
            summary: line.trim_end().to_string(),
        })
    }
}

struct UnreachableAnalysis;

impl Analysis for UnreachableAnalysis {
    fn name(&self) -> &'static str {
        "unreachable"
    }

    fn description(&self) -> &'static str {
        "slot accounting and the unreachable-peer estimate"
    }

    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError> {
        if ctx.profile.is_empty() {
            return Err(ReportError::MissingInput {
                analysis: "unreachable",
                what: "a user-agent profile",
            });
        }
        let avg_out = crate::estimator::avg_outgoing(&ctx.profile)?;

        let total_slots = match ctx.unreachable.total_slots {
            Some(total) => total,
            None => {
                let aggregates = aggregate_by_address(&ctx.estimates()?);
                total_slots_from_estimates(&aggregates, ctx.degree_cutoff)
            }
        };
        let reachable_count = match ctx.unreachable.reachable_count {
            Some(r) => r,
            None => {
                let observed = ctx.observed_addresses();
                if observed.is_empty() {
                    return Err(ReportError::MissingInput {
                        analysis: "unreachable",
                        what: "monitor logs or --reachable-count",
                    });
                }
                count_unique_peers(&observed, &ctx.clusters()) as f64
            }
        };
        let (super_count, semi_super_count) = match (
            ctx.unreachable.super_count,
            ctx.unreachable.semi_super_count,
        ) {
            (Some(s), Some(ss)) => (s, ss),
            (s_over, ss_over) => {
                if ctx.sentinel_logs.len() < 2 {
                    return Err(ReportError::MissingInput {
                        analysis: "unreachable",
                        what: "two sentinel logs or --super-count/--semi-super-count",
                    });
                }
                let (s, ss) = count_super_peers(&ctx.sentinel_logs, ctx.day_ms)?;
                (s_over.unwrap_or(s), ss_over.unwrap_or(ss))
            }
        };

        let breakdown = estimate_unreachable(
            total_slots,
            reachable_count,
            super_count,
            semi_super_count,
            avg_out,
            ctx.reachable_outgoing,
        )?;
        let path = ctx.path("unreachable.csv");
        write_csv(
            &path,
            &[
                "total_slots",
                "reachable_peers",
                "super_peers",
                "semi_super_peers",
                "reachable_slots",
                "super_slots",
                "semi_super_slots",
                "residual_slots",
                "avg_outgoing",
                "unreachable_estimate",
            ],
            [vec![
                fmt_f64(breakdown.total_slots),
                fmt_f64(breakdown.reachable_peers),
                fmt_f64(breakdown.super_peers),
                fmt_f64(breakdown.semi_super_peers),
                fmt_f64(breakdown.reachable_slots),
                fmt_f64(breakdown.super_slots),
                fmt_f64(breakdown.semi_super_slots),
                fmt_f64(breakdown.residual_slots),
                fmt_f64(breakdown.avg_outgoing),
                fmt_f64(breakdown.unreachable_estimate),
            ]],
        )?;
        Ok(AnalysisOutcome::Done {
            files: vec![path],
            summary: format!(
                "residual {:.0} slots / avg {:.2} outgoing = {:.0} unreachable peers",
                breakdown.residual_slots, breakdown.avg_outgoing, breakdown.unreachable_estimate
            ),
        })
    }
}

struct HistogramAnalysis;

impl Analysis for HistogramAnalysis {
    fn name(&self) -> &'static str {
        "histogram"
    }

    fn description(&self) -> &'static str {
        "normalized degree histogram and per-category medians"
    }

    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError> {
        let estimates = ctx.estimates()?;
        let truth = ctx.truth.as_ref().ok_or(ReportError::MissingInput {
            analysis: "histogram",
            what: "ground truth for AS categories",
        })?;
        let categories: std::collections::BTreeMap<NetAddress, AsCategory> = match &ctx.as_map {
            Some(map) => truth
                .peers
                .iter()
                .flat_map(|p| {
                    let category = categorize_as(p.asn, map).category;
                    p.addresses.iter().map(move |a| (*a, category))
                })
                .collect(),
            None => truth.category_index(),
        };
        let rows = degree_histogram(&estimates, &categories, 5.0);
        let histogram_path = ctx.path("histogram.csv");
        write_csv(
            &histogram_path,
            &["bin_low", "bin_high", "category", "count", "frequency"],
            rows.iter().map(|r| {
                vec![
                    fmt_f64(r.bin_low),
                    fmt_f64(r.bin_high),
                    r.category
                        .map_or_else(|| "all".to_string(), |c| c.to_string()),
                    r.count.to_string(),
                    fmt_f64(r.frequency),
                ]
            }),
        )?;
        let stats = category_stats(&estimates, &categories);
        let medians_path = ctx.path("category_medians.csv");
        write_csv(
            &medians_path,
            &["category", "count", "median", "median_rounded"],
            stats.iter().map(|s| {
                vec![
                    s.category.to_string(),
                    s.count.to_string(),
                    fmt_f64(s.median),
                    s.median_rounded.to_string(),
                ]
            }),
        )?;
        Ok(AnalysisOutcome::Done {
            files: vec![histogram_path, medians_path],
            summary: format!("{} histogram rows, {} categories", rows.len(), stats.len()),
        })
    }
}

struct ValidateAnalysis;

impl Analysis for ValidateAnalysis {
    fn name(&self) -> &'static str {
        "validate"
    }

    fn description(&self) -> &'static str {
        "estimates vs ground-truth degrees (MAPE)"
    }

    fn run(&self, ctx: &ReportCtx) -> Result<AnalysisOutcome, ReportError> {
        let truth = ctx.truth.as_ref().ok_or(ReportError::MissingInput {
            analysis: "validate",
            what: "ground truth",
        })?;
        let estimates = ctx.estimates()?;
        let report = validate_estimates(&estimates, truth)?;
        let path = ctx.path("validate.csv");
        write_csv(
            &path,
            &["address", "day", "estimate", "truth", "abs_pct_error"],
            report.rows.iter().map(|r| {
                vec![
                    r.subject.to_string(),
                    r.day.to_string(),
                    fmt_f64(r.estimate),
                    fmt_f64(r.truth),
                    fmt_f64(r.abs_pct_error),
                ]
            }),
        )?;
        Ok(AnalysisOutcome::Done {
            files: vec![path],
            summary: format!(
                "MAPE {:.2}% over {} estimates",
                report.mape * 100.0,
                report.rows.len()
            ),
        })
    }
}

/// Convenience wrapper for the clustering cross-check (not an analysis of
/// its own; feeds acceptance checks and the CLI summary).
pub fn consistency_from_ctx(ctx: &ReportCtx) -> Result<Option<f64>, ReportError> {
    let estimates = aggregate_by_address(&ctx.estimates()?);
    Ok(cluster_estimate_consistency(&ctx.clusters(), &estimates))
}
