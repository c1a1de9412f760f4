//! addrnet command-line interface.
//!
//! `simulate` runs a scenario config and writes event logs plus ground
//! truth; the analysis commands (`estimate`, `match`, `probe-analyze`,
//! `unreachable`, `validate`) each run one pipeline over logs; `report`
//! runs every registered analysis over a simulation directory.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use addrnet_core::engine::EventLog;
use addrnet_core::estimator::{
    validate_estimates, DegreeEstimate, EstimatorParams, MatchParams, UserAgentShare,
};
use addrnet_core::report::{AnalysisOutcome, AnalysisRegistry, ReportCtx, UnreachableInputs};
use addrnet_core::scenario::{run_scenario, ScenarioConfig};
use addrnet_core::truth::GroundTruth;

const OUT_DIR_ENV: &str = "ADDRNET_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "addrnet",
    version,
    about = "Deterministic addr-gossip simulator and measurement toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config; writes event logs, truth.json and the
    /// resolved scenario.json into the output directory.
    Simulate(SimulateArgs),
    /// Estimate per-address daily degrees from monitor logs.
    Estimate(EstimateArgs),
    /// Cluster addresses that belong to the same peer.
    Match(MatchArgs),
    /// Classify slot availability from probe tester logs.
    ProbeAnalyze(ProbeAnalyzeArgs),
    /// Slot accounting: estimate the number of unreachable peers.
    Unreachable(UnreachableArgs),
    /// Compare an estimates table against ground truth (MAPE).
    Validate(ValidateArgs),
    /// Run every analysis over a simulation directory.
    Report(ReportArgs),
}

/// Output directory: `--out`, else `ADDRNET_OUT_DIR`, else `./out`.
fn resolve_out(out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Args, Default, Clone)]
struct EstimatorFlags {
    /// Ignore addr messages smaller than this.
    #[arg(long)]
    min_message_size: Option<usize>,
    /// Lower bound (s) of the future-timestamp window.
    #[arg(long)]
    future_window_low: Option<u64>,
    /// Upper bound (s) of the future-timestamp window.
    #[arg(long)]
    future_window_high: Option<u64>,
    /// Keep batches with strictly more records than this.
    #[arg(long)]
    min_batch_count: Option<u64>,
    /// Estimation window length in seconds.
    #[arg(long)]
    window_length: Option<u64>,
    /// Expected routable addresses per spam batch.
    #[arg(long)]
    addresses_per_batch: Option<f64>,
    /// Relay fanout assumed by the estimator.
    #[arg(long)]
    fanout: Option<f64>,
}

impl EstimatorFlags {
    fn apply(&self, params: &mut EstimatorParams) {
        if let Some(v) = self.min_message_size {
            params.min_message_size = v;
        }
        if let Some(v) = self.future_window_low {
            params.future_window_low_s = v;
        }
        if let Some(v) = self.future_window_high {
            params.future_window_high_s = v;
        }
        if let Some(v) = self.min_batch_count {
            params.min_batch_count = v;
        }
        if let Some(v) = self.window_length {
            params.window_length_s = v;
        }
        if let Some(v) = self.addresses_per_batch {
            params.addresses_per_batch = v;
        }
        if let Some(v) = self.fanout {
            params.fanout = v;
        }
    }
}

#[derive(Args, Default, Clone)]
struct MatchFlags {
    /// Minimum seconds a tuple must lie in the future at receipt.
    #[arg(long)]
    min_future: Option<u64>,
    /// Minimum tuples a source must send with one timestamp.
    #[arg(long)]
    min_tuples_per_source: Option<u64>,
    /// Minimum shared tuples linking two addresses.
    #[arg(long)]
    min_shared_tuples: Option<u64>,
}

impl MatchFlags {
    fn apply(&self, params: &mut MatchParams) {
        if let Some(v) = self.min_future {
            params.min_future_s = v;
        }
        if let Some(v) = self.min_tuples_per_source {
            params.min_tuples_per_source = v;
        }
        if let Some(v) = self.min_shared_tuples {
            params.min_shared_tuples = v;
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config's seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Seconds probe campaigns wait between checks.
    #[arg(long)]
    wait_time: Option<u64>,
    /// Extra probe connections after the first survives.
    #[arg(long)]
    extra_connections: Option<u32>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Monitor log(s); repeatable.
    #[arg(long, required = true)]
    log: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    estimator: EstimatorFlags,
}

#[derive(Args)]
struct MatchArgs {
    /// Monitor log(s); repeatable.
    #[arg(long, required = true)]
    log: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct ProbeAnalyzeArgs {
    /// Probe tester log(s); repeatable.
    #[arg(long, required = true)]
    log: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UnreachableArgs {
    /// Monitor log(s) for estimates and observed addresses; repeatable.
    #[arg(long)]
    log: Vec<PathBuf>,
    /// Sentinel connection log(s) for super-peer counting; repeatable.
    #[arg(long)]
    sentinel_log: Vec<PathBuf>,
    /// Unreachable client mix entries, `client:outgoing:share`; repeatable.
    #[arg(long, required = true)]
    profile: Vec<String>,
    /// Use this slot total instead of summing estimates.
    #[arg(long)]
    total_slots: Option<f64>,
    /// Use this reachable-peer count instead of counting unique peers.
    #[arg(long)]
    reachable_count: Option<f64>,
    /// Use this super-peer count instead of sentinel intersection.
    #[arg(long)]
    super_count: Option<f64>,
    /// Use this semi-super-peer count instead of sentinel intersection.
    #[arg(long)]
    semi_super_count: Option<f64>,
    /// Estimates above this degree are excluded from the slot total.
    #[arg(long, default_value_t = 130.0)]
    degree_cutoff: f64,
    /// Outgoing connections assumed per reachable peer.
    #[arg(long, default_value_t = 10.0)]
    reachable_outgoing: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    estimator: EstimatorFlags,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct ValidateArgs {
    /// Estimates table produced by `estimate`.
    #[arg(long)]
    estimates: PathBuf,
    /// Ground truth (truth.json from `simulate`).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Simulation directory (monitor-*.log, truth.json, ...).
    #[arg(long)]
    dir: PathBuf,
    /// Output directory; defaults to the simulation directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// AS category table (`asn,category` CSV) replacing ground-truth
    /// category labels in histogram breakdowns.
    #[arg(long)]
    as_map: Option<PathBuf>,
    /// Unreachable client mix entries, `client:outgoing:share`; overrides
    /// the scenario's profile.
    #[arg(long)]
    profile: Vec<String>,
    #[arg(long, default_value_t = 130.0)]
    degree_cutoff: f64,
    #[arg(long, default_value_t = 10.0)]
    reachable_outgoing: f64,
    #[command(flatten)]
    estimator: EstimatorFlags,
    #[command(flatten)]
    matching: MatchFlags,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate(args),
        Command::Match(args) => match_cmd(args),
        Command::ProbeAnalyze(args) => probe_analyze(args),
        Command::Unreachable(args) => unreachable(args),
        Command::Validate(args) => validate(args),
        Command::Report(args) => report(args),
    }
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<EventLog>> {
    paths
        .iter()
        .map(|p| EventLog::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn parse_profile(entries: &[String]) -> Result<Vec<UserAgentShare>> {
    entries
        .iter()
        .map(|e| UserAgentShare::parse(e).map_err(anyhow::Error::from))
        .collect()
}

fn run_one(ctx: &ReportCtx, name: &str) -> Result<()> {
    let registry = AnalysisRegistry::with_builtins();
    let outcome = registry.get(name)?.run(ctx)?;
    print_outcome(name, &outcome);
    Ok(())
}

fn print_outcome(name: &str, outcome: &AnalysisOutcome) {
    match outcome {
        AnalysisOutcome::Done { files, summary } => {
            println!("{name}: {summary}");
            for file in files {
                println!("  wrote {}", file.display());
            }
        }
        AnalysisOutcome::Skipped(what) => println!("{name}: skipped (needs {what})"),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = ScenarioConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed_override {
        config.seed = seed;
    }
    if let Some(wait) = args.wait_time {
        config.probe.wait_s = wait;
    }
    if let Some(extra) = args.extra_connections {
        config.probe.extra_connections = extra;
    }
    let out = resolve_out(&args.out);
    let output = run_scenario(&config)?;
    let files = output.write_to_dir(&out)?;
    println!(
        "simulated {} days, {} peers, seed {}",
        config.days,
        output.truth.peers.len(),
        config.seed
    );
    for file in files {
        println!("  wrote {}", file.display());
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let mut ctx = ReportCtx::new(resolve_out(&args.out));
    ctx.monitor_logs = load_logs(&args.log)?;
    args.estimator.apply(&mut ctx.estimator);
    run_one(&ctx, "estimate")
}

fn match_cmd(args: MatchArgs) -> Result<()> {
    let mut ctx = ReportCtx::new(resolve_out(&args.out));
    ctx.monitor_logs = load_logs(&args.log)?;
    args.matching.apply(&mut ctx.match_params);
    run_one(&ctx, "match")
}

fn probe_analyze(args: ProbeAnalyzeArgs) -> Result<()> {
    let mut ctx = ReportCtx::new(resolve_out(&args.out));
    ctx.tester_logs = load_logs(&args.log)?;
    run_one(&ctx, "probe")
}

fn unreachable(args: UnreachableArgs) -> Result<()> {
    let mut ctx = ReportCtx::new(resolve_out(&args.out));
    ctx.monitor_logs = load_logs(&args.log)?;
    ctx.sentinel_logs = load_logs(&args.sentinel_log)?;
    ctx.profile = parse_profile(&args.profile)?;
    ctx.degree_cutoff = args.degree_cutoff;
    ctx.reachable_outgoing = args.reachable_outgoing;
    ctx.unreachable = UnreachableInputs {
        total_slots: args.total_slots,
        reachable_count: args.reachable_count,
        super_count: args.super_count,
        semi_super_count: args.semi_super_count,
    };
    args.estimator.apply(&mut ctx.estimator);
    args.matching.apply(&mut ctx.match_params);
    run_one(&ctx, "unreachable")
}

fn validate(args: ValidateArgs) -> Result<()> {
    let estimates = read_estimates(&args.estimates)?;
    let truth = GroundTruth::load(&args.truth)
        .with_context(|| format!("loading {}", args.truth.display()))?;
    let report = validate_estimates(&estimates, &truth)?;

    println!(
        "{:<26} {:>4} {:>12} {:>12} {:>8}",
        "address", "day", "estimate", "truth", "ape%"
    );
    for row in &report.rows {
        println!(
            "{:<26} {:>4} {:>12.3} {:>12.3} {:>8.3}",
            row.subject.to_string(),
            row.day,
            row.estimate,
            row.truth,
            row.abs_pct_error * 100.0
        );
    }
    println!(
        "MAPE {:.3}% over {} estimates",
        report.mape * 100.0,
        report.rows.len()
    );

    let out = resolve_out(&args.out);
    std::fs::create_dir_all(&out)?;
    let path = out.join("validate.csv");
    let mut body = String::from("address,day,estimate,truth,abs_pct_error\n");
    for row in &report.rows {
        body.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            row.subject, row.day, row.estimate, row.truth, row.abs_pct_error
        ));
    }
    std::fs::write(&path, body)?;
    println!("  wrote {}", path.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let out = args.out.clone().unwrap_or_else(|| args.dir.clone());
    let mut ctx = ReportCtx::load_dir(&args.dir, out)?;
    if !args.profile.is_empty() {
        ctx.profile = parse_profile(&args.profile)?;
    }
    if let Some(path) = &args.as_map {
        ctx.as_map = Some(
            addrnet_core::model::AsCategoryMap::load(path)
                .with_context(|| format!("loading {}", path.display()))?,
        );
    }
    ctx.degree_cutoff = args.degree_cutoff;
    ctx.reachable_outgoing = args.reachable_outgoing;
    args.estimator.apply(&mut ctx.estimator);
    args.matching.apply(&mut ctx.match_params);
    let registry = AnalysisRegistry::with_builtins();
    for (name, outcome) in registry.run_all(&ctx)? {
        print_outcome(name, &outcome);
    }
    Ok(())
}

/// Reads an `estimates.csv` written by the estimate pipeline.
fn read_estimates(path: &PathBuf) -> Result<Vec<DegreeEstimate>> {
    let body =
        std::fs::read_to_string(path).with_context(|| format!("loading {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("malformed estimates row {}: {line:?}", idx + 1);
        }
        out.push(DegreeEstimate {
            subject: fields[0]
                .parse()
                .map_err(|e| anyhow::anyhow!("row {}: {e}", idx + 1))?,
            day: fields[1].parse().context("bad day")?,
            estimate: fields[2].parse().context("bad estimate")?,
            samples: fields[3].parse().context("bad samples")?,
        });
    }
    Ok(out)
}
