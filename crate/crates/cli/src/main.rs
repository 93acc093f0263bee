//! `bruq` — run two-observer measurement/reset experiments: Born-rule
//! verdicts, hidden-variable trajectory dynamics, and a 1D continuum
//! guidance demonstrator.
//!
//! Exit codes: 0 success (an INDETERMINATE verdict is a successful answer),
//! 2 usage or parse errors, 3 runtime or validation errors.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use bruq_core::born::{builtin_queries, evaluate, MultiTimeQuery, QueryResult};
use bruq_core::edl;
use bruq_core::guidance::{run_guidance, GuidanceConfig, GuidanceRun};
use bruq_core::lab::{Scenario, Timeline};
use bruq_core::trajectories::{
    equivariance_report, multi_time_joint, run_ensemble_threads, DynamicsRule, TrajectoryEnsemble,
};

use report::{
    render_human, DynamicsReport, EquivarianceRow, EstimateRow, GuidanceSummary, QueryReport,
    Report,
};

#[derive(Parser)]
#[command(
    name = "bruq",
    version,
    about = "Two-observer measurement/reset experiments: Born verdicts, trajectory dynamics, and a continuum demonstrator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario (version1 | version2)
    Scenario {
        /// Scenario name: version1 | version2
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Parse, validate, and run an experiment file
    Run {
        /// Path to an .edl experiment file
        path: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Two-packet continuum demonstrator with guided trajectories
    Guidance(GuidanceOpts),
    /// Syntax-check an experiment file and print its canonical form
    Parse {
        /// Path to an .edl experiment file
        path: PathBuf,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Evaluate the queries through the Born rule (default when --dynamics
    /// is absent)
    #[arg(long)]
    born: bool,
    /// Estimate the queries by trajectory sampling: permutation | resample
    #[arg(long, value_name = "RULE")]
    dynamics: Option<String>,
    /// Number of trajectories
    #[arg(short = 'n', long = "trajectories", default_value_t = 100_000)]
    trajectories: usize,
    /// Master seed for the counter RNG
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutputOpts,
}

#[derive(Args)]
struct GuidanceOpts {
    /// Packet centers
    #[arg(
        long,
        num_args = 2,
        value_names = ["C1", "C2"],
        default_values_t = [-8.0, 8.0],
        allow_negative_numbers = true
    )]
    centers: Vec<f64>,
    /// Packet width
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Probability weights of the two packets
    #[arg(
        long,
        num_args = 2,
        value_names = ["W1", "W2"],
        default_values_t = [0.5, 0.5]
    )]
    weights: Vec<f64>,
    /// Total evolution time
    #[arg(long, default_value_t = 1.0)]
    t_total: f64,
    /// Number of trajectories
    #[arg(short = 'n', long = "trajectories", default_value_t = 10_000)]
    trajectories: usize,
    /// Master seed for the counter RNG
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutputOpts,
}

#[derive(Args)]
struct OutputOpts {
    /// Write the machine report as JSON to this path
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Write a CSV dump to this path (dynamics: per-epoch configuration
    /// counts; guidance: per-trajectory positions)
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Omit the timestamp field from the JSON report
    #[arg(long)]
    no_timestamp: bool,
}

struct CliError {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl ToString) -> CliError {
    CliError {
        code: 3,
        message: message.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Scenario { name, opts } => cmd_scenario(name, opts),
        Command::Run { path, opts } => cmd_run(path, opts),
        Command::Guidance(opts) => cmd_guidance(opts),
        Command::Parse { path } => cmd_parse(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Worker cap: `BRUQ_THREADS` if set, otherwise all available cores. The
/// count never changes results, only wall time.
fn worker_count() -> Result<usize, CliError> {
    match std::env::var("BRUQ_THREADS") {
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w >= 1)
            .ok_or_else(|| usage(format!("BRUQ_THREADS must be a positive integer, got `{raw}`"))),
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|t| t.get())
            .unwrap_or(1)),
    }
}

fn cmd_scenario(name: &str, opts: &RunOpts) -> Result<(), CliError> {
    let which: Scenario = name.parse().map_err(|e: bruq_core::Error| usage(e.to_string()))?;
    let timeline = bruq_core::lab::builtin_scenario(which).map_err(runtime)?;
    let queries = builtin_queries(&timeline).map_err(runtime)?;
    execute(&timeline, &queries, name.to_string(), opts)
}

fn cmd_run(path: &Path, opts: &RunOpts) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    let doc = edl::parse(&text).map_err(|e| usage(e.to_string()))?;
    let (schedule, queries) = edl::validate(&doc).map_err(runtime)?;
    let timeline = Timeline::new(schedule).map_err(runtime)?;
    let scenario = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string());
    execute(&timeline, &queries, scenario, opts)
}

fn execute(
    timeline: &Timeline,
    queries: &[MultiTimeQuery],
    scenario: String,
    opts: &RunOpts,
) -> Result<(), CliError> {
    let workers = worker_count()?;
    let mut report = Report::new(scenario);
    if opts.born || opts.dynamics.is_none() {
        let mut rows = Vec::with_capacity(queries.len());
        for query in queries {
            let row = match evaluate(timeline, query).map_err(runtime)? {
                QueryResult::Probability(p) => QueryReport {
                    query: query.render(timeline),
                    status: "value".into(),
                    value: Some(p),
                    reason: None,
                },
                QueryResult::Indeterminate(reason) => QueryReport {
                    query: query.render(timeline),
                    status: "indeterminate".into(),
                    value: None,
                    reason: Some(reason.to_string()),
                },
            };
            rows.push(row);
        }
        report.queries = Some(rows);
    }
    if let Some(rule_name) = &opts.dynamics {
        let rule: DynamicsRule = rule_name
            .parse()
            .map_err(|e: bruq_core::Error| usage(e.to_string()))?;
        let ensemble =
            run_ensemble_threads(timeline, rule, opts.trajectories, opts.seed, workers)
                .map_err(runtime)?;
        let mut estimates = Vec::with_capacity(queries.len());
        for query in queries {
            let (estimate, std_error) = multi_time_joint(&ensemble, query).map_err(runtime)?;
            estimates.push(EstimateRow {
                query: query.render(timeline),
                estimate,
                std_error,
            });
        }
        let equivariance = equivariance_report(&ensemble, timeline)
            .map_err(runtime)?
            .into_iter()
            .map(|g| EquivarianceRow {
                epoch: g.epoch,
                statistic: g.statistic,
                dof: g.dof,
                p_value: g.p_value,
            })
            .collect();
        report.dynamics = Some(DynamicsReport {
            rule: rule.to_string(),
            n: opts.trajectories,
            seed: opts.seed,
            estimates,
            equivariance,
        });
        if let Some(csv) = &opts.out.csv {
            write_counts_csv(csv, &ensemble, timeline)?;
        }
    } else if opts.out.csv.is_some() {
        return Err(usage("--csv needs --dynamics here (nothing to dump)"));
    }
    finish(report, &opts.out)
}

fn cmd_guidance(opts: &GuidanceOpts) -> Result<(), CliError> {
    let workers = worker_count()?;
    let cfg = GuidanceConfig {
        sigma: opts.sigma,
        centers: (opts.centers[0], opts.centers[1]),
        weights: (opts.weights[0], opts.weights[1]),
        t_total: opts.t_total,
        n_traj: opts.trajectories,
        seed: opts.seed,
        workers,
        ..GuidanceConfig::default()
    };
    let run = run_guidance(&cfg).map_err(runtime)?;
    let mut report = Report::new("guidance");
    report.guidance = Some(GuidanceSummary {
        n: run.report.n,
        seed: opts.seed,
        frames: run.report.frames,
        escaped: run.report.escaped,
        crossing_fraction: run.report.crossing_fraction,
        p_box1_start: run.report.p_box1_start,
        p_box1_end: run.report.p_box1_end,
        p_box1_throughout: run.report.p_box1_throughout,
        ks_statistic: run.report.ks.statistic,
        ks_p_value: run.report.ks.p_value,
        norm_drift: run.report.norm_drift,
        overlap_bound: run.report.overlap_bound,
    });
    if let Some(csv) = &opts.out.csv {
        write_trajectory_csv(csv, &run)?;
    }
    finish(report, &opts.out)
}

fn cmd_parse(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    let doc = edl::parse(&text).map_err(|e| usage(e.to_string()))?;
    print!("{}", edl::format(&doc));
    Ok(())
}

fn finish(mut report: Report, out: &OutputOpts) -> Result<(), CliError> {
    if !out.no_timestamp {
        report.timestamp = Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        );
    }
    print!("{}", render_human(&report));
    if let Some(path) = &out.json {
        std::fs::write(path, report.to_json())
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Per-epoch configuration counts next to their Born weights.
fn write_counts_csv(
    path: &Path,
    ensemble: &TrajectoryEnsemble,
    timeline: &Timeline,
) -> Result<(), CliError> {
    let layout = ensemble.layout();
    let mut text = String::from("epoch,configuration,count,born_probability\n");
    for (epoch, counts) in ensemble.epoch_counts().iter().enumerate() {
        let state = &timeline.states()[epoch];
        for (flat, &count) in counts.iter().enumerate() {
            let p = state.amplitudes()[flat].norm_sqr();
            if count == 0 && p == 0.0 {
                continue;
            }
            let config = layout.format_config(&layout.config_of(flat));
            text.push_str(&format!("{epoch},{config},{count},{p}\n"));
        }
    }
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// One row per trajectory per stored frame: id, time, position, box sign.
fn write_trajectory_csv(path: &Path, run: &GuidanceRun) -> Result<(), CliError> {
    let mut text = String::from("trajectory,t,x,box\n");
    for (id, traj) in run.trajectories.iter().enumerate() {
        for (i, (x, b)) in traj.positions.iter().zip(&traj.boxes).enumerate() {
            text.push_str(&format!("{id},{},{x},{b}\n", run.times[i]));
        }
    }
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}
