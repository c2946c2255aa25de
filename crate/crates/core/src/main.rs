use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otafl::experiments::report::{self, BOUNDS_FILE, METRICS_FILE, SUMMARY_FILE};
use otafl::experiments::sweep::{self, SweepAxis};
use otafl::experiments::{self, MnistSource, Profile, RunOutcome, Scenario};
use otafl::scheduler::{self, ORACLE_MAX_WORKERS};
use otafl::{Error, PolicyKind, Result, ScenarioConfig, TaskKind};

/// Federated learning over an analog-aggregation uplink.
#[derive(Debug, Parser)]
#[command(name = "otafl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its reports.
    Run(RunArgs),
    /// Vary one config axis across policies and seeds.
    Sweep(SweepArgs),
    /// Compare the line search against exhaustive search on random instances.
    OracleCheck(OracleArgs),
    /// Recompute the bound trace of a stored run.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario TOML file; overrides --task and --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear-regression")]
    task: TaskKind,
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    #[arg(long)]
    seed: Option<u64>,
    /// MNIST training images (IDX); digits are synthesized when absent.
    #[arg(long, requires = "mnist_labels")]
    mnist_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_images")]
    mnist_labels: Option<PathBuf>,
    /// MNIST test images (IDX); otherwise a held-out split of the training file.
    #[arg(long, requires_all = ["mnist_test_labels", "mnist_images"])]
    mnist_test_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_test_images")]
    mnist_test_labels: Option<PathBuf>,
}

impl ScenarioArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => self.profile.preset(self.task),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn mnist(&self) -> Result<Option<MnistSource>> {
        let (Some(images), Some(labels)) = (&self.mnist_images, &self.mnist_labels) else {
            return Ok(None);
        };
        let source = MnistSource::load(images, labels)?;
        Ok(Some(
            match (&self.mnist_test_images, &self.mnist_test_labels) {
                (Some(ti), Some(tl)) => source.with_test(ti, tl)?,
                _ => source,
            },
        ))
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Policy to run; all three when omitted together with --compare.
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    /// Run every policy on the same data and plot them together.
    #[arg(long, conflicts_with = "policy")]
    compare: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Comma-separated axis values; a default grid when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Number of seeds per point, counting up from --seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Policies to include; all when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    policy: Option<Vec<PolicyKind>>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_workers: usize,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Directory holding metrics.csv and summary.json of a previous run.
    #[arg(long)]
    run_dir: PathBuf,
    /// Where to write bounds.csv; defaults to the run directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn print_summary(out: &RunOutcome, dir: &Path) {
    let s = &out.summary;
    let mut line = format!(
        "{:<8} final loss {:.6e}  initial {:.6e}",
        s.policy.as_str(),
        s.final_loss,
        s.initial_loss
    );
    if let Some(mse) = s.final_test_mse {
        line += &format!("  test MSE {mse:.6e}");
    }
    if let Some(acc) = s.final_accuracy {
        line += &format!("  accuracy {:.2}%", 100.0 * acc);
    }
    line += &format!(
        "  clamped {}/{}  [{}]  {:.1}s  -> {}",
        s.transmit.clamped,
        s.transmit.transmissions,
        s.dataset.as_str(),
        s.wall_clock_secs,
        dir.display()
    );
    println!("{line}");
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = args.scenario.config()?;
    let mnist = args.scenario.mnist()?;
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    let policies = if args.compare {
        PolicyKind::ALL.to_vec()
    } else {
        vec![cfg.policy]
    };
    let scn = Scenario::prepare(cfg, mnist.as_ref())?;
    let outcomes = experiments::parallel_map(&policies, |&p| {
        experiments::run_scenario(&scn.clone().with_policy(p), Default::default())
    })?;
    for out in &outcomes {
        let dir = if args.compare {
            args.out_dir.join(out.summary.policy.as_str())
        } else {
            args.out_dir.clone()
        };
        experiments::emit_reports(out, &dir)?;
        print_summary(out, &dir);
    }
    if args.compare {
        let refs: Vec<&RunOutcome> = outcomes.iter().collect();
        let chart = report::comparison_chart("Training loss by policy", &refs);
        report::write_svg(&chart, &args.out_dir.join("comparison.svg"))?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let base = args.scenario.config()?;
    let mnist = args.scenario.mnist()?;
    let values = args.values.unwrap_or_else(|| args.axis.default_values());
    let policies = args.policy.unwrap_or_else(|| PolicyKind::ALL.to_vec());
    let seeds: Vec<u64> = (0..args.seeds).map(|k| base.seed + k).collect();
    let points = sweep::run_sweep(&base, args.axis, &values, &policies, &seeds, mnist.as_ref())?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    sweep::write_sweep_csv(&points, &args.out_dir.join("sweep.csv"))?;
    let chart = sweep::sweep_chart(&points, args.axis, &policies);
    report::write_svg(&chart, &args.out_dir.join("sweep.svg"))?;
    for &policy in &policies {
        let curve = sweep::curve(&points, policy);
        let means: Vec<f64> = curve.iter().map(|c| c.1).collect();
        let trend = args.axis.expected_trend(policy);
        let inversions = sweep::count_inversions(&means, trend, 1e-9);
        let cells: Vec<String> = curve.iter().map(|(v, m)| format!("{v}: {m:.4e}")).collect();
        println!(
            "{:<8} {}  ({inversions} inversions vs {trend:?})",
            policy.as_str(),
            cells.join("  ")
        );
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    if args.max_workers > ORACLE_MAX_WORKERS {
        return Err(Error::config(format!(
            "--max-workers must be at most {ORACLE_MAX_WORKERS}"
        )));
    }
    let report = scheduler::oracle_check(args.instances, args.seed, args.max_workers)?;
    println!("passed {} failed {}", report.passed, report.failed);
    if report.failed > 0 {
        return Err(Error::Scheduler(format!(
            "{} instances disagree with the oracle",
            report.failed
        )));
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let records = report::read_metrics(&args.run_dir.join(METRICS_FILE))?;
    let summary = report::read_summary(&args.run_dir.join(SUMMARY_FILE))?;
    let trace = experiments::bounds_from_records(&records, &summary);
    let out_dir = args.out_dir.unwrap_or(args.run_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let path = out_dir.join(BOUNDS_FILE);
    trace.save_csv(&path)?;
    let last = trace.records.last();
    println!(
        "{} iterations, final bound {}, violations {}, A_t ≤ 1 on {}/{} -> {}",
        trace.len(),
        last.and_then(|r| r.cumulative_bound)
            .map_or("unbounded".into(), |v| format!("{v:.6e}")),
        trace
            .records
            .iter()
            .filter(
                |r| matches!((r.empirical_gap, r.cumulative_bound), (Some(e), Some(g)) if e > g)
            )
            .count(),
        trace.records.iter().filter(|r| r.convex_flag).count(),
        trace.len(),
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::OracleCheck(a) => cmd_oracle(a),
        Command::Bounds(a) => cmd_bounds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
