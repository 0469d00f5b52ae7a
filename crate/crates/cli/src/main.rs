use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coopath_core::metrics::{batch, compare, compute_metrics, summarize, to_csv, MetricsRow};
use coopath_core::trace::{replay, InputTrace};
use coopath_core::{run, Mode, RunStatus, Scenario};
use coopath_teleop::{serve, ServeConfig, DEFAULT_PORT};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Cooperative path-following simulator.
#[derive(Parser)]
#[command(name = "coopath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write `run.jsonl` and `metrics.csv`.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArgs,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Run the scenario as configured once per seed and write `metrics.csv`.
    Batch {
        scenario: PathBuf,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Paired manual/cooperative runs per seed; writes `compare.csv`.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Serve the scenario to a live cockpit over a websocket.
    Serve {
        scenario: PathBuf,
        #[arg(long, env = "TELEOP_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-run a recorded teleop input trace headlessly.
    Replay {
        scenario: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SeedArgs {
    /// Seeds as a list and/or ranges, e.g. `1-20` or `1,4,7-9`.
    #[arg(long, default_value = "1-20", value_parser = parse_seeds)]
    seeds: Seeds,
    /// Worker threads.
    #[arg(long, short, default_value_t = 1)]
    jobs: usize,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s.to_ascii_uppercase().as_str() {
        "MC" => Ok(Mode::MC),
        "CC" => Ok(Mode::CC),
        _ => Err(format!("unknown mode `{s}` (expected MC or CC)")),
    }
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = |_| format!("bad seed `{part}`");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
                if a > b {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(bad)?),
        }
    }
    seeds.sort_unstable();
    seeds.dedup();
    Ok(Seeds(seeds))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("invalid scenario {}", path.display()))
}

fn status_code(statuses: impl IntoIterator<Item = RunStatus>) -> ExitCode {
    if statuses.into_iter().all(|s| s == RunStatus::Completed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows {
        let m = &r.metrics;
        println!(
            "seed {:>4} {} rmse_e2 {:.4} m  rmse_e3 {:.4} rad  t {:.2} s  lost {:.3}  sat {:.3}  {}",
            r.seed, r.mode, m.rmse_e2, m.rmse_e3, m.completion_time, m.path_lost_fraction, m.saturation_fraction, r.status
        );
    }
}

fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, mode: Option<Mode>) -> Result<ExitCode> {
    let mut scenario = load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(mode) = mode {
        scenario.mode = mode;
    }
    let record = run(&scenario)?;
    let status = record.final_status();
    write_atomic(&out.join("run.jsonl"), &record.to_jsonl())?;
    let row = MetricsRow {
        seed: scenario.seed,
        mode: scenario.mode,
        metrics: compute_metrics(&record)?,
        status,
    };
    write_atomic(&out.join("metrics.csv"), &to_csv(std::slice::from_ref(&row)))?;
    print_rows(std::slice::from_ref(&row));
    if let Some(diagnostic) = &record.diagnostic {
        eprintln!("run aborted: {diagnostic}");
    }
    Ok(status_code([status]))
}

fn cmd_batch(path: &Path, seeds: &SeedArgs, out: &Path) -> Result<ExitCode> {
    let base = load(path)?;
    if seeds.seeds.0.is_empty() {
        bail!("no seeds given");
    }
    let scenarios: Vec<Scenario> = seeds
        .seeds
        .0
        .iter()
        .map(|&seed| Scenario { seed, ..base.clone() })
        .collect();
    let rows = batch(&scenarios, seeds.jobs)?;
    write_atomic(&out.join("metrics.csv"), &to_csv(&rows))?;
    print_rows(&rows);
    Ok(status_code(rows.iter().map(|r| r.status)))
}

fn cmd_compare(path: &Path, seeds: &SeedArgs, out: &Path) -> Result<ExitCode> {
    let base = load(path)?;
    if seeds.seeds.0.len() < 2 {
        bail!("compare needs at least 2 seeds, got {}", seeds.seeds.0.len());
    }
    let rows = compare(&base, &seeds.seeds.0, seeds.jobs)?;
    write_atomic(&out.join("compare.csv"), &to_csv(&rows))?;
    print_rows(&rows);
    if let Some(summary) = summarize(&rows) {
        println!("{}", summary.line());
    }
    Ok(status_code(rows.iter().map(|r| r.status)))
}

fn cmd_replay(scenario: &Path, trace: &Path, out: &Path) -> Result<ExitCode> {
    let scenario = load(scenario)?;
    let text = std::fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    let trace: InputTrace = serde_json::from_str(&text).with_context(|| format!("parsing {}", trace.display()))?;
    let record = replay(&scenario, &trace)?;
    write_atomic(&out.join("replay.jsonl"), &record.to_jsonl())?;
    println!("{} ticks, status {}", record.rows.len(), record.final_status());
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(paths: &[PathBuf]) -> Result<ExitCode> {
    for path in paths {
        let scenario = load(path)?;
        println!("{}: ok ({}, {} s max, hash {})", path.display(), scenario.mode, scenario.max_duration, &scenario.hash()[..12]);
    }
    Ok(ExitCode::SUCCESS)
}

async fn cmd_serve(path: &Path, addr: SocketAddr, speed: f64, out: &Path) -> Result<ExitCode> {
    let scenario = load(path)?;
    let mut config = ServeConfig::new(addr);
    config.speed = speed;
    let server = serve(scenario, config).await?;
    println!("teleop listening on ws://{}/teleop", server.local_addr());
    tokio::signal::ctrl_c().await.context("waiting for interrupt")?;
    println!("shutting down");
    let runs = server.shutdown().await?;
    for (i, run) in runs.iter().enumerate().filter(|(_, r)| !r.record.rows.is_empty()) {
        write_atomic(&out.join(format!("session-{i}.jsonl")), &run.record.to_jsonl())?;
        write_atomic(&out.join(format!("session-{i}.trace.json")), &serde_json::to_string(&run.trace)?)?;
        write_atomic(&out.join(format!("session-{i}.scenario.json")), &run.scenario.to_json_pretty())?;
        println!("run {i}: {} ticks, {}", run.record.rows.len(), run.record.final_status());
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out, seed, mode } => cmd_run(&scenario, &out.out, seed, mode),
        Command::Batch { scenario, seeds, out } => cmd_batch(&scenario, &seeds, &out.out),
        Command::Compare { scenario, seeds, out } => cmd_compare(&scenario, &seeds, &out.out),
        Command::Replay { scenario, trace, out } => cmd_replay(&scenario, &trace, &out.out),
        Command::Validate { scenarios } => cmd_validate(&scenarios),
        Command::Serve {
            scenario,
            port,
            host,
            speed,
            out,
        } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(cmd_serve(&scenario, SocketAddr::new(host, port), speed, &out.out))
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(1)
        }
    }
}
