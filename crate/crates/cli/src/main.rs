use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hk_core::controllers::{BoundedSearch, ControllerSpec, SearchLimits};
use hk_core::engine::{run, MonitorMode, Outcome, RunConfig, DEFAULT_MAX_STEPS};
use hk_core::instances::{generate, InstanceSpec};
use hk_core::verify::{run_suite, Suite, VerifyOptions};
use hk_core::Mode;
use serde_json::{Map, Value};

mod bench;

use bench::{read_rows, write_rows, SuiteConfig, Summary};

const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Hegselmann-Krause control experiments: single runs, scaling suites,
/// property suites and bounded look-ahead search.
#[derive(Parser)]
#[command(name = "hkbench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one instance under one controller and write the run record.
    Simulate(SimulateArgs),
    /// Run a scaling grid, write one CSV row per run and fit the exponent.
    Bench(BenchArgs),
    /// Run property suites; exit 0 iff every property holds.
    Verify(VerifyArgs),
    /// Exhaustive look-ahead from an instance's starting state.
    Search(SearchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rational,
    Float64,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Rational => Mode::Rational,
            ModeArg::Float64 => Mode::Float64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MonitorArg {
    Off,
    Record,
    Abort,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "gen")]
    instance: Option<PathBuf>,
    /// Generator name (equidistant, dumbbell, three-cluster, not-too-fast,
    /// dumbbell-farm, dumbbell-farm-sized, equidistant-farm, random).
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Size parameter of the dumbbell and three-cluster generators.
    #[arg(long)]
    k: Option<usize>,
    /// Exponent as "p/q" (dumbbell-farm generator, hybrid controller).
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    kprime: Option<u64>,
    #[arg(long)]
    c2: Option<u64>,
    #[arg(long)]
    span: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Strategic agent count (defaults to what the controller needs).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: InstanceArgs,
    #[arg(long, default_value = "passive")]
    controller: String,
    /// Controller params as a JSON object, e.g. '{"alpha": "1/2"}'.
    #[arg(long)]
    params: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[arg(long, value_enum, default_value = "record")]
    monitors: MonitorArg,
    /// Run record JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trajectory CSV path.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite config JSON; overrides the grid flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gen: Option<String>,
    /// Comma-separated sizes (k for dumbbell and three-cluster, n otherwise).
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Generator params as a JSON object, e.g. '{"c2": 2}'.
    #[arg(long)]
    gen_params: Option<String>,
    #[arg(long, default_value = "passive")]
    controller: String,
    #[arg(long)]
    params: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Results CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON path (stderr if omitted).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Re-fit an existing results CSV instead of running.
    #[arg(long, conflicts_with_all = ["config", "gen"])]
    refit: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run, or `all`.
    #[arg(required = true)]
    suites: Vec<String>,
    /// Seeded cases per suite (suite default if omitted).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    source: InstanceArgs,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long)]
    branch_cap: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors in how the tool was invoked, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn parse_object(raw: Option<&str>, what: &str) -> anyhow::Result<Map<String, Value>> {
    match raw {
        None => Ok(Map::new()),
        Some(s) => match serde_json::from_str(s) {
            Ok(Value::Object(map)) => Ok(map),
            _ => Err(usage(format!("{what} must be a JSON object"))),
        },
    }
}

fn writer(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

impl InstanceArgs {
    fn load(&self, default_mode: Mode) -> anyhow::Result<InstanceSpec> {
        let inst = match (&self.instance, &self.gen) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let inst = InstanceSpec::from_json(&text)?;
                match self.mode {
                    Some(mode) => inst.to_mode(mode.into()),
                    None => inst,
                }
            }
            (None, Some(name)) => {
                let sized_by_k = matches!(name.as_str(), "dumbbell" | "three-cluster");
                let size = if sized_by_k { self.k.or(self.n) } else { self.n };
                let size = size.ok_or_else(|| {
                    usage(format!("generator {name} needs --{}", if sized_by_k { "k" } else { "n" }))
                })?;
                let mut params = Map::new();
                if let Some(a) = &self.alpha {
                    params.insert("alpha".into(), a.clone().into());
                }
                if let Some(v) = self.kprime {
                    params.insert("kprime".into(), v.into());
                }
                if let Some(v) = self.c2 {
                    params.insert("c2".into(), v.into());
                }
                if let Some(v) = self.span {
                    params.insert("span".into(), v.into());
                }
                let mode = self.mode.map_or(default_mode, Mode::from);
                generate(name, size, &params, mode, self.seed).map_err(|e| usage(e.to_string()))?
            }
            (None, None) => return Err(usage("give --instance FILE or --gen NAME")),
        };
        Ok(inst)
    }
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let inst = args.source.load(Mode::Rational)?;
    let mut params = parse_object(args.params.as_deref(), "--params")?;
    if let Some(a) = &args.source.alpha {
        params.entry("alpha").or_insert_with(|| a.clone().into());
    }
    let spec = ControllerSpec {
        controller: args.controller.clone(),
        params,
    };
    let m = match args.source.m {
        Some(m) => m,
        None => spec.default_m(&inst)?,
    };
    let inst = inst.with_m(m);
    let mut controller = spec.build(&inst).map_err(|e| usage(e.to_string()))?;
    if args.max_steps < 1 {
        return Err(usage("--max-steps must be at least 1"));
    }
    let config = RunConfig {
        max_steps: args.max_steps,
        record_trajectory: args.trajectory.as_ref().map(|_| true),
        monitors: match args.monitors {
            MonitorArg::Off => MonitorMode::Off,
            MonitorArg::Record => MonitorMode::Record,
            MonitorArg::Abort => MonitorMode::Abort,
        },
        ..RunConfig::default()
    };
    let record = run(&inst, controller.as_mut(), &config)?;
    if let Some(path) = &args.trajectory {
        let csv = record.trajectory_csv().expect("trajectory recorded");
        std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = writer(args.out.as_deref())?;
    writeln!(out, "{}", record.to_json())?;
    out.flush()?;
    Ok(match record.convergence_time {
        Outcome::Converged(_) => ExitCode::SUCCESS,
        Outcome::NotConverged => ExitCode::from(EXIT_NOT_CONVERGED),
    })
}

fn bench(args: &BenchArgs) -> anyhow::Result<ExitCode> {
    if let Some(path) = &args.refit {
        let rows = read_rows(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        let first = rows.first().ok_or_else(|| anyhow!("{} has no rows", path.display()))?;
        let summary = Summary::from_rows(&first.generator, &first.controller, None, &rows);
        let mut out = writer(args.summary.as_deref())?;
        writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        return Ok(ExitCode::SUCCESS);
    }
    let config: SuiteConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("suite config: {e}")))?
        }
        None => {
            let generator = args.gen.clone().ok_or_else(|| usage("give --config FILE or --gen NAME"))?;
            SuiteConfig {
                generator,
                sizes: args.sizes.clone(),
                generator_params: parse_object(args.gen_params.as_deref(), "--gen-params")?,
                controller: ControllerSpec {
                    controller: args.controller.clone(),
                    params: parse_object(args.params.as_deref(), "--params")?,
                },
                mode: args.mode.map_or(Mode::Float64, Mode::from),
                seeds: if args.seeds.is_empty() { vec![0] } else { args.seeds.clone() },
                m: args.m,
                max_steps: args.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
            }
        }
    };
    config.validate().map_err(|e| usage(format!("{e:#}")))?;
    let rows = config.execute(args.workers)?;
    write_rows(writer(args.out.as_deref())?, &rows)?;
    let summary = Summary::from_rows(&config.generator, &config.controller.controller, Some(config.mode), &rows);
    let text = serde_json::to_string_pretty(&summary)?;
    match &args.summary {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => eprintln!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: &VerifyArgs) -> anyhow::Result<ExitCode> {
    let suites: Vec<Suite> = if args.suites.iter().any(|s| s == "all") {
        Suite::ALL.to_vec()
    } else {
        args.suites
            .iter()
            .map(|s| s.parse().map_err(|e: hk_core::HkError| usage(e.to_string())))
            .collect::<anyhow::Result<_>>()?
    };
    let opts = VerifyOptions {
        seeds: args.seeds,
        base_seed: args.seed,
    };
    let mut reports = Vec::new();
    for suite in suites {
        let report = run_suite(suite, &opts)?;
        eprintln!("{:<14} {}", suite.as_str(), if report.passed { "PASS" } else { "FAIL" });
        reports.push(report);
    }
    let mut out = writer(args.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
    out.flush()?;
    Ok(if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ERROR)
    })
}

fn search(args: &SearchArgs) -> anyhow::Result<ExitCode> {
    let inst = args.source.load(Mode::Rational)?;
    let m = args.source.m.unwrap_or(inst.m);
    let state = inst.with_m(m).initial_state()?;
    let mut limits = SearchLimits {
        horizon: args.horizon,
        ..SearchLimits::default()
    };
    if let Some(cap) = args.branch_cap {
        limits.branch_cap = cap;
    }
    let outcome = BoundedSearch::new(m, limits).search(&state)?;
    let mut out = writer(args.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&outcome)?)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::Search(a) => search(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_ERROR)
            }
        }
    }
}
