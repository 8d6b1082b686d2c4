//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 infeasible QoS thresholds,
//! 64 usage error, 65 invalid configuration.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::{preset, relative_gain, run_sweep, write_atomic, write_outputs, SweepConfig, PRESETS};
use crate::network::{draw_scenario, NetworkScenario, RateReport, ScenarioConfig};
use crate::problems::{run_mode, DesignMode, DesignNetworks, MmOptions, OptimizeTrace, ProblemKind, ProblemSpec};
use crate::scenario_file::ScenarioFile;
use crate::verify::{run_checks, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

pub const OUT_DIR_ENV: &str = "IGS_MIMO_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "igs-mimo", version, about = "Covariance design for the K-user MIMO interference channel with I/Q imbalance")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Worker threads for sweeps; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one problem instance and write a report.
    Solve(SolveArgs),
    /// Run a Monte Carlo sweep and write CSV plus manifest.
    Sweep(SweepArgs),
    /// Run the invariant self-checks.
    Verify(VerifyArgs),
    /// Draw a scenario and write it as JSON.
    DumpScenario(DumpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemArg {
    RateRegion,
    SumRate,
    EeRegion,
    GlobalEe,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::RateRegion => ProblemKind::RateRegion,
            ProblemArg::SumRate => ProblemKind::SumRate,
            ProblemArg::EeRegion => ProblemKind::EeRegion,
            ProblemArg::GlobalEe => ProblemKind::GlobalEe,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Igs,
    Pgs,
    #[value(name = "i-pgs")]
    IPgs,
}

impl From<ModeArg> for DesignMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Igs => DesignMode::Igs,
            ModeArg::Pgs => DesignMode::Pgs,
            ModeArg::IPgs => DesignMode::IdealPgs,
        }
    }
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 2)]
    users: usize,
    #[arg(long, default_value_t = 1)]
    ntx: usize,
    #[arg(long, default_value_t = 1)]
    nrx: usize,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    snr_db: f64,
    /// Transmit amplitude imbalance.
    #[arg(long, default_value_t = 0.6)]
    a_tx: f64,
    /// Receive amplitude imbalance; defaults to --a-tx.
    #[arg(long)]
    a_rx: Option<f64>,
    /// Phase imbalance at both ends, degrees.
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    phase_deg: f64,
    #[arg(long = "sigma-t2", default_value_t = 0.2)]
    sigma_t2: f64,
    #[arg(long = "sigma-r2", default_value_t = 1.0)]
    sigma_r2: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Static circuit power per user.
    #[arg(long, default_value_t = 1.0)]
    pc: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ScenarioArgs {
    fn config(&self) -> ScenarioConfig {
        ScenarioConfig {
            users: self.users,
            n_tx: self.ntx,
            n_rx: self.nrx,
            snr_db: self.snr_db,
            a_tx: self.a_tx,
            a_rx: self.a_rx,
            phase_deg: self.phase_deg,
            sigma2_tx: self.sigma_t2,
            sigma2_rx: self.sigma_r2,
            eta: self.eta,
            p_static: self.pc,
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Load the scenario from a file instead of drawing it.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value = "igs")]
    mode: ModeArg,
    /// Profile weights, comma separated; default equal weights.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// QoS rate thresholds, one value or one per user.
    #[arg(long, value_delimiter = ',')]
    rth: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    max_mm_iters: usize,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON sweep configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record per-row wall-clock time in the CSV.
    #[arg(long)]
    timing: bool,
    /// Output file stem; defaults to the preset or config name.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_gradient_fault: bool,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Destination file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    problem: ProblemKind,
    mode: DesignMode,
    seed: Option<u64>,
    objective: f64,
    alphas: Vec<f64>,
    r_th: Vec<f64>,
    report: RateReport,
    trace: OptimizeTrace,
    /// Real-composite covariance of each user, row-major.
    covariances: Vec<Vec<Vec<f64>>>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::QosInfeasible(_) => EXIT_INFEASIBLE,
        Error::Config(_) | Error::InvalidScenario(_) | Error::Json(_) | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_INTERNAL,
    }
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn expand(values: &[f64], users: usize, default: f64, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        0 => Ok(vec![default; users]),
        1 => Ok(vec![values[0]; users]),
        n if n == users => Ok(values.to_vec()),
        n => Err(Error::Config(format!("--{what} has {n} values for {users} users"))),
    }
}

fn load_scenario(args: &SolveArgs) -> Result<NetworkScenario> {
    match &args.scenario_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ScenarioFile::from_json(&text)
                .map_err(|e| config_err(path, e))?
                .to_scenario()
                .map_err(|e| config_err(path, e))
        }
        None => {
            let cfg = args.scenario.config();
            cfg.validate()?;
            draw_scenario(&cfg, args.scenario.seed)
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let s = load_scenario(args)?;
    let users = s.users;
    let alphas = if args.alphas.is_empty() {
        vec![1.0 / users as f64; users]
    } else {
        let a = expand(&args.alphas, users, 0.0, "alphas")?;
        let total: f64 = a.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("--alphas must have a positive sum".into()));
        }
        a.iter().map(|x| x / total).collect()
    };
    let spec = ProblemSpec {
        kind: args.problem.into(),
        alphas,
        r_th: expand(&args.rth, users, 0.0, "rth")?,
        mode: args.mode.into(),
    };
    spec.validate(users)?;
    let opts = MmOptions {
        max_mm_iters: args.max_mm_iters,
        ..Default::default()
    };
    let nets = DesignNetworks::from_scenario(&s)?;
    let out = run_mode(&nets, &spec, &opts)?;
    let report = SolveReport {
        problem: spec.kind,
        mode: spec.mode,
        seed: s.seed,
        objective: out.objective,
        alphas: spec.alphas.clone(),
        r_th: spec.r_th.clone(),
        report: out.report.clone(),
        trace: out.trace.clone(),
        covariances: out
            .point
            .mats
            .iter()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
    };
    let path = args.out.join(format!("solve-{}-{}.json", spec.kind.metric_name(), spec.mode.label()));
    write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!("problem: {:?}, mode: {}", spec.kind, spec.mode.label());
    println!("objective ({}): {}", spec.kind.metric_name(), out.objective);
    for (k, r) in out.report.rates.iter().enumerate() {
        println!("user {k}: rate {r} bit/cu, ee {}", out.report.ee[k]);
    }
    println!("mm iterations: {} (converged: {})", out.trace.mm_iterations, out.trace.mm_converged);
    println!("report: {}", path.display());
    Ok(())
}

fn sweep_config(args: &SweepArgs) -> Result<(SweepConfig, String)> {
    let (mut cfg, stem) = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let cfg = preset(name).ok_or_else(|| {
                Error::Config(format!("unknown preset {name:?}; available: {}", PRESETS.join(", ")))
            })?;
            (cfg, name.clone())
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e))?;
            let cfg: SweepConfig = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
            let stem = path.file_stem().map_or("sweep".into(), |s| s.to_string_lossy().into_owned());
            (cfg, stem)
        }
        (None, None) => return Err(Error::Config("either --preset or --config is required".into())),
    };
    if let Some(r) = args.realizations {
        cfg.realizations = r;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    cfg.record_timing |= args.timing;
    cfg.validate()?;
    Ok((cfg, args.name.clone().unwrap_or(stem)))
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let (cfg, stem) = sweep_config(args)?;
    let out = run_sweep(&cfg)?;
    let path = write_outputs(&args.out, &stem, &cfg, &out)?;
    for r in &out.rows {
        println!(
            "{}={} {:>5} {} = {:.6} ± {:.6} (n={})",
            r.axis_name,
            r.axis_value,
            r.mode.label(),
            r.metric_name,
            r.mean,
            r.stderr,
            r.n_realizations
        );
    }
    for g in relative_gain(&out.rows) {
        match g.percent {
            Some(p) => println!("{}={} igs gain {:.2}%", g.axis_name, g.axis_value, p),
            None => println!("{}={} igs gain undefined", g.axis_name, g.axis_value),
        }
    }
    println!("csv: {}", path.display());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> i32 {
    let results = run_checks(&VerifyOptions {
        gradient_fault: args.inject_gradient_fault,
        seed: args.seed,
    });
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_INTERNAL
    }
}

fn cmd_dump(args: &DumpArgs) -> Result<()> {
    let cfg = args.scenario.config();
    cfg.validate()?;
    let s = draw_scenario(&cfg, args.scenario.seed)?;
    let json = ScenarioFile::from_scenario(&s).to_json()?;
    match &args.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => return cmd_verify(a),
        Command::DumpScenario(a) => cmd_dump(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
