//! Command-line front end: reads a run configuration, dispatches one
//! operation, writes its artifacts and a manifest into the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed precondition,
//! 4 failed verification.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::allocation::solve_allocation;
use crate::economy::{uniform_grid, Economy};
use crate::indirect::{
    build_allpay, build_exclusivity_game, build_gift_game, strategy_csv, verify_equilibrium, verify_outcome_equivalence,
    AllPayOptions, EquilibriumReport, IndirectGame, DEFAULT_EQUILIBRIUM_DRAWS, TABLE_KNOTS,
};
use crate::payments::{classify_trivial, expost_transfers, interim_schedule, InterimMethod};
use crate::suite::{run_suite, SuiteScale};
use crate::verification::{benchmark_cutoffs, oracle_check, posted_price_limit, region_grid, BenchmarkCutoffs};
use config::{Artifact, GameSpec, ManifestInfo, MethodSpec, Operation, RunConfig, ScaleSpec};

pub const MANIFEST_FILE: &str = "manifest.toml";
const DEFAULT_INTERIM_POINTS: usize = 401;
const DEFAULT_MC_DRAWS: usize = 20_000;

#[derive(Debug, Parser)]
#[command(name = "clubgood", version, about = "Optimal club-good mechanisms: solver, payments and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "clubgood-out")]
    pub out: PathBuf,
    /// Worker threads; affects speed only.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Allocation and transfers at one profile.
    Solve,
    /// Greedy solver against subset enumeration on random economies.
    OracleCheck,
    /// Consumer-set labels on a two-buyer type lattice.
    Region,
    /// Interim consumption and payments on a type grid.
    Interim,
    /// Degenerate-economy classification with its witness inequalities.
    Triviality,
    /// Type cutoffs of the two-buyer benchmark family.
    Cutoffs,
    /// Builds an indirect game and tabulates its equilibrium strategy.
    IndirectBuild,
    /// Deviation sweep and outcome equivalence for an indirect game.
    IndirectVerify,
    /// Posted-price limit of growing markets.
    Limit,
    /// Every acceptance check.
    VerifyAll,
    /// Runs the operation named in the configuration (for example a manifest).
    Run,
}

impl Command {
    fn operation(self) -> Option<Operation> {
        Some(match self {
            Command::Solve => Operation::Solve,
            Command::OracleCheck => Operation::OracleCheck,
            Command::Region => Operation::Region,
            Command::Interim => Operation::Interim,
            Command::Triviality => Operation::Triviality,
            Command::Cutoffs => Operation::Cutoffs,
            Command::IndirectBuild => Operation::IndirectBuild,
            Command::IndirectVerify => Operation::IndirectVerify,
            Command::Limit => Operation::Limit,
            Command::VerifyAll => Operation::VerifyAll,
            Command::Run => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(err: crate::Error) -> Self {
        use crate::Error::*;
        match err {
            InvalidEconomy(_) | InvalidArgument(_) | OutOfSupport { .. } => CliError::Config(err.to_string()),
            _ => CliError::Precondition(err.to_string()),
        }
    }
}

/// Files produced by one operation, plus a summary for standard output.
struct Outcome {
    files: Vec<(String, String)>,
    summary: String,
    failure: Option<String>,
}

impl Outcome {
    fn new(summary: String) -> Self {
        Self { files: Vec::new(), summary, failure: None }
    }

    fn file(mut self, name: &str, contents: String) -> Self {
        self.files.push((name.to_string(), contents));
        self
    }

    fn failing_if(mut self, failed: bool, reason: impl Into<String>) -> Self {
        if failed {
            self.failure = Some(reason.into());
        }
        self
    }
}

/// Parses arguments, runs and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("clubgood: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs one command and returns its standard-output summary. Artifacts and
/// the manifest are written even when a verification fails.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(CliError::Config)?
        }
        None => RunConfig::default(),
    };
    let (operation, config) = config.resolve(cli.command.operation(), cli.seed).map_err(CliError::Config)?;
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // A pool installed earlier in this process stays in effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let economy = config.economy.as_ref().map(|spec| spec.build()).transpose()?;
    let outcome = dispatch(operation, &config, economy.as_ref())?;
    write_outputs(&cli.out, operation, &config, &outcome)?;
    match outcome.failure {
        Some(reason) => {
            eprint!("{}", outcome.summary);
            Err(CliError::Verification(reason))
        }
        None => Ok(outcome.summary),
    }
}

fn write_outputs(out: &Path, operation: Operation, config: &RunConfig, outcome: &Outcome) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Precondition(format!("cannot write to {}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let mut artifacts = Vec::new();
    for (name, contents) in &outcome.files {
        fs::write(out.join(name), contents).map_err(io)?;
        artifacts.push(Artifact { file: name.clone(), sha256: sha256_hex(contents.as_bytes()) });
    }
    let canonical = config.to_toml().map_err(CliError::Config)?;
    let mut manifest = config.clone();
    manifest.manifest = Some(ManifestInfo {
        version: env!("CARGO_PKG_VERSION").to_string(),
        operation,
        config_sha256: sha256_hex(canonical.as_bytes()),
        seed: config.command.seed,
        artifacts,
    });
    fs::write(out.join(MANIFEST_FILE), manifest.to_toml().map_err(CliError::Config)?).map_err(io)?;
    Ok(())
}

fn require(economy: Option<&Economy>) -> &Economy {
    economy.expect("resolve() guarantees an economy for this operation")
}

fn dispatch(operation: Operation, config: &RunConfig, economy: Option<&Economy>) -> Result<Outcome, CliError> {
    let cmd = &config.command;
    let seed = cmd.seed.unwrap_or(0);
    match operation {
        Operation::Solve => solve(require(economy), cmd.profile.as_deref().unwrap_or_default()),
        Operation::OracleCheck => {
            let report = oracle_check(cmd.economies.unwrap_or(500), cmd.profiles.unwrap_or(200), cmd.max_buyers.unwrap_or(8), seed)?;
            let text = format!("{report}\n");
            Ok(Outcome::new(text.clone()).file("oracle_check.txt", text).failing_if(!report.passed, "oracle equivalence"))
        }
        Operation::Region => {
            let grid = region_grid(require(economy), cmd.resolution.unwrap_or(201))?;
            let summary = format!("region grid {0}x{0} written to region.csv\n", grid.resolution());
            Ok(Outcome::new(summary).file("region.csv", grid.to_csv()?))
        }
        Operation::Interim => {
            let economy = require(economy);
            let grid = uniform_grid(0.0, economy.upper(), cmd.grid_points.unwrap_or(DEFAULT_INTERIM_POINTS));
            let quadrature = economy.n() == 2 && cmd.method != Some(MethodSpec::MonteCarlo);
            let method = if quadrature {
                InterimMethod::Quadrature
            } else {
                if cmd.method == Some(MethodSpec::Quadrature) {
                    return Err(CliError::Precondition("quadrature needs exactly two buyers".into()));
                }
                InterimMethod::MonteCarlo { seed, draws: cmd.draws.unwrap_or(DEFAULT_MC_DRAWS) }
            };
            if quadrature && cmd.draws.is_some() {
                return Err(CliError::Config("draws only apply to Monte Carlo schedules".into()));
            }
            let schedule = interim_schedule(economy, cmd.buyer.unwrap_or(0), &grid, method)?;
            let summary = format!("interim schedule on {} types written to interim.csv\n", grid.len());
            Ok(Outcome::new(summary).file("interim.csv", schedule.to_csv()?))
        }
        Operation::Triviality => {
            let verdict = classify_trivial(require(economy));
            let mut csv = String::from("family,inequality,lhs,rhs,holds\n");
            for (family, witnesses) in [("never_provide", &verdict.never_provide), ("always_provide", &verdict.always_provide)] {
                for w in witnesses.iter() {
                    let _ = writeln!(csv, "{family},{},{},{},{}", w.label, w.lhs, w.rhs, w.holds);
                }
            }
            Ok(Outcome::new(format!("{:?}\n", verdict.verdict)).file("triviality.csv", csv))
        }
        Operation::Cutoffs => {
            let mut csv = String::from("name,value\n");
            let mut summary = String::new();
            match benchmark_cutoffs(require(economy))? {
                BenchmarkCutoffs::FourRegion { x, y, z, sign } => {
                    let _ = writeln!(csv, "x,{x}\ny,{y}\nz,{z}");
                    let _ = writeln!(summary, "{sign:?} value effects");
                }
                BenchmarkCutoffs::Reserve { reserve } => {
                    let _ = writeln!(csv, "reserve,{reserve}");
                }
                BenchmarkCutoffs::PublicGood { lowest, line_sum } => {
                    let _ = writeln!(csv, "lowest,{lowest}\nline_sum,{line_sum}");
                }
            }
            summary.push_str(&csv);
            Ok(Outcome::new(summary).file("cutoffs.csv", csv))
        }
        Operation::IndirectBuild | Operation::IndirectVerify => indirect(operation, config, require(economy), seed),
        Operation::Limit => {
            let family = cmd.family.as_ref().expect("resolve() guarantees a family").build()?;
            let sizes = cmd.sizes.clone().unwrap_or_else(|| vec![10, 100, 1000]);
            let report = posted_price_limit(&family, &sizes, cmd.replications.unwrap_or(50), seed)?;
            let verdict = report.verdict(
                cmd.threshold_tolerance.map_or(0.02, |n| n.get()),
                cmd.fraction_tolerance.map_or(0.05, |n| n.get()),
            );
            let mut csv = String::from("n,replications,mean_threshold,max_threshold_error,mean_fraction,max_fraction_error\n");
            for s in &report.sizes {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    s.n, s.replications, s.mean_threshold, s.max_threshold_error, s.mean_fraction, s.max_fraction_error
                );
            }
            let text = format!("posted price {}, limit fraction {}\n{verdict}\n", report.posted_price, report.limit_fraction);
            Ok(Outcome::new(text.clone()).file("limit.csv", csv).file("limit.txt", text).failing_if(!verdict.passed, "posted-price limit"))
        }
        Operation::VerifyAll => {
            let scale = match cmd.scale.unwrap_or(ScaleSpec::Full) {
                ScaleSpec::Full => SuiteScale::Full,
                ScaleSpec::Quick => SuiteScale::Quick,
            };
            let entries = run_suite(scale, seed)?;
            let mut text = String::new();
            for e in &entries {
                let _ = writeln!(text, "criterion {}: {}", e.criterion, e.report);
            }
            let failed: Vec<String> = entries.iter().filter(|e| !e.report.passed).map(|e| e.criterion.to_string()).collect();
            Ok(Outcome::new(text.clone())
                .file("verify_all.txt", text)
                .failing_if(!failed.is_empty(), format!("criteria {}", failed.join(", "))))
        }
    }
}

fn solve(economy: &Economy, profile: &[config::Number]) -> Result<Outcome, CliError> {
    let profile: Vec<f64> = profile.iter().map(|n| n.get()).collect();
    let allocation = solve_allocation(economy, &profile)?;
    let transfers = expost_transfers(economy, &profile)?;
    let mut csv = String::from("buyer,theta,consume,set_size,transfer\n");
    for (i, (&theta, &consume)) in profile.iter().zip(&allocation.consume).enumerate() {
        let size = if consume { allocation.set_size } else { 0 };
        let _ = writeln!(csv, "{i},{theta},{},{size},{}", u8::from(consume), transfers.payments[i]);
    }
    let summary = format!(
        "allocation {:?}, set size {}, transfers {:?}, profit {}\n",
        allocation.consume.iter().map(|&q| u8::from(q)).collect::<Vec<_>>(),
        allocation.set_size,
        transfers.payments,
        allocation.profit
    );
    Ok(Outcome::new(summary).file("solve.csv", csv))
}

fn benchmark(config: &RunConfig, game: &str) -> Result<(f64, f64), CliError> {
    config
        .economy
        .as_ref()
        .and_then(|e| e.benchmark_parameters())
        .ok_or_else(|| CliError::Precondition(format!("the {game} game needs the two-buyer pi family on [0, 1] without profit effects")))
}

fn indirect(operation: Operation, config: &RunConfig, economy: &Economy, seed: u64) -> Result<Outcome, CliError> {
    let cmd = &config.command;
    match cmd.game.expect("resolve() guarantees a game") {
        GameSpec::Allpay => {
            let options = AllPayOptions { seed, draws: cmd.draws.filter(|_| operation == Operation::IndirectBuild).unwrap_or(AllPayOptions::default().draws), ..AllPayOptions::default() };
            run_game(operation, config, &build_allpay(economy, options)?, seed)
        }
        GameSpec::Gift => {
            let (pi, cost) = benchmark(config, "gift")?;
            run_game(operation, config, &build_gift_game(pi, cost)?, seed)
        }
        GameSpec::Exclusivity => {
            let (pi, cost) = benchmark(config, "exclusivity")?;
            run_game(operation, config, &build_exclusivity_game(pi, cost)?, seed)
        }
    }
}

fn run_game<G: IndirectGame + std::fmt::Display>(operation: Operation, config: &RunConfig, game: &G, seed: u64) -> Result<Outcome, CliError> {
    let cmd = &config.command;
    let upper = game.economy().upper();
    if operation == Operation::IndirectBuild {
        if cmd.draws.is_some() && game.economy().n() == 2 {
            return Err(CliError::Config("draws only apply to games with more than two buyers".into()));
        }
        let grid = uniform_grid(0.0, upper, cmd.grid_points.unwrap_or(TABLE_KNOTS));
        let summary = format!("{game}\n");
        return Ok(Outcome::new(summary.clone()).file("game.txt", summary).file("strategy.csv", strategy_csv(game, &grid)?));
    }
    let types = uniform_grid(0.0, upper, cmd.types.unwrap_or(101));
    let deviations = game.deviation_grid(cmd.deviations.unwrap_or(201));
    let mut report: EquilibriumReport =
        verify_equilibrium(game, &types, &deviations, cmd.draws.unwrap_or(DEFAULT_EQUILIBRIUM_DRAWS), seed)?;
    if game.economy().n() == 2 {
        report = report.with_equivalence(verify_outcome_equivalence(game, cmd.resolution.unwrap_or(201))?);
    } else if cmd.resolution.is_some() {
        return Err(CliError::Config("outcome equivalence needs two buyers; remove resolution".into()));
    }
    let text = format!("{report}\n");
    let passed = report.passed();
    Ok(Outcome::new(text.clone())
        .file("equilibrium.txt", text)
        .file("equilibrium.csv", report.to_csv()?)
        .failing_if(!passed, format!("{} equilibrium", game.label())))
}
