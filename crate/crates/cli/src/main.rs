//! `khl`: exact moments of Rademacher sums and certificates for the
//! stability inequalities.
//!
//! Exit codes: 0 when every check passed, 1 when a check failed, 2 on usage
//! or domain errors.

mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use khl_core::constants::ConstantBundle;
use khl_core::dist::{
    absolute_moment, build_distribution, mixed_abs_moment, CoefficientVector, MomentQuery, Precision,
};
use khl_core::error::Error;
use khl_core::explore::{evaluate_samples, summarize, Conjecture, SearchConfig, Strategy};
use khl_core::psi::{psi, psi_first, psi_second, psi_second_integral, psi_second_lower_bound, PsiRegime};
use khl_core::schur::{cap_largest, diagonalize, majorizes, t_transform, SquaresVector};
use khl_core::verify::{
    verify_binomial_moment, verify_concentration, verify_crit_stability, verify_diag_stability, verify_doubling,
    verify_exchange_step, verify_gauss_stability, verify_n2_closed_form, verify_procedure_composition,
    verify_schur_monotonicity, verify_t_step, DeficitReport, ExchangeSplit, DEFAULT_TOLERANCE,
};

use output::{csv_bytes, emit, fmt_f64, json_bytes, with_manifest, RunManifest};

#[derive(Debug, Parser, Serialize)]
#[command(name = "khl", version, about = "Moments of Rademacher sums and stability certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pass/fail slack, relative to max(1, |lhs|, |rhs|).
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "KHL_JOBS")]
    jobs: Option<usize>,

    /// Seed for sampled sweeps and searches.
    #[arg(long, global = true, env = "KHL_SEED", default_value_t = 0)]
    seed: u64,

    /// Write the result here (atomically) instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// E|S|^p, or E|S + bG|^p with --gaussian-mass.
    Moment(MomentArgs),
    /// The kernel |s+√t|^p + |s−√t|^p and its t-derivatives.
    Psi(PsiArgs),
    /// Schur-order comparison, T-transformation, capping or diagonalization.
    Schur(SchurArgs),
    /// Every constant at one exponent.
    Constants(ConstantsArgs),
    /// Check one inequality on one instance, or sweep seeded instances.
    Verify(VerifyArgs),
    /// Probe the conjectured sharp constants.
    Search(SearchArgs),
}

#[derive(Debug, Args, Serialize)]
struct VectorArgs {
    /// Coefficients as a JSON array; normalized to unit norm.
    #[arg(long, conflicts_with = "a2")]
    a: Option<String>,
    /// Squared coefficients as a JSON array.
    #[arg(long)]
    a2: Option<String>,
}

impl VectorArgs {
    fn given(&self) -> bool {
        self.a.is_some() || self.a2.is_some()
    }

    fn vector(&self) -> Result<CoefficientVector, CliError> {
        match (&self.a, &self.a2) {
            (Some(raw), None) => Ok(CoefficientVector::new(parse_array("--a", raw)?)?),
            (None, Some(sq)) => Ok(CoefficientVector::from_squares(&parse_array("--a2", sq)?)?),
            _ => Err(CliError::Usage("give the vector with --a (coefficients) or --a2 (squares)".into())),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct MomentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    vector: VectorArgs,
    #[arg(long)]
    p: f64,
    /// Sum in log space.
    #[arg(long)]
    log_space: bool,
    /// Standard deviation b of an independent Gaussian added to S.
    #[arg(long)]
    gaussian_mass: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct PsiArgs {
    #[arg(long, allow_hyphen_values = true)]
    s: f64,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    p: f64,
}

#[derive(Debug, Args, Serialize)]
struct SchurArgs {
    /// Squares vector x as a JSON array.
    #[arg(long)]
    x2: String,
    /// Second squares vector: report the order between x and y.
    #[arg(long, conflicts_with_all = ["cap", "lambda"])]
    y2: Option<String>,
    /// Lower the largest entry to this value.
    #[arg(long, conflicts_with = "lambda")]
    cap: Option<f64>,
    /// Apply one T-transformation with this λ to entries --j and --k.
    #[arg(long, requires_all = ["j", "k"])]
    lambda: Option<f64>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct ConstantsArgs {
    #[arg(long)]
    p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    Gauss,
    Diag,
    Crit,
    Schur,
    Exchange,
    Tstep,
    Compose,
    Doubling,
    Binom,
    Conc,
    N2,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    claim: Claim,
    #[command(flatten)]
    #[serde(flatten)]
    vector: VectorArgs,
    /// Exponent; the positive-part claim is fixed at 3.
    #[arg(long)]
    p: Option<f64>,
    /// Second squares vector for the Schur claim.
    #[arg(long)]
    y2: Option<String>,
    /// Exchanged coordinate for the exchange claim.
    #[arg(long)]
    index: Option<usize>,
    /// Dimension for the doubling and binomial claims.
    #[arg(long)]
    n: Option<usize>,
    /// x in [0, 1/2] for the two-coefficient claim.
    #[arg(long)]
    x: Option<f64>,
    /// Gaussian mass b for the concentration claim.
    #[arg(long, default_value_t = 0.0)]
    gaussian_mass: f64,
    /// Small-ball level for the concentration claim.
    #[arg(long)]
    level: Option<f64>,
    /// Check this many seeded instances and emit CSV.
    #[arg(long)]
    sweep: Option<usize>,
    #[arg(long, default_value_t = 1)]
    n_min: usize,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ConjectureArg {
    Gauss,
    Crit,
}

#[derive(Debug, Args, Serialize)]
struct SearchArgs {
    #[arg(long, value_enum)]
    conjecture: ConjectureArg,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    n_min: usize,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// simplex | near_diagonal | spiky | grid | mixed
    #[arg(long, default_value = "mixed")]
    strategy: String,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Also write one row per sample here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

fn parse_array(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{flag} must be a JSON array of numbers: {e}")))
}

fn require<T: Copy>(value: Option<T>, flag: &str, claim: Claim) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required for --claim {claim:?}").to_lowercase()))
}

/// Outcome of a subcommand: bytes to emit and whether every check passed.
struct Emitted {
    bytes: Vec<u8>,
    passed: bool,
}

fn json_result(manifest: &RunManifest, body: &impl Serialize, passed: bool) -> Emitted {
    Emitted {
        bytes: json_bytes(&with_manifest(manifest, body)),
        passed,
    }
}

fn moment_cmd(cli: &Cli, args: &MomentArgs) -> Result<Emitted, CliError> {
    let a = args.vector.vector()?;
    let d = build_distribution(&a)?;
    let precision = if args.log_space { Precision::LogSpace } else { Precision::Standard };
    let value = match args.gaussian_mass {
        Some(b) => mixed_abs_moment(&d, b, args.p)?,
        None => absolute_moment(&d, &MomentQuery::new(args.p, precision)?),
    };
    let manifest = RunManifest::new("moment", args, cli.seed, cli.tol);
    let body = json!({
        "n": a.len(),
        "p": args.p,
        "precision": if args.log_space { "log_space" } else { "standard" },
        "gaussian_mass": args.gaussian_mass,
        "coefficients": a,
        "value": value,
    });
    Ok(json_result(&manifest, &body, true))
}

fn psi_cmd(cli: &Cli, args: &PsiArgs) -> Result<Emitted, CliError> {
    let (s, t, p) = (args.s, args.t, args.p);
    let regime = PsiRegime::from_p(p)?;
    let integral = if p > 3.0 { Some(psi_second_integral(s, t, p)?) } else { None };
    let body = json!({
        "s": s,
        "t": t,
        "p": p,
        "regime": regime.label(),
        "psi": psi(s, t, p)?,
        "psi_first": psi_first(s, t, p)?,
        "psi_second": psi_second(s, t, p)?,
        "psi_second_integral": integral,
        "psi_second_lower_bound": psi_second_lower_bound(s, t, p)?,
    });
    Ok(json_result(&RunManifest::new("psi", args, cli.seed, cli.tol), &body, true))
}

fn schur_cmd(cli: &Cli, args: &SchurArgs) -> Result<Emitted, CliError> {
    let x = SquaresVector::new(parse_array("--x2", &args.x2)?)?;
    let body = if let Some(y2) = &args.y2 {
        let y = SquaresVector::new(parse_array("--y2", y2)?)?;
        json!({
            "x": x,
            "y": y,
            "x_precedes_y": majorizes(&x, &y),
            "y_precedes_x": majorizes(&y, &x),
            "x_sum_of_squares": x.sum_of_squares(),
            "y_sum_of_squares": y.sum_of_squares(),
        })
    } else if let Some(lambda) = args.lambda {
        let (j, k) = (args.j.unwrap_or_default(), args.k.unwrap_or_default());
        json!({ "x": x, "result": t_transform(&x, j, k, lambda)? })
    } else if let Some(cap) = args.cap {
        let steps = cap_largest(&x, cap)?;
        json!({ "x": x, "cap": cap, "steps": steps })
    } else {
        json!({ "x": x, "steps": diagonalize(&x) })
    };
    Ok(json_result(&RunManifest::new("schur", args, cli.seed, cli.tol), &body, true))
}

fn constants_cmd(cli: &Cli, args: &ConstantsArgs) -> Result<Emitted, CliError> {
    let bundle = ConstantBundle::compute(args.p)?;
    Ok(json_result(&RunManifest::new("constants", args, cli.seed, cli.tol), &bundle, true))
}

fn verify_single(args: &VerifyArgs) -> Result<DeficitReport, CliError> {
    let claim = args.claim;
    let p = || require(args.p, "p", claim);
    let vector = || args.vector.vector();
    Ok(match claim {
        Claim::Gauss => verify_gauss_stability(&vector()?, p()?)?,
        Claim::Diag => verify_diag_stability(&vector()?, p()?)?,
        Claim::Crit => verify_crit_stability(&vector()?)?,
        Claim::Tstep => verify_t_step(&vector()?, p()?)?,
        Claim::Compose => verify_procedure_composition(&vector()?, p()?)?,
        Claim::Exchange => {
            let split = ExchangeSplit::new(vector()?, require(args.index, "index", claim)?)?;
            verify_exchange_step(&split, p()?)?
        }
        Claim::Schur => {
            let x = SquaresVector::from_coefficients(&vector()?);
            let y2 = args.y2.as_deref().ok_or_else(|| CliError::Usage("--y2 is required for --claim schur".into()))?;
            let y = SquaresVector::new(parse_array("--y2", y2)?)?;
            verify_schur_monotonicity(&x, &y, p()?)?
        }
        Claim::Doubling => verify_doubling(require(args.n, "n", claim)?, p()?)?,
        Claim::Binom => verify_binomial_moment(require(args.n, "n", claim)?, p()?)?,
        Claim::Conc => verify_concentration(&vector()?, args.gaussian_mass, args.level)?,
        Claim::N2 => verify_n2_closed_form(require(args.x, "x", claim)?, p()?)?,
    })
}

const SWEEP_HEADER: [&str; 7] = ["claim_id", "n", "p", "lhs", "rhs", "margin", "passed"];

fn verify_cmd(cli: &Cli, args: &VerifyArgs) -> Result<Emitted, CliError> {
    if let Some(count) = args.sweep {
        if count == 0 {
            return Err(CliError::Usage("--sweep needs a positive count".into()));
        }
        if args.vector.given() {
            return Err(CliError::Usage("--sweep samples its own vectors; drop --a/--a2".into()));
        }
        let p = if args.claim == Claim::Crit { 3.0 } else { require(args.p, "p", args.claim)? };
        let spec = sweep::SweepSpec {
            claim: args.claim,
            p,
            count,
            seed: cli.seed,
            n_min: args.n_min,
            n_max: args.n_max,
            gaussian_mass: args.gaussian_mass,
        };
        let mut reports = spec.run()?;
        reports.iter_mut().for_each(|r| r.recheck(cli.tol));
        let passed = reports.iter().all(|r| r.passed);
        let rows = reports.iter().map(|r| {
            vec![
                r.claim_id.clone(),
                r.n.to_string(),
                fmt_f64(r.p),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.margin),
                r.passed.to_string(),
            ]
        });
        return Ok(Emitted {
            bytes: csv_bytes(&SWEEP_HEADER, rows)?,
            passed,
        });
    }
    let mut report = verify_single(args)?;
    report.recheck(cli.tol);
    let passed = report.passed;
    Ok(json_result(&RunManifest::new("verify", args, cli.seed, cli.tol), &report, passed))
}

fn search_cmd(cli: &Cli, args: &SearchArgs) -> Result<Emitted, CliError> {
    let cfg = SearchConfig {
        p: args.p,
        n_min: args.n_min,
        n_max: args.n_max,
        samples: args.samples,
        seed: cli.seed,
        strategy: Strategy::parse(&args.strategy, args.grid_step)?,
    };
    let conjecture = match args.conjecture {
        ConjectureArg::Gauss => Conjecture::Gauss,
        ConjectureArg::Crit => Conjecture::Crit,
    };
    let records = evaluate_samples(conjecture, &cfg)?;
    let outcome = summarize(conjecture, &cfg, &records)?;
    if let Some(path) = &args.csv {
        let rows = records.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.n.to_string(),
                fmt_f64(r.margin),
                r.ratio.map(fmt_f64).unwrap_or_default(),
                r.violation.to_string(),
                serde_json::to_string(&r.vector).expect("vector encodes"),
            ]
        });
        emit(Some(path), &csv_bytes(&["index", "n", "margin", "ratio", "violation", "coefficients"], rows)?)?;
    }
    let passed = outcome.violations == 0;
    Ok(json_result(&RunManifest::new("search", args, cli.seed, cli.tol), &outcome, passed))
}

fn dispatch(cli: &Cli) -> Result<Emitted, CliError> {
    if !(cli.tol.is_finite() && cli.tol >= 0.0) {
        return Err(CliError::Usage(format!("--tol must be finite and >= 0, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Moment(a) => moment_cmd(cli, a),
        Command::Psi(a) => psi_cmd(cli, a),
        Command::Schur(a) => schur_cmd(cli, a),
        Command::Constants(a) => constants_cmd(cli, a),
        Command::Verify(a) => verify_cmd(cli, a),
        Command::Search(a) => search_cmd(cli, a),
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let emitted = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?
            .install(|| dispatch(cli))?,
        None => dispatch(cli)?,
    };
    match emit(cli.output.as_deref(), &emitted.bytes) {
        // a closed reader (e.g. `| head`) is not an error of ours
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        other => other?,
    }
    Ok(emitted.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("khl: {e}");
            ExitCode::from(2)
        }
    }
}
