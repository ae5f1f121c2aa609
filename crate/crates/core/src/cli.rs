//! Command-line front end. `run` writes to the given sink so the binary and
//! the integration tests share one code path.

use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::arith;
use crate::config::{Config, ConfigError};
use crate::densities::{self, DensityError, DensityMethod};
use crate::engine::{self, EngineError, ParameterInputs, WitnessQuery};
use crate::enumerate::{self, EnumerateError, EpsilonRule, Strategy};
use crate::exact;
use crate::point::{snap_dyadic, BallSpec, CoreError, RationalGroupPoint, DEFAULT_PRECISION_BITS};
use crate::poly::{PolyError, PolynomialFamily};
use crate::sieve::{self, BetaParams, Factorizer, SieveError, SieveInputs};
use crate::spectral::{self, SpectralError};
use crate::volumes::{self, VolumeError};

pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_NO_WITNESS: i32 = 3;
pub const EXIT_INVALID: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Group {
    Sl2,
    Sl3,
}

impl Group {
    pub fn dim(self) -> usize {
        match self {
            Group::Sl2 => 2,
            Group::Sl3 => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "slnapprox",
    version,
    about = "Rational points of bounded denominator on SL_N: counts, volumes, densities, sieve bounds and witnesses"
)]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value = "sl2")]
    pub group: Group,
    /// JSON output.
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// CSV output.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Overrides every search budget (cells, rows, vertices).
    #[arg(long, global = true)]
    pub budget: Option<u128>,
    /// Seed for the randomized factorizer.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the points of B_n(x, eps) ∩ Gamma_n as JSON lines.
    Enumerate(EnumerateArgs),
    /// Local ball volumes against the HNF oracle.
    Volumes(VolumesArgs),
    /// Local densities rho(q).
    Density(DensityArgs),
    /// Sieve report for an enumerated point set.
    Sieve(SieveArgs),
    /// Hecke operator spectral gaps.
    Spectral(SpectralArgs),
    /// alpha0, r, kappa and tau0.
    Params(ParamsArgs),
    /// Point of denominator n near x with fewest prime factors in [f(z)]_n.
    Witness(WitnessArgs),
    /// Ratios T_n(x) / ((2 eps)^d m(B_n^f)) and their spread.
    VerifyCount(VerifyCountArgs),
}

#[derive(Debug, Args)]
pub struct CenterArgs {
    /// Center entries, row-major, as decimals (snapped to the dyadic grid).
    /// Defaults to the identity.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "x_exact")]
    pub x: Option<Vec<f64>>,
    /// Center entries as exact rationals, e.g. `1,1/2,0,1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x_exact: Option<Vec<String>>,
}

impl CenterArgs {
    fn center(&self, dim: usize) -> Result<Vec<BigRational>, CliError> {
        if let Some(xs) = &self.x {
            return Ok(xs.iter().map(|&v| snap_dyadic(v, DEFAULT_PRECISION_BITS)).collect());
        }
        if let Some(xs) = &self.x_exact {
            return xs.iter().map(|s| rational(s)).collect();
        }
        Ok(RationalGroupPoint::identity(dim).to_rationals())
    }
}

#[derive(Debug, Args)]
pub struct PolyArgs {
    /// Preset: entry11, entries11-22, trace-minus-2 or entryIJ.
    #[arg(long, default_value = "entry11")]
    pub poly: String,
    /// JSON polynomial family; overrides --poly.
    #[arg(long)]
    pub poly_file: Option<PathBuf>,
}

impl PolyArgs {
    fn family(&self, dim: usize) -> Result<PolynomialFamily, CliError> {
        let fam = match &self.poly_file {
            Some(path) => PolynomialFamily::from_json_file(path)?,
            None => PolynomialFamily::preset(&self.poly, dim)?,
        };
        if fam.dim != dim {
            return Err(CliError::Invalid(format!(
                "polynomial family is for N = {}, group has N = {dim}",
                fam.dim
            )));
        }
        Ok(fam)
    }
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub center: CenterArgs,
    #[arg(long)]
    pub n: u64,
    /// Radius, decimal or fraction.
    #[arg(long, allow_hyphen_values = true)]
    pub eps: String,
    #[arg(long, value_enum, default_value = "optimized")]
    pub strategy: StrategyArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Optimized,
    Oracle,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Optimized => Strategy::Optimized,
            StrategyArg::Oracle => Strategy::Oracle,
        }
    }
}

#[derive(Debug, Args)]
pub struct VolumesArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3,5,7,11,13")]
    pub primes: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    pub lmax: u32,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub poly: PolyArgs,
    /// Square-free moduli.
    #[arg(long, value_delimiter = ',', conflicts_with = "p_range")]
    pub q: Option<Vec<u64>>,
    /// All primes in `a..b` (inclusive).
    #[arg(long)]
    pub p_range: Option<String>,
    /// Moduli must be coprime to n.
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    #[arg(long, value_enum, default_value = "product")]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Direct,
    Product,
}

#[derive(Debug, Args)]
pub struct SieveArgs {
    /// JSON-lines point file from `enumerate`; `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    #[command(flatten)]
    pub poly: PolyArgs,
    /// Defaults to the common denominator of the input points.
    #[arg(long)]
    pub n: Option<u64>,
    /// Delta_n(f); computed from elementary generators when omitted.
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 10.0)]
    pub s: f64,
    #[arg(long, default_value_t = 3.0)]
    pub l: f64,
    #[arg(long, default_value_t = 50)]
    pub q_max: u64,
    #[arg(long, default_value_t = 2.0)]
    pub w: f64,
    #[arg(long, default_value_t = 3.0)]
    pub c3: f64,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[arg(long)]
    pub p: u64,
    #[arg(long)]
    pub q: u64,
    #[arg(long, default_value_t = 4)]
    pub lmax: u32,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Requested exponent, decimal or fraction.
    #[arg(long)]
    pub alpha: String,
    /// Growth exponent; exact 2 for SL_2.
    #[arg(long)]
    pub a: Option<String>,
    #[command(flatten)]
    pub poly: PolyArgs,
    /// delta_n(f) directly.
    #[arg(long, conflicts_with = "n")]
    pub delta: Option<u32>,
    /// Compute delta_n(f) for this n.
    #[arg(long)]
    pub n: Option<u64>,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub center: CenterArgs,
    #[arg(long)]
    pub n: u64,
    /// Radius n^-alpha; decimal or fraction.
    #[arg(long, conflicts_with = "radius")]
    pub alpha: Option<String>,
    /// Explicit radius, decimal or fraction.
    #[arg(long)]
    pub radius: Option<String>,
    #[command(flatten)]
    pub poly: PolyArgs,
    #[arg(long, value_enum, default_value = "optimized")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 8)]
    pub max_doublings: u32,
}

#[derive(Debug, Args)]
pub struct VerifyCountArgs {
    /// Center, row-major decimals; repeat for several centers. Defaults to the identity.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<u64>,
    /// Fixed radius.
    #[arg(long, conflicts_with = "alpha_prime")]
    pub eps: Option<String>,
    /// Radius m(B_n^f)^-alpha'.
    #[arg(long)]
    pub alpha_prime: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub threshold: usize,
    #[arg(long, value_enum, default_value = "optimized")]
    pub strategy: StrategyArg,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Sieve(#[from] SieveError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(EngineError::NoWitness { .. }) => EXIT_NO_WITNESS,
            CliError::Engine(EngineError::Enumerate(e)) | CliError::Enumerate(e) => enumerate_code(e),
            CliError::Engine(EngineError::Volume(e)) | CliError::Volume(e) => volume_code(e),
            CliError::Engine(EngineError::Density(e)) | CliError::Density(e) => density_code(e),
            CliError::Engine(EngineError::Sieve(e)) | CliError::Sieve(e) => match e {
                SieveError::Density(d) | SieveError::MissingDensities { source: d, .. } => density_code(d),
                _ => EXIT_INVALID,
            },
            CliError::Spectral(SpectralError::BudgetExceeded { .. }) => EXIT_BUDGET,
            CliError::Spectral(SpectralError::ConvergenceFailure { .. } | SpectralError::GeneratorMismatch { .. }) => 1,
            CliError::Io(_) => 1,
            _ => EXIT_INVALID,
        }
    }
}

fn enumerate_code(e: &EnumerateError) -> i32 {
    match e {
        EnumerateError::SearchSpaceTooLarge { .. } => EXIT_BUDGET,
        EnumerateError::Aborted => 1,
        EnumerateError::Volume(v) => volume_code(v),
        _ => EXIT_INVALID,
    }
}

fn volume_code(e: &VolumeError) -> i32 {
    match e {
        VolumeError::UnsupportedDimension { .. } => EXIT_BUDGET,
        VolumeError::LevelInsufficient { .. } | VolumeError::NoRecurrenceFound { .. } => 1,
        _ => EXIT_INVALID,
    }
}

fn density_code(e: &DensityError) -> i32 {
    match e {
        DensityError::BudgetExceeded { .. } | DensityError::NonStabilized { .. } => EXIT_BUDGET,
        _ => EXIT_INVALID,
    }
}

fn rational(s: &str) -> Result<BigRational, CliError> {
    exact::parse_rational(s).map_err(CliError::Invalid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

impl Cli {
    fn format(&self, default: Format) -> Format {
        if self.json {
            Format::Json
        } else if self.csv {
            Format::Csv
        } else {
            default
        }
    }

    fn load_config(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(b) = self.budget {
            let budgets = &mut cfg.budgets;
            budgets.oracle_cells = b;
            budgets.optimized_rows = b;
            budgets.density_cells = b;
            budgets.vertices = usize::try_from(b).unwrap_or(usize::MAX);
        }
        Ok(cfg)
    }

    fn factorizer(&self, cfg: &Config) -> Factorizer {
        let mut f = Factorizer {
            budget: cfg.factor_budget(),
            ..Factorizer::default()
        };
        if let Some(seed) = self.seed {
            f.seed = seed;
        }
        f
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.load_config()?;
    let dim = cli.group.dim();
    match &cli.command {
        Command::Enumerate(a) => cmd_enumerate(cli, &cfg, dim, a, out),
        Command::Volumes(a) => cmd_volumes(cli, dim, a, out),
        Command::Density(a) => cmd_density(cli, &cfg, dim, a, out),
        Command::Sieve(a) => cmd_sieve(cli, &cfg, dim, a, out),
        Command::Spectral(a) => cmd_spectral(cli, &cfg, dim, a, out),
        Command::Params(a) => cmd_params(cli, &cfg, dim, a, out),
        Command::Witness(a) => cmd_witness(cli, &cfg, dim, a, out),
        Command::VerifyCount(a) => cmd_verify_count(cli, &cfg, dim, a, out),
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_enumerate(cli: &Cli, cfg: &Config, dim: usize, a: &EnumerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ball = BallSpec::new(dim, a.center.center(dim)?, rational(&a.eps)?, a.n)?;
    let res = enumerate::enumerate_points(&ball, a.strategy.into(), &cfg.enumeration_options())?;
    match cli.format(Format::Json) {
        Format::Json => out.write_all(res.to_json_lines().as_bytes())?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            let mut header: Vec<String> = (0..dim * dim)
                .map(|k| format!("u{}{}", k / dim + 1, k % dim + 1))
                .collect();
            header.push("v".into());
            w.write_record(&header)?;
            for z in &res.points {
                let mut rec: Vec<String> = z.numerator().iter().map(|x| x.to_string()).collect();
                rec.push(z.den().to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_volumes(cli: &Cli, dim: usize, a: &VolumesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = volumes::volume_rows(dim, &a.primes, a.lmax)?;
    match cli.format(Format::Csv) {
        Format::Csv => out.write_all(volumes::volume_rows_csv(&rows).as_bytes())?,
        Format::Json => write_json(out, &rows)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct DensityRow {
    q: u64,
    rho_num: String,
    rho_den: String,
    order: u128,
}

fn cmd_density(cli: &Cli, cfg: &Config, dim: usize, a: &DensityArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fam = a.poly.family(dim)?;
    let qs = match (&a.q, &a.p_range) {
        (Some(qs), _) => qs.clone(),
        (None, Some(range)) => {
            let (lo, hi) = range
                .split_once("..")
                .and_then(|(l, h)| Some((l.trim().parse::<u64>().ok()?, h.trim().parse::<u64>().ok()?)))
                .ok_or_else(|| CliError::Invalid(format!("--p-range {range:?}: expected a..b")))?;
            arith::primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect()
        }
        (None, None) => return Err(CliError::Invalid("pass --q or --p-range".into())),
    };
    let method = match a.method {
        MethodArg::Direct => DensityMethod::Direct,
        MethodArg::Product => DensityMethod::Product,
    };
    let mut rows = Vec::with_capacity(qs.len());
    for q in qs {
        if num_integer::gcd(q, a.n) != 1 {
            return Err(DensityError::NotCoprime { q, n: a.n }.into());
        }
        let rho = densities::local_density(&fam, q, method, cfg.budgets.density_cells)?;
        rows.push(DensityRow {
            q,
            rho_num: rho.numer().to_string(),
            rho_den: rho.denom().to_string(),
            order: densities::sl_order(dim, q),
        });
    }
    match cli.format(Format::Csv) {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => write_json(out, &rows)?,
    }
    Ok(())
}

/// `Delta_n(f)` from the generator search; a non-stabilized search falls back
/// to its best value with a warning.
fn delta_value(fam: &PolynomialFamily, n: u64, cfg: &Config) -> Result<(BigUint, u32), CliError> {
    match densities::delta_n(fam, n, cfg.budgets.gcd_samples, cfg.budgets.gcd_window) {
        Ok(c) => Ok((c.delta, c.small_delta)),
        Err(DensityError::NonStabilized { certificate, .. }) => {
            eprintln!(
                "warning: Delta_n(f) did not stabilize after {} samples; using {}",
                certificate.sample_size, certificate.delta
            );
            Ok((certificate.delta, certificate.small_delta))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_sieve(cli: &Cli, cfg: &Config, dim: usize, a: &SieveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    if a.input == "-" {
        std::io::stdin().read_to_string(&mut text)?;
    } else {
        text = std::fs::read_to_string(&a.input)?;
    }
    let points = enumerate::parse_json_lines(&text)?;
    if let Some(z) = points.iter().find(|z| z.dim() != dim) {
        return Err(CliError::Invalid(format!(
            "input point has N = {}, group has N = {dim}",
            z.dim()
        )));
    }
    let n = match a.n {
        Some(n) => n,
        None => {
            let mut dens = points.iter().map(|z| z.den().clone());
            let first = dens
                .next()
                .ok_or_else(|| CliError::Invalid("empty point set; pass --n".into()))?;
            if dens.any(|d| d != first) {
                return Err(CliError::Invalid(
                    "input points have different denominators; pass --n".into(),
                ));
            }
            u64::try_from(&first).map_err(|_| CliError::Invalid(format!("denominator {first} too large")))?
        }
    };
    let fam = a.poly.family(dim)?;
    let delta = match &a.delta {
        Some(s) => s
            .parse::<BigUint>()
            .map_err(|e| CliError::Invalid(format!("--delta {s:?}: {e}")))?,
        None => delta_value(&fam, n, cfg)?.0,
    };
    let report = sieve::sieve_report(&SieveInputs {
        points: &points,
        family: &fam,
        n,
        delta,
        beta: BetaParams {
            tau: a.tau,
            s: a.s,
            l: a.l,
            c1: cfg.c1,
            c2: cfg.c2,
        },
        q_max: a.q_max,
        w: a.w,
        c3: a.c3,
        factorizer: cli.factorizer(cfg),
    })?;
    write_json(out, &report)
}

fn cmd_spectral(cli: &Cli, cfg: &Config, dim: usize, a: &SpectralArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if dim != 2 {
        return Err(CliError::Invalid("spectral models are built for SL_2 only".into()));
    }
    let ls: Vec<u32> = (1..=a.lmax).collect();
    let report = spectral::gap_decay_report(a.p, a.q, &ls, cfg.budgets.vertices)?;
    match cli.format(Format::Csv) {
        Format::Csv => out.write_all(report.to_csv().as_bytes())?,
        Format::Json => write_json(out, &report)?,
    }
    Ok(())
}

fn parameter_inputs(
    dim: usize,
    alpha: BigRational,
    a: Option<&str>,
    fam: &PolynomialFamily,
    delta: u32,
    cfg: &Config,
) -> Result<ParameterInputs, CliError> {
    let r_g = cfg.r_g_exact()?;
    let iota = cfg.iota();
    match a {
        Some(a) => Ok(ParameterInputs {
            d: (dim * dim - 1) as u32,
            a: rational(a)?,
            iota,
            r_g,
            alpha,
            t: fam.count() as u32,
            deg_f: fam.total_degree(),
            delta_n: delta,
        }),
        None => Ok(ParameterInputs::for_sl(dim, alpha, iota, r_g, fam, delta)?),
    }
}

fn cmd_params(_cli: &Cli, cfg: &Config, dim: usize, a: &ParamsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fam = a.poly.family(dim)?;
    let delta = match (a.delta, a.n) {
        (Some(d), _) => d,
        (None, Some(n)) => delta_value(&fam, n, cfg)?.1,
        (None, None) => 0,
    };
    let inputs = parameter_inputs(dim, rational(&a.alpha)?, a.a.as_deref(), &fam, delta, cfg)?;
    let params = engine::theorem_parameters(&inputs)?;
    write_json(out, &params)
}

fn cmd_witness(cli: &Cli, cfg: &Config, dim: usize, a: &WitnessArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fam = a.poly.family(dim)?;
    let alpha = a.alpha.as_deref().map(rational).transpose()?;
    let alpha_f = alpha.as_ref().and_then(|x| x.to_f64());
    let radius = match (alpha_f, &a.radius) {
        (Some(alpha), _) => engine::witness_radius(a.n, alpha)?,
        (None, Some(r)) => rational(r)?,
        (None, None) => return Err(CliError::Invalid("pass --alpha or --radius".into())),
    };
    let query = WitnessQuery {
        dim,
        center: a.center.center(dim)?,
        n: a.n,
        radius,
        alpha: alpha_f,
        family: &fam,
        strategy: a.strategy.into(),
        options: cfg.enumeration_options(),
        factorizer: cli.factorizer(cfg),
        max_doublings: a.max_doublings,
    };
    let mut record = engine::find_witness(&query)?;
    if let (Some(alpha), 2) = (alpha, dim) {
        let delta = delta_value(&fam, a.n, cfg)?.1;
        let inputs = parameter_inputs(dim, alpha, None, &fam, delta, cfg)?;
        record.theorem_r = match engine::theorem_parameters(&inputs) {
            Ok(p) => Some(p.r),
            Err(EngineError::AlphaTooLarge { .. }) => None,
            Err(e) => return Err(e.into()),
        };
    }
    match cli.format(Format::Json) {
        Format::Json => write_json(out, &record),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record([
                "n",
                "radius",
                "z",
                "distance",
                "factor_count",
                "complete",
                "theorem_r",
                "candidates",
            ])?;
            w.write_record([
                record.n.to_string(),
                record.radius.to_string(),
                serde_json::to_string(&record.z)?,
                record.distance.to_string(),
                record.factor_count.to_string(),
                record.complete.to_string(),
                record.theorem_r.as_ref().map(BigInt::to_string).unwrap_or_default(),
                record.candidates.to_string(),
            ])?;
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_verify_count(
    cli: &Cli,
    cfg: &Config,
    dim: usize,
    a: &VerifyCountArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let centers: Vec<Vec<BigRational>> = if a.x.is_empty() {
        vec![RationalGroupPoint::identity(dim).to_rationals()]
    } else {
        let flat: Vec<BigRational> =
            a.x.iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(|v| snap_dyadic(v, DEFAULT_PRECISION_BITS))
                        .or_else(|_| rational(s))
                })
                .collect::<Result<_, _>>()?;
        if !flat.len().is_multiple_of(dim * dim) {
            return Err(CliError::Invalid(format!(
                "--x gave {} entries, not a multiple of {}",
                flat.len(),
                dim * dim
            )));
        }
        flat.chunks(dim * dim).map(<[BigRational]>::to_vec).collect()
    };
    let rule = match (&a.eps, a.alpha_prime) {
        (Some(e), _) => EpsilonRule::Fixed(rational(e)?),
        (None, Some(ap)) => EpsilonRule::Power { alpha_prime: ap },
        (None, None) => return Err(CliError::Invalid("pass --eps or --alpha-prime".into())),
    };
    let report = engine::counting_verification(
        dim,
        &centers,
        &a.n,
        &rule,
        a.threshold,
        a.strategy.into(),
        &cfg.enumeration_options(),
    )?;
    match cli.format(Format::Json) {
        Format::Json => write_json(out, &report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["x_index", "n", "epsilon", "count", "ratio"])?;
            for c in &report.cells {
                w.write_record([
                    c.x_index.to_string(),
                    c.n.to_string(),
                    c.epsilon.to_string(),
                    c.count.map(|t| t.to_string()).unwrap_or_default(),
                    c.ratio.map(|r| r.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            drop(w);
            match report.spread {
                Some(s) => writeln!(out, "# spread={s:.6} cells={}", report.significant_cells)?,
                None => writeln!(out, "# spread=not-significant threshold={}", report.count_threshold)?,
            }
        }
    }
    Ok(())
}
