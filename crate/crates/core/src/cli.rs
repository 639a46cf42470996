//! The `marginalpriv` command line.
//!
//! ```text
//! marginalpriv [--seed S] [--trials T] [--jobs J] [--out PATH] [--format csv|json] <command>
//!   gen      -n ROWS [-d DIMS] [--dist uniform|biased|fpc] [--p P] [--delta D]
//!   release  --mechanism KIND --db PATH [--epsilon E] [--delta D]
//!   attack   --mechanism ... -n ROWS --delta D [--k auto|K] [--experiment tracing|packing]
//!   bounds   -d DIMS --alpha A --epsilon E [--delta D]
//! ```
//!
//! Randomness: component `label` (`gen`, `release`, ...) and trial `t` draw
//! from `derive_seed(seed, label, t)`. The seed comes from `--seed`, then
//! `MARGINALPRIV_SEED`, then 0.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or malformed input, 4 parameter or
//! numeric domain error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::attacks::{
    default_group_size, packing_experiment, tracing_attack, PackingExperimentConfig, TracingAttackConfig,
};
use crate::bounds::sample_complexity_bounds;
use crate::database::{Database, DatabaseFormat};
use crate::error::Error;
use crate::fingerprinting::{fpc_generate, fpc_min_length};
use crate::format::{fmt_num, to_json_value, write_json_line, write_marginals_csv, write_table_csv};
use crate::gauss_sv::GaussSvConfig;
use crate::marginals::{l1_error, linf_error};
use crate::mechanisms::{linf_tail_exact, marginal_sensitivity, GaussianCalibration, Mechanism, ReleaseOracle};
use crate::rng::{derive_rng, derive_seed};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;

/// Column names of the `bounds` table.
pub const BOUNDS_COLUMNS: [&str; 9] = [
    "d",
    "alpha",
    "epsilon",
    "delta",
    "laplace-approx-upper",
    "laplace-pure-upper",
    "fingerprinting-lower",
    "gauss-sv-upper",
    "packing-lower",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::Io(_) | Error::Format(_)) => EXIT_IO,
            CliError::Lib(_) => EXIT_DOMAIN,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "marginalpriv", version, about = "Private one-way marginals: releases, attacks and bounds")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, env = "MARGINALPRIV_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Independent repetitions (release default 1, attack default 100).
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output file; stdout when omitted (required by gen and release).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Add wall-clock seconds to summaries (makes them run-dependent).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a ±1 database.
    Gen(GenArgs),
    /// Release the marginals of a database.
    Release(ReleaseArgs),
    /// Run the tracing attack or the packing experiment against a mechanism.
    Attack(AttackArgs),
    /// Print sample-complexity bounds.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Biased,
    /// Fingerprinting codebook; writes a sidecar next to the output.
    Fpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DbFormat {
    Binary,
    Text,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(short = 'n', long = "rows")]
    pub rows: usize,
    /// Columns; defaults to the minimum code length for `--dist fpc`.
    #[arg(short = 'd', long = "dims")]
    pub dims: Option<usize>,
    #[arg(long, value_enum, default_value_t = Distribution::Uniform)]
    pub dist: Distribution,
    /// P[+1] for `--dist biased`.
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// Code soundness for `--dist fpc`.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = DbFormat::Binary)]
    pub db_format: DbFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Exact,
    Constant,
    Laplace,
    Gaussian,
    Linf,
    GaussSv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrationArg {
    Baseline,
    Analytic,
}

impl From<CalibrationArg> for GaussianCalibration {
    fn from(c: CalibrationArg) -> Self {
        match c {
            CalibrationArg::Baseline => GaussianCalibration::Baseline,
            CalibrationArg::Analytic => GaussianCalibration::Analytic,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct MechanismArgs {
    #[arg(long, value_enum)]
    pub mechanism: MechanismKind,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long = "mech-delta", allow_negative_numbers = true)]
    pub mech_delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = CalibrationArg::Baseline)]
    pub calibration: CalibrationArg,
    /// Output value of the constant oracle.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub constant: f64,
    /// gauss-sv: override σ.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// gauss-sv: override the accuracy target α.
    #[arg(long = "gsv-alpha", allow_negative_numbers = true)]
    pub gsv_alpha: Option<f64>,
    /// gauss-sv: override the flag budget c.
    #[arg(long)]
    pub flags: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReleaseArgs {
    #[arg(long, value_enum)]
    pub mechanism: MechanismKind,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = CalibrationArg::Baseline)]
    pub calibration: CalibrationArg,
    /// Output value of the constant oracle.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub constant: f64,
    /// Report how often the L∞ error stays below this value.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// gauss-sv: override σ.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// gauss-sv: override the accuracy target α.
    #[arg(long = "gsv-alpha", allow_negative_numbers = true)]
    pub gsv_alpha: Option<f64>,
    /// gauss-sv: override the flag budget c.
    #[arg(long)]
    pub flags: Option<usize>,
    /// Also write the JSON summary here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Tracing,
    Packing,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long, value_enum, default_value_t = Experiment::Tracing)]
    pub experiment: Experiment,
    #[command(flatten)]
    pub mechanism: MechanismArgs,
    /// Rows of the database handed to the mechanism.
    #[arg(short = 'n', long = "rows")]
    pub rows: usize,
    /// Code soundness δ (tracing).
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Copy factor: `auto` or a positive integer (tracing).
    #[arg(long, default_value = "auto")]
    pub k: String,
    /// Columns (code length for tracing, required for packing).
    #[arg(short = 'd', long = "dims")]
    pub dims: Option<usize>,
    /// User whose row is replaced before release (tracing).
    #[arg(long, default_value_t = 0)]
    pub exclude: usize,
    /// Do not replace any user's row (tracing).
    #[arg(long)]
    pub no_exclude: bool,
    /// Deviation parameter λ (packing); √d/20 by default.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(short = 'd', long = "dims")]
    pub dims: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| usage(format!("cannot start {} worker threads: {e}", cli.jobs.unwrap_or(0))))?;
    let outcome = pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Release(a) => cmd_release(cli, a, started),
        Command::Attack(a) => cmd_attack(cli, a, started),
        Command::Bounds(a) => cmd_bounds(cli, a),
    });
    info!("finished in {:.3} s", started.elapsed().as_secs_f64());
    outcome
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn open_out(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| with_path(e.into(), p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn required_out(cli: &Cli, command: &str) -> CliResult<PathBuf> {
    cli.out.clone().ok_or_else(|| usage(format!("{command} requires --out")))
}

/// Stable identifier of `(subcommand, parameters, seed)`.
fn experiment_id(subcommand: &str, params: &Value, seed: u64) -> String {
    format!("{:016x}", derive_seed(seed, &format!("{subcommand}:{params}"), 0))
}

fn finish_summary(cli: &Cli, mut summary: Value, started: Instant) -> Value {
    if cli.timing {
        summary["wall_clock_seconds"] = json!(started.elapsed().as_secs_f64());
    }
    summary
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> CliResult<()> {
    let out = required_out(cli, "gen")?;
    let mut rng = derive_rng(cli.seed, "gen", 0);
    let format = match a.db_format {
        DbFormat::Binary => DatabaseFormat::Binary,
        DbFormat::Text => DatabaseFormat::Text,
    };
    let need_dims = || a.dims.ok_or_else(|| usage("--dims is required for this distribution"));
    match a.dist {
        Distribution::Uniform => Database::uniform(a.rows, need_dims()?, &mut rng)?.save(&out, format)?,
        Distribution::Biased => {
            let p = a.p.ok_or_else(|| usage("--dist biased requires --p"))?;
            Database::biased(a.rows, need_dims()?, p, &mut rng)?.save(&out, format)?
        }
        Distribution::Fpc => {
            let delta = a.delta.ok_or_else(|| usage("--dist fpc requires --delta"))?;
            let d = match a.dims {
                Some(d) => d,
                None => fpc_min_length(a.rows, delta)?,
            };
            let code = fpc_generate(a.rows, delta, d, &mut rng)?;
            code.codebook().save(&out, format)?;
            let mut sidecar = out.clone().into_os_string();
            sidecar.push(".fpc");
            let mut w = BufWriter::new(File::create(PathBuf::from(sidecar))?);
            code.write_sidecar(&mut w)?;
            w.flush()?;
        }
    }
    info!("wrote {}", out.display());
    Ok(())
}

struct MechanismChoice<'a> {
    kind: MechanismKind,
    epsilon: Option<f64>,
    delta: Option<f64>,
    calibration: CalibrationArg,
    constant: f64,
    sigma: Option<f64>,
    alpha: Option<f64>,
    flags: Option<usize>,
    delta_flag: &'a str,
}

fn build_mechanism(choice: &MechanismChoice<'_>) -> CliResult<Mechanism> {
    let eps = || choice.epsilon.ok_or_else(|| usage(format!("--mechanism {:?} requires --epsilon", choice.kind)));
    let no_delta = |name: &str| match choice.delta {
        Some(_) => Err(usage(format!("{name} is a pure mechanism and does not accept {}", choice.delta_flag))),
        None => Ok(()),
    };
    let need_delta = |name: &str| match choice.delta {
        Some(d) if d > 0.0 => Ok(d),
        _ => Err(usage(format!("{name} requires {} > 0", choice.delta_flag))),
    };
    if choice.kind != MechanismKind::GaussSv && (choice.sigma.is_some() || choice.alpha.is_some() || choice.flags.is_some()) {
        return Err(usage("σ, α and flag overrides apply to gauss-sv only"));
    }
    Ok(match choice.kind {
        MechanismKind::Exact => Mechanism::Exact,
        MechanismKind::Constant => Mechanism::Constant { value: choice.constant },
        MechanismKind::Laplace => {
            no_delta("laplace")?;
            Mechanism::Laplace { epsilon: eps()? }
        }
        MechanismKind::Linf => {
            no_delta("linf")?;
            Mechanism::Linf { epsilon: eps()? }
        }
        MechanismKind::Gaussian => Mechanism::Gaussian {
            epsilon: eps()?,
            delta: need_delta("gaussian")?,
            calibration: choice.calibration.into(),
        },
        MechanismKind::GaussSv => {
            let mut config = GaussSvConfig::new(eps()?, need_delta("gauss-sv")?).with_calibration(choice.calibration.into());
            config.sigma = choice.sigma;
            config.alpha = choice.alpha;
            config.sv_c = choice.flags;
            Mechanism::GaussSv { config }
        }
    })
}

#[derive(Serialize)]
struct ReleaseTrial {
    record: &'static str,
    trial: u64,
    seed: u64,
    values: Vec<f64>,
}

fn cmd_release(cli: &Cli, a: &ReleaseArgs, started: Instant) -> CliResult<()> {
    let mechanism = build_mechanism(&MechanismChoice {
        kind: a.mechanism,
        epsilon: a.epsilon,
        delta: a.delta,
        calibration: a.calibration,
        constant: a.constant,
        sigma: a.sigma,
        alpha: a.gsv_alpha,
        flags: a.flags,
        delta_flag: "--delta",
    })?;
    let out = required_out(cli, "release")?;
    let db = Database::load(&a.db).map_err(|e| with_path(e, &a.db))?;
    let trials = cli.trials.unwrap_or(1);
    let releases: Vec<(u64, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(cli.seed, "release", t);
            let mut rng = crate::rng::rng_from_seed(seed);
            mechanism.release(&db, &mut rng).map(|m| (seed, m.into_inner()))
        })
        .collect::<Result<_, Error>>()?;

    let mut w = open_out(Some(&out))?;
    match cli.format {
        OutputFormat::Csv => {
            let values: Vec<Vec<f64>> = releases.iter().map(|(_, v)| v.clone()).collect();
            write_marginals_csv(&mut w, &values)?;
        }
        OutputFormat::Json => {
            for (t, (seed, values)) in releases.iter().enumerate() {
                write_json_line(&mut w, &ReleaseTrial { record: "release", trial: t as u64, seed: *seed, values: values.clone() })?;
            }
        }
    }
    w.flush()?;

    let truth = db.marginals().values();
    let l1: Vec<f64> = releases.iter().map(|(_, v)| l1_error(v, truth)).collect::<Result<_, Error>>()?;
    let linf: Vec<f64> = releases.iter().map(|(_, v)| linf_error(v, truth)).collect::<Result<_, Error>>()?;
    let params = json!({
        "mechanism": to_json_value(&mechanism)?,
        "db": a.db.display().to_string(),
        "trials": trials,
        "alpha": a.alpha,
        "format": cli.format,
    });
    let mut summary = json!({
        "record": "summary",
        "experiment_id": experiment_id("release", &params, cli.seed),
        "subcommand": "release",
        "params": params,
        "seed": cli.seed,
        "rows": db.rows(),
        "dims": db.dims(),
        "l1_error": l1,
        "linf_error": linf,
        "mean_l1_error": if l1.is_empty() { None } else { Some(l1.iter().sum::<f64>() / l1.len() as f64) },
        "max_linf_error": linf.iter().copied().reduce(f64::max),
    });
    if let Some(alpha) = a.alpha {
        let within = linf.iter().filter(|&&e| e <= alpha).count();
        summary["linf_within_alpha_rate"] = json!(if linf.is_empty() { 0.0 } else { within as f64 / linf.len() as f64 });
        if let Mechanism::Linf { epsilon } = mechanism {
            summary["linf_noise_tail"] = json!(linf_tail_exact(db.dims(), epsilon, marginal_sensitivity(db.rows()), alpha));
        }
    }
    let summary = to_json_value(&finish_summary(cli, summary, started))?;
    let mut stdout = io::stdout().lock();
    write_json_line(&mut stdout, &summary)?;
    if let Some(path) = &a.summary {
        let mut f = BufWriter::new(File::create(path)?);
        write_json_line(&mut f, &summary)?;
        f.flush()?;
    }
    Ok(())
}

fn resolve_k(arg: &str, n: usize, delta: f64) -> CliResult<usize> {
    if arg == "auto" {
        let cap = (n / 200).max(1) as i64;
        return Ok(default_group_size(n, delta).clamp(1, cap) as usize);
    }
    match arg.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(usage(format!("--k must be 'auto' or a positive integer, got {arg:?}"))),
    }
}

fn cmd_attack(cli: &Cli, a: &AttackArgs, started: Instant) -> CliResult<()> {
    let m = &a.mechanism;
    let mechanism = build_mechanism(&MechanismChoice {
        kind: m.mechanism,
        epsilon: m.epsilon,
        delta: m.mech_delta,
        calibration: m.calibration,
        constant: m.constant,
        sigma: m.sigma,
        alpha: m.gsv_alpha,
        flags: m.flags,
        delta_flag: "--mech-delta",
    })?;
    if cli.format != OutputFormat::Json {
        info!("attack reports are JSON lines; --format is ignored");
    }
    let trials = cli.trials.unwrap_or(100);
    let mut w = open_out(cli.out.as_deref())?;
    match a.experiment {
        Experiment::Tracing => {
            let delta = a.delta.ok_or_else(|| usage("tracing requires --delta"))?;
            if !(delta > 0.0 && delta < 1.0) {
                return Err(usage(format!("--delta must lie in (0, 1), got {delta}")));
            }
            let k = resolve_k(&a.k, a.rows, delta)?;
            let mut config = TracingAttackConfig::new(a.rows, delta, k, trials);
            config.d = a.dims;
            config.excluded_user = if a.no_exclude { None } else { Some(a.exclude) };
            let report = tracing_attack(&mechanism, &config, cli.seed)?;
            if trials > 0 {
                for t in &report.trials {
                    let mut rec = to_json_value(t)?;
                    rec["record"] = json!("trial");
                    write_json_line(&mut w, &rec)?;
                }
                let mut summary = to_json_value(&report)?;
                let params = json!({"mechanism": to_json_value(&mechanism)?, "config": summary["config"].clone()});
                summary["record"] = json!("summary");
                summary["subcommand"] = json!("attack");
                summary["experiment"] = json!("tracing");
                summary["k"] = json!(k);
                summary["experiment_id"] = json!(experiment_id("attack", &params, cli.seed));
                write_json_line(&mut w, &finish_summary(cli, summary, started))?;
            }
        }
        Experiment::Packing => {
            let d = a.dims.ok_or_else(|| usage("packing requires --dims"))?;
            let config = PackingExperimentConfig { d, n: a.rows, trials, lambda: a.lambda };
            let report = packing_experiment(&mechanism, &config, cli.seed)?;
            if trials > 0 {
                for t in 0..report.z.len() {
                    let rec = json!({
                        "record": "trial",
                        "trial": t,
                        "z": report.z[t],
                        "z_prime": report.z_prime[t],
                        "z_prime_norm": report.z_prime_norm[t],
                    });
                    write_json_line(&mut w, &rec)?;
                }
                let params = json!({"mechanism": to_json_value(&mechanism)?, "config": to_json_value(&config)?});
                let summary = json!({
                    "record": "summary",
                    "subcommand": "attack",
                    "experiment": "packing",
                    "experiment_id": experiment_id("attack", &params, cli.seed),
                    "oracle": mechanism.label(),
                    "config": config,
                    "seed": cli.seed,
                    "lambda": config.lambda(),
                    "z_at_most_cut": report.z_at_most_cut,
                    "z_prime_above_cut": report.z_prime_above_cut,
                    "z_prime_above_lambda": report.z_prime_above_lambda,
                    "hoeffding_bound": report.hoeffding_bound,
                    "cut_bound": report.cut_bound,
                });
                write_json_line(&mut w, &finish_summary(cli, summary, started))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_bounds(cli: &Cli, a: &BoundsArgs) -> CliResult<()> {
    let b = sample_complexity_bounds(a.dims, a.alpha, a.epsilon, a.delta)?;
    let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), fmt_num);
    let row = vec![
        b.d.to_string(),
        fmt_num(b.alpha),
        fmt_num(b.epsilon),
        cell(a.delta),
        cell(b.laplace_approx_upper),
        fmt_num(b.laplace_pure_upper),
        cell(b.approx_lower),
        cell(b.gauss_sv_upper),
        fmt_num(b.pure_lower),
    ];
    let mut w = open_out(cli.out.as_deref())?;
    match cli.format {
        OutputFormat::Csv => write_table_csv(&mut w, &BOUNDS_COLUMNS, &[row])?,
        OutputFormat::Json => {
            let record: serde_json::Map<String, Value> =
                BOUNDS_COLUMNS.iter().zip(row).map(|(k, v)| (k.to_string(), Value::String(v))).collect();
            write_json_line(&mut w, &record)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("marginalpriv").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn auto_k() {
        assert_eq!(resolve_k("auto", 1000, 2f64.powi(-20)).unwrap(), 3);
        // capped at n/200
        assert_eq!(resolve_k("auto", 400, 1e-30).unwrap(), 2);
        // floored at 1
        assert_eq!(resolve_k("auto", 1000, 0.01).unwrap(), 1);
        assert_eq!(resolve_k("7", 10, 0.1).unwrap(), 7);
        assert!(resolve_k("0", 10, 0.1).is_err());
        assert!(resolve_k("x", 10, 0.1).is_err());
    }

    #[test]
    fn mechanism_compatibility() {
        let choice = |kind, delta| MechanismChoice {
            kind,
            epsilon: Some(1.0),
            delta,
            calibration: CalibrationArg::Baseline,
            constant: 0.0,
            sigma: None,
            alpha: None,
            flags: None,
            delta_flag: "--delta",
        };
        assert!(matches!(build_mechanism(&choice(MechanismKind::Laplace, Some(1e-6))), Err(CliError::Usage(_))));
        assert!(matches!(build_mechanism(&choice(MechanismKind::Linf, Some(1e-6))), Err(CliError::Usage(_))));
        assert!(matches!(build_mechanism(&choice(MechanismKind::Gaussian, None)), Err(CliError::Usage(_))));
        assert!(matches!(build_mechanism(&choice(MechanismKind::Gaussian, Some(0.0))), Err(CliError::Usage(_))));
        assert!(matches!(build_mechanism(&choice(MechanismKind::GaussSv, None)), Err(CliError::Usage(_))));
        assert!(build_mechanism(&choice(MechanismKind::Gaussian, Some(1e-6))).is_ok());
        assert!(build_mechanism(&choice(MechanismKind::Linf, None)).is_ok());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(usage("x").exit_code(), 2);
        assert_eq!(CliError::from(io::Error::other("x")).exit_code(), 3);
        assert_eq!(CliError::Lib(Error::Format("x".into())).exit_code(), 3);
        assert_eq!(CliError::Lib(Error::Parameter("x".into())).exit_code(), 4);
        assert_eq!(CliError::Lib(Error::Domain("x".into())).exit_code(), 4);
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = parse(&["bounds", "-d", "100", "--alpha", "0.1", "--epsilon", "1", "--seed", "5", "--format", "json"]);
        assert_eq!(cli.seed, 5);
        assert_eq!(cli.format, OutputFormat::Json);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_from_args(["marginalpriv", "bounds"]), 2);
        assert_eq!(run_from_args(["marginalpriv", "frobnicate"]), 2);
        assert_eq!(run_from_args(["marginalpriv", "gen", "-n", "4", "-d", "2"]), 2);
        assert_eq!(run_from_args(["marginalpriv", "bounds", "-d", "10", "--alpha", "0.1", "--epsilon", "-1"]), 4);
    }

    #[test]
    fn experiment_ids_depend_on_all_inputs() {
        let p = json!({"a": 1});
        assert_eq!(experiment_id("x", &p, 1), experiment_id("x", &p, 1));
        assert_ne!(experiment_id("x", &p, 1), experiment_id("x", &p, 2));
        assert_ne!(experiment_id("x", &p, 1), experiment_id("y", &p, 1));
        assert_ne!(experiment_id("x", &p, 1), experiment_id("x", &json!({"a": 2}), 1));
    }
}
