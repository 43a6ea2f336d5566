//! `spdval`: batch front end for fitting call curves, reading off state
//! price densities and valuing cash flows against them.
//!
//! Every run writes one JSON report (to `--out`, else stdout). Exit codes:
//! 0 on success, 1 when the numbers fail validation, 2 on I/O or
//! configuration errors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use spdval::distributions::Distribution;
use spdval::io::{load_distribution, to_writer17, write_csv, FamilyConfig};
use spdval::metrics::{metrics_report, MeasurePair};
use spdval::option_surface::{
    check_arbitrage, detect_default_mass, fit_call_curve, implied_short_rate, read_quotes_csv, recover_bond,
    recover_spot, risk_neutral_measure, state_price_density_with, tolerances, CallCurve, MarketContext,
    StatePriceDensity,
};
use spdval::valuation::{
    convergence_study, finite_portfolio_value, integrand_samples, mm_separated_value, scaled_value,
    sharpean_operation, value_closed_form_with, ValuationInputs, ValuationOptions,
};

/// Rows in CSV plot data.
const CSV_POINTS: usize = 401;

#[derive(Debug, Parser)]
#[command(name = "spdval", version, about = "Value cash flows with Arrow-Debreu portfolios priced off a call curve")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Option quotes (`strike,price` CSV), a fitted curve JSON, or a
    /// risk-neutral law as a family JSON.
    #[arg(long, global = true, value_name = "PATH")]
    quotes: Option<PathBuf>,

    /// Cash-flow distribution (family JSON or `x,phi` grid CSV).
    #[arg(long, global = true, value_name = "PATH")]
    phi1: Option<PathBuf>,

    /// Benchmark's physical distribution (family JSON or grid CSV).
    #[arg(long, global = true, value_name = "PATH")]
    phi2: Option<PathBuf>,

    /// Market context JSON: `{"t", "T", "bond_price", "spot", "short_rate"?}`.
    #[arg(long, global = true, value_name = "PATH")]
    ctx: Option<PathBuf>,

    /// JSON report path; CSV plot data is written beside it.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Partition counts for `converge`, comma separated.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    ns: Option<Vec<usize>>,

    /// Partition count; `value` uses the finite portfolio when given.
    #[arg(long, global = true, value_name = "INT")]
    n: Option<usize>,

    /// Seed, recorded in the report.
    #[arg(long, global = true, default_value_t = 0, value_name = "INT")]
    seed: u64,

    /// Relative bond-price tolerance between the density and the context.
    #[arg(long, global = true, value_name = "FLOAT")]
    tol_spd: Option<f64>,

    /// Relative quadrature tolerance.
    #[arg(long, global = true, value_name = "FLOAT")]
    tol_quad: Option<f64>,

    /// Also value `scale` times the cash flow.
    #[arg(long, global = true, value_name = "FLOAT")]
    scale: Option<f64>,

    /// Also value the cash flow plus a riskless payout `shift`.
    #[arg(long, global = true, value_name = "FLOAT", allow_hyphen_values = true)]
    shift: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Fit an arbitrage-free call curve to quotes.
    Fit,
    /// State price density diagnostics: bond, spot, short rate, default mass.
    Spd,
    /// Check raw quotes for static arbitrage.
    CheckArb,
    /// Value a cash flow against the benchmark.
    Value,
    /// Finite-portfolio values against the closed form.
    Converge,
    /// Riskless shift, volatility and score of a unimodal cash flow.
    Sharpean,
    /// Relative entropy and symmetric distance between two laws.
    Metrics,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Spd => "spd",
            Command::CheckArb => "check-arb",
            Command::Value => "value",
            Command::Converge => "converge",
            Command::Sharpean => "sharpean",
            Command::Metrics => "metrics",
        }
    }
}

/// A problem with the invocation itself rather than with the numbers.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Result of a command that ran but found the inputs invalid, with the
/// report it still produced.
struct Rejected {
    result: Value,
    reason: String,
}

fn config(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<spdval::Error>() {
        Some(e) if !e.is_input_error() => 1,
        _ => 2,
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| config(format!("--{flag} is required")))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn load_ctx(cli: &Cli) -> Result<MarketContext> {
    let path = require(&cli.ctx, "ctx")?;
    MarketContext::from_json_reader(open(path)?).with_context(|| format!("reading context {}", path.display()))
}

fn load_law(path: &Option<PathBuf>, flag: &str) -> Result<Distribution> {
    let path = require(path, flag)?;
    if !path.exists() {
        bail!(config(format!("--{flag}: {} does not exist", path.display())));
    }
    load_distribution(path).with_context(|| format!("reading --{flag} {}", path.display()))
}

/// What `--quotes` held.
enum Benchmark {
    Quotes(Vec<spdval::option_surface::Quote>),
    Curve(Box<CallCurve>),
    Law(Distribution),
}

fn load_benchmark(cli: &Cli) -> Result<Benchmark> {
    let path = require(&cli.quotes, "quotes")?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        let quotes = read_quotes_csv(open(path)?).with_context(|| format!("reading quotes {}", path.display()))?;
        return Ok(Benchmark::Quotes(quotes));
    }
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    let doc: Value = serde_json::from_str(&text).map_err(spdval::Error::from)?;
    if doc.get("family").is_some() {
        let family: FamilyConfig = serde_json::from_value(doc).map_err(spdval::Error::from)?;
        return Ok(Benchmark::Law(family.build()?));
    }
    // A fit report carries the curve under "result.curve".
    let curve = doc.pointer("/result/curve").cloned().unwrap_or(doc);
    let curve = CallCurve::from_json_reader(curve.to_string().as_bytes())?;
    Ok(Benchmark::Curve(Box::new(curve)))
}

fn tol_spd(cli: &Cli) -> Result<f64> {
    positive(cli.tol_spd, "tol-spd").map(|t| t.unwrap_or(tolerances::SPD_FITTED))
}

fn positive(v: Option<f64>, flag: &str) -> Result<Option<f64>> {
    match v {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(config(format!("--{flag} must be positive, got {t}"))),
        _ => Ok(v),
    }
}

fn fitted(cli: &Cli, ctx: &MarketContext) -> Result<CallCurve> {
    match load_benchmark(cli)? {
        Benchmark::Quotes(q) => Ok(fit_call_curve(&q, ctx)?),
        Benchmark::Curve(c) => Ok(*c),
        Benchmark::Law(_) => Err(config("--quotes holds a distribution, not option quotes")),
    }
}

/// State price density from `--quotes`, and the curve when there is one.
fn density(cli: &Cli, ctx: &MarketContext) -> Result<(StatePriceDensity, Option<CallCurve>)> {
    let eps = tol_spd(cli)?;
    match load_benchmark(cli)? {
        Benchmark::Quotes(q) => {
            let curve = fit_call_curve(&q, ctx)?;
            Ok((state_price_density_with(&curve, eps)?, Some(curve)))
        }
        Benchmark::Curve(curve) => Ok((state_price_density_with(&curve, eps)?, Some(*curve))),
        Benchmark::Law(law) => Ok((StatePriceDensity::from_measure(&law, ctx.bond_price)?, None)),
    }
}

fn inputs(cli: &Cli) -> Result<(ValuationInputs, ValuationOptions)> {
    let ctx = load_ctx(cli)?;
    let phi1 = load_law(&cli.phi1, "phi1")?;
    let phi2 = load_law(&cli.phi2, "phi2")?;
    let (spd, _) = density(cli, &ctx)?;
    let inputs = ValuationInputs::with_tolerance(phi1, phi2, spd, ctx, tol_spd(cli)?)?;
    let mut opts = ValuationOptions::default();
    if let Some(t) = positive(cli.tol_quad, "tol-quad")? {
        opts.quadrature = opts.quadrature.with_rel_tol(t);
    }
    Ok((inputs, opts))
}

/// `report.json` → `report.<suffix>.csv`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

type Outcome = std::result::Result<Value, Rejected>;

fn run_fit(cli: &Cli) -> Result<Outcome> {
    let ctx = load_ctx(cli)?;
    let curve = fitted(cli, &ctx)?;
    let report = curve.verify(2001, tolerances::SPOT);
    if let Some(out) = &cli.out {
        let (_, hi) = curve.domain();
        let rows: Vec<[f64; 4]> = (0..CSV_POINTS)
            .map(|i| {
                let k = hi * i as f64 / (CSV_POINTS - 1) as f64;
                let (c, slope, q) = curve.evaluate(k);
                [k, c, -slope, q]
            })
            .collect();
        write_csv(create(&sidecar(out, "curve"))?, ["K", "C", "digital", "q"], &rows)?;
    }
    let result = json!({
        "curve": to_value(&curve)?,
        "max_projection": curve.max_projection(),
        "arbitrage": to_value(&report)?,
    });
    if report.is_clean() {
        Ok(Ok(result))
    } else {
        Ok(Err(Rejected {
            reason: format!("fitted curve has {} arbitrage violations", report.violations.len()),
            result,
        }))
    }
}

fn run_spd(cli: &Cli) -> Result<Outcome> {
    let ctx = load_ctx(cli)?;
    let (spd, curve) = density(cli, &ctx)?;
    let bond = recover_bond(&spd)?;
    let spot = recover_spot(&spd, curve.as_ref())?;
    let rn = risk_neutral_measure(&spd)?;
    let mut result = json!({
        "bond_price": bond,
        "context_bond_price": ctx.bond_price,
        "bond_error": (bond - ctx.bond_price) / ctx.bond_price,
        "spot": to_value(&spot)?,
        "context_spot": ctx.spot,
        "context": context_summary(&ctx),
        "zero_atom": spd.zero_atom(),
        "continuous_mass": rn.continuous_mass,
        "atom_probability": rn.atom_probability,
        "defaulted": rn.defaulted,
    });
    if let Some(curve) = &curve {
        result["implied_short_rate"] = match implied_short_rate(curve) {
            Ok(r) => json!(r),
            Err(e) => json!(e.to_string()),
        };
        result["default_mass"] = to_value(&detect_default_mass(curve, ctx.rate())?)?;
    }
    if let Some(out) = &cli.out {
        spd.write_csv(create(&sidecar(out, "density"))?, CSV_POINTS)?;
    }
    let tol = tol_spd(cli)?;
    if (bond - ctx.bond_price).abs() > tol * ctx.bond_price {
        return Ok(Err(Rejected {
            reason: format!("density prices the bond at {bond}, context says {}", ctx.bond_price),
            result,
        }));
    }
    Ok(Ok(result))
}

fn run_check_arb(cli: &Cli) -> Result<Outcome> {
    let ctx = load_ctx(cli)?;
    let quotes = match load_benchmark(cli)? {
        Benchmark::Quotes(q) => q,
        _ => return Err(config("check-arb needs a quote CSV")),
    };
    let report = check_arbitrage(&quotes, &ctx);
    let result = to_value(&report)?;
    if report.is_clean() {
        Ok(Ok(result))
    } else {
        Ok(Err(Rejected {
            reason: format!("{} arbitrage violations in the quotes", report.violations.len()),
            result,
        }))
    }
}

fn run_value(cli: &Cli) -> Result<Outcome> {
    let (inputs, opts) = inputs(cli)?;
    let report = match cli.n {
        Some(n) => finite_portfolio_value(&inputs, n)?,
        None => value_closed_form_with(&inputs, &opts)?,
    };
    let mut result = to_value(&report)?;
    result["context"] = context_summary(&inputs.ctx);
    if let Some(c) = cli.scale {
        result["scaled_value"] = json!({ "scale": c, "value": scaled_value(&inputs, c)? });
    }
    if let Some(a) = cli.shift {
        result["mm_separated_value"] = json!({ "shift": a, "value": mm_separated_value(&inputs, a)? });
    }
    if let Some(out) = &cli.out {
        inputs.binding()?.write_csv(create(&sidecar(out, "binding"))?, CSV_POINTS)?;
        let rows = integrand_samples(&inputs, CSV_POINTS)?;
        write_csv(create(&sidecar(out, "integrand"))?, ["x", "integrand"], &rows)?;
    }
    Ok(Ok(result))
}

/// Both the given short rate, if any, and the one the bond price implies.
fn context_summary(ctx: &MarketContext) -> Value {
    let from_bond = -ctx.bond_price.ln() / ctx.tau();
    if ctx.short_rate.is_none() {
        log::info!("no short rate in the context; the bond price implies {from_bond}");
    }
    json!({
        "bond_price": ctx.bond_price,
        "short_rate": ctx.short_rate,
        "rate_from_bond": from_bond,
    })
}

fn run_converge(cli: &Cli) -> Result<Outcome> {
    let (inputs, _) = inputs(cli)?;
    let ns = cli.ns.clone().unwrap_or_else(|| vec![10, 100, 1000, 10000]);
    let table = convergence_study(&inputs, &ns)?;
    if let Some(out) = &cli.out {
        let rows: Vec<[f64; 4]> = table
            .rows
            .iter()
            .map(|r| [r.n as f64, r.value, r.abs_error, r.rel_error])
            .collect();
        write_csv(create(&sidecar(out, "convergence"))?, ["n", "value", "abs_error", "rel_error"], &rows)?;
    }
    Ok(Ok(to_value(&table)?))
}

fn run_sharpean(cli: &Cli) -> Result<Outcome> {
    let ctx = load_ctx(cli)?;
    let cf = load_law(&cli.phi1, "phi1")?;
    Ok(Ok(to_value(&sharpean_operation(&cf, &ctx)?)?))
}

/// `ℙ` is `--phi1`; `ℚ` is `--phi2` if given, else the continuous part of
/// the risk-neutral law read from `--quotes`.
fn run_metrics(cli: &Cli) -> Result<Outcome> {
    let p = load_law(&cli.phi1, "phi1")?;
    let q = match &cli.phi2 {
        Some(_) => load_law(&cli.phi2, "phi2")?,
        None => {
            let ctx = load_ctx(cli)?;
            let (spd, _) = density(cli, &ctx)?;
            risk_neutral_measure(&spd)?.distribution
        }
    };
    let pair = MeasurePair::new(&p, &q)?;
    Ok(Ok(to_value(&metrics_report(&pair)?)?))
}

fn run(cli: &Cli) -> Result<Outcome> {
    positive(cli.tol_spd, "tol-spd")?;
    positive(cli.tol_quad, "tol-quad")?;
    match cli.command {
        Command::Fit => run_fit(cli),
        Command::Spd => run_spd(cli),
        Command::CheckArb => run_check_arb(cli),
        Command::Value => run_value(cli),
        Command::Converge => run_converge(cli),
        Command::Sharpean => run_sharpean(cli),
        Command::Metrics => run_metrics(cli),
    }
}

fn path_str(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| json!(p.display().to_string()))
}

fn echo(cli: &Cli) -> Value {
    json!({
        "quotes": path_str(&cli.quotes),
        "phi1": path_str(&cli.phi1),
        "phi2": path_str(&cli.phi2),
        "ctx": path_str(&cli.ctx),
        "ns": cli.ns,
        "n": cli.n,
        "seed": cli.seed,
        "tol_spd": cli.tol_spd,
        "tol_quad": cli.tol_quad,
        "scale": cli.scale,
        "shift": cli.shift,
    })
}

fn write_report(cli: &Cli, report: &Value) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let mut w = create(path)?;
            to_writer17(&mut w, report)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            to_writer17(&mut w, report)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPDVAL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let (result, errors, code) = match run(&cli) {
        Ok(Ok(result)) => (result, vec![], 0),
        Ok(Err(rejected)) => (rejected.result, vec![rejected.reason], 1),
        Err(e) => (Value::Null, vec![format!("{e:#}")], exit_code(&e)),
    };
    for e in &errors {
        log::error!("{e}");
    }
    let report = json!({
        "command": cli.command.name(),
        "inputs": echo(&cli),
        "result": result,
        "errors": errors,
    });
    if let Err(e) = write_report(&cli, &report) {
        log::error!("{e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
