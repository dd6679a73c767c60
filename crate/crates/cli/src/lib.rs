//! Command-line front end: QBER scans, rate optimisation, bound tables,
//! single-point rates and closed-form validation.

pub mod config;
pub mod table;
pub mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ces_qkd::optimizer::crossing_point;
use ces_qkd::{
    find_lmax, ideal_rate, qber_cutoff, scan_qber_vs_chi, scan_rate_vs_distance, secret_key_rate, tgw_bound,
    visibility, DetectorPolicy, OptimizerConfig, ResourceParams, Topology,
};

use config::{GlobalArgs, RunConfig};
use table::{emit, num, opt_num, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    BadArgs(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadArgs(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<ces_qkd::Error> for CliError {
    fn from(e: ces_qkd::Error) -> Self {
        use ces_qkd::Error as E;
        match e {
            E::Overflow(_) | E::ZeroProbability { .. } | E::VisibilityUndefined => CliError::Numerical(e.to_string()),
            _ => CliError::BadArgs(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ces-qkd",
    version,
    about = "QBER and key rates of entanglement-swapping QKD chains"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// QBER against source brightness (or distance with --ell-max).
    QberScan(QberScanArgs),
    /// Optimal brightness and efficiency against distance.
    Optimize(OptimizeArgs),
    /// Ideal chain rates next to the repeaterless bound (log10).
    Bounds(BoundsArgs),
    /// Visibility, QBER and key rate at one parameter point.
    Rate(RateArgs),
    /// Compare the closed form with the Fock-space oracle.
    Validate(validate::ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QberScanArgs {
    #[arg(long, default_value_t = 0.01)]
    pub chi_min: f64,
    #[arg(long, default_value_t = 0.3)]
    pub chi_max: f64,
    /// Number of grid points (endpoints included).
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    /// Scan distance from --ell to this value at fixed --chi instead.
    #[arg(long)]
    pub ell_max: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long, default_value_t = 0.0)]
    pub ell_min: f64,
    #[arg(long, default_value_t = 400.0)]
    pub ell_max: f64,
    #[arg(long, default_value_t = 25.0)]
    pub step: f64,
    /// Seed grid points per parameter.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Upper efficiency bound [default: 0.84 with coupled dark counts, else 1].
    #[arg(long)]
    pub eta_max: Option<f64>,
    /// Unit efficiency and no dark counts; only the brightness is optimised.
    #[arg(long)]
    pub perfect: bool,
    /// Also bisect for the cutoff distance inside [ell-min, ell-max + step].
    #[arg(long)]
    pub lmax: bool,
    /// Write the optimum records as JSON to this file.
    #[arg(long)]
    #[serde(skip)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub ell_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub ell_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RateArgs {
    /// Unit efficiency and no dark counts.
    #[arg(long)]
    pub perfect: bool,
}

#[derive(Serialize)]
struct Provenance<'a, A: Serialize> {
    #[serde(flatten)]
    config: &'a RunConfig,
    #[serde(flatten)]
    args: &'a A,
}

/// Parses `argv`, runs the command and returns the process exit code,
/// reporting failures on stderr.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
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

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let coupled_default = matches!(cli.command, Command::Optimize(_));
    let cfg = RunConfig::resolve(&cli.global, coupled_default)?;
    let out = cfg.out.clone();
    let text = match &cli.command {
        Command::QberScan(a) => qber_scan(&cfg, a)?.render(),
        Command::Optimize(a) => optimize(&cfg, a)?.render(),
        Command::Bounds(a) => bounds(&cfg, a)?.render(),
        Command::Rate(a) => rate(&cfg, a)?.render(),
        Command::Validate(a) => {
            let report = validate::run(&cfg, a)?;
            emit(&report.render(), out.as_deref())?;
            return report.into_result();
        }
    };
    emit(&text, out.as_deref())
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if steps == 0 || !(lo.is_finite() && hi.is_finite()) || (steps > 1 && !(hi > lo)) {
        return Err(CliError::BadArgs(format!("bad grid [{lo}, {hi}] with {steps} points")));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

fn stepped(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && lo.is_finite() && hi >= lo) {
        return Err(CliError::BadArgs(format!("bad grid [{lo}, {hi}] with step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

pub fn qber_scan(cfg: &RunConfig, args: &QberScanArgs) -> Result<Table, CliError> {
    let threshold = qber_cutoff(cfg.kappa)?;
    let prov = Provenance { config: cfg, args };
    if let Some(ell_max) = args.ell_max {
        let ells = linspace(cfg.ell, ell_max, args.steps)?;
        let params = cfg.params();
        let mut rows = Vec::with_capacity(ells.len());
        for &ell in &ells {
            let topo = Topology::new(cfg.stations, ell)?;
            rows.push((ell, visibility(&params, &topo, cfg.nmax, cfg.mode())?.qber()));
        }
        let crossing = crossing_point(&rows, threshold);
        let mut t = Table::new("qber-scan", &prov, vec!["ell_km", "qber", "crossing"]);
        for (ell, q) in rows {
            t.push(vec![num(ell), num(q), opt_num(crossing)]);
        }
        return Ok(t);
    }
    let chis = linspace(args.chi_min, args.chi_max, args.steps)?;
    let scan = scan_qber_vs_chi(&cfg.params(), &cfg.topology()?, &chis, threshold, cfg.nmax, cfg.mode())?;
    let mut t = Table::new("qber-scan", &prov, vec!["chi", "qber", "crossing"]);
    for (chi, q) in &scan.rows {
        t.push(vec![num(*chi), num(*q), opt_num(scan.crossing)]);
    }
    Ok(t)
}

fn optimizer_config(cfg: &RunConfig, args: &OptimizeArgs) -> OptimizerConfig {
    let policy = if args.perfect {
        DetectorPolicy::Perfect
    } else if cfg.dark_coupled {
        DetectorPolicy::Coupled
    } else {
        DetectorPolicy::Fixed { dark: cfg.dark }
    };
    let eta_max = args
        .eta_max
        .unwrap_or(if policy == DetectorPolicy::Coupled { 0.84 } else { 1.0 });
    OptimizerConfig {
        alpha: cfg.alpha,
        alpha0: cfg.alpha0,
        kappa: cfg.kappa,
        policy,
        eta_bounds: (0.01, eta_max),
        n_max: cfg.nmax,
        mode: cfg.mode(),
        seeds_per_axis: args.seeds,
        ..Default::default()
    }
}

pub fn optimize(cfg: &RunConfig, args: &OptimizeArgs) -> Result<Table, CliError> {
    let ocfg = optimizer_config(cfg, args);
    ocfg.validate()?;
    let ells = stepped(args.ell_min, args.ell_max, args.step)?;
    let records = scan_rate_vs_distance(cfg.stations, &ells, &ocfg)?;
    let prov = Provenance { config: cfg, args };
    let mut t = Table::new(
        "optimize",
        &prov,
        vec![
            "ell_km",
            "chi_opt",
            "eta_opt",
            "dark",
            "qber",
            "log10_rmax",
            "converged",
        ],
    );
    for r in &records {
        let log_r = if r.feasible() { Some(r.r_max.log10()) } else { None };
        t.push(vec![
            num(r.ell),
            num(r.chi_opt),
            num(r.eta_opt),
            num(r.dark),
            num(r.qber),
            opt_num(log_r),
            r.converged.to_string(),
        ]);
    }
    let lmax = if args.lmax {
        let hi = args.ell_max + args.step;
        let l = find_lmax(cfg.stations, &ocfg, (args.ell_min, hi), 10.0)?;
        eprintln!("lmax_km={}", num(l));
        Some(l)
    } else {
        None
    };
    if let Some(path) = &args.json {
        #[derive(Serialize)]
        struct Doc<'a> {
            records: &'a [ces_qkd::OptimumRecord],
            lmax_km: Option<f64>,
        }
        let doc = serde_json::to_string_pretty(&Doc {
            records: &records,
            lmax_km: lmax,
        })
        .map_err(|e| CliError::Numerical(e.to_string()))?;
        emit(&(doc + "\n"), Some(path))?;
    }
    Ok(t)
}

pub fn bounds(cfg: &RunConfig, args: &BoundsArgs) -> Result<Table, CliError> {
    if !(args.ell_min > 0.0) {
        return Err(CliError::BadArgs(
            "the repeaterless bound diverges at ell = 0; use ell-min > 0".into(),
        ));
    }
    let prov = Provenance { config: cfg, args };
    let mut t = Table::new(
        "bounds",
        &prov,
        vec!["ell_km", "tgw", "ideal_n1", "ideal_n2", "ideal_n3"],
    );
    for ell in stepped(args.ell_min, args.ell_max, args.step)? {
        let tgw = tgw_bound(ell, cfg.alpha)?;
        let mut row = vec![num(ell), num(tgw.log10())];
        for n in 1..=3 {
            row.push(num(ideal_rate(n, ell, cfg.alpha).log10()));
        }
        t.push(row);
    }
    Ok(t)
}

pub fn rate(cfg: &RunConfig, args: &RateArgs) -> Result<Table, CliError> {
    let mut params: ResourceParams<f64> = cfg.params();
    if args.perfect {
        params.eta = 1.0;
        params.dark = 0.0;
        params.dark_coupled = false;
    }
    let topo = cfg.topology()?;
    let v = visibility(&params, &topo, cfg.nmax, cfg.mode())?;
    let r = secret_key_rate(&params, &topo, cfg.nmax, cfg.mode())?;
    let prov = Provenance { config: cfg, args };
    let mut t = Table::new(
        "rate",
        &prov,
        vec![
            "stations",
            "ell_km",
            "chi",
            "eta",
            "dark",
            "visibility",
            "qber",
            "r_sif",
            "r_sp",
            "r_per_pulse",
            "bits_per_s",
            "seconds_per_bit",
            "infeasible",
            "truncation_bound",
        ],
    );
    let bps = r.bits_per_second(cfg.rep_rate_hz);
    t.push(vec![
        topo.stations.to_string(),
        num(topo.distance),
        num(params.chi),
        num(params.eta),
        num(params.dark_probability()?),
        num(v.visibility),
        num(r.q),
        num(r.r_sif),
        num(r.r_sp),
        num(r.r),
        num(bps),
        opt_num((bps > 0.0).then(|| 1.0 / bps)),
        r.infeasible.to_string(),
        num(v.truncation_bound),
    ]);
    Ok(t)
}
