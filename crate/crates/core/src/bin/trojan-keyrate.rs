use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trojan_keyrate::config::{distance_grid, ConfigFile};
use trojan_keyrate::csvio;
use trojan_keyrate::decoy::decoy_bounds;
use trojan_keyrate::pipeline::{
    compute_keyrate, compute_keyrate_traced, scan_distance, simulate, single_photon_curve, KeyRateReport, Method,
    RunConfig, STATUS_OK,
};
use trojan_keyrate::protocol::Protocol;
use trojan_keyrate::solver::{SolverOptions, TraceRow};
use trojan_keyrate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "trojan-keyrate", version, about = "Key-rate lower bounds for decoy-state BB84 and MDI-QKD under Trojan-horse leakage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Key rate at a single distance.
    Keyrate {
        #[command(flatten)]
        run: RunArgs,
        /// Distance in km.
        #[arg(long, default_value_t = 0.0)]
        distance: f64,
    },
    /// Key rate over a distance grid.
    Scan {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated distances in km.
        #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
        distances: Option<Vec<f64>>,
        /// Distance grid `start:stop:step` in km.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Simulated detection statistics at one distance.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.0)]
        distance: f64,
    },
    /// Decoy-state bounds on the single-photon statistics at one distance.
    Decoy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.0)]
        distance: f64,
    },
    /// Lossless single-photon BB84 rate versus error rate.
    SinglePhoton {
        /// Leaked intensity.
        #[arg(long, default_value_t = 0.0)]
        mu_out: f64,
        /// Error-rate grid `start:stop:step`.
        #[arg(long, default_value = "0:0.12:0.005")]
        ed_grid: String,
        #[arg(long, default_value_t = 0.5)]
        p_z: f64,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter set (table1-case1, table1-case2).
    #[arg(long)]
    case: Option<String>,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<Protocol>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Leaked intensity (Alice, or both parties for MDI unless --mu-out-b is set).
    #[arg(long)]
    mu_out: Option<f64>,
    #[arg(long)]
    mu_out_b: Option<f64>,
    /// Signal intensity; disables optimization unless --optimize-mu is also given.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    nu1: Option<f64>,
    #[arg(long)]
    nu2: Option<f64>,
    #[arg(long)]
    p_z: Option<f64>,
    /// Optimize the signal intensity over the grid.
    #[arg(long, conflicts_with = "fixed_mu")]
    optimize_mu: bool,
    /// Use the signal intensity as given.
    #[arg(long)]
    fixed_mu: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump solver iterations as CSV, to the given path or stderr.
    #[arg(long, num_args = 0..=1)]
    trace: Option<Option<PathBuf>>,
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Validation(format!("grid '{s}' must be start:stop:step")));
    }
    let v = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Validation(format!("bad number '{p}' in grid '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    distance_grid(v[0], v[1], v[2])
}

impl RunArgs {
    fn run_config(&self, distances: Option<Vec<f64>>) -> Result<RunConfig> {
        let mut cf = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(c) = &self.case {
            cf.case = Some(c.clone());
        }
        if let Some(p) = self.protocol {
            cf.protocol.name = Some(p);
        }
        if cf.case.is_none() && cf.protocol.name.is_none() {
            cf.protocol.name = Some(Protocol::Bb84);
        }
        if let Some(m) = self.method {
            cf.protocol.method = Some(m);
        }
        if let Some(v) = self.p_z {
            cf.protocol.p_z = Some(v);
        }
        let i = &mut cf.intensities;
        i.mu = self.mu.or(i.mu);
        i.nu1 = self.nu1.or(i.nu1);
        i.nu2 = self.nu2.or(i.nu2);
        i.mu_out = self.mu_out.or(i.mu_out);
        i.mu_out_b = self.mu_out_b.or(i.mu_out_b);
        if self.mu.is_some() {
            cf.optimize.enabled = Some(false);
        }
        if self.optimize_mu {
            cf.optimize.enabled = Some(true);
        }
        if self.fixed_mu {
            cf.optimize.enabled = Some(false);
        }
        if let Some(d) = distances {
            cf.scan = Default::default();
            cf.scan.distances_km = Some(d);
        }
        cf.to_run_config()
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_trace(target: &Option<PathBuf>, rows: &[(String, Vec<TraceRow>)]) -> Result<()> {
    match target {
        Some(p) => csvio::write_trace(File::create(p)?, rows),
        None => csvio::write_trace(io::stderr().lock(), rows),
    }
}

/// Solver trace at the signal intensity chosen for the numerical report.
fn trace_for(config: &RunConfig, report: &KeyRateReport) -> Result<(String, Vec<TraceRow>)> {
    let mut c = config.with_signal(report.mu_signal)?;
    c.method = Method::Numerical;
    c.optimize_mu = false;
    let (_, trace) = compute_keyrate_traced(&c, report.distance_km)?;
    Ok((format!("{}", report.distance_km), trace))
}

fn traces(config: &RunConfig, reports: &[KeyRateReport]) -> Result<Vec<(String, Vec<TraceRow>)>> {
    reports
        .iter()
        .filter(|r| r.method == Method::Numerical && r.status == STATUS_OK)
        .map(|r| trace_for(config, r))
        .collect()
}

/// Runs the command; `Ok(false)` means outputs were written but some point failed numerically.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Keyrate { run, distance } => {
            let config = run.run_config(None)?;
            let reports = compute_keyrate(&config, distance)?;
            csvio::write_reports(output(&run.out)?, &reports)?;
            if let Some(t) = &run.trace {
                write_trace(t, &traces(&config, &reports)?)?;
            }
            Ok(reports.iter().all(|r| r.rate.is_some()))
        }
        Command::Scan { run, distances, grid } => {
            let d = match (distances, grid) {
                (Some(d), _) => Some(d),
                (None, Some(g)) => Some(parse_grid(&g)?),
                (None, None) => None,
            };
            let config = run.run_config(d)?;
            let reports = scan_distance(&config)?;
            csvio::write_reports(output(&run.out)?, &reports)?;
            if let Some(t) = &run.trace {
                write_trace(t, &traces(&config, &reports)?)?;
            }
            for r in reports.iter().filter(|r| r.below_gllp) {
                log::warn!("{} km: numerical rate below GLLP", r.distance_km);
            }
            Ok(reports.iter().all(|r| r.rate.is_some()))
        }
        Command::Simulate { run, distance } => {
            let config = run.run_config(None)?;
            csvio::write_stats(output(&run.out)?, &simulate(&config, distance)?)?;
            Ok(true)
        }
        Command::Decoy { run, distance } => {
            let config = run.run_config(None)?;
            let stats = simulate(&config, distance)?;
            csvio::write_decoy_bounds(output(&run.out)?, &decoy_bounds(&stats, config.decoy_cutoff)?)?;
            Ok(true)
        }
        Command::SinglePhoton { mu_out, ed_grid, p_z, out } => {
            let grid = parse_grid(&ed_grid)?;
            let points = single_photon_curve(&grid, mu_out, p_z, &SolverOptions::default())?;
            csvio::write_single_photon(output(&out)?, &points)?;
            Ok(points.iter().all(|p| p.numerical_rate.is_some()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some points failed numerically; see the status column");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
