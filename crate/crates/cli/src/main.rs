use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use xxz_defects::evolve::diagonalize;
use xxz_defects::hamiltonian::build_static;
use xxz_defects::perturbation::{assign_bands, band_layout, default_band_tolerance, BandMembers};
use xxz_defects::protocols::{self, Frame, ProtocolResult, SweepRow};

mod config;
mod output;

use config::RunConfig;
use output::Outputs;

#[derive(Parser)]
#[command(name = "xxz", version, about = "Defect spin chains: spectra, entanglement protocols and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of one excitation sector and the predicted band report
    Spectrum(Common),
    /// Run one Bell, W or bound-pair protocol
    Protocol(Common),
    /// Run a protocol once per parameter value
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir; default "out")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evolution frame (overrides protocol.frame)
    #[arg(long, value_parser = ["effective", "full"])]
    frame: Option<String>,
    /// Worker threads for sweeps
    #[arg(long)]
    jobs: Option<usize>,
    /// Reserved; runs are deterministic
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<xxz_defects::Error> for CliError {
    fn from(e: xxz_defects::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(f) = &common.frame {
        let frame: Frame = f.parse()?;
        config.override_frame(frame);
    }
    if common.seed.is_some() {
        log::info!("--seed is reserved and has no effect");
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((config, out))
}

#[derive(Serialize)]
struct BandRow<'a> {
    label: &'a str,
    predicted_center: f64,
    predicted_half_width: f64,
    expected_count: usize,
    member_count: usize,
    max_deviation: f64,
}

impl<'a> From<&'a BandMembers> for BandRow<'a> {
    fn from(m: &'a BandMembers) -> Self {
        Self {
            label: &m.band.label,
            predicted_center: m.band.center,
            predicted_half_width: m.band.half_width,
            expected_count: m.band.expected_count,
            member_count: m.members.len(),
            max_deviation: m.max_deviation,
        }
    }
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    config: &'a RunConfig,
    dimension: usize,
    band_tolerance: Option<f64>,
    bands: Vec<BandRow<'a>>,
    unassigned: Vec<f64>,
    ambiguous: Vec<f64>,
    warnings: Vec<String>,
}

fn spectrum(config: &RunConfig, _common: &Common) -> Result<Outputs, CliError> {
    let sc = config.spectrum()?;
    let h = build_static(&config.chain, sc.excitations)?;
    let eig = diagonalize(&h)?;
    let energies: Vec<f64> = eig.values.iter().copied().collect();
    let mut warnings = config.chain.warnings();

    let mut out = Outputs::default();
    let listing: String = energies.iter().map(|&e| output::fmt_num(e) + "\n").collect();
    out.add("eigenvalues.txt", listing);

    let assignment = match band_layout(&config.chain, sc.excitations) {
        Ok(bands) => {
            let tol = sc.tolerance.unwrap_or_else(|| default_band_tolerance(&config.chain));
            Some((tol, assign_bands(&energies, &bands, tol)))
        }
        Err(e) => {
            warnings.push(format!("no band report: {e}"));
            None
        }
    };
    let mut summary = SpectrumSummary {
        config,
        dimension: energies.len(),
        band_tolerance: None,
        bands: Vec::new(),
        unassigned: Vec::new(),
        ambiguous: Vec::new(),
        warnings,
    };
    if let Some((tol, a)) = &assignment {
        let mut csv = String::from(
            "label,predicted_center,predicted_half_width,expected_count,member_count,max_deviation\n",
        );
        for m in &a.bands {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.band.label,
                output::fmt_num(m.band.center),
                output::fmt_num(m.band.half_width),
                m.band.expected_count,
                m.members.len(),
                output::fmt_num(m.max_deviation)
            ));
        }
        out.add("bands.csv", csv);
        summary.band_tolerance = Some(*tol);
        summary.bands = a.bands.iter().map(BandRow::from).collect();
        summary.unassigned = a.unassigned.clone();
        summary.ambiguous = a.ambiguous.clone();
    }
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    out.add_json("summary.json", &summary)?;
    Ok(out)
}

#[derive(Serialize)]
struct ProtocolSummary<'a> {
    config: &'a RunConfig,
    result: &'a ProtocolResult,
}

fn protocol(config: &RunConfig, _common: &Common) -> Result<Outputs, CliError> {
    let pspec = config.protocol_spec()?;
    let result = protocols::run(&pspec)?;
    let series = &result.series;
    let mut header = vec!["t".to_string()];
    header.extend(series.channels.iter().map(|(n, _)| n.clone()));
    let rows: Vec<Vec<f64>> = (0..series.times.len())
        .map(|k| {
            std::iter::once(series.times[k])
                .chain(series.channels.iter().map(|(_, v)| v[k]))
                .collect()
        })
        .collect();
    let mut out = Outputs::default();
    out.add_csv("timeseries.csv", &header, &rows);
    out.add_json(
        "summary.json",
        &ProtocolSummary {
            config,
            result: &result,
        },
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config: &'a RunConfig,
    rows: &'a [SweepRow],
}

fn sweep(config: &RunConfig, common: &Common) -> Result<Outputs, CliError> {
    let pspec = config.protocol_spec()?;
    let (parameter, values) = config.sweep()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker threads: {e}")))?;
    let rows = pool.install(|| protocols::sweep(&pspec, parameter, values))?;
    let header: Vec<String> = SweepRow::HEADER.iter().map(|s| s.to_string()).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|r| r.values().to_vec()).collect();
    let mut out = Outputs::default();
    out.add_csv("sweep.csv", &header, &table);
    out.add_json(
        "summary.json",
        &SweepSummary {
            config,
            rows: &rows,
        },
    )?;
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    type Handler = fn(&RunConfig, &Common) -> Result<Outputs, CliError>;
    let (common, f): (&Common, Handler) = match &cli.command {
        Command::Spectrum(c) => (c, spectrum),
        Command::Protocol(c) => (c, protocol),
        Command::Sweep(c) => (c, sweep),
    };
    let result = load(common).and_then(|(config, dir)| f(&config, common)?.commit(&dir));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("xxz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
