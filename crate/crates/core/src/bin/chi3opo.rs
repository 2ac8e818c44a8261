use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chi3_opo::sweep::{self, AxisSpec, OutputFormat, SweepConfig, SweepMode};
use chi3_opo::Result;

/// Steady states, noise spectra and entanglement witnesses of a χ(3) OPO.
#[derive(Parser)]
#[command(name = "chi3opo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classical fixed points and their stability along the grid.
    Steady(Common),
    /// Unrotated Duan witness.
    Duan(Common),
    /// Duan witness before and after the Schmidt rotation.
    DuanRot(Common),
    /// Tripartite van Loock–Furusawa witnesses for all three bipartitions.
    Vlf(Common),
    /// Stochastic-integration estimate of the output spectra.
    Oracle(Common),
    /// Invariant checks and oracle comparison at a single grid point.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML sweep configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format, `csv` or `json` [default: csv].
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
    /// Pump power axis, `v` or `start:stop:count`.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    f2: Option<AxisSpec>,
    /// Pump detuning axis Δp/Γ.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    delta_p: Option<AxisSpec>,
    /// Dispersion axis D3/Γ.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    d3: Option<AxisSpec>,
    /// Analysis frequency in units of the linewidth [default: 0.015].
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    /// Escape efficiency γ/Γ [default: 0.55].
    #[arg(long)]
    gamma_ratio: Option<f64>,
    /// Master seed of the stochastic oracle.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of stochastic trajectories.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Length of each windowed segment, in units of 1/Γ.
    #[arg(long)]
    segment_length: Option<f64>,
}

fn parse_axis(s: &str) -> std::result::Result<AxisSpec, String> {
    s.parse().map_err(|e: chi3_opo::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    s.parse().map_err(|e: chi3_opo::Error| e.to_string())
}

impl Common {
    fn config(&self, mode: SweepMode) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::load(path)?,
            None => SweepConfig::new(mode),
        };
        cfg.mode = mode;
        if let Some(a) = self.f2 {
            cfg.grid.f2 = a;
        }
        if let Some(a) = self.delta_p {
            cfg.grid.delta_p = a;
        }
        if let Some(a) = self.d3 {
            cfg.grid.d3 = a;
        }
        if let Some(v) = self.omega {
            cfg.fixed.omega = v;
        }
        if let Some(v) = self.gamma_ratio {
            cfg.fixed.gamma_ratio = v;
        }
        if let Some(v) = self.seed {
            cfg.oracle.seed = v;
        }
        if let Some(v) = self.trajectories {
            cfg.oracle.n_trajectories = v;
        }
        if let Some(v) = self.segment_length {
            cfg.oracle.segment_length = v;
        }
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (mode, common, verify) = match &cli.command {
        Command::Steady(c) => (SweepMode::Steady, c, false),
        Command::Duan(c) => (SweepMode::Duan, c, false),
        Command::DuanRot(c) => (SweepMode::DuanRotated, c, false),
        Command::Vlf(c) => (SweepMode::Vlf, c, false),
        Command::Oracle(c) => (SweepMode::Oracle, c, false),
        Command::Verify(c) => (SweepMode::Oracle, c, true),
    };
    let cfg = common.config(mode)?;
    if verify {
        let report = sweep::verify(&cfg)?;
        println!("{report}");
        return Ok(if report.passed() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        });
    }
    let dataset = sweep::run_sweep(&cfg)?;
    sweep::emit(
        &dataset,
        cfg.output.format,
        cfg.output.path.as_deref(),
        &mut io::stdout().lock(),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
