//! Command-line front end for `laplace-cert`.

pub mod config;
pub mod densities;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod verify;

use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, OracleChoice};
use error::CliError;
use laplace_cert::bounds::Provenance;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "laplace-cert", version, about = "Laplace approximation error bounds and oracles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline over the configured grid; writes results.csv and rates.txt.
    Run(Common),
    /// Tabulate posterior, Laplace and integrand densities (d = 1); writes densities.csv.
    Densities {
        #[command(flatten)]
        common: Common,
        /// Number of grid points.
        #[arg(long, default_value_t = densities::DEFAULT_POINTS)]
        points: usize,
    },
    /// Check the standing assumptions and print a tab-separated report.
    Verify(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config file.
    pub config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Exit 0 even when an assumption fails.
    #[arg(long)]
    pub allow_invalid: bool,
    /// Overrides `oracle`.
    #[arg(long, value_parser = parse_oracle)]
    pub oracle: Option<OracleChoice>,
}

fn parse_oracle(s: &str) -> Result<OracleChoice, String> {
    OracleChoice::parse(s).ok_or_else(|| format!("expected auto, quadrature, importance or none, got `{s}`"))
}

impl Common {
    pub fn load(&self) -> Result<ExperimentConfig, CliError> {
        let text = fs::read_to_string(&self.config)?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out_dir {
            cfg.output = o.clone();
        }
        if let Some(o) = self.oracle {
            cfg.oracle = o;
        }
        Ok(cfg)
    }
}

const DISCLAIMER: &str = "note: some constants were estimated by sampling; bounds built from them are not certified";

fn create(dir: &Path, name: &str) -> Result<fs::File, CliError> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(name))?)
}

/// Runs one command, printing to `out` and `err`; returns the exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match &cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let rows = pipeline::run(&cfg)?;
            output::write_csv(&rows, create(&cfg.output, "results.csv")?)?;
            if let Some(s) = &cfg.sweep {
                let text = output::rates_text(&rows, s.axis);
                create(&cfg.output, "rates.txt")?.write_all(text.as_bytes())?;
                out.write_all(text.as_bytes())?;
            }
            writeln!(out, "wrote {} row(s) to {}", rows.len(), cfg.output.join("results.csv").display())?;
            if rows
                .iter()
                .any(|r| r.constants.as_ref().is_some_and(|k| k.provenance == Provenance::Estimated))
            {
                writeln!(err, "{DISCLAIMER}")?;
            }
            let bad: Vec<_> = rows.iter().filter(|r| !r.assumptions_ok).collect();
            for r in &bad {
                writeln!(err, "assumption violated at {}: {}", describe(r), r.note)?;
            }
            Ok(if bad.is_empty() || c.allow_invalid { 0 } else { 3 })
        }
        Command::Densities { common, points } => {
            let cfg = common.load()?;
            let rows = densities::densities(&cfg, *points)?;
            densities::write_densities(&rows, create(&cfg.output, "densities.csv")?)?;
            writeln!(out, "wrote {} point(s) to {}", rows.len(), cfg.output.join("densities.csv").display())?;
            Ok(0)
        }
        Command::Verify(c) => {
            let cfg = c.load()?;
            let report = verify::verify(&cfg)?;
            write!(out, "{report}")?;
            if report.checks.iter().any(|k| k.provenance == "estimated") {
                writeln!(err, "{DISCLAIMER}")?;
            }
            Ok(if report.assumptions_hold() || c.allow_invalid { 0 } else { 3 })
        }
    }
}

fn describe(r: &pipeline::SweepRow) -> String {
    match (r.axis, r.axis_value) {
        (Some(a), Some(v)) => format!("{} = {v}", a.name()),
        _ => "the configured point".into(),
    }
}

/// Parses `args`, runs, and maps every failure to its exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
