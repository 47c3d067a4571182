//! `qcorr` command-line front end: measures of single states or matrices,
//! parameter sweeps, the simulated collective-measurement pipeline, the
//! comparison with the published tables, and SVG plots.

pub mod error;
pub mod format;
pub mod input;
pub mod measures;
pub mod pipeline;
pub mod plot;
pub mod sweep;
pub mod tables;

use clap::{Args, Parser, Subcommand, ValueEnum};
use error::CliError;
use format::emit;
use input::{parse_grid, parse_measures, Family};
use measures::Source;
use plot::PlotKind;
use qcorr_core::MeasureSet;
use std::path::{Path, PathBuf};
use sweep::{QAxis, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "qcorr", version, about = "Two-qubit correlation hierarchy: measures, sweeps and reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measures of one state or correlation matrix.
    Measures(MeasuresArgs),
    /// Measures over a p grid, or a (p, q) grid.
    Sweep(SweepArgs),
    /// Simulate counts, reconstruct R and attach Monte Carlo error bars.
    Pipeline(PipelineArgs),
    /// Compare recomputed Werner-state tables with the published values.
    ReportTables(OutputArgs),
    /// Render a sweep or pipeline CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted. The pipeline writes PATH.json and
    /// PATH.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct MeasuresArgs {
    #[arg(long, value_enum, conflicts_with_all = ["r", "rho"])]
    pub family: Option<Family>,
    #[arg(long, requires = "family")]
    pub p: Option<f64>,
    #[arg(long, requires = "family")]
    pub q: Option<f64>,
    /// JSON file with a 3×3 correlation matrix.
    #[arg(long = "R", id = "r", conflicts_with = "rho")]
    pub r: Option<PathBuf>,
    /// JSON file with a density matrix {"re": [[..]], "im": [[..]]}.
    #[arg(long)]
    pub rho: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// p0:p1:step[,q0:q1:step]
    #[arg(long)]
    pub grid: String,
    /// Fixed q when the grid has no q range.
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated measure names; all when omitted.
    #[arg(long)]
    pub measures: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, value_enum, default_value = "werner")]
    pub family: Family,
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated mixing parameters.
    #[arg(long, value_delimiter = ',', default_values_t = pipeline::DEFAULT_P)]
    pub p: Vec<f64>,
    /// Two-copy trials per setting and regime.
    #[arg(long, default_value_t = 1e5)]
    pub events: f64,
    #[arg(long, env = "QCORR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo resamples; 0 disables the error bars.
    #[arg(long, default_value_t = 1000)]
    pub mc_samples: usize,
    /// Non-interfering fraction used for the simulation.
    #[arg(long, default_value_t = 0.567)]
    pub fraction: f64,
    #[arg(long)]
    pub measures: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV written by `sweep` or `pipeline`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Columns to draw (curves) or the value column (heatmap).
    #[arg(long)]
    pub measures: Option<String>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Measures(a) => run_measures(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::ReportTables(o) => {
            let rows = tables::compare()?;
            let text = match o.format.unwrap_or(Format::Csv) {
                Format::Csv => tables::render_csv(&rows)?,
                Format::Json => tables::render_json(&rows)?,
            };
            emit(o.out.as_deref(), &text)
        }
        Command::Plot(a) => {
            let select = match &a.measures {
                Some(s) => s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect(),
                None => Vec::new(),
            };
            let svg = plot::render(a.kind, &read_text(&a.input)?, &select)?;
            emit(Some(&a.out), &svg)
        }
    }
}

fn run_measures(a: &MeasuresArgs) -> Result<(), CliError> {
    let source = match (a.family, &a.r, &a.rho) {
        (Some(family), None, None) => Source::Family {
            family,
            p: a.p.ok_or_else(|| CliError::invalid("--family needs --p"))?,
            q: a.q,
        },
        (None, Some(r), None) => Source::R(r.clone()),
        (None, None, Some(rho)) => Source::Rho(rho.clone()),
        _ => return Err(CliError::invalid("give exactly one of --family, --R, --rho")),
    };
    let report = measures::compute(&source)?;
    let text = match a.output.format {
        Some(Format::Csv) => measures::render_csv(&report)?,
        Some(Format::Json) => measures::render_json(&report)?,
        None => measures::render_text(&report),
    };
    emit(a.output.out.as_deref(), &text)
}

fn run_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let (p, q_grid) = parse_grid(&a.grid)?;
    let q = match (q_grid, a.q) {
        (Some(_), Some(_)) => return Err(CliError::invalid("give a q range or --q, not both")),
        (Some(r), None) => QAxis::Grid(r),
        (None, Some(q)) => QAxis::Fixed(q),
        (None, None) => QAxis::None,
    };
    let measures = match &a.measures {
        Some(s) => parse_measures(s, &MeasureSet::NAMES)?,
        None => MeasureSet::NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let spec = SweepSpec {
        family: a.family,
        p,
        q,
        measures,
    };
    let rows = sweep::run(&spec)?;
    let text = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep::render_csv(&spec, &rows)?,
        Format::Json => sweep::render_json(&spec, &rows)?,
    };
    emit(a.output.out.as_deref(), &text)
}

fn run_pipeline(a: &PipelineArgs) -> Result<(), CliError> {
    let measures = match &a.measures {
        Some(s) => parse_measures(s, &pipeline::R_MEASURES)?,
        None => pipeline::DEFAULT_MEASURES.iter().map(|s| s.to_string()).collect(),
    };
    let spec = pipeline::PipelineSpec {
        family: a.family,
        q: a.q,
        p_list: a.p.clone(),
        events: a.events,
        seed: a.seed,
        mc_samples: a.mc_samples,
        measures,
        fraction: a.fraction,
    };
    let report = pipeline::run(&spec)?;
    let json = pipeline::render_json(&report)?;
    let csv = pipeline::render_csv(&spec, &report)?;
    match (&a.output.out, a.output.format) {
        (Some(path), _) => {
            emit(Some(&path.with_extension("json")), &json)?;
            emit(Some(&path.with_extension("csv")), &csv)
        }
        (None, Some(Format::Csv)) => emit(None, &csv),
        (None, _) => emit(None, &json),
    }
}
