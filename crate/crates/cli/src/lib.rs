//! `mee` command-line front end: per-beat analysis, screening, pruning,
//! quality tracks, kernel benchmarks, noise-robustness sweeps and the HTTP
//! service.

pub mod analyze;
pub mod bench;
pub mod metrics;
pub mod prune;
pub mod quality;
pub mod robustness;
pub mod screen;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mee_core::morph::{MeeVariant, MorphConfig};
use mee_core::signal_io::{load_record, EcgRecord, RecordFormat, SignalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Segment(#[from] mee_core::SegmentError),
    #[error(transparent)]
    Morph(#[from] mee_core::MorphError),
    #[error(transparent)]
    Entropy(#[from] mee_core::EntropyError),
    #[error(transparent)]
    Screening(#[from] mee_core::ScreeningError),
    #[error(transparent)]
    Diversity(#[from] mee_core::DiversityError),
    #[error(transparent)]
    Quality(#[from] mee_core::QualityError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Sampling rate in Hz; overrides the record's `.meta` sidecar.
    #[arg(long, global = true)]
    pub fs: Option<f64>,
    /// Lead to analyse; falls back to the first lead when absent.
    #[arg(long, global = true, default_value = "II")]
    pub lead: String,
    /// Amplitude bandwidth count for BWE/WSE.
    #[arg(long, global = true, default_value_t = 100)]
    pub bandwidths: usize,
    /// Bin count for reference picking over the per-beat MEE sequence.
    #[arg(long, global = true, default_value_t = 40)]
    pub picking_bins: usize,
    /// MEE variant 1..4.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub variant: u8,
    /// Fluctuation threshold α for screening.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub alpha: f64,
    /// Grid-search α over `min:max:step` (bare flag uses 0:5:0.01).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "0:5:0.01")]
    pub grid: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MEE_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

impl GlobalOpts {
    pub fn variant(&self) -> MeeVariant {
        MeeVariant::from_number(self.variant).expect("validated by clap")
    }

    pub fn morph_config(&self) -> Result<MorphConfig> {
        let cfg = MorphConfig {
            bandwidth_count: self.bandwidths,
            ..MorphConfig::for_variant(self.variant())
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid_range(&self) -> Result<Option<(f64, f64, f64)>> {
        let Some(spec) = &self.grid else {
            return Ok(None);
        };
        let parts: Vec<&str> = spec.split(':').collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            parts.iter().map(|p| p.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => Ok(Some((v[0], v[1], v[2]))),
            _ => Err(CliError::Usage(format!("--grid expects min:max:step, got `{spec}`"))),
        }
    }
}

impl Default for GlobalOpts {
    fn default() -> Self {
        Cli::parse_from(["mee", "bench"]).global
    }
}

#[derive(Debug, Parser)]
#[command(name = "mee", version, about = "Morphological entropy analysis of ECG records")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-beat metric table.
    Analyze(analyze::AnalyzeArgs),
    /// Flag beats by MEE fluctuation and score against labels.
    Screen(screen::ScreenArgs),
    /// MEE-guided (or random) pruning of a same-label record group.
    Prune(prune::PruneArgs),
    /// Per-beat noise track.
    Quality(quality::QualityArgs),
    /// Time the entropy kernels per beat.
    Bench(bench::BenchArgs),
    /// Metric drift under additive Gaussian noise.
    Robustness(robustness::RobustnessArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic record with sidecars.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory of built web UI assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub max_sessions: usize,
    #[arg(long, default_value_t = 64)]
    pub max_upload_mb: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output CSV path; `.meta` and `.ann` are written alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 72.0)]
    pub bpm: f64,
    /// Comma-separated beat numbers to invert (labelled V).
    #[arg(long, value_delimiter = ',')]
    pub inverted: Vec<usize>,
    #[arg(long)]
    pub label: Option<String>,
}

/// Load a record, resolving the requested lead (with a warning on fallback).
pub fn load(path: &Path, opts: &GlobalOpts) -> Result<(EcgRecord, String)> {
    let record = load_record(path, RecordFormat::from_path(path), opts.fs)?;
    let (lead, fell_back) = record.resolve_lead(&opts.lead);
    if fell_back {
        log::warn!(
            "{}: lead `{}` not found, using `{}`",
            path.display(),
            opts.lead,
            lead.name
        );
    }
    let name = lead.name.clone();
    Ok((record, name))
}

pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    init_threads(cli.global.threads);
    let g = &cli.global;
    match cli.command {
        Command::Analyze(a) => analyze::run(&a, g, out),
        Command::Screen(a) => screen::run(&a, g, out),
        Command::Prune(a) => prune::run(&a, g, out),
        Command::Quality(a) => quality::run(&a, g, out),
        Command::Bench(a) => bench::run(&a, g, out),
        Command::Robustness(a) => robustness::run(&a, g, out),
        Command::Serve(a) => serve(&a),
        Command::Synth(a) => synth(&a, g, out),
    }
}

fn serve(args: &ServeArgs) -> Result<()> {
    let config = mee_service::ServiceConfig {
        max_sessions: args.max_sessions,
        max_upload_bytes: args.max_upload_mb * 1024 * 1024,
        static_dir: args.static_dir.clone(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(mee_service::serve(args.addr, config))?;
    Ok(())
}

fn synth(args: &SynthArgs, g: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let fs = g.fs.unwrap_or(360.0);
    let mut record = mee_core::SynthSpec::new(fs, args.duration, args.bpm, g.seed)
        .with_inverted_beats(args.inverted.iter().copied())
        .generate()?;
    if let Some(label) = &args.label {
        record = record.with_label(label.clone());
    }
    mee_core::signal_io::save_record(&record, &args.out)?;
    writeln!(
        out,
        "wrote {} ({} samples, {} beats)",
        args.out.display(),
        record.len(),
        record.annotations().map_or(0, |a| a.len())
    )?;
    Ok(())
}
