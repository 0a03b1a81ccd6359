use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use mee_core::quality::{assess_quality, QualityReport, DEFAULT_EDGE_BINS, DEFAULT_Z_THRESHOLD};
use mee_core::segmentation::{segment, SegmentConfig};

use crate::{load, GlobalOpts, OutputFormat, Result};

#[derive(Debug, Clone, Args)]
pub struct QualityArgs {
    pub record: PathBuf,
    /// Bins at either end of the amplitude range that count as extreme.
    #[arg(long, default_value_t = DEFAULT_EDGE_BINS)]
    pub edge_bins: usize,
    /// Robust z-score above which a beat's MEE is an outlier.
    #[arg(long, default_value_t = DEFAULT_Z_THRESHOLD)]
    pub z: f64,
}

pub fn quality(args: &QualityArgs, opts: &GlobalOpts) -> Result<QualityReport> {
    let (record, lead) = load(&args.record, opts)?;
    let beats = segment(&record, &lead, &SegmentConfig::default())?.beats;
    Ok(assess_quality(&beats, &opts.morph_config()?, args.edge_bins, args.z)?)
}

pub fn run(args: &QualityArgs, opts: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let report = quality(args, opts)?;
    match opts.format {
        OutputFormat::Csv => out.write_all(report.to_csv().as_bytes())?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
