use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use mee_core::baselines::BaselineConfig;
use mee_core::segmentation::{segment, Beat, SegmentConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::metrics::{parse_list, Metric};
use crate::{load, GlobalOpts, OutputFormat, Result};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    pub record: PathBuf,
    /// Comma-separated metric names.
    #[arg(long, default_value = "mee2")]
    pub metrics: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeRow {
    pub beat_index: usize,
    pub r_index: usize,
    pub label: Option<String>,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeTable {
    pub record_id: String,
    pub lead: String,
    pub metrics: Vec<String>,
    pub rows: Vec<AnalyzeRow>,
}

pub fn metric_table(
    beats: &[Beat],
    metrics: &[Metric],
    opts: &GlobalOpts,
) -> Result<Vec<AnalyzeRow>> {
    let baseline = BaselineConfig::default();
    let morph = opts.morph_config()?;
    beats
        .par_iter()
        .map(|b| {
            let values = metrics
                .iter()
                .map(|m| m.compute(&b.samples, &baseline, &morph))
                .collect::<Result<Vec<_>>>()?;
            Ok(AnalyzeRow {
                beat_index: b.beat_index,
                r_index: b.r_index,
                label: b.label.map(|l| l.to_string()),
                values,
            })
        })
        .collect()
}

pub fn analyze(args: &AnalyzeArgs, opts: &GlobalOpts) -> Result<AnalyzeTable> {
    let metrics = parse_list(&args.metrics)?;
    let (record, lead) = load(&args.record, opts)?;
    let beats = segment(&record, &lead, &SegmentConfig::default())?.beats;
    Ok(AnalyzeTable {
        record_id: record.record_id().to_string(),
        lead,
        metrics: metrics.iter().map(|m| m.name()).collect(),
        rows: metric_table(&beats, &metrics, opts)?,
    })
}

pub fn write_csv(table: &AnalyzeTable, out: &mut dyn Write) -> Result<()> {
    write!(out, "beat_index,r_index,label")?;
    for m in &table.metrics {
        write!(out, ",{m}")?;
    }
    writeln!(out)?;
    for row in &table.rows {
        write!(out, "{},{},{}", row.beat_index, row.r_index, row.label.as_deref().unwrap_or(""))?;
        for v in &row.values {
            match v {
                Some(v) => write!(out, ",{v}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn run(args: &AnalyzeArgs, opts: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let table = analyze(args, opts)?;
    match opts.format {
        OutputFormat::Csv => write_csv(&table, out),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &table)?;
            writeln!(out)?;
            Ok(())
        }
    }
}
