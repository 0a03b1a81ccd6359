//! Metric drift under additive Gaussian noise, per beat, against the clean record.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use mee_core::baselines::BaselineConfig;
use mee_core::segmentation::{extract_beats, segment, Beat, SegmentConfig};
use mee_core::signal_io::{add_noise, NoiseSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::metrics::{parse_list, Metric};
use crate::{load, CliError, GlobalOpts, OutputFormat, Result};

#[derive(Debug, Clone, Args)]
pub struct RobustnessArgs {
    pub record: PathBuf,
    /// Noise standard deviations in the record's units.
    #[arg(long = "std", value_delimiter = ',', default_values_t = [0.01, 0.02, 0.03])]
    pub std_devs: Vec<f64>,
    #[arg(long, default_value = "pe,ae,se,fe,bwe,wse2,mee2")]
    pub metrics: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub sigma: f64,
    /// Mean |noisy − clean| over beats divided by |mean clean|, one per metric.
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub record_id: String,
    pub metrics: Vec<String>,
    pub beat_count: usize,
    pub clean_mean: Vec<f64>,
    pub rows: Vec<DriftRow>,
}

fn values(beats: &[Beat], metric: Metric, opts: &GlobalOpts) -> Result<Vec<Option<f64>>> {
    let baseline = BaselineConfig::default();
    let morph = opts.morph_config()?;
    beats
        .par_iter()
        .map(|b| metric.compute(&b.samples, &baseline, &morph))
        .collect()
}

/// Mean absolute drift over beats where both values are defined, relative to the clean mean.
pub fn relative_drift(clean: &[Option<f64>], noisy: &[Option<f64>]) -> (f64, f64) {
    let pairs: Vec<(f64, f64)> = clean
        .iter()
        .zip(noisy)
        .filter_map(|(c, n)| Some(((*c)?, (*n)?)))
        .collect();
    let defined: Vec<f64> = clean.iter().flatten().copied().collect();
    let clean_mean = defined.iter().sum::<f64>() / defined.len() as f64;
    let drift = pairs.iter().map(|(c, n)| (n - c).abs()).sum::<f64>() / pairs.len() as f64;
    (drift / clean_mean.abs(), clean_mean)
}

pub fn robustness(args: &RobustnessArgs, opts: &GlobalOpts) -> Result<RobustnessReport> {
    if args.std_devs.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(CliError::Usage("--std values must be finite and ≥ 0".into()));
    }
    let metrics = parse_list(&args.metrics)?;
    let (record, lead) = load(&args.record, opts)?;
    let clean_beats = segment(&record, &lead, &SegmentConfig::default())?.beats;
    if clean_beats.is_empty() {
        return Err(CliError::Usage("record has no complete beats".into()));
    }
    // noisy windows are cut at the clean R-peaks so beats stay paired
    let peaks: Vec<usize> = clean_beats.iter().map(|b| b.r_index).collect();
    let clean: Vec<Vec<Option<f64>>> = metrics
        .iter()
        .map(|&m| values(&clean_beats, m, opts))
        .collect::<Result<_>>()?;

    let mut clean_mean = Vec::new();
    let mut rows = Vec::new();
    for &sigma in &args.std_devs {
        let noisy_record = add_noise(&record, NoiseSpec::gaussian(sigma, opts.seed))?;
        let noisy_beats = extract_beats(&noisy_record, &lead, &peaks)?.beats;
        let mut drift = Vec::new();
        clean_mean.clear();
        for (k, &m) in metrics.iter().enumerate() {
            let noisy = values(&noisy_beats, m, opts)?;
            let (d, cm) = relative_drift(&clean[k], &noisy);
            drift.push(d);
            clean_mean.push(cm);
        }
        rows.push(DriftRow { sigma, drift });
    }
    Ok(RobustnessReport {
        record_id: record.record_id().to_string(),
        metrics: metrics.iter().map(|m| m.name()).collect(),
        beat_count: clean_beats.len(),
        clean_mean,
        rows,
    })
}

pub fn run(args: &RobustnessArgs, opts: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let report = robustness(args, opts)?;
    match opts.format {
        OutputFormat::Csv => {
            write!(out, "sigma")?;
            for m in &report.metrics {
                write!(out, ",drift_{m}")?;
            }
            writeln!(out)?;
            for r in &report.rows {
                write!(out, "{}", r.sigma)?;
                for d in &r.drift {
                    write!(out, ",{d}")?;
                }
                writeln!(out)?;
            }
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
