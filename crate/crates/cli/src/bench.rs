//! Per-beat kernel timing over synthetic beats.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use clap::Args;
use mee_core::baselines::BaselineConfig;
use mee_core::morph::{fuse_mee, Fusion};
use mee_core::signal_io::{add_noise, NoiseSpec, SynthSpec};
use mee_core::stats::{mean, median, percentile};
use serde::Serialize;

use crate::metrics::Metric;
use crate::{CliError, GlobalOpts, OutputFormat, Result};

pub const MIN_REPETITIONS: usize = 100;
const FUSION_BATCH: usize = 1000;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 289)]
    pub beat_length: usize,
    /// Timed beats per metric (at least 100).
    #[arg(long, default_value_t = 100)]
    pub repetitions: usize,
    /// Metric names plus `fusion` (the fusion step alone).
    #[arg(long, default_value = "pe,ae,se,fe,bwe,wse2,fusion,mee2")]
    pub metrics: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchTarget {
    Metric(Metric),
    Fusion,
}

impl BenchTarget {
    pub fn name(self) -> String {
        match self {
            BenchTarget::Metric(m) => m.name(),
            BenchTarget::Fusion => "fusion".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub metric_name: String,
    pub mean_us_per_beat: f64,
    /// Absent on the summed stage row.
    pub median_us_per_beat: Option<f64>,
    pub p95_us_per_beat: Option<f64>,
    pub beat_count: usize,
    pub beat_length: usize,
    /// FE mean over this row's mean, when FE was timed.
    pub ratio_vs_fe: Option<f64>,
}

fn parse_targets(spec: &str) -> Result<Vec<BenchTarget>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| match s.trim() {
            "fusion" => Ok(BenchTarget::Fusion),
            other => other.parse().map(BenchTarget::Metric),
        })
        .collect()
}

/// `count` noisy synthetic beats of exactly `length` samples, R-peak centred.
pub fn synthetic_beats(length: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let fs = (length as f64 - 1.0) / 0.8;
    let bpm = 72.0;
    let duration = ((count + 2) as f64 * 60.0 / bpm).ceil() + 1.0;
    let record = SynthSpec::new(fs, duration, bpm, seed).generate()?;
    let record = add_noise(&record, NoiseSpec::gaussian(0.01, seed.wrapping_add(1)))?;
    let x = &record.leads()[0].samples;
    let half = length / 2;
    let beats: Vec<Vec<f64>> = record
        .annotations()
        .unwrap_or_default()
        .iter()
        .filter(|a| a.sample_index >= half && a.sample_index - half + length <= x.len())
        .map(|a| x[a.sample_index - half..a.sample_index - half + length].to_vec())
        .take(count)
        .collect();
    if beats.len() < count {
        return Err(CliError::Usage(format!(
            "could only synthesise {} beats of length {length}",
            beats.len()
        )));
    }
    Ok(beats)
}

fn time_target(target: BenchTarget, beats: &[Vec<f64>], opts: &GlobalOpts) -> Result<Vec<f64>> {
    let baseline = BaselineConfig::default();
    let morph = opts.morph_config()?;
    let mut samples = Vec::with_capacity(beats.len());
    match target {
        BenchTarget::Metric(m) => {
            // warm-up
            m.compute(&beats[0], &baseline, &morph)?;
            for b in beats {
                let start = Instant::now();
                black_box(m.compute(black_box(b), &baseline, &morph)?);
                samples.push(start.elapsed().as_secs_f64() * 1e6);
            }
        }
        BenchTarget::Fusion => {
            let inputs: Vec<(f64, f64)> = beats
                .iter()
                .map(|b| (b[0].abs() + 1.0, b[b.len() / 2]))
                .collect();
            for &(bwe, wse) in &inputs {
                let start = Instant::now();
                for _ in 0..FUSION_BATCH {
                    black_box(fuse_mee(black_box(bwe), black_box(wse), Fusion::MeanSquare));
                }
                samples.push(start.elapsed().as_secs_f64() * 1e6 / FUSION_BATCH as f64);
            }
        }
    }
    Ok(samples)
}

pub fn bench(args: &BenchArgs, opts: &GlobalOpts) -> Result<Vec<BenchResult>> {
    if args.repetitions < MIN_REPETITIONS {
        return Err(CliError::Usage(format!(
            "--repetitions must be at least {MIN_REPETITIONS}, got {}",
            args.repetitions
        )));
    }
    if args.beat_length < 16 {
        return Err(CliError::Usage("--beat-length must be at least 16".into()));
    }
    let targets = parse_targets(&args.metrics)?;
    let beats = synthetic_beats(args.beat_length, args.repetitions, opts.seed)?;
    let mut rows = Vec::new();
    for t in targets {
        let us = time_target(t, &beats, opts)?;
        rows.push(BenchResult {
            metric_name: t.name(),
            mean_us_per_beat: mean(&us),
            median_us_per_beat: Some(median(&us)),
            p95_us_per_beat: Some(percentile(&us, 0.95)),
            beat_count: us.len(),
            beat_length: args.beat_length,
            ratio_vs_fe: None,
        });
    }
    // BWE + WSE-II + fusion as separately timed stages
    let part = |rows: &[BenchResult], name: &str| {
        rows.iter().find(|r| r.metric_name == name).map(|r| r.mean_us_per_beat)
    };
    if let (Some(b), Some(w), Some(f)) = (part(&rows, "bwe"), part(&rows, "wse2"), part(&rows, "fusion")) {
        rows.push(BenchResult {
            metric_name: "bwe+wse2+fusion".into(),
            mean_us_per_beat: b + w + f,
            median_us_per_beat: None,
            p95_us_per_beat: None,
            beat_count: args.repetitions,
            beat_length: args.beat_length,
            ratio_vs_fe: None,
        });
    }
    if let Some(fe) = part(&rows, "fe") {
        for r in &mut rows {
            r.ratio_vs_fe = Some(fe / r.mean_us_per_beat);
        }
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn run(args: &BenchArgs, opts: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let rows = bench(args, opts)?;
    match opts.format {
        OutputFormat::Csv => {
            writeln!(
                out,
                "metric,mean_us_per_beat,median_us_per_beat,p95_us_per_beat,beat_count,beat_length,ratio_vs_fe"
            )?;
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.metric_name,
                    cell(Some(r.mean_us_per_beat)),
                    cell(r.median_us_per_beat),
                    cell(r.p95_us_per_beat),
                    r.beat_count,
                    r.beat_length,
                    cell(r.ratio_vs_fe)
                )?;
            }
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
