use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use mee_core::screening::{
    evaluate, evaluation_positions, flag_fluctuations, grid_search_fluctuations, mee_series,
    Confusion, CurvePoint, Metrics,
};
use mee_core::segmentation::{segment, SegmentConfig};
use mee_core::signal_io::BeatLabel;
use serde::Serialize;

use crate::{load, CliError, GlobalOpts, OutputFormat, Result};

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    /// One or more records; several records also get a pooled row.
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
    /// Score supraventricular (S) beats too; they are excluded by default.
    #[arg(long)]
    pub include_sveb: bool,
    /// Write the α-sweep curve as CSV (with --grid).
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    pub evaluated: usize,
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordScreen {
    pub record_id: String,
    pub variant: u8,
    pub alpha: f64,
    pub beats: usize,
    pub reference: f64,
    pub sigma: f64,
    pub flagged: Vec<usize>,
    pub fluctuation: Vec<f64>,
    pub scores: Option<Scores>,
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenOutput {
    pub records: Vec<RecordScreen>,
    pub pooled: Option<Scores>,
}

pub fn screen_record(path: &std::path::Path, args: &ScreenArgs, opts: &GlobalOpts) -> Result<RecordScreen> {
    let (record, lead) = load(path, opts)?;
    let beats = segment(&record, &lead, &SegmentConfig::default())?.beats;
    let cfg = opts.morph_config()?;
    let series = mee_series(record.record_id(), &beats, &cfg, opts.picking_bins)?;

    let labels: Vec<Option<BeatLabel>> = beats.iter().map(|b| b.label).collect();
    let positions = evaluation_positions(&labels, args.include_sveb);
    let truth: Vec<BeatLabel> = positions.iter().map(|&i| labels[i].expect("labelled")).collect();
    let f_eval: Vec<f64> = positions.iter().map(|&i| series.fluctuation[i]).collect();

    let (alpha, curve) = match opts.grid_range()? {
        Some((lo, hi, step)) => {
            if positions.is_empty() {
                return Err(CliError::Usage(format!(
                    "{}: grid search needs beat labels (.ann sidecar)",
                    path.display()
                )));
            }
            let g = grid_search_fluctuations(&f_eval, &truth, lo, hi, step)?;
            (g.best_alpha, g.curve)
        }
        None => (opts.alpha, Vec::new()),
    };
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CliError::Usage(format!("alpha must be finite and ≥ 0, got {alpha}")));
    }
    let flags = flag_fluctuations(&series.fluctuation, alpha);
    let scores = if positions.is_empty() {
        None
    } else {
        let eval_flags: Vec<bool> = positions.iter().map(|&i| flags[i]).collect();
        let r = evaluate(&eval_flags, &truth)?;
        Some(Scores {
            evaluated: positions.len(),
            confusion: r.confusion,
            metrics: r.metrics,
        })
    };
    Ok(RecordScreen {
        record_id: record.record_id().to_string(),
        variant: opts.variant,
        alpha,
        beats: beats.len(),
        reference: series.reference,
        sigma: series.sigma,
        flagged: flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect(),
        fluctuation: series.fluctuation,
        scores,
        curve,
    })
}

/// Confusion counts summed over records before computing metrics.
pub fn pool(records: &[RecordScreen]) -> Option<Scores> {
    if records.len() < 2 || records.iter().any(|r| r.scores.is_none()) {
        return None;
    }
    let mut confusion = Confusion::default();
    let mut evaluated = 0;
    for s in records.iter().filter_map(|r| r.scores.as_ref()) {
        confusion = confusion + s.confusion;
        evaluated += s.evaluated;
    }
    Some(Scores {
        evaluated,
        metrics: confusion.metrics(),
        confusion,
    })
}

pub fn screen(args: &ScreenArgs, opts: &GlobalOpts) -> Result<ScreenOutput> {
    let records = args
        .records
        .iter()
        .map(|p| screen_record(p, args, opts))
        .collect::<Result<Vec<_>>>()?;
    let pooled = pool(&records);
    Ok(ScreenOutput { records, pooled })
}

const HEADER: &str = "record_id,variant,alpha,beats,flagged,evaluated,tp,fp,tn,fn,acc,sen,spe,ppv,f1";

fn row(id: &str, variant: u8, alpha: Option<f64>, beats: usize, flagged: usize, s: Option<&Scores>) -> String {
    let mut line = format!(
        "{id},{variant},{},{beats},{flagged}",
        alpha.map(|a| a.to_string()).unwrap_or_default()
    );
    match s {
        Some(s) => {
            let (c, m) = (&s.confusion, &s.metrics);
            let _ = write!(
                line,
                ",{},{},{},{},{},{},{},{},{},{}",
                s.evaluated, c.tp, c.fp, c.tn, c.fn_, m.acc, m.sen, m.spe, m.ppv, m.f1
            );
        }
        None => line.push_str(",0,,,,,,,,,"),
    }
    line
}

pub fn write_csv(output: &ScreenOutput, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in &output.records {
        let line = row(&r.record_id, r.variant, Some(r.alpha), r.beats, r.flagged.len(), r.scores.as_ref());
        writeln!(out, "{line}")?;
    }
    if let Some(p) = &output.pooled {
        let variant = output.records[0].variant;
        let beats = output.records.iter().map(|r| r.beats).sum();
        let flagged = output.records.iter().map(|r| r.flagged.len()).sum();
        writeln!(out, "{}", row("pooled", variant, None, beats, flagged, Some(p)))?;
    }
    Ok(())
}

pub fn write_curve(output: &ScreenOutput, path: &std::path::Path) -> Result<()> {
    let mut s = String::from("record_id,alpha,flagged,tp,fp,tn,fn,acc,sen,spe,ppv,f1\n");
    for r in &output.records {
        for p in &r.curve {
            let (c, m) = (&p.confusion, &p.metrics);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.record_id, p.alpha, p.flagged_count, c.tp, c.fp, c.tn, c.fn_, m.acc, m.sen, m.spe, m.ppv, m.f1
            );
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn run(args: &ScreenArgs, opts: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let output = screen(args, opts)?;
    if let Some(path) = &args.curve_out {
        if opts.grid.is_none() {
            return Err(CliError::Usage("--curve-out needs --grid".into()));
        }
        write_curve(&output, path)?;
    }
    match opts.format {
        OutputFormat::Csv => write_csv(&output, out),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &output)?;
            writeln!(out)?;
            Ok(())
        }
    }
}
