use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use mee_core::diversity::{
    prune_by_mee_capped, prune_random, record_mee, write_scores_csv, DiversityError,
    PruneManifest, RecordScore,
};
use rayon::prelude::*;

use crate::{load, CliError, GlobalOpts, OutputFormat, Result};

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    /// Record files, or directories whose `*.csv` files are all used.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Only use records with this `.meta` label.
    #[arg(long)]
    pub label: Option<String>,
    /// Histogram bins over the record-level MEE range.
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long, default_value_t = 1)]
    pub keep_per_bin: usize,
    /// Global upper bound on kept records (filled round-robin across bins).
    #[arg(long)]
    pub cap: Option<usize>,
    /// Random control: keep this many records uniformly at random instead.
    #[arg(long)]
    pub random_target: Option<usize>,
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|e| e == "csv"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Score every record; records with fewer than 3 beats are skipped with a warning.
pub fn score_paths(paths: &[PathBuf], opts: &GlobalOpts) -> Result<Vec<RecordScore>> {
    let cfg = opts.morph_config()?;
    let results: Vec<Result<Option<RecordScore>>> = paths
        .par_iter()
        .map(|p: &PathBuf| {
            let (record, lead) = load(p, opts)?;
            match record_mee(&record, &lead, &cfg) {
                Ok(s) => Ok(Some(s)),
                Err(DiversityError::TooFewBeats { record_id, found }) => {
                    log::warn!("{record_id}: only {found} beats, skipped");
                    Ok(None)
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let mut scores = Vec::new();
    for r in results {
        if let Some(s) = r? {
            scores.push(s);
        }
    }
    Ok(scores)
}

pub fn select_label(scores: Vec<RecordScore>, label: Option<&str>) -> Result<Vec<RecordScore>> {
    match label {
        Some(l) => Ok(scores.into_iter().filter(|s| s.label == l).collect()),
        None => {
            let labels: BTreeSet<&str> = scores.iter().map(|s| s.label.as_str()).collect();
            if labels.len() > 1 {
                return Err(CliError::Usage(format!(
                    "records carry several labels ({}); pick one with --label",
                    labels.into_iter().collect::<Vec<_>>().join(", ")
                )));
            }
            Ok(scores)
        }
    }
}

pub fn prune(args: &PruneArgs, opts: &GlobalOpts) -> Result<(Vec<RecordScore>, PruneManifest)> {
    let paths = expand_inputs(&args.inputs)?;
    let scores = select_label(score_paths(&paths, opts)?, args.label.as_deref())?;
    let manifest = match args.random_target {
        Some(target) => {
            let ids: Vec<&str> = scores.iter().map(|s| s.record_id.as_str()).collect();
            prune_random(&ids, target, opts.seed)?
        }
        None => prune_by_mee_capped(&scores, args.bins, args.keep_per_bin, args.cap)?,
    };
    Ok((scores, manifest))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn run(args: &PruneArgs, opts: &GlobalOpts, out: &mut dyn Write) -> Result<()> {
    let (scores, manifest) = prune(args, opts)?;
    if let Some(path) = &args.scores_out {
        let mut buf = Vec::new();
        write_scores_csv(&scores, &mut buf)?;
        write_file(path, &buf)?;
    }
    let json = manifest.to_json()?;
    if let Some(path) = &args.manifest_out {
        write_file(path, json.as_bytes())?;
    }
    match opts.format {
        OutputFormat::Json => writeln!(out, "{json}")?,
        OutputFormat::Csv => {
            let kept: BTreeSet<&str> = manifest.kept.iter().map(String::as_str).collect();
            writeln!(out, "record_id,label,record_mee,bin,kept")?;
            for s in &scores {
                let bin = manifest
                    .bin_assignment
                    .get(&s.record_id)
                    .map(|b| b.to_string())
                    .unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.record_id,
                    s.label,
                    s.record_mee,
                    bin,
                    kept.contains(s.record_id.as_str()) as u8
                )?;
            }
        }
    }
    Ok(())
}
