//! Record-level MEE and representative pruning of same-label record groups.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morph::{morphological_entropy, MorphConfig, MorphError};
use crate::segmentation::{segment, Beat, SegmentConfig, SegmentError};
use crate::signal_io::EcgRecord;
use crate::stats::EqualBins;

#[derive(Debug, Error)]
pub enum DiversityError {
    #[error("record `{record_id}` yielded {found} beats; at least 3 are needed")]
    TooFewBeats { record_id: String, found: usize },
    #[error("no records to prune")]
    EmptyGroup,
    #[error("target count {target} outside 1..={available}")]
    TargetOutOfRange { target: usize, available: usize },
    #[error("bin count and keep_per_bin must be ≥ 1")]
    InvalidParameter,
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("record `{record_id}` beat {beat_index}: {source}")]
    Morph {
        record_id: String,
        beat_index: usize,
        #[source]
        source: MorphError,
    },
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub record_id: String,
    pub label: String,
    pub record_mee: f64,
    pub beat_count_used: usize,
}

/// Mean MEE over the interior beats of `beats` (first and last are excluded).
pub fn record_mee_from_beats(
    record_id: &str,
    label: &str,
    beats: &[Beat],
    cfg: &MorphConfig,
) -> Result<RecordScore, DiversityError> {
    if beats.len() < 3 {
        return Err(DiversityError::TooFewBeats {
            record_id: record_id.to_string(),
            found: beats.len(),
        });
    }
    let interior = &beats[1..beats.len() - 1];
    let values = interior
        .iter()
        .map(|b| {
            morphological_entropy(&b.samples, cfg)
                .map(|r| r.mee)
                .map_err(|source| DiversityError::Morph {
                    record_id: record_id.to_string(),
                    beat_index: b.beat_index,
                    source,
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(RecordScore {
        record_id: record_id.to_string(),
        label: label.to_string(),
        record_mee: values.iter().sum::<f64>() / values.len() as f64,
        beat_count_used: values.len(),
    })
}

/// Segment `lead` of `record` and score it. Falls back to the first lead
/// (with a warning) when the requested one is absent.
pub fn record_mee(
    record: &EcgRecord,
    lead_name: &str,
    cfg: &MorphConfig,
) -> Result<RecordScore, DiversityError> {
    let (lead, fell_back) = record.resolve_lead(lead_name);
    if fell_back {
        log::warn!(
            "record `{}` has no lead `{lead_name}`; using `{}`",
            record.record_id(),
            lead.name
        );
    }
    let extraction = segment(record, &lead.name, &SegmentConfig::default())?;
    record_mee_from_beats(
        record.record_id(),
        record.label().unwrap_or(""),
        &extraction.beats,
        cfg,
    )
}

/// Score a corpus in parallel; results keep input order.
pub fn score_records(
    records: &[EcgRecord],
    lead_name: &str,
    cfg: &MorphConfig,
) -> Vec<Result<RecordScore, DiversityError>> {
    records.par_iter().map(|r| record_mee(r, lead_name, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneManifest {
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    pub bin_assignment: BTreeMap<String, usize>,
    pub bin_count: usize,
}

impl PruneManifest {
    pub fn to_json(&self) -> Result<String, DiversityError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// True when `kept` and `dropped` partition `ids` with no overlap.
    pub fn partitions<S: AsRef<str>>(&self, ids: &[S]) -> bool {
        let input: BTreeSet<&str> = ids.iter().map(|s| s.as_ref()).collect();
        let kept: BTreeSet<&str> = self.kept.iter().map(String::as_str).collect();
        let dropped: BTreeSet<&str> = self.dropped.iter().map(String::as_str).collect();
        kept.len() == self.kept.len()
            && dropped.len() == self.dropped.len()
            && kept.is_disjoint(&dropped)
            && kept.union(&dropped).copied().collect::<BTreeSet<_>>() == input
            && input.len() == ids.len()
    }
}

fn check_unique(ids: impl Iterator<Item = String>) -> Result<(), DiversityError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.clone()) {
            return Err(DiversityError::DuplicateId(id));
        }
    }
    Ok(())
}

/// Histogram the scores into `bin_count` equal bins over [min, max] and
/// keep, per occupied bin, the `keep_per_bin` records closest to the bin
/// centre (ties by record id). With `cap`, the kept set is further trimmed
/// round-robin across bins, so coverage holds whenever `cap` ≥ occupied bins.
pub fn prune_by_mee(
    scores: &[RecordScore],
    bin_count: usize,
    keep_per_bin: usize,
) -> Result<PruneManifest, DiversityError> {
    prune_by_mee_capped(scores, bin_count, keep_per_bin, None)
}

pub fn prune_by_mee_capped(
    scores: &[RecordScore],
    bin_count: usize,
    keep_per_bin: usize,
    cap: Option<usize>,
) -> Result<PruneManifest, DiversityError> {
    if scores.is_empty() {
        return Err(DiversityError::EmptyGroup);
    }
    if bin_count < 1 || keep_per_bin < 1 || cap == Some(0) {
        return Err(DiversityError::InvalidParameter);
    }
    check_unique(scores.iter().map(|s| s.record_id.clone()))?;
    let values: Vec<f64> = scores.iter().map(|s| s.record_mee).collect();
    let bins = EqualBins::spanning(&values, bin_count);

    let mut members: BTreeMap<usize, Vec<(f64, &str)>> = BTreeMap::new();
    let mut bin_assignment = BTreeMap::new();
    for s in scores {
        let b = bins.index(s.record_mee);
        bin_assignment.insert(s.record_id.clone(), b);
        let dist = (s.record_mee - bins.center(b)).abs();
        members.entry(b).or_default().push((dist, s.record_id.as_str()));
    }

    // (rank within bin, bin, id) so that a global cap walks bins round-robin
    let mut ranked: Vec<(usize, usize, &str)> = Vec::new();
    for (&b, list) in members.iter_mut() {
        list.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(y.1)));
        for (rank, &(_, id)) in list.iter().take(keep_per_bin).enumerate() {
            ranked.push((rank, b, id));
        }
    }
    ranked.sort();
    if let Some(cap) = cap {
        ranked.truncate(cap);
    }
    let kept_set: BTreeSet<&str> = ranked.iter().map(|&(_, _, id)| id).collect();

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in scores {
        if kept_set.contains(s.record_id.as_str()) {
            kept.push(s.record_id.clone());
        } else {
            dropped.push(s.record_id.clone());
        }
    }
    Ok(PruneManifest {
        kept,
        dropped,
        bin_assignment,
        bin_count,
    })
}

/// Uniform random subset of `target_count` ids, reproducible per seed.
/// The manifest carries no bin assignment.
pub fn prune_random<S: AsRef<str>>(
    ids: &[S],
    target_count: usize,
    seed: u64,
) -> Result<PruneManifest, DiversityError> {
    if ids.is_empty() {
        return Err(DiversityError::EmptyGroup);
    }
    if target_count < 1 || target_count > ids.len() {
        return Err(DiversityError::TargetOutOfRange {
            target: target_count,
            available: ids.len(),
        });
    }
    check_unique(ids.iter().map(|s| s.as_ref().to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<usize> = sample(&mut rng, ids.len(), target_count).into_iter().collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let id = id.as_ref().to_string();
        if chosen.contains(&i) {
            kept.push(id);
        } else {
            dropped.push(id);
        }
    }
    Ok(PruneManifest {
        kept,
        dropped,
        bin_assignment: BTreeMap::new(),
        bin_count: 0,
    })
}

/// Occupied bins of `scores` (under `bin_count` equal bins) that have no
/// member in `kept`.
pub fn uncovered_bins(scores: &[RecordScore], bin_count: usize, kept: &[String]) -> Vec<usize> {
    if scores.is_empty() {
        return Vec::new();
    }
    let values: Vec<f64> = scores.iter().map(|s| s.record_mee).collect();
    let bins = EqualBins::spanning(&values, bin_count);
    let kept: BTreeSet<&str> = kept.iter().map(String::as_str).collect();
    let mut occupied = BTreeSet::new();
    let mut covered = BTreeSet::new();
    for s in scores {
        let b = bins.index(s.record_mee);
        occupied.insert(b);
        if kept.contains(s.record_id.as_str()) {
            covered.insert(b);
        }
    }
    occupied.difference(&covered).copied().collect()
}

/// CSV with columns record_id, label, record_mee.
pub fn write_scores_csv<W: Write>(scores: &[RecordScore], out: W) -> Result<(), DiversityError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["record_id", "label", "record_mee"])?;
    for s in scores {
        w.write_record([s.record_id.as_str(), s.label.as_str(), &s.record_mee.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
