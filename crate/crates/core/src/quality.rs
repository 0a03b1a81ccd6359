//! Label-free noise localisation from the WSE baseline position and MEE
//! outlier statistics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morph::{morphological_entropy, MorphConfig, MorphError};
use crate::segmentation::Beat;
use crate::stats::{mad, median};

pub const DEFAULT_EDGE_BINS: usize = 1;
pub const DEFAULT_Z_THRESHOLD: f64 = 3.5;
const MAD_SCALE: f64 = 1.4826;
const MAD_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("quality assessment needs at least 2 beats, got {0}")]
    TooFewBeats(usize),
    #[error("z threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("beat {beat_index}: {source}")]
    Morph {
        beat_index: usize,
        #[source]
        source: MorphError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReason {
    BaselineExtreme,
    MeeOutlier,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatQuality {
    pub beat_index: usize,
    pub mee: f64,
    pub baseline_bin_index: usize,
    pub z_score: f64,
    pub noisy: bool,
    pub reason: Option<NoiseReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub per_beat: Vec<BeatQuality>,
    pub noisy_fraction: f64,
}

impl QualityReport {
    /// Per-beat flag track: beat_index, mee, baseline_bin_index, z_score, noisy, reason.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("beat_index,mee,baseline_bin_index,z_score,noisy,reason\n");
        for b in &self.per_beat {
            let reason = match b.reason {
                Some(NoiseReason::BaselineExtreme) => "baseline_extreme",
                Some(NoiseReason::MeeOutlier) => "mee_outlier",
                Some(NoiseReason::Both) => "both",
                None => "",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                b.beat_index, b.mee, b.baseline_bin_index, b.z_score, b.noisy as u8, reason
            );
        }
        s
    }

    pub fn noisy_count(&self) -> usize {
        self.per_beat.iter().filter(|b| b.noisy).count()
    }
}

/// Robust z-scores `|M − median| / (1.4826·MAD + ε)`.
pub fn robust_z(values: &[f64]) -> Vec<f64> {
    let med = median(values);
    let scale = MAD_SCALE * mad(values) + MAD_EPSILON;
    values.iter().map(|v| (v - med).abs() / scale).collect()
}

/// Mark beats whose baseline bin lies within `edge_bins` of either end of
/// the bandwidth range, or whose MEE robust z-score exceeds `z_threshold`.
pub fn assess_quality(
    beats: &[Beat],
    cfg: &MorphConfig,
    edge_bins: usize,
    z_threshold: f64,
) -> Result<QualityReport, QualityError> {
    if beats.len() < 2 {
        return Err(QualityError::TooFewBeats(beats.len()));
    }
    if !(z_threshold > 0.0) {
        return Err(QualityError::InvalidThreshold(z_threshold));
    }
    let results = beats
        .par_iter()
        .map(|b| {
            morphological_entropy(&b.samples, cfg)
                .map(|r| (r.mee, r.baseline_bin_index))
                .map_err(|source| QualityError::Morph {
                    beat_index: b.beat_index,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mees: Vec<f64> = results.iter().map(|r| r.0).collect();
    let z = robust_z(&mees);
    let top = cfg.bandwidth_count - 1;

    let per_beat: Vec<BeatQuality> = beats
        .iter()
        .zip(results)
        .zip(z)
        .map(|((beat, (mee, bin)), z_score)| {
            let extreme = bin < edge_bins || bin + edge_bins > top;
            let outlier = z_score > z_threshold;
            let reason = match (extreme, outlier) {
                (true, true) => Some(NoiseReason::Both),
                (true, false) => Some(NoiseReason::BaselineExtreme),
                (false, true) => Some(NoiseReason::MeeOutlier),
                (false, false) => None,
            };
            BeatQuality {
                beat_index: beat.beat_index,
                mee,
                baseline_bin_index: bin,
                z_score,
                noisy: reason.is_some(),
                reason,
            }
        })
        .collect();
    let noisy = per_beat.iter().filter(|b| b.noisy).count();
    Ok(QualityReport {
        noisy_fraction: noisy as f64 / per_beat.len() as f64,
        per_beat,
    })
}
