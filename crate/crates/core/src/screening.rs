//! Label-free beat screening.
//!
//! The per-beat metric sequence is histogrammed into equal bins between its
//! minimum and maximum; the fullest bin is taken to hold the normal beats and
//! the median of its members becomes the reference `M_ref`. Each beat's
//! fluctuation ratio is `|M(k) − M_ref| / (M_ref + σ_M)` with `σ_M` the
//! population standard deviation of the sequence, and beats whose ratio
//! exceeds a threshold α are flagged.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morph::{morphological_entropy, MorphConfig, MorphError};
use crate::segmentation::Beat;
use crate::signal_io::BeatLabel;
use crate::stats::{argmax_first, median, population_sd, EqualBins};

/// Bin count used for reference picking unless configured otherwise.
pub const DEFAULT_PICKING_BINS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreeningError {
    #[error("no beats to screen")]
    EmptyBeatList,
    #[error("picking bin count must be ≥ 1")]
    InvalidBinCount,
    #[error("beat {beat_index}: {source}")]
    Morph {
        beat_index: usize,
        #[source]
        source: MorphError,
    },
    #[error("metric value at position {0} is not finite")]
    NonFiniteValue(usize),
    #[error("{flags} flags but {labels} labels")]
    LengthMismatch { flags: usize, labels: usize },
    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),
    #[error("RR intervals must be positive")]
    NonpositiveRR,
    #[error("adaptive threshold undefined for equal RR intervals")]
    NotApplicable,
}

/// Per-beat metric values of one record with their reference and fluctuation ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeeSeries {
    pub record_id: String,
    pub beat_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub reference: f64,
    pub sigma: f64,
    pub fluctuation: Vec<f64>,
    pub picking_bins: usize,
    pub reference_bin: usize,
}

impl MeeSeries {
    /// Build a series from precomputed metric values (MEE or any baseline entropy).
    pub fn from_values(
        record_id: impl Into<String>,
        beat_indices: Vec<usize>,
        values: Vec<f64>,
        picking_bins: usize,
    ) -> Result<Self, ScreeningError> {
        if values.is_empty() {
            return Err(ScreeningError::EmptyBeatList);
        }
        if picking_bins < 1 {
            return Err(ScreeningError::InvalidBinCount);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScreeningError::NonFiniteValue(i));
        }
        assert_eq!(beat_indices.len(), values.len(), "one index per value");
        let (reference, reference_bin) = bandwidth_reference(&values, picking_bins);
        let sigma = population_sd(&values);
        let denom = reference + sigma;
        let fluctuation = values
            .iter()
            .map(|&m| {
                let dev = (m - reference).abs();
                if dev == 0.0 {
                    0.0
                } else {
                    dev / denom
                }
            })
            .collect();
        Ok(Self {
            record_id: record_id.into(),
            beat_indices,
            values,
            reference,
            sigma,
            fluctuation,
            picking_bins,
            reference_bin,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every value is identical (all ratios are zero).
    pub fn is_degenerate(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }
}

/// Reference value and bin: median of the members of the fullest equal-width bin.
pub fn bandwidth_reference(values: &[f64], picking_bins: usize) -> (f64, usize) {
    let bins = EqualBins::spanning(values, picking_bins);
    let bin = argmax_first(&bins.counts(values));
    let members: Vec<f64> = values.iter().copied().filter(|&v| bins.index(v) == bin).collect();
    (median(&members), bin)
}

/// Per-beat MEE of `beats`, then bandwidth picking over the sequence.
pub fn mee_series(
    record_id: &str,
    beats: &[Beat],
    cfg: &MorphConfig,
    picking_bins: usize,
) -> Result<MeeSeries, ScreeningError> {
    if beats.is_empty() {
        return Err(ScreeningError::EmptyBeatList);
    }
    let values = beats
        .par_iter()
        .map(|b| {
            morphological_entropy(&b.samples, cfg)
                .map(|r| r.mee)
                .map_err(|source| ScreeningError::Morph {
                    beat_index: b.beat_index,
                    source,
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let indices = beats.iter().map(|b| b.beat_index).collect();
    MeeSeries::from_values(record_id, indices, values, picking_bins)
}

/// `f(k) > alpha`, strictly.
pub fn flag_beats(series: &MeeSeries, alpha: f64) -> Vec<bool> {
    flag_fluctuations(&series.fluctuation, alpha)
}

pub fn flag_fluctuations(fluctuation: &[f64], alpha: f64) -> Vec<bool> {
    fluctuation.iter().map(|&f| f > alpha).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, other: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Metrics with total conventions: PPV = 0 without predicted positives,
    /// SEN = 0 without positives, SPE = 1 without negatives, F1 = 0 when PPV + SEN = 0.
    pub fn metrics(&self) -> Metrics {
        let ratio = |num: usize, den: usize, empty: f64| {
            if den == 0 {
                empty
            } else {
                num as f64 / den as f64
            }
        };
        let acc = ratio(self.tp + self.tn, self.total(), 0.0);
        let sen = ratio(self.tp, self.tp + self.fn_, 0.0);
        let spe = ratio(self.tn, self.tn + self.fp, 1.0);
        let ppv = ratio(self.tp, self.tp + self.fp, 0.0);
        let f1 = if ppv + sen == 0.0 {
            0.0
        } else {
            2.0 * ppv * sen / (ppv + sen)
        };
        Metrics {
            acc,
            sen,
            spe,
            ppv,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub ppv: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub flagged: Vec<bool>,
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(flatten)]
    pub metrics: Metrics,
}

impl ScreeningReport {
    pub fn from_confusion(flagged: Vec<bool>, confusion: Confusion) -> Self {
        Self {
            flagged,
            metrics: confusion.metrics(),
            confusion,
        }
    }

    /// Line-oriented `key=value` rendering.
    pub fn to_key_value(&self) -> String {
        let c = &self.confusion;
        let m = &self.metrics;
        let mut s = String::new();
        let flagged: Vec<String> = self
            .flagged
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i.to_string())
            .collect();
        let _ = writeln!(s, "beats={}", self.flagged.len());
        let _ = writeln!(s, "flagged_count={}", flagged.len());
        let _ = writeln!(s, "flagged={}", flagged.join(","));
        let _ = writeln!(s, "tp={}\nfp={}\ntn={}\nfn={}", c.tp, c.fp, c.tn, c.fn_);
        let _ = writeln!(
            s,
            "acc={}\nsen={}\nspe={}\nppv={}\nf1={}",
            m.acc, m.sen, m.spe, m.ppv, m.f1
        );
        s
    }
}

fn confusion_of(flagged: &[bool], labels: &[BeatLabel]) -> Confusion {
    let mut c = Confusion::default();
    for (&f, &l) in flagged.iter().zip(labels) {
        match (f, l.is_abnormal()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Score flags against reference labels; every non-`N` label is a positive.
pub fn evaluate(flagged: &[bool], labels: &[BeatLabel]) -> Result<ScreeningReport, ScreeningError> {
    if flagged.len() != labels.len() {
        return Err(ScreeningError::LengthMismatch {
            flags: flagged.len(),
            labels: labels.len(),
        });
    }
    Ok(ScreeningReport::from_confusion(
        flagged.to_vec(),
        confusion_of(flagged, labels),
    ))
}

/// Sum confusion counts across records before computing metrics.
pub fn pool_reports(reports: &[ScreeningReport]) -> ScreeningReport {
    let confusion = reports
        .iter()
        .fold(Confusion::default(), |acc, r| acc + r.confusion);
    let flagged = reports.iter().flat_map(|r| r.flagged.iter().copied()).collect();
    ScreeningReport::from_confusion(flagged, confusion)
}

/// Positions of beats that take part in evaluation: labelled beats, with
/// `S` beats dropped unless `include_sveb`.
pub fn evaluation_positions(labels: &[Option<BeatLabel>], include_sveb: bool) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Some(BeatLabel::S) if !include_sveb => None,
            Some(_) => Some(i),
            None => None,
        })
        .collect()
}

/// Evenly spaced thresholds `min, min + step, …, ≤ max`.
pub fn alpha_grid(alpha_min: f64, alpha_max: f64, step: f64) -> Result<Vec<f64>, ScreeningError> {
    if !(alpha_min.is_finite() && alpha_max.is_finite() && alpha_min <= alpha_max) {
        return Err(ScreeningError::InvalidGrid(format!(
            "need finite alpha_min ≤ alpha_max, got [{alpha_min}, {alpha_max}]"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(ScreeningError::InvalidGrid(format!("step must be > 0, got {step}")));
    }
    let points = ((alpha_max - alpha_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..points)
        .map(|i| ((alpha_min + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub flagged_count: usize,
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best_alpha: f64,
    pub best: ScreeningReport,
    pub curve: Vec<CurvePoint>,
}

impl GridSearch {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("alpha,flagged,tp,fp,tn,fn,acc,sen,spe,ppv,f1\n");
        for p in &self.curve {
            let c = &p.confusion;
            let m = &p.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                p.alpha, p.flagged_count, c.tp, c.fp, c.tn, c.fn_, m.acc, m.sen, m.spe, m.ppv, m.f1
            );
        }
        s
    }
}

/// Evaluate every α on the grid against `labels` (one per beat of `series`);
/// the best point maximises F1, ties going to the smaller α.
pub fn grid_search_alpha(
    series: &MeeSeries,
    labels: &[BeatLabel],
    alpha_min: f64,
    alpha_max: f64,
    step: f64,
) -> Result<GridSearch, ScreeningError> {
    grid_search_fluctuations(&series.fluctuation, labels, alpha_min, alpha_max, step)
}

/// Grid search over raw fluctuation ratios (used when only a subset of beats is scored).
pub fn grid_search_fluctuations(
    fluctuation: &[f64],
    labels: &[BeatLabel],
    alpha_min: f64,
    alpha_max: f64,
    step: f64,
) -> Result<GridSearch, ScreeningError> {
    if fluctuation.len() != labels.len() {
        return Err(ScreeningError::LengthMismatch {
            flags: fluctuation.len(),
            labels: labels.len(),
        });
    }
    let grid = alpha_grid(alpha_min, alpha_max, step)?;
    let curve: Vec<CurvePoint> = grid
        .par_iter()
        .map(|&alpha| {
            let flags = flag_fluctuations(fluctuation, alpha);
            let confusion = confusion_of(&flags, labels);
            CurvePoint {
                alpha,
                flagged_count: flags.iter().filter(|&&f| f).count(),
                confusion,
                metrics: confusion.metrics(),
            }
        })
        .collect();
    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.metrics.f1 > curve[best].metrics.f1 {
            best = i;
        }
    }
    let best_alpha = curve[best].alpha;
    let report = evaluate(&flag_fluctuations(fluctuation, best_alpha), labels)?;
    Ok(GridSearch {
        best_alpha,
        best: report,
        curve,
    })
}

/// RR-adaptive threshold for supraventricular beats:
/// `β = f / (2·|post − pre| / (post + pre))`.
pub fn sveb_adaptive_threshold(f_k: f64, pre_rr_s: f64, post_rr_s: f64) -> Result<f64, ScreeningError> {
    if !(pre_rr_s > 0.0 && post_rr_s > 0.0) {
        return Err(ScreeningError::NonpositiveRR);
    }
    let relative_change = 2.0 * (post_rr_s - pre_rr_s).abs() / (post_rr_s + pre_rr_s);
    if relative_change == 0.0 {
        return Err(ScreeningError::NotApplicable);
    }
    Ok(f_k / relative_change)
}
