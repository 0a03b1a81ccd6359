//! Morphological entropies of a single beat.
//!
//! A beat is min–max normalised to [0, 1] and the unit range is split into
//! `bandwidth_count` equal amplitude bins (half-open, last bin closed).
//!
//! * **BWE** (bandwidth entropy) is the Shannon entropy of bin occupancy
//!   with every term weighted by the bin midpoint.
//! * **WSE** (wavelet-set entropy) takes the fullest bin as the baseline and
//!   collects maximal runs of at least `min_wavelet_len` samples strictly
//!   above or strictly below it. Each run contributes a Shannon term on its
//!   share of run samples, weighted by its mean deviation from the baseline
//!   centre, plus a phase bias `θ · weight · P / T` where `P` is the sample
//!   that halves the run's absolute deviation and `T` the beat length.
//!   Variant I keeps below-baseline weights negative, variant II uses their
//!   magnitude.
//! * **MEE** fuses the two, either as `(bwe² + wse²) / 2` (FT-I) or as
//!   `bwe · exp(wse / 2π)` (FT-II).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphError {
    #[error("beat has zero amplitude range (max = min = {0})")]
    DegenerateAmplitude(f64),
    #[error("beat needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("beat contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WseVariant {
    /// Below-baseline sets carry negative weights.
    I,
    /// Below-baseline sets are flipped to positive weights.
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fusion {
    /// Mean of squares.
    #[serde(rename = "ft_i")]
    MeanSquare,
    /// `bwe · exp(wse / 2π)`.
    #[serde(rename = "ft_ii")]
    Exponential,
}

/// The four named (WSE variant, fusion) combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeeVariant {
    I,
    II,
    III,
    IV,
}

impl MeeVariant {
    pub const ALL: [MeeVariant; 4] = [MeeVariant::I, MeeVariant::II, MeeVariant::III, MeeVariant::IV];

    pub fn parts(self) -> (WseVariant, Fusion) {
        match self {
            MeeVariant::I => (WseVariant::I, Fusion::MeanSquare),
            MeeVariant::II => (WseVariant::II, Fusion::MeanSquare),
            MeeVariant::III => (WseVariant::I, Fusion::Exponential),
            MeeVariant::IV => (WseVariant::II, Fusion::Exponential),
        }
    }

    /// 1-based number, as used on the command line and in the HTTP API.
    pub fn number(self) -> u8 {
        match self {
            MeeVariant::I => 1,
            MeeVariant::II => 2,
            MeeVariant::III => 3,
            MeeVariant::IV => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(MeeVariant::I),
            2 => Some(MeeVariant::II),
            3 => Some(MeeVariant::III),
            4 => Some(MeeVariant::IV),
            _ => None,
        }
    }
}

impl fmt::Display for MeeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mee{}", self.number())
    }
}

impl FromStr for MeeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.trim_start_matches("mee").trim_start_matches('-');
        let n = match digits {
            "1" | "i" => 1,
            "2" | "ii" => 2,
            "3" | "iii" => 3,
            "4" | "iv" => 4,
            _ => return Err(format!("unknown MEE variant `{s}` (1..4)")),
        };
        Ok(MeeVariant::from_number(n).expect("1..4"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    pub bandwidth_count: usize,
    pub wse_variant: WseVariant,
    pub fusion: Fusion,
    /// Gain θ of the linear phase mapping f(x) = θ·x.
    pub phase_gain: f64,
    pub min_wavelet_len: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self::for_variant(MeeVariant::II)
    }
}

impl MorphConfig {
    pub fn for_variant(variant: MeeVariant) -> Self {
        let (wse_variant, fusion) = variant.parts();
        Self {
            bandwidth_count: 100,
            wse_variant,
            fusion,
            phase_gain: 10.0,
            min_wavelet_len: 3,
        }
    }

    pub fn with_variant(self, variant: MeeVariant) -> Self {
        let (wse_variant, fusion) = variant.parts();
        Self {
            wse_variant,
            fusion,
            ..self
        }
    }

    pub fn variant(&self) -> MeeVariant {
        match (self.wse_variant, self.fusion) {
            (WseVariant::I, Fusion::MeanSquare) => MeeVariant::I,
            (WseVariant::II, Fusion::MeanSquare) => MeeVariant::II,
            (WseVariant::I, Fusion::Exponential) => MeeVariant::III,
            (WseVariant::II, Fusion::Exponential) => MeeVariant::IV,
        }
    }

    pub fn validate(&self) -> Result<(), MorphError> {
        if self.bandwidth_count < 1 {
            return Err(MorphError::InvalidConfig("bandwidth_count must be ≥ 1".into()));
        }
        if self.min_wavelet_len < 1 {
            return Err(MorphError::InvalidConfig("min_wavelet_len must be ≥ 1".into()));
        }
        if !self.phase_gain.is_finite() {
            return Err(MorphError::InvalidConfig("phase_gain must be finite".into()));
        }
        Ok(())
    }
}

/// Min–max normalisation onto [0, 1].
pub fn normalize(x: &[f64]) -> Result<Vec<f64>, MorphError> {
    if x.len() < 2 {
        return Err(MorphError::TooShort(x.len()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(MorphError::NonFinite(i));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        return Err(MorphError::DegenerateAmplitude(lo));
    }
    let range = hi - lo;
    Ok(x.iter().map(|&v| (v - lo) / range).collect())
}

#[inline]
fn bin_of(y: f64, bins: usize) -> usize {
    let pos = (y * bins as f64).floor();
    if pos <= 0.0 {
        0
    } else {
        (pos as usize).min(bins - 1)
    }
}

fn bin_counts(y: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    for &v in y {
        counts[bin_of(v, bins)] += 1;
    }
    counts
}

fn bwe_from_counts(counts: &[usize], total: usize) -> f64 {
    let bins = counts.len();
    let n = total as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| {
            let f = c as f64 / n;
            let midpoint = (i as f64 + 0.5) / bins as f64;
            -midpoint * f * f.ln()
        })
        .sum()
}

/// Bandwidth entropy of a raw (unnormalised) beat.
pub fn bandwidth_entropy(x: &[f64], cfg: &MorphConfig) -> Result<f64, MorphError> {
    cfg.validate()?;
    let y = normalize(x)?;
    Ok(bwe_from_counts(&bin_counts(&y, cfg.bandwidth_count), y.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Above,
    Below,
}

/// A maximal run of samples on one side of the baseline bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSet {
    pub start_index: usize,
    pub length: usize,
    pub side: Side,
    /// Mean deviation from the baseline centre; sign depends on the WSE variant.
    pub energy_weight: f64,
    /// Beat sample index at which the cumulative |deviation| first reaches half the run's total.
    pub area_bisector_index: usize,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSets {
    pub baseline_bin_index: usize,
    /// Lower edge γ_l of the baseline bin.
    pub lower: f64,
    /// Upper edge γ_u of the baseline bin.
    pub upper: f64,
    pub sets: Vec<WaveletSet>,
}

/// Locate the baseline bin of a normalised beat and extract its wavelet sets.
pub fn extract_wavelet_sets(y: &[f64], cfg: &MorphConfig) -> WaveletSets {
    let counts = bin_counts(y, cfg.bandwidth_count);
    wavelet_sets_from_counts(y, &counts, cfg)
}

fn wavelet_sets_from_counts(y: &[f64], counts: &[usize], cfg: &MorphConfig) -> WaveletSets {
    let bins = cfg.bandwidth_count;
    let baseline = crate::stats::argmax_first(counts);
    let lower = baseline as f64 / bins as f64;
    let upper = (baseline + 1) as f64 / bins as f64;
    let center = 0.5 * (lower + upper);
    let total_len = y.len() as f64;

    let side_of = |v: f64| {
        if v > upper {
            Some(Side::Above)
        } else if v < lower {
            Some(Side::Below)
        } else {
            None
        }
    };

    let mut sets = Vec::new();
    let mut t = 0;
    while t < y.len() {
        let Some(side) = side_of(y[t]) else {
            t += 1;
            continue;
        };
        let start = t;
        while t < y.len() && side_of(y[t]) == Some(side) {
            t += 1;
        }
        let length = t - start;
        if length < cfg.min_wavelet_len {
            continue;
        }
        let run = &y[start..t];
        let mean_dev = run.iter().map(|v| v - center).sum::<f64>() / length as f64;
        let energy_weight = match (side, cfg.wse_variant) {
            (Side::Below, WseVariant::II) => mean_dev.abs(),
            _ => mean_dev,
        };
        let area: f64 = run.iter().map(|v| (v - center).abs()).sum();
        let mut cumulative = 0.0;
        let mut offset = length - 1;
        for (k, v) in run.iter().enumerate() {
            cumulative += (v - center).abs();
            // relative slack so symmetric runs split at the middle despite rounding
            if cumulative >= 0.5 * area * (1.0 - 1e-12) {
                offset = k;
                break;
            }
        }
        let area_bisector_index = start + offset;
        let bias = cfg.phase_gain * energy_weight * area_bisector_index as f64 / total_len;
        sets.push(WaveletSet {
            start_index: start,
            length,
            side,
            energy_weight,
            area_bisector_index,
            bias,
        });
    }

    WaveletSets {
        baseline_bin_index: baseline,
        lower,
        upper,
        sets,
    }
}

fn wse_from_sets(sets: &[WaveletSet]) -> f64 {
    let total: usize = sets.iter().map(|s| s.length).sum();
    if total == 0 {
        return 0.0;
    }
    sets.iter()
        .map(|s| {
            let p = s.length as f64 / total as f64;
            -p * p.ln() * s.energy_weight + s.bias
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WseResult {
    pub wse: f64,
    pub baseline_bin_index: usize,
    pub wavelet_sets: Vec<WaveletSet>,
}

/// Wavelet-set entropy of a raw (unnormalised) beat. No sets gives 0.
pub fn wavelet_set_entropy(x: &[f64], cfg: &MorphConfig) -> Result<WseResult, MorphError> {
    cfg.validate()?;
    let y = normalize(x)?;
    let ws = extract_wavelet_sets(&y, cfg);
    Ok(WseResult {
        wse: wse_from_sets(&ws.sets),
        baseline_bin_index: ws.baseline_bin_index,
        wavelet_sets: ws.sets,
    })
}

/// Combine amplitude (BWE) and phase (WSE) entropies into one value.
#[inline]
pub fn fuse_mee(bwe: f64, wse: f64, fusion: Fusion) -> f64 {
    match fusion {
        Fusion::MeanSquare => 0.5 * (bwe * bwe + wse * wse),
        Fusion::Exponential => bwe * (wse / (2.0 * PI)).exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphResult {
    pub bwe: f64,
    pub wse: f64,
    pub mee: f64,
    pub baseline_bin_index: usize,
    pub wavelet_sets: Vec<WaveletSet>,
}

/// BWE, WSE and their fusion for one beat, sharing a single normalisation pass.
pub fn morphological_entropy(x: &[f64], cfg: &MorphConfig) -> Result<MorphResult, MorphError> {
    cfg.validate()?;
    let y = normalize(x)?;
    let counts = bin_counts(&y, cfg.bandwidth_count);
    let bwe = bwe_from_counts(&counts, y.len());
    let ws = wavelet_sets_from_counts(&y, &counts, cfg);
    let wse = wse_from_sets(&ws.sets);
    Ok(MorphResult {
        bwe,
        wse,
        mee: fuse_mee(bwe, wse, cfg.fusion),
        baseline_bin_index: ws.baseline_bin_index,
        wavelet_sets: ws.sets,
    })
}
