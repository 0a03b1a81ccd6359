//! Per-upload session state and the computations served from it.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::SystemTime;

use mee_core::morph::{morphological_entropy, MeeVariant, MorphConfig};
use mee_core::quality::{assess_quality, QualityReport};
use mee_core::screening::{
    evaluate, evaluation_positions, flag_beats, Confusion, MeeSeries, Metrics,
    DEFAULT_PICKING_BINS,
};
use mee_core::segmentation::Beat;
use mee_core::signal_io::{BeatLabel, EcgRecord};
use serde::Serialize;

use crate::error::ApiError;

/// Per-beat morphology for one variant, computed once per session.
#[derive(Debug, Clone)]
pub struct SeriesData {
    pub variant: MeeVariant,
    pub bwe: Vec<f64>,
    pub wse: Vec<f64>,
    pub baseline_bin_index: Vec<usize>,
    /// `None` when the session has no beats.
    pub series: Option<MeeSeries>,
}

#[derive(Debug)]
pub struct Session {
    pub session_id: String,
    pub record: EcgRecord,
    pub lead: String,
    pub beats: Vec<Beat>,
    pub created_at: SystemTime,
    series_cache: HashMap<MeeVariant, Arc<SeriesData>>,
}

impl Session {
    pub fn new(session_id: String, record: EcgRecord, lead: String, beats: Vec<Beat>) -> Self {
        Self {
            session_id,
            record,
            lead,
            beats,
            created_at: SystemTime::now(),
            series_cache: HashMap::new(),
        }
    }

    pub fn series(&mut self, variant: MeeVariant) -> Result<Arc<SeriesData>, ApiError> {
        if let Some(hit) = self.series_cache.get(&variant) {
            return Ok(hit.clone());
        }
        let data = Arc::new(compute_series(&self.record, &self.beats, variant)?);
        self.series_cache.insert(variant, data.clone());
        Ok(data)
    }

    pub fn quality(
        &self,
        variant: MeeVariant,
        edge_bins: usize,
        z_threshold: f64,
    ) -> Result<QualityReport, ApiError> {
        assess_quality(&self.beats, &MorphConfig::for_variant(variant), edge_bins, z_threshold)
            .map_err(|e| ApiError::unprocessable(e.to_string()))
    }
}

fn compute_series(
    record: &EcgRecord,
    beats: &[Beat],
    variant: MeeVariant,
) -> Result<SeriesData, ApiError> {
    let cfg = MorphConfig::for_variant(variant);
    let mut bwe = Vec::with_capacity(beats.len());
    let mut wse = Vec::with_capacity(beats.len());
    let mut mee = Vec::with_capacity(beats.len());
    let mut bins = Vec::with_capacity(beats.len());
    for b in beats {
        let r = morphological_entropy(&b.samples, &cfg)
            .map_err(|e| ApiError::unprocessable(format!("beat {}: {e}", b.beat_index)))?;
        bwe.push(r.bwe);
        wse.push(r.wse);
        mee.push(r.mee);
        bins.push(r.baseline_bin_index);
    }
    let series = if beats.is_empty() {
        None
    } else {
        let indices = beats.iter().map(|b| b.beat_index).collect();
        Some(
            MeeSeries::from_values(record.record_id(), indices, mee, DEFAULT_PICKING_BINS)
                .map_err(|e| ApiError::unprocessable(e.to_string()))?,
        )
    };
    Ok(SeriesData {
        variant,
        bwe,
        wse,
        baseline_bin_index: bins,
        series,
    })
}

/// Min/max envelope of `x` over `buckets` equal-count buckets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    pub lead: String,
    pub sampling_rate_hz: f64,
    pub sample_count: usize,
    pub buckets: usize,
    /// First sample index of each bucket.
    pub start_index: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn downsample_min_max(x: &[f64], buckets: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = x.len();
    let buckets = buckets.min(n);
    let mut starts = Vec::with_capacity(buckets);
    let mut lo = Vec::with_capacity(buckets);
    let mut hi = Vec::with_capacity(buckets);
    for b in 0..buckets {
        let start = b * n / buckets;
        let end = (b + 1) * n / buckets;
        let chunk = &x[start..end];
        starts.push(start);
        lo.push(chunk.iter().copied().fold(f64::INFINITY, f64::min));
        hi.push(chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    (starts, lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPayload {
    pub session_id: String,
    pub record_id: String,
    pub variant: u8,
    pub beat_count: usize,
    pub beat_indices: Vec<usize>,
    pub r_indices: Vec<usize>,
    pub r_times_s: Vec<f64>,
    pub labels: Vec<Option<String>>,
    pub values: Vec<f64>,
    pub bwe: Vec<f64>,
    pub wse: Vec<f64>,
    pub baseline_bin_index: Vec<usize>,
    pub fluctuation: Vec<f64>,
    pub reference: Option<f64>,
    pub sigma: Option<f64>,
    pub reference_bin: Option<usize>,
    pub picking_bins: usize,
    pub beat_window: Vec<Vec<f64>>,
    pub waveform: Waveform,
}

pub fn series_payload(session: &Session, data: &SeriesData, buckets: usize) -> SeriesPayload {
    let fs = session.record.sampling_rate_hz();
    let samples = &session
        .record
        .lead(&session.lead)
        .expect("session lead exists")
        .samples;
    let (start_index, min, max) = downsample_min_max(samples, buckets);
    let s = data.series.as_ref();
    SeriesPayload {
        session_id: session.session_id.clone(),
        record_id: session.record.record_id().to_string(),
        variant: data.variant.number(),
        beat_count: session.beats.len(),
        beat_indices: session.beats.iter().map(|b| b.beat_index).collect(),
        r_indices: session.beats.iter().map(|b| b.r_index).collect(),
        r_times_s: session.beats.iter().map(|b| b.r_index as f64 / fs).collect(),
        labels: session
            .beats
            .iter()
            .map(|b| b.label.map(|l| l.to_string()))
            .collect(),
        values: s.map(|s| s.values.clone()).unwrap_or_default(),
        bwe: data.bwe.clone(),
        wse: data.wse.clone(),
        baseline_bin_index: data.baseline_bin_index.clone(),
        fluctuation: s.map(|s| s.fluctuation.clone()).unwrap_or_default(),
        reference: s.map(|s| s.reference),
        sigma: s.map(|s| s.sigma),
        reference_bin: s.map(|s| s.reference_bin),
        picking_bins: DEFAULT_PICKING_BINS,
        beat_window: session.beats.iter().map(|b| b.samples.clone()).collect(),
        waveform: Waveform {
            lead: session.lead.clone(),
            sampling_rate_hz: fs,
            sample_count: samples.len(),
            buckets: start_index.len(),
            start_index,
            min,
            max,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenReport {
    /// Beats that carried a usable label (S beats excluded).
    pub evaluated_beats: usize,
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenPayload {
    pub variant: u8,
    pub alpha: f64,
    pub flagged: Vec<bool>,
    pub f: Vec<f64>,
    #[serde(rename = "M_ref")]
    pub m_ref: Option<f64>,
    #[serde(rename = "sigma_M")]
    pub sigma_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ScreenReport>,
}

pub fn screen_payload(session: &Session, data: &SeriesData, alpha: f64) -> Result<ScreenPayload, ApiError> {
    let Some(series) = data.series.as_ref() else {
        return Ok(ScreenPayload {
            variant: data.variant.number(),
            alpha,
            flagged: Vec::new(),
            f: Vec::new(),
            m_ref: None,
            sigma_m: None,
            report: None,
        });
    };
    let flagged = flag_beats(series, alpha);
    let labels: Vec<Option<BeatLabel>> = session.beats.iter().map(|b| b.label).collect();
    let positions = evaluation_positions(&labels, false);
    let report = if positions.is_empty() {
        None
    } else {
        let flags: Vec<bool> = positions.iter().map(|&i| flagged[i]).collect();
        let truth: Vec<BeatLabel> = positions.iter().map(|&i| labels[i].expect("labelled")).collect();
        let r = evaluate(&flags, &truth).map_err(|e| ApiError::internal(e.to_string()))?;
        Some(ScreenReport {
            evaluated_beats: positions.len(),
            confusion: r.confusion,
            metrics: r.metrics,
        })
    };
    Ok(ScreenPayload {
        variant: data.variant.number(),
        alpha,
        flagged,
        f: series.fluctuation.clone(),
        m_ref: Some(series.reference),
        sigma_m: Some(series.sigma),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_buckets() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let (s, lo, hi) = downsample_min_max(&x, 3);
        assert_eq!(s, vec![0, 3, 6]);
        assert_eq!(lo, vec![0.0, 3.0, 6.0]);
        assert_eq!(hi, vec![2.0, 5.0, 9.0]);
        let (s, lo, hi) = downsample_min_max(&x, 50);
        assert_eq!(s.len(), 10);
        assert_eq!(lo, hi);
    }
}
