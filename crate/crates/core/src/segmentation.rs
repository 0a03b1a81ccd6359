//! R-peak detection (Pan–Tompkins), local peak refinement and fixed
//! ±0.4 s beat windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal_io::{BeatLabel, EcgRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("lead `{lead}` not found (available: {})", available.join(", "))]
    LeadNotFound { lead: String, available: Vec<String> },
    #[error("record is {seconds:.3} s long; detection needs at least 2 s")]
    RecordTooShort { seconds: f64 },
    #[error("peak indices must be strictly increasing")]
    NonMonotonicPeaks,
}

/// Half-width of a beat window in samples: round(0.4 · fs).
pub fn half_window(sampling_rate_hz: f64) -> usize {
    (0.4 * sampling_rate_hz).round() as usize
}

/// One fixed-length beat window centred on its R-peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub beat_index: usize,
    pub r_index: usize,
    pub samples: Vec<f64>,
    pub pre_rr_s: Option<f64>,
    pub post_rr_s: Option<f64>,
    pub label: Option<BeatLabel>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatExtraction {
    pub beats: Vec<Beat>,
    /// Peaks whose window did not fit inside the record.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    pub refine_window_ms: f64,
    pub label_tolerance_ms: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            refine_window_ms: 50.0,
            label_tolerance_ms: 75.0,
        }
    }
}

fn lead_samples<'a>(record: &'a EcgRecord, lead: &str) -> Result<&'a [f64], SegmentError> {
    record
        .lead(lead)
        .map(|l| l.samples.as_slice())
        .ok_or_else(|| SegmentError::LeadNotFound {
            lead: lead.to_string(),
            available: record.lead_names().iter().map(|s| s.to_string()).collect(),
        })
}

fn check_increasing(peaks: &[usize]) -> Result<(), SegmentError> {
    if peaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SegmentError::NonMonotonicPeaks);
    }
    Ok(())
}

/// Second-order section in direct form I, normalised so a0 = 1.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    // Butterworth (Q = 1/sqrt 2) sections from the bilinear transform.
    fn lowpass(fs: f64, cutoff: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff / fs;
        let alpha = w0.sin() / std::f64::consts::SQRT_2;
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - cos) / 2.0 / a0, (1.0 - cos) / a0, (1.0 - cos) / 2.0 / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(fs: f64, cutoff: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff / fs;
        let alpha = w0.sin() / std::f64::consts::SQRT_2;
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 + cos) / 2.0 / a0, -(1.0 + cos) / a0, (1.0 + cos) / 2.0 / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let yi = self.b[0] * xi + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = xi;
            y2 = y1;
            y1 = yi;
            y[i] = yi;
        }
        y
    }
}

/// Zero-phase 5–15 Hz band-pass: forward/backward over an odd-reflected pad.
fn bandpass(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let pad = ((fs.round() as usize).max(1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let high = (15.0f64).min(0.45 * fs);
    let low = (5.0f64).min(0.5 * high);
    let stages = [Biquad::highpass(fs, low), Biquad::lowpass(fs, high)];
    let mut y = ext;
    for s in &stages {
        y = s.run(&y);
    }
    y.reverse();
    for s in &stages {
        y = s.run(&y);
    }
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Five-point derivative, centred so it adds no delay.
fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        d[i] = (-x[i - 2] - 2.0 * x[i - 1] + 2.0 * x[i + 1] + x[i + 2]) * fs / 8.0;
    }
    d
}

/// Centred moving average of width `w`.
fn moving_window_integral(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let before = w / 2;
    let after = w - before;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n);
            (prefix[hi] - prefix[lo]) / w as f64
        })
        .collect()
}

fn argmax_abs(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..=hi {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

/// Pan–Tompkins R-peak detection on one lead.
///
/// Band-pass 5–15 Hz, derivative, squaring, 150 ms moving-window
/// integration, then dual adaptive thresholds with search-back and T-wave
/// rejection. Returned indices sit on the largest |band-passed| sample of
/// each QRS, are strictly increasing, and are at least 200 ms apart.
pub fn detect_r_peaks(record: &EcgRecord, lead: &str) -> Result<Vec<usize>, SegmentError> {
    let x = lead_samples(record, lead)?;
    let fs = record.sampling_rate_hz();
    if (x.len() as f64) < 2.0 * fs {
        return Err(SegmentError::RecordTooShort {
            seconds: x.len() as f64 / fs,
        });
    }
    let n = x.len();
    let bp = bandpass(x, fs);
    let slope = derivative(&bp, fs);
    let squared: Vec<f64> = slope.iter().map(|v| v * v).collect();
    let mwi_width = ((0.150 * fs).round() as usize).max(1);
    let mwi = moving_window_integral(&squared, mwi_width);

    let refractory = ((0.200 * fs).round() as usize).max(1);
    let t_wave_gap = (0.360 * fs).round() as usize;
    let qrs_half = ((0.075 * fs).round() as usize).max(1);

    // Fiducial candidates: local maxima of the integrated signal, thinned to one per refractory span.
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if mwi[i] > 0.0 && mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1] {
            match candidates.last() {
                Some(&last) if i - last < refractory => {
                    if mwi[i] > mwi[last] {
                        *candidates.last_mut().unwrap() = i;
                    }
                }
                _ => candidates.push(i),
            }
        }
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let learn = (2.0 * fs).round() as usize;
    let init = &mwi[..learn.min(n)];
    let init_max = init.iter().copied().fold(0.0, f64::max);
    let init_mean = init.iter().sum::<f64>() / init.len() as f64;
    let mut signal_level = init_max / 3.0;
    let mut noise_level = init_mean / 2.0;
    let mut threshold = noise_level + 0.25 * (signal_level - noise_level);

    let max_slope = |center: usize| -> f64 {
        let lo = center.saturating_sub(qrs_half);
        let hi = (center + qrs_half).min(n - 1);
        slope[lo..=hi].iter().fold(0.0, |m, v| m.max(v.abs()))
    };

    let mut qrs: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    let mut rr: Vec<usize> = Vec::new();
    let mut ci = 0usize;

    while ci < candidates.len() {
        let c = candidates[ci];
        let v = mwi[c];

        // Search back for a missed beat when the gap grows past 1.66 × mean RR.
        if let Some(&last) = qrs.last() {
            if rr.len() >= 2 {
                let mean_rr = rr.iter().rev().take(8).sum::<usize>() as f64 / rr.len().min(8) as f64;
                if (c - last) as f64 > 1.66 * mean_rr {
                    let missed = candidates[..ci]
                        .iter()
                        .copied()
                        .filter(|&p| p > last + refractory && p + refractory < c)
                        .filter(|&p| mwi[p] > 0.5 * threshold)
                        .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]));
                    if let Some(p) = missed {
                        rr.push(p - last);
                        qrs.push(p);
                        last_slope = max_slope(p);
                        signal_level = 0.25 * mwi[p] + 0.75 * signal_level;
                        threshold = noise_level + 0.25 * (signal_level - noise_level);
                        continue;
                    }
                }
            }
        }

        if v > threshold {
            let s = max_slope(c);
            let is_t_wave = match qrs.last() {
                Some(&last) => c - last < t_wave_gap && s < 0.5 * last_slope,
                None => false,
            };
            if is_t_wave {
                noise_level = 0.125 * v + 0.875 * noise_level;
            } else {
                if let Some(&last) = qrs.last() {
                    rr.push(c - last);
                }
                qrs.push(c);
                last_slope = s;
                signal_level = 0.125 * v + 0.875 * signal_level;
            }
        } else {
            noise_level = 0.125 * v + 0.875 * noise_level;
        }
        threshold = noise_level + 0.25 * (signal_level - noise_level);
        ci += 1;
    }

    // Place each detection on the dominant band-passed deflection.
    let mut peaks: Vec<usize> = Vec::with_capacity(qrs.len());
    for c in qrs {
        let lo = c.saturating_sub(qrs_half);
        let hi = (c + qrs_half).min(n - 1);
        let p = argmax_abs(&bp, lo, hi);
        match peaks.last() {
            Some(&prev) if p <= prev || p - prev < refractory => {
                if bp[p].abs() > bp[prev].abs() && p > prev {
                    *peaks.last_mut().unwrap() = p;
                }
            }
            _ => peaks.push(p),
        }
    }
    Ok(peaks)
}

/// Move every peak onto the largest |amplitude| sample within ±`window_ms`.
/// A refined peak that does not land after its predecessor is dropped.
pub fn refine_r_peaks(
    record: &EcgRecord,
    lead: &str,
    raw_peaks: &[usize],
    window_ms: f64,
) -> Result<Vec<usize>, SegmentError> {
    check_increasing(raw_peaks)?;
    let x = lead_samples(record, lead)?;
    let w = (window_ms / 1000.0 * record.sampling_rate_hz()).round() as usize;
    let mut out: Vec<usize> = Vec::with_capacity(raw_peaks.len());
    for &p in raw_peaks {
        if p >= x.len() {
            continue;
        }
        let lo = p.saturating_sub(w);
        let hi = (p + w).min(x.len() - 1);
        let mut best = p;
        for i in lo..=hi {
            if x[i].abs() > x[best].abs() {
                best = i;
            }
        }
        if out.last().is_none_or(|&prev| best > prev) {
            out.push(best);
        }
    }
    Ok(out)
}

/// Cut a ±round(0.4·fs) window around each peak. Windows that would
/// cross either end of the record are skipped and counted.
pub fn extract_beats(
    record: &EcgRecord,
    lead: &str,
    peaks: &[usize],
) -> Result<BeatExtraction, SegmentError> {
    extract_beats_with(record, lead, peaks, SegmentConfig::default().label_tolerance_ms)
}

pub fn extract_beats_with(
    record: &EcgRecord,
    lead: &str,
    peaks: &[usize],
    label_tolerance_ms: f64,
) -> Result<BeatExtraction, SegmentError> {
    check_increasing(peaks)?;
    let x = lead_samples(record, lead)?;
    let fs = record.sampling_rate_hz();
    let half = half_window(fs);
    let tol = (label_tolerance_ms / 1000.0 * fs).round() as usize;
    let anns = record.annotations();

    let mut out = BeatExtraction::default();
    for (k, &r) in peaks.iter().enumerate() {
        if r < half || r + half >= x.len() {
            out.skipped += 1;
            continue;
        }
        let pre_rr_s = k.checked_sub(1).map(|j| (r - peaks[j]) as f64 / fs);
        let post_rr_s = peaks.get(k + 1).map(|&next| (next - r) as f64 / fs);
        let label = anns.and_then(|a| nearest_label(a, r, tol));
        out.beats.push(Beat {
            beat_index: out.beats.len(),
            r_index: r,
            samples: x[r - half..=r + half].to_vec(),
            pre_rr_s,
            post_rr_s,
            label,
        });
    }
    Ok(out)
}

fn nearest_label(anns: &[crate::signal_io::Annotation], r: usize, tol: usize) -> Option<BeatLabel> {
    let pos = anns.partition_point(|a| a.sample_index < r);
    let mut best: Option<(usize, BeatLabel)> = None;
    for a in anns[pos.saturating_sub(1)..(pos + 1).min(anns.len())].iter() {
        let d = a.sample_index.abs_diff(r);
        if d <= tol && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, a.label));
        }
    }
    best.map(|(_, l)| l)
}

/// Detect, refine and cut beats in one go.
pub fn segment(
    record: &EcgRecord,
    lead: &str,
    cfg: &SegmentConfig,
) -> Result<BeatExtraction, SegmentError> {
    let raw = detect_r_peaks(record, lead)?;
    let refined = refine_r_peaks(record, lead, &raw, cfg.refine_window_ms)?;
    extract_beats_with(record, lead, &refined, cfg.label_tolerance_ms)
}
