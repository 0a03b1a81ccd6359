//! Canonical ECG record representation, file loading, the synthetic
//! generator used by tests and demos, and additive noise.
//!
//! CSV records carry a header row: the first column is a sample index or
//! time stamp (ignored), every further column is one lead. The sampling
//! rate is passed in by the caller or read from a `<stem>.meta` sidecar
//! (`fs=<hz>` lines). Beat annotations live in an optional `<stem>.ann`
//! sidecar of `<sample_index>,<label>` lines.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("lead `{lead}` has {found} samples, expected {expected}")]
    LengthMismatch {
        lead: String,
        expected: usize,
        found: usize,
    },
    #[error("annotation indices must be strictly increasing (index {index} follows {previous})")]
    NonMonotonicAnnotations { previous: usize, index: usize },
    #[error("annotation index {index} outside record of length {len}")]
    AnnotationOutOfRange { index: usize, len: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no sampling rate given and no `fs=` line in {0}")]
    MissingSamplingRate(PathBuf),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid synthesis parameters: {0}")]
    InvalidSynthesis(String),
    #[error("noise standard deviation must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reference beat label alphabet (AAMI-style classes plus `O` for other).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeatLabel {
    N,
    S,
    V,
    F,
    Q,
    O,
}

impl BeatLabel {
    pub const ALL: [BeatLabel; 6] = [
        BeatLabel::N,
        BeatLabel::S,
        BeatLabel::V,
        BeatLabel::F,
        BeatLabel::Q,
        BeatLabel::O,
    ];

    pub fn as_char(self) -> char {
        match self {
            BeatLabel::N => 'N',
            BeatLabel::S => 'S',
            BeatLabel::V => 'V',
            BeatLabel::F => 'F',
            BeatLabel::Q => 'Q',
            BeatLabel::O => 'O',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_char() == c)
    }

    /// Anything other than a sinus beat counts as abnormal for screening.
    pub fn is_abnormal(self) -> bool {
        self != BeatLabel::N
    }
}

impl fmt::Display for BeatLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for BeatLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => BeatLabel::from_char(c).ok_or_else(|| format!("unknown beat label `{s}`")),
            _ => Err(format!("beat label must be a single character, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sample_index: usize,
    pub label: BeatLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lead {
    pub name: String,
    pub unit: String,
    pub samples: Vec<f64>,
}

impl Lead {
    pub fn new(name: impl Into<String>, samples: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: "mV".to_string(),
            samples,
        }
    }
}

/// A validated multi-lead recording. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    record_id: String,
    sampling_rate_hz: f64,
    leads: Vec<Lead>,
    annotations: Option<Vec<Annotation>>,
    label: Option<String>,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        sampling_rate_hz: f64,
        leads: Vec<Lead>,
        annotations: Option<Vec<Annotation>>,
    ) -> Result<Self, SignalError> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(SignalError::InvalidRecord(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        let first = leads
            .first()
            .ok_or_else(|| SignalError::InvalidRecord("record has no leads".into()))?;
        let len = first.samples.len();
        for lead in &leads[1..] {
            if lead.samples.len() != len {
                return Err(SignalError::LengthMismatch {
                    lead: lead.name.clone(),
                    expected: len,
                    found: lead.samples.len(),
                });
            }
        }
        if len < 2 {
            return Err(SignalError::InvalidRecord(format!(
                "leads need at least 2 samples, got {len}"
            )));
        }
        if let Some(anns) = &annotations {
            validate_annotations(anns, len)?;
        }
        Ok(Self {
            record_id: record_id.into(),
            sampling_rate_hz,
            leads,
            annotations,
            label: None,
        })
    }

    /// Attach a record-level class label (used when grouping records for pruning).
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_annotations(self, annotations: Vec<Annotation>) -> Result<Self, SignalError> {
        validate_annotations(&annotations, self.len())?;
        Ok(Self {
            annotations: Some(annotations),
            ..self
        })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn leads(&self) -> &[Lead] {
        &self.leads
    }

    pub fn lead_names(&self) -> Vec<&str> {
        self.leads.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn lead(&self, name: &str) -> Option<&Lead> {
        self.leads.iter().find(|l| l.name == name)
    }

    pub fn annotations(&self) -> Option<&[Annotation]> {
        self.annotations.as_deref()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.leads[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sampling_rate_hz
    }

    /// Pick `requested` if present; otherwise fall back to the first lead.
    /// The boolean is true when the fallback was taken.
    pub fn resolve_lead(&self, requested: &str) -> (&Lead, bool) {
        match self.lead(requested) {
            Some(lead) => (lead, false),
            None => (&self.leads[0], true),
        }
    }
}

fn validate_annotations(anns: &[Annotation], len: usize) -> Result<(), SignalError> {
    for pair in anns.windows(2) {
        if pair[1].sample_index <= pair[0].sample_index {
            return Err(SignalError::NonMonotonicAnnotations {
                previous: pair[0].sample_index,
                index: pair[1].sample_index,
            });
        }
    }
    if let Some(a) = anns.iter().find(|a| a.sample_index >= len) {
        return Err(SignalError::AnnotationOutOfRange {
            index: a.sample_index,
            len,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    Csv,
    RawF32,
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "raw_f32" | "f32" => Ok(RecordFormat::RawF32),
            other => Err(format!("unknown record format `{other}` (csv, raw_f32)")),
        }
    }
}

impl RecordFormat {
    /// Guess from the extension: `.f32`/`.bin`/`.raw` are raw floats, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("f32" | "bin" | "raw") => RecordFormat::RawF32,
            _ => RecordFormat::Csv,
        }
    }
}

/// Key/value metadata from a `.meta` sidecar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordMeta {
    pub sampling_rate_hz: Option<f64>,
    pub label: Option<String>,
}

pub fn parse_meta(text: &str) -> Result<RecordMeta, SignalError> {
    let mut meta = RecordMeta::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SignalError::Parse {
            line: i + 1,
            message: format!("expected key=value, got `{line}`"),
        })?;
        match key.trim() {
            "fs" => {
                let fs = value.trim().parse::<f64>().map_err(|e| SignalError::Parse {
                    line: i + 1,
                    message: format!("bad fs: {e}"),
                })?;
                meta.sampling_rate_hz = Some(fs);
            }
            "label" => meta.label = Some(value.trim().to_string()),
            _ => {}
        }
    }
    Ok(meta)
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, SignalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| SignalError::Parse {
            line: i + 1,
            message,
        };
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected `<index>,<label>`, got `{line}`")))?;
        let sample_index = idx
            .trim()
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad sample index: {e}")))?;
        let label = label.parse::<BeatLabel>().map_err(parse_err)?;
        out.push(Annotation {
            sample_index,
            label,
        });
    }
    Ok(out)
}

/// Parse CSV text (header + one column per lead after the index column).
pub fn parse_csv(
    text: &str,
    record_id: &str,
    sampling_rate_hz: f64,
) -> Result<EcgRecord, SignalError> {
    parse_csv_reader(text.as_bytes(), record_id, sampling_rate_hz)
}

fn parse_csv_reader<R: Read>(
    reader: R,
    record_id: &str,
    sampling_rate_hz: f64,
) -> Result<EcgRecord, SignalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SignalError::MalformedHeader(e.to_string()))?
        .clone();
    if headers.len() < 2 {
        return Err(SignalError::MalformedHeader(format!(
            "need an index column and at least one lead column, found {} column(s)",
            headers.len()
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if let Some(n) = names.iter().find(|n| n.is_empty()) {
        return Err(SignalError::MalformedHeader(format!("empty lead name `{n}`")));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row_no, row) in rdr.records().enumerate() {
        let line = row_no + 2;
        let row = row.map_err(|e| SignalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() > names.len() + 1 {
            return Err(SignalError::Parse {
                line,
                message: format!("{} fields, header has {}", row.len(), names.len() + 1),
            });
        }
        let mut ended = false;
        for (col, cell) in row.iter().skip(1).enumerate() {
            if cell.is_empty() {
                ended = true;
                continue;
            }
            if ended {
                return Err(SignalError::Parse {
                    line,
                    message: "value after an empty cell".into(),
                });
            }
            let v = cell.parse::<f64>().map_err(|e| SignalError::Parse {
                line,
                message: format!("`{cell}`: {e}"),
            })?;
            if !v.is_finite() {
                return Err(SignalError::Parse {
                    line,
                    message: format!("non-finite sample `{cell}`"),
                });
            }
            columns[col].push(v);
        }
    }
    let leads = names
        .into_iter()
        .zip(columns)
        .map(|(name, samples)| Lead::new(name, samples))
        .collect();
    EcgRecord::new(record_id, sampling_rate_hz, leads, None)
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn record_id_for(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("record")
        .to_string()
}

/// Load a record plus its `.ann`/`.meta` sidecars. `sampling_rate_hz`
/// overrides the `.meta` value when given.
pub fn load_record(
    path: &Path,
    format: RecordFormat,
    sampling_rate_hz: Option<f64>,
) -> Result<EcgRecord, SignalError> {
    let meta_path = sidecar(path, "meta");
    let meta = if meta_path.exists() {
        parse_meta(&fs::read_to_string(&meta_path)?)?
    } else {
        RecordMeta::default()
    };
    let fs_hz = sampling_rate_hz
        .or(meta.sampling_rate_hz)
        .ok_or_else(|| SignalError::MissingSamplingRate(meta_path.clone()))?;
    let record_id = record_id_for(path);

    let mut record = match format {
        RecordFormat::Csv => parse_csv_reader(fs::File::open(path)?, &record_id, fs_hz)?,
        RecordFormat::RawF32 => {
            let bytes = fs::read(path)?;
            if bytes.len() % 4 != 0 {
                return Err(SignalError::InvalidRecord(format!(
                    "raw_f32 file size {} is not a multiple of 4",
                    bytes.len()
                )));
            }
            let samples = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            EcgRecord::new(record_id, fs_hz, vec![Lead::new("signal", samples)], None)?
        }
    };

    let ann_path = sidecar(path, "ann");
    if ann_path.exists() {
        let anns = parse_annotations(&fs::read_to_string(&ann_path)?)?;
        record = record.with_annotations(anns)?;
    }
    if let Some(label) = meta.label {
        record = record.with_label(label);
    }
    Ok(record)
}

pub fn write_csv<W: Write>(record: &EcgRecord, out: W) -> Result<(), SignalError> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend(record.leads().iter().map(|l| l.name.clone()));
    wtr.write_record(&header).map_err(csv_io)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..record.len() {
        row.clear();
        row.push(i.to_string());
        row.extend(record.leads().iter().map(|l| l.samples[i].to_string()));
        wtr.write_record(&row).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SignalError {
    SignalError::Io(std::io::Error::other(e))
}

pub fn annotations_to_string(anns: &[Annotation]) -> String {
    anns.iter()
        .map(|a| format!("{},{}\n", a.sample_index, a.label))
        .collect()
}

/// Write the CSV plus `.meta` (and `.ann` when annotated) next to it.
pub fn save_record(record: &EcgRecord, path: &Path) -> Result<(), SignalError> {
    write_csv(record, std::io::BufWriter::new(fs::File::create(path)?))?;
    let mut meta = format!("fs={}\n", record.sampling_rate_hz());
    if let Some(label) = record.label() {
        meta.push_str(&format!("label={label}\n"));
    }
    fs::write(sidecar(path, "meta"), meta)?;
    if let Some(anns) = record.annotations() {
        fs::write(sidecar(path, "ann"), annotations_to_string(anns))?;
    }
    Ok(())
}

/// Parameters for the Gaussian-bump pseudo-ECG generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub sampling_rate_hz: f64,
    pub duration_s: f64,
    pub bpm: f64,
    pub seed: u64,
    /// Beat ordinals rendered upside down and labelled `V`.
    pub inverted_beats: Vec<usize>,
    pub lead_name: String,
}

struct Bump {
    offset_s: f64,
    amplitude: f64,
    width_s: f64,
}

// P, then the QRS complex as Q/R/S lobes, then T. Peak ratio P:R:T is 0.15:1.0:0.3.
const TEMPLATE: [Bump; 5] = [
    Bump { offset_s: -0.20, amplitude: 0.15, width_s: 0.025 },
    Bump { offset_s: -0.028, amplitude: -0.10, width_s: 0.008 },
    Bump { offset_s: 0.0, amplitude: 1.0, width_s: 0.010 },
    Bump { offset_s: 0.028, amplitude: -0.25, width_s: 0.009 },
    Bump { offset_s: 0.30, amplitude: 0.30, width_s: 0.045 },
];

impl SynthSpec {
    pub fn new(sampling_rate_hz: f64, duration_s: f64, bpm: f64, seed: u64) -> Self {
        Self {
            sampling_rate_hz,
            duration_s,
            bpm,
            seed,
            inverted_beats: Vec::new(),
            lead_name: "II".to_string(),
        }
    }

    pub fn with_inverted_beats(mut self, beats: impl IntoIterator<Item = usize>) -> Self {
        self.inverted_beats = beats.into_iter().collect();
        self
    }

    pub fn beat_count(&self) -> usize {
        (self.duration_s * self.bpm / 60.0 + 1e-9).floor() as usize
    }

    pub fn generate(&self) -> Result<EcgRecord, SignalError> {
        let fs_hz = self.sampling_rate_hz;
        if !(fs_hz > 0.0 && self.duration_s > 0.0 && self.bpm > 0.0) {
            return Err(SignalError::InvalidSynthesis(
                "sampling rate, duration and bpm must be positive".into(),
            ));
        }
        let n = (self.duration_s * fs_hz).round() as usize;
        if n < 2 {
            return Err(SignalError::InvalidSynthesis(format!(
                "duration × rate gives {n} samples, need at least 2"
            )));
        }
        let period = 60.0 / self.bpm;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");

        let mut samples = vec![0.0; n];
        let mut annotations = Vec::new();
        for k in 0..self.beat_count() {
            let t = (k as f64 + 0.5 + 0.02 * jitter.sample(&mut rng)) * period;
            let r_index = ((t * fs_hz).round() as usize).min(n - 1);
            let gain = 1.0 + 0.05 * jitter.sample(&mut rng);
            let p_gain = 1.0 + 0.05 * jitter.sample(&mut rng);
            let t_gain = 1.0 + 0.05 * jitter.sample(&mut rng);
            let inverted = self.inverted_beats.contains(&k);
            let sign = if inverted { -1.0 } else { 1.0 };
            let center = r_index as f64 / fs_hz;
            for (b, bump) in TEMPLATE.iter().enumerate() {
                let extra = match b {
                    0 => p_gain,
                    4 => t_gain,
                    _ => 1.0,
                };
                add_bump(
                    &mut samples,
                    fs_hz,
                    center + bump.offset_s,
                    sign * gain * extra * bump.amplitude,
                    bump.width_s,
                );
            }
            annotations.push(Annotation {
                sample_index: r_index,
                label: if inverted { BeatLabel::V } else { BeatLabel::N },
            });
        }
        annotations.dedup_by_key(|a| a.sample_index);
        EcgRecord::new(
            format!("synth_{}", self.seed),
            fs_hz,
            vec![Lead::new(self.lead_name.clone(), samples)],
            Some(annotations),
        )
    }
}

fn add_bump(samples: &mut [f64], fs_hz: f64, center_s: f64, amplitude: f64, width_s: f64) {
    let reach = 6.0 * width_s;
    let lo = ((center_s - reach) * fs_hz).floor().max(0.0) as usize;
    let hi = (((center_s + reach) * fs_hz).ceil().max(0.0) as usize).min(samples.len());
    for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
        let dt = i as f64 / fs_hz - center_s;
        *s += amplitude * (-0.5 * (dt / width_s).powi(2)).exp();
    }
}

/// Deterministic pseudo-ECG with annotated R-peaks (all labelled `N`).
pub fn synth_ecg(
    sampling_rate_hz: f64,
    duration_s: f64,
    bpm: f64,
    seed: u64,
) -> Result<EcgRecord, SignalError> {
    SynthSpec::new(sampling_rate_hz, duration_s, bpm, seed).generate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub std_dev: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(std_dev: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            std_dev,
            seed,
        }
    }
}

/// Return a copy of `record` with independent noise added to every sample of every lead.
pub fn add_noise(record: &EcgRecord, spec: NoiseSpec) -> Result<EcgRecord, SignalError> {
    if !(spec.std_dev.is_finite() && spec.std_dev >= 0.0) {
        return Err(SignalError::InvalidNoise(spec.std_dev));
    }
    let mut out = record.clone();
    if spec.std_dev == 0.0 {
        return Ok(out);
    }
    let NoiseKind::Gaussian = spec.kind;
    let normal = Normal::new(0.0, spec.std_dev).map_err(|_| SignalError::InvalidNoise(spec.std_dev))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for lead in &mut out.leads {
        for s in &mut lead.samples {
            *s += normal.sample(&mut rng);
        }
    }
    Ok(out)
}
