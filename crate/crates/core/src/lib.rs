//! Morphological entropy of ECG beats: record I/O, beat segmentation,
//! baseline and morphological entropies, unsupervised screening, diversity
//! pruning and noise localisation.

pub mod baselines;
pub mod diversity;
pub mod morph;
pub mod quality;
pub mod screening;
pub mod segmentation;
pub mod signal_io;
pub mod stats;

pub use baselines::{
    approximate_entropy, fuzzy_entropy, permutation_entropy, sample_entropy, BaselineConfig,
    EntropyError, Tolerance,
};
pub use diversity::{
    prune_by_mee, prune_random, record_mee, DiversityError, PruneManifest, RecordScore,
};
pub use morph::{
    bandwidth_entropy, morphological_entropy, wavelet_set_entropy, Fusion, MeeVariant,
    MorphConfig, MorphError, MorphResult, WseVariant,
};
pub use quality::{assess_quality, NoiseReason, QualityError, QualityReport};
pub use screening::{
    evaluate, flag_beats, grid_search_alpha, mee_series, MeeSeries, ScreeningError,
    ScreeningReport,
};
pub use segmentation::{segment, Beat, SegmentConfig, SegmentError};
pub use signal_io::{
    add_noise, load_record, synth_ecg, BeatLabel, EcgRecord, NoiseSpec, SignalError, SynthSpec,
};
