//! Named per-beat metrics selectable from the command line.

use std::fmt;
use std::str::FromStr;

use mee_core::baselines::{
    approximate_entropy, fuzzy_entropy, permutation_entropy, sample_entropy, BaselineConfig,
    EntropyError,
};
use mee_core::morph::{
    bandwidth_entropy, morphological_entropy, wavelet_set_entropy, MeeVariant, MorphConfig,
    WseVariant,
};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Pe,
    Ae,
    Se,
    Fe,
    Bwe,
    Wse1,
    Wse2,
    Mee(MeeVariant),
}

pub const ALL_NAMES: [&str; 11] = [
    "pe", "ae", "se", "fe", "bwe", "wse1", "wse2", "mee1", "mee2", "mee3", "mee4",
];

impl Metric {
    pub fn name(self) -> String {
        match self {
            Metric::Pe => "pe".into(),
            Metric::Ae => "ae".into(),
            Metric::Se => "se".into(),
            Metric::Fe => "fe".into(),
            Metric::Bwe => "bwe".into(),
            Metric::Wse1 => "wse1".into(),
            Metric::Wse2 => "wse2".into(),
            Metric::Mee(v) => v.to_string(),
        }
    }

    /// Value for one beat. `Ok(None)` marks a sample entropy with no
    /// template matches.
    pub fn compute(
        self,
        x: &[f64],
        baseline: &BaselineConfig,
        morph: &MorphConfig,
    ) -> Result<Option<f64>> {
        let wse_cfg = |variant| MorphConfig {
            wse_variant: variant,
            ..*morph
        };
        let v = match self {
            Metric::Pe => permutation_entropy(x, baseline)?,
            Metric::Ae => approximate_entropy(x, baseline)?,
            Metric::Se => match sample_entropy(x, baseline) {
                Err(EntropyError::UndefinedEntropy { .. }) => return Ok(None),
                other => other?,
            },
            Metric::Fe => fuzzy_entropy(x, baseline)?,
            Metric::Bwe => bandwidth_entropy(x, morph)?,
            Metric::Wse1 => wavelet_set_entropy(x, &wse_cfg(WseVariant::I))?.wse,
            Metric::Wse2 => wavelet_set_entropy(x, &wse_cfg(WseVariant::II))?.wse,
            Metric::Mee(variant) => {
                let cfg = MorphConfig {
                    bandwidth_count: morph.bandwidth_count,
                    ..MorphConfig::for_variant(variant)
                };
                morphological_entropy(x, &cfg)?.mee
            }
        };
        Ok(Some(v))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Metric {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "pe" => Metric::Pe,
            "ae" => Metric::Ae,
            "se" => Metric::Se,
            "fe" => Metric::Fe,
            "bwe" => Metric::Bwe,
            "wse1" => Metric::Wse1,
            "wse2" | "wse" => Metric::Wse2,
            "mee1" => Metric::Mee(MeeVariant::I),
            "mee2" | "mee" => Metric::Mee(MeeVariant::II),
            "mee3" => Metric::Mee(MeeVariant::III),
            "mee4" => Metric::Mee(MeeVariant::IV),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown metric `{other}`; valid names: {}",
                    ALL_NAMES.join(", ")
                )))
            }
        })
    }
}

pub fn parse_list(spec: &str) -> Result<Vec<Metric>> {
    let metrics: Vec<Metric> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if metrics.is_empty() {
        return Err(CliError::Usage(format!(
            "empty metric list; valid names: {}",
            ALL_NAMES.join(", ")
        )));
    }
    Ok(metrics)
}
