//! Classical entropy measures used as comparison baselines: permutation,
//! approximate, sample and fuzzy entropy.
//!
//! AE/SE/FE use the Chebyshev distance between embedding vectors and a
//! tolerance derived from the population standard deviation of the whole
//! input unless an absolute tolerance is configured.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::population_sd;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("sequence of length {len} is too short (need at least {needed})")]
    SequenceTooShort { len: usize, needed: usize },
    #[error("sample entropy undefined: no template matches at dimension {dimension}")]
    UndefinedEntropy { dimension: usize },
    #[error("fuzzy entropy needs a positive tolerance, got {0}")]
    NonpositiveTolerance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How the AE/SE/FE tolerance `r` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// `r = factor × sd(x)`.
    SdFactor(f64),
    /// Fixed `r`, independent of the input.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub pe_order: usize,
    pub pe_step: usize,
    pub embed_m: usize,
    pub tolerance: Tolerance,
    /// Exponent on the distance in the fuzzy membership exp(-d^n / r).
    pub fe_weight_n: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            pe_order: 4,
            pe_step: 1,
            embed_m: 2,
            tolerance: Tolerance::SdFactor(0.2),
            fe_weight_n: 2,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), EntropyError> {
        if self.pe_order < 2 {
            return Err(EntropyError::InvalidConfig("pe_order must be ≥ 2".into()));
        }
        if self.pe_step < 1 {
            return Err(EntropyError::InvalidConfig("pe_step must be ≥ 1".into()));
        }
        if self.embed_m < 1 {
            return Err(EntropyError::InvalidConfig("embed_m must be ≥ 1".into()));
        }
        if !matches!(self.fe_weight_n, 2 | 3) {
            return Err(EntropyError::InvalidConfig("fe_weight_n must be 2 or 3".into()));
        }
        match self.tolerance {
            Tolerance::SdFactor(f) | Tolerance::Absolute(f) if !(f.is_finite() && f >= 0.0) => Err(
                EntropyError::InvalidConfig(format!("tolerance must be finite and ≥ 0, got {f}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn tolerance_for(&self, x: &[f64]) -> f64 {
        match self.tolerance {
            Tolerance::SdFactor(f) => f * population_sd(x),
            Tolerance::Absolute(r) => r,
        }
    }
}

/// Permutation entropy (natural log, unnormalised) of order `pe_order`
/// with delay `pe_step`. Equal values rank by position: the earlier one is smaller.
pub fn permutation_entropy(x: &[f64], cfg: &BaselineConfig) -> Result<f64, EntropyError> {
    cfg.validate()?;
    let n = cfg.pe_order;
    let span = (n - 1) * cfg.pe_step + 1;
    if x.len() < span {
        return Err(EntropyError::SequenceTooShort {
            len: x.len(),
            needed: span,
        });
    }
    let windows = x.len() - span + 1;

    // Lehmer code of the ordinal pattern; dense table for small orders.
    let code = |t: usize| -> usize {
        let mut c = 0usize;
        for i in 0..n {
            let xi = x[t + i * cfg.pe_step];
            let mut smaller_after = 0;
            for j in i + 1..n {
                // j ranks below i when strictly smaller (ties keep index order)
                if x[t + j * cfg.pe_step] < xi {
                    smaller_after += 1;
                }
            }
            c = c * (n - i) + smaller_after;
        }
        c
    };

    let mut entropy = 0.0;
    let mut accumulate = |count: usize| {
        if count > 0 {
            let p = count as f64 / windows as f64;
            entropy -= p * p.ln();
        }
    };
    if n <= 8 {
        let size: usize = (1..=n).product();
        let mut counts = vec![0usize; size];
        for t in 0..windows {
            counts[code(t)] += 1;
        }
        counts.into_iter().for_each(&mut accumulate);
    } else {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for t in 0..windows {
            *counts.entry(code(t)).or_default() += 1;
        }
        let mut v: Vec<usize> = counts.into_values().collect();
        v.sort_unstable();
        v.into_iter().for_each(&mut accumulate);
    }
    Ok(entropy)
}

fn need(x: &[f64], m: usize) -> Result<(), EntropyError> {
    if x.len() < m + 2 {
        return Err(EntropyError::SequenceTooShort {
            len: x.len(),
            needed: m + 2,
        });
    }
    Ok(())
}

/// True when the length-`m` templates at `i` and `j` lie within Chebyshev distance `r`.
#[inline]
fn within(x: &[f64], i: usize, j: usize, m: usize, r: f64) -> bool {
    (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r)
}

/// Approximate entropy φ^m(r) − φ^{m+1}(r), self-matches included.
pub fn approximate_entropy(x: &[f64], cfg: &BaselineConfig) -> Result<f64, EntropyError> {
    cfg.validate()?;
    let m = cfg.embed_m;
    need(x, m)?;
    let r = cfg.tolerance_for(x);
    let n = x.len();
    let nm = n - m + 1;
    let nm1 = n - m;

    // Count each unordered pair once and credit both ends; the diagonal is a match.
    let mut c_m = vec![1usize; nm];
    let mut c_m1 = vec![1usize; nm1];
    for i in 0..nm {
        for j in i + 1..nm {
            if within(x, i, j, m, r) {
                c_m[i] += 1;
                c_m[j] += 1;
                if j < nm1 && (x[i + m] - x[j + m]).abs() <= r {
                    c_m1[i] += 1;
                    c_m1[j] += 1;
                }
            }
        }
    }
    let phi = |counts: &[usize]| -> f64 {
        let total = counts.len() as f64;
        counts.iter().map(|&c| (c as f64 / total).ln()).sum::<f64>() / total
    };
    Ok(phi(&c_m) - phi(&c_m1))
}

/// Sample entropy ln B^m(r) − ln B^{m+1}(r) over the same N − m templates,
/// self-matches excluded.
pub fn sample_entropy(x: &[f64], cfg: &BaselineConfig) -> Result<f64, EntropyError> {
    cfg.validate()?;
    let m = cfg.embed_m;
    need(x, m)?;
    let r = cfg.tolerance_for(x);
    let templates = x.len() - m;
    let mut b = 0u64;
    let mut a = 0u64;
    for i in 0..templates {
        for j in i + 1..templates {
            if within(x, i, j, m, r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if b == 0 {
        return Err(EntropyError::UndefinedEntropy { dimension: m });
    }
    if a == 0 {
        return Err(EntropyError::UndefinedEntropy { dimension: m + 1 });
    }
    Ok((b as f64).ln() - (a as f64).ln())
}

/// Fuzzy entropy ln A^m − ln A^{m+1} with mean-removed templates and
/// membership exp(−d^n / r).
pub fn fuzzy_entropy(x: &[f64], cfg: &BaselineConfig) -> Result<f64, EntropyError> {
    cfg.validate()?;
    let m = cfg.embed_m;
    need(x, m)?;
    let r = cfg.tolerance_for(x);
    if !(r > 0.0) {
        return Err(EntropyError::NonpositiveTolerance(r));
    }
    let templates = x.len() - m;
    let a_m = fuzzy_mean_similarity(x, m, templates, r, cfg.fe_weight_n);
    let a_m1 = fuzzy_mean_similarity(x, m + 1, templates, r, cfg.fe_weight_n);
    Ok(a_m.ln() - a_m1.ln())
}

fn fuzzy_mean_similarity(x: &[f64], dim: usize, templates: usize, r: f64, n: u32) -> f64 {
    // Flattened mean-removed templates.
    let mut t = Vec::with_capacity(templates * dim);
    for i in 0..templates {
        let w = &x[i..i + dim];
        let mu = w.iter().sum::<f64>() / dim as f64;
        t.extend(w.iter().map(|v| v - mu));
    }
    let inv_r = 1.0 / r;
    let mut total = 0.0;
    for i in 0..templates {
        let ti = &t[i * dim..(i + 1) * dim];
        for j in i + 1..templates {
            let tj = &t[j * dim..(j + 1) * dim];
            let mut d = 0.0f64;
            for k in 0..dim {
                d = d.max((ti[k] - tj[k]).abs());
            }
            total += (-d.powi(n as i32) * inv_r).exp();
        }
    }
    // Each unordered pair stands for (i, j) and (j, i).
    2.0 * total / (templates as f64 * (templates as f64 - 1.0))
}
