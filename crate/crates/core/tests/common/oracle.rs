//! Brute-force reference implementations shared by the oracle tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::HashMap;

use mee_core::morph::MorphConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-10;
pub const CASES: usize = 200;

pub fn sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

pub fn naive_pe(x: &[f64], order: usize, step: usize) -> f64 {
    let span = (order - 1) * step + 1;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let windows = x.len() - span + 1;
    for t in 0..windows {
        let w: Vec<f64> = (0..order).map(|i| x[t + i * step]).collect();
        let mut idx: Vec<usize> = (0..order).collect();
        // stable: equal values keep index order
        idx.sort_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap());
        *counts.entry(idx).or_default() += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / windows as f64;
            -p * p.ln()
        })
        .sum()
}

pub fn naive_phi(x: &[f64], dim: usize, r: f64) -> f64 {
    let n = x.len() - dim + 1;
    let mut total = 0.0;
    for i in 0..n {
        let c = (0..n)
            .filter(|&j| chebyshev(&x[i..i + dim], &x[j..j + dim]) <= r)
            .count();
        total += (c as f64 / n as f64).ln();
    }
    total / n as f64
}

pub fn naive_ae(x: &[f64], m: usize, r: f64) -> f64 {
    naive_phi(x, m, r) - naive_phi(x, m + 1, r)
}

pub fn naive_se(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len() - m;
    let (mut b, mut a) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if chebyshev(&x[i..i + m], &x[j..j + m]) <= r {
                b += 1;
            }
            if chebyshev(&x[i..i + m + 1], &x[j..j + m + 1]) <= r {
                a += 1;
            }
        }
    }
    (a > 0 && b > 0).then(|| -(a as f64 / b as f64).ln())
}

pub fn naive_fe(x: &[f64], m: usize, r: f64, n_exp: i32) -> f64 {
    let count = x.len() - m;
    let similarity = |dim: usize| {
        let templates: Vec<Vec<f64>> = (0..count)
            .map(|i| {
                let w = &x[i..i + dim];
                let mu = w.iter().sum::<f64>() / dim as f64;
                w.iter().map(|v| v - mu).collect()
            })
            .collect();
        let mut s = 0.0;
        for i in 0..count {
            for j in 0..count {
                if i != j {
                    s += (-chebyshev(&templates[i], &templates[j]).powi(n_exp) / r).exp();
                }
            }
        }
        s / (count * (count - 1)) as f64
    };
    similarity(m).ln() - similarity(m + 1).ln()
}

pub fn minmax(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    x.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn naive_bin(y: f64, bins: usize) -> usize {
    (0..bins)
        .find(|&i| {
            let lo = i as f64 / bins as f64;
            let hi = (i + 1) as f64 / bins as f64;
            (y >= lo && y < hi) || (i == bins - 1 && y >= lo)
        })
        .unwrap()
}

pub fn naive_bwe(x: &[f64], bins: usize) -> f64 {
    let y = minmax(x);
    let mut h = 0.0;
    for i in 0..bins {
        let c = y.iter().filter(|&&v| naive_bin(v, bins) == i).count();
        if c > 0 {
            let f = c as f64 / y.len() as f64;
            h += -((i as f64 + 0.5) / bins as f64) * f * f.ln();
        }
    }
    h
}

pub struct NaiveSet {
    pub start: usize,
    pub len: usize,
    pub above: bool,
    pub weight: f64,
    pub bisector: usize,
}

pub fn naive_wse(x: &[f64], cfg: &MorphConfig) -> (f64, usize, Vec<NaiveSet>) {
    let bins = cfg.bandwidth_count;
    let y = minmax(x);
    let counts: Vec<usize> = (0..bins)
        .map(|i| y.iter().filter(|&&v| naive_bin(v, bins) == i).count())
        .collect();
    let max = *counts.iter().max().unwrap();
    let base = counts.iter().position(|&c| c == max).unwrap();
    let lower = base as f64 / bins as f64;
    let upper = (base + 1) as f64 / bins as f64;
    let center = (lower + upper) / 2.0;
    let class: Vec<i8> = y
        .iter()
        .map(|&v| if v > upper { 1 } else if v < lower { -1 } else { 0 })
        .collect();

    let mut sets = Vec::new();
    let mut start = 0;
    for t in 1..=y.len() {
        if t == y.len() || class[t] != class[start] {
            let len = t - start;
            if class[start] != 0 && len >= cfg.min_wavelet_len {
                let run = &y[start..t];
                let mut weight = run.iter().map(|v| v - center).sum::<f64>() / len as f64;
                if class[start] < 0 && cfg.wse_variant == mee_core::WseVariant::II {
                    weight = -weight;
                }
                let dev: Vec<f64> = run.iter().map(|v| (v - center).abs()).collect();
                let area: f64 = dev.iter().sum();
                let bisector = (0..len)
                    .find(|&k| dev[..=k].iter().sum::<f64>() >= area / 2.0 * (1.0 - 1e-12))
                    .unwrap();
                sets.push(NaiveSet {
                    start,
                    len,
                    above: class[start] > 0,
                    weight,
                    bisector: start + bisector,
                });
            }
            start = t;
        }
    }
    let total: usize = sets.iter().map(|s| s.len).sum();
    let mut wse = 0.0;
    for s in &sets {
        let p = s.len as f64 / total as f64;
        let phi = cfg.phase_gain * s.weight * s.bisector as f64 / y.len() as f64;
        wse += -p * p.ln() * s.weight + phi;
    }
    (wse, base, sets)
}

/// Mixture of white noise, random walks, quantised (tie-heavy) values and
/// synthetic beat-like shapes.
pub fn random_sequence(rng: &mut ChaCha8Rng, case: usize) -> Vec<f64> {
    let len = rng.random_range(16..=128);
    match case % 4 {
        0 => (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        1 => {
            let mut v = 0.0;
            (0..len)
                .map(|_| {
                    v += rng.random_range(-0.5..0.5);
                    v
                })
                .collect()
        }
        2 => (0..len).map(|_| rng.random_range(0..5) as f64).collect(),
        _ => {
            let c = rng.random_range(0.3..0.7) * len as f64;
            (0..len)
                .map(|i| {
                    let t = i as f64 - c;
                    (-(t * t) / 8.0).exp() - 0.2 * (-(t - 12.0).powi(2) / 40.0).exp()
                        + rng.random_range(-0.01..0.01)
                })
                .collect()
        }
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * (1.0 + b.abs())
}
