//! Small descriptive-statistics helpers shared by the screening, pruning
//! and quality modules.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population (ddof = 0) standard deviation.
pub fn population_sd(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about the median (unscaled).
pub fn mad(x: &[f64]) -> f64 {
    let med = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize;
    v[rank.saturating_sub(1).min(v.len() - 1)]
}

/// Equal-width bins over `[lo, hi]`; every bin is half-open except the last,
/// which is closed so `hi` is housed. A zero-width range maps everything to bin 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl EqualBins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        assert!(count >= 1, "bin count must be at least 1");
        Self { lo, hi, count }
    }

    /// Bins spanning the min and max of `values`.
    pub fn spanning(values: &[f64], count: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, count)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    pub fn index(&self, v: f64) -> usize {
        let span = self.hi - self.lo;
        if span <= 0.0 {
            return 0;
        }
        let pos = ((v - self.lo) / span * self.count as f64).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.count - 1)
        }
    }

    pub fn center(&self, bin: usize) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        self.lo + (bin as f64 + 0.5) * self.width()
    }

    pub fn counts(&self, values: &[f64]) -> Vec<usize> {
        let mut counts = vec![0usize; self.count];
        for &v in values {
            counts[self.index(v)] += 1;
        }
        counts
    }
}

/// Index of the largest count; ties go to the lowest index.
pub fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((population_sd(&x) - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(median(&x), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(mad(&[1.0, 1.0, 2.0, 2.0, 4.0, 6.0, 9.0]), 1.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.95), 4.0);
    }

    #[test]
    fn bins_close_the_last_edge() {
        let b = EqualBins::new(0.0, 1.0, 4);
        assert_eq!(b.index(0.0), 0);
        assert_eq!(b.index(0.25), 1);
        assert_eq!(b.index(0.999), 3);
        assert_eq!(b.index(1.0), 3);
        assert_eq!(b.center(0), 0.125);
        let flat = EqualBins::new(2.0, 2.0, 10);
        assert_eq!(flat.index(2.0), 0);
        assert_eq!(argmax_first(&[1, 3, 3, 0]), 1);
    }
}
