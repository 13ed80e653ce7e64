use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};

/// One-pass mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

/// A confidence interval around an estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

/// Empirical Bernstein half-width:
/// `sqrt(2 ln(2/δ) var / t) + 7 R ln(2/δ) / (3 (t − 1))`, infinite for `t < 2`.
pub fn bernstein_half_width(variance: f64, t: u64, delta: f64, range: f64) -> f64 {
    if t < 2 {
        return f64::INFINITY;
    }
    let log_term = (2.0 / delta).ln();
    let t = t as f64;
    (2.0 * log_term * variance.max(0.0) / t).sqrt() + 7.0 * range * log_term / (3.0 * (t - 1.0))
}

pub fn bernstein_bounds(mean: f64, variance: f64, t: u64, delta: f64, range: f64) -> Result<Interval> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ShapleyError::invalid("delta", format!("{delta} is outside (0, 1]")));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(ShapleyError::invalid("range", format!("{range} must be positive")));
    }
    if t < 2 {
        return Ok(Interval::UNBOUNDED);
    }
    let hw = bernstein_half_width(variance, t, delta, range);
    Ok(Interval {
        lower: mean - hw,
        upper: mean + hw,
    })
}

/// Spearman rank correlation, ties sharing their average rank. `NaN` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs equal-length inputs");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}
