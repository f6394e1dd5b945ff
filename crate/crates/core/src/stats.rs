//! Small numeric helpers: binomial coefficients, Wilson intervals, medians.

use serde::{Deserialize, Serialize};

/// `C(n, k)` as a float; exact while the value fits in 53 bits.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

const Z95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval for `successes / trials`; `(0, 1)` when `trials = 0`.
pub fn wilson(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// A rate with its Wilson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Rate {
    pub fn new(successes: u64, trials: u64) -> Rate {
        let (ci_low, ci_high) = wilson(successes, trials);
        let rate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        Rate { successes, trials, rate, ci_low, ci_high }
    }
}

/// Median of a slice (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 12), 1820.0);
        assert_eq!(binomial(16, 13), 560.0);
        assert_eq!(binomial(4, 5), 0.0);
        assert_eq!(binomial(60, 30), 118264581564861424.0);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson(0, 0);
        assert_eq!((lo, hi), (0.0, 1.0));
        let (lo, hi) = wilson(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (hi - lo - 0.192).abs() < 0.01);
        let (lo, hi) = wilson(0, 200);
        assert_eq!(lo, 0.0);
        assert!(hi < 0.02);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
