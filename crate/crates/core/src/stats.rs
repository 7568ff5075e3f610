//! Replica-level summary statistics.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A mean with a 95% confidence interval across replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Replicas that contributed a finite value.
    pub samples: u32,
}

impl Estimate {
    pub const NAN: Estimate = Estimate {
        mean: f64::NAN,
        ci95_low: f64::NAN,
        ci95_high: f64::NAN,
        samples: 0,
    };

    /// Normal-approximation interval over the finite entries of `values`.
    ///
    /// One sample gives a zero-width interval. If any entry is `+∞` the
    /// estimate is `+∞`.
    pub fn from_samples(values: &[f64]) -> Self {
        if values.iter().any(|v| *v == f64::INFINITY) {
            return Estimate {
                mean: f64::INFINITY,
                ci95_low: f64::INFINITY,
                ci95_high: f64::INFINITY,
                samples: values.len() as u32,
            };
        }
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        if n == 0 {
            return Estimate::NAN;
        }
        let mean = finite.iter().sum::<f64>() / n as f64;
        let half = if n < 2 {
            0.0
        } else {
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        };
        Estimate {
            mean,
            ci95_low: mean - half,
            ci95_high: mean + half,
            samples: n as u32,
        }
    }

    /// Ratio-of-sums estimate `Σa / Σb` with a delta-method interval.
    pub fn ratio(numerators: &[f64], denominators: &[f64]) -> Self {
        debug_assert_eq!(numerators.len(), denominators.len());
        let n = numerators.len();
        let sum_a: f64 = numerators.iter().sum();
        let sum_b: f64 = denominators.iter().sum();
        if n == 0 {
            return Estimate::NAN;
        }
        if sum_b <= 0.0 {
            return Estimate {
                mean: f64::INFINITY,
                ci95_low: f64::INFINITY,
                ci95_high: f64::INFINITY,
                samples: n as u32,
            };
        }
        let ratio = sum_a / sum_b;
        let half = if n < 2 {
            0.0
        } else {
            let mean_b = sum_b / n as f64;
            let resid: f64 = numerators
                .iter()
                .zip(denominators)
                .map(|(a, b)| (a - ratio * b).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            Z95 * (resid / n as f64).sqrt() / mean_b
        };
        Estimate {
            mean: ratio,
            ci95_low: ratio - half,
            ci95_high: ratio + half,
            samples: n as u32,
        }
    }

    /// Clips the interval into `[lo, hi]`; the mean is left alone.
    pub fn clamp_interval(mut self, lo: f64, hi: f64) -> Self {
        if self.mean.is_finite() {
            self.ci95_low = self.ci95_low.max(lo);
            self.ci95_high = self.ci95_high.min(hi);
        }
        self
    }

    pub fn width(&self) -> f64 {
        self.ci95_high - self.ci95_low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95_low <= x && x <= self.ci95_high
    }
}
