use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub const DEFAULT_TOP_LAGS: usize = 5;

/// Relative grid on which autocorrelation values are compared, so that
/// floating-point noise between equal values resolves by the lag tie-break.
const LAG_TIE_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Upward,
    Downward,
    Flat,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Upward => "upward",
            Trend::Downward => "downward",
            Trend::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub min_value: f64,
    pub max_value: f64,
    pub median_value: f64,
    pub trend: Trend,
    pub top_lags: Vec<usize>,
}

/// Descriptive statistics of one channel's look-back window.
pub fn summarize(window: &[f64]) -> Result<StatSummary> {
    if window.len() < DEFAULT_TOP_LAGS + 1 {
        return config_err(format!(
            "statistics need a window of at least {} points, got {}",
            DEFAULT_TOP_LAGS + 1,
            window.len()
        ));
    }
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    // sum of first differences telescopes to last - first
    let drift = window[n - 1] - window[0];
    let trend = if drift > 0.0 {
        Trend::Upward
    } else if drift < 0.0 {
        Trend::Downward
    } else {
        Trend::Flat
    };
    Ok(StatSummary {
        min_value: sorted[0],
        max_value: sorted[n - 1],
        median_value: median,
        trend,
        top_lags: top_lags(window, DEFAULT_TOP_LAGS)?,
    })
}

/// Mean-removed circular autocorrelation `r[lag] = sum_t x[t] x[(t + lag) mod L]`
/// for `lag in 0..L`, computed as the inverse FFT of `|X|^2`.
pub fn circular_autocorrelation(window: &[f64]) -> Vec<f64> {
    let n = window.len();
    let mean = window.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = window.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Highest candidate lag: `floor(L/2)`, raised to `k` when that leaves fewer
/// than `k` candidates, never above `L - 1`.
pub fn max_candidate_lag(len: usize, k: usize) -> usize {
    (len / 2).max(k).min(len.saturating_sub(1))
}

/// Ranks candidate lags by autocorrelation (descending), ties by lag.
pub fn rank_lags(acf: &[f64], k: usize) -> Vec<usize> {
    let len = acf.len();
    let max_lag = max_candidate_lag(len, k);
    let scale = acf.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut keyed: Vec<(i64, usize)> = (1..=max_lag)
        .map(|lag| ((acf[lag] / scale / LAG_TIE_RESOLUTION).round() as i64, lag))
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, lag)| lag).collect()
}

/// The `k` lags with the strongest circular autocorrelation.
pub fn top_lags(window: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || window.len() < k + 1 {
        return config_err(format!("{k} lags need a window longer than {k}, got {}", window.len()));
    }
    Ok(rank_lags(&circular_autocorrelation(window), k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_summary() {
        let s = summarize(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]).unwrap();
        assert_eq!((s.min_value, s.max_value, s.median_value), (1.0, 9.0, 3.5));
        assert_eq!(s.trend, Trend::Upward);
        assert_eq!(s.top_lags.len(), 5);
    }

    #[test]
    fn trend_directions() {
        let up: Vec<f64> = (0..10).map(f64::from).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let a = summarize(&up).unwrap();
        let b = summarize(&down).unwrap();
        assert_eq!(a.trend, Trend::Upward);
        assert_eq!(b.trend, Trend::Downward);
        assert_eq!((a.min_value, a.max_value, a.median_value), (b.min_value, b.max_value, b.median_value));
        let flat = summarize(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0]).unwrap();
        assert_eq!(flat.trend, Trend::Flat);
    }

    #[test]
    fn short_window_rejected() {
        assert!(summarize(&[1.0; 5]).is_err());
        assert!(top_lags(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn constant_window_ties_break_by_lag() {
        assert_eq!(top_lags(&[2.5; 32], 5).unwrap(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn period_eight_sinusoid() {
        let w: Vec<f64> = (0..64).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 8.0).sin()).collect();
        let lags = top_lags(&w, 5).unwrap();
        assert_eq!(lags[0], 8);
        assert_eq!(&lags[..4], &[8, 16, 24, 32]);
    }

    #[test]
    fn candidates_stay_inside_window() {
        assert_eq!(max_candidate_lag(6, 5), 5);
        assert_eq!(max_candidate_lag(64, 5), 32);
        let lags = top_lags(&[1.0, 3.0, 2.0, 5.0, 4.0, 0.0], 5).unwrap();
        let mut sorted = lags.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5]);
    }
}
