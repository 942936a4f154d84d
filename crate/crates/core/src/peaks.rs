//! Local extrema of sampled curves and period estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shorter series are not searched.
pub const MIN_SERIES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak<T> {
    pub index: usize,
    pub position: T,
    pub value: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PeakOptions {
    /// Centered moving-average window (odd, samples). `0` or `1` disables.
    pub smoothing_window: usize,
    /// Minimum prominence relative to the value range of the series.
    pub min_prominence: f64,
}

/// Interior local maxima of `values`.
///
/// A flat top counts once, at its centre sample. Endpoints are never reported.
pub fn detect_peaks<T: Scalar>(positions: &[T], values: &[T], options: PeakOptions) -> Vec<Peak<T>> {
    extrema(positions, values, options, false)
}

/// Interior local minima, with the same conventions as [`detect_peaks`].
pub fn detect_minima<T: Scalar>(positions: &[T], values: &[T], options: PeakOptions) -> Vec<Peak<T>> {
    extrema(positions, values, options, true)
}

fn extrema<T: Scalar>(positions: &[T], values: &[T], options: PeakOptions, minima: bool) -> Vec<Peak<T>> {
    let n = values.len();
    if n < MIN_SERIES || positions.len() != n {
        return Vec::new();
    }
    let smoothed = smooth(values, options.smoothing_window);
    let signed: Vec<f64> = smoothed.iter().map(|&v| if minima { -v } else { v }).collect();
    let range = signed.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - signed.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut out = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if signed[i] > signed[i - 1] {
            let mut j = i;
            while j + 1 < n && signed[j + 1] == signed[i] {
                j += 1;
            }
            if j + 1 < n && signed[j + 1] < signed[i] {
                let centre = (i + j) / 2;
                if options.min_prominence <= 0.0 || prominence(&signed, centre) >= options.min_prominence * range {
                    out.push(Peak {
                        index: centre,
                        position: positions[centre],
                        value: values[centre],
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn smooth<T: Scalar>(values: &[T], window: usize) -> Vec<f64> {
    let raw: Vec<f64> = values.iter().map(|v| v.f64()).collect();
    if window <= 1 {
        return raw;
    }
    let half = window / 2;
    (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(raw.len());
            raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Height above the higher of the two minima that separate the peak from
/// taller neighbours (or the series ends).
fn prominence(values: &[f64], idx: usize) -> f64 {
    let top = values[idx];
    let mut left_min = top;
    for &v in values[..idx].iter().rev() {
        if v > top {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = top;
    for &v in &values[idx + 1..] {
        if v > top {
            break;
        }
        right_min = right_min.min(v);
    }
    top - left_min.max(right_min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodEstimate<T> {
    /// Mean spacing of consecutive peaks.
    pub mean: T,
    /// Sample standard deviation of the spacings (zero for two peaks).
    pub std: T,
    pub n_peaks: usize,
}

/// Mean and spread of consecutive peak spacings; needs two peaks.
pub fn period_estimate<T: Scalar>(peaks: &[Peak<T>]) -> Result<PeriodEstimate<T>> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientPeaks {
            needed: 2,
            found: peaks.len(),
        });
    }
    let spacings: Vec<f64> = peaks.windows(2).map(|w| (w[1].position - w[0].position).f64()).collect();
    let m = spacings.len() as f64;
    let mean = spacings.iter().sum::<f64>() / m;
    let std = if spacings.len() > 1 {
        (spacings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PeriodEstimate {
        mean: T::of(mean),
        std: T::of(std),
        n_peaks: peaks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    fn xs(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn monotone_series_has_no_peaks() {
        let x = xs(20);
        assert!(detect_peaks(&x, &x, PeakOptions::default()).is_empty());
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(detect_peaks(&x, &down, PeakOptions::default()).is_empty());
        assert!(detect_minima(&x, &x, PeakOptions::default()).is_empty());
    }

    #[test]
    fn alternating_series() {
        let v = [0.0, 1.0, 0.0, 1.0, 0.0];
        let p = detect_peaks(&xs(5), &v, PeakOptions::default());
        assert_eq!(p.iter().map(|p| p.index).collect::<Vec<_>>(), vec![1, 3]);
        let m = detect_minima(&xs(5), &v, PeakOptions::default());
        assert_eq!(m.iter().map(|p| p.index).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn plateau_counts_once_at_centre() {
        let v = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        let p = detect_peaks(&xs(7), &v, PeakOptions::default());
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].index, 3);
        // A plateau running into the end is not a peak.
        let v = [0.0, 1.0, 2.0, 2.0, 2.0];
        assert!(detect_peaks(&xs(5), &v, PeakOptions::default()).is_empty());
    }

    #[test]
    fn short_series_are_ignored() {
        assert!(detect_peaks(&xs(4), &[0.0, 1.0, 0.0, 0.0], PeakOptions::default()).is_empty());
    }

    #[test]
    fn period_needs_two_peaks() {
        let one = [Peak {
            index: 0,
            position: 1.0,
            value: 1.0,
        }];
        assert!(matches!(
            period_estimate(&one),
            Err(Error::InsufficientPeaks { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn noisy_sinusoid_period_within_three_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let period = 35.0;
        let x: Vec<f64> = (0..400).map(|i| i as f64 * 0.5).collect();
        // Amplitude-to-noise ratio 10.
        let v: Vec<f64> = x
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * t / period).sin() + 0.1 * rng.random_range(-1.0..1.0) * 3f64.sqrt())
            .collect();
        let opts = PeakOptions {
            smoothing_window: 9,
            min_prominence: 0.3,
        };
        let peaks = detect_peaks(&x, &v, opts);
        assert_eq!(peaks.len(), 6);
        let est = period_estimate(&peaks).unwrap();
        assert!((est.mean - period).abs() < 0.03 * period, "{}", est.mean);
    }

    #[test]
    fn prominence_filters_ripples() {
        let v = [0.0, 10.0, 9.9, 9.95, 0.0, 5.0, 0.0];
        let p = detect_peaks(
            &xs(7),
            &v,
            PeakOptions {
                smoothing_window: 0,
                min_prominence: 0.2,
            },
        );
        assert_eq!(p.iter().map(|p| p.index).collect::<Vec<_>>(), vec![1, 5]);
    }
}
