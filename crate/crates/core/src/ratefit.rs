use crate::{CoreError, Result};
use serde::Serialize;

/// One norm sample of a decaying trajectory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecaySample {
    pub t: f64,
    pub value: f64,
}

/// How to pick the fitting window inside a sample series.
#[derive(Debug, Clone, Copy)]
pub enum WindowSelect {
    /// Samples whose log-drop from the initial value lies in [lo, hi]
    /// (e.g. −2 to −12), locally linear: the OLS fit must reach `min_r2`,
    /// shrinking endpoints down to `min_len` samples if needed.
    Auto {
        drop_lo: f64,
        drop_hi: f64,
        min_r2: f64,
        min_len: usize,
    },
    /// Fixed sample indices [start, end] (inclusive), chosen a priori.
    /// No R² gate: the protocol is pinned before the data is seen.
    Pinned { start: usize, end: usize },
}

impl WindowSelect {
    /// The transient-skipping default: fit where the norm has dropped by
    /// e^{−2}..e^{−12} and the log-linear fit explains the data.
    pub fn auto() -> Self {
        WindowSelect::Auto {
            drop_lo: -2.0,
            drop_hi: -12.0,
            min_r2: 0.995,
            min_len: 6,
        }
    }
}

/// A fitted exponential-decay rate: value(t) ≈ e^{intercept − lambda·t}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowFit {
    pub lambda: f64,
    pub intercept: f64,
    pub r2: f64,
    pub start_index: usize,
    pub end_index: usize,
    pub start_t: f64,
    pub end_t: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fit λ from log(value) against t over the selected window.
pub fn fit_decay_window(samples: &[DecaySample], select: WindowSelect) -> Result<WindowFit> {
    if samples.iter().any(|s| !(s.value > 0.0) || !s.t.is_finite()) {
        return Err(CoreError::NoDecayWindow(
            "non-positive or non-finite sample".into(),
        ));
    }
    let logs: Vec<f64> = samples.iter().map(|s| s.value.ln()).collect();
    let (mut start, mut end) = match select {
        WindowSelect::Pinned { start, end } => {
            if end >= samples.len() || start + 1 >= end + 1 || end - start < 1 {
                return Err(CoreError::NoDecayWindow(format!(
                    "pinned window [{start}, {end}] outside {} samples",
                    samples.len()
                )));
            }
            (start, end)
        }
        WindowSelect::Auto {
            drop_lo, drop_hi, ..
        } => {
            let l0 = logs[0];
            let inside: Vec<usize> = (0..samples.len())
                .filter(|&i| {
                    let d = logs[i] - l0;
                    d <= drop_lo && d >= drop_hi
                })
                .collect();
            match (inside.first(), inside.last()) {
                (Some(&a), Some(&b)) if b > a => (a, b),
                _ => {
                    return Err(CoreError::NoDecayWindow(format!(
                        "no samples with log-drop in [{drop_hi}, {drop_lo}]"
                    )))
                }
            }
        }
    };
    let fit_range = |a: usize, b: usize| {
        let xs: Vec<f64> = samples[a..=b].iter().map(|s| s.t).collect();
        let (slope, intercept, r2) = ols(&xs, &logs[a..=b]);
        WindowFit {
            lambda: -slope,
            intercept,
            r2,
            start_index: a,
            end_index: b,
            start_t: samples[a].t,
            end_t: samples[b].t,
        }
    };
    let mut fit = fit_range(start, end);
    if let WindowSelect::Auto {
        min_r2, min_len, ..
    } = select
    {
        // Shrink the worse endpoint until the fit is linear enough.
        while fit.r2 < min_r2 && end - start + 1 > min_len.max(3) {
            let left = fit_range(start + 1, end);
            let right = fit_range(start, end - 1);
            if left.r2 >= right.r2 {
                start += 1;
                fit = left;
            } else {
                end -= 1;
                fit = right;
            }
        }
        if fit.r2 < min_r2 {
            return Err(CoreError::NoDecayWindow(format!(
                "window r² = {:.4} below gate {min_r2}",
                fit.r2
            )));
        }
    }
    Ok(fit)
}

/// OLS slope of ys against xs (used on log λ vs log A).
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2, "need ≥ 2 points");
    ols(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_decay(lambda: f64, n: usize, dt: f64) -> Vec<DecaySample> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                DecaySample {
                    t,
                    value: (-lambda * t).exp(),
                }
            })
            .collect()
    }

    #[test]
    fn exact_exponential_recovers_rate() {
        let samples = exact_decay(0.37, 200, 0.5);
        let fit = fit_decay_window(&samples, WindowSelect::auto()).unwrap();
        assert!((fit.lambda - 0.37).abs() < 1e-12);
        assert!(fit.r2 > 0.999999);
        // Window sits where the drop is between e^{−2} and e^{−12}.
        assert!(fit.start_t >= 2.0 / 0.37 - 0.5);
        assert!(fit.end_t <= 12.0 / 0.37 + 0.5);
    }

    #[test]
    fn transient_is_excluded_by_the_drop_band() {
        // Plateau then clean decay: the plateau sits above the −2 gate.
        let mut samples: Vec<DecaySample> = (0..40)
            .map(|i| DecaySample {
                t: i as f64 * 0.1,
                value: 1.0 - 1e-3 * i as f64,
            })
            .collect();
        let t0 = 4.0;
        for i in 0..300 {
            let t = t0 + i as f64 * 0.1;
            samples.push(DecaySample {
                t,
                value: 0.9 * (-0.5 * (t - t0)).exp(),
            });
        }
        let fit = fit_decay_window(&samples, WindowSelect::auto()).unwrap();
        assert!((fit.lambda - 0.5).abs() < 0.01, "λ = {}", fit.lambda);
        assert!(fit.start_t >= t0);
    }

    #[test]
    fn pinned_window_ignores_shape() {
        let samples: Vec<DecaySample> = (0..10)
            .map(|i| DecaySample {
                t: i as f64,
                value: (-(i as f64) * 0.2 - 0.03 * (i as f64).sin()).exp(),
            })
            .collect();
        let fit = fit_decay_window(&samples, WindowSelect::Pinned { start: 1, end: 4 }).unwrap();
        assert_eq!((fit.start_index, fit.end_index), (1, 4));
        assert!((fit.lambda - 0.2).abs() < 0.05);
    }

    #[test]
    fn flat_series_is_flagged() {
        let samples: Vec<DecaySample> = (0..50)
            .map(|i| DecaySample {
                t: i as f64,
                value: 1.0,
            })
            .collect();
        assert!(matches!(
            fit_decay_window(&samples, WindowSelect::auto()),
            Err(CoreError::NoDecayWindow(_))
        ));
    }

    #[test]
    fn log_slope_on_power_law() {
        let a_list = [1e3, 10f64.powf(3.5), 1e4, 10f64.powf(4.5), 1e5];
        let xs: Vec<f64> = a_list.iter().map(|a| a.ln()).collect();
        let ys: Vec<f64> = a_list.iter().map(|a| (2.7 * a.powf(-0.5)).ln()).collect();
        let (slope, _, r2) = fit_log_slope(&xs, &ys);
        assert!((slope + 0.5).abs() < 1e-12);
        assert!(r2 > 0.999999999);
    }
}
