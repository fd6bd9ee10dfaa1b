use crate::{CoreError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const NONCONSTANT_TOL: f64 = 1e-12;
const NORMALIZE_SAMPLES: usize = 4096;

/// A smooth 2π-periodic shear profile U given by Fourier coefficients, with
/// exact derivatives of every order up to the cap.
///
/// Coefficients are stored single-sided: U(y) = c₀ + Σ_{k>0} 2·Re(c_k e^{iky}),
/// which keeps U real by construction. The profile must be non-constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShearProfile {
    mean: f64,
    coeffs: Vec<(u32, Complex64)>,
    order_cap: usize,
}

impl ShearProfile {
    pub const DEFAULT_ORDER_CAP: usize = 8;

    pub fn new(mean: f64, coeffs: Vec<(u32, Complex64)>) -> Result<Self> {
        let mut coeffs: Vec<(u32, Complex64)> =
            coeffs.into_iter().filter(|(k, _)| *k > 0).collect();
        coeffs.sort_by_key(|(k, _)| *k);
        if !coeffs.iter().any(|(_, c)| c.norm() > NONCONSTANT_TOL) {
            return Err(CoreError::InvalidGrid(
                "shear profile must be non-constant".into(),
            ));
        }
        Ok(Self {
            mean,
            coeffs,
            order_cap: Self::DEFAULT_ORDER_CAP,
        })
    }

    /// U(y) = cos(y), the reference profile: critical points at y ∈ {0, −π}.
    pub fn cosine() -> Self {
        Self::new(0.0, vec![(1, Complex64::new(0.5, 0.0))]).expect("cosine is non-constant")
    }

    /// A two-mode profile for tests that need a less symmetric shear.
    pub fn two_mode() -> Self {
        Self::new(
            0.0,
            vec![
                (1, Complex64::new(0.45, 0.0)),
                (2, Complex64::new(0.0, -0.12)),
            ],
        )
        .expect("two-mode profile is non-constant")
        .normalized()
    }

    pub fn order_cap(&self) -> usize {
        self.order_cap
    }

    /// U^{(m)}(y), exact from the coefficients.
    pub fn eval_deriv(&self, m: usize, y: f64) -> f64 {
        assert!(m <= self.order_cap, "derivative order {m} beyond cap");
        let mut acc = if m == 0 { self.mean } else { 0.0 };
        for &(k, c) in &self.coeffs {
            let ik_m = Complex64::new(0.0, k as f64).powu(m as u32);
            let e = Complex64::from_polar(1.0, k as f64 * y);
            acc += 2.0 * (c * ik_m * e).re;
        }
        acc
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.eval_deriv(0, y)
    }

    /// U^{(m)}(points + shift), the sampled shifted derivative profile.
    pub fn sample_shifted(&self, m: usize, points: &[f64], shift: f64) -> Vec<f64> {
        points.iter().map(|&y| self.eval_deriv(m, y + shift)).collect()
    }

    /// Peak amplitude max_y |U(y)| on a dense sample.
    pub fn linf(&self) -> f64 {
        let mut peak = 0.0f64;
        for j in 0..NORMALIZE_SAMPLES {
            let y = j as f64 * (2.0 * std::f64::consts::PI / NORMALIZE_SAMPLES as f64);
            peak = peak.max(self.eval(y).abs());
        }
        peak
    }

    /// Rescale so that ‖U‖_∞ = 1 (the drift normalization).
    pub fn normalized(&self) -> Self {
        let peak = self.linf();
        let mut out = self.clone();
        if peak > 0.0 {
            out.mean /= peak;
            for (_, c) in out.coeffs.iter_mut() {
                *c /= peak;
            }
        }
        out
    }

    /// Critical points of U (zeros of U′) in (−π, π], located by sign changes
    /// of U′ over the full torus plus bisection. Used to seed localized test
    /// data at shear-trapping locations.
    pub fn critical_points(&self) -> Vec<f64> {
        let n = NORMALIZE_SAMPLES;
        let pi = std::f64::consts::PI;
        let h = 2.0 * pi / n as f64;
        let ys: Vec<f64> = (0..n).map(|j| -pi + j as f64 * h).collect();
        let ds: Vec<f64> = ys.iter().map(|&y| self.eval_deriv(1, y)).collect();
        let mut out = Vec::new();
        for j in 0..n {
            if ds[j] == 0.0 {
                out.push(ys[j]);
                continue;
            }
            // Edge to the next sample, wrapping the seam at π.
            if ds[j] * ds[(j + 1) % n] < 0.0 {
                let (mut lo, mut hi, mut dlo) = (ys[j], ys[j] + h, ds[j]);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let dm = self.eval_deriv(1, mid);
                    if dlo * dm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        dlo = dm;
                    }
                }
                let root = 0.5 * (lo + hi);
                out.push(if root > pi { root - 2.0 * pi } else { root });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_profile_and_derivatives() {
        let u = ShearProfile::cosine();
        for &y in &[0.0, 0.5, -1.3, 3.0] {
            assert!((u.eval(y) - y.cos()).abs() < 1e-14);
            assert!((u.eval_deriv(1, y) + y.sin()).abs() < 1e-14);
            assert!((u.eval_deriv(2, y) + y.cos()).abs() < 1e-14);
            assert!((u.eval_deriv(3, y) - y.sin()).abs() < 1e-14);
        }
        assert!((u.linf() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_profile_rejected() {
        assert!(ShearProfile::new(1.0, vec![]).is_err());
        assert!(ShearProfile::new(0.0, vec![(1, Complex64::new(1e-15, 0.0))]).is_err());
    }

    #[test]
    fn normalization_bounds_peak() {
        let u = ShearProfile::two_mode();
        assert!((u.linf() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_critical_points() {
        let pts = ShearProfile::cosine().critical_points();
        assert_eq!(pts.len(), 2);
        let near = |target: f64| pts.iter().any(|&p| (p - target).abs() < 1e-9);
        assert!(near(0.0), "found {pts:?}");
        assert!(near(-std::f64::consts::PI) || near(std::f64::consts::PI), "found {pts:?}");
    }
}
