use ndarray::{Array3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

/// Process-wide transform engine with cached plans.
///
/// Normalization contract: `forward3` is unnormalized (coefficient k holds
/// Σ_j f(x_j)·e^{−ik·x_j} over the physical points x_j = −π + j·2π/N),
/// `inverse3` divides by the total point count. The same convention applies
/// to the 1-D helpers. Relative to the raw index-space DFT this negates odd
/// wavenumber slots, the (−1)^k phase of the −π grid origin.
///
/// Lane parallelism is optional and bit-deterministic: lanes are independent
/// and each lane's arithmetic is identical whether or not a pool is used.
pub struct FftEngine {
    plans: Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>,
    parallel: AtomicBool,
}

static ENGINE: OnceLock<FftEngine> = OnceLock::new();

/// The shared engine. Plans are created on first use and cached forever.
pub fn engine() -> &'static FftEngine {
    ENGINE.get_or_init(|| FftEngine {
        plans: Mutex::new(HashMap::new()),
        parallel: AtomicBool::new(false),
    })
}

/// Minimum lane count before a parallel pass pays for itself.
const PAR_LANE_THRESHOLD: usize = 256;

impl FftEngine {
    /// Enable or disable lane-parallel transform passes (off by default).
    /// Results are byte-identical either way.
    pub fn set_parallel(&self, on: bool) {
        self.parallel.store(on, Ordering::Relaxed);
    }

    pub fn parallel(&self) -> bool {
        self.parallel.load(Ordering::Relaxed)
    }

    fn plan(&self, n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
        let mut plans = self.plans.lock().expect("fft plan cache poisoned");
        plans
            .entry((n, forward))
            .or_insert_with(|| {
                let dir = if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                FftPlanner::new().plan_fft(n, dir)
            })
            .clone()
    }

    /// In-place transform along one axis; no-op on degenerate axes.
    pub fn transform_axis(&self, data: &mut Array3<Complex64>, axis: usize, forward: bool) {
        let n = data.len_of(Axis(axis));
        if n <= 1 {
            return;
        }
        let plan = self.plan(n, forward);
        let lane_count = data.len() / n;
        let lanes = data.lanes_mut(Axis(axis));
        if self.parallel() && lane_count >= PAR_LANE_THRESHOLD {
            Zip::from(lanes).par_for_each(|lane| process_lane(plan.as_ref(), forward, lane));
        } else {
            Zip::from(lanes).for_each(|lane| process_lane(plan.as_ref(), forward, lane));
        }
    }

    /// Unnormalized forward transform along every active axis.
    pub fn forward3(&self, data: &mut Array3<Complex64>) {
        for axis in 0..3 {
            self.transform_axis(data, axis, true);
        }
    }

    /// Inverse transform along every active axis, scaled by 1/(total points).
    pub fn inverse3(&self, data: &mut Array3<Complex64>) {
        for axis in 0..3 {
            self.transform_axis(data, axis, false);
        }
        let scale = 1.0 / data.len() as f64;
        data.mapv_inplace(|v| v * scale);
    }

    /// Unnormalized forward transform of a 1-D buffer.
    pub fn forward1(&self, data: &mut [Complex64]) {
        if data.len() > 1 {
            self.plan(data.len(), true).process(data);
            negate_odd_slots(data);
        }
    }

    /// Inverse transform of a 1-D buffer, scaled by 1/N.
    pub fn inverse1(&self, data: &mut [Complex64]) {
        let n = data.len();
        if n > 1 {
            negate_odd_slots(data);
            self.plan(n, false).process(data);
            let scale = 1.0 / n as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// The (−1)^k origin phase; k and its slot index share parity for even N.
fn negate_odd_slots(slice: &mut [Complex64]) {
    for v in slice.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

fn process_lane(plan: &dyn Fft<f64>, forward: bool, mut lane: ndarray::ArrayViewMut1<Complex64>) {
    if let Some(slice) = lane.as_slice_mut() {
        if !forward {
            negate_odd_slots(slice);
        }
        plan.process(slice);
        if forward {
            negate_odd_slots(slice);
        }
    } else {
        let mut buf: Vec<Complex64> = lane.iter().copied().collect();
        if !forward {
            negate_odd_slots(&mut buf);
        }
        plan.process(&mut buf);
        if forward {
            negate_odd_slots(&mut buf);
        }
        for (dst, src) in lane.iter_mut().zip(buf) {
            *dst = src;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn round_trip_is_identity_up_to_roundoff() {
        let mut data = Array3::<Complex64>::zeros((4, 8, 6));
        for (i, v) in data.iter_mut().enumerate() {
            *v = Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos());
        }
        let orig = data.clone();
        engine().forward3(&mut data);
        engine().inverse3(&mut data);
        let err: f64 = data
            .iter()
            .zip(orig.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "round-trip error {err}");
    }

    #[test]
    fn forward_of_pure_mode_is_single_coefficient() {
        let n = 16usize;
        let mut data = Array3::<Complex64>::zeros((1, n, 1));
        for j in 0..n {
            let y = -std::f64::consts::PI + j as f64 * (2.0 * std::f64::consts::PI / n as f64);
            data[[0, j, 0]] = Complex64::new((3.0 * y).cos(), 0.0);
        }
        engine().forward3(&mut data);
        // cos(3y) = (e^{i3y}+e^{−i3y})/2 → coefficients N/2 at k = ±3.
        assert!((data[[0, 3, 0]].re - n as f64 / 2.0).abs() < 1e-9);
        assert!((data[[0, n - 3, 0]].re - n as f64 / 2.0).abs() < 1e-9);
        for k in 0..n {
            if k != 3 && k != n - 3 {
                assert!(data[[0, k, 0]].norm() < 1e-9);
            }
        }
    }
}
