use crate::fft::engine;
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::schedule::{FlowSchedule, Phase, ShearDirection};
use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Default cap on a single quadrature panel width.
pub const DEFAULT_QUADRATURE_CAP: f64 = 0.5;

/// Default combined-order cap for `apply_gamma`.
pub const DEFAULT_APPLY_CAP: usize = 12;

/// Allowed float-accumulation overshoot when a step lands on a phase end.
/// Genuine crossings are orders of magnitude larger and still error.
pub(crate) fn boundary_slack(end: f64) -> f64 {
    64.0 * f64::EPSILON * end.abs().max(1.0)
}

/// The gliding derivative state for one shear phase.
///
/// Carries B^(m)(t, ·) = ∫_{t_r}^t ∂^m u(s, ·) ds on the profile axis for
/// m = 1..=m_max, plus the weight Φ(τ) = 1/(1 + τ³/A) with τ = t − t_r.
/// B is accumulated by one trapezoid panel per solver substep, so the phase
/// integrals seen by the time integrator and by Γ are the same numbers.
///
/// Advanced by a single owner; diagnostics read snapshots.
#[derive(Debug, Clone)]
pub struct GammaContext {
    grid: Grid,
    direction: ShearDirection,
    amplitude: f64,
    t_r: f64,
    t: f64,
    m_max: usize,
    quadrature_cap: f64,
    apply_cap: usize,
    /// b[m-1] = B^(m)(t, ·); every row is ≡ 0 at t = t_r.
    b: Vec<Vec<f64>>,
    /// Integrand rows ∂^m u(t, ·): the retained left edge of the next panel.
    rows: Vec<Vec<f64>>,
    phase: Option<PhaseBinding>,
}

/// The owning phase, captured at construction so panels never re-locate it.
#[derive(Debug, Clone)]
struct PhaseBinding {
    phase: Phase,
    absolute_start: f64,
    end: f64,
}

/// The history-dependent part of a context, for checkpoints. The integrand
/// rows are a pure function of the phase and `t` and are rebuilt on restore,
/// so round-trips through [`GammaContext::snapshot`] are bitwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaSnapshot {
    pub t_r: f64,
    pub t: f64,
    pub m_max: usize,
    pub b: Vec<Vec<f64>>,
}

impl GammaContext {
    /// Fresh context based at `t_r`: B ≡ 0, Φ = 1. The phase containing `t_r`
    /// is captured; accumulation may not cross its end.
    pub fn new(grid: Grid, schedule: &FlowSchedule, t_r: f64, m_max: usize) -> Result<Self> {
        let phase = match schedule.phase_at(t_r)? {
            None => None,
            Some(loc) => {
                let phase = schedule.phases()[loc.index].clone();
                let end = loc.absolute_start + phase.duration;
                Some(PhaseBinding {
                    phase,
                    absolute_start: loc.absolute_start,
                    end,
                })
            }
        };
        let npts = match &phase {
            Some(b) => grid.n(b.phase.direction.profile_axis()),
            None => grid.n(1),
        };
        let mut ctx = Self {
            grid,
            direction: phase
                .as_ref()
                .map_or(ShearDirection::XInY, |b| b.phase.direction),
            amplitude: schedule.amplitude(),
            t_r,
            t: t_r,
            m_max: m_max.max(1),
            quadrature_cap: DEFAULT_QUADRATURE_CAP,
            apply_cap: DEFAULT_APPLY_CAP,
            b: vec![vec![0.0; npts]; m_max.max(1)],
            rows: Vec::new(),
            phase,
        };
        ctx.rows = ctx.integrand(t_r)?;
        Ok(ctx)
    }

    pub fn with_quadrature_cap(mut self, cap: f64) -> Self {
        self.quadrature_cap = cap;
        self
    }

    pub fn with_apply_cap(mut self, cap: usize) -> Self {
        self.apply_cap = cap;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn direction(&self) -> ShearDirection {
        self.direction
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn t_r(&self) -> f64 {
        self.t_r
    }

    pub fn tau(&self) -> f64 {
        (self.t - self.t_r).max(0.0)
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Φ(τ) = 1/(1 + τ³/A) ∈ (0, 1], nonincreasing, Φ = 1 at t_r.
    pub fn phi(&self) -> f64 {
        let tau = self.tau();
        1.0 / (1.0 + tau * tau * tau / self.amplitude)
    }

    /// B^(m)(t, ·) on the profile-axis grid points, m ∈ 1..=m_max.
    pub fn b_row(&self, m: usize) -> &[f64] {
        assert!(m >= 1 && m <= self.m_max, "B^({m}) not accumulated");
        &self.b[m - 1]
    }

    /// ∂^m u(t, ·) integrand rows, m = 1..=m_max.
    fn integrand(&self, t: f64) -> Result<Vec<Vec<f64>>> {
        match &self.phase {
            None => Ok(vec![Vec::new(); self.m_max]),
            Some(binding) => {
                let axis = binding.phase.direction.profile_axis();
                let points = self.grid.points(axis);
                let shift = binding.phase.shift.phi(t - binding.absolute_start);
                Ok((1..=self.m_max)
                    .map(|m| binding.phase.profile.sample_shifted(m, &points, shift))
                    .collect())
            }
        }
    }

    pub fn snapshot(&self) -> GammaSnapshot {
        GammaSnapshot {
            t_r: self.t_r,
            t: self.t,
            m_max: self.m_max,
            b: self.b.clone(),
        }
    }

    /// Rebuild a context from a snapshot, against the same grid and schedule
    /// it was taken from. The accumulated B rows are restored verbatim.
    pub fn restore(grid: Grid, schedule: &FlowSchedule, snap: &GammaSnapshot) -> Result<Self> {
        let mut ctx = Self::new(grid, schedule, snap.t_r, snap.m_max)?;
        if snap.b.len() != ctx.b.len()
            || snap.b.iter().zip(ctx.b.iter()).any(|(s, c)| s.len() != c.len())
        {
            return Err(CoreError::Protocol(
                "snapshot row shape does not match the grid and order".into(),
            ));
        }
        if let Some(binding) = &ctx.phase {
            if snap.t > binding.end + boundary_slack(binding.end) {
                return Err(CoreError::PhaseBoundary(format!(
                    "snapshot time {} lies beyond the phase end {}",
                    snap.t, binding.end
                )));
            }
        }
        ctx.b = snap.b.clone();
        ctx.t = snap.t;
        ctx.rows = ctx.integrand(snap.t)?;
        Ok(ctx)
    }

    /// Advance by one trapezoid panel to `t_next`.
    pub fn accumulate_b(&mut self, t_next: f64) -> Result<()> {
        if t_next < self.t {
            return Err(CoreError::QuadratureStep {
                dt: t_next - self.t,
                cap: self.quadrature_cap,
            });
        }
        if t_next == self.t {
            return Ok(());
        }
        let Some(binding) = &self.phase else {
            self.t = t_next;
            return Ok(());
        };
        if t_next > binding.end + boundary_slack(binding.end) {
            return Err(CoreError::PhaseBoundary(format!(
                "accumulation to t = {t_next} crosses phase end {}",
                binding.end
            )));
        }
        let dt = t_next - self.t;
        if dt > self.quadrature_cap {
            return Err(CoreError::QuadratureStep {
                dt,
                cap: self.quadrature_cap,
            });
        }
        let next = self.integrand(t_next)?;
        for m in 0..self.m_max {
            for (bj, (l, r)) in self.b[m]
                .iter_mut()
                .zip(self.rows[m].iter().zip(next[m].iter()))
            {
                *bj += 0.5 * dt * (l + r);
            }
        }
        self.rows = next;
        self.t = t_next;
        Ok(())
    }

    /// Γ^{ijk} F = ∂_transport^i (∂_profile + B^(1)·∂_transport)^j ∂_spare^k F,
    /// with the pointwise B multiply done in real space and dealiased.
    pub fn apply_gamma(&self, f: &SpectralField, i: usize, j: usize, k: usize) -> Result<SpectralField> {
        self.grid.same_as(f.grid())?;
        if i + j + k > self.apply_cap {
            return Err(CoreError::OrderCap {
                order: i + j + k,
                cap: self.apply_cap,
            });
        }
        let ta = self.direction.transport_axis();
        let pa = self.direction.profile_axis();
        let sa = 3 - ta - pa;
        let mut g = f.derivative(ta, i)?;
        for _ in 0..j {
            g = self.gamma_once(&g)?;
        }
        g.derivative(sa, k)
    }

    /// One gliding derivative: ∂_profile F + B^(1)·∂_transport F.
    fn gamma_once(&self, f: &SpectralField) -> Result<SpectralField> {
        let ta = self.direction.transport_axis();
        let pa = self.direction.profile_axis();
        let mut out = f.derivative(pa, 1)?;
        let b1 = &self.b[0];
        if b1.iter().any(|&v| v != 0.0) {
            let dx = f.derivative(ta, 1)?;
            let mut real = dx.inverse_complex();
            for ((ix, iy, iz), v) in real.indexed_iter_mut() {
                *v *= b1[[ix, iy, iz][pa]];
            }
            engine().forward3(&mut real);
            let mut prod = SpectralField::new(self.grid, real)?;
            prod.dealias_inplace();
            out.data_mut().zip_mut_with(prod.data(), |a, b| *a += b);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RealField;
    use crate::profile::ShearProfile;
    use num_complex::Complex64;

    fn line() -> Grid {
        Grid::line_y(64).unwrap()
    }

    #[test]
    fn stationary_cos_accumulates_minus_t_sin_exactly() {
        let s = FlowSchedule::stationary(ShearProfile::cosine(), 100.0);
        let mut ctx = GammaContext::new(line(), &s, 0.0, 3).unwrap();
        let mut t = 0.0;
        while t < 2.0 - 1e-12 {
            t += 0.25;
            ctx.accumulate_b(t).unwrap();
        }
        // Time-independent integrand: trapezoid telescopes exactly.
        for (j, &y) in line().points(1).iter().enumerate() {
            assert!((ctx.b_row(1)[j] + 2.0 * y.sin()).abs() < 1e-12);
            assert!((ctx.b_row(2)[j] + 2.0 * y.cos()).abs() < 1e-12);
            assert!((ctx.b_row(3)[j] - 2.0 * y.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_shift_matches_adaptive_quadrature_oracle() {
        let a = 100.0;
        let s = FlowSchedule::log_shift(ShearProfile::cosine(), a);
        let mut ctx = GammaContext::new(line(), &s, 0.0, 1).unwrap();
        let t_end = 2.0;
        let n = 40_000;
        for i in 1..=n {
            ctx.accumulate_b(t_end * i as f64 / n as f64).unwrap();
        }
        // Adaptive Simpson on ∫₀ᵗ −sin(y + log(1+s)) ds, tol far below target.
        for (j, &y) in line().points(1).iter().enumerate().step_by(7) {
            let f = |s: f64| -(y + (1.0 + s).ln()).sin();
            let oracle = adaptive_simpson(&f, 0.0, t_end, 1e-13);
            assert!(
                (ctx.b_row(1)[j] - oracle).abs() < 1e-9,
                "gap {} at y={y}",
                (ctx.b_row(1)[j] - oracle).abs()
            );
        }
    }

    fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (simpson(f, a, m), simpson(f, m, b));
            if depth == 0 || (l + r - whole).abs() < 15.0 * tol {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 40)
    }

    #[test]
    fn higher_b_rows_are_spectral_derivatives_of_lower() {
        let s = FlowSchedule::rewound(ShearProfile::two_mode(), 64.0);
        let mut ctx = GammaContext::new(line(), &s, 0.0, 4).unwrap();
        for i in 1..=120 {
            ctx.accumulate_b(0.05 * i as f64).unwrap();
        }
        for m in 1..4 {
            let mut row: Vec<Complex64> = ctx.b_row(m).iter().map(|&v| v.into()).collect();
            engine().forward1(&mut row);
            let n = row.len();
            for (j, v) in row.iter_mut().enumerate() {
                let k = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
                *v *= if j == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k as f64)
                };
            }
            engine().inverse1(&mut row);
            let err = row
                .iter()
                .zip(ctx.b_row(m + 1))
                .map(|(a, b)| (a.re - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-10, "∂B^({m}) vs B^({}) err {err}", m + 1);
        }
    }

    #[test]
    fn gamma_at_reset_time_is_profile_derivative() {
        let g = Grid::new(8, 32, 1).unwrap();
        let s = FlowSchedule::stationary(ShearProfile::cosine(), 100.0);
        let ctx = GammaContext::new(g, &s, 0.0, 1).unwrap();
        let f = SpectralField::random_band_limited(g, [2, 8, 0], 5);
        let lhs = ctx.apply_gamma(&f, 0, 1, 0).unwrap();
        let rhs = f.derivative(1, 1).unwrap();
        let gap: f64 = lhs
            .data()
            .iter()
            .zip(rhs.data().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12);
    }

    #[test]
    fn gamma_on_separable_mode_matches_analytic_form() {
        // f = e^{ix}g(y) ⇒ Γf = e^{ix}(g′ + iB^(1)g), α = 1.
        let g = Grid::new(8, 48, 1).unwrap();
        let s = FlowSchedule::stationary(ShearProfile::cosine(), 100.0);
        let mut ctx = GammaContext::new(g, &s, 0.0, 1).unwrap();
        for i in 1..=8 {
            ctx.accumulate_b(0.25 * i as f64).unwrap();
        }
        let f = RealField::from_fn(g, |x, y, _| x.cos() * (2.0 * y).sin())
            .transform()
            .unwrap();
        let got = ctx.apply_gamma(&f, 0, 1, 0).unwrap().inverse();
        // Γ(cos x·sin 2y) = 2cos x·cos 2y − B(y)·sin x·sin 2y with B = −2 sin y.
        let want = RealField::from_fn(g, |x, y, _| {
            2.0 * x.cos() * (2.0 * y).cos() + 2.0 * y.sin() * x.sin() * (2.0 * y).sin()
        });
        let err = got
            .data()
            .iter()
            .zip(want.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "separable oracle err {err}");
    }

    #[test]
    fn apply_gamma_composes_additively() {
        let g = Grid::new(12, 24, 6).unwrap();
        let s = FlowSchedule::log_shift(ShearProfile::two_mode(), 50.0);
        let mut ctx = GammaContext::new(g, &s, 0.0, 1).unwrap();
        for i in 1..=10 {
            ctx.accumulate_b(0.1 * i as f64).unwrap();
        }
        let f = SpectralField::random_band_limited(g, [3, 5, 1], 21).dealias();
        let ab = ctx.apply_gamma(&f, 1, 2, 1).unwrap();
        let step = ctx
            .apply_gamma(&ctx.apply_gamma(&f, 1, 1, 0).unwrap(), 0, 1, 1)
            .unwrap();
        let num: f64 = ab
            .data()
            .iter()
            .zip(step.data().iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = ab.data().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        // Equal up to dealiasing error of the intermediate product.
        assert!(num / den < 1e-10, "composition rel gap {}", num / den);
    }

    #[test]
    fn phase_boundary_is_rejected() {
        let s = FlowSchedule::alternating(ShearProfile::cosine(), 64.0, 0.25);
        let d = 64.0f64.powf(1.0 / 3.0 + 0.25);
        let mut ctx = GammaContext::new(line(), &s, 0.0, 1)
            .unwrap()
            .with_quadrature_cap(d);
        ctx.accumulate_b(d).unwrap();
        assert!(matches!(
            ctx.accumulate_b(d + 0.1),
            Err(CoreError::PhaseBoundary(_))
        ));
    }

    #[test]
    fn panel_wider_than_cap_is_rejected() {
        let s = FlowSchedule::stationary(ShearProfile::cosine(), 100.0);
        let mut ctx = GammaContext::new(line(), &s, 0.0, 1).unwrap();
        assert!(matches!(
            ctx.accumulate_b(DEFAULT_QUADRATURE_CAP * 1.5),
            Err(CoreError::QuadratureStep { .. })
        ));
    }

    #[test]
    fn phi_weight_decays_from_one() {
        let s = FlowSchedule::stationary(ShearProfile::cosine(), 1000.0);
        let mut ctx = GammaContext::new(line(), &s, 0.0, 1).unwrap();
        assert_eq!(ctx.phi(), 1.0);
        let mut last = 1.0;
        for i in 1..=40 {
            ctx.accumulate_b(0.5 * i as f64).unwrap();
            let phi = ctx.phi();
            assert!(phi > 0.0 && phi <= last);
            last = phi;
        }
        let tau: f64 = 20.0;
        assert!((last - 1.0 / (1.0 + tau.powi(3) / 1000.0)).abs() < 1e-12);
    }
}
