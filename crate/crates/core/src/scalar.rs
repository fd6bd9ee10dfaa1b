use crate::fft::engine;
use crate::field::{gauss, SpectralField};
use crate::gamma::DEFAULT_QUADRATURE_CAP;
use crate::grid::Grid;
use crate::ratefit::{fit_decay_window, fit_log_slope, DecaySample, WindowFit, WindowSelect};
use crate::schedule::{FlowSchedule, ShearDirection};
use crate::{CoreError, Result};
use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One-step relative L² growth beyond which the stepper aborts.
///
/// The scheme contracts exactly (unit-modulus phase factors, diffusion
/// factors ≤ 1), so any growth past roundoff means corrupted state.
pub const NORM_GROWTH_TOLERANCE: f64 = 1e-6;

/// Trapezoid edges of ∫ u dt over one step, sampled on the profile axis.
///
/// Built once per step and shared by every field advanced over that step, so
/// the phase increment and the B-accumulation see identical panel values.
#[derive(Debug, Clone)]
pub(crate) struct DriftPanel {
    pub(crate) direction: ShearDirection,
    pub(crate) left: Vec<f64>,
    pub(crate) right: Vec<f64>,
}

impl DriftPanel {
    /// Δφ(y_j) = (dt/2)·(u(t, y_j) + u(t+dt, y_j)).
    pub(crate) fn delta_phi(&self, dt: f64) -> Vec<f64> {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| 0.5 * dt * (l + r))
            .collect()
    }
}

/// Sample the drift at both edges of [t, t+dt]. The step may end exactly on
/// the active phase's boundary but never cross it; quiescent schedules have
/// no panel and no step cap.
pub(crate) fn drift_panel(
    schedule: &FlowSchedule,
    grid: &Grid,
    t: f64,
    dt: f64,
) -> Result<Option<DriftPanel>> {
    let Some(loc) = schedule.phase_at(t)? else {
        return Ok(None);
    };
    let phase = &schedule.phases()[loc.index];
    let end = loc.absolute_start + phase.duration;
    if t + dt > end + crate::gamma::boundary_slack(end) {
        return Err(CoreError::PhaseBoundary(format!(
            "step to t = {} crosses phase end {end}",
            t + dt
        )));
    }
    if dt > DEFAULT_QUADRATURE_CAP {
        return Err(CoreError::QuadratureStep {
            dt,
            cap: DEFAULT_QUADRATURE_CAP,
        });
    }
    let points = grid.points(phase.direction.profile_axis());
    let left = phase
        .profile
        .sample_shifted(0, &points, phase.shift.phi(loc.local_t));
    let right = phase
        .profile
        .sample_shifted(0, &points, phase.shift.phi(loc.local_t + dt));
    Ok(Some(DriftPanel {
        direction: phase.direction,
        left,
        right,
    }))
}

/// Multiply every mode by the exact transport factor e^{−i·k_t·Δφ(y)}.
///
/// Works in the mixed representation: spectral on the transport and spare
/// axes, physical on the profile axis. The rotation is the identity on the
/// k_t = 0 slab, which is saved and restored around the profile-axis
/// round-trip, so means and whole transport-averages survive bitwise.
pub(crate) fn rotate_transport(
    data: &mut Array3<Complex64>,
    grid: &Grid,
    panel: &DriftPanel,
    dt: f64,
) {
    let ta = panel.direction.transport_axis();
    let pa = panel.direction.profile_axis();
    let nt = grid.n(ta);
    let np = grid.n(pa);
    let kt = grid.wavenumbers(ta);
    let dphi = panel.delta_phi(dt);
    let scale = 1.0 / np as f64;
    let mut tab = Array2::<Complex64>::zeros((nt, np));
    for it in 0..nt {
        for ip in 0..np {
            tab[[it, ip]] = Complex64::from_polar(scale, -(kt[it] as f64) * dphi[ip]);
        }
    }
    let slab = data.index_axis(Axis(ta), 0).to_owned();
    engine().transform_axis(data, pa, false);
    Zip::indexed(&mut *data).for_each(|(i, j, l), v| {
        let idx = [i, j, l];
        *v *= tab[[idx[ta], idx[pa]]];
    });
    engine().transform_axis(data, pa, true);
    data.index_axis_mut(Axis(ta), 0).assign(&slab);
}

/// One Fourier mode of the advected scalar: the profile f̂_{α,γ}(t, y) with
/// carrier e^{i(αx + γz)}, α ≠ 0.
///
/// Values are stored at the physical collocation points y_j. The evolution
/// ∂_t f̂ + iα·u(t, y)·f̂ = (1/A)(∂_yy − α² − γ²) f̂ is advanced by Strang
/// splitting with exact sub-flows, so ‖f̂(t)‖₂ never exceeds ‖f̂(0)‖₂.
/// An infinite amplitude means zero diffusivity (the inviscid limit).
#[derive(Debug, Clone)]
pub struct ModeState {
    alpha: i64,
    gamma: i64,
    grid: Grid,
    values: Vec<Complex64>,
    t: f64,
    amplitude: f64,
}

impl ModeState {
    pub fn new(alpha: i64, gamma: i64, values: Vec<Complex64>, amplitude: f64) -> Result<Self> {
        if alpha == 0 {
            return Err(CoreError::Geometry(
                "mode carrier α must be nonzero; α = 0 lanes are pure heat flow".into(),
            ));
        }
        if !(amplitude > 0.0) {
            return Err(CoreError::Geometry(format!(
                "amplitude must be positive (got {amplitude}); use infinity for the inviscid limit"
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CoreError::NonFinite("mode profile"));
        }
        let grid = Grid::line_y(values.len())?;
        Ok(Self {
            alpha,
            gamma,
            grid,
            values,
            t: 0.0,
            amplitude,
        })
    }

    /// Sample f(y) at the collocation points y_j = −π + j·2π/n.
    pub fn from_profile(
        alpha: i64,
        gamma: i64,
        n_y: usize,
        amplitude: f64,
        mut f: impl FnMut(f64) -> Complex64,
    ) -> Result<Self> {
        let grid = Grid::line_y(n_y)?;
        let values = grid.points(1).iter().map(|&y| f(y)).collect();
        Self::new(alpha, gamma, values, amplitude)
    }

    /// Mean-zero random profile supported on 1 ≤ |β| ≤ cutoff, ‖·‖₂ = 1.
    pub fn random_band_limited(
        alpha: i64,
        gamma: i64,
        n_y: usize,
        cutoff: i64,
        amplitude: f64,
        seed: u64,
    ) -> Result<Self> {
        Grid::line_y(n_y)?;
        let max_band = (n_y as i64 - 1) / 2;
        if cutoff < 1 || cutoff > max_band {
            return Err(CoreError::Geometry(format!(
                "band cutoff {cutoff} outside 1..={max_band} for {n_y} points"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n_y];
        for b in 1..=cutoff {
            for beta in [b, -b] {
                let idx = if beta >= 0 { beta } else { n_y as i64 + beta } as usize;
                spectrum[idx] = Complex64::new(gauss(&mut rng), gauss(&mut rng));
            }
        }
        engine().inverse1(&mut spectrum);
        let mut state = Self::new(alpha, gamma, spectrum, amplitude)?;
        let norm = state.l2_norm();
        for v in &mut state.values {
            *v /= norm;
        }
        Ok(state)
    }

    /// Localized bump exp((cos(y − center) − 1)/σ²), ‖·‖₂ = 1. Centered at a
    /// profile critical point it probes the slowest-mixing initial data.
    pub fn bump(
        alpha: i64,
        gamma: i64,
        n_y: usize,
        amplitude: f64,
        center: f64,
        sigma: f64,
    ) -> Result<Self> {
        let inv_s2 = 1.0 / (sigma * sigma);
        let mut state = Self::from_profile(alpha, gamma, n_y, amplitude, |y| {
            Complex64::new((((y - center).cos() - 1.0) * inv_s2).exp(), 0.0)
        })?;
        let norm = state.l2_norm();
        for v in &mut state.values {
            *v /= norm;
        }
        Ok(state)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn alpha(&self) -> i64 {
        self.alpha
    }

    pub fn gamma(&self) -> i64 {
        self.gamma
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn n_y(&self) -> usize {
        self.values.len()
    }

    /// f̂(t, y_j) at the collocation points.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// ‖f̂‖₂ over y ∈ (−π, π]: sqrt(2π/n · Σ|f̂_j|²).
    pub fn l2_norm(&self) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.values.len() as f64;
        (w * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    fn half_diffusion(&mut self, s: f64) {
        if !self.amplitude.is_finite() {
            return;
        }
        let inv_a = 1.0 / self.amplitude;
        let perp = (self.alpha * self.alpha + self.gamma * self.gamma) as f64;
        engine().forward1(&mut self.values);
        for (v, &beta) in self.values.iter_mut().zip(self.grid.wavenumbers(1).iter()) {
            let k2 = perp + (beta * beta) as f64;
            *v *= (-k2 * s * inv_a).exp();
        }
        engine().inverse1(&mut self.values);
    }

    /// Strang step: half diffusion, exact phase e^{−iα·Δφ(y)}, half diffusion.
    /// Δφ uses the same trapezoid panel as B-accumulation.
    pub fn step(&mut self, schedule: &FlowSchedule, dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        if dt < 0.0 {
            return Err(CoreError::QuadratureStep {
                dt,
                cap: DEFAULT_QUADRATURE_CAP,
            });
        }
        let panel = drift_panel(schedule, &self.grid, self.t, dt)?;
        if let Some(p) = &panel {
            if p.direction != ShearDirection::XInY {
                return Err(CoreError::Geometry(format!(
                    "mode evolution needs the x-in-y frame; active phase shears {}",
                    p.direction.label()
                )));
            }
        }
        let before = self.l2_norm();
        self.half_diffusion(0.5 * dt);
        if let Some(p) = &panel {
            let a = self.alpha as f64;
            for (v, dphi) in self.values.iter_mut().zip(p.delta_phi(dt)) {
                *v *= Complex64::from_polar(1.0, -a * dphi);
            }
        }
        self.half_diffusion(0.5 * dt);
        self.t += dt;
        let after = self.l2_norm();
        if after > before * (1.0 + NORM_GROWTH_TOLERANCE) {
            return Err(CoreError::Instability {
                growth: after / before,
            });
        }
        Ok(())
    }
}

/// The full scalar on T³ advanced under a flow schedule.
///
/// Held spectrally; transport acts per transport-wavenumber lane so energy
/// never crosses between distinct carrier modes, and the k = 0 coefficient
/// (the mass) is preserved to roundoff.
#[derive(Debug, Clone)]
pub struct ScalarState {
    field: SpectralField,
    t: f64,
    amplitude: f64,
}

impl ScalarState {
    pub fn new(field: SpectralField, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0) {
            return Err(CoreError::Geometry(format!(
                "amplitude must be positive (got {amplitude}); use infinity for the inviscid limit"
            )));
        }
        field.check_finite()?;
        Ok(Self {
            field,
            t: 0.0,
            amplitude,
        })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn field_mut(&mut self) -> &mut SpectralField {
        &mut self.field
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn l2_norm(&self) -> f64 {
        self.field.l2_norm()
    }

    pub fn mean(&self) -> Complex64 {
        self.field.mean()
    }

    fn half_diffusion(&mut self, s: f64) {
        if !self.amplitude.is_finite() {
            return;
        }
        let inv_a = 1.0 / self.amplitude;
        let grid = self.field.grid().clone();
        let fac = |axis: usize| -> Vec<f64> {
            grid.wavenumbers(axis)
                .iter()
                .map(|&k| (-((k * k) as f64) * s * inv_a).exp())
                .collect()
        };
        let (fx, fy, fz) = (fac(0), fac(1), fac(2));
        Zip::indexed(self.field.data_mut()).for_each(|(i, j, l), v| {
            *v *= fx[i] * fy[j] * fz[l];
        });
    }

    /// Strang step in the same substep order as the mode sweep: the two
    /// agree mode-by-mode to roundoff.
    pub fn step(&mut self, schedule: &FlowSchedule, dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        if dt < 0.0 {
            return Err(CoreError::QuadratureStep {
                dt,
                cap: DEFAULT_QUADRATURE_CAP,
            });
        }
        let panel = drift_panel(schedule, self.field.grid(), self.t, dt)?;
        let before = self.field.l2_norm();
        self.half_diffusion(0.5 * dt);
        if let Some(p) = &panel {
            let grid = self.field.grid().clone();
            rotate_transport(self.field.data_mut(), &grid, p, dt);
        }
        self.half_diffusion(0.5 * dt);
        self.t += dt;
        let after = self.field.l2_norm();
        if after > before * (1.0 + NORM_GROWTH_TOLERANCE) {
            return Err(CoreError::Instability {
                growth: after / before,
            });
        }
        Ok(())
    }
}

/// Initial-data family for contraction measurements.
#[derive(Debug, Clone)]
pub struct ContractionOptions {
    pub n_y: usize,
    /// Band cutoff for the random profiles (n_y/4 by convention).
    pub cutoff: i64,
    pub seeds: Vec<u64>,
    /// Width of the bumps seeded at the profile's critical points.
    pub bump_sigma: f64,
    /// Lower bound on substeps per window (raised if the cap demands more).
    pub steps_per_window: usize,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            n_y: 256,
            cutoff: 64,
            seeds: vec![11, 12, 13, 14, 15],
            bump_sigma: 0.5,
            steps_per_window: 200,
        }
    }
}

fn contraction_states(
    schedule: &FlowSchedule,
    alpha: i64,
    gamma: i64,
    opts: &ContractionOptions,
) -> Result<Vec<ModeState>> {
    let a = schedule.amplitude();
    let mut states = Vec::new();
    for &seed in &opts.seeds {
        states.push(ModeState::random_band_limited(
            alpha,
            gamma,
            opts.n_y,
            opts.cutoff,
            a,
            seed,
        )?);
    }
    if let Some(loc) = schedule.phase_at(0.0)? {
        let profile = &schedule.phases()[loc.index].profile;
        for center in profile.critical_points() {
            states.push(ModeState::bump(
                alpha,
                gamma,
                opts.n_y,
                a,
                center,
                opts.bump_sigma,
            )?);
        }
    }
    Ok(states)
}

fn window_steps(window: f64, opts: &ContractionOptions) -> usize {
    let min_for_cap = (window / (0.9 * DEFAULT_QUADRATURE_CAP)).ceil() as usize;
    opts.steps_per_window.max(min_for_cap).max(1)
}

/// ‖f̂(t₀ + window)‖₂ / ‖f̂(t₀)‖₂ for one initial state.
pub fn contraction_factor(
    state: &ModeState,
    schedule: &FlowSchedule,
    window: f64,
    steps: usize,
) -> Result<f64> {
    let mut s = state.clone();
    let before = s.l2_norm();
    let dt = window / steps as f64;
    for _ in 0..steps {
        s.step(schedule, dt)?;
    }
    Ok(s.l2_norm() / before)
}

/// Worst-case L² contraction factor over one window, across random
/// band-limited profiles and bumps at the profile's critical points.
/// The window defaults to |α|^{−2/3}·A^{1/3}.
pub fn measure_contraction(
    schedule: &FlowSchedule,
    alpha: i64,
    gamma: i64,
    window: Option<f64>,
    opts: &ContractionOptions,
) -> Result<f64> {
    let a = schedule.amplitude();
    let window =
        window.unwrap_or_else(|| (alpha.abs() as f64).powf(-2.0 / 3.0) * a.powf(1.0 / 3.0));
    let steps = window_steps(window, opts);
    let mut worst = 0.0f64;
    for state in contraction_states(schedule, alpha, gamma, opts)? {
        worst = worst.max(contraction_factor(&state, schedule, window, steps)?);
    }
    Ok(worst)
}

/// Worst contraction factor per consecutive window, evolving each initial
/// state continuously: out[m] covers [m·window, (m+1)·window].
pub fn measure_contraction_windows(
    schedule: &FlowSchedule,
    alpha: i64,
    gamma: i64,
    n_windows: usize,
    window: Option<f64>,
    opts: &ContractionOptions,
) -> Result<Vec<f64>> {
    let a = schedule.amplitude();
    let window =
        window.unwrap_or_else(|| (alpha.abs() as f64).powf(-2.0 / 3.0) * a.powf(1.0 / 3.0));
    let steps = window_steps(window, opts);
    let dt = window / steps as f64;
    let mut worst = vec![0.0f64; n_windows];
    for state in contraction_states(schedule, alpha, gamma, opts)? {
        let mut s = state;
        for slot in worst.iter_mut() {
            let before = s.l2_norm();
            for _ in 0..steps {
                s.step(schedule, dt)?;
            }
            *slot = slot.max(s.l2_norm() / before);
        }
    }
    Ok(worst)
}

/// Record ‖f̂‖₂ every `stride` steps until `max_samples` samples exist or the
/// norm has dropped below e^{drop_floor} of its start.
pub fn mode_decay_samples(
    state: &ModeState,
    schedule: &FlowSchedule,
    dt: f64,
    stride: usize,
    max_samples: usize,
    drop_floor: f64,
) -> Result<Vec<DecaySample>> {
    assert!(stride >= 1 && max_samples >= 2, "degenerate sampling plan");
    let mut s = state.clone();
    let v0 = s.l2_norm();
    let mut samples = vec![DecaySample { t: s.t(), value: v0 }];
    for _ in 1..max_samples {
        for _ in 0..stride {
            s.step(schedule, dt)?;
        }
        let v = s.l2_norm();
        samples.push(DecaySample { t: s.t(), value: v });
        if (v / v0).ln() < drop_floor {
            break;
        }
    }
    Ok(samples)
}

/// One amplitude's run plan inside a rate sweep.
#[derive(Debug, Clone)]
pub struct EdRunSpec {
    pub amplitude: f64,
    pub schedule: FlowSchedule,
    pub dt: f64,
    /// Steps between norm samples.
    pub stride: usize,
    pub max_samples: usize,
    pub select: WindowSelect,
}

/// Fitted λ at one amplitude: the replicate average and the per-seed fits.
#[derive(Debug, Clone)]
pub struct EdSweepPoint {
    pub amplitude: f64,
    pub lambda: f64,
    pub replicates: Vec<WindowFit>,
}

/// Power law λ(A) ≈ e^{intercept}·A^{exponent} over a sweep.
#[derive(Debug, Clone)]
pub struct EdExponent {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<EdSweepPoint>,
}

/// Fit the decay-rate exponent: λ per amplitude from the log-norm window
/// fit (averaged over replicate seeds), then log λ regressed on log A.
pub fn fit_ed_exponent(
    runs: &[EdRunSpec],
    alpha: i64,
    gamma: i64,
    n_y: usize,
    cutoff: i64,
    seeds: &[u64],
) -> Result<EdExponent> {
    if runs.len() < 4 {
        return Err(CoreError::Protocol(format!(
            "rate sweep needs ≥ 4 amplitudes, got {}",
            runs.len()
        )));
    }
    let (lo, hi) = runs.iter().fold((f64::MAX, 0.0f64), |(lo, hi), r| {
        (lo.min(r.amplitude), hi.max(r.amplitude))
    });
    if hi / lo < 99.99 {
        return Err(CoreError::Protocol(format!(
            "rate sweep must span ≥ 2 decades of amplitude (got {lo:.3e}..{hi:.3e})"
        )));
    }
    if seeds.is_empty() {
        return Err(CoreError::Protocol("rate sweep needs ≥ 1 seed".into()));
    }
    let mut points = Vec::with_capacity(runs.len());
    for run in runs {
        let mut fits = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let state =
                ModeState::random_band_limited(alpha, gamma, n_y, cutoff, run.amplitude, seed)?;
            let samples =
                mode_decay_samples(&state, &run.schedule, run.dt, run.stride, run.max_samples, -13.5)?;
            fits.push(fit_decay_window(&samples, run.select)?);
        }
        let lambda = fits.iter().map(|f| f.lambda).sum::<f64>() / fits.len() as f64;
        points.push(EdSweepPoint {
            amplitude: run.amplitude,
            lambda,
            replicates: fits,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.amplitude.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.lambda.ln()).collect();
    let (exponent, intercept, r2) = fit_log_slope(&xs, &ys);
    Ok(EdExponent {
        exponent,
        intercept,
        r2,
        points,
    })
}
