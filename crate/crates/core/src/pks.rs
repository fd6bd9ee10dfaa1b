//! Advection-aggregation solver for the cell/chemical pair
//!
//!   ∂_t n + u·∇n = (1/A)Δn − (1/A)∇·(n∇𝔠),
//!   ∂_t 𝔠 + u·∇𝔠 = (1/A)Δ𝔠 + (1/A)(n − n̄),
//!
//! advanced by a palindromic split step D(h/2) Θ(h/2) N(h) Θ(h/2) D(h/2):
//! `D` solves diffusion plus the n→𝔠 source exactly per mode, `Θ` is the
//! exact shear rotation, and `N` integrates the aggregation flux with a Heun
//! stage whose embedded error drives the adaptive controller. Only `N`
//! dealiases, so the state stays full-band and the high-k monitor sees
//! pile-up instead of having it projected away.

use crate::checkpoint::{self, CheckpointMeta};
use crate::field::{RealField, SpectralField};
use crate::gamma::GammaContext;
use crate::scalar::{drift_panel, rotate_transport, DriftPanel};
use crate::schedule::{FlowSchedule, ShearDirection};
use crate::split::ChemicalSplit;
use crate::{CoreError, Result};
use ndarray::{Array3, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

/// Monitor thresholds; all are checked against the construction-time state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PksOptions {
    /// Blow-up when ‖n‖_∞ exceeds this multiple of its initial value.
    pub linf_factor: f64,
    /// Blow-up when this fraction of cell energy sits above the 2/3 cutoff.
    pub highk_fraction: f64,
    /// Positivity slack: min(n) ≥ −tol_pos·max(n) is monitored, not enforced.
    pub tol_pos: f64,
}

impl Default for PksOptions {
    fn default() -> Self {
        Self {
            linf_factor: 1e3,
            highk_fraction: 0.1,
            tol_pos: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupCause {
    LinfThreshold,
    HighkEnergyFraction,
    DtCollapse,
    NonFinite,
}

impl BlowupCause {
    pub fn label(&self) -> &'static str {
        match self {
            BlowupCause::LinfThreshold => "linf_threshold",
            BlowupCause::HighkEnergyFraction => "highk_energy_fraction",
            BlowupCause::DtCollapse => "dt_collapse",
            BlowupCause::NonFinite => "nonfinite",
        }
    }
}

/// Latching blow-up record: once triggered, later checks never clear or
/// overwrite the first trigger.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BlowupVerdict {
    trigger: Option<(f64, BlowupCause)>,
}

impl BlowupVerdict {
    pub fn triggered(&self) -> bool {
        self.trigger.is_some()
    }

    pub fn time(&self) -> Option<f64> {
        self.trigger.map(|(t, _)| t)
    }

    pub fn cause(&self) -> Option<BlowupCause> {
        self.trigger.map(|(_, c)| c)
    }

    fn latch(&mut self, t: f64, cause: BlowupCause) {
        if self.trigger.is_none() {
            self.trigger = Some((t, cause));
        }
    }
}

/// PI step-size controller on the Heun error estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepController {
    tol: f64,
    dt_min: f64,
    dt_max: f64,
    safety: f64,
    dt: f64,
    err_prev: f64,
}

impl StepController {
    pub fn new(dt0: f64) -> Self {
        let tol = 1e-5;
        Self {
            tol,
            dt_min: 1e-9,
            dt_max: 0.5,
            safety: 0.9,
            dt: dt0,
            err_prev: tol,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self.err_prev = tol;
        self
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn with_dt_min(mut self, dt_min: f64) -> Self {
        self.dt_min = dt_min;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn dt_min(&self) -> f64 {
        self.dt_min
    }

    fn accept(&mut self, h_used: f64, err: f64) {
        let e = err.max(1e-300);
        let fac = self.safety * (self.tol / e).powf(0.25) * (self.err_prev / e).powf(0.1);
        self.dt = (h_used * fac.clamp(0.2, 2.5)).min(self.dt_max);
        self.err_prev = e;
    }

    fn reject(&mut self, h_used: f64, err: f64) {
        let e = err.max(1e-300);
        let fac = (self.safety * (self.tol / e).powf(0.25)).clamp(0.1, 0.7);
        self.dt = h_used * fac;
    }
}

/// Cell density and mean-zero chemical field in spectral form, plus the
/// frozen conservation baselines and the latching blow-up record.
#[derive(Debug, Clone)]
pub struct PksState {
    n: SpectralField,
    c: SpectralField,
    t: f64,
    amplitude: f64,
    mass0: f64,
    linf0: f64,
    verdict: BlowupVerdict,
    opts: PksOptions,
}

impl PksState {
    /// The chemical mean is a gauge choice and is removed exactly here; the
    /// k = 0 coefficient is never touched again by any substep.
    pub fn new(n: RealField, c: RealField, amplitude: f64, opts: PksOptions) -> Result<Self> {
        n.grid().same_as(c.grid())?;
        if !amplitude.is_finite() || amplitude <= 0.0 {
            return Err(CoreError::Geometry(
                "amplitude must be finite and positive".into(),
            ));
        }
        let mass0 = n.mean() * n.grid().point_weight() * n.grid().total_points() as f64;
        if !(mass0 > 0.0) {
            return Err(CoreError::Geometry("cell mass must be positive".into()));
        }
        let linf0 = n.linf_norm();
        let n = n.transform()?;
        let mut c = c.transform()?;
        c.data_mut()[[0, 0, 0]] = Complex64::new(0.0, 0.0);
        Ok(Self {
            n,
            c,
            t: 0.0,
            amplitude,
            mass0,
            linf0,
            verdict: BlowupVerdict::default(),
            opts,
        })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn n(&self) -> &SpectralField {
        &self.n
    }

    pub fn c(&self) -> &SpectralField {
        &self.c
    }

    pub fn n_real(&self) -> RealField {
        self.n.inverse()
    }

    pub fn c_real(&self) -> RealField {
        self.c.inverse()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn opts(&self) -> &PksOptions {
        &self.opts
    }

    pub fn verdict(&self) -> BlowupVerdict {
        self.verdict
    }

    /// ∫ n over the torus.
    pub fn mass(&self) -> f64 {
        let grid = self.n.grid();
        self.n.mean().re * grid.point_weight() * grid.total_points() as f64
    }

    pub fn min_density(&self) -> f64 {
        self.n_real().min()
    }

    /// Shear-direction averages of the cell and chemical fields: the modes
    /// constant along the transport axis, which the rotation preserves
    /// bitwise.
    pub fn x_average_system(&self, direction: ShearDirection) -> (SpectralField, SpectralField) {
        let ta = direction.transport_axis();
        (
            crate::diagnostics::decompose(&self.n, ta).average,
            crate::diagnostics::decompose(&self.c, ta).average,
        )
    }

    /// Exact coupled diffusion/source half-step of width `s`.
    fn diffusion_half(&mut self, s: f64, split: Option<&mut ChemicalSplit>) {
        let grid = self.n.grid().clone();
        let inv_a = 1.0 / self.amplitude;
        let decay = |axis: usize| -> Vec<f64> {
            grid.wavenumbers(axis)
                .iter()
                .map(|&k| (-((k * k) as f64) * s * inv_a).exp())
                .collect()
        };
        let (fx, fy, fz) = (decay(0), decay(1), decay(2));
        let s_over_a = s * inv_a;
        if let Some(split) = split {
            split.half_diffusion(&fx, &fy, &fz, s_over_a, &self.n);
        }
        Zip::indexed(self.n.data_mut())
            .and(self.c.data_mut())
            .for_each(|(i, j, l), nv, cv| {
                let e = fx[i] * fy[j] * fz[l];
                let n0 = *nv;
                *nv = n0 * e;
                if (i, j, l) != (0, 0, 0) {
                    *cv = (*cv + n0 * s_over_a) * e;
                }
            });
    }

    fn rotate_half(&mut self, panel: &DriftPanel, s: f64, split: Option<&mut ChemicalSplit>) {
        let grid = self.n.grid().clone();
        rotate_transport(self.n.data_mut(), &grid, panel, s);
        rotate_transport(self.c.data_mut(), &grid, panel, s);
        if let Some(split) = split {
            split.rotate(&grid, panel, s);
        }
    }

    /// −(1/A)·dealias ∇·(dealias(n)·∇dealias(𝔠)); the k = 0 coefficient is
    /// exactly zero because every term carries an ik factor.
    fn aggregation_rhs(&self, n: &SpectralField) -> Result<SpectralField> {
        let grid = n.grid().clone();
        let nd = n.dealias();
        let cd = self.c.dealias();
        let n_real = nd.inverse_complex();
        let mut div: Array3<Complex64> = Array3::zeros(grid.dims());
        for axis in 0..3 {
            if grid.n(axis) == 1 {
                continue;
            }
            let grad = cd.derivative(axis, 1)?;
            let mut flux = grad.inverse_complex();
            Zip::from(&mut flux).and(&n_real).for_each(|f, nr| *f *= *nr);
            crate::fft::engine().forward3(&mut flux);
            let dflux = SpectralField::new(grid.clone(), flux)?.derivative(axis, 1)?;
            Zip::from(&mut div)
                .and(dflux.data())
                .for_each(|d, s| *d += *s);
        }
        let mut out = SpectralField::new(grid, div)?;
        out.dealias_inplace();
        let scale = -1.0 / self.amplitude;
        Zip::from(out.data_mut()).for_each(|v| *v *= scale);
        Ok(out)
    }

    /// Heun stage for the aggregation flux; returns the embedded error
    /// estimate relative to the updated cell norm.
    fn heun(&mut self, h: f64) -> Result<f64> {
        let k1 = self.aggregation_rhs(&self.n)?;
        let mut mid = self.n.clone();
        Zip::from(mid.data_mut())
            .and(k1.data())
            .for_each(|m, k| *m += *k * h);
        let k2 = self.aggregation_rhs(&mid)?;
        let mut diff2 = 0.0;
        Zip::from(self.n.data_mut())
            .and(k1.data())
            .and(k2.data())
            .for_each(|n, a, b| {
                *n += (*a + *b) * (0.5 * h);
                diff2 += (*b - *a).norm_sqr();
            });
        let grid = self.n.grid();
        let scale = grid.point_weight() / grid.total_points() as f64;
        let err_abs = 0.5 * h * (diff2 * scale).sqrt();
        Ok(err_abs / (1e-12 + self.n.l2_norm()))
    }

    fn assert_conserved(&self) -> Result<()> {
        let mass = self.mass();
        if !mass.is_finite() {
            return Err(CoreError::NonFinite("cell mass"));
        }
        let drift = (mass - self.mass0).abs() / self.mass0;
        if drift > 1e-8 {
            return Err(CoreError::Conservation(format!(
                "cell mass drifted by {drift:e} (relative)"
            )));
        }
        let mean_c = self.c.mean().norm();
        if !(mean_c < 1e-10) {
            return Err(CoreError::Conservation(format!(
                "chemical mean grew to {mean_c:e}"
            )));
        }
        Ok(())
    }

    fn step_once(
        &mut self,
        schedule: &FlowSchedule,
        h: f64,
        mut split: Option<&mut ChemicalSplit>,
    ) -> Result<f64> {
        if h == 0.0 {
            return Ok(0.0);
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(CoreError::QuadratureStep { dt: h, cap: 0.0 });
        }
        let grid = self.n.grid().clone();
        let t0 = self.t;
        let hm = 0.5 * h;
        let panel1 = drift_panel(schedule, &grid, t0, hm)?;
        let panel2 = drift_panel(schedule, &grid, t0 + hm, hm)?;
        if let (Some(split), Some(panel)) = (&split, &panel1) {
            split.guard_direction(panel.direction)?;
        }
        self.diffusion_half(hm, split.as_deref_mut());
        if let Some(panel) = &panel1 {
            self.rotate_half(panel, hm, split.as_deref_mut());
        }
        let err = self.heun(h)?;
        if let Some(panel) = &panel2 {
            self.rotate_half(panel, hm, split.as_deref_mut());
        }
        self.diffusion_half(hm, split.as_deref_mut());
        self.t = t0 + h;
        self.assert_conserved()?;
        Ok(err)
    }

    /// One fixed step of width `dt`. The optional split and Γ context are
    /// advanced through exactly the same substep times and quadrature panels
    /// as the state. Returns the embedded aggregation error estimate.
    pub fn step(
        &mut self,
        schedule: &FlowSchedule,
        dt: f64,
        mut split: Option<&mut ChemicalSplit>,
        mut ctx: Option<&mut GammaContext>,
    ) -> Result<f64> {
        let t0 = self.t;
        let est = self.step_once(schedule, dt, split.as_deref_mut())?;
        if let Some(ctx) = ctx.as_deref_mut() {
            ctx.accumulate_b(t0 + 0.5 * dt)?;
            ctx.accumulate_b(self.t)?;
        }
        Ok(est)
    }

    /// Check the blow-up monitors against the current fields and latch the
    /// first trigger. Safe to call repeatedly; the verdict never regresses.
    pub fn detect_blowup(&mut self) -> BlowupVerdict {
        if self.verdict.triggered() {
            return self.verdict;
        }
        if self.n.check_finite().is_err() || self.c.check_finite().is_err() {
            self.verdict.latch(self.t, BlowupCause::NonFinite);
            return self.verdict;
        }
        let linf = self.n_real().linf_norm();
        if linf > self.opts.linf_factor * self.linf0 {
            self.verdict.latch(self.t, BlowupCause::LinfThreshold);
            return self.verdict;
        }
        let total = self.n.l2_norm().powi(2);
        if total > 0.0 {
            let low = self.n.dealias().l2_norm().powi(2);
            if 1.0 - low / total > self.opts.highk_fraction {
                self.verdict.latch(self.t, BlowupCause::HighkEnergyFraction);
            }
        }
        self.verdict
    }

    /// Adaptive advance to `t_end` (or to the first blow-up trigger).
    ///
    /// Steps are clamped to phase switching times and to `t_end`; rejected
    /// attempts never touch the state, the split, or the Γ context. A
    /// controller collapse below its dt floor, or non-finite values from a
    /// genuine collapse, latch the verdict and return cleanly. Returns the
    /// number of accepted steps.
    pub fn advance(
        &mut self,
        schedule: &FlowSchedule,
        t_end: f64,
        ctl: &mut StepController,
        mut split: Option<&mut ChemicalSplit>,
        mut ctx: Option<&mut GammaContext>,
    ) -> Result<u64> {
        let slack = |t: f64| 1e-12 * t.abs().max(1.0);
        let mut accepted = 0u64;
        while self.t < t_end - slack(t_end) {
            if self.verdict.triggered() {
                return Ok(accepted);
            }
            let t0 = self.t;
            let mut limit = t_end - t0;
            if let Some(loc) = schedule.phase_at(t0)? {
                let end = loc.absolute_start + schedule.phases()[loc.index].duration;
                limit = limit.min(end - t0);
            }
            let mut h = ctl.dt().min(limit);
            if limit <= ctl.dt() * 1.05 {
                h = limit;
            }
            let mut cand = self.clone();
            let mut cand_split = split.as_deref().map(|s| s.clone());
            match cand.step_once(schedule, h, cand_split.as_mut()) {
                Err(CoreError::NonFinite(_)) => {
                    self.verdict.latch(t0, BlowupCause::NonFinite);
                    return Ok(accepted);
                }
                Err(e) => return Err(e),
                Ok(err) => {
                    if err <= ctl.tol() {
                        *self = cand;
                        if let (Some(s), Some(cs)) = (split.as_deref_mut(), cand_split) {
                            *s = cs;
                        }
                        if let Some(c) = ctx.as_deref_mut() {
                            c.accumulate_b(t0 + 0.5 * h)?;
                            c.accumulate_b(t0 + h)?;
                        }
                        ctl.accept(h, err);
                        accepted += 1;
                        self.detect_blowup();
                        if self.verdict.triggered() {
                            return Ok(accepted);
                        }
                    } else {
                        ctl.reject(h, err);
                        if ctl.dt() < ctl.dt_min() {
                            self.verdict.latch(t0, BlowupCause::DtCollapse);
                            return Ok(accepted);
                        }
                    }
                }
            }
        }
        Ok(accepted)
    }

    /// Write `n`, `c`, and the run metadata into `dir`; resumes are bitwise.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>, step: u64) -> Result<CheckpointMeta> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        checkpoint::save_spectral(dir.join("n.fld"), &self.n)?;
        checkpoint::save_spectral(dir.join("c.fld"), &self.c)?;
        let mut meta = CheckpointMeta::new(self.t, step);
        meta.extra.insert("amplitude".into(), json!(self.amplitude));
        meta.extra.insert("mass0".into(), json!(self.mass0));
        meta.extra.insert("linf0".into(), json!(self.linf0));
        meta.extra
            .insert("verdict".into(), serde_json::to_value(self.verdict).unwrap());
        meta.save(dir.join("meta.json"))?;
        Ok(meta)
    }

    pub fn load_checkpoint(dir: impl AsRef<Path>, opts: PksOptions) -> Result<(Self, CheckpointMeta)> {
        let dir = dir.as_ref();
        let meta = CheckpointMeta::load(dir.join("meta.json"))?;
        let n = checkpoint::load_spectral(dir.join("n.fld"))?;
        let c = checkpoint::load_spectral(dir.join("c.fld"))?;
        n.grid().same_as(c.grid())?;
        let number = |key: &str| -> Result<f64> {
            meta.extra
                .get(key)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| CoreError::Checkpoint(format!("missing {key} in metadata")))
        };
        let verdict = match meta.extra.get("verdict") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CoreError::Checkpoint(format!("bad verdict: {e}")))?,
            None => BlowupVerdict::default(),
        };
        let state = Self {
            n,
            c,
            t: meta.time,
            amplitude: number("amplitude")?,
            mass0: number("mass0")?,
            linf0: number("linf0")?,
            verdict,
            opts,
        };
        Ok((state, meta))
    }
}
