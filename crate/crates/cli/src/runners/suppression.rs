//! Blow-up suppression experiment.
//!
//! A concentrated cell blob that collapses under the quiescent baseline is
//! driven through one full pass of the alternating shear program. The run
//! bisects the flow amplitude to the threshold where the pass completes
//! untriggered, then repeats the threshold run fully instrumented: remainder
//! norms, Fourier-region energies, the gliding Z-norm, and the layered
//! functional ledger with its recapture from the full-horizon weights to the
//! per-window weights at T_h inside each phase.
//!
//! Sampling, recapture, and checkpoint times form one fixed clamp list per
//! amplitude. Probe runs drive the solver over the same clamps, so the
//! bisected trajectory and the instrumented trajectory are the same numbers.

use super::{artifacts, provenance, Assertion, RunArtifacts};
use crate::config::RunConfig;
use crate::csvout::CsvFile;
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use shearlab_core::checkpoint::{load_spectral, save_spectral};
use shearlab_core::schedule::DEFAULT_M;
use shearlab_core::{
    decompose, fit_decay_window, functional_f, mode_decay_samples, region_energies, z_norm,
    ChemicalSplit, FlowSchedule, FunctionalPreset, GammaContext, Grid, ModeState, PksOptions,
    PksState, RealField, ShearDirection, SpectralField, StepController, WindowSelect, VERSION,
};
use std::path::Path;

/// Quadrature panel cap for rebuilding Γ contexts at sample times.
const CTX_PANEL: f64 = 0.4;

/// Amplitudes below this cannot order T_h before the phase end.
const BISECT_FLOOR: f64 = 2.0;

const COLUMNS: [&str; 10] = [
    "t",
    "l2_n_remainder",
    "l2_c_remainder",
    "R1",
    "R2",
    "R3",
    "Z_M",
    "F",
    "H_or_L",
    "Phi",
];

/// Deterministic time skeleton of one pass at a fixed amplitude: phase
/// starts, the per-phase ledger recapture offset T_h, and the sample count.
/// Durations are read off the schedule so clamps land exactly on the ends
/// the solver itself clamps to.
#[derive(Debug, Clone)]
struct Geometry {
    d: f64,
    t_h: f64,
    starts: [f64; 3],
    horizon: f64,
    samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Sample,
    Recapture,
    PhaseEnd,
}

impl Geometry {
    fn new(cfg: &RunConfig, a: f64, alternating: &FlowSchedule) -> Self {
        let d = alternating
            .phases()
            .first()
            .map(|p| p.duration)
            .filter(|d| d.is_finite())
            .unwrap_or_else(|| a.powf(1.0 / 3.0 + cfg.zeta()));
        let starts = [0.0, d, d + d];
        Self {
            d,
            t_h: a.powf(1.0 / 3.0 + 0.5 * cfg.zeta()),
            starts,
            horizon: (d + d) + d,
            samples: cfg.run.samples_per_phase.max(2),
        }
    }

    fn end(&self, k: usize) -> f64 {
        if k < 2 {
            self.starts[k + 1]
        } else {
            self.horizon
        }
    }

    fn clamps(&self, k: usize) -> Vec<(f64, Mark)> {
        let start = self.starts[k];
        let ds = self.d / self.samples as f64;
        let mut v: Vec<(f64, Mark)> = (1..self.samples)
            .map(|j| (start + ds * j as f64, Mark::Sample))
            .collect();
        let th = start + self.t_h;
        let pos = v.partition_point(|(t, _)| *t < th);
        if pos < v.len() && (v[pos].0 - th).abs() < 1e-9 * th.max(1.0) {
            v[pos].1 = Mark::Recapture;
        } else {
            v.insert(pos, (th, Mark::Recapture));
        }
        v.push((self.end(k), Mark::PhaseEnd));
        v
    }
}

/// Running gate measurements for the phase-one damping assertions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct GateLedger {
    z0: f64,
    r1_0: f64,
    z_end: Option<f64>,
    r1_end: Option<f64>,
}

/// The active split and which weight preset it belongs to.
#[derive(Debug, Clone)]
struct Frame {
    split: ChemicalSplit,
    late: bool,
}

#[derive(Debug)]
struct DriveState {
    state: PksState,
    ctl: StepController,
    frame: Frame,
    phase: usize,
    accepted: u64,
    since_ckpt: u64,
    gates: GateLedger,
    max_residual: f64,
}

#[derive(Debug)]
struct DriveOutcome {
    completed: bool,
    final_t: f64,
    cause: Option<String>,
    trigger_t: Option<f64>,
}

/// Mid-run metadata beside the field checkpoints; everything needed to
/// rebuild the drive loop bit-exactly.
#[derive(Debug, Serialize, Deserialize)]
struct HarnessFile {
    version: String,
    config_hash: String,
    amplitude: f64,
    delta_z: f64,
    phase: usize,
    late: bool,
    accepted: u64,
    split_t_r: f64,
    split_direction: ShearDirection,
    ctl: StepController,
    gates: GateLedger,
    max_residual: f64,
}

struct CkptPlan {
    every: u64,
    config_hash: String,
}

struct Harness<'a> {
    cfg: &'a RunConfig,
    schedule: FlowSchedule,
    geom: Geometry,
    delta_z: f64,
    z_order: usize,
    g: f64,
    a: f64,
}

/// Rebuild a Γ context anchored at `t_r` and accumulated to exactly `t`
/// with fixed panels. B is a pure time integral of the shear profile, so
/// this is independent of how the solver reached `t`.
fn ctx_to(grid: &Grid, schedule: &FlowSchedule, t_r: f64, t: f64, m: usize) -> Result<GammaContext> {
    let mut ctx = GammaContext::new(grid.clone(), schedule, t_r, m)?;
    let span = t - t_r;
    if span > 0.0 {
        let n = ((span / CTX_PANEL).ceil() as usize).max(1);
        for i in 1..n {
            ctx.accumulate_b(t_r + span * i as f64 / n as f64)?;
        }
        ctx.accumulate_b(t)?;
    }
    Ok(ctx)
}

/// Freeze the chemical remainder in an explicitly named frame. Equivalent to
/// [`ChemicalSplit::capture`] but with the anchor time and direction pinned
/// to the nominal clamp values instead of re-derived from the state.
fn capture_frame(state: &PksState, direction: ShearDirection, t_r: f64) -> Result<ChemicalSplit> {
    let snapshot = decompose(state.c(), direction.transport_axis()).remainder;
    let zeros = SpectralField::zeros(snapshot.grid().clone());
    Ok(ChemicalSplit::from_parts(
        t_r,
        direction,
        snapshot.clone(),
        snapshot,
        zeros,
    )?)
}

/// Mean-anchored Gaussian blob with a positive floor.
fn concentrated_density(grid: &Grid, height: f64, sigma: f64, floor: f64) -> RealField {
    let inv = 1.0 / (2.0 * sigma * sigma);
    RealField::from_fn(grid.clone(), |x, y, z| {
        floor + height * (-(x * x + y * y + z * z) * inv).exp()
    })
}

/// Chemical field in instantaneous balance with the density: ĉ = n̂ / |k|²
/// away from the zero mode.
fn poisson_chemical(n0: &RealField) -> Result<RealField> {
    let mut nhat = n0.transform()?;
    let grid = nhat.grid().clone();
    let kx = grid.wavenumbers(0);
    let ky = grid.wavenumbers(1);
    let kz = grid.wavenumbers(2);
    ndarray::Zip::indexed(nhat.data_mut()).for_each(|(i, j, l), v| {
        let k2 = (kx[i] * kx[i] + ky[j] * ky[j] + kz[l] * kz[l]) as f64;
        if k2 == 0.0 {
            *v = num_complex::Complex64::new(0.0, 0.0);
        } else {
            *v /= k2;
        }
    });
    Ok(nhat.inverse())
}

fn initial_state(cfg: &RunConfig, grid: &Grid, a: f64) -> Result<PksState> {
    if cfg.initial.recipe != "concentrated" {
        bail!(
            "suppression runs need the concentrated recipe, config says {:?}",
            cfg.initial.recipe
        );
    }
    let n0 = concentrated_density(grid, cfg.initial.height, cfg.initial.sigma, cfg.initial.floor);
    let c0 = poisson_chemical(&n0)?;
    Ok(PksState::new(n0, c0, a, PksOptions::default())?)
}

fn controller(cfg: &RunConfig) -> StepController {
    StepController::new(cfg.run.dt_init)
        .with_tol(cfg.run.tol)
        .with_dt_max(cfg.run.dt_max)
}

impl Harness<'_> {
    fn direction(&self, k: usize) -> ShearDirection {
        let phases = self.schedule.phases();
        if phases.is_empty() {
            ShearDirection::XInY
        } else {
            phases[k % phases.len()].direction
        }
    }

    /// Write one CSV row at the current state; returns (Z, R1) for the gates.
    fn sample(&self, dsx: &mut DriveState, csv: &mut CsvFile, k: usize) -> Result<(f64, f64)> {
        let st = &dsx.state;
        let t = st.t();
        let ta = dsx.frame.split.direction().transport_axis();
        let rem_n = decompose(st.n(), ta).remainder.l2_norm();
        let dec_c = decompose(st.c(), ta);
        let rem_c = dec_c.remainder.l2_norm();
        let reg = region_energies(st.c());
        let grid = st.n().grid();
        let ctx_phase = ctx_to(grid, &self.schedule, self.geom.starts[k], t, 2)?;
        let z = z_norm(&dec_c.remainder, &ctx_phase, self.z_order, self.g)?;
        let m_base = self.z_order - 1;
        let (f_total, phi) = if dsx.frame.late {
            let ctx_late = ctx_to(grid, &self.schedule, dsx.frame.split.t_r(), t, 2)?;
            let params = FunctionalPreset::L.params(m_base, self.g, self.a, self.delta_z);
            let f = functional_f(st, &dsx.frame.split, &ctx_late, &params)?;
            (f.total, ctx_late.phi())
        } else {
            let params = FunctionalPreset::H.params(m_base, self.g, self.a, self.delta_z);
            let f = functional_f(st, &dsx.frame.split, &ctx_phase, &params)?;
            (f.total, ctx_phase.phi())
        };
        dsx.max_residual = dsx.max_residual.max(dsx.frame.split.identity_residual(st));
        csv.row(&[
            t,
            rem_n,
            rem_c,
            reg.r1,
            reg.r2,
            reg.r3,
            z,
            f_total,
            if dsx.frame.late { 1.0 } else { 0.0 },
            phi,
        ])?;
        Ok((z, reg.r1))
    }

    /// Fresh drive state at t = 0 with the initial sample row written.
    fn boot(&self, grid: &Grid, csv: &mut CsvFile) -> Result<DriveState> {
        let state = initial_state(self.cfg, grid, self.a)?;
        let split = capture_frame(&state, self.direction(0), 0.0)?;
        let mut dsx = DriveState {
            state,
            ctl: controller(self.cfg),
            frame: Frame { split, late: false },
            phase: 0,
            accepted: 0,
            since_ckpt: 0,
            gates: GateLedger::default(),
            max_residual: 0.0,
        };
        let (z, r1) = self.sample(&mut dsx, csv, 0)?;
        dsx.gates.z0 = z;
        dsx.gates.r1_0 = r1;
        Ok(dsx)
    }

    /// Drive the clamp list from the drive state's position to the horizon,
    /// sampling at every clamp and recapturing the ledger frame at T_h and
    /// at phase switches.
    fn drive(
        &self,
        dsx: &mut DriveState,
        csv: &mut CsvFile,
        ckpt: Option<&CkptPlan>,
        out: &Path,
    ) -> Result<DriveOutcome> {
        let slack = |t: f64| 1e-12 * t.abs().max(1.0);
        'phases: for k in dsx.phase..3 {
            dsx.phase = k;
            for (t_c, mark) in self.geom.clamps(k) {
                if t_c <= dsx.state.t() + slack(t_c) {
                    continue;
                }
                let n = dsx.state.advance(
                    &self.schedule,
                    t_c,
                    &mut dsx.ctl,
                    Some(&mut dsx.frame.split),
                    None,
                )?;
                dsx.accepted += n;
                dsx.since_ckpt += n;
                if dsx.state.verdict().triggered() {
                    break 'phases;
                }
                if mark == Mark::Recapture {
                    dsx.frame = Frame {
                        split: capture_frame(&dsx.state, self.direction(k), t_c)?,
                        late: true,
                    };
                }
                let (z, r1) = self.sample(dsx, csv, k)?;
                if mark == Mark::PhaseEnd && k == 0 {
                    dsx.gates.z_end = Some(z);
                    dsx.gates.r1_end = Some(r1);
                }
                if let Some(plan) = ckpt {
                    if plan.every > 0 && dsx.since_ckpt >= plan.every {
                        let dir = out.join(format!("ckpt_{:08}", dsx.accepted));
                        self.write_checkpoint(&dir, dsx, plan)?;
                        dsx.since_ckpt = 0;
                    }
                }
                if mark == Mark::PhaseEnd && k < 2 {
                    dsx.frame = Frame {
                        split: capture_frame(&dsx.state, self.direction(k + 1), t_c)?,
                        late: false,
                    };
                }
            }
        }
        let verdict = dsx.state.verdict();
        Ok(DriveOutcome {
            completed: !verdict.triggered()
                && dsx.state.t() >= self.geom.horizon - slack(self.geom.horizon),
            final_t: dsx.state.t(),
            cause: verdict.cause().map(|c| c.label().to_string()),
            trigger_t: verdict.time(),
        })
    }

    fn write_checkpoint(&self, dir: &Path, dsx: &DriveState, plan: &CkptPlan) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        dsx.state.save_checkpoint(dir, dsx.accepted)?;
        save_spectral(dir.join("split_carried.fld"), dsx.frame.split.carried())?;
        save_spectral(dir.join("split_d.fld"), dsx.frame.split.d())?;
        save_spectral(dir.join("split_fresh.fld"), dsx.frame.split.c_fresh())?;
        let h = HarnessFile {
            version: VERSION.to_string(),
            config_hash: plan.config_hash.clone(),
            amplitude: self.a,
            delta_z: self.delta_z,
            phase: dsx.phase,
            late: dsx.frame.late,
            accepted: dsx.accepted,
            split_t_r: dsx.frame.split.t_r(),
            split_direction: dsx.frame.split.direction(),
            ctl: dsx.ctl,
            gates: dsx.gates.clone(),
            max_residual: dsx.max_residual,
        };
        std::fs::write(dir.join("harness.json"), serde_json::to_string_pretty(&h)?)?;
        Ok(())
    }

    /// Uninstrumented run over the same clamps; stops at the first trigger.
    fn probe(&self, grid: &Grid) -> Result<(bool, f64, Option<String>)> {
        let mut state = initial_state(self.cfg, grid, self.a)?;
        let mut ctl = controller(self.cfg);
        'phases: for k in 0..3 {
            for (t_c, _) in self.geom.clamps(k) {
                state.advance(&self.schedule, t_c, &mut ctl, None, None)?;
                if state.verdict().triggered() {
                    break 'phases;
                }
            }
        }
        let v = state.verdict();
        Ok((
            !v.triggered(),
            state.t(),
            v.cause().map(|c| c.label().to_string()),
        ))
    }
}

/// Linear decay rate of a single carrier mode under the rewound flow at the
/// same amplitude; fills the carried-block damping slot of the functionals.
fn measure_delta_z(cfg: &RunConfig, a: f64) -> Result<f64> {
    let schedule = cfg.schedule("rewound", a)?;
    let period = 2.0 * a.cbrt();
    let state = ModeState::random_band_limited(1, 0, 128, 32, a, cfg.seed)?;
    let samples = mode_decay_samples(&state, &schedule, period / 400.0, 400, 7, f64::NEG_INFINITY)?;
    let fit = fit_decay_window(&samples, WindowSelect::Pinned { start: 1, end: 4 })?;
    Ok((-fit.lambda).max(0.0))
}

pub fn run_suppression(cfg: &RunConfig, out: &Path) -> Result<RunArtifacts> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let prov = provenance(cfg);
    let [nx, ny, nz] = cfg.grid.dims;
    let grid = Grid::new(nx, ny, nz)?;
    let z_order = cfg.diagnostics.z_m.unwrap_or(DEFAULT_M + 1);
    let g = cfg.diagnostics.g;

    let probe_at = |a: f64, rows: &mut Vec<(f64, bool, f64)>| -> Result<bool> {
        let schedule = cfg.schedule(&cfg.flow.preset, a)?;
        let geom = Geometry::new(cfg, a, &schedule);
        let h = Harness {
            cfg,
            schedule,
            geom,
            delta_z: 0.0,
            z_order,
            g,
            a,
        };
        let (completed, t, _) = h.probe(&grid)?;
        rows.push((a, completed, t));
        Ok(completed)
    };

    // Bracket the completion threshold by doubling/halving, then refine by
    // log-midpoint bisection; A* is the completing endpoint.
    let mut rows: Vec<(f64, bool, f64)> = Vec::new();
    let start = cfg.run.bisect_start.max(BISECT_FLOOR);
    let mut hi;
    let mut lo = None;
    if probe_at(start, &mut rows)? {
        hi = start;
        let mut a = start;
        for _ in 0..20 {
            a /= 2.0;
            if a < BISECT_FLOOR {
                break;
            }
            if probe_at(a, &mut rows)? {
                hi = a;
            } else {
                lo = Some(a);
                break;
            }
        }
    } else {
        lo = Some(start);
        let mut a = start;
        let mut found = None;
        for _ in 0..20 {
            a *= 2.0;
            if probe_at(a, &mut rows)? {
                found = Some(a);
                break;
            }
            lo = Some(a);
        }
        hi = found.ok_or_else(|| {
            anyhow!("no completing amplitude found doubling up to {a:.3e}; data too supercritical")
        })?;
    }
    if let Some(mut lo) = lo {
        for _ in 0..cfg.run.bisect_iters {
            let mid = (0.5 * (lo.ln() + hi.ln())).exp();
            if probe_at(mid, &mut rows)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let a_star = hi;

    let mut bcsv = CsvFile::create(out.join("bisection.csv"), &["A", "completed", "t_final"], &prov)?;
    for (a, done, t) in &rows {
        bcsv.row(&[*a, f64::from(u8::from(*done)), *t])?;
    }
    bcsv.finish()?;

    let delta_z = measure_delta_z(cfg, a_star)?;

    let alternating = cfg.schedule(&cfg.flow.preset, a_star)?;
    let geom = Geometry::new(cfg, a_star, &alternating);

    // No-flow companion over the same clamp skeleton and the same data.
    let baseline_h = Harness {
        cfg,
        schedule: cfg.schedule("quiescent", a_star)?,
        geom: geom.clone(),
        delta_z,
        z_order,
        g,
        a: a_star,
    };
    let mut bl_csv = CsvFile::create(out.join("baseline.csv"), &COLUMNS, &prov)?;
    let mut bl_ds = baseline_h.boot(&grid, &mut bl_csv)?;
    let baseline = baseline_h.drive(&mut bl_ds, &mut bl_csv, None, out)?;
    bl_csv.finish()?;

    // The instrumented threshold run.
    let flow_h = Harness {
        cfg,
        schedule: alternating,
        geom: geom.clone(),
        delta_z,
        z_order,
        g,
        a: a_star,
    };
    let plan = CkptPlan {
        every: cfg.run.checkpoint_every,
        config_hash: cfg.hash(),
    };
    let mut csv = CsvFile::create(out.join("suppression.csv"), &COLUMNS, &prov)?;
    let mut dsx = flow_h.boot(&grid, &mut csv)?;
    let outcome = flow_h.drive(&mut dsx, &mut csv, Some(&plan), out)?;
    csv.finish()?;
    flow_h.write_checkpoint(&out.join("final"), &dsx, &plan)?;

    let gates = dsx.gates.clone();
    let r1_ratio = gates.r1_end.map(|e| gates.r1_0 / e.max(1e-300));
    let z_ratio = gates.z_end.map(|e| gates.z0 / e.max(1e-300));
    let assertions = vec![
        Assertion::check(
            "baseline-triggers",
            !baseline.completed,
            match (&baseline.cause, baseline.trigger_t) {
                (Some(c), Some(t)) => format!("no-flow companion latched {c} at t = {t:.4}"),
                _ => format!("no-flow companion reached t = {:.4} untriggered", baseline.final_t),
            },
        ),
        Assertion::check(
            "flow-completes",
            outcome.completed,
            format!(
                "alternating pass at A* = {a_star:.2} reached t = {:.4} of {:.4}{}",
                outcome.final_t,
                geom.horizon,
                outcome
                    .cause
                    .as_deref()
                    .map(|c| format!(" (latched {c})"))
                    .unwrap_or_default()
            ),
        ),
        Assertion::check(
            "r1-damped",
            r1_ratio.is_some_and(|r| r >= 10.0),
            format!(
                "chemical R1 energy across the first phase: {:.3e} -> {:.3e} ({}x)",
                gates.r1_0,
                gates.r1_end.unwrap_or(f64::NAN),
                r1_ratio.map_or("?".into(), |r| format!("{r:.1}")),
            ),
        ),
        Assertion::check(
            "z-damped",
            z_ratio.is_some_and(|r| r >= 5.0),
            format!(
                "chemical Z-norm at the first phase end: {:.3e} -> {:.3e} ({}x)",
                gates.z0,
                gates.z_end.unwrap_or(f64::NAN),
                z_ratio.map_or("?".into(), |r| format!("{r:.1}")),
            ),
        ),
    ];

    let summary = json!({
        "a_star": a_star,
        "delta_z": delta_z,
        "horizon": geom.horizon,
        "phase_duration": geom.d,
        "recapture_offset": geom.t_h,
        "probes": rows.iter().map(|(a, c, t)| json!({"A": a, "completed": c, "t_final": t})).collect::<Vec<_>>(),
        "baseline": { "final_t": baseline.final_t, "cause": baseline.cause, "trigger_t": baseline.trigger_t },
        "flow": { "final_t": outcome.final_t, "accepted_steps": dsx.accepted, "cause": outcome.cause },
        "gates": gates,
        "max_split_residual": dsx.max_residual,
        "elapsed_s": started.elapsed().as_secs_f64(),
    });
    artifacts(cfg, assertions, summary, out)
}

/// Continue an interrupted suppression run from a checkpoint directory to the
/// horizon. The config must hash to the value recorded at checkpoint time.
pub fn resume_suppression(cfg: &RunConfig, ckpt: &Path, out: &Path) -> Result<RunArtifacts> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let prov = provenance(cfg);
    let text = std::fs::read_to_string(ckpt.join("harness.json"))
        .with_context(|| format!("reading {}", ckpt.join("harness.json").display()))?;
    let h: HarnessFile = serde_json::from_str(&text)?;
    if h.config_hash != cfg.hash() {
        bail!(
            "checkpoint was written under config hash {} but this config hashes to {}",
            h.config_hash,
            cfg.hash()
        );
    }

    let schedule = cfg.schedule(&cfg.flow.preset, h.amplitude)?;
    let geom = Geometry::new(cfg, h.amplitude, &schedule);
    let z_order = cfg.diagnostics.z_m.unwrap_or(DEFAULT_M + 1);
    let harness = Harness {
        cfg,
        schedule,
        geom,
        delta_z: h.delta_z,
        z_order,
        g: cfg.diagnostics.g,
        a: h.amplitude,
    };

    let (state, _meta) = PksState::load_checkpoint(ckpt, PksOptions::default())?;
    let split = ChemicalSplit::from_parts(
        h.split_t_r,
        h.split_direction,
        load_spectral(ckpt.join("split_carried.fld"))?,
        load_spectral(ckpt.join("split_d.fld"))?,
        load_spectral(ckpt.join("split_fresh.fld"))?,
    )?;
    let mut dsx = DriveState {
        state,
        ctl: h.ctl,
        frame: Frame {
            split,
            late: h.late,
        },
        phase: h.phase,
        accepted: h.accepted,
        since_ckpt: 0,
        gates: h.gates,
        max_residual: h.max_residual,
    };

    let plan = CkptPlan {
        every: cfg.run.checkpoint_every,
        config_hash: cfg.hash(),
    };
    let mut csv = CsvFile::create(out.join("resume.csv"), &COLUMNS, &prov)?;
    let outcome = harness.drive(&mut dsx, &mut csv, Some(&plan), out)?;
    csv.finish()?;
    harness.write_checkpoint(&out.join("final"), &dsx, &plan)?;

    let assertions = vec![Assertion::check(
        "flow-completes",
        outcome.completed,
        format!(
            "resumed pass at A* = {:.2} reached t = {:.4} of {:.4}",
            h.amplitude, outcome.final_t, harness.geom.horizon
        ),
    )];
    let summary = json!({
        "a_star": h.amplitude,
        "resumed_from": ckpt.display().to_string(),
        "resumed_t": dsx.state.t(),
        "accepted_steps": dsx.accepted,
        "gates": dsx.gates,
        "max_split_residual": dsx.max_residual,
        "elapsed_s": started.elapsed().as_secs_f64(),
    });
    artifacts(cfg, assertions, summary, out)
}
