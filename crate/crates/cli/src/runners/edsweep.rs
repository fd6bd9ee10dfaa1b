//! Dissipation-rate sweep: fitted decay exponents across flows and
//! amplitudes, with optional gliding-norm tracking on the rewound flow.
//!
//! Protocol per flow (frozen a priori, no data-dependent tuning):
//! - quiescent: exact steps, samples every A/50, automatic fit window over
//!   the log-drop band [−2, −12];
//! - stationary: dt = 0.4 under the quadrature cap, samples every ~0.05·√A,
//!   automatic window as above;
//! - rewound: dt = period/400 with one sample per period (2A^{1/3}), fitted
//!   over pinned period indices [1, 4]; λ is averaged over replicate seeds
//!   before the log λ vs log A regression.

use super::{artifacts, provenance, Assertion, RunArtifacts};
use crate::config::{flow_preset, FlowPreset, RunConfig};
use crate::csvout::CsvFile;
use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;
use shearlab_core::diagnostics::z_norm_mode;
use shearlab_core::{
    fit_decay_window, fit_ed_exponent, fit_log_slope, DecaySample, EdRunSpec, GammaContext, Grid,
    ModeState, WindowSelect,
};
use std::path::Path;

/// Samples per rewound period; dt = period / this.
const REWOUND_STEPS_PER_PERIOD: usize = 400;
/// Rewound runs cover this many periods (pinned fit uses indices 1..=4).
const REWOUND_PERIODS: usize = 6;
/// Dense-sample cadence (in steps) for the per-run CSV and overshoot scan.
const REWOUND_DENSE_STRIDE: usize = 25;
const PINNED: WindowSelect = WindowSelect::Pinned { start: 1, end: 4 };

/// Per-flow cadence: fixed step, steps between samples, sample budget.
fn plan(preset: FlowPreset, a: f64) -> (f64, usize, usize, WindowSelect) {
    match preset {
        FlowPreset::Quiescent => (a / 2000.0, 40, 800, WindowSelect::auto()),
        FlowPreset::Stationary | FlowPreset::LogShift => {
            let stride = ((0.05 * a.sqrt() / 0.4).ceil() as usize).max(1);
            (0.4, stride, 800, WindowSelect::auto())
        }
        FlowPreset::Rewound | FlowPreset::Alternating => {
            let period = 2.0 * a.cbrt();
            (
                period / REWOUND_STEPS_PER_PERIOD as f64,
                REWOUND_STEPS_PER_PERIOD,
                REWOUND_PERIODS + 1,
                PINNED,
            )
        }
    }
}

/// One run's emitted trace: dense rows for the CSV plus the period-cadence
/// gliding-norm samples the exponent fit uses.
struct RunTrace {
    flow: String,
    a_index: usize,
    seed: u64,
    rows: Vec<[f64; 5]>,
    z_period: Vec<DecaySample>,
    z_overshoot: f64,
}

pub fn run_ed_sweep(cfg: &RunConfig, out: &Path) -> Result<RunArtifacts> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let prov = provenance(cfg);
    let flows = cfg.flow_names();
    let amplitudes = cfg.amplitude_list();
    if amplitudes.len() < 4 {
        bail!("rate sweep needs at least 4 amplitudes, got {}", amplitudes.len());
    }
    let seeds = cfg.replicate_seeds();
    let alpha = cfg.initial.alpha;
    let gamma = cfg.initial.gamma;
    let n_y = cfg.grid.n_y;
    let cutoff = cfg.cutoff();

    // Stage 1: exponent fits, one independent job per flow.
    let fits: Vec<_> = flows
        .par_iter()
        .map(|flow| -> Result<_> {
            let preset = flow_preset(flow)?;
            let runs: Vec<EdRunSpec> = amplitudes
                .iter()
                .map(|&a| {
                    let (dt, stride, max_samples, select) = plan(preset, a);
                    Ok(EdRunSpec {
                        amplitude: a,
                        schedule: cfg.schedule(flow, a)?,
                        dt,
                        stride,
                        max_samples,
                        select,
                    })
                })
                .collect::<Result<_>>()?;
            let fit = fit_ed_exponent(&runs, alpha, gamma, n_y, cutoff, &seeds)
                .with_context(|| format!("rate fit for flow {flow}"))?;
            Ok((flow.clone(), fit))
        })
        .collect::<Result<_>>()?;

    // Stage 2: per-run traces, one worker per (flow, amplitude, seed) entry.
    let track_z = cfg.diagnostics.z_m;
    let mut jobs = Vec::new();
    for flow in &flows {
        for (ai, &a) in amplitudes.iter().enumerate() {
            for &seed in &seeds {
                jobs.push((flow.clone(), ai, a, seed));
            }
        }
    }
    let traces: Vec<RunTrace> = jobs
        .par_iter()
        .map(|(flow, ai, a, seed)| trace_run(cfg, flow, *ai, *a, *seed, track_z))
        .collect::<Result<_>>()?;

    // Emission is sequential and ordered; workers never touch files.
    for trace in &traces {
        let name = format!(
            "runs/ed_run_{}_a{}_s{}.csv",
            trace.flow, trace.a_index, trace.seed
        );
        let mut csv = CsvFile::create(
            out.join(name),
            &["t", "l2_remainder", "l2_total", "linf", "z_m"],
            &prov,
        )?;
        for row in &trace.rows {
            csv.row(row)?;
        }
        csv.finish()?;
    }

    let mut assertions = Vec::new();
    let mut flow_summaries = serde_json::Map::new();
    for (flow, fit) in &fits {
        let mut csv = CsvFile::create(
            out.join(format!("ed_sweep_{flow}.csv")),
            &["A", "fitted_lambda", "window_start", "window_end", "r2"],
            &prov,
        )?;
        for point in &fit.points {
            let m = point.replicates.len() as f64;
            let start = point.replicates.iter().map(|w| w.start_t).sum::<f64>() / m;
            let end = point.replicates.iter().map(|w| w.end_t).sum::<f64>() / m;
            let r2 = point.replicates.iter().map(|w| w.r2).sum::<f64>() / m;
            csv.row(&[point.amplitude, point.lambda, start, end, r2])?;
        }
        csv.finish()?;

        if let Some((band, centre)) = slope_gate(flow) {
            assertions.push(Assertion::check(
                format!("ed-slope-{flow}"),
                (fit.exponent - centre).abs() <= band,
                format!("fitted exponent {:.4}, required {centre} ± {band}", fit.exponent),
            ));
        }
        flow_summaries.insert(
            flow.clone(),
            json!({
                "exponent": fit.exponent,
                "intercept": fit.intercept,
                "r2": fit.r2,
                "lambda": fit.points.iter().map(|p| (p.amplitude, p.lambda)).collect::<Vec<_>>(),
            }),
        );
    }

    // Gliding-norm decay against the plain-norm decay on the rewound flow.
    if track_z.is_some() {
        for (flow, fit) in &fits {
            if flow_preset(flow)? != FlowPreset::Rewound {
                continue;
            }
            let mut lambdas = Vec::new();
            let mut overshoot: f64 = 0.0;
            for (ai, &a) in amplitudes.iter().enumerate() {
                let mut per_seed = Vec::new();
                for trace in traces.iter().filter(|t| &t.flow == flow && t.a_index == ai) {
                    per_seed.push(fit_decay_window(&trace.z_period, PINNED)?.lambda);
                    overshoot = overshoot.max(trace.z_overshoot);
                }
                if per_seed.is_empty() {
                    return Err(anyhow!("no gliding-norm traces for {flow} at A = {a}"));
                }
                lambdas.push(per_seed.iter().sum::<f64>() / per_seed.len() as f64);
            }
            let xs: Vec<f64> = amplitudes.iter().map(|a| a.ln()).collect();
            let ys: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
            let (z_exp, _, z_r2) = fit_log_slope(&xs, &ys);
            assertions.push(Assertion::check(
                "z-exponent-matches-l2",
                (z_exp - fit.exponent).abs() <= 0.1,
                format!(
                    "gliding-norm exponent {:.4} vs plain {:.4} (|diff| ≤ 0.1)",
                    z_exp, fit.exponent
                ),
            ));
            assertions.push(Assertion::check(
                "z-overshoot",
                overshoot <= 10.0,
                format!("peak gliding-norm overshoot {overshoot:.3}× initial (≤ 10×)"),
            ));
            flow_summaries.insert(
                format!("{flow}-z"),
                json!({ "exponent": z_exp, "r2": z_r2, "overshoot": overshoot }),
            );
        }
    }

    let summary = json!({
        "flows": flow_summaries,
        "amplitudes": amplitudes,
        "replicates": seeds,
        "elapsed_s": started.elapsed().as_secs_f64(),
    });
    artifacts(cfg, assertions, summary, out)
}

/// Acceptance bands per flow preset: (half-width, centre).
fn slope_gate(flow: &str) -> Option<(f64, f64)> {
    match flow {
        "quiescent" => Some((0.02, -1.0)),
        "stationary" => Some((0.08, -0.5)),
        "rewound" => Some((0.08, -1.0 / 3.0)),
        _ => None,
    }
}

/// Re-run one sweep entry at its fitted cadence, recording the per-run CSV
/// rows and (when requested) the gliding norm in the frame of the current
/// rewound period. Trajectories are identical to the fitting pass: same
/// initial state, same step sizes.
fn trace_run(
    cfg: &RunConfig,
    flow: &str,
    a_index: usize,
    a: f64,
    seed: u64,
    track_z: Option<usize>,
) -> Result<RunTrace> {
    let preset = flow_preset(flow)?;
    let schedule = cfg.schedule(flow, a)?;
    let (dt, stride, max_samples, _) = plan(preset, a);
    let alpha = cfg.initial.alpha;
    let gamma = cfg.initial.gamma;
    let mut state = ModeState::random_band_limited(
        alpha,
        gamma,
        cfg.grid.n_y,
        cfg.cutoff(),
        a,
        seed,
    )?;

    let rewound = matches!(preset, FlowPreset::Rewound) && track_z.is_some();
    let m = track_z.unwrap_or(0);
    let g = cfg.diagnostics.g;
    let line = Grid::line_y(cfg.grid.n_y)?;
    let mut ctx = if rewound {
        Some(GammaContext::new(line.clone(), &schedule, 0.0, 1)?)
    } else {
        None
    };
    let z_of = |state: &ModeState, ctx: &GammaContext| -> Result<f64> {
        Ok(z_norm_mode(state.values(), alpha, gamma, ctx, m, g)?)
    };

    let v0 = state.l2_norm();
    let mut rows = Vec::new();
    let mut z_period = Vec::new();
    let mut z0 = f64::NAN;
    let mut z_peak: f64 = 0.0;

    let mut current_z = match &ctx {
        Some(ctx) => {
            z0 = z_of(&state, ctx)?;
            z_peak = z0;
            z_period.push(DecaySample { t: 0.0, value: z0 });
            z0
        }
        None => f64::NAN,
    };
    rows.push([0.0, v0, v0, linf(state.values()), current_z]);

    let dense = if rewound { REWOUND_DENSE_STRIDE } else { stride };
    let total_steps = stride * (max_samples - 1);
    for step in 1..=total_steps {
        state.step(&schedule, dt)?;
        if let Some(ctx) = ctx.as_mut() {
            if step % REWOUND_STEPS_PER_PERIOD == 0 {
                // Period restart: re-anchor the gliding frame and record the
                // restart norm the pinned fit consumes.
                *ctx = GammaContext::new(line.clone(), &schedule, state.t(), 1)?;
                z_period.push(DecaySample { t: state.t(), value: z_of(&state, ctx)? });
            } else {
                ctx.accumulate_b(state.t())?;
            }
        }
        if step % dense == 0 {
            if let Some(ctx) = &ctx {
                current_z = z_of(&state, ctx)?;
                z_peak = z_peak.max(current_z);
            }
            let l2 = state.l2_norm();
            rows.push([state.t(), l2, l2, linf(state.values()), current_z]);
        }
        if !rewound && (state.l2_norm() / v0).ln() < -13.5 {
            break;
        }
    }

    Ok(RunTrace {
        flow: flow.to_string(),
        a_index,
        seed,
        rows,
        z_period,
        z_overshoot: if rewound { z_peak / z0 } else { f64::NAN },
    })
}

fn linf(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
