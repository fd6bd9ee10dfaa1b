//! Per-window contraction study for the rewound flow.
//!
//! Measures worst-case L² contraction factors over consecutive windows of the
//! default length A^{1/3}·|α|^{−2/3}, after a warmup stretch in which random
//! data sheds its fast-decaying content. Companions: the no-flow control
//! (factors pinned near e^{−cT/A} by plain diffusion) and a high carrier mode
//! |α| ≥ √A, whose window is calibrated so the factor must reach e^{−1}.

use super::{artifacts, provenance, Assertion, RunArtifacts};
use crate::config::RunConfig;
use crate::csvout::CsvFile;
use anyhow::{bail, Result};
use serde_json::json;
use shearlab_core::{measure_contraction, measure_contraction_windows, ContractionOptions};
use std::path::Path;

pub fn run_contraction(cfg: &RunConfig, out: &Path) -> Result<RunArtifacts> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let prov = provenance(cfg);
    let a = cfg.flow.amplitude;
    let schedule = cfg.schedule(&cfg.flow.preset, a)?;
    let alpha = cfg.initial.alpha;
    let gamma = cfg.initial.gamma;
    let opts = ContractionOptions {
        n_y: cfg.grid.n_y,
        cutoff: cfg.cutoff(),
        seeds: cfg.replicate_seeds(),
        ..ContractionOptions::default()
    };
    let warmup = cfg.run.warmup_windows;
    let measured = cfg.run.windows;
    if measured < 8 {
        bail!("contraction study needs at least 8 measured windows, got {measured}");
    }

    let all =
        measure_contraction_windows(&schedule, alpha, gamma, warmup + measured, None, &opts)?;
    let factors = &all[warmup..];
    let window = (alpha.abs() as f64).powf(-2.0 / 3.0) * a.cbrt();

    let mut csv = CsvFile::create(out.join("contraction.csv"), &["window", "factor"], &prov)?;
    for (i, f) in factors.iter().enumerate() {
        csv.row(&[(warmup + i) as f64, *f])?;
    }
    csv.finish()?;

    let worst = factors.iter().cloned().fold(0.0f64, f64::max);
    let best = factors.iter().cloned().fold(f64::MAX, f64::min);
    let kappa = 1.0 - worst;
    let spread = worst - best;

    // No-flow control: pure diffusion over one window stays near 1.
    let quiescent = cfg.schedule("quiescent", a)?;
    let control = measure_contraction(&quiescent, alpha, gamma, Some(window), &opts)?;
    let control_hi = (-window * (alpha * alpha) as f64 / a).exp();
    let control_lo = (-window * 30.0 / a).exp();

    // High carrier mode: its default window makes pure diffusion alone
    // contract by exactly e^{−1}; the shear only helps.
    let alpha_hm = (a.sqrt().ceil() as i64).max(alpha + 1);
    let high_mode = measure_contraction(&schedule, alpha_hm, gamma, None, &opts)?;

    let assertions = vec![
        Assertion::check(
            "window-contraction",
            kappa > 0.02,
            format!(
                "all {} window factors ≤ {:.4} = 1 − κ, κ = {:.4} (> 0.02)",
                factors.len(),
                worst,
                kappa
            ),
        ),
        Assertion::check(
            "window-spread",
            spread < 0.5 * kappa,
            format!("factor spread {spread:.4} (< half of κ = {:.4})", 0.5 * kappa),
        ),
        Assertion::check(
            "no-flow-control",
            control <= control_hi + 1e-12 && control >= control_lo,
            format!(
                "quiescent factor {control:.6} within [{control_lo:.6}, {control_hi:.6}]"
            ),
        ),
        Assertion::check(
            "high-mode-efold",
            high_mode <= (-1.0f64).exp() * (1.0 + 1e-6),
            format!("α = {alpha_hm} factor {high_mode:.6} ≤ e^(-1)"),
        ),
    ];

    let summary = json!({
        "amplitude": a,
        "window": window,
        "warmup_windows": warmup,
        "factors": factors,
        "kappa": kappa,
        "spread": spread,
        "control": control,
        "high_mode": { "alpha": alpha_hm, "factor": high_mode },
        "elapsed_s": started.elapsed().as_secs_f64(),
    });
    artifacts(cfg, assertions, summary, out)
}
