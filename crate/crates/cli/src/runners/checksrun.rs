//! Seeded calculus verification battery.
//!
//! Runs the commutator identities, the conjugation expansion, the second-order
//! transport commutation study, the heat-semigroup gradient and Duhamel
//! bounds, and the averaging inequalities, then writes every report to
//! checks.json alongside the pass/fail roll-up.

use super::{artifacts, provenance, Assertion, RunArtifacts};
use crate::config::RunConfig;
use anyhow::Result;
use serde_json::json;
use shearlab_core::checks::{
    check_ad_expansion, check_average_contraction, check_gamma_commutators, check_heat_bounds,
    transport_commutation_errors,
};
use shearlab_core::Grid;
use std::path::Path;

pub fn run_checks(cfg: &RunConfig, out: &Path) -> Result<RunArtifacts> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let _ = provenance(cfg);
    let [nx, ny, nz] = cfg.grid.dims;
    let grid = Grid::new(nx, ny, nz)?;
    let schedule = cfg.schedule(&cfg.flow.preset, cfg.flow.amplitude)?;
    let trials = cfg.run.trials;
    let seed = cfg.seed;
    let times = [0.0, 1.0, 2.0];

    let commutators = check_gamma_commutators(&schedule, &grid, &times, 4, trials, seed)?;
    let expansion = check_ad_expansion(&schedule, &grid, &times, 3, trials, seed ^ 0x5eed)?;
    let heat = check_heat_bounds(&grid, cfg.flow.amplitude.max(100.0), trials, seed ^ 0xbeef)?;
    let averaging = check_average_contraction(&grid, trials, seed ^ 0xcafe)?;

    let dts = [0.1, 0.05, 0.025];
    let errors = transport_commutation_errors(&schedule, &grid, 0.8, &dts, seed ^ 0xd00d)?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| *r >= 3.5);

    let heat_pass = heat.iter().all(|r| r.pass);
    let avg_pass = averaging.iter().all(|r| r.pass);

    let assertions = vec![
        Assertion::check(
            "commutator-identities",
            commutators.pass(),
            format!("worst residual {:.3e} over j ≤ 4", commutators.residual_max()),
        ),
        Assertion::check(
            "conjugation-expansion",
            expansion.pass(),
            format!("worst residual {:.3e} over n ≤ 3", expansion.residual_max()),
        ),
        Assertion::check(
            "transport-commutation-order",
            order_ok,
            format!("dt-halving error ratios {ratios:.3?} (each ≥ 3.5)"),
        ),
        Assertion::check(
            "heat-gradient-bounds",
            heat_pass,
            format!("{} heat reports, signed excess ≤ tolerance", heat.len()),
        ),
        Assertion::check(
            "averaging-inequalities",
            avg_pass,
            format!("{} averaging reports violation-free", averaging.len()),
        ),
    ];

    let report = json!({
        "commutators": commutators,
        "expansion": expansion,
        "transport_errors": errors,
        "transport_ratios": ratios,
        "heat": heat,
        "averaging": averaging,
        "trials": trials,
        "seed": seed,
    });
    std::fs::write(out.join("checks.json"), serde_json::to_string_pretty(&report)?)?;

    let summary = json!({
        "grid": cfg.grid.dims,
        "trials": trials,
        "elapsed_s": started.elapsed().as_secs_f64(),
    });
    artifacts(cfg, assertions, summary, out)
}
