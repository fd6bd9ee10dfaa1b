//! Randomized residual checks for the operator algebra behind the twisted
//! norms: the gliding-derivative commutators, the iterated-bracket expansion,
//! heat-semigroup gradient bounds, and the nested-average contraction.
//!
//! Every check reports the worst residual over its trials, measured relative
//! to the larger side of the identity and floored at 1e−14 absolute. Trial
//! fields are band-limited far enough below the 2/3 cutoff that no operator
//! in the identities truncates anything, so identity checks are expected to
//! sit at roundoff.

use crate::field::{RealField, SpectralField};
use crate::gamma::GammaContext;
use crate::grid::Grid;
use crate::schedule::FlowSchedule;
use crate::{CoreError, Result};
use ndarray::Zip;
use num_complex::Complex64;
use serde::Serialize;

/// Outcome of one named residual check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub id: String,
    pub residual_max: f64,
    pub tolerance: f64,
    pub trials: usize,
    pub seed: u64,
    pub pass: bool,
}

impl CheckReport {
    fn new(id: impl Into<String>, residual_max: f64, tolerance: f64, trials: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            residual_max,
            tolerance,
            trials,
            seed,
            pass: residual_max <= tolerance,
        }
    }
}

/// A batch of related checks; passes only if every row passes.
#[derive(Debug, Clone, Serialize)]
pub struct CommutatorReport {
    pub reports: Vec<CheckReport>,
}

impl CommutatorReport {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn residual_max(&self) -> f64 {
        self.reports
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.residual_max))
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// ‖a − b‖₂ relative to the larger side, floored at 1e−14 absolute.
/// `anchors` carry the norms of the uncancelled compositions, so an identity
/// whose both sides vanish (B ≡ 0 at the anchor time) scores zero instead of
/// dividing roundoff by roundoff.
fn relative_residual(a: &SpectralField, b: &SpectralField, anchors: &[f64]) -> f64 {
    let mut diff2 = 0.0;
    Zip::from(a.data()).and(b.data()).for_each(|x, y| {
        diff2 += (x - y).norm_sqr();
    });
    let grid = a.grid();
    let scale = grid.point_weight() / grid.total_points() as f64;
    let diff = (diff2 * scale).sqrt();
    let floor = anchors
        .iter()
        .fold(a.l2_norm().max(b.l2_norm()), |acc, &s| acc.max(s));
    diff / floor.max(1e-14)
}

/// Pointwise multiply by a profile-axis sample row (real space, no
/// truncation; callers keep bandwidths below the cutoff).
fn multiply_row(f: &SpectralField, row: &[f64], pa: usize) -> Result<SpectralField> {
    let grid = f.grid().clone();
    let mut data = f.inverse_complex();
    Zip::indexed(&mut data).for_each(|(i, j, l), v| {
        *v *= row[[i, j, l][pa]];
    });
    crate::fft::engine().forward3(&mut data);
    SpectralField::new(grid, data)
}

/// m-th spectral derivative of a sampled profile-axis row.
fn row_derivative(row: &[f64], m: usize) -> Vec<f64> {
    let n = row.len();
    let mut spec: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let engine = crate::fft::engine();
    engine.forward1(&mut spec);
    for (idx, c) in spec.iter_mut().enumerate() {
        let k = if 2 * idx <= n { idx as i64 } else { idx as i64 - n as i64 };
        if 2 * idx == n && m % 2 == 1 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= Complex64::new(0.0, k as f64).powi(m as i32);
        }
    }
    engine.inverse1(&mut spec);
    spec.iter().map(|c| c.re).collect()
}

fn trial_field(grid: &Grid, seed: u64) -> SpectralField {
    let kmax: Vec<i64> = (0..3)
        .map(|axis| (grid.n(axis) as i64 / 8).max(if grid.n(axis) > 1 { 1 } else { 0 }))
        .collect();
    SpectralField::random_band_limited(grid.clone(), [kmax[0], kmax[1], kmax[2]], seed)
}

/// Walk a fresh context to each requested time with panels under the cap.
fn contexts_at(
    schedule: &FlowSchedule,
    grid: &Grid,
    times: &[f64],
    m_max: usize,
) -> Result<Vec<GammaContext>> {
    if times.len() < 3 {
        return Err(CoreError::Protocol(
            "commutator checks need at least three accumulated times".into(),
        ));
    }
    for pair in times.windows(2) {
        if pair[1] < pair[0] {
            return Err(CoreError::Protocol("check times must be ascending".into()));
        }
    }
    let mut ctx = GammaContext::new(grid.clone(), schedule, times[0], m_max)?;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while ctx.t() < target {
            let next = (ctx.t() + 0.4).min(target);
            ctx.accumulate_b(next)?;
        }
        out.push(ctx.clone());
    }
    Ok(out)
}

/// Closed-form commutators of Γ powers with profile-axis derivatives:
///
///   [Γ^j, ∂_y]  = −Σ_{ℓ<j} C(j,ℓ) B^(j−ℓ+1) ∂_x Γ^ℓ,
///   [Γ^j, ∂_yy] = Σ_{ℓ<j} C(j,ℓ) (−2 B^(j−ℓ+1) ∂_x Γ
///                 + (d/dy)^{j−ℓ}(B¹)² ∂_xx − B^(j−ℓ+2) ∂_x) Γ^ℓ,
///
/// checked as applied operators on randomized band-limited fields.
pub fn check_gamma_commutators(
    schedule: &FlowSchedule,
    grid: &Grid,
    times: &[f64],
    j_max: usize,
    trials: usize,
    seed: u64,
) -> Result<CommutatorReport> {
    let contexts = contexts_at(schedule, grid, times, j_max + 2)?;
    let tolerance = 1e-8;
    let mut worst_dy = vec![0.0f64; j_max + 1];
    let mut worst_dyy = vec![0.0f64; j_max + 1];
    for ctx in &contexts {
        let ta = ctx.direction().transport_axis();
        let pa = ctx.direction().profile_axis();
        let b1_sq: Vec<f64> = ctx.b_row(1).iter().map(|v| v * v).collect();
        for trial in 0..trials {
            let f = trial_field(grid, seed ^ (trial as u64).wrapping_mul(0x9e37_79b9));
            let dy = f.derivative(pa, 1)?;
            let dyy = f.derivative(pa, 2)?;
            let mut chain_f = vec![f.clone()];
            let mut chain_dy = vec![dy.clone()];
            let mut chain_dyy = vec![dyy.clone()];
            for _ in 0..j_max {
                chain_f.push(ctx.apply_gamma(chain_f.last().unwrap(), 0, 1, 0)?);
                chain_dy.push(ctx.apply_gamma(chain_dy.last().unwrap(), 0, 1, 0)?);
                chain_dyy.push(ctx.apply_gamma(chain_dyy.last().unwrap(), 0, 1, 0)?);
            }
            for j in 1..=j_max {
                // [Γ^j, ∂_y] f
                let mut lhs = chain_dy[j].clone();
                let dy_gamma = chain_f[j].derivative(pa, 1)?;
                let dy_anchor = [chain_dy[j].l2_norm(), dy_gamma.l2_norm()];
                Zip::from(lhs.data_mut())
                    .and(dy_gamma.data())
                    .for_each(|a, b| *a -= *b);
                let mut rhs = SpectralField::zeros(grid.clone());
                for l in 0..j {
                    let coeff = -binom(j, l);
                    let dx = chain_f[l].derivative(ta, 1)?;
                    let term = multiply_row(&dx, ctx.b_row(j - l + 1), pa)?;
                    Zip::from(rhs.data_mut())
                        .and(term.data())
                        .for_each(|a, b| *a += *b * coeff);
                }
                worst_dy[j] = worst_dy[j].max(relative_residual(&lhs, &rhs, &dy_anchor));

                // [Γ^j, ∂_yy] f
                let mut lhs = chain_dyy[j].clone();
                let dyy_gamma = chain_f[j].derivative(pa, 2)?;
                let dyy_anchor = [chain_dyy[j].l2_norm(), dyy_gamma.l2_norm()];
                Zip::from(lhs.data_mut())
                    .and(dyy_gamma.data())
                    .for_each(|a, b| *a -= *b);
                let mut rhs = SpectralField::zeros(grid.clone());
                for l in 0..j {
                    let coeff = binom(j, l);
                    let dx_next = chain_f[l + 1].derivative(ta, 1)?;
                    let t1 = multiply_row(&dx_next, ctx.b_row(j - l + 1), pa)?;
                    let dxx = chain_f[l].derivative(ta, 2)?;
                    let row = row_derivative(&b1_sq, j - l);
                    let t2 = multiply_row(&dxx, &row, pa)?;
                    let dx = chain_f[l].derivative(ta, 1)?;
                    let t3 = multiply_row(&dx, ctx.b_row(j - l + 2), pa)?;
                    Zip::from(rhs.data_mut())
                        .and(t1.data())
                        .and(t2.data())
                        .and(t3.data())
                        .for_each(|a, x, y, z| {
                            *a += (-2.0 * *x + *y - *z) * coeff;
                        });
                }
                worst_dyy[j] = worst_dyy[j].max(relative_residual(&lhs, &rhs, &dyy_anchor));
            }
        }
    }
    let mut reports = Vec::new();
    for j in 1..=j_max {
        reports.push(CheckReport::new(
            format!("gamma-power-dy-commutator-j{j}"),
            worst_dy[j],
            tolerance,
            trials * times.len(),
            seed,
        ));
        reports.push(CheckReport::new(
            format!("gamma-power-dyy-commutator-j{j}"),
            worst_dyy[j],
            tolerance,
            trials * times.len(),
            seed,
        ));
    }
    Ok(CommutatorReport { reports })
}

/// Iterated brackets of Γ against ∂_y collapse to a single shear term:
/// ad_Γ^m(∂_y) = −B^(m+1) ∂_x. The left side is built by literal recursion
/// ad^m = Γ∘ad^{m−1} − ad^{m−1}∘Γ, so the check exercises the whole ladder.
pub fn check_ad_expansion(
    schedule: &FlowSchedule,
    grid: &Grid,
    times: &[f64],
    n_max: usize,
    trials: usize,
    seed: u64,
) -> Result<CommutatorReport> {
    let contexts = contexts_at(schedule, grid, times, n_max + 1)?;
    let tolerance = 1e-8;

    fn ad_apply(ctx: &GammaContext, m: usize, f: &SpectralField) -> Result<SpectralField> {
        let pa = ctx.direction().profile_axis();
        if m == 0 {
            return f.derivative(pa, 1);
        }
        let inner = ad_apply(ctx, m - 1, &ctx.apply_gamma(f, 0, 1, 0)?)?;
        let mut outer = ctx.apply_gamma(&ad_apply(ctx, m - 1, f)?, 0, 1, 0)?;
        Zip::from(outer.data_mut())
            .and(inner.data())
            .for_each(|a, b| *a -= *b);
        Ok(outer)
    }

    let mut worst = vec![0.0f64; n_max + 1];
    for ctx in &contexts {
        let ta = ctx.direction().transport_axis();
        let pa = ctx.direction().profile_axis();
        for trial in 0..trials {
            let f = trial_field(grid, seed ^ (trial as u64).wrapping_mul(0x0b97_3cad));
            let mut gamma_dy = f.derivative(pa, 1)?;
            for m in 1..=n_max {
                gamma_dy = ctx.apply_gamma(&gamma_dy, 0, 1, 0)?;
                let lhs = ad_apply(ctx, m, &f)?;
                let dx = f.derivative(ta, 1)?;
                let mut rhs = multiply_row(&dx, ctx.b_row(m + 1), pa)?;
                Zip::from(rhs.data_mut()).for_each(|v| *v = -*v);
                worst[m] = worst[m].max(relative_residual(&lhs, &rhs, &[gamma_dy.l2_norm()]));
            }
        }
    }
    let reports = (1..=n_max)
        .map(|m| {
            CheckReport::new(
                format!("iterated-bracket-order-{m}"),
                worst[m],
                tolerance,
                trials * times.len(),
                seed,
            )
        })
        .collect();
    Ok(CommutatorReport { reports })
}

/// Commutation defect of the discrete inviscid transport step against a
/// reference gliding derivative: e(dt) = ‖Γ_ref(T)(S_dt f) − S_dt(∂_y f)‖
/// relative to the larger side, with the reference B accumulated on panels
/// far finer than any dt. The solver shares one trapezoid between its phase
/// rotation and B, so the defect is pure quadrature error and shrinks at
/// second order under dt-halving.
pub fn transport_commutation_errors(
    schedule: &FlowSchedule,
    grid: &Grid,
    t_end: f64,
    dts: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    use crate::scalar::ScalarState;
    if !(t_end > 0.0) || dts.is_empty() {
        return Err(CoreError::Protocol("need t_end > 0 and at least one dt".into()));
    }
    let smallest = dts.iter().cloned().fold(f64::MAX, f64::min);
    let mut ctx_ref = GammaContext::new(grid.clone(), schedule, 0.0, 2)?;
    let panels = ((t_end / (smallest / 64.0)).ceil() as usize).max(256);
    for p in 1..=panels {
        ctx_ref.accumulate_b(t_end * p as f64 / panels as f64)?;
    }
    let pa = ctx_ref.direction().profile_axis();
    let f = trial_field(grid, seed);
    let dy = f.derivative(pa, 1)?;
    let mut out = Vec::with_capacity(dts.len());
    for &dt in dts {
        let steps = (t_end / dt).round() as usize;
        if steps == 0 || ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
            return Err(CoreError::Protocol(format!(
                "dt = {dt} does not divide the horizon {t_end}"
            )));
        }
        let mut evolved = ScalarState::new(f.clone(), f64::INFINITY)?;
        let mut evolved_dy = ScalarState::new(dy.clone(), f64::INFINITY)?;
        for s in 0..steps {
            // Land each step on an exact grid point of the horizon.
            let target = t_end * (s + 1) as f64 / steps as f64;
            let h = target - evolved.t();
            evolved.step(schedule, h)?;
            evolved_dy.step(schedule, h)?;
        }
        let lhs = ctx_ref.apply_gamma(evolved.field(), 0, 1, 0)?;
        let anchor = [lhs.l2_norm(), evolved_dy.field().l2_norm()];
        out.push(relative_residual(&lhs, evolved_dy.field(), &anchor));
    }
    Ok(out)
}

/// Heat-semigroup gradient bounds, evaluated per mode without transforms:
/// the smoothing ratio sup_s √(s/A)‖∇e^{(s/A)Δ}f‖₂/‖f‖₂ never exceeds
/// (2e)^{−1/2}, and the Duhamel-type time integral of the gradient norm stays
/// under √(2/e)·√(As)·‖f‖₂.
pub fn check_heat_bounds(
    grid: &Grid,
    amplitude: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    let ratio_bound = (2.0 * std::f64::consts::E).powf(-0.5);
    let mut worst_ratio_excess = f64::NEG_INFINITY;
    let mut worst_duhamel_excess = f64::NEG_INFINITY;
    let scale = grid.point_weight() / grid.total_points() as f64;
    let kx = grid.wavenumbers(0);
    let ky = grid.wavenumbers(1);
    let kz = grid.wavenumbers(2);
    for trial in 0..trials {
        let mut f = trial_field(grid, seed ^ (trial as u64).wrapping_mul(0x51_7cc1));
        f.data_mut()[[0, 0, 0]] = Complex64::new(0.0, 0.0);
        let norm = f.l2_norm();
        let grad_norm = |s_over_a: f64| -> f64 {
            let mut sum = 0.0;
            Zip::indexed(f.data()).for_each(|(i, j, l), v| {
                let k2 = (kx[i] * kx[i] + ky[j] * ky[j] + kz[l] * kz[l]) as f64;
                sum += v.norm_sqr() * k2 * (-2.0 * s_over_a * k2).exp();
            });
            (sum * scale).sqrt()
        };
        for step in 0..=120 {
            let s_over_a = 10f64.powf(-6.0 + 7.0 * step as f64 / 120.0);
            let ratio = s_over_a.sqrt() * grad_norm(s_over_a) / norm;
            worst_ratio_excess = worst_ratio_excess.max((ratio - ratio_bound) / ratio_bound);
        }
        // ∫₀ᵗ ‖∇e^{sΔ/A}f‖ ds by composite Simpson; the integrand is smooth.
        let t = 0.5 * amplitude;
        let panels = 400;
        let h = t / panels as f64;
        let mut integral = grad_norm(0.0) + grad_norm(t / amplitude);
        for p in 1..panels {
            let w = if p % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * grad_norm(p as f64 * h / amplitude);
        }
        integral *= h / 3.0;
        let bound = (2.0 / std::f64::consts::E).sqrt() * (amplitude * t).sqrt() * norm;
        worst_duhamel_excess = worst_duhamel_excess.max((integral - bound) / bound);
    }
    Ok(vec![
        CheckReport::new(
            "heat-gradient-smoothing-ratio",
            worst_ratio_excess,
            1e-6,
            trials,
            seed,
        ),
        CheckReport::new(
            "heat-gradient-duhamel-integral",
            worst_duhamel_excess,
            1e-6,
            trials,
            seed,
        ),
    ])
}

/// Nested averages contract every normalized Lᵖ norm, p ∈ {1, 2, ∞}:
/// the x-average of F and then the (x, y)-average each shrink ⦀·⦀_p.
pub fn check_average_contraction(grid: &Grid, trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut excess = [f64::NEG_INFINITY; 3];
    for trial in 0..trials {
        let kmax: Vec<i64> = (0..3).map(|a| (grid.n(a) as i64 / 4).max(1)).collect();
        let f = RealField::random_band_limited(
            grid.clone(),
            [kmax[0], kmax[1], kmax[2]],
            seed ^ (trial as u64).wrapping_mul(0xa24b_aed4),
        );
        let spec = f.transform()?;
        let once = crate::diagnostics::decompose(&spec, 0).average.inverse();
        let twice = crate::diagnostics::double_average(&spec).inverse();
        let norms = |g: &RealField| -> [f64; 3] {
            let n = g.grid().total_points() as f64;
            let mut sum1 = 0.0;
            let mut sum2 = 0.0;
            let mut sup = 0.0f64;
            for &v in g.data().iter() {
                sum1 += v.abs();
                sum2 += v * v;
                sup = sup.max(v.abs());
            }
            [sum1 / n, (sum2 / n).sqrt(), sup]
        };
        let full = norms(&f);
        let mid = norms(&once);
        let inner = norms(&twice);
        for p in 0..3 {
            let scale = full[p].max(1e-14);
            excess[p] = excess[p].max((mid[p] - full[p]) / scale);
            excess[p] = excess[p].max((inner[p] - mid[p]) / scale);
        }
    }
    let ids = ["nested-average-L1", "nested-average-L2", "nested-average-Linf"];
    Ok(ids
        .iter()
        .enumerate()
        .map(|(p, id)| CheckReport::new(*id, excess[p], 1e-12, trials, seed))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::ShearProfile;

    #[test]
    fn commutator_identities_hold_at_roundoff() {
        let grid = Grid::new(32, 32, 4).unwrap();
        let schedule = FlowSchedule::log_shift(ShearProfile::two_mode(), 40.0);
        let report =
            check_gamma_commutators(&schedule, &grid, &[0.0, 1.0, 2.0], 3, 4, 71).unwrap();
        assert!(report.pass(), "worst residual {}", report.residual_max());
        assert!(report.residual_max() < 1e-10);
    }

    #[test]
    fn bracket_ladder_collapses_to_one_term() {
        let grid = Grid::new(32, 32, 4).unwrap();
        let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 25.0);
        let report = check_ad_expansion(&schedule, &grid, &[0.0, 0.8, 1.6], 3, 4, 13).unwrap();
        assert!(report.pass(), "worst residual {}", report.residual_max());
    }

    #[test]
    fn heat_bounds_have_margin() {
        let grid = Grid::new(16, 16, 16).unwrap();
        let reports = check_heat_bounds(&grid, 100.0, 6, 5).unwrap();
        for r in &reports {
            assert!(r.pass, "{}: excess {}", r.id, r.residual_max);
            assert!(r.residual_max < 0.0, "{} has no margin", r.id);
        }
    }

    #[test]
    fn averages_never_grow_any_norm() {
        let grid = Grid::new(16, 12, 8).unwrap();
        let reports = check_average_contraction(&grid, 20, 2).unwrap();
        for r in &reports {
            assert!(r.pass, "{}: excess {}", r.id, r.residual_max);
        }
    }

    #[test]
    fn checks_reject_thin_time_sets() {
        let grid = Grid::new(16, 16, 4).unwrap();
        let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 25.0);
        let err = check_gamma_commutators(&schedule, &grid, &[0.0, 1.0], 2, 1, 1);
        assert!(matches!(err, Err(CoreError::Protocol(_))));
    }

    #[test]
    fn binomials_are_exact() {
        assert_eq!(binom(4, 0), 1.0);
        assert_eq!(binom(4, 2), 6.0);
        assert_eq!(binom(5, 3), 10.0);
    }
}
