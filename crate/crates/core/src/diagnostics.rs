//! Norms, spectral bookkeeping, and the layered energy functional.
//!
//! Everything here is read-only over solver state. The twisted norms reuse a
//! [`GammaContext`] for Γ applications; the per-level transport/spare weights
//! are applied as diagonal mode multipliers, which is exact because ∂ along
//! the transport and spare axes commutes with Γ and with dealiasing.

use crate::field::SpectralField;
use crate::gamma::GammaContext;
use crate::pks::PksState;
use crate::split::ChemicalSplit;
use crate::{CoreError, Result};
use ndarray::{Array2, Zip};
use serde::Serialize;

/// One field split into its average along an axis and the remainder.
///
/// `average` keeps exactly the modes with zero wavenumber on `axis`;
/// `remainder` keeps the rest. Coefficient-wise, `average + remainder`
/// restores the input bitwise.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub axis: usize,
    pub average: SpectralField,
    pub remainder: SpectralField,
}

/// Split `f` into its mean along `axis` and the zero-mean remainder.
pub fn decompose(f: &SpectralField, axis: usize) -> Decomposition {
    assert!(axis < 3, "axis out of range");
    let mut average = f.clone();
    let mut remainder = f.clone();
    Zip::indexed(average.data_mut()).for_each(|idx, v| {
        let i = [idx.0, idx.1, idx.2][axis];
        if i != 0 {
            *v = num_complex::Complex64::new(0.0, 0.0);
        }
    });
    Zip::indexed(remainder.data_mut()).for_each(|idx, v| {
        let i = [idx.0, idx.1, idx.2][axis];
        if i == 0 {
            *v = num_complex::Complex64::new(0.0, 0.0);
        }
    });
    Decomposition {
        axis,
        average,
        remainder,
    }
}

/// Average over both x and y: keeps only modes with k_x = k_y = 0.
pub fn double_average(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    Zip::indexed(out.data_mut()).for_each(|(i, j, _), v| {
        if i != 0 || j != 0 {
            *v = num_complex::Complex64::new(0.0, 0.0);
        }
    });
    out
}

/// Parseval energy split over the fixed lattice regions (α = k_x, β = k_y,
/// γ = k_z): R1 = {α ≠ 0, β = 0, γ = 0}, R2 = {β = 0, γ ≠ 0},
/// R3 = {β ≠ 0}, plus the zero mode. The four pieces partition the lattice,
/// so they sum to the squared L² norm.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FourierRegionEnergy {
    pub zero: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl FourierRegionEnergy {
    pub fn total(&self) -> f64 {
        self.zero + self.r1 + self.r2 + self.r3
    }
}

/// Region-wise energy of a spectral field.
pub fn region_energies(f: &SpectralField) -> FourierRegionEnergy {
    let grid = f.grid();
    let kx = grid.wavenumbers(0);
    let ky = grid.wavenumbers(1);
    let kz = grid.wavenumbers(2);
    let mut out = FourierRegionEnergy::default();
    Zip::indexed(f.data()).for_each(|(i, j, l), v| {
        let e = v.norm_sqr();
        if ky[j] != 0 {
            out.r3 += e;
        } else if kz[l] != 0 {
            out.r2 += e;
        } else if kx[i] != 0 {
            out.r1 += e;
        } else {
            out.zero += e;
        }
    });
    let scale = grid.point_weight() / grid.total_points() as f64;
    out.zero *= scale;
    out.r1 *= scale;
    out.r2 *= scale;
    out.r3 *= scale;
    out
}

/// Σ_{i+k≤m} a^i c^k with the empty product counted once.
pub(crate) fn simplex_weight(a: f64, c: f64, m: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..=m {
        let ai = a.powi(i as i32);
        for k in 0..=(m - i) {
            sum += ai * c.powi(k as i32);
        }
    }
    sum
}

/// Σ_{i+j+k≤m} a^i b^j c^k.
pub(crate) fn simplex3(a: f64, b: f64, c: f64, m: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..=m {
        sum += b.powi(j as i32) * simplex_weight(a, c, m - j);
    }
    sum
}

/// Per-level diagonal weight table over (transport index, spare index):
/// W[it, is] = prefactor · Σ_{i+k≤order} (g·k_t)^{2i} k_s^{2k}.
fn level_table(
    f: &SpectralField,
    ta: usize,
    sa: usize,
    g: f64,
    prefactor: f64,
    order: usize,
) -> Array2<f64> {
    let grid = f.grid();
    let kt = grid.wavenumbers(ta);
    let ks = grid.wavenumbers(sa);
    Array2::from_shape_fn((kt.len(), ks.len()), |(it, is)| {
        let a = (g * kt[it] as f64).powi(2);
        let c = (ks[is] as f64).powi(2);
        prefactor * simplex_weight(a, c, order)
    })
}

/// Sum of |F|² against a diagonal (transport, spare) table.
fn mode_sum(f: &SpectralField, ta: usize, sa: usize, table: &Array2<f64>) -> f64 {
    let mut sum = 0.0;
    Zip::indexed(f.data()).for_each(|idx, v| {
        let i = [idx.0, idx.1, idx.2];
        sum += v.norm_sqr() * table[[i[ta], i[sa]]];
    });
    sum
}

/// Σ_j levels[j].0 · Σ_{i+k≤levels[j].1} g^{2i} ‖∂_t^i Γ^j ∂_s^k f‖₂²,
/// evaluated by chaining Γ once per level and folding the i, k sums into a
/// diagonal weight table.
fn weighted_gamma_sum(
    f: &SpectralField,
    ctx: &GammaContext,
    g: f64,
    levels: &[(f64, usize)],
) -> Result<f64> {
    let ta = ctx.direction().transport_axis();
    let pa = ctx.direction().profile_axis();
    let sa = 3 - ta - pa;
    let mut sum = 0.0;
    let mut chain = f.clone();
    for (j, &(prefactor, order)) in levels.iter().enumerate() {
        if j > 0 {
            chain = ctx.apply_gamma(&chain, 0, 1, 0)?;
        }
        let table = level_table(f, ta, sa, g, prefactor, order);
        sum += mode_sum(&chain, ta, sa, &table);
    }
    let grid = f.grid();
    Ok(sum * grid.point_weight() / grid.total_points() as f64)
}

/// Twisted Sobolev norm of order `m`:
/// sqrt(Σ_{i+j+k≤m} g^{2i} Φ^{2j} ‖∂_t^i Γ^j ∂_s^k f‖₂²),
/// with ∂_t along the transport axis and ∂_s along the spare axis of the
/// context's shear frame.
pub fn z_norm(f: &SpectralField, ctx: &GammaContext, m: usize, g: f64) -> Result<f64> {
    f.grid().same_as(ctx.grid())?;
    let phi = ctx.phi();
    let levels: Vec<(f64, usize)> = (0..=m).map(|j| (phi.powi(2 * j as i32), m - j)).collect();
    Ok(weighted_gamma_sum(f, ctx, g, &levels)?.sqrt())
}

/// Single-carrier-mode version of [`z_norm`] for profiles stored on a y line.
///
/// For f = g(y) e^{i(αx + γz)} the transport and spare derivatives reduce to
/// iα and iγ, and Γ acts as ∂_y + iα B¹(y)·. The context must be built on the
/// matching y-line grid. Data is assumed band-limited enough that the B¹
/// products do not alias; no truncation is applied.
pub fn z_norm_mode(
    values: &[num_complex::Complex64],
    alpha: i64,
    gamma: i64,
    ctx: &GammaContext,
    m: usize,
    g: f64,
) -> Result<f64> {
    let n = ctx.grid().n(1);
    if values.len() != n || ctx.grid().total_points() != n {
        return Err(CoreError::GridMismatch(
            "mode profile length and context line grid differ".into(),
        ));
    }
    let phi = ctx.phi();
    let b1 = ctx.b_row(1);
    let ky = ctx.grid().wavenumbers(1);
    let engine = crate::fft::engine();
    let apply_gamma_line = |v: &[num_complex::Complex64]| -> Vec<num_complex::Complex64> {
        let mut spec = v.to_vec();
        engine.forward1(&mut spec);
        for (idx, c) in spec.iter_mut().enumerate() {
            let k = ky[idx];
            // Odd-order derivative at the unpaired Nyquist index is zeroed.
            if 2 * idx == n {
                *c = num_complex::Complex64::new(0.0, 0.0);
            } else {
                *c *= num_complex::Complex64::new(0.0, k as f64);
            }
        }
        engine.inverse1(&mut spec);
        for (i, c) in spec.iter_mut().enumerate() {
            *c += num_complex::Complex64::new(0.0, alpha as f64) * b1[i] * v[i];
        }
        spec
    };
    let measure = 2.0 * std::f64::consts::PI / n as f64;
    let a = (g * alpha as f64).powi(2);
    let c = (gamma as f64).powi(2);
    let mut sum = 0.0;
    let mut chain = values.to_vec();
    for j in 0..=m {
        if j > 0 {
            chain = apply_gamma_line(&chain);
        }
        let l2sq: f64 = chain.iter().map(|v| v.norm_sqr()).sum::<f64>() * measure;
        sum += phi.powi(2 * j as i32) * simplex_weight(a, c, m - j) * l2sq;
    }
    Ok(sum.sqrt())
}

/// Φ(τ) = 1/(1 + τ³/A), the Γ-count damping weight.
pub fn phi_weight(tau: f64, amplitude: f64) -> f64 {
    1.0 / (1.0 + tau * tau * tau / amplitude)
}

/// Weights for one layered functional evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionalParams {
    /// Top simplex order P of the cell block; the chemical and carried blocks
    /// run one order higher.
    pub order: usize,
    /// Transport-derivative weight G.
    pub g: f64,
    /// Carried-block weight Q.
    pub q: f64,
    /// Measured linear decay rate entering the carried-block damping.
    pub delta_z: f64,
}

/// The two standard weight presets: the full-horizon ledger runs one order
/// deeper with unit carried weight; the per-window ledger keeps the base
/// order and pays A^{1/4} on the carried block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FunctionalPreset {
    H,
    L,
}

impl FunctionalPreset {
    pub fn params(&self, m: usize, g: f64, amplitude: f64, delta_z: f64) -> FunctionalParams {
        match self {
            FunctionalPreset::H => FunctionalParams {
                order: m + 1,
                g,
                q: 1.0,
                delta_z,
            },
            FunctionalPreset::L => FunctionalParams {
                order: m,
                g,
                q: amplitude.powf(0.25),
                delta_z,
            },
        }
    }
}

/// One evaluation of the layered functional and its companion norms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionalValue {
    pub total: f64,
    pub n_block: f64,
    pub c_block: f64,
    pub carried: f64,
    /// Twisted norm of the full chemical remainder at the block order.
    pub z_m: f64,
    pub phi: f64,
}

/// Layered energy functional over a solver state and its chemical split.
///
/// Cell block: Σ_{i+j+k≤P} Φ^{2j} G^{4+2i} ‖Γ^{ijk} n_≠‖₂².
/// Chemical block: Σ_{i+j+k≤P+1} Φ^{2j+2} G^{2i} w_j ‖Γ^{ijk} c_≠‖₂² with
/// w_j = A^{2/3} for j ≤ P and 1 at j = P+1, where c_≠ is the freshly forced
/// remainder (zero at capture time).
/// Carried block: Q² e^{−δ_z τ / (2 A^{1/3})} Σ_{i+j+k≤P+1} ‖∂^i∂^j∂^k 𝔠_≠(t_r)‖₂²
/// over plain axis derivatives of the frozen snapshot, with no G or Φ weights.
pub fn functional_f(
    state: &PksState,
    split: &ChemicalSplit,
    ctx: &GammaContext,
    params: &FunctionalParams,
) -> Result<FunctionalValue> {
    let tol = |x: f64| 1e-9 * x.abs().max(1.0);
    if (ctx.t() - state.t()).abs() > tol(state.t()) {
        return Err(CoreError::Protocol(format!(
            "context time {} does not match state time {}",
            ctx.t(),
            state.t()
        )));
    }
    if (ctx.t_r() - split.t_r()).abs() > tol(split.t_r()) {
        return Err(CoreError::Protocol(format!(
            "context anchored at {} but split captured at {}",
            ctx.t_r(),
            split.t_r()
        )));
    }
    if ctx.direction() != split.direction() {
        return Err(CoreError::Protocol(format!(
            "context frame {} does not match split frame {}",
            ctx.direction().label(),
            split.direction().label()
        )));
    }
    state.n().grid().same_as(ctx.grid())?;

    let amplitude = state.amplitude();
    let p = params.order;
    let g = params.g;
    let phi = ctx.phi();
    let ta = ctx.direction().transport_axis();

    let n_rem = decompose(state.n(), ta).remainder;
    let n_levels: Vec<(f64, usize)> = (0..=p)
        .map(|j| (g.powi(4) * phi.powi(2 * j as i32), p - j))
        .collect();
    let n_block = weighted_gamma_sum(&n_rem, ctx, g, &n_levels)?;

    let c_levels: Vec<(f64, usize)> = (0..=p + 1)
        .map(|j| {
            let band = if j <= p { amplitude.powf(2.0 / 3.0) } else { 1.0 };
            (phi.powi(2 * (j as i32 + 1)) * band, p + 1 - j)
        })
        .collect();
    let c_block = weighted_gamma_sum(split.c_fresh(), ctx, g, &c_levels)?;

    let carried = {
        let snap = split.carried();
        let grid = snap.grid();
        let pa = ctx.direction().profile_axis();
        let sa = 3 - ta - pa;
        let kt = grid.wavenumbers(ta);
        let kp = grid.wavenumbers(pa);
        let ks = grid.wavenumbers(sa);
        let mut sum = 0.0;
        Zip::indexed(snap.data()).for_each(|idx, v| {
            let i = [idx.0, idx.1, idx.2];
            let a = (kt[i[ta]] as f64).powi(2);
            let b = (kp[i[pa]] as f64).powi(2);
            let c = (ks[i[sa]] as f64).powi(2);
            sum += v.norm_sqr() * simplex3(a, b, c, p + 1);
        });
        let decay = (-params.delta_z * ctx.tau() / (2.0 * amplitude.powf(1.0 / 3.0))).exp();
        params.q * params.q * decay * sum * grid.point_weight() / grid.total_points() as f64
    };

    let c_full_rem = decompose(state.c(), ta).remainder;
    let z_m = z_norm(&c_full_rem, ctx, p, g)?;

    Ok(FunctionalValue {
        total: n_block + c_block + carried,
        n_block,
        c_block,
        carried,
        z_m,
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RealField;
    use crate::grid::Grid;
    use crate::profile::ShearProfile;
    use crate::schedule::FlowSchedule;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn ctx_at(schedule: &FlowSchedule, grid: Grid, t: f64, m: usize) -> GammaContext {
        let mut ctx = GammaContext::new(grid, schedule, 0.0, m).unwrap();
        let steps = (t / 0.25).ceil().max(1.0) as usize;
        for s in 1..=steps {
            ctx.accumulate_b(t * s as f64 / steps as f64).unwrap();
        }
        ctx
    }

    #[test]
    fn decompose_resums_bitwise() {
        let grid = Grid::new(8, 8, 4).unwrap();
        let f = SpectralField::random_band_limited(grid, [2, 2, 1], 7);
        for axis in 0..3 {
            let parts = decompose(&f, axis);
            Zip::from(f.data())
                .and(parts.average.data())
                .and(parts.remainder.data())
                .for_each(|orig, a, r| {
                    assert_eq!(*orig, *a + *r);
                    assert!(a.norm_sqr() == 0.0 || r.norm_sqr() == 0.0);
                });
        }
    }

    #[test]
    fn region_partition_matches_parseval() {
        let grid = Grid::new(8, 6, 4).unwrap();
        let f = SpectralField::random_band_limited(grid, [2, 2, 1], 3);
        let e = region_energies(&f);
        let total = f.l2_norm().powi(2);
        assert!((e.total() - total).abs() <= 1e-13 * total);
    }

    #[test]
    fn regions_pick_out_the_right_carriers() {
        let grid = Grid::new(8, 8, 8).unwrap();
        let case = |f: fn(f64, f64, f64) -> f64| {
            let real = RealField::from_fn(grid.clone(), f);
            region_energies(&real.transform().unwrap())
        };
        let ex = case(|x, _, _| x.cos());
        assert!(ex.r1 > 1e-10 && ex.r2 < 1e-20 && ex.r3 < 1e-20);
        let ez = case(|_, _, z| z.cos());
        assert!(ez.r2 > 1e-10 && ez.r1 < 1e-20 && ez.r3 < 1e-20);
        let ey = case(|_, y, _| y.cos());
        assert!(ey.r3 > 1e-10 && ey.r1 < 1e-20 && ey.r2 < 1e-20);
        let exz = case(|x, _, z| (x + z).cos());
        assert!(exz.r2 > 1e-10 && exz.r1 < 1e-20 && exz.r3 < 1e-20);
    }

    #[test]
    fn double_average_contracts_l2() {
        let grid = Grid::new(8, 8, 4).unwrap();
        let f = SpectralField::random_band_limited(grid, [2, 2, 1], 11);
        let once = decompose(&f, 0).average;
        let twice = double_average(&f);
        assert!(twice.l2_norm() <= once.l2_norm() + 1e-12);
        assert!(once.l2_norm() <= f.l2_norm() + 1e-12);
    }

    #[test]
    fn z_norm_of_cos_y_at_capture_time() {
        let grid = Grid::new(4, 16, 4).unwrap();
        let f = RealField::from_fn(grid.clone(), |_, y, _| y.cos()).transform().unwrap();
        let schedule = FlowSchedule::stationary(ShearProfile::cosine(), 100.0);
        let ctx = GammaContext::new(grid, &schedule, 0.0, 3).unwrap();
        let z = z_norm(&f, &ctx, 2, 1.0).unwrap();
        // At τ = 0 only the Γ^j = ∂_y^j terms survive, each with unit norm
        // ‖cos y‖₂² = 4π³, so the weighted sum is exactly three copies.
        let expect = (3.0 * 4.0 * PI.powi(3)).sqrt();
        assert!((z - expect).abs() <= 1e-10 * expect, "z = {z}");
    }

    #[test]
    fn z_norm_matches_explicit_operator_sum() {
        let grid = Grid::new(12, 12, 6).unwrap();
        let f = SpectralField::random_band_limited(grid.clone(), [2, 2, 1], 19);
        let schedule = FlowSchedule::log_shift(ShearProfile::two_mode(), 50.0);
        let ctx = ctx_at(&schedule, grid, 1.7, 4);
        let m = 2;
        let g = 1.3;
        let z = z_norm(&f, &ctx, m, g).unwrap();
        let phi = ctx.phi();
        let mut explicit = 0.0;
        for i in 0..=m {
            for j in 0..=(m - i) {
                for k in 0..=(m - i - j) {
                    let term = ctx.apply_gamma(&f, i, j, k).unwrap();
                    explicit += g.powi(2 * i as i32)
                        * phi.powi(2 * j as i32)
                        * term.l2_norm().powi(2);
                }
            }
        }
        let explicit = explicit.sqrt();
        assert!(
            (z - explicit).abs() <= 1e-12 * explicit,
            "diagonal {z} vs explicit {explicit}"
        );
    }

    #[test]
    fn x_average_commutes_with_gamma_powers() {
        let grid = Grid::new(12, 12, 4).unwrap();
        let f = SpectralField::random_band_limited(grid.clone(), [3, 3, 1], 23);
        let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 40.0);
        let ctx = ctx_at(&schedule, grid, 2.0, 4);
        for j in 1..=3 {
            let lhs = decompose(&ctx.apply_gamma(&f, 0, j, 0).unwrap(), 0).average;
            let rhs = decompose(&f, 0).average.derivative(1, j).unwrap();
            let scale = rhs.l2_norm().max(1e-14);
            let mut worst = 0.0f64;
            Zip::from(lhs.data()).and(rhs.data()).for_each(|a, b| {
                worst = worst.max((a - b).norm());
            });
            assert!(worst <= 1e-12 * scale, "j = {j}: defect {worst}");
        }
    }

    #[test]
    fn mode_norm_tracks_full_field_norm() {
        let n_y = 64;
        let alpha = 1i64;
        let gamma = 2i64;
        let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 30.0);
        let line = Grid::line_y(n_y).unwrap();
        let mut ctx1 = GammaContext::new(line.clone(), &schedule, 0.0, 3).unwrap();
        let grid3 = Grid::new(8, n_y, 8).unwrap();
        let mut ctx3 = GammaContext::new(grid3.clone(), &schedule, 0.0, 3).unwrap();
        for s in 1..=6 {
            ctx1.accumulate_b(0.25 * s as f64).unwrap();
            ctx3.accumulate_b(0.25 * s as f64).unwrap();
        }
        let ys = line.points(1);
        let profile: Vec<Complex64> = ys
            .iter()
            .map(|&y| Complex64::new((y.cos() + 0.3 * (2.0 * y).sin()) * 0.7, 0.1 * y.sin()))
            .collect();
        let z1 = z_norm_mode(&profile, alpha, gamma, &ctx1, 2, 1.0).unwrap();

        let mut data = ndarray::Array3::zeros(grid3.dims());
        let nx = grid3.n(0) as f64;
        let nz = grid3.n(2) as f64;
        // Place g(y) e^{i(αx+γz)}: coefficient slab at (α, ·, γ).
        let mut line_spec = profile.clone();
        crate::fft::engine().forward1(&mut line_spec);
        let ia = alpha.rem_euclid(grid3.n(0) as i64) as usize;
        let ig = gamma.rem_euclid(grid3.n(2) as i64) as usize;
        for (j, c) in line_spec.iter().enumerate() {
            data[[ia, j, ig]] = *c * Complex64::new(nx * nz, 0.0);
        }
        let f3 = SpectralField::new(grid3, data).unwrap();
        let z3 = z_norm(&f3, &ctx3, 2, 1.0).unwrap();
        let ratio = z3 / z1;
        assert!(
            (ratio - 2.0 * PI).abs() <= 1e-9 * 2.0 * PI,
            "ratio {ratio}"
        );
    }

    #[test]
    fn simplex_weights_count_the_lattice() {
        assert_eq!(simplex_weight(1.0, 1.0, 2) as i64, 6);
        assert_eq!(simplex3(1.0, 1.0, 1.0, 2) as i64, 10);
        assert_eq!(simplex_weight(0.0, 0.0, 3), 1.0);
        // Geometric check against a direct double loop.
        let direct: f64 = (0..=3usize)
            .flat_map(|i| (0..=(3 - i)).map(move |k| (i, k)))
            .map(|(i, k)| 2.0f64.powi(i as i32) * 0.5f64.powi(k as i32))
            .sum();
        assert!((simplex_weight(2.0, 0.5, 3) - direct).abs() < 1e-14);
    }
}
