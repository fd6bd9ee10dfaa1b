//! Cross-module oracles: the discrete transport's commutation defect, the
//! x-averaged evolution equation, dimensional reduction, window contraction,
//! transient gradient growth, and the gliding Sobolev embedding.

use ndarray::Zip;
use shearlab_core::checks::transport_commutation_errors;
use shearlab_core::field::{RealField, SpectralField};
use shearlab_core::gamma::GammaContext;
use shearlab_core::grid::Grid;
use shearlab_core::profile::ShearProfile;
use shearlab_core::ratefit::fit_log_slope;
use shearlab_core::scalar::{
    measure_contraction, measure_contraction_windows, ContractionOptions, ScalarState,
};
use shearlab_core::schedule::FlowSchedule;
use shearlab_core::{decompose, ChemicalSplit, PksOptions, PksState};

#[test]
fn transport_commutation_defect_is_second_order() {
    let grid = Grid::new(32, 64, 4).unwrap();
    let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 25.0);
    let errs =
        transport_commutation_errors(&schedule, &grid, 0.8, &[0.1, 0.05, 0.025], 29).unwrap();
    for pair in errs.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!(
            ratio >= 3.5,
            "dt-halving ratio {ratio:.2} below second order (errors {errs:?})"
        );
    }
}

#[test]
fn x_averaged_cell_density_obeys_the_reduced_equation() {
    let grid = Grid::new(32, 32, 16).unwrap();
    let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 50.0);
    let n = RealField::from_fn(grid.clone(), |x, y, z| {
        1.0 + 0.25 * x.cos() + 0.2 * y.cos() + 0.12 * z.cos() + 0.08 * (x + y).cos()
    });
    let c = RealField::zeros(grid.clone());
    let mut state = PksState::new(n, c, 50.0, PksOptions::default()).unwrap();
    for _ in 0..20 {
        state.step(&schedule, 0.05, None, None).unwrap();
    }
    let h = 1e-3;
    let lo = state.clone();
    state.step(&schedule, h, None, None).unwrap();
    let mid = state.clone();
    state.step(&schedule, h, None, None).unwrap();
    let hi = state;

    // Scheme-mirrored right side at the midpoint: (1/A)Δn − (1/A)∇·(n_d ∇c_d)
    // with both factors dealiased, then x-averaged.
    let a = mid.amplitude();
    let nd = mid.n().dealias();
    let cd = mid.c().dealias();
    let n_phys = nd.inverse();
    let mut rhs = SpectralField::zeros(grid.clone());
    for axis in 0..3 {
        let grad = cd.derivative(axis, 1).unwrap();
        let mut flux = grad.inverse_complex();
        Zip::from(&mut flux).and(n_phys.data()).for_each(|f, n| *f *= *n);
        shearlab_core::fft::engine().forward3(&mut flux);
        let div = SpectralField::new(grid.clone(), flux)
            .unwrap()
            .derivative(axis, 1)
            .unwrap();
        Zip::from(rhs.data_mut()).and(div.data()).for_each(|r, d| *r -= *d / a);
        let diff = mid.n().derivative(axis, 2).unwrap();
        Zip::from(rhs.data_mut()).and(diff.data()).for_each(|r, d| *r += *d / a);
    }
    rhs.dealias_inplace();
    let rhs_avg = decompose(&rhs, 0).average;

    let n_lo = decompose(lo.n(), 0).average;
    let n_hi = decompose(hi.n(), 0).average;
    let mut residual2 = 0.0;
    let mut scale2 = 0.0;
    Zip::from(n_hi.data())
        .and(n_lo.data())
        .and(rhs_avg.data())
        .for_each(|hi, lo, rhs| {
            let ddt = (hi - lo) / (2.0 * h);
            residual2 += (ddt - rhs).norm_sqr();
            scale2 += rhs.norm_sqr();
        });
    let rel = (residual2 / scale2).sqrt();
    assert!(rel < 1e-4, "reduced-equation residual {rel:.3e}");
}

#[test]
fn three_d_solver_reproduces_the_two_d_slice() {
    let make = |nx: usize| -> PksState {
        let grid = Grid::new(nx, 24, 20).unwrap();
        let n = RealField::from_fn(grid.clone(), |_, y, z| {
            1.0 + 0.3 * y.cos() + 0.2 * z.cos() + 0.15 * (y + 2.0 * z).cos()
        });
        let c = RealField::from_fn(grid.clone(), |_, y, z| 0.1 * y.cos() * z.cos());
        PksState::new(n, c, 4.0, PksOptions::default()).unwrap()
    };
    let schedule = FlowSchedule::quiescent(4.0);
    let mut full = make(12);
    let mut slice = make(1);
    for _ in 0..150 {
        full.step(&schedule, 0.02, None, None).unwrap();
        slice.step(&schedule, 0.02, None, None).unwrap();
    }
    let (nf, ns) = (full.n_real(), slice.n_real());
    let (cf, cs) = (full.c_real(), slice.c_real());
    let mut worst = 0.0f64;
    for ((i3, j, l), v) in nf.data().indexed_iter() {
        let _ = i3;
        worst = worst.max((v - ns.data()[[0, j, l]]).abs());
    }
    for ((_, j, l), v) in cf.data().indexed_iter() {
        worst = worst.max((v - cs.data()[[0, j, l]]).abs());
    }
    assert!(worst < 1e-10, "x-independent run diverged from its slice by {worst:.3e}");
}

#[test]
fn high_carrier_modes_contract_by_e_within_one_window() {
    let amplitude = 400.0;
    let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), amplitude);
    let opts = ContractionOptions {
        n_y: 128,
        cutoff: 32,
        seeds: vec![3, 4],
        bump_sigma: 0.5,
        steps_per_window: 200,
    };
    // α = √A: the heat factor alone over the window α^{-2/3}A^{1/3} is e^{-1}.
    let factor = measure_contraction(&schedule, 20, 0, None, &opts).unwrap();
    assert!(
        factor <= (-1.0f64).exp() * (1.0 + 1e-6),
        "window factor {factor:.4} above e^-1"
    );
}

#[test]
fn fitted_efolding_windows_contract_uniformly() {
    // The rewound restarts keep the worst-case decay rate uniform in time:
    // a rate calibrated on early periods predicts e-folding windows that keep
    // contracting at full strength arbitrarily late. (A non-rewound shift
    // fails this: its rate degrades as the profile decorrelates.)
    let amplitude = 2000.0;
    let schedule = FlowSchedule::rewound(ShearProfile::cosine(), amplitude);
    let period = 2.0 * amplitude.cbrt();
    let opts = ContractionOptions {
        n_y: 128,
        cutoff: 32,
        seeds: vec![5, 6, 7],
        bump_sigma: 0.5,
        steps_per_window: 200,
    };
    let calibration =
        measure_contraction_windows(&schedule, 1, 0, 8, Some(period), &opts).unwrap();
    // Worst-case rate over periods 4..8; the first few carry the transient
    // while the slowest-decaying profile shape establishes itself.
    let span = 4.0 * period;
    let rate = -calibration[4..].iter().map(|f| f.ln()).sum::<f64>() / span;
    let window = 1.0 / rate;
    let factors =
        measure_contraction_windows(&schedule, 1, 0, 12, Some(window), &opts).unwrap();
    // Assess windows that start beyond the calibration span.
    let offset = (8.0 * period / window).ceil() as usize;
    let tail = &factors[offset..];
    assert!(tail.len() >= 4, "assessment span too short ({} windows)", tail.len());
    let geomean = (tail.iter().map(|f| f.ln()).sum::<f64>() / tail.len() as f64).exp();
    assert!(
        geomean <= (-1.0f64).exp() * 1.05,
        "mean e-folding window factor {geomean:.4} (factors {factors:?})"
    );
    for (m, f) in tail.iter().enumerate() {
        assert!(
            *f <= (-1.0f64).exp() * 1.11,
            "window {} factor {f:.4} under-contracts (factors {factors:?})",
            m + offset
        );
    }
}

#[test]
fn transient_gradient_growth_is_at_most_linear() {
    let amplitude = 1e4;
    let grid = Grid::new(4, 128, 4).unwrap();
    let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), amplitude);
    let f = RealField::from_fn(grid.clone(), |x, y, _| {
        x.sin() * (((y - 1.0).cos() - 1.0) / 0.25).exp()
    });
    let mut state = ScalarState::new(f.transform().unwrap(), amplitude).unwrap();
    let grad_norm = |s: &ScalarState| -> f64 {
        (0..3)
            .map(|a| s.field().derivative(a, 1).unwrap().l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let g0 = grad_norm(&state);
    let mut ts = vec![0.0f64];
    let mut gs = vec![g0];
    for _ in 0..80 {
        for _ in 0..2 {
            state.step(&schedule, 0.2).unwrap();
        }
        ts.push(state.t());
        gs.push(grad_norm(&state));
    }
    let peak = gs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    assert!(
        gs[peak] / g0 >= 1.5,
        "no transient growth observed (peak ratio {:.2})",
        gs[peak] / g0
    );
    let xs: Vec<f64> = (1..=peak).map(|i| (1.0 + ts[i]).ln()).collect();
    let ys: Vec<f64> = (1..=peak).map(|i| (gs[i] / g0).ln()).collect();
    let (slope, _, _) = fit_log_slope(&xs, &ys);
    assert!(
        slope <= 1.2,
        "gradient growth exponent {slope:.3} above the linear-in-t bound"
    );
}

#[test]
fn sup_norm_is_controlled_by_the_gliding_sobolev_sum() {
    let grid = Grid::new(24, 24, 8).unwrap();
    let schedule = FlowSchedule::log_shift(ShearProfile::cosine(), 30.0);
    // Valid embedding constant: ||f||_∞ ≤ sqrt(S)·(2π)^{-3/2}·(Σ_{i+j+k≤2}||Γ^{ijk}f||²)^{1/2}
    // with S = Σ_{k∈Z³} 1/w(k), w(k) = Σ_{i+j+l≤2} kx^{2i} ky^{2j} kz^{2l};
    // the lattice tail beyond radius R is padded by an integral bound.
    let weight = |a: f64, b: f64, c: f64| -> f64 {
        let mut w = 0.0;
        for i in 0..=2 {
            for j in 0..=2 - i {
                for l in 0..=2 - i - j {
                    w += a.powi(i as i32) * b.powi(j as i32) * c.powi(l as i32);
                }
            }
        }
        w
    };
    let radius = 40i64;
    let mut s = 0.0;
    for kx in -radius..=radius {
        for ky in -radius..=radius {
            for kz in -radius..=radius {
                s += 1.0 / weight((kx * kx) as f64, (ky * ky) as f64, (kz * kz) as f64);
            }
        }
    }
    s += 120.0 / (radius - 2) as f64;
    let constant = s.sqrt() * (2.0 * std::f64::consts::PI).powf(-1.5);

    let mut ctx = GammaContext::new(grid.clone(), &schedule, 0.0, 4).unwrap();
    let mut worst = 0.0f64;
    for stage in 0..3 {
        while ctx.t() < 1.2 * stage as f64 {
            ctx.accumulate_b((ctx.t() + 0.4).min(1.2 * stage as f64)).unwrap();
        }
        for seed in [2u64, 9, 23] {
            let f = SpectralField::random_band_limited(grid.clone(), [4, 4, 2], seed);
            let mut sum = 0.0;
            for i in 0..=2usize {
                for j in 0..=2 - i {
                    for l in 0..=2 - i - j {
                        sum += ctx.apply_gamma(&f, i, j, l).unwrap().l2_norm().powi(2);
                    }
                }
            }
            worst = worst.max(f.inverse().linf_norm() / sum.sqrt());
        }
    }
    assert!(
        worst <= constant,
        "embedding ratio {worst:.4} above the constant {constant:.4}"
    );
}

#[test]
fn split_identity_survives_regime_change() {
    // The split stays consistent when the cell density is far from uniform.
    let grid = Grid::new(16, 16, 8).unwrap();
    let schedule = FlowSchedule::log_shift(ShearProfile::two_mode(), 30.0);
    let n = RealField::from_fn(grid.clone(), |x, y, z| {
        1.0 + 0.8 * (x.cos() * y.sin() + 0.5 * z.cos())
    });
    let c = RealField::from_fn(grid.clone(), |x, y, _| 0.2 * (x + y).sin());
    let mut state = PksState::new(n, c, 30.0, PksOptions::default()).unwrap();
    let mut split = ChemicalSplit::capture(&state, &schedule).unwrap();
    let mut ctx = GammaContext::new(grid.clone(), &schedule, 0.0, 3).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..300 {
        state
            .step(&schedule, 0.02, Some(&mut split), Some(&mut ctx))
            .unwrap();
        worst = worst.max(split.identity_residual(&state));
    }
    assert!(worst < 1e-9, "split identity residual {worst:.3e}");
}
