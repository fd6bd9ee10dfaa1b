use crate::fft::engine;
use crate::grid::Grid;
use crate::{CoreError, Result};
use ndarray::Array3;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default cap on spectral derivative order.
pub const DEFAULT_ORDER_CAP: usize = 6;

/// Real samples on a collocation grid, row-major in (x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    data: Array3<f64>,
}

/// Complex Fourier coefficients in FFT storage order along each axis.
///
/// The forward transform is unnormalized: coefficient k holds Σ_x f(x)e^{−ik·x},
/// so the k = 0 entry equals the spatial mean times the point count and
/// Parseval reads ‖f‖₂² = vol·Σ_k|F_k|²/N_tot².
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    data: Array3<Complex64>,
}

fn shape_of(grid: &Grid) -> (usize, usize, usize) {
    let d = grid.dims();
    (d[0], d[1], d[2])
}

impl RealField {
    pub fn new(grid: Grid, data: Array3<f64>) -> Result<Self> {
        if data.dim() != shape_of(&grid) {
            return Err(CoreError::GridMismatch(format!(
                "data shape {:?} vs grid {:?}",
                data.dim(),
                grid.dims()
            )));
        }
        let field = Self { grid, data };
        field.check_finite()?;
        Ok(field)
    }

    pub fn zeros(grid: Grid) -> Self {
        let shape = shape_of(&grid);
        Self {
            grid,
            data: Array3::zeros(shape),
        }
    }

    /// Sample a function of the physical coordinates on the grid.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let (px, py, pz) = (grid.points(0), grid.points(1), grid.points(2));
        let shape = shape_of(&grid);
        let mut data = Array3::zeros(shape);
        for ix in 0..shape.0 {
            for iy in 0..shape.1 {
                for iz in 0..shape.2 {
                    data[[ix, iy, iz]] = f(px[ix], py[iy], pz[iz]);
                }
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CoreError::NonFinite("real field"))
        }
    }

    /// Forward transform; rejects non-finite input.
    pub fn transform(&self) -> Result<SpectralField> {
        self.check_finite()?;
        let mut data = self.data.mapv(|v| Complex64::new(v, 0.0));
        engine().forward3(&mut data);
        Ok(SpectralField {
            grid: self.grid,
            data,
        })
    }

    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.point_weight();
        (self.data.iter().map(|v| v * v).sum::<f64>() * w).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.point_weight() * self.data.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.grid.total_points() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean-zero random field band-limited to |k_axis| ≤ cutoff_axis,
    /// normalized to ‖f‖_∞ = 1. Deterministic in the seed.
    pub fn random_band_limited(grid: Grid, cutoff: [i64; 3], seed: u64) -> Self {
        let spec = SpectralField::random_band_limited(grid, cutoff, seed);
        let mut f = spec.inverse();
        let peak = f.linf_norm();
        if peak > 0.0 {
            f.data.mapv_inplace(|v| v / peak);
        }
        f
    }
}

impl SpectralField {
    pub fn new(grid: Grid, data: Array3<Complex64>) -> Result<Self> {
        if data.dim() != shape_of(&grid) {
            return Err(CoreError::GridMismatch(format!(
                "data shape {:?} vs grid {:?}",
                data.dim(),
                grid.dims()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        let shape = shape_of(&grid);
        Self {
            grid,
            data: Array3::zeros(shape),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    /// Inverse transform, discarding the imaginary residue (roundoff for
    /// Hermitian coefficient sets).
    pub fn inverse(&self) -> RealField {
        let mut data = self.data.clone();
        engine().inverse3(&mut data);
        RealField {
            grid: self.grid,
            data: data.mapv(|v| v.re),
        }
    }

    /// Inverse transform keeping complex samples (for fields that are not
    /// Hermitian, e.g. single-sided mode content).
    pub fn inverse_complex(&self) -> Array3<Complex64> {
        let mut data = self.data.clone();
        engine().inverse3(&mut data);
        data
    }

    /// Spectral derivative: multiplies coefficients by (i·k_axis)^order.
    /// Odd orders zero the Nyquist mode (its sign is ambiguous); the
    /// derivative of a constant is exactly zero.
    pub fn derivative(&self, axis: usize, order: usize) -> Result<Self> {
        self.derivative_with_cap(axis, order, DEFAULT_ORDER_CAP)
    }

    pub fn derivative_with_cap(&self, axis: usize, order: usize, cap: usize) -> Result<Self> {
        if order > cap {
            return Err(CoreError::OrderCap { order, cap });
        }
        if order == 0 {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.derivative_inplace_unchecked(axis, order);
        Ok(out)
    }

    pub(crate) fn derivative_inplace_unchecked(&mut self, axis: usize, order: usize) {
        if order == 0 || !self.grid.is_active(axis) {
            if order > 0 && !self.grid.is_active(axis) {
                // Constant along a degenerate axis: derivative vanishes.
                self.data.fill(Complex64::new(0.0, 0.0));
            }
            return;
        }
        let n = self.grid.n(axis);
        let ks = self.grid.wavenumbers(axis);
        let nyquist = n / 2;
        let factors: Vec<Complex64> = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if order % 2 == 1 && j == nyquist {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k as f64).powu(order as u32)
                }
            })
            .collect();
        scale_along_axis(&mut self.data, axis, &factors);
    }

    /// 2/3-rule dealiasing: zero every coefficient with |k_axis| > floor(N/3)
    /// on any active axis. Idempotent orthogonal projection.
    pub fn dealias(&self) -> Self {
        let mut out = self.clone();
        out.dealias_inplace();
        out
    }

    pub fn dealias_inplace(&mut self) {
        for axis in 0..3 {
            if !self.grid.is_active(axis) {
                continue;
            }
            let cut = self.grid.dealias_cutoff(axis);
            let keep: Vec<bool> = self
                .grid
                .wavenumbers(axis)
                .iter()
                .map(|&k| k.abs() <= cut)
                .collect();
            zero_along_axis(&mut self.data, axis, &keep);
        }
    }

    /// ‖f‖₂ via Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// ‖f‖₂² = vol·Σ|F_k|²/N_tot².
    pub fn energy(&self) -> f64 {
        let ntot = self.grid.total_points() as f64;
        let scale = crate::grid::DOMAIN_VOLUME / (ntot * ntot);
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * scale
    }

    /// Spatial mean (k = 0 coefficient over point count).
    pub fn mean(&self) -> Complex64 {
        self.data[[0, 0, 0]] / self.grid.total_points() as f64
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            Ok(())
        } else {
            Err(CoreError::NonFinite("spectral field"))
        }
    }

    /// Max deviation from Hermitian symmetry, relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let d = self.grid.dims();
        let peak = self
            .data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()))
            .max(1e-300);
        let mut worst = 0.0f64;
        for ix in 0..d[0] {
            let cx = if ix == 0 { 0 } else { d[0] - ix };
            for iy in 0..d[1] {
                let cy = if iy == 0 { 0 } else { d[1] - iy };
                for iz in 0..d[2] {
                    let cz = if iz == 0 { 0 } else { d[2] - iz };
                    let gap = (self.data[[ix, iy, iz]] - self.data[[cx, cy, cz]].conj()).norm();
                    worst = worst.max(gap);
                }
            }
        }
        worst / peak
    }

    /// Hermitian, mean-zero random coefficients supported on
    /// |k_axis| ≤ cutoff_axis (clipped below the Nyquist mode).
    pub fn random_band_limited(grid: Grid, cutoff: [i64; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = grid.dims();
        let ks: Vec<Vec<i64>> = (0..3).map(|a| grid.wavenumbers(a)).collect();
        let mut data = Array3::<Complex64>::zeros(shape_of(&grid));
        let scale = grid.total_points() as f64;
        for ix in 0..d[0] {
            for iy in 0..d[1] {
                for iz in 0..d[2] {
                    let (kx, ky, kz) = (ks[0][ix], ks[1][iy], ks[2][iz]);
                    if kx == 0 && ky == 0 && kz == 0 {
                        continue;
                    }
                    // Visit each ±k pair once, through its lexicographically
                    // positive representative; skip Nyquist rows (no partner).
                    if d[0] > 1 && ix == d[0] / 2
                        || d[1] > 1 && iy == d[1] / 2
                        || d[2] > 1 && iz == d[2] / 2
                    {
                        continue;
                    }
                    if !(kx > 0 || (kx == 0 && (ky > 0 || (ky == 0 && kz > 0)))) {
                        continue;
                    }
                    if kx.abs() > cutoff[0].min(grid.dealias_cutoff(0))
                        || ky.abs() > cutoff[1].min(grid.dealias_cutoff(1))
                        || kz.abs() > cutoff[2].min(grid.dealias_cutoff(2))
                    {
                        continue;
                    }
                    let c = Complex64::new(gauss(&mut rng), gauss(&mut rng)) * (0.5 * scale);
                    let (cx, cy, cz) = (
                        if ix == 0 { 0 } else { d[0] - ix },
                        if iy == 0 { 0 } else { d[1] - iy },
                        if iz == 0 { 0 } else { d[2] - iz },
                    );
                    data[[ix, iy, iz]] = c;
                    data[[cx, cy, cz]] = c.conj();
                }
            }
        }
        Self { grid, data }
    }
}

/// Standard normal deviate by Box–Muller; two uniform draws per call keeps the
/// stream layout independent of rejection behavior.
pub(crate) fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn scale_along_axis(data: &mut Array3<Complex64>, axis: usize, factors: &[Complex64]) {
    let mut index = [0usize; 3];
    let dims = data.dim();
    let dims = [dims.0, dims.1, dims.2];
    for ix in 0..dims[0] {
        index[0] = ix;
        for iy in 0..dims[1] {
            index[1] = iy;
            for iz in 0..dims[2] {
                index[2] = iz;
                data[[ix, iy, iz]] *= factors[index[axis]];
            }
        }
    }
}

fn zero_along_axis(data: &mut Array3<Complex64>, axis: usize, keep: &[bool]) {
    let mut index = [0usize; 3];
    let dims = data.dim();
    let dims = [dims.0, dims.1, dims.2];
    for ix in 0..dims[0] {
        index[0] = ix;
        for iy in 0..dims[1] {
            index[1] = iy;
            for iz in 0..dims[2] {
                index[2] = iz;
                if !keep[index[axis]] {
                    data[[ix, iy, iz]] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_y(n: usize) -> Grid {
        Grid::line_y(n).unwrap()
    }

    #[test]
    fn cos_transforms_to_single_pair() {
        let f = RealField::from_fn(Grid::new(8, 8, 1).unwrap(), |x, _, _| x.cos());
        let spec = f.transform().unwrap();
        let d = spec.data();
        assert!((d[[1, 0, 0]].re - 32.0).abs() < 1e-10); // N_tot/2 = 64/2
        assert!((d[[7, 0, 0]].re - 32.0).abs() < 1e-10);
        let rest: f64 = d
            .indexed_iter()
            .filter(|((ix, iy, iz), _)| !(*iy == 0 && *iz == 0 && (*ix == 1 || *ix == 7)))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        assert!(rest < 1e-13 * 64.0);
    }

    #[test]
    fn constant_transforms_to_k0_only() {
        let f = RealField::from_fn(Grid::new(4, 4, 4).unwrap(), |_, _, _| 1.0);
        let spec = f.transform().unwrap();
        assert!((spec.mean().re - 1.0).abs() < 1e-13);
        let rest: f64 = spec
            .data()
            .indexed_iter()
            .filter(|(idx, _)| *idx != (0, 0, 0))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        assert!(rest < 1e-12);
    }

    #[test]
    fn parseval_and_round_trip_on_random_field() {
        let grid = Grid::new(16, 16, 8).unwrap();
        let f = RealField::random_band_limited(grid, [5, 5, 2], 42);
        let spec = f.transform().unwrap();
        let back = spec.inverse();
        let num: f64 = f
            .data()
            .iter()
            .zip(back.data().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = f.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 1e-12, "round trip rel err {}", num / den);
        let rel = (f.l2_norm() - spec.l2_norm()).abs() / f.l2_norm();
        assert!(rel < 1e-12, "parseval gap {rel}");
    }

    #[test]
    fn norm_of_cos_y_is_sqrt_4_pi_cubed() {
        let f = RealField::from_fn(grid_y(256), |_, y, _| y.cos());
        let expect = (4.0 * std::f64::consts::PI.powi(3)).sqrt();
        assert!((f.l2_norm() - expect).abs() < 1e-10);
        assert!((f.transform().unwrap().l2_norm() - expect).abs() < 1e-10);
    }

    #[test]
    fn mean_of_shifted_sine() {
        let f = RealField::from_fn(Grid::new(16, 1, 1).unwrap(), |x, _, _| x.sin() + 2.0);
        assert!((f.mean() - 2.0).abs() < 1e-13);
        let spec = f.transform().unwrap();
        assert!((spec.mean().re - 2.0).abs() < 1e-13);
        assert!(spec.mean().im.abs() < 1e-13);
    }

    #[test]
    fn derivative_matches_analytic() {
        let g = grid_y(64);
        let f = RealField::from_fn(g, |_, y, _| y.cos());
        let dy = f.transform().unwrap().derivative(1, 1).unwrap().inverse();
        let target = RealField::from_fn(g, |_, y, _| -y.sin());
        let err = dy
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "∂_y cos err {err}");
    }

    #[test]
    fn second_derivative_of_pure_mode() {
        // ∂_x² e^{i3x} = −9e^{i3x}: check on the real pair cos(3x).
        let g = Grid::new(16, 1, 1).unwrap();
        let f = RealField::from_fn(g, |x, _, _| (3.0 * x).cos());
        let dxx = f.transform().unwrap().derivative(0, 2).unwrap().inverse();
        let err = dxx
            .data()
            .iter()
            .zip(f.data().iter())
            .map(|(a, b)| (a + 9.0 * b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn derivative_of_constant_is_zero_and_axes_commute() {
        let g = Grid::new(8, 8, 8).unwrap();
        let c = RealField::from_fn(g, |_, _, _| 5.0).transform().unwrap();
        let d = c.derivative(1, 1).unwrap();
        assert!(d.l2_norm() < 1e-12);

        let f = SpectralField::random_band_limited(g, [2, 2, 2], 7);
        let xy = f.derivative(0, 1).unwrap().derivative(1, 1).unwrap();
        let yx = f.derivative(1, 1).unwrap().derivative(0, 1).unwrap();
        let gap: f64 = xy
            .data()
            .iter()
            .zip(yx.data().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert_eq!(gap, 0.0, "coefficient-exact commutation");
    }

    #[test]
    fn derivative_against_refined_finite_difference() {
        let g = grid_y(64);
        let f = RealField::random_band_limited(g, [0, 16, 0], 3);
        let dy = f.transform().unwrap().derivative(1, 1).unwrap().inverse();
        // Richardson-extrapolated centered difference on a 64× refined grid,
        // sampled back at the coarse points.
        let fine = grid_y(4096);
        let spec = f.transform().unwrap();
        let dfine = refine_to(&spec, fine);
        let h = fine.spacing(1);
        let n = 4096usize;
        let mut worst: f64 = 0.0;
        for j in 0..64 {
            let jf = j * 64;
            let centered = |step: usize| {
                (dfine[(jf + step) % n] - dfine[(jf + n - step) % n]) / (2.0 * step as f64 * h)
            };
            let fd = (4.0 * centered(1) - centered(2)) / 3.0;
            worst = worst.max((fd - dy.data()[[0, j, 0]]).abs());
        }
        let scale = dy.linf_norm();
        assert!(worst / scale < 1e-6, "fd oracle rel err {}", worst / scale);
    }

    fn refine_to(spec: &SpectralField, fine: Grid) -> Vec<f64> {
        // Zero-padded spectral interpolation onto the finer y-grid.
        let coarse_n = spec.grid().n(1);
        let mut padded = SpectralField::zeros(fine);
        let ratio = fine.total_points() as f64 / spec.grid().total_points() as f64;
        for (j, &k) in spec.grid().wavenumbers(1).iter().enumerate() {
            if j == coarse_n / 2 {
                continue;
            }
            let jj = if k >= 0 {
                k as usize
            } else {
                (fine.n(1) as i64 + k) as usize
            };
            padded.data_mut()[[0, jj, 0]] = spec.data()[[0, j, 0]] * ratio;
        }
        padded.inverse().data().iter().copied().collect()
    }

    #[test]
    fn dealias_is_projection_and_matches_analytic_product() {
        let g = grid_y(16);
        // cos²(y) = ½ + ½cos(2y); both survive the N/3 = 5 cutoff.
        let f = RealField::from_fn(g, |_, y, _| y.cos() * y.cos());
        let spec = f.transform().unwrap().dealias();
        let target = RealField::from_fn(g, |_, y, _| 0.5 + 0.5 * (2.0 * y).cos());
        let err = spec
            .inverse()
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);

        // Idempotent, and a contraction in the coefficient inner product.
        let r = SpectralField::random_band_limited(g, [0, 8, 0], 11);
        let once = r.dealias();
        let twice = once.dealias();
        assert_eq!(once.data(), twice.data());
        assert!(once.energy() <= r.energy() + 1e-15);

        // A pure aliasing-band mode (|k| = N/2 − 1 > N/3) is fully zeroed.
        let hi = RealField::from_fn(g, |_, y, _| (7.0 * y).cos());
        assert!(hi.transform().unwrap().dealias().l2_norm() < 1e-12);
    }

    #[test]
    fn random_fields_are_hermitian_and_mean_zero() {
        let g = Grid::new(8, 32, 4).unwrap();
        let spec = SpectralField::random_band_limited(g, [2, 8, 1], 99);
        assert!(spec.hermitian_defect() < 1e-15);
        assert!(spec.mean().norm() < 1e-15);
        let f = RealField::random_band_limited(g, [2, 8, 1], 99);
        assert!((f.linf_norm() - 1.0).abs() < 1e-12);
        assert!(f.mean().abs() < 1e-13);
    }
}
