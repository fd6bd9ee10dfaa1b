use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Domain length per axis; the box is (−π, π]ᵈ.
pub const DOMAIN_LENGTH: f64 = 2.0 * std::f64::consts::PI;

/// Volume of the full box. Degenerate axes (N = 1) still contribute a factor 2π:
/// a field constant along an axis is a field on the 3-torus, not on a lower-
/// dimensional domain, so ‖cos y‖₂ = √(4π³) regardless of N_x, N_z.
pub const DOMAIN_VOLUME: f64 = DOMAIN_LENGTH * DOMAIN_LENGTH * DOMAIN_LENGTH;

const DEFAULT_POINT_CAP: usize = 1 << 26;

/// Uniform collocation grid on the periodic box.
///
/// Axes with N = 1 are degenerate: the field is constant along them and every
/// axis operation (transform, derivative, dealias) is a no-op there. Active
/// axes require an even N ≥ 4 (powers of two are fastest, any even size works).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        Self::with_point_cap(nx, ny, nz, DEFAULT_POINT_CAP)
    }

    pub fn with_point_cap(nx: usize, ny: usize, nz: usize, cap: usize) -> Result<Self> {
        let dims = [nx, ny, nz];
        for (axis, &n) in dims.iter().enumerate() {
            if n == 0 {
                return Err(CoreError::InvalidGrid(format!("axis {axis} has N = 0")));
            }
            if n > 1 && (n < 4 || n % 2 != 0) {
                return Err(CoreError::InvalidGrid(format!(
                    "active axis {axis} needs even N >= 4, got {n}"
                )));
            }
        }
        let total: usize = dims.iter().product();
        if total > cap {
            return Err(CoreError::InvalidGrid(format!(
                "total point count {total} exceeds cap {cap}"
            )));
        }
        Ok(Self { dims })
    }

    /// One-dimensional grid along y, the common case for mode profiles.
    pub fn line_y(ny: usize) -> Result<Self> {
        Self::new(1, ny, 1)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn total_points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_active(&self, axis: usize) -> bool {
        self.dims[axis] > 1
    }

    /// Grid spacing along an axis (2π/N; 2π for degenerate axes).
    pub fn spacing(&self, axis: usize) -> f64 {
        DOMAIN_LENGTH / self.dims[axis] as f64
    }

    /// Collocation points along an axis: x_j = −π + j·2π/N.
    pub fn points(&self, axis: usize) -> Vec<f64> {
        let n = self.dims[axis];
        let h = self.spacing(axis);
        (0..n).map(|j| -std::f64::consts::PI + j as f64 * h).collect()
    }

    /// Integer wavenumbers in FFT storage order: 0, 1, …, N/2−1, −N/2, …, −1.
    pub fn wavenumbers(&self, axis: usize) -> Vec<i64> {
        let n = self.dims[axis] as i64;
        (0..n).map(|j| if j < (n + 1) / 2 { j } else { j - n }).collect()
    }

    /// Dealiasing cutoff per the 2/3 rule: coefficients with |k| > floor(N/3)
    /// are zeroed. Degenerate axes keep their single k = 0 coefficient.
    pub fn dealias_cutoff(&self, axis: usize) -> i64 {
        (self.dims[axis] / 3) as i64
    }

    /// Quadrature weight of one grid point: volume / point count.
    pub fn point_weight(&self) -> f64 {
        DOMAIN_VOLUME / self.total_points() as f64
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(CoreError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }
}
