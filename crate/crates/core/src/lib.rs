//! Pseudo-spectral solvers for passive scalars and the Patlak–Keller–Segel system
//! under time-dependent shear flows on the periodic box (−π, π]³.
//!
//! The crate is organized around a small set of value types:
//!
//! - [`Grid`], [`RealField`], [`SpectralField`] — collocation grids and fields
//!   with full complex-to-complex transforms ([`fft`]), spectral differentiation,
//!   2/3-rule dealiasing, and norms.
//! - [`ShearProfile`], [`ShiftLaw`], [`FlowSchedule`] — the shear-flow library:
//!   stationary, logarithmically shifted, rewound-periodic, and alternating flows.
//! - [`GammaContext`] — the accumulated integrals B⁽ᵐ⁾(t, y) defining the gliding
//!   derivative Γ = ∂_y + B⁽¹⁾∂_x and the time weight Φ.
//! - [`ModeState`] / [`ScalarState`] — advection–diffusion solvers (per-mode and
//!   full 3-D) built on exact diffusion factors and exact shear phases.
//! - [`PksState`] — the chemotaxis solver with mass conservation, blow-up
//!   detection, and the chemical-remainder splitting co-evolved.
//! - [`diagnostics`] — averages/remainders, Fourier-region energies, gliding
//!   Z-norms, and the coupled functionals built from them.
//! - [`checks`] — numerical property checks for the commutator algebra of Γ and
//!   the heat-semigroup bounds.
//!
//! All operations are deterministic: transforms may parallelize across
//! independent lanes, but every reduction is sequential and every RNG is seeded.

pub mod checkpoint;
pub mod checks;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod field;
pub mod gamma;
pub mod grid;
pub mod pks;
pub mod profile;
pub mod ratefit;
pub mod scalar;
pub mod schedule;
pub mod shift;
pub mod split;

pub use checkpoint::{load_field, save_field, CheckpointMeta};
pub use checks::{
    check_ad_expansion, check_average_contraction, check_gamma_commutators, check_heat_bounds,
    CheckReport, CommutatorReport,
};
pub use diagnostics::{
    decompose, double_average, functional_f, phi_weight, region_energies, z_norm, z_norm_mode,
    Decomposition, FourierRegionEnergy, FunctionalParams, FunctionalPreset, FunctionalValue,
};
pub use error::CoreError;
pub use field::{RealField, SpectralField};
pub use gamma::{GammaContext, GammaSnapshot};
pub use grid::Grid;
pub use pks::{BlowupCause, BlowupVerdict, PksOptions, PksState, StepController};
pub use profile::ShearProfile;
pub use ratefit::{fit_decay_window, fit_log_slope, DecaySample, WindowFit, WindowSelect};
pub use scalar::{
    contraction_factor, fit_ed_exponent, measure_contraction, measure_contraction_windows,
    mode_decay_samples, ContractionOptions, EdExponent, EdRunSpec, EdSweepPoint, ModeState,
    ScalarState,
};
pub use schedule::{FlowSchedule, Phase, ShearDirection, ShearSample};
pub use shift::ShiftLaw;
pub use split::ChemicalSplit;

/// Crate version recorded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) type Result<T> = std::result::Result<T, CoreError>;
