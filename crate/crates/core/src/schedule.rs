use crate::grid::Grid;
use crate::profile::ShearProfile;
use crate::shift::ShiftLaw;
use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Which velocity component the shear drives and which coordinate it varies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShearDirection {
    /// u = (u(y), 0, 0): transports along x, profile lives on y.
    XInY,
    /// u = (0, 0, u(x)): transports along z, profile lives on x.
    ZInX,
    /// u = (0, u(z), 0): transports along y, profile lives on z.
    YInZ,
}

impl ShearDirection {
    pub fn transport_axis(&self) -> usize {
        match self {
            ShearDirection::XInY => 0,
            ShearDirection::ZInX => 2,
            ShearDirection::YInZ => 1,
        }
    }

    pub fn profile_axis(&self) -> usize {
        match self {
            ShearDirection::XInY => 1,
            ShearDirection::ZInX => 0,
            ShearDirection::YInZ => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ShearDirection::XInY => "x-shear-in-y",
            ShearDirection::ZInX => "z-shear-in-x",
            ShearDirection::YInZ => "y-shear-in-z",
        }
    }
}

/// One leg of a flow program: a shifted shear in a fixed direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phase {
    pub direction: ShearDirection,
    pub profile: ShearProfile,
    pub shift: ShiftLaw,
    pub duration: f64,
}

/// A time-indexed program of shear phases at a fixed amplitude A.
///
/// The solver works in the rescaled frame: the drift has unit peak size and
/// diffusion carries the 1/A factor, so flows never multiply by A themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSchedule {
    amplitude: f64,
    zeta: f64,
    phases: Vec<Phase>,
    cycle: bool,
}

/// The sampled drift at one time: the scalar profile on the profile axis plus
/// the direction tag telling the solver which wavenumber it multiplies.
#[derive(Debug, Clone)]
pub struct ShearSample {
    pub direction: ShearDirection,
    pub values: Vec<f64>,
}

/// Resolved position of a time inside the schedule.
#[derive(Debug, Clone, Copy)]
pub struct PhaseLocator {
    pub index: usize,
    pub start: f64,
    pub local_t: f64,
    /// Absolute start time without cycle folding (start + cycle count × period).
    pub absolute_start: f64,
}

/// ζ(M) = 1/(108(2+M)), the alternating-phase duration exponent.
pub fn zeta_of(m: usize) -> f64 {
    1.0 / (108.0 * (2.0 + m as f64))
}

/// Default gliding-norm order for presets.
pub const DEFAULT_M: usize = 5;

impl FlowSchedule {
    /// No drift at all: the pure diffusion baseline.
    pub fn quiescent(amplitude: f64) -> Self {
        Self {
            amplitude,
            zeta: zeta_of(DEFAULT_M),
            phases: Vec::new(),
            cycle: false,
        }
    }

    pub fn stationary(profile: ShearProfile, amplitude: f64) -> Self {
        Self::single_phase(profile, amplitude, ShiftLaw::None)
    }

    pub fn log_shift(profile: ShearProfile, amplitude: f64) -> Self {
        Self::single_phase(profile, amplitude, ShiftLaw::LogShift)
    }

    /// The rewound flow: log shift restarted every 2A^{1/3}.
    pub fn rewound(profile: ShearProfile, amplitude: f64) -> Self {
        let half_period = amplitude.cbrt();
        Self::single_phase(profile, amplitude, ShiftLaw::Rewound { half_period })
    }

    fn single_phase(profile: ShearProfile, amplitude: f64, shift: ShiftLaw) -> Self {
        Self {
            amplitude,
            zeta: zeta_of(DEFAULT_M),
            phases: vec![Phase {
                direction: ShearDirection::XInY,
                profile: profile.normalized(),
                shift,
                duration: f64::INFINITY,
            }],
            cycle: false,
        }
    }

    /// The alternating program: rewound shears in x, z, y order, each phase of
    /// duration A^{1/3+ζ}, cycling. Switching times land at
    /// T_{I·1} = 3I·D, T_{I·2} = (1+3I)·D, T_{I·3} = (2+3I)·D with D = A^{1/3+ζ}.
    pub fn alternating(profile: ShearProfile, amplitude: f64, zeta: f64) -> Self {
        let duration = amplitude.powf(1.0 / 3.0 + zeta);
        let half_period = amplitude.cbrt();
        let profile = profile.normalized();
        let mk = |direction| Phase {
            direction,
            profile: profile.clone(),
            shift: ShiftLaw::Rewound { half_period },
            duration,
        };
        Self {
            amplitude,
            zeta,
            phases: vec![
                mk(ShearDirection::XInY),
                mk(ShearDirection::ZInX),
                mk(ShearDirection::YInZ),
            ],
            cycle: true,
        }
    }

    pub fn custom(amplitude: f64, zeta: f64, phases: Vec<Phase>, cycle: bool) -> Result<Self> {
        if phases.iter().any(|p| !(p.duration > 0.0)) {
            return Err(CoreError::InvalidGrid("phase durations must be positive".into()));
        }
        Ok(Self {
            amplitude,
            zeta,
            phases,
            cycle,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn cycles(&self) -> bool {
        self.cycle
    }

    pub fn is_quiescent(&self) -> bool {
        self.phases.is_empty()
    }

    /// Duration of one pass over the phase list.
    pub fn pass_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn horizon(&self) -> f64 {
        if self.cycle || self.phases.is_empty() {
            f64::INFINITY
        } else {
            self.pass_duration()
        }
    }

    /// Locate the phase containing time t (start-inclusive).
    pub fn phase_at(&self, t: f64) -> Result<Option<PhaseLocator>> {
        if self.phases.is_empty() {
            return Ok(None);
        }
        let pass = self.pass_duration();
        let (folded, pass_base) = if t < pass || pass.is_infinite() {
            (t, 0.0)
        } else if self.cycle {
            let n = (t / pass).floor();
            (t - n * pass, n * pass)
        } else {
            return Err(CoreError::BeyondHorizon { t, horizon: pass });
        };
        let mut start = 0.0;
        for (index, phase) in self.phases.iter().enumerate() {
            let end = start + phase.duration;
            if folded < end || index == self.phases.len() - 1 {
                return Ok(Some(PhaseLocator {
                    index,
                    start,
                    local_t: folded - start,
                    absolute_start: pass_base + start,
                }));
            }
            start = end;
        }
        unreachable!("non-empty phase list always locates");
    }

    /// The drift profile at time t sampled on the grid's profile axis, with
    /// ‖u‖_∞ ≤ 1 by profile normalization.
    pub fn evaluate_shear(&self, t: f64, grid: &Grid) -> Result<ShearSample> {
        match self.phase_at(t)? {
            None => Ok(ShearSample {
                direction: ShearDirection::XInY,
                values: vec![0.0; grid.n(1)],
            }),
            Some(loc) => {
                let phase = &self.phases[loc.index];
                let points = grid.points(phase.direction.profile_axis());
                let shift = phase.shift.phi(loc.local_t);
                Ok(ShearSample {
                    direction: phase.direction,
                    values: phase.profile.sample_shifted(0, &points, shift),
                })
            }
        }
    }
}
