use serde::{Deserialize, Serialize};

/// Time-dependent shift applied to the shear profile: u(t, y) = U(y + φ(t)).
///
/// The rewound variant restarts the logarithmic shift periodically: on each
/// period [2JT, 2JT+2T) the shift follows log(1+s) for half a period, then a
/// smooth cutoff χ_J winds it back to zero, so φ is exactly 2T-periodic,
/// continuous, φ(0) = 0, with |φ′| uniformly bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShiftLaw {
    /// φ ≡ 0 (stationary shear).
    None,
    /// φ(t) = log(1 + t).
    LogShift,
    /// Periodic rewind with plateau length `half_period` (= A^{1/3}).
    Rewound { half_period: f64 },
}

/// Quintic smoothstep: C² monotone ramp from 0 to 1 on [0, 1].
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

impl ShiftLaw {
    pub fn phi(&self, t: f64) -> f64 {
        match *self {
            ShiftLaw::None => 0.0,
            ShiftLaw::LogShift => (1.0 + t.max(0.0)).ln(),
            ShiftLaw::Rewound { half_period } => {
                let period = 2.0 * half_period;
                let s = t.rem_euclid(period);
                if s <= half_period {
                    (1.0 + s).ln()
                } else {
                    (1.0 - smoothstep((s - half_period) / half_period)) * (1.0 + s).ln()
                }
            }
        }
    }

    /// The smooth cutoff χ_J of the rewinding construction: 1 on the J-th
    /// plateau [2JT, (2J+1)T], winding down to 0 on ((2J+1)T, (2J+2)T], and 0
    /// outside. φ(t) = Σ_J χ_J(t)·log(1 + (t − 2JT)) with one active term.
    pub fn chi(&self, j: u64, t: f64) -> f64 {
        match *self {
            ShiftLaw::Rewound { half_period } => {
                let start = 2.0 * j as f64 * half_period;
                let s = t - start;
                if s < 0.0 || s >= 2.0 * half_period {
                    0.0
                } else if s <= half_period {
                    1.0
                } else {
                    1.0 - smoothstep((s - half_period) / half_period)
                }
            }
            _ => 0.0,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            ShiftLaw::Rewound { half_period } => Some(2.0 * half_period),
            _ => None,
        }
    }
}
