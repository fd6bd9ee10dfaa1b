//! Chemical-remainder splitting around an anchor time.
//!
//! At capture time t_r the transport remainder of the chemical field is
//! frozen. From then on two companions evolve in lockstep with the solver:
//! `d` carries the frozen data through the source-free linear flow, and
//! `c_fresh` integrates the same flow from zero data with the live cell
//! source. Linearity makes remainder(𝔠) = c_fresh + d an identity of the
//! scheme, so its drift is a bug tripwire rather than a modeling error.

use crate::field::SpectralField;
use crate::grid::Grid;
use crate::pks::PksState;
use crate::scalar::{rotate_transport, DriftPanel};
use crate::schedule::{FlowSchedule, ShearDirection};
use crate::{diagnostics, CoreError, Result};
use ndarray::Zip;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct ChemicalSplit {
    t_r: f64,
    direction: ShearDirection,
    snapshot: SpectralField,
    d: SpectralField,
    c_fresh: SpectralField,
}

impl ChemicalSplit {
    /// Freeze the chemical remainder of `state` in the frame of the phase
    /// active at the current time (transport along x when the schedule is
    /// quiescent).
    pub fn capture(state: &PksState, schedule: &FlowSchedule) -> Result<Self> {
        let t_r = state.t();
        let direction = match schedule.phase_at(t_r)? {
            Some(loc) => schedule.phases()[loc.index].direction,
            None => ShearDirection::XInY,
        };
        let snapshot = diagnostics::decompose(state.c(), direction.transport_axis()).remainder;
        let c_fresh = SpectralField::zeros(snapshot.grid().clone());
        Ok(Self {
            t_r,
            direction,
            d: snapshot.clone(),
            snapshot,
            c_fresh,
        })
    }

    /// Reassemble a split from checkpointed parts.
    pub fn from_parts(
        t_r: f64,
        direction: ShearDirection,
        snapshot: SpectralField,
        d: SpectralField,
        c_fresh: SpectralField,
    ) -> Result<Self> {
        snapshot.grid().same_as(d.grid())?;
        snapshot.grid().same_as(c_fresh.grid())?;
        if !t_r.is_finite() {
            return Err(CoreError::Protocol("non-finite anchor time".into()));
        }
        Ok(Self {
            t_r,
            direction,
            snapshot,
            d,
            c_fresh,
        })
    }

    pub fn t_r(&self) -> f64 {
        self.t_r
    }

    pub fn direction(&self) -> ShearDirection {
        self.direction
    }

    /// The frozen remainder at the anchor time.
    pub fn carried(&self) -> &SpectralField {
        &self.snapshot
    }

    /// The frozen data carried forward by the source-free flow.
    pub fn d(&self) -> &SpectralField {
        &self.d
    }

    /// The freshly forced remainder, zero at the anchor time.
    pub fn c_fresh(&self) -> &SpectralField {
        &self.c_fresh
    }

    /// max-relative defect of remainder(𝔠) = c_fresh + d. Grows only through
    /// roundoff; anything beyond solver accuracy means a scheme bug.
    pub fn identity_residual(&self, state: &PksState) -> f64 {
        let rem = diagnostics::decompose(state.c(), self.direction.transport_axis()).remainder;
        let mut defect = 0.0f64;
        Zip::from(rem.data())
            .and(self.d.data())
            .and(self.c_fresh.data())
            .for_each(|r, d, c| {
                defect += (r - d - c).norm_sqr();
            });
        let grid = rem.grid();
        let scale = grid.point_weight() / grid.total_points() as f64;
        (defect * scale).sqrt() / rem.l2_norm().max(1e-14)
    }

    /// Exact half-step diffusion, mirroring the solver's coupled update:
    /// `d` decays source-free; `c_fresh` picks up the pre-decay cell source
    /// on transport-remainder lanes only.
    pub(crate) fn half_diffusion(
        &mut self,
        fx: &[f64],
        fy: &[f64],
        fz: &[f64],
        s_over_a: f64,
        n_before: &SpectralField,
    ) {
        let ta = self.direction.transport_axis();
        Zip::indexed(self.d.data_mut()).for_each(|(i, j, l), v| {
            *v *= fx[i] * fy[j] * fz[l];
        });
        Zip::indexed(self.c_fresh.data_mut())
            .and(n_before.data())
            .for_each(|(i, j, l), v, n0| {
                let e = fx[i] * fy[j] * fz[l];
                if [i, j, l][ta] != 0 {
                    *v = (*v + *n0 * s_over_a) * e;
                } else {
                    *v = Complex64::new(0.0, 0.0);
                }
            });
    }

    pub(crate) fn rotate(&mut self, grid: &Grid, panel: &DriftPanel, dt: f64) {
        rotate_transport(self.d.data_mut(), grid, panel, dt);
        rotate_transport(self.c_fresh.data_mut(), grid, panel, dt);
    }

    pub(crate) fn guard_direction(&self, active: ShearDirection) -> Result<()> {
        if active != self.direction {
            return Err(CoreError::SplitDirection(format!(
                "split captured in the {} frame but the active phase shears {}",
                self.direction.label(),
                active.label()
            )));
        }
        Ok(())
    }
}
