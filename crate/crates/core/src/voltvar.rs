//! Distributed Volt/VAr droop control of inverter reactive setpoints.
//!
//! Each controller runs the synchronous update
//!
//! ```text
//! q_rel(t+1) = project( q_rel(t) - d * (v(t) - 1) , [-1, 1] )
//! ```
//!
//! against the voltage of the *previous* power-flow solution — setpoints
//! computed this step take effect in this step's solve, measured voltages
//! come from the last one. The setpoint is relative: the applied reactive
//! power is `q_rel * q_avail`, a fraction of whatever headroom the
//! capability curve leaves at the current active output. Because the
//! headroom moves with the weather, a fixed relative step can overshoot the
//! absolute correction it was tuned for, which is exactly the amplification
//! mechanism the oscillation attack exploits.

use crate::scalar::Real;

/// Projection of a relative setpoint onto the feasible interval [-1, 1].
pub fn project<F: Real>(q_rel: F) -> F {
    q_rel.max(-F::one()).min(F::one())
}

/// State of one Volt/VAr controller.
#[derive(Debug, Clone)]
pub struct ControllerState<F> {
    /// Index of the controlled unit in `Grid::units`.
    pub unit: usize,
    /// Step size (dimensionless, per unit of voltage deviation).
    pub d: F,
    /// Current relative setpoint in [-1, 1].
    pub q_rel: F,
}

impl<F: Real> ControllerState<F> {
    pub fn new(unit: usize, d: F) -> Self {
        Self { unit, d, q_rel: F::zero() }
    }

    /// One synchronous control step against the measured pu voltage.
    /// Pure: returns the successor state, the receiver is untouched.
    #[must_use]
    pub fn voltvar_step(&self, v_measured: F) -> Self {
        Self {
            unit: self.unit,
            d: self.d,
            q_rel: project(self.q_rel - self.d * (v_measured - F::one())),
        }
    }

    /// Absolute reactive power the setpoint commands, MVAr.
    pub fn apply_setpoint(&self, q_avail_mvar: F) -> F {
        self.q_rel * q_avail_mvar
    }
}

/// Default step size; the scenario configuration can override it.
pub const DEFAULT_STEP_SIZE: f64 = 15.0;
