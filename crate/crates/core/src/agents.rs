//! Attacker-side primitives: the observation filter, the disruption
//! objective, and the deterministic oscillating attacker.
//!
//! The objective scores a set of observed voltages by how far their mean
//! sits from the nominal setpoint `mu`. Two variants of the same Gaussian
//! expression ship because the printed formula is ambiguous about whether
//! the offset constant lives inside or outside the exponential:
//!
//! ```text
//! as_printed: 2 * a * exp(-(mean - mu)^2 / (2 sigma^2) - c)
//! shifted:    2 * (a * exp(-(mean - mu)^2 / (2 sigma^2)) - c)
//! ```
//!
//! With the default constants (a = -2.5, c = -1.2, sigma = -0.05; sigma is
//! stored as printed and only ever squared) both are strictly increasing in
//! |mean - mu|, so they rank any candidate set of states identically;
//! `as_printed` spans (-16.6, 0), `shifted` spans (-2.6, 2.4).

use serde::Deserialize;

use crate::scalar::Real;

/// Filtered voltages the attacker can see, ascending bus id.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<F> {
    pub v: Vec<F>,
}

/// Relative reactive commands for the attacker-held units, one entry per
/// attacked bus in ascending id order, each in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Action<F>(pub Vec<F>);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AgentError {
    #[error("sensor references unknown bus id {0}")]
    UnknownBus(usize),
    #[error("objective needs at least one observed voltage")]
    EmptyObservation,
}

/// Restricts a full voltage vector to the sensor buses, ascending bus id.
///
/// `bus_ids[i]` names the bus at vector position `i`.
pub fn filter_observation<F: Real>(
    v_mag: &[F],
    bus_ids: &[usize],
    sensor_buses: &[usize],
) -> Result<Observation<F>, AgentError> {
    debug_assert_eq!(v_mag.len(), bus_ids.len());
    let mut sensors: Vec<usize> = sensor_buses.to_vec();
    sensors.sort_unstable();
    sensors.dedup();
    let mut v = Vec::with_capacity(sensors.len());
    for id in sensors {
        let pos = bus_ids
            .iter()
            .position(|&b| b == id)
            .ok_or(AgentError::UnknownBus(id))?;
        v.push(v_mag[pos]);
    }
    Ok(Observation { v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveVariant {
    AsPrinted,
    Shifted,
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveParams<F> {
    pub mu: F,
    /// Width parameter as printed; only sigma^2 is ever used.
    pub sigma: F,
    pub c: F,
    pub a: F,
    pub variant: ObjectiveVariant,
}

impl<F: Real> Default for ObjectiveParams<F> {
    fn default() -> Self {
        Self {
            mu: F::one(),
            sigma: F::c(-0.05),
            c: F::c(-1.2),
            a: F::c(-2.5),
            variant: ObjectiveVariant::AsPrinted,
        }
    }
}

impl<F: Real> ObjectiveParams<F> {
    /// Least upper bound of the variant's value; used as the terminal reward
    /// when an attack collapses the power flow entirely.
    pub fn supremum(&self) -> F {
        match self.variant {
            ObjectiveVariant::AsPrinted => F::zero(),
            ObjectiveVariant::Shifted => -F::c(2.0) * self.c,
        }
    }
}

/// Disruption reward of an observation: larger when the mean voltage sits
/// further from `mu`.
pub fn objective<F: Real>(obs: &Observation<F>, params: &ObjectiveParams<F>) -> Result<F, AgentError> {
    if obs.v.is_empty() {
        return Err(AgentError::EmptyObservation);
    }
    let n = F::from_usize(obs.v.len()).expect("len fits scalar");
    let mean = obs.v.iter().copied().sum::<F>() / n;
    let d = mean - params.mu;
    let two = F::c(2.0);
    let gauss_arg = -(d * d) / (two * params.sigma * params.sigma);
    Ok(match params.variant {
        ObjectiveVariant::AsPrinted => two * params.a * (gauss_arg - params.c).exp(),
        ObjectiveVariant::Shifted => two * (params.a * gauss_arg.exp() - params.c),
    })
}

/// Square-wave attacker: every component +1 for `holdoff` steps, then -1 for
/// `holdoff` steps, period `2 * holdoff`. Step counting starts at 0.
pub fn oscillating_action<F: Real>(step: u64, holdoff: u64, dim: usize) -> Action<F> {
    assert!(holdoff > 0, "holdoff must be positive");
    let value = if step % (2 * holdoff) < holdoff { F::one() } else { -F::one() };
    Action(vec![value; dim])
}
