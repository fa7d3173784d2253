//! The analytic weight e^{(a − λθ(t))|D_x|}, the radius-loss rates θ̇, τ̇, η̇
//! and their explicit Euler integration.

use crate::besov::{besov_norm, NormSeries};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lp::Partition;
use crate::state::MhdState;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Largest admissible radius·k_max for weight application.
pub const MAX_EXPONENT: f64 = 700.0;

/// Multiplies coefficient (k, j) by e^{sign·radius·|k|}.
pub fn apply_weight(f: &SpectralField, radius: f64, sign: f64) -> Result<SpectralField> {
    if !(radius >= 0.0) {
        return Err(Error::Validation(format!("weight radius must be nonnegative, got {radius}")));
    }
    let g = *f.grid();
    if radius * g.k_max() > MAX_EXPONENT {
        return Err(Error::RadiusTooLarge { radius, k_max: g.k_max() });
    }
    if radius == 0.0 {
        return Ok(f.clone());
    }
    let s = sign.signum();
    Ok(f.map_modes(|k| Complex64::new((s * radius * g.abs_wavenumber(k)).exp(), 0.0)))
}

/// θ̇ = ‖∂_y u_φ‖_{B^{1/2}} + ‖∂_y b_φ‖_{B^{1/2}}.
pub fn theta_rate(partition: &Partition, u_phi: &SpectralField, b_phi: &SpectralField) -> Result<f64> {
    Ok(besov_norm(partition, &u_phi.dy()?, 0.5)? + besov_norm(partition, &b_phi.dy()?, 0.5)?)
}

/// τ̇ = ‖∂_y u_φ‖_{B^{1/2}} + ε‖∂_y v_φ‖_{B^{1/2}}.
pub fn tau_rate(partition: &Partition, u_phi: &SpectralField, v_phi: &SpectralField, epsilon: f64) -> Result<f64> {
    let mut rate = besov_norm(partition, &u_phi.dy()?, 0.5)?;
    if epsilon != 0.0 {
        rate += epsilon * besov_norm(partition, &v_phi.dy()?, 0.5)?;
    }
    Ok(rate)
}

/// η̇ = ‖∂_y u^ε_φ‖ + ε‖∂_x u^ε_φ‖ + ‖∂_y u_φ‖, all in B^{1/2}. The two
/// states must be within `time_tol` of each other.
pub fn eta_rate(
    partition: &Partition,
    scaled: &MhdState,
    limit: &MhdState,
    epsilon: f64,
    time_tol: f64,
) -> Result<f64> {
    if (scaled.time - limit.time).abs() > time_tol {
        return Err(Error::Range(format!(
            "scaled state at t = {} and limit state at t = {} are more than one step apart",
            scaled.time, limit.time
        )));
    }
    let mut rate = besov_norm(partition, &scaled.u.dy()?, 0.5)? + besov_norm(partition, &limit.u.dy()?, 0.5)?;
    if epsilon != 0.0 {
        rate += epsilon * besov_norm(partition, &scaled.u.dx(), 0.5)?;
    }
    Ok(rate)
}

/// (a, λ, θ) for a run; the same type carries (a, μ, η) for a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticityState {
    pub a: f64,
    pub lambda: f64,
    pub theta: f64,
    pub time: f64,
    /// Δθ of the most recent step.
    pub last_increment: f64,
    pub healthy: bool,
    /// θ ≤ a/λ held at every recorded time.
    pub persistence_ok: bool,
    pub history: NormSeries,
}

impl AnalyticityState {
    pub fn new(a: f64, lambda: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Validation(format!("initial radius a must be positive, got {a}")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Validation(format!("damping coefficient must be nonnegative, got {lambda}")));
        }
        let mut history = NormSeries::new();
        history.record(0.0, "theta", 0.0)?;
        history.record(0.0, "radius_remaining", a)?;
        Ok(Self {
            a,
            lambda,
            theta: 0.0,
            time: 0.0,
            last_increment: 0.0,
            healthy: true,
            persistence_ok: true,
            history,
        })
    }

    /// a − λθ.
    pub fn radius(&self) -> f64 {
        self.a - self.lambda * self.theta
    }
}

/// θ ← θ + dt·rate.
pub fn advance_radius(state: &AnalyticityState, rate: f64, dt: f64) -> Result<AnalyticityState> {
    if !(rate >= 0.0) {
        return Err(Error::Validation(format!("radius-loss rate must be nonnegative, got {rate}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    let mut next = state.clone();
    next.history.record(state.time, "theta_rate", rate)?;
    next.last_increment = dt * rate;
    next.theta += next.last_increment;
    next.time += dt;
    if next.radius() <= 0.0 {
        next.healthy = false;
    }
    if next.lambda > 0.0 && next.theta > next.a / next.lambda {
        next.persistence_ok = false;
    }
    next.history.record(next.time, "theta", next.theta)?;
    next.history.record(next.time, "radius_remaining", next.radius().max(0.0))?;
    Ok(next)
}
