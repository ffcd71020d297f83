//! Electrothermal model of a voltage-biased transition-edge sensor.
//!
//! The sensor is a superconducting film whose resistance rises smoothly from
//! zero to its normal value `r_normal` across a narrow temperature window
//! around `t_critical`. It sits in parallel with a small shunt `r_shunt`
//! fed by an external bias current, so the film is voltage-biased whenever
//! its resistance exceeds the shunt. Two state variables evolve: the film
//! temperature (heat balance against a `kappa * (T^n - T_bath^n)` link to
//! the cold stage) and the film current (an inductive branch).

mod dynamics;
mod iv;
mod steady;

pub use dynamics::{step, trace_energy, IntegratedTrace};
pub use iv::{iv_curve, match_cw_to_bath, CwBathMatch, IvCondition, IvPoint};
pub use steady::steady_state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TesError {
    #[error("invalid parameter {field}: {message}")]
    InvalidParams { field: &'static str, message: String },
    #[error("steady-state solver did not converge within {budget} evaluations")]
    NoConvergence { budget: usize },
    #[error("steady-state solver did not converge at bias current {bias_current:.3e} A")]
    NoConvergenceAtBias { bias_current: f64 },
    #[error("step size {dt:.3e} s exceeds the electrical cap L/R_n = {cap:.3e} s")]
    StepTooLarge { dt: f64, cap: f64 },
    #[error("bias sweep must be non-empty and monotone")]
    InvalidSweep,
}

/// Static device and circuit constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TesParams {
    /// Normal-state resistance [Ω].
    pub r_normal: f64,
    /// Shunt resistance [Ω]; much smaller than `r_normal`.
    pub r_shunt: f64,
    /// Transition midpoint temperature [K].
    pub t_critical: f64,
    /// Transition width [K]; the logistic scale parameter.
    pub transition_width: f64,
    /// Cold-stage temperature [K].
    pub t_bath: f64,
    /// Heat capacity of the sensing element [J/K].
    pub heat_capacity: f64,
    /// Thermal-link coefficient [W/K^n].
    pub kappa: f64,
    /// Thermal-link exponent (dimensionless).
    pub thermal_exponent: f64,
    /// Inductance of the current branch [H].
    pub inductance: f64,
    /// Fraction of input light absorbed by the sensor, in [0, 1].
    pub coupling_efficiency: f64,
}

impl TesParams {
    /// Reject non-finite or physically inconsistent constants.
    pub fn validate(&self) -> Result<(), TesError> {
        let finite = |field: &'static str, v: f64| -> Result<(), TesError> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(TesError::InvalidParams { field, message: format!("not finite: {v}") })
            }
        };
        let positive = |field: &'static str, v: f64| -> Result<(), TesError> {
            finite(field, v)?;
            if v > 0.0 {
                Ok(())
            } else {
                Err(TesError::InvalidParams { field, message: format!("must be positive: {v}") })
            }
        };
        positive("r_normal", self.r_normal)?;
        positive("r_shunt", self.r_shunt)?;
        positive("t_critical", self.t_critical)?;
        positive("transition_width", self.transition_width)?;
        positive("t_bath", self.t_bath)?;
        positive("heat_capacity", self.heat_capacity)?;
        positive("kappa", self.kappa)?;
        positive("thermal_exponent", self.thermal_exponent)?;
        positive("inductance", self.inductance)?;
        finite("coupling_efficiency", self.coupling_efficiency)?;
        if self.r_shunt >= self.r_normal {
            return Err(TesError::InvalidParams {
                field: "r_shunt",
                message: format!("{} must be smaller than r_normal {}", self.r_shunt, self.r_normal),
            });
        }
        if self.t_bath >= self.t_critical {
            return Err(TesError::InvalidParams {
                field: "t_bath",
                message: format!(
                    "{} must be below t_critical {} at normal operation",
                    self.t_bath, self.t_critical
                ),
            });
        }
        if !(0.0..=1.0).contains(&self.coupling_efficiency) {
            return Err(TesError::InvalidParams {
                field: "coupling_efficiency",
                message: format!("must lie in [0, 1]: {}", self.coupling_efficiency),
            });
        }
        Ok(())
    }
}

/// Dynamical state advanced by the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TesState {
    /// Film temperature [K].
    pub temperature: f64,
    /// Film current [A].
    pub current: f64,
}

/// Total source current through the shunt network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    /// Bias current [A], >= 0.
    pub bias_current: f64,
}

/// Operating regime of a steady state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Superconducting,
    Transition,
    Normal,
}

impl Regime {
    /// Classify a state; `None` means the state violates the regime
    /// trichotomy (cannot happen for steady states of valid parameters).
    pub fn classify(params: &TesParams, state: &TesState) -> Option<Regime> {
        let r = resistance(params, state);
        if r < 0.01 * params.r_normal {
            Some(Regime::Superconducting)
        } else if r > 0.99 * params.r_normal {
            Some(Regime::Normal)
        } else if (state.temperature - params.t_critical).abs()
            <= 10.0 * params.transition_width
        {
            Some(Regime::Transition)
        } else {
            None
        }
    }
}

/// Numerically stable logistic.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Film resistance at a given temperature [Ω]:
/// `R(T) = R_n / (1 + exp(-(T - T_c)/w))`.
pub fn transition_resistance(params: &TesParams, temperature: f64) -> f64 {
    params.r_normal * logistic((temperature - params.t_critical) / params.transition_width)
}

/// Film resistance in a given state [Ω].
pub fn resistance(params: &TesParams, state: &TesState) -> f64 {
    transition_resistance(params, state.temperature)
}

/// Voltage across the film [V], reconstructed from the shunt current:
/// `V_TES = (I_bias - I_TES) * R_s`.
pub fn reconstruct_vtes(params: &TesParams, bias: &BiasPoint, state: &TesState) -> f64 {
    (bias.bias_current - state.current) * params.r_shunt
}

/// `T^n` with fast paths for the common integer exponents.
pub(crate) fn pow_n(t: f64, n: f64) -> f64 {
    if n == 4.0 {
        let t2 = t * t;
        t2 * t2
    } else if n == 3.0 {
        t * t * t
    } else if n == 5.0 {
        let t2 = t * t;
        t2 * t2 * t
    } else {
        t.powf(n)
    }
}

/// Power flowing from the film into the cold stage [W].
pub(crate) fn cooling_power(params: &TesParams, temperature: f64) -> f64 {
    params.kappa * (pow_n(temperature, params.thermal_exponent)
        - pow_n(params.t_bath, params.thermal_exponent))
}

/// Film current when the electrical branch is in equilibrium at resistance `r`.
pub(crate) fn branch_current(params: &TesParams, bias: &BiasPoint, r: f64) -> f64 {
    bias.bias_current * params.r_shunt / (params.r_shunt + r)
}

/// Joule power dissipated in the film at temperature `t` with the electrical
/// branch settled.
pub(crate) fn joule_power(params: &TesParams, bias: &BiasPoint, t: f64) -> f64 {
    let r = transition_resistance(params, t);
    let i = branch_current(params, bias, r);
    i * i * r
}

#[cfg(test)]
pub(crate) fn test_params() -> TesParams {
    TesParams {
        r_normal: 3.0,
        r_shunt: 16.1e-3,
        t_critical: 0.180,
        transition_width: 0.9e-3,
        t_bath: 0.100,
        heat_capacity: 5e-15,
        kappa: 4e-7,
        thermal_exponent: 4.0,
        inductance: 12e-9,
        coupling_efficiency: 1.0,
    }
}
