//! Steady-state current-voltage sweeps and the bath-temperature matcher.

use super::{reconstruct_vtes, steady_state, BiasPoint, TesError, TesParams};

/// Condition an I-V sweep is recorded under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IvCondition {
    /// Dark sweep at the given cold-stage temperature [K].
    BathTemperature(f64),
    /// Sweep at the nominal bath temperature under CW light of the given
    /// power at the detector input [W].
    CwPower(f64),
}

/// One point of an I-V characteristic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IvPoint {
    /// Voltage across the film [V].
    pub v_tes: f64,
    /// Current through the film [A].
    pub i_tes: f64,
}

/// Record the steady-state I-V characteristic over a bias sweep.
///
/// In the dark at low bath temperature the transition segment follows a
/// constant-power hyperbola (`I` roughly inverse in `V`); above the critical
/// temperature the film is a plain resistor of slope `1/r_normal`.
pub fn iv_curve(
    params: &TesParams,
    condition: IvCondition,
    bias_sweep: &[BiasPoint],
) -> Result<Vec<IvPoint>, TesError> {
    validate_sweep(bias_sweep)?;
    let (p, optical) = match condition {
        IvCondition::BathTemperature(t_bath) => {
            let mut p = *params;
            p.t_bath = t_bath;
            (p, 0.0)
        }
        IvCondition::CwPower(power) => {
            assert!(power >= 0.0, "CW power must be non-negative");
            (*params, params.coupling_efficiency * power)
        }
    };
    bias_sweep
        .iter()
        .map(|bias| {
            let state = solve(&p, bias, optical)
                .map_err(|_| TesError::NoConvergenceAtBias { bias_current: bias.bias_current })?;
            Ok(IvPoint { v_tes: reconstruct_vtes(&p, bias, &state), i_tes: state.current })
        })
        .collect()
}

/// Steady solve that tolerates hot-stage sweeps (bath regulated above the
/// transition, where the operating invariant `t_bath < t_critical`
/// deliberately does not hold and the film is saturated ohmic).
fn solve(
    params: &TesParams,
    bias: &BiasPoint,
    optical: f64,
) -> Result<super::TesState, TesError> {
    if params.t_bath < params.t_critical {
        steady_state(params, bias, optical)
    } else {
        super::steady::steady_state_unchecked(params, bias, optical)
    }
}

fn validate_sweep(sweep: &[BiasPoint]) -> Result<(), TesError> {
    if sweep.is_empty() {
        return Err(TesError::InvalidSweep);
    }
    let increasing = sweep.windows(2).all(|w| w[1].bias_current >= w[0].bias_current);
    let decreasing = sweep.windows(2).all(|w| w[1].bias_current <= w[0].bias_current);
    if !(increasing || decreasing) {
        return Err(TesError::InvalidSweep);
    }
    Ok(())
}

/// Result of matching a CW-illuminated sweep to a dark sweep at an elevated
/// bath temperature.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CwBathMatch {
    /// Equivalent bath temperature [K].
    pub equivalent_t_bath: f64,
    /// RMS current distance between the two curves at the optimum [A].
    pub rms_residual: f64,
}

/// Find the dark bath temperature whose I-V curve best matches the curve
/// recorded under CW illumination at the nominal bath temperature.
///
/// Golden-section search over `[t_bath, t_critical + 20 mK]` on the RMS
/// current distance across the sweep.
pub fn match_cw_to_bath(
    params: &TesParams,
    cw_power: f64,
    bias_sweep: &[BiasPoint],
) -> Result<CwBathMatch, TesError> {
    assert!(cw_power >= 0.0, "CW power must be non-negative");
    validate_sweep(bias_sweep)?;
    let reference = iv_curve(params, IvCondition::CwPower(cw_power), bias_sweep)?;

    let distance = |t_bath: f64| -> Result<f64, TesError> {
        let candidate = iv_curve(params, IvCondition::BathTemperature(t_bath), bias_sweep)?;
        let sum: f64 = reference
            .iter()
            .zip(candidate.iter())
            .map(|(a, b)| {
                let d = a.i_tes - b.i_tes;
                d * d
            })
            .sum();
        Ok((sum / reference.len() as f64).sqrt())
    };

    // Golden-section minimisation; the curve family is monotone in the bath
    // temperature so the distance is unimodal.
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut lo = params.t_bath;
    let mut hi = params.t_critical + 20e-3;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = distance(x1)?;
    let mut f2 = distance(x2)?;
    while hi - lo > 1e-6 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = distance(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = distance(x2)?;
        }
    }
    let best = 0.5 * (lo + hi);
    Ok(CwBathMatch { equivalent_t_bath: best, rms_residual: distance(best)? })
}
