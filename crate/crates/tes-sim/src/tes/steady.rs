//! Self-consistent operating point of the biased sensor.

use super::{
    branch_current, cooling_power, joule_power, pow_n, BiasPoint, TesError, TesParams, TesState,
};

/// Total evaluation budget before the solver reports failure.
const EVAL_BUDGET: usize = 10_000;
/// Fixed-point convergence criterion on successive temperatures [K].
const FIXED_POINT_TOL: f64 = 1e-6;
/// Final bracket width after bisection polish [K].
const POLISH_TOL: f64 = 1e-12;

/// Net power into the film when the electrical branch is settled [W].
fn balance(params: &TesParams, bias: &BiasPoint, optical_power: f64, t: f64) -> f64 {
    joule_power(params, bias, t) + optical_power - cooling_power(params, t)
}

/// Solve `Joule + absorbed optical power = kappa (T^n - T_bath^n)` together
/// with the circuit relation, and return the self-consistent state.
///
/// The solver follows the hot branch: it starts from a temperature that is
/// provably above every root and walks down, which matches how the device is
/// driven onto its transition (biased down from the normal state). A damped
/// fixed-point iteration on temperature does the walking; any overshoot
/// produces a sign bracket that is handed to bisection.
pub fn steady_state(
    params: &TesParams,
    bias: &BiasPoint,
    optical_power: f64,
) -> Result<TesState, TesError> {
    params.validate()?;
    steady_state_unchecked(params, bias, optical_power)
}

/// Hot-branch solve without parameter validation; lets reference sweeps run
/// with the cold stage regulated above the transition, where the operating
/// invariant `t_bath < t_critical` deliberately does not hold.
pub(crate) fn steady_state_unchecked(
    params: &TesParams,
    bias: &BiasPoint,
    optical_power: f64,
) -> Result<TesState, TesError> {
    assert!(optical_power >= 0.0, "optical power must be non-negative");
    assert!(bias.bias_current >= 0.0, "bias current must be non-negative");

    let evals = std::cell::Cell::new(0usize);
    let eval = |t: f64| -> f64 {
        evals.set(evals.get() + 1);
        balance(params, bias, optical_power, t)
    };
    let evals = &evals;

    // Joule power is bounded by (I_b R_s)^2 / (4 R_s), reached at R = R_s,
    // so any temperature cooling faster than P_J_max + P_opt bounds all roots.
    let v0 = bias.bias_current * params.r_shunt;
    let p_max = v0 * v0 / (4.0 * params.r_shunt) + optical_power;
    let n = params.thermal_exponent;
    let t_hi = (pow_n(params.t_bath, n) + p_max / params.kappa).powf(1.0 / n) * (1.0 + 1e-9)
        + params.transition_width;

    // Nothing above the bath can be a root if there is no input power at all.
    if eval(params.t_bath) <= 0.0 {
        return Ok(settled(params, bias, params.t_bath));
    }

    // Damped fixed-point walk down the hot branch. Steps are capped at a
    // quarter transition width so the walk cannot leap over a root pair.
    let mut t = t_hi;
    let max_step = params.transition_width / 4.0;
    let mut bracket: Option<(f64, f64)> = None; // (lo, hi) with balance(lo) > 0 > balance(hi)
    let mut prev_f = eval(t);
    if prev_f > 0.0 {
        // The upper bound itself is not above the hottest root; widen once.
        t = 2.0 * t_hi;
        prev_f = eval(t);
        if prev_f > 0.0 {
            return Err(TesError::NoConvergence { budget: EVAL_BUDGET });
        }
    }
    loop {
        if evals.get() >= EVAL_BUDGET {
            return Err(TesError::NoConvergence { budget: EVAL_BUDGET });
        }
        // Local cooling slope; damping factor 0.5.
        let g = params.kappa * n * pow_n(t, n - 1.0);
        let raw = 0.5 * prev_f / g;
        let step = raw.abs().min(max_step).copysign(raw);
        let mut next = t + step;
        if next < params.t_bath {
            next = params.t_bath;
        }
        let f_next = eval(next);
        if f_next > 0.0 {
            bracket = Some((next, t));
            break;
        }
        if (next - t).abs() < FIXED_POINT_TOL {
            t = next;
            break;
        }
        if next <= params.t_bath {
            // Walked all the way down without a sign change: boundary root.
            return Ok(settled(params, bias, params.t_bath));
        }
        t = next;
        prev_f = f_next;
    }

    // Bisection polish. If the fixed point converged without bracketing,
    // manufacture a bracket around the converged temperature.
    let (mut lo, mut hi) = match bracket {
        Some(b) => b,
        None => {
            let mut half = 2.0 * FIXED_POINT_TOL;
            loop {
                if evals.get() >= EVAL_BUDGET {
                    return Err(TesError::NoConvergence { budget: EVAL_BUDGET });
                }
                let lo = (t - half).max(params.t_bath);
                let hi = t + half;
                if eval(lo) > 0.0 && eval(hi) < 0.0 {
                    break (lo, hi);
                }
                half *= 2.0;
                if half > 64.0 * FIXED_POINT_TOL {
                    // Flat balance around the root (e.g. boundary at the
                    // bath); the fixed-point answer is already adequate.
                    return Ok(settled(params, bias, t));
                }
            }
        }
    };
    while hi - lo > POLISH_TOL {
        if evals.get() >= EVAL_BUDGET {
            return Err(TesError::NoConvergence { budget: EVAL_BUDGET });
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(settled(params, bias, 0.5 * (lo + hi)))
}

fn settled(params: &TesParams, bias: &BiasPoint, t: f64) -> TesState {
    let r = super::transition_resistance(params, t);
    TesState { temperature: t, current: branch_current(params, bias, r) }
}

#[cfg(test)]
mod tests {
    use super::super::{reconstruct_vtes, test_params, transition_resistance};
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_power_input_rests_at_bath() {
        let p = test_params();
        let s = steady_state(&p, &BiasPoint { bias_current: 0.0 }, 0.0).unwrap();
        assert_eq!(s.temperature, p.t_bath);
        assert_eq!(s.current, 0.0);
    }

    #[test]
    fn bright_light_drives_ohmic_point() {
        let p = test_params();
        let bias = BiasPoint { bias_current: 1e-3 };
        // Power far beyond what the link removes at the transition top.
        let optical = 100.0 * cooling_power(&p, p.t_critical + 10.0 * p.transition_width);
        let s = steady_state(&p, &bias, optical).unwrap();
        assert!(s.temperature > p.t_critical + 10.0 * p.transition_width);
        let v = reconstruct_vtes(&p, &bias, &s);
        assert_relative_eq!(s.current, v / p.r_normal, max_relative = 1e-3);
    }

    #[test]
    fn mid_transition_power_balance_residual() {
        let p = test_params();
        // Bias chosen so the operating point lands inside the transition.
        let r_mid = 1.5;
        let i_mid = (cooling_power(&p, p.t_critical) / r_mid).sqrt();
        let bias = BiasPoint { bias_current: i_mid * (p.r_shunt + r_mid) / p.r_shunt };
        let s = steady_state(&p, &bias, 0.0).unwrap();
        let r = transition_resistance(&p, s.temperature);
        assert!(r > 0.01 * p.r_normal && r < 0.99 * p.r_normal, "r = {r}");
        let residual = s.current * s.current * r - cooling_power(&p, s.temperature);
        assert!(residual.abs() < 1e-18, "residual = {residual:e} W");
    }

    #[test]
    fn hot_branch_selected_over_superconducting_root() {
        // At operational bias the balance equation also has a cold root
        // (film superconducting, all current through it). The solver must
        // return the transition root instead.
        let p = test_params();
        let r_mid = 1.5;
        let i_mid = (cooling_power(&p, p.t_critical) / r_mid).sqrt();
        let bias = BiasPoint { bias_current: i_mid * (p.r_shunt + r_mid) / p.r_shunt };
        let s = steady_state(&p, &bias, 0.0).unwrap();
        assert!(
            (s.temperature - p.t_critical).abs() < 10.0 * p.transition_width,
            "expected transition root, got T = {}",
            s.temperature
        );
    }

    #[test]
    fn circuit_relation_holds_at_root() {
        let p = test_params();
        let bias = BiasPoint { bias_current: 0.8e-3 };
        let s = steady_state(&p, &bias, 0.05e-9).unwrap();
        let v = reconstruct_vtes(&p, &bias, &s);
        let r = transition_resistance(&p, s.temperature);
        assert_relative_eq!(s.current, v / r, max_relative = 1e-9);
    }
}
