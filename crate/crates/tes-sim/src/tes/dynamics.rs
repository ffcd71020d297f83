//! Time-domain integration of the two-variable electrothermal system.
//!
//! `C dT/dt = I^2 R(T) + P_abs - kappa (T^n - T_bath^n)`
//! `L dI/dt = (I_b - I) R_s - I R(T)`
//!
//! Classical fixed-step fourth-order integration. The step size is capped at
//! `L / R_n`, the electrical stiffness limit of the scheme.

use super::{pow_n, BiasPoint, TesError, TesParams, TesState};
use crate::optics::OpticalWaveform;

/// Precomputed constants for the derivative evaluation.
struct Model {
    r_normal: f64,
    r_shunt: f64,
    t_critical: f64,
    inv_width: f64,
    kappa: f64,
    n: f64,
    t_bath_pow: f64,
    c_inv: f64,
    l_inv: f64,
    bias: f64,
}

impl Model {
    fn new(params: &TesParams, bias: &BiasPoint) -> Self {
        Model {
            r_normal: params.r_normal,
            r_shunt: params.r_shunt,
            t_critical: params.t_critical,
            inv_width: 1.0 / params.transition_width,
            kappa: params.kappa,
            n: params.thermal_exponent,
            t_bath_pow: pow_n(params.t_bath, params.thermal_exponent),
            c_inv: 1.0 / params.heat_capacity,
            l_inv: 1.0 / params.inductance,
            bias: bias.bias_current,
        }
    }

    #[inline]
    fn resistance(&self, t: f64) -> f64 {
        let x = (t - self.t_critical) * self.inv_width;
        let s = if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        };
        self.r_normal * s
    }

    #[inline]
    fn derivative(&self, t: f64, i: f64, p_abs: f64) -> (f64, f64) {
        let r = self.resistance(t);
        let p_joule = i * i * r;
        let p_cool = self.kappa * (pow_n(t, self.n) - self.t_bath_pow);
        let dt = (p_joule + p_abs - p_cool) * self.c_inv;
        let di = ((self.bias - i) * self.r_shunt - i * r) * self.l_inv;
        (dt, di)
    }

    #[inline]
    fn rk4(&self, state: (f64, f64), p_abs: f64, h: f64) -> (f64, f64) {
        let (t, i) = state;
        let (k1t, k1i) = self.derivative(t, i, p_abs);
        let (k2t, k2i) = self.derivative(t + 0.5 * h * k1t, i + 0.5 * h * k1i, p_abs);
        let (k3t, k3i) = self.derivative(t + 0.5 * h * k2t, i + 0.5 * h * k2i, p_abs);
        let (k4t, k4i) = self.derivative(t + h * k3t, i + h * k3i, p_abs);
        (
            t + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
            i + h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i),
        )
    }
}

fn check_dt(params: &TesParams, dt: f64) -> Result<(), TesError> {
    let cap = params.inductance / params.r_normal;
    if !(dt > 0.0) || dt > cap * (1.0 + 1e-12) {
        return Err(TesError::StepTooLarge { dt, cap });
    }
    Ok(())
}

/// Advance the state by one step of size `dt` under constant absorbed power.
pub fn step(
    params: &TesParams,
    state: &TesState,
    bias: &BiasPoint,
    absorbed_power: f64,
    dt: f64,
) -> Result<TesState, TesError> {
    check_dt(params, dt)?;
    let model = Model::new(params, bias);
    let (t, i) = model.rk4((state.temperature, state.current), absorbed_power, dt);
    Ok(TesState { temperature: t, current: i })
}

/// Result of integrating a full absorbed-power waveform.
#[derive(Debug, Clone)]
pub struct IntegratedTrace {
    /// Film current at the start of each waveform sample [A].
    pub currents: Vec<f64>,
    pub final_state: TesState,
    /// Integral of the absorbed optical power [J].
    pub absorbed_energy: f64,
    /// Integral of the Joule power [J].
    pub joule_energy: f64,
    /// Integral of the power into the cold stage [J].
    pub cooling_energy: f64,
    /// Total integration time [s].
    pub duration: f64,
}

/// Integrate the state through a waveform, sub-stepping each waveform sample
/// `substeps` times. Absorbed power is constant within a sample, so the
/// integration is exact in the input and fourth-order in the dynamics.
pub fn trace_energy(
    params: &TesParams,
    initial: &TesState,
    bias: &BiasPoint,
    waveform: &OpticalWaveform,
    substeps: usize,
) -> Result<IntegratedTrace, TesError> {
    assert!(substeps >= 1);
    let h = waveform.sample_period / substeps as f64;
    check_dt(params, h)?;
    let model = Model::new(params, bias);

    let n = waveform.absorbed_power_samples.len();
    let mut currents = Vec::with_capacity(n);
    let mut state = (initial.temperature, initial.current);
    let mut joule = 0.0;
    let mut cooling = 0.0;
    // Trapezoid accumulation of the dissipation integrals at substep
    // resolution; second-order is ample at these step sizes.
    let mut prev_pj = {
        let r = model.resistance(state.0);
        state.1 * state.1 * r
    };
    let mut prev_pc = model.kappa * (pow_n(state.0, model.n) - model.t_bath_pow);

    for &p_abs in &waveform.absorbed_power_samples {
        currents.push(state.1);
        for _ in 0..substeps {
            state = model.rk4(state, p_abs, h);
            let r = model.resistance(state.0);
            let pj = state.1 * state.1 * r;
            let pc = model.kappa * (pow_n(state.0, model.n) - model.t_bath_pow);
            joule += 0.5 * (prev_pj + pj) * h;
            cooling += 0.5 * (prev_pc + pc) * h;
            prev_pj = pj;
            prev_pc = pc;
        }
    }

    Ok(IntegratedTrace {
        currents,
        final_state: TesState { temperature: state.0, current: state.1 },
        absorbed_energy: waveform.total_energy(),
        joule_energy: joule,
        cooling_energy: cooling,
        duration: waveform.duration(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{cooling_power, steady_state, test_params};
    use super::*;
    use crate::optics::{build_waveform, CwFloor, PhotonPulse, PhotonStatistics};
    use crate::rng::CounterRng;

    fn operational_bias(p: &TesParams) -> BiasPoint {
        let r_mid = 1.5;
        let i_mid = (cooling_power(p, p.t_critical) / r_mid).sqrt();
        BiasPoint { bias_current: i_mid * (p.r_shunt + r_mid) / p.r_shunt }
    }

    #[test]
    fn oversized_step_rejected() {
        let p = test_params();
        let s = TesState { temperature: 0.18, current: 10e-6 };
        let err = step(&p, &s, &BiasPoint { bias_current: 1e-3 }, 0.0, 1e-6).unwrap_err();
        assert!(matches!(err, TesError::StepTooLarge { .. }));
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let p = test_params();
        let bias = operational_bias(&p);
        let s0 = steady_state(&p, &bias, 0.0).unwrap();
        let mut s = s0;
        let dt = p.inductance / p.r_normal;
        for _ in 0..1000 {
            s = step(&p, &s, &bias, 0.0, dt).unwrap();
        }
        assert!(
            (s.temperature - s0.temperature).abs() / s0.temperature < 1e-9,
            "temperature drifted from {} to {}",
            s0.temperature,
            s.temperature
        );
        assert!((s.current - s0.current).abs() / s0.current < 1e-9);
    }

    #[test]
    fn impulse_peak_matches_heat_capacity_estimate() {
        // With no bias there is no electrothermal feedback; a deposit much
        // shorter than the thermal time must peak at E/C.
        let p = test_params();
        let bias = BiasPoint { bias_current: 0.0 };
        let initial = TesState { temperature: p.t_bath, current: 0.0 };
        let energy = crate::optics::photon_energy(1550e-9);
        let width = 16e-9;
        let mut rng = CounterRng::new(1);
        let pulse = PhotonPulse {
            wavelength: 1550e-9,
            mean_photon_number: 1.0,
            width,
            arrival_time: 0.0,
        };
        let w = build_waveform(
            &CwFloor::dark(),
            &[pulse],
            0.0,
            2e-6,
            1.0,
            4e-9,
            PhotonStatistics::Fixed,
            &mut rng,
        )
        .unwrap();
        let trace = trace_energy(&p, &initial, &bias, &w, 1).unwrap();
        // Peak temperature excursion along the trace.
        let mut state = (initial.temperature, initial.current);
        let model_peak = {
            let model = super::Model::new(&p, &bias);
            let mut peak: f64 = 0.0;
            for &pa in &w.absorbed_power_samples {
                state = model.rk4(state, pa, 4e-9);
                peak = peak.max(state.0 - p.t_bath);
            }
            peak
        };
        let expected = energy / p.heat_capacity;
        assert!(
            (model_peak - expected).abs() / expected < 0.05,
            "peak dT = {model_peak:e}, E/C = {expected:e}"
        );
        let _ = trace;
    }

    #[test]
    fn halving_dt_converged() {
        let p = test_params();
        let bias = operational_bias(&p);
        let s0 = steady_state(&p, &bias, 0.0).unwrap();
        let mut rng = CounterRng::new(2);
        let pulse = PhotonPulse {
            wavelength: 1550e-9,
            mean_photon_number: 1.0,
            width: 16e-9,
            arrival_time: 0.2e-6,
        };
        let w = build_waveform(
            &CwFloor::dark(),
            &[pulse],
            0.0,
            4e-6,
            1.0,
            4e-9,
            PhotonStatistics::Fixed,
            &mut rng,
        )
        .unwrap();
        let peak_drop = |substeps: usize| {
            let tr = trace_energy(&p, &s0, &bias, &w, substeps).unwrap();
            tr.currents
                .iter()
                .map(|&i| s0.current - i)
                .fold(0.0f64, f64::max)
        };
        let coarse = peak_drop(1);
        let fine = peak_drop(2);
        assert!(
            (coarse - fine).abs() / fine < 0.005,
            "coarse {coarse:e} fine {fine:e}"
        );
    }

    #[test]
    fn energy_bookkeeping_closes() {
        let p = test_params();
        let bias = operational_bias(&p);
        let s0 = steady_state(&p, &bias, 0.0).unwrap();
        let mut rng = CounterRng::new(3);
        let pulse = PhotonPulse {
            wavelength: 1550e-9,
            mean_photon_number: 3.0,
            width: 16e-9,
            arrival_time: 1e-6,
        };
        // Long enough that the transient fully decays.
        let w = build_waveform(
            &CwFloor::dark(),
            &[pulse],
            0.0,
            40e-6,
            1.0,
            4e-9,
            PhotonStatistics::Fixed,
            &mut rng,
        )
        .unwrap();
        let tr = trace_energy(&p, &s0, &bias, &w, 1).unwrap();
        // Closed transient: the state must be back at the operating point.
        assert!((tr.final_state.temperature - s0.temperature).abs() < 1e-9);
        // Deposited optical energy leaves through the thermal link net of the
        // Joule backoff.
        let pj0 = s0.current * s0.current * super::super::resistance(&p, &s0);
        let pc0 = cooling_power(&p, s0.temperature);
        let excess = (tr.cooling_energy - pc0 * tr.duration) - (tr.joule_energy - pj0 * tr.duration);
        let deposited = tr.absorbed_energy;
        assert!(
            (excess - deposited).abs() / deposited < 0.01,
            "excess {excess:e} vs deposited {deposited:e}"
        );
    }
}
