//! End-to-end single-trial pipeline: optical waveform -> electrothermal
//! integration -> output-voltage trace -> pulse amplitude.
//!
//! One trial is an isolated trigger window: the sensor starts at the
//! steady operating point for the applied CW floor, a pulse arrives at the
//! trigger instant, and the amplitude is the peak drop within the readout
//! window. Trials are keyed by substream index, so batches parallelise
//! without losing reproducibility.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::Profile;
use crate::optics::{
    build_waveform, CwFloor, OpticsError, PhotonPulse, PhotonStatistics,
};
use crate::readout::{extract_vmax, trace_to_vout, PulseRecord, ReadoutError, ReadoutParams};
use crate::rng::CounterRng;
use crate::tes::{steady_state, trace_energy, BiasPoint, TesError, TesParams, TesState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Tes(#[from] TesError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
}

/// Trigger instant within each trial window [s]; preceded by enough quiet
/// trace for the baseline estimate.
const TRIGGER_TIME: f64 = 12e-6;
/// Quiet tail after the readout window [s].
const TAIL: f64 = 1e-6;

/// Simulation context: profile constants prepared for trial batches.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub tes: TesParams,
    pub bias: BiasPoint,
    pub readout: ReadoutParams,
    /// Source pulse width [s].
    pub pulse_width: f64,
    profile: Profile,
}

/// Steady operating point under a CW floor, shared across a trial batch.
#[derive(Debug, Clone, Copy)]
pub struct OperatingPoint {
    /// CW power at the detector input [W].
    pub cw_input_power: f64,
    /// CW power reaching the absorber [W].
    pub absorbed_floor: f64,
    pub state: TesState,
}

/// Photon content of the trial pulse.
#[derive(Debug, Clone, Copy)]
pub enum TrialPulse {
    /// Exactly this many photons.
    Exact { wavelength: f64, photons: u64 },
    /// Weak coherent pulse of this mean photon number.
    Coherent { wavelength: f64, mean_photons: f64 },
    /// No pulse: noise-only window.
    Dark,
}

impl SimContext {
    pub fn from_profile(profile: &Profile) -> SimContext {
        SimContext {
            tes: profile.tes,
            bias: profile.bias_point(),
            readout: profile.readout,
            pulse_width: profile.pulse.width,
            profile: profile.clone(),
        }
    }

    /// Sub-steps per readout sample needed to respect the integrator cap.
    pub fn substeps(&self) -> usize {
        let cap = self.tes.inductance / self.tes.r_normal;
        (self.readout.sample_period / cap).ceil().max(1.0) as usize
    }

    /// Solve the steady operating point under a CW floor at 1550 nm
    /// equivalent input power.
    pub fn operating_point(&self, cw_input_power: f64) -> Result<OperatingPoint, SimError> {
        let absorbed = self.profile.coupling_for(1550e-9) * cw_input_power;
        let state = steady_state(&self.tes, &self.bias, absorbed)?;
        Ok(OperatingPoint { cw_input_power, absorbed_floor: absorbed, state })
    }

    /// Run one trial and return the extracted amplitude record.
    pub fn pulse_trial(
        &self,
        op: &OperatingPoint,
        pulse: TrialPulse,
        rng: &mut CounterRng,
    ) -> Result<PulseRecord, SimError> {
        let duration = TRIGGER_TIME + self.readout.window + TAIL;
        let (pulses, statistics, coupling) = match pulse {
            TrialPulse::Exact { wavelength, photons } => (
                vec![PhotonPulse {
                    wavelength,
                    mean_photon_number: photons as f64,
                    width: self.pulse_width,
                    arrival_time: TRIGGER_TIME,
                }],
                PhotonStatistics::Fixed,
                self.profile.coupling_for(wavelength),
            ),
            TrialPulse::Coherent { wavelength, mean_photons } => (
                vec![PhotonPulse {
                    wavelength,
                    mean_photon_number: mean_photons,
                    width: self.pulse_width,
                    arrival_time: TRIGGER_TIME,
                }],
                PhotonStatistics::Poisson,
                self.profile.coupling_for(wavelength),
            ),
            TrialPulse::Dark => (Vec::new(), PhotonStatistics::Fixed, 1.0),
        };
        // The floor is already expressed as absorbed power; compensate the
        // pulse-wavelength coupling the waveform builder applies to it.
        let floor = CwFloor { power: op.absorbed_floor / coupling, wavelength: 1550e-9 };
        let waveform = build_waveform(
            &floor,
            &pulses,
            0.0,
            duration,
            coupling,
            self.readout.sample_period,
            statistics,
            rng,
        )?;
        let trace = trace_energy(&self.tes, &op.state, &self.bias, &waveform, self.substeps())?;
        let vout = trace_to_vout(
            &self.readout,
            &trace.currents,
            op.state.current,
            &[TRIGGER_TIME],
            rng,
        );
        Ok(extract_vmax(&vout, TRIGGER_TIME, self.readout.window)?)
    }

    /// Run a reproducible batch of identical trials in parallel.
    ///
    /// Trial `k` draws from substream `stream_base + k` of `seed`, so the
    /// result is independent of thread count and batch splitting.
    pub fn pulse_trials(
        &self,
        op: &OperatingPoint,
        pulse: TrialPulse,
        trials: u64,
        seed: u64,
        stream_base: u64,
    ) -> Result<Vec<f64>, SimError> {
        (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = CounterRng::substream(seed, stream_base + k);
                self.pulse_trial(op, pulse, &mut rng).map(|r| r.v_max)
            })
            .collect()
    }

    /// Calibration run: weak coherent pulses at one wavelength, returning
    /// per-trigger records.
    pub fn calibration_records(
        &self,
        wavelength: f64,
        mean_photons: f64,
        trials: u64,
        seed: u64,
        stream_base: u64,
    ) -> Result<Vec<PulseRecord>, SimError> {
        let op = self.operating_point(0.0)?;
        let amplitudes = self.pulse_trials(
            &op,
            TrialPulse::Coherent { wavelength, mean_photons },
            trials,
            seed,
            stream_base,
        )?;
        Ok(amplitudes
            .into_iter()
            .map(|v_max| PulseRecord { trigger_time: TRIGGER_TIME, v_max })
            .collect())
    }

    /// Noise-free amplitude of a single trial; the physical response with
    /// the stochastic parts (photon statistics, readout noise) switched off.
    pub fn deterministic_response(
        &self,
        op: &OperatingPoint,
        wavelength: f64,
        photons: u64,
    ) -> Result<f64, SimError> {
        let mut quiet = self.clone();
        quiet.readout.noise_sigma = 0.0;
        let mut rng = CounterRng::substream(0, 0);
        let record =
            quiet.pulse_trial(op, TrialPulse::Exact { wavelength, photons }, &mut rng)?;
        Ok(record.v_max)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substeps_respect_integrator_cap() {
        let profile = Profile::paper_like();
        let ctx = SimContext::from_profile(&profile);
        let cap = ctx.tes.inductance / ctx.tes.r_normal;
        assert!(ctx.readout.sample_period / ctx.substeps() as f64 <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn dark_trial_is_noise_floor() {
        let profile = Profile::paper_like();
        let ctx = SimContext::from_profile(&profile);
        let op = ctx.operating_point(0.0).unwrap();
        let v = ctx.pulse_trials(&op, TrialPulse::Dark, 64, 1, 0).unwrap();
        let (mean, _) = mean_std(&v);
        // Max of window noise: positive, a few sigma.
        assert!(mean > 0.0 && mean < 8.0 * ctx.readout.noise_sigma, "floor {mean:e}");
    }

    #[test]
    fn identical_seeds_identical_batches() {
        let profile = Profile::paper_like();
        let ctx = SimContext::from_profile(&profile);
        let op = ctx.operating_point(0.0).unwrap();
        let pulse = TrialPulse::Coherent { wavelength: 1550e-9, mean_photons: 1.0 };
        let a = ctx.pulse_trials(&op, pulse, 32, 99, 0).unwrap();
        let b = ctx.pulse_trials(&op, pulse, 32, 99, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_photon_visible_above_noise() {
        let profile = Profile::paper_like();
        let ctx = SimContext::from_profile(&profile);
        let op = ctx.operating_point(0.0).unwrap();
        let v1 = ctx.deterministic_response(&op, 1550e-9, 1).unwrap();
        assert!(
            v1 > 6.0 * ctx.readout.noise_sigma,
            "single photon response {v1:e} V vs noise {:e} V",
            ctx.readout.noise_sigma
        );
    }
}
