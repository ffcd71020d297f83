//! Readout chain: current-to-voltage conversion, pulse-amplitude
//! extraction, histogramming, and photon-number discrimination.
//!
//! The amplifier is a fixed current-to-voltage gain with additive white
//! Gaussian noise on the output. A detection shows up as a drop of the
//! output voltage; all downstream analysis works with the drop magnitude
//! relative to the pre-trigger baseline, so photon signals register as
//! positive amplitudes.

mod mixture;

pub use mixture::fit_gaussian_mixture;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("window [{start:.3e}, {end:.3e}] s falls outside the trace (length {trace_end:.3e} s)")]
    WindowOutOfRange { start: f64, end: f64, trace_end: f64 },
    #[error("peak fit failed: {reason}")]
    FitFailed { reason: String },
}

/// Amplifier and digitiser constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReadoutParams {
    /// Current-to-voltage gain [V/A].
    pub gain: f64,
    /// Per-sample Gaussian noise on the output [V].
    pub noise_sigma: f64,
    /// Digitiser sample period [s].
    pub sample_period: f64,
    /// Amplitude-search window after each trigger [s].
    pub window: f64,
}

impl ReadoutParams {
    pub fn validate(&self) -> Result<(), ReadoutError> {
        let bad = |reason: String| ReadoutError::FitFailed { reason };
        if !(self.gain > 0.0) {
            return Err(bad(format!("gain must be positive: {}", self.gain)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(bad(format!("noise_sigma must be non-negative: {}", self.noise_sigma)));
        }
        if !(self.sample_period > 0.0) || !(self.window > 0.0) {
            return Err(bad("sample_period and window must be positive".into()));
        }
        Ok(())
    }
}

/// Sampled output-voltage trace.
#[derive(Debug, Clone)]
pub struct VoltageTrace {
    /// Sample spacing [s].
    pub sample_period: f64,
    /// Output voltage per sample [V].
    pub samples: Vec<f64>,
    /// Trigger instants within the trace [s].
    pub trigger_times: Vec<f64>,
    /// Output level of the undisturbed operating point [V]; fallback
    /// baseline when a trace has no pre-trigger segment.
    pub nominal_baseline: f64,
}

impl VoltageTrace {
    pub fn duration(&self) -> f64 {
        self.sample_period * self.samples.len() as f64
    }
}

/// Per-trigger extracted amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    /// Trigger instant [s].
    pub trigger_time: f64,
    /// Peak drop below baseline within the window [V].
    pub v_max: f64,
}

/// Photon-number bin boundaries in amplitude space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminationThresholds {
    /// Ascending boundaries; `boundaries[k]` separates `k` from `k+1` photons.
    pub boundaries: Vec<f64>,
    /// Boundary between the zero- and one-photon peaks.
    pub single_photon_threshold: f64,
    /// Fitted peak means, index = photon number.
    pub peak_means: Vec<f64>,
    /// Fitted peak widths, index = photon number.
    pub peak_sigmas: Vec<f64>,
}

/// Photon-number assignment of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhotonAssignment {
    /// Amplitude fell in the bin for this photon number.
    Count(u32),
    /// Amplitude above the last boundary: `max_n` or more photons.
    Saturated(u32),
}

impl PhotonAssignment {
    /// Lower edge of the assigned photon-number bin.
    pub fn count(&self) -> u32 {
        match *self {
            PhotonAssignment::Count(n) => n,
            PhotonAssignment::Saturated(n) => n,
        }
    }

    pub fn is_saturated(&self) -> bool {
        matches!(self, PhotonAssignment::Saturated(_))
    }
}

/// Convert a film-current trace into an output-voltage trace:
/// `V_out(t) = gain * I_TES(t) + noise`.
///
/// `baseline_current` is the steady operating current; its amplified level is
/// stored as the nominal baseline of the trace. A detection reduces the film
/// current and therefore the output voltage.
pub fn trace_to_vout(
    readout: &ReadoutParams,
    i_tes_trace: &[f64],
    baseline_current: f64,
    trigger_times: &[f64],
    rng: &mut CounterRng,
) -> VoltageTrace {
    let samples = i_tes_trace
        .iter()
        .map(|&i| {
            let noise =
                if readout.noise_sigma > 0.0 { readout.noise_sigma * rng.normal() } else { 0.0 };
            readout.gain * i + noise
        })
        .collect();
    VoltageTrace {
        sample_period: readout.sample_period,
        samples,
        trigger_times: trigger_times.to_vec(),
        nominal_baseline: readout.gain * baseline_current,
    }
}

/// Pre-trigger interval used for the baseline estimate [s].
const BASELINE_SPAN: f64 = 10e-6;

/// Extract the peak drop below baseline in `[trigger, trigger + window]`.
///
/// The baseline is the mean of up to 10 us of trace immediately before the
/// trigger; a trace with no pre-trigger samples falls back to its nominal
/// baseline.
pub fn extract_vmax(
    trace: &VoltageTrace,
    trigger: f64,
    window: f64,
) -> Result<PulseRecord, ReadoutError> {
    let sp = trace.sample_period;
    let end = trigger + window;
    if trigger < 0.0 || end > trace.duration() + 0.5 * sp {
        return Err(ReadoutError::WindowOutOfRange {
            start: trigger,
            end,
            trace_end: trace.duration(),
        });
    }
    let first = (trigger / sp).ceil() as usize;
    let last = ((end / sp).floor() as usize).min(trace.samples.len() - 1);
    if first > last {
        return Err(ReadoutError::WindowOutOfRange {
            start: trigger,
            end,
            trace_end: trace.duration(),
        });
    }

    let base_first = (((trigger - BASELINE_SPAN) / sp).ceil()).max(0.0) as usize;
    let baseline = if first > base_first {
        let seg = &trace.samples[base_first..first];
        seg.iter().sum::<f64>() / seg.len() as f64
    } else {
        trace.nominal_baseline
    };

    let v_max = trace.samples[first..=last]
        .iter()
        .map(|&v| baseline - v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PulseRecord { trigger_time: trigger, v_max })
}

/// Histogram of pulse amplitudes with the given bin width.
///
/// Returns `(bin_center, count)` pairs for non-empty bins, ascending.
pub fn histogram(records: &[PulseRecord], bin_width: f64) -> Vec<(f64, u64)> {
    assert!(bin_width > 0.0, "bin width must be positive");
    if records.is_empty() {
        return Vec::new();
    }
    let mut counts: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
    for r in records {
        let idx = (r.v_max / bin_width).floor() as i64;
        *counts.entry(idx).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(idx, count)| ((idx as f64 + 0.5) * bin_width, count))
        .collect()
}

/// Minimum events per expected peak for a calibration fit.
const MIN_EVENTS_PER_PEAK: usize = 200;
/// Peaks closer than this many pooled sigmas are unresolvable.
const MIN_PEAK_SEPARATION_SIGMA: f64 = 2.0;

/// Fit photon-number peaks to calibration amplitudes and derive bin
/// boundaries.
///
/// The amplitudes must come from a calibration run at a known wavelength
/// with Poisson photon statistics. A mixture of `max_n + 1` Gaussian peaks
/// is fitted with means initialised proportional to photon number;
/// boundaries sit at midpoints between adjacent means.
pub fn calibrate_thresholds(
    records: &[PulseRecord],
    max_n: usize,
) -> Result<DiscriminationThresholds, ReadoutError> {
    assert!(max_n >= 1, "need at least the zero- and one-photon peaks");
    let needed = MIN_EVENTS_PER_PEAK * (max_n + 1);
    if records.len() < needed {
        return Err(ReadoutError::FitFailed {
            reason: format!("{} events, need at least {needed}", records.len()),
        });
    }
    let values: Vec<f64> = records.iter().map(|r| r.v_max).collect();
    let fit = fit_gaussian_mixture(&values, max_n + 1)?;

    for k in 0..max_n {
        let gap = fit.means[k + 1] - fit.means[k];
        let pooled = 0.5 * (fit.sigmas[k] + fit.sigmas[k + 1]);
        if gap < MIN_PEAK_SEPARATION_SIGMA * pooled {
            return Err(ReadoutError::FitFailed {
                reason: format!(
                    "peaks {k} and {} overlap: gap {gap:.3e} V < {MIN_PEAK_SEPARATION_SIGMA} x {pooled:.3e} V",
                    k + 1
                ),
            });
        }
    }

    let boundaries: Vec<f64> =
        (0..max_n).map(|k| 0.5 * (fit.means[k] + fit.means[k + 1])).collect();
    Ok(DiscriminationThresholds {
        single_photon_threshold: boundaries[0],
        boundaries,
        peak_means: fit.means,
        peak_sigmas: fit.sigmas,
    })
}

/// Bin a record by the calibrated boundaries.
pub fn assign_photon_number(
    record: &PulseRecord,
    thresholds: &DiscriminationThresholds,
) -> PhotonAssignment {
    let n = thresholds
        .boundaries
        .iter()
        .take_while(|&&b| record.v_max > b)
        .count() as u32;
    if n as usize == thresholds.boundaries.len() {
        PhotonAssignment::Saturated(n)
    } else {
        PhotonAssignment::Count(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_trace(n: usize, level: f64, sp: f64) -> VoltageTrace {
        VoltageTrace {
            sample_period: sp,
            samples: vec![level; n],
            trigger_times: vec![],
            nominal_baseline: level,
        }
    }

    #[test]
    fn flat_noiseless_trace_extracts_zero() {
        let trace = flat_trace(8000, 4.0, 4e-9);
        let rec = extract_vmax(&trace, 15e-6, 5e-6).unwrap();
        assert_eq!(rec.v_max, 0.0);
    }

    #[test]
    fn constant_current_maps_through_gain() {
        let readout =
            ReadoutParams { gain: 0.375e6, noise_sigma: 0.0, sample_period: 4e-9, window: 5e-6 };
        let mut rng = CounterRng::new(1);
        let trace = trace_to_vout(&readout, &vec![10e-6; 4000], 10e-6, &[], &mut rng);
        assert!(trace.samples.iter().all(|&v| (v - 3.75).abs() < 1e-12));
        let rec = extract_vmax(&trace, 12e-6, 3e-6).unwrap();
        assert!(rec.v_max.abs() < 1e-12);
    }

    #[test]
    fn noise_sigma_calibration() {
        let sigma = 2e-3;
        let readout =
            ReadoutParams { gain: 0.375e6, noise_sigma: sigma, sample_period: 4e-9, window: 5e-6 };
        let mut rng = CounterRng::new(2);
        let n = 100_000;
        let trace = trace_to_vout(&readout, &vec![0.0; n], 0.0, &[], &mut rng);
        let mean = trace.samples.iter().sum::<f64>() / n as f64;
        let std = (trace.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / n as f64)
            .sqrt();
        // Sample std of n Gaussians has relative error ~ 1/sqrt(2n).
        let tol = 3.0 / (2.0 * n as f64).sqrt();
        assert!((std - sigma).abs() / sigma < tol, "std {std:e} vs sigma {sigma:e}");
    }

    #[test]
    fn triangle_peak_recovered() {
        let sp = 4e-9;
        let n = 8000;
        let trigger = 16e-6;
        let peak_time = trigger + 1e-6;
        let mut samples = vec![1.0; n];
        // Downward triangle of depth 3 mV, 0.4 us on each flank.
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 * sp;
            let d = (t - peak_time).abs();
            if d < 0.4e-6 {
                *s = 1.0 - 3e-3 * (1.0 - d / 0.4e-6);
            }
        }
        let trace = VoltageTrace {
            sample_period: sp,
            samples,
            trigger_times: vec![trigger],
            nominal_baseline: 1.0,
        };
        let rec = extract_vmax(&trace, trigger, 5e-6).unwrap();
        assert_relative_eq!(rec.v_max, 3e-3, max_relative = 1e-6);
    }

    #[test]
    fn peak_outside_window_not_captured() {
        let sp = 4e-9;
        let n = 10_000;
        let trigger = 16e-6;
        let peak_time = trigger + 6e-6;
        let mut samples = vec![1.0; n];
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 * sp;
            let d = (t - peak_time).abs();
            if d < 0.2e-6 {
                *s = 1.0 - 3e-3 * (1.0 - d / 0.2e-6);
            }
        }
        let trace = VoltageTrace {
            sample_period: sp,
            samples,
            trigger_times: vec![trigger],
            nominal_baseline: 1.0,
        };
        let rec = extract_vmax(&trace, trigger, 5e-6).unwrap();
        assert!(rec.v_max.abs() < 1e-9, "peak leaked into the window: {}", rec.v_max);
    }

    #[test]
    fn window_outside_trace_rejected() {
        let trace = flat_trace(1000, 1.0, 4e-9);
        assert!(matches!(
            extract_vmax(&trace, 3e-6, 5e-6),
            Err(ReadoutError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn histogram_conserves_counts_and_handles_empty() {
        assert!(histogram(&[], 1e-3).is_empty());
        let records: Vec<PulseRecord> =
            (0..1000).map(|_| PulseRecord { trigger_time: 0.0, v_max: 4.2e-3 }).collect();
        let h = histogram(&records, 1e-3);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].1, 1000);
        assert_relative_eq!(h[0].0, 4.5e-3, max_relative = 1e-12);
    }

    #[test]
    fn synthetic_two_peak_threshold_near_midpoint() {
        let mut rng = CounterRng::new(3);
        let mut records = Vec::new();
        for _ in 0..2000 {
            records.push(PulseRecord { trigger_time: 0.0, v_max: 0.3e-3 * rng.normal() });
            records.push(PulseRecord {
                trigger_time: 0.0,
                v_max: 4e-3 + 0.3e-3 * rng.normal(),
            });
        }
        let t = calibrate_thresholds(&records, 1).unwrap();
        assert!(
            (t.single_photon_threshold - 2e-3).abs() < 0.2e-3,
            "threshold {:e}",
            t.single_photon_threshold
        );
    }

    #[test]
    fn vacuum_only_data_fails_fit() {
        let mut rng = CounterRng::new(4);
        let records: Vec<PulseRecord> = (0..2000)
            .map(|_| PulseRecord { trigger_time: 0.0, v_max: 0.3e-3 * rng.normal() })
            .collect();
        assert!(matches!(
            calibrate_thresholds(&records, 1),
            Err(ReadoutError::FitFailed { .. })
        ));
    }

    #[test]
    fn assignment_bin_semantics() {
        let t = DiscriminationThresholds {
            boundaries: vec![1.0, 2.0, 3.0],
            single_photon_threshold: 1.0,
            peak_means: vec![0.0, 1.5, 2.5, 3.5],
            peak_sigmas: vec![0.1; 4],
        };
        let rec = |v| PulseRecord { trigger_time: 0.0, v_max: v };
        assert_eq!(assign_photon_number(&rec(0.0), &t), PhotonAssignment::Count(0));
        assert_eq!(assign_photon_number(&rec(1.01), &t), PhotonAssignment::Count(1));
        assert_eq!(assign_photon_number(&rec(2.5), &t), PhotonAssignment::Count(2));
        assert_eq!(assign_photon_number(&rec(9.0), &t), PhotonAssignment::Saturated(3));
        assert!(assign_photon_number(&rec(9.0), &t).is_saturated());
    }

    #[test]
    fn assignment_consistent_with_fitted_means() {
        let mut rng = CounterRng::new(5);
        let mut records = Vec::new();
        for n in 0..3 {
            for _ in 0..1500 {
                records.push(PulseRecord {
                    trigger_time: 0.0,
                    v_max: n as f64 * 5e-3 + 0.4e-3 * rng.normal(),
                });
            }
        }
        let t = calibrate_thresholds(&records, 2).unwrap();
        for (n, &mean) in t.peak_means.iter().enumerate() {
            let a = assign_photon_number(&PulseRecord { trigger_time: 0.0, v_max: mean }, &t);
            assert_eq!(a.count(), n as u32, "peak {n} at {mean:e} misassigned");
        }
    }
}
