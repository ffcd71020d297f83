//! Bright-light attack studies on the energy-resolving detector.
//!
//! Two procedures are modelled end to end:
//!
//! 1. *Wavelength faking*: `N` photons at wavelength `N * lambda` deposit
//!    the same energy as one photon at `lambda`, so a photon-number readout
//!    can be forged by choosing a proportionally longer wavelength.
//! 2. *Blinding*: CW light parks the sensor at the top of its transition,
//!    where single photons no longer produce a registrable amplitude but a
//!    bright pulse of the right energy reproduces the normal single-photon
//!    response.

use serde::Serialize;
use thiserror::Error;

use crate::optics::photon_energy;
use crate::readout::DiscriminationThresholds;
use crate::sim::{mean_std, SimContext, SimError, TrialPulse};
use crate::tes::{transition_resistance, TesState};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("no grid power blinds the detector (grid top {grid_top:.3e} W)")]
    NotBlindable { grid_top: f64 },
    #[error("need at least 3 grid points inside the scan range, found {found}")]
    InsufficientPoints { found: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Recipe for forging a photon-number readout with longer-wavelength light.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WavelengthFakePlan {
    /// Wavelength the receiver believes it is measuring [m].
    pub target_wavelength: f64,
    /// Photon number to forge.
    pub target_n: u32,
    /// Wavelength the forger actually sends [m].
    pub fake_wavelength: f64,
    /// Photons per fake pulse.
    pub fake_n: u32,
    /// Relative energy error of the forgery.
    pub energy_mismatch: f64,
}

/// Plan a photon-number forgery: send `round(target_n * fake_wl/target_wl)`
/// photons at the fake wavelength and report the residual energy mismatch.
pub fn plan_wavelength_fake(
    target_n: u32,
    target_wavelength: f64,
    fake_wavelength: f64,
) -> WavelengthFakePlan {
    assert!(target_wavelength > 0.0 && fake_wavelength > 0.0);
    assert!(target_n >= 1);
    let fake_n =
        ((target_n as f64) * fake_wavelength / target_wavelength).round().max(1.0) as u32;
    let target_energy = target_n as f64 * photon_energy(target_wavelength);
    let fake_energy = fake_n as f64 * photon_energy(fake_wavelength);
    WavelengthFakePlan {
        target_wavelength,
        target_n,
        fake_wavelength,
        fake_n,
        energy_mismatch: (fake_energy - target_energy).abs() / target_energy,
    }
}

/// Simulate fake pulses end to end and report the fraction classified as
/// the target photon number.
///
/// The thresholds must come from a calibration at the target wavelength.
pub fn verify_wavelength_fake(
    ctx: &SimContext,
    plan: &WavelengthFakePlan,
    thresholds: &DiscriminationThresholds,
    trials: u64,
    seed: u64,
) -> Result<f64, AttackError> {
    let op = ctx.operating_point(0.0)?;
    let amplitudes = ctx.pulse_trials(
        &op,
        TrialPulse::Exact { wavelength: plan.fake_wavelength, photons: plan.fake_n as u64 },
        trials,
        seed,
        0,
    )?;
    let hits = amplitudes
        .iter()
        .filter(|&&v_max| {
            let record = crate::readout::PulseRecord { trigger_time: 0.0, v_max };
            crate::readout::assign_photon_number(&record, thresholds).count() == plan.target_n
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

/// One point of a faked-state response curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FakeResponsePoint {
    /// Pulse energy at the detector input [J].
    pub pulse_energy: f64,
    /// Mean extracted amplitude [V].
    pub mean_v_max: f64,
    /// Sample standard deviation of the amplitude [V].
    pub std_v_max: f64,
}

/// Outcome of the blinding-power calibration.
#[derive(Debug, Clone, Serialize)]
pub struct BlindingCalibration {
    /// Selected CW power [W]: the smallest grid power that suppresses
    /// single-photon signals.
    pub cw_power: f64,
    /// Steady state under the selected power.
    pub blinded_state: TesState,
    /// Mean single-photon amplitude measured at the selected power [V].
    pub single_photon_response: f64,
    /// Fraction of single-photon trials below the detection threshold at
    /// the selected power.
    pub suppressed_fraction: f64,
    /// Faked-state response curve, filled by [`faked_state_response`].
    pub fake_response_curve: Vec<FakeResponsePoint>,
}

/// Fraction of single-photon trials that must stay below the detection
/// threshold for a power to count as blinding.
pub const BLINDING_SUPPRESSION_FRACTION: f64 = 0.99;

/// Find the smallest CW power on the grid that blinds the detector.
///
/// A power qualifies when at least 99% of weak-coherent single-photon-level
/// trials at `wavelength` stay below the single-photon threshold. Trials
/// use Poisson photon statistics, matching how such a calibration is done
/// against a real source.
pub fn calibrate_blinding(
    ctx: &SimContext,
    wavelength: f64,
    power_grid: &[f64],
    thresholds: &DiscriminationThresholds,
    trials: u64,
    seed: u64,
) -> Result<BlindingCalibration, AttackError> {
    assert!(power_grid.windows(2).all(|w| w[1] > w[0]), "power grid must ascend");
    assert!(trials > 0);
    let threshold = thresholds.single_photon_threshold;

    for (i, &power) in power_grid.iter().enumerate() {
        if power <= 0.0 {
            continue;
        }
        let op = ctx.operating_point(power)?;
        let amplitudes = ctx.pulse_trials(
            &op,
            TrialPulse::Coherent { wavelength, mean_photons: 1.0 },
            trials,
            seed,
            (i as u64) << 32,
        )?;
        let suppressed =
            amplitudes.iter().filter(|&&v| v < threshold).count() as f64 / trials as f64;
        if suppressed >= BLINDING_SUPPRESSION_FRACTION {
            let (mean, _) = mean_std(&amplitudes);
            return Ok(BlindingCalibration {
                cw_power: power,
                blinded_state: op.state,
                single_photon_response: mean,
                suppressed_fraction: suppressed,
                fake_response_curve: Vec::new(),
            });
        }
    }
    Err(AttackError::NotBlindable {
        grid_top: power_grid.last().copied().unwrap_or(0.0),
    })
}

/// Faked-state response scan and the energy matching a reference amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct FakeResponseCurve {
    pub points: Vec<FakeResponsePoint>,
    /// Grid energy whose mean amplitude comes closest to the reference
    /// single-photon amplitude, if any lands within the tolerance.
    pub matching_energy: Option<f64>,
    /// Relative tolerance used for the match.
    pub match_tolerance: f64,
}

/// Relative tolerance for declaring a faked-state amplitude equal to the
/// reference single-photon amplitude.
pub const FAKE_MATCH_TOLERANCE: f64 = 0.2;

/// Scan faked-state pulses over an energy grid under calibrated blinding.
///
/// For each energy: mean and standard deviation of the extracted amplitude
/// over `trials` weak coherent pulses at `wavelength`. The point closest to
/// `reference_single_photon` within 20% relative is reported as the
/// matching energy.
pub fn faked_state_response(
    ctx: &SimContext,
    calibration: &BlindingCalibration,
    wavelength: f64,
    pulse_energy_grid: &[f64],
    reference_single_photon: f64,
    trials: u64,
    seed: u64,
) -> Result<FakeResponseCurve, AttackError> {
    let op = ctx.operating_point(calibration.cw_power)?;
    let mut points = Vec::with_capacity(pulse_energy_grid.len());
    for (i, &energy) in pulse_energy_grid.iter().enumerate() {
        let mean_photons = energy / photon_energy(wavelength);
        let pulse = if mean_photons > 0.0 {
            TrialPulse::Coherent { wavelength, mean_photons }
        } else {
            TrialPulse::Dark
        };
        let amplitudes = ctx.pulse_trials(&op, pulse, trials, seed, (i as u64) << 32)?;
        let (mean, std) = mean_std(&amplitudes);
        points.push(FakeResponsePoint { pulse_energy: energy, mean_v_max: mean, std_v_max: std });
    }

    let matching_energy = points
        .iter()
        .filter(|p| {
            (p.mean_v_max - reference_single_photon).abs()
                <= FAKE_MATCH_TOLERANCE * reference_single_photon
        })
        .min_by(|a, b| {
            let da = (a.mean_v_max - reference_single_photon).abs();
            let db = (b.mean_v_max - reference_single_photon).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|p| p.pulse_energy);

    Ok(FakeResponseCurve { points, matching_energy, match_tolerance: FAKE_MATCH_TOLERANCE })
}

/// Maximum local log-log slope of mean amplitude versus pulse energy over
/// the given range, normalised so 1 is exactly linear.
///
/// An index above 1 means the response grows faster than linearly somewhere
/// in the range.
pub fn superlinearity_index(
    curve: &[FakeResponsePoint],
    range: (f64, f64),
) -> Result<f64, AttackError> {
    let in_range: Vec<&FakeResponsePoint> = curve
        .iter()
        .filter(|p| p.pulse_energy >= range.0 && p.pulse_energy <= range.1 && p.mean_v_max > 0.0)
        .collect();
    if in_range.len() < 3 {
        return Err(AttackError::InsufficientPoints { found: in_range.len() });
    }
    let mut max_slope = f64::NEG_INFINITY;
    for w in in_range.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (b.mean_v_max / a.mean_v_max).ln() / (b.pulse_energy / a.pulse_energy).ln();
        max_slope = max_slope.max(slope);
    }
    Ok(max_slope)
}

/// Resistance fraction `R / R_n` of the blinded steady state; blinding is
/// expected to park the sensor near the top of its transition.
pub fn blinded_resistance_fraction(ctx: &SimContext, calibration: &BlindingCalibration) -> f64 {
    transition_resistance(&ctx.tes, calibration.blinded_state.temperature) / ctx.tes.r_normal
}

/// Convenience: run the scan and attach it to the calibration record.
pub fn attach_response_curve(
    calibration: &mut BlindingCalibration,
    curve: &FakeResponseCurve,
) {
    calibration.fake_response_curve = curve.points.clone();
}

/// Unblinded mean single-photon amplitude and its standard deviation at the
/// dark operating point.
pub fn unblinded_single_photon_reference(
    ctx: &SimContext,
    wavelength: f64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), AttackError> {
    let op = ctx.operating_point(0.0)?;
    let amplitudes = ctx.pulse_trials(
        &op,
        TrialPulse::Exact { wavelength, photons: 1 },
        trials,
        seed,
        7 << 48,
    )?;
    Ok(mean_std(&amplitudes))
}

/// Fraction of dark (no-pulse) trials that cross the detection threshold
/// under calibrated blinding; the accidental-click floor.
pub fn dark_click_fraction(
    ctx: &SimContext,
    calibration: &BlindingCalibration,
    thresholds: &DiscriminationThresholds,
    trials: u64,
    seed: u64,
) -> Result<f64, AttackError> {
    let op = ctx.operating_point(calibration.cw_power)?;
    let amplitudes = ctx.pulse_trials(&op, TrialPulse::Dark, trials, seed, 9 << 48)?;
    Ok(amplitudes.iter().filter(|&&v| v > thresholds.single_photon_threshold).count() as f64
        / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plan_450_to_1550() {
        let plan = plan_wavelength_fake(1, 450e-9, 1550e-9);
        assert_eq!(plan.fake_n, 3);
        // |3 * 450/1550 - 1| = 200/1550.
        assert_relative_eq!(plan.energy_mismatch, 200.0 / 1550.0, max_relative = 1e-9);
    }

    #[test]
    fn plan_450_to_780() {
        let plan = plan_wavelength_fake(1, 450e-9, 780e-9);
        assert_eq!(plan.fake_n, 2);
        // |2 * 450/780 - 1| = 120/780.
        assert_relative_eq!(plan.energy_mismatch, 120.0 / 780.0, max_relative = 1e-9);
    }

    #[test]
    fn identity_plan_has_no_mismatch() {
        let plan = plan_wavelength_fake(1, 1550e-9, 1550e-9);
        assert_eq!(plan.fake_n, 1);
        assert!(plan.energy_mismatch < 1e-12);
    }

    #[test]
    fn exact_integer_ratio_has_no_mismatch() {
        let plan = plan_wavelength_fake(1, 500e-9, 1500e-9);
        assert_eq!(plan.fake_n, 3);
        assert!(plan.energy_mismatch < 1e-12);
    }

    #[test]
    fn superlinearity_of_synthetic_curves() {
        let energies: Vec<f64> = (0..9).map(|i| 1e-18 * 1.5f64.powi(i)).collect();
        let linear: Vec<FakeResponsePoint> = energies
            .iter()
            .map(|&e| FakeResponsePoint {
                pulse_energy: e,
                mean_v_max: 3e15 * e,
                std_v_max: 0.0,
            })
            .collect();
        let quadratic: Vec<FakeResponsePoint> = energies
            .iter()
            .map(|&e| FakeResponsePoint {
                pulse_energy: e,
                mean_v_max: 1e33 * e * e,
                std_v_max: 0.0,
            })
            .collect();
        let range = (energies[0], *energies.last().unwrap());
        assert_relative_eq!(superlinearity_index(&linear, range).unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(
            superlinearity_index(&quadratic, range).unwrap(),
            2.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn superlinearity_needs_three_points() {
        let points = vec![
            FakeResponsePoint { pulse_energy: 1e-18, mean_v_max: 1.0, std_v_max: 0.0 },
            FakeResponsePoint { pulse_energy: 2e-18, mean_v_max: 2.0, std_v_max: 0.0 },
        ];
        assert!(matches!(
            superlinearity_index(&points, (0.5e-18, 3e-18)),
            Err(AttackError::InsufficientPoints { found: 2 })
        ));
    }
}
