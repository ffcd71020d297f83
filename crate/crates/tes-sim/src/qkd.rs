//! Monte Carlo BB84 intercept-and-resend attack with faked states, plus its
//! closed-form error-rate oracle.
//!
//! The eavesdropper measures every signal in a random basis and resends a
//! bright fake pulse encoding her result at the attack wavelength. When the
//! receiver picks her basis the blinded detector sees the full pulse energy;
//! otherwise the pulse splits evenly between the two detectors and each sees
//! half. Detection is reduced to two probabilities:
//!
//! - `p_click_full`: a matched-basis full-energy fake registers,
//! - `p_click_half`: a mismatched-basis event registers on either detector.
//!
//! Among sifted rounds, only mismatched-basis events can make errors and
//! half of those registered do, giving the closed form
//! `QBER = p_half / (2 (p_full + p_half))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackError, BlindingCalibration};
use crate::readout::DiscriminationThresholds;
use crate::rng::CounterRng;
use crate::sim::{SimContext, TrialPulse};

#[derive(Debug, Error)]
pub enum QkdError {
    #[error("error rate undefined: both click probabilities are zero")]
    UndefinedQber,
}

/// BB84 attack configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackScenario {
    /// Wavelength used by the legitimate parties [m].
    pub signal_wavelength: f64,
    /// Wavelength of the blinding and fake light [m].
    pub attack_wavelength: f64,
    /// CW blinding power [W].
    pub blinding_power: f64,
    /// Fake pulse energy [J].
    pub fake_pulse_energy: f64,
    /// Honest channel transmission in (0, 1].
    pub channel_transmission: f64,
    /// Number of protocol rounds.
    pub trials: u64,
    /// Master seed.
    pub seed: u64,
}

/// Policy for mismatched-basis events that register on both detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoubleClickRule {
    /// Assign a uniformly random bit (conservative standard practice).
    #[default]
    UniformRandomBit,
    /// Drop the event from the sifted record.
    Discard,
}

/// Detector response reduced to event-level click probabilities.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClickModel {
    /// P(registered | matched-basis full-energy fake).
    pub p_click_full: f64,
    /// P(registered on at least one detector | mismatched-basis half-energy
    /// split).
    pub p_click_half: f64,
    pub double_click_rule: DoubleClickRule,
}

/// Click model estimated from the physics pipeline, with binomial 95%
/// confidence intervals.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClickModelEstimate {
    pub model: ClickModel,
    pub p_full_ci: (f64, f64),
    pub p_half_ci: (f64, f64),
}

/// Attack verdict against the protocol's abort rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Hidden: error rate below abort and loss within the honest channel.
    Covert,
    /// Loss exceeds what the honest channel explains.
    DetectableByLoss,
    /// Error rate at or above the abort threshold.
    AbortedByQber,
}

/// Abort threshold of the protocol.
pub const QBER_ABORT_THRESHOLD: f64 = 0.11;

/// Tallies of one attack run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftedKeyStats {
    pub sent: u64,
    /// Rounds with matching legitimate bases.
    pub sifted: u64,
    /// Sifted rounds that produced a detection.
    pub sifted_detections: u64,
    /// Sifted detections whose bit disagrees with the sender.
    pub errors: u64,
    /// errors / sifted_detections.
    pub qber: f64,
    /// 1 - (sifted detection rate) / (no-attack rate at unit transmission).
    pub induced_loss: f64,
    pub verdict: Verdict,
}

/// Closed-form error rate of the click model:
/// `QBER = p_half / (2 (p_full + p_half))`.
///
/// This is the oracle the Monte Carlo is checked against.
pub fn analytic_qber(model: &ClickModel) -> Result<f64, QkdError> {
    let denom = model.p_click_full + model.p_click_half;
    if denom <= 0.0 {
        return Err(QkdError::UndefinedQber);
    }
    Ok(model.p_click_half / (2.0 * denom))
}

/// Estimate the click model by simulating fake pulses on the blinded
/// detector.
///
/// Full-energy pulses probe the matched-basis case. For the mismatched
/// case the pulse splits evenly, so each detector receives an independent
/// weak coherent pulse of half the mean photon number; the event registers
/// when either detector crosses the single-photon threshold.
pub fn click_model_from_physics(
    ctx: &SimContext,
    scenario: &AttackScenario,
    calibration: &BlindingCalibration,
    thresholds: &DiscriminationThresholds,
    calibration_trials: u64,
    seed: u64,
) -> Result<ClickModelEstimate, AttackError> {
    let op = ctx.operating_point(calibration.cw_power)?;
    let mean_full =
        scenario.fake_pulse_energy / crate::optics::photon_energy(scenario.attack_wavelength);
    let threshold = thresholds.single_photon_threshold;

    let full = ctx.pulse_trials(
        &op,
        TrialPulse::Coherent { wavelength: scenario.attack_wavelength, mean_photons: mean_full },
        calibration_trials,
        seed,
        1 << 40,
    )?;
    let full_clicks = full.iter().filter(|&&v| v > threshold).count() as u64;

    // Two independent half-energy pulses per trial, one per detector.
    let half_clicks: u64 = (0..calibration_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng_a = CounterRng::substream(seed, (2 << 40) + 2 * k);
            let mut rng_b = CounterRng::substream(seed, (2 << 40) + 2 * k + 1);
            let pulse = TrialPulse::Coherent {
                wavelength: scenario.attack_wavelength,
                mean_photons: 0.5 * mean_full,
            };
            let a = ctx.pulse_trial(&op, pulse, &mut rng_a).map(|r| r.v_max > threshold);
            let b = ctx.pulse_trial(&op, pulse, &mut rng_b).map(|r| r.v_max > threshold);
            match (a, b) {
                (Ok(a), Ok(b)) => Ok(u64::from(a || b)),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))?;

    let p_full = full_clicks as f64 / calibration_trials as f64;
    let p_half = half_clicks as f64 / calibration_trials as f64;
    Ok(ClickModelEstimate {
        model: ClickModel {
            p_click_full: p_full,
            p_click_half: p_half,
            double_click_rule: DoubleClickRule::default(),
        },
        p_full_ci: wilson_interval(full_clicks, calibration_trials),
        p_half_ci: wilson_interval(half_clicks, calibration_trials),
    })
}

/// Wilson 95% confidence interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Default, Clone, Copy)]
struct Tally {
    sifted: u64,
    detections: u64,
    errors: u64,
}

/// Run the intercept-and-resend attack for `scenario.trials` rounds.
///
/// Per round: the sender draws a bit and basis uniformly; the eavesdropper
/// measures in a random basis (correct outcome on a basis match, uniform
/// otherwise) and resends a fake pulse encoding her result; the receiver
/// draws a basis. A receiver basis matching the eavesdropper's gives one
/// full-energy click trial; a mismatch gives each detector an independent
/// half-energy click trial, with double clicks settled by the model's rule.
/// Sifting keeps rounds where sender and receiver bases match.
pub fn run_bb84_attack(scenario: &AttackScenario, model: &ClickModel) -> SiftedKeyStats {
    assert!(scenario.trials >= 1);
    // Per-detector probability reproducing the event-level p_click_half:
    // 1 - (1 - q)^2 = p_half.
    let q_detector = 1.0 - (1.0 - model.p_click_half).sqrt();

    let chunk = 1u64 << 14;
    let chunks = scenario.trials.div_ceil(chunk);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(scenario.trials);
            let mut t = Tally::default();
            for trial in lo..hi {
                let mut rng = CounterRng::substream(scenario.seed, trial);
                let alice_bit = rng.coin();
                let alice_basis = rng.coin();
                let eve_basis = rng.coin();
                let eve_result =
                    if eve_basis == alice_basis { alice_bit } else { rng.coin() };
                let bob_basis = rng.coin();
                if bob_basis != alice_basis {
                    continue; // dropped in sifting
                }
                t.sifted += 1;
                if eve_basis == bob_basis {
                    // Full energy on the detector matching the eavesdropper's
                    // result.
                    if rng.bernoulli(model.p_click_full) {
                        t.detections += 1;
                        if eve_result != alice_bit {
                            t.errors += 1;
                        }
                    }
                } else {
                    // Half energy on each detector.
                    let click0 = rng.bernoulli(q_detector);
                    let click1 = rng.bernoulli(q_detector);
                    let bob_bit = match (click0, click1) {
                        (false, false) => continue,
                        (true, false) => false,
                        (false, true) => true,
                        (true, true) => match model.double_click_rule {
                            DoubleClickRule::UniformRandomBit => rng.coin(),
                            DoubleClickRule::Discard => continue,
                        },
                    };
                    t.detections += 1;
                    if bob_bit != alice_bit {
                        t.errors += 1;
                    }
                }
            }
            t
        })
        .reduce(Tally::default, |a, b| Tally {
            sifted: a.sifted + b.sifted,
            detections: a.detections + b.detections,
            errors: a.errors + b.errors,
        });

    finish_stats(scenario, tally)
}

/// Reference run without an eavesdropper and with ideal detection: every
/// sifted round detects correctly.
pub fn run_bb84_no_attack(trials: u64, seed: u64, channel_transmission: f64) -> SiftedKeyStats {
    let mut tally = Tally::default();
    for trial in 0..trials {
        let mut rng = CounterRng::substream(seed, trial);
        let _alice_bit = rng.coin();
        let alice_basis = rng.coin();
        let bob_basis = rng.coin();
        if bob_basis != alice_basis {
            continue;
        }
        tally.sifted += 1;
        tally.detections += 1;
    }
    let scenario = AttackScenario {
        signal_wavelength: 780e-9,
        attack_wavelength: 1550e-9,
        blinding_power: 0.0,
        fake_pulse_energy: 0.0,
        channel_transmission,
        trials,
        seed,
    };
    finish_stats(&scenario, tally)
}

fn finish_stats(scenario: &AttackScenario, t: Tally) -> SiftedKeyStats {
    let qber = if t.detections > 0 { t.errors as f64 / t.detections as f64 } else { 0.0 };
    let induced_loss =
        if t.sifted > 0 { 1.0 - t.detections as f64 / t.sifted as f64 } else { 0.0 };
    let verdict = if qber >= QBER_ABORT_THRESHOLD {
        Verdict::AbortedByQber
    } else if !loss_budget_covert(induced_loss, scenario.channel_transmission) {
        Verdict::DetectableByLoss
    } else {
        Verdict::Covert
    };
    SiftedKeyStats {
        sent: scenario.trials,
        sifted: t.sifted,
        sifted_detections: t.detections,
        errors: t.errors,
        qber,
        induced_loss,
        verdict,
    }
}

/// Loss-budget component of the verdict: the attack stays hidden when the
/// honest channel is at least as lossy as the detection loss the attack
/// induces, i.e. `induced_loss <= 1 - channel_transmission`.
pub fn loss_budget_covert(induced_loss: f64, channel_transmission: f64) -> bool {
    induced_loss <= 1.0 - channel_transmission
}

/// Loss-budget verdict for completed stats.
pub fn loss_budget(stats: &SiftedKeyStats, channel_transmission: f64) -> bool {
    loss_budget_covert(stats.induced_loss, channel_transmission)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scenario(trials: u64, seed: u64) -> AttackScenario {
        AttackScenario {
            signal_wavelength: 780e-9,
            attack_wavelength: 1550e-9,
            blinding_power: 0.25e-9,
            fake_pulse_energy: 2.4e-18,
            channel_transmission: 0.4,
            trials,
            seed,
        }
    }

    fn model(p_full: f64, p_half: f64) -> ClickModel {
        ClickModel {
            p_click_full: p_full,
            p_click_half: p_half,
            double_click_rule: DoubleClickRule::UniformRandomBit,
        }
    }

    #[test]
    fn analytic_qber_reference_points() {
        assert_eq!(analytic_qber(&model(0.8, 0.0)).unwrap(), 0.0);
        assert_relative_eq!(analytic_qber(&model(0.5, 0.5)).unwrap(), 0.25, max_relative = 1e-12);
        let ratio = 0.1737;
        let q = analytic_qber(&model(1.0, ratio)).unwrap();
        assert_relative_eq!(q, 0.074, max_relative = 2e-3);
        assert!(matches!(analytic_qber(&model(0.0, 0.0)), Err(QkdError::UndefinedQber)));
    }

    #[test]
    fn perfect_full_clicks_lose_half_the_rounds() {
        let stats = run_bb84_attack(&scenario(400_000, 7), &model(1.0, 0.0));
        assert_eq!(stats.errors, 0);
        assert_eq!(stats.qber, 0.0);
        assert_relative_eq!(stats.induced_loss, 0.5, max_relative = 0.02);
    }

    #[test]
    fn monte_carlo_matches_oracle() {
        for (p_full, p_half, seed) in
            [(0.9, 0.2, 1u64), (0.5, 0.5, 2), (0.3, 0.1, 3), (1.0, 1.0, 4)]
        {
            let m = model(p_full, p_half);
            let stats = run_bb84_attack(&scenario(200_000, seed), &m);
            let q = analytic_qber(&m).unwrap();
            let sigma = (q * (1.0 - q) / stats.sifted_detections as f64).sqrt();
            assert!(
                (stats.qber - q).abs() <= 3.0 * sigma.max(1e-9),
                "p_full {p_full} p_half {p_half}: {} vs {}",
                stats.qber,
                q
            );
        }
    }

    #[test]
    fn qber_monotone_in_half_clicks() {
        let mut last = 0.0;
        for i in 0..=10 {
            let q = analytic_qber(&model(0.8, i as f64 / 10.0));
            let q = if i == 0 { 0.0 } else { q.unwrap() };
            assert!(q >= last);
            last = q;
        }
    }

    #[test]
    fn no_attack_baseline_clean() {
        let stats = run_bb84_no_attack(100_000, 5, 1.0);
        assert_eq!(stats.qber, 0.0);
        assert_eq!(stats.induced_loss, 0.0);
        assert_eq!(stats.verdict, Verdict::Covert);
        let sift_rate = stats.sifted as f64 / stats.sent as f64;
        let sigma = (0.5 * 0.5 / stats.sent as f64).sqrt();
        assert!((sift_rate - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn determinism() {
        let m = model(0.9, 0.15);
        let a = run_bb84_attack(&scenario(100_000, 11), &m);
        let b = run_bb84_attack(&scenario(100_000, 11), &m);
        assert_eq!(a, b);
    }

    #[test]
    fn loss_budget_direction() {
        assert!(loss_budget_covert(0.0, 0.99));
        assert!(loss_budget_covert(0.5, 0.4));
        assert!(!loss_budget_covert(0.5, 0.9));
    }

    #[test]
    fn discard_rule_reduces_detections() {
        let uniform = run_bb84_attack(&scenario(200_000, 13), &model(0.9, 0.9));
        let discard = run_bb84_attack(
            &scenario(200_000, 13),
            &ClickModel {
                p_click_full: 0.9,
                p_click_half: 0.9,
                double_click_rule: DoubleClickRule::Discard,
            },
        );
        assert!(discard.sifted_detections < uniform.sifted_detections);
    }
}
