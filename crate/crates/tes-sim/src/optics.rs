//! Photon-energy arithmetic, weak-coherent-pulse statistics, and
//! time-resolved absorbed-power waveforms.
//!
//! A waveform is the optical power actually absorbed by the sensor: a CW
//! floor plus rectangular pulses, all scaled by the coupling efficiency.
//! Coupling acts differently on the two kinds of light: bright CW power is
//! scaled deterministically, discrete photons are thinned binomially.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::HC;
use crate::rng::CounterRng;

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    /// The sample grid cannot represent the pulse shape.
    #[error("sample period {sample_period:.3e} s exceeds a quarter of the pulse width {width:.3e} s")]
    SamplingTooCoarse { sample_period: f64, width: f64 },
    /// A pulse train was requested but the duration does not cover one period.
    #[error("duration {duration:.3e} s shorter than one repetition period {period:.3e} s")]
    ShortDuration { duration: f64, period: f64 },
}

/// Energy of a single photon at the given wavelength [J].
pub fn photon_energy(wavelength: f64) -> f64 {
    assert!(wavelength > 0.0, "wavelength must be positive");
    HC / wavelength
}

/// Combined energy of `n_photons` photons at the given wavelength [J].
///
/// This is the relation an energy-resolving detector cannot distinguish:
/// `n` photons at wavelength `n * lambda` carry the same energy as one
/// photon at `lambda`.
pub fn pulse_energy(n_photons: f64, wavelength: f64) -> f64 {
    assert!(n_photons >= 0.0, "photon number must be non-negative");
    n_photons * photon_energy(wavelength)
}

/// Draw a photon number for a weak coherent pulse of the given mean.
///
/// Deterministic for a given stream position.
pub fn sample_photon_number(mean: f64, rng: &mut CounterRng) -> u64 {
    assert!(mean >= 0.0, "mean photon number must be non-negative");
    rng.poisson(mean)
}

/// How the photon content of a pulse is realised when a waveform is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhotonStatistics {
    /// Weak coherent pulse: photon number drawn from Poisson(mean).
    Poisson,
    /// Exactly `round(mean)` photons; used for deterministic studies.
    Fixed,
}

/// One optical pulse template.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhotonPulse {
    /// Wavelength [m].
    pub wavelength: f64,
    /// Mean photon number per pulse (dimensionless, >= 0).
    pub mean_photon_number: f64,
    /// Rectangular width [s].
    pub width: f64,
    /// Leading-edge arrival time [s].
    pub arrival_time: f64,
}

impl PhotonPulse {
    /// Pulse template carrying a given energy instead of a photon count.
    pub fn from_energy(energy: f64, wavelength: f64, width: f64, arrival_time: f64) -> Self {
        PhotonPulse {
            wavelength,
            mean_photon_number: energy / photon_energy(wavelength),
            width,
            arrival_time,
        }
    }
}

/// Continuous-wave blinding floor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CwFloor {
    /// Optical power at the detector input [W].
    pub power: f64,
    /// Wavelength [m].
    pub wavelength: f64,
}

impl CwFloor {
    pub fn dark() -> Self {
        CwFloor { power: 0.0, wavelength: 1550e-9 }
    }
}

/// Provenance entry: absorbed energy contributed by one waveform component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveformComponent {
    pub label: String,
    /// Energy this component deposits over the waveform duration [J].
    pub absorbed_energy: f64,
    /// Photons actually absorbed (None for CW light).
    pub absorbed_photons: Option<u64>,
}

/// Time-resolved absorbed optical power on a uniform grid.
#[derive(Debug, Clone)]
pub struct OpticalWaveform {
    /// Grid spacing [s].
    pub sample_period: f64,
    /// Absorbed power per sample [W].
    pub absorbed_power_samples: Vec<f64>,
    /// Per-component energy bookkeeping.
    pub components: Vec<WaveformComponent>,
}

impl OpticalWaveform {
    pub fn duration(&self) -> f64 {
        self.sample_period * self.absorbed_power_samples.len() as f64
    }

    /// Integral of absorbed power over the full duration [J].
    pub fn total_energy(&self) -> f64 {
        self.absorbed_power_samples.iter().sum::<f64>() * self.sample_period
    }

    /// Sum of the per-component energies [J].
    pub fn component_energy(&self) -> f64 {
        self.components.iter().map(|c| c.absorbed_energy).sum()
    }
}

/// Compose an absorbed-power waveform from a CW floor and a pulse train.
///
/// Each template pulse is repeated at `repetition_rate` (a rate of zero
/// renders the templates once, at their stated arrival times). Photon
/// numbers are realised per repetition according to `statistics`, then
/// thinned binomially by `coupling`; the CW floor is scaled by `coupling`
/// directly. Pulses are rectangles of the stated width; partial overlap
/// with edge samples is prorated so energy bookkeeping stays exact.
#[allow(clippy::too_many_arguments)]
pub fn build_waveform(
    floor: &CwFloor,
    pulses: &[PhotonPulse],
    repetition_rate: f64,
    duration: f64,
    coupling: f64,
    sample_period: f64,
    statistics: PhotonStatistics,
    rng: &mut CounterRng,
) -> Result<OpticalWaveform, OpticsError> {
    assert!(duration > 0.0 && sample_period > 0.0);
    assert!((0.0..=1.0).contains(&coupling), "coupling must lie in [0, 1]");
    for p in pulses {
        if sample_period > p.width / 4.0 {
            return Err(OpticsError::SamplingTooCoarse { sample_period, width: p.width });
        }
    }
    if repetition_rate > 0.0 && !pulses.is_empty() {
        let period = 1.0 / repetition_rate;
        if duration < period {
            return Err(OpticsError::ShortDuration { duration, period });
        }
    }

    let n = (duration / sample_period).round() as usize;
    let mut samples = vec![coupling * floor.power; n];
    let mut components = vec![WaveformComponent {
        label: format!("cw {:.0} nm", floor.wavelength * 1e9),
        absorbed_energy: coupling * floor.power * n as f64 * sample_period,
        absorbed_photons: None,
    }];

    for template in pulses {
        let repetitions = if repetition_rate > 0.0 {
            ((duration - template.arrival_time) * repetition_rate).ceil() as usize
        } else {
            1
        };
        for k in 0..repetitions {
            let start = template.arrival_time
                + if repetition_rate > 0.0 { k as f64 / repetition_rate } else { 0.0 };
            if start >= duration {
                break;
            }
            let drawn = match statistics {
                PhotonStatistics::Poisson => rng.poisson(template.mean_photon_number),
                PhotonStatistics::Fixed => template.mean_photon_number.round() as u64,
            };
            let absorbed = thin_binomial(drawn, coupling, rng);
            let energy = absorbed as f64 * photon_energy(template.wavelength);
            deposit_rectangle(&mut samples, sample_period, start, template.width, energy);
            components.push(WaveformComponent {
                label: format!("pulse {:.0} nm @ {:.3e} s", template.wavelength * 1e9, start),
                absorbed_energy: clipped_energy(energy, start, template.width, duration),
                absorbed_photons: Some(absorbed),
            });
        }
    }

    Ok(OpticalWaveform { sample_period, absorbed_power_samples: samples, components })
}

fn thin_binomial(n: u64, p: f64, rng: &mut CounterRng) -> u64 {
    if p >= 1.0 {
        return n;
    }
    if p <= 0.0 {
        return 0;
    }
    (0..n).filter(|_| rng.bernoulli(p)).count() as u64
}

/// Energy of a rectangle that survives clipping to [0, duration].
fn clipped_energy(energy: f64, start: f64, width: f64, duration: f64) -> f64 {
    let end = (start + width).min(duration);
    let start = start.max(0.0);
    if end <= start {
        0.0
    } else {
        energy * (end - start) / width
    }
}

/// Add a rectangular deposit of `energy` over [start, start+width) to the grid,
/// prorating partially covered samples.
fn deposit_rectangle(samples: &mut [f64], sample_period: f64, start: f64, width: f64, energy: f64) {
    if energy == 0.0 {
        return;
    }
    let power = energy / width;
    let end = start + width;
    let first = (start / sample_period).floor().max(0.0) as usize;
    let last = ((end / sample_period).ceil() as usize).min(samples.len());
    for (i, sample) in samples.iter_mut().enumerate().take(last).skip(first) {
        let s0 = i as f64 * sample_period;
        let s1 = s0 + sample_period;
        let overlap = (end.min(s1) - start.max(s0)).max(0.0);
        *sample += power * overlap / sample_period;
    }
}
