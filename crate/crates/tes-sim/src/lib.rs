//! Deterministic simulator of a transition-edge-sensor (TES) single-photon
//! detector and its readout chain.
//!
//! The crate models the detector as a two-variable electrothermal system
//! (sensor temperature and sensor current) biased through a small shunt
//! resistor and read out by a fixed current-to-voltage gain. On top of the
//! physics core it provides:
//!
//! - photon-energy arithmetic and absorbed-power waveform construction
//!   ([`optics`]),
//! - pulse-height extraction, histogramming and photon-number
//!   discrimination ([`readout`]),
//! - bright-light attack studies: wavelength-based photon-number faking,
//!   CW blinding calibration and faked-state response curves ([`attacks`]),
//! - a Monte Carlo BB84 intercept-and-resend attack with a closed-form
//!   error-rate oracle ([`qkd`]).
//!
//! Everything is reproducible: random sampling goes through a counter-based
//! stream keyed by `(seed, stream, counter)`, so identical inputs produce
//! bit-identical outputs regardless of thread count.

pub mod attacks;
pub mod config;
pub mod constants;
pub mod optics;
pub mod qkd;
pub mod readout;
pub mod report;
pub mod rng;
pub mod sim;
pub mod tes;

pub use config::{Profile, Scenario};
pub use rng::CounterRng;
pub use sim::SimContext;
pub use tes::{BiasPoint, TesParams, TesState};
