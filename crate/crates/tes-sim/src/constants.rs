//! Physical constants (CODATA / exact SI values).

/// Planck constant [J·s]. Exact by SI definition.
pub const PLANCK: f64 = 6.62607015e-34;

/// Speed of light in vacuum [m/s]. Exact by SI definition.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant times speed of light [J·m].
pub const HC: f64 = PLANCK * SPEED_OF_LIGHT;
