//! Counter-based random number stream for reproducible Monte Carlo runs.
//!
//! Every trial of every study draws from its own substream, keyed by
//! `(seed, stream id, counter)`. The mapping is a stateless SplitMix64-style
//! hash of the key, so trials can run on any number of threads in any order
//! and still produce identical results. Substream ids are cheap to derive,
//! which lets a scenario hand stream `k` to trial `k` without coordination.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: output `i` is a pure function of
/// `(seed, stream, i)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    base: u64,
    counter: u64,
}

impl CounterRng {
    /// Root stream for a given seed.
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent substream `stream` of `seed`; used one-per-trial.
    pub fn substream(seed: u64, stream: u64) -> Self {
        // Mix the stream id through one splitmix round so that streams
        // 0,1,2,... land far apart in counter space.
        let base = splitmix64(seed ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA)));
        CounterRng { base, counter: 0 }
    }

    pub fn next_u64_value(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix64(self.base.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64_value() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fair coin, used for bit and basis choices.
    pub fn coin(&mut self) -> bool {
        self.next_u64_value() & 1 == 1
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, self)
    }

    /// Poisson draw with the given mean (0 for mean <= 0).
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let dist = rand_distr::Poisson::new(mean).expect("mean is finite and positive");
        rand_distr::Distribution::sample(&dist, self) as u64
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64_value() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_u64_value()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64_value().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
