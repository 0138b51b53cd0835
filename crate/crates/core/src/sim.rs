//! Seeded random-draw helpers shared by the Monte Carlo machinery and the
//! synthetic test fixtures. Everything here is deterministic given a seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A reproducible generator for the given seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed for replication `index`, so batches
/// can be partitioned deterministically.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 over the combined value.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One standard normal draw (Box-Muller).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` independent N(0, sigma^2) draws.
pub fn normal_vec<R: Rng>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    (0..n).map(|_| sigma * standard_normal(rng)).collect()
}

/// A driftless random walk of length `n` with N(0, sigma^2) increments.
pub fn random_walk<R: Rng>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    let mut level = 0.0;
    (0..n)
        .map(|_| {
            level += sigma * standard_normal(rng);
            level
        })
        .collect()
}

/// A stationary AR(1) `x(t) = phi x(t-1) + e(t)` started from its
/// stationary distribution.
pub fn ar1<R: Rng>(rng: &mut R, n: usize, phi: f64, sigma: f64) -> Vec<f64> {
    let mut x = sigma / (1.0 - phi * phi).sqrt() * standard_normal(rng);
    (0..n)
        .map(|_| {
            let out = x;
            x = phi * x + sigma * standard_normal(rng);
            out
        })
        .collect()
}
