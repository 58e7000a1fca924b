//! Stateless seed derivation. Every random stream in the pipeline is keyed
//! by a tuple of integers so runs are reproducible regardless of call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key tuple into one 64-bit seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5CCD_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A ChaCha8 stream keyed by `parts`.
pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}

/// Formats with 9 significant digits in scientific notation; parsing the
/// result and formatting again reproduces the same text.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}
