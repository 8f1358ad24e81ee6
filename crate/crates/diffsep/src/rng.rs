//! Seeded, named random streams.
//!
//! Every random choice in the crate flows from a single base seed through
//! named sub-streams, so partial reruns (a single chunk, a single ablation
//! cell) reproduce exactly. Streams are ChaCha8 generators keyed by
//! `(base_seed, label, index)`; the key derivation and the Gaussian transform
//! below use only integer and IEEE-754 double arithmetic, so sequences are
//! identical across platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One step of the splitmix64 sequence; used to expand seed material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, so distinct stream names give distinct keys.
fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic ChaCha8 stream for `(base_seed, label, index)`.
pub fn stream(base_seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut state = base_seed ^ hash_label(label).rotate_left(17) ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    let mut key = [0u8; 32];
    for word in key.chunks_exact_mut(8) {
        word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform double in `[0, 1)` from the top 53 bits of one output word.
pub fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in `(0, 1]`; safe as a logarithm argument.
fn uniform_open_f64(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal pair via the Box-Muller transform:
/// `z0 = sqrt(-2 ln u1) cos(2 pi u2)`, `z1 = sqrt(-2 ln u1) sin(2 pi u2)`
/// with `u1` in `(0, 1]` and `u2` in `[0, 1)`.
pub fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = uniform_open_f64(rng);
    let u2 = uniform_f64(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Fill a slice with standard normal deviates, consuming pairs in order.
pub fn fill_standard_normal(rng: &mut impl RngCore, out: &mut [f32]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = normal_pair(rng);
        pair[0] = a as f32;
        pair[1] = b as f32;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(rng).0 as f32;
    }
}

/// Fill with standard normals at full double precision.
pub fn fill_standard_normal_f64(rng: &mut impl RngCore, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = normal_pair(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(rng).0;
    }
}

/// Uniform integer in `[0, bound)` by rejection, bias-free.
pub fn uniform_usize(rng: &mut impl RngCore, bound: usize) -> usize {
    assert!(bound > 0);
    let bound = bound as u64;
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % bound) as usize;
        }
    }
}

/// Bernoulli draw with probability `p`.
pub fn coin(rng: &mut impl RngCore, p: f64) -> bool {
    uniform_f64(rng) < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, "sampling", 0).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(
            stream(7, "sampling", 0).next_u64(),
            stream(7, "training", 0).next_u64()
        );
        assert_ne!(
            stream(7, "sampling", 0).next_u64(),
            stream(7, "sampling", 1).next_u64()
        );
        assert_ne!(
            stream(7, "sampling", 0).next_u64(),
            stream(8, "sampling", 0).next_u64()
        );
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut rng = stream(123, "test", 0);
        let mut buf = vec![0.0f32; 200_000];
        fill_standard_normal(&mut rng, &mut buf);
        let mean: f64 = buf.iter().map(|&x| x as f64).sum::<f64>() / buf.len() as f64;
        let var: f64 =
            buf.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / buf.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn uniform_ints_cover_range() {
        let mut rng = stream(1, "ints", 0);
        let mut seen = [false; 7];
        for _ in 0..200 {
            seen[uniform_usize(&mut rng, 7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
