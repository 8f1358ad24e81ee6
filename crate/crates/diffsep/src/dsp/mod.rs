//! Filters and chunked processing: Butterworth high-pass design, variance
//! normalization of filtered noise, and overlap-add with linear crossfade.

mod biquad;
mod ola;

pub use biquad::{design_butterworth_hp, BiquadCascade, BiquadSection};
pub use ola::{chunk_and_process, ChunkPlan};

use crate::audio::AudioBuffer;
use crate::rng;
use rand_chacha::rand_core::RngCore;

/// Unit-variance noise, optionally passed through `filter`.
///
/// The filtered path divides by the square root of the filter's noise power
/// gain `g = sum h[n]^2`, so the steady-state output variance is 1 regardless
/// of the cutoff. With no filter the raw Gaussian draw is returned unchanged.
pub fn normalized_filtered_noise(
    filter: Option<&BiquadCascade>,
    channels: usize,
    len: usize,
    sample_rate: u32,
    rng: &mut impl RngCore,
) -> AudioBuffer {
    let mut noise = AudioBuffer::zeros(channels, len, sample_rate);
    rng::fill_standard_normal(rng, noise.planar_mut());
    match filter {
        None => noise,
        Some(f) => {
            let mut out = f
                .apply(&noise)
                .expect("noise buffer built at the filter's sample rate");
            let scale = (1.0 / f.noise_power_gain().sqrt()) as f32;
            out.scale(scale);
            out
        }
    }
}
