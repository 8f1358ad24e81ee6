//! Overlap-add chunked processing with an equal-gain linear crossfade.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Chunk geometry: `hop = chunk_len - floor(overlap * chunk_len)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkPlan {
    pub chunk_len: usize,
    pub overlap: f64,
    pub hop: usize,
}

impl ChunkPlan {
    /// `overlap` is the fraction of each chunk shared with its neighbor,
    /// in `[0, 0.5)` so no sample belongs to more than two chunks.
    pub fn new(chunk_len: usize, overlap: f64) -> Result<Self> {
        if chunk_len == 0 {
            return Err(Error::invalid("chunk length must be positive"));
        }
        if !(0.0..0.5).contains(&overlap) {
            return Err(Error::invalid(format!(
                "overlap {overlap} outside [0, 0.5)"
            )));
        }
        let hop = chunk_len - (overlap * chunk_len as f64).floor() as usize;
        if hop == 0 {
            return Err(Error::invalid("hop collapsed to zero"));
        }
        Ok(ChunkPlan {
            chunk_len,
            overlap,
            hop,
        })
    }

    /// The paper-default plan: 3-second chunks with 20% overlap.
    pub fn default_for_rate(sample_rate: u32) -> Self {
        ChunkPlan::new(3 * sample_rate as usize, 0.20).expect("static plan is valid")
    }

    fn chunk_count(&self, input_len: usize) -> usize {
        if input_len <= self.chunk_len {
            1
        } else {
            1 + (input_len - self.chunk_len).div_ceil(self.hop)
        }
    }
}

/// Split `x` into overlapping chunks (zero-padding the tail), apply `process`
/// to each, and recombine with a linear crossfade over the overlap region.
/// The crossfade weights of adjacent chunks sum to one at every sample, so an
/// identity `process` reconstructs the input exactly; output is trimmed to
/// the input length.
pub fn chunk_and_process<F>(x: &AudioBuffer, plan: &ChunkPlan, mut process: F) -> Result<AudioBuffer>
where
    F: FnMut(usize, &AudioBuffer) -> Result<AudioBuffer>,
{
    let n_chunks = plan.chunk_count(x.len());
    let overlap_len = plan.chunk_len - plan.hop;
    let padded_len = (n_chunks - 1) * plan.hop + plan.chunk_len;

    let mut padded = AudioBuffer::zeros(x.channels(), padded_len, x.sample_rate());
    for ch in 0..x.channels() {
        padded.channel_mut(ch)[..x.len()].copy_from_slice(x.channel(ch));
    }

    let mut out = AudioBuffer::zeros(x.channels(), padded_len, x.sample_rate());
    for c in 0..n_chunks {
        let offset = c * plan.hop;
        let chunk = padded.slice(offset, plan.chunk_len)?;
        let processed = process(c, &chunk)?;
        if !processed.same_shape(&chunk) {
            return Err(Error::ContractViolation(format!(
                "chunk {c}: process changed shape ({}ch x {} -> {}ch x {})",
                chunk.channels(),
                chunk.len(),
                processed.channels(),
                processed.len()
            )));
        }
        let fade_den = (overlap_len + 1) as f32;
        for ch in 0..out.channels() {
            let dst = &mut out.channel_mut(ch)[offset..offset + plan.chunk_len];
            let src = processed.channel(ch);
            for (k, (d, &s)) in dst.iter_mut().zip(src).enumerate() {
                let mut w = 1.0f32;
                if c > 0 && k < overlap_len {
                    w = (k + 1) as f32 / fade_den;
                } else if c + 1 < n_chunks && k >= plan.hop {
                    w = (plan.chunk_len - k) as f32 / fade_den;
                }
                *d += w * s;
            }
        }
    }
    out.slice(0, x.len())
}
