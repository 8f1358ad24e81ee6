//! In-memory training data: chunk sampling, silence filtering, augmentation.

use rand_chacha::ChaCha8Rng;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::io::DatasetItem;
use crate::rng;

use super::TrainingConfig;

/// An aligned mixture/vocals crop.
#[derive(Debug, Clone)]
pub struct ChunkPair {
    pub mixture: AudioBuffer,
    pub vocals: AudioBuffer,
}

/// All track pairs held in RAM (desk-scale datasets are small).
pub struct TrainingSet {
    pairs: Vec<(AudioBuffer, AudioBuffer)>,
    sample_rate: u32,
    channels: usize,
}

impl TrainingSet {
    pub fn load(items: &[DatasetItem], target_channels: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDataset("no items to load".into()));
        }
        let sample_rate = items[0].sample_rate;
        let mut pairs = Vec::with_capacity(items.len());
        for item in items {
            if item.sample_rate != sample_rate {
                return Err(Error::invalid(format!(
                    "track {} is {} Hz, dataset started at {sample_rate} Hz",
                    item.name, item.sample_rate
                )));
            }
            let (m, v) = item.load()?;
            pairs.push((
                m.adapt_channels(target_channels)?,
                v.adapt_channels(target_channels)?,
            ));
        }
        Ok(TrainingSet {
            pairs,
            sample_rate,
            channels: target_channels,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn track_count(&self) -> usize {
        self.pairs.len()
    }

    /// Uniform random crop of `chunk_len` samples.
    pub fn sample_chunk(&self, chunk_len: usize, rng: &mut ChaCha8Rng) -> Result<ChunkPair> {
        let (m, v) = &self.pairs[rng::uniform_usize(rng, self.pairs.len())];
        if m.len() < chunk_len {
            return Err(Error::invalid(format!(
                "chunk of {chunk_len} samples exceeds track length {}",
                m.len()
            )));
        }
        let offset = rng::uniform_usize(rng, m.len() - chunk_len + 1);
        Ok(ChunkPair {
            mixture: m.slice(offset, chunk_len)?,
            vocals: v.slice(offset, chunk_len)?,
        })
    }
}

fn rms_dbfs(buf: &AudioBuffer) -> f64 {
    let rms = buf.rms();
    if rms <= 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * rms.log10()
    }
}

fn negate(buf: &mut AudioBuffer) {
    for s in buf.planar_mut() {
        *s = -*s;
    }
}

fn flip_channels(buf: &AudioBuffer) -> AudioBuffer {
    let mut out = buf.clone();
    for ch in 0..buf.channels() {
        out.channel_mut(ch)
            .copy_from_slice(buf.channel(buf.channels() - 1 - ch));
    }
    out
}

/// Silence filtering plus stem-level augmentation.
///
/// Chunks whose vocal RMS falls below `silence_rms_db` are kept only with
/// probability `silence_keep_prob`. Enabled augmentations each apply
/// independently with probability 1/2: polarity inversion of the vocal stem,
/// channel flipping of the whole pair, and remixing the vocals with the
/// accompaniment of `alt` (accompaniment = mixture - vocals). The mixture is
/// regenerated as `vocals + accompaniment` in every branch, so additivity is
/// exact by construction. Returns `(x0, c)` = (vocals, mixture).
pub fn filter_and_augment(
    pair: ChunkPair,
    alt: &ChunkPair,
    cfg: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(AudioBuffer, AudioBuffer)>> {
    if rms_dbfs(&pair.vocals) < cfg.silence_rms_db && !rng::coin(rng, cfg.silence_keep_prob) {
        return Ok(None);
    }

    let mut vocals = pair.vocals.clone();
    let mut accompaniment = pair.mixture.sub(&pair.vocals)?;

    if cfg.augment_remix && rng::coin(rng, 0.5) {
        accompaniment = alt.mixture.sub(&alt.vocals)?;
    }
    if cfg.augment_polarity && rng::coin(rng, 0.5) {
        negate(&mut vocals);
    }
    let mut mixture = vocals.add(&accompaniment)?;
    if cfg.augment_channel_flip && vocals.channels() > 1 && rng::coin(rng, 0.5) {
        vocals = flip_channels(&vocals);
        mixture = flip_channels(&mixture);
    }
    Ok(Some((vocals, mixture)))
}
