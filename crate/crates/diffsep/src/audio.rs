//! Multichannel time-domain audio, the carrier type shared by every module.

use crate::error::{Error, Result};

/// Planar multichannel audio: `channels` rows of `len` 32-bit float samples
/// plus a sample rate. Samples are nominally in `[-1, 1]` but the type does
/// not clamp; file writers decide how out-of-range values are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    channels: usize,
    len: usize,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Silence with the given geometry.
    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        assert!(channels >= 1 && len >= 1, "degenerate buffer shape");
        AudioBuffer {
            samples: vec![0.0; channels * len],
            channels,
            len,
            sample_rate,
        }
    }

    /// Build from planar data laid out channel-major (`channels * len` floats).
    pub fn from_planar(samples: Vec<f32>, channels: usize, sample_rate: u32) -> Result<Self> {
        if channels == 0 || samples.is_empty() || !samples.len().is_multiple_of(channels) {
            return Err(Error::invalid(format!(
                "planar data of {} samples does not form {} whole channels",
                samples.len(),
                channels
            )));
        }
        let len = samples.len() / channels;
        Ok(AudioBuffer {
            samples,
            channels,
            len,
            sample_rate,
        })
    }

    /// Fill each sample from `f(channel, index)`.
    pub fn from_fn(
        channels: usize,
        len: usize,
        sample_rate: u32,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Self {
        let mut buf = AudioBuffer::zeros(channels, len, sample_rate);
        for ch in 0..channels {
            let row = buf.channel_mut(ch);
            for (i, s) in row.iter_mut().enumerate() {
                *s = f(ch, i);
            }
        }
        buf
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Length in samples per channel.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        &self.samples[ch * self.len..(ch + 1) * self.len]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f32] {
        &mut self.samples[ch * self.len..(ch + 1) * self.len]
    }

    /// All samples, channel-major.
    pub fn planar(&self) -> &[f32] {
        &self.samples
    }

    pub fn planar_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn same_shape(&self, other: &AudioBuffer) -> bool {
        self.channels == other.channels
            && self.len == other.len
            && self.sample_rate == other.sample_rate
    }

    pub(crate) fn ensure_same_shape(&self, other: &AudioBuffer, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::invalid(format!(
                "{what}: shape mismatch ({}ch x {} @ {} Hz vs {}ch x {} @ {} Hz)",
                self.channels,
                self.len,
                self.sample_rate,
                other.channels,
                other.len,
                other.sample_rate
            )));
        }
        Ok(())
    }

    pub fn is_all_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    /// Root-mean-square over all channels.
    pub fn rms(&self) -> f64 {
        let energy: f64 = self.samples.iter().map(|&s| s as f64 * s as f64).sum();
        (energy / self.samples.len() as f64).sqrt()
    }

    /// Total energy (sum of squares) over all channels.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|&s| s as f64 * s as f64).sum()
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()))
    }

    pub fn scale(&mut self, factor: f32) {
        for s in &mut self.samples {
            *s *= factor;
        }
    }

    /// Copy `len` samples starting at `offset` from every channel.
    pub fn slice(&self, offset: usize, len: usize) -> Result<AudioBuffer> {
        if offset + len > self.len || len == 0 {
            return Err(Error::invalid(format!(
                "slice [{offset}, {}) out of range for length {}",
                offset + len,
                self.len
            )));
        }
        let mut out = AudioBuffer::zeros(self.channels, len, self.sample_rate);
        for ch in 0..self.channels {
            out.channel_mut(ch)
                .copy_from_slice(&self.channel(ch)[offset..offset + len]);
        }
        Ok(out)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &AudioBuffer) -> Result<AudioBuffer> {
        self.ensure_same_shape(other, "add")?;
        let mut out = self.clone();
        for (o, &s) in out.samples.iter_mut().zip(&other.samples) {
            *o += s;
        }
        Ok(out)
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &AudioBuffer) -> Result<AudioBuffer> {
        self.ensure_same_shape(other, "sub")?;
        let mut out = self.clone();
        for (o, &s) in out.samples.iter_mut().zip(&other.samples) {
            *o -= s;
        }
        Ok(out)
    }

    /// Duplicate a mono buffer up to `target` channels, or pass through when
    /// the channel count already matches. Any other mismatch is an error.
    pub fn adapt_channels(self, target: usize) -> Result<AudioBuffer> {
        if self.channels == target {
            return Ok(self);
        }
        if self.channels == 1 {
            let mut out = AudioBuffer::zeros(target, self.len, self.sample_rate);
            for ch in 0..target {
                out.channel_mut(ch).copy_from_slice(self.channel(0));
            }
            return Ok(out);
        }
        Err(Error::invalid(format!(
            "cannot adapt {} channels to {target}",
            self.channels
        )))
    }
}
