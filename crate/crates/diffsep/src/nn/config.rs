//! Architecture configuration shared by the generator and conditioner.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Geometry and capacity of a generator/conditioner pair.
///
/// Both networks share `levels` and `down_factors`, so their feature maps
/// line up at every depth; that alignment is what makes multi-resolution
/// conditioning possible. Channels double exactly at levels whose down factor
/// exceeds one and halve symmetrically on the way up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub levels: usize,
    pub down_factors: Vec<usize>,
    pub generator_base_channels: usize,
    pub conditioner_base_channels: usize,
    pub generator_blocks_per_level: Vec<usize>,
    /// Levels (0 = shallowest) with time-wise self-attention, in both
    /// networks.
    pub attention_levels: BTreeSet<usize>,
    /// Generator levels that receive conditioner embeddings, at encoder and
    /// decoder.
    pub conditioning_levels: BTreeSet<usize>,
    pub bottleneck_transformer_layers: usize,
    pub fourier_embed_channels: usize,
    pub channel_count: usize,
    pub sample_rate: u32,
    pub attention_heads: usize,
}

impl ModelConfig {
    /// The full-scale preset described alongside the architecture: seven
    /// levels, factors {1,2,4,1,4,1,4}, conditioner base 128 / generator base
    /// 32, one block on the first three levels and two elsewhere, attention
    /// and conditioning on the four deepest levels, a 6-layer bottleneck
    /// transformer, 1024 Fourier channels.
    pub fn paper() -> Self {
        ModelConfig {
            levels: 7,
            down_factors: vec![1, 2, 4, 1, 4, 1, 4],
            generator_base_channels: 32,
            conditioner_base_channels: 128,
            generator_blocks_per_level: vec![1, 1, 1, 2, 2, 2, 2],
            attention_levels: [3, 4, 5, 6].into_iter().collect(),
            conditioning_levels: [3, 4, 5, 6].into_iter().collect(),
            bottleneck_transformer_layers: 6,
            fourier_embed_channels: 1024,
            channel_count: 2,
            sample_rate: 44_100,
            attention_heads: 1,
        }
    }

    /// Desk-scale preset: trains on a CPU in minutes. Level attention is
    /// disabled (quadratic in chunk length); the rotary transformer in the
    /// conditioner bottleneck still exercises the attention path at the
    /// compressed rate.
    pub fn toy() -> Self {
        ModelConfig {
            levels: 4,
            down_factors: vec![1, 4, 4, 4],
            generator_base_channels: 8,
            conditioner_base_channels: 8,
            generator_blocks_per_level: vec![1, 1, 1, 1],
            attention_levels: BTreeSet::new(),
            conditioning_levels: [1, 2, 3].into_iter().collect(),
            bottleneck_transformer_layers: 1,
            fourier_embed_channels: 32,
            channel_count: 2,
            sample_rate: 16_000,
            attention_heads: 1,
        }
    }

    /// Smallest config that still touches every kernel; used for end-to-end
    /// finite-difference checks, so it must stay under ~2k parameters.
    pub fn tiny() -> Self {
        ModelConfig {
            levels: 2,
            down_factors: vec![1, 2],
            generator_base_channels: 2,
            conditioner_base_channels: 2,
            generator_blocks_per_level: vec![1, 1],
            attention_levels: [1].into_iter().collect(),
            conditioning_levels: [0, 1].into_iter().collect(),
            bottleneck_transformer_layers: 1,
            fourier_embed_channels: 4,
            channel_count: 1,
            sample_rate: 8_000,
            attention_heads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("levels must be positive"));
        }
        if self.down_factors.len() != self.levels {
            return Err(Error::invalid(format!(
                "down_factors has {} entries for {} levels",
                self.down_factors.len(),
                self.levels
            )));
        }
        if self.generator_blocks_per_level.len() != self.levels {
            return Err(Error::invalid(format!(
                "generator_blocks_per_level has {} entries for {} levels",
                self.generator_blocks_per_level.len(),
                self.levels
            )));
        }
        if self.down_factors.contains(&0) {
            return Err(Error::invalid("down factors must be >= 1"));
        }
        if self.down_factors.iter().any(|&n| n > 1 && n % 2 == 1) {
            return Err(Error::invalid(
                "down factors above 1 must be even (upsampling uses kernel 2n, padding n/2)",
            ));
        }
        if self.generator_blocks_per_level.contains(&0) {
            return Err(Error::invalid("each level needs at least one block"));
        }
        for set in [&self.attention_levels, &self.conditioning_levels] {
            if set.iter().any(|&l| l >= self.levels) {
                return Err(Error::invalid("level index out of range"));
            }
        }
        if self.fourier_embed_channels == 0 || !self.fourier_embed_channels.is_multiple_of(2) {
            return Err(Error::invalid("fourier_embed_channels must be even"));
        }
        if self.channel_count == 0 {
            return Err(Error::invalid("channel_count must be positive"));
        }
        if self.attention_heads == 0 {
            return Err(Error::invalid("attention_heads must be positive"));
        }
        for base in [self.generator_base_channels, self.conditioner_base_channels] {
            if base == 0 {
                return Err(Error::invalid("base channels must be positive"));
            }
            for &c in &self.channel_schedule(base) {
                let g = group_count(c);
                if c % g != 0 {
                    return Err(Error::invalid(format!(
                        "group count {g} does not divide {c} channels"
                    )));
                }
                if c % self.attention_heads != 0 {
                    return Err(Error::invalid(format!(
                        "attention heads {} do not divide {c} channels",
                        self.attention_heads
                    )));
                }
            }
        }
        let bot = self.channel_schedule(self.conditioner_base_channels)[self.levels];
        if self.bottleneck_transformer_layers > 0 && !bot.is_multiple_of(2) {
            return Err(Error::invalid(
                "rotary attention needs an even bottleneck channel count",
            ));
        }
        Ok(())
    }

    /// Channels per level (length `levels + 1`; the last entry is the
    /// bottleneck width). Doubling happens exactly at levels that compress.
    pub fn channel_schedule(&self, base: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.levels + 1);
        let mut c = base;
        out.push(c);
        for &n in &self.down_factors {
            if n > 1 {
                c *= 2;
            }
            out.push(c);
        }
        out
    }

    pub fn generator_channels(&self) -> Vec<usize> {
        self.channel_schedule(self.generator_base_channels)
    }

    pub fn conditioner_channels(&self) -> Vec<usize> {
        self.channel_schedule(self.conditioner_base_channels)
    }

    /// Product of all down factors; input lengths must be divisible by this.
    pub fn total_downsample(&self) -> usize {
        self.down_factors.iter().product()
    }

    /// Smallest valid length >= `len`.
    pub fn padded_len(&self, len: usize) -> usize {
        let d = self.total_downsample();
        len.div_ceil(d) * d
    }

    /// Time-compression factor between level `i` features and the input.
    pub fn compression_at(&self, level: usize) -> usize {
        self.down_factors[..level].iter().product()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("levels", self.levels);
        kv.set_list("down_factors", self.down_factors.iter());
        kv.set("generator_base_channels", self.generator_base_channels);
        kv.set("conditioner_base_channels", self.conditioner_base_channels);
        kv.set_list(
            "generator_blocks_per_level",
            self.generator_blocks_per_level.iter(),
        );
        kv.set_list("attention_levels", self.attention_levels.iter());
        kv.set_list("conditioning_levels", self.conditioning_levels.iter());
        kv.set(
            "bottleneck_transformer_layers",
            self.bottleneck_transformer_layers,
        );
        kv.set("fourier_embed_channels", self.fourier_embed_channels);
        kv.set("channel_count", self.channel_count);
        kv.set("sample_rate", self.sample_rate);
        kv.set("attention_heads", self.attention_heads);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let config = ModelConfig {
            levels: kv.get_usize("levels")?,
            down_factors: kv.get_usize_list("down_factors")?,
            generator_base_channels: kv.get_usize("generator_base_channels")?,
            conditioner_base_channels: kv.get_usize("conditioner_base_channels")?,
            generator_blocks_per_level: kv.get_usize_list("generator_blocks_per_level")?,
            attention_levels: kv.get_usize_list("attention_levels")?.into_iter().collect(),
            conditioning_levels: kv
                .get_usize_list("conditioning_levels")?
                .into_iter()
                .collect(),
            bottleneck_transformer_layers: kv.get_usize("bottleneck_transformer_layers")?,
            fourier_embed_channels: kv.get_usize("fourier_embed_channels")?,
            channel_count: kv.get_usize("channel_count")?,
            sample_rate: kv.get_u64("sample_rate")? as u32,
            attention_heads: kv.get_usize("attention_heads")?,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Group-norm group count: `min(8, channels)`.
pub fn group_count(channels: usize) -> usize {
    channels.min(8)
}
