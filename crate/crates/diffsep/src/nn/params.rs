//! Parameter registration and initialization for both networks.
//!
//! Construction walks the architecture once in a fixed order, drawing from a
//! seeded stream, so a `(config, seed)` pair always yields the same weights.
//! Conv and linear weights use fan-in-scaled uniform init; FiLM heads start
//! at identity (zero weights, scale bias 1, shift bias 0) so an untrained
//! step embedding leaves the features unmodulated.

use rand_chacha::ChaCha8Rng;

use super::config::{group_count, ModelConfig};
use crate::rng;
use crate::tensor::{ParamId, ParamStore, Scalar, Tensor};

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct Norm {
    pub g: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnParams {
    pub norm: Norm,
    pub q: Conv,
    pub k: Conv,
    pub v: Conv,
    pub proj: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct FilmParams {
    pub scale: Conv,
    pub shift: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct GenBlock {
    pub gn1: Norm,
    pub conv1: Conv,
    pub gn2: Norm,
    pub conv2: Conv,
    pub film: FilmParams,
    pub attn: Option<AttnParams>,
}

/// One conditioner layer: PReLU -> group norm -> conv.
#[derive(Debug, Clone)]
pub(crate) struct CondLayer {
    pub alpha: ParamId,
    pub gn: Norm,
    pub conv: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct CondBlock {
    pub layers: Vec<CondLayer>,
    pub attn: Option<AttnParams>,
}

#[derive(Debug, Clone)]
pub(crate) struct InjectParams {
    pub adapt: Conv,
    pub merge: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct AuxConn {
    pub norm: Norm,
    pub proj: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct TfLayer {
    pub ln1: Norm,
    pub q: Conv,
    pub k: Conv,
    pub v: Conv,
    pub proj: Conv,
    pub ln2: Norm,
    pub ff1: Conv,
    pub ff2: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct GeneratorParams {
    pub stem: Conv,
    pub enc_inject: Vec<Option<InjectParams>>,
    pub enc_blocks: Vec<Vec<GenBlock>>,
    pub down: Vec<Conv>,
    pub mid: GenBlock,
    pub up: Vec<Conv>,
    pub skip_merge: Vec<Conv>,
    pub dec_inject: Vec<Option<InjectParams>>,
    pub dec_blocks: Vec<Vec<GenBlock>>,
    pub head_norm: Norm,
    pub head: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct ConditionerParams {
    pub stem: Conv,
    pub enc_blocks: Vec<CondBlock>,
    pub aux: Vec<AuxConn>,
    pub down: Vec<Conv>,
    pub transformer: Vec<TfLayer>,
    pub up: Vec<Conv>,
    pub dec_blocks: Vec<CondBlock>,
}

#[derive(Debug, Clone)]
pub(crate) struct StepEmbed {
    pub mlp: [Conv; 3],
}

#[derive(Debug, Clone)]
pub(crate) struct AuxHeads {
    pub latent: Conv,
    pub rec: Conv,
}

pub(crate) struct Init<'s, T> {
    pub store: &'s mut ParamStore<T>,
    pub rng: ChaCha8Rng,
}

impl<'s, T: Scalar> Init<'s, T> {
    fn uniform(&mut self, batch: usize, channels: usize, len: usize, bound: f64) -> Tensor<T> {
        let mut t = Tensor::zeros(batch, channels, len);
        for v in t.data_mut() {
            *v = T::from_f64((rng::uniform_f64(&mut self.rng) * 2.0 - 1.0) * bound);
        }
        t
    }

    fn constant(batch: usize, channels: usize, len: usize, value: f64) -> Tensor<T> {
        Tensor::from_fn(batch, channels, len, |_, _, _| value)
    }

    /// Convolution weights `(cout, cin, k)` with fan-in-scaled uniform init.
    pub fn conv(&mut self, name: &str, cout: usize, cin: usize, k: usize) -> Conv {
        let bound = 1.0 / ((cin * k) as f64).sqrt();
        let w = self.uniform(cout, cin, k, bound);
        let b = self.uniform(1, cout, 1, bound);
        Conv {
            w: self.store.add(format!("{name}.w"), w),
            b: self.store.add(format!("{name}.b"), b),
        }
    }

    /// Transposed-convolution weights `(cin, cout, k)`.
    pub fn conv_t(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        let bound = 1.0 / ((cin * k) as f64).sqrt();
        let w = self.uniform(cin, cout, k, bound);
        let b = self.uniform(1, cout, 1, bound);
        Conv {
            w: self.store.add(format!("{name}.w"), w),
            b: self.store.add(format!("{name}.b"), b),
        }
    }

    /// Zero-weight 1x1 conv with a constant bias; identity-at-init heads.
    pub fn conv_const(&mut self, name: &str, cout: usize, cin: usize, bias: f64) -> Conv {
        let w = Tensor::zeros(cout, cin, 1);
        let b = Self::constant(1, cout, 1, bias);
        Conv {
            w: self.store.add(format!("{name}.w"), w),
            b: self.store.add(format!("{name}.b"), b),
        }
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Norm {
        Norm {
            g: self
                .store
                .add(format!("{name}.g"), Self::constant(1, channels, 1, 1.0)),
            b: self
                .store
                .add(format!("{name}.b"), Self::constant(1, channels, 1, 0.0)),
        }
    }

    pub fn prelu_channels(&mut self, name: &str, channels: usize) -> ParamId {
        self.store
            .add(format!("{name}.a"), Self::constant(1, channels, 1, 0.25))
    }

    pub fn attn(&mut self, name: &str, channels: usize) -> AttnParams {
        AttnParams {
            norm: self.norm(&format!("{name}.norm"), channels),
            q: self.conv(&format!("{name}.q"), channels, channels, 1),
            k: self.conv(&format!("{name}.k"), channels, channels, 1),
            v: self.conv(&format!("{name}.v"), channels, channels, 1),
            proj: self.conv(&format!("{name}.proj"), channels, channels, 1),
        }
    }

    pub fn film(&mut self, name: &str, embed: usize, channels: usize) -> FilmParams {
        let _ = embed;
        FilmParams {
            scale: self.conv_const(&format!("{name}.scale"), channels, embed, 1.0),
            shift: self.conv_const(&format!("{name}.shift"), channels, embed, 0.0),
        }
    }

    pub fn gen_block(
        &mut self,
        name: &str,
        channels: usize,
        embed: usize,
        with_attn: bool,
    ) -> GenBlock {
        GenBlock {
            gn1: self.norm(&format!("{name}.gn1"), channels),
            conv1: self.conv(&format!("{name}.conv1"), channels, channels, 3),
            gn2: self.norm(&format!("{name}.gn2"), channels),
            conv2: self.conv(&format!("{name}.conv2"), channels, channels, 3),
            film: self.film(&format!("{name}.film"), embed, channels),
            attn: with_attn.then(|| self.attn(&format!("{name}.attn"), channels)),
        }
    }

    pub fn cond_block(&mut self, name: &str, channels: usize, with_attn: bool) -> CondBlock {
        let layers = (1..=3)
            .map(|i| CondLayer {
                alpha: self.prelu_channels(&format!("{name}.prelu{i}"), channels),
                gn: self.norm(&format!("{name}.gn{i}"), channels),
                conv: self.conv(&format!("{name}.conv{i}"), channels, channels, 3),
            })
            .collect();
        CondBlock {
            layers,
            attn: with_attn.then(|| self.attn(&format!("{name}.attn"), channels)),
        }
    }

    pub fn tf_layer(&mut self, name: &str, channels: usize) -> TfLayer {
        let ff = channels * 2;
        TfLayer {
            ln1: self.norm(&format!("{name}.ln1"), channels),
            q: self.conv(&format!("{name}.q"), channels, channels, 1),
            k: self.conv(&format!("{name}.k"), channels, channels, 1),
            v: self.conv(&format!("{name}.v"), channels, channels, 1),
            proj: self.conv(&format!("{name}.proj"), channels, channels, 1),
            ln2: self.norm(&format!("{name}.ln2"), channels),
            ff1: self.conv(&format!("{name}.ff1"), ff, channels, 1),
            ff2: self.conv(&format!("{name}.ff2"), channels, ff, 1),
        }
    }
}

/// Resampling conv geometry shared by parameter building and forward passes.
pub(crate) fn down_kernel(n: usize) -> (usize, usize, usize) {
    // (kernel, stride, pad)
    if n == 1 {
        (1, 1, 0)
    } else {
        (n, n, 0)
    }
}

pub(crate) fn up_kernel(n: usize) -> (usize, usize, usize) {
    if n == 1 {
        (1, 1, 0)
    } else {
        // Even n only (validated); output length is exactly n * input.
        (2 * n, n, n / 2)
    }
}

pub(crate) fn build_generator<T: Scalar>(
    init: &mut Init<'_, T>,
    config: &ModelConfig,
) -> GeneratorParams {
    let gc = config.generator_channels();
    let cc = config.conditioner_channels();
    let embed = config.fourier_embed_channels;

    let stem = init.conv("gen.stem", gc[0], config.channel_count, 3);
    let mut enc_inject = Vec::new();
    let mut enc_blocks = Vec::new();
    let mut down = Vec::new();
    for level in 0..config.levels {
        let c = gc[level];
        let inject = config.conditioning_levels.contains(&level).then(|| InjectParams {
            adapt: init.conv(&format!("gen.enc{level}.inject.adapt"), c, cc[level], 1),
            merge: init.conv(&format!("gen.enc{level}.inject.merge"), c, 2 * c, 1),
        });
        enc_inject.push(inject);
        let with_attn = config.attention_levels.contains(&level);
        let blocks = (0..config.generator_blocks_per_level[level])
            .map(|b| init.gen_block(&format!("gen.enc{level}.block{b}"), c, embed, with_attn))
            .collect();
        enc_blocks.push(blocks);
        let (k, _, _) = down_kernel(config.down_factors[level]);
        down.push(init.conv(&format!("gen.down{level}"), gc[level + 1], c, k));
    }

    let mid = init.gen_block("gen.mid", gc[config.levels], embed, false);

    let mut up = Vec::new();
    let mut skip_merge = Vec::new();
    let mut dec_inject = Vec::new();
    let mut dec_blocks = Vec::new();
    for level in 0..config.levels {
        let c = gc[level];
        let (k, _, _) = up_kernel(config.down_factors[level]);
        up.push(init.conv_t(&format!("gen.up{level}"), gc[level + 1], c, k));
        skip_merge.push(init.conv(&format!("gen.skip{level}"), c, 2 * c, 1));
        let inject = config.conditioning_levels.contains(&level).then(|| InjectParams {
            adapt: init.conv(&format!("gen.dec{level}.inject.adapt"), c, cc[level], 1),
            merge: init.conv(&format!("gen.dec{level}.inject.merge"), c, 2 * c, 1),
        });
        dec_inject.push(inject);
        let with_attn = config.attention_levels.contains(&level);
        let blocks = (0..config.generator_blocks_per_level[level])
            .map(|b| init.gen_block(&format!("gen.dec{level}.block{b}"), c, embed, with_attn))
            .collect();
        dec_blocks.push(blocks);
    }

    let head_norm = init.norm("gen.head.norm", gc[0]);
    let head = init.conv("gen.head", config.channel_count, gc[0], 3);

    GeneratorParams {
        stem,
        enc_inject,
        enc_blocks,
        down,
        mid,
        up,
        skip_merge,
        dec_inject,
        dec_blocks,
        head_norm,
        head,
    }
}

pub(crate) fn build_conditioner<T: Scalar>(
    init: &mut Init<'_, T>,
    config: &ModelConfig,
) -> ConditionerParams {
    let cc = config.conditioner_channels();
    let bot = cc[config.levels];

    let stem = init.conv("cond.stem", cc[0], config.channel_count, 3);
    let mut enc_blocks = Vec::new();
    let mut aux = Vec::new();
    let mut down = Vec::new();
    for level in 0..config.levels {
        let c = cc[level];
        let with_attn = config.attention_levels.contains(&level);
        enc_blocks.push(init.cond_block(&format!("cond.enc{level}.block"), c, with_attn));
        aux.push(AuxConn {
            norm: init.norm(&format!("cond.aux{level}.norm"), c),
            proj: init.conv(&format!("cond.aux{level}.proj"), bot, c, 1),
        });
        let (k, _, _) = down_kernel(config.down_factors[level]);
        down.push(init.conv(&format!("cond.down{level}"), cc[level + 1], c, k));
    }

    let transformer = (0..config.bottleneck_transformer_layers)
        .map(|l| init.tf_layer(&format!("cond.tf{l}"), bot))
        .collect();

    let mut up = Vec::new();
    let mut dec_blocks = Vec::new();
    for level in 0..config.levels {
        let c = cc[level];
        let (k, _, _) = up_kernel(config.down_factors[level]);
        up.push(init.conv_t(&format!("cond.up{level}"), cc[level + 1], c, k));
        let with_attn = config.attention_levels.contains(&level);
        dec_blocks.push(init.cond_block(&format!("cond.dec{level}.block"), c, with_attn));
    }

    ConditionerParams {
        stem,
        enc_blocks,
        aux,
        down,
        transformer,
        up,
        dec_blocks,
    }
}

pub(crate) fn build_step_embed<T: Scalar>(
    init: &mut Init<'_, T>,
    config: &ModelConfig,
) -> StepEmbed {
    let f = config.fourier_embed_channels;
    StepEmbed {
        mlp: [
            init.conv("embed.mlp1", f, f, 1),
            init.conv("embed.mlp2", f, f, 1),
            init.conv("embed.mlp3", f, f, 1),
        ],
    }
}

pub(crate) fn build_aux_heads<T: Scalar>(
    init: &mut Init<'_, T>,
    config: &ModelConfig,
) -> AuxHeads {
    let cc = config.conditioner_channels();
    AuxHeads {
        latent: init.conv("heads.latent", config.channel_count, cc[config.levels], 1),
        rec: init.conv("heads.rec", config.channel_count, cc[0], 1),
    }
}

/// Group count for a channel width, re-exported for the forward pass.
pub(crate) fn groups_for(channels: usize) -> usize {
    group_count(channels)
}
