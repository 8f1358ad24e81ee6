//! Graph builders for the conditioner and generator forward passes.

use std::collections::BTreeMap;

use super::params::{
    groups_for, AttnParams, CondBlock, Conv, GenBlock, TfLayer,
};
use super::SeparationModel;
use crate::error::{Error, Result};
use crate::tensor::tape::{Graph, NodeId};
use crate::tensor::{Scalar, Tensor};

/// Conditioner products for one input: per-level decoder embeddings, the
/// bottleneck latent, and the full-rate decoder output.
pub struct CondOutputs {
    pub embeddings: BTreeMap<usize, NodeId>,
    pub latent: NodeId,
    pub reconstruction: NodeId,
}

fn conv1x1<T: Scalar>(g: &mut Graph<'_, T>, p: &Conv, x: NodeId) -> Result<NodeId> {
    let w = g.param(p.w);
    let b = g.param(p.b);
    g.conv1d(x, w, Some(b), 1, 0)
}

fn conv3<T: Scalar>(g: &mut Graph<'_, T>, p: &Conv, x: NodeId) -> Result<NodeId> {
    let w = g.param(p.w);
    let b = g.param(p.b);
    g.conv1d(x, w, Some(b), 1, 1)
}

fn group_norm<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &super::params::Norm,
    x: NodeId,
) -> Result<NodeId> {
    let groups = groups_for(g.value(x).channels());
    let gamma = g.param(p.g);
    let beta = g.param(p.b);
    g.group_norm(x, gamma, beta, groups)
}

fn layer_norm<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &super::params::Norm,
    x: NodeId,
) -> Result<NodeId> {
    let gamma = g.param(p.g);
    let beta = g.param(p.b);
    g.layer_norm(x, gamma, beta)
}

/// Pre-normalized single(-or-multi)-head self-attention with residual.
fn attn_block<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &AttnParams,
    x: NodeId,
    heads: usize,
    rotary_base: Option<f64>,
) -> Result<NodeId> {
    let n = group_norm(g, &p.norm, x)?;
    let mut q = conv1x1(g, &p.q, n)?;
    let mut k = conv1x1(g, &p.k, n)?;
    let v = conv1x1(g, &p.v, n)?;
    if let Some(base) = rotary_base {
        q = g.rotary(q, base)?;
        k = g.rotary(k, base)?;
    }
    let scores = g.attn_scores(q, k, heads)?;
    let attn = g.softmax_last(scores);
    let mixed = g.attn_apply(attn, v, heads)?;
    let proj = conv1x1(g, &p.proj, mixed)?;
    g.add(x, proj)
}

/// Generator residual block: two (norm -> SiLU -> conv) layers, FiLM from the
/// step embedding after the convolutions, then optional self-attention.
fn gen_block<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &GenBlock,
    x: NodeId,
    embed: NodeId,
    heads: usize,
) -> Result<NodeId> {
    let h = group_norm(g, &p.gn1, x)?;
    let h = g.silu(h);
    let h = conv3(g, &p.conv1, h)?;
    let h = group_norm(g, &p.gn2, h)?;
    let h = g.silu(h);
    let h = conv3(g, &p.conv2, h)?;
    let scale = conv1x1(g, &p.film.scale, embed)?;
    let shift = conv1x1(g, &p.film.shift, embed)?;
    let h = g.film(h, scale, shift)?;
    let out = g.add(x, h)?;
    match &p.attn {
        Some(a) => attn_block(g, a, out, heads, None),
        None => Ok(out),
    }
}

/// Conditioner residual block: three (PReLU -> norm -> conv) layers, then
/// optional self-attention.
fn cond_block<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &CondBlock,
    x: NodeId,
    heads: usize,
) -> Result<NodeId> {
    let mut h = x;
    for layer in &p.layers {
        let alpha = g.param(layer.alpha);
        h = g.prelu(h, alpha)?;
        h = group_norm(g, &layer.gn, h)?;
        h = conv3(g, &layer.conv, h)?;
    }
    let out = g.add(x, h)?;
    match &p.attn {
        Some(a) => attn_block(g, a, out, heads, None),
        None => Ok(out),
    }
}

/// Pre-norm transformer layer with rotary attention (bottleneck only).
fn tf_layer<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &TfLayer,
    x: NodeId,
    heads: usize,
) -> Result<NodeId> {
    let n1 = layer_norm(g, &p.ln1, x)?;
    let q = conv1x1(g, &p.q, n1)?;
    let q = g.rotary(q, 10_000.0)?;
    let k = conv1x1(g, &p.k, n1)?;
    let k = g.rotary(k, 10_000.0)?;
    let v = conv1x1(g, &p.v, n1)?;
    let scores = g.attn_scores(q, k, heads)?;
    let attn = g.softmax_last(scores);
    let mixed = g.attn_apply(attn, v, heads)?;
    let proj = conv1x1(g, &p.proj, mixed)?;
    let x = g.add(x, proj)?;
    let n2 = layer_norm(g, &p.ln2, x)?;
    let f = conv1x1(g, &p.ff1, n2)?;
    let f = g.gelu(f);
    let f = conv1x1(g, &p.ff2, f)?;
    g.add(x, f)
}

impl<T: Scalar> SeparationModel<T> {
    fn check_geometry(&self, t: &Tensor<T>, what: &str) -> Result<()> {
        if t.channels() != self.config.channel_count {
            return Err(Error::invalid(format!(
                "{what}: expected {} channels, got {}",
                self.config.channel_count,
                t.channels()
            )));
        }
        if !t.len().is_multiple_of(self.config.total_downsample()) {
            return Err(Error::invalid(format!(
                "{what}: length {} is not a multiple of the downsampling product {}",
                t.len(),
                self.config.total_downsample()
            )));
        }
        Ok(())
    }

    /// Run the conditioner over a mixture node of shape `(B, ch, L)`.
    pub fn conditioner_forward(&self, g: &mut Graph<'_, T>, c: NodeId) -> Result<CondOutputs> {
        self.check_geometry(g.value(c), "conditioner input")?;
        let cfg = &self.config;
        let heads = cfg.attention_heads;
        let total = cfg.total_downsample();

        let mut x = conv3(g, &self.cond.stem, c)?;
        let mut aux_sums: Vec<NodeId> = Vec::new();
        for level in 0..cfg.levels {
            x = cond_block(g, &self.cond.enc_blocks[level], x, heads)?;
            // Auxiliary path: norm -> ReLU -> 1x1 up to bottleneck width,
            // pooled down to the bottleneck rate, summed there.
            let aux = &self.cond.aux[level];
            let a = group_norm(g, &aux.norm, x)?;
            let a = g.relu(a);
            let a = conv1x1(g, &aux.proj, a)?;
            let pool = total / cfg.compression_at(level);
            let a = g.avg_pool(a, pool)?;
            aux_sums.push(a);

            let n = cfg.down_factors[level];
            let (_, stride, pad) = super::params::down_kernel(n);
            let w = g.param(self.cond.down[level].w);
            let b = g.param(self.cond.down[level].b);
            x = g.conv1d(x, w, Some(b), stride, pad)?;
        }

        let mut bottleneck = x;
        for a in aux_sums {
            bottleneck = g.add(bottleneck, a)?;
        }
        for layer in &self.cond.transformer {
            bottleneck = tf_layer(g, layer, bottleneck, heads)?;
        }
        let latent = bottleneck;

        let mut embeddings = BTreeMap::new();
        let mut x = latent;
        for level in (0..cfg.levels).rev() {
            let n = cfg.down_factors[level];
            let (_, stride, pad) = super::params::up_kernel(n);
            let w = g.param(self.cond.up[level].w);
            let b = g.param(self.cond.up[level].b);
            x = g.conv_transpose1d(x, w, Some(b), stride, pad)?;
            x = cond_block(g, &self.cond.dec_blocks[level], x, heads)?;
            if cfg.conditioning_levels.contains(&level) {
                embeddings.insert(level, x);
            }
        }

        Ok(CondOutputs {
            embeddings,
            latent,
            reconstruction: x,
        })
    }

    /// Random Fourier features of the diffusion step, one row per batch item:
    /// `[sin(2 pi f_i sigma), cos(2 pi f_i sigma)]` under the frozen
    /// frequency matrix.
    pub fn fourier_features(&self, sigmas: &[f64]) -> Tensor<T> {
        let f = self.config.fourier_embed_channels;
        let mut out = Tensor::zeros(sigmas.len(), f, 1);
        for (b, &sigma) in sigmas.iter().enumerate() {
            for (i, &freq) in self.fourier_freqs.iter().enumerate() {
                let arg = std::f64::consts::TAU * freq as f64 * sigma;
                out.set(b, 2 * i, 0, T::from_f64(arg.sin()));
                out.set(b, 2 * i + 1, 0, T::from_f64(arg.cos()));
            }
        }
        out
    }

    fn step_embedding(&self, g: &mut Graph<'_, T>, sigmas: &[f64]) -> Result<NodeId> {
        let feats = g.leaf(self.fourier_features(sigmas));
        let h = conv1x1(g, &self.embed.mlp[0], feats)?;
        let h = g.gelu(h);
        let h = conv1x1(g, &self.embed.mlp[1], h)?;
        let h = g.gelu(h);
        conv1x1(g, &self.embed.mlp[2], h)
    }

    fn inject(
        &self,
        g: &mut Graph<'_, T>,
        params: &super::params::InjectParams,
        x: NodeId,
        embedding: NodeId,
    ) -> Result<NodeId> {
        let adapted = conv1x1(g, &params.adapt, embedding)?;
        let cat = g.concat(x, adapted)?;
        conv1x1(g, &params.merge, cat)
    }

    /// Predict the velocity for `x` at per-item noise levels `sigmas`, given
    /// conditioner embeddings for every configured level.
    pub fn generator_forward(
        &self,
        g: &mut Graph<'_, T>,
        x: NodeId,
        sigmas: &[f64],
        embeddings: &BTreeMap<usize, NodeId>,
    ) -> Result<NodeId> {
        self.check_geometry(g.value(x), "generator input")?;
        let cfg = &self.config;
        if sigmas.len() != g.value(x).batch() {
            return Err(Error::invalid(format!(
                "{} sigmas for a batch of {}",
                sigmas.len(),
                g.value(x).batch()
            )));
        }
        for level in &cfg.conditioning_levels {
            if !embeddings.contains_key(level) {
                return Err(Error::invalid(format!(
                    "missing conditioning embedding for level {level}"
                )));
            }
        }
        let heads = cfg.attention_heads;
        let embed = self.step_embedding(g, sigmas)?;

        let mut x = conv3(g, &self.gen.stem, x)?;
        let mut skips: Vec<NodeId> = Vec::new();
        for level in 0..cfg.levels {
            if let Some(inj) = &self.gen.enc_inject[level] {
                x = self.inject(g, inj, x, embeddings[&level])?;
            }
            for block in &self.gen.enc_blocks[level] {
                x = gen_block(g, block, x, embed, heads)?;
            }
            skips.push(x);
            let n = cfg.down_factors[level];
            let (_, stride, pad) = super::params::down_kernel(n);
            let w = g.param(self.gen.down[level].w);
            let b = g.param(self.gen.down[level].b);
            x = g.conv1d(x, w, Some(b), stride, pad)?;
        }

        x = gen_block(g, &self.gen.mid, x, embed, heads)?;

        for level in (0..cfg.levels).rev() {
            let n = cfg.down_factors[level];
            let (_, stride, pad) = super::params::up_kernel(n);
            let w = g.param(self.gen.up[level].w);
            let b = g.param(self.gen.up[level].b);
            x = g.conv_transpose1d(x, w, Some(b), stride, pad)?;
            let cat = g.concat(x, skips[level])?;
            x = conv1x1(g, &self.gen.skip_merge[level], cat)?;
            if let Some(inj) = &self.gen.dec_inject[level] {
                x = self.inject(g, inj, x, embeddings[&level])?;
            }
            for block in &self.gen.dec_blocks[level] {
                x = gen_block(g, block, x, embed, heads)?;
            }
        }

        let h = group_norm(g, &self.gen.head_norm, x)?;
        let h = g.silu(h);
        conv3(g, &self.gen.head, h)
    }

    /// Map the latent through the 1x1 latent head (for the auxiliary loss).
    pub fn latent_head(&self, g: &mut Graph<'_, T>, latent: NodeId) -> Result<NodeId> {
        conv1x1(g, &self.heads.latent, latent)
    }

    /// Map the decoder output through the reconstruction head.
    pub fn rec_head(&self, g: &mut Graph<'_, T>, reconstruction: NodeId) -> Result<NodeId> {
        conv1x1(g, &self.heads.rec, reconstruction)
    }
}
