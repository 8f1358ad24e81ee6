//! The separation model: a FiLM-conditioned U-Net generator paired with a
//! skipless conditioner autoencoder, plus the oracle denoisers used to test
//! the sampler without training.

mod config;
mod forward;
mod oracle;
mod params;
mod serial;

pub use config::{group_count, ModelConfig};
pub use forward::CondOutputs;
pub use oracle::{oracle_predict_v, oracle_predict_v_tensor, GaussianOracleDenoiser};
pub use serial::{load_model, save_model};

use std::collections::BTreeMap;
use std::sync::Mutex;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::tape::Graph;
use crate::tensor::{ParamStore, Scalar, Tensor};

/// Anything that can predict the velocity `v` for a noisy buffer at a given
/// noise level, conditioned on a mixture. Inference never mutates state
/// visible to callers, so a denoiser may be shared across threads.
pub trait Denoiser: Sync {
    fn predict_v(
        &self,
        x_t: &AudioBuffer,
        sigma: f64,
        condition: &AudioBuffer,
    ) -> Result<AudioBuffer>;

    /// Expected channel count, when the denoiser is geometry-bound.
    fn expected_channels(&self) -> Option<usize> {
        None
    }

    /// Expected sample rate, when the denoiser is geometry-bound.
    fn expected_sample_rate(&self) -> Option<u32> {
        None
    }
}

/// Generator + conditioner + auxiliary heads with all parameters and the
/// frozen Fourier frequency matrix.
pub struct SeparationModel<T> {
    pub config: ModelConfig,
    pub(crate) store: ParamStore<T>,
    pub(crate) fourier_freqs: Vec<f32>,
    pub(crate) gen: params::GeneratorParams,
    pub(crate) cond: params::ConditionerParams,
    pub(crate) embed: params::StepEmbed,
    pub(crate) heads: params::AuxHeads,
}

impl<T: Scalar> SeparationModel<T> {
    /// Deterministic construction from `(config, seed)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut freq_rng = rng::stream(seed, "model-fourier", 0);
        // Frequencies ~ N(0, 16^2): wide enough to resolve sigma in [0, 1].
        let mut fourier_freqs = vec![0.0f32; config.fourier_embed_channels / 2];
        rng::fill_standard_normal(&mut freq_rng, &mut fourier_freqs);
        for f in &mut fourier_freqs {
            *f *= 16.0;
        }

        let mut store = ParamStore::new();
        let mut init = params::Init {
            store: &mut store,
            rng: rng::stream(seed, "model-init", 0),
        };
        let gen = params::build_generator(&mut init, &config);
        let cond = params::build_conditioner(&mut init, &config);
        let embed = params::build_step_embed(&mut init, &config);
        let heads = params::build_aux_heads(&mut init, &config);

        Ok(SeparationModel {
            config,
            store,
            fourier_freqs,
            gen,
            cond,
            embed,
            heads,
        })
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.total_elements()
    }

    /// Rebuild the same architecture at a different precision (the f64 copy
    /// drives check mode).
    pub fn cast<U: Scalar>(&self) -> SeparationModel<U> {
        SeparationModel {
            config: self.config.clone(),
            store: self.store.cast(),
            fourier_freqs: self.fourier_freqs.clone(),
            gen: self.gen.clone(),
            cond: self.cond.clone(),
            embed: self.embed.clone(),
            heads: self.heads.clone(),
        }
    }

    /// Conditioner features as plain tensors, for reuse across many
    /// generator calls on the same mixture.
    pub fn condition_features(&self, c: &Tensor<T>) -> Result<BTreeMap<usize, Tensor<T>>> {
        let mut graph = Graph::new(&self.store);
        let c_node = graph.leaf(c.clone());
        let out = self.conditioner_forward(&mut graph, c_node)?;
        Ok(out
            .embeddings
            .iter()
            .map(|(&level, &node)| (level, graph.value(node).clone()))
            .collect())
    }

    /// One no-grad generator pass over precomputed condition features.
    pub fn predict_v_tensor(
        &self,
        x: &Tensor<T>,
        sigmas: &[f64],
        features: &BTreeMap<usize, Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let mut graph = Graph::new(&self.store);
        let x_node = graph.leaf(x.clone());
        let embeddings = features
            .iter()
            .map(|(&level, t)| (level, graph.leaf(t.clone())))
            .collect();
        let v = self.generator_forward(&mut graph, x_node, sigmas, &embeddings)?;
        Ok(graph.value(v).clone())
    }
}

/// Convert a buffer into a batch-of-one tensor.
pub fn tensor_from_audio<T: Scalar>(buf: &AudioBuffer) -> Tensor<T> {
    Tensor::from_fn(1, buf.channels(), buf.len(), |_, c, i| {
        buf.channel(c)[i] as f64
    })
}

/// Convert a batch-of-one tensor back into a buffer.
pub fn audio_from_tensor<T: Scalar>(t: &Tensor<T>, sample_rate: u32) -> AudioBuffer {
    debug_assert_eq!(t.batch(), 1);
    AudioBuffer::from_fn(t.channels(), t.len(), sample_rate, |c, i| {
        t.at(0, c, i).as_f64() as f32
    })
}

/// A [`SeparationModel`] exposed as a [`Denoiser`].
///
/// The conditioner only depends on the mixture, so its features are computed
/// once per distinct condition buffer and memoized; every sampler step then
/// costs one generator pass. The cache is keyed by buffer equality, which is
/// cheap next to a forward pass.
type CachedFeatures = (AudioBuffer, BTreeMap<usize, Tensor<f32>>);

pub struct ModelDenoiser<'m> {
    model: &'m SeparationModel<f32>,
    cache: Mutex<Option<CachedFeatures>>,
}

impl<'m> ModelDenoiser<'m> {
    pub fn new(model: &'m SeparationModel<f32>) -> Self {
        ModelDenoiser {
            model,
            cache: Mutex::new(None),
        }
    }

    fn features_for(&self, condition: &AudioBuffer) -> Result<BTreeMap<usize, Tensor<f32>>> {
        {
            let cache = self.cache.lock().unwrap();
            if let Some((cached, feats)) = cache.as_ref() {
                if cached == condition {
                    return Ok(feats.clone());
                }
            }
        }
        let padded = pad_to_multiple(condition, self.model.config.total_downsample());
        let feats = self
            .model
            .condition_features(&tensor_from_audio(&padded))?;
        let mut cache = self.cache.lock().unwrap();
        *cache = Some((condition.clone(), feats.clone()));
        Ok(feats)
    }
}

fn pad_to_multiple(buf: &AudioBuffer, multiple: usize) -> AudioBuffer {
    let padded_len = buf.len().div_ceil(multiple) * multiple;
    if padded_len == buf.len() {
        return buf.clone();
    }
    let mut out = AudioBuffer::zeros(buf.channels(), padded_len, buf.sample_rate());
    for ch in 0..buf.channels() {
        out.channel_mut(ch)[..buf.len()].copy_from_slice(buf.channel(ch));
    }
    out
}

impl Denoiser for ModelDenoiser<'_> {
    fn predict_v(
        &self,
        x_t: &AudioBuffer,
        sigma: f64,
        condition: &AudioBuffer,
    ) -> Result<AudioBuffer> {
        x_t.ensure_same_shape(condition, "predict_v")?;
        if x_t.channels() != self.model.config.channel_count {
            return Err(Error::invalid(format!(
                "model expects {} channels, got {}",
                self.model.config.channel_count,
                x_t.channels()
            )));
        }
        let features = self.features_for(condition)?;
        let padded = pad_to_multiple(x_t, self.model.config.total_downsample());
        let v = self
            .model
            .predict_v_tensor(&tensor_from_audio(&padded), &[sigma], &features)?;
        let full = audio_from_tensor(&v, x_t.sample_rate());
        full.slice(0, x_t.len())
    }

    fn expected_channels(&self) -> Option<usize> {
        Some(self.model.config.channel_count)
    }

    fn expected_sample_rate(&self) -> Option<u32> {
        Some(self.model.config.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(batch: usize, channels: usize, len: usize, seed: u64) -> Tensor<f32> {
        let mut t = Tensor::zeros(batch, channels, len);
        rng::fill_standard_normal(&mut rng::stream(seed, "nn-test", 0), t.data_mut());
        t
    }

    #[test]
    fn tiny_model_stays_under_2k_params() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 1).unwrap();
        let count = model.param_count();
        assert!(count <= 2_000, "tiny model has {count} parameters");
    }

    #[test]
    fn toy_model_stays_under_500k_params() {
        let model = SeparationModel::<f32>::new(ModelConfig::toy(), 1).unwrap();
        let count = model.param_count();
        assert!(count < 500_000, "toy model has {count} parameters");
    }

    #[test]
    fn paper_preset_param_count_is_computable() {
        let model = SeparationModel::<f32>::new(ModelConfig::paper(), 1).unwrap();
        let count = model.param_count();
        assert!(count > 10_000_000, "paper preset has {count} parameters");
    }

    #[test]
    fn generator_preserves_shape() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 2).unwrap();
        let d = model.config.total_downsample();
        let x = random_tensor(2, 1, 8 * d, 3);
        let c = random_tensor(2, 1, 8 * d, 4);
        let mut g = Graph::new(&model.store);
        let cn = g.leaf(c);
        let cond = model.conditioner_forward(&mut g, cn).unwrap();
        let xn = g.leaf(x.clone());
        let v = model
            .generator_forward(&mut g, xn, &[0.3, 0.8], &cond.embeddings)
            .unwrap();
        assert_eq!(g.value(v).shape(), x.shape());
    }

    #[test]
    fn embeddings_align_with_generator_levels() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 2).unwrap();
        let cfg = &model.config;
        let d = cfg.total_downsample();
        let len = 4 * d;
        let c = random_tensor(1, 1, len, 5);
        let mut g = Graph::new(&model.store);
        let cn = g.leaf(c);
        let out = model.conditioner_forward(&mut g, cn).unwrap();
        for (&level, &node) in &out.embeddings {
            let expect = len / cfg.compression_at(level);
            assert_eq!(g.value(node).len(), expect, "level {level}");
            assert_eq!(
                g.value(node).channels(),
                cfg.conditioner_channels()[level]
            );
        }
        let bot = len / cfg.total_downsample();
        assert_eq!(g.value(out.latent).len(), bot);
        assert_eq!(g.value(out.reconstruction).len(), len);
    }

    #[test]
    fn inference_is_deterministic() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 7).unwrap();
        let d = model.config.total_downsample();
        let x = random_tensor(1, 1, 4 * d, 8);
        let c = random_tensor(1, 1, 4 * d, 9);
        let feats = model.condition_features(&c).unwrap();
        let a = model.predict_v_tensor(&x, &[0.5], &feats).unwrap();
        let b = model.predict_v_tensor(&x, &[0.5], &feats).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditioner_responds_to_amplitude() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 11).unwrap();
        let d = model.config.total_downsample();
        let c = random_tensor(1, 1, 4 * d, 12);
        let mut c2 = c.clone();
        for v in c2.data_mut() {
            *v *= 2.0;
        }
        let f1 = model.condition_features(&c).unwrap();
        let f2 = model.condition_features(&c2).unwrap();
        let (level, t1) = f1.iter().next().unwrap();
        let t2 = &f2[level];
        let diff: f64 = t1
            .data()
            .iter()
            .zip(t2.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        assert!(diff > 1e-6, "embeddings did not react to input scale");
    }

    #[test]
    fn same_seed_same_weights() {
        let a = SeparationModel::<f32>::new(ModelConfig::tiny(), 42).unwrap();
        let b = SeparationModel::<f32>::new(ModelConfig::tiny(), 42).unwrap();
        for ((_, na, ta), (_, nb, tb)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let c = SeparationModel::<f32>::new(ModelConfig::tiny(), 43).unwrap();
        let differs = a
            .store
            .iter()
            .zip(c.store.iter())
            .any(|((_, _, ta), (_, _, tc))| ta.data() != tc.data());
        assert!(differs);
    }

    #[test]
    fn fourier_embedding_is_frozen_and_non_degenerate() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 21).unwrap();
        let a = model.fourier_features(&[0.0]);
        let b = model.fourier_features(&[0.0]);
        assert_eq!(a, b);
        let z = model.fourier_features(&[1.0]);
        let dot: f64 = a
            .data()
            .iter()
            .zip(z.data())
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum();
        let na = a.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let nz = z.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let cos_sim = dot / (na * nz);
        assert!(cos_sim < 0.999, "embeddings degenerate: cos {cos_sim}");
        for sigma in [0.0, 0.5, 1.0] {
            assert!(model.fourier_features(&[sigma]).is_all_finite());
        }
    }

    #[test]
    fn model_denoiser_pads_and_trims() {
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 13).unwrap();
        let den = ModelDenoiser::new(&model);
        let sr = model.config.sample_rate;
        // Length deliberately not a multiple of the downsampling product.
        let x = AudioBuffer::from_fn(1, 37, sr, |_, i| (i as f32 * 0.1).sin());
        let c = AudioBuffer::from_fn(1, 37, sr, |_, i| (i as f32 * 0.05).cos());
        let v = den.predict_v(&x, 0.4, &c).unwrap();
        assert_eq!(v.len(), 37);
        assert_eq!(v.channels(), 1);
        // Cache hit path returns identical results.
        let v2 = den.predict_v(&x, 0.4, &c).unwrap();
        assert_eq!(v, v2);
    }
}
