//! Training: the diffusion loss, the two auxiliary conditioner losses, and
//! the optimization loop.
//!
//! The total objective is `l_diff + lambda_lat * l_lat + lambda_rec * l_rec`.
//! The diffusion loss flows through the generator and (via the injected
//! embeddings) the conditioner; the auxiliary losses flow only through the
//! conditioner and their own 1x1 heads. The heads are not on the diffusion
//! loss path, so they are trained solely by the auxiliary terms.

mod data;
mod optim;

pub use data::{filter_and_augment, ChunkPair, TrainingSet};
pub use optim::{lr_at, AdamW};

use std::io::Write;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::nn::SeparationModel;
use crate::rng;
use crate::schedule;
use crate::tensor::tape::{Graph, NodeId};
use crate::tensor::{Scalar, Tensor};

/// Everything the training loop needs besides the data and the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub cosine_annealing: bool,
    pub lambda_lat: f64,
    pub lambda_rec: f64,
    /// Chunks with vocal RMS below this (dBFS) count as silent.
    pub silence_rms_db: f64,
    /// Probability of keeping a silent chunk.
    pub silence_keep_prob: f64,
    pub augment_polarity: bool,
    pub augment_channel_flip: bool,
    pub augment_remix: bool,
    pub chunk_seconds: f64,
    pub seed: u64,
    /// Checkpoint cadence in steps (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 4,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            warmup_steps: 200,
            total_steps: 4_000,
            cosine_annealing: true,
            lambda_lat: 1.0,
            lambda_rec: 1.0,
            silence_rms_db: -60.0,
            silence_keep_prob: 0.05,
            augment_polarity: true,
            augment_channel_flip: true,
            augment_remix: true,
            chunk_seconds: 0.35,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.total_steps < self.warmup_steps {
            return Err(Error::invalid("total_steps must cover warmup_steps"));
        }
        if !(0.0..=1.0).contains(&self.silence_keep_prob) {
            return Err(Error::invalid("silence_keep_prob outside [0, 1]"));
        }
        if self.learning_rate < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::invalid("rates must be nonnegative"));
        }
        if self.lambda_lat < 0.0 || self.lambda_rec < 0.0 {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if self.chunk_seconds <= 0.0 {
            return Err(Error::invalid("chunk_seconds must be positive"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("batch_size", self.batch_size);
        kv.set("learning_rate", self.learning_rate);
        kv.set("weight_decay", self.weight_decay);
        kv.set("warmup_steps", self.warmup_steps);
        kv.set("total_steps", self.total_steps);
        kv.set("cosine_annealing", self.cosine_annealing);
        kv.set("lambda_lat", self.lambda_lat);
        kv.set("lambda_rec", self.lambda_rec);
        kv.set("silence_rms_db", self.silence_rms_db);
        kv.set("silence_keep_prob", self.silence_keep_prob);
        kv.set("augment_polarity", self.augment_polarity);
        kv.set("augment_channel_flip", self.augment_channel_flip);
        kv.set("augment_remix", self.augment_remix);
        kv.set("chunk_seconds", self.chunk_seconds);
        kv.set("seed", self.seed);
        kv.set("checkpoint_every", self.checkpoint_every);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let defaults = TrainingConfig::default();
        let get_or = |key: &str, d: f64| -> Result<f64> {
            if kv.contains(key) {
                kv.get_f64(key)
            } else {
                Ok(d)
            }
        };
        let cfg = TrainingConfig {
            batch_size: kv.get_usize("batch_size")?,
            learning_rate: kv.get_f64("learning_rate")?,
            weight_decay: get_or("weight_decay", defaults.weight_decay)?,
            warmup_steps: kv.get_usize("warmup_steps")?,
            total_steps: kv.get_usize("total_steps")?,
            cosine_annealing: kv.get_bool("cosine_annealing")?,
            lambda_lat: get_or("lambda_lat", defaults.lambda_lat)?,
            lambda_rec: get_or("lambda_rec", defaults.lambda_rec)?,
            silence_rms_db: get_or("silence_rms_db", defaults.silence_rms_db)?,
            silence_keep_prob: get_or("silence_keep_prob", defaults.silence_keep_prob)?,
            augment_polarity: kv.get_bool("augment_polarity")?,
            augment_channel_flip: kv.get_bool("augment_channel_flip")?,
            augment_remix: kv.get_bool("augment_remix")?,
            chunk_seconds: kv.get_f64("chunk_seconds")?,
            seed: kv.get_u64("seed")?,
            checkpoint_every: kv.get_usize("checkpoint_every")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-step loss values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub step: usize,
    pub l_diff: f64,
    pub l_lat: f64,
    pub l_rec: f64,
    pub total: f64,
    pub lr: f64,
}

/// Weights applied when combining the three losses. `diff` exists so tests
/// can mask the diffusion term and verify gradient routing.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub diff: f64,
    pub lat: f64,
    pub rec: f64,
}

/// Handles to the loss nodes of one training graph.
pub struct LossNodes {
    pub l_diff: NodeId,
    pub l_lat: NodeId,
    pub l_rec: NodeId,
    pub total: NodeId,
}

/// Per-item forward diffusion over a batch tensor: each batch row uses its
/// own sigma. Returns `(x_sigma, v_target)`.
pub fn diffuse_batch<T: Scalar>(
    x0: &Tensor<T>,
    eps: &Tensor<T>,
    sigmas: &[f64],
) -> Result<(Tensor<T>, Tensor<T>)> {
    if x0.shape() != eps.shape() || sigmas.len() != x0.batch() {
        return Err(Error::invalid("diffuse_batch shape mismatch".to_string()));
    }
    let mut x_t = x0.clone();
    let mut v = x0.clone();
    for (b, &sigma) in sigmas.iter().enumerate() {
        let c = schedule::coeffs(sigma)?;
        for ch in 0..x0.channels() {
            let x0r = x0.row(b, ch);
            let epsr = eps.row(b, ch);
            for i in 0..x0.len() {
                let xv = x0r[i].as_f64();
                let ev = epsr[i].as_f64();
                x_t.row_mut(b, ch)[i] = T::from_f64(c.alpha * xv + c.beta * ev);
                v.row_mut(b, ch)[i] = T::from_f64(c.alpha * ev - c.beta * xv);
            }
        }
    }
    Ok((x_t, v))
}

/// Build the full training graph for one batch: diffusion loss plus both
/// auxiliary losses, combined under `weights`.
pub fn build_losses<T: Scalar>(
    model: &SeparationModel<T>,
    graph: &mut Graph<'_, T>,
    x0: &Tensor<T>,
    condition: &Tensor<T>,
    sigmas: &[f64],
    eps: &Tensor<T>,
    weights: &LossWeights,
) -> Result<LossNodes> {
    let (x_t, v_target) = diffuse_batch(x0, eps, sigmas)?;

    let c_node = graph.leaf(condition.clone());
    let cond = model.conditioner_forward(graph, c_node)?;

    let x_node = graph.leaf(x_t);
    let v_hat = model.generator_forward(graph, x_node, sigmas, &cond.embeddings)?;
    let v_node = graph.leaf(v_target);
    let l_diff = graph.mse_loss(v_hat, v_node)?;
    if !graph.value(l_diff).is_all_finite() {
        return Err(Error::Numeric("diffusion loss is not finite".to_string()));
    }

    // Latent head against the clean target pooled to the bottleneck rate.
    let latent_pred = model.latent_head(graph, cond.latent)?;
    let x0_node = graph.leaf(x0.clone());
    let pool = x0.len() / graph.value(cond.latent).len();
    let x0_pooled = graph.avg_pool(x0_node, pool)?;
    let l_lat = graph.mse_loss(latent_pred, x0_pooled)?;

    // Reconstruction head at full rate.
    let rec_pred = model.rec_head(graph, cond.reconstruction)?;
    let l_rec = graph.mse_loss(rec_pred, x0_node)?;

    let diff_scaled = graph.scale(l_diff, weights.diff);
    let lat_scaled = graph.scale(l_lat, weights.lat);
    let rec_scaled = graph.scale(l_rec, weights.rec);
    let partial = graph.add(diff_scaled, lat_scaled)?;
    let total = graph.add(partial, rec_scaled)?;

    Ok(LossNodes {
        l_diff,
        l_lat,
        l_rec,
        total,
    })
}

/// Where the loop writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainSinks {
    pub loss_csv: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Assemble one batch of `(x0, c)` tensors; sampling and augmentation draw
/// from dedicated streams.
#[allow(clippy::type_complexity)]
fn next_batch(
    dataset: &TrainingSet,
    chunk_len: usize,
    cfg: &TrainingConfig,
    data_rng: &mut rand_chacha::ChaCha8Rng,
    aug_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let channels = dataset.channels();
    let mut x0 = Tensor::zeros(cfg.batch_size, channels, chunk_len);
    let mut c = Tensor::zeros(cfg.batch_size, channels, chunk_len);
    let mut filled = 0usize;
    let mut attempts = 0usize;
    let max_attempts = 200 * cfg.batch_size;
    while filled < cfg.batch_size {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::invalid(format!(
                "could not assemble a batch after {max_attempts} draws; \
                 dataset may be all silence with silence_keep_prob 0"
            )));
        }
        let pair = dataset.sample_chunk(chunk_len, data_rng)?;
        let alt = dataset.sample_chunk(chunk_len, data_rng)?;
        let Some((vocals, mixture)) = filter_and_augment(pair, &alt, cfg, aug_rng)? else {
            continue;
        };
        for ch in 0..channels {
            for (i, &s) in vocals.channel(ch).iter().enumerate() {
                x0.row_mut(filled, ch)[i] = s;
            }
            for (i, &s) in mixture.channel(ch).iter().enumerate() {
                c.row_mut(filled, ch)[i] = s;
            }
        }
        filled += 1;
    }
    Ok((x0, c))
}

/// Run the optimization loop. Deterministic given `(dataset, model seed,
/// config)`; emits one [`LossReport`] per step and returns the full curve.
pub fn train(
    dataset: &TrainingSet,
    model: &mut SeparationModel<f32>,
    cfg: &TrainingConfig,
    sinks: &TrainSinks,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    if dataset.sample_rate() != model.config.sample_rate {
        return Err(Error::invalid(format!(
            "dataset is {} Hz but the model expects {} Hz",
            dataset.sample_rate(),
            model.config.sample_rate
        )));
    }
    let chunk_len = model
        .config
        .padded_len((cfg.chunk_seconds * model.config.sample_rate as f64).round() as usize);

    let mut data_rng = rng::stream(cfg.seed, "train-data", 0);
    let mut aug_rng = rng::stream(cfg.seed, "train-augment", 0);
    let mut sigma_rng = rng::stream(cfg.seed, "train-sigma", 0);
    let mut noise_rng = rng::stream(cfg.seed, "train-noise", 0);

    let mut optimizer = AdamW::new(model.params());
    let weights = LossWeights {
        diff: 1.0,
        lat: cfg.lambda_lat,
        rec: cfg.lambda_rec,
    };

    let mut csv: Option<std::fs::File> = match &sinks.loss_csv {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            f.write_all(b"step,l_diff,l_lat,l_rec,lr\n")
                .map_err(|e| Error::io(path, e))?;
            Some(f)
        }
        None => None,
    };

    let mut reports = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let (x0, c) = next_batch(dataset, chunk_len, cfg, &mut data_rng, &mut aug_rng)?;
        let sigmas: Vec<f64> = (0..cfg.batch_size)
            .map(|_| rng::uniform_f64(&mut sigma_rng))
            .collect();
        let mut eps = Tensor::zeros(cfg.batch_size, dataset.channels(), chunk_len);
        rng::fill_standard_normal(&mut noise_rng, eps.data_mut());

        let mut graph = Graph::new(model.params());
        let losses = build_losses(model, &mut graph, &x0, &c, &sigmas, &eps, &weights)?;
        let grads = graph.backward(losses.total)?;
        let param_grads = graph.param_grads(&grads);

        let report = LossReport {
            step,
            l_diff: graph.value(losses.l_diff).scalar_value() as f64,
            l_lat: graph.value(losses.l_lat).scalar_value() as f64,
            l_rec: graph.value(losses.l_rec).scalar_value() as f64,
            total: graph.value(losses.total).scalar_value() as f64,
            lr: 0.0,
        };
        drop(graph);

        let lr = optimizer.step(model.params_mut(), &param_grads, step, cfg)?;
        let report = LossReport { lr, ..report };

        if let Some(f) = csv.as_mut() {
            writeln!(
                f,
                "{},{:.9},{:.9},{:.9},{:.9}",
                report.step, report.l_diff, report.l_lat, report.l_rec, report.lr
            )
            .map_err(|e| Error::io(sinks.loss_csv.as_ref().unwrap(), e))?;
        }
        if step % 50 == 0 {
            log::info!(
                "step {step}: l_diff {:.5} l_lat {:.5} l_rec {:.5} lr {:.6}",
                report.l_diff,
                report.l_lat,
                report.l_rec,
                report.lr
            );
        }
        if let Some(path) = &sinks.checkpoint {
            if cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0 {
                crate::nn::save_model(path, model)?;
            }
        }
        reports.push(report);
    }

    if let Some(path) = &sinks.checkpoint {
        crate::nn::save_model(path, model)?;
    }
    Ok(reports)
}

/// Convenience for tests: train on synthetic tensors without a dataset.
pub fn loss_on_batch(
    model: &SeparationModel<f32>,
    x0: &Tensor<f32>,
    c: &Tensor<f32>,
    sigmas: &[f64],
    eps: &Tensor<f32>,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<Tensor<f32>>)> {
    let mut graph = Graph::new(model.params());
    let losses = build_losses(model, &mut graph, x0, c, sigmas, eps, weights)?;
    let grads = graph.backward(losses.total)?;
    let param_grads = graph.param_grads(&grads);
    Ok((
        LossReport {
            step: 0,
            l_diff: graph.value(losses.l_diff).scalar_value() as f64,
            l_lat: graph.value(losses.l_lat).scalar_value() as f64,
            l_rec: graph.value(losses.l_rec).scalar_value() as f64,
            total: graph.value(losses.total).scalar_value() as f64,
            lr: 0.0,
        },
        param_grads,
    ))
}
