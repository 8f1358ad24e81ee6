//! AdamW with decoupled weight decay and a linear-warmup cosine schedule.

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

use super::TrainingConfig;

/// Learning rate at `step`: linear ramp to the peak over `warmup_steps`,
/// then cosine decay to zero at `total_steps` (or flat if annealing is off).
pub fn lr_at(step: usize, cfg: &TrainingConfig) -> f64 {
    let peak = cfg.learning_rate;
    if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
        return peak * step as f64 / cfg.warmup_steps as f64;
    }
    if !cfg.cosine_annealing || cfg.total_steps <= cfg.warmup_steps {
        return peak;
    }
    let progress =
        (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    peak * 0.5 * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
}

/// Adaptive-moment state aligned with a parameter store.
pub struct AdamW {
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamW {
    pub fn new(store: &ParamStore<f32>) -> Self {
        let zeros: Vec<Tensor<f32>> = store
            .iter()
            .map(|(_, _, t)| {
                let (b, c, l) = t.shape();
                Tensor::zeros(b, c, l)
            })
            .collect();
        AdamW {
            m: zeros.clone(),
            v: zeros,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update at `step_index`; returns the applied learning rate.
    /// Gradients must be dense (one tensor per parameter, zeros allowed).
    pub fn step(
        &mut self,
        store: &mut ParamStore<f32>,
        grads: &[Tensor<f32>],
        step_index: usize,
        cfg: &TrainingConfig,
    ) -> Result<f64> {
        if grads.len() != store.len() {
            return Err(Error::invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        let lr = lr_at(step_index, cfg);
        let t = (step_index + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (idx, grad) in grads.iter().enumerate() {
            let pid = crate::tensor::ParamId(idx);
            if !grad.is_all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter `{}` at step {step_index}",
                    store.name(pid)
                )));
            }
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let p = store.get_mut(pid).data_mut();
            for ((pv, &g), (mv, vv)) in
                p.iter_mut().zip(grad.data()).zip(m.iter_mut().zip(v.iter_mut()))
            {
                let g = g as f64;
                let m_new = self.beta1 * *mv as f64 + (1.0 - self.beta1) * g;
                let v_new = self.beta2 * *vv as f64 + (1.0 - self.beta2) * g * g;
                *mv = m_new as f32;
                *vv = v_new as f32;
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                let update = m_hat / (v_hat.sqrt() + self.eps) + cfg.weight_decay * *pv as f64;
                *pv = (*pv as f64 - lr * update) as f32;
            }
        }
        Ok(lr)
    }
}
