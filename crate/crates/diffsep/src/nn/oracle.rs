//! Closed-form MMSE denoiser for Gaussian data, used to test the sampler
//! without any training.
//!
//! For `x0 ~ N(mu, s^2 I)` and `x_t = alpha x0 + beta eps`, the posterior
//! mean is
//!
//! ```text
//! E[x0 | x_t] = mu + (alpha s^2 / (alpha^2 s^2 + beta^2)) (x_t - alpha mu)
//! ```
//!
//! and the matching velocity estimate is `v = (alpha x_t - x0_hat) / beta`
//! for `beta > 0`. At `sigma = 0` the observation pins `x0 = x_t` and the
//! unobserved noise has posterior mean zero, so `v = 0`.

use crate::audio::AudioBuffer;
use crate::error::Result;
use crate::nn::Denoiser;
use crate::schedule;
use crate::tensor::{Scalar, Tensor};

/// Scalar posterior mean for one sample.
pub(crate) fn posterior_x0(x_t: f64, alpha: f64, beta: f64, mu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return mu;
    }
    let gain = alpha * s * s / (alpha * alpha * s * s + beta * beta);
    mu + gain * (x_t - alpha * mu)
}

pub(crate) fn posterior_v(x_t: f64, alpha: f64, beta: f64, mu: f64, s: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let x0 = posterior_x0(x_t, alpha, beta, mu, s);
    (alpha * x_t - x0) / beta
}

/// Velocity prediction of the Gaussian oracle over a tensor.
pub fn oracle_predict_v_tensor<T: Scalar>(
    x_t: &Tensor<T>,
    sigma: f64,
    mu: f64,
    s: f64,
) -> Result<Tensor<T>> {
    let c = schedule::coeffs(sigma)?;
    let mut out = x_t.clone();
    for v in out.data_mut() {
        *v = T::from_f64(posterior_v(v.as_f64(), c.alpha, c.beta, mu, s));
    }
    Ok(out)
}

/// Velocity prediction of the Gaussian oracle over an audio buffer.
pub fn oracle_predict_v(x_t: &AudioBuffer, sigma: f64, mu: f64, s: f64) -> Result<AudioBuffer> {
    let c = schedule::coeffs(sigma)?;
    let mut out = x_t.clone();
    for v in out.planar_mut() {
        *v = posterior_v(*v as f64, c.alpha, c.beta, mu, s) as f32;
    }
    Ok(out)
}

/// The oracle wrapped as a [`Denoiser`]; the condition input is ignored.
#[derive(Debug, Clone, Copy)]
pub struct GaussianOracleDenoiser {
    pub mu: f64,
    pub s: f64,
}

impl GaussianOracleDenoiser {
    pub fn new(mu: f64, s: f64) -> Self {
        GaussianOracleDenoiser { mu, s }
    }

    /// Posterior mean over a buffer, exposed for analytic comparisons.
    pub fn posterior_x0(&self, x_t: &AudioBuffer, sigma: f64) -> Result<AudioBuffer> {
        let c = schedule::coeffs(sigma)?;
        let mut out = x_t.clone();
        for v in out.planar_mut() {
            *v = posterior_x0(*v as f64, c.alpha, c.beta, self.mu, self.s) as f32;
        }
        Ok(out)
    }
}

impl Denoiser for GaussianOracleDenoiser {
    fn predict_v(
        &self,
        x_t: &AudioBuffer,
        sigma: f64,
        _condition: &AudioBuffer,
    ) -> Result<AudioBuffer> {
        oracle_predict_v(x_t, sigma, self.mu, self.s)
    }
}
