//! Noise schedule construction and the closed-form diffusion algebra.
//!
//! A schedule is a list of noise levels `sigma_0 = 0 < ... < sigma_T = 1`.
//! Each level maps to trigonometric mixing coefficients via
//! `phi = (pi/2) * sigma`, `alpha = cos(phi)`, `beta = sin(phi)`, so that
//! `alpha^2 + beta^2 = 1` identically. The four buffer transforms below are
//! all elementwise linear combinations under those coefficients:
//!
//! - forward diffusion   `x_sigma = alpha * x0 + beta * eps`
//! - velocity target     `v = alpha * eps - beta * x0`
//! - data recovery       `x0 = alpha * x_sigma - beta * v`
//! - noise recovery      `eps = beta * x_sigma + alpha * v`
//!
//! The recovery pair inverts the forward pair exactly (a rotation and its
//! transpose), which is what makes the v-objective round-trip testable to
//! machine precision. Internals run in f64 and store f32.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Sigma spacing rule. Only uniform spacing is implemented; the enum exists
/// so alternative schedules can be added without changing call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
}

/// Ordered noise levels `sigma_t`, `t = 0..=T`, with `sigma_0 = 0` and
/// `sigma_T = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// Number of sampling steps `T` (one less than the number of levels).
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

/// Trigonometric mixing coefficients for one noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionCoeffs {
    pub alpha: f64,
    pub beta: f64,
    /// Mixing angle in radians, `(pi/2) * sigma`.
    pub phi: f64,
}

/// Uniform schedule `sigma_t = t / T`.
pub fn make_schedule(steps: usize, spacing: Spacing) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    let Spacing::Linear = spacing;
    let sigmas = (0..=steps).map(|t| t as f64 / steps as f64).collect();
    Ok(NoiseSchedule { sigmas })
}

/// Coefficients `(cos, sin)` of `(pi/2) * sigma`.
pub fn coeffs(sigma: f64) -> Result<DiffusionCoeffs> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::invalid(format!("sigma {sigma} outside [0, 1]")));
    }
    let phi = std::f64::consts::FRAC_PI_2 * sigma;
    Ok(DiffusionCoeffs {
        alpha: phi.cos(),
        beta: phi.sin(),
        phi,
    })
}

/// Elementwise `a * x + b * y`, computed in f64.
fn lincomb(a: f64, x: &AudioBuffer, b: f64, y: &AudioBuffer) -> AudioBuffer {
    let mut out = x.clone();
    for (o, (&xv, &yv)) in out
        .planar_mut()
        .iter_mut()
        .zip(x.planar().iter().zip(y.planar()))
    {
        *o = (a * xv as f64 + b * yv as f64) as f32;
    }
    out
}

/// Forward diffusion `alpha * x0 + beta * eps`.
pub fn forward_diffuse(x0: &AudioBuffer, eps: &AudioBuffer, sigma: f64) -> Result<AudioBuffer> {
    x0.ensure_same_shape(eps, "forward_diffuse")?;
    let c = coeffs(sigma)?;
    Ok(lincomb(c.alpha, x0, c.beta, eps))
}

/// Velocity prediction target `alpha * eps - beta * x0`.
pub fn velocity_target(x0: &AudioBuffer, eps: &AudioBuffer, sigma: f64) -> Result<AudioBuffer> {
    x0.ensure_same_shape(eps, "velocity_target")?;
    let c = coeffs(sigma)?;
    Ok(lincomb(c.alpha, eps, -c.beta, x0))
}

/// Recover the clean signal: `alpha * x_t - beta * v`.
pub fn recover_x0(x_t: &AudioBuffer, v: &AudioBuffer, sigma: f64) -> Result<AudioBuffer> {
    x_t.ensure_same_shape(v, "recover_x0")?;
    let c = coeffs(sigma)?;
    Ok(lincomb(c.alpha, x_t, -c.beta, v))
}

/// Recover the noise: `beta * x_t + alpha * v`.
pub fn recover_eps(x_t: &AudioBuffer, v: &AudioBuffer, sigma: f64) -> Result<AudioBuffer> {
    x_t.ensure_same_shape(v, "recover_eps")?;
    let c = coeffs(sigma)?;
    Ok(lincomb(c.beta, x_t, c.alpha, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_buffer(seed: u64, scale: f32) -> AudioBuffer {
        let mut rng = rng::stream(seed, "schedule-test", 0);
        let mut buf = AudioBuffer::zeros(2, 64, 44_100);
        rng::fill_standard_normal(&mut rng, buf.planar_mut());
        buf.scale(scale);
        buf
    }

    #[test]
    fn schedule_endpoints_and_spacing() {
        assert_eq!(make_schedule(1, Spacing::Linear).unwrap().sigmas(), &[0.0, 1.0]);
        assert_eq!(
            make_schedule(2, Spacing::Linear).unwrap().sigmas(),
            &[0.0, 0.5, 1.0]
        );
        let s = make_schedule(20, Spacing::Linear).unwrap();
        assert_eq!(s.sigmas().len(), 21);
        assert_eq!(s.sigma(20), 1.0);
        assert!(s.sigmas().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_steps_is_an_error() {
        assert!(make_schedule(0, Spacing::Linear).is_err());
    }

    #[test]
    fn coeffs_at_landmarks() {
        let c0 = coeffs(0.0).unwrap();
        assert_eq!((c0.alpha, c0.beta), (1.0, 0.0));
        let c1 = coeffs(1.0).unwrap();
        assert!(c1.alpha.abs() < 1e-15 && (c1.beta - 1.0).abs() < 1e-15);
        let ch = coeffs(0.5).unwrap();
        assert!((ch.alpha - 0.707_106_78).abs() < 1e-8);
        assert!((ch.beta - 0.707_106_78).abs() < 1e-8);
        assert!(coeffs(-0.1).is_err());
        assert!(coeffs(1.1).is_err());
    }

    #[test]
    fn pythagorean_identity_along_schedule() {
        let s = make_schedule(100, Spacing::Linear).unwrap();
        for &sigma in s.sigmas() {
            let c = coeffs(sigma).unwrap();
            assert!((c.alpha * c.alpha + c.beta * c.beta - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_monotone_down_beta_monotone_up() {
        let s = make_schedule(50, Spacing::Linear).unwrap();
        let cs: Vec<_> = s.sigmas().iter().map(|&x| coeffs(x).unwrap()).collect();
        assert!(cs.windows(2).all(|w| w[1].alpha <= w[0].alpha));
        assert!(cs.windows(2).all(|w| w[1].beta >= w[0].beta));
    }

    #[test]
    fn endpoint_transforms() {
        let x0 = random_buffer(1, 0.5);
        let eps = random_buffer(2, 1.0);
        assert_eq!(forward_diffuse(&x0, &eps, 0.0).unwrap(), x0);
        // sigma = 1: alpha is cos(pi/2) ~ 6e-17, below f32 resolution.
        let diffused = forward_diffuse(&x0, &eps, 1.0).unwrap();
        for (a, b) in diffused.planar().iter().zip(eps.planar()) {
            assert!((a - b).abs() < 1e-7);
        }
        assert_eq!(velocity_target(&x0, &eps, 0.0).unwrap(), eps);
        let v1 = velocity_target(&x0, &eps, 1.0).unwrap();
        for (a, b) in v1.planar().iter().zip(x0.planar()) {
            assert!((a + b).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_buffer_midpoint_values() {
        let sr = 44_100;
        let x0 = AudioBuffer::from_fn(2, 8, sr, |_, _| 2.0);
        let eps = AudioBuffer::zeros(2, 8, sr);
        let out = forward_diffuse(&x0, &eps, 0.5).unwrap();
        for &s in out.planar() {
            assert!((s - 1.414_213_56).abs() < 1e-6);
        }
        let ones = AudioBuffer::from_fn(2, 8, sr, |_, _| 1.0);
        let v = velocity_target(&ones, &ones, 0.5).unwrap();
        assert!(v.planar().iter().all(|&s| s.abs() < 1e-7));
        let x = recover_x0(&ones, &ones, 0.5).unwrap();
        assert!(x.planar().iter().all(|&s| s.abs() < 1e-7));
    }

    #[test]
    fn recover_identities_at_endpoints() {
        let x_t = random_buffer(3, 1.0);
        let v = random_buffer(4, 1.0);
        assert_eq!(recover_x0(&x_t, &v, 0.0).unwrap(), x_t);
        assert_eq!(recover_eps(&x_t, &v, 0.0).unwrap(), v);
        let r = recover_eps(&x_t, &v, 1.0).unwrap();
        for (a, b) in r.planar().iter().zip(x_t.planar()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn round_trip_recovers_x0_and_eps() {
        let mut srng = rng::stream(99, "round-trip", 0);
        for case in 0..100 {
            let x0 = random_buffer(1000 + case, 0.7);
            let eps = random_buffer(2000 + case, 1.0);
            let sigma = rng::uniform_f64(&mut srng);
            let x_t = forward_diffuse(&x0, &eps, sigma).unwrap();
            let v = velocity_target(&x0, &eps, sigma).unwrap();
            let x0_rec = recover_x0(&x_t, &v, sigma).unwrap();
            let eps_rec = recover_eps(&x_t, &v, sigma).unwrap();
            for (a, b) in x0_rec.planar().iter().zip(x0.planar()) {
                assert!((a - b).abs() < 1e-6);
            }
            for (a, b) in eps_rec.planar().iter().zip(eps.planar()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn forward_diffuse_is_linear_in_inputs() {
        let x0 = random_buffer(5, 0.3);
        let eps = random_buffer(6, 1.0);
        let a = 2.5f32;
        let mut x0s = x0.clone();
        x0s.scale(a);
        let mut epss = eps.clone();
        epss.scale(a);
        let lhs = forward_diffuse(&x0s, &epss, 0.37).unwrap();
        let mut rhs = forward_diffuse(&x0, &eps, 0.37).unwrap();
        rhs.scale(a);
        for (l, r) in lhs.planar().iter().zip(rhs.planar()) {
            assert!((l - r).abs() < 1e-5);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = AudioBuffer::zeros(2, 16, 44_100);
        let b = AudioBuffer::zeros(1, 16, 44_100);
        assert!(forward_diffuse(&a, &b, 0.5).is_err());
        assert!(velocity_target(&a, &b, 0.5).is_err());
        assert!(recover_x0(&a, &b, 0.5).is_err());
        assert!(recover_eps(&a, &b, 0.5).is_err());
    }
}
