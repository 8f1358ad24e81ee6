//! Butterworth high-pass design as a cascade of biquad sections.
//!
//! Each conjugate pole pair of the analog prototype becomes one second-order
//! section `H(s) = s^2 / (s^2 + (wc/Q_k) s + wc^2)` with
//! `Q_k = 1 / (2 sin((2k-1) pi / (2N)))`, digitized by the bilinear transform
//! with the cutoff prewarped as `K = tan(pi fc / fs)`:
//!
//! ```text
//! a0 = 1 + K/Q + K^2
//! b = [1, -2, 1] / a0,   a1 = 2 (K^2 - 1) / a0,   a2 = (1 - K/Q + K^2) / a0
//! ```
//!
//! Prewarping pins the -3.01 dB point exactly at `fc` for any cutoff below
//! Nyquist.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// One second-order section; feedforward `b0, b1, b2`, feedback `a1, a2`
/// (with `a0` normalized to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    /// Poles strictly inside the unit circle (Jury criterion for a
    /// second-order polynomial).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Complex magnitude response at normalized angular frequency `omega`
    /// (radians/sample).
    fn magnitude_at(&self, omega: f64) -> f64 {
        let (re1, im1) = (omega.cos(), -omega.sin());
        let (re2, im2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        let num_re = self.b0 + self.b1 * re1 + self.b2 * re2;
        let num_im = self.b1 * im1 + self.b2 * im2;
        let den_re = 1.0 + self.a1 * re1 + self.a2 * re2;
        let den_im = self.a1 * im1 + self.a2 * im2;
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

/// A cascade of biquad sections with the design geometry it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<BiquadSection>,
    sample_rate: f64,
    cutoff_hz: f64,
}

/// High-pass Butterworth of the given even order via prewarped bilinear
/// transform. Order 4 yields exactly two sections.
pub fn design_butterworth_hp(cutoff_hz: f64, sample_rate: f64, order: usize) -> Result<BiquadCascade> {
    if !(order == 2 || order == 4) {
        return Err(Error::invalid(format!("unsupported filter order {order}")));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz outside (0, {}) for rate {sample_rate}",
            sample_rate / 2.0
        )));
    }
    let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
    let n = order;
    let sections = (1..=n / 2)
        .map(|sec| {
            let theta = (2 * sec - 1) as f64 * std::f64::consts::PI / (2.0 * n as f64);
            let q = 1.0 / (2.0 * theta.sin());
            let a0 = 1.0 + k / q + k * k;
            BiquadSection {
                b0: 1.0 / a0,
                b1: -2.0 / a0,
                b2: 1.0 / a0,
                a1: 2.0 * (k * k - 1.0) / a0,
                a2: (1.0 - k / q + k * k) / a0,
            }
        })
        .collect::<Vec<_>>();
    debug_assert!(sections.iter().all(|s| s.is_stable()));
    Ok(BiquadCascade {
        sections,
        sample_rate,
        cutoff_hz,
    })
}

impl BiquadCascade {
    pub fn sections(&self) -> &[BiquadSection] {
        &self.sections
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    /// Magnitude response at `freq_hz`, linear scale.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let omega = std::f64::consts::TAU * freq_hz / self.sample_rate;
        self.sections.iter().map(|s| s.magnitude_at(omega)).product()
    }

    /// Magnitude response in dB.
    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude_at(freq_hz).log10()
    }

    /// Causal filtering per channel with zero initial state (transposed
    /// direct form II, f64 state).
    pub fn apply(&self, x: &AudioBuffer) -> Result<AudioBuffer> {
        if (x.sample_rate() as f64 - self.sample_rate).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "buffer rate {} does not match filter design rate {}",
                x.sample_rate(),
                self.sample_rate
            )));
        }
        let mut out = x.clone();
        for ch in 0..out.channels() {
            let row = out.channel_mut(ch);
            for s in &self.sections {
                let (mut z1, mut z2) = (0.0f64, 0.0f64);
                for v in row.iter_mut() {
                    let xin = *v as f64;
                    let y = s.b0 * xin + z1;
                    z1 = s.b1 * xin - s.a1 * y + z2;
                    z2 = s.b2 * xin - s.a2 * y;
                    *v = y as f32;
                }
            }
        }
        Ok(out)
    }

    /// Noise power gain `g = sum h[n]^2`, accumulated until the running tail
    /// energy falls below 1e-9 of the total (window of 256 samples), capped
    /// at 1e6 samples.
    pub fn noise_power_gain(&self) -> f64 {
        const WINDOW: usize = 256;
        const MAX_LEN: usize = 1_000_000;
        let mut states: Vec<(f64, f64)> = vec![(0.0, 0.0); self.sections.len()];
        let mut total = 0.0f64;
        let mut window_energy = 0.0f64;
        let mut ring = [0.0f64; WINDOW];
        for n in 0..MAX_LEN {
            let mut v = if n == 0 { 1.0 } else { 0.0 };
            for (s, (z1, z2)) in self.sections.iter().zip(states.iter_mut()) {
                let y = s.b0 * v + *z1;
                *z1 = s.b1 * v - s.a1 * y + *z2;
                *z2 = s.b2 * v - s.a2 * y;
                v = y;
            }
            let e = v * v;
            total += e;
            window_energy += e - ring[n % WINDOW];
            ring[n % WINDOW] = e;
            if n >= WINDOW && window_energy <= 1e-9 * total {
                break;
            }
        }
        total
    }
}
