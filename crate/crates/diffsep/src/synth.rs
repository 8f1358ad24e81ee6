//! Deterministic synthetic mixtures: a harmonic voice over filtered noise
//! and a sustained triad pad.
//!
//! Each track is generated independently from `(seed, track index)`, so
//! datasets are byte-identical across runs and platforms. The vocal stem is
//! a random-walk fundamental with vibrato and `1/k` partial amplitudes, sung
//! in phrases separated by silences (at least 10% of each track is silent,
//! which exercises the silence-filtering path during training). The
//! accompaniment mixes low-passed noise with a slowly pulsing triad. The
//! mixture is the sample-exact f32 sum of the two stems; all three are
//! written as float WAVs so additivity survives the files.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::io::{write_wav, WavFormat};
use crate::kv::KvMap;
use crate::rng;

/// Synthesis parameters; flat key-value serializable.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub track_count: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub channels: usize,
    /// Fundamental trajectory range in Hz.
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub partials: usize,
    pub vibrato_rate_hz: f64,
    pub vibrato_depth_semitones: f64,
    /// Accompaniment component gains.
    pub noise_gain: f64,
    pub chord_gain: f64,
    /// One-pole low-pass cutoff for the noise bed.
    pub noise_cutoff_hz: f64,
    /// Per-track SNR (vocals vs accompaniment) drawn uniformly from this
    /// range, in dB.
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Toy scale: 64 twelve-second stereo tracks at 44.1 kHz.
    fn default() -> Self {
        SynthSpec {
            track_count: 64,
            duration_s: 12.0,
            sample_rate: 44_100,
            channels: 2,
            f0_min_hz: 160.0,
            f0_max_hz: 400.0,
            partials: 40,
            vibrato_rate_hz: 5.5,
            vibrato_depth_semitones: 0.4,
            noise_gain: 1.0,
            chord_gain: 0.8,
            noise_cutoff_hz: 2_500.0,
            snr_db_min: 0.0,
            snr_db_max: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.track_count == 0 || self.duration_s <= 0.0 || self.sample_rate == 0 {
            return Err(Error::invalid("degenerate synthesis geometry"));
        }
        if self.channels == 0 {
            return Err(Error::invalid("channels must be positive"));
        }
        if !(50.0 < self.f0_min_hz && self.f0_min_hz < self.f0_max_hz && self.f0_max_hz < 1_000.0)
        {
            return Err(Error::invalid(
                "fundamental range must satisfy 50 < min < max < 1000 Hz",
            ));
        }
        if self.partials == 0 {
            return Err(Error::invalid("need at least one partial"));
        }
        if !self.snr_db_min.is_finite()
            || !self.snr_db_max.is_finite()
            || self.snr_db_min > self.snr_db_max
        {
            return Err(Error::invalid("snr range must be finite and ordered"));
        }
        if self.noise_cutoff_hz <= 0.0 || self.noise_cutoff_hz >= self.sample_rate as f64 / 2.0 {
            return Err(Error::invalid("noise cutoff outside (0, nyquist)"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("track_count", self.track_count);
        kv.set("duration_s", self.duration_s);
        kv.set("sample_rate", self.sample_rate);
        kv.set("channels", self.channels);
        kv.set("f0_min_hz", self.f0_min_hz);
        kv.set("f0_max_hz", self.f0_max_hz);
        kv.set("partials", self.partials);
        kv.set("vibrato_rate_hz", self.vibrato_rate_hz);
        kv.set("vibrato_depth_semitones", self.vibrato_depth_semitones);
        kv.set("noise_gain", self.noise_gain);
        kv.set("chord_gain", self.chord_gain);
        kv.set("noise_cutoff_hz", self.noise_cutoff_hz);
        kv.set("snr_db_min", self.snr_db_min);
        kv.set("snr_db_max", self.snr_db_max);
        kv.set("seed", self.seed);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = SynthSpec::default();
        let f = |key: &str, dv: f64| -> Result<f64> {
            if kv.contains(key) {
                kv.get_f64(key)
            } else {
                Ok(dv)
            }
        };
        let spec = SynthSpec {
            track_count: if kv.contains("track_count") {
                kv.get_usize("track_count")?
            } else {
                d.track_count
            },
            duration_s: f("duration_s", d.duration_s)?,
            sample_rate: f("sample_rate", d.sample_rate as f64)? as u32,
            channels: if kv.contains("channels") {
                kv.get_usize("channels")?
            } else {
                d.channels
            },
            f0_min_hz: f("f0_min_hz", d.f0_min_hz)?,
            f0_max_hz: f("f0_max_hz", d.f0_max_hz)?,
            partials: if kv.contains("partials") {
                kv.get_usize("partials")?
            } else {
                d.partials
            },
            vibrato_rate_hz: f("vibrato_rate_hz", d.vibrato_rate_hz)?,
            vibrato_depth_semitones: f("vibrato_depth_semitones", d.vibrato_depth_semitones)?,
            noise_gain: f("noise_gain", d.noise_gain)?,
            chord_gain: f("chord_gain", d.chord_gain)?,
            noise_cutoff_hz: f("noise_cutoff_hz", d.noise_cutoff_hz)?,
            snr_db_min: f("snr_db_min", d.snr_db_min)?,
            snr_db_max: f("snr_db_max", d.snr_db_max)?,
            seed: if kv.contains("seed") {
                kv.get_u64("seed")?
            } else {
                d.seed
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Phrase on/off envelope: sung spans of 1.0-2.5 s separated by silences of
/// 0.5-1.5 s, with 30 ms raised-cosine edges. The silence fraction is at
/// least 0.5 / (2.5 + 0.5) ~ 17% by construction.
fn phrase_envelope(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut env = vec![0.0f32; len];
    let edge = (0.03 * fs) as usize;
    let mut pos = 0usize;
    let mut singing = rng::coin(rng, 0.7);
    while pos < len {
        let dur_s = if singing {
            1.0 + 1.5 * rng::uniform_f64(rng)
        } else {
            0.5 + 1.0 * rng::uniform_f64(rng)
        };
        let dur = ((dur_s * fs) as usize).max(edge * 2 + 1).min(len - pos);
        if singing {
            for i in 0..dur {
                let ramp_in = ((i + 1) as f32 / edge as f32).min(1.0);
                let ramp_out = ((dur - i) as f32 / edge as f32).min(1.0);
                let r_in = 0.5 - 0.5 * (std::f32::consts::PI * ramp_in).cos();
                let r_out = 0.5 - 0.5 * (std::f32::consts::PI * ramp_out).cos();
                env[pos + i] = r_in.min(r_out).max(0.0);
            }
        }
        pos += dur;
        singing = !singing;
    }
    env
}

fn vocal_stem(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> AudioBuffer {
    let fs = spec.sample_rate as f64;
    let len = (spec.duration_s * fs).round() as usize;
    let mut out = AudioBuffer::zeros(spec.channels, len, spec.sample_rate);

    // Log-domain random-walk fundamental at a 50 Hz control rate.
    let ctrl_hop = (fs / 50.0) as usize;
    let n_ctrl = len / ctrl_hop + 2;
    let (lmin, lmax) = (spec.f0_min_hz.ln(), spec.f0_max_hz.ln());
    let mut lf0 = lmin + rng::uniform_f64(rng) * (lmax - lmin);
    let mut ctrl = Vec::with_capacity(n_ctrl);
    for _ in 0..n_ctrl {
        ctrl.push(lf0.exp());
        let (step, _) = rng::normal_pair(rng);
        lf0 = (lf0 + 0.03 * step).clamp(lmin, lmax);
    }

    let env = phrase_envelope(len, fs, rng);
    let vib_phase = std::f64::consts::TAU * rng::uniform_f64(rng);
    let slow_am_rate = 0.5 + 1.5 * rng::uniform_f64(rng);

    // Cap partials so the highest never aliases, given the worst-case
    // instantaneous fundamental (range max plus vibrato).
    let vib_factor = 2f64.powf(spec.vibrato_depth_semitones / 12.0);
    let k_cap = ((0.48 * fs) / (spec.f0_max_hz * vib_factor)) as usize;
    let n_partials = spec.partials.min(k_cap.max(1));

    for ch in 0..spec.channels {
        let mut phases: Vec<f64> = (0..n_partials)
            .map(|_| std::f64::consts::TAU * rng::uniform_f64(rng))
            .collect();
        let row = out.channel_mut(ch);
        for (i, sample) in row.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let ctrl_pos = i as f64 / ctrl_hop as f64;
            let c0 = ctrl_pos as usize;
            let frac = ctrl_pos - c0 as f64;
            let f0 = ctrl[c0] * (1.0 - frac) + ctrl[c0 + 1] * frac;
            let vib = 2f64.powf(
                spec.vibrato_depth_semitones / 12.0
                    * (std::f64::consts::TAU * spec.vibrato_rate_hz * t + vib_phase).sin(),
            );
            let f = f0 * vib;
            let mut acc = 0.0f64;
            for (k, phase) in phases.iter_mut().enumerate() {
                let kf = (k + 1) as f64 * f;
                *phase += std::f64::consts::TAU * kf / fs;
                acc += phase.sin() / (k + 1) as f64;
            }
            let am = 1.0 - 0.2 * (std::f64::consts::TAU * slow_am_rate * t).sin();
            *sample = (acc * am) as f32 * env[i];
        }
    }
    // Normalize away the partial-count dependence.
    let peak = out.peak();
    if peak > 0.0 {
        out.scale(0.5 / peak);
    }
    out
}

fn accompaniment_stem(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> AudioBuffer {
    let fs = spec.sample_rate as f64;
    let len = (spec.duration_s * fs).round() as usize;
    let mut out = AudioBuffer::zeros(spec.channels, len, spec.sample_rate);

    // Low-passed noise bed: one-pole filter per channel.
    let a = 1.0 - (-std::f64::consts::TAU * spec.noise_cutoff_hz / fs).exp();
    for ch in 0..spec.channels {
        let mut state = 0.0f64;
        let row = out.channel_mut(ch);
        for sample in row.iter_mut() {
            let (white, _) = rng::normal_pair(rng);
            state += a * (white - state);
            *sample = (spec.noise_gain * state) as f32;
        }
    }

    // Sustained triad with a slow pulse, detuned slightly per channel.
    let root = 110.0 * 2f64.powf(rng::uniform_f64(rng));
    let minor = rng::coin(rng, 0.5);
    let intervals = if minor { [0.0, 3.0, 7.0] } else { [0.0, 4.0, 7.0] };
    let pulse_rate = 0.25 + 0.5 * rng::uniform_f64(rng);
    for ch in 0..spec.channels {
        let detune = 1.0 + 0.003 * (rng::uniform_f64(rng) - 0.5);
        let mut phases = [0.0f64; 9];
        let row = out.channel_mut(ch);
        for (i, sample) in row.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let pulse = 0.75 + 0.25 * (std::f64::consts::TAU * pulse_rate * t).sin();
            let mut acc = 0.0f64;
            for (n, &semi) in intervals.iter().enumerate() {
                let f = root * 2f64.powf(semi / 12.0) * detune;
                for h in 0..3 {
                    let idx = n * 3 + h;
                    phases[idx] += std::f64::consts::TAU * f * (h + 1) as f64 / fs;
                    acc += phases[idx].sin() / ((h + 1) as f64 * 3.0);
                }
            }
            *sample += (spec.chord_gain * 0.2 * pulse * acc) as f32;
        }
    }
    out
}

/// Generate `spec.track_count` tracks under `out_dir`, one folder per track
/// with `mixture.wav` and `vocals.wav` (float WAVs).
pub fn synthesize(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<()> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    for track in 0..spec.track_count {
        let mut rng = rng::stream(spec.seed, "synth-track", track as u64);
        let mut vocals = vocal_stem(spec, &mut rng);
        let mut accomp = accompaniment_stem(spec, &mut rng);

        // Scale the accompaniment for the drawn SNR (vocal energy is fixed).
        let snr_db =
            spec.snr_db_min + rng::uniform_f64(&mut rng) * (spec.snr_db_max - spec.snr_db_min);
        let ev = vocals.energy();
        let ea = accomp.energy();
        if ea > 0.0 && ev > 0.0 {
            let scale = (ev / (ea * 10f64.powf(snr_db / 10.0))).sqrt() as f32;
            accomp.scale(scale);
        }

        // Peak-normalize the mixture to -1 dBFS, scaling both stems by the
        // same factor and re-summing so additivity stays sample-exact.
        let mixture = vocals.add(&accomp)?;
        let peak = mixture.peak();
        if peak > 0.0 {
            let g = (10f32).powf(-1.0 / 20.0) / peak;
            vocals.scale(g);
            accomp.scale(g);
        }
        let mixture = vocals.add(&accomp)?;

        let dir = out_dir.join(format!("track_{track:03}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_wav(dir.join("mixture.wav"), &mixture, WavFormat::Float32)?;
        write_wav(dir.join("vocals.wav"), &vocals, WavFormat::Float32)?;
    }
    Ok(())
}
