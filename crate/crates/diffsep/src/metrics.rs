//! Separation quality metrics and dataset-level evaluation.
//!
//! SDR is the plain utterance-level energy ratio
//! `10 log10(sum s^2 / sum (s - s_hat)^2)` pooled over channels — scale
//! errors count against it. SIR least-squares-projects the estimate onto
//! `span{target, accompaniment}` per channel and compares the energies of
//! the two components; it is invariant to rescaling the estimate. Both are
//! capped at +/-100 dB so aggregation stays finite.

use std::path::Path;

use crate::audio::AudioBuffer;
use crate::dsp::ChunkPlan;
use crate::error::{Error, Result};
use crate::io::{self, DatasetItem};
use crate::nn::{ModelDenoiser, SeparationModel};
use crate::sampler::{self, SamplerConfig};

pub const DB_CAP: f64 = 100.0;

fn cap_db(x: f64) -> f64 {
    x.clamp(-DB_CAP, DB_CAP)
}

/// Utterance-level signal-to-distortion ratio in dB.
pub fn sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    reference.ensure_same_shape(estimate, "sdr")?;
    let signal = reference.energy();
    if signal == 0.0 {
        return Err(Error::UndefinedReference(
            "sdr reference is all zeros".into(),
        ));
    }
    let residual: f64 = reference
        .planar()
        .iter()
        .zip(estimate.planar())
        .map(|(&s, &e)| (s as f64 - e as f64).powi(2))
        .sum();
    if residual == 0.0 {
        return Ok(DB_CAP);
    }
    Ok(cap_db(10.0 * (signal / residual).log10()))
}

/// Signal-to-interference ratio via instantaneous per-channel projection.
pub fn sir(
    target: &AudioBuffer,
    accompaniment: &AudioBuffer,
    estimate: &AudioBuffer,
) -> Result<f64> {
    target.ensure_same_shape(accompaniment, "sir")?;
    target.ensure_same_shape(estimate, "sir")?;
    let mut target_energy = 0.0f64;
    let mut interference_energy = 0.0f64;
    for ch in 0..target.channels() {
        let t = target.channel(ch);
        let a = accompaniment.channel(ch);
        let e = estimate.channel(ch);
        let dot = |x: &[f32], y: &[f32]| -> f64 {
            x.iter()
                .zip(y)
                .map(|(&xa, &ya)| xa as f64 * ya as f64)
                .sum()
        };
        let (tt, aa, ta) = (dot(t, t), dot(a, a), dot(t, a));
        if tt == 0.0 || aa == 0.0 {
            return Err(Error::UndefinedReference(format!(
                "sir reference degenerate in channel {ch}"
            )));
        }
        let det = tt * aa - ta * ta;
        if det.abs() <= 1e-12 * tt * aa {
            return Err(Error::UndefinedReference(format!(
                "sir references are collinear in channel {ch}"
            )));
        }
        let (te, ae) = (dot(t, e), dot(a, e));
        // Solve [tt ta; ta aa] [ct; ca] = [te; ae].
        let ct = (te * aa - ta * ae) / det;
        let ca = (tt * ae - ta * te) / det;
        target_energy += ct * ct * tt;
        interference_energy += ca * ca * aa;
    }
    if interference_energy == 0.0 {
        return Ok(DB_CAP);
    }
    if target_energy == 0.0 {
        return Ok(-DB_CAP);
    }
    Ok(cap_db(10.0 * (target_energy / interference_energy).log10()))
}

fn median(values: &[f64]) -> f64 {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    assert!(!finite.is_empty(), "median of no finite values");
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = finite.len();
    if n % 2 == 1 {
        finite[n / 2]
    } else {
        0.5 * (finite[n / 2 - 1] + finite[n / 2])
    }
}

/// One track's metrics within one evaluation repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEval {
    pub track: String,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub repeat_index: usize,
}

/// Aggregated evaluation output.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub per_track: Vec<TrackEval>,
    /// Median over tracks, one entry per repeat.
    pub median_sdr_db: Vec<f64>,
    pub median_sir_db: Vec<f64>,
    /// Means of the per-repeat medians (the headline numbers).
    pub mean_median_sdr_db: f64,
    pub mean_median_sir_db: f64,
    /// Median SDR of using the mixture itself as the estimate.
    pub baseline_median_sdr_db: f64,
    pub sampler: SamplerConfig,
    pub repeats: usize,
}

/// Where separated estimates come from.
pub enum EvalSource<'a> {
    /// Run the model with chunked sampling.
    Model {
        model: &'a SeparationModel<f32>,
        plan: ChunkPlan,
    },
    /// Read prepared estimates from `<dir>/<track>/vocals.wav`.
    EstimatesDir(&'a Path),
}

/// Evaluate a dataset. For `eta > 0` the evaluation repeats `repeats` times
/// with derived seeds and reports means of the per-repeat medians; for
/// `eta = 0` one repeat suffices (the sampler is deterministic).
pub fn evaluate_dataset(
    source: &EvalSource<'_>,
    items: &[DatasetItem],
    cfg: &SamplerConfig,
    repeats: usize,
) -> Result<EvalResult> {
    if items.is_empty() {
        return Err(Error::EmptyDataset("no tracks to evaluate".into()));
    }
    let effective_repeats = if cfg.eta > 0.0 { repeats.max(1) } else { 1 };

    let mut per_track = Vec::new();
    let mut median_sdr = Vec::new();
    let mut median_sir = Vec::new();
    let mut baseline = Vec::new();

    for repeat in 0..effective_repeats {
        let mut sdrs = Vec::with_capacity(items.len());
        let mut sirs = Vec::with_capacity(items.len());
        for item in items {
            let (mixture, vocals) = item.load()?;
            let accompaniment = mixture.sub(&vocals)?;
            if repeat == 0 {
                baseline.push(sdr(&vocals, &mixture)?);
            }
            let estimate = match source {
                EvalSource::Model { model, plan } => {
                    let denoiser = ModelDenoiser::new(model);
                    let mixture = mixture.clone().adapt_channels(model.config.channel_count)?;
                    let repeat_cfg = SamplerConfig {
                        seed: derived_eval_seed(cfg.seed, repeat),
                        ..*cfg
                    };
                    let (est, _) =
                        sampler::separate_chunked(&mixture, &denoiser, &repeat_cfg, plan)?;
                    est
                }
                EvalSource::EstimatesDir(dir) => {
                    let path = dir.join(&item.name).join("vocals.wav");
                    io::read_wav(&path)?
                        .adapt_channels(vocals.channels())?
                        .slice(0, vocals.len())?
                }
            };
            let track_sdr = sdr(&vocals, &estimate)?;
            let track_sir = sir(&vocals, &accompaniment, &estimate)?;
            per_track.push(TrackEval {
                track: item.name.clone(),
                sdr_db: track_sdr,
                sir_db: track_sir,
                repeat_index: repeat,
            });
            sdrs.push(track_sdr);
            sirs.push(track_sir);
        }
        median_sdr.push(median(&sdrs));
        median_sir.push(median(&sirs));
    }

    let mean_median_sdr_db = median_sdr.iter().sum::<f64>() / median_sdr.len() as f64;
    let mean_median_sir_db = median_sir.iter().sum::<f64>() / median_sir.len() as f64;
    Ok(EvalResult {
        per_track,
        median_sdr_db: median_sdr,
        median_sir_db: median_sir,
        mean_median_sdr_db,
        mean_median_sir_db,
        baseline_median_sdr_db: median(&baseline),
        sampler: *cfg,
        repeats: effective_repeats,
    })
}

/// Seed for evaluation repeat `r`: repeat 0 uses the base seed unchanged (so
/// a one-repeat evaluation matches a direct separation run), later repeats
/// mix in the repeat index.
pub fn derived_eval_seed(base_seed: u64, repeat: usize) -> u64 {
    if repeat == 0 {
        return base_seed;
    }
    base_seed
        .wrapping_mul(0xd131_0ba6_98df_b5ac)
        .wrapping_add(0x9e37_79b9 + repeat as u64)
}

/// CSV rendering of the cutoff column (`none` when unfiltered).
pub fn cutoff_label(cutoff_hz: Option<f64>) -> String {
    match cutoff_hz {
        Some(fc) => format!("{fc}"),
        None => "none".to_string(),
    }
}

pub const EVAL_CSV_HEADER: &str =
    "track,sdr_db,sir_db,T,eta,cutoff_hz,seed,repeat_index,schema\n";
pub const EVAL_CSV_SCHEMA: &str = "diffsep-eval-v1";

/// Append evaluation rows (plus aggregate rows) to `path`, writing the
/// versioned header first if the file does not exist yet.
pub fn append_eval_csv(path: impl AsRef<Path>, result: &EvalResult) -> Result<()> {
    use std::io::Write;
    let path: &Path = path.as_ref();
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(EVAL_CSV_HEADER);
    }
    let cfg = &result.sampler;
    let cut = cutoff_label(cfg.cutoff_hz);
    for t in &result.per_track {
        text.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{},{},{}\n",
            t.track, t.sdr_db, t.sir_db, cfg.steps, cfg.eta, cut, cfg.seed, t.repeat_index,
            EVAL_CSV_SCHEMA
        ));
    }
    for (r, (msdr, msir)) in result
        .median_sdr_db
        .iter()
        .zip(&result.median_sir_db)
        .enumerate()
    {
        text.push_str(&format!(
            "__median__,{msdr:.6},{msir:.6},{},{},{},{},{r},{}\n",
            cfg.steps, cfg.eta, cut, cfg.seed, EVAL_CSV_SCHEMA
        ));
    }
    text.push_str(&format!(
        "__mean_of_medians__,{:.6},{:.6},{},{},{},{},{},{}\n",
        result.mean_median_sdr_db,
        result.mean_median_sir_db,
        cfg.steps,
        cfg.eta,
        cut,
        cfg.seed,
        result.repeats,
        EVAL_CSV_SCHEMA
    ));
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Cells already present in an ablation CSV, for resumable sweeps.
/// Returns `(steps, eta, cutoff_label)` triples from `__mean_of_medians__`
/// rows.
pub fn completed_cells(path: impl AsRef<Path>) -> Result<Vec<(usize, f64, String)>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() >= 9 && cols[0] == "__mean_of_medians__" {
            let steps: usize = cols[3].parse().map_err(|_| {
                Error::invalid(format!("bad steps column in resume file: {line}"))
            })?;
            let eta: f64 = cols[4]
                .parse()
                .map_err(|_| Error::invalid(format!("bad eta column in resume file: {line}")))?;
            out.push((steps, eta, cols[5].to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn noise_buffer(seed: u64, channels: usize, len: usize) -> AudioBuffer {
        let mut b = AudioBuffer::zeros(channels, len, 8_000);
        rng::fill_standard_normal(&mut rng::stream(seed, "metrics", 0), b.planar_mut());
        b
    }

    #[test]
    fn perfect_estimate_hits_the_cap() {
        let s = noise_buffer(1, 2, 512);
        assert_eq!(sdr(&s, &s).unwrap(), 100.0);
    }

    #[test]
    fn half_scale_estimate_is_six_db() {
        let s = noise_buffer(2, 2, 512);
        let mut e = s.clone();
        e.scale(0.5);
        let v = sdr(&s, &e).unwrap();
        assert!((v - 6.0206).abs() < 1e-3, "{v}");
    }

    #[test]
    fn sdr_is_scale_sensitive_by_definition() {
        let s = noise_buffer(3, 1, 1_000);
        for a in [0.5f64, 0.9] {
            let mut e = s.clone();
            e.scale(a as f32);
            let expect = -10.0 * ((1.0 - a) * (1.0 - a)).log10();
            let got = sdr(&s, &e).unwrap();
            assert!((got - expect).abs() < 1e-3, "a={a}: {got} vs {expect}");
        }
    }

    #[test]
    fn orthogonal_noise_at_minus_20_db_gives_20_db_sdr() {
        // Build noise orthogonal to the reference numerically.
        let s = noise_buffer(4, 1, 4_096);
        let mut n = noise_buffer(5, 1, 4_096);
        let dot: f64 = s
            .planar()
            .iter()
            .zip(n.planar())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let s_energy = s.energy();
        for (nv, &sv) in n.planar_mut().iter_mut().zip(s.planar()) {
            *nv -= (dot / s_energy) as f32 * sv;
        }
        let scale = (s_energy / 100.0 / n.energy()).sqrt() as f32;
        n.scale(scale);
        let e = s.add(&n).unwrap();
        let v = sdr(&s, &e).unwrap();
        assert!((v - 20.0).abs() < 1e-4, "{v}");
    }

    #[test]
    fn zero_reference_is_undefined() {
        let z = AudioBuffer::zeros(1, 16, 8_000);
        let e = noise_buffer(6, 1, 16);
        assert!(matches!(
            sdr(&z, &e),
            Err(Error::UndefinedReference(_))
        ));
    }

    fn orthogonal_pair(len: usize) -> (AudioBuffer, AudioBuffer) {
        // Sine and cosine at a bin frequency are exactly orthogonal over
        // whole periods and have equal energy.
        let t = AudioBuffer::from_fn(1, len, 8_000, |_, i| {
            (std::f64::consts::TAU * 8.0 * i as f64 / len as f64).sin() as f32
        });
        let a = AudioBuffer::from_fn(1, len, 8_000, |_, i| {
            (std::f64::consts::TAU * 8.0 * i as f64 / len as f64).cos() as f32
        });
        (t, a)
    }

    #[test]
    fn sir_of_pure_target_caps_high() {
        let (t, a) = orthogonal_pair(1_024);
        assert_eq!(sir(&t, &a, &t).unwrap(), 100.0);
    }

    #[test]
    fn sir_of_ten_to_one_mix_is_twenty_db() {
        let (t, a) = orthogonal_pair(1_024);
        let mut leak = a.clone();
        leak.scale(0.1);
        let e = t.add(&leak).unwrap();
        let v = sir(&t, &a, &e).unwrap();
        assert!((v - 20.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn sir_of_pure_interference_caps_low() {
        let (t, a) = orthogonal_pair(1_024);
        assert_eq!(sir(&t, &a, &a).unwrap(), -100.0);
    }

    #[test]
    fn sir_ignores_estimate_scaling() {
        let (t, a) = orthogonal_pair(1_024);
        let mut leak = a.clone();
        leak.scale(0.2);
        let e = t.add(&leak).unwrap();
        let mut e2 = e.clone();
        e2.scale(3.7);
        let v1 = sir(&t, &a, &e).unwrap();
        let v2 = sir(&t, &a, &e2).unwrap();
        assert!((v1 - v2).abs() < 1e-4);
    }

    #[test]
    fn collinear_references_are_rejected() {
        let t = noise_buffer(7, 1, 256);
        let mut a = t.clone();
        a.scale(2.0);
        assert!(matches!(
            sir(&t, &a, &t),
            Err(Error::UndefinedReference(_))
        ));
    }

    #[test]
    fn median_is_permutation_invariant() {
        let a = [3.0, 1.0, 2.0, 5.0, 4.0];
        let b = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(median(&a), median(&b));
        assert_eq!(median(&a), 3.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
    }

    #[test]
    fn mixture_as_estimate_reproduces_the_baseline() {
        let dir = tempfile::tempdir().unwrap();
        crate::synth::synthesize(
            &crate::synth::SynthSpec {
                track_count: 3,
                duration_s: 1.5,
                sample_rate: 16_000,
                seed: 77,
                ..crate::synth::SynthSpec::default()
            },
            dir.path().join("ds"),
        )
        .unwrap();
        let items = crate::io::scan_dataset(
            dir.path().join("ds"),
            crate::io::DatasetLayout::PairedSubdirs,
        )
        .unwrap();
        // Build an estimates dir whose vocals.wav is the mixture itself.
        for item in &items {
            let est = dir.path().join("est").join(&item.name);
            std::fs::create_dir_all(&est).unwrap();
            std::fs::copy(&item.mixture_path, est.join("vocals.wav")).unwrap();
        }
        let cfg = SamplerConfig {
            steps: 10,
            eta: 0.0,
            cutoff_hz: None,
            seed: 0,
        };
        let result = evaluate_dataset(
            &EvalSource::EstimatesDir(&dir.path().join("est")),
            &items,
            &cfg,
            1,
        )
        .unwrap();
        assert!(
            (result.mean_median_sdr_db - result.baseline_median_sdr_db).abs() < 1e-9,
            "mixture estimate {} vs baseline {}",
            result.mean_median_sdr_db,
            result.baseline_median_sdr_db
        );
    }

    #[test]
    fn csv_round_trips_completed_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let result = EvalResult {
            per_track: vec![TrackEval {
                track: "t0".into(),
                sdr_db: 5.0,
                sir_db: 10.0,
                repeat_index: 0,
            }],
            median_sdr_db: vec![5.0],
            median_sir_db: vec![10.0],
            mean_median_sdr_db: 5.0,
            mean_median_sir_db: 10.0,
            baseline_median_sdr_db: 0.1,
            sampler: SamplerConfig {
                steps: 20,
                eta: 0.4,
                cutoff_hz: Some(5_000.0),
                seed: 3,
            },
            repeats: 1,
        };
        append_eval_csv(&path, &result).unwrap();
        append_eval_csv(&path, &result).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(EVAL_CSV_HEADER));
        assert_eq!(text.matches("__mean_of_medians__").count(), 2);
        let cells = completed_cells(&path).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0], (20, 0.4, "5000".to_string()));
    }
}
