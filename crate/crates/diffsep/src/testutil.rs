//! Shared helpers for unit tests (compiled only under `cfg(test)`).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Welch-style average periodogram: Hann window, 50% overlap.
/// Returns `(bin_hz, power_per_bin)` for the first half of the spectrum.
pub fn welch_psd(signal: &[f32], sample_rate: f64, segment: usize) -> (f64, Vec<f64>) {
    let hop = segment / 2;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(segment);
    let window: Vec<f64> = (0..segment)
        .map(|i| {
            let w = std::f64::consts::TAU * i as f64 / segment as f64;
            0.5 * (1.0 - w.cos())
        })
        .collect();

    let mut acc = vec![0.0f64; segment / 2];
    let mut count = 0usize;
    let mut start = 0usize;
    while start + segment <= signal.len() {
        let mut buf: Vec<Complex<f64>> = signal[start..start + segment]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex::new(s as f64 * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf[..segment / 2]) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    assert!(count > 0, "signal shorter than one segment");
    for a in &mut acc {
        *a /= count as f64;
    }
    (sample_rate / segment as f64, acc)
}

/// Total PSD power in `[lo_hz, hi_hz)`.
pub fn band_power(signal: &[f32], sample_rate: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let (bin_hz, psd) = welch_psd(signal, sample_rate, 4096);
    psd.iter()
        .enumerate()
        .filter(|(i, _)| {
            let f = *i as f64 * bin_hz;
            f >= lo_hz && f < hi_hz
        })
        .map(|(_, &p)| p)
        .sum()
}
