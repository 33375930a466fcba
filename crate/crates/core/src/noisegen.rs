//! Band-limited Gaussian (Johnson-like) noise synthesis and spectral estimation.

use std::cell::RefCell;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Boltzmann constant, exact SI value (J/K).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Default ratio `f_s / (2 Δf)`.
pub const DEFAULT_OVERSAMPLE: f64 = 20.0;
/// Smallest accepted ratio `f_s / (2 Δf)`.
pub const MIN_OVERSAMPLE: f64 = 10.0;

/// One-sided Johnson noise voltage density `4 k T R` (V²/Hz).
pub fn johnson_spectral_density(t_eff: f64, r: f64) -> Result<f64> {
    if !(t_eff >= 0.0) || !(r >= 0.0) {
        return domain(format!("temperature and resistance must be non-negative (T={t_eff}, R={r})"));
    }
    Ok(4.0 * BOLTZMANN * t_eff * r)
}

/// Effective temperature for which `4 k T_eff = 1`, used by normalized-unit tests.
pub fn normalized_temperature() -> f64 {
    1.0 / (4.0 * BOLTZMANN)
}

/// Number of statistically independent samples `2 Δf τ` in a band-limited record.
pub fn effective_sample_count(bandwidth: f64, duration: f64) -> f64 {
    2.0 * bandwidth * duration
}

/// Description of a band-limited white Gaussian source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// One-sided spectral density inside the band (V²/Hz or A²/Hz).
    pub spectral_density: f64,
    /// Upper band edge Δf (Hz).
    pub bandwidth: f64,
    /// Sampling rate f_s (Hz).
    pub sample_rate: f64,
    /// Record length τ (s).
    pub duration: f64,
}

impl NoiseSpec {
    /// Spec with the default sampling rate `f_s = 2 · 20 · Δf`.
    pub fn new(spectral_density: f64, bandwidth: f64, duration: f64) -> Self {
        NoiseSpec {
            spectral_density,
            bandwidth,
            sample_rate: 2.0 * DEFAULT_OVERSAMPLE * bandwidth,
            duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spectral_density >= 0.0) {
            return domain("spectral density must be non-negative");
        }
        if !(self.bandwidth > 0.0) || !(self.duration > 0.0) {
            return domain("bandwidth and duration must be positive");
        }
        if !(self.sample_rate >= MIN_OVERSAMPLE * 2.0 * self.bandwidth) {
            return domain(format!(
                "sample rate {} Hz is below {}x the Nyquist rate of a {} Hz band",
                self.sample_rate, MIN_OVERSAMPLE, self.bandwidth
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A uniformly sampled real-valued record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub samples: Vec<f64>,
    pub dt: f64,
}

impl SampleTrace {
    pub fn new(samples: Vec<f64>, dt: f64) -> Self {
        SampleTrace { samples, dt }
    }

    pub fn zeros(len: usize, dt: f64) -> Self {
        SampleTrace { samples: vec![0.0; len], dt }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn mean_square(&self) -> f64 {
        crate::stats::mean_square(&self.samples)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, k: f64) -> SampleTrace {
        SampleTrace::new(self.samples.iter().map(|v| v * k).collect(), self.dt)
    }

    pub(crate) fn check_compatible(&self, other: &SampleTrace) -> Result<()> {
        if self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt.abs() {
            return Err(Error::TraceMismatch(format!(
                "lengths {} vs {}, dt {:e} vs {:e}",
                self.len(),
                other.len(),
                self.dt,
                other.dt
            )));
        }
        Ok(())
    }
}

/// Identifies one independent pseudo-random stream.
///
/// Streams are keyed by `(master_seed, trial, source)` so that results do not
/// depend on the order in which trials are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub trial: u64,
    pub source: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, trial: u64, source: u64) -> Self {
        RngStream { master_seed, trial, source }
    }

    /// Same trial, different source.
    pub fn with_source(self, source: u64) -> Self {
        RngStream { source, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = splitmix64(self.master_seed) ^ splitmix64(self.trial.wrapping_mul(0xA24B_AED4_963E_E407));
        for chunk in seed.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.source);
        rng
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
}

/// Zero every Fourier bin above `bandwidth` (brick-wall low-pass over the whole record).
pub fn brick_wall(samples: &mut [f64], sample_rate: f64, bandwidth: f64) {
    let n = samples.len();
    if n == 0 {
        return;
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    let edge = bandwidth * n as f64 / sample_rate;
    let cutoff = edge.floor() as usize;
    // A bin centred exactly on the band edge is half inside the band.
    let edge_gain = if cutoff > 0 && edge == cutoff as f64 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        if bin > cutoff {
            *c = Complex64::new(0.0, 0.0);
        } else if bin == cutoff {
            *c *= edge_gain;
        }
    }
    fft_inverse(&mut buf);
    let norm = 1.0 / n as f64;
    for (s, c) in samples.iter_mut().zip(&buf) {
        *s = c.re * norm;
    }
}

/// Band-limited noise with unit variance inside `(0, bandwidth)`.
pub fn unit_band_limited(len: usize, sample_rate: f64, bandwidth: f64, rng: RngStream) -> Vec<f64> {
    let mut r = rng.rng();
    let sigma = (sample_rate / (2.0 * bandwidth)).sqrt();
    let mut samples: Vec<f64> = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            sigma * z
        })
        .collect::<Vec<f64>>();
    brick_wall(&mut samples, sample_rate, bandwidth);
    samples
}

/// Zero-mean Gaussian trace whose one-sided PSD is flat at `spec.spectral_density`
/// up to `spec.bandwidth` and zero above it.
pub fn generate_noise(spec: &NoiseSpec, rng: RngStream) -> Result<SampleTrace> {
    spec.validate()?;
    let n = spec.len();
    let dt = 1.0 / spec.sample_rate;
    if spec.spectral_density == 0.0 {
        return Ok(SampleTrace::zeros(n, dt));
    }
    let scale = (spec.spectral_density * spec.bandwidth).sqrt();
    let mut samples = unit_band_limited(n, spec.sample_rate, spec.bandwidth, rng);
    samples.iter_mut().for_each(|v| *v *= scale);
    Ok(SampleTrace::new(samples, dt))
}

/// Averaged-periodogram one-sided PSD estimate.
///
/// Non-overlapping segments, rectangular window. Returns `(frequency, density)`
/// for bins `0..=segment_length/2`.
pub fn estimate_psd(trace: &SampleTrace, segment_length: usize) -> Result<Vec<(f64, f64)>> {
    if segment_length < 2 || !segment_length.is_power_of_two() {
        return domain(format!("segment length {segment_length} must be a power of two >= 2"));
    }
    if trace.len() < segment_length {
        return Err(Error::TooShort { needed: segment_length, have: trace.len() });
    }
    let fs = trace.sample_rate();
    let n_seg = trace.len() / segment_length;
    let half = segment_length / 2;
    let mut acc = vec![0.0; half + 1];
    let fft = plan(segment_length, false);
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_length];
    for seg in trace.samples.chunks_exact(segment_length) {
        for (b, &v) in buf.iter_mut().zip(seg) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
    }
    let norm = 1.0 / (fs * segment_length as f64 * n_seg as f64);
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let twice = if k == 0 || k == half { 1.0 } else { 2.0 };
            (k as f64 * fs / segment_length as f64, p * norm * twice)
        })
        .collect())
}

/// Mean of a PSD estimate over bins with `lo < f < hi`.
pub fn band_average(psd: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let sel: Vec<f64> = psd.iter().filter(|(f, _)| *f > lo && *f < hi).map(|(_, p)| *p).collect();
    crate::stats::mean(&sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn johnson_density_values() {
        assert_eq!(johnson_spectral_density(0.0, 1000.0).unwrap(), 0.0);
        let one = johnson_spectral_density(normalized_temperature(), 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        let s = johnson_spectral_density(8e8, 1e3).unwrap();
        assert!((s / 4.418e-11 - 1.0).abs() < 1e-3, "{s:e}");
        assert!(johnson_spectral_density(-1.0, 1.0).is_err());
        assert!(johnson_spectral_density(1.0, -1.0).is_err());
    }

    #[test]
    fn sample_count() {
        assert!((effective_sample_count(500.0, 0.1) - 100.0).abs() < 1e-9);
        assert_eq!(effective_sample_count(500.0, 0.0), 0.0);
        assert!((effective_sample_count(1000.0, 0.05) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn spec_validation() {
        let mut spec = NoiseSpec::new(1.0, 1.0, 10.0);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.len(), 400);
        spec.sample_rate = 15.0;
        assert!(spec.validate().is_err());
        assert!(NoiseSpec::new(-1.0, 1.0, 1.0).validate().is_err());
        assert!(NoiseSpec::new(1.0, 0.0, 1.0).validate().is_err());
    }

    #[test]
    fn variance_matches_density_times_band() {
        let spec = NoiseSpec::new(1.0, 1.0, 5000.0);
        let tr = generate_noise(&spec, RngStream::new(7, 0, 0)).unwrap();
        let var = stats::variance(&tr.samples);
        let tol = 5.0 / effective_sample_count(1.0, 5000.0).sqrt();
        assert!((var - 1.0).abs() < tol, "var = {var}");
        assert!(tr.is_finite());
    }

    #[test]
    fn zero_density_gives_zero_trace() {
        let tr = generate_noise(&NoiseSpec::new(0.0, 10.0, 1.0), RngStream::new(1, 2, 3)).unwrap();
        assert!(tr.samples.iter().all(|&v| v == 0.0));
        assert_eq!(tr.len(), 400);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let spec = NoiseSpec::new(1.0, 1.0, 5000.0);
        let a = generate_noise(&spec, RngStream::new(3, 0, 0)).unwrap();
        let b = generate_noise(&spec, RngStream::new(3, 0, 1)).unwrap();
        let c = generate_noise(&spec, RngStream::new(3, 1, 0)).unwrap();
        // Band-limited samples are correlated over 1/(2Δf); count independent ones.
        let n = effective_sample_count(1.0, 5000.0);
        assert!(stats::correlation(&a.samples, &b.samples).abs() < 4.0 / n.sqrt());
        assert!(stats::correlation(&a.samples, &c.samples).abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = NoiseSpec::new(2.0, 3.0, 4.0);
        let s = RngStream::new(99, 4, 2);
        assert_eq!(generate_noise(&spec, s).unwrap(), generate_noise(&spec, s).unwrap());
    }

    #[test]
    fn psd_of_white_trace_is_flat_in_band_and_zero_above() {
        let spec = NoiseSpec::new(1.0, 1.0, 40960.0 / 40.0 * 16.0);
        let tr = generate_noise(&spec, RngStream::new(5, 0, 0)).unwrap();
        let psd = estimate_psd(&tr, 1024).unwrap();
        let inband = band_average(&psd, 0.05, 0.95);
        assert!((inband - 1.0).abs() < 0.05, "in-band {inband}");
        let above = band_average(&psd, 1.1, 20.0);
        assert!(above < 1e-3, "out of band {above}");
        // Parseval: integral equals mean square.
        let df = psd[1].0;
        let integral: f64 = psd.iter().map(|(_, p)| p * df).sum();
        assert!((integral / tr.mean_square() - 1.0).abs() < 0.05);
    }

    #[test]
    fn psd_of_sine_calibrates_power() {
        let n = 4096;
        let fs = 1024.0;
        let f0 = 64.0;
        let amp = 3.0;
        let s: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let tr = SampleTrace::new(s, 1.0 / fs);
        let psd = estimate_psd(&tr, 1024).unwrap();
        let df = fs / 1024.0;
        let (peak_k, peak) = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
            .map(|(k, p)| (k, p.1))
            .unwrap();
        assert_eq!(peak_k, 64);
        assert!((peak * df - amp * amp / 2.0).abs() < 1e-9);
    }

    #[test]
    fn psd_errors_and_zero_trace() {
        let tr = SampleTrace::zeros(100, 1.0);
        assert!(matches!(estimate_psd(&tr, 128), Err(Error::TooShort { .. })));
        assert!(estimate_psd(&tr, 48).is_err());
        let z = estimate_psd(&tr, 64).unwrap();
        assert!(z.iter().all(|(_, p)| *p == 0.0));
    }
}
