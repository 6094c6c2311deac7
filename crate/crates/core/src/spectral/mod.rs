//! Full-clip spectra for band surgery, and STFT mel features.
//!
//! Two transforms live here on purpose. Band swaps edit the DFT of the whole
//! standardized clip, where bin `k` sits at `k * rate / n` Hz. Detector
//! features come from a short-time transform followed by a mel filterbank.

pub mod fft;
mod image;
mod magma;
mod mel;
mod melf;

use num_complex::Complex64;

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

pub use image::{render_image, write_png, RgbImage, DEFAULT_IMAGE_SIZE};
pub use mel::{featurize_wav, mel_filterbank, mel_spectrogram, hz_to_mel, mel_to_hz, MelFilterbank, MelParams, MelSpectrogram};
pub use melf::{read_melf, write_melf, MELF_MAGIC, MELF_VERSION};

/// One-sided DFT of a real clip: `n / 2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    n: usize,
    sample_rate: u32,
}

impl Spectrum {
    /// Wraps one-sided bins, checking that the count matches `n`.
    pub fn from_bins(bins: Vec<Complex64>, n: usize, sample_rate: u32) -> Result<Self> {
        if n < 2 || bins.len() != n / 2 + 1 {
            return Err(Error::InvalidInput(format!(
                "{} one-sided bins cannot describe a {n}-sample clip",
                bins.len()
            )));
        }
        Ok(Self {
            bins,
            n,
            sample_rate,
        })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    /// Number of time-domain samples the spectrum was computed from.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.n as f64
    }
}

/// Forward DFT of the whole clip at its exact length.
pub fn dft_forward(w: &Waveform) -> Result<Spectrum> {
    let n = w.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "DFT needs at least 2 samples, got {n}"
        )));
    }
    let mut buf: Vec<Complex64> = w.samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    fft::plan(n).forward(&mut buf);
    buf.truncate(n / 2 + 1);
    Ok(Spectrum {
        bins: buf,
        n,
        sample_rate: w.sample_rate,
    })
}

/// Inverse DFT back to a real clip of `s.n()` samples.
///
/// The negative-frequency half is rebuilt as the conjugate mirror of the
/// one-sided bins, and the DC and Nyquist bins contribute their real part
/// only, so the result is real by construction.
pub fn dft_inverse(s: &Spectrum) -> Waveform {
    let n = s.n;
    let mut full = vec![Complex64::ZERO; n];
    full[0] = Complex64::new(s.bins[0].re, 0.0);
    for k in 1..=(n - 1) / 2 {
        full[k] = s.bins[k];
        full[n - k] = s.bins[k].conj();
    }
    if n % 2 == 0 {
        full[n / 2] = Complex64::new(s.bins[n / 2].re, 0.0);
    }
    fft::plan(n).inverse(&mut full);
    debug_assert!({
        let peak = full.iter().fold(0.0f64, |m, v| m.max(v.re.abs())).max(1.0);
        full.iter().all(|v| v.im.abs() < 1e-9 * peak)
    });
    Waveform {
        samples: full.into_iter().map(|v| v.re).collect(),
        sample_rate: s.sample_rate,
    }
}

/// Smallest bin index `k` with `k * sample_rate / n >= f`.
pub fn freq_to_index(f: f64, sample_rate: u32, n: usize) -> Result<usize> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0..=nyquist).contains(&f) {
        return Err(Error::Range(format!(
            "{f} Hz is outside [0, {nyquist}] Hz"
        )));
    }
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / n as f64;
    let mut k = (f * n as f64 / sample_rate as f64).ceil() as usize;
    while k > 0 && bin_hz(k - 1) >= f {
        k -= 1;
    }
    while bin_hz(k) < f {
        k += 1;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn wave(samples: Vec<f64>, rate: u32) -> Waveform {
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn impulse_and_constant() {
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        let s = dft_forward(&wave(x, 8)).unwrap();
        assert_eq!(s.bins().len(), 5);
        assert!(s.bins().iter().all(|b| (b - Complex64::ONE).norm() < 1e-12));

        let s = dft_forward(&wave(vec![1.0; 8], 8)).unwrap();
        assert!((s.bins()[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        assert!(s.bins()[1..].iter().all(|b| b.norm() < 1e-12));
    }

    #[test]
    fn tone_lands_on_expected_bin() {
        let n = 48000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).cos())
            .collect();
        let s = dft_forward(&wave(x.clone(), 16000)).unwrap();
        let (argmax, _) = s
            .bins()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(argmax, 3000);
        // Direct DFT sum at bin 3000.
        let direct: Complex64 = x
            .iter()
            .enumerate()
            .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((j * 3000) % n) as f64 / n as f64))
            .sum();
        assert!((direct - s.bins()[3000]).norm() < 1e-6);
        assert!((direct.re - 24000.0).abs() < 1e-6);
        let off_peak: f64 = s
            .bins()
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != 3000)
            .map(|(_, b)| b.norm_sqr())
            .sum();
        assert!(off_peak < 1e-12 * s.bins()[3000].norm_sqr());
    }

    #[test]
    fn single_bin_inverts_to_cosine() {
        let n = 48000;
        let mut bins = vec![Complex64::ZERO; n / 2 + 1];
        // A unit cosine puts n/2 in bin k of the one-sided spectrum.
        bins[3000] = Complex64::new(n as f64 / 2.0, 0.0);
        let w = dft_inverse(&Spectrum::from_bins(bins, n, 16000).unwrap());
        for (i, v) in w.samples.iter().enumerate().step_by(113) {
            let expected = (2.0 * PI * 1000.0 * i as f64 / 16000.0).cos();
            assert!((v - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_silence() {
        let s = Spectrum::from_bins(vec![Complex64::ZERO; 6], 10, 10).unwrap();
        assert!(dft_inverse(&s).samples.iter().all(|&v| v == 0.0));
        assert_eq!(dft_inverse(&s).len(), 10);
    }

    #[test]
    fn odd_length_round_trip() {
        let x: Vec<f64> = (0..1001).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let w = wave(x.clone(), 8000);
        let back = dft_inverse(&dft_forward(&w).unwrap());
        let err = x.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn index_mapping() {
        assert_eq!(freq_to_index(2000.0, 16000, 48000).unwrap(), 6000);
        assert_eq!(freq_to_index(2500.0, 16000, 48000).unwrap(), 7500);
        assert_eq!(freq_to_index(0.0, 16000, 48000).unwrap(), 0);
        assert_eq!(freq_to_index(0.0, 44100, 7).unwrap(), 0);
        assert_eq!(freq_to_index(8000.0, 16000, 48000).unwrap(), 24000);
        // Ceiling semantics between bins.
        assert_eq!(freq_to_index(2000.1, 16000, 48000).unwrap(), 6001);
        assert!(matches!(freq_to_index(8000.5, 16000, 48000), Err(Error::Range(_))));
        assert!(freq_to_index(-1.0, 16000, 48000).is_err());
    }

    #[test]
    fn spectrum_shape_is_checked() {
        assert!(Spectrum::from_bins(vec![Complex64::ZERO; 4], 8, 8).is_err());
        assert!(Spectrum::from_bins(vec![Complex64::ZERO; 5], 9, 8).is_ok());
    }
}
