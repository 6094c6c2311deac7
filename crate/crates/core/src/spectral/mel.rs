use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use super::fft;
use crate::audio_io::Waveform;
use crate::error::{Error, Result};

/// STFT and filterbank settings for mel features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    /// Lowest dB value relative to the loudest cell.
    pub floor_db: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            sample_rate: 16_000,
            floor_db: -80.0,
        }
    }
}

impl MelParams {
    /// Frame count for a clip of `n` samples with centered framing.
    pub fn n_frames(&self, n: usize) -> usize {
        1 + n / self.hop
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || self.hop == 0 || self.n_mels == 0 || self.sample_rate == 0 {
            return Err(Error::Config(format!("invalid mel parameters {self:?}")));
        }
        if !(self.floor_db < 0.0) {
            return Err(Error::Config("floor_db must be negative".into()));
        }
        Ok(())
    }
}

/// Mel-scaled log-power matrix, `n_mels` rows by `n_frames` columns,
/// row-major. Row 0 is the lowest band.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(n_mels: usize, n_frames: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_mels * n_frames {
            return Err(Error::Dimension(format!(
                "{} values for a {n_mels}x{n_frames} matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_mels,
            n_frames,
            values,
        })
    }

    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f32] {
        &self.values[mel * self.n_frames..(mel + 1) * self.n_frames]
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, stored sparsely as
/// `(first_bin, weights)` per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_bins: usize,
    /// Center frequency of each filter in Hz.
    pub centers: Vec<f64>,
    pub filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    fn build(n_fft: usize, n_mels: usize, sample_rate: u32) -> Self {
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
        let points: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = |k: usize| k as f64 * sample_rate as f64 / n_fft as f64;
        let filters = points
            .windows(3)
            .map(|w| {
                let (left, center, right) = (w[0], w[1], w[2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = bin_hz(k);
                        let up = (f - left) / (center - left);
                        let down = (right - f) / (right - center);
                        let v = up.min(down);
                        (v > 0.0).then_some((k, v))
                    })
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => (first, weights.into_iter().map(|(_, v)| v).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Self {
            n_bins,
            centers: points[1..=n_mels].to_vec(),
            filters,
        }
    }

    /// Dense weight of filter `m` at STFT bin `k`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        let (first, w) = &self.filters[m];
        if k < *first {
            0.0
        } else {
            w.get(k - first).copied().unwrap_or(0.0)
        }
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((first, w), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Shared filterbank for one `(n_fft, n_mels, sample_rate)` combination.
pub fn mel_filterbank(n_fft: usize, n_mels: usize, sample_rate: u32) -> Arc<MelFilterbank> {
    type Key = (usize, usize, u32);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<MelFilterbank>>>> = OnceLock::new();
    let mut cache = CACHE
        .get_or_init(Default::default)
        .lock()
        .expect("filterbank cache poisoned");
    Arc::clone(
        cache
            .entry((n_fft, n_mels, sample_rate))
            .or_insert_with(|| Arc::new(MelFilterbank::build(n_fft, n_mels, sample_rate))),
    )
}

/// Loads a clip, standardizes it to `seconds` at `params.sample_rate` and
/// computes its mel features.
pub fn featurize_wav(path: impl AsRef<std::path::Path>, seconds: f64, params: &MelParams) -> Result<MelSpectrogram> {
    let w = crate::audio_io::load_wav(path)?;
    let w = crate::audio_io::standardize(&w, seconds, params.sample_rate)?;
    mel_spectrogram(&w, params)
}

/// Power below this is treated as silence by the dB conversion.
const AMIN: f64 = 1e-10;

/// Hann-windowed centered STFT (reflect padding) -> power -> HTK mel
/// filterbank -> dB relative to the loudest cell, floored at
/// `params.floor_db`.
pub fn mel_spectrogram(w: &Waveform, params: &MelParams) -> Result<MelSpectrogram> {
    params.validate()?;
    if w.sample_rate != params.sample_rate {
        return Err(Error::InvalidInput(format!(
            "waveform at {} Hz, mel parameters expect {} Hz",
            w.sample_rate, params.sample_rate
        )));
    }
    let pad = params.n_fft / 2;
    let n = w.len();
    if n <= pad {
        return Err(Error::InvalidInput(format!(
            "{n} samples is too short for a {}-point window",
            params.n_fft
        )));
    }
    let padded = reflect_pad(&w.samples, pad);
    let window: Vec<f64> = (0..params.n_fft)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / params.n_fft as f64).cos())
        .collect();
    let n_frames = params.n_frames(n);
    let fb = mel_filterbank(params.n_fft, params.n_mels, params.sample_rate);
    let plan = fft::plan(params.n_fft);

    let mut power_db = vec![0.0f64; params.n_mels * n_frames];
    let mut frame = vec![Complex64::ZERO; params.n_fft];
    let mut power = vec![0.0f64; fb.n_bins];
    let mut mel = vec![0.0f64; params.n_mels];
    let mut max_power = 0.0f64;
    for t in 0..n_frames {
        let start = t * params.hop;
        for ((dst, &x), &win) in frame.iter_mut().zip(&padded[start..]).zip(&window) {
            *dst = Complex64::new(x * win, 0.0);
        }
        plan.forward(&mut frame);
        for (p, v) in power.iter_mut().zip(&frame) {
            *p = v.norm_sqr();
        }
        fb.apply(&power, &mut mel);
        for (m, &v) in mel.iter().enumerate() {
            max_power = max_power.max(v);
            power_db[m * n_frames + t] = 10.0 * v.max(AMIN).log10();
        }
    }

    let floor = params.floor_db;
    let values = if max_power <= AMIN {
        vec![floor as f32; power_db.len()]
    } else {
        let reference = 10.0 * max_power.log10();
        power_db
            .iter()
            .map(|&db| (db - reference).max(floor) as f32)
            .collect()
    };
    MelSpectrogram::new(params.n_mels, n_frames, values)
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize, rate: u32) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() * 0.5)
                .collect(),
            rate,
        )
        .unwrap()
    }

    #[test]
    fn default_shape() {
        let m = mel_spectrogram(&tone(440.0, 48000, 16000), &MelParams::default()).unwrap();
        assert_eq!((m.n_mels, m.n_frames), (128, 94));
        assert!(m.values.iter().all(|&v| (-80.0..=0.0).contains(&v)));
        assert!(m.values.contains(&0.0));
    }

    #[test]
    fn silence_is_floor() {
        let w = Waveform::new(vec![0.0; 48000], 16000).unwrap();
        let m = mel_spectrogram(&w, &MelParams::default()).unwrap();
        assert!(m.values.iter().all(|&v| v == -80.0));
    }

    #[test]
    fn tone_peak_stays_on_nearest_filter() {
        let fb = mel_filterbank(2048, 128, 16000);
        // Filter with the largest response at the tone's exact frequency.
        // 1000 Hz is bin 128 exactly (1000 * 2048 / 16000).
        let expected = (0..128)
            .max_by(|&a, &b| fb.weight(a, 128).total_cmp(&fb.weight(b, 128)))
            .unwrap();
        let nearest_center = (0..128)
            .min_by(|&a, &b| {
                (fb.centers[a] - 1000.0).abs().total_cmp(&(fb.centers[b] - 1000.0).abs())
            })
            .unwrap();
        assert_eq!(expected, nearest_center);

        let m = mel_spectrogram(&tone(1000.0, 48000, 16000), &MelParams::default()).unwrap();
        for t in 0..m.n_frames {
            let argmax = (0..m.n_mels)
                .max_by(|&a, &b| m.get(a, t).total_cmp(&m.get(b, t)))
                .unwrap();
            assert_eq!(argmax, expected, "frame {t}");
        }
    }

    #[test]
    fn filterbank_properties() {
        let fb = mel_filterbank(2048, 128, 16000);
        assert_eq!(fb.filters.len(), 128);
        for m in 0..128 {
            assert!(fb.filters[m].1.iter().all(|&v| v >= 0.0));
            assert!(!fb.filters[m].1.is_empty(), "empty filter {m}");
        }
        for m in 0..127 {
            let overlap = (0..fb.n_bins).any(|k| fb.weight(m, k) > 0.0 && fb.weight(m + 1, k) > 0.0);
            assert!(overlap, "filters {m} and {} do not overlap", m + 1);
        }
        let (first, last) = (fb.centers[0], fb.centers[127]);
        for k in 0..fb.n_bins {
            let f = k as f64 * 16000.0 / 2048.0;
            if f > first && f < last {
                let total: f64 = (0..128).map(|m| fb.weight(m, k)).sum();
                assert!(total > 0.0, "bin {k} uncovered");
            }
        }
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect_pad(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn deterministic() {
        let w = tone(321.0, 48000, 16000);
        let a = mel_spectrogram(&w, &MelParams::default()).unwrap();
        let b = mel_spectrogram(&w, &MelParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_rate_or_short_clip() {
        let w = tone(440.0, 48000, 8000);
        assert!(mel_spectrogram(&w, &MelParams::default()).is_err());
        let w = tone(440.0, 1000, 16000);
        assert!(mel_spectrogram(&w, &MelParams::default()).is_err());
    }
}
