//! Synthetic speaker corpus for smoke tests and demos.
//!
//! Each clip is spectrally tilted noise plus a harmonic tone stack with a
//! slow amplitude envelope. Speakers differ in fundamental frequency; real
//! and fake clips differ in the tilt of the noise floor, so a detector has
//! a stable cue to learn.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;

use crate::artifact_gen::{file_rng, file_seed};
use crate::audio_io::{write_wav, Waveform};
use crate::dataset::{Label, Manifest, SampleRecord};
use crate::error::{Error, Result};
use crate::model::{ProtocolConfig, TrainConfig};
use crate::spectral::{dft_forward, dft_inverse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub speakers: usize,
    pub real_per_speaker: usize,
    pub fake_per_speaker: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    /// Power-law exponent of the noise amplitude spectrum for real clips.
    pub real_tilt: f64,
    pub fake_tilt: f64,
    /// Amplitude of the fundamental; harmonic `h` gets `tone_level / h`.
    pub tone_level: f64,
    /// Noise amplitude relative to white noise at the tilt pivot.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            speakers: 30,
            real_per_speaker: 10,
            fake_per_speaker: 10,
            seconds: 3.0,
            sample_rate: 16_000,
            real_tilt: -0.5,
            fake_tilt: -3.0,
            tone_level: 0.05,
            noise_level: 0.7,
            seed: 0,
        }
    }
}

/// Noise spectra have unit gain at twice this frequency.
const PIVOT_HZ: f64 = 100.0;

/// Fundamental frequency of a speaker, spread over 100-250 Hz.
pub fn speaker_f0(speaker: usize, speakers: usize) -> f64 {
    100.0 + 150.0 * (speaker as f64 + 0.5) / speakers.max(1) as f64
}

/// Renders one clip. `rng` drives every random choice.
pub fn synth_clip<R: Rng + ?Sized>(
    rng: &mut R,
    f0: f64,
    tilt: f64,
    config: &SynthConfig,
) -> Result<Waveform> {
    let (seconds, sample_rate) = (config.seconds, config.sample_rate);
    let n = (seconds * sample_rate as f64).round() as usize;
    if n < 2 {
        return Err(Error::InvalidInput(format!("{seconds} s is too short")));
    }
    let sr = sample_rate as f64;

    let white: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut spec = dft_forward(&Waveform::new(white, sample_rate)?)?;
    let tilt = tilt + rng.random_range(-0.02..0.02);
    let bin_hz = sr / n as f64;
    for (k, b) in spec.bins_mut().iter_mut().enumerate() {
        let f = k as f64 * bin_hz;
        *b *= ((f + PIVOT_HZ) / (2.0 * PIVOT_HZ)).powf(tilt);
    }
    let noise = dft_inverse(&spec).samples;

    let f0 = f0 * rng.random_range(0.97..1.03);
    let rate = rng.random_range(2.0..5.0);
    let phase = rng.random_range(0.0..TAU);
    let harmonics: Vec<(f64, f64, f64)> = (1..=12)
        .map(|h| h as f64 * f0)
        .take_while(|&f| f < 0.45 * sr)
        .enumerate()
        .map(|(i, f)| (f, 1.0 / (i + 1) as f64, rng.random_range(0.0..TAU)))
        .collect();
    let noise_gain = config.noise_level * rng.random_range(0.98..1.02);

    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.6 + 0.4 * (TAU * rate * t + phase).sin();
            let tone: f64 = harmonics.iter().map(|&(f, a, p)| a * (TAU * f * t + p).sin()).sum();
            config.tone_level * env * tone + noise_gain * noise[i]
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gain = rng.random_range(0.5..0.9) / peak;
    samples.iter_mut().for_each(|x| *x *= gain);
    Waveform::new(samples, sample_rate)
}

/// Training schedule sized for the synthetic corpus: short full-network
/// stages and a long head-only artifact stage, which is cheap because the
/// frozen extractor's features are computed once.
pub fn toy_protocol_config(seed: u64) -> ProtocolConfig {
    let main = TrainConfig {
        epochs: 5,
        lr0: 3e-3,
        decay_every: 5,
        seed,
        ..TrainConfig::default()
    };
    let mut config = ProtocolConfig::uniform(main);
    config.adm = TrainConfig {
        epochs: 3000,
        decay_every: 1000,
        dropout_p: 0.0,
        ..config.adm
    };
    config
}

/// File id of the `index`-th clip of a speaker.
pub fn clip_id(label: Label, speaker: usize, index: usize) -> String {
    format!("{}_spk{speaker:03}_{index:03}", label.as_str())
}

/// Writes a corpus to `dir` as 16-bit WAV files and returns its manifest,
/// with paths relative to `dir`. Output depends only on `config`.
pub fn write_corpus(dir: &Path, config: &SynthConfig) -> Result<Manifest> {
    use rayon::prelude::*;

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut jobs = Vec::new();
    for spk in 0..config.speakers {
        for i in 0..config.real_per_speaker {
            jobs.push((Label::Real, spk, i));
        }
        for i in 0..config.fake_per_speaker {
            jobs.push((Label::Fake, spk, i));
        }
    }
    let records = jobs
        .par_iter()
        .map(|&(label, spk, i)| {
            let id = clip_id(label, spk, i);
            let mut rng = file_rng(file_seed(config.seed, &id));
            let tilt = if label == Label::Real { config.real_tilt } else { config.fake_tilt };
            let clip = synth_clip(
                &mut rng,
                speaker_f0(spk, config.speakers),
                tilt,
                config,
            )?;
            let name = format!("{id}.wav");
            write_wav(&clip, dir.join(&name))?;
            Ok(SampleRecord::new(id, name, format!("spk{spk:03}"), label))
        })
        .collect::<Result<Vec<_>>>()?;
    Manifest::new(records, None)
}
