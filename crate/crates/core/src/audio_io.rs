//! Mono waveform loading, standardization and PCM writing.
//!
//! Every clip entering the pipeline is brought to the same duration and
//! sample rate before any artifact is injected, so that spectrum bin `k`
//! means the same frequency for the fake and the real clip of a pair.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// Default clip duration in seconds.
pub const DEFAULT_SECONDS: f64 = 3.0;
/// Default working sample rate in Hz.
pub const DEFAULT_RATE: u32 = 16_000;

/// Half-width of the resampling kernel, in taps at the lower of the two rates.
const RESAMPLE_TAPS: usize = 32;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform, rejecting a zero rate and non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
///
/// Stereo input is averaged to mono. The original sample rate is kept.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader =
        hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::Format(format!(
            "{}: {} channels (expected 1 or 2)",
            path.display(),
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: {bits}-bit {fmt:?} samples (expected 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    };
    let samples = if spec.channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|f| 0.5 * (f[0] + f[1]))
            .collect()
    } else {
        interleaved
    };
    Waveform::new(samples, spec.sample_rate).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// The file is already open, so read failures mean a short or corrupt file.
fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported => Error::Format(format!("{}: unsupported codec", path.display())),
        other => Error::Parse(format!("{}: {other}", path.display())),
    }
}

/// Writes a 16-bit PCM mono little-endian WAV file.
///
/// Samples outside `[-1, 1]` are clamped; amplitude `1.0` maps to `32767`.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let clipped = w.samples.iter().filter(|s| s.abs() > 1.0).count();
    if clipped > 0 {
        warn!("{}: clamping {clipped} out-of-range samples", path.display());
    }
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &w.samples {
        writer.write_sample(pcm16(s)).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

/// Quantizes one amplitude to signed 16-bit PCM.
pub fn pcm16(sample: f64) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Resamples to `target_rate`, then truncates or zero-pads the tail to
/// `round(target_seconds * target_rate)` samples.
///
/// A waveform already at the target rate is not filtered, which makes the
/// operation idempotent.
pub fn standardize(w: &Waveform, target_seconds: f64, target_rate: u32) -> Result<Waveform> {
    if !(target_seconds > 0.0) || target_rate == 0 {
        return Err(Error::InvalidInput(format!(
            "target duration {target_seconds} s / rate {target_rate} Hz must be positive"
        )));
    }
    if w.is_empty() {
        return Err(Error::InvalidInput("cannot standardize an empty waveform".into()));
    }
    let target_len = (target_seconds * target_rate as f64).round() as usize;
    let mut samples = resample(&w.samples, w.sample_rate, target_rate);
    samples.resize(target_len, 0.0);
    Ok(Waveform {
        samples,
        sample_rate: target_rate,
    })
}

/// Standardizes to the pipeline defaults (3 s at 16 kHz).
pub fn standardize_default(w: &Waveform) -> Result<Waveform> {
    standardize(w, DEFAULT_SECONDS, DEFAULT_RATE)
}

/// Divides by the peak absolute amplitude. Silence is returned unchanged.
pub fn peak_normalize(w: &Waveform) -> Waveform {
    let peak = w.peak();
    if peak == 0.0 {
        return w.clone();
    }
    Waveform {
        samples: w.samples.iter().map(|s| s / peak).collect(),
        sample_rate: w.sample_rate,
    }
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
///
/// Output sample `i` sits at input position `i * from / to`. The kernel spans
/// `RESAMPLE_TAPS` zero crossings per side at the lower of the two rates and
/// is renormalized by its in-range weight sum, so a constant input maps to the
/// same constant everywhere including the clip edges.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let g = gcd(from as u64, to as u64);
    let up = to as u64 / g;
    let down = from as u64 / g;
    let n = samples.len() as u64;
    let out_len = (n * up).div_ceil(down) as usize;

    let cutoff = (to as f64 / from as f64).min(1.0);
    let half_width = RESAMPLE_TAPS as f64 / cutoff;

    // One kernel per fractional phase `p / up`.
    let phases: Vec<(i64, Vec<f64>)> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let first = (frac - half_width).ceil() as i64;
            let last = (frac + half_width).floor() as i64;
            let taps = (first..=last)
                .map(|t| {
                    let d = frac - t as f64;
                    if d.abs() >= half_width {
                        0.0
                    } else {
                        let window = 0.5 * (1.0 + (PI * d / half_width).cos());
                        cutoff * sinc(cutoff * d) * window
                    }
                })
                .collect();
            (first, taps)
        })
        .collect();

    let len = samples.len() as i64;
    (0..out_len as u64)
        .map(|i| {
            let pos = i * down;
            let base = (pos / up) as i64;
            let (first, taps) = &phases[(pos % up) as usize];
            let start = base + first;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (k, &w) in taps.iter().enumerate() {
                let j = start + k as i64;
                if (0..len).contains(&j) {
                    acc += samples[j as usize] * w;
                    wsum += w;
                }
            }
            if wsum.abs() > 1e-12 {
                acc / wsum
            } else {
                acc
            }
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
