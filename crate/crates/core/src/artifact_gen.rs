//! Artifact-fake generation from speaker-matched (fake, real) pairs.
//!
//! Four manipulations are provided. Band swaps copy a frequency band of the
//! real clip's full-length spectrum into the fake's; the time swap splices a
//! segment of the real waveform into the fake; the noise mix adds the scaled
//! real clip under the fake. Both clips of a pair must be standardized to the
//! same length and rate.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio_io::{self, peak_normalize, Waveform};
use crate::dataset::{speaker_pairs, Label, Manifest, SampleRecord};
use crate::error::{Error, Result};
use crate::spectral::{dft_forward, dft_inverse, freq_to_index, Spectrum};

/// Default scale of the real clip in the noise mix.
pub const DEFAULT_NOISE_ALPHA: f64 = 0.2;
/// Default bounds, in seconds, of the time-swap segment duration.
pub const DEFAULT_SEGMENT_RANGE: (f64, f64) = (0.3, 1.0);
/// Lowest start frequency of a dynamic band, Hz.
pub const DYNAMIC_MIN_START_HZ: f64 = 200.0;
/// Highest start frequency of a dynamic band, as a fraction of Nyquist.
pub const DYNAMIC_MAX_START_FRACTION: f64 = 0.7;
/// Bounds of the dynamic band width, Hz.
pub const DYNAMIC_WIDTH_HZ: (f64, f64) = (100.0, 500.0);

/// A frequency band `[f_start, f_end)` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub f_start: f64,
    pub f_end: f64,
}

impl BandSpec {
    /// Formant band F2 (2000-2500 Hz).
    pub const NARROW: BandSpec = BandSpec {
        f_start: 2000.0,
        f_end: 2500.0,
    };
    /// Formant bands F2-F3 (2000-3500 Hz).
    pub const WIDE: BandSpec = BandSpec {
        f_start: 2000.0,
        f_end: 3500.0,
    };
    pub const PRESETS: [BandSpec; 2] = [Self::NARROW, Self::WIDE];

    pub fn new(f_start: f64, f_end: f64) -> Result<Self> {
        if !(f_start > 0.0 && f_start < f_end && f_end.is_finite()) {
            return Err(Error::Config(format!(
                "band {f_start}-{f_end} Hz needs 0 < start < end"
            )));
        }
        Ok(Self { f_start, f_end })
    }

    pub fn check_nyquist(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.f_end > nyquist {
            return Err(Error::Range(format!(
                "band end {} Hz exceeds Nyquist {nyquist} Hz",
                self.f_end
            )));
        }
        Ok(())
    }
}

impl fmt::Display for BandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.f_start, self.f_end)
    }
}

impl FromStr for BandSpec {
    type Err = Error;

    /// Parses `start:end` in Hz, e.g. `2000:3500`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("band `{s}` is not start:end")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("band `{s}`: `{v}` is not a number")))
        };
        BandSpec::new(parse(a)?, parse(b)?)
    }
}

/// Half-open range of one-sided bin indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandIndices {
    pub start: usize,
    pub end: usize,
}

impl BandIndices {
    pub fn contains(&self, k: usize) -> bool {
        (self.start..self.end).contains(&k)
    }
}

/// Bin range of `band` for a clip of `n` samples at `sample_rate`.
pub fn band_indices(band: &BandSpec, sample_rate: u32, n: usize) -> Result<BandIndices> {
    band.check_nyquist(sample_rate)?;
    Ok(BandIndices {
        start: freq_to_index(band.f_start, sample_rate, n)?,
        end: freq_to_index(band.f_end, sample_rate, n)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    FixedFreq,
    TimeSegment,
    DynamicFreq,
    BackgroundNoise,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        ArtifactKind::FixedFreq,
        ArtifactKind::TimeSegment,
        ArtifactKind::DynamicFreq,
        ArtifactKind::BackgroundNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::FixedFreq => "fixed_freq",
            ArtifactKind::TimeSegment => "time_segment",
            ArtifactKind::DynamicFreq => "dynamic_freq",
            ArtifactKind::BackgroundNoise => "background_noise",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown artifact kind `{s}`")))
    }
}

/// Settings for one artifact generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactConfig {
    pub kind: ArtifactKind,
    /// Band for `FixedFreq`; ignored by the other kinds.
    pub band: Option<BandSpec>,
    pub noise_alpha: f64,
    /// Bounds of the time-swap segment duration in seconds.
    pub segment_range: (f64, f64),
    pub seed: u64,
}

impl ArtifactConfig {
    pub fn new(kind: ArtifactKind, seed: u64) -> Self {
        Self {
            kind,
            band: (kind == ArtifactKind::FixedFreq).then_some(BandSpec::WIDE),
            noise_alpha: DEFAULT_NOISE_ALPHA,
            segment_range: DEFAULT_SEGMENT_RANGE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_alpha > 0.0 && self.noise_alpha < 1.0) {
            return Err(Error::Config(format!(
                "noise alpha {} must lie in (0, 1)",
                self.noise_alpha
            )));
        }
        let (lo, hi) = self.segment_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("segment range {lo}-{hi} s is invalid")));
        }
        if self.kind == ArtifactKind::FixedFreq && self.band.is_none() {
            return Err(Error::Config("fixed_freq needs a band".into()));
        }
        Ok(())
    }
}

fn check_pair(fake: &Waveform, real: &Waveform) -> Result<()> {
    if fake.len() != real.len() || fake.sample_rate != real.sample_rate {
        return Err(Error::InvalidPair(format!(
            "fake has {} samples at {} Hz, real has {} samples at {} Hz",
            fake.len(),
            fake.sample_rate,
            real.len(),
            real.sample_rate
        )));
    }
    if fake.len() < 2 {
        return Err(Error::InvalidPair("clips are too short".into()));
    }
    Ok(())
}

/// Copies bins `idx.start..idx.end` of `real` into a copy of `fake`.
pub fn swap_band(fake: &Spectrum, real: &Spectrum, idx: BandIndices) -> Result<Spectrum> {
    if fake.n() != real.n() || fake.sample_rate() != real.sample_rate() {
        return Err(Error::InvalidPair("spectra of different clips".into()));
    }
    if idx.start > idx.end || idx.end > fake.bins().len() {
        return Err(Error::Range(format!(
            "bins {}..{} outside a {}-bin spectrum",
            idx.start,
            idx.end,
            fake.bins().len()
        )));
    }
    let mut out = fake.clone();
    out.bins_mut()[idx.start..idx.end].copy_from_slice(&real.bins()[idx.start..idx.end]);
    Ok(out)
}

fn band_swap(fake: &Waveform, real: &Waveform, band: &BandSpec) -> Result<Waveform> {
    check_pair(fake, real)?;
    let idx = band_indices(band, fake.sample_rate, fake.len())?;
    let swapped = swap_band(&dft_forward(fake)?, &dft_forward(real)?, idx)?;
    Ok(peak_normalize(&dft_inverse(&swapped)))
}

/// Replaces `band` of the fake's spectrum with the real's, inverts and peak
/// normalizes.
pub fn fixed_freq_swap(fake: &Waveform, real: &Waveform, band: &BandSpec) -> Result<Waveform> {
    band_swap(fake, real, band)
}

/// A spliced sample range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub sample_rate: u32,
}

impl Segment {
    pub fn start_seconds(&self) -> f64 {
        self.start as f64 / self.sample_rate as f64
    }

    pub fn end_seconds(&self) -> f64 {
        self.end as f64 / self.sample_rate as f64
    }
}

/// Copies `real[segment]` over the fake. Samples outside the segment are
/// left untouched and no normalization is applied.
pub fn replace_segment(fake: &Waveform, real: &Waveform, segment: Segment) -> Result<Waveform> {
    check_pair(fake, real)?;
    if segment.start > segment.end || segment.end > fake.len() {
        return Err(Error::Range(format!(
            "segment {}..{} outside a {}-sample clip",
            segment.start,
            segment.end,
            fake.len()
        )));
    }
    let mut out = fake.clone();
    out.samples[segment.start..segment.end].copy_from_slice(&real.samples[segment.start..segment.end]);
    Ok(out)
}

/// Draws a segment whose duration is uniform in `range` seconds and whose
/// start is uniform over the positions that keep it inside the clip.
pub fn draw_segment<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    sample_rate: u32,
    range: (f64, f64),
) -> Result<Segment> {
    let (lo, hi) = range;
    let clip_seconds = n as f64 / sample_rate as f64;
    if !(lo > 0.0 && lo <= hi) || hi > clip_seconds {
        return Err(Error::Config(format!(
            "segment range {lo}-{hi} s does not fit a {clip_seconds} s clip"
        )));
    }
    let seconds = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let len = ((seconds * sample_rate as f64).round() as usize).min(n);
    let start = rng.random_range(0..=n - len);
    Ok(Segment {
        start,
        end: start + len,
        sample_rate,
    })
}

/// Splices a random segment of the real clip into the fake.
pub fn time_segment_swap<R: Rng + ?Sized>(
    fake: &Waveform,
    real: &Waveform,
    range: (f64, f64),
    rng: &mut R,
) -> Result<(Waveform, Segment)> {
    check_pair(fake, real)?;
    let segment = draw_segment(rng, fake.len(), fake.sample_rate, range)?;
    Ok((replace_segment(fake, real, segment)?, segment))
}

/// Draws a band with start uniform in `[200 Hz, 0.7 * Nyquist]`, width
/// uniform in `[100, 500]` Hz, and end clipped to Nyquist.
pub fn draw_dynamic_band<R: Rng + ?Sized>(rng: &mut R, sample_rate: u32) -> Result<BandSpec> {
    let nyquist = sample_rate as f64 / 2.0;
    let max_start = DYNAMIC_MAX_START_FRACTION * nyquist;
    if max_start <= DYNAMIC_MIN_START_HZ {
        return Err(Error::Config(format!(
            "{sample_rate} Hz is too low for dynamic band selection"
        )));
    }
    let f_start = rng.random_range(DYNAMIC_MIN_START_HZ..=max_start);
    let width = rng.random_range(DYNAMIC_WIDTH_HZ.0..=DYNAMIC_WIDTH_HZ.1);
    Ok(BandSpec {
        f_start,
        f_end: (f_start + width).min(nyquist),
    })
}

/// Band swap at a randomly drawn band; returns the band used.
pub fn dynamic_freq_swap<R: Rng + ?Sized>(
    fake: &Waveform,
    real: &Waveform,
    rng: &mut R,
) -> Result<(Waveform, BandSpec)> {
    check_pair(fake, real)?;
    let band = draw_dynamic_band(rng, fake.sample_rate)?;
    Ok((band_swap(fake, real, &band)?, band))
}

/// `fake + alpha * real`, peak normalized.
pub fn background_noise_mix(fake: &Waveform, real: &Waveform, alpha: f64) -> Result<Waveform> {
    check_pair(fake, real)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("noise alpha {alpha} must lie in (0, 1)")));
    }
    let mixed = Waveform {
        samples: fake
            .samples
            .iter()
            .zip(&real.samples)
            .map(|(s, b)| s + alpha * b)
            .collect(),
        sample_rate: fake.sample_rate,
    };
    Ok(peak_normalize(&mixed))
}

/// Parameters actually used for one artifact clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AppliedArtifact {
    Band(BandSpec),
    Segment(Segment),
    Noise { alpha: f64 },
}

/// Applies the configured manipulation to one pair.
pub fn apply_artifact<R: Rng + ?Sized>(
    config: &ArtifactConfig,
    fake: &Waveform,
    real: &Waveform,
    rng: &mut R,
) -> Result<(Waveform, AppliedArtifact)> {
    match config.kind {
        ArtifactKind::FixedFreq => {
            let band = config
                .band
                .ok_or_else(|| Error::Config("fixed_freq needs a band".into()))?;
            Ok((fixed_freq_swap(fake, real, &band)?, AppliedArtifact::Band(band)))
        }
        ArtifactKind::TimeSegment => {
            let (w, seg) = time_segment_swap(fake, real, config.segment_range, rng)?;
            Ok((w, AppliedArtifact::Segment(seg)))
        }
        ArtifactKind::DynamicFreq => {
            let (w, band) = dynamic_freq_swap(fake, real, rng)?;
            Ok((w, AppliedArtifact::Band(band)))
        }
        ArtifactKind::BackgroundNoise => Ok((
            background_noise_mix(fake, real, config.noise_alpha)?,
            AppliedArtifact::Noise {
                alpha: config.noise_alpha,
            },
        )),
    }
}

/// Seed of the per-file generator: the first 8 bytes of
/// `SHA-256(master_seed as little-endian u64 || file_id)`.
pub fn file_seed(master_seed: u64, file_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(file_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn file_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One line of the provenance log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub artifact_id: String,
    pub fake_id: String,
    pub real_id: String,
    pub speaker_id: String,
    pub kind: ArtifactKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band_hz: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub segment_s: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    pub seed: u64,
}

/// Id of the artifact clip derived from `fake_id`.
pub fn artifact_id(fake_id: &str, kind: ArtifactKind) -> String {
    format!("{fake_id}__{kind}")
}

/// Clip standardization applied before manipulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub seconds: f64,
    pub sample_rate: u32,
}

impl Default for Standardization {
    fn default() -> Self {
        Self {
            seconds: audio_io::DEFAULT_SECONDS,
            sample_rate: audio_io::DEFAULT_RATE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationSummary {
    pub generated: usize,
    /// Fake ids whose speaker has no real clip.
    pub skipped: Vec<String>,
    /// Fake ids that failed, with the reason.
    pub failed: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    /// Artifact records; paths are file names inside the output directory.
    pub manifest: Manifest,
    pub provenance: Vec<ProvenanceRecord>,
    pub summary: GenerationSummary,
}

/// Name of the provenance log written next to the clips.
pub const PROVENANCE_FILE: &str = "provenance.jsonl";

/// Produces one artifact clip per fake record of `manifest`.
///
/// The real partner is drawn uniformly from the fake's own speaker, using a
/// generator seeded from `(config.seed, fake_id)`; the same generator then
/// drives any random artifact parameters. Clips are written to
/// `out_dir/<artifact_id>.wav` and the provenance log to
/// `out_dir/provenance.jsonl`. Records are processed in parallel on the
/// current rayon pool; output order follows the manifest.
///
/// Fakes whose speaker has no real record are skipped. Clips that cannot be
/// read or processed are reported in the summary; the rest are still
/// produced.
pub fn generate_artifact_set(
    manifest: &Manifest,
    config: &ArtifactConfig,
    audio_root: &Path,
    out_dir: &Path,
    standardization: Standardization,
) -> Result<GenerationOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pairs = speaker_pairs(manifest);

    #[allow(clippy::large_enum_variant)]
    enum Outcome {
        Done(SampleRecord, ProvenanceRecord),
        Skipped(String),
        Failed(String, String),
    }

    let fakes: Vec<&SampleRecord> = manifest
        .records()
        .iter()
        .filter(|r| r.label == Label::Fake)
        .collect();
    let outcomes: Vec<Outcome> = fakes
        .par_iter()
        .map(|fake| {
            let reals = &pairs[fake.speaker_id.as_str()].reals;
            if reals.is_empty() {
                warn!(
                    "skipping {}: speaker {} has no real clips",
                    fake.file_id, fake.speaker_id
                );
                return Outcome::Skipped(fake.file_id.clone());
            }
            let seed = file_seed(config.seed, &fake.file_id);
            let mut rng = file_rng(seed);
            let real = reals[rng.random_range(0..reals.len())];
            assert_eq!(real.speaker_id, fake.speaker_id, "pair crosses speakers");
            match make_one(fake, real, config, audio_root, out_dir, standardization, seed, &mut rng) {
                Ok(done) => Outcome::Done(done.0, done.1),
                Err(e) => {
                    warn!("failed to generate artifact for {}: {e}", fake.file_id);
                    Outcome::Failed(fake.file_id.clone(), e.to_string())
                }
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut provenance = Vec::new();
    let mut summary = GenerationSummary::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Done(r, p) => {
                records.push(r);
                provenance.push(p);
                summary.generated += 1;
            }
            Outcome::Skipped(id) => summary.skipped.push(id),
            Outcome::Failed(id, why) => summary.failed.push((id, why)),
        }
    }
    write_provenance(&provenance, &out_dir.join(PROVENANCE_FILE))?;
    Ok(GenerationOutput {
        manifest: Manifest::new(records, manifest.split)?,
        provenance,
        summary,
    })
}

#[allow(clippy::too_many_arguments)]
fn make_one(
    fake: &SampleRecord,
    real: &SampleRecord,
    config: &ArtifactConfig,
    audio_root: &Path,
    out_dir: &Path,
    std: Standardization,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(SampleRecord, ProvenanceRecord)> {
    let load = |r: &SampleRecord| {
        let w = audio_io::load_wav(r.resolve(audio_root))?;
        audio_io::standardize(&w, std.seconds, std.sample_rate)
    };
    let fake_w = load(fake)?;
    let real_w = load(real)?;
    let (out, applied) = apply_artifact(config, &fake_w, &real_w, rng)?;
    let id = artifact_id(&fake.file_id, config.kind);
    let file_name = PathBuf::from(format!("{id}.wav"));
    audio_io::write_wav(&out, out_dir.join(&file_name))?;

    let mut prov = ProvenanceRecord {
        artifact_id: id.clone(),
        fake_id: fake.file_id.clone(),
        real_id: real.file_id.clone(),
        speaker_id: fake.speaker_id.clone(),
        kind: config.kind,
        band_hz: None,
        segment_s: None,
        alpha: None,
        seed,
    };
    match applied {
        AppliedArtifact::Band(b) => prov.band_hz = Some((b.f_start, b.f_end)),
        AppliedArtifact::Segment(s) => prov.segment_s = Some((s.start_seconds(), s.end_seconds())),
        AppliedArtifact::Noise { alpha } => prov.alpha = Some(alpha),
    }
    Ok((
        SampleRecord::new(id, file_name, fake.speaker_id.clone(), Label::Artifact),
        prov,
    ))
}

pub fn write_provenance(records: &[ProvenanceRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("provenance serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_provenance(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
