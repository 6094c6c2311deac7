//! Pipeline configuration file.
//!
//! Values are resolved in this order, later winning: built-in defaults, the
//! TOML file given by `--config`, `ANTISPOOF_*` environment variables, and
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use antispoof::artifact_gen::{ArtifactConfig, ArtifactKind, BandSpec, Standardization};
use antispoof::model::{ProtocolConfig, TrainConfig};
use antispoof::spectral::MelParams;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub standardization: StandardizationSection,
    pub mel: MelSection,
    pub split: SplitSection,
    pub artifact: ArtifactSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory that relative audio paths in corpus manifests resolve against.
    pub corpus_root: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_root: PathBuf::from("corpus"),
            work_dir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StandardizationSection {
    pub seconds: f64,
    pub sample_rate: u32,
}

impl Default for StandardizationSection {
    fn default() -> Self {
        let s = Standardization::default();
        Self {
            seconds: s.seconds,
            sample_rate: s.sample_rate,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MelSection {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub floor_db: f64,
}

impl Default for MelSection {
    fn default() -> Self {
        let m = MelParams::default();
        Self {
            n_fft: m.n_fft,
            hop: m.hop,
            n_mels: m.n_mels,
            floor_db: m.floor_db,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub fractions: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fractions: [0.7, 0.15, 0.15],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactSection {
    pub kind: ArtifactKind,
    /// `start:end` in Hz, used by `fixed_freq`.
    pub band: String,
    pub noise_alpha: f64,
    pub segment_range: [f64; 2],
}

impl Default for ArtifactSection {
    fn default() -> Self {
        let d = ArtifactConfig::new(ArtifactKind::DynamicFreq, 0);
        Self {
            kind: ArtifactKind::DynamicFreq,
            band: format!("{}:{}", BandSpec::WIDE.f_start, BandSpec::WIDE.f_end),
            noise_alpha: d.noise_alpha,
            segment_range: [d.segment_range.0, d.segment_range.1],
        }
    }
}

/// Hyperparameters shared by every stage; `adm` and `finetune` override
/// individual fields for stages 2 and 3.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr0: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub momentum: f64,
    pub l2: f64,
    pub dropout_p: f64,
    pub batch: usize,
    pub adm: StageOverrides,
    pub finetune: StageOverrides,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr0: t.lr0,
            decay_every: t.decay_every,
            decay_factor: t.decay_factor,
            momentum: t.momentum,
            l2: t.l2,
            dropout_p: t.dropout_p,
            batch: t.batch,
            adm: StageOverrides::default(),
            finetune: StageOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StageOverrides {
    pub epochs: Option<usize>,
    pub lr0: Option<f64>,
    pub decay_every: Option<usize>,
    pub decay_factor: Option<f64>,
    pub momentum: Option<f64>,
    pub l2: Option<f64>,
    pub dropout_p: Option<f64>,
    pub batch: Option<usize>,
}

impl StageOverrides {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.lr0 = self.lr0.unwrap_or(c.lr0);
        c.decay_every = self.decay_every.unwrap_or(c.decay_every);
        c.decay_factor = self.decay_factor.unwrap_or(c.decay_factor);
        c.momentum = self.momentum.unwrap_or(c.momentum);
        c.l2 = self.l2.unwrap_or(c.l2);
        c.dropout_p = self.dropout_p.unwrap_or(c.dropout_p);
        c.batch = self.batch.unwrap_or(c.batch);
        c
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.mel_params().validate()?;
        self.artifact_config()?.validate()?;
        self.protocol().validate()?;
        if !(self.standardization.seconds > 0.0) {
            anyhow::bail!("standardization.seconds must be positive");
        }
        let f = self.split.fractions;
        if f.iter().any(|x| !(*x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            anyhow::bail!("split.fractions {f:?} must be non-negative and sum to 1");
        }
        Ok(())
    }

    pub fn standardization(&self) -> Standardization {
        Standardization {
            seconds: self.standardization.seconds,
            sample_rate: self.standardization.sample_rate,
        }
    }

    pub fn mel_params(&self) -> MelParams {
        MelParams {
            n_fft: self.mel.n_fft,
            hop: self.mel.hop,
            n_mels: self.mel.n_mels,
            sample_rate: self.standardization.sample_rate,
            floor_db: self.mel.floor_db,
        }
    }

    pub fn artifact_config(&self) -> antispoof::Result<ArtifactConfig> {
        let mut c = ArtifactConfig::new(self.artifact.kind, self.seed);
        if self.artifact.kind == ArtifactKind::FixedFreq {
            let band: BandSpec = self.artifact.band.parse()?;
            band.check_nyquist(self.standardization.sample_rate)?;
            c.band = Some(band);
        }
        c.noise_alpha = self.artifact.noise_alpha;
        c.segment_range = (self.artifact.segment_range[0], self.artifact.segment_range[1]);
        Ok(c)
    }

    pub fn protocol(&self) -> ProtocolConfig {
        let t = &self.train;
        let base = TrainConfig {
            epochs: t.epochs,
            lr0: t.lr0,
            decay_every: t.decay_every,
            decay_factor: t.decay_factor,
            momentum: t.momentum,
            l2: t.l2,
            dropout_p: t.dropout_p,
            batch: t.batch,
            seed: self.seed,
        };
        let mut p = ProtocolConfig::uniform(base);
        p.adm = t.adm.apply(p.adm);
        p.finetune = t.finetune.apply(p.finetune);
        p
    }
}
