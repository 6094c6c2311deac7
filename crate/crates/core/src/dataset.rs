//! Manifests, speaker pairing, splits and per-task training views.
//!
//! The native manifest is a headerless UTF-8 TSV with four columns:
//! `file_id`, `path`, `speaker_id`, `label`, where `label` is one of `real`,
//! `fake` or `artifact`. Record paths are resolved against a root directory
//! chosen by the caller.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::{read_melf, MelSpectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real,
    Fake,
    Artifact,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
            Label::Artifact => "artifact",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            "artifact" => Ok(Label::Artifact),
            other => Err(Error::Validation(format!(
                "unknown label `{other}` (expected real, fake or artifact)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub file_id: String,
    pub path: PathBuf,
    pub speaker_id: String,
    pub label: Label,
}

impl SampleRecord {
    pub fn new(
        file_id: impl Into<String>,
        path: impl Into<PathBuf>,
        speaker_id: impl Into<String>,
        label: Label,
    ) -> Self {
        Self {
            file_id: file_id.into(),
            path: path.into(),
            speaker_id: speaker_id.into(),
            label,
        }
    }

    /// Path of the audio file, relative paths taken from `root`.
    pub fn resolve(&self, root: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            root.join(&self.path)
        }
    }
}

/// A validated list of records with unique file ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    records: Vec<SampleRecord>,
    pub split: Option<Split>,
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>, split: Option<Split>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            validate_field("file_id", &r.file_id)?;
            validate_field("speaker_id", &r.speaker_id)?;
            if r.file_id.contains(['/', '\\']) || r.file_id.starts_with('.') {
                return Err(Error::Validation(format!(
                    "file_id `{}` cannot be used as a file name",
                    r.file_id
                )));
            }
            if !seen.insert(r.file_id.as_str()) {
                return Err(Error::Validation(format!("duplicate file_id `{}`", r.file_id)));
            }
        }
        Ok(Self { records, split })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SampleRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Parses native TSV text.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {line_no}: expected 4 tab-separated columns, found {}",
                    cols.len()
                )));
            }
            let label = cols[3]
                .parse::<Label>()
                .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
            records.push(SampleRecord::new(cols[0], cols[1], cols[2], label));
        }
        Self::new(records, None)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.file_id,
                r.path.display(),
                r.speaker_id,
                r.label
            ));
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn validate_field(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) {
        return Err(Error::Validation(format!("invalid {name} `{value}`")));
    }
    Ok(())
}

/// Reads a native TSV manifest.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_tsv(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Converts an ASVspoof LA protocol file to a manifest.
///
/// Each line is `speaker file_name - attack key` with `key` one of
/// `bonafide` (mapped to real) or `spoof` (mapped to fake). Audio paths are
/// `audio_root/file_name.extension`.
pub fn import_asvspoof_protocol(
    path: impl AsRef<Path>,
    audio_root: impl AsRef<Path>,
    extension: &str,
) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_asvspoof_protocol(&text, audio_root.as_ref(), extension).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_asvspoof_protocol(text: &str, audio_root: &Path, extension: &str) -> Result<Manifest> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::Parse(format!(
                "line {line_no}: expected 5 fields, found {}",
                fields.len()
            )));
        }
        let label = match fields[4] {
            "bonafide" => Label::Real,
            "spoof" => Label::Fake,
            other => {
                return Err(Error::Parse(format!(
                    "line {line_no}: unknown key `{other}` (expected bonafide or spoof)"
                )))
            }
        };
        let file_name = fields[1];
        let file = if extension.is_empty() {
            file_name.to_string()
        } else {
            format!("{file_name}.{}", extension.trim_start_matches('.'))
        };
        records.push(SampleRecord::new(file_name, audio_root.join(file), fields[0], label));
    }
    Manifest::new(records, None)
}

/// Stratified random split into train/val/test.
///
/// Records of each label are shuffled under `seed` and divided by the
/// largest-remainder rule, so every split holds each label within one record
/// of its exact share. Output manifests keep the input record order.
pub fn split_random(manifest: &Manifest, fractions: [f64; 3], seed: u64) -> Result<[Manifest; 3]> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    if manifest.len() < fractions.len() {
        return Err(Error::Validation(format!(
            "{} records cannot fill {} splits",
            manifest.len(),
            fractions.len()
        )));
    }

    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        by_label.entry(r.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; manifest.len()];
    for indices in by_label.values_mut() {
        indices.shuffle(&mut rng);
        let counts = allocate(indices.len(), &fractions);
        let mut cursor = 0;
        for (split, &count) in counts.iter().enumerate() {
            for &idx in &indices[cursor..cursor + count] {
                assignment[idx] = split;
            }
            cursor += count;
        }
    }

    let mut parts: [Vec<SampleRecord>; 3] = Default::default();
    for (record, &split) in manifest.records.iter().zip(&assignment) {
        parts[split].push(record.clone());
    }
    let [train, val, test] = parts;
    Ok([
        Manifest::new(train, Some(Split::Train))?,
        Manifest::new(val, Some(Split::Val))?,
        Manifest::new(test, Some(Split::Test))?,
    ])
}

/// Largest-remainder apportionment of `n` items.
fn allocate(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Real and fake records of one speaker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeakerGroup<'a> {
    pub reals: Vec<&'a SampleRecord>,
    pub fakes: Vec<&'a SampleRecord>,
}

/// Groups real and fake records by speaker. Artifact records are ignored.
pub fn speaker_pairs(manifest: &Manifest) -> BTreeMap<&str, SpeakerGroup<'_>> {
    let mut map: BTreeMap<&str, SpeakerGroup<'_>> = BTreeMap::new();
    for r in &manifest.records {
        let group = map.entry(r.speaker_id.as_str()).or_default();
        match r.label {
            Label::Real => group.reals.push(r),
            Label::Fake => group.fakes.push(r),
            Label::Artifact => {}
        }
    }
    map
}

/// Which binary problem a view is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Real (1) against fake (0).
    Main,
    /// Artifact-fake (1) against original fake (0).
    Adm,
}

impl Task {
    /// Positive-class label for this task.
    pub fn positive(self) -> Label {
        match self {
            Task::Main => Label::Real,
            Task::Adm => Label::Artifact,
        }
    }

    fn target(self, label: Label) -> Option<u8> {
        match (self, label) {
            (Task::Main, Label::Real) => Some(1),
            (Task::Main, Label::Fake) => Some(0),
            (Task::Adm, Label::Fake) => Some(0),
            (Task::Adm, Label::Artifact) => Some(1),
            _ => None,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(Task::Main),
            "adm" => Ok(Task::Adm),
            other => Err(Error::Validation(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub file_id: String,
    pub features: MelSpectrogram,
    pub label: u8,
}

/// Labeled feature matrices for one task.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskView {
    pub examples: Vec<LabeledExample>,
}

impl TaskView {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }
}

/// Where precomputed features come from.
pub trait FeatureSource {
    /// `Ok(None)` when no features exist for `file_id`.
    fn load(&self, file_id: &str) -> Result<Option<MelSpectrogram>>;
}

/// A directory of `<file_id>.melf` files.
#[derive(Debug, Clone)]
pub struct FeatureDir(pub PathBuf);

/// Location of a record's feature file inside a feature directory.
pub fn feature_path(dir: &Path, file_id: &str) -> PathBuf {
    dir.join(format!("{file_id}.melf"))
}

impl FeatureSource for FeatureDir {
    fn load(&self, file_id: &str) -> Result<Option<MelSpectrogram>> {
        let path = feature_path(&self.0, file_id);
        if !path.exists() {
            return Ok(None);
        }
        read_melf(path).map(Some)
    }
}

impl FeatureSource for HashMap<String, MelSpectrogram> {
    fn load(&self, file_id: &str) -> Result<Option<MelSpectrogram>> {
        Ok(self.get(file_id).cloned())
    }
}

/// Collects the labeled examples of `task` from `manifests`, in record order.
///
/// Records that do not belong to the task (artifact records for the main
/// task, real records for the artifact task) are skipped.
pub fn build_task_view(
    manifests: &[&Manifest],
    task: Task,
    source: &dyn FeatureSource,
) -> Result<TaskView> {
    let mut examples = Vec::new();
    let mut missing = Vec::new();
    for r in manifests.iter().flat_map(|m| m.records()) {
        let Some(label) = task.target(r.label) else {
            continue;
        };
        match source.load(&r.file_id)? {
            Some(features) => examples.push(LabeledExample {
                file_id: r.file_id.clone(),
                features,
                label,
            }),
            None => missing.push(r.file_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Materialization(missing));
    }
    let view = TaskView { examples };
    match task {
        Task::Adm if view.count_label(1) == 0 => Err(Error::Validation(
            "artifact-detection view has no artifact records".into(),
        )),
        Task::Adm if view.count_label(0) == 0 => Err(Error::Validation(
            "artifact-detection view has no fake records".into(),
        )),
        Task::Main if view.is_empty() => {
            Err(Error::Validation("real/fake view has no records".into()))
        }
        _ => Ok(view),
    }
}
