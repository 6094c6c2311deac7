//! Subcommand implementations over the work-dir layout:
//!
//! ```text
//! manifests/all.tsv, {train,val,test}.tsv, artifacts_<split>.tsv
//! artifacts/<split>/<artifact_id>.wav, provenance.jsonl
//! features/<file_id>.melf
//! checkpoints/{baseline,adm,final}.spfw, <stage>_history.csv
//! eval/<checkpoint>_<split>_<task>.{scores.csv,json,txt}
//! embed/<checkpoint>_<split>_<task>.csv
//! ```

use std::path::{Path, PathBuf};

use antispoof::artifact_gen::generate_artifact_set;
use antispoof::dataset::{
    build_task_view, import_asvspoof_protocol, parse_manifest, split_random, FeatureDir, Manifest, SampleRecord,
    Split, Task, TaskView,
};
use antispoof::metrics::{report, write_embeddings_csv, write_scores_csv, ScoreSet};
use antispoof::model::{
    load_checkpoint, run_protocol, save_checkpoint, score_view, train_stage, Detector, Freeze, History,
    ModelConfig,
};
use antispoof::spectral::{featurize_wav, write_melf};
use antispoof::synth::{write_corpus, SynthConfig};
use antispoof::Error;
use rayon::prelude::*;

use crate::config::PipelineConfig;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_MISSING: u8 = 4;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn validation(error: anyhow::Error) -> Self {
        Self { code: EXIT_VALIDATION, error }
    }

    pub fn data(error: anyhow::Error) -> Self {
        Self { code: EXIT_DATA, error }
    }

    pub fn missing(path: &Path) -> Self {
        Self {
            code: EXIT_MISSING,
            error: anyhow::anyhow!("missing prerequisite: {}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Materialization(_) => EXIT_MISSING,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
            Error::Format(_) | Error::Parse(_) | Error::Io { .. } => EXIT_DATA,
            _ => EXIT_VALIDATION,
        };
        let error = match e {
            Error::Materialization(ids) => anyhow::anyhow!(
                "missing features for {} records (run `featurize`): {}",
                ids.len(),
                ids.join(", ")
            ),
            other => other.into(),
        };
        Self { code, error }
    }
}

type CmdResult = Result<(), Failure>;

pub enum ImportSource {
    Asvspoof {
        protocol: PathBuf,
        audio_root: Option<PathBuf>,
        ext: String,
    },
    Manifest(PathBuf),
    Synthetic {
        speakers: usize,
        per_speaker: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageName {
    Baseline,
    Adm,
    Final,
}

impl StageName {
    fn as_str(self) -> &'static str {
        match self {
            StageName::Baseline => "baseline",
            StageName::Adm => "adm",
            StageName::Final => "final",
        }
    }
}

pub struct Context<'a> {
    config: &'a PipelineConfig,
    work: PathBuf,
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::missing(path))
    }
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

impl<'a> Context<'a> {
    pub fn new(config: &'a PipelineConfig) -> Self {
        Self {
            config,
            work: config.paths.work_dir.clone(),
        }
    }

    fn manifests(&self) -> PathBuf {
        self.work.join("manifests")
    }

    fn all_manifest(&self) -> PathBuf {
        self.manifests().join("all.tsv")
    }

    fn split_manifest(&self, split: Split) -> PathBuf {
        self.manifests().join(format!("{split}.tsv"))
    }

    fn artifact_manifest(&self, split: Split) -> PathBuf {
        self.manifests().join(format!("artifacts_{split}.tsv"))
    }

    fn artifact_dir(&self, split: Split) -> PathBuf {
        self.work.join("artifacts").join(split.as_str())
    }

    fn features(&self) -> PathBuf {
        self.work.join("features")
    }

    fn checkpoints(&self) -> PathBuf {
        self.work.join("checkpoints")
    }

    fn checkpoint(&self, stage: StageName) -> PathBuf {
        self.checkpoints().join(format!("{}.spfw", stage.as_str()))
    }

    fn load_manifest(&self, path: &Path) -> Result<Manifest, Failure> {
        require(path)?;
        Ok(parse_manifest(path)?)
    }

    /// Split manifest plus its artifact manifest when one exists. Corpus
    /// records resolve against the corpus root, artifact records against the
    /// work dir.
    fn split_sources(&self, split: Split) -> Result<Vec<(Manifest, PathBuf)>, Failure> {
        let mut out = vec![(
            self.load_manifest(&self.split_manifest(split))?,
            self.config.paths.corpus_root.clone(),
        )];
        let art = self.artifact_manifest(split);
        if art.exists() {
            out.push((parse_manifest(&art)?, self.work.clone()));
        }
        Ok(out)
    }

    pub fn import(&self, source: ImportSource) -> CmdResult {
        let corpus_root = &self.config.paths.corpus_root;
        let manifest = match source {
            ImportSource::Asvspoof {
                protocol,
                audio_root,
                ext,
            } => {
                require(&protocol)?;
                let root = audio_root.unwrap_or_else(|| corpus_root.clone());
                let root = std::path::absolute(&root).map_err(|e| Error::io(&root, e))?;
                import_asvspoof_protocol(&protocol, &root, &ext)?
            }
            ImportSource::Manifest(path) => self.load_manifest(&path)?,
            ImportSource::Synthetic {
                speakers,
                per_speaker,
            } => write_corpus(
                corpus_root,
                &SynthConfig {
                    speakers,
                    real_per_speaker: per_speaker,
                    fake_per_speaker: per_speaker,
                    seconds: self.config.standardization.seconds,
                    sample_rate: self.config.standardization.sample_rate,
                    seed: self.config.seed,
                    ..SynthConfig::default()
                },
            )?,
        };
        create_dir(&self.manifests())?;
        manifest.write_tsv(self.all_manifest())?;
        println!(
            "imported {} records ({} real, {} fake)",
            manifest.len(),
            manifest.count(antispoof::dataset::Label::Real),
            manifest.count(antispoof::dataset::Label::Fake)
        );
        Ok(())
    }

    pub fn split(&self) -> CmdResult {
        let all = self.load_manifest(&self.all_manifest())?;
        let parts = split_random(&all, self.config.split.fractions, self.config.seed)?;
        for (split, m) in Split::ALL.into_iter().zip(parts) {
            m.write_tsv(self.split_manifest(split))?;
            println!("{split}: {} records", m.len());
        }
        Ok(())
    }

    pub fn gen(&self, splits: &[Split]) -> CmdResult {
        let config = self.config.artifact_config()?;
        let mut failed = Vec::new();
        for &split in splits {
            let manifest = self.load_manifest(&self.split_manifest(split))?;
            let dir = self.artifact_dir(split);
            let out = generate_artifact_set(
                &manifest,
                &config,
                &self.config.paths.corpus_root,
                &dir,
                self.config.standardization(),
            )?;
            let rel = Path::new("artifacts").join(split.as_str());
            let records = out
                .manifest
                .into_records()
                .into_iter()
                .map(|r| SampleRecord {
                    path: rel.join(&r.path),
                    ..r
                })
                .collect();
            Manifest::new(records, Some(split))?.write_tsv(self.artifact_manifest(split))?;
            println!(
                "{split}: {} generated, {} skipped, {} failed",
                out.summary.generated,
                out.summary.skipped.len(),
                out.summary.failed.len()
            );
            failed.extend(out.summary.failed);
        }
        if failed.is_empty() {
            Ok(())
        } else {
            let lines: Vec<String> = failed.iter().map(|(id, why)| format!("{id}: {why}")).collect();
            Err(Failure::data(anyhow::anyhow!(
                "{} clips could not be processed:\n{}",
                failed.len(),
                lines.join("\n")
            )))
        }
    }

    pub fn featurize(&self, splits: &[Split]) -> CmdResult {
        let params = self.config.mel_params();
        let seconds = self.config.standardization.seconds;
        let dir = self.features();
        create_dir(&dir)?;
        let mut jobs: Vec<(SampleRecord, PathBuf)> = Vec::new();
        for &split in splits {
            for (m, root) in self.split_sources(split)? {
                jobs.extend(m.into_records().into_iter().map(|r| (r, root.clone())));
            }
        }
        let failed: Vec<String> = jobs
            .par_iter()
            .filter_map(|(r, root)| {
                let result = featurize_wav(r.resolve(root), seconds, &params)
                    .and_then(|m| write_melf(&m, antispoof::dataset::feature_path(&dir, &r.file_id)));
                result.err().map(|e| format!("{}: {e}", r.file_id))
            })
            .collect();
        println!("featurized {} of {} records", jobs.len() - failed.len(), jobs.len());
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::data(anyhow::anyhow!(
                "{} clips could not be featurized:\n{}",
                failed.len(),
                failed.join("\n")
            )))
        }
    }

    fn model_config(&self) -> ModelConfig {
        let params = self.config.mel_params();
        let n = (self.config.standardization.seconds * self.config.standardization.sample_rate as f64).round();
        ModelConfig::with_input(params.n_mels, params.n_frames(n as usize))
    }

    fn view(&self, split: Split, task: Task) -> Result<TaskView, Failure> {
        let sources = self.split_sources(split)?;
        let manifests: Vec<&Manifest> = sources.iter().map(|(m, _)| m).collect();
        require(&self.features())?;
        Ok(build_task_view(&manifests, task, &FeatureDir(self.features()))?)
    }

    fn save_stage(&self, stage: StageName, model: &Detector<f32>, history: &History) -> CmdResult {
        save_checkpoint(model, &self.checkpoint(stage))?;
        let hist = self.checkpoints().join(format!("{}_history.csv", stage.as_str()));
        history.write_csv(&hist)?;
        println!(
            "{}: final loss {:.6} -> {}",
            stage.as_str(),
            history.final_loss().unwrap_or(f64::NAN),
            self.checkpoint(stage).display()
        );
        Ok(())
    }

    pub fn train(&self, stage: Option<StageName>) -> CmdResult {
        let protocol = self.config.protocol();
        create_dir(&self.checkpoints())?;
        let main_view = || self.view(Split::Train, Task::Main);
        let adm_view = || {
            require(&self.artifact_manifest(Split::Train))?;
            self.view(Split::Train, Task::Adm)
        };
        let load = |s: StageName| -> Result<Detector<f32>, Failure> {
            let path = self.checkpoint(s);
            require(&path)?;
            Ok(load_checkpoint(&path)?)
        };
        match stage {
            None => {
                let (main, adm) = (main_view()?, adm_view()?);
                let out = run_protocol(&main, &adm, self.model_config(), &protocol)?;
                let [h1, h2, h3] = &out.histories;
                self.save_stage(StageName::Baseline, &out.baseline, h1)?;
                self.save_stage(StageName::Adm, &out.adm, h2)?;
                self.save_stage(StageName::Final, &out.final_model, h3)
            }
            Some(StageName::Baseline) => {
                let main = main_view()?;
                let mut init = Detector::<f32>::new(self.model_config(), protocol.init_seed)?;
                init.fit_input_stats(&main)?;
                let (m, h) = train_stage(&init, &main, &protocol.baseline, Freeze::None)?;
                self.save_stage(StageName::Baseline, &m, &h)
            }
            Some(StageName::Adm) => {
                let start = load(StageName::Baseline)?;
                let (m, h) = train_stage(&start, &adm_view()?, &protocol.adm, Freeze::Extractor)?;
                self.save_stage(StageName::Adm, &m, &h)
            }
            Some(StageName::Final) => {
                let start = load(StageName::Adm)?;
                let (m, h) = train_stage(&start, &main_view()?, &protocol.finetune, Freeze::None)?;
                self.save_stage(StageName::Final, &m, &h)
            }
        }
    }

    /// Loads a checkpoint by stage name or path and picks the default task.
    fn resolve_checkpoint(&self, name: &str, task: Option<Task>) -> Result<(Detector<f32>, String, Task), Failure> {
        let (path, stem) = match name {
            "baseline" => (self.checkpoint(StageName::Baseline), "baseline".to_string()),
            "adm" => (self.checkpoint(StageName::Adm), "adm".to_string()),
            "final" => (self.checkpoint(StageName::Final), "final".to_string()),
            other => {
                let p = PathBuf::from(other);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into());
                (p, stem)
            }
        };
        require(&path)?;
        let model = load_checkpoint(&path)?;
        let task = task.unwrap_or(if stem == "adm" { Task::Adm } else { Task::Main });
        Ok((model, stem, task))
    }

    pub fn eval(&self, checkpoint: &str, split: Split, task: Option<Task>) -> CmdResult {
        let (model, stem, task) = self.resolve_checkpoint(checkpoint, task)?;
        let view = self.view(split, task)?;
        let scores = score_view(&model, &view)?;
        let rows: Vec<(String, f64, u8)> = view
            .examples
            .iter()
            .zip(&scores)
            .map(|(e, &s)| (e.file_id.clone(), s, e.label))
            .collect();
        let dir = self.work.join("eval");
        create_dir(&dir)?;
        let base = format!("{stem}_{split}_{}", task_name(task));
        write_scores_csv(&rows, &dir.join(format!("{base}.scores.csv")))?;
        let set = ScoreSet::new(rows.iter().map(|r| (r.1, r.2)))?;
        let r = report(&set, &dir.join(format!("{base}.json")), task.positive().as_str())?;
        print!("{}", r.to_table(task.positive().as_str()));
        Ok(())
    }

    pub fn embed(&self, checkpoint: &str, split: Split, task: Option<Task>) -> CmdResult {
        let (model, stem, task) = self.resolve_checkpoint(checkpoint, task)?;
        let view = self.view(split, task)?;
        let rows = view
            .examples
            .par_iter()
            .map(|e| Ok((e.file_id.clone(), e.label, model.embed(&e.features)?)))
            .collect::<antispoof::Result<Vec<_>>>()?;
        let dir = self.work.join("embed");
        create_dir(&dir)?;
        let path = dir.join(format!("{stem}_{split}_{}.csv", task_name(task)));
        write_embeddings_csv(&rows, &path)?;
        println!("{} embeddings -> {}", rows.len(), path.display());
        Ok(())
    }
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Main => "main",
        Task::Adm => "adm",
    }
}
