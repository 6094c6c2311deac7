//! Three-stage training on a synthetic corpus with dynamic band-swap
//! artifacts, reporting held-out accuracy and AUC for each stage.
//!
//! ```text
//! cargo run --release -p antispoof --example toy_protocol [work_dir] [seed]
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use antispoof::artifact_gen::{generate_artifact_set, ArtifactConfig, ArtifactKind, Standardization};
use antispoof::dataset::{build_task_view, split_random, Manifest, Task, TaskView};
use antispoof::metrics::{auc, confusion_at, ScoreSet};
use antispoof::model::{run_protocol, score_view, Detector, ModelConfig};
use antispoof::spectral::{featurize_wav, MelParams, MelSpectrogram};
use antispoof::synth::{toy_protocol_config, write_corpus, SynthConfig};
use rayon::prelude::*;

fn featurize(m: &Manifest, root: &Path, out: &mut HashMap<String, MelSpectrogram>) -> antispoof::Result<()> {
    let params = MelParams::default();
    let feats: Vec<_> = m
        .records()
        .par_iter()
        .map(|r| featurize_wav(r.resolve(root), 3.0, &params).map(|f| (r.file_id.clone(), f)))
        .collect::<antispoof::Result<_>>()?;
    out.extend(feats);
    Ok(())
}

fn evaluate(name: &str, model: &Detector<f32>, view: &TaskView) -> antispoof::Result<()> {
    let scores = score_view(model, view)?;
    let set = ScoreSet::new(scores.into_iter().zip(view.examples.iter().map(|e| e.label)))?;
    let acc = confusion_at(&set, 0.5).accuracy();
    println!("{name:<20} accuracy {acc:.4}  auc {:.4}", auc(&set)?);
    Ok(())
}

fn main() -> antispoof::Result<()> {
    let start = Instant::now();
    let mut args = std::env::args().skip(1);
    let work = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("antispoof-toy"));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let corpus_dir = work.join("corpus");
    let corpus = write_corpus(&corpus_dir, &SynthConfig { seed, ..Default::default() })?;
    let [train, _, test] = split_random(&corpus, [0.7, 0.0, 0.3], seed)?;

    let config = ArtifactConfig::new(ArtifactKind::DynamicFreq, seed);
    let (z_train_dir, z_test_dir) = (work.join("z_train"), work.join("z_test"));
    let z_train = generate_artifact_set(&train, &config, &corpus_dir, &z_train_dir, Standardization::default())?;
    let z_test = generate_artifact_set(&test, &config, &corpus_dir, &z_test_dir, Standardization::default())?;

    let mut feats = HashMap::new();
    featurize(&train, &corpus_dir, &mut feats)?;
    featurize(&test, &corpus_dir, &mut feats)?;
    featurize(&z_train.manifest, &z_train_dir, &mut feats)?;
    featurize(&z_test.manifest, &z_test_dir, &mut feats)?;
    println!("data ready in {:.1?}", start.elapsed());

    let main_train = build_task_view(&[&train], Task::Main, &feats)?;
    let adm_train = build_task_view(&[&train, &z_train.manifest], Task::Adm, &feats)?;
    let main_test = build_task_view(&[&test], Task::Main, &feats)?;
    let adm_test = build_task_view(&[&test, &z_test.manifest], Task::Adm, &feats)?;

    let out = run_protocol(&main_train, &adm_train, ModelConfig::default(), &toy_protocol_config(seed))?;
    println!("trained in {:.1?}", start.elapsed());

    evaluate("baseline real/fake", &out.baseline, &main_test)?;
    evaluate("adm fake/artifact", &out.adm, &adm_test)?;
    evaluate("final real/fake", &out.final_model, &main_test)?;
    Ok(())
}
