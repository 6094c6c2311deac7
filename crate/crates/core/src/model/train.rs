use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{clamp_probability, Detector, ExtractorCache, Freeze, ModelConfig, Param, ParamSet};
use crate::dataset::TaskView;
use crate::error::{Error, Result};

/// Binary cross-entropy of a probability clamped to `[ε, 1 - ε]`.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = clamp_probability(p);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// SGD hyperparameters for one training stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub momentum: f64,
    pub l2: f64,
    pub dropout_p: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr0: 1e-3,
            decay_every: 10,
            decay_factor: 0.5,
            momentum: 0.9,
            l2: 1e-4,
            dropout_p: 0.5,
            batch: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.epochs > 0
            && self.lr0 > 0.0
            && self.decay_every > 0
            && self.decay_factor > 0.0
            && self.batch > 0
            && self.l2 >= 0.0
            && (0.0..1.0).contains(&self.momentum);
        if !positive || !self.lr0.is_finite() || !self.l2.is_finite() {
            return Err(Error::Config(format!("invalid training configuration {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} is outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

/// Learning rate in effect during `epoch` (zero-based).
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr0 * config.decay_factor.powi((epoch / config.decay_every) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss, L2 penalty included.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,lr\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.loss, r.lr);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.loss)
    }
}

/// What a sample contributes before the trainable part of the network.
enum Input<'a> {
    Raw(&'a crate::spectral::MelSpectrogram),
    Features(Vec<f32>),
}

/// Trains a copy of `model` on `view` and returns it with its loss history.
///
/// Examples are reshuffled every epoch from `config.seed`. Dropout masks are
/// drawn from per-sample seeds taken from the same stream, so the result does
/// not depend on how many threads evaluate a batch.
pub fn train_stage(
    model: &Detector<f32>,
    view: &TaskView,
    config: &TrainConfig,
    freeze: Freeze,
) -> Result<(Detector<f32>, History)> {
    config.validate()?;
    if view.examples.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty view".into()));
    }
    let mut model = model.clone();
    let inputs: Vec<Input> = if freeze.trains(Param::Conv1Weight) {
        view.examples.iter().map(|e| Input::Raw(&e.features)).collect()
    } else {
        view.examples
            .par_iter()
            .map(|e| model.extract(&e.features).map(|c| Input::Features(c.features)))
            .collect::<Result<_>>()?
    };
    if let Some(Input::Raw(m)) = inputs.first() {
        model.check_input(m)?;
    }

    let cfg = *model.config();
    let mut velocity = ParamSet::<f32>::zeros(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = History::default();

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch) {
            let seeds: Vec<u64> = chunk.iter().map(|_| rng.random()).collect();
            let scale = 1.0 / chunk.len() as f64;
            let per_sample: Vec<(f64, ParamSet<f32>)> = chunk
                .par_iter()
                .zip(&seeds)
                .map(|(&i, &seed)| sample_gradient(&model, &inputs[i], view.examples[i].label, scale, config.dropout_p, seed, freeze))
                .collect::<Result<_>>()?;
            let mut grads = ParamSet::<f32>::zeros(&cfg);
            let mut bce = 0.0;
            for (l, g) in per_sample {
                bce += l;
                for p in Param::ALL.into_iter().filter(|p| freeze.trains(*p)) {
                    for (a, b) in grads.get_mut(p).iter_mut().zip(g.get(p)) {
                        *a += *b;
                    }
                }
            }
            model.add_l2_gradient(config.l2, freeze, &mut grads);
            loss_sum += bce * scale + model.l2_penalty(config.l2, freeze);
            batches += 1;

            let mu = config.momentum as f32;
            let lr32 = lr as f32;
            for p in Param::ALL.into_iter().filter(|p| freeze.trains(*p)) {
                let v = velocity.get_mut(p);
                let g = grads.get(p);
                let w = model.params.get_mut(p);
                for k in 0..w.len() {
                    v[k] = mu * v[k] + g[k];
                    w[k] -= lr32 * v[k];
                }
            }
        }
        let loss = loss_sum / batches as f64;
        log::debug!("epoch {epoch}: loss {loss:.6} lr {lr:e}");
        history.epochs.push(EpochRecord { epoch, loss, lr });
    }
    Ok((model, history))
}

fn sample_gradient(
    model: &Detector<f32>,
    input: &Input,
    label: u8,
    scale: f64,
    dropout_p: f64,
    seed: u64,
    freeze: Freeze,
) -> Result<(f64, ParamSet<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext: Option<ExtractorCache<f32>>;
    let features = match input {
        Input::Raw(m) => {
            ext = Some(model.extract(m)?);
            &ext.as_ref().unwrap().features
        }
        Input::Features(f) => {
            ext = None;
            f
        }
    };
    let head = model.head(features, Some((dropout_p, &mut rng)));
    let mut grads = ParamSet::zeros(model.config());
    model.backward(ext.as_ref(), &head, label, scale, freeze, &mut grads);
    Ok((bce_loss(head.probability, label), grads))
}

/// Models and histories of the three training stages.
#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub baseline: Detector<f32>,
    pub adm: Detector<f32>,
    pub final_model: Detector<f32>,
    /// Baseline, ADM and final stage histories.
    pub histories: [History; 3],
}

/// Hyperparameters of each training stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub baseline: TrainConfig,
    pub adm: TrainConfig,
    pub finetune: TrainConfig,
    /// Seed of the initial weights.
    pub init_seed: u64,
}

impl ProtocolConfig {
    /// The same hyperparameters for every stage, with the seed offset per
    /// stage so shuffles differ.
    pub fn uniform(config: TrainConfig) -> Self {
        let stage = |k: u64| TrainConfig {
            seed: config.seed.wrapping_add(k),
            ..config
        };
        Self {
            baseline: stage(1),
            adm: stage(2),
            finetune: stage(3),
            init_seed: config.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.adm.validate()?;
        self.finetune.validate()
    }
}

/// Three-stage training.
///
/// 1. Real vs fake on `main`, everything trainable.
/// 2. Fake vs artifact on `adm`, starting from stage 1 with the extractor frozen.
/// 3. Real vs fake on `main` again, starting from stage 2, everything trainable.
///
/// Input standardization is fitted once on `main` and kept by every stage.
pub fn run_protocol(
    main: &TaskView,
    adm: &TaskView,
    model_config: ModelConfig,
    config: &ProtocolConfig,
) -> Result<ProtocolOutput> {
    config.validate()?;
    let mut init = Detector::<f32>::new(model_config, config.init_seed)?;
    init.fit_input_stats(main)?;
    log::info!("stage 1: {} examples", main.examples.len());
    let (baseline, h1) = train_stage(&init, main, &config.baseline, Freeze::None)?;
    log::info!("stage 2: {} examples", adm.examples.len());
    let (adm_model, h2) = train_stage(&baseline, adm, &config.adm, Freeze::Extractor)?;
    log::info!("stage 3: {} examples", main.examples.len());
    let (final_model, h3) = train_stage(&adm_model, main, &config.finetune, Freeze::None)?;
    Ok(ProtocolOutput {
        baseline,
        adm: adm_model,
        final_model,
        histories: [h1, h2, h3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledExample;
    use crate::spectral::MelSpectrogram;

    fn toy_view() -> TaskView {
        let (rows, cols) = (8, 8);
        let make = |v: f32, label: u8, id: &str| LabeledExample {
            file_id: id.into(),
            features: MelSpectrogram::new(
                rows,
                cols,
                (0..rows * cols).map(|i| v + (i % 3) as f32).collect(),
            )
            .unwrap(),
            label,
        };
        TaskView {
            examples: vec![make(-60.0, 0, "a"), make(-10.0, 1, "b")],
        }
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.0, 1) - 16.118_095_650_958_32).abs() < 1e-9);
        assert!(bce_loss(1.0, 1) < 2e-7);
        assert!((bce_loss(0.25, 0) + 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(&c, 0), 1e-3);
        assert_eq!(lr_at(&c, 9), 1e-3);
        assert_eq!(lr_at(&c, 10), 5e-4);
        assert_eq!(lr_at(&c, 20), 2.5e-4);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { dropout_p: 1.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { batch: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn empty_view_is_rejected() {
        let m = Detector::<f32>::new(ModelConfig::with_input(8, 8), 0).unwrap();
        let err = train_stage(&m, &TaskView { examples: vec![] }, &TrainConfig::default(), Freeze::None);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn separable_loss_decreases() {
        let view = toy_view();
        let mut m = Detector::<f32>::new(ModelConfig::with_input(8, 8), 1).unwrap();
        m.fit_input_stats(&view).unwrap();
        let cfg = TrainConfig { epochs: 5, dropout_p: 0.0, lr0: 1e-2, ..Default::default() };
        let (_, h) = train_stage(&m, &view, &cfg, Freeze::None).unwrap();
        let losses: Vec<f64> = h.epochs.iter().map(|r| r.loss).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn freeze_modes_keep_tensors() {
        let view = toy_view();
        let m = Detector::<f32>::new(ModelConfig::with_input(8, 8), 2).unwrap();
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        for freeze in [Freeze::None, Freeze::Extractor, Freeze::AllButLast] {
            let (t, h) = train_stage(&m, &view, &cfg, freeze).unwrap();
            assert_eq!(h.epochs.len(), 3);
            for p in Param::ALL {
                let same = t.params.get(p) == m.params.get(p);
                assert_eq!(same, !freeze.trains(p), "{freeze:?} {}", p.name());
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let view = toy_view();
        let m = Detector::<f32>::new(ModelConfig::with_input(8, 8), 3).unwrap();
        let cfg = TrainConfig { epochs: 4, seed: 11, ..Default::default() };
        let a = train_stage(&m, &view, &cfg, Freeze::None).unwrap();
        let b = train_stage(&m, &view, &cfg, Freeze::None).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn history_csv() {
        let h = History {
            epochs: vec![EpochRecord { epoch: 0, loss: 0.5, lr: 1e-3 }],
        };
        assert_eq!(h.to_csv(), "epoch,loss,lr\n0,0.5,0.001\n");
    }
}
