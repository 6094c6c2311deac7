//! Small convolutional real/fake detector and its staged training.
//!
//! Architecture, for an `R x C` mel matrix standardized per mel row:
//!
//! ```text
//! conv 3x3, 1 -> 8, ReLU, max-pool 2x2
//! conv 3x3, 8 -> 16, ReLU, max-pool 2x2
//! global average pool                      -> 16      (feature extractor)
//! dense 16 -> 128, ReLU, dropout           -> 128     (embedding)
//! dense 128 -> 1, sigmoid                  -> p(label 1)
//! ```
//!
//! Convolutions use zero "same" padding; pooling floors odd sizes. The
//! network is generic over the float type so the analytic gradients can be
//! checked in `f64` while training runs in `f32`.

mod checkpoint;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::TaskView;
use crate::error::{Error, Result};
use crate::spectral::MelSpectrogram;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, SPFW_MAGIC, SPFW_VERSION};
pub use train::{
    bce_loss, lr_at, run_protocol, train_stage, EpochRecord, History, ProtocolConfig, ProtocolOutput,
    TrainConfig,
};

/// Probability clamp used by the loss.
pub const BCE_EPSILON: f64 = 1e-7;

pub trait Scalar: Float + AddAssign + MulAssign + Sum + Debug + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
fn c<T: Scalar>(v: f64) -> T {
    T::from(v).expect("f64 converts to any Scalar")
}

/// Layer sizes. Input dimensions must match the features fed to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_rows: usize,
    pub input_cols: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_rows: 128,
            input_cols: 94,
            conv1_channels: 8,
            conv2_channels: 16,
            hidden: 128,
        }
    }
}

impl ModelConfig {
    pub fn with_input(rows: usize, cols: usize) -> Self {
        Self {
            input_rows: rows,
            input_cols: cols,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_rows < 4 || self.input_cols < 4 {
            return Err(Error::Config(format!(
                "input {}x{} is too small for two 2x2 pools",
                self.input_rows, self.input_cols
            )));
        }
        if self.conv1_channels == 0 || self.conv2_channels == 0 || self.hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    fn pooled1(&self) -> (usize, usize) {
        (self.input_rows / 2, self.input_cols / 2)
    }

    fn pooled2(&self) -> (usize, usize) {
        let (h, w) = self.pooled1();
        (h / 2, w / 2)
    }

    /// Shapes of the trainable tensors, in [`Param`] order.
    pub fn param_shapes(&self) -> [Vec<usize>; 8] {
        let (c1, c2, h) = (self.conv1_channels, self.conv2_channels, self.hidden);
        [
            vec![c1, 1, 3, 3],
            vec![c1],
            vec![c2, c1, 3, 3],
            vec![c2],
            vec![h, c2],
            vec![h],
            vec![1, h],
            vec![1],
        ]
    }
}

/// Trainable tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Conv1Weight,
    Conv1Bias,
    Conv2Weight,
    Conv2Bias,
    Dense1Weight,
    Dense1Bias,
    Dense2Weight,
    Dense2Bias,
}

impl Param {
    pub const ALL: [Param; 8] = [
        Param::Conv1Weight,
        Param::Conv1Bias,
        Param::Conv2Weight,
        Param::Conv2Bias,
        Param::Dense1Weight,
        Param::Dense1Bias,
        Param::Dense2Weight,
        Param::Dense2Bias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Conv1Weight => "conv1.weight",
            Param::Conv1Bias => "conv1.bias",
            Param::Conv2Weight => "conv2.weight",
            Param::Conv2Bias => "conv2.bias",
            Param::Dense1Weight => "dense1.weight",
            Param::Dense1Bias => "dense1.bias",
            Param::Dense2Weight => "dense2.weight",
            Param::Dense2Bias => "dense2.bias",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Weights carry the L2 penalty; biases do not.
    pub fn is_weight(self) -> bool {
        self.index() % 2 == 0
    }

    pub fn in_extractor(self) -> bool {
        self.index() < 4
    }
}

/// Which tensors a training stage may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    /// Everything trains.
    None,
    /// Convolutions fixed; both dense layers train.
    Extractor,
    /// Only the final dense layer trains.
    AllButLast,
}

impl Freeze {
    pub fn trains(self, p: Param) -> bool {
        match self {
            Freeze::None => true,
            Freeze::Extractor => !p.in_extractor(),
            Freeze::AllButLast => matches!(p, Param::Dense2Weight | Param::Dense2Bias),
        }
    }
}

/// One tensor per [`Param`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: [Vec<T>; 8],
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            tensors: config
                .param_shapes()
                .map(|s| vec![T::zero(); s.iter().product()]),
        }
    }

    pub fn get(&self, p: Param) -> &[T] {
        &self.tensors[p.index()]
    }

    pub fn get_mut(&mut self, p: Param) -> &mut [T] {
        &mut self.tensors[p.index()]
    }
}

/// The detector: per-row input standardization plus trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector<T> {
    config: ModelConfig,
    /// Per mel-row mean and standard deviation of the training features.
    pub input_mean: Vec<T>,
    pub input_std: Vec<T>,
    pub params: ParamSet<T>,
}

/// Activations of the convolutional part, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ExtractorCache<T> {
    /// Standardized input with a one-cell zero border.
    x_pad: Vec<T>,
    /// Conv1 pre-activations, `c1 x H x W`.
    a1: Vec<T>,
    /// Flat index into `a1` of each pool-1 maximum.
    arg1: Vec<usize>,
    /// Pool-1 output with a zero border, `c1 x (H1+2) x (W1+2)`.
    p1_pad: Vec<T>,
    a2: Vec<T>,
    arg2: Vec<usize>,
    /// Global average pool output.
    pub features: Vec<T>,
}

/// Which units are active and which inputs win each pooling window. Within
/// a region of constant pattern the network output is a smooth function of
/// the parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    pool1: Vec<(usize, bool)>,
    pool2: Vec<(usize, bool)>,
    hidden: Vec<bool>,
    clamped: bool,
}

/// Activations of the dense head.
#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    features: Vec<T>,
    hidden_pre: Vec<T>,
    /// Post-ReLU hidden layer, before dropout.
    pub hidden: Vec<T>,
    mask: Vec<T>,
    pub logit: f64,
    /// Unclamped sigmoid of the logit.
    pub probability: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<T: Scalar> Detector<T> {
    /// He-uniform weights, zero biases, identity input standardization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::zeros(&config);
        let shapes = config.param_shapes();
        for p in Param::ALL {
            if !p.is_weight() {
                continue;
            }
            let shape = &shapes[p.index()];
            let fan_in: usize = shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in params.get_mut(p) {
                *w = c(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            config,
            input_mean: vec![T::zero(); config.input_rows],
            input_std: vec![T::one(); config.input_rows],
            params,
        })
    }

    /// A detector with every tensor zero (output 0.5 for any input).
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            input_mean: vec![T::zero(); config.input_rows],
            input_std: vec![T::one(); config.input_rows],
            params: ParamSet::zeros(&config),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Converts every tensor to another float type.
    pub fn cast<U: Scalar>(&self) -> Detector<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| c::<U>(x.to_f64().unwrap())).collect::<Vec<U>>();
        Detector {
            config: self.config,
            input_mean: conv(&self.input_mean),
            input_std: conv(&self.input_std),
            params: ParamSet {
                tensors: std::array::from_fn(|i| conv(&self.params.tensors[i])),
            },
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.tensors.iter().map(Vec::len).sum()
    }

    /// Sets the per-row standardization from every example of `view`.
    pub fn fit_input_stats(&mut self, view: &TaskView) -> Result<()> {
        let rows = self.config.input_rows;
        let mut sum = vec![0.0f64; rows];
        let mut sq = vec![0.0f64; rows];
        let mut count = 0usize;
        for ex in &view.examples {
            self.check_input(&ex.features)?;
            for r in 0..rows {
                for &v in ex.features.row(r) {
                    sum[r] += v as f64;
                    sq[r] += (v as f64) * (v as f64);
                }
            }
            count += ex.features.n_frames;
        }
        if count == 0 {
            return Err(Error::InvalidInput("cannot fit input statistics on an empty view".into()));
        }
        for r in 0..rows {
            let mean = sum[r] / count as f64;
            let var = (sq[r] / count as f64 - mean * mean).max(0.0);
            let std = var.sqrt();
            self.input_mean[r] = c(mean);
            self.input_std[r] = c(if std > 1e-6 { std } else { 1.0 });
        }
        Ok(())
    }

    fn check_input(&self, mel: &MelSpectrogram) -> Result<()> {
        if mel.n_mels != self.config.input_rows || mel.n_frames != self.config.input_cols {
            return Err(Error::Dimension(format!(
                "features are {}x{}, model expects {}x{}",
                mel.n_mels, mel.n_frames, self.config.input_rows, self.config.input_cols
            )));
        }
        Ok(())
    }

    /// Runs the convolutional feature extractor.
    pub fn extract(&self, mel: &MelSpectrogram) -> Result<ExtractorCache<T>> {
        self.check_input(mel)?;
        let cfg = &self.config;
        let (h, w) = (cfg.input_rows, cfg.input_cols);
        let (h1, w1) = cfg.pooled1();
        let (h2, w2) = cfg.pooled2();
        let (c1n, c2n) = (cfg.conv1_channels, cfg.conv2_channels);

        let wp = w + 2;
        let mut x_pad = vec![T::zero(); (h + 2) * wp];
        for r in 0..h {
            let (mean, std) = (self.input_mean[r], self.input_std[r]);
            for (dst, &v) in x_pad[(r + 1) * wp + 1..][..w].iter_mut().zip(mel.row(r)) {
                *dst = (c::<T>(v as f64) - mean) / std;
            }
        }

        let a1 = conv3x3(&x_pad, 1, h, w, self.params.get(Param::Conv1Weight), self.params.get(Param::Conv1Bias), c1n);
        let (p1, arg1) = relu_maxpool(&a1, c1n, h, w);
        let w1p = w1 + 2;
        let mut p1_pad = vec![T::zero(); c1n * (h1 + 2) * w1p];
        for ch in 0..c1n {
            for i in 0..h1 {
                let src = &p1[(ch * h1 + i) * w1..][..w1];
                p1_pad[ch * (h1 + 2) * w1p + (i + 1) * w1p + 1..][..w1].copy_from_slice(src);
            }
        }
        let a2 = conv3x3(&p1_pad, c1n, h1, w1, self.params.get(Param::Conv2Weight), self.params.get(Param::Conv2Bias), c2n);
        let (p2, arg2) = relu_maxpool(&a2, c2n, h1, w1);
        let area = c::<T>((h2 * w2) as f64);
        let features = p2
            .chunks_exact(h2 * w2)
            .map(|ch| ch.iter().copied().sum::<T>() / area)
            .collect();
        Ok(ExtractorCache {
            x_pad,
            a1,
            arg1,
            p1_pad,
            a2,
            arg2,
            features,
        })
    }

    /// Runs the dense head on extracted features. With `dropout` set, hidden
    /// units are dropped with probability `p` and the rest scaled by
    /// `1 / (1 - p)`.
    pub fn head<R: Rng + ?Sized>(&self, features: &[T], dropout: Option<(f64, &mut R)>) -> HeadCache<T> {
        let hidden_n = self.config.hidden;
        let c2n = self.config.conv2_channels;
        let w1 = self.params.get(Param::Dense1Weight);
        let b1 = self.params.get(Param::Dense1Bias);
        let hidden_pre: Vec<T> = (0..hidden_n)
            .map(|k| {
                b1[k]
                    + w1[k * c2n..(k + 1) * c2n]
                        .iter()
                        .zip(features)
                        .map(|(&a, &b)| a * b)
                        .sum::<T>()
            })
            .collect();
        let hidden: Vec<T> = hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
        let mask: Vec<T> = match dropout {
            Some((p, rng)) if p > 0.0 => {
                let keep = c::<T>(1.0 / (1.0 - p));
                (0..hidden_n)
                    .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                    .collect()
            }
            _ => vec![T::one(); hidden_n],
        };
        let w2 = self.params.get(Param::Dense2Weight);
        let logit = self.params.get(Param::Dense2Bias)[0]
            + hidden
                .iter()
                .zip(&mask)
                .zip(w2)
                .map(|((&hv, &m), &w)| hv * m * w)
                .sum::<T>();
        let logit = logit.to_f64().unwrap();
        HeadCache {
            features: features.to_vec(),
            hidden_pre,
            hidden,
            mask,
            logit,
            probability: sigmoid(logit),
        }
    }

    /// Probability of label 1, clamped to `[ε, 1 - ε]`.
    ///
    /// Dropout is active only when `train_mode` is set; otherwise the output
    /// is deterministic and `rng` is not touched.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        mel: &MelSpectrogram,
        train_mode: bool,
        dropout_p: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let ext = self.extract(mel)?;
        let dropout = train_mode.then_some((dropout_p, rng));
        let head = self.head(&ext.features, dropout);
        Ok(clamp_probability(head.probability))
    }

    /// Eval-mode probability of label 1.
    pub fn predict(&self, mel: &MelSpectrogram) -> Result<f64> {
        let ext = self.extract(mel)?;
        Ok(clamp_probability(self.head::<ChaCha8Rng>(&ext.features, None).probability))
    }

    /// Eval-mode activation of the hidden dense layer.
    pub fn embed(&self, mel: &MelSpectrogram) -> Result<Vec<T>> {
        let ext = self.extract(mel)?;
        Ok(self.head::<ChaCha8Rng>(&ext.features, None).hidden)
    }

    /// Eval-mode activation pattern for `mel`.
    pub fn activation_pattern(&self, mel: &MelSpectrogram) -> Result<ActivationPattern> {
        let ext = self.extract(mel)?;
        let head = self.head::<ChaCha8Rng>(&ext.features, None);
        let winners = |arg: &[usize], a: &[T]| arg.iter().map(|&i| (i, a[i] > T::zero())).collect();
        Ok(ActivationPattern {
            pool1: winners(&ext.arg1, &ext.a1),
            pool2: winners(&ext.arg2, &ext.a2),
            hidden: head.hidden_pre.iter().map(|&v| v > T::zero()).collect(),
            clamped: clamp_probability(head.probability) != head.probability,
        })
    }

    /// Accumulates the gradient of `scale * BCE(p, label)` into `grads`.
    ///
    /// `ext` may be `None` when the extractor is frozen. Frozen tensors are
    /// left untouched. When the clamped loss is flat (probability outside
    /// `[ε, 1 - ε]`) nothing is accumulated.
    pub fn backward(
        &self,
        ext: Option<&ExtractorCache<T>>,
        head: &HeadCache<T>,
        label: u8,
        scale: f64,
        freeze: Freeze,
        grads: &mut ParamSet<T>,
    ) {
        let p = head.probability;
        if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&p) {
            return;
        }
        let dz: T = c(scale * (p - label as f64));

        // Final dense layer.
        let w2 = self.params.get(Param::Dense2Weight);
        {
            let gw = grads.get_mut(Param::Dense2Weight);
            for ((g, &h), &m) in gw.iter_mut().zip(&head.hidden).zip(&head.mask) {
                *g += dz * h * m;
            }
        }
        grads.get_mut(Param::Dense2Bias)[0] += dz;
        if !freeze.trains(Param::Dense1Weight) {
            return;
        }

        // Hidden dense layer.
        let c2n = self.config.conv2_channels;
        let w1 = self.params.get(Param::Dense1Weight);
        let mut dfeat = vec![T::zero(); c2n];
        for k in 0..self.config.hidden {
            if head.hidden_pre[k] <= T::zero() {
                continue;
            }
            let dpre = dz * w2[k] * head.mask[k];
            grads.get_mut(Param::Dense1Bias)[k] += dpre;
            let gw = &mut grads.get_mut(Param::Dense1Weight)[k * c2n..(k + 1) * c2n];
            for ch in 0..c2n {
                gw[ch] += dpre * head.features[ch];
                dfeat[ch] += dpre * w1[k * c2n + ch];
            }
        }
        if !freeze.trains(Param::Conv2Weight) {
            return;
        }
        let ext = ext.expect("extractor activations are needed to train the extractor");

        let cfg = &self.config;
        let (h, w) = (cfg.input_rows, cfg.input_cols);
        let (h1, w1n) = cfg.pooled1();
        let (h2, w2n) = cfg.pooled2();
        let c1n = cfg.conv1_channels;
        let w1p = w1n + 2;
        let plane1 = (h1 + 2) * w1p;
        let area = c::<T>((h2 * w2n) as f64);

        // Pool 2 -> conv 2. Pool windows do not overlap, so each conv output
        // receives at most one gradient.
        let k2 = self.params.get(Param::Conv2Weight);
        let mut dp1_pad = vec![T::zero(); c1n * plane1];
        for (ch, &df) in dfeat.iter().enumerate() {
            let g = df / area;
            for &idx in &ext.arg2[ch * h2 * w2n..(ch + 1) * h2 * w2n] {
                if ext.a2[idx] <= T::zero() {
                    continue;
                }
                let rem = idx - ch * h1 * w1n;
                let (i, j) = (rem / w1n, rem % w1n);
                grads.get_mut(Param::Conv2Bias)[ch] += g;
                let gw = grads.get_mut(Param::Conv2Weight);
                for ci in 0..c1n {
                    let base = ci * plane1 + i * w1p + j;
                    let wbase = (ch * c1n + ci) * 9;
                    for di in 0..3 {
                        for dj in 0..3 {
                            let at = base + di * w1p + dj;
                            gw[wbase + di * 3 + dj] += g * ext.p1_pad[at];
                            dp1_pad[at] += g * k2[wbase + di * 3 + dj];
                        }
                    }
                }
            }
        }

        // Pool 1 -> conv 1.
        let wp = w + 2;
        for ch in 0..c1n {
            for (cell, &idx) in ext.arg1[ch * h1 * w1n..(ch + 1) * h1 * w1n].iter().enumerate() {
                let (pi, pj) = (cell / w1n, cell % w1n);
                let g = dp1_pad[ch * plane1 + (pi + 1) * w1p + pj + 1];
                if g == T::zero() || ext.a1[idx] <= T::zero() {
                    continue;
                }
                let rem = idx - ch * h * w;
                let (i, j) = (rem / w, rem % w);
                grads.get_mut(Param::Conv1Bias)[ch] += g;
                let gw = &mut grads.get_mut(Param::Conv1Weight)[ch * 9..(ch + 1) * 9];
                for di in 0..3 {
                    for dj in 0..3 {
                        gw[di * 3 + dj] += g * ext.x_pad[(i + di) * wp + j + dj];
                    }
                }
            }
        }
    }

    /// Adds the gradient of `(l2 / 2) * Σ w²` over trainable weights.
    pub fn add_l2_gradient(&self, l2: f64, freeze: Freeze, grads: &mut ParamSet<T>) {
        let l2: T = c(l2);
        for p in Param::ALL {
            if p.is_weight() && freeze.trains(p) {
                for (g, &w) in grads.get_mut(p).iter_mut().zip(self.params.get(p)) {
                    *g += l2 * w;
                }
            }
        }
    }

    /// `(l2 / 2) * Σ w²` over trainable weights.
    pub fn l2_penalty(&self, l2: f64, freeze: Freeze) -> f64 {
        let sum: f64 = Param::ALL
            .iter()
            .filter(|p| p.is_weight() && freeze.trains(**p))
            .flat_map(|p| self.params.get(*p))
            .map(|w| w.to_f64().unwrap().powi(2))
            .sum();
        0.5 * l2 * sum
    }

    /// Eval-mode mean BCE over `batch` plus the L2 penalty, and its exact
    /// gradient.
    pub fn loss_and_gradients(
        &self,
        batch: &[(&MelSpectrogram, u8)],
        l2: f64,
        freeze: Freeze,
    ) -> Result<(f64, ParamSet<T>)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut grads = ParamSet::zeros(&self.config);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(mel, label) in batch {
            let ext = self.extract(mel)?;
            let head = self.head::<ChaCha8Rng>(&ext.features, None);
            loss += scale * bce_loss(head.probability, label);
            self.backward(Some(&ext), &head, label, scale, freeze, &mut grads);
        }
        self.add_l2_gradient(l2, freeze, &mut grads);
        Ok((loss + self.l2_penalty(l2, freeze), grads))
    }
}

/// Eval-mode scores of every example of `view`, in order.
pub fn score_view(model: &Detector<f32>, view: &TaskView) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    view.examples.par_iter().map(|e| model.predict(&e.features)).collect()
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
}

/// 3x3 "same" convolution over zero-bordered planes.
fn conv3x3<T: Scalar>(
    input_pad: &[T],
    in_channels: usize,
    h: usize,
    w: usize,
    weights: &[T],
    bias: &[T],
    out_channels: usize,
) -> Vec<T> {
    let wp = w + 2;
    let plane = (h + 2) * wp;
    let mut out = vec![T::zero(); out_channels * h * w];
    for (co, out_plane) in out.chunks_exact_mut(h * w).enumerate() {
        out_plane.fill(bias[co]);
        for ci in 0..in_channels {
            let src = &input_pad[ci * plane..(ci + 1) * plane];
            for di in 0..3 {
                for dj in 0..3 {
                    let k = weights[(co * in_channels + ci) * 9 + di * 3 + dj];
                    for i in 0..h {
                        let row_in = &src[(i + di) * wp + dj..][..w];
                        let row_out = &mut out_plane[i * w..(i + 1) * w];
                        for (o, &x) in row_out.iter_mut().zip(row_in) {
                            *o += k * x;
                        }
                    }
                }
            }
        }
    }
    out
}

/// ReLU followed by 2x2 max pooling. Returns pooled values and, per pooled
/// cell, the flat index of the winning input (first maximum wins).
fn relu_maxpool<T: Scalar>(a: &[T], channels: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut vals = Vec::with_capacity(channels * ph * pw);
    let mut args = Vec::with_capacity(channels * ph * pw);
    for ch in 0..channels {
        let base = ch * h * w;
        for i in 0..ph {
            for j in 0..pw {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if a[idx] > a[best] {
                        best = idx;
                    }
                }
                vals.push(a[best].max(T::zero()));
                args.push(best);
            }
        }
    }
    (vals, args)
}
