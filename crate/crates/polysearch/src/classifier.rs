//! Frozen feature extraction plus a trainable linear softmax head.
//!
//! The head is fine-tuned for a handful of epochs with mini-batch gradient
//! descent (classical momentum, decoupled weight decay); each training
//! sample is policy-augmented with a fresh draw every epoch. Evaluation
//! never augments. A policy's fitness is the mean-per-class accuracy of the
//! fine-tuned head on the validation split.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{apply_policy, CategoryOrder, Image};
use crate::dataset::{LabeledImageDataset, Split};
use crate::metrics::{mpca, ConfusionMatrix, MetricsError};
use crate::policy::PolicyMatrix;
use crate::seeding::mix_seed;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("invalid HOG parameters: {0}")]
    InvalidHog(String),
    #[error(
        "image {width}x{height} incompatible with extractor (cell {cell} px, {block} cells/block)"
    )]
    IncompatibleDims {
        width: u32,
        height: u32,
        cell: u32,
        block: u32,
    },
    #[error("feature length {got} does not match head input dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {class:?} has no samples in the training split")]
    EmptyClass { class: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("failed to access head file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse head file {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// HOG configuration: square cells, square blocks of cells, block stride of
/// one cell, unsigned gradients, L2 block normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogParams {
    pub cell_size: u32,
    pub num_bins: usize,
    pub block_cells: u32,
    pub epsilon: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell_size: 8,
            num_bins: 9,
            block_cells: 2,
            epsilon: 1e-6,
        }
    }
}

/// Deterministic frozen feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureExtractor {
    /// Flattened pixels scaled to [0, 1].
    RawPixels,
    Hog(HogParams),
}

impl FeatureExtractor {
    pub fn output_dim(&self, width: u32, height: u32) -> Result<usize, ClassifierError> {
        match self {
            FeatureExtractor::RawPixels => {
                Ok(width as usize * height as usize * Image::CHANNELS)
            }
            FeatureExtractor::Hog(p) => {
                let (bx, by) = hog_blocks(p, width, height)?;
                Ok(bx * by * (p.block_cells * p.block_cells) as usize * p.num_bins)
            }
        }
    }
}

fn hog_blocks(p: &HogParams, width: u32, height: u32) -> Result<(usize, usize), ClassifierError> {
    if p.cell_size == 0 || p.num_bins == 0 || p.block_cells == 0 {
        return Err(ClassifierError::InvalidHog(
            "cell_size, num_bins, and block_cells must be positive".into(),
        ));
    }
    if !(p.epsilon > 0.0) {
        return Err(ClassifierError::InvalidHog("epsilon must be positive".into()));
    }
    let incompatible = ClassifierError::IncompatibleDims {
        width,
        height,
        cell: p.cell_size,
        block: p.block_cells,
    };
    if width % p.cell_size != 0 || height % p.cell_size != 0 {
        return Err(incompatible);
    }
    let cells_x = (width / p.cell_size) as usize;
    let cells_y = (height / p.cell_size) as usize;
    if cells_x < p.block_cells as usize || cells_y < p.block_cells as usize {
        return Err(incompatible);
    }
    Ok((
        cells_x - p.block_cells as usize + 1,
        cells_y - p.block_cells as usize + 1,
    ))
}

/// Extracts the feature vector for one image.
pub fn extract_features(img: &Image, fe: &FeatureExtractor) -> Result<Vec<f64>, ClassifierError> {
    match fe {
        FeatureExtractor::RawPixels => {
            Ok(img.pixels().iter().map(|&v| v as f64 / 255.0).collect())
        }
        FeatureExtractor::Hog(p) => hog_features(img, p),
    }
}

fn hog_features(img: &Image, p: &HogParams) -> Result<Vec<f64>, ClassifierError> {
    let (blocks_x, blocks_y) = hog_blocks(p, img.width(), img.height())?;
    let w = img.width() as i64;
    let h = img.height() as i64;

    let lum = |x: i64, y: i64| -> f64 {
        let px = img.pixel(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32);
        0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
    };

    // Cell histograms with bilinear voting between neighboring unsigned
    // orientation bins.
    let cells_x = (img.width() / p.cell_size) as usize;
    let cells_y = (img.height() / p.cell_size) as usize;
    let mut cells = vec![vec![0.0f64; p.num_bins]; cells_x * cells_y];
    let bin_width = 180.0 / p.num_bins as f64;
    for y in 0..h {
        for x in 0..w {
            let gx = lum(x + 1, y) - lum(x - 1, y);
            let gy = lum(x, y + 1) - lum(x, y - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let t = angle / bin_width - 0.5;
            let lower = t.floor();
            let frac = t - lower;
            let b0 = (lower as i64).rem_euclid(p.num_bins as i64) as usize;
            let b1 = (b0 + 1) % p.num_bins;
            let cell =
                (y as u32 / p.cell_size) as usize * cells_x + (x as u32 / p.cell_size) as usize;
            cells[cell][b0] += mag * (1.0 - frac);
            cells[cell][b1] += mag * frac;
        }
    }

    // Overlapping blocks, L2-normalized with the epsilon guard; an all-zero
    // block stays all-zero.
    let bc = p.block_cells as usize;
    let mut features = Vec::with_capacity(blocks_x * blocks_y * bc * bc * p.num_bins);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let start = features.len();
            for cy in 0..bc {
                for cx in 0..bc {
                    features.extend_from_slice(&cells[(by + cy) * cells_x + (bx + cx)]);
                }
            }
            let norm_sq: f64 = features[start..].iter().map(|v| v * v).sum();
            let norm = (norm_sq + p.epsilon * p.epsilon).sqrt();
            for v in &mut features[start..] {
                *v /= norm;
            }
        }
    }
    Ok(features)
}

/// The trainable affine-plus-softmax classification layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    num_classes: usize,
    input_dim: usize,
    /// Row-major, one row of `input_dim` weights per class.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(num_classes: usize, input_dim: usize) -> Self {
        Self {
            num_classes,
            input_dim,
            weights: vec![0.0; num_classes * input_dim],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.input_dim..(class + 1) * self.input_dim]
    }

    fn scores(&self, features: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if features.len() != self.input_dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok((0..self.num_classes)
            .map(|c| {
                self.weight_row(c)
                    .iter()
                    .zip(features)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + self.bias[c]
            })
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// JSON checkpoint with a dims header; load validates shape consistency.
    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let text = serde_json::to_string(self).expect("head serializes");
        fs::write(path, text).map_err(|source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = fs::read_to_string(path).map_err(|source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let head: Self = serde_json::from_str(&text).map_err(|source| ClassifierError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        if head.weights.len() != head.num_classes * head.input_dim
            || head.bias.len() != head.num_classes
        {
            return Err(ClassifierError::InvalidConfig(format!(
                "head file {} has inconsistent dimensions",
                path.display()
            )));
        }
        Ok(head)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 256,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs < 1 {
            return Err(ClassifierError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(ClassifierError::InvalidConfig("batch_size must be >= 1".into()));
        }
        // learning_rate 0 is allowed: it makes training a no-op, which the
        // no-update contract relies on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ClassifierError::InvalidConfig(
                "momentum must be in [0, 1)".into(),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ClassifierError::InvalidConfig(
                "weight_decay must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Softmax with max subtraction; output sums to 1 for all finite scores.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Class distribution for one feature vector.
pub fn predict(features: &[f64], head: &LinearHead) -> Result<Vec<f64>, ClassifierError> {
    Ok(softmax(&head.scores(features)?))
}

/// Argmax label; ties go to the lowest class index.
pub fn predict_label(features: &[f64], head: &LinearHead) -> Result<usize, ClassifierError> {
    let scores = head.scores(features)?;
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Mean categorical cross-entropy of the head over a batch.
pub fn cross_entropy_loss(
    features: &[Vec<f64>],
    labels: &[usize],
    head: &LinearHead,
) -> Result<f64, ClassifierError> {
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let p = predict(x, head)?;
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
    }
    Ok(loss / features.len() as f64)
}

/// Analytic gradients of the mean cross-entropy with respect to weights and
/// bias, plus the batch loss (computed from the same softmax pass).
pub fn ce_gradients(
    features: &[Vec<f64>],
    labels: &[usize],
    head: &LinearHead,
) -> Result<(Vec<f64>, Vec<f64>, f64), ClassifierError> {
    let c = head.num_classes;
    let d = head.input_dim;
    let mut grad_w = vec![0.0; c * d];
    let mut grad_b = vec![0.0; c];
    let mut loss = 0.0;
    let n = features.len() as f64;
    for (x, &y) in features.iter().zip(labels) {
        let p = softmax(&head.scores(x)?);
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        for (cls, &pc) in p.iter().enumerate() {
            let g = pc - if cls == y { 1.0 } else { 0.0 };
            grad_b[cls] += g / n;
            let row = &mut grad_w[cls * d..(cls + 1) * d];
            for (slot, &xv) in row.iter_mut().zip(x) {
                *slot += g * xv / n;
            }
        }
    }
    Ok((grad_w, grad_b, loss / n))
}

/// Fine-tunes the head on the train split. Every sample is policy-augmented
/// before feature extraction with a fresh draw per epoch; the update is
/// mini-batch gradient descent with classical momentum and decoupled weight
/// decay (no decay on the bias). Deterministic given the config seeds and
/// `aug_seed`.
pub fn train_head(
    ds: &LabeledImageDataset,
    policy: &PolicyMatrix,
    order: CategoryOrder,
    fe: &FeatureExtractor,
    cfg: &TrainConfig,
    init: &LinearHead,
    aug_seed: u64,
) -> Result<LinearHead, ClassifierError> {
    cfg.validate()?;
    let train_idx = ds.split_indices(Split::Train);
    let mut class_counts = vec![0usize; ds.num_classes()];
    for &i in &train_idx {
        class_counts[ds.label(i)] += 1;
    }
    if let Some(empty) = class_counts.iter().position(|&n| n == 0) {
        return Err(ClassifierError::EmptyClass {
            class: ds.class_names()[empty].clone(),
        });
    }

    let mut head = init.clone();
    let mut vel_w = vec![0.0; head.weights.len()];
    let mut vel_b = vec![0.0; head.bias.len()];

    for epoch in 0..cfg.epochs {
        let mut order_of_samples = train_idx.clone();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.shuffle_seed, epoch as u64, 0));
        order_of_samples.shuffle(&mut shuffle_rng);

        for (batch_no, batch) in order_of_samples.chunks(cfg.batch_size).enumerate() {
            let mut feats = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(aug_seed, epoch as u64, i as u64));
                let augmented = apply_policy(ds.image(i), ds.label(i), policy, order, &mut rng)?;
                feats.push(extract_features(&augmented, fe)?);
                labels.push(ds.label(i));
            }
            let (grad_w, grad_b, loss) = ce_gradients(&feats, &labels, &head)?;
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            let lr = cfg.learning_rate;
            for ((w, v), g) in head.weights.iter_mut().zip(&mut vel_w).zip(&grad_w) {
                *v = cfg.momentum * *v + g;
                *w -= lr * *v + lr * cfg.weight_decay * *w;
            }
            for ((b, v), g) in head.bias.iter_mut().zip(&mut vel_b).zip(&grad_b) {
                *v = cfg.momentum * *v + g;
                *b -= lr * *v;
            }
        }
    }
    if !head.is_finite() {
        return Err(ClassifierError::NonFiniteLoss {
            epoch: cfg.epochs,
            batch: 0,
        });
    }
    Ok(head)
}

/// Trains a head from zeros on the un-augmented train split; the warm-start
/// baseline for every fitness evaluation.
pub fn train_baseline(
    ds: &LabeledImageDataset,
    fe: &FeatureExtractor,
    cfg: &TrainConfig,
    aug_seed: u64,
) -> Result<LinearHead, ClassifierError> {
    let first = ds
        .split_indices(Split::Train)
        .first()
        .copied()
        .ok_or_else(|| ClassifierError::InvalidConfig("empty train split".into()))?;
    let img = ds.image(first);
    let dim = fe.output_dim(img.width(), img.height())?;
    let zero_policy = PolicyMatrix::zero(ds.num_classes(), crate::augment::canonical_pool().len(), 1.0)
        .expect("zero policy is valid");
    let init = LinearHead::zeros(ds.num_classes(), dim);
    train_head(ds, &zero_policy, CategoryOrder::DEFAULT, fe, cfg, &init, aug_seed)
}

/// Confusion matrix of the head over one split. Never augments: features
/// come straight from the stored images.
pub fn evaluate_head(
    ds: &LabeledImageDataset,
    split: Split,
    fe: &FeatureExtractor,
    head: &LinearHead,
) -> Result<ConfusionMatrix, ClassifierError> {
    let mut cm = ConfusionMatrix::new(ds.class_names().to_vec())?;
    for i in ds.split_indices(split) {
        let feats = extract_features(ds.image(i), fe)?;
        let pred = predict_label(&feats, head)?;
        cm.record(ds.label(i), pred)?;
    }
    Ok(cm)
}

/// Fitness of a policy: fine-tune from the baseline head on the augmented
/// train split, then mean-per-class accuracy on the un-augmented validation
/// split. A pure function of its arguments plus `seed`.
pub fn fitness_of_policy(
    policy: &PolicyMatrix,
    order: CategoryOrder,
    ds: &LabeledImageDataset,
    fe: &FeatureExtractor,
    cfg: &TrainConfig,
    baseline: &LinearHead,
    seed: u64,
) -> Result<f64, ClassifierError> {
    let trained = train_head(ds, policy, order, fe, cfg, baseline, seed)?;
    let cm = evaluate_head(ds, Split::Val, fe, &trained)?;
    Ok(mpca(&cm)?)
}
