//! The search genome: a class × augmentation matrix of application
//! probabilities on a quantized grid.
//!
//! Every gene lies in [0, 1] and is an integer multiple of the grid step
//! (0.1 in the reference configuration). Genetic operators work on the
//! flattened row-major gene vector; the grid is enforced after every
//! operation, not just at initialization.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for "is an integer multiple of the grid step".
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid dimensions: num_classes={num_classes}, num_augs={num_augs} (both must be >= 1)")]
    InvalidDimensions { num_classes: usize, num_augs: usize },
    #[error("grid step {0} outside (0, 1]")]
    InvalidGridStep(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("gene ({row}, {col}) = {value} is not on the {step} grid inside [0, 1]")]
    OffGrid {
        row: usize,
        col: usize,
        value: f64,
        step: f64,
    },
    #[error("gene vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("policy file names {names} classes but has {rows} probability rows")]
    ClassRowMismatch { names: usize, rows: usize },
    #[error("policy file names {names} augmentations but row {row} has {cols} entries")]
    AugColumnMismatch { names: usize, row: usize, cols: usize },
    #[error("failed to read policy file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse policy file {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// A C×A matrix of application probabilities; the GA genome.
///
/// Immutable after construction, so it can be shared freely between
/// concurrent evaluators.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrix {
    num_classes: usize,
    num_augs: usize,
    grid_step: f64,
    /// Row-major: gene (i, j) at index `i * num_augs + j`.
    probs: Vec<f64>,
}

impl PolicyMatrix {
    /// Builds a matrix from a flat row-major gene vector, validating all
    /// invariants (dimensions, range, grid membership).
    pub fn from_flat(
        num_classes: usize,
        num_augs: usize,
        grid_step: f64,
        probs: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        validate_dims(num_classes, num_augs)?;
        validate_grid_step(grid_step)?;
        if probs.len() != num_classes * num_augs {
            return Err(PolicyError::LengthMismatch {
                got: probs.len(),
                expected: num_classes * num_augs,
            });
        }
        for (idx, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(PolicyError::NonFinite(p));
            }
            let on_grid = (p - (p / grid_step).round() * grid_step).abs() <= GRID_TOLERANCE;
            if !(0.0..=1.0).contains(&p) || !on_grid {
                return Err(PolicyError::OffGrid {
                    row: idx / num_augs,
                    col: idx % num_augs,
                    value: p,
                    step: grid_step,
                });
            }
        }
        Ok(Self {
            num_classes,
            num_augs,
            grid_step,
            probs,
        })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(grid_step: f64, rows: &[Vec<f64>]) -> Result<Self, PolicyError> {
        let num_classes = rows.len();
        let num_augs = rows.first().map_or(0, Vec::len);
        for row in rows {
            if row.len() != num_augs {
                return Err(PolicyError::LengthMismatch {
                    got: row.len(),
                    expected: num_augs,
                });
            }
        }
        Self::from_flat(
            num_classes,
            num_augs,
            grid_step,
            rows.iter().flatten().copied().collect(),
        )
    }

    /// The all-zero policy: applying it changes nothing.
    pub fn zero(num_classes: usize, num_augs: usize, grid_step: f64) -> Result<Self, PolicyError> {
        Self::from_flat(
            num_classes,
            num_augs,
            grid_step,
            vec![0.0; num_classes * num_augs],
        )
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_augs(&self) -> usize {
        self.num_augs
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Probability of applying augmentation `aug` to class `class`.
    pub fn prob(&self, class: usize, aug: usize) -> f64 {
        self.probs[class * self.num_augs + aug]
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.probs[class * self.num_augs..(class + 1) * self.num_augs]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_classes).map(|i| self.row(i).to_vec()).collect()
    }
}

fn validate_dims(num_classes: usize, num_augs: usize) -> Result<(), PolicyError> {
    if num_classes == 0 || num_augs == 0 {
        return Err(PolicyError::InvalidDimensions {
            num_classes,
            num_augs,
        });
    }
    Ok(())
}

fn validate_grid_step(grid_step: f64) -> Result<(), PolicyError> {
    if !grid_step.is_finite() || grid_step <= 0.0 || grid_step > 1.0 {
        return Err(PolicyError::InvalidGridStep(grid_step));
    }
    Ok(())
}

/// Largest k such that k * step <= 1 (within tolerance).
fn max_grid_index(grid_step: f64) -> usize {
    (1.0 / grid_step + GRID_TOLERANCE).floor() as usize
}

/// All values of the grid {0, step, 2*step, ...} that fit in [0, 1].
pub fn grid_values(grid_step: f64) -> Result<Vec<f64>, PolicyError> {
    validate_grid_step(grid_step)?;
    Ok((0..=max_grid_index(grid_step))
        .map(|k| k as f64 * grid_step)
        .collect())
}

/// Snaps a value to the nearest grid multiple, ties rounded up, clamped to
/// the grid's span of [0, 1].
pub fn quantize(value: f64, grid_step: f64) -> Result<f64, PolicyError> {
    validate_grid_step(grid_step)?;
    if !value.is_finite() {
        return Err(PolicyError::NonFinite(value));
    }
    // The 1e-12 nudge keeps exact half-step quotients on the upper side even
    // when the division lands a hair below 0.5.
    let k = (value / grid_step + 0.5 + 1e-12).floor();
    let k = k.clamp(0.0, max_grid_index(grid_step) as f64);
    Ok(k * grid_step)
}

/// Draws every gene uniformly from the grid. Deterministic given the seed.
pub fn random_policy(
    num_classes: usize,
    num_augs: usize,
    grid_step: f64,
    seed: u64,
) -> Result<PolicyMatrix, PolicyError> {
    validate_dims(num_classes, num_augs)?;
    let grid = grid_values(grid_step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = (0..num_classes * num_augs)
        .map(|_| grid[rng.random_range(0..grid.len())])
        .collect();
    PolicyMatrix::from_flat(num_classes, num_augs, grid_step, probs)
}

/// Row-major gene vector of the matrix; gene (i, j) lands at index i*A + j.
pub fn flatten(policy: &PolicyMatrix) -> Vec<f64> {
    policy.probs.clone()
}

/// Inverse of [`flatten`]; validates length and grid membership.
pub fn unflatten(
    genes: &[f64],
    num_classes: usize,
    num_augs: usize,
    grid_step: f64,
) -> Result<PolicyMatrix, PolicyError> {
    PolicyMatrix::from_flat(num_classes, num_augs, grid_step, genes.to_vec())
}

/// On-disk policy document.
///
/// Serialized as a JSON object with keys `classes`, `augmentations`,
/// `grid_step`, `probabilities`. [`PolicyFile::save`] always emits the same
/// canonical pretty form, so load → save round-trips byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub classes: Vec<String>,
    pub augmentations: Vec<String>,
    pub grid_step: f64,
    pub probabilities: Vec<Vec<f64>>,
}

impl PolicyFile {
    pub fn new(policy: &PolicyMatrix, classes: Vec<String>, augmentations: Vec<String>) -> Self {
        Self {
            classes,
            augmentations,
            grid_step: policy.grid_step(),
            probabilities: policy.rows(),
        }
    }

    /// Validates shape consistency and converts to a policy matrix.
    pub fn to_matrix(&self) -> Result<PolicyMatrix, PolicyError> {
        if self.classes.len() != self.probabilities.len() {
            return Err(PolicyError::ClassRowMismatch {
                names: self.classes.len(),
                rows: self.probabilities.len(),
            });
        }
        for (row, probs) in self.probabilities.iter().enumerate() {
            if probs.len() != self.augmentations.len() {
                return Err(PolicyError::AugColumnMismatch {
                    names: self.augmentations.len(),
                    row,
                    cols: probs.len(),
                });
            }
        }
        PolicyMatrix::from_rows(self.grid_step, &self.probabilities)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("policy file serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut file = fs::File::create(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(self.to_json_string().as_bytes())
            .map_err(|source| PolicyError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| PolicyError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}
