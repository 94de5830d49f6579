//! Class-specific image-augmentation policy search.
//!
//! A policy is a class × transform matrix of application probabilities on a
//! quantized grid. A genetic algorithm searches the policy space; each
//! candidate is scored by fine-tuning a linear softmax head on frozen
//! features for a few epochs and measuring mean-per-class accuracy on a
//! held-out validation split.
//!
//! Modules:
//! - [`policy`]: the policy-matrix genome and its grid arithmetic
//! - [`ga`]: the genetic algorithm engine (steady-state selection, elitism,
//!   single-point crossover, random-reset mutation, fitness caching,
//!   parallel evaluation) plus the Rastrigin benchmark
//! - [`augment`]: the 15-transform pool, category taxonomy, and the
//!   stochastic class-conditional policy applicator
//! - [`classifier`]: frozen feature extraction (raw pixels or HOG) and the
//!   linear-head fine-tune that turns a policy into a fitness score
//! - [`metrics`]: confusion matrices, mean-per-class accuracy, overall
//!   accuracy, macro sensitivity/specificity
//! - [`dataset`]: class-folder and IDX loaders, stratified splitting, and a
//!   synthetic confounded-class generator
//! - [`orchestrator`]: end-to-end runs, the order experiment, policy
//!   analysis, previews, checkpoint/resume, and report emission

pub mod augment;
pub mod classifier;
pub mod dataset;
pub mod ga;
pub mod metrics;
pub mod orchestrator;
pub mod policy;
pub mod seeding;
