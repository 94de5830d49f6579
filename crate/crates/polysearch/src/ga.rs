//! Genetic algorithm engine: steady-state selection with elitism,
//! single-point crossover, random-reset mutation, stagnation/max-generation
//! termination, exact fitness caching, and deterministic parallel
//! evaluation.
//!
//! Determinism contract: all evolution-side randomness is derived from
//! `master_seed` through per-generation streams, and every individual's
//! fitness seed is `mix(master_seed, generation, slot)`. Evaluation results
//! are merged by slot index, so worker scheduling cannot change outcomes,
//! and a run resumed from a checkpoint retraces the uninterrupted run
//! exactly.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::mix_seed;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid GA config: {0}")]
    InvalidConfig(String),
    #[error("invalid genome spec: {0}")]
    InvalidSpec(String),
    #[error("gene vectors have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("crossover needs at least 2 genes, got {0}")]
    GenomeTooShort(usize),
    #[error("individual {0} has no fitness; selection requires a fully evaluated population")]
    Unevaluated(usize),
    #[error("seed genome {index} does not match the genome spec: {reason}")]
    BadSeedGenome { index: usize, reason: String },
    #[error("checkpoint does not match the run: {0}")]
    CheckpointMismatch(String),
}

/// One member of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    /// Higher is better. `NEG_INFINITY` marks a failed evaluation.
    pub fitness: Option<f64>,
    /// Seed handed to the fitness function for this individual.
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Stop after this many consecutive generations without strict
    /// improvement of the best fitness.
    pub stagnation_limit: usize,
    /// Top-k individuals that survive unchanged each generation; offspring
    /// replace the rest.
    pub num_parents_kept: usize,
    /// Per-gene probability of a random grid reset in offspring.
    pub mutation_rate: f64,
    /// At least this many of the best individuals are guaranteed to carry
    /// over unmodified (always satisfied because all kept parents survive
    /// unchanged; validated as elite_count <= num_parents_kept).
    pub elite_count: usize,
    pub master_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            max_generations: 100,
            stagnation_limit: 10,
            num_parents_kept: 20,
            mutation_rate: 0.05,
            elite_count: 2,
            master_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        if self.population_size < 2 {
            return Err(GaError::InvalidConfig(format!(
                "population_size {} < 2",
                self.population_size
            )));
        }
        if self.elite_count < 1 {
            return Err(GaError::InvalidConfig("elite_count must be >= 1".into()));
        }
        if !(self.elite_count <= self.num_parents_kept
            && self.num_parents_kept <= self.population_size)
        {
            return Err(GaError::InvalidConfig(format!(
                "need elite_count ({}) <= num_parents_kept ({}) <= population_size ({})",
                self.elite_count, self.num_parents_kept, self.population_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(GaError::InvalidConfig(format!(
                "mutation_rate {} outside [0, 1]",
                self.mutation_rate
            )));
        }
        if self.max_generations == 0 {
            return Err(GaError::InvalidConfig("max_generations must be >= 1".into()));
        }
        if self.stagnation_limit == 0 {
            return Err(GaError::InvalidConfig("stagnation_limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// Genome layout: fixed length, genes drawn from a finite value grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeSpec {
    pub length: usize,
    pub grid: Vec<f64>,
}

impl GenomeSpec {
    pub fn new(length: usize, grid: Vec<f64>) -> Result<Self, GaError> {
        if length == 0 {
            return Err(GaError::InvalidSpec("genome length must be >= 1".into()));
        }
        if grid.is_empty() {
            return Err(GaError::InvalidSpec("value grid must be non-empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(GaError::InvalidSpec("grid values must be finite".into()));
        }
        Ok(Self { length, grid })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    MaxGenerations,
    Stagnation,
}

/// Per-generation history record.
///
/// `elapsed_seconds` is wall time and is excluded from reproducibility
/// comparisons; all other fields are bit-deterministic given the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Fitness-function invocations performed this generation (cache hits
    /// and surviving parents cost zero).
    pub evaluations: usize,
    pub elapsed_seconds: f64,
}

impl GenerationRecord {
    /// The deterministic projection used for reproducibility checks.
    pub fn deterministic_fields(&self) -> (usize, u64, u64, usize) {
        (
            self.generation,
            self.best_fitness.to_bits(),
            self.mean_fitness.to_bits(),
            self.evaluations,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Individual,
    pub history: Vec<GenerationRecord>,
    pub termination: TerminationReason,
}

/// Fitness evaluated as a pure function of (genome, seed). Must be safe to
/// call from multiple workers at once.
pub trait FitnessFn: Sync {
    fn eval(&self, genome: &[f64], seed: u64) -> Result<f64, String>;
}

impl<F> FitnessFn for F
where
    F: Fn(&[f64], u64) -> Result<f64, String> + Sync,
{
    fn eval(&self, genome: &[f64], seed: u64) -> Result<f64, String> {
        self(genome, seed)
    }
}

/// The k highest-fitness individuals, ties broken by lower index.
pub fn select_parents(population: &[Individual], k: usize) -> Result<Vec<Individual>, GaError> {
    for (i, ind) in population.iter().enumerate() {
        if ind.fitness.is_none() {
            return Err(GaError::Unevaluated(i));
        }
    }
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = population[a].fitness.unwrap();
        let fb = population[b].fitness.unwrap();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| population[i].clone())
        .collect())
}

/// Cuts both genomes at a point drawn uniformly from {1, .., L-1} and swaps
/// the tails.
pub fn single_point_crossover(
    a: &[f64],
    b: &[f64],
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>), GaError> {
    if a.len() != b.len() {
        return Err(GaError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(GaError::GenomeTooShort(a.len()));
    }
    let cut = rng.random_range(1..a.len());
    let mut child_a = a[..cut].to_vec();
    child_a.extend_from_slice(&b[cut..]);
    let mut child_b = b[..cut].to_vec();
    child_b.extend_from_slice(&a[cut..]);
    Ok((child_a, child_b))
}

/// Each gene is independently replaced, with probability `rate`, by a
/// uniform draw from the grid.
pub fn mutate(genome: &[f64], rate: f64, grid: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    genome
        .iter()
        .map(|&g| {
            if rng.random::<f64>() < rate {
                grid[rng.random_range(0..grid.len())]
            } else {
                g
            }
        })
        .collect()
}

/// Termination test over the recorded history.
pub fn should_terminate(history: &[GenerationRecord], config: &GaConfig) -> Option<TerminationReason> {
    let last = history.last()?;
    if last.generation >= config.max_generations {
        return Some(TerminationReason::MaxGenerations);
    }
    if history.len() > config.stagnation_limit {
        let reference = &history[history.len() - 1 - config.stagnation_limit];
        if last.best_fitness <= reference.best_fitness {
            return Some(TerminationReason::Stagnation);
        }
    }
    None
}

/// Standard Rastrigin function: 10n + sum(x_i^2 - 10 cos(2 pi x_i)).
/// Global minimum 0 at the origin.
pub fn rastrigin(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    10.0 * n
        + x.iter()
            .map(|&v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
            .sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointIndividual {
    genome: Vec<f64>,
    /// Fitness as IEEE bits so that -inf survives the JSON round trip.
    fitness_bits: Option<u64>,
    eval_seed: u64,
}

impl CheckpointIndividual {
    fn from_individual(ind: &Individual) -> Self {
        Self {
            genome: ind.genome.clone(),
            fitness_bits: ind.fitness.map(f64::to_bits),
            eval_seed: ind.eval_seed,
        }
    }

    fn into_individual(self) -> Individual {
        Individual {
            genome: self.genome,
            fitness: self.fitness_bits.map(f64::from_bits),
            eval_seed: self.eval_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointRecord {
    generation: usize,
    best_bits: u64,
    mean_bits: u64,
    evaluations: usize,
    elapsed_seconds: f64,
}

/// Serializable snapshot of a run, taken after a generation has been
/// recorded (and its offspring bred, when the run continues). The RNG
/// cursor is the generation counter: per-generation streams are re-derived
/// from the master seed, so no raw RNG state needs to be stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaCheckpoint {
    generation: usize,
    population: Vec<CheckpointIndividual>,
    history: Vec<CheckpointRecord>,
    cache: Vec<(Vec<f64>, u64)>,
    best: Option<CheckpointIndividual>,
}

impl GaCheckpoint {
    pub fn generation(&self) -> usize {
        self.generation
    }
}

fn genome_key(genome: &[f64]) -> Vec<u64> {
    genome.iter().map(|v| v.to_bits()).collect()
}

/// A stepping GA run. Create with [`GaRunner::new`], then call
/// [`GaRunner::step`] until it reports termination (or use
/// [`GaRunner::run`]); take [`GaRunner::checkpoint`] between steps for
/// resumable long searches.
pub struct GaRunner<F: FitnessFn> {
    config: GaConfig,
    spec: GenomeSpec,
    fitness: F,
    pool: rayon::ThreadPool,
    population: Vec<Individual>,
    cache: HashMap<Vec<u64>, f64>,
    history: Vec<GenerationRecord>,
    generation: usize,
    best: Option<Individual>,
}

/// Outcome of one [`GaRunner::step`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Terminated(TerminationReason),
}

impl<F: FitnessFn> GaRunner<F> {
    /// Sets up generation 0. `seed_genomes` are injected verbatim at the
    /// front of the initial population (the rest is drawn uniformly from
    /// the grid).
    pub fn new(
        config: GaConfig,
        spec: GenomeSpec,
        fitness: F,
        workers: usize,
        seed_genomes: &[Vec<f64>],
    ) -> Result<Self, GaError> {
        config.validate()?;
        if seed_genomes.len() > config.population_size {
            return Err(GaError::InvalidConfig(format!(
                "{} seed genomes exceed population size {}",
                seed_genomes.len(),
                config.population_size
            )));
        }
        for (index, genome) in seed_genomes.iter().enumerate() {
            if genome.len() != spec.length {
                return Err(GaError::BadSeedGenome {
                    index,
                    reason: format!("length {} != {}", genome.len(), spec.length),
                });
            }
            if let Some(bad) = genome
                .iter()
                .find(|g| !spec.grid.iter().any(|v| v.to_bits() == g.to_bits()))
            {
                return Err(GaError::BadSeedGenome {
                    index,
                    reason: format!("gene {bad} is not a grid value"),
                });
            }
        }

        let pool = build_pool(workers)?;
        let mut rng = generation_rng(config.master_seed, 0);
        let mut population = Vec::with_capacity(config.population_size);
        for slot in 0..config.population_size {
            let genome = if slot < seed_genomes.len() {
                seed_genomes[slot].clone()
            } else {
                (0..spec.length)
                    .map(|_| spec.grid[rng.random_range(0..spec.grid.len())])
                    .collect()
            };
            population.push(Individual {
                genome,
                fitness: None,
                eval_seed: mix_seed(config.master_seed, 0, slot as u64),
            });
        }

        Ok(Self {
            config,
            spec,
            fitness,
            pool,
            population,
            cache: HashMap::new(),
            history: Vec::new(),
            generation: 0,
            best: None,
        })
    }

    /// Restores a run from a checkpoint. The config and spec must be the
    /// ones the checkpoint was taken with.
    pub fn from_checkpoint(
        config: GaConfig,
        spec: GenomeSpec,
        fitness: F,
        workers: usize,
        checkpoint: GaCheckpoint,
    ) -> Result<Self, GaError> {
        config.validate()?;
        if checkpoint.population.len() != config.population_size {
            return Err(GaError::CheckpointMismatch(format!(
                "population size {} != configured {}",
                checkpoint.population.len(),
                config.population_size
            )));
        }
        for ind in &checkpoint.population {
            if ind.genome.len() != spec.length {
                return Err(GaError::CheckpointMismatch(format!(
                    "genome length {} != spec length {}",
                    ind.genome.len(),
                    spec.length
                )));
            }
        }
        let pool = build_pool(workers)?;
        Ok(Self {
            config,
            spec,
            fitness,
            pool,
            population: checkpoint
                .population
                .into_iter()
                .map(CheckpointIndividual::into_individual)
                .collect(),
            cache: checkpoint
                .cache
                .into_iter()
                .map(|(genome, bits)| (genome_key(&genome), f64::from_bits(bits)))
                .collect(),
            history: checkpoint
                .history
                .into_iter()
                .map(|r| GenerationRecord {
                    generation: r.generation,
                    best_fitness: f64::from_bits(r.best_bits),
                    mean_fitness: f64::from_bits(r.mean_bits),
                    evaluations: r.evaluations,
                    elapsed_seconds: r.elapsed_seconds,
                })
                .collect(),
            generation: checkpoint.generation,
            best: checkpoint.best.map(CheckpointIndividual::into_individual),
        })
    }

    pub fn checkpoint(&self) -> GaCheckpoint {
        GaCheckpoint {
            generation: self.generation,
            population: self
                .population
                .iter()
                .map(CheckpointIndividual::from_individual)
                .collect(),
            history: self
                .history
                .iter()
                .map(|r| CheckpointRecord {
                    generation: r.generation,
                    best_bits: r.best_fitness.to_bits(),
                    mean_bits: r.mean_fitness.to_bits(),
                    evaluations: r.evaluations,
                    elapsed_seconds: r.elapsed_seconds,
                })
                .collect(),
            cache: self
                .cache
                .iter()
                .map(|(key, &fit)| (key.iter().map(|&b| f64::from_bits(b)).collect(), fit.to_bits()))
                .collect(),
            best: self.best.as_ref().map(CheckpointIndividual::from_individual),
        }
    }

    pub fn history(&self) -> &[GenerationRecord] {
        &self.history
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn best(&self) -> Option<&Individual> {
        self.best.as_ref()
    }

    /// Evaluates the current population, records the generation, and breeds
    /// the next one unless a termination criterion fired.
    pub fn step(&mut self) -> Result<StepOutcome, GaError> {
        let started = Instant::now();
        let evaluations = self.evaluate_population();
        self.record_generation(evaluations, started.elapsed().as_secs_f64());
        if let Some(reason) = should_terminate(&self.history, &self.config) {
            return Ok(StepOutcome::Terminated(reason));
        }
        self.breed_next_generation()?;
        Ok(StepOutcome::Continue)
    }

    /// Steps to termination and returns the result.
    pub fn run(&mut self) -> Result<SearchResult, GaError> {
        loop {
            if let StepOutcome::Terminated(reason) = self.step()? {
                return Ok(self.result(reason));
            }
        }
    }

    fn result(&self, termination: TerminationReason) -> SearchResult {
        SearchResult {
            best: self.best.clone().expect("terminated runs have a best"),
            history: self.history.clone(),
            termination,
        }
    }

    /// Fills every missing fitness, calling the fitness function only for
    /// genomes that have never been evaluated. Returns the number of calls.
    fn evaluate_population(&mut self) -> usize {
        // Schedule in slot order: the first occurrence of a new genome
        // claims its slot's seed; duplicates reuse the cached value.
        let mut scheduled: Vec<(Vec<u64>, Vec<f64>, u64)> = Vec::new();
        let mut claimed: std::collections::HashSet<Vec<u64>> = std::collections::HashSet::new();
        for ind in &self.population {
            if ind.fitness.is_some() {
                continue;
            }
            let key = genome_key(&ind.genome);
            if self.cache.contains_key(&key) || !claimed.insert(key.clone()) {
                continue;
            }
            scheduled.push((key, ind.genome.clone(), ind.eval_seed));
        }

        let fitness = &self.fitness;
        let results: Vec<f64> = self.pool.install(|| {
            scheduled
                .par_iter()
                .map(|(_, genome, seed)| match fitness.eval(genome, *seed) {
                    Ok(f) if f.is_finite() => f,
                    Ok(f) => {
                        log::warn!("fitness returned non-finite value {f}; treating as failure");
                        f64::NEG_INFINITY
                    }
                    Err(message) => {
                        log::warn!("fitness evaluation failed: {message}");
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        });
        let evaluations = results.len();
        for ((key, _, _), fit) in scheduled.into_iter().zip(results) {
            self.cache.insert(key, fit);
        }
        for ind in &mut self.population {
            if ind.fitness.is_none() {
                ind.fitness = Some(self.cache[&genome_key(&ind.genome)]);
            }
        }
        evaluations
    }

    fn record_generation(&mut self, evaluations: usize, elapsed_seconds: f64) {
        let (best_slot, best_fit) = self
            .population
            .iter()
            .enumerate()
            .map(|(i, ind)| (i, ind.fitness.expect("population evaluated")))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .expect("population is non-empty");
        let improved = self.best.as_ref().is_none_or(|b| best_fit > b.fitness.unwrap());
        if improved {
            self.best = Some(self.population[best_slot].clone());
        }
        let mean = self
            .population
            .iter()
            .map(|ind| ind.fitness.unwrap())
            .sum::<f64>()
            / self.population.len() as f64;
        self.history.push(GenerationRecord {
            generation: self.generation,
            best_fitness: self.best.as_ref().unwrap().fitness.unwrap(),
            mean_fitness: mean,
            evaluations,
            elapsed_seconds,
        });
    }

    /// Steady state: the top `num_parents_kept` survive unchanged (which
    /// subsumes the elite guarantee); offspring bred from random parent
    /// pairs replace the rest.
    fn breed_next_generation(&mut self) -> Result<(), GaError> {
        let next_gen = self.generation + 1;
        let mut rng = generation_rng(self.config.master_seed, next_gen as u64);
        let parents = select_parents(&self.population, self.config.num_parents_kept)?;
        let offspring_count = self.config.population_size - parents.len();

        let mut offspring: Vec<Vec<f64>> = Vec::with_capacity(offspring_count);
        while offspring.len() < offspring_count {
            let i = rng.random_range(0..parents.len());
            let j = if parents.len() == 1 {
                i
            } else {
                loop {
                    let j = rng.random_range(0..parents.len());
                    if j != i {
                        break j;
                    }
                }
            };
            let (a, b) = (&parents[i].genome, &parents[j].genome);
            let (child_a, child_b) = if self.spec.length >= 2 {
                single_point_crossover(a, b, &mut rng)?
            } else {
                (a.clone(), b.clone())
            };
            for child in [child_a, child_b] {
                if offspring.len() < offspring_count {
                    offspring.push(mutate(&child, self.config.mutation_rate, &self.spec.grid, &mut rng));
                }
            }
        }

        let mut population = parents;
        for (k, genome) in offspring.into_iter().enumerate() {
            let slot = population.len() + k;
            population.push(Individual {
                genome,
                fitness: None,
                eval_seed: mix_seed(self.config.master_seed, next_gen as u64, slot as u64),
            });
        }
        debug_assert_eq!(population.len(), self.config.population_size);
        self.population = population;
        self.generation = next_gen;
        Ok(())
    }
}

fn generation_rng(master_seed: u64, generation: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(master_seed, generation, u64::MAX))
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, GaError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| GaError::InvalidConfig(format!("worker pool: {e}")))
}

/// Convenience wrapper: build a runner and step it to termination.
pub fn evolve<F: FitnessFn>(
    config: &GaConfig,
    spec: &GenomeSpec,
    fitness: F,
    workers: usize,
) -> Result<SearchResult, GaError> {
    GaRunner::new(config.clone(), spec.clone(), fitness, workers, &[])?.run()
}
