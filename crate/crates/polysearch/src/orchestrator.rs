//! End-to-end runs: configuration, baseline preparation, policy search with
//! checkpoint/resume, the augmentation-order experiment, policy analysis,
//! previews, and report emission.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{
    apply_transform, canonical_names, canonical_pool, AugmentationDescriptor, Category,
    CategoryOrder, Image,
};
use crate::classifier::{
    evaluate_head, fitness_of_policy, train_baseline, train_head, FeatureExtractor, LinearHead,
    TrainConfig,
};
use crate::dataset::synth::{generate_confounder, SynthConfig};
use crate::dataset::{
    export_class_folders, load_class_folders, load_idx, stratified_split, LabeledImageDataset,
    Split,
};
use crate::ga::{
    GaCheckpoint, GaConfig, GaRunner, GenerationRecord, GenomeSpec, SearchResult, StepOutcome,
    TerminationReason,
};
use crate::metrics::{mpca, overall_accuracy, per_class_accuracy, sensitivity_specificity};
use crate::policy::{grid_values, PolicyFile, PolicyMatrix};
use crate::seeding::mix_seed;

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV_VAR: &str = "POLYSEARCH_WORKERS";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Ga(#[from] crate::ga::GaError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Class-folder tree: root/<class_name>/*.png|jpg.
    Folder { path: PathBuf },
    /// IDX image/label archive pair.
    Idx { images: PathBuf, labels: PathBuf },
    /// Generated confounded-class corpus.
    Synthetic(SynthConfig),
}

fn default_features() -> FeatureExtractor {
    FeatureExtractor::RawPixels
}

fn default_category_order() -> CategoryOrder {
    CategoryOrder::DEFAULT
}

fn default_image_side() -> u32 {
    64
}

fn default_split_fractions() -> (f64, f64, f64) {
    (0.80, 0.09, 0.11)
}

fn default_baseline_epochs() -> usize {
    20
}

fn default_grid_step() -> f64 {
    0.1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("polysearch-out")
}

/// One JSON document configures a whole run; CLI flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_features")]
    pub features: FeatureExtractor,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default = "default_category_order")]
    pub category_order: CategoryOrder,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Resolved against POLYSEARCH_WORKERS and a floor of 1 when unset.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_image_side")]
    pub image_side: u32,
    #[serde(default = "default_split_fractions")]
    pub split_fractions: (f64, f64, f64),
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_baseline_epochs")]
    pub baseline_epochs: usize,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| OrchestratorError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resolved_workers(&self) -> usize {
        self.workers
            .or_else(|| {
                std::env::var(WORKERS_ENV_VAR)
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(1)
            .max(1)
    }

    /// The fields that must match for a checkpoint to be resumable.
    fn fingerprint(&self) -> String {
        let mut fixed = self.clone();
        fixed.workers = None;
        fixed.output_dir = PathBuf::new();
        serde_json::to_string(&fixed).expect("config serializes")
    }
}

/// Paths and headline numbers of a finished search.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub policy_path: PathBuf,
    pub history_path: PathBuf,
    pub baseline_confusion_path: PathBuf,
    pub optimized_confusion_path: PathBuf,
    pub report_path: PathBuf,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Validation fitness of the zero policy evaluated exactly as the GA's
    /// seeded candidate; the search baseline row in the report.
    pub baseline_fitness: f64,
    /// Validation fitness of the best policy found.
    pub best_fitness: f64,
    pub baseline_test_mpca: f64,
    pub optimized_test_mpca: f64,
    pub baseline_test_overall: f64,
    pub optimized_test_overall: f64,
    pub generations: usize,
    pub termination: TerminationReason,
    /// Test-split accesses observed between search start and final
    /// reporting; a sound run records 0.
    pub test_accesses_during_search: u64,
}

/// Dataset plus the trained warm-start head shared by every evaluation.
struct PreparedRun {
    dataset: LabeledImageDataset,
    features: FeatureExtractor,
    baseline: LinearHead,
}

fn load_dataset(config: &RunConfig) -> Result<LabeledImageDataset, OrchestratorError> {
    let ds = match &config.dataset {
        DatasetSource::Folder { path } => {
            let loaded = load_class_folders(path, config.image_side)?;
            if loaded.skipped > 0 {
                log::warn!("skipped {} undecodable files under {}", loaded.skipped, path.display());
            }
            loaded.dataset
        }
        DatasetSource::Idx { images, labels } => load_idx(images, labels)?,
        DatasetSource::Synthetic(synth) => generate_confounder(synth)?,
    };
    Ok(stratified_split(ds, config.split_fractions, config.split_seed)?)
}

fn prepare_run(config: &RunConfig) -> Result<PreparedRun, OrchestratorError> {
    let dataset = load_dataset(config)?;
    let mut baseline_cfg = config.train;
    baseline_cfg.epochs = config.baseline_epochs;
    let baseline = train_baseline(
        &dataset,
        &config.features,
        &baseline_cfg,
        mix_seed(config.ga.master_seed, u64::MAX - 1, 0),
    )?;
    Ok(PreparedRun {
        dataset,
        features: config.features,
        baseline,
    })
}

fn genome_spec(config: &RunConfig, num_classes: usize) -> Result<GenomeSpec, OrchestratorError> {
    let pool_len = canonical_pool().len();
    Ok(GenomeSpec::new(
        num_classes * pool_len,
        grid_values(config.grid_step)?,
    )?)
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config_fingerprint: String,
    ga: GaCheckpoint,
}

fn checkpoint_path(output_dir: &Path) -> PathBuf {
    output_dir.join("checkpoint.json")
}

fn write_checkpoint(path: &Path, fingerprint: &str, ga: GaCheckpoint) -> Result<(), OrchestratorError> {
    let file = CheckpointFile {
        config_fingerprint: fingerprint.to_string(),
        ga,
    };
    let text = serde_json::to_string(&file).map_err(|source| OrchestratorError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(io_err(path))
}

fn read_checkpoint(path: &Path, fingerprint: &str) -> Result<GaCheckpoint, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|source| OrchestratorError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    if file.config_fingerprint != fingerprint {
        return Err(OrchestratorError::Config(format!(
            "checkpoint {} was produced by a different configuration",
            path.display()
        )));
    }
    Ok(file.ga)
}

fn history_csv(history: &[GenerationRecord]) -> String {
    let mut out = String::from("generation,best_fitness,mean_fitness,evaluations,elapsed_seconds\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.generation, r.best_fitness, r.mean_fitness, r.evaluations, r.elapsed_seconds
        ));
    }
    out
}

/// Runs the GA for one prepared dataset/order and returns the search result
/// together with the policy matrix of the best individual.
fn run_search(
    config: &RunConfig,
    prepared: &PreparedRun,
    order: CategoryOrder,
    checkpoint: Option<(&Path, &str)>,
    resume: bool,
) -> Result<(SearchResult, PolicyMatrix), OrchestratorError> {
    let num_classes = prepared.dataset.num_classes();
    let pool_len = canonical_pool().len();
    let spec = genome_spec(config, num_classes)?;
    let grid_step = config.grid_step;
    let ds = &prepared.dataset;
    let fe = &prepared.features;
    let train_cfg = &config.train;
    let baseline = &prepared.baseline;

    let fitness = move |genome: &[f64], seed: u64| -> Result<f64, String> {
        let policy = PolicyMatrix::from_flat(num_classes, pool_len, grid_step, genome.to_vec())
            .map_err(|e| e.to_string())?;
        fitness_of_policy(&policy, order, ds, fe, train_cfg, baseline, seed)
            .map_err(|e| e.to_string())
    };

    let workers = config.resolved_workers();
    let mut runner = match checkpoint {
        Some((path, fingerprint)) if resume && path.exists() => GaRunner::from_checkpoint(
            config.ga.clone(),
            spec,
            fitness,
            workers,
            read_checkpoint(path, fingerprint)?,
        )?,
        _ => {
            // The all-zero policy is seeded into the initial population, so
            // the best fitness can never fall below the no-augmentation
            // candidate evaluated seed-for-seed.
            let zero = vec![0.0; num_classes * pool_len];
            GaRunner::new(config.ga.clone(), spec, fitness, workers, &[zero])?
        }
    };

    let result = loop {
        let outcome = runner.step()?;
        if let Some((path, fingerprint)) = checkpoint {
            write_checkpoint(path, fingerprint, runner.checkpoint())?;
        }
        if let StepOutcome::Terminated(reason) = outcome {
            break runner
                .best()
                .cloned()
                .map(|best| SearchResult {
                    best,
                    history: runner.history().to_vec(),
                    termination: reason,
                })
                .expect("terminated run has a best individual");
        }
    };

    let policy = PolicyMatrix::from_flat(
        num_classes,
        pool_len,
        grid_step,
        result.best.genome.clone(),
    )?;
    Ok((result, policy))
}

/// Full search pipeline: load and split data, train the baseline head,
/// evolve a policy, then write the policy file, history CSV, both test
/// confusion matrices, and the report.
pub fn cmd_search(config: &RunConfig, resume: bool) -> Result<RunArtifacts, OrchestratorError> {
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let prepared = prepare_run(config)?;
    let order = config.category_order;
    let accesses_before = prepared.dataset.test_access_count();

    let fingerprint = config.fingerprint();
    let ckpt_path = checkpoint_path(&config.output_dir);
    let (result, best_policy) = run_search(
        config,
        &prepared,
        order,
        Some((&ckpt_path, &fingerprint)),
        resume,
    )?;

    // The zero policy re-evaluated exactly as the GA's generation-0 slot-0
    // candidate (same evaluation seed, cache-equivalent).
    let zero_policy = PolicyMatrix::zero(
        prepared.dataset.num_classes(),
        canonical_pool().len(),
        config.grid_step,
    )?;
    let baseline_fitness = fitness_of_policy(
        &zero_policy,
        order,
        &prepared.dataset,
        &prepared.features,
        &config.train,
        &prepared.baseline,
        mix_seed(config.ga.master_seed, 0, 0),
    )?;
    let test_accesses_during_search = prepared.dataset.test_access_count() - accesses_before;

    // Final reporting: reproduce the best individual's fine-tuned head with
    // its own evaluation seed, then compare on the held-out test split.
    let optimized_head = train_head(
        &prepared.dataset,
        &best_policy,
        order,
        &prepared.features,
        &config.train,
        &prepared.baseline,
        result.best.eval_seed,
    )?;
    let cm_baseline = evaluate_head(
        &prepared.dataset,
        Split::Test,
        &prepared.features,
        &prepared.baseline,
    )?;
    let cm_optimized = evaluate_head(
        &prepared.dataset,
        Split::Test,
        &prepared.features,
        &optimized_head,
    )?;

    let policy_path = config.output_dir.join("policy.json");
    PolicyFile::new(
        &best_policy,
        prepared.dataset.class_names().to_vec(),
        canonical_names(),
    )
    .save(&policy_path)?;

    let history_path = config.output_dir.join("history.csv");
    fs::write(&history_path, history_csv(&result.history)).map_err(io_err(&history_path))?;

    let baseline_confusion_path = config.output_dir.join("baseline_confusion.csv");
    cm_baseline.write_csv(&baseline_confusion_path)?;
    let optimized_confusion_path = config.output_dir.join("optimized_confusion.csv");
    cm_optimized.write_csv(&optimized_confusion_path)?;

    let summary = RunSummary {
        baseline_fitness,
        best_fitness: result.best.fitness.expect("best is evaluated"),
        baseline_test_mpca: mpca(&cm_baseline)?,
        optimized_test_mpca: mpca(&cm_optimized)?,
        baseline_test_overall: overall_accuracy(&cm_baseline)?,
        optimized_test_overall: overall_accuracy(&cm_optimized)?,
        generations: result.history.len(),
        termination: result.termination,
        test_accesses_during_search,
    };

    let report_path = config.output_dir.join("report.md");
    let report = render_report(config, &prepared, &best_policy, &result, &summary, &cm_baseline, &cm_optimized)?;
    fs::write(&report_path, report).map_err(io_err(&report_path))?;

    Ok(RunArtifacts {
        output_dir: config.output_dir.clone(),
        policy_path,
        history_path,
        baseline_confusion_path,
        optimized_confusion_path,
        report_path,
        summary,
    })
}

fn render_report(
    config: &RunConfig,
    prepared: &PreparedRun,
    best_policy: &PolicyMatrix,
    result: &SearchResult,
    summary: &RunSummary,
    cm_baseline: &crate::metrics::ConfusionMatrix,
    cm_optimized: &crate::metrics::ConfusionMatrix,
) -> Result<String, OrchestratorError> {
    let ds = &prepared.dataset;
    let (train_n, val_n, test_n) = ds.split_sizes();
    let mut out = String::new();
    out.push_str("# Augmentation policy search report\n\n");
    out.push_str(&format!(
        "- classes: {} ({})\n- samples: {} train / {} val / {} test\n- features: {:?}\n- category order: {}\n- population {}, parents {}, mutation {}, master seed {}\n\n",
        ds.num_classes(),
        ds.class_names().join(", "),
        train_n,
        val_n,
        test_n,
        prepared.features,
        config.category_order,
        config.ga.population_size,
        config.ga.num_parents_kept,
        config.ga.mutation_rate,
        config.ga.master_seed,
    ));

    out.push_str("## Search\n\n");
    let total_evals: usize = result.history.iter().map(|r| r.evaluations).sum();
    out.push_str(&format!(
        "- generations: {} (termination: {:?})\n- fitness evaluations: {}\n- validation MPCA, zero policy: {:.4}\n- validation MPCA, best policy: {:.4}\n- test-split accesses during search: {}\n\n",
        summary.generations,
        summary.termination,
        total_evals,
        summary.baseline_fitness,
        summary.best_fitness,
        summary.test_accesses_during_search,
    ));

    out.push_str("## Held-out test comparison\n\n");
    out.push_str("| model | MPCA | overall | sensitivity | specificity |\n");
    out.push_str("|---|---|---|---|---|\n");
    for (name, cm) in [("baseline", cm_baseline), ("optimized", cm_optimized)] {
        let (sens, spec) = sensitivity_specificity(cm)?;
        out.push_str(&format!(
            "| {name} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            mpca(cm)?,
            overall_accuracy(cm)?,
            sens,
            spec
        ));
    }
    out.push('\n');

    out.push_str("## Per-class accuracy (test)\n\n");
    out.push_str("| class | baseline | optimized |\n|---|---|---|\n");
    let base_pc = per_class_accuracy(cm_baseline)?;
    let opt_pc = per_class_accuracy(cm_optimized)?;
    for (i, name) in ds.class_names().iter().enumerate() {
        out.push_str(&format!("| {name} | {:.4} | {:.4} |\n", base_pc[i], opt_pc[i]));
    }
    out.push('\n');

    out.push_str("## Best policy category profile\n\n");
    out.push_str("| class | geometry | color | cutout |\n|---|---|---|---|\n");
    let analysis = analyze_policy_matrix(best_policy, ds.class_names());
    for row in &analysis.per_class {
        out.push_str(&format!(
            "| {} | {:.3} | {:.3} | {:.3} |\n",
            row.class, row.category_means[0], row.category_means[1], row.category_means[2]
        ));
    }
    out.push('\n');
    Ok(out)
}

/// One row of the order experiment.
#[derive(Debug, Clone)]
pub struct OrderRow {
    pub order: CategoryOrder,
    pub mpca: f64,
    pub overall_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct OrderExperiment {
    pub rows: Vec<OrderRow>,
    pub csv_path: PathBuf,
}

/// Runs one full search per category permutation (shared dataset and
/// baseline head) and reports test-split MPCA and overall accuracy of each
/// order's optimized model.
pub fn cmd_order_experiment(config: &RunConfig) -> Result<OrderExperiment, OrchestratorError> {
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let prepared = prepare_run(config)?;
    let mut rows = Vec::new();
    for order in CategoryOrder::all_permutations() {
        let (result, policy) = run_search(config, &prepared, order, None, false)?;
        let head = train_head(
            &prepared.dataset,
            &policy,
            order,
            &prepared.features,
            &config.train,
            &prepared.baseline,
            result.best.eval_seed,
        )?;
        let cm = evaluate_head(&prepared.dataset, Split::Test, &prepared.features, &head)?;
        let file_label = order.to_string().replace('>', "-");
        PolicyFile::new(&policy, prepared.dataset.class_names().to_vec(), canonical_names())
            .save(&config.output_dir.join(format!("policy_{file_label}.json")))?;
        rows.push(OrderRow {
            order,
            mpca: mpca(&cm)?,
            overall_accuracy: overall_accuracy(&cm)?,
        });
    }

    let csv_path = config.output_dir.join("order_experiment.csv");
    let mut csv = String::from("order,mpca,overall_accuracy\n");
    for row in &rows {
        csv.push_str(&format!("{},{},{}\n", row.order, row.mpca, row.overall_accuracy));
    }
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    Ok(OrderExperiment { rows, csv_path })
}

#[derive(Debug, Clone)]
pub struct ClassPolicyProfile {
    pub class: String,
    /// Mean probability per category, in (Geometry, Color, Cutout) order.
    pub category_means: [f64; 3],
    /// Transforms ranked by descending probability, ties by canonical index.
    pub ranking: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct PolicyAnalysis {
    pub per_class: Vec<ClassPolicyProfile>,
}

impl PolicyAnalysis {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("class,geometry_mean,color_mean,cutout_mean,ranking\n");
        for row in &self.per_class {
            let ranking = row
                .ranking
                .iter()
                .map(|(name, p)| format!("{name}:{p}"))
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.class, row.category_means[0], row.category_means[1], row.category_means[2], ranking
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.per_class {
            out.push_str(&format!(
                "{}: geometry {:.3}, color {:.3}, cutout {:.3}\n",
                row.class, row.category_means[0], row.category_means[1], row.category_means[2]
            ));
            let top: Vec<String> = row
                .ranking
                .iter()
                .take(3)
                .map(|(n, p)| format!("{n} ({p:.2})"))
                .collect();
            let bottom: Vec<String> = row
                .ranking
                .iter()
                .rev()
                .take(3)
                .map(|(n, p)| format!("{n} ({p:.2})"))
                .collect();
            out.push_str(&format!(
                "  most likely: {}\n  least likely: {}\n",
                top.join(", "),
                bottom.join(", ")
            ));
        }
        out
    }
}

/// Category means and transform ranking for each class of a policy.
pub fn analyze_policy_matrix(policy: &PolicyMatrix, class_names: &[String]) -> PolicyAnalysis {
    let pool = canonical_pool();
    let per_class = class_names
        .iter()
        .enumerate()
        .map(|(class_idx, name)| {
            let row = policy.row(class_idx);
            let mut category_means = [0.0f64; 3];
            for (cat_idx, cat) in [Category::Geometry, Category::Color, Category::Cutout]
                .into_iter()
                .enumerate()
            {
                let probs: Vec<f64> = pool
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.category == cat)
                    .map(|(j, _)| row[j])
                    .collect();
                category_means[cat_idx] = probs.iter().sum::<f64>() / probs.len() as f64;
            }
            let mut ranking: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
            ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            ClassPolicyProfile {
                class: name.clone(),
                category_means,
                ranking: ranking
                    .into_iter()
                    .map(|(j, p)| (pool[j].kind.name().to_string(), p))
                    .collect(),
            }
        })
        .collect();
    PolicyAnalysis { per_class }
}

/// Loads a policy file, validates its transform names against the canonical
/// pool, and emits the per-class category summary (CSV plus readable text).
pub fn cmd_analyze_policy(
    policy_path: &Path,
    csv_out: Option<&Path>,
) -> Result<PolicyAnalysis, OrchestratorError> {
    let file = PolicyFile::load(policy_path)?;
    if file.augmentations != canonical_names() {
        return Err(OrchestratorError::Config(format!(
            "policy file {} does not use the canonical transform list",
            policy_path.display()
        )));
    }
    let matrix = file.to_matrix()?;
    let analysis = analyze_policy_matrix(&matrix, &file.classes);
    if let Some(path) = csv_out {
        fs::write(path, analysis.to_csv_string()).map_err(io_err(path))?;
    }
    Ok(analysis)
}

/// Writes a synthetic corpus out as a class-folder tree.
pub fn cmd_synth_data(synth: &SynthConfig, out_root: &Path) -> Result<usize, OrchestratorError> {
    let ds = generate_confounder(synth)?;
    export_class_folders(&ds, out_root)?;
    Ok(ds.len())
}

fn save_png(img: &Image, path: &Path) -> Result<(), OrchestratorError> {
    let buffer: image::RgbImage =
        image::ImageBuffer::from_raw(img.width(), img.height(), img.pixels().to_vec())
            .expect("pixel buffer matches dimensions");
    buffer
        .save(path)
        .map_err(|e| OrchestratorError::Config(format!("saving {}: {e}", path.display())))
}

/// For each class, renders `n` samples with the class's top-3 and bottom-3
/// probability transforms applied individually; one PNG grid per class
/// (columns: original, top 1-3, bottom 1-3).
pub fn cmd_preview(
    policy_path: &Path,
    config: &RunConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<PathBuf>, OrchestratorError> {
    let file = PolicyFile::load(policy_path)?;
    if file.augmentations != canonical_names() {
        return Err(OrchestratorError::Config(format!(
            "policy file {} does not use the canonical transform list",
            policy_path.display()
        )));
    }
    let policy = file.to_matrix()?;
    let dataset = load_dataset(config)?;
    if dataset.num_classes() != policy.num_classes() {
        return Err(OrchestratorError::Config(format!(
            "policy has {} classes but the dataset has {}",
            policy.num_classes(),
            dataset.num_classes()
        )));
    }
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;

    let pool = canonical_pool();
    let mut outputs = Vec::new();
    for class in 0..dataset.num_classes() {
        let row = policy.row(class);
        let mut by_prob: Vec<usize> = (0..row.len()).collect();
        by_prob.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        let top: Vec<&AugmentationDescriptor> = by_prob.iter().take(3).map(|&j| &pool[j]).collect();
        let mut ascending: Vec<usize> = (0..row.len()).collect();
        ascending.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b)));
        let bottom: Vec<&AugmentationDescriptor> =
            ascending.iter().take(3).map(|&j| &pool[j]).collect();

        let samples: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.label(i) == class)
            .take(n)
            .collect();
        if samples.is_empty() {
            continue;
        }
        let side = dataset.image(samples[0]).width();
        let cols = 7u32;
        let mut canvas = Image::filled(cols * side, samples.len() as u32 * side, [0, 0, 0])?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, class as u64, 0));
        for (r, &sample) in samples.iter().enumerate() {
            let original = dataset.image(sample);
            let mut tiles: Vec<Image> = vec![original.clone()];
            for desc in top.iter().chain(bottom.iter()) {
                tiles.push(apply_transform(desc, original, &mut rng));
            }
            for (c, tile) in tiles.iter().enumerate() {
                blit(&mut canvas, tile, c as u32 * side, r as u32 * side);
            }
        }
        let path = config
            .output_dir
            .join(format!("preview_{}.png", dataset.class_names()[class]));
        save_png(&canvas, &path)?;
        outputs.push(path);
    }
    Ok(outputs)
}

fn blit(canvas: &mut Image, tile: &Image, x0: u32, y0: u32) {
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            canvas.set_pixel(x0 + x, y0 + y, tile.pixel(x, y));
        }
    }
}

/// Per-seed outcome of the Rastrigin hyperparameter check.
#[derive(Debug, Clone)]
pub struct RastriginRow {
    pub master_seed: u64,
    pub initial_best: f64,
    pub final_best: f64,
    pub generations: usize,
    pub termination: TerminationReason,
}

#[derive(Debug, Clone)]
pub struct RastriginCheck {
    pub dims: usize,
    pub rows: Vec<RastriginRow>,
    pub median_initial: f64,
    pub median_final: f64,
}

impl RastriginCheck {
    /// True when the median final best value is at most half the median
    /// initial best.
    pub fn halved(&self) -> bool {
        self.median_final <= 0.5 * self.median_initial
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "rastrigin check: dims={}, seeds={}\n",
            self.dims,
            self.rows.len()
        );
        for r in &self.rows {
            out.push_str(&format!(
                "  seed {}: initial best {:.4} -> final best {:.4} in {} generations ({:?})\n",
                r.master_seed, r.initial_best, r.final_best, r.generations, r.termination
            ));
        }
        out.push_str(&format!(
            "median initial {:.4}, median final {:.4}, improvement ratio {:.4}\n",
            self.median_initial,
            self.median_final,
            self.median_final / self.median_initial
        ));
        out
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Gene in [0, 1] mapped onto the conventional Rastrigin domain.
pub fn rastrigin_gene_to_x(g: f64) -> f64 {
    -5.12 + 10.24 * g
}

/// Runs the GA against the negative Rastrigin function over `num_seeds`
/// consecutive master seeds. Genes live on a 0.01 grid in [0, 1] and are
/// mapped to [-5.12, 5.12]; the exact optimum (gene 0.5) is on the grid.
pub fn cmd_rastrigin_check(
    dims: usize,
    ga: &GaConfig,
    workers: usize,
    num_seeds: usize,
) -> Result<RastriginCheck, OrchestratorError> {
    if dims == 0 || num_seeds == 0 {
        return Err(OrchestratorError::Config(
            "dims and seed count must be >= 1".into(),
        ));
    }
    let spec = GenomeSpec::new(dims, grid_values(0.01)?)?;
    let fitness = |genome: &[f64], _seed: u64| -> Result<f64, String> {
        let x: Vec<f64> = genome.iter().map(|&g| rastrigin_gene_to_x(g)).collect();
        Ok(-crate::ga::rastrigin(&x))
    };
    let mut rows = Vec::new();
    for k in 0..num_seeds {
        let mut config = ga.clone();
        config.master_seed = ga.master_seed.wrapping_add(k as u64);
        let result = crate::ga::evolve(&config, &spec, fitness, workers)?;
        rows.push(RastriginRow {
            master_seed: config.master_seed,
            initial_best: -result.history[0].best_fitness,
            final_best: -result.best.fitness.expect("evaluated"),
            generations: result.history.len(),
            termination: result.termination,
        });
    }
    let mut initials: Vec<f64> = rows.iter().map(|r| r.initial_best).collect();
    let mut finals: Vec<f64> = rows.iter().map(|r| r.final_best).collect();
    Ok(RastriginCheck {
        dims,
        median_initial: median(&mut initials),
        median_final: median(&mut finals),
        rows,
    })
}
