//! Python bindings: the policy type, the transform pool, metrics, and the
//! Rastrigin benchmark, for scripting and inspection from Python.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use polysearch::augment::{
    apply_policy, apply_transform, canonical_names, canonical_pool, CategoryOrder, Image,
    TransformKind,
};
use polysearch::dataset::synth::SynthConfig;
use polysearch::ga::{evolve, GaConfig, GenomeSpec};
use polysearch::metrics::ConfusionMatrix;
use polysearch::orchestrator::{analyze_policy_matrix, cmd_synth_data, rastrigin_gene_to_x};
use polysearch::policy::{grid_values, PolicyFile};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A class-by-transform probability matrix with named rows and columns.
#[pyclass(name = "Policy", skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    file: PolicyFile,
}

#[pymethods]
impl PyPolicy {
    /// Uniform random policy over the probability grid.
    #[staticmethod]
    fn random(classes: Vec<String>, grid_step: f64, seed: u64) -> PyResult<Self> {
        let matrix = polysearch::policy::random_policy(
            classes.len(),
            canonical_pool().len(),
            grid_step,
            seed,
        )
        .map_err(value_err)?;
        Ok(Self {
            file: PolicyFile::new(&matrix, classes, canonical_names()),
        })
    }

    /// The all-zero (no augmentation) policy.
    #[staticmethod]
    fn zero(classes: Vec<String>, grid_step: f64) -> PyResult<Self> {
        let matrix =
            polysearch::policy::PolicyMatrix::zero(classes.len(), canonical_pool().len(), grid_step)
                .map_err(value_err)?;
        Ok(Self {
            file: PolicyFile::new(&matrix, classes, canonical_names()),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = PolicyFile::load(&path).map_err(value_err)?;
        file.to_matrix().map_err(value_err)?;
        Ok(Self { file })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.file.save(&path).map_err(value_err)
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.file.classes.clone()
    }

    #[getter]
    fn augmentations(&self) -> Vec<String> {
        self.file.augmentations.clone()
    }

    #[getter]
    fn grid_step(&self) -> f64 {
        self.file.grid_step
    }

    fn probabilities(&self) -> Vec<Vec<f64>> {
        self.file.probabilities.clone()
    }

    /// Per-class (geometry, color, cutout) probability means.
    fn category_means(&self) -> PyResult<Vec<(String, f64, f64, f64)>> {
        let matrix = self.file.to_matrix().map_err(value_err)?;
        let analysis = analyze_policy_matrix(&matrix, &self.file.classes);
        Ok(analysis
            .per_class
            .into_iter()
            .map(|row| {
                (
                    row.class,
                    row.category_means[0],
                    row.category_means[1],
                    row.category_means[2],
                )
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Policy(classes={}, augmentations={}, grid_step={})",
            self.file.classes.len(),
            self.file.augmentations.len(),
            self.file.grid_step
        )
    }
}

/// 8-bit interleaved RGB image.
#[pyclass(name = "Image", skip_from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: u32, height: u32, pixels: Vec<u8>) -> PyResult<Self> {
        Ok(Self {
            inner: Image::new(width, height, pixels).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn filled(width: u32, height: u32, rgb: (u8, u8, u8)) -> PyResult<Self> {
        Ok(Self {
            inner: Image::filled(width, height, [rgb.0, rgb.1, rgb.2]).map_err(value_err)?,
        })
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    fn pixels(&self) -> Vec<u8> {
        self.inner.pixels().to_vec()
    }

    /// Apply one pool transform by name; randomized parameters come from
    /// the seed.
    fn apply_transform(&self, name: &str, seed: u64) -> PyResult<Self> {
        let kind = TransformKind::from_name(name)
            .ok_or_else(|| value_err(format!("unknown transform {name:?}")))?;
        let desc = canonical_pool()
            .iter()
            .find(|d| d.kind == kind)
            .expect("pool covers every kind");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: apply_transform(desc, &self.inner, &mut rng),
        })
    }

    /// Apply a policy row to this image (categories in the given order,
    /// e.g. "Geometry>Color>Cutout").
    fn apply_policy(
        &self,
        policy: &PyPolicy,
        class_id: usize,
        order: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let matrix = policy.file.to_matrix().map_err(value_err)?;
        let order = CategoryOrder::parse(order).map_err(value_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: apply_policy(&self.inner, class_id, &matrix, order, &mut rng)
                .map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.width(), self.inner.height())
    }
}

/// (name, category) pairs of the 15-transform pool in canonical order.
#[pyfunction]
fn pool() -> Vec<(String, String)> {
    canonical_pool()
        .iter()
        .map(|d| (d.kind.name().to_string(), d.category.name().to_string()))
        .collect()
}

/// Snap a value to the probability grid (ties round up, clamped to [0, 1]).
#[pyfunction]
fn quantize(value: f64, grid_step: f64) -> PyResult<f64> {
    polysearch::policy::quantize(value, grid_step).map_err(value_err)
}

/// Standard Rastrigin function.
#[pyfunction]
fn rastrigin(x: Vec<f64>) -> f64 {
    polysearch::ga::rastrigin(&x)
}

fn confusion(counts: Vec<Vec<u64>>) -> PyResult<ConfusionMatrix> {
    let names = (0..counts.len()).map(|i| format!("class_{i}")).collect();
    ConfusionMatrix::from_counts(counts, names).map_err(value_err)
}

/// Mean-per-class accuracy of a confusion matrix (rows = true classes).
#[pyfunction]
fn mpca(counts: Vec<Vec<u64>>) -> PyResult<f64> {
    polysearch::metrics::mpca(&confusion(counts)?).map_err(value_err)
}

#[pyfunction]
fn overall_accuracy(counts: Vec<Vec<u64>>) -> PyResult<f64> {
    polysearch::metrics::overall_accuracy(&confusion(counts)?).map_err(value_err)
}

/// Macro one-vs-rest (sensitivity, specificity).
#[pyfunction]
fn sensitivity_specificity(counts: Vec<Vec<u64>>) -> PyResult<(f64, f64)> {
    polysearch::metrics::sensitivity_specificity(&confusion(counts)?).map_err(value_err)
}

/// Run the GA against the negative Rastrigin function; returns
/// (initial_best, final_best, generations).
#[pyfunction]
fn evolve_rastrigin(
    dims: usize,
    population: usize,
    max_generations: usize,
    seed: u64,
) -> PyResult<(f64, f64, usize)> {
    let config = GaConfig {
        population_size: population,
        max_generations,
        master_seed: seed,
        ..GaConfig::default()
    };
    let spec = GenomeSpec::new(dims, grid_values(0.01).map_err(value_err)?).map_err(value_err)?;
    let fitness = |genome: &[f64], _: u64| -> Result<f64, String> {
        let x: Vec<f64> = genome.iter().map(|&g| rastrigin_gene_to_x(g)).collect();
        Ok(-polysearch::ga::rastrigin(&x))
    };
    let result = evolve(&config, &spec, fitness, 1).map_err(value_err)?;
    Ok((
        -result.history[0].best_fitness,
        -result.best.fitness.unwrap_or(f64::NEG_INFINITY),
        result.history.len(),
    ))
}

/// Write the default synthetic confounded-class corpus as class folders;
/// returns the number of images.
#[pyfunction]
fn synth_to_folder(path: PathBuf, per_class: usize, side: u32, seed: u64) -> PyResult<usize> {
    let cfg = SynthConfig::default_confounder(per_class, side, seed);
    cmd_synth_data(&cfg, &path).map_err(value_err)
}

#[pymodule]
fn polysearch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyImage>()?;
    m.add_function(wrap_pyfunction!(pool, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(rastrigin, m)?)?;
    m.add_function(wrap_pyfunction!(mpca, m)?)?;
    m.add_function(wrap_pyfunction!(overall_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity_specificity, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_rastrigin, m)?)?;
    m.add_function(wrap_pyfunction!(synth_to_folder, m)?)?;
    Ok(())
}
