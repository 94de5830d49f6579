//! Scratch harness for desk-scale experiment tuning.

use std::time::Instant;

use polysearch::augment::{canonical_pool, CategoryOrder, Category};
use polysearch::classifier::{
    evaluate_head, fitness_of_policy, train_baseline, train_head, FeatureExtractor, TrainConfig,
};
use polysearch::dataset::synth::{generate_confounder, SynthConfig};
use polysearch::dataset::{stratified_split, Split};
use polysearch::metrics::{mpca, per_class_accuracy};
use polysearch::policy::PolicyMatrix;
use polysearch::seeding::mix_seed;

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0u64);
    let env = |name: &str, default: f64| {
        std::env::var(name)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let mut synth = SynthConfig::default_confounder(200, 64, seed);
    synth.shading_delta = env("DELTA", synth.shading_delta as f64) as i32;
    synth.noise_level = env("NOISE", synth.noise_level);
    synth.center_jitter = env("JITTER", synth.center_jitter);
    println!(
        "delta {} noise {} jitter {}",
        synth.shading_delta, synth.noise_level, synth.center_jitter
    );
    let ds = generate_confounder(&synth).unwrap();
    let ds = stratified_split(ds, (0.8, 0.09, 0.11), seed).unwrap();
    let fe = FeatureExtractor::RawPixels;
    let train_cfg = TrainConfig::default();
    let mut baseline_cfg = train_cfg;
    baseline_cfg.epochs = 20;

    let t0 = Instant::now();
    let baseline = train_baseline(&ds, &fe, &baseline_cfg, mix_seed(seed, u64::MAX - 1, 0)).unwrap();
    println!("baseline train: {:?}", t0.elapsed());

    let cm_val = evaluate_head(&ds, Split::Val, &fe, &baseline).unwrap();
    let cm_test = evaluate_head(&ds, Split::Test, &fe, &baseline).unwrap();
    println!(
        "baseline: val mpca {:.4}, test mpca {:.4}, test per-class {:?}",
        mpca(&cm_val).unwrap(),
        mpca(&cm_test).unwrap(),
        per_class_accuracy(&cm_test)
            .unwrap()
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
    );

    let order = CategoryOrder::DEFAULT;
    let eval = |name: &str, policy: &PolicyMatrix, eval_seed: u64| {
        let t = Instant::now();
        let fit = fitness_of_policy(policy, order, &ds, &fe, &train_cfg, &baseline, eval_seed).unwrap();
        let head = train_head(&ds, policy, order, &fe, &train_cfg, &baseline, eval_seed).unwrap();
        let cm = evaluate_head(&ds, Split::Test, &fe, &head).unwrap();
        println!(
            "{name}: fitness(val) {:.4}, test mpca {:.4}, per-class {:?} ({:?})",
            fit,
            mpca(&cm).unwrap(),
            per_class_accuracy(&cm)
                .unwrap()
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>(),
            t.elapsed()
        );
    };

    let zero = PolicyMatrix::zero(4, 15, 0.1).unwrap();
    eval("zero policy      ", &zero, mix_seed(seed, 0, 0));

    // Geometry at 0.3 for all classes.
    let pool = canonical_pool();
    let mut genes = vec![0.0; 60];
    for class in 0..4 {
        for (j, d) in pool.iter().enumerate() {
            if d.category == Category::Geometry {
                genes[class * 15 + j] = 0.3;
            }
        }
    }
    let geo = PolicyMatrix::from_flat(4, 15, 0.1, genes.clone()).unwrap();
    eval("geometry 0.3     ", &geo, mix_seed(seed, 1, 1));

    for (j, d) in pool.iter().enumerate() {
        if d.category == Category::Geometry {
            for class in 0..4 {
                genes[class * 15 + j] = 0.5;
            }
        }
    }
    let geo5 = PolicyMatrix::from_flat(4, 15, 0.1, genes.clone()).unwrap();
    eval("geometry 0.5     ", &geo5, mix_seed(seed, 1, 2));

    // Color ops at 0.5 on the hue class only (should hurt).
    let mut genes2 = vec![0.0; 60];
    for (j, d) in pool.iter().enumerate() {
        if d.category == Category::Color {
            genes2[j] = 0.5;
        }
    }
    let huecolor = PolicyMatrix::from_flat(4, 15, 0.1, genes2).unwrap();
    eval("color 0.5 on hue ", &huecolor, mix_seed(seed, 1, 3));

    // Random policies for spread.
    for k in 0..3 {
        let p = polysearch::policy::random_policy(4, 15, 0.1, 1000 + k).unwrap();
        eval(&format!("random {k}         "), &p, mix_seed(seed, 2, k));
    }
}
