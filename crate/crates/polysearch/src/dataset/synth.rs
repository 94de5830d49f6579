//! Synthetic confounded-class corpus for desk-scale experiments.
//!
//! Each class renders a blob on a noisy background with jittered position
//! and size. Class identity is carried by exactly one cue: hue (fixed shape,
//! distinctive color), shape (fixed color, distinctive contour), or a subtle
//! directional shading texture. A confounded pair shares shape, hue, and
//! mean brightness and differs only in which side of the blob carries the
//! brighter shading, which keeps it hard but learnable for a linear probe
//! on raw pixels — the regime where class-specific augmentation has room to
//! help.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledImageDataset};
use crate::augment::Image;
use crate::seeding::mix_seed;

/// Neutral color of shape-defined blobs.
pub const SHAPE_RGB: [u8; 3] = [120, 120, 80];
/// Hue-class red.
pub const HUE_RED: [u8; 3] = [200, 60, 60];
/// Blue with the same ITU-R 601 luminance as [`HUE_RED`] (101.9 vs 101.9),
/// so grayscale collapses the pair.
pub const HUE_BLUE: [u8; 3] = [60, 96, 242];
/// Texture-class base color; luminance-matched to the hue classes.
pub const TEXTURE_RGB: [u8; 3] = [60, 96, 242];
/// Background gray level.
const BACKGROUND: i32 = 40;

fn default_shading_delta() -> i32 {
    8
}

fn default_center_jitter() -> f64 {
    0.18
}

fn default_radius() -> f64 {
    0.28
}

fn default_radius_jitter() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobShape {
    Disc,
    Cross,
}

/// Which side of the blob carries the brighter shading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadingSide {
    Top,
    Bottom,
}

/// How one class looks; the generative rule kind of the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Appearance {
    /// Disc whose identity is carried only by its color.
    HueDefined { rgb: [u8; 3] },
    /// Neutral-color blob whose identity is carried by its contour.
    ShapeDefined { shape: BlobShape },
    /// Disc with a faint directional shading; the bright side is the
    /// identity cue.
    TextureDefined { shading: ShadingSide },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecipe {
    pub name: String,
    pub appearance: Appearance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub images_per_class: usize,
    pub image_side: u32,
    pub recipes: Vec<ClassRecipe>,
    /// Indices of the two classes that differ only by the subtle cue.
    pub confounded_pair: (usize, usize),
    /// Per-pixel additive noise amplitude as a fraction of full scale.
    pub noise_level: f64,
    pub seed: u64,
    /// Shading amplitude of the texture cue: the bright side gets +delta,
    /// the dark side -delta, so the confounded pair shares its mean
    /// brightness exactly.
    #[serde(default = "default_shading_delta")]
    pub shading_delta: i32,
    /// Blob center jitter as a fraction of the image side.
    #[serde(default = "default_center_jitter")]
    pub center_jitter: f64,
    /// Blob radius as a fraction of the image side.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Relative radius jitter.
    #[serde(default = "default_radius_jitter")]
    pub radius_jitter: f64,
}

impl SynthConfig {
    /// The four-class benchmark corpus: one hue-defined class, one
    /// shape-defined class, and a texture-confounded pair.
    pub fn default_confounder(images_per_class: usize, image_side: u32, seed: u64) -> Self {
        Self {
            num_classes: 4,
            images_per_class,
            image_side,
            recipes: vec![
                ClassRecipe {
                    name: "hue_red".into(),
                    appearance: Appearance::HueDefined { rgb: HUE_RED },
                },
                ClassRecipe {
                    name: "shape_cross".into(),
                    appearance: Appearance::ShapeDefined {
                        shape: BlobShape::Cross,
                    },
                },
                ClassRecipe {
                    name: "texture_top".into(),
                    appearance: Appearance::TextureDefined {
                        shading: ShadingSide::Top,
                    },
                },
                ClassRecipe {
                    name: "texture_bottom".into(),
                    appearance: Appearance::TextureDefined {
                        shading: ShadingSide::Bottom,
                    },
                },
            ],
            confounded_pair: (2, 3),
            noise_level: 0.05,
            seed,
            shading_delta: default_shading_delta(),
            center_jitter: default_center_jitter(),
            radius: default_radius(),
            radius_jitter: default_radius_jitter(),
        }
    }

    /// Two plain hue-defined classes of identical shape and luminance, plus
    /// the shape and texture classes; the pair (0, 1) is separable only by
    /// hue.
    pub fn hue_pair(images_per_class: usize, image_side: u32, seed: u64) -> Self {
        let mut cfg = Self::default_confounder(images_per_class, image_side, seed);
        cfg.recipes[1] = ClassRecipe {
            name: "hue_blue".into(),
            appearance: Appearance::HueDefined { rgb: HUE_BLUE },
        };
        cfg.recipes[2] = ClassRecipe {
            name: "shape_cross".into(),
            appearance: Appearance::ShapeDefined {
                shape: BlobShape::Cross,
            },
        };
        cfg.recipes[3] = ClassRecipe {
            name: "texture_top".into(),
            appearance: Appearance::TextureDefined {
                shading: ShadingSide::Top,
            },
        };
        cfg.confounded_pair = (0, 1);
        cfg
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |msg: String| Err(DatasetError::BadSynthConfig(msg));
        if self.num_classes < 2 {
            return fail(format!("need >= 2 classes, got {}", self.num_classes));
        }
        if self.recipes.len() != self.num_classes {
            return fail(format!(
                "{} recipes for {} classes",
                self.recipes.len(),
                self.num_classes
            ));
        }
        if self.images_per_class == 0 {
            return fail("images_per_class must be >= 1".into());
        }
        if self.image_side < 8 {
            return fail(format!("image_side {} too small", self.image_side));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return fail(format!("noise_level {} outside [0, 1]", self.noise_level));
        }
        let has_hue = self
            .recipes
            .iter()
            .any(|r| matches!(r.appearance, Appearance::HueDefined { .. }));
        let has_shape = self
            .recipes
            .iter()
            .any(|r| matches!(r.appearance, Appearance::ShapeDefined { .. }));
        if !has_hue || !has_shape {
            return fail("need at least one hue-defined and one shape-defined class".into());
        }
        let (a, b) = self.confounded_pair;
        if a == b || a >= self.num_classes || b >= self.num_classes {
            return fail(format!("bad confounded pair ({a}, {b})"));
        }
        if self.shading_delta < 0 || self.shading_delta > 127 {
            return fail(format!("shading_delta {} outside [0, 127]", self.shading_delta));
        }
        if !(0.0..=0.4).contains(&self.center_jitter) {
            return fail(format!("center_jitter {} outside [0, 0.4]", self.center_jitter));
        }
        if !(0.05..=0.5).contains(&self.radius) || !(0.0..1.0).contains(&self.radius_jitter) {
            return fail(format!(
                "radius {} / radius_jitter {} out of range",
                self.radius, self.radius_jitter
            ));
        }
        Ok(())
    }
}

/// Renders the full corpus. Bit-deterministic per (seed, class, index): the
/// same config always produces identical pixel buffers.
pub fn generate_confounder(cfg: &SynthConfig) -> Result<LabeledImageDataset, DatasetError> {
    cfg.validate()?;
    let mut images = Vec::with_capacity(cfg.num_classes * cfg.images_per_class);
    let mut labels = Vec::with_capacity(images.capacity());
    for (class, recipe) in cfg.recipes.iter().enumerate() {
        for index in 0..cfg.images_per_class {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, class as u64, index as u64));
            images.push(render(cfg, &recipe.appearance, &mut rng));
            labels.push(class);
        }
    }
    let class_names = cfg.recipes.iter().map(|r| r.name.clone()).collect();
    LabeledImageDataset::new(images, labels, class_names)
}

fn render(cfg: &SynthConfig, appearance: &Appearance, rng: &mut ChaCha8Rng) -> Image {
    let s = cfg.image_side as f64;
    // Blob geometry is drawn first so pixel noise draws stay aligned.
    let jitter = cfg.center_jitter * s;
    let cx = s / 2.0 + rng.random_range(-jitter..=jitter);
    let cy = s / 2.0 + rng.random_range(-jitter..=jitter);
    let radius = cfg.radius * s * (1.0 + rng.random_range(-cfg.radius_jitter..=cfg.radius_jitter));
    let noise_amp = (cfg.noise_level * 255.0).round() as i32;

    let (base_rgb, shape, shading) = match appearance {
        Appearance::HueDefined { rgb } => (*rgb, BlobShape::Disc, None),
        Appearance::ShapeDefined { shape } => (SHAPE_RGB, *shape, None),
        Appearance::TextureDefined { shading } => (TEXTURE_RGB, BlobShape::Disc, Some(*shading)),
    };

    Image::from_fn(cfg.image_side, cfg.image_side, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let inside = match shape {
            BlobShape::Disc => dx * dx + dy * dy <= radius * radius,
            BlobShape::Cross => {
                (dx.abs() <= 0.35 * radius && dy.abs() <= radius)
                    || (dy.abs() <= 0.35 * radius && dx.abs() <= radius)
            }
        };
        let mut rgb = [BACKGROUND; 3];
        if inside {
            rgb = [base_rgb[0] as i32, base_rgb[1] as i32, base_rgb[2] as i32];
            if let Some(side) = shading {
                // The cue rides on the blob, so position jitter moves it.
                let above_center = (y as f64) < cy;
                let bright = matches!(side, ShadingSide::Top) == above_center;
                let delta = if bright {
                    cfg.shading_delta
                } else {
                    -cfg.shading_delta
                };
                for v in &mut rgb {
                    *v += delta;
                }
            }
        }
        let mut out = [0u8; 3];
        for (o, v) in out.iter_mut().zip(rgb) {
            let noise = if noise_amp > 0 {
                rng.random_range(-noise_amp..=noise_amp)
            } else {
                0
            };
            *o = (v + noise).clamp(0, 255) as u8;
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generates_balanced_corpus() {
        let cfg = SynthConfig::default_confounder(200, 64, 1);
        let ds = generate_confounder(&cfg).unwrap();
        assert_eq!(ds.len(), 800);
        assert_eq!(ds.num_classes(), 4);
        for class in 0..4 {
            let count = (0..ds.len()).filter(|&i| ds.label(i) == class).count();
            assert_eq!(count, 200);
        }
        assert_eq!(ds.image(0).width(), 64);
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let cfg = SynthConfig::default_confounder(5, 32, 99);
        let a = generate_confounder(&cfg).unwrap();
        let b = generate_confounder(&cfg).unwrap();
        for i in 0..a.len() {
            assert_eq!(a.image(i).pixels(), b.image(i).pixels());
        }
        let mut other = cfg.clone();
        other.seed = 100;
        let c = generate_confounder(&other).unwrap();
        assert_ne!(a.image(0).pixels(), c.image(0).pixels());
    }

    #[test]
    fn hue_pair_colors_share_luminance_after_rounding() {
        let lum = |rgb: [u8; 3]| {
            (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64).round()
        };
        assert_eq!(lum(HUE_RED), lum(HUE_BLUE));
    }

    #[test]
    fn validation_rejects_degenerate_configs() {
        let mut cfg = SynthConfig::default_confounder(10, 32, 0);
        cfg.confounded_pair = (1, 1);
        assert!(cfg.validate().is_err());

        let mut cfg = SynthConfig::default_confounder(10, 32, 0);
        cfg.recipes.pop();
        assert!(cfg.validate().is_err());

        let mut cfg = SynthConfig::default_confounder(10, 32, 0);
        for r in &mut cfg.recipes {
            r.appearance = Appearance::ShapeDefined {
                shape: BlobShape::Disc,
            };
        }
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_serde_round_trips() {
        let cfg = SynthConfig::default_confounder(10, 32, 7);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SynthConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
