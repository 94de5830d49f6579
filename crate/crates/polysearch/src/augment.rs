//! The 15-transform augmentation pool, its category taxonomy, and the
//! class-conditional stochastic policy applicator.
//!
//! Every transform is a pure function of its inputs plus the supplied RNG:
//! identical (descriptor, image, seed) always produce a bit-identical
//! output. Geometry transforms use nearest-neighbor resampling and fill
//! exposed regions with mid-gray 128. Magnitudes are fixed constants (the
//! mean of the conventional search ranges); where a range is symmetric the
//! sign is drawn at random per application.

use std::cell::Cell;

use rand::Rng;
use thiserror::Error;

use crate::policy::PolicyMatrix;

/// Fill value for pixels exposed by geometry transforms and for cutout.
pub const FILL: u8 = 128;

/// Fixed magnitude constants for the pool.
pub const SHEAR_FACTOR: f64 = 0.15;
pub const TRANSLATE_FRACTION: f64 = 0.225;
pub const ROTATE_DEGREES: f64 = 15.0;
pub const SOLARIZE_THRESHOLD: u16 = 128;
pub const POSTERIZE_BITS: u8 = 4;
pub const ENHANCE_DELTA: f64 = 0.45;
pub const CUTOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("zero-area image ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("pixel buffer length {got} does not match {width}x{height}x3 = {expected}")]
    BufferLength {
        width: u32,
        height: u32,
        got: usize,
        expected: usize,
    },
    #[error("class id {class_id} out of range for a {num_classes}-class policy")]
    ClassOutOfRange { class_id: usize, num_classes: usize },
    #[error("policy has {got} augmentation columns, the pool has {expected}")]
    PoolSizeMismatch { got: usize, expected: usize },
    #[error("categories {0:?} are not a permutation of Geometry, Color, Cutout")]
    BadCategoryOrder([Category; 3]),
    #[error("cannot parse category order {0:?} (expected e.g. \"Geometry>Color>Cutout\")")]
    ParseCategoryOrder(String),
    #[error("unknown transform name {0:?}")]
    UnknownTransform(String),
}

/// 8-bit RGB image, row-major interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, AugmentError> {
        if width == 0 || height == 0 {
            return Err(AugmentError::ZeroArea { width, height });
        }
        let expected = width as usize * height as usize * Self::CHANNELS;
        if pixels.len() != expected {
            return Err(AugmentError::BufferLength {
                width,
                height,
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, AugmentError> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * Self::CHANNELS);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * Self::CHANNELS;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * Self::CHANNELS;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Builds an image by evaluating `f` at every (x, y).
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Category {
    Geometry,
    Color,
    Cutout,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Geometry => "Geometry",
            Category::Color => "Color",
            Category::Cutout => "Cutout",
        }
    }
}

/// One of the 15 pool transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    Cutout,
}

impl TransformKind {
    pub fn name(self) -> &'static str {
        match self {
            TransformKind::ShearX => "ShearX",
            TransformKind::ShearY => "ShearY",
            TransformKind::TranslateX => "TranslateX",
            TransformKind::TranslateY => "TranslateY",
            TransformKind::Rotate => "Rotate",
            TransformKind::AutoContrast => "AutoContrast",
            TransformKind::Invert => "Invert",
            TransformKind::Equalize => "Equalize",
            TransformKind::Solarize => "Solarize",
            TransformKind::Posterize => "Posterize",
            TransformKind::Contrast => "Contrast",
            TransformKind::Color => "Color",
            TransformKind::Brightness => "Brightness",
            TransformKind::Sharpness => "Sharpness",
            TransformKind::Cutout => "Cutout",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        canonical_pool()
            .iter()
            .map(|d| d.kind)
            .find(|k| k.name() == name)
    }

    pub fn category(self) -> Category {
        match self {
            TransformKind::ShearX
            | TransformKind::ShearY
            | TransformKind::TranslateX
            | TransformKind::TranslateY
            | TransformKind::Rotate => Category::Geometry,
            TransformKind::Cutout => Category::Cutout,
            _ => Category::Color,
        }
    }
}

/// A pool entry: transform identity, category, and its fixed magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationDescriptor {
    pub kind: TransformKind,
    pub category: Category,
    pub magnitude: Magnitude,
}

/// Fixed magnitude parameters. `signed: true` means the sign (or position,
/// for cutout) is drawn from the RNG at application time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Magnitude {
    ShearFactor(f64),
    /// Fraction of the moved axis length, rounded to whole pixels.
    TranslateFraction(f64),
    RotateDegrees(f64),
    /// Parameter-free ops: AutoContrast, Invert, Equalize.
    None,
    SolarizeThreshold(u16),
    PosterizeBits(u8),
    /// Enhancement factor 1 ± delta; the literal mean of the conventional
    /// range is the identity factor 1.0, so the signed mean is used instead.
    EnhanceDelta(f64),
    /// Masked square side as a fraction of min(width, height).
    CutoutFraction(f64),
}

const POOL: [AugmentationDescriptor; 15] = [
    AugmentationDescriptor {
        kind: TransformKind::ShearX,
        category: Category::Geometry,
        magnitude: Magnitude::ShearFactor(SHEAR_FACTOR),
    },
    AugmentationDescriptor {
        kind: TransformKind::ShearY,
        category: Category::Geometry,
        magnitude: Magnitude::ShearFactor(SHEAR_FACTOR),
    },
    AugmentationDescriptor {
        kind: TransformKind::TranslateX,
        category: Category::Geometry,
        magnitude: Magnitude::TranslateFraction(TRANSLATE_FRACTION),
    },
    AugmentationDescriptor {
        kind: TransformKind::TranslateY,
        category: Category::Geometry,
        magnitude: Magnitude::TranslateFraction(TRANSLATE_FRACTION),
    },
    AugmentationDescriptor {
        kind: TransformKind::Rotate,
        category: Category::Geometry,
        magnitude: Magnitude::RotateDegrees(ROTATE_DEGREES),
    },
    AugmentationDescriptor {
        kind: TransformKind::AutoContrast,
        category: Category::Color,
        magnitude: Magnitude::None,
    },
    AugmentationDescriptor {
        kind: TransformKind::Invert,
        category: Category::Color,
        magnitude: Magnitude::None,
    },
    AugmentationDescriptor {
        kind: TransformKind::Equalize,
        category: Category::Color,
        magnitude: Magnitude::None,
    },
    AugmentationDescriptor {
        kind: TransformKind::Solarize,
        category: Category::Color,
        magnitude: Magnitude::SolarizeThreshold(SOLARIZE_THRESHOLD),
    },
    AugmentationDescriptor {
        kind: TransformKind::Posterize,
        category: Category::Color,
        magnitude: Magnitude::PosterizeBits(POSTERIZE_BITS),
    },
    AugmentationDescriptor {
        kind: TransformKind::Contrast,
        category: Category::Color,
        magnitude: Magnitude::EnhanceDelta(ENHANCE_DELTA),
    },
    AugmentationDescriptor {
        kind: TransformKind::Color,
        category: Category::Color,
        magnitude: Magnitude::EnhanceDelta(ENHANCE_DELTA),
    },
    AugmentationDescriptor {
        kind: TransformKind::Brightness,
        category: Category::Color,
        magnitude: Magnitude::EnhanceDelta(ENHANCE_DELTA),
    },
    AugmentationDescriptor {
        kind: TransformKind::Sharpness,
        category: Category::Color,
        magnitude: Magnitude::EnhanceDelta(ENHANCE_DELTA),
    },
    AugmentationDescriptor {
        kind: TransformKind::Cutout,
        category: Category::Cutout,
        magnitude: Magnitude::CutoutFraction(CUTOUT_FRACTION),
    },
];

/// The canonical ordered pool. Index positions are the genome-column
/// contract: policies, files, and reports all share this ordering.
pub fn canonical_pool() -> &'static [AugmentationDescriptor; 15] {
    &POOL
}

pub fn canonical_names() -> Vec<String> {
    POOL.iter().map(|d| d.kind.name().to_string()).collect()
}

/// A permutation of the three categories, applied in sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryOrder([Category; 3]);

impl CategoryOrder {
    pub const DEFAULT: CategoryOrder =
        CategoryOrder([Category::Geometry, Category::Color, Category::Cutout]);

    pub fn new(categories: [Category; 3]) -> Result<Self, AugmentError> {
        let mut seen = [false; 3];
        for c in categories {
            seen[c as usize] = true;
        }
        if seen != [true; 3] {
            return Err(AugmentError::BadCategoryOrder(categories));
        }
        Ok(Self(categories))
    }

    pub fn categories(&self) -> [Category; 3] {
        self.0
    }

    /// All six orderings, in the reporting row order.
    pub fn all_permutations() -> [CategoryOrder; 6] {
        use Category::{Color, Cutout, Geometry};
        [
            CategoryOrder([Geometry, Color, Cutout]),
            CategoryOrder([Geometry, Cutout, Color]),
            CategoryOrder([Color, Geometry, Cutout]),
            CategoryOrder([Cutout, Geometry, Color]),
            CategoryOrder([Color, Cutout, Geometry]),
            CategoryOrder([Cutout, Color, Geometry]),
        ]
    }

    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let parts: Vec<&str> = text.split('>').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(AugmentError::ParseCategoryOrder(text.to_string()));
        }
        let mut cats = [Category::Geometry; 3];
        for (slot, part) in cats.iter_mut().zip(&parts) {
            *slot = match *part {
                "Geometry" => Category::Geometry,
                "Color" => Category::Color,
                "Cutout" => Category::Cutout,
                _ => return Err(AugmentError::ParseCategoryOrder(text.to_string())),
            };
        }
        Self::new(cats)
    }
}

impl std::fmt::Display for CategoryOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}>{}>{}",
            self.0[0].name(),
            self.0[1].name(),
            self.0[2].name()
        )
    }
}

impl serde::Serialize for CategoryOrder {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for CategoryOrder {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        CategoryOrder::parse(&text).map_err(serde::de::Error::custom)
    }
}

thread_local! {
    static TRANSFORM_COUNT: Cell<u64> = const { Cell::new(0) };
}

/// Number of transform applications performed on the calling thread.
/// Lets tests assert that evaluation paths never augment.
pub fn transforms_applied() -> u64 {
    TRANSFORM_COUNT.with(Cell::get)
}

fn bump_transform_count() {
    TRANSFORM_COUNT.with(|c| c.set(c.get() + 1));
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Applies one pool transform, drawing any free sign/position from `rng`.
pub fn apply_transform(
    desc: &AugmentationDescriptor,
    img: &Image,
    rng: &mut impl Rng,
) -> Image {
    bump_transform_count();
    match (desc.kind, desc.magnitude) {
        (TransformKind::ShearX, Magnitude::ShearFactor(f)) => shear_x(img, f * sign(rng)),
        (TransformKind::ShearY, Magnitude::ShearFactor(f)) => shear_y(img, f * sign(rng)),
        (TransformKind::TranslateX, Magnitude::TranslateFraction(f)) => {
            let px = (f * img.width() as f64).round() as i64;
            translate_x(img, px * sign(rng) as i64)
        }
        (TransformKind::TranslateY, Magnitude::TranslateFraction(f)) => {
            let px = (f * img.height() as f64).round() as i64;
            translate_y(img, px * sign(rng) as i64)
        }
        (TransformKind::Rotate, Magnitude::RotateDegrees(d)) => rotate(img, d * sign(rng)),
        (TransformKind::AutoContrast, _) => autocontrast(img),
        (TransformKind::Invert, _) => invert(img),
        (TransformKind::Equalize, _) => equalize(img),
        (TransformKind::Solarize, Magnitude::SolarizeThreshold(t)) => solarize(img, t),
        (TransformKind::Posterize, Magnitude::PosterizeBits(b)) => posterize(img, b),
        (TransformKind::Contrast, Magnitude::EnhanceDelta(d)) => {
            contrast(img, 1.0 + d * sign(rng))
        }
        (TransformKind::Color, Magnitude::EnhanceDelta(d)) => color(img, 1.0 + d * sign(rng)),
        (TransformKind::Brightness, Magnitude::EnhanceDelta(d)) => {
            brightness(img, 1.0 + d * sign(rng))
        }
        (TransformKind::Sharpness, Magnitude::EnhanceDelta(d)) => {
            sharpness(img, 1.0 + d * sign(rng))
        }
        (TransformKind::Cutout, Magnitude::CutoutFraction(f)) => {
            let side = (f * img.width().min(img.height()) as f64).floor() as u32;
            let cx = rng.random_range(0..img.width()) as i64;
            let cy = rng.random_range(0..img.height()) as i64;
            cutout(img, side, cx, cy, FILL)
        }
        (kind, magnitude) => unreachable!("descriptor mismatch: {kind:?} with {magnitude:?}"),
    }
}

/// Applies a policy row to one sample: categories in `order`, transforms in
/// canonical order within each category, each firing independently with its
/// gene's probability.
pub fn apply_policy(
    img: &Image,
    class_id: usize,
    policy: &PolicyMatrix,
    order: CategoryOrder,
    rng: &mut impl Rng,
) -> Result<Image, AugmentError> {
    if class_id >= policy.num_classes() {
        return Err(AugmentError::ClassOutOfRange {
            class_id,
            num_classes: policy.num_classes(),
        });
    }
    if policy.num_augs() != POOL.len() {
        return Err(AugmentError::PoolSizeMismatch {
            got: policy.num_augs(),
            expected: POOL.len(),
        });
    }
    let mut out = img.clone();
    for cat in order.categories() {
        for (j, desc) in POOL.iter().enumerate() {
            if desc.category != cat {
                continue;
            }
            let p = policy.prob(class_id, j);
            if rng.random::<f64>() < p {
                out = apply_transform(desc, &out, rng);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Geometry transforms: inverse mapping around the image center,
// nearest-neighbor sampling, mid-gray fill.
// ---------------------------------------------------------------------------

fn sample_nearest(img: &Image, xf: f64, yf: f64) -> [u8; 3] {
    let x = xf.round();
    let y = yf.round();
    if x < 0.0 || y < 0.0 || x >= img.width() as f64 || y >= img.height() as f64 {
        return [FILL; 3];
    }
    img.pixel(x as u32, y as u32)
}

/// Horizontal shear by `factor`; 0.0 is the identity.
pub fn shear_x(img: &Image, factor: f64) -> Image {
    let cy = (img.height() - 1) as f64 / 2.0;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let src_x = x as f64 + factor * (y as f64 - cy);
        sample_nearest(img, src_x, y as f64)
    })
}

/// Vertical shear by `factor`; 0.0 is the identity.
pub fn shear_y(img: &Image, factor: f64) -> Image {
    let cx = (img.width() - 1) as f64 / 2.0;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let src_y = y as f64 + factor * (x as f64 - cx);
        sample_nearest(img, x as f64, src_y)
    })
}

/// Shift right by `offset` pixels (negative shifts left); 0 is the identity.
pub fn translate_x(img: &Image, offset: i64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let src_x = x as i64 - offset;
        if src_x < 0 || src_x >= img.width() as i64 {
            [FILL; 3]
        } else {
            img.pixel(src_x as u32, y)
        }
    })
}

/// Shift down by `offset` pixels (negative shifts up); 0 is the identity.
pub fn translate_y(img: &Image, offset: i64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let src_y = y as i64 - offset;
        if src_y < 0 || src_y >= img.height() as i64 {
            [FILL; 3]
        } else {
            img.pixel(x, src_y as u32)
        }
    })
}

/// Rotation by `degrees` counterclockwise around the center; 0.0 is the
/// identity.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (img.width() - 1) as f64 / 2.0;
    let cy = (img.height() - 1) as f64 / 2.0;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // Inverse rotation of the destination coordinate.
        let src_x = cx + cos * dx + sin * dy;
        let src_y = cy - sin * dx + cos * dy;
        sample_nearest(img, src_x, src_y)
    })
}

// ---------------------------------------------------------------------------
// Color transforms.
// ---------------------------------------------------------------------------

fn map_channels(img: &Image, luts: &[[u8; 256]; 3]) -> Image {
    let mut out = img.clone();
    for (i, v) in out.pixels.iter_mut().enumerate() {
        *v = luts[i % 3][*v as usize];
    }
    out
}

/// Per-channel contrast stretch: darkest value to 0, brightest to 255.
/// Constant channels and channels already spanning the full range are left
/// unchanged.
pub fn autocontrast(img: &Image) -> Image {
    let mut luts = [[0u8; 256]; 3];
    for c in 0..3 {
        let mut lo = 255u8;
        let mut hi = 0u8;
        for v in img.pixels.iter().skip(c).step_by(3) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        for (v, slot) in luts[c].iter_mut().enumerate() {
            *slot = if lo >= hi {
                v as u8
            } else {
                let scaled =
                    (v as f64 - lo as f64) * 255.0 / (hi as f64 - lo as f64);
                scaled.round().clamp(0.0, 255.0) as u8
            };
        }
    }
    map_channels(img, &luts)
}

/// v -> 255 - v. An involution.
pub fn invert(img: &Image) -> Image {
    let mut out = img.clone();
    for v in out.pixels.iter_mut() {
        *v = 255 - *v;
    }
    out
}

/// Per-channel histogram equalization with the cumulative-distribution
/// remapping v -> round(255 * cdf(v) / total). The map is a monotone
/// function of the cdf alone, which makes a second application the exact
/// identity. Constant channels are left unchanged.
pub fn equalize(img: &Image) -> Image {
    let total = (img.width() as u64 * img.height() as u64) as f64;
    let mut luts = [[0u8; 256]; 3];
    for c in 0..3 {
        let mut hist = [0u64; 256];
        for v in img.pixels.iter().skip(c).step_by(3) {
            hist[*v as usize] += 1;
        }
        if hist.iter().filter(|&&h| h > 0).count() <= 1 {
            for (v, slot) in luts[c].iter_mut().enumerate() {
                *slot = v as u8;
            }
            continue;
        }
        let mut cdf = 0u64;
        for (v, slot) in luts[c].iter_mut().enumerate() {
            cdf += hist[v];
            *slot = (255.0 * cdf as f64 / total).round() as u8;
        }
    }
    map_channels(img, &luts)
}

/// Inverts every value at or above the threshold. Threshold 256 is the
/// identity on 8-bit input.
pub fn solarize(img: &Image, threshold: u16) -> Image {
    let mut out = img.clone();
    for v in out.pixels.iter_mut() {
        if *v as u16 >= threshold {
            *v = 255 - *v;
        }
    }
    out
}

/// Keeps the top `bits` bits of each channel value. 8 bits is the identity.
pub fn posterize(img: &Image, bits: u8) -> Image {
    let bits = bits.min(8);
    let mask: u8 = if bits == 0 {
        0
    } else {
        0xffu8 << (8 - bits)
    };
    let mut out = img.clone();
    for v in out.pixels.iter_mut() {
        *v &= mask;
    }
    out
}

fn luminance(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

fn blend_px(degenerate: f64, original: u8, factor: f64) -> u8 {
    let v = (1.0 - factor) * degenerate + factor * original as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// Blend toward the mean-luminance gray image; factor 1.0 is the identity.
pub fn contrast(img: &Image, factor: f64) -> Image {
    let mut sum = 0.0;
    for y in 0..img.height() {
        for x in 0..img.width() {
            sum += luminance(img.pixel(x, y));
        }
    }
    let mean = (sum / (img.width() as f64 * img.height() as f64)).round();
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        [
            blend_px(mean, p[0], factor),
            blend_px(mean, p[1], factor),
            blend_px(mean, p[2], factor),
        ]
    })
}

/// Blend toward the per-pixel grayscale image (saturation); factor 1.0 is
/// the identity, factor 0.0 is full grayscale.
pub fn color(img: &Image, factor: f64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        let gray = luminance(p).round();
        [
            blend_px(gray, p[0], factor),
            blend_px(gray, p[1], factor),
            blend_px(gray, p[2], factor),
        ]
    })
}

/// Blend toward black; factor 1.0 is the identity.
pub fn brightness(img: &Image, factor: f64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        [
            blend_px(0.0, p[0], factor),
            blend_px(0.0, p[1], factor),
            blend_px(0.0, p[2], factor),
        ]
    })
}

/// 3x3 smoothing with kernel [[1,1,1],[1,5,1],[1,1,1]]/13, replicate edges.
fn smooth3x3(img: &Image) -> Vec<[f64; 3]> {
    let w = img.width() as i64;
    let h = img.height() as i64;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let weight = if dx == 0 && dy == 0 { 5.0 } else { 1.0 };
                    let sx = (x + dx).clamp(0, w - 1) as u32;
                    let sy = (y + dy).clamp(0, h - 1) as u32;
                    let p = img.pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += weight * p[c] as f64;
                    }
                }
            }
            out.push([acc[0] / 13.0, acc[1] / 13.0, acc[2] / 13.0]);
        }
    }
    out
}

/// Blend toward the 3x3-smoothed image; factor 1.0 is the identity.
pub fn sharpness(img: &Image, factor: f64) -> Image {
    let smooth = smooth3x3(img);
    let w = img.width() as usize;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        let s = smooth[y as usize * w + x as usize];
        [
            blend_px(s[0], p[0], factor),
            blend_px(s[1], p[1], factor),
            blend_px(s[2], p[2], factor),
        ]
    })
}

/// Masks the axis-aligned square of side `side` centered at (cx, cy),
/// clipped at the borders, with the fill value.
pub fn cutout(img: &Image, side: u32, cx: i64, cy: i64, fill: u8) -> Image {
    let mut out = img.clone();
    if side == 0 {
        return out;
    }
    let half = side as i64 / 2;
    let x0 = (cx - half).max(0);
    let y0 = (cy - half).max(0);
    let x1 = (cx - half + side as i64).min(img.width() as i64);
    let y1 = (cy - half + side as i64).min(img.height() as i64);
    for y in y0..y1 {
        for x in x0..x1 {
            out.set_pixel(x as u32, y as u32, [fill; 3]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_image(seed: u64, w: u32, h: u32) -> Image {
        let mut r = rng(seed);
        let pixels = (0..w as usize * h as usize * 3)
            .map(|_| r.random::<u8>())
            .collect();
        Image::new(w, h, pixels).unwrap()
    }

    #[test]
    fn pool_has_fifteen_entries_in_canonical_order() {
        let pool = canonical_pool();
        assert_eq!(pool.len(), 15);
        assert_eq!(pool[0].kind, TransformKind::ShearX);
        assert_eq!(pool[14].kind, TransformKind::Cutout);
        let geometry = pool.iter().filter(|d| d.category == Category::Geometry).count();
        let color = pool.iter().filter(|d| d.category == Category::Color).count();
        let cutout = pool.iter().filter(|d| d.category == Category::Cutout).count();
        assert_eq!((geometry, color, cutout), (5, 9, 1));
    }

    #[test]
    fn pool_names_round_trip() {
        for desc in canonical_pool() {
            assert_eq!(TransformKind::from_name(desc.kind.name()), Some(desc.kind));
        }
        assert_eq!(TransformKind::from_name("Flip"), None);
    }

    #[test]
    fn invert_is_involution() {
        let img = random_image(1, 13, 9);
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn solarize_threshold_arithmetic() {
        let img = Image::new(2, 1, vec![200, 100, 128, 127, 0, 255]).unwrap();
        let out = solarize(&img, 128);
        assert_eq!(out.pixels(), &[55, 100, 127, 127, 0, 0]);
    }

    #[test]
    fn solarize_256_is_identity() {
        let img = random_image(2, 8, 8);
        assert_eq!(solarize(&img, 256), img);
    }

    #[test]
    fn posterize_bit_masking() {
        let img = Image::new(1, 1, vec![200, 255, 3]).unwrap();
        let out = posterize(&img, 4);
        assert_eq!(out.pixels(), &[192, 240, 0]);
        assert_eq!(posterize(&img, 8), img);
    }

    #[test]
    fn posterize_is_idempotent_for_fixed_bits() {
        let img = random_image(3, 10, 10);
        for bits in 1..=8 {
            let once = posterize(&img, bits);
            assert_eq!(posterize(&once, bits), once);
        }
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = random_image(4, 11, 7);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(shear_x(&img, 0.0), img);
        assert_eq!(shear_y(&img, 0.0), img);
        assert_eq!(translate_x(&img, 0), img);
        assert_eq!(translate_y(&img, 0), img);
    }

    #[test]
    fn translate_moves_content_and_fills() {
        let mut img = Image::filled(4, 1, [10, 20, 30]).unwrap();
        img.set_pixel(0, 0, [1, 2, 3]);
        let out = translate_x(&img, 1);
        assert_eq!(out.pixel(0, 0), [FILL; 3]);
        assert_eq!(out.pixel(1, 0), [1, 2, 3]);
    }

    #[test]
    fn autocontrast_full_range_is_identity() {
        // Every channel contains both 0 and 255.
        let mut img = random_image(5, 6, 6);
        img.set_pixel(0, 0, [0, 0, 0]);
        img.set_pixel(1, 0, [255, 255, 255]);
        assert_eq!(autocontrast(&img), img);
    }

    #[test]
    fn autocontrast_constant_is_identity() {
        let img = Image::filled(5, 4, [90, 14, 200]).unwrap();
        assert_eq!(autocontrast(&img), img);
    }

    #[test]
    fn autocontrast_is_idempotent() {
        for seed in 0..20 {
            let img = random_image(seed, 9, 5);
            let once = autocontrast(&img);
            assert_eq!(autocontrast(&once), once);
        }
    }

    #[test]
    fn equalize_is_idempotent() {
        for seed in 0..20 {
            let img = random_image(100 + seed, 7, 6);
            let once = equalize(&img);
            assert_eq!(equalize(&once), once);
        }
    }

    #[test]
    fn equalize_idempotent_on_skewed_histograms() {
        // Heavy mass at one value plus a thin tail; the shape that breaks
        // min-anchored remappings.
        let mut img = Image::filled(35, 32, [10, 10, 10]).unwrap();
        img.set_pixel(0, 0, [11, 11, 11]);
        for x in 0..32 {
            img.set_pixel(x, 1, [12, 200, 40]);
        }
        let once = equalize(&img);
        assert_eq!(equalize(&once), once);
    }

    #[test]
    fn equalize_constant_channel_unchanged() {
        let img = Image::filled(6, 6, [42, 42, 42]).unwrap();
        assert_eq!(equalize(&img), img);
    }

    #[test]
    fn brightness_zero_factor_is_black() {
        let img = random_image(6, 5, 5);
        let out = brightness(&img, 0.0);
        assert!(out.pixels().iter().all(|&v| v == 0));
    }

    #[test]
    fn enhancement_factor_one_is_identity() {
        let img = random_image(7, 8, 8);
        assert_eq!(contrast(&img, 1.0), img);
        assert_eq!(color(&img, 1.0), img);
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(sharpness(&img, 1.0), img);
    }

    #[test]
    fn color_zero_factor_makes_channels_equal() {
        let img = random_image(8, 6, 4);
        let out = color(&img, 0.0);
        for y in 0..out.height() {
            for x in 0..out.width() {
                let p = out.pixel(x, y);
                assert_eq!(p[0], p[1]);
                assert_eq!(p[1], p[2]);
            }
        }
    }

    #[test]
    fn cutout_masks_exact_clipped_square() {
        // No pixel equals the fill value, so changed pixels = masked pixels.
        let img = Image::filled(20, 16, [7, 7, 7]).unwrap();
        let side = 4;
        for (cx, cy) in [(10i64, 8i64), (0, 0), (19, 15), (1, 8)] {
            let out = cutout(&img, side, cx, cy, FILL);
            let mut min_x = i64::MAX;
            let mut max_x = i64::MIN;
            let mut min_y = i64::MAX;
            let mut max_y = i64::MIN;
            let mut changed = 0i64;
            for y in 0..16i64 {
                for x in 0..20i64 {
                    if out.pixel(x as u32, y as u32) != [7, 7, 7] {
                        assert_eq!(out.pixel(x as u32, y as u32), [FILL; 3]);
                        changed += 1;
                        min_x = min_x.min(x);
                        max_x = max_x.max(x);
                        min_y = min_y.min(y);
                        max_y = max_y.max(y);
                    }
                }
            }
            let half = side as i64 / 2;
            let x0 = (cx - half).max(0);
            let y0 = (cy - half).max(0);
            let x1 = (cx - half + side as i64).min(20);
            let y1 = (cy - half + side as i64).min(16);
            assert_eq!(changed, (x1 - x0) * (y1 - y0));
            assert_eq!((min_x, max_x + 1, min_y, max_y + 1), (x0, x1, y0, y1));
        }
    }

    #[test]
    fn cutout_side_matches_fraction_of_min_side() {
        let img = Image::filled(30, 20, [9, 9, 9]).unwrap();
        let desc = &canonical_pool()[14];
        let mut r = rng(11);
        let out = apply_transform(desc, &img, &mut r);
        let changed = out
            .pixels()
            .chunks(3)
            .filter(|p| *p != [9, 9, 9])
            .count();
        // side = floor(0.2 * 20) = 4; the patch may clip at borders.
        assert!(changed <= 16);
        assert!(changed > 0);
    }

    #[test]
    fn apply_transform_is_deterministic_given_seed() {
        let img = random_image(9, 12, 12);
        for desc in canonical_pool() {
            let a = apply_transform(desc, &img, &mut rng(77));
            let b = apply_transform(desc, &img, &mut rng(77));
            assert_eq!(a, b, "{:?} not deterministic", desc.kind);
        }
    }

    #[test]
    fn apply_policy_zero_matrix_is_identity() {
        let img = random_image(10, 16, 16);
        let policy = PolicyMatrix::zero(3, 15, 0.1).unwrap();
        for order in CategoryOrder::all_permutations() {
            let out = apply_policy(&img, 1, &policy, order, &mut rng(5)).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn apply_policy_forced_single_op_equals_direct_call() {
        let img = random_image(11, 16, 16);
        // Invert (index 6) with probability 1, everything else 0.
        let mut genes = vec![0.0; 15];
        genes[6] = 1.0;
        let policy = PolicyMatrix::from_flat(1, 15, 0.1, genes).unwrap();
        let out = apply_policy(&img, 0, &policy, CategoryOrder::DEFAULT, &mut rng(3)).unwrap();
        assert_eq!(out, invert(&img));
    }

    #[test]
    fn apply_policy_rejects_out_of_range_class() {
        let img = random_image(12, 8, 8);
        let policy = PolicyMatrix::zero(2, 15, 0.1).unwrap();
        let err = apply_policy(&img, 2, &policy, CategoryOrder::DEFAULT, &mut rng(0));
        assert!(matches!(err, Err(AugmentError::ClassOutOfRange { .. })));
    }

    #[test]
    fn apply_policy_firing_fraction_matches_probability() {
        let img = Image::filled(6, 6, [0, 0, 0]).unwrap();
        let mut genes = vec![0.0; 15];
        genes[6] = 0.5; // Invert fires half the time; output differs iff fired.
        let policy = PolicyMatrix::from_flat(1, 15, 0.1, genes).unwrap();
        let mut fired = 0u32;
        let trials = 10_000;
        let mut r = rng(2024);
        for _ in 0..trials {
            let out = apply_policy(&img, 0, &policy, CategoryOrder::DEFAULT, &mut r).unwrap();
            if out != img {
                fired += 1;
            }
        }
        let fraction = fired as f64 / trials as f64;
        assert!(
            (fraction - 0.5).abs() <= 0.02,
            "firing fraction {fraction} outside 0.5 +/- 0.02"
        );
    }

    #[test]
    fn category_order_parse_and_display() {
        let order = CategoryOrder::parse("Cutout>Geometry>Color").unwrap();
        assert_eq!(order.to_string(), "Cutout>Geometry>Color");
        assert!(CategoryOrder::parse("Geometry>Geometry>Color").is_err());
        assert!(CategoryOrder::parse("Geometry>Color").is_err());
        assert_eq!(CategoryOrder::all_permutations().len(), 6);
        let unique: std::collections::HashSet<String> = CategoryOrder::all_permutations()
            .iter()
            .map(|o| o.to_string())
            .collect();
        assert_eq!(unique.len(), 6);
    }

    #[test]
    fn zero_area_image_is_rejected() {
        assert!(matches!(
            Image::new(0, 5, vec![]),
            Err(AugmentError::ZeroArea { .. })
        ));
        assert!(matches!(
            Image::new(5, 0, vec![]),
            Err(AugmentError::ZeroArea { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn every_transform_preserves_dimensions(
            seed in any::<u64>(),
            w in 1u32..24,
            h in 1u32..24,
            which in 0usize..15,
        ) {
            let img = random_image(seed, w, h);
            let desc = &canonical_pool()[which];
            let out = apply_transform(desc, &img, &mut rng(seed ^ 0xabcd));
            prop_assert_eq!(out.width(), w);
            prop_assert_eq!(out.height(), h);
            prop_assert_eq!(out.pixels().len(), img.pixels().len());
        }

        #[test]
        fn apply_policy_preserves_dimensions(seed in any::<u64>()) {
            let img = random_image(seed, 16, 12);
            let policy = crate::policy::random_policy(4, 15, 0.1, seed).unwrap();
            let out = apply_policy(&img, 2, &policy, CategoryOrder::DEFAULT, &mut rng(seed)).unwrap();
            prop_assert_eq!(out.width(), 16);
            prop_assert_eq!(out.height(), 12);
        }
    }
}
