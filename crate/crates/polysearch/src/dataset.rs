//! Dataset ingestion (class-folder trees and IDX archives), stratified
//! splitting, and export back to class folders.
//!
//! Datasets are immutable after load. Access to the test split is counted
//! so runs can prove the test data stayed untouched during search.

pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::Image;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} has {1} class directories; need at least 2")]
    TooFewClasses(PathBuf, usize),
    #[error("class directory {0} contains no decodable images")]
    EmptyClass(PathBuf),
    #[error("images/labels/splits have mismatched lengths: {images}/{labels}/{splits}")]
    LengthMismatch {
        images: usize,
        labels: usize,
        splits: usize,
    },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: bad magic number at offset {offset}: got {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        offset: usize,
        got: u32,
        expected: u32,
    },
    #[error("{path}: truncated at offset {offset}: needed {needed} more bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("split fractions {0:?} must all be positive and sum to 1")]
    BadFractions((f64, f64, f64)),
    #[error("class {class:?} has {samples} samples; stratified splitting needs at least 3")]
    ClassTooSmall { class: String, samples: usize },
    #[error("invalid synthetic config: {0}")]
    BadSynthConfig(String),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Images with labels, class names, and per-sample split tags.
#[derive(Debug)]
pub struct LabeledImageDataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    splits: Vec<Split>,
    test_accesses: AtomicU64,
}

impl Clone for LabeledImageDataset {
    fn clone(&self) -> Self {
        Self {
            images: self.images.clone(),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
            splits: self.splits.clone(),
            test_accesses: AtomicU64::new(self.test_accesses.load(Ordering::Relaxed)),
        }
    }
}

impl LabeledImageDataset {
    /// All samples start in the train split; use [`stratified_split`] to tag.
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let splits = vec![Split::Train; images.len()];
        Self::with_splits(images, labels, class_names, splits)
    }

    pub fn with_splits(
        images: Vec<Image>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        splits: Vec<Split>,
    ) -> Result<Self, DatasetError> {
        if images.len() != labels.len() || images.len() != splits.len() {
            return Err(DatasetError::LengthMismatch {
                images: images.len(),
                labels: labels.len(),
                splits: splits.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DatasetError::LabelOutOfRange {
                label: bad,
                num_classes: class_names.len(),
            });
        }
        Ok(Self {
            images,
            labels,
            class_names,
            splits,
            test_accesses: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    /// Indices of one split, in stored order. Enumerating the test split
    /// bumps the access counter; that counter staying at zero is the proof
    /// that a search never touched held-out data.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        if split == Split::Test {
            self.test_accesses.fetch_add(1, Ordering::Relaxed);
        }
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn test_access_count(&self) -> u64 {
        self.test_accesses.load(Ordering::Relaxed)
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let mut sizes = (0, 0, 0);
        for s in &self.splits {
            match s {
                Split::Train => sizes.0 += 1,
                Split::Val => sizes.1 += 1,
                Split::Test => sizes.2 += 1,
            }
        }
        sizes
    }
}

/// Nearest-neighbor resize to a square side. Same-size input is returned
/// unchanged.
pub fn resize_nearest(img: &Image, side: u32) -> Image {
    if img.width() == side && img.height() == side {
        return img.clone();
    }
    let (w, h) = (img.width() as u64, img.height() as u64);
    Image::from_fn(side, side, |x, y| {
        let sx = (x as u64 * w / side as u64).min(w - 1) as u32;
        let sy = (y as u64 * h / side as u64).min(h - 1) as u32;
        img.pixel(sx, sy)
    })
}

fn decode_image(path: &Path, side: u32) -> Result<Image, DatasetError> {
    let decoded = image::open(path)
        .map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    let img = Image::new(w, h, decoded.into_raw())?;
    Ok(resize_nearest(&img, side))
}

/// Result of a folder load: the dataset plus the number of image files that
/// failed to decode and were skipped.
#[derive(Debug, Clone)]
pub struct FolderLoad {
    pub dataset: LabeledImageDataset,
    pub skipped: usize,
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Loads `root/<class_name>/*.png|jpg`, classes in sorted directory order,
/// files in sorted name order, every image resized to `side`x`side` RGB.
/// Undecodable image files are skipped with a warning and counted.
pub fn load_class_folders(root: &Path, side: u32) -> Result<FolderLoad, DatasetError> {
    let read_dir = |p: &Path| {
        fs::read_dir(p).map_err(|source| DatasetError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let mut class_dirs: Vec<PathBuf> = Vec::new();
    for entry in read_dir(root)? {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        if entry.path().is_dir() {
            class_dirs.push(entry.path());
        }
    }
    class_dirs.sort();
    if class_dirs.len() < 2 {
        return Err(DatasetError::TooFewClasses(
            root.to_path_buf(),
            class_dirs.len(),
        ));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    let mut skipped = 0usize;
    for (class_idx, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        let mut decoded_any = false;
        for file in files {
            match decode_image(&file, side) {
                Ok(img) => {
                    images.push(img);
                    labels.push(class_idx);
                    decoded_any = true;
                }
                Err(err) => {
                    log::warn!("skipping undecodable file {}: {err}", file.display());
                    skipped += 1;
                }
            }
        }
        if !decoded_any {
            return Err(DatasetError::EmptyClass(dir.clone()));
        }
        class_names.push(name);
    }
    Ok(FolderLoad {
        dataset: LabeledImageDataset::new(images, labels, class_names)?,
        skipped,
    })
}

/// Writes the dataset back out as `root/<class_name>/NNNNN.png`, the layout
/// [`load_class_folders`] reads.
pub fn export_class_folders(ds: &LabeledImageDataset, root: &Path) -> Result<(), DatasetError> {
    let io_err = |path: &Path, source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let mut per_class_counter = vec![0usize; ds.num_classes()];
    for i in 0..ds.len() {
        let class = ds.label(i);
        let dir = root.join(&ds.class_names()[class]);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(format!("{:05}.png", per_class_counter[class]));
        per_class_counter[class] += 1;
        let img = ds.image(i);
        let buffer: image::RgbImage =
            image::ImageBuffer::from_raw(img.width(), img.height(), img.pixels().to_vec())
                .expect("pixel buffer matches dimensions");
        buffer.save(&path).map_err(|source| DatasetError::Image {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    offset: usize,
}

impl<'a> IdxReader<'a> {
    fn open(path: &'a Path) -> Result<Self, DatasetError> {
        let bytes = fs::read(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path,
            bytes,
            offset: 0,
        })
    }

    fn read_u32_be(&mut self) -> Result<u32, DatasetError> {
        let slice = self.take(4)?;
        Ok(u32::from_be_bytes([slice[0], slice[1], slice[2], slice[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&[u8], DatasetError> {
        if self.offset + n > self.bytes.len() {
            return Err(DatasetError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.offset,
                needed: self.offset + n - self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn expect_magic(&mut self, expected: u32) -> Result<(), DatasetError> {
        let offset = self.offset;
        let got = self.read_u32_be()?;
        if got != expected {
            return Err(DatasetError::BadMagic {
                path: self.path.to_path_buf(),
                offset,
                got,
                expected,
            });
        }
        Ok(())
    }
}

/// Loads a standard big-endian IDX image/label pair (grayscale images are
/// replicated to RGB). Class names are the digit strings "0".."<max>".
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageDataset, DatasetError> {
    let mut ir = IdxReader::open(images_path)?;
    ir.expect_magic(IDX_IMAGES_MAGIC)?;
    let count = ir.read_u32_be()? as usize;
    let rows = ir.read_u32_be()? as usize;
    let cols = ir.read_u32_be()? as usize;

    let mut lr = IdxReader::open(labels_path)?;
    lr.expect_magic(IDX_LABELS_MAGIC)?;
    let label_count = lr.read_u32_be()? as usize;
    if count != label_count {
        return Err(DatasetError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let gray = ir.take(rows * cols)?;
        let mut rgb = Vec::with_capacity(rows * cols * 3);
        for &v in gray {
            rgb.extend_from_slice(&[v, v, v]);
        }
        images.push(Image::new(cols as u32, rows as u32, rgb)?);
    }
    let labels: Vec<usize> = lr.take(count)?.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let class_names = (0..num_classes).map(|c| c.to_string()).collect();
    LabeledImageDataset::new(images, labels, class_names)
}

/// Tags every sample with a split. Per class, samples are shuffled by the
/// seed and partitioned by the fractions with largest-remainder rounding
/// (ties to the earlier split); train and val are then guaranteed at least
/// one sample each, borrowing from the largest split if rounding left them
/// empty.
pub fn stratified_split(
    ds: LabeledImageDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<LabeledImageDataset, DatasetError> {
    let (ft, fv, fs) = fractions;
    let sum = ft + fv + fs;
    if !(ft > 0.0 && fv > 0.0 && fs >= 0.0 && (sum - 1.0).abs() <= 1e-9) {
        return Err(DatasetError::BadFractions(fractions));
    }

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for i in 0..ds.len() {
        per_class[ds.label(i)].push(i);
    }
    let mut splits = vec![Split::Train; ds.len()];
    for (class, indices) in per_class.iter_mut().enumerate() {
        if indices.len() < 3 {
            return Err(DatasetError::ClassTooSmall {
                class: ds.class_names()[class].clone(),
                samples: indices.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::mix_seed(seed, class as u64, 0));
        indices.shuffle(&mut rng);

        let n = indices.len();
        let quotas = [ft * n as f64, fv * n as f64, fs * n as f64];
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut remainders: Vec<(usize, f64)> = quotas
            .iter()
            .enumerate()
            .map(|(k, q)| (k, q - q.floor()))
            .collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut leftover = n - counts.iter().sum::<usize>();
        for &(k, _) in remainders.iter().cycle() {
            if leftover == 0 {
                break;
            }
            counts[k] += 1;
            leftover -= 1;
        }
        // Train and val must be represented for every class.
        for needy in [0usize, 1] {
            if counts[needy] == 0 {
                let largest = (0..3).max_by_key(|&k| counts[k]).unwrap();
                counts[largest] -= 1;
                counts[needy] += 1;
            }
        }

        let mut cursor = 0usize;
        for (k, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
            for &i in &indices[cursor..cursor + counts[k]] {
                splits[i] = split;
            }
            cursor += counts[k];
        }
    }
    LabeledImageDataset::with_splits(
        ds.images.clone(),
        ds.labels.clone(),
        ds.class_names.clone(),
        splits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn color_image(seed: u64, w: u32, h: u32) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn folder_round_trip_preserves_labels_and_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        let images: Vec<Image> = (0..5).map(|i| color_image(i, 8, 8)).collect();
        let labels = vec![0, 0, 0, 1, 1];
        let ds = LabeledImageDataset::new(images, labels, vec!["a".into(), "b".into()]).unwrap();
        export_class_folders(&ds, &root).unwrap();

        let loaded = load_class_folders(&root, 8).unwrap();
        assert_eq!(loaded.skipped, 0);
        assert_eq!(loaded.dataset.len(), 5);
        assert_eq!(loaded.dataset.class_names(), ds.class_names());
        for i in 0..5 {
            assert_eq!(loaded.dataset.label(i), ds.label(i));
            assert_eq!(loaded.dataset.image(i), ds.image(i));
        }
    }

    #[test]
    fn folder_load_is_deterministic_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        for (class, n) in [("b", 2usize), ("a", 3)] {
            let class_dir = root.join(class);
            fs::create_dir_all(&class_dir).unwrap();
            for i in 0..n {
                let img: image::RgbImage =
                    image::ImageBuffer::from_fn(4, 4, |x, y| {
                        image::Rgb([x as u8, y as u8, (i * 40) as u8])
                    });
                img.save(class_dir.join(format!("{i}.png"))).unwrap();
            }
        }
        let first = load_class_folders(&root, 4).unwrap().dataset;
        let second = load_class_folders(&root, 4).unwrap().dataset;
        assert_eq!(first.class_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(first.len(), 5);
        assert_eq!(first.label(0), 0);
        assert_eq!(first.label(3), 1);
        for i in 0..5 {
            assert_eq!(first.image(i), second.image(i));
        }
    }

    #[test]
    fn folder_load_skips_undecodable_files() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        for class in ["a", "b"] {
            let class_dir = root.join(class);
            fs::create_dir_all(&class_dir).unwrap();
            let img: image::RgbImage = image::ImageBuffer::new(4, 4);
            img.save(class_dir.join("ok.png")).unwrap();
        }
        fs::write(root.join("a").join("broken.png"), b"not a png").unwrap();
        let loaded = load_class_folders(&root, 4).unwrap();
        assert_eq!(loaded.skipped, 1);
        assert_eq!(loaded.dataset.len(), 2);
    }

    #[test]
    fn folder_load_rejects_empty_class_and_single_class() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        fs::create_dir_all(root.join("only")).unwrap();
        let img: image::RgbImage = image::ImageBuffer::new(4, 4);
        img.save(root.join("only").join("a.png")).unwrap();
        assert!(matches!(
            load_class_folders(&root, 4),
            Err(DatasetError::TooFewClasses(_, 1))
        ));

        fs::create_dir_all(root.join("empty")).unwrap();
        assert!(matches!(
            load_class_folders(&root, 4),
            Err(DatasetError::EmptyClass(_))
        ));
    }

    #[test]
    fn grayscale_promotes_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        for class in ["a", "b"] {
            fs::create_dir_all(root.join(class)).unwrap();
            let img: image::GrayImage =
                image::ImageBuffer::from_fn(4, 4, |x, _| image::Luma([(x * 60) as u8]));
            img.save(root.join(class).join("g.png")).unwrap();
        }
        let ds = load_class_folders(&root, 4).unwrap().dataset;
        let px = ds.image(0).pixel(1, 0);
        assert_eq!(px[0], px[1]);
        assert_eq!(px[1], px[2]);
        assert_eq!(px[0], 60);
    }

    fn write_idx_pair(dir: &Path, count: u32, rows: u32, cols: u32, label_count: u32) -> (PathBuf, PathBuf) {
        let images_path = dir.join("images-idx3-ubyte");
        let labels_path = dir.join("labels-idx1-ubyte");
        let mut img_bytes = Vec::new();
        img_bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img_bytes.extend_from_slice(&count.to_be_bytes());
        img_bytes.extend_from_slice(&rows.to_be_bytes());
        img_bytes.extend_from_slice(&cols.to_be_bytes());
        for i in 0..count * rows * cols {
            img_bytes.push((i % 251) as u8);
        }
        fs::write(&images_path, img_bytes).unwrap();
        let mut lbl_bytes = Vec::new();
        lbl_bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lbl_bytes.extend_from_slice(&label_count.to_be_bytes());
        for i in 0..label_count {
            lbl_bytes.push((i % 3) as u8);
        }
        fs::write(&labels_path, lbl_bytes).unwrap();
        (images_path, labels_path)
    }

    #[test]
    fn idx_pair_loads_with_matching_labels() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_pair(dir.path(), 10, 6, 5, 10);
        let ds = load_idx(&images, &labels).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.image(0).width(), 5);
        assert_eq!(ds.image(0).height(), 6);
        assert_eq!(ds.label(1), 1);
        assert_eq!(ds.label(3), 0);
        // Grayscale promotion: all three channels equal.
        let px = ds.image(0).pixel(2, 1);
        assert_eq!(px[0], px[1]);
    }

    #[test]
    fn idx_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_pair(dir.path(), 10, 4, 4, 9);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(DatasetError::CountMismatch {
                images: 10,
                labels: 9
            })
        ));
    }

    #[test]
    fn idx_bad_magic_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_pair(dir.path(), 2, 4, 4, 2);
        let mut bytes = fs::read(&images).unwrap();
        bytes[3] = 0x99;
        fs::write(&images, bytes).unwrap();
        match load_idx(&images, &labels).unwrap_err() {
            DatasetError::BadMagic { offset, expected, .. } => {
                assert_eq!(offset, 0);
                assert_eq!(expected, 0x0000_0803);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn idx_dimensions_parse_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_pair(dir.path(), 1, 28, 28, 1);
        let bytes = fs::read(&images).unwrap();
        // 28 encoded big-endian as 00 00 00 1C.
        assert_eq!(&bytes[8..12], &[0x00, 0x00, 0x00, 0x1c]);
        let ds = load_idx(&images, &labels).unwrap();
        assert_eq!(ds.image(0).width(), 28);
    }

    #[test]
    fn idx_truncation_is_reported_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_pair(dir.path(), 4, 4, 4, 4);
        let bytes = fs::read(&images).unwrap();
        fs::write(&images, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_idx(&images, &labels),
            Err(DatasetError::Truncated { .. })
        ));
    }

    fn balanced_dataset(per_class: usize, classes: usize) -> LabeledImageDataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                images.push(color_image((c * per_class + i) as u64, 4, 4));
                labels.push(c);
            }
        }
        let names = (0..classes).map(|c| format!("c{c}")).collect();
        LabeledImageDataset::new(images, labels, names).unwrap()
    }

    #[test]
    fn split_100_per_class_gives_80_9_11() {
        let ds = balanced_dataset(100, 3);
        let tagged = stratified_split(ds, (0.80, 0.09, 0.11), 7).unwrap();
        for class in 0..3 {
            let mut counts = (0, 0, 0);
            for i in 0..tagged.len() {
                if tagged.label(i) == class {
                    match tagged.split_of(i) {
                        Split::Train => counts.0 += 1,
                        Split::Val => counts.1 += 1,
                        Split::Test => counts.2 += 1,
                    }
                }
            }
            assert_eq!(counts, (80, 9, 11), "class {class}");
        }
    }

    #[test]
    fn split_rejects_empty_val_fraction() {
        let ds = balanced_dataset(10, 2);
        assert!(matches!(
            stratified_split(ds, (1.0, 0.0, 0.0), 0),
            Err(DatasetError::BadFractions(_))
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let a = stratified_split(balanced_dataset(20, 3), (0.6, 0.2, 0.2), 5).unwrap();
        let b = stratified_split(balanced_dataset(20, 3), (0.6, 0.2, 0.2), 5).unwrap();
        for i in 0..a.len() {
            assert_eq!(a.split_of(i), b.split_of(i));
        }
        let c = stratified_split(balanced_dataset(20, 3), (0.6, 0.2, 0.2), 6).unwrap();
        let same = (0..a.len()).all(|i| a.split_of(i) == c.split_of(i));
        assert!(!same, "different seeds produced identical tagging");
    }

    #[test]
    fn split_rejects_tiny_classes() {
        let ds = balanced_dataset(2, 2);
        assert!(matches!(
            stratified_split(ds, (0.8, 0.1, 0.1), 0),
            Err(DatasetError::ClassTooSmall { .. })
        ));
    }

    #[test]
    fn split_guarantees_train_and_val_for_small_classes() {
        let ds = balanced_dataset(3, 2);
        let tagged = stratified_split(ds, (0.8, 0.09, 0.11), 1).unwrap();
        for class in 0..2 {
            let mut train = 0;
            let mut val = 0;
            for i in 0..tagged.len() {
                if tagged.label(i) == class {
                    match tagged.split_of(i) {
                        Split::Train => train += 1,
                        Split::Val => val += 1,
                        Split::Test => {}
                    }
                }
            }
            assert!(train >= 1, "class {class} missing from train");
            assert!(val >= 1, "class {class} missing from val");
        }
    }

    #[test]
    fn split_fractions_realized_within_one_sample() {
        for n in [30usize, 53, 97] {
            let ds = balanced_dataset(n, 2);
            let tagged = stratified_split(ds, (0.7, 0.15, 0.15), 3).unwrap();
            let (train, val, test) = tagged.split_sizes();
            assert_eq!(train + val + test, 2 * n);
            for (count, frac) in [(train, 0.7), (val, 0.15), (test, 0.15)] {
                let per_class = count as f64 / 2.0;
                assert!(
                    (per_class - frac * n as f64).abs() <= 1.0 + 1e-9,
                    "n={n}: split count {per_class} too far from {}",
                    frac * n as f64
                );
            }
        }
    }

    #[test]
    fn union_of_splits_is_everything_and_disjoint() {
        let tagged = stratified_split(balanced_dataset(25, 4), (0.8, 0.1, 0.1), 9).unwrap();
        let train = tagged.split_indices(Split::Train);
        let val = tagged.split_indices(Split::Val);
        let test = tagged.split_indices(Split::Test);
        let mut all: Vec<usize> = train.iter().chain(&val).chain(&test).copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..tagged.len()).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn test_split_access_is_counted() {
        let tagged = stratified_split(balanced_dataset(10, 2), (0.6, 0.2, 0.2), 0).unwrap();
        assert_eq!(tagged.test_access_count(), 0);
        tagged.split_indices(Split::Train);
        tagged.split_indices(Split::Val);
        assert_eq!(tagged.test_access_count(), 0);
        tagged.split_indices(Split::Test);
        assert_eq!(tagged.test_access_count(), 1);
    }

    #[test]
    fn resize_nearest_same_size_is_identity() {
        let img = color_image(3, 7, 7);
        assert_eq!(resize_nearest(&img, 7), img);
        let up = resize_nearest(&img, 14);
        assert_eq!(up.width(), 14);
        assert_eq!(up.pixel(0, 0), img.pixel(0, 0));
        assert_eq!(up.pixel(13, 13), img.pixel(6, 6));
    }
}
