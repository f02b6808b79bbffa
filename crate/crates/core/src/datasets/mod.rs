//! Digit datasets: IDX ingestion, deterministic splits and conversion to
//! model-input tensors.

mod idx;
mod synthetic;

pub use synthetic::{blank_cell_set, cell_layouts, digit_cell_set, CELL_MISALIGN};
pub use idx::{encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, read_idx, read_idx_emnist};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::GrayImage;
use crate::nn::Tensor;

/// Side length of a model input.
pub const INPUT_SIDE: usize = 32;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX file: need {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: u8, classes: u8 },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Mnist,
    EmnistDigits,
    Synthetic,
    Crops,
}

/// Images with class labels `0..classes`.
#[derive(Clone, Debug)]
pub struct LabeledDigitSet {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
    pub classes: u8,
    pub source: Source,
}

impl LabeledDigitSet {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>, classes: u8, source: Source) -> Result<Self, DatasetError> {
        if images.len() != labels.len() {
            return Err(DatasetError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|l| **l >= classes) {
            return Err(DatasetError::LabelOutOfRange { label, classes });
        }
        Ok(Self {
            images,
            labels,
            classes,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            source: self.source,
        }
    }

    pub fn concat(mut self, other: Self) -> Self {
        self.images.extend(other.images);
        self.labels.extend(other.labels);
        self.classes = self.classes.max(other.classes);
        self
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes as usize];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Shuffles with `seed`, then cuts contiguous train/val/test partitions.
pub fn split(
    set: &LabeledDigitSet,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(LabeledDigitSet, LabeledDigitSet, LabeledDigitSet), DatasetError> {
    let [a, b, c] = fractions;
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadFractions(fractions));
    }
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = set.len() as f64;
    let n_train = (a * n).round() as usize;
    let n_val = ((a + b) * n).round() as usize - n_train;
    let (train, rest) = idx.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((set.subset(train), set.subset(val), set.subset(test)))
}

/// Converts a 28×28 (or 32×32) ink-high digit into a 32×32 model input with
/// zero background.
pub fn to_model_input(img: &GrayImage) -> GrayImage {
    if img.width() == INPUT_SIDE && img.height() == INPUT_SIDE {
        return img.clone();
    }
    if img.width() <= INPUT_SIDE && img.height() <= INPUT_SIDE {
        let (px, py) = ((INPUT_SIDE - img.width()) / 2, (INPUT_SIDE - img.height()) / 2);
        let mut out = GrayImage::filled(INPUT_SIDE, INPUT_SIDE, 0.0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                out.set(x + px, y + py, img.get(x, y));
            }
        }
        return out;
    }
    crate::imaging::resize_to(img, INPUT_SIDE, INPUT_SIDE)
}

/// Model-ready samples: inputs `[N, 1, 32, 32]` and labels.
#[derive(Clone, Debug)]
pub struct TensorSet {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl TensorSet {
    pub fn from_images(images: &[GrayImage], labels: &[u8]) -> Self {
        let mut values = Vec::with_capacity(images.len() * INPUT_SIDE * INPUT_SIDE);
        for img in images {
            values.extend_from_slice(to_model_input(img).data());
        }
        Self {
            inputs: Tensor::new(vec![images.len(), 1, INPUT_SIDE, INPUT_SIDE], values)
                .expect("consistent sizes"),
            labels: labels.iter().map(|&l| l as usize).collect(),
        }
    }

    pub fn from_set(set: &LabeledDigitSet) -> Self {
        Self::from_images(&set.images, &set.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn take(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

/// Random-crop augmentation: each `[1, S, S]` sample is padded by `pad`
/// pixels of zero background and a random `S×S` window is taken.
pub fn random_crop(batch: &Tensor<f32>, pad: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let (n, h, w) = match *batch.shape() {
        [n, 1, h, w] => (n, h, w),
        ref s => panic!("random_crop expects [N, 1, H, W], got {s:?}"),
    };
    let mut out = vec![0.0f32; batch.len()];
    for i in 0..n {
        let dx = rng.random_range(0..=2 * pad) as isize - pad as isize;
        let dy = rng.random_range(0..=2 * pad) as isize - pad as isize;
        let src = batch.row(i);
        let dst = &mut out[i * h * w..][..h * w];
        for y in 0..h as isize {
            let sy = y + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w as isize {
                let sx = x + dx;
                if sx >= 0 && sx < w as isize {
                    dst[(y * w as isize + x) as usize] = src[(sy * w as isize + sx) as usize];
                }
            }
        }
    }
    Tensor::new(batch.shape().to_vec(), out).expect("same shape")
}

/// MNIST IDX file names as distributed.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the 60k training and 10k test files of an MNIST directory and pools
/// them (70k samples).
pub fn load_mnist_pooled(dir: &Path) -> Result<LabeledDigitSet, DatasetError> {
    let train = read_idx(&dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?;
    let test = read_idx(&dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))?;
    Ok(train.concat(test))
}

/// EMNIST digits-partition file names as distributed.
pub const EMNIST_DIGITS_FILES: [&str; 4] = [
    "emnist-digits-train-images-idx3-ubyte",
    "emnist-digits-train-labels-idx1-ubyte",
    "emnist-digits-test-images-idx3-ubyte",
    "emnist-digits-test-labels-idx1-ubyte",
];

/// Pools the train and test files of the EMNIST digits partition.
pub fn load_emnist_digits_pooled(dir: &Path) -> Result<LabeledDigitSet, DatasetError> {
    let f = EMNIST_DIGITS_FILES;
    let train = read_idx_emnist(&dir.join(f[0]), &dir.join(f[1]))?;
    let test = read_idx_emnist(&dir.join(f[2]), &dir.join(f[3]))?;
    Ok(train.concat(test))
}

/// Location of the MNIST files for examples and tests: `FORMSCAN_MNIST_DIR`
/// if set, else `data/mnist` at the workspace root.
pub fn locate_mnist() -> Option<PathBuf> {
    let dir = std::env::var_os("FORMSCAN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join(MNIST_FILES[0]).is_file().then_some(dir)
}
