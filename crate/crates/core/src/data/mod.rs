//! Labeled feature datasets: in-memory model, synthetic generation and
//! stratified splitting. File formats live in [`pfeb`] and [`image`].

pub mod image;
pub mod pfeb;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub use self::image::{
    augment_image, load_image_dataset, preprocess_image, read_pgm, write_pgm, AugmentSpec,
    GrayImage, ImageDataset, RawImage,
};
pub use self::pfeb::{load_embeddings, save_embeddings};

/// One feature vector with its global class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
    /// Index of the example in the dataset it was first loaded or generated as.
    pub source_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub class_names: Vec<String>,
    pub examples: Vec<LabeledExample>,
    dim: usize,
}

impl LabeledDataset {
    /// Feature dimension is taken from the first example (0 when empty).
    pub fn new(class_names: Vec<String>, examples: Vec<LabeledExample>) -> Result<Self> {
        let dim = examples.first().map_or(0, |e| e.features.len());
        Self::with_dim(class_names, examples, dim)
    }

    pub fn with_dim(
        class_names: Vec<String>,
        examples: Vec<LabeledExample>,
        dim: usize,
    ) -> Result<Self> {
        for ex in &examples {
            if ex.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: ex.features.len(),
                });
            }
            if ex.label >= class_names.len() {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    n_classes: class_names.len(),
                });
            }
        }
        Ok(Self {
            class_names,
            examples,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes()];
        for ex in &self.examples {
            sizes[ex.label] += 1;
        }
        sizes
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            class_names: self.class_names.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            dim: self.dim,
        }
    }
}

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
}

/// Draws `counts[c]` points around `means[c]` with componentwise standard
/// deviation `sigma`. Values are rounded to single precision so a dataset
/// survives a PFEB round trip unchanged.
pub fn generate_blobs(spec: &BlobSpec, seed: u64) -> Result<LabeledDataset> {
    let n = spec.means.len();
    if spec.counts.len() != n || spec.class_names.len() != n {
        return Err(Error::Config(format!(
            "blob spec has {} means, {} counts and {} names",
            n,
            spec.counts.len(),
            spec.class_names.len()
        )));
    }
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be >= 0, got {}", spec.sigma)));
    }
    let dim = spec.means.first().map_or(0, Vec::len);
    let mut rng = rng::seeded(seed);
    let mut examples = Vec::with_capacity(spec.counts.iter().sum());
    for (label, (mean, &count)) in spec.means.iter().zip(&spec.counts).enumerate() {
        if mean.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: mean.len(),
            });
        }
        for _ in 0..count {
            let features = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    f64::from((m + spec.sigma * z) as f32)
                })
                .collect();
            let source_id = examples.len();
            examples.push(LabeledExample {
                features,
                label,
                source_id,
            });
        }
    }
    LabeledDataset::with_dim(spec.class_names.clone(), examples, dim)
}

/// Class means with independent `N(0, separation^2)` components.
pub fn random_means(n_classes: usize, dim: usize, separation: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::seeded(seed);
    (0..n_classes)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    separation * z
                })
                .collect()
        })
        .collect()
}

/// Appends `extra` zero-mean Gaussian dimensions carrying no class signal.
pub fn append_nuisance(
    dataset: &LabeledDataset,
    extra: usize,
    sigma: f64,
    seed: u64,
) -> LabeledDataset {
    let mut rng = rng::seeded(seed);
    let mut out = dataset.clone();
    for ex in &mut out.examples {
        ex.features.extend((0..extra).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            f64::from((sigma * z) as f32)
        }));
    }
    out.dim += extra;
    out
}

/// Stratified split: per class, `floor(ratio * n_c)` examples (clamped so both
/// sides get at least one) go to training, chosen by a seeded shuffle. Both
/// halves keep the original example order.
pub fn split_train_val(
    dataset: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for (i, ex) in dataset.examples.iter().enumerate() {
        by_class[ex.label].push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, mut idx) in by_class.into_iter().enumerate() {
        let n = idx.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            return Err(Error::ClassTooSmall { class, size: n });
        }
        idx.shuffle(&mut rng);
        let n_train = ((ratio * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&val)))
}
