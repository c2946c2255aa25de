//! Labeled image sets and their random split across workers.

use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::config::SampleBudget;
use crate::error::{Error, Result};
use crate::learning::Dataset;

use super::idx::{load_idx, IdxFile, IMAGES_MAGIC, LABELS_MAGIC};

pub const NUM_CLASSES: usize = 10;

/// Grayscale images with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl LabeledImages {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>, rows: usize, cols: usize) -> Result<Self> {
        let size = rows * cols;
        if size == 0 || pixels.len() != labels.len() * size {
            return Err(Error::Data(format!(
                "{} pixel bytes do not form {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Data(format!("label {bad} outside 0..{NUM_CLASSES}")));
        }
        Ok(Self {
            pixels,
            labels,
            rows,
            cols,
        })
    }

    pub fn from_idx(images: IdxFile, labels: IdxFile) -> Result<Self> {
        if images.magic != IMAGES_MAGIC || labels.magic != LABELS_MAGIC {
            return Err(Error::Data(
                "expected an image file and a label file".into(),
            ));
        }
        if images.count() != labels.count() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.count(),
                labels.count()
            )));
        }
        let (rows, cols) = (images.dims[1] as usize, images.dims[2] as usize);
        Self::new(images.payload, labels.payload, rows, cols)
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Self::from_idx(load_idx(images)?, load_idx(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixels scaled to `[0, 1]`, one-hot targets.
    pub fn to_dataset(&self, indices: &[usize]) -> Result<Dataset> {
        let size = self.image_size();
        let mut inputs = Vec::with_capacity(indices.len() * size);
        let mut targets = vec![0.0; indices.len() * NUM_CLASSES];
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::Data(format!("sample index {i} out of range")));
            }
            inputs.extend(
                self.pixels[i * size..(i + 1) * size]
                    .iter()
                    .map(|&p| p as f64 / 255.0),
            );
            targets[row * NUM_CLASSES + self.labels[i] as usize] = 1.0;
        }
        Dataset::new(inputs, targets, size, NUM_CLASSES)
    }

    /// The images at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let size = self.image_size();
        let mut pixels = Vec::with_capacity(indices.len() * size);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Data(format!("sample index {i} out of range")));
            }
            pixels.extend_from_slice(&self.pixels[i * size..(i + 1) * size]);
            labels.push(self.labels[i]);
        }
        Self::new(pixels, labels, self.rows, self.cols)
    }

    pub fn all(&self) -> Result<Dataset> {
        self.to_dataset(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Disjoint sample indices per worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn counts(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }
}

/// Sizes of an even split, the remainder going one each to the first workers.
pub fn even_split(total: usize, num_workers: usize) -> Vec<usize> {
    let (base, extra) = (total / num_workers, total % num_workers);
    (0..num_workers)
        .map(|i| base + usize::from(i < extra))
        .collect()
}

/// Draws samples without replacement and splits them across workers.
///
/// With [`SampleBudget::Pooled`] one total `N` is drawn from `range` and
/// split evenly; with [`SampleBudget::PerWorker`] each worker draws its own
/// count from `range`.
pub fn partition_mnist<R: Rng + ?Sized>(
    images: &LabeledImages,
    num_workers: usize,
    range: [usize; 2],
    budget: SampleBudget,
    rng: &mut R,
) -> Result<(Partition, Vec<Dataset>)> {
    let [lo, hi] = range;
    if num_workers == 0 || lo > hi {
        return Err(Error::config(format!(
            "cannot split [{lo}, {hi}] samples over {num_workers} workers"
        )));
    }
    let sizes = match budget {
        SampleBudget::Pooled => even_split(rng.random_range(lo..=hi), num_workers),
        SampleBudget::PerWorker => (0..num_workers)
            .map(|_| rng.random_range(lo..=hi))
            .collect(),
    };
    let total: usize = sizes.iter().sum();
    if total > images.len() {
        return Err(Error::Data(format!(
            "{total} samples requested but only {} available",
            images.len()
        )));
    }
    let drawn = index::sample(rng, images.len(), total).into_vec();
    let mut assignments = Vec::with_capacity(num_workers);
    let mut start = 0;
    for size in sizes {
        assignments.push(drawn[start..start + size].to_vec());
        start += size;
    }
    let datasets = assignments
        .iter()
        .map(|a| images.to_dataset(a))
        .collect::<Result<Vec<_>>>()?;
    Ok((Partition { assignments }, datasets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStreams, StreamLabel};
    use std::collections::HashSet;

    fn fixture(n: usize) -> LabeledImages {
        let pixels = (0..n * 4).map(|v| (v % 256) as u8).collect();
        let labels = (0..n).map(|v| (v % 10) as u8).collect();
        LabeledImages::new(pixels, labels, 2, 2).unwrap()
    }

    #[test]
    fn even_split_examples() {
        assert_eq!(even_split(1000, 20), vec![50; 20]);
        let s = even_split(1003, 20);
        assert_eq!(&s[..3], &[51, 51, 51]);
        assert!(s[3..].iter().all(|&k| k == 50));
    }

    #[test]
    fn partition_is_disjoint_and_conserves_counts() {
        let images = fixture(3000);
        let mut rng = RngStreams::new(4).stream(StreamLabel::Data, 0);
        let (p, sets) =
            partition_mnist(&images, 20, [500, 1000], SampleBudget::Pooled, &mut rng).unwrap();
        let all: Vec<usize> = p.assignments.iter().flatten().copied().collect();
        let unique: HashSet<usize> = all.iter().copied().collect();
        assert_eq!(unique.len(), all.len());
        assert!((500..=1000).contains(&p.total()));
        assert_eq!(
            sets.iter().map(Dataset::len).collect::<Vec<_>>(),
            p.counts()
        );
        let counts = p.counts();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn per_worker_budget() {
        let images = fixture(3000);
        let mut rng = RngStreams::new(4).stream(StreamLabel::Data, 0);
        let (p, _) =
            partition_mnist(&images, 4, [100, 200], SampleBudget::PerWorker, &mut rng).unwrap();
        assert!(p.counts().iter().all(|k| (100..=200).contains(k)));
    }

    #[test]
    fn partition_is_deterministic() {
        let images = fixture(2000);
        let run = || {
            let mut rng = RngStreams::new(7).stream(StreamLabel::Data, 0);
            partition_mnist(&images, 20, [500, 1000], SampleBudget::Pooled, &mut rng)
                .unwrap()
                .0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn oversized_request_rejected() {
        let images = fixture(100);
        let mut rng = RngStreams::new(1).stream(StreamLabel::Data, 0);
        assert!(matches!(
            partition_mnist(&images, 5, [200, 300], SampleBudget::Pooled, &mut rng),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn dataset_scaling_and_one_hot() {
        let images = LabeledImages::new(vec![0, 255, 51, 102], vec![3], 2, 2).unwrap();
        let d = images.all().unwrap();
        let (x, y) = d.row(0);
        assert_eq!(x, &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(y.iter().position(|&v| v == 1.0), Some(3));
        assert_eq!(y.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let images = IdxFile::images(2, 2, 2, vec![0; 8]);
        let labels = IdxFile::labels(vec![1, 2, 3]);
        assert!(LabeledImages::from_idx(images, labels).is_err());
    }
}
