//! Labelled datasets, class filtering and shuffled minibatches.

mod idx;
mod synthetic;

pub use idx::{
    load_mnist, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxError,
    IdxImages, MnistSplit,
};
pub use synthetic::{make_synthetic, GaussianClass, SquashTransform, SyntheticTaskSpec};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nets::one_hot_batch;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Examples `(x, class)` with every coordinate of `x` in `[0, 1]`.
///
/// Every example read is counted, which lets a training run prove that
/// it never touched the data of an already consolidated task.
#[derive(Debug, Clone)]
pub struct Dataset {
    data_dim: usize,
    features: Arc<[f64]>,
    labels: Arc<[usize]>,
    reads: Arc<AtomicUsize>,
}

impl Dataset {
    pub fn new(data_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if data_dim == 0 || features.len() != data_dim * labels.len() {
            return Err(Error::InvalidDims(format!(
                "{} values for {} examples of width {data_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("feature {v} outside [0, 1]")));
        }
        Ok(Self {
            data_dim,
            features: features.into(),
            labels: labels.into(),
            reads: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of example reads served so far (shared by clones).
    pub fn read_count(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn example(&self, i: usize) -> (&[f64], usize) {
        self.reads.fetch_add(1, Ordering::Relaxed);
        (&self.features[i * self.data_dim..(i + 1) * self.data_dim], self.labels[i])
    }

    pub fn classes(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &l in self.labels.iter() {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Examples whose class is in `classes`, original order kept.
    pub fn filter_classes(&self, classes: &[usize]) -> Dataset {
        let keep: BTreeSet<usize> = classes.iter().copied().collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.len() {
            if keep.contains(&self.labels[i]) {
                let (x, c) = self.example(i);
                features.extend_from_slice(x);
                labels.push(c);
            }
        }
        Dataset::new(self.data_dim, features, labels).expect("subset of a valid dataset")
    }

    /// First `n` examples of each class (fewer if the class is smaller).
    pub fn take_per_class(&self, n: usize) -> Dataset {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.len() {
            let c = self.labels[i];
            let k = seen.entry(c).or_insert(0);
            if *k < n {
                *k += 1;
                let (x, _) = self.example(i);
                features.extend_from_slice(x);
                labels.push(c);
            }
        }
        Dataset::new(self.data_dim, features, labels).expect("subset of a valid dataset")
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.data_dim != other.data_dim {
            return Err(Error::InvalidDims(format!(
                "concat of widths {} and {}",
                self.data_dim, other.data_dim
            )));
        }
        self.reads.fetch_add(self.len(), Ordering::Relaxed);
        other.reads.fetch_add(other.len(), Ordering::Relaxed);
        let mut features = self.features.to_vec();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.to_vec();
        labels.extend_from_slice(&other.labels);
        Dataset::new(self.data_dim, features, labels)
    }

    /// One shuffled epoch in batches of `batch`; the last batch may be short.
    pub fn minibatches<'a>(
        &'a self,
        batch: usize,
        capacity: usize,
        rng: &mut RngStream,
    ) -> Result<Minibatches<'a>> {
        if batch == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if let Some(&c) = self.labels.iter().find(|&&c| c >= capacity) {
            return Err(Error::Capacity { class: c, capacity });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        Ok(Minibatches {
            ds: self,
            order,
            pos: 0,
            batch,
            capacity,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

pub struct Minibatches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    capacity: usize,
}

impl Iterator for Minibatches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let d = self.ds.data_dim;
        let mut x = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in &indices {
            let (f, c) = self.ds.example(i);
            x.extend_from_slice(f);
            labels.push(c);
        }
        let y = one_hot_batch(&labels, self.capacity).expect("labels checked against capacity");
        Some(Batch {
            x: Tensor::from_vec(indices.len(), d, x).expect("shape matches"),
            y,
            labels,
            indices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let labels = vec![0, 1, 2, 1, 0, 2, 2];
        let features = labels
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| [i as f64 / 10.0, c as f64 / 10.0])
            .collect();
        Dataset::new(2, features, labels).unwrap()
    }

    #[test]
    fn rejects_out_of_range_features() {
        assert!(Dataset::new(1, vec![1.5], vec![0]).is_err());
        assert!(Dataset::new(2, vec![0.5], vec![0]).is_err());
    }

    #[test]
    fn filter_cases() {
        let ds = toy();
        assert!(ds.filter_classes(&[]).is_empty());
        let all = ds.filter_classes(&[0, 1, 2]);
        assert_eq!(all.labels(), ds.labels());
        let f = ds.filter_classes(&[2, 0]);
        assert_eq!(f.labels(), &[0, 2, 0, 2, 2]);
        assert_eq!(f.class_counts()[&2], ds.class_counts()[&2]);
        assert_eq!(f.filter_classes(&[2, 0]).labels(), f.labels());
    }

    #[test]
    fn epoch_partitions_dataset() {
        let ds = toy();
        let mut rng = RngStream::new(3);
        let batches: Vec<Batch> = ds.minibatches(3, 3, &mut rng).unwrap().collect();
        assert_eq!(batches.iter().map(|b| b.labels.len()).collect::<Vec<_>>(), vec![3, 3, 1]);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        for b in &batches {
            for (r, &c) in b.labels.iter().enumerate() {
                let row: Vec<f64> = (0..3).map(|k| b.y.at(r, k)).collect();
                assert_eq!(row.iter().sum::<f64>(), 1.0);
                assert_eq!(row[c], 1.0);
            }
        }
        let again: Vec<Vec<usize>> = ds
            .minibatches(3, 3, &mut RngStream::new(3))
            .unwrap()
            .map(|b| b.indices)
            .collect();
        assert_eq!(again, batches.iter().map(|b| b.indices.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn minibatch_capacity_and_reads() {
        let ds = toy();
        assert!(ds.minibatches(2, 2, &mut RngStream::new(0)).is_err());
        assert!(ds.minibatches(0, 3, &mut RngStream::new(0)).is_err());
        let before = ds.read_count();
        let n: usize = ds.minibatches(4, 3, &mut RngStream::new(0)).unwrap().map(|b| b.labels.len()).sum();
        assert_eq!(ds.read_count() - before, n);
        let other = toy();
        let joined = ds.concat(&other).unwrap();
        assert_eq!(ds.read_count() - before, n + ds.len());
        assert_eq!(other.read_count(), other.len());
        assert_eq!(joined.read_count(), 0);
    }
}
