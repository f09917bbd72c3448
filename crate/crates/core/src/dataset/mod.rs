//! Zero-shot datasets: validated container, interchange files, synthetic generator, samplers.

mod io;
mod sampling;
mod synth;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use autodiff::Tensor;

use crate::error::{DataError, Result};

pub use io::{load, save, MANIFEST_FILE};
pub use sampling::{sample_batch, sample_negative, sample_triplets, Batch, TripletBatch};
pub use synth::{generate, synth_generate, SynthConfig, Synthetic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    TestSeen,
    TestUnseen,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestSeen => "test_seen",
            Split::TestUnseen => "test_unseen",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test_seen" => Some(Split::TestSeen),
            "test_unseen" => Some(Split::TestUnseen),
            _ => None,
        }
    }
}

/// Instance visual features, labels, class semantics and split indices.
///
/// Seen classes are exactly the labels of the training split; every
/// `test_seen` label must be seen and every `test_unseen` label unseen.
#[derive(Debug)]
pub struct ZslDataset {
    d_v: usize,
    d_a: usize,
    visual: Vec<f64>,
    labels: Vec<usize>,
    semantics: Vec<f64>,
    seen: Vec<usize>,
    unseen: Vec<usize>,
    train: Vec<usize>,
    test_seen: Vec<usize>,
    test_unseen: Vec<usize>,
    train_by_class: Vec<Vec<usize>>,
    is_unseen: Vec<bool>,
    unseen_semantic_reads: AtomicUsize,
}

impl Clone for ZslDataset {
    fn clone(&self) -> Self {
        ZslDataset {
            d_v: self.d_v,
            d_a: self.d_a,
            visual: self.visual.clone(),
            labels: self.labels.clone(),
            semantics: self.semantics.clone(),
            seen: self.seen.clone(),
            unseen: self.unseen.clone(),
            train: self.train.clone(),
            test_seen: self.test_seen.clone(),
            test_unseen: self.test_unseen.clone(),
            train_by_class: self.train_by_class.clone(),
            is_unseen: self.is_unseen.clone(),
            unseen_semantic_reads: AtomicUsize::new(0),
        }
    }
}

/// Raw parts of a dataset before validation.
#[derive(Debug, Clone, Default)]
pub struct DatasetParts {
    pub d_v: usize,
    pub d_a: usize,
    /// N×d_v row-major
    pub visual: Vec<f64>,
    pub labels: Vec<usize>,
    /// C×d_a row-major
    pub semantics: Vec<f64>,
    pub train: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
}

impl ZslDataset {
    /// Validates every split and class invariant eagerly.
    pub fn new(parts: DatasetParts) -> Result<ZslDataset, DataError> {
        let DatasetParts {
            d_v,
            d_a,
            visual,
            labels,
            semantics,
            train,
            test_seen,
            test_unseen,
        } = parts;
        if d_v == 0 || d_a == 0 {
            return Err(DataError::Invalid("d_v and d_a must be positive".into()));
        }
        let n = labels.len();
        if visual.len() != n * d_v {
            return Err(DataError::Invalid(format!(
                "{} visual values for {n} instances of width {d_v}",
                visual.len()
            )));
        }
        if semantics.len() % d_a != 0 || semantics.is_empty() {
            return Err(DataError::Invalid(format!(
                "{} semantic values do not form rows of width {d_a}",
                semantics.len()
            )));
        }
        if let Some(i) = visual.iter().chain(&semantics).position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!("non-finite value at flat position {i}")));
        }
        let num_classes = semantics.len() / d_a;
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(DataError::Invalid(format!(
                "instance {i} has class {c} but only {num_classes} semantic rows exist"
            )));
        }

        let mut owner = vec![None::<&'static str>; n];
        for (name, split) in [("train", &train), ("test_seen", &test_seen), ("test_unseen", &test_unseen)] {
            for &i in split.iter() {
                if i >= n {
                    return Err(DataError::Invalid(format!("{name} index {i} out of range")));
                }
                if owner[i].replace(name).is_some() {
                    return Err(DataError::SplitOverlap { index: i });
                }
            }
        }
        if train.is_empty() {
            return Err(DataError::Invalid("train split is empty".into()));
        }

        let seen: BTreeSet<usize> = train.iter().map(|&i| labels[i]).collect();
        for &i in &test_seen {
            if !seen.contains(&labels[i]) {
                return Err(DataError::SplitClass {
                    split: "test_seen",
                    index: i,
                    class: labels[i],
                    expected: "seen",
                });
            }
        }
        let unseen: BTreeSet<usize> = test_unseen.iter().map(|&i| labels[i]).collect();
        if let Some(&c) = unseen.intersection(&seen).next() {
            let index = *test_unseen.iter().find(|&&i| labels[i] == c).unwrap();
            return Err(DataError::SplitClass {
                split: "test_unseen",
                index,
                class: c,
                expected: "unseen",
            });
        }

        let mut train_by_class = vec![Vec::new(); num_classes];
        for &i in &train {
            train_by_class[labels[i]].push(i);
        }
        let mut is_unseen = vec![false; num_classes];
        for &c in &unseen {
            is_unseen[c] = true;
        }
        Ok(ZslDataset {
            d_v,
            d_a,
            visual,
            labels,
            semantics,
            seen: seen.into_iter().collect(),
            unseen: unseen.into_iter().collect(),
            train,
            test_seen,
            test_unseen,
            train_by_class,
            is_unseen,
            unseen_semantic_reads: AtomicUsize::new(0),
        })
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.semantics.len() / self.d_a
    }

    pub fn seen_classes(&self) -> &[usize] {
        &self.seen
    }

    pub fn unseen_classes(&self) -> &[usize] {
        &self.unseen
    }

    pub fn is_unseen(&self, class: usize) -> bool {
        self.is_unseen.get(class).copied().unwrap_or(false)
    }

    pub fn split(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::TestSeen => &self.test_seen,
            Split::TestUnseen => &self.test_unseen,
        }
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn visual_row(&self, index: usize) -> &[f64] {
        &self.visual[index * self.d_v..(index + 1) * self.d_v]
    }

    /// Training instances of `class` (empty for unseen classes).
    pub fn train_indices_of(&self, class: usize) -> &[usize] {
        self.train_by_class.get(class).map_or(&[], Vec::as_slice)
    }

    /// Class-level semantic vector. Reads of unseen classes are counted.
    pub fn semantic(&self, class: usize) -> &[f64] {
        if self.is_unseen(class) {
            self.unseen_semantic_reads.fetch_add(1, Ordering::Relaxed);
        }
        &self.semantics[class * self.d_a..(class + 1) * self.d_a]
    }

    /// Number of unseen-class semantic reads since construction or the last reset.
    pub fn unseen_semantic_reads(&self) -> usize {
        self.unseen_semantic_reads.load(Ordering::Relaxed)
    }

    pub fn reset_semantic_audit(&self) {
        self.unseen_semantic_reads.store(0, Ordering::Relaxed);
    }

    /// `[len×d_v]` visual features of the given instances.
    pub fn visual_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.d_v);
        for &i in indices {
            data.extend_from_slice(self.visual_row(i));
        }
        Ok(Tensor::new(&[indices.len(), self.d_v], data)?)
    }

    /// `[len×d_a]` semantic vectors of the given classes.
    pub fn semantic_rows(&self, classes: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(classes.len() * self.d_a);
        for &c in classes {
            data.extend_from_slice(self.semantic(c));
        }
        Ok(Tensor::new(&[classes.len(), self.d_a], data)?)
    }

    /// Rescales each visual dimension to [0,1] using the training split's range.
    pub fn normalize_minmax(&mut self) {
        for d in 0..self.d_v {
            let (lo, hi) = self.train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.visual[i * self.d_v + d];
                (lo.min(v), hi.max(v))
            });
            let span = if hi > lo { hi - lo } else { 1.0 };
            for i in 0..self.labels.len() {
                let v = &mut self.visual[i * self.d_v + d];
                *v = (*v - lo) / span;
            }
        }
    }

    /// Raw parts, for writing back out.
    pub fn to_parts(&self) -> DatasetParts {
        DatasetParts {
            d_v: self.d_v,
            d_a: self.d_a,
            visual: self.visual.clone(),
            labels: self.labels.clone(),
            semantics: self.semantics.clone(),
            train: self.train.clone(),
            test_seen: self.test_seen.clone(),
            test_unseen: self.test_unseen.clone(),
        }
    }

    /// Hex SHA-256 over dimensions, features, labels, semantics and splits.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for n in [self.d_v, self.d_a, self.labels.len()] {
            h.update((n as u64).to_le_bytes());
        }
        for v in self.visual.iter().chain(&self.semantics) {
            h.update(v.to_le_bytes());
        }
        for list in [&self.labels, &self.train, &self.test_seen, &self.test_unseen] {
            h.update((list.len() as u64).to_le_bytes());
            for &i in list.iter() {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Asserts the split invariants; always true for a constructed dataset.
    pub fn check_integrity(&self) -> Result<(), DataError> {
        ZslDataset::new(self.to_parts()).map(|_| ())
    }
}
