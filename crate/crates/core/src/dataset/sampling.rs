//! Minibatch and triplet samplers. Each caller owns its RNG.

use autodiff::Tensor;
use rand::Rng;

use super::{Split, ZslDataset};
use crate::error::{DataError, Result};

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B×d_v]`
    pub x: Tensor,
    /// `[B×d_a]`, row i is the semantic vector of `labels[i]`
    pub a: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Uniform sampling with replacement from one split.
pub fn sample_batch<R: Rng + ?Sized>(ds: &ZslDataset, split: Split, batch_size: usize, rng: &mut R) -> Result<Batch> {
    let pool = ds.split(split);
    if pool.is_empty() {
        return Err(DataError::Invalid(format!("cannot sample from empty split {}", split.name())).into());
    }
    if batch_size == 0 {
        return Err(DataError::Invalid("batch size must be positive".into()).into());
    }
    let indices: Vec<usize> = (0..batch_size).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    let labels: Vec<usize> = indices.iter().map(|&i| ds.label(i)).collect();
    Ok(Batch {
        x: ds.visual_rows(&indices)?,
        a: ds.semantic_rows(&labels)?,
        labels,
        indices,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TripletBatch {
    /// `(anchor, positive, negative)` instance indices
    pub triplets: Vec<(usize, usize, usize)>,
    /// Anchor draws discarded because their class had a single training instance.
    pub skipped: usize,
}

/// Draws triplets from the training split with uniform negatives.
///
/// Anchors are uniform over training instances, positives uniform over the
/// rest of the anchor's class, negatives uniform over the other seen classes
/// and then uniform within the chosen class.
pub fn sample_triplets<R: Rng + ?Sized>(ds: &ZslDataset, batch_size: usize, rng: &mut R) -> Result<TripletBatch> {
    let seen = ds.seen_classes();
    if seen.len() < 2 {
        return Err(DataError::Invalid("triplets need at least 2 seen classes".into()).into());
    }
    if !seen.iter().any(|&c| ds.train_indices_of(c).len() >= 2) {
        return Err(DataError::Invalid("no seen class has two training instances".into()).into());
    }
    let train = ds.split(Split::Train);
    let mut out = TripletBatch {
        triplets: Vec::with_capacity(batch_size),
        skipped: 0,
    };
    while out.triplets.len() < batch_size {
        let anchor = train[rng.random_range(0..train.len())];
        let class = ds.label(anchor);
        let members = ds.train_indices_of(class);
        if members.len() < 2 {
            out.skipped += 1;
            continue;
        }
        let mut positive = members[rng.random_range(0..members.len() - 1)];
        if positive == anchor {
            positive = members[members.len() - 1];
        }
        let negative = sample_negative(ds, class, rng);
        out.triplets.push((anchor, positive, negative));
    }
    Ok(out)
}

/// A training instance drawn uniformly from a uniformly chosen seen class other than `class`.
/// Needs at least two seen classes.
pub fn sample_negative<R: Rng + ?Sized>(ds: &ZslDataset, class: usize, rng: &mut R) -> usize {
    let seen = ds.seen_classes();
    let mut neg_class = seen[rng.random_range(0..seen.len() - 1)];
    if neg_class == class {
        neg_class = seen[seen.len() - 1];
    }
    let pool = ds.train_indices_of(neg_class);
    pool[rng.random_range(0..pool.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, DatasetParts, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn five_classes() -> ZslDataset {
        synth_generate(&SynthConfig {
            num_seen: 5,
            num_unseen: 1,
            instances_per_class: 20,
            seen_test_fraction: 0.0,
            d_v: 4,
            d_a: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    /// Every class count must lie within 3 binomial standard deviations of n/k.
    fn assert_uniform(counts: &[usize], n: usize) {
        let k = counts.len() as f64;
        let p = 1.0 / k;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn batch_rows_match_labels() {
        let ds = five_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_batch(&ds, Split::Train, 64, &mut rng).unwrap();
        assert_eq!(b.x.shape(), &[64, 4]);
        for (r, (&i, &l)) in b.indices.iter().zip(&b.labels).enumerate() {
            assert!(ds.seen_classes().contains(&l));
            assert_eq!(b.x.row(r), ds.visual_row(i));
            assert_eq!(b.a.row(r), ds.semantic(l));
        }
        assert_eq!(ds.unseen_semantic_reads(), 0);
    }

    #[test]
    fn batch_class_frequencies_are_binomial() {
        let ds = five_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = sample_batch(&ds, Split::Train, 10_000, &mut rng).unwrap();
        let mut counts = vec![0; 5];
        b.labels.iter().for_each(|&l| counts[l] += 1);
        assert_uniform(&counts, 10_000);
    }

    #[test]
    fn empty_split_rejected() {
        let ds = five_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_batch(&ds, Split::TestSeen, 4, &mut rng).is_err());
    }

    #[test]
    fn triplets_respect_labels_and_are_uniform() {
        let ds = five_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = sample_triplets(&ds, 10_000, &mut rng).unwrap();
        assert_eq!(t.skipped, 0);
        let mut counts = vec![0; 5];
        for &(a, p, n) in &t.triplets {
            assert_eq!(ds.label(a), ds.label(p));
            assert_ne!(a, p);
            assert_ne!(ds.label(a), ds.label(n));
            counts[ds.label(a)] += 1;
        }
        assert_uniform(&counts, 10_000);
    }

    #[test]
    fn two_classes_negatives_from_other() {
        let ds = ZslDataset::new(DatasetParts {
            d_v: 1,
            d_a: 1,
            visual: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            labels: vec![0, 0, 1, 1, 2],
            semantics: vec![0.0, 1.0, 2.0],
            train: vec![0, 1, 2, 3],
            test_seen: vec![],
            test_unseen: vec![4],
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (a, _, n) in sample_triplets(&ds, 200, &mut rng).unwrap().triplets {
            assert_eq!(ds.label(n), 1 - ds.label(a));
        }
    }

    #[test]
    fn singleton_classes_are_skipped() {
        let ds = ZslDataset::new(DatasetParts {
            d_v: 1,
            d_a: 1,
            visual: vec![0.0, 1.0, 2.0, 3.0],
            labels: vec![0, 0, 1, 2],
            semantics: vec![0.0, 1.0, 2.0],
            train: vec![0, 1, 2],
            test_seen: vec![],
            test_unseen: vec![3],
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = sample_triplets(&ds, 300, &mut rng).unwrap();
        assert!(t.skipped > 0);
        assert!(t.triplets.iter().all(|&(a, _, _)| ds.label(a) == 0));
    }
}
