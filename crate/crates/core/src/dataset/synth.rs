//! Synthetic zero-shot data with optionally entangled unseen classes.
//!
//! Semantics are standard normal vectors. A fixed random projection with
//! orthonormal columns maps each semantic vector to a direction in visual
//! space; the class prototype is that direction scaled to radius 10, so
//! semantics carry real information about where a class lives. Designated
//! pairs of unseen classes share the first class's prototype while keeping
//! their own semantics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DatasetParts, ZslDataset};
use crate::error::DataError;

pub const PROTOTYPE_RADIUS: f64 = 10.0;
/// Minimum L2 distance between the semantics of an entangled pair.
pub const MIN_PAIR_SEMANTIC_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_seen: usize,
    pub num_unseen: usize,
    pub instances_per_class: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub visual_noise_sigma: f64,
    /// Fraction in [0,1] of the available unseen pairs that share a prototype.
    /// `ceil(num_unseen / 4)` pairs are available, so 1.0 entangles two of four.
    pub unseen_overlap: f64,
    /// Fraction of each seen class's instances held out as `test_seen`.
    pub seen_test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_seen: 12,
            num_unseen: 4,
            instances_per_class: 50,
            d_v: 32,
            d_a: 12,
            visual_noise_sigma: 1.0,
            unseen_overlap: 0.0,
            seen_test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Invalid(format!("synthetic config: {m}")));
        if self.num_seen < 2 {
            return bad("need at least 2 seen classes");
        }
        if self.num_unseen == 0 {
            return bad("need at least 1 unseen class");
        }
        if self.instances_per_class < 2 {
            return bad("need at least 2 instances per class");
        }
        if self.d_v == 0 || self.d_a == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.visual_noise_sigma >= 0.0 && self.visual_noise_sigma.is_finite()) {
            return bad("visual_noise_sigma must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.unseen_overlap) {
            return bad("unseen_overlap must lie in [0,1]");
        }
        if self.unseen_overlap > 0.0 && self.num_unseen < 2 {
            return bad("unseen_overlap > 0 needs at least 2 unseen classes");
        }
        if !(0.0..1.0).contains(&self.seen_test_fraction) {
            return bad("seen_test_fraction must lie in [0,1)");
        }
        Ok(())
    }

    /// Number of unseen class pairs that share a visual prototype.
    pub fn overlap_pairs(&self) -> usize {
        let available = self.num_unseen.div_ceil(4).min(self.num_unseen / 2);
        (self.unseen_overlap * available as f64).round() as usize
    }
}

/// A generated dataset plus the ground truth behind it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: ZslDataset,
    /// `C×d_v` class prototypes, row-major.
    pub prototypes: Vec<f64>,
    /// Entangled unseen pairs `(owner, borrower)`; the borrower reuses the owner's prototype.
    pub overlap_pairs: Vec<(usize, usize)>,
}

impl Synthetic {
    pub fn prototype(&self, class: usize) -> &[f64] {
        let d = self.dataset.d_v();
        &self.prototypes[class * d..(class + 1) * d]
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `d_v×d_a` matrix (row-major). Columns are orthonormal when `d_a <= d_v`.
fn projection(rng: &mut ChaCha8Rng, d_v: usize, d_a: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d_a);
    for _ in 0..d_a {
        let mut c = normal_vec(rng, d_v);
        if cols.len() < d_v {
            for q in &cols {
                let dot: f64 = c.iter().zip(q).map(|(x, y)| x * y).sum();
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().for_each(|x| *x /= norm);
        cols.push(c);
    }
    let mut w = vec![0.0; d_v * d_a];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d_v {
            w[i * d_a + j] = c[i];
        }
    }
    w
}

/// Generates a dataset with its prototypes and entangled pairs.
///
/// Seen classes take ids `0..num_seen`, unseen classes follow. Instances are
/// stored class by class.
pub fn generate(cfg: &SynthConfig) -> Result<Synthetic, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let num_classes = cfg.num_seen + cfg.num_unseen;
    let (d_v, d_a) = (cfg.d_v, cfg.d_a);

    let w = projection(&mut rng, d_v, d_a);
    let mut semantics: Vec<Vec<f64>> = (0..num_classes).map(|_| normal_vec(&mut rng, d_a)).collect();

    let overlap_pairs: Vec<(usize, usize)> = (0..cfg.overlap_pairs())
        .map(|k| (cfg.num_seen + 2 * k, cfg.num_seen + 2 * k + 1))
        .collect();
    for &(owner, borrower) in &overlap_pairs {
        while dist(&semantics[owner], &semantics[borrower]) < MIN_PAIR_SEMANTIC_DISTANCE {
            semantics[borrower] = normal_vec(&mut rng, d_a);
        }
    }

    let mut prototypes = Vec::with_capacity(num_classes * d_v);
    for a in &semantics {
        let mut p: Vec<f64> = (0..d_v)
            .map(|i| (0..d_a).map(|j| w[i * d_a + j] * a[j]).sum())
            .collect();
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            p.iter_mut().for_each(|x| *x *= PROTOTYPE_RADIUS / norm);
        }
        prototypes.extend(p);
    }
    for &(owner, borrower) in &overlap_pairs {
        let src: Vec<f64> = prototypes[owner * d_v..(owner + 1) * d_v].to_vec();
        prototypes[borrower * d_v..(borrower + 1) * d_v].copy_from_slice(&src);
    }

    let n = num_classes * cfg.instances_per_class;
    let mut visual = Vec::with_capacity(n * d_v);
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        let p = &prototypes[c * d_v..(c + 1) * d_v];
        for _ in 0..cfg.instances_per_class {
            for &pi in p {
                let z: f64 = StandardNormal.sample(&mut rng);
                visual.push(pi + cfg.visual_noise_sigma * z);
            }
            labels.push(c);
        }
    }

    let n_test = ((cfg.instances_per_class as f64) * cfg.seen_test_fraction).round() as usize;
    let n_test = n_test.min(cfg.instances_per_class - 1);
    let (mut train, mut test_seen, mut test_unseen) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..num_classes {
        let start = c * cfg.instances_per_class;
        let mut idx: Vec<usize> = (start..start + cfg.instances_per_class).collect();
        if c < cfg.num_seen {
            idx.shuffle(&mut rng);
            let (test, tr) = idx.split_at(n_test);
            let (mut test, mut tr) = (test.to_vec(), tr.to_vec());
            test.sort_unstable();
            tr.sort_unstable();
            test_seen.extend(test);
            train.extend(tr);
        } else {
            test_unseen.extend(idx);
        }
    }

    let dataset = ZslDataset::new(DatasetParts {
        d_v,
        d_a,
        visual,
        labels,
        semantics: semantics.concat(),
        train,
        test_seen,
        test_unseen,
    })?;
    Ok(Synthetic {
        dataset,
        prototypes,
        overlap_pairs,
    })
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<ZslDataset, DataError> {
    generate(cfg).map(|s| s.dataset)
}
