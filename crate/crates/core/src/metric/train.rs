use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use autodiff::functional::l2;
use autodiff::{with_no_grad, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{mn_total_loss, MetricNet, Srn, TripletInputs};
use crate::dataset::{sample_negative, sample_triplets, ZslDataset};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{weight_decay_term, Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mining {
    Uniform,
    /// Among a few candidate negatives, prefer the closest one that is still
    /// farther than the positive.
    SemiHard { candidates: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnTrainConfig {
    /// n_M; one epoch is `ceil(|train| / batch_size)` minibatches.
    pub epochs: usize,
    /// m₁
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub decay: f64,
    pub mining: Mining,
    pub seed: u64,
}

impl Default for MnTrainConfig {
    fn default() -> Self {
        MnTrainConfig {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            decay: 1e-4,
            mining: Mining::Uniform,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MnTrainLog {
    /// Total loss of every minibatch, in order.
    pub losses: Vec<f64>,
    /// Anchor draws skipped because their class had a single training instance.
    pub skipped_anchors: usize,
}

/// Network inputs for a list of `(anchor, positive, negative)` instance indices.
pub fn triplet_inputs(m: &MetricNet, ds: &ZslDataset, triplets: &[(usize, usize, usize)]) -> Result<TripletInputs> {
    let role = |pick: fn(&(usize, usize, usize)) -> usize| -> Result<Tensor> {
        let idx: Vec<usize> = triplets.iter().map(pick).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| ds.label(i)).collect();
        m.input(&ds.visual_rows(&idx)?, &ds.semantic_rows(&labels)?)
    };
    Ok(TripletInputs {
        anchor: role(|t| t.0)?,
        positive: role(|t| t.1)?,
        negative: role(|t| t.2)?,
    })
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn semi_hard(
    m: &MetricNet,
    ds: &ZslDataset,
    triplets: &mut [(usize, usize, usize)],
    candidates: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let rows = |idx: &[usize]| -> Result<Tensor> {
        let labels: Vec<usize> = idx.iter().map(|&i| ds.label(i)).collect();
        m.embed(&ds.visual_rows(idx)?, &ds.semantic_rows(&labels)?)
    };
    let anchors: Vec<usize> = triplets.iter().map(|t| t.0).collect();
    let positives: Vec<usize> = triplets.iter().map(|t| t.1).collect();
    let mut pool: Vec<usize> = Vec::with_capacity(triplets.len() * candidates);
    for t in triplets.iter() {
        pool.push(t.2);
        for _ in 1..candidates {
            pool.push(sample_negative(ds, ds.label(t.0), rng));
        }
    }
    let (fa, fp, fnn) = (rows(&anchors)?, rows(&positives)?, rows(&pool)?);
    for (i, t) in triplets.iter_mut().enumerate() {
        let d_pos = sq_dist(fa.row(i), fp.row(i));
        let best = (0..candidates)
            .map(|k| (i * candidates + k, sq_dist(fa.row(i), fnn.row(i * candidates + k))))
            .filter(|&(_, d)| d > d_pos)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _)) = best {
            t.2 = pool[j];
        }
    }
    Ok(())
}

/// Trains M on triplet minibatches of the training split.
pub fn train_mn(ds: &ZslDataset, m: &mut MetricNet, cfg: &MnTrainConfig) -> Result<MnTrainLog> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("MN batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam)?;
    let steps = ds.split(crate::dataset::Split::Train).len().div_ceil(cfg.batch_size);
    let mut log = MnTrainLog::default();
    for _ in 0..cfg.epochs {
        for _ in 0..steps {
            let mut batch = sample_triplets(ds, cfg.batch_size, &mut rng)?;
            log.skipped_anchors += batch.skipped;
            if let Mining::SemiHard { candidates } = cfg.mining {
                semi_hard(m, ds, &mut batch.triplets, candidates.max(1), &mut rng)?;
            }
            let inputs = triplet_inputs(m, ds, &batch.triplets)?;
            m.mlp().zero_grad();
            let loss = mn_total_loss(m, &inputs, cfg.decay)?;
            log.losses.push(ensure_finite("MN loss", loss.item()?)?);
            loss.backward()?;
            opt.step(m.mlp_mut().params_mut())?;
        }
    }
    m.mlp().zero_grad();
    Ok(log)
}

/// Fraction of the given triplets whose hinge is active under `m`.
pub fn margin_violation_rate(m: &MetricNet, ds: &ZslDataset, triplets: &[(usize, usize, usize)]) -> Result<f64> {
    let inputs = triplet_inputs(m, ds, triplets)?;
    let (fa, fp, fnn) = with_no_grad(|| -> Result<_> {
        Ok((m.forward(&inputs.anchor)?, m.forward(&inputs.positive)?, m.forward(&inputs.negative)?))
    })?;
    let violated = (0..triplets.len())
        .filter(|&i| sq_dist(fa.row(i), fp.row(i)).sqrt() + m.margin() > sq_dist(fa.row(i), fnn.row(i)).sqrt())
        .count();
    Ok(violated as f64 / triplets.len().max(1) as f64)
}

/// Mean of `M(e)` over the class's training instances.
pub fn class_representation(m: &MetricNet, ds: &ZslDataset, class: usize) -> Result<Vec<f64>> {
    let idx = ds.train_indices_of(class);
    if idx.is_empty() {
        return Err(Error::Invalid(format!("class {class} has no training instances")));
    }
    let labels = vec![class; idx.len()];
    let reps = m.embed(&ds.visual_rows(idx)?, &ds.semantic_rows(&labels)?)?;
    let n = idx.len() as f64;
    let l = m.rep_dim();
    let mut mean = vec![0.0; l];
    for r in 0..idx.len() {
        for (acc, v) in mean.iter_mut().zip(reps.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

fn sampling_loss_to(r: &Srn, target: &[f64], a: &[f64], decay: f64) -> Result<Tensor> {
    let target = Tensor::new(&[1, target.len()], target.to_vec())?;
    let rect = r.forward(&Tensor::new(&[1, a.len()], a.to_vec())?)?;
    Ok(l2(&target.sub(&rect)?).add(&weight_decay_term(r.mlp(), decay)?)?)
}

/// `‖class mean − R(a)‖₂` plus weight decay on R. M receives no gradient.
pub fn srn_sampling_loss(r: &Srn, m: &MetricNet, ds: &ZslDataset, class: usize, decay: f64) -> Result<Tensor> {
    if ds.is_unseen(class) {
        return Err(Error::Invalid(format!(
            "class {class} is unseen; its semantics may not be used for training"
        )));
    }
    let target = class_representation(m, ds, class)?;
    sampling_loss_to(r, &target, ds.semantic(class), decay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrnTrainConfig {
    /// n_R; one epoch visits every seen class once.
    pub epochs: usize,
    pub adam: AdamConfig,
    pub decay: f64,
    pub seed: u64,
}

impl Default for SrnTrainConfig {
    fn default() -> Self {
        SrnTrainConfig {
            epochs: 50,
            adam: AdamConfig::default(),
            decay: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SrnTrainLog {
    /// Mean per-class sampling loss before the first update.
    pub initial_mean_loss: f64,
    /// Mean per-class sampling loss of each epoch.
    pub epoch_mean_losses: Vec<f64>,
}

/// Fits R to the seen class representations of a frozen M.
pub fn train_srn(ds: &ZslDataset, r: &mut Srn, m: &MetricNet, cfg: &SrnTrainConfig) -> Result<SrnTrainLog> {
    if r.rep_dim() != m.rep_dim() {
        return Err(Error::Config(format!(
            "SRN output width {} differs from the metric space width {}",
            r.rep_dim(),
            m.rep_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam)?;
    let mut classes: Vec<usize> = ds.seen_classes().to_vec();
    let targets: Vec<(Vec<f64>, Vec<f64>)> = classes
        .iter()
        .map(|&c| Ok((class_representation(m, ds, c)?, ds.semantic(c).to_vec())))
        .collect::<Result<_>>()?;
    let slot = |c: usize| ds.seen_classes().binary_search(&c).expect("seen class");

    let mut log = SrnTrainLog::default();
    let mut initial = 0.0;
    for (t, a) in &targets {
        initial += with_no_grad(|| sampling_loss_to(r, t, a, cfg.decay))?.item()?;
    }
    log.initial_mean_loss = initial / targets.len() as f64;

    for _ in 0..cfg.epochs {
        classes.shuffle(&mut rng);
        let mut total = 0.0;
        for &c in &classes {
            let (t, a) = &targets[slot(c)];
            r.mlp().zero_grad();
            let loss = sampling_loss_to(r, t, a, cfg.decay)?;
            total += ensure_finite("SRN loss", loss.item()?)?;
            loss.backward()?;
            opt.step(r.mlp_mut().params_mut())?;
        }
        log.epoch_mean_losses.push(total / classes.len() as f64);
    }
    r.mlp().zero_grad();
    Ok(log)
}

/// One searched class representation per class id: the training-instance mean
/// for seen classes, `R(a)` for every other class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRepTable {
    rep_dim: usize,
    rows: Vec<Vec<f64>>,
}

impl ClassRepTable {
    pub fn build(m: &MetricNet, r: &Srn, ds: &ZslDataset) -> Result<ClassRepTable> {
        let mut rows = Vec::with_capacity(ds.num_classes());
        for c in 0..ds.num_classes() {
            if ds.train_indices_of(c).is_empty() {
                rows.push(super::unseen_representation(r, ds.semantic(c))?);
            } else {
                rows.push(class_representation(m, ds, c)?);
            }
        }
        Ok(ClassRepTable {
            rep_dim: m.rep_dim(),
            rows,
        })
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.rows[class]
    }

    /// `class_id,v1,...,vL` per line, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (c, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{c}");
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
