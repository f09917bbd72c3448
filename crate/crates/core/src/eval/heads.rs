use autodiff::{with_no_grad, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::ZslDataset;
use crate::error::{ensure_finite, Error, Result};
use crate::gan::GanBundle;
use crate::metric::Srn;
use crate::nn::{softmax_cross_entropy, Adam, AdamConfig, Mlp, MlpConfig};

/// Feature rows with one class id per row.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &FeatureSet) -> Result<FeatureSet> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(FeatureSet {
            x: Tensor::concat(&[self.x.clone(), other.x.clone()], 0)?,
            labels,
        })
    }

    pub fn from_dataset(ds: &ZslDataset, indices: &[usize]) -> Result<FeatureSet> {
        Ok(FeatureSet {
            x: ds.visual_rows(indices)?,
            labels: indices.iter().map(|&i| ds.label(i)).collect(),
        })
    }
}

/// `per_class` generated features for each class, conditioned on `a_c` and `R(a_c)`.
pub fn synthesize_features(
    bundle: &GanBundle,
    r: &Srn,
    ds: &ZslDataset,
    classes: &[usize],
    per_class: usize,
    seed: u64,
) -> Result<FeatureSet> {
    if let Some(&c) = classes.iter().find(|&&c| c >= ds.num_classes()) {
        return Err(Error::Invalid(format!("unknown class id {c}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(classes.len());
    let mut labels = Vec::with_capacity(classes.len() * per_class);
    with_no_grad(|| -> Result<()> {
        for &c in classes {
            let rows = vec![c; per_class];
            let a = ds.semantic_rows(&rows)?;
            let rep = r.rectify(&a)?;
            let z = crate::gan::noise(per_class, bundle.config().d_z, &mut rng)?;
            parts.push(bundle.generate(&a, &rep, &z)?);
            labels.extend(rows);
        }
        Ok(())
    })?;
    let x = if parts.is_empty() {
        Tensor::zeros(&[0, ds.d_v()])
    } else {
        Tensor::concat(&parts, 0)?
    };
    Ok(FeatureSet { x, labels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    /// Full-batch Adam steps.
    pub steps: usize,
    pub adam: AdamConfig,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            steps: 500,
            adam: AdamConfig {
                alpha: 1e-2,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
        }
    }
}

/// Single affine layer + softmax over an explicit class list.
#[derive(Debug, Clone)]
pub struct SoftmaxHead {
    classes: Vec<usize>,
    mlp: Mlp,
}

impl SoftmaxHead {
    /// Trains on `x` with labels from `classes`; returns the head and the
    /// training accuracy before each step.
    pub fn train(x: &Tensor, labels: &[usize], classes: &[usize], cfg: &HeadConfig, seed: u64) -> Result<(SoftmaxHead, Vec<f64>)> {
        let mut classes = classes.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() || x.rank() != 2 || x.shape()[0] != labels.len() {
            return Err(Error::Invalid("head training needs classes and one label per row".into()));
        }
        let mut counts = vec![0usize; classes.len()];
        let mut y = Vec::with_capacity(labels.len());
        for &l in labels {
            let k = classes
                .binary_search(&l)
                .map_err(|_| Error::Invalid(format!("label {l} is outside the head's classes")))?;
            counts[k] += 1;
            y.push(k);
        }
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Invalid(format!("class {} has no training rows", classes[k])));
        }
        let mut mlp = Mlp::init(MlpConfig::new(vec![x.shape()[1], classes.len()]), seed)?;
        let mut opt = Adam::new(cfg.adam)?;
        let mut accuracy = Vec::with_capacity(cfg.steps);
        for _ in 0..cfg.steps {
            mlp.zero_grad();
            let logits = mlp.forward(x)?;
            accuracy.push(argmax_rows(&logits).iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64);
            let loss = softmax_cross_entropy(&logits, &y)?;
            ensure_finite("classifier loss", loss.item()?)?;
            loss.backward()?;
            opt.step(mlp.params_mut())?;
        }
        mlp.zero_grad();
        Ok((SoftmaxHead { classes, mlp }, accuracy))
    }

    pub fn from_mlp(classes: Vec<usize>, mlp: Mlp) -> Result<SoftmaxHead> {
        if mlp.output_dim() != classes.len() {
            return Err(Error::Invalid("head width differs from its class count".into()));
        }
        Ok(SoftmaxHead { classes, mlp })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.mlp.predict(x)
    }

    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        let logits = self.logits(x)?;
        Ok(with_no_grad(|| logits.softmax())?)
    }

    /// Predicted class ids.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?).into_iter().map(|k| self.classes[k]).collect())
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len().max(1) as f64)
    }
}

/// Column index of each row's maximum (first one on ties).
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let rows = t.shape()[0];
    (0..rows)
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    /// Sum of softmax probabilities.
    Probability,
    /// Sum of raw logits.
    Logit,
}

/// Weights of the visual, semantic and searched-representation heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadWeights {
    pub vs: f64,
    pub ss: f64,
    pub srs: f64,
}

impl HeadWeights {
    /// `f_VS + ω₁·f_SS + ω₂·f_SRS`.
    pub fn full(omega1: f64, omega2: f64) -> HeadWeights {
        HeadWeights {
            vs: 1.0,
            ss: omega1,
            srs: omega2,
        }
    }

    pub fn visual_only() -> HeadWeights {
        HeadWeights::full(0.0, 0.0)
    }
}

/// `w_vs·f_vs + w_ss·f_ss + w_srs·f_srs` row by row. Absent scores count as zero.
pub fn combine_scores(f_vs: &Tensor, f_ss: Option<&Tensor>, f_srs: Option<&Tensor>, w: HeadWeights) -> Result<Tensor> {
    let mut total = f_vs.scale(w.vs);
    for (f, weight) in [(f_ss, w.ss), (f_srs, w.srs)] {
        if let Some(f) = f {
            total = total.add(&f.scale(weight))?;
        }
    }
    Ok(total)
}

/// Three softmax heads sharing one class space, combined per the weights.
#[derive(Debug, Clone)]
pub struct EnsembleClassifier {
    pub vs: SoftmaxHead,
    pub ss: Option<SoftmaxHead>,
    pub srs: Option<SoftmaxHead>,
    pub weights: HeadWeights,
    pub combine: Combine,
}

/// Heads on `x`, `F1(x)` and (when F2 exists) `F2(x)`.
pub fn train_heads(
    train: &FeatureSet,
    classes: &[usize],
    f1: &Mlp,
    f2: Option<&Mlp>,
    cfg: &HeadConfig,
    seed: u64,
) -> Result<EnsembleClassifier> {
    let (vs, _) = SoftmaxHead::train(&train.x, &train.labels, classes, cfg, crate::seed::derive(seed, "vs"))?;
    let (ss, _) = SoftmaxHead::train(&f1.predict(&train.x)?, &train.labels, classes, cfg, crate::seed::derive(seed, "ss"))?;
    let srs = match f2 {
        Some(f2) => Some(
            SoftmaxHead::train(&f2.predict(&train.x)?, &train.labels, classes, cfg, crate::seed::derive(seed, "srs"))?.0,
        ),
        None => None,
    };
    Ok(EnsembleClassifier {
        vs,
        ss: Some(ss),
        srs,
        weights: HeadWeights::visual_only(),
        combine: Combine::Probability,
    })
}

impl EnsembleClassifier {
    pub fn classes(&self) -> &[usize] {
        self.vs.classes()
    }

    fn head_scores(&self, head: &SoftmaxHead, x: &Tensor) -> Result<Tensor> {
        match self.combine {
            Combine::Probability => head.probabilities(x),
            Combine::Logit => head.logits(x),
        }
    }

    /// Per-head score matrices `(f_VS, f_SS, f_SRS)` for visual rows `x`.
    /// Heads with zero weight are skipped.
    pub fn head_outputs(&self, x: &Tensor, f1: &Mlp, f2: Option<&Mlp>) -> Result<(Tensor, Option<Tensor>, Option<Tensor>)> {
        let vs = self.head_scores(&self.vs, x)?;
        let ss = match &self.ss {
            Some(h) if self.weights.ss != 0.0 => Some(self.head_scores(h, &f1.predict(x)?)?),
            _ => None,
        };
        let srs = match (&self.srs, f2) {
            (Some(h), Some(f2)) if self.weights.srs != 0.0 => Some(self.head_scores(h, &f2.predict(x)?)?),
            (Some(_), None) if self.weights.srs != 0.0 => {
                return Err(Error::Invalid("the SRS head needs F2".into()));
            }
            _ => None,
        };
        Ok((vs, ss, srs))
    }

    /// Combined `[n×K]` scores over `classes()`.
    pub fn ensemble_score(&self, x: &Tensor, f1: &Mlp, f2: Option<&Mlp>) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.vs.input_dim() {
            return Err(Error::Invalid(format!(
                "ensemble expects [n×{}] features, got {:?}",
                self.vs.input_dim(),
                x.shape()
            )));
        }
        let (vs, ss, srs) = self.head_outputs(x, f1, f2)?;
        combine_scores(&vs, ss.as_ref(), srs.as_ref(), self.weights)
    }

    pub fn predict(&self, x: &Tensor, f1: &Mlp, f2: Option<&Mlp>) -> Result<Vec<usize>> {
        let scores = self.ensemble_score(x, f1, f2)?;
        Ok(argmax_rows(&scores).into_iter().map(|k| self.classes()[k]).collect())
    }
}
