//! End-to-end runs: staged training, evaluation with weight selection, and ablation variants.

mod config;
mod store;

pub use config::{PipelineConfig, Stage, KEYS};
pub use store::Store;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Split, ZslDataset};
use crate::error::{Error, Result};
use crate::eval::{
    argmax_rows, combine_scores, gzsl_metrics, harmonic_mean, per_class_accuracies, per_class_top1,
    synthesize_features, train_heads, EnsembleClassifier, EvalMode, EvalReport, FeatureSet, HeadWeights, Scores,
};
use crate::gan::{train_gan, GanBundle, GanConfig, GanMode, GanTrainLog};
use crate::metric::{train_mn, train_srn, MetricNet, MnTrainConfig, MnTrainLog, Srn, SrnTrainConfig, SrnTrainLog};
use crate::seed::derive;

/// Ablation configurations: generator objective and which heads are ensembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    A,
    B,
    C1,
    C2,
    C3,
    C4,
    C5,
}

/// How a variant's ensemble weights are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightPlan {
    Fixed(HeadWeights),
    /// `f_VS + ω₂·f_SRS`, ω₂ chosen on validation data.
    SearchSrs,
    /// `f_VS + ω₁·f_SS + ω₂·f_SRS`, both chosen on validation data.
    SearchBoth,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::A,
        Variant::B,
        Variant::C1,
        Variant::C2,
        Variant::C3,
        Variant::C4,
        Variant::C5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C1 => "C-1",
            Variant::C2 => "C-2",
            Variant::C3 => "C-3",
            Variant::C4 => "C-4",
            Variant::C5 => "C-5",
        }
    }

    /// Accepts `A`, `B`, `C1`…`C5` and `C-1`…`C-5`, case-insensitively.
    pub fn parse(s: &str) -> Result<Variant> {
        let norm: String = s.trim().to_ascii_uppercase().chars().filter(|c| *c != '-').collect();
        Ok(match norm.as_str() {
            "A" => Variant::A,
            "B" => Variant::B,
            "C1" => Variant::C1,
            "C2" => Variant::C2,
            "C3" => Variant::C3,
            "C4" => Variant::C4,
            "C5" => Variant::C5,
            _ => return Err(Error::Config(format!("unknown variant {s:?}; expected A, B or C1..C5"))),
        })
    }

    pub fn gan_mode(self) -> GanMode {
        match self {
            Variant::A => GanMode::ClassicA,
            Variant::B => GanMode::ClassicB,
            _ => GanMode::WganSr,
        }
    }

    pub fn weight_plan(self) -> WeightPlan {
        let fixed = |vs, ss, srs| WeightPlan::Fixed(HeadWeights { vs, ss, srs });
        match self {
            Variant::A | Variant::B | Variant::C1 => fixed(1.0, 0.0, 0.0),
            Variant::C2 => fixed(0.0, 1.0, 0.0),
            Variant::C3 => fixed(0.0, 0.0, 1.0),
            Variant::C4 => WeightPlan::SearchSrs,
            Variant::C5 => WeightPlan::SearchBoth,
        }
    }
}

/// Trained networks of one run.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub m: MetricNet,
    pub r: Srn,
    pub gan: GanBundle,
}

pub fn train_metric_stage(ds: &ZslDataset, cfg: &PipelineConfig) -> Result<(MetricNet, MnTrainLog)> {
    let mut m = MetricNet::new(ds.d_v(), ds.d_a(), &cfg.metric, derive(cfg.seed, "mn-init"))?;
    let log = train_mn(
        ds,
        &mut m,
        &MnTrainConfig {
            seed: derive(cfg.seed, "mn-train"),
            ..cfg.mn.clone()
        },
    )
    .map_err(|e| stage_error("mn", e))?;
    Ok((m, log))
}

pub fn train_srn_stage(ds: &ZslDataset, m: &MetricNet, cfg: &PipelineConfig) -> Result<(Srn, SrnTrainLog)> {
    let mut r = Srn::new(ds.d_a(), m.rep_dim(), &cfg.srn_hidden, derive(cfg.seed, "srn-init"))?;
    let log = train_srn(
        ds,
        &mut r,
        m,
        &SrnTrainConfig {
            seed: derive(cfg.seed, "srn-train"),
            ..cfg.srn.clone()
        },
    )
    .map_err(|e| stage_error("srn", e))?;
    Ok((r, log))
}

pub fn train_gan_stage(ds: &ZslDataset, r: &Srn, cfg: &PipelineConfig, mode: GanMode) -> Result<(GanBundle, GanTrainLog)> {
    let gan_cfg = GanConfig {
        mode,
        ..cfg.gan.clone()
    };
    let mut bundle = GanBundle::new(gan_cfg, ds.d_v(), ds.d_a(), r.rep_dim(), derive(cfg.seed, "gan-init"))?;
    let log = train_gan(ds, &mut bundle, &cfg.schedule, r, derive(cfg.seed, "gan-train"))
        .map_err(|e| stage_error("gan", e))?;
    Ok((bundle, log))
}

/// Numeric failures keep their kind; everything else is tagged with the stage.
fn stage_error(stage: &'static str, e: Error) -> Error {
    match e {
        Error::Numeric(what) => Error::Numeric(format!("{what} during stage {stage}")),
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage,
            msg: other.to_string(),
        },
    }
}

/// MN, SRN and GAN trained in order for one generator mode.
pub fn train_all(ds: &ZslDataset, cfg: &PipelineConfig, mode: GanMode) -> Result<TrainedModels> {
    cfg.validate()?;
    let (m, _) = train_metric_stage(ds, cfg)?;
    let (r, _) = train_srn_stage(ds, &m, cfg)?;
    let (gan, _) = train_gan_stage(ds, &r, cfg, mode)?;
    Ok(TrainedModels { m, r, gan })
}

/// Per seen class, the last `round(fraction·n)` of a shuffled copy of its
/// training indices (never all of them). Returns `(kept, held_out)`, sorted.
pub fn validation_split(ds: &ZslDataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut kept, mut held) = (Vec::new(), Vec::new());
    for &c in ds.seen_classes() {
        let mut idx = ds.train_indices_of(c).to_vec();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        let cut = idx.len() - n_val;
        kept.extend_from_slice(&idx[..cut]);
        held.extend_from_slice(&idx[cut..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    (kept, held)
}

/// Candidate `(ω₁, ω₂)` pairs for a plan, in search order.
fn candidates(plan: WeightPlan, grid: &[f64]) -> Vec<HeadWeights> {
    match plan {
        WeightPlan::Fixed(w) => vec![w],
        WeightPlan::SearchSrs => grid.iter().map(|&w2| HeadWeights::full(0.0, w2)).collect(),
        WeightPlan::SearchBoth => grid
            .iter()
            .flat_map(|&w1| grid.iter().map(move |&w2| HeadWeights::full(w1, w2)))
            .collect(),
    }
}

struct Validation {
    seen: Option<FeatureSet>,
    unseen: FeatureSet,
}

/// Picks the candidate with the best validation score (H in GZSL, T1 in ZSL);
/// the earliest candidate wins ties.
fn select_weights(
    clf: &EnsembleClassifier,
    models: &TrainedModels,
    val: &Validation,
    options: &[HeadWeights],
    ds: &ZslDataset,
) -> Result<HeadWeights> {
    if options.len() == 1 {
        return Ok(options[0]);
    }
    let mut probe = clf.clone();
    probe.weights = HeadWeights::full(1.0, 1.0);
    let f2 = models.gan.f2.as_ref();
    let outputs = |fs: &FeatureSet| probe.head_outputs(&fs.x, &models.gan.f1, f2);
    let unseen_out = outputs(&val.unseen)?;
    let seen_out = val.seen.as_ref().map(outputs).transpose()?;
    let classes = clf.classes();
    let predict = |out: &(autodiff::Tensor, Option<autodiff::Tensor>, Option<autodiff::Tensor>), w| -> Result<Vec<usize>> {
        let s = combine_scores(&out.0, out.1.as_ref(), out.2.as_ref(), w)?;
        Ok(argmax_rows(&s).into_iter().map(|k| classes[k]).collect())
    };
    let mut best = (f64::NEG_INFINITY, options[0]);
    for &w in options {
        let u = per_class_top1(&predict(&unseen_out, w)?, &val.unseen.labels, ds.unseen_classes())?;
        let score = match (&seen_out, &val.seen) {
            (Some(out), Some(fs)) if !fs.is_empty() => {
                harmonic_mean(u, per_class_top1(&predict(out, w)?, &fs.labels, ds.seen_classes())?)
            }
            _ => u,
        };
        if score > best.0 {
            best = (score, w);
        }
    }
    Ok(best.1)
}

/// Trains the heads for `mode`, selects the ensemble weights and scores the test splits.
///
/// ZSL heads see only synthesized unseen features and predict among unseen
/// classes. GZSL heads see real seen training features plus synthesized unseen
/// ones and predict among all classes.
pub fn evaluate(
    ds: &ZslDataset,
    models: &TrainedModels,
    variant: Variant,
    mode: EvalMode,
    cfg: &PipelineConfig,
) -> Result<(EvalReport, EnsembleClassifier)> {
    if variant.gan_mode() != models.gan.mode() {
        return Err(Error::Config(format!(
            "variant {} needs a {:?} generator, found {:?}",
            variant.name(),
            variant.gan_mode(),
            models.gan.mode()
        )));
    }
    let seed = cfg.seed;
    let unseen = ds.unseen_classes();
    let fake = synthesize_features(&models.gan, &models.r, ds, unseen, cfg.synth_per_class, derive(seed, "synth"))?;
    let val_count = cfg.synth_per_class.div_ceil(3);
    let val_unseen = synthesize_features(&models.gan, &models.r, ds, unseen, val_count, derive(seed, "synth-val"))?;

    let (train, classes, val) = match mode {
        EvalMode::Zsl => (
            fake,
            unseen.to_vec(),
            Validation {
                seen: None,
                unseen: val_unseen,
            },
        ),
        EvalMode::Gzsl => {
            let (kept, held) = validation_split(ds, cfg.validation_fraction, derive(seed, "validation"));
            let mut all: Vec<usize> = ds.seen_classes().to_vec();
            all.extend_from_slice(unseen);
            all.sort_unstable();
            (
                FeatureSet::from_dataset(ds, &kept)?.concat(&fake)?,
                all,
                Validation {
                    seen: Some(FeatureSet::from_dataset(ds, &held)?),
                    unseen: val_unseen,
                },
            )
        }
    };

    let f1 = &models.gan.f1;
    let f2 = models.gan.f2.as_ref();
    let mut clf = train_heads(&train, &classes, f1, f2, &cfg.heads, derive(seed, "heads"))?;
    clf.combine = cfg.combine;
    let plan = match (variant.weight_plan(), cfg.omega) {
        (WeightPlan::SearchSrs, Some((_, w2))) => WeightPlan::Fixed(HeadWeights::full(0.0, w2)),
        (WeightPlan::SearchBoth, Some((w1, w2))) => WeightPlan::Fixed(HeadWeights::full(w1, w2)),
        (plan, _) => plan,
    };
    if f2.is_none() && !matches!(plan, WeightPlan::Fixed(w) if w.srs == 0.0) {
        return Err(Error::Config(format!("variant {} needs the F2 regressor", variant.name())));
    }
    clf.weights = select_weights(&clf, models, &val, &candidates(plan, &cfg.omega_grid), ds)?;

    let test = |split: Split| -> Result<(Vec<usize>, Vec<usize>)> {
        let fs = FeatureSet::from_dataset(ds, ds.split(split))?;
        Ok((clf.predict(&fs.x, f1, f2)?, fs.labels))
    };
    let (pred_u, lab_u) = test(Split::TestUnseen)?;
    let (scores, per_class) = match mode {
        EvalMode::Zsl => {
            let pc = per_class_accuracies(&pred_u, &lab_u, unseen)?;
            (Scores::Zsl { t1: pc.mean }, pc.classes)
        }
        EvalMode::Gzsl => {
            let (pred_s, lab_s) = test(Split::TestSeen)?;
            let (u, s, h) = gzsl_metrics(&pred_u, &lab_u, unseen, &pred_s, &lab_s, ds.seen_classes())?;
            let mut pc = per_class_accuracies(&pred_s, &lab_s, ds.seen_classes())?.classes;
            pc.extend(per_class_accuracies(&pred_u, &lab_u, unseen)?.classes);
            (Scores::Gzsl { u, s, h }, pc)
        }
    };
    let report = EvalReport {
        variant: variant.name().to_string(),
        scores,
        per_class,
        omega1: clf.weights.ss,
        omega2: clf.weights.srs,
        rep_dim: models.m.rep_dim(),
        seed,
    };
    report.validate()?;
    Ok((report, clf))
}

/// Full pipeline for one variant, scored in the GZSL setting.
pub fn run_ablation(ds: &ZslDataset, variant: Variant, cfg: &PipelineConfig) -> Result<EvalReport> {
    let models = train_all(ds, cfg, variant.gan_mode())?;
    Ok(evaluate(ds, &models, variant, EvalMode::Gzsl, cfg)?.0)
}

/// [`run_ablation`] for several variants, training MN, SRN and each generator mode once.
///
/// Every row equals what `run_ablation` returns for that variant alone.
pub fn run_ablation_suite(ds: &ZslDataset, variants: &[Variant], cfg: &PipelineConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let (m, _) = train_metric_stage(ds, cfg)?;
    let (r, _) = train_srn_stage(ds, &m, cfg)?;
    let mut trained: Vec<TrainedModels> = Vec::new();
    let mut out = Vec::with_capacity(variants.len());
    for &v in variants {
        let mode = v.gan_mode();
        let k = match trained.iter().position(|t| t.gan.mode() == mode) {
            Some(k) => k,
            None => {
                let (gan, _) = train_gan_stage(ds, &r, cfg, mode)?;
                trained.push(TrainedModels {
                    m: m.clone(),
                    r: r.clone(),
                    gan,
                });
                trained.len() - 1
            }
        };
        out.push(evaluate(ds, &trained[k], v, EvalMode::Gzsl, cfg)?.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert_eq!(Variant::parse("c5").unwrap(), Variant::C5);
        assert!(Variant::parse("D").is_err());
    }

    #[test]
    fn variant_table() {
        assert_eq!(Variant::A.gan_mode(), GanMode::ClassicA);
        assert_eq!(Variant::B.gan_mode(), GanMode::ClassicB);
        assert_eq!(Variant::C5.weight_plan(), WeightPlan::SearchBoth);
        assert_eq!(Variant::C1.weight_plan(), WeightPlan::Fixed(HeadWeights::visual_only()));
    }

    #[test]
    fn search_grid_sizes() {
        let g = [0.0, 0.5, 1.0];
        assert_eq!(candidates(WeightPlan::SearchBoth, &g).len(), 9);
        assert_eq!(candidates(WeightPlan::SearchSrs, &g).len(), 3);
        assert!(candidates(WeightPlan::SearchSrs, &g).iter().all(|w| w.ss == 0.0 && w.vs == 1.0));
    }
}
