use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use autodiff::{with_no_grad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::losses::{
    critic_score, dcrgan_generator_objective, generate, gradient_penalty, reconstruction_losses, regression_loss,
    wgan_classic_losses, wgan_sr_losses,
};
use super::{GanBundle, TrainSchedule};
use crate::dataset::{sample_batch, Split, ZslDataset};
use crate::error::{ensure_finite, Error, Result};
use crate::metric::Srn;
use crate::nn::{label_log_probs, softmax_cross_entropy, Adam, AdamConfig, Mlp, MlpConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GanLogRow {
    pub step: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_f1: f64,
    pub loss_f2: Option<f64>,
    /// `E[D(real)] − E[D(fake)]` at the last critic step of the loop.
    pub wasserstein: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GanTrainLog {
    pub rows: Vec<GanLogRow>,
}

impl GanTrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss_d,loss_g,loss_f1,loss_f2,wasserstein\n");
        for r in &self.rows {
            let f2 = r.loss_f2.map(|v| format!("{v:?}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{f2},{:?}",
                r.step, r.loss_d, r.loss_g, r.loss_f1, r.wasserstein
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `rows×d_z` standard-normal noise.
pub fn noise<R: Rng + ?Sized>(rows: usize, d_z: usize, rng: &mut R) -> Result<Tensor> {
    let data: Vec<f64> = (0..rows * d_z).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::new(&[rows, d_z], data)?)
}

/// `R(a)` for every seen class, indexed by class id (empty rows elsewhere).
fn seen_reps(ds: &ZslDataset, r: &Srn) -> Result<Vec<Vec<f64>>> {
    let seen = ds.seen_classes();
    let reps = r.rectify(&ds.semantic_rows(seen)?)?;
    let mut table = vec![Vec::new(); ds.num_classes()];
    for (k, &c) in seen.iter().enumerate() {
        table[c] = reps.row(k).to_vec();
    }
    Ok(table)
}

fn rep_rows(table: &[Vec<f64>], labels: &[usize], width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(labels.len() * width);
    for &l in labels {
        data.extend_from_slice(&table[l]);
    }
    Ok(Tensor::new(&[labels.len(), width], data)?)
}

/// Softmax classifier over the seen classes, trained full-batch on the training split.
pub fn pretrain_classifier(ds: &ZslDataset, steps: usize, alpha: f64, seed: u64) -> Result<Mlp> {
    let seen = ds.seen_classes();
    let mut clf = Mlp::init(MlpConfig::new(vec![ds.d_v(), seen.len()]), seed)?;
    let idx = ds.split(Split::Train);
    let x = ds.visual_rows(idx)?;
    let y: Vec<usize> = idx
        .iter()
        .map(|&i| seen.binary_search(&ds.label(i)).expect("training labels are seen"))
        .collect();
    let mut opt = Adam::new(AdamConfig {
        alpha,
        beta1: 0.9,
        ..AdamConfig::default()
    })?;
    for _ in 0..steps {
        clf.zero_grad();
        let loss = softmax_cross_entropy(&clf.forward(&x)?, &y)?;
        ensure_finite("classifier loss", loss.item()?)?;
        loss.backward()?;
        opt.step(clf.params_mut())?;
    }
    clf.zero_grad();
    Ok(clf)
}

/// Alternating critic / regressor / generator optimization.
///
/// Each outer loop runs `n_d` critic updates on detached fakes, then `n_g`
/// iterations of an F1 step, an F2 step and a generator step on
/// `L_G + λ₁·L_F1 + λ₂·L_F2`. `r` supplies the frozen `R(a)` conditioning; it is
/// only read. One log row is written per outer loop.
pub fn train_gan(
    ds: &ZslDataset,
    bundle: &mut GanBundle,
    schedule: &TrainSchedule,
    r: &Srn,
    seed: u64,
) -> Result<GanTrainLog> {
    schedule.validate()?;
    if r.rep_dim() != bundle.rep_dim || r.d_a() != bundle.d_a || ds.d_v() != bundle.d_v {
        return Err(Error::Config("GAN widths do not match the dataset and SRN".into()));
    }
    let mode = bundle.mode();
    let cfg = bundle.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if mode.is_classic() && bundle.classifier.is_none() {
        bundle.classifier = Some(pretrain_classifier(
            ds,
            cfg.classifier_steps,
            cfg.classifier_alpha,
            crate::seed::derive(seed, "classifier"),
        )?);
    }
    let reps = seen_reps(ds, r)?;
    let seen = ds.seen_classes().to_vec();
    let m = schedule.batch_size;
    let mut log = GanTrainLog::default();

    for step in 0..schedule.n_loop {
        let (mut last_d, mut last_w) = (0.0, 0.0);
        for _ in 0..schedule.n_d {
            let b = sample_batch(ds, Split::Train, m, &mut rng)?;
            let rep = rep_rows(&reps, &b.labels, bundle.rep_dim)?;
            let z = noise(m, cfg.d_z, &mut rng)?;
            let x_fake = with_no_grad(|| generate(&bundle.g, &bundle.generator_cond(&b.a, &rep), &z))?;
            let d_cond = bundle.critic_cond(&b.a, &rep);
            let penalty = gradient_penalty(&bundle.d, &b.x, &x_fake, &d_cond, cfg.lambda_gp, &mut rng)?;
            let l_d = match &bundle.classifier {
                Some(clf) if mode.is_classic() => {
                    let y = class_slots(&seen, &b.labels);
                    wgan_classic_losses(&bundle.d, clf, &b.x, &x_fake, &y, &penalty)?.0
                }
                _ => wgan_sr_losses(&bundle.d, &b.x, &x_fake, &b.a, &rep, &penalty)?.0,
            };
            last_d = ensure_finite("critic loss", l_d.item()?)?;
            last_w = with_no_grad(|| -> Result<f64> {
                let real = critic_score(&bundle.d, &b.x, &d_cond)?.mean().item()?;
                let fake = critic_score(&bundle.d, &x_fake, &d_cond)?.mean().item()?;
                Ok(real - fake)
            })?;
            bundle.d.zero_grad();
            l_d.backward()?;
            bundle.opt_d.step(bundle.d.params_mut())?;
        }

        let mut row = GanLogRow {
            step,
            loss_d: last_d,
            loss_g: 0.0,
            loss_f1: 0.0,
            loss_f2: None,
            wasserstein: last_w,
        };
        for _ in 0..schedule.n_g {
            let b = sample_batch(ds, Split::Train, m, &mut rng)?;
            let rep = rep_rows(&reps, &b.labels, bundle.rep_dim)?;
            let z = noise(m, cfg.d_z, &mut rng)?;
            let x_fake = generate(&bundle.g, &bundle.generator_cond(&b.a, &rep), &z)?;
            let detached = x_fake.detach();

            bundle.f1.zero_grad();
            let l = regression_loss(&bundle.f1, &detached, &b.a)?;
            ensure_finite("F1 loss", l.item()?)?;
            l.backward()?;
            bundle.opt_f1.step(bundle.f1.params_mut())?;
            if let Some(f2) = bundle.f2.as_mut() {
                f2.zero_grad();
                let l = regression_loss(f2, &detached, &rep)?;
                ensure_finite("F2 loss", l.item()?)?;
                l.backward()?;
                bundle.opt_f2.step(f2.params_mut())?;
            }

            let rep_opt = mode.has_f2().then_some(&rep);
            let (l_f1, l_f2) = reconstruction_losses(&bundle.f1, bundle.f2.as_ref(), &x_fake, &b.a, rep_opt)?;
            let l_g = match &bundle.classifier {
                Some(clf) if mode.is_classic() => {
                    let y = class_slots(&seen, &b.labels);
                    let adv = critic_score(&bundle.d, &x_fake, &[])?.mean().neg();
                    adv.sub(&label_log_probs(&clf.forward(&x_fake)?, &y)?.mean())?
                }
                _ => critic_score(&bundle.d, &x_fake, &[&b.a, &rep])?.mean().neg(),
            };
            let total = dcrgan_generator_objective(&l_g, &l_f1, l_f2.as_ref(), cfg.lambda1, cfg.lambda2)?;
            ensure_finite("generator loss", total.item()?)?;
            row.loss_g = l_g.item()?;
            row.loss_f1 = l_f1.item()?;
            row.loss_f2 = l_f2.as_ref().map(|t| t.item()).transpose()?;
            bundle.g.zero_grad();
            total.backward()?;
            bundle.opt_g.step(bundle.g.params_mut())?;
        }
        log.rows.push(row);
    }
    bundle.zero_grad();
    Ok(log)
}

fn class_slots(seen: &[usize], labels: &[usize]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| seen.binary_search(l).expect("training labels are seen"))
        .collect()
}
