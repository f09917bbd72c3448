//! Straight-line re-implementations of the model's loss and scoring formulas.
//!
//! Each `eq*` function draws `trials` random networks and inputs, evaluates the
//! library routine and a loop-based oracle written from the formula, and
//! returns the largest absolute disagreement.
#![allow(dead_code)]

use autodiff::functional::SQRT_EPS;
use autodiff::Tensor;
use dcrgan::dataset::{DatasetParts, ZslDataset};
use dcrgan::eval::{per_class_top1, Combine, EnsembleClassifier, HeadWeights, SoftmaxHead};
use dcrgan::gan::{
    dcrgan_generator_objective, generate, gradient_penalty_at, interpolate, reconstruction_losses,
    wgan_classic_losses, wgan_sr_losses,
};
use dcrgan::metric::{mmtl_loss, mn_total_loss, srn_sampling_loss, triplet_loss_tl, InputMode, MetricNet, Srn, TripletInputs};
use dcrgan::nn::{Mlp, MlpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const SLOPE: f64 = 0.2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| normal_vec(rng, d)).collect()
}

pub fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

/// Random MLP with zero-mean normal weights and biases (biases nonzero on purpose).
pub fn random_mlp(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Mlp {
    let layers = sizes
        .windows(2)
        .map(|p| {
            let scale = 1.0 / (p[0] as f64).sqrt();
            let w = normal_vec(rng, p[0] * p[1]).into_iter().map(|v| v * scale).collect();
            (w, normal_vec(rng, p[1]).into_iter().map(|v| 0.1 * v).collect())
        })
        .collect();
    Mlp::from_layers(MlpConfig::new(sizes.to_vec()), layers).unwrap()
}

/// LeakyReLU(0.2) hidden layers, linear output.
pub fn forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    let layers = mlp.num_layers();
    for l in 0..layers {
        let (w, b) = (mlp.weight(l).data(), mlp.bias(l).data());
        let inp = h.len();
        let out = b.len();
        let mut next = vec![0.0; out];
        for o in 0..out {
            let mut acc = b[o];
            for i in 0..inp {
                acc += w[o * inp + i] * h[i];
            }
            next[o] = if l + 1 < layers && acc < 0.0 { SLOPE * acc } else { acc };
        }
        h = next;
    }
    h
}

/// Gradient of the scalar output of a one-hidden-layer MLP with respect to its input.
pub fn input_gradient(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
    assert_eq!(mlp.num_layers(), 2);
    let (w0, b0, w1) = (mlp.weight(0).data(), mlp.bias(0).data(), mlp.weight(1).data());
    let inp = input.len();
    let hidden = b0.len();
    let mut g = vec![0.0; inp];
    for h in 0..hidden {
        let mut pre = b0[h];
        for i in 0..inp {
            pre += w0[h * inp + i] * input[i];
        }
        let slope = if pre < 0.0 { SLOPE } else { 1.0 };
        for i in 0..inp {
            g[i] += w1[h] * slope * w0[h * inp + i];
        }
    }
    g
}

/// Euclidean distance with the same `√(s + ε)` smoothing the library uses.
pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    (s + SQRT_EPS).sqrt()
}

fn sum_sq(mlp: &Mlp) -> f64 {
    let mut s = 0.0;
    for p in mlp.params() {
        for v in p.data() {
            s += v * v;
        }
    }
    s
}

fn hinge_oracle(m: &Mlp, a: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<f64>], margin: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let (fa, fp, fnn) = (forward(m, &a[i]), forward(m, &p[i]), forward(m, &n[i]));
        total += (margin + euclid(&fa, &fp) - euclid(&fa, &fnn)).max(0.0);
    }
    total / a.len() as f64
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

/// Traditional triplet loss on visual features.
pub fn triplet_visual(trials: usize) -> f64 {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let margin = r.random_range(0.5..2.0);
        let mlp = random_mlp(&mut r, &[4, 6, 3]);
        let m = MetricNet::from_mlp(mlp.clone(), InputMode::VisualOnly, margin, 4, 2).unwrap();
        let (a, p, n) = (rows(&mut r, 5, 4), rows(&mut r, 5, 4), rows(&mut r, 5, 4));
        let got = triplet_loss_tl(&m, &tensor(&a), &tensor(&p), &tensor(&n)).unwrap().item().unwrap();
        worst = worst.max((got - hinge_oracle(&mlp, &a, &p, &n, margin)).abs());
    }
    worst
}

fn multimodal_batch(r: &mut ChaCha8Rng) -> [Vec<Vec<f64>>; 3] {
    let make = |r: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..5).map(|_| concat(&normal_vec(r, 4), &normal_vec(r, 2))).collect()
    };
    [make(r), make(r), make(r)]
}

/// Multi-modal triplet loss on `[x, a]`.
pub fn triplet_multimodal(trials: usize) -> f64 {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let margin = r.random_range(0.5..2.0);
        let mlp = random_mlp(&mut r, &[6, 6, 3]);
        let m = MetricNet::from_mlp(mlp.clone(), InputMode::Multimodal, margin, 4, 2).unwrap();
        let [a, p, n] = multimodal_batch(&mut r);
        let got = mmtl_loss(&m, &tensor(&a), &tensor(&p), &tensor(&n)).unwrap().item().unwrap();
        worst = worst.max((got - hinge_oracle(&mlp, &a, &p, &n, margin)).abs());
    }
    worst
}

/// Total metric-network loss: triplet term plus weight decay.
pub fn metric_total(trials: usize) -> f64 {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let margin = r.random_range(0.5..2.0);
        let decay = r.random_range(0.0..0.1);
        let mlp = random_mlp(&mut r, &[6, 6, 3]);
        let m = MetricNet::from_mlp(mlp.clone(), InputMode::Multimodal, margin, 4, 2).unwrap();
        let [a, p, n] = multimodal_batch(&mut r);
        let batch = TripletInputs {
            anchor: tensor(&a),
            positive: tensor(&p),
            negative: tensor(&n),
        };
        let got = mn_total_loss(&m, &batch, decay).unwrap().item().unwrap();
        let want = hinge_oracle(&mlp, &a, &p, &n, margin) + decay * sum_sq(&mlp);
        worst = worst.max((got - want).abs());
    }
    worst
}

/// Three seen classes with three training instances each and one unseen class.
pub fn random_dataset(r: &mut ChaCha8Rng, d_v: usize, d_a: usize) -> ZslDataset {
    let mut visual = Vec::new();
    let mut labels = Vec::new();
    let (mut train, mut test_seen, mut test_unseen) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..4 {
        for k in 0..4 {
            let i = labels.len();
            visual.extend(normal_vec(r, d_v));
            labels.push(c);
            match (c, k) {
                (3, _) => test_unseen.push(i),
                (_, 0) => test_seen.push(i),
                _ => train.push(i),
            }
        }
    }
    ZslDataset::new(DatasetParts {
        d_v,
        d_a,
        visual,
        labels,
        semantics: normal_vec(r, 4 * d_a),
        train,
        test_seen,
        test_unseen,
    })
    .unwrap()
}

/// Sampling loss `‖mean_i M([x_i, a]) − R(a)‖₂` plus weight decay on R.
pub fn srn_sampling(trials: usize) -> f64 {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let ds = random_dataset(&mut r, 4, 2);
        let m_mlp = random_mlp(&mut r, &[6, 5, 3]);
        let m = MetricNet::from_mlp(m_mlp.clone(), InputMode::Multimodal, 1.0, 4, 2).unwrap();
        let r_mlp = random_mlp(&mut r, &[2, 5, 3]);
        let srn = Srn::from_mlp(r_mlp.clone());
        let decay = r.random_range(0.0..0.1);
        let class = r.random_range(0..3);
        let got = srn_sampling_loss(&srn, &m, &ds, class, decay).unwrap().item().unwrap();
        let idx = ds.train_indices_of(class);
        let mut mean = vec![0.0; 3];
        for &i in idx {
            let out = forward(&m_mlp, &concat(ds.visual_row(i), ds.semantic(class)));
            for k in 0..3 {
                mean[k] += out[k];
            }
        }
        for v in mean.iter_mut() {
            *v /= idx.len() as f64;
        }
        let want = euclid(&mean, &forward(&r_mlp, ds.semantic(class))) + decay * sum_sq(&r_mlp);
        worst = worst.max((got - want).abs());
    }
    worst
}

/// Classic conditional WGAN losses with a seen-class classifier.
pub fn classic_wgan(trials: usize) -> f64 {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let d = random_mlp(&mut r, &[4, 5, 1]);
        let clf = random_mlp(&mut r, &[4, 3]);
        let (x, xf) = (rows(&mut r, 6, 4), rows(&mut r, 6, 4));
        let labels: Vec<usize> = (0..6).map(|_| r.random_range(0..3)).collect();
        let penalty = r.random_range(0.0..2.0);
        let (l_d, l_g) =
            wgan_classic_losses(&d, &clf, &tensor(&x), &tensor(&xf), &labels, &Tensor::scalar(penalty)).unwrap();
        let log_p = |row: &[f64], y: usize| {
            let z = forward(&clf, row);
            let mut s = 0.0;
            for v in &z {
                s += v.exp();
            }
            z[y] - s.ln()
        };
        let mut terms = [0.0; 4];
        for i in 0..6 {
            terms[0] += forward(&d, &xf[i])[0] / 6.0;
            terms[1] += forward(&d, &x[i])[0] / 6.0;
            terms[2] += log_p(&xf[i], labels[i]) / 6.0;
            terms[3] += log_p(&x[i], labels[i]) / 6.0;
        }
        let want_d = terms[0] - terms[1] + terms[2] - terms[3] + penalty;
        let want_g = -terms[0] - terms[2];
        worst = worst
            .max((l_d.item().unwrap() - want_d).abs())
            .max((l_g.item().unwrap() - want_g).abs());
    }
    worst
}

/// Searched-representation WGAN critic and generator losses, with the
/// gradient penalty at per-row interpolates.
pub fn searched_wgan(trials: usize) -> f64 {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    let (d_v, d_a, l) = (4, 2, 3);
    for _ in 0..trials {
        let d = random_mlp(&mut r, &[d_v + d_a + l, 6, 1]);
        let (x, xf, a, rep) = (rows(&mut r, 5, d_v), rows(&mut r, 5, d_v), rows(&mut r, 5, d_a), rows(&mut r, 5, l));
        let mu: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
        let lambda = r.random_range(0.0..20.0);
        let (ta, trep) = (tensor(&a), tensor(&rep));
        let x_hat = interpolate(&tensor(&x), &tensor(&xf), &mu).unwrap();
        let penalty = gradient_penalty_at(&d, &x_hat, &[&ta, &trep], lambda).unwrap();
        let (l_d, l_g) = wgan_sr_losses(&d, &tensor(&x), &tensor(&xf), &ta, &trep, &penalty).unwrap();

        let (mut fake, mut real, mut pen) = (0.0, 0.0, 0.0);
        for i in 0..5 {
            let cond = concat(&a[i], &rep[i]);
            fake += forward(&d, &concat(&xf[i], &cond))[0] / 5.0;
            real += forward(&d, &concat(&x[i], &cond))[0] / 5.0;
            let hat: Vec<f64> = (0..d_v).map(|j| mu[i] * x[i][j] + (1.0 - mu[i]) * xf[i][j]).collect();
            let g = input_gradient(&d, &concat(&hat, &cond));
            let norm = (g[..d_v].iter().map(|v| v * v).sum::<f64>() + SQRT_EPS).sqrt();
            pen += (norm - 1.0) * (norm - 1.0) / 5.0;
        }
        let want_d = fake - real + lambda * pen;
        worst = worst
            .max((l_d.item().unwrap() - want_d).abs())
            .max((l_g.item().unwrap() + fake).abs());
    }
    worst
}

fn l1_oracle(f: &Mlp, x: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        let out = forward(f, &x[i]);
        for k in 0..out.len() {
            total += (out[k] - target[i][k]).abs();
        }
    }
    total / x.len() as f64
}

/// Semantic reconstruction `mean_i ‖F1(x_fake,i) − a_i‖₁`.
pub fn semantic_reconstruction(trials: usize) -> f64 {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let f1 = random_mlp(&mut r, &[4, 5, 2]);
        let (xf, a) = (rows(&mut r, 6, 4), rows(&mut r, 6, 2));
        let (got, _) = reconstruction_losses(&f1, None, &tensor(&xf), &tensor(&a), None).unwrap();
        worst = worst.max((got.item().unwrap() - l1_oracle(&f1, &xf, &a)).abs());
    }
    worst
}

/// Representation reconstruction `mean_i ‖F2(x_fake,i) − R(a_i)‖₁`.
pub fn representation_reconstruction(trials: usize) -> f64 {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let f1 = random_mlp(&mut r, &[4, 5, 2]);
        let f2 = random_mlp(&mut r, &[4, 5, 3]);
        let r_mlp = random_mlp(&mut r, &[2, 4, 3]);
        let (xf, a) = (rows(&mut r, 6, 4), rows(&mut r, 6, 2));
        let rep: Vec<Vec<f64>> = a.iter().map(|row| forward(&r_mlp, row)).collect();
        let (_, got) =
            reconstruction_losses(&f1, Some(&f2), &tensor(&xf), &tensor(&a), Some(&tensor(&rep))).unwrap();
        worst = worst.max((got.unwrap().item().unwrap() - l1_oracle(&f2, &xf, &rep)).abs());
    }
    worst
}

/// Generator-side objective `L_G + λ₁·L_F1 + λ₂·L_F2` on freshly generated features.
pub fn generator_objective(trials: usize) -> f64 {
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    let (d_v, d_a, l, d_z) = (4, 2, 3, 2);
    for _ in 0..trials {
        let g = random_mlp(&mut r, &[d_a + l + d_z, 6, d_v]);
        let d = random_mlp(&mut r, &[d_v + d_a + l, 5, 1]);
        let f1 = random_mlp(&mut r, &[d_v, 4, d_a]);
        let f2 = random_mlp(&mut r, &[d_v, 4, l]);
        let (a, rep, z) = (rows(&mut r, 5, d_a), rows(&mut r, 5, l), rows(&mut r, 5, d_z));
        let (l1, l2) = (r.random_range(0.0..1.0), r.random_range(0.0..1.0));
        let (ta, trep) = (tensor(&a), tensor(&rep));
        let fake = generate(&g, &[&ta, &trep], &tensor(&z)).unwrap();
        let zero = Tensor::scalar(0.0);
        let (_, l_g) = wgan_sr_losses(&d, &fake, &fake, &ta, &trep, &zero).unwrap();
        let (lf1, lf2) = reconstruction_losses(&f1, Some(&f2), &fake, &ta, Some(&trep)).unwrap();
        let got = dcrgan_generator_objective(&l_g, &lf1, lf2.as_ref(), l1, l2).unwrap().item().unwrap();

        let xf: Vec<Vec<f64>> = (0..5).map(|i| forward(&g, &concat(&concat(&a[i], &rep[i]), &z[i]))).collect();
        let mut adv = 0.0;
        for i in 0..5 {
            adv -= forward(&d, &concat(&xf[i], &concat(&a[i], &rep[i])))[0] / 5.0;
        }
        let want = adv + l1 * l1_oracle(&f1, &xf, &a) + l2 * l1_oracle(&f2, &xf, &rep);
        worst = worst.max((got - want).abs());
    }
    worst
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &v in z {
        m = m.max(v);
    }
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Ensemble score `f_VS(x) + ω₁·f_SS(F1(x)) + ω₂·f_SRS(F2(x))` on probabilities.
pub fn ensemble_score(trials: usize) -> f64 {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    let classes = vec![1, 3, 4];
    for _ in 0..trials {
        let (vs, ss, srs) = (random_mlp(&mut r, &[4, 3]), random_mlp(&mut r, &[2, 3]), random_mlp(&mut r, &[3, 3]));
        let (f1, f2) = (random_mlp(&mut r, &[4, 5, 2]), random_mlp(&mut r, &[4, 5, 3]));
        let (w1, w2) = (r.random_range(0.0..2.0), r.random_range(0.0..2.0));
        let clf = EnsembleClassifier {
            vs: SoftmaxHead::from_mlp(classes.clone(), vs.clone()).unwrap(),
            ss: Some(SoftmaxHead::from_mlp(classes.clone(), ss.clone()).unwrap()),
            srs: Some(SoftmaxHead::from_mlp(classes.clone(), srs.clone()).unwrap()),
            weights: HeadWeights::full(w1, w2),
            combine: Combine::Probability,
        };
        let x = rows(&mut r, 4, 4);
        let got = clf.ensemble_score(&tensor(&x), &f1, Some(&f2)).unwrap();
        for (i, row) in x.iter().enumerate() {
            let p_vs = softmax(&forward(&vs, row));
            let p_ss = softmax(&forward(&ss, &forward(&f1, row)));
            let p_srs = softmax(&forward(&srs, &forward(&f2, row)));
            for k in 0..3 {
                let want = p_vs[k] + w1 * p_ss[k] + w2 * p_srs[k];
                worst = worst.max((got.row(i)[k] - want).abs());
            }
        }
    }
    worst
}

/// Average per-class top-1 accuracy.
pub fn per_class_accuracy(trials: usize) -> f64 {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    let classes = [0usize, 2, 5, 6, 9];
    for _ in 0..trials {
        let n = r.random_range(1..80);
        let labels: Vec<usize> = (0..n).map(|_| classes[r.random_range(0..5)]).collect();
        let preds: Vec<usize> = (0..n).map(|_| classes[r.random_range(0..5)]).collect();
        let (mut sum, mut present) = (0.0, 0);
        for &c in &classes {
            let (mut hit, mut total) = (0, 0);
            for i in 0..n {
                if labels[i] == c {
                    total += 1;
                    if preds[i] == c {
                        hit += 1;
                    }
                }
            }
            if total > 0 {
                sum += hit as f64 / total as f64;
                present += 1;
            }
        }
        let got = per_class_top1(&preds, &labels, &classes).unwrap();
        worst = worst.max((got - sum / present as f64).abs());
    }
    worst
}

/// Every oracle with its label, in equation order.
pub fn all() -> Vec<(&'static str, fn(usize) -> f64)> {
    vec![
        ("triplet loss", triplet_visual),
        ("multi-modal triplet loss", triplet_multimodal),
        ("metric network total loss", metric_total),
        ("SRN sampling loss", srn_sampling),
        ("classic conditional WGAN losses", classic_wgan),
        ("searched-representation WGAN losses", searched_wgan),
        ("semantic reconstruction", semantic_reconstruction),
        ("representation reconstruction", representation_reconstruction),
        ("generator objective", generator_objective),
        ("ensemble score", ensemble_score),
        ("per-class top-1", per_class_accuracy),
    ]
}
