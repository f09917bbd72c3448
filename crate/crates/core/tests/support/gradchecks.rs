//! Central finite-difference checks of backward() gradients for the primitive
//! operations and for every training loss.
#![allow(dead_code)]

use autodiff::functional::{euclidean_distance, l1, l2, l2_squared, row_distances, row_l1, row_norms};
use autodiff::Tensor;
use dcrgan::dataset::ZslDataset;
use dcrgan::gan::{
    dcrgan_generator_objective, generate, gradient_penalty_at, reconstruction_losses, wgan_classic_losses,
    wgan_sr_losses,
};
use dcrgan::metric::{mmtl_loss, mn_total_loss, srn_sampling_loss, triplet_loss_tl, InputMode, MetricNet, Srn, TripletInputs};
use dcrgan::nn::{softmax_cross_entropy, Mlp};

use super::oracles::{normal_vec, random_dataset, random_mlp, rng, rows, tensor};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const TOL_DOUBLE_BACKWARD: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, 1e-4)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// One checked quantity: label, worst relative error, tolerance.
pub struct Check {
    pub name: String,
    pub error: f64,
    pub tol: f64,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.error < self.tol
    }
}

/// Worst relative error over all entries of the leaf inputs of `f`.
pub fn tensor_error(inputs: &[(Vec<usize>, Vec<f64>)], f: &dyn Fn(&[Tensor]) -> Tensor) -> f64 {
    let params: Vec<Tensor> = inputs.iter().map(|(s, d)| Tensor::param(s, d.clone()).unwrap()).collect();
    f(&params).backward().unwrap();
    let mut worst: f64 = 0.0;
    for (i, (_, data)) in inputs.iter().enumerate() {
        let analytic = params[i].grad_or_zeros();
        for j in 0..data.len() {
            let eval = |delta: f64| {
                let ts: Vec<Tensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(k, (s, d))| {
                        let mut d = d.clone();
                        if k == i {
                            d[j] += delta;
                        }
                        Tensor::new(s, d).unwrap()
                    })
                    .collect();
                f(&ts).item().unwrap()
            };
            worst = worst.max(rel_err(analytic[j], (eval(H) - eval(-H)) / (2.0 * H)));
        }
    }
    worst
}

fn perturbed(mlp: &Mlp, param: usize, j: usize, delta: f64) -> Mlp {
    let layers = (0..mlp.num_layers())
        .map(|l| {
            let mut w = mlp.weight(l).to_vec();
            let mut b = mlp.bias(l).to_vec();
            if param == 2 * l {
                w[j] += delta;
            } else if param == 2 * l + 1 {
                b[j] += delta;
            }
            (w, b)
        })
        .collect();
    Mlp::from_layers(mlp.config().clone(), layers).unwrap()
}

/// Worst relative error over every parameter of `mlp` for the scalar `f(mlp)`.
pub fn mlp_error(mlp: &Mlp, f: &dyn Fn(&Mlp) -> Tensor) -> f64 {
    mlp.zero_grad();
    f(mlp).backward().unwrap();
    let mut worst: f64 = 0.0;
    for (pi, p) in mlp.params().iter().enumerate() {
        let analytic = p.grad_or_zeros();
        for j in 0..p.numel() {
            let up = f(&perturbed(mlp, pi, j, H)).item().unwrap();
            let down = f(&perturbed(mlp, pi, j, -H)).item().unwrap();
            worst = worst.max(rel_err(analytic[j], (up - down) / (2.0 * H)));
        }
    }
    mlp.zero_grad();
    worst
}

/// Same as [`mlp_error`] for a network that owns its `Mlp`.
pub fn net_error<N>(mlp: &Mlp, build: &dyn Fn(Mlp) -> N, inner: fn(&N) -> &Mlp, f: &dyn Fn(&N) -> Tensor) -> f64 {
    let net = build(mlp.clone());
    f(&net).backward().unwrap();
    let mut worst: f64 = 0.0;
    for (pi, p) in inner(&net).params().iter().enumerate() {
        let analytic = p.grad_or_zeros();
        for j in 0..p.numel() {
            let up = f(&build(perturbed(mlp, pi, j, H))).item().unwrap();
            let down = f(&build(perturbed(mlp, pi, j, -H))).item().unwrap();
            worst = worst.max(rel_err(analytic[j], (up - down) / (2.0 * H)));
        }
    }
    worst
}

fn check(name: &str, error: f64, tol: f64) -> Check {
    Check {
        name: name.to_string(),
        error,
        tol,
    }
}

type Op = Box<dyn Fn(&[Tensor]) -> Tensor>;

/// Primitive operations, each wrapped into a scalar through a weighted sum.
pub fn primitives() -> Vec<Check> {
    let mut r = rng(21);
    let a = normal_vec(&mut r, 6);
    let b = normal_vec(&mut r, 6);
    let pos: Vec<f64> = normal_vec(&mut r, 6).iter().map(|v| v.abs() + 0.5).collect();
    let w = normal_vec(&mut r, 6);
    let weights = Tensor::new(&[2, 3], w).unwrap();
    let pair = vec![(vec![2, 3], a.clone()), (vec![2, 3], b.clone())];
    let ops: Vec<(&str, Vec<(Vec<usize>, Vec<f64>)>, Op)> = vec![
        ("add", pair.clone(), Box::new(|t| t[0].add(&t[1]).unwrap().square().sum())),
        ("sub", pair.clone(), Box::new(|t| t[0].sub(&t[1]).unwrap().square().sum())),
        ("mul", pair.clone(), Box::new(|t| t[0].mul(&t[1]).unwrap().sum())),
        ("scale and add_scalar", pair.clone(), Box::new(|t| t[0].scale(-1.5).add_scalar(0.3).mul(&t[1]).unwrap().sum())),
        ("neg", pair.clone(), Box::new(|t| t[0].neg().mul(&t[1]).unwrap().sum())),
        ("exp", pair.clone(), Box::new(|t| t[0].exp().mul(&t[1]).unwrap().sum())),
        ("ln", vec![(vec![2, 3], pos.clone())], {
            let w = weights.clone();
            Box::new(move |t| t[0].ln().mul(&w).unwrap().sum())
        }),
        ("sqrt", vec![(vec![2, 3], pos.clone())], {
            let w = weights.clone();
            Box::new(move |t| t[0].sqrt().mul(&w).unwrap().sum())
        }),
        ("powf", vec![(vec![2, 3], pos.clone())], {
            let w = weights.clone();
            Box::new(move |t| t[0].powf(1.7).mul(&w).unwrap().sum())
        }),
        ("abs", pair.clone(), Box::new(|t| t[0].abs().mul(&t[1]).unwrap().sum())),
        ("relu", pair.clone(), Box::new(|t| t[0].relu().mul(&t[1]).unwrap().sum())),
        ("leaky_relu", pair.clone(), Box::new(|t| t[0].leaky_relu(0.2).unwrap().mul(&t[1]).unwrap().sum())),
        ("mean", pair.clone(), Box::new(|t| t[0].mul(&t[1]).unwrap().mean())),
        ("sum_axis", pair.clone(), Box::new(|t| t[0].sum_axis(1).unwrap().square().sum().add(&t[1].sum_axis(0).unwrap().square().sum()).unwrap())),
        ("repeat_axis and reshape", vec![(vec![1, 3], a[..3].to_vec()), (vec![2, 3], b.clone())], Box::new(|t| {
            t[0].repeat_axis(0, 2).unwrap().mul(&t[1]).unwrap().reshape(&[6]).unwrap().square().sum()
        })),
        ("expand", vec![(vec![1], a[..1].to_vec()), (vec![2, 3], b.clone())], Box::new(|t| {
            t[0].expand(&[2, 3]).unwrap().mul(&t[1]).unwrap().square().sum()
        })),
        ("transpose and matmul", vec![(vec![2, 3], a.clone()), (vec![2, 3], b.clone())], Box::new(|t| {
            t[0].matmul(&t[1].transpose().unwrap()).unwrap().square().sum()
        })),
        ("concat and slice", pair.clone(), Box::new(|t| {
            let c = Tensor::concat(&[t[0].clone(), t[1].clone()], 1).unwrap();
            c.slice(1, 2, 3).unwrap().square().sum()
        })),
        ("log_softmax", pair.clone(), Box::new(|t| t[0].log_softmax().unwrap().mul(&t[1]).unwrap().sum())),
        ("softmax", pair.clone(), Box::new(|t| t[0].softmax().unwrap().mul(&t[1]).unwrap().sum())),
        ("row_distances", pair.clone(), Box::new(|t| row_distances(&t[0], &t[1]).unwrap().sum())),
        ("euclidean_distance", pair.clone(), Box::new(|t| euclidean_distance(&t[0], &t[1]).unwrap())),
        ("row_norms", pair.clone(), Box::new(|t| row_norms(&t[0]).unwrap().mul(&t[1].slice(1, 0, 1).unwrap()).unwrap().sum())),
        ("row_l1", pair.clone(), Box::new(|t| row_l1(&t[0]).unwrap().mul(&t[1].slice(1, 0, 1).unwrap()).unwrap().sum())),
        ("l1, l2, l2_squared", pair, Box::new(|t| l1(&t[0]).add(&l2(&t[1])).unwrap().add(&l2_squared(&t[0].mul(&t[1]).unwrap())).unwrap())),
    ];
    ops.into_iter()
        .map(|(name, inputs, f)| check(name, tensor_error(&inputs, &*f), TOL))
        .collect()
}

fn metric_batch(ds: &ZslDataset, m: &MetricNet) -> TripletInputs {
    let triplets = [(0, 1, 4), (4, 5, 8), (8, 9, 1), (1, 2, 9), (5, 6, 2)];
    dcrgan::metric::triplet_inputs(m, ds, &triplets).unwrap()
}

/// Every loss, checked with respect to the parameters it trains.
pub fn losses() -> Vec<Check> {
    let mut out = Vec::new();
    let mut r = rng(22);
    let ds = random_dataset(&mut r, 4, 2);

    let m_tl = random_mlp(&mut r, &[4, 5, 3]);
    let m_mm = random_mlp(&mut r, &[6, 5, 3]);
    let tl = |mlp: &Mlp| MetricNet::from_mlp(mlp.clone(), InputMode::VisualOnly, 2.0, 4, 2).unwrap();
    let mm = |mlp: &Mlp| MetricNet::from_mlp(mlp.clone(), InputMode::Multimodal, 2.0, 4, 2).unwrap();
    let tl_batch = metric_batch(&ds, &tl(&m_tl));
    let mm_batch = metric_batch(&ds, &mm(&m_mm));
    let tl_build = |p: Mlp| MetricNet::from_mlp(p, InputMode::VisualOnly, 2.0, 4, 2).unwrap();
    let mm_build = |p: Mlp| MetricNet::from_mlp(p, InputMode::Multimodal, 2.0, 4, 2).unwrap();
    out.push(check(
        "triplet loss (visual only)",
        net_error(&m_tl, &tl_build, MetricNet::mlp, &|n| {
            triplet_loss_tl(n, &tl_batch.anchor, &tl_batch.positive, &tl_batch.negative).unwrap()
        }),
        TOL,
    ));
    out.push(check(
        "multi-modal triplet loss",
        net_error(&m_mm, &mm_build, MetricNet::mlp, &|n| {
            mmtl_loss(n, &mm_batch.anchor, &mm_batch.positive, &mm_batch.negative).unwrap()
        }),
        TOL,
    ));
    out.push(check(
        "metric network total loss",
        net_error(&m_mm, &mm_build, MetricNet::mlp, &|n| mn_total_loss(n, &mm_batch, 0.05).unwrap()),
        TOL,
    ));
    let frozen = mm(&m_mm);
    let r_mlp = random_mlp(&mut r, &[2, 5, 3]);
    out.push(check(
        "SRN sampling loss",
        net_error(&r_mlp, &Srn::from_mlp, Srn::mlp, &|n| srn_sampling_loss(n, &frozen, &ds, 1, 0.05).unwrap()),
        TOL,
    ));

    let (d_v, d_a, l, d_z) = (4, 2, 3, 2);
    let (a, rep, z) = (tensor(&rows(&mut r, 5, d_a)), tensor(&rows(&mut r, 5, l)), tensor(&rows(&mut r, 5, d_z)));
    let x_real = tensor(&rows(&mut r, 5, d_v));
    let x_hat = tensor(&rows(&mut r, 5, d_v));
    let g = random_mlp(&mut r, &[d_a + l + d_z, 6, d_v]);
    let d = random_mlp(&mut r, &[d_v + d_a + l, 6, 1]);
    let f1 = random_mlp(&mut r, &[d_v, 4, d_a]);
    let f2 = random_mlp(&mut r, &[d_v, 4, l]);
    let fake = generate(&g, &[&a, &rep], &z).unwrap().detach();
    let zero = Tensor::scalar(0.0);

    out.push(check(
        "gradient penalty (double backward)",
        mlp_error(&d, &|p| gradient_penalty_at(p, &x_hat, &[&a, &rep], 10.0).unwrap()),
        TOL_DOUBLE_BACKWARD,
    ));
    out.push(check(
        "critic loss with penalty",
        mlp_error(&d, &|p| {
            let pen = gradient_penalty_at(p, &x_hat, &[&a, &rep], 10.0).unwrap();
            wgan_sr_losses(p, &x_real, &fake, &a, &rep, &pen).unwrap().0
        }),
        TOL_DOUBLE_BACKWARD,
    ));
    out.push(check(
        "generator adversarial loss",
        mlp_error(&g, &|p| {
            let xf = generate(p, &[&a, &rep], &z).unwrap();
            wgan_sr_losses(&d, &x_real, &xf, &a, &rep, &zero).unwrap().1
        }),
        TOL,
    ));

    let d_plain = random_mlp(&mut r, &[d_v, 5, 1]);
    let clf = random_mlp(&mut r, &[d_v, 3]);
    let g_a = random_mlp(&mut r, &[d_a + d_z, 6, d_v]);
    let labels = [0, 2, 1, 1, 0];
    out.push(check(
        "classic critic loss",
        mlp_error(&d_plain, &|p| wgan_classic_losses(p, &clf, &x_real, &fake, &labels, &zero).unwrap().0),
        TOL,
    ));
    out.push(check(
        "classic generator loss",
        mlp_error(&g_a, &|p| {
            let xf = generate(p, &[&a], &z).unwrap();
            wgan_classic_losses(&d_plain, &clf, &x_real, &xf, &labels, &zero).unwrap().1
        }),
        TOL,
    ));
    out.push(check(
        "semantic reconstruction",
        mlp_error(&f1, &|p| reconstruction_losses(p, None, &fake, &a, None).unwrap().0),
        TOL,
    ));
    out.push(check(
        "representation reconstruction",
        mlp_error(&f2, &|p| reconstruction_losses(&f1, Some(p), &fake, &a, Some(&rep)).unwrap().1.unwrap()),
        TOL,
    ));
    out.push(check(
        "generator objective",
        mlp_error(&g, &|p| {
            let xf = generate(p, &[&a, &rep], &z).unwrap();
            let l_g = wgan_sr_losses(&d, &x_real, &xf, &a, &rep, &zero).unwrap().1;
            let (l1, l2) = reconstruction_losses(&f1, Some(&f2), &xf, &a, Some(&rep)).unwrap();
            dcrgan_generator_objective(&l_g, &l1, l2.as_ref(), 0.3, 0.7).unwrap()
        }),
        TOL,
    ));

    let head = random_mlp(&mut r, &[d_v, 3]);
    out.push(check(
        "softmax cross-entropy (head parameters)",
        mlp_error(&head, &|p| softmax_cross_entropy(&p.forward(&x_real).unwrap(), &labels).unwrap()),
        TOL,
    ));
    let logits = normal_vec(&mut r, 15);
    out.push(check(
        "softmax cross-entropy (logits)",
        tensor_error(&[(vec![5, 3], logits)], &|t| softmax_cross_entropy(&t[0], &labels).unwrap()),
        TOL,
    ));
    out
}

/// Primitive and loss checks together.
pub fn all() -> Vec<Check> {
    let mut v = primitives();
    v.extend(losses());
    v
}
