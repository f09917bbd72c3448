use autodiff::functional::{row_l1, row_norms};
use autodiff::{grad_per_row, Tensor};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{label_log_probs, Mlp};

/// `G([cond..., z])`.
pub fn generate(g: &Mlp, cond: &[&Tensor], z: &Tensor) -> Result<Tensor> {
    let mut parts: Vec<Tensor> = cond.iter().map(|t| (*t).clone()).collect();
    parts.push(z.clone());
    g.forward(&Tensor::concat(&parts, 1)?)
}

/// `D([x, cond...])`, one score per row.
pub fn critic_score(d: &Mlp, x: &Tensor, cond: &[&Tensor]) -> Result<Tensor> {
    if d.output_dim() != 1 {
        return Err(Error::Invalid(format!("critic must output one score, has width {}", d.output_dim())));
    }
    let mut parts = vec![x.clone()];
    parts.extend(cond.iter().map(|t| (*t).clone()));
    d.forward(&Tensor::concat(&parts, 1)?)
}

/// `μ·x_real + (1−μ)·x_fake` row by row, as a fresh leaf that requires grad.
pub fn interpolate(x_real: &Tensor, x_fake: &Tensor, mu: &[f64]) -> Result<Tensor> {
    if x_real.shape() != x_fake.shape() || x_real.rank() != 2 || mu.len() != x_real.shape()[0] {
        return Err(Error::Invalid(format!(
            "cannot interpolate {:?} and {:?} with {} weights",
            x_real.shape(),
            x_fake.shape(),
            mu.len()
        )));
    }
    let width = x_real.shape()[1];
    let data: Vec<f64> = x_real
        .data()
        .iter()
        .zip(x_fake.data())
        .enumerate()
        .map(|(k, (r, f))| {
            let m = mu[k / width];
            m * r + (1.0 - m) * f
        })
        .collect();
    Ok(Tensor::param(x_real.shape(), data)?)
}

/// `λ·mean((‖∇_x̂ D([x̂, cond])‖₂ − 1)²)`; conditioning inputs are held constant.
pub fn gradient_penalty_at(d: &Mlp, x_hat: &Tensor, cond: &[&Tensor], lambda: f64) -> Result<Tensor> {
    let x_hat = if x_hat.requires_grad() {
        x_hat.clone()
    } else {
        x_hat.requires_grad_leaf()
    };
    let scores = critic_score(d, &x_hat, cond)?;
    let g = grad_per_row(&scores, &x_hat)?;
    Ok(row_norms(&g)?.add_scalar(-1.0).square().mean().scale(lambda))
}

/// Gradient penalty at interpolates with one `μ ~ U(0,1)` per row.
pub fn gradient_penalty<R: Rng + ?Sized>(
    d: &Mlp,
    x_real: &Tensor,
    x_fake: &Tensor,
    cond: &[&Tensor],
    lambda: f64,
    rng: &mut R,
) -> Result<Tensor> {
    let rows = x_real.shape().first().copied().unwrap_or(0);
    let mu: Vec<f64> = (0..rows).map(|_| rng.random::<f64>()).collect();
    let x_hat = interpolate(&x_real.detach(), &x_fake.detach(), &mu)?;
    gradient_penalty_at(d, &x_hat, cond, lambda)
}

/// `(E[D(fake)], E[D(real)])` under shared conditioning.
pub fn critic_means(d: &Mlp, x_real: &Tensor, x_fake: &Tensor, cond: &[&Tensor]) -> Result<(Tensor, Tensor)> {
    Ok((critic_score(d, x_fake, cond)?.mean(), critic_score(d, x_real, cond)?.mean()))
}

/// Searched-representation WGAN losses `(L_D, L_G)` for a given penalty value.
///
/// `L_D = E[D([x_fake,a,R(a)])] − E[D([x,a,R(a)])] + penalty`, `L_G = −E[D([x_fake,a,R(a)])]`.
pub fn wgan_sr_losses(
    d: &Mlp,
    x_real: &Tensor,
    x_fake: &Tensor,
    a: &Tensor,
    rep: &Tensor,
    penalty: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (fake, real) = critic_means(d, x_real, x_fake, &[a, rep])?;
    let l_d = fake.sub(&real)?.add(penalty)?;
    Ok((l_d, fake.neg()))
}

/// Classic conditional WGAN losses `(L_D, L_G)` with a frozen seen-class classifier.
///
/// `L_D = E[D(x_fake)] − E[D(x)] + E[log P(y|x_fake)] − E[log P(y|x)] + penalty`
/// and `L_G = −E[D(x_fake)] − E[log P(y|x_fake)]`. `labels` index the classifier's outputs.
pub fn wgan_classic_losses(
    d: &Mlp,
    classifier: &Mlp,
    x_real: &Tensor,
    x_fake: &Tensor,
    labels: &[usize],
    penalty: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (fake, real) = critic_means(d, x_real, x_fake, &[])?;
    let lp_fake = label_log_probs(&classifier.forward(x_fake)?, labels)?.mean();
    let lp_real = label_log_probs(&classifier.forward(x_real)?, labels)?.mean();
    let l_d = fake.sub(&real)?.add(&lp_fake)?.sub(&lp_real)?.add(penalty)?;
    let l_g = fake.neg().sub(&lp_fake)?;
    Ok((l_d, l_g))
}

/// Batch mean of `‖F(x_fake) − target‖₁`.
pub fn regression_loss(f: &Mlp, x_fake: &Tensor, target: &Tensor) -> Result<Tensor> {
    Ok(row_l1(&f.forward(x_fake)?.sub(target)?)?.mean())
}

/// `(L_F1, L_F2)`; `L_F2` is absent when there is no second regressor.
pub fn reconstruction_losses(
    f1: &Mlp,
    f2: Option<&Mlp>,
    x_fake: &Tensor,
    a: &Tensor,
    rep: Option<&Tensor>,
) -> Result<(Tensor, Option<Tensor>)> {
    let l_f1 = regression_loss(f1, x_fake, a)?;
    let l_f2 = match (f2, rep) {
        (Some(f2), Some(rep)) => Some(regression_loss(f2, x_fake, rep)?),
        (None, _) => None,
        (Some(_), None) => return Err(Error::Invalid("F2 needs searched representations".into())),
    };
    Ok((l_f1, l_f2))
}

/// Generator-side objective `L_G + λ₁·L_F1 + λ₂·L_F2`.
pub fn dcrgan_generator_objective(
    l_g: &Tensor,
    l_f1: &Tensor,
    l_f2: Option<&Tensor>,
    lambda1: f64,
    lambda2: f64,
) -> Result<Tensor> {
    let mut total = l_g.add(&l_f1.scale(lambda1))?;
    if let Some(l_f2) = l_f2 {
        total = total.add(&l_f2.scale(lambda2))?;
    }
    Ok(total)
}
