//! Conditional WGAN-GP feature generator with reconstruction regressors.

mod losses;
mod train;

use autodiff::Tensor;

pub use losses::{
    critic_means, critic_score, dcrgan_generator_objective, generate, gradient_penalty, gradient_penalty_at,
    interpolate, reconstruction_losses, regression_loss, wgan_classic_losses, wgan_sr_losses,
};
pub use train::{noise, pretrain_classifier, train_gan, GanLogRow, GanTrainLog};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Mlp, MlpConfig};
use crate::seed;

/// Which adversarial objective and conditioning the bundle uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanMode {
    /// `G(a, R(a), z)`, critic on `[x, a, R(a)]`, regressors F1 and F2.
    WganSr,
    /// `G(a, z)`, critic on `x` plus a frozen seen-class classifier, regressor F1 only.
    ClassicA,
    /// `G(a, R(a), z)`, critic on `x` plus the classifier, regressors F1 and F2.
    ClassicB,
}

impl GanMode {
    pub fn name(self) -> &'static str {
        match self {
            GanMode::WganSr => "wgan_sr",
            GanMode::ClassicA => "classic_a",
            GanMode::ClassicB => "classic_b",
        }
    }

    pub fn uses_rep(self) -> bool {
        matches!(self, GanMode::WganSr | GanMode::ClassicB)
    }

    pub fn has_f2(self) -> bool {
        self.uses_rep()
    }

    pub fn is_classic(self) -> bool {
        matches!(self, GanMode::ClassicA | GanMode::ClassicB)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub mode: GanMode,
    pub d_z: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub f_hidden: Vec<usize>,
    /// λ, gradient-penalty weight
    pub lambda_gp: f64,
    /// λ₁, semantic reconstruction weight
    pub lambda1: f64,
    /// λ₂, searched-representation reconstruction weight
    pub lambda2: f64,
    pub adam: AdamConfig,
    /// Adam steps used to pretrain the seen-class classifier of the classic modes.
    pub classifier_steps: usize,
    pub classifier_alpha: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            mode: GanMode::WganSr,
            d_z: 64,
            g_hidden: vec![1024],
            d_hidden: vec![1024],
            f_hidden: vec![512],
            lambda_gp: 10.0,
            lambda1: 0.1,
            lambda2: 0.1,
            adam: AdamConfig::default(),
            classifier_steps: 300,
            classifier_alpha: 1e-2,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda_gp), ("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.d_z == 0 {
            return Err(Error::Config("d_z must be positive".into()));
        }
        self.adam.validate()
    }
}

/// `N_loop` outer iterations of `N_d` critic steps then `N_g` generator iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSchedule {
    pub n_loop: usize,
    pub n_d: usize,
    pub n_g: usize,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            n_loop: 1000,
            n_d: 5,
            n_g: 1,
            batch_size: 64,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_d == 0 || self.n_g == 0 || self.batch_size == 0 {
            return Err(Error::Config("N_d, N_g and the batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator, critic, regressors and their optimizer states.
#[derive(Debug, Clone)]
pub struct GanBundle {
    config: GanConfig,
    d_v: usize,
    d_a: usize,
    rep_dim: usize,
    pub g: Mlp,
    pub d: Mlp,
    pub f1: Mlp,
    pub f2: Option<Mlp>,
    /// Frozen seen-class softmax over visual features (classic modes only).
    /// Output `k` corresponds to the k-th seen class in ascending id order.
    pub classifier: Option<Mlp>,
    opt_g: Adam,
    opt_d: Adam,
    opt_f1: Adam,
    opt_f2: Adam,
}

impl GanBundle {
    pub fn new(config: GanConfig, d_v: usize, d_a: usize, rep_dim: usize, seed: u64) -> Result<GanBundle> {
        config.validate()?;
        let mode = config.mode;
        let g_in = d_a + if mode.uses_rep() { rep_dim } else { 0 } + config.d_z;
        let d_in = d_v + if mode.is_classic() { 0 } else { d_a + rep_dim };
        let g = Mlp::init(MlpConfig::with_hidden(g_in, &config.g_hidden, d_v), seed::derive(seed, "G"))?;
        let d = Mlp::init(MlpConfig::with_hidden(d_in, &config.d_hidden, 1), seed::derive(seed, "D"))?;
        let f1 = Mlp::init(MlpConfig::with_hidden(d_v, &config.f_hidden, d_a), seed::derive(seed, "F1"))?;
        let f2 = if mode.has_f2() {
            Some(Mlp::init(
                MlpConfig::with_hidden(d_v, &config.f_hidden, rep_dim),
                seed::derive(seed, "F2"),
            )?)
        } else {
            None
        };
        let adam = config.adam;
        Ok(GanBundle {
            config,
            d_v,
            d_a,
            rep_dim,
            g,
            d,
            f1,
            f2,
            classifier: None,
            opt_g: Adam::new(adam)?,
            opt_d: Adam::new(adam)?,
            opt_f1: Adam::new(adam)?,
            opt_f2: Adam::new(adam)?,
        })
    }

    /// Rebuilds a bundle around existing networks, with fresh optimizer state.
    pub fn from_parts(
        config: GanConfig,
        d_v: usize,
        d_a: usize,
        rep_dim: usize,
        nets: (Mlp, Mlp, Mlp, Option<Mlp>),
        classifier: Option<Mlp>,
    ) -> Result<GanBundle> {
        let mut b = GanBundle::new(config, d_v, d_a, rep_dim, 0)?;
        let (g, d, f1, f2) = nets;
        let widths_ok = g.input_dim() == b.g.input_dim()
            && g.output_dim() == d_v
            && d.input_dim() == b.d.input_dim()
            && d.output_dim() == 1
            && f1.input_dim() == d_v
            && f1.output_dim() == d_a
            && f2.as_ref().map(|f| (f.input_dim(), f.output_dim())) == b.f2.as_ref().map(|_| (d_v, rep_dim));
        if !widths_ok {
            return Err(Error::Config("network widths do not match the GAN configuration".into()));
        }
        b.g = g;
        b.d = d;
        b.f1 = f1;
        b.f2 = f2;
        b.classifier = classifier;
        Ok(b)
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn mode(&self) -> GanMode {
        self.config.mode
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_dim
    }

    /// Generator conditioning `[a, R(a)]` or `[a]`.
    pub fn generator_cond<'t>(&self, a: &'t Tensor, rep: &'t Tensor) -> Vec<&'t Tensor> {
        if self.mode().uses_rep() {
            vec![a, rep]
        } else {
            vec![a]
        }
    }

    /// Critic conditioning `[a, R(a)]` or nothing.
    pub fn critic_cond<'t>(&self, a: &'t Tensor, rep: &'t Tensor) -> Vec<&'t Tensor> {
        if self.mode().is_classic() {
            Vec::new()
        } else {
            vec![a, rep]
        }
    }

    /// `x_fake` for semantic rows `a`, their representations `rep`, and noise `z`.
    pub fn generate(&self, a: &Tensor, rep: &Tensor, z: &Tensor) -> Result<Tensor> {
        generate(&self.g, &self.generator_cond(a, rep), z)
    }

    pub fn zero_grad(&self) {
        self.g.zero_grad();
        self.d.zero_grad();
        self.f1.zero_grad();
        if let Some(f2) = &self.f2 {
            f2.zero_grad();
        }
        if let Some(c) = &self.classifier {
            c.zero_grad();
        }
    }
}
