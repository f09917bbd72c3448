use autodiff::functional::row_distances;
use autodiff::Tensor;

use crate::error::{Error, Result};
use crate::nn::{weight_decay_term, Mlp, MlpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// `M([x, a])`, trained with the multi-modal triplet loss.
    Multimodal,
    /// `M(x)`, the traditional triplet-loss baseline.
    VisualOnly,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Multimodal => "multimodal",
            InputMode::VisualOnly => "visual_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub mode: InputMode,
    /// L, the width of the searched-representation space.
    pub rep_dim: usize,
    pub hidden: Vec<usize>,
    pub margin: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            mode: InputMode::Multimodal,
            rep_dim: 256,
            hidden: vec![1024],
            margin: 1.0,
        }
    }
}

/// The metric network M.
#[derive(Debug, Clone)]
pub struct MetricNet {
    mlp: Mlp,
    mode: InputMode,
    margin: f64,
    d_v: usize,
    d_a: usize,
}

impl MetricNet {
    pub fn new(d_v: usize, d_a: usize, cfg: &MetricConfig, seed: u64) -> Result<MetricNet> {
        let input = match cfg.mode {
            InputMode::Multimodal => d_v + d_a,
            InputMode::VisualOnly => d_v,
        };
        let mlp = Mlp::init(MlpConfig::with_hidden(input, &cfg.hidden, cfg.rep_dim), seed)?;
        MetricNet::from_mlp(mlp, cfg.mode, cfg.margin, d_v, d_a)
    }

    pub fn from_mlp(mlp: Mlp, mode: InputMode, margin: f64, d_v: usize, d_a: usize) -> Result<MetricNet> {
        let expected = match mode {
            InputMode::Multimodal => d_v + d_a,
            InputMode::VisualOnly => d_v,
        };
        if mlp.input_dim() != expected {
            return Err(Error::Config(format!(
                "{} metric network needs input width {expected}, MLP has {}",
                mode.name(),
                mlp.input_dim()
            )));
        }
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {margin}")));
        }
        Ok(MetricNet {
            mlp,
            mode,
            margin,
            d_v,
            d_a,
        })
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn rep_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    /// Network input for visual rows `x` and their semantic rows `a`: `[x, a]` or `x`.
    pub fn input(&self, x: &Tensor, a: &Tensor) -> Result<Tensor> {
        match self.mode {
            InputMode::Multimodal => Ok(Tensor::concat(&[x.clone(), a.clone()], 1)?),
            InputMode::VisualOnly => Ok(x.clone()),
        }
    }

    /// `M(input)` on already assembled inputs.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.mlp.forward(input)
    }

    /// Searched representations of instances, without recording a graph.
    pub fn embed(&self, x: &Tensor, a: &Tensor) -> Result<Tensor> {
        self.mlp.predict(&self.input(x, a)?)
    }
}

/// `mean(max(0, m + d(f_a,f_p) − d(f_a,f_n)))` over already embedded rows.
pub fn hinge(f_a: &Tensor, f_p: &Tensor, f_n: &Tensor, margin: f64) -> Result<Tensor> {
    let d_pos = row_distances(f_a, f_p)?;
    let d_neg = row_distances(f_a, f_n)?;
    Ok(d_pos.sub(&d_neg)?.add_scalar(margin).relu().mean())
}

/// Traditional triplet loss on visual features.
pub fn triplet_loss_tl(m: &MetricNet, x_a: &Tensor, x_p: &Tensor, x_n: &Tensor) -> Result<Tensor> {
    if m.mode != InputMode::VisualOnly {
        return Err(Error::Invalid("triplet_loss_tl needs a visual_only metric network".into()));
    }
    hinge(&m.forward(x_a)?, &m.forward(x_p)?, &m.forward(x_n)?, m.margin)
}

/// Multi-modal triplet loss on concatenated `[x, a]` rows.
pub fn mmtl_loss(m: &MetricNet, e_a: &Tensor, e_p: &Tensor, e_n: &Tensor) -> Result<Tensor> {
    if m.mode != InputMode::Multimodal {
        return Err(Error::Invalid("mmtl_loss needs a multimodal metric network".into()));
    }
    hinge(&m.forward(e_a)?, &m.forward(e_p)?, &m.forward(e_n)?, m.margin)
}

/// Network inputs of a triplet minibatch, one row per triplet.
#[derive(Debug, Clone)]
pub struct TripletInputs {
    pub anchor: Tensor,
    pub positive: Tensor,
    pub negative: Tensor,
}

/// Triplet term for the network's mode plus weight decay on its parameters.
pub fn mn_total_loss(m: &MetricNet, batch: &TripletInputs, decay_coeff: f64) -> Result<Tensor> {
    let triplet = match m.mode {
        InputMode::Multimodal => mmtl_loss(m, &batch.anchor, &batch.positive, &batch.negative)?,
        InputMode::VisualOnly => triplet_loss_tl(m, &batch.anchor, &batch.positive, &batch.negative)?,
    };
    Ok(triplet.add(&weight_decay_term(&m.mlp, decay_coeff)?)?)
}

/// The semantic rectifying network R: semantics → searched representations.
#[derive(Debug, Clone)]
pub struct Srn {
    mlp: Mlp,
}

impl Srn {
    pub fn new(d_a: usize, rep_dim: usize, hidden: &[usize], seed: u64) -> Result<Srn> {
        Ok(Srn {
            mlp: Mlp::init(MlpConfig::with_hidden(d_a, hidden, rep_dim), seed)?,
        })
    }

    pub fn from_mlp(mlp: Mlp) -> Srn {
        Srn { mlp }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn d_a(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// `[B×d_a] → [B×L]`, recorded on the graph.
    pub fn forward(&self, a: &Tensor) -> Result<Tensor> {
        self.mlp.forward(a)
    }

    /// `R(a)` without recording a graph.
    pub fn rectify(&self, a: &Tensor) -> Result<Tensor> {
        self.mlp.predict(a)
    }
}

/// `R(a_u)` for a single class-level semantic vector.
pub fn unseen_representation(r: &Srn, a_u: &[f64]) -> Result<Vec<f64>> {
    if a_u.len() != r.d_a() {
        return Err(Error::Invalid(format!(
            "semantic vector has width {}, the SRN expects {}",
            a_u.len(),
            r.d_a()
        )));
    }
    Ok(r.rectify(&Tensor::new(&[1, a_u.len()], a_u.to_vec())?)?.to_vec())
}
