use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{Combine, HeadConfig};
use crate::gan::{GanConfig, GanMode, TrainSchedule};
use crate::metric::{InputMode, MetricConfig, Mining, MnTrainConfig, SrnTrainConfig};
use crate::nn::AdamConfig;

/// Every hyperparameter of a full run. Stage seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub metric: MetricConfig,
    pub srn_hidden: Vec<usize>,
    pub mn: MnTrainConfig,
    pub srn: SrnTrainConfig,
    pub gan: GanConfig,
    pub schedule: TrainSchedule,
    pub heads: HeadConfig,
    /// Synthesized features per unseen class used to train the heads.
    pub synth_per_class: usize,
    /// Fraction of each seen class's training instances held out to choose ω₁, ω₂.
    pub validation_fraction: f64,
    /// Fixed `(ω₁, ω₂)`; when absent they are chosen on the validation split.
    pub omega: Option<(f64, f64)>,
    pub omega_grid: Vec<f64>,
    pub combine: Combine,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            metric: MetricConfig::default(),
            srn_hidden: vec![1024],
            mn: MnTrainConfig::default(),
            srn: SrnTrainConfig::default(),
            gan: GanConfig::default(),
            schedule: TrainSchedule::default(),
            heads: HeadConfig::default(),
            synth_per_class: 300,
            validation_fraction: 0.2,
            omega: None,
            omega_grid: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            combine: Combine::Probability,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v)).collect()
}

fn list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Keys accepted by [`PipelineConfig::set`], in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "metric_mode",
    "rep_dim",
    "margin",
    "mn_hidden",
    "mn_epochs",
    "mn_batch",
    "mn_alpha",
    "mining",
    "srn_hidden",
    "srn_epochs",
    "srn_alpha",
    "decay",
    "beta1",
    "beta2",
    "d_z",
    "g_hidden",
    "d_hidden",
    "f_hidden",
    "lambda",
    "lambda1",
    "lambda2",
    "gan_alpha",
    "n_loop",
    "n_d",
    "n_g",
    "gan_batch",
    "classifier_steps",
    "classifier_alpha",
    "head_steps",
    "head_alpha",
    "synth_per_class",
    "validation_fraction",
    "omega1",
    "omega2",
    "omega_grid",
    "combine",
];

/// Overrides of [`PipelineConfig::desk`].
const DESK: &str = "rep_dim = 64
mn_hidden = 128
mn_epochs = 20
mn_alpha = 0.001
srn_hidden = 128
srn_epochs = 200
srn_alpha = 0.001
d_z = 16
g_hidden = 128
d_hidden = 128
f_hidden = 64
gan_alpha = 0.0005
n_loop = 300
head_steps = 300
";

impl PipelineConfig {
    /// Narrow networks and short schedules sized for the synthetic data on a
    /// single CPU core; everything not listed keeps its default.
    pub fn desk() -> Self {
        let mut c = PipelineConfig::default();
        c.apply_text(DESK).expect("desk preset parses");
        c
    }

    /// Sets one hyperparameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "metric_mode" => {
                self.metric.mode = match v {
                    "multimodal" | "mmtl" => InputMode::Multimodal,
                    "visual_only" | "tl" => InputMode::VisualOnly,
                    _ => return Err(Error::Config(format!("metric_mode: unknown mode {v:?}"))),
                }
            }
            "rep_dim" | "L" => self.metric.rep_dim = parse_num(key, v)?,
            "margin" | "m" => self.metric.margin = parse_num(key, v)?,
            "mn_hidden" => self.metric.hidden = parse_list(key, v)?,
            "mn_epochs" | "n_M" => self.mn.epochs = parse_num(key, v)?,
            "mn_batch" => self.mn.batch_size = parse_num(key, v)?,
            "mn_alpha" => self.mn.adam.alpha = parse_num(key, v)?,
            "mining" => {
                self.mn.mining = match v.split_once(':') {
                    None if v == "uniform" => Mining::Uniform,
                    None if v == "semihard" => Mining::SemiHard { candidates: 8 },
                    Some(("semihard", k)) => Mining::SemiHard {
                        candidates: parse_num(key, k)?,
                    },
                    _ => return Err(Error::Config(format!("mining: expected uniform or semihard[:k], got {v:?}"))),
                }
            }
            "srn_hidden" => self.srn_hidden = parse_list(key, v)?,
            "srn_epochs" | "n_R" => self.srn.epochs = parse_num(key, v)?,
            "srn_alpha" => self.srn.adam.alpha = parse_num(key, v)?,
            "decay" => {
                let d = parse_num(key, v)?;
                self.mn.decay = d;
                self.srn.decay = d;
            }
            "beta1" | "beta2" => {
                let b: f64 = parse_num(key, v)?;
                for adam in [&mut self.mn.adam, &mut self.srn.adam, &mut self.gan.adam] {
                    if key == "beta1" {
                        adam.beta1 = b;
                    } else {
                        adam.beta2 = b;
                    }
                }
            }
            "d_z" => self.gan.d_z = parse_num(key, v)?,
            "g_hidden" => self.gan.g_hidden = parse_list(key, v)?,
            "d_hidden" => self.gan.d_hidden = parse_list(key, v)?,
            "f_hidden" => self.gan.f_hidden = parse_list(key, v)?,
            "lambda" => self.gan.lambda_gp = parse_num(key, v)?,
            "lambda1" => self.gan.lambda1 = parse_num(key, v)?,
            "lambda2" => self.gan.lambda2 = parse_num(key, v)?,
            "gan_alpha" => self.gan.adam.alpha = parse_num(key, v)?,
            "n_loop" => self.schedule.n_loop = parse_num(key, v)?,
            "n_d" => self.schedule.n_d = parse_num(key, v)?,
            "n_g" => self.schedule.n_g = parse_num(key, v)?,
            "gan_batch" => self.schedule.batch_size = parse_num(key, v)?,
            "classifier_steps" => self.gan.classifier_steps = parse_num(key, v)?,
            "classifier_alpha" => self.gan.classifier_alpha = parse_num(key, v)?,
            "head_steps" => self.heads.steps = parse_num(key, v)?,
            "head_alpha" => self.heads.adam.alpha = parse_num(key, v)?,
            "synth_per_class" => self.synth_per_class = parse_num(key, v)?,
            "validation_fraction" => self.validation_fraction = parse_num(key, v)?,
            "omega1" => {
                let w = parse_num(key, v)?;
                self.omega = Some((w, self.omega.map_or(0.0, |o| o.1)));
            }
            "omega2" => {
                let w = parse_num(key, v)?;
                self.omega = Some((self.omega.map_or(0.0, |o| o.0), w));
            }
            "omega_grid" => self.omega_grid = parse_list(key, v)?,
            "combine" => {
                self.combine = match v {
                    "probability" => Combine::Probability,
                    "logit" => Combine::Logit,
                    _ => return Err(Error::Config(format!("combine: expected probability or logit, got {v:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let adam_b = |f: fn(&AdamConfig) -> f64| f(&self.gan.adam).to_string();
        Some(match key {
            "seed" => self.seed.to_string(),
            "metric_mode" => self.metric.mode.name().into(),
            "rep_dim" => self.metric.rep_dim.to_string(),
            "margin" => self.metric.margin.to_string(),
            "mn_hidden" => list(&self.metric.hidden),
            "mn_epochs" => self.mn.epochs.to_string(),
            "mn_batch" => self.mn.batch_size.to_string(),
            "mn_alpha" => self.mn.adam.alpha.to_string(),
            "mining" => match self.mn.mining {
                Mining::Uniform => "uniform".into(),
                Mining::SemiHard { candidates } => format!("semihard:{candidates}"),
            },
            "srn_hidden" => list(&self.srn_hidden),
            "srn_epochs" => self.srn.epochs.to_string(),
            "srn_alpha" => self.srn.adam.alpha.to_string(),
            "decay" => self.mn.decay.to_string(),
            "beta1" => adam_b(|a| a.beta1),
            "beta2" => adam_b(|a| a.beta2),
            "d_z" => self.gan.d_z.to_string(),
            "g_hidden" => list(&self.gan.g_hidden),
            "d_hidden" => list(&self.gan.d_hidden),
            "f_hidden" => list(&self.gan.f_hidden),
            "lambda" => self.gan.lambda_gp.to_string(),
            "lambda1" => self.gan.lambda1.to_string(),
            "lambda2" => self.gan.lambda2.to_string(),
            "gan_alpha" => self.gan.adam.alpha.to_string(),
            "n_loop" => self.schedule.n_loop.to_string(),
            "n_d" => self.schedule.n_d.to_string(),
            "n_g" => self.schedule.n_g.to_string(),
            "gan_batch" => self.schedule.batch_size.to_string(),
            "classifier_steps" => self.gan.classifier_steps.to_string(),
            "classifier_alpha" => self.gan.classifier_alpha.to_string(),
            "head_steps" => self.heads.steps.to_string(),
            "head_alpha" => self.heads.adam.alpha.to_string(),
            "synth_per_class" => self.synth_per_class.to_string(),
            "validation_fraction" => self.validation_fraction.to_string(),
            "omega1" => self.omega.map(|o| o.0.to_string()).unwrap_or_else(|| "auto".into()),
            "omega2" => self.omega.map(|o| o.1.to_string()).unwrap_or_else(|| "auto".into()),
            "omega_grid" => list(&self.omega_grid),
            "combine" => match self.combine {
                Combine::Probability => "probability".into(),
                Combine::Logit => "logit".into(),
            },
            _ => return None,
        })
    }

    /// Canonical `key = value` listing of every setting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = self.get(k).expect("every canonical key has a value");
            if (*k == "omega1" || *k == "omega2") && v == "auto" {
                let _ = writeln!(out, "# {k} = auto");
            } else {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.metric.rep_dim == 0 {
            return bad("rep_dim must be positive".into());
        }
        if !(self.metric.margin > 0.0 && self.metric.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.metric.margin));
        }
        if self.mn.batch_size == 0 {
            return bad("mn_batch must be positive".into());
        }
        if !(self.mn.decay >= 0.0 && self.mn.decay.is_finite()) {
            return bad(format!("decay must be non-negative, got {}", self.mn.decay));
        }
        if [&self.metric.hidden, &self.srn_hidden, &self.gan.g_hidden, &self.gan.d_hidden, &self.gan.f_hidden]
            .iter()
            .any(|h| h.contains(&0))
        {
            return bad("hidden layer widths must be positive".into());
        }
        if self.synth_per_class == 0 {
            return bad("synth_per_class must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        if let Some((w1, w2)) = self.omega {
            if !(w1 >= 0.0 && w2 >= 0.0 && w1.is_finite() && w2.is_finite()) {
                return bad(format!("omega weights must be non-negative, got ({w1}, {w2})"));
            }
        }
        if self.omega_grid.is_empty() || self.omega_grid.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("omega_grid must list non-negative weights".into());
        }
        for adam in [&self.mn.adam, &self.srn.adam, &self.heads.adam] {
            adam.validate()?;
        }
        self.gan.validate()?;
        self.schedule.validate()
    }

    /// Hex SHA-256 over the settings a stage's artifacts depend on.
    ///
    /// Each stage's key covers its own settings and those of the stages before
    /// it, so artifacts from incompatible runs never share a key.
    pub fn stage_key(&self, stage: Stage, mode: GanMode) -> String {
        let mut keys: Vec<&str> = vec![
            "seed",
            "metric_mode",
            "rep_dim",
            "margin",
            "mn_hidden",
            "mn_epochs",
            "mn_batch",
            "mn_alpha",
            "mining",
            "decay",
            "beta1",
            "beta2",
        ];
        if stage >= Stage::Srn {
            keys.extend(["srn_hidden", "srn_epochs", "srn_alpha"]);
        }
        if stage >= Stage::Gan {
            keys.extend([
                "d_z",
                "g_hidden",
                "d_hidden",
                "f_hidden",
                "lambda",
                "lambda1",
                "lambda2",
                "gan_alpha",
                "n_loop",
                "n_d",
                "n_g",
                "gan_batch",
            ]);
            if mode.is_classic() {
                keys.extend(["classifier_steps", "classifier_alpha"]);
            }
        }
        let mut h = Sha256::new();
        h.update(stage.name());
        if stage >= Stage::Gan {
            h.update(format!("{mode:?}"));
        }
        for k in keys {
            h.update(format!("\n{k}={}", self.get(k).expect("known key")));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Training stages in their required order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Mn,
    Srn,
    Gan,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Mn => "mn",
            Stage::Srn => "srn",
            Stage::Gan => "gan",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "mn" => Some(Stage::Mn),
            "srn" => Some(Stage::Srn),
            "gan" => Some(Stage::Gan),
            _ => None,
        }
    }
}
