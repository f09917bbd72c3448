use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{PipelineConfig, Stage};
use crate::dataset::ZslDataset;
use crate::error::{Error, Result};
use crate::gan::{GanBundle, GanConfig, GanMode, GanTrainLog};
use crate::metric::{MetricNet, MnTrainLog, Srn, SrnTrainLog};
use crate::nn::{FinalActivation, Mlp};

/// Every network is built with LeakyReLU(0.2) hidden layers and a linear output.
const SLOPE: f64 = 0.2;

/// Stage checkpoints under one root directory, one subdirectory per stage key.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_mlp(path: &Path) -> Result<Mlp> {
    Mlp::load(path, SLOPE, FinalActivation::None)
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Store {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `<root>/<stage>[-<mode>]-<first 16 hex digits of the stage key>`.
    pub fn stage_dir(&self, cfg: &PipelineConfig, stage: Stage, mode: GanMode) -> PathBuf {
        let key = cfg.stage_key(stage, mode);
        let name = match stage {
            Stage::Gan => format!("gan-{}-{}", mode.name(), &key[..16]),
            _ => format!("{}-{}", stage.name(), &key[..16]),
        };
        self.root.join(name)
    }

    fn prepare(&self, cfg: &PipelineConfig, stage: Stage, mode: GanMode) -> Result<PathBuf> {
        let dir = self.stage_dir(cfg, stage, mode);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write(&dir.join("config.txt"), cfg.to_text())?;
        Ok(dir)
    }

    /// Whether a stage's checkpoint files are all present.
    pub fn has(&self, cfg: &PipelineConfig, stage: Stage, mode: GanMode) -> bool {
        let dir = self.stage_dir(cfg, stage, mode);
        match stage {
            Stage::Mn => dir.join("m.ckpt").is_file(),
            Stage::Srn => dir.join("r.ckpt").is_file(),
            Stage::Gan => ["g.ckpt", "d.ckpt", "f1.ckpt"].iter().all(|f| dir.join(f).is_file()),
        }
    }

    fn require(&self, cfg: &PipelineConfig, stage: Stage, mode: GanMode) -> Result<PathBuf> {
        if !self.has(cfg, stage, mode) {
            return Err(Error::Stage {
                stage: stage.name(),
                msg: format!(
                    "no {} checkpoint for this configuration under {}; train that stage first",
                    stage.name(),
                    self.root.display()
                ),
            });
        }
        Ok(self.stage_dir(cfg, stage, mode))
    }

    pub fn save_mn(&self, cfg: &PipelineConfig, m: &MetricNet, log: &MnTrainLog) -> Result<PathBuf> {
        let dir = self.prepare(cfg, Stage::Mn, GanMode::WganSr)?;
        m.mlp().save(&dir.join("m.ckpt"))?;
        let mut csv = String::from("step,loss\n");
        for (i, l) in log.losses.iter().enumerate() {
            let _ = writeln!(csv, "{i},{l:?}");
        }
        write(&dir.join("log.csv"), csv)?;
        Ok(dir)
    }

    pub fn load_mn(&self, cfg: &PipelineConfig, ds: &ZslDataset) -> Result<MetricNet> {
        let dir = self.require(cfg, Stage::Mn, GanMode::WganSr)?;
        let mlp = load_mlp(&dir.join("m.ckpt"))?;
        MetricNet::from_mlp(mlp, cfg.metric.mode, cfg.metric.margin, ds.d_v(), ds.d_a())
    }

    pub fn save_srn(&self, cfg: &PipelineConfig, r: &Srn, log: &SrnTrainLog) -> Result<PathBuf> {
        let dir = self.prepare(cfg, Stage::Srn, GanMode::WganSr)?;
        r.mlp().save(&dir.join("r.ckpt"))?;
        let mut csv = String::from("epoch,mean_loss\n");
        let _ = writeln!(csv, "0,{:?}", log.initial_mean_loss);
        for (i, l) in log.epoch_mean_losses.iter().enumerate() {
            let _ = writeln!(csv, "{},{l:?}", i + 1);
        }
        write(&dir.join("log.csv"), csv)?;
        Ok(dir)
    }

    pub fn load_srn(&self, cfg: &PipelineConfig, ds: &ZslDataset) -> Result<Srn> {
        let dir = self.require(cfg, Stage::Srn, GanMode::WganSr)?;
        let r = Srn::from_mlp(load_mlp(&dir.join("r.ckpt"))?);
        if r.d_a() != ds.d_a() || r.rep_dim() != cfg.metric.rep_dim {
            return Err(Error::Checkpoint {
                path: dir.join("r.ckpt"),
                msg: "widths do not match the dataset and configuration".into(),
            });
        }
        Ok(r)
    }

    pub fn save_gan(&self, cfg: &PipelineConfig, gan: &GanBundle, log: &GanTrainLog) -> Result<PathBuf> {
        let dir = self.prepare(cfg, Stage::Gan, gan.mode())?;
        gan.g.save(&dir.join("g.ckpt"))?;
        gan.d.save(&dir.join("d.ckpt"))?;
        gan.f1.save(&dir.join("f1.ckpt"))?;
        if let Some(f2) = &gan.f2 {
            f2.save(&dir.join("f2.ckpt"))?;
        }
        if let Some(c) = &gan.classifier {
            c.save(&dir.join("classifier.ckpt"))?;
        }
        log.write_csv(&dir.join("log.csv"))?;
        Ok(dir)
    }

    pub fn load_gan(&self, cfg: &PipelineConfig, mode: GanMode, ds: &ZslDataset) -> Result<GanBundle> {
        let dir = self.require(cfg, Stage::Gan, mode)?;
        let optional = |name: &str| -> Result<Option<Mlp>> {
            let p = dir.join(name);
            if p.is_file() {
                Ok(Some(load_mlp(&p)?))
            } else {
                Ok(None)
            }
        };
        let nets = (
            load_mlp(&dir.join("g.ckpt"))?,
            load_mlp(&dir.join("d.ckpt"))?,
            load_mlp(&dir.join("f1.ckpt"))?,
            optional("f2.ckpt")?,
        );
        let gan_cfg = GanConfig {
            mode,
            ..cfg.gan.clone()
        };
        GanBundle::from_parts(gan_cfg, ds.d_v(), ds.d_a(), cfg.metric.rep_dim, nets, optional("classifier.ckpt")?)
            .map_err(|e| Error::Checkpoint {
                path: dir.clone(),
                msg: e.to_string(),
            })
    }
}
