//! Run configuration: defaults, then an optional preset, then a `key = value`
//! file, then `--set` pairs, then dedicated flags.

use std::fs;
use std::path::PathBuf;

use dcrgan::dataset::SynthConfig;
use dcrgan::pipeline::PipelineConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    /// Generated in memory; `seed: None` means "use the run seed".
    Synth { config: SynthConfig, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub data: DataSource,
    pub out: PathBuf,
}

/// Flag-level inputs shared by the training, evaluation and export commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config_file: Option<PathBuf>,
    pub preset: Option<String>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn preset(name: &str) -> Result<PipelineConfig, CliError> {
    match name {
        "full" => Ok(PipelineConfig::default()),
        "desk" => Ok(PipelineConfig::desk()),
        _ => Err(CliError::Usage(format!("unknown preset {name:?}; expected full or desk"))),
    }
}

fn parse_lines(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse {v:?}")))
}

/// The synthetic settings of `data`, switching it to a synthetic source first if needed.
fn synth(data: &mut DataSource) -> &mut SynthConfig {
    if let DataSource::Manifest(_) = data {
        *data = DataSource::Synth {
            config: SynthConfig::default(),
            seed: None,
        };
    }
    match data {
        DataSource::Synth { config, .. } => config,
        DataSource::Manifest(_) => unreachable!("switched to a synthetic source above"),
    }
}

impl RunConfig {
    /// Applies one key: dataset and output keys here, everything else to the pipeline.
    fn set(&mut self, key: &str, v: &str, seed_seen: &mut bool) -> Result<(), CliError> {
        match key {
            "data" => self.data = DataSource::Manifest(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "synth_seed" => {
                synth(&mut self.data);
                if let DataSource::Synth { seed, .. } = &mut self.data {
                    *seed = Some(num(key, v)?);
                }
            }
            "synth_num_seen" => synth(&mut self.data).num_seen = num(key, v)?,
            "synth_num_unseen" => synth(&mut self.data).num_unseen = num(key, v)?,
            "synth_instances_per_class" => synth(&mut self.data).instances_per_class = num(key, v)?,
            "synth_d_v" => synth(&mut self.data).d_v = num(key, v)?,
            "synth_d_a" => synth(&mut self.data).d_a = num(key, v)?,
            "synth_noise" => synth(&mut self.data).visual_noise_sigma = num(key, v)?,
            "synth_unseen_overlap" => synth(&mut self.data).unseen_overlap = num(key, v)?,
            "synth_seen_test_fraction" => synth(&mut self.data).seen_test_fraction = num(key, v)?,
            "preset" => {}
            _ => {
                if key == "seed" {
                    *seed_seen = true;
                }
                self.pipeline
                    .set(key, v)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Merges defaults, preset, file, `--set` pairs and flags, in increasing precedence.
    pub fn resolve(o: &Overrides) -> Result<RunConfig, CliError> {
        let file_pairs = match &o.config_file {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_lines(&text, &p.display().to_string())?
            }
            None => Vec::new(),
        };
        let preset_name = o
            .preset
            .clone()
            .or_else(|| file_pairs.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.clone()))
            .unwrap_or_else(|| "full".to_string());
        let mut rc = RunConfig {
            pipeline: preset(&preset_name)?,
            data: DataSource::Synth {
                config: SynthConfig::default(),
                seed: None,
            },
            out: PathBuf::from("runs"),
        };
        let mut seed_seen = false;
        for (k, v) in &file_pairs {
            rc.set(k, v, &mut seed_seen)?;
        }
        for s in &o.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
            rc.set(k.trim(), v.trim(), &mut seed_seen)?;
        }
        if let Some(seed) = o.seed {
            rc.pipeline.seed = seed;
            seed_seen = true;
        }
        if let Some(d) = &o.data {
            rc.data = DataSource::Manifest(d.clone());
        }
        if let Some(out) = &o.out {
            rc.out = out.clone();
        }
        if !seed_seen {
            return Err(CliError::Usage("a seed is required (--seed or seed = in the config file)".into()));
        }
        rc.pipeline
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if let DataSource::Synth { config, .. } = &rc.data {
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(rc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed = 3\nrep_dim = 16\nn_loop = 9\nsynth_unseen_overlap = 1.0").unwrap();
        let o = Overrides {
            config_file: Some(f.path().to_path_buf()),
            sets: vec!["rep_dim=8".into()],
            seed: Some(5),
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(&o).unwrap();
        assert_eq!(rc.pipeline.seed, 5);
        assert_eq!(rc.pipeline.metric.rep_dim, 8);
        assert_eq!(rc.pipeline.schedule.n_loop, 9);
        assert_eq!(rc.pipeline.mn.epochs, PipelineConfig::default().mn.epochs);
        match rc.data {
            DataSource::Synth { config, seed } => {
                assert_eq!(config.unseen_overlap, 1.0);
                assert_eq!(seed, None);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(
            RunConfig::resolve(&Overrides::default()),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn preset_applies_before_file_keys() {
        let o = Overrides {
            preset: Some("desk".into()),
            seed: Some(1),
            sets: vec!["n_loop=4".into()],
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(&o).unwrap();
        assert_eq!(rc.pipeline.metric.rep_dim, PipelineConfig::desk().metric.rep_dim);
        assert_eq!(rc.pipeline.schedule.n_loop, 4);
    }
}
