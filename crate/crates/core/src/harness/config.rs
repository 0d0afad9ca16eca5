//! Flat `section.key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so that typos cannot silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adversarial::{AttackSpec, TradesConfig};
use crate::data::{CorruptionScheme, CorruptionSpec, Generator, SyntheticSpec};
use crate::error::{Error, Result};
use crate::loss::SceWeights;
use crate::optim::SgdConfig;
use crate::sat::SatConfig;
use crate::train::{RobustEval, TrainConfig, TrainMode};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// One CIFAR-10 binary batch file.
    Cifar { path: PathBuf },
    Idx { images: PathBuf, labels: PathBuf },
    /// A dataset snapshot written by `corrupt`.
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Trailing samples held out for validation.
    pub val_count: usize,
    pub corruption: CorruptionSpec,
    pub hidden: Vec<usize>,
    pub optim: SgdConfig,
    /// Unset fields fall back to the mode's defaults.
    pub sat_start_epoch: Option<usize>,
    pub sat_momentum: Option<f64>,
    pub sce_reverse: f64,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub trials: usize,
    pub augment: bool,
    /// Evaluation attack; training uses the same radius with `train_attack_steps`.
    pub attack: AttackSpec,
    pub train_attack_steps: usize,
    pub inv_lambda: f64,
    /// Robust accuracy is logged every this many epochs when set.
    pub robust_eval_every: Option<usize>,
    pub coverages: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// The desk-scale profile: ten Gaussian blobs in 32 dimensions,
    /// 10k training and 2k validation samples, a 256-256 MLP and 120 epochs.
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticSpec {
                generator: Generator::GaussianBlobs,
                classes: 10,
                per_class: 1200,
                dim: 32,
                separation: 4.0,
                seed: 0,
            }),
            val_count: 2000,
            corruption: CorruptionSpec {
                scheme: CorruptionScheme::CorruptedLabels,
                rate: 0.4,
                seed: 0,
            },
            hidden: vec![256, 256],
            optim: SgdConfig::default(),
            sat_start_epoch: None,
            sat_momentum: None,
            sce_reverse: SceWeights::default().reverse,
            mode: TrainMode::Sat,
            epochs: 120,
            batch_size: 256,
            seed: 0,
            trials: 1,
            augment: false,
            attack: AttackSpec::default(),
            train_attack_steps: TradesConfig::default().attack.steps,
            inv_lambda: TradesConfig::default().inv_lambda,
            robust_eval_every: None,
            coverages: vec![1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7],
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| field(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn synthetic_mut<'a>(data: &'a mut DataSource, key: &str) -> Result<&'a mut SyntheticSpec> {
    match data {
        DataSource::Synthetic(s) => Ok(s),
        _ => Err(Error::config(key, "only applies to data.source=synthetic")),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_lines(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, "expected `key = value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair, "expected KEY=VALUE"))?;
        self.set(k.trim(), v.trim())
    }

    /// Sets one field by its dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data.source" => {
                self.data = match value {
                    "synthetic" => DataSource::Synthetic(match &self.data {
                        DataSource::Synthetic(s) => *s,
                        _ => match ExperimentConfig::default().data {
                            DataSource::Synthetic(s) => s,
                            _ => unreachable!(),
                        },
                    }),
                    "cifar" => DataSource::Cifar { path: PathBuf::new() },
                    "idx" => DataSource::Idx { images: PathBuf::new(), labels: PathBuf::new() },
                    "snapshot" => DataSource::Snapshot { path: PathBuf::new() },
                    other => return Err(Error::config(key, format!("unknown source `{other}`"))),
                }
            }
            "data.path" => match &mut self.data {
                DataSource::Cifar { path } | DataSource::Snapshot { path } => *path = value.into(),
                _ => return Err(Error::config(key, "only applies to cifar or snapshot sources")),
            },
            "data.images" | "data.labels" => match &mut self.data {
                DataSource::Idx { images, labels } => {
                    let slot = if key == "data.images" { images } else { labels };
                    *slot = value.into();
                }
                _ => return Err(Error::config(key, "only applies to data.source=idx")),
            },
            "data.generator" => {
                synthetic_mut(&mut self.data, key)?.generator =
                    value.parse::<Generator>().map_err(|e| Error::config(key, e.to_string()))?
            }
            "data.classes" => synthetic_mut(&mut self.data, key)?.classes = field(key, value)?,
            "data.per_class" => synthetic_mut(&mut self.data, key)?.per_class = field(key, value)?,
            "data.dim" => synthetic_mut(&mut self.data, key)?.dim = field(key, value)?,
            "data.separation" => synthetic_mut(&mut self.data, key)?.separation = field(key, value)?,
            "data.seed" => synthetic_mut(&mut self.data, key)?.seed = field(key, value)?,
            "data.val_count" => self.val_count = field(key, value)?,
            "corruption.scheme" => {
                self.corruption.scheme = value
                    .parse::<CorruptionScheme>()
                    .map_err(|e| Error::config(key, e.to_string()))?
            }
            "corruption.rate" => self.corruption.rate = field(key, value)?,
            "corruption.seed" => self.corruption.seed = field(key, value)?,
            "model.hidden" => self.hidden = list(key, value)?,
            "optim.lr" => self.optim.lr0 = field(key, value)?,
            "optim.momentum" => self.optim.momentum = field(key, value)?,
            "optim.weight_decay" => self.optim.weight_decay = field(key, value)?,
            "sat.start_epoch" => self.sat_start_epoch = Some(field(key, value)?),
            "sat.momentum" => self.sat_momentum = Some(field(key, value)?),
            "sat.sce_reverse" => self.sce_reverse = field(key, value)?,
            "train.mode" => {
                self.mode = value.parse::<TrainMode>().map_err(|e| Error::config(key, e.to_string()))?
            }
            "train.epochs" => self.epochs = field(key, value)?,
            "train.batch_size" => self.batch_size = field(key, value)?,
            "train.seed" => self.seed = field(key, value)?,
            "train.trials" => self.trials = field(key, value)?,
            "train.augment" => self.augment = field(key, value)?,
            "adversarial.epsilon" => self.attack.epsilon = field(key, value)?,
            "adversarial.step_size" => self.attack.step_size = field(key, value)?,
            "adversarial.eval_steps" => self.attack.steps = field(key, value)?,
            "adversarial.train_steps" => self.train_attack_steps = field(key, value)?,
            "adversarial.lo" => self.attack.lo = field(key, value)?,
            "adversarial.hi" => self.attack.hi = field(key, value)?,
            "adversarial.inv_lambda" => self.inv_lambda = field(key, value)?,
            "adversarial.eval_every" => {
                self.robust_eval_every = match value {
                    "" | "none" => None,
                    v => Some(field(key, v)?),
                }
            }
            "selective.coverages" => self.coverages = list(key, value)?,
            "output.dir" => self.output_dir = value.into(),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Every field as `key = value` lines; `parse(to_kv())` reproduces `self`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.data {
            DataSource::Synthetic(s) => {
                put("data.source", "synthetic".into());
                put("data.generator", s.generator.name().into());
                put("data.classes", s.classes.to_string());
                put("data.per_class", s.per_class.to_string());
                put("data.dim", s.dim.to_string());
                put("data.separation", s.separation.to_string());
                put("data.seed", s.seed.to_string());
            }
            DataSource::Cifar { path } => {
                put("data.source", "cifar".into());
                put("data.path", path.display().to_string());
            }
            DataSource::Idx { images, labels } => {
                put("data.source", "idx".into());
                put("data.images", images.display().to_string());
                put("data.labels", labels.display().to_string());
            }
            DataSource::Snapshot { path } => {
                put("data.source", "snapshot".into());
                put("data.path", path.display().to_string());
            }
        }
        put("data.val_count", self.val_count.to_string());
        put("corruption.scheme", self.corruption.scheme.name().into());
        put("corruption.rate", self.corruption.rate.to_string());
        put("corruption.seed", self.corruption.seed.to_string());
        put("model.hidden", join(&self.hidden));
        put("optim.lr", self.optim.lr0.to_string());
        put("optim.momentum", self.optim.momentum.to_string());
        put("optim.weight_decay", self.optim.weight_decay.to_string());
        if let Some(e) = self.sat_start_epoch {
            put("sat.start_epoch", e.to_string());
        }
        if let Some(a) = self.sat_momentum {
            put("sat.momentum", a.to_string());
        }
        put("sat.sce_reverse", self.sce_reverse.to_string());
        put("train.mode", self.mode.name().into());
        put("train.epochs", self.epochs.to_string());
        put("train.batch_size", self.batch_size.to_string());
        put("train.seed", self.seed.to_string());
        put("train.trials", self.trials.to_string());
        put("train.augment", self.augment.to_string());
        put("adversarial.epsilon", self.attack.epsilon.to_string());
        put("adversarial.step_size", self.attack.step_size.to_string());
        put("adversarial.eval_steps", self.attack.steps.to_string());
        put("adversarial.train_steps", self.train_attack_steps.to_string());
        put("adversarial.lo", self.attack.lo.to_string());
        put("adversarial.hi", self.attack.hi.to_string());
        put("adversarial.inv_lambda", self.inv_lambda.to_string());
        put(
            "adversarial.eval_every",
            self.robust_eval_every.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
        );
        put("selective.coverages", join(&self.coverages));
        put("output.dir", self.output_dir.display().to_string());
        out
    }

    /// The target schedule after applying mode defaults.
    pub fn sat(&self) -> SatConfig {
        let base = self.mode.default_sat();
        SatConfig {
            start_epoch: self.sat_start_epoch.unwrap_or(base.start_epoch),
            momentum: self.sat_momentum.unwrap_or(base.momentum),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optim: self.optim,
            sat: self.sat(),
            sce: SceWeights {
                reverse: self.sce_reverse,
                ..SceWeights::default()
            },
            trades: TradesConfig {
                inv_lambda: self.inv_lambda,
                attack: AttackSpec {
                    steps: self.train_attack_steps,
                    ..self.attack
                },
            },
            robust_eval: self.robust_eval_every.map(|every| RobustEval {
                attack: self.attack,
                every,
            }),
            seed,
            check_invariants: false,
        }
    }

    /// Field-level validation, including that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("train.trials", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.augment {
            return Err(Error::Unimplemented(
                "train.augment: data augmentation is not available for flat feature vectors".into(),
            ));
        }
        if self.val_count == 0 {
            return Err(Error::config("data.val_count", "must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("model.hidden", "widths must be positive"));
        }
        let exists = |key: &str, p: &Path| {
            if p.as_os_str().is_empty() || !p.exists() {
                Err(Error::config(key, format!("file `{}` does not exist", p.display())))
            } else {
                Ok(())
            }
        };
        match &self.data {
            DataSource::Synthetic(s) => s.validate().map_err(|e| Error::config("data", e.to_string()))?,
            DataSource::Cifar { path } | DataSource::Snapshot { path } => exists("data.path", path)?,
            DataSource::Idx { images, labels } => {
                exists("data.images", images)?;
                exists("data.labels", labels)?;
            }
        }
        self.corruption
            .validate()
            .map_err(|e| Error::config("corruption.rate", e.to_string()))?;
        let sat = self.sat();
        sat.validate().map_err(|e| Error::config("sat.momentum", e.to_string()))?;
        self.optim.validate().map_err(|e| Error::config("optim", e.to_string()))?;
        self.train_config(self.seed)
            .trades
            .validate()
            .map_err(|e| Error::config("adversarial", e.to_string()))?;
        if self.robust_eval_every == Some(0) {
            return Err(Error::config("adversarial.eval_every", "must be at least 1"));
        }
        if self.coverages.is_empty() || self.coverages.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(Error::config("selective.coverages", "values must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_kv()).unwrap(), cfg);
        cfg.validate().unwrap();
        assert_eq!(cfg.sat(), SatConfig::default());
    }

    #[test]
    fn overrides_round_trip() {
        let text = "\
# label noise run
train.mode = trades_sat
sat.momentum = 0.95
model.hidden = 8, 4
adversarial.lo = -inf
adversarial.hi = inf
adversarial.eval_every = 5
selective.coverages = 1.0,0.5
corruption.scheme = gaussian
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.hidden, vec![8, 4]);
        assert_eq!(cfg.sat(), SatConfig { start_epoch: 70, momentum: 0.95 });
        assert_eq!(cfg.attack.lo, f64::NEG_INFINITY);
        assert_eq!(ExperimentConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn mode_defaults() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("train.mode", "selective").unwrap();
        assert_eq!(cfg.sat(), SatConfig { start_epoch: 0, momentum: 0.99 });
    }

    #[test]
    fn field_level_errors() {
        let field_of = |text: &str| match ExperimentConfig::parse(text).and_then(|c| c.validate()) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(field_of("train.epochs = 0"), "train.epochs");
        assert_eq!(field_of("train.epochs = many"), "train.epochs");
        assert_eq!(field_of("trian.epochs = 3"), "trian.epochs");
        assert_eq!(field_of("data.source = cifar\ndata.path = /nonexistent/batch.bin"), "data.path");
        assert_eq!(field_of("corruption.rate = 2"), "corruption.rate");
        assert_eq!(field_of("train.trials = 0"), "train.trials");
        assert!(matches!(
            ExperimentConfig::parse("train.augment = true").unwrap().validate(),
            Err(Error::Unimplemented(_))
        ));
    }
}
