//! Run configuration files.
//!
//! A run is described by one TOML file with flat dotted keys:
//!
//! ```toml
//! strategy = "srdl"
//! epochs = 60
//! temperature = 3.0
//! seed = 1
//! model.kind = "mlp"
//! model.hidden = [256, 256]
//! data.source = "gaussian-mixture"
//! optimizer.momentum = 0.9
//! schedule.initial_lr = 0.1
//! ablation.stage_complete = true
//! output.dir = "runs/srdl"
//! ```
//!
//! Relative paths are resolved against the directory holding the file. The
//! same structure, serialized as JSON, is embedded in every run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPolicy;
use crate::data::{self, CsvSchema, Dataset, GaussianMixture, Split};
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelSpec};
use crate::optim::OptimizerConfig;
use crate::schedule::{ScheduleConfig, ScheduleMode, DEFAULT_DROP_FACTOR, DEFAULT_DROP_POINTS};
use crate::training::{SrdlOptions, Strategy, TrainSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    SmallCnn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strides: Option<Vec<usize>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden: None,
            channels: None,
            strides: None,
        }
    }
}

impl ModelConfig {
    pub fn architecture(&self, field: &str) -> Result<Architecture> {
        match self.kind {
            ModelKind::Mlp => {
                if self.channels.is_some() || self.strides.is_some() {
                    return Err(Error::config(format!("{field}.channels"), "only applies to smallcnn"));
                }
                Ok(match &self.hidden {
                    Some(h) => Architecture::Mlp { hidden: h.clone() },
                    None => Architecture::default_mlp(),
                })
            }
            ModelKind::SmallCnn => {
                if self.hidden.is_some() {
                    return Err(Error::config(format!("{field}.hidden"), "only applies to mlp"));
                }
                let Architecture::SmallCnn { channels, strides } = Architecture::default_cnn() else {
                    unreachable!()
                };
                let channels = self.channels.clone().unwrap_or(channels);
                let strides = match &self.strides {
                    Some(s) => s.clone(),
                    None if self.channels.is_none() => strides,
                    None => vec![1; channels.len()],
                };
                Ok(Architecture::SmallCnn { channels, strides })
            }
        }
    }

    /// Model for samples of `input_shape` and `classes` classes.
    pub fn spec(&self, field: &str, input_shape: &[usize], classes: usize) -> Result<ModelSpec> {
        let spec = ModelSpec {
            arch: self.architecture(field)?,
            input_shape: input_shape.to_vec(),
            classes,
        };
        spec.validate()
            .map_err(|e| Error::config(field, e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataConfig {
    GaussianMixture(GaussianMixture),
    Csv(CsvData),
    Idx(IdxData),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::GaussianMixture(GaussianMixture::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_shape: Option<Vec<usize>>,
    /// Standardise with training-split statistics.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxData {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

impl DataConfig {
    /// Loads the training split and, when configured, the test split.
    pub fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self {
            DataConfig::GaussianMixture(g) => {
                let (train, test) = g.generate()?;
                Ok((train, Some(test)))
            }
            DataConfig::Csv(c) => {
                let schema = CsvSchema {
                    has_header: c.has_header,
                    classes: c.classes,
                    feature_shape: c.feature_shape.clone(),
                    standardize: false,
                };
                let mut train = data::load_csv(&c.train, &schema, Split::Train)?;
                // without an explicit class count both splits must agree on one
                let schema = CsvSchema {
                    classes: Some(train.classes()),
                    ..schema
                };
                let mut test = c
                    .test
                    .as_ref()
                    .map(|p| data::load_csv(p, &schema, Split::Test))
                    .transpose()?;
                if c.standardize {
                    let norm = train.standardize();
                    if let Some(t) = test.as_mut() {
                        t.apply_normalization(&norm)?;
                    }
                }
                Ok((train, test))
            }
            DataConfig::Idx(c) => {
                let train = data::load_idx_images(&c.train_images, &c.train_labels, c.classes, Split::Train)?;
                let test = match (&c.test_images, &c.test_labels) {
                    (Some(i), Some(l)) => Some(data::load_idx_images(i, l, Some(train.classes()), Split::Test)?),
                    _ => None,
                };
                Ok((train, test))
            }
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            DataConfig::GaussianMixture(_) => vec![],
            DataConfig::Csv(c) => {
                let mut v = vec![&mut c.train];
                v.extend(c.test.as_mut());
                v
            }
            DataConfig::Idx(c) => {
                let mut v = vec![&mut c.train_images, &mut c.train_labels];
                v.extend(c.test_images.as_mut());
                v.extend(c.test_labels.as_mut());
                v
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DataConfig::GaussianMixture(g) => g.validate(),
            DataConfig::Idx(c) if c.test_images.is_some() != c.test_labels.is_some() => Err(Error::config(
                "data.test_labels",
                "test images and labels must be given together",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub initial_lr: f64,
    pub drop_factor: f64,
    pub drop_points: Vec<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            drop_factor: DEFAULT_DROP_FACTOR,
            drop_points: DEFAULT_DROP_POINTS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Re-initialise the model at the start of stage 2.
    pub restart: bool,
    /// Give each stage its own complete decay program.
    pub stage_complete: bool,
    /// Evaluate the (half-trained, final) ensemble.
    pub ensemble: bool,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            restart: true,
            stage_complete: true,
            ensemble: true,
        }
    }
}

/// Where a distillation teacher comes from: an existing checkpoint (cost not
/// counted) or a model trained first in the same run (cost counted).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    /// Defaults to the run's epoch budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub seed: u64,
    /// Stage-2 initialisation seed; defaults to `seed + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_seed: Option<u64>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub augment: AugmentPolicy,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub ablation: AblationSection,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_temperature() -> f64 {
    3.0
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_default();
            Error::config(field, e.message().to_string())
        })
    }

    /// Reads a TOML config, or a `manifest.json` written by a previous run.
    /// Relative paths are made absolute against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::config("manifest", e.to_string()))?;
            m.config
        } else {
            Self::from_toml_str(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        let base = fs::canonicalize(base)?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in self.data.paths_mut() {
            fix(p);
        }
        if let Some(p) = self.teacher.checkpoint.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.dir.as_mut() {
            fix(p);
        }
    }

    pub fn restart_seed(&self) -> u64 {
        self.restart_seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn schedule_config(&self) -> ScheduleConfig {
        ScheduleConfig {
            initial_lr: self.schedule.initial_lr,
            horizon: self.epochs,
            drop_factor: self.schedule.drop_factor,
            drop_points: self.schedule.drop_points.clone(),
            mode: if self.ablation.stage_complete && self.strategy == Strategy::Srdl {
                ScheduleMode::StageComplete
            } else {
                ScheduleMode::FullRun
            },
        }
    }

    pub fn settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.epochs,
            schedule: self.schedule_config(),
            optimizer: self.optimizer.clone(),
            augment: self.augment.clone(),
            seed: self.seed,
        }
    }

    pub fn srdl_options(&self) -> SrdlOptions {
        SrdlOptions {
            temperature: self.temperature,
            restart_seed: self.restart_seed(),
            restart: self.ablation.restart,
            mode: self.schedule_config().mode,
            ensemble: self.ablation.ensemble,
        }
    }

    /// Field-level checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.strategy == Strategy::Srdl && self.epochs < 2 {
            return Err(Error::config("epochs", "srdl needs at least 2 epochs (one per stage)"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("temperature", "must be positive and finite"));
        }
        self.optimizer.validate()?;
        self.schedule_config().validate()?;
        self.model.architecture("model")?;
        self.data.validate()?;
        for p in self.data.clone().paths_mut() {
            if !p.exists() {
                return Err(Error::config("data", format!("{} does not exist", p.display())));
            }
        }
        if self.strategy == Strategy::Kd {
            match (&self.teacher.checkpoint, &self.teacher.model) {
                (None, None) => {
                    return Err(Error::config(
                        "teacher",
                        "kd needs teacher.checkpoint or teacher.model",
                    ))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::config(
                        "teacher",
                        "give either teacher.checkpoint or teacher.model, not both",
                    ))
                }
                (Some(p), None) if !p.exists() => {
                    return Err(Error::config("teacher.checkpoint", format!("{} does not exist", p.display())))
                }
                (None, Some(m)) => {
                    m.architecture("teacher.model")?;
                    if self.teacher.epochs == Some(0) {
                        return Err(Error::config("teacher.epochs", "must be at least 1"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Written next to every run's outputs; enough to re-run it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRDL: &str = r#"
strategy = "srdl"
epochs = 60
seed = 3
model.kind = "mlp"
model.hidden = [32]
data.source = "gaussian-mixture"
data.per_class = 50
optimizer.batch_size = 64
schedule.initial_lr = 0.05
ablation.restart = false
output.dir = "out"
"#;

    #[test]
    fn dotted_keys_and_defaults() {
        let c = RunConfig::from_toml_str(SRDL).unwrap();
        assert_eq!(c.strategy, Strategy::Srdl);
        assert_eq!(c.temperature, 3.0);
        assert_eq!(c.restart_seed(), 4);
        assert_eq!(c.optimizer.momentum, 0.9);
        assert_eq!(c.optimizer.batch_size, 64);
        assert_eq!(c.schedule.drop_points, vec![0.5, 0.75]);
        assert!(!c.ablation.restart);
        assert_eq!(c.schedule_config().mode, ScheduleMode::StageComplete);
        let DataConfig::GaussianMixture(g) = &c.data else { panic!() };
        assert_eq!(g.per_class, 50);
        assert_eq!(g.dim, 16);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = SRDL.replace("optimizer.batch_size", "optimizer.batchsize");
        let err = RunConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("batchsize"), "{err}");
    }

    #[test]
    fn kd_needs_a_teacher() {
        let kd = SRDL.replace("\"srdl\"", "\"kd\"");
        let c = RunConfig::from_toml_str(&kd).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "teacher"));
    }

    #[test]
    fn field_errors_name_the_field() {
        let c = RunConfig::from_toml_str(&SRDL.replace("epochs = 60", "epochs = 1")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "epochs"));
        let c = RunConfig::from_toml_str(&format!("{SRDL}temperature = 0.0\n")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "temperature"));
    }

    #[test]
    fn manifest_json_roundtrip() {
        let c = RunConfig::from_toml_str(SRDL).unwrap();
        let m = Manifest::new(c.clone());
        let back: Manifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.config, c);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut c = RunConfig::from_toml_str(SRDL).unwrap();
        c.resolve_paths(Path::new("/tmp/base"));
        assert_eq!(c.output.dir.unwrap(), Path::new("/tmp/base/out"));
    }

    #[test]
    fn cnn_defaults() {
        let m = ModelConfig {
            kind: ModelKind::SmallCnn,
            ..Default::default()
        };
        assert_eq!(m.architecture("model").unwrap(), Architecture::default_cnn());
    }
}
