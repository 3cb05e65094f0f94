//! Run configuration: one JSON document, every key overridable with `--set key=value`.

use std::path::{Path, PathBuf};

use deflearn_core::body::HumanoidSpec;
use deflearn_core::learn::{refine_config, DeformConfig};
use deflearn_core::prior::PriorConfig;
use deflearn_core::regist::RegistConfig;
use deflearn_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Added to every component seed.
    pub seed: u64,
    /// Worker threads for registration; 0 uses every core.
    pub threads: usize,
    /// Output directory.
    pub out: PathBuf,
    /// Procedural template resolution, used unless `paths.template` is set.
    pub humanoid: HumanoidSpec,
    pub paths: Paths,
    pub data: DataConfig,
    pub synth: SynthSection,
    pub prior: PriorSection,
    pub regist: RegistConfig,
    pub deform: DeformConfig,
    pub refine: RegistConfig,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: PathBuf::from("."),
            humanoid: HumanoidSpec::default(),
            paths: Paths::default(),
            data: DataConfig::default(),
            synth: SynthSection::default(),
            prior: PriorSection::default(),
            regist: RegistConfig::default(),
            deform: DeformConfig::default(),
            refine: refine_config(),
            export: ExportConfig::default(),
        }
    }
}

/// Input files, relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub template: Option<PathBuf>,
    pub prior: PathBuf,
    /// Fitted or predicted parameters (train-regressor targets, eval predictions, export source).
    pub theta: PathBuf,
    /// Registration initialization; T-pose when absent.
    pub init: Option<PathBuf>,
    pub regressor: PathBuf,
    /// Ground truth for eval; the dataset's own truth when absent.
    pub truth: Option<PathBuf>,
    /// Part/UV pixel grid for convert-dense.
    pub grid: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "dataset.json".into(),
            template: None,
            prior: "prior.json".into(),
            theta: "theta.json".into(),
            init: None,
            regressor: "regressor.json".into(),
            truth: None,
            grid: None,
        }
    }
}

/// Where keypoint depths for the registration come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    /// Whatever the dataset file carries.
    #[default]
    Annotation,
    /// Lifted by the trained pose prior at `paths.prior`.
    Prior,
    /// No depth term.
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Trailing dataset samples held out from deform-learn training.
    pub heldout: usize,
    pub depths: DepthSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub count: usize,
    pub generator: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { count: 100, generator: SynthConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub hidden: usize,
    pub layers: usize,
    pub training: PriorConfig,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { hidden: 128, layers: 8, training: PriorConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Entry of `paths.theta` to pose; the rest pose when absent.
    pub sample: Option<usize>,
    /// Also write an SVG overlay of the projected mesh.
    pub svg: bool,
}

impl RunConfig {
    /// Read `path`; every failure is a usage error carrying the file diagnostic.
    pub fn load(path: &Path) -> Result<Self> {
        json::read(path).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: &str, r: deflearn_core::Result<()>| r.map_err(|e| Error::Usage(format!("config `{what}`: {e}")));
        check("regist", self.regist.validate())?;
        check("refine", self.refine.validate())?;
        check("deform.first_round", self.deform.first_round.validate())?;
        check("deform.later_round", self.deform.later_round.validate())?;
        check("deform.regressor", self.deform.regressor.validate())?;
        check("prior.training", self.prior.training.validate())?;
        if self.prior.hidden == 0 || self.prior.layers == 0 || self.deform.hidden == 0 || self.deform.layers == 0 {
            return Err(Error::Usage("config: network widths and depths must be positive".into()));
        }
        Ok(())
    }

    /// Apply one `key=value` override. Keys are dotted paths; values parse as
    /// JSON and fall back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects key=value, got `{assignment}`")))?;
        let key = key.trim();
        let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::Usage(format!("unknown config key `{key}`")))?;
        }
        *slot = value;
        *self = serde_path_to_error::deserialize(doc)
            .map_err(|e| Error::Usage(format!("--set {key}: {}", e.into_inner())))?;
        Ok(())
    }

    /// Component seed shifted by the run seed.
    pub fn seeded(&self, component: u64) -> u64 {
        component.wrapping_add(self.seed)
    }
}
