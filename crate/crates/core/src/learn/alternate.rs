use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::regressor::{frame_targets, train_regressor, FeatureSpec, Regressor, RegressorConfig, RegressorHistory};
use crate::body::{BodyParams, BodyTemplate};
use crate::error::{contract, Error, Result};
use crate::metrics::params_mpjpe;
use crate::regist::{register, register_sample, tpose_init, RegistConfig, SampleAnnotation, SampleFit};

/// Registered parameters keyed by training-sample index.
pub type ThetaStore = BTreeMap<usize, BodyParams>;

/// Strategy for registering a batch of samples (e.g. serial or thread-parallel).
pub trait Registrar {
    fn register(
        &self,
        template: &BodyTemplate,
        samples: &[SampleAnnotation],
        init: Option<&[BodyParams]>,
        config: &RegistConfig,
    ) -> Result<Vec<Result<SampleFit>>>;
}

/// Registers samples one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialRegistrar;

impl Registrar for SerialRegistrar {
    fn register(
        &self,
        template: &BodyTemplate,
        samples: &[SampleAnnotation],
        init: Option<&[BodyParams]>,
        config: &RegistConfig,
    ) -> Result<Vec<Result<SampleFit>>> {
        register(template, samples, init, config)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DeformConfig {
    pub rounds: usize,
    /// Registration of round 1, started from the T-pose.
    pub first_round: RegistConfig,
    /// Registration of later rounds, started from regressor predictions.
    pub later_round: RegistConfig,
    pub regressor: RegressorConfig,
    pub features: FeatureSpec,
    pub hidden: usize,
    /// Affine layers of the regressor network.
    pub layers: usize,
    /// Output-layer damping applied when the regressor is first fitted.
    pub warm_start_gain: f64,
    pub seed: u64,
    /// Per-round subset of training samples; rounds without an entry use every sample.
    pub round_masks: Vec<Vec<bool>>,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            first_round: RegistConfig { stiff: true, ..RegistConfig::default() },
            later_round: RegistConfig { iterations: 100, learning_rate: 0.01, ..RegistConfig::default() },
            regressor: RegressorConfig::default(),
            features: FeatureSpec::default(),
            hidden: 256,
            layers: 3,
            warm_start_gain: 0.1,
            seed: 0,
            round_masks: Vec::new(),
        }
    }
}

/// Training and held-out samples, with ground truth when it is known.
#[derive(Debug, Clone, Copy)]
pub struct DeformData<'a> {
    pub train: &'a [SampleAnnotation],
    pub heldout: &'a [SampleAnnotation],
    pub train_truth: Option<&'a [BodyParams]>,
    pub heldout_truth: Option<&'a [BodyParams]>,
}

impl DeformData<'_> {
    fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(contract!("deform-and-learn needs at least one training sample"));
        }
        if self.train_truth.is_some_and(|t| t.len() != self.train.len())
            || self.heldout_truth.is_some_and(|t| t.len() != self.heldout.len())
        {
            return Err(contract!("ground truth does not match the sample count"));
        }
        Ok(())
    }
}

/// What one round measured. MPJPE entries are present when ground truth is.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RoundRecord {
    pub round: usize,
    pub samples: usize,
    /// Mean final registration loss.
    pub regist_loss: f64,
    /// Registration-set MPJPE of the initialization.
    pub init_mpjpe: Option<f64>,
    /// Registration-set MPJPE of the registration output.
    pub regist_mpjpe: Option<f64>,
    /// Registration-set MPJPE of the regressor after training.
    pub train_pred_mpjpe: Option<f64>,
    pub heldout_mpjpe: Option<f64>,
    pub regressor: RegressorHistory,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TrainState {
    /// Completed rounds.
    pub round: usize,
    pub theta_anno: ThetaStore,
    pub regressor: Regressor,
    pub history: Vec<RoundRecord>,
}

impl TrainState {
    pub fn new(config: &DeformConfig) -> Result<Self> {
        let regressor = Regressor::new(config.features, config.hidden, config.layers, config.seed)?;
        Ok(Self { round: 0, theta_anno: ThetaStore::new(), regressor, history: Vec::new() })
    }
}

fn in_round(round: usize, e: Error) -> Error {
    match e {
        Error::Contract(m) => Error::Contract(format!("round {round}: {m}")),
        Error::DegeneratePose(m) => Error::DegeneratePose(format!("round {round}: {m}")),
        Error::NonFinite(m) => Error::NonFinite(format!("round {round}: {m}")),
        other => other,
    }
}

fn mean_mpjpe(template: &BodyTemplate, pred: &[BodyParams], truth: &[BodyParams]) -> Result<f64> {
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        sum += params_mpjpe(template, p, t)?;
    }
    Ok(sum / pred.len().max(1) as f64)
}

/// Run the next round: register, replace `θ_anno`, train the regressor.
pub fn run_round(
    template: &BodyTemplate,
    data: &DeformData<'_>,
    config: &DeformConfig,
    registrar: &dyn Registrar,
    state: &mut TrainState,
) -> Result<()> {
    data.validate()?;
    let k = state.round + 1;
    let mut step = || -> Result<RoundRecord> {
        let active: Vec<usize> = match config.round_masks.get(k - 1) {
            Some(mask) if mask.len() != data.train.len() => {
                return Err(contract!("sample mask has {} entries for {} samples", mask.len(), data.train.len()))
            }
            Some(mask) => (0..data.train.len()).filter(|&i| mask[i]).collect(),
            None => (0..data.train.len()).collect(),
        };
        if active.is_empty() {
            return Err(contract!("sample mask selects no training sample"));
        }
        let samples: Vec<SampleAnnotation> = active.iter().map(|&i| data.train[i].clone()).collect();
        let truth: Option<Vec<BodyParams>> = data.train_truth.map(|t| active.iter().map(|&i| t[i].clone()).collect());

        let (inits, regist_cfg) = if k == 1 {
            let seeds = samples.iter().map(|a| tpose_init(template, a)).collect::<Result<Vec<_>>>()?;
            (seeds, &config.first_round)
        } else {
            (state.regressor.predict_all(template, &samples)?, &config.later_round)
        };
        let fits = registrar.register(template, &samples, Some(&inits), regist_cfg)?;
        let fits: Vec<SampleFit> = fits.into_iter().collect::<Result<_>>()?;
        for (&i, fit) in active.iter().zip(&fits) {
            state.theta_anno.insert(i, fit.params.clone());
        }
        let fitted: Vec<BodyParams> = fits.iter().map(|f| f.params.clone()).collect();
        let regist_loss = fits.iter().map(|f| f.final_loss().total).sum::<f64>() / fits.len() as f64;

        let store: ThetaStore = fitted.iter().cloned().enumerate().collect();
        if k == 1 {
            let targets = frame_targets(&samples, &store)?;
            state.regressor.warm_start(&targets, config.warm_start_gain)?;
        }
        let reg_cfg = RegressorConfig { seed: config.regressor.seed.wrapping_add(k as u64), ..config.regressor };
        let regressor = train_regressor(template, &mut state.regressor, &samples, &store, &reg_cfg)?;

        let mut record = RoundRecord {
            round: k,
            samples: samples.len(),
            regist_loss,
            init_mpjpe: None,
            regist_mpjpe: None,
            train_pred_mpjpe: None,
            heldout_mpjpe: None,
            regressor,
        };
        if let Some(truth) = &truth {
            record.init_mpjpe = Some(mean_mpjpe(template, &inits, truth)?);
            record.regist_mpjpe = Some(mean_mpjpe(template, &fitted, truth)?);
            let pred = state.regressor.predict_all(template, &samples)?;
            record.train_pred_mpjpe = Some(mean_mpjpe(template, &pred, truth)?);
        }
        if let (Some(truth), false) = (data.heldout_truth, data.heldout.is_empty()) {
            let pred = state.regressor.predict_all(template, data.heldout)?;
            record.heldout_mpjpe = Some(mean_mpjpe(template, &pred, truth)?);
        }
        Ok(record)
    };
    let record = step().map_err(|e| in_round(k, e))?;
    state.history.push(record);
    state.round = k;
    Ok(())
}

/// All rounds from scratch.
pub fn deform_learn_loop(
    template: &BodyTemplate,
    data: &DeformData<'_>,
    config: &DeformConfig,
    registrar: &dyn Registrar,
) -> Result<TrainState> {
    let mut state = TrainState::new(config)?;
    while state.round < config.rounds {
        run_round(template, data, config, registrar, &mut state)?;
    }
    Ok(state)
}

/// Registration settings for inference-time refinement (50 iterations, lr 0.01).
pub fn refine_config() -> RegistConfig {
    RegistConfig { iterations: 50, learning_rate: 0.01, ..RegistConfig::default() }
}

/// Register `ann` starting from a regressor prediction.
pub fn refine(template: &BodyTemplate, theta: &BodyParams, ann: &SampleAnnotation, config: &RegistConfig) -> Result<SampleFit> {
    register_sample(template, ann, theta, config)
}
