//! On-disk formats: JSON for structured data, CSV for histories.

use std::path::Path;

use deflearn_core::body::{BodyParams, BodyTemplate, TemplateParts};
use deflearn_core::learn::{Regressor, RegressorHistory, RoundRecord, ThetaStore};
use deflearn_core::metrics::EvalReport;
use deflearn_core::prior::{PosePrior, PriorHistory, PriorStep, ViewSweep};
use deflearn_core::regist::{LossTerms, SampleAnnotation, SampleFit};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;

/// One annotated image, with ground truth when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub annotation: SampleAnnotation,
    #[serde(default)]
    pub truth: Option<BodyParams>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub samples: Vec<SampleRecord>,
}

impl Dataset {
    pub fn annotations(&self) -> Vec<SampleAnnotation> {
        self.samples.iter().map(|s| s.annotation.clone()).collect()
    }

    /// Ground truth for every sample, or `None` if any is missing.
    pub fn truths(&self) -> Option<Vec<BodyParams>> {
        self.samples.iter().map(|s| s.truth.clone()).collect()
    }
}

fn check_params(path: &Path, location: String, p: &BodyParams) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::format(path, location, "parameters must be finite"));
    }
    if p.scales.iter().any(|s| *s <= 0.0) || p.scale <= 0.0 {
        return Err(Error::format(path, location, "scales must be positive"));
    }
    p.orthonormalized().map_err(|e| Error::format(path, location, e))?;
    Ok(())
}

pub fn read_dataset(path: &Path, template: &BodyTemplate) -> Result<Dataset> {
    let data: Dataset = json::read(path)?;
    for (i, s) in data.samples.iter().enumerate() {
        s.annotation.validate(template).map_err(|e| Error::format(path, format!("samples[{i}].annotation"), e))?;
        if let Some(t) = &s.truth {
            check_params(path, format!("samples[{i}].truth"), t)?;
        }
    }
    Ok(data)
}

pub fn read_theta(path: &Path) -> Result<ThetaStore> {
    let store: ThetaStore = json::read(path)?;
    for (k, p) in &store {
        check_params(path, format!("sample {k}"), p)?;
    }
    Ok(store)
}

pub fn read_template(path: &Path) -> Result<BodyTemplate> {
    let parts: TemplateParts = json::read(path)?;
    BodyTemplate::new(parts).map_err(|e| Error::format(path, "template", e))
}

pub fn write_template(path: &Path, template: &BodyTemplate) -> Result<()> {
    json::write(path, template.parts())
}

pub fn read_prior(path: &Path) -> Result<PosePrior> {
    let prior: PosePrior = json::read(path)?;
    prior.validate().map_err(|e| Error::format(path, "prior", e))?;
    Ok(prior)
}

pub fn read_regressor(path: &Path) -> Result<Regressor> {
    let reg: Regressor = json::read(path)?;
    reg.validate().map_err(|e| Error::format(path, "regressor", e))?;
    Ok(reg)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, "csv", e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, "csv", e.error()))?;
    json::write_text(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, "csv", format!("{other:?}")),
    })?;
    let mut rows = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(i as u64 + 2, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                    Some(f) => format!("field {}: {err}", f + 1),
                    None => err.to_string(),
                },
                _ => e.to_string(),
            };
            Error::format(path, format!("line {line}"), message)
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorStepRow {
    pub step: usize,
    pub generator_adv: f64,
    pub discriminator: f64,
    pub ratio: f64,
    pub sym: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSweepRow {
    pub step: usize,
    pub view: usize,
    pub generator_adv: f64,
}

pub fn prior_rows(h: &PriorHistory) -> (Vec<PriorStepRow>, Vec<ViewSweepRow>) {
    let steps = h
        .steps
        .iter()
        .enumerate()
        .map(|(step, s)| PriorStepRow { step, generator_adv: s.generator_adv, discriminator: s.discriminator, ratio: s.ratio, sym: s.sym })
        .collect();
    let sweeps = h
        .sweeps
        .iter()
        .flat_map(|s| s.generator_adv.iter().enumerate().map(|(view, &g)| ViewSweepRow { step: s.step, view, generator_adv: g }))
        .collect();
    (steps, sweeps)
}

pub fn prior_history_from_rows(steps: &[PriorStepRow], sweeps: &[ViewSweepRow]) -> PriorHistory {
    let mut h = PriorHistory {
        steps: steps
            .iter()
            .map(|r| PriorStep { generator_adv: r.generator_adv, discriminator: r.discriminator, ratio: r.ratio, sym: r.sym })
            .collect(),
        sweeps: Vec::new(),
    };
    for r in sweeps {
        match h.sweeps.last_mut() {
            Some(s) if s.step == r.step => s.generator_adv.push(r.generator_adv),
            _ => h.sweeps.push(ViewSweep { step: r.step, generator_adv: vec![r.generator_adv] }),
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorRow {
    pub epoch: usize,
    pub regress: f64,
    pub dense: f64,
    pub keypoint: f64,
    pub total: f64,
}

pub fn regressor_rows(h: &RegressorHistory) -> Vec<RegressorRow> {
    h.epochs
        .iter()
        .enumerate()
        .map(|(epoch, l)| RegressorRow { epoch, regress: l.regress, dense: l.dense, keypoint: l.keypoint, total: l.total })
        .collect()
}

/// Per-round summary line of `history.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub samples: usize,
    pub regist_loss: f64,
    pub init_mpjpe: Option<f64>,
    pub regist_mpjpe: Option<f64>,
    pub train_pred_mpjpe: Option<f64>,
    pub heldout_mpjpe: Option<f64>,
}

impl From<&RoundRecord> for RoundRow {
    fn from(r: &RoundRecord) -> Self {
        Self {
            round: r.round,
            samples: r.samples,
            regist_loss: r.regist_loss,
            init_mpjpe: r.init_mpjpe,
            regist_mpjpe: r.regist_mpjpe,
            train_pred_mpjpe: r.train_pred_mpjpe,
            heldout_mpjpe: r.heldout_mpjpe,
        }
    }
}

/// Final loss terms of one registered sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub sample: usize,
    pub dense: f64,
    pub keypoint: f64,
    pub scale: f64,
    pub joint: f64,
    pub det: f64,
    pub total: f64,
}

impl FitRow {
    pub fn new(sample: usize, fit: &SampleFit) -> Self {
        let r = fit.final_loss();
        let LossTerms { dense, keypoint, scale, joint, det } = r.terms;
        Self { sample, dense, keypoint, scale, joint, det, total: r.total }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub samples: usize,
    pub mpjpe_mm: f64,
    pub per_vertex_mm: f64,
    pub per_pixel: f64,
}

impl From<&EvalReport> for EvalRow {
    fn from(r: &EvalReport) -> Self {
        Self { samples: r.samples, mpjpe_mm: r.mpjpe_mm, per_vertex_mm: r.per_vertex_mm, per_pixel: r.per_pixel }
    }
}
