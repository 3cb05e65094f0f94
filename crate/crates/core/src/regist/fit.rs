use alloc::format;
use alloc::vec::Vec;

use super::annotation::SampleAnnotation;
use super::loss::{regist_terms, LossTerms, LossWeights};
use crate::body::params::{SCALES_AT, SCALE_AT};
use crate::body::{BodyParams, BodyTemplate, NUM_JOINTS};
use crate::diff::{Adam, Tape};
use crate::error::{contract, Error, Result};
use crate::geom;

/// Floor applied to segment and camera scales after every step.
pub const MIN_SCALE: f64 = 1e-3;

/// Optimizer settings for one registration round.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RegistConfig {
    pub weights: LossWeights,
    /// Weights used instead of `weights` when `stiff` is set.
    pub stiff_weights: LossWeights,
    pub stiff: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
}

impl Default for RegistConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::STANDARD,
            stiff_weights: LossWeights::STIFF,
            stiff: false,
            learning_rate: 0.1,
            batch_size: 10,
            iterations: 300,
        }
    }
}

impl RegistConfig {
    pub fn effective_weights(&self) -> LossWeights {
        if self.stiff {
            self.stiff_weights
        } else {
            self.weights
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.stiff_weights.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(contract!("registration needs a finite learning rate and a positive batch size"));
        }
        Ok(())
    }
}

/// Loss values recorded before one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LossRecord {
    pub terms: LossTerms,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFit {
    /// Fitted parameters with the rotation orthonormalized.
    pub params: BodyParams,
    /// One record per iteration followed by the final evaluation.
    pub trace: Vec<LossRecord>,
    /// Set when the keypoint term saw no visible keypoint.
    pub all_invisible: bool,
}

impl SampleFit {
    pub fn final_loss(&self) -> &LossRecord {
        self.trace.last().expect("trace always holds the final evaluation")
    }
}

fn to_unit(p: &BodyParams, k: f64) -> BodyParams {
    let mut q = p.clone();
    q.scale *= k;
    q.translation = p.translation.map(|x| x * k);
    q
}

/// Weak-perspective scale and translation matching the dense points to the
/// rest template seen head-on (`R = I`).
pub fn tpose_init(template: &BodyTemplate, ann: &SampleAnnotation) -> Result<BodyParams> {
    if ann.dense.is_empty() {
        return Err(contract!("dense correspondence list is empty"));
    }
    let n = ann.dense.len() as f64;
    let (mut pc, mut vc) = ([0.0; 2], [0.0; 2]);
    for d in &ann.dense {
        let v = template.vertices()[d.vertex];
        for c in 0..2 {
            pc[c] += d.point[c] / n;
            vc[c] += v[c] / n;
        }
    }
    let (mut sp, mut sv) = (0.0, 0.0);
    for d in &ann.dense {
        let v = template.vertices()[d.vertex];
        for c in 0..2 {
            sp += (d.point[c] - pc[c]) * (d.point[c] - pc[c]);
            sv += (v[c] - vc[c]) * (v[c] - vc[c]);
        }
    }
    if !(sv > 0.0 && sp > 0.0) {
        return Err(Error::DegeneratePose(format!("dense points of spread {sp} cannot seed a camera")));
    }
    let s = libm::sqrt(sp / sv);
    Ok(BodyParams::t_pose(s, [pc[0] - s * vc[0], pc[1] - s * vc[1]]))
}

/// Minimize the weighted registration loss for one sample with Adam.
///
/// Optimization runs in a frame where image lengths are divided by
/// [`SampleAnnotation::unit`]; inputs and outputs stay in pixels.
pub fn register_sample(
    template: &BodyTemplate,
    ann: &SampleAnnotation,
    init: &BodyParams,
    config: &RegistConfig,
) -> Result<SampleFit> {
    config.validate()?;
    ann.validate(template)?;
    if ann.dense.is_empty() {
        return Err(contract!("dense correspondence list is empty"));
    }
    let unit = ann.unit();
    let scaled = ann.scaled(1.0 / unit);
    let weights = config.effective_weights();
    let mut x = to_unit(init, 1.0 / unit).to_vec();
    let mut adam = Adam::new(config.learning_rate, x.len());
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut all_invisible = false;
    for it in 0..=config.iterations {
        let tape = Tape::new();
        let vars = tape.vars(&x);
        let (terms, flag) =
            regist_terms(&tape, template, &vars, &scaled).map_err(|e| stage_error(it, e))?;
        all_invisible = flag;
        let total = terms.total(&tape, &weights);
        let values = terms.values();
        let dense_px = unit * unit;
        // report fit terms in pixel units
        let mut reported = values;
        reported.dense *= dense_px;
        reported.keypoint *= dense_px;
        let record = LossRecord { terms: reported, total: reported.total(&weights) };
        if !total.value().is_finite() || !values.is_finite() {
            return Err(Error::NonFinite(format!("registration loss at iteration {it} is {}", total.value())));
        }
        trace.push(record);
        if it == config.iterations {
            break;
        }
        let grads = tape.backward(total).map_err(|e| stage_error(it, e))?.wrt_all(&vars);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("registration gradient at iteration {it}")));
        }
        adam.step(&mut x, &grads)?;
        // keep segment and camera scales in the valid domain
        for v in &mut x[SCALES_AT..SCALES_AT + NUM_JOINTS] {
            *v = v.max(MIN_SCALE);
        }
        x[SCALE_AT] = x[SCALE_AT].max(MIN_SCALE);
    }
    let params = if config.iterations == 0 && geom::orthonormality_defect(&init.rotation) < 1e-12 {
        init.clone()
    } else {
        to_unit(&BodyParams::from_slice(&x)?, unit).orthonormalized()?
    };
    Ok(SampleFit { params, trace, all_invisible })
}

fn stage_error(iteration: usize, e: Error) -> Error {
    match e {
        Error::Contract(m) => Error::Contract(m),
        Error::DegenerateRotation { column, norm } => Error::NonFinite(format!(
            "rotation became degenerate at iteration {iteration} (column {column}, norm {norm:e})"
        )),
        other => other,
    }
}

/// Register every sample independently.
///
/// `init` defaults to [`tpose_init`] per sample. A sample whose loss turns
/// non-finite yields an `Err` entry; the others proceed.
pub fn register(
    template: &BodyTemplate,
    samples: &[SampleAnnotation],
    init: Option<&[BodyParams]>,
    config: &RegistConfig,
) -> Result<Vec<Result<SampleFit>>> {
    config.validate()?;
    if let Some(init) = init {
        if init.len() != samples.len() {
            return Err(contract!("{} initial parameter sets for {} samples", init.len(), samples.len()));
        }
    }
    let mut out = Vec::with_capacity(samples.len());
    for (chunk_start, chunk) in samples.chunks(config.batch_size).enumerate().map(|(b, c)| (b * config.batch_size, c)) {
        for (i, ann) in chunk.iter().enumerate() {
            out.push(register_one(template, ann, init.map(|v| &v[chunk_start + i]), config));
        }
    }
    Ok(out)
}

/// One sample of [`register`], seeding from the T-pose when `init` is `None`.
pub fn register_one(
    template: &BodyTemplate,
    ann: &SampleAnnotation,
    init: Option<&BodyParams>,
    config: &RegistConfig,
) -> Result<SampleFit> {
    let seeded;
    let init = match init {
        Some(p) => p,
        None => {
            seeded = tpose_init(template, ann)?;
            &seeded
        }
    };
    register_sample(template, ann, init, config)
}
