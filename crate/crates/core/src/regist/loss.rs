//! The five registration terms, each as a tape builder and an `f64` evaluator.

use alloc::vec;
use alloc::vec::Vec;

use super::annotation::SampleAnnotation;
use super::model::{pose_vars, rotation_vars, scale_vars, TapeModel};
use crate::body::{BodyParams, BodyTemplate, NUM_JOINTS};
use crate::camera::gram_schmidt;
use crate::diff::mat3::{self, M3, V3};
use crate::diff::{Tape, Var};
use crate::error::{contract, Result};
use crate::geom::{self, Mat3, Vec3};

/// Relative strengths `ω` of the registration terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LossWeights {
    pub dense: f64,
    pub keypoint: f64,
    pub scale: f64,
    pub joint: f64,
    pub det: f64,
}

impl LossWeights {
    pub const STANDARD: Self = Self { dense: 1000.0, keypoint: 1.0, scale: 10.0, joint: 0.001, det: 1.0 };
    /// First-round weights that keep the body stiff.
    pub const STIFF: Self = Self { dense: 1000.0, keypoint: 1.0, scale: 100.0, joint: 1.0, det: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let w = [self.dense, self.keypoint, self.scale, self.joint, self.det];
        if w.iter().all(|x| *x >= 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(contract!("loss weights must be finite and non-negative: {self:?}"))
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Values of the five terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LossTerms<T = f64> {
    pub dense: T,
    pub keypoint: T,
    pub scale: T,
    pub joint: T,
    pub det: T,
}

impl LossTerms<f64> {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.dense * self.dense + w.keypoint * self.keypoint + w.scale * self.scale + w.joint * self.joint + w.det * self.det
    }

    pub fn is_finite(&self) -> bool {
        [self.dense, self.keypoint, self.scale, self.joint, self.det].iter().all(|x| x.is_finite())
    }
}

impl<'t> LossTerms<Var<'t>> {
    pub fn values(&self) -> LossTerms<f64> {
        LossTerms {
            dense: self.dense.value(),
            keypoint: self.keypoint.value(),
            scale: self.scale.value(),
            joint: self.joint.value(),
            det: self.det.value(),
        }
    }

    pub fn total(&self, tape: &'t Tape, w: &LossWeights) -> Var<'t> {
        tape.lin(
            &[
                (self.dense, w.dense),
                (self.keypoint, w.keypoint),
                (self.scale, w.scale),
                (self.joint, w.joint),
                (self.det, w.det),
            ],
            0.0,
        )
    }
}

/// Keypoint term value plus a flag raised when no keypoint was visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointLoss {
    pub value: f64,
    pub all_invisible: bool,
}

/// Mean squared image distance over the dense correspondences.
pub fn dense_term<'t>(
    tape: &'t Tape,
    template: &BodyTemplate,
    model: &TapeModel<'t>,
    ann: &SampleAnnotation,
) -> Result<Var<'t>> {
    if ann.dense.is_empty() {
        return Err(contract!("dense correspondence list is empty"));
    }
    let mut projected: Vec<Option<[Var<'t>; 2]>> = vec![None; template.vertex_count()];
    let mut residuals = Vec::with_capacity(ann.dense.len());
    for c in &ann.dense {
        if c.vertex >= projected.len() {
            return Err(contract!("correspondence references vertex {} of {}", c.vertex, projected.len()));
        }
        let q = *projected[c.vertex].get_or_insert_with(|| model.vertex_image(tape, template, c.vertex));
        let d = [q[0] - c.point[0], q[1] - c.point[1]];
        residuals.push(tape.dot(&d, &d));
    }
    Ok(tape.mean(&residuals))
}

/// 2D keypoint MSE plus root-centered depth MSE against `gan_depths`.
pub fn keypoint_term<'t>(
    tape: &'t Tape,
    template: &BodyTemplate,
    model: &TapeModel<'t>,
    ann: &SampleAnnotation,
) -> Result<(Var<'t>, bool)> {
    if !ann.keypoints.is_empty() && ann.keypoints.len() != template.keypoint_joints().len() {
        return Err(contract!("expected {} keypoints, got {}", template.keypoint_joints().len(), ann.keypoints.len()));
    }
    let joints = template.keypoint_joints();
    let mut planar = Vec::new();
    let mut depth = Vec::new();
    let root = ann.gan_depths.as_ref().map(|_| model.joint_depth(tape, template.root()));
    for (k, kp) in ann.keypoints.iter().enumerate() {
        if !kp.visible {
            continue;
        }
        let q = model.joint_image(tape, joints[k]);
        let d = [q[0] - kp.position[0], q[1] - kp.position[1]];
        planar.push(tape.dot(&d, &d));
        if let (Some(z), Some(root)) = (&ann.gan_depths, root) {
            let dz = model.joint_depth(tape, joints[k]) - root - z[k];
            depth.push(dz * dz);
        }
    }
    if planar.is_empty() {
        return Ok((tape.constant(0.0), true));
    }
    let mut value = tape.mean(&planar);
    if !depth.is_empty() {
        value = value + tape.mean(&depth);
    }
    Ok((value, false))
}

/// `Σ (S_a − S_b)²` over unordered adjacent segment pairs.
pub fn scale_term<'t>(tape: &'t Tape, template: &BodyTemplate, scales: &[Var<'t>]) -> Var<'t> {
    let diffs: Vec<Var<'t>> = template.adjacent_pairs().iter().map(|&(a, b)| scales[a] - scales[b]).collect();
    if diffs.is_empty() {
        return tape.constant(0.0);
    }
    tape.dot(&diffs, &diffs)
}

/// `Σ ‖a_j‖² + Σ_hinges exp(a_j · axis_j)²`.
pub fn joint_term<'t>(tape: &'t Tape, template: &BodyTemplate, pose: &[V3<'t>]) -> Var<'t> {
    let flat: Vec<Var<'t>> = pose.iter().flatten().copied().collect();
    let mut terms = vec![tape.dot(&flat, &flat)];
    for h in template.hinges() {
        let a = pose[h.joint];
        let twice = tape.lin(&[(a[0], 2.0 * h.axis[0]), (a[1], 2.0 * h.axis[1]), (a[2], 2.0 * h.axis[2])], 0.0);
        terms.push(twice.exp());
    }
    tape.sum(&terms)
}

/// `exp(−det R)` on the stored matrix; fails when `R` cannot be orthonormalized.
pub fn det_term<'t>(tape: &'t Tape, rotation_raw: &M3<'t>) -> Result<Var<'t>> {
    gram_schmidt(&mat3::values(rotation_raw))?;
    Ok((-mat3::det(tape, rotation_raw)).exp())
}

/// All five terms for the 108 flat parameter variables `x`.
pub fn regist_terms<'t>(
    tape: &'t Tape,
    template: &BodyTemplate,
    x: &[Var<'t>],
    ann: &SampleAnnotation,
) -> Result<(LossTerms<Var<'t>>, bool)> {
    let model = TapeModel::from_params(tape, template, x)?;
    let dense = dense_term(tape, template, &model, ann)?;
    let (keypoint, all_invisible) = keypoint_term(tape, template, &model, ann)?;
    let terms = LossTerms {
        dense,
        keypoint,
        scale: scale_term(tape, template, scale_vars(x)),
        joint: joint_term(tape, template, &pose_vars(x)),
        det: det_term(tape, &rotation_vars(x))?,
    };
    Ok((terms, all_invisible))
}

fn model_eval<T>(
    params: &BodyParams,
    template: &BodyTemplate,
    f: impl for<'t> FnOnce(&'t Tape, TapeModel<'t>) -> Result<T>,
) -> Result<T> {
    let tape = Tape::new();
    let x = tape.vars(&params.to_vec());
    let model = TapeModel::from_params(&tape, template, &x)?;
    f(&tape, model)
}

pub fn dense_loss(params: &BodyParams, template: &BodyTemplate, ann: &SampleAnnotation) -> Result<f64> {
    model_eval(params, template, |tape, m| Ok(dense_term(tape, template, &m, ann)?.value()))
}

pub fn keypoint_loss(params: &BodyParams, template: &BodyTemplate, ann: &SampleAnnotation) -> Result<KeypointLoss> {
    model_eval(params, template, |tape, m| {
        let (v, all_invisible) = keypoint_term(tape, template, &m, ann)?;
        Ok(KeypointLoss { value: v.value(), all_invisible })
    })
}

pub fn scale_smoothness_loss(scales: &[f64; NUM_JOINTS], template: &BodyTemplate) -> f64 {
    template.adjacent_pairs().iter().map(|&(a, b)| (scales[a] - scales[b]) * (scales[a] - scales[b])).sum()
}

pub fn joint_loss(pose: &[Vec3; NUM_JOINTS], template: &BodyTemplate) -> f64 {
    let smooth: f64 = pose.iter().map(|a| geom::dot(*a, *a)).sum();
    let limit: f64 = template.hinges().iter().map(|h| libm::exp(2.0 * geom::dot(pose[h.joint], h.axis))).sum();
    smooth + limit
}

pub fn det_loss(rotation_raw: &Mat3) -> Result<f64> {
    gram_schmidt(rotation_raw)?;
    Ok(libm::exp(-geom::det(rotation_raw)))
}

/// Every term at `params`, plus the all-invisible keypoint flag.
pub fn regist_loss(params: &BodyParams, template: &BodyTemplate, ann: &SampleAnnotation) -> Result<(LossTerms, bool)> {
    let tape = Tape::new();
    let x = tape.vars(&params.to_vec());
    let (terms, flag) = regist_terms(&tape, template, &x, ann)?;
    Ok((terms.values(), flag))
}
