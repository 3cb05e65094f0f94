//! Image-surface registration: fit [`BodyParams`](crate::body::BodyParams) to
//! dense correspondences and keypoints by minimizing
//!
//! `ω_dense L_dense + ω_KP L_KP + ω_scale L_scale + ω_joint L_joint + ω_det L_det`
//!
//! with Adam, one independent problem per sample.

mod annotation;
mod fit;
mod loss;
pub mod model;

pub use annotation::{DenseCorrespondence, Keypoint, SampleAnnotation};
pub use fit::{register, register_one, register_sample, tpose_init, LossRecord, RegistConfig, SampleFit, MIN_SCALE};
pub use loss::{
    dense_loss, dense_term, det_loss, det_term, joint_loss, joint_term, keypoint_loss, keypoint_term, regist_loss,
    regist_terms, scale_smoothness_loss, scale_term, KeypointLoss, LossTerms, LossWeights,
};
