//! Deform-and-learn: alternate per-sample registration with training a
//! parameter regressor on the registered parameters.

mod alternate;
mod regressor;

pub use alternate::{
    deform_learn_loop, refine, refine_config, run_round, DeformConfig, DeformData, Registrar, RoundRecord,
    SerialRegistrar, ThetaStore, TrainState,
};
pub use regressor::{
    conv_terms, features, frame_targets, train_regressor, ConvLoss, FeatureSpec, Regressor, RegressorConfig, RegressorHistory,
    FEATURE_DIM,
};

use alloc::vec::Vec;

use crate::body::{BodyParams, NUM_JOINTS};
use crate::error::{contract, Result};
use crate::geom;

/// Quaternions (4 per joint), segment scales, raw camera matrix, scale, translation.
pub const REGRESSOR_DIM: usize = 4 * NUM_JOINTS + NUM_JOINTS + 9 + 1 + 2;

pub(crate) const QUAT_AT: usize = 0;
pub(crate) const S_AT: usize = 4 * NUM_JOINTS;
pub(crate) const R_AT: usize = S_AT + NUM_JOINTS;
pub(crate) const SCALE_AT: usize = R_AT + 9;
pub(crate) const T_AT: usize = SCALE_AT + 1;

/// Axis-angles become canonical unit quaternions; everything else is copied.
pub fn to_regressor_space(p: &BodyParams) -> Vec<f64> {
    let mut v = Vec::with_capacity(REGRESSOR_DIM);
    for a in &p.pose {
        v.extend(geom::canonical_quaternion(geom::axis_angle_to_quaternion(*a)));
    }
    v.extend(p.scales);
    v.extend(p.rotation.iter().flatten());
    v.push(p.scale);
    v.extend(p.translation);
    v
}

/// Inverse of [`to_regressor_space`]; quaternions are normalized and the
/// camera matrix orthonormalized.
pub fn from_regressor_space(v: &[f64]) -> Result<BodyParams> {
    if v.len() != REGRESSOR_DIM {
        return Err(contract!("regressor vector has {} entries, expected {REGRESSOR_DIM}", v.len()));
    }
    let mut pose = [[0.0; 3]; NUM_JOINTS];
    for (j, a) in pose.iter_mut().enumerate() {
        let q: [f64; 4] = core::array::from_fn(|c| v[QUAT_AT + 4 * j + c]);
        let n = libm::sqrt(q.iter().map(|x| x * x).sum::<f64>());
        if !(n > 1e-12) {
            return Err(contract!("quaternion of joint {j} has zero norm"));
        }
        *a = geom::quaternion_to_axis_angle(q.map(|x| x / n));
    }
    let rotation = core::array::from_fn(|i| core::array::from_fn(|c| v[R_AT + 3 * i + c]));
    BodyParams {
        pose,
        scales: core::array::from_fn(|j| v[S_AT + j]),
        rotation,
        scale: v[SCALE_AT],
        translation: [v[T_AT], v[T_AT + 1]],
    }
    .orthonormalized()
}

/// Huber-style smooth L1: quadratic inside `delta`, linear outside.
pub fn smooth_l1(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        0.5 * x * x / delta
    } else {
        x.abs() - 0.5 * delta
    }
}

/// Mean smooth-L1 (knee 1) between two regressor-space vectors.
pub fn regress_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(contract!("regression vectors differ in length or are empty"));
    }
    Ok(pred.iter().zip(target).map(|(a, b)| smooth_l1(a - b, 1.0)).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tpose_maps_to_identity_quaternions() {
        let v = to_regressor_space(&BodyParams::t_pose(2.0, [1.0, 3.0]));
        assert_eq!(v.len(), 132);
        for j in 0..NUM_JOINTS {
            assert_eq!(&v[4 * j..4 * j + 4], &[1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn round_trip_recovers_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let mut p = BodyParams::t_pose(rng.random_range(0.5..2.0), [rng.random_range(-5.0..5.0), 1.0]);
            for a in &mut p.pose {
                *a = core::array::from_fn(|_| rng.random_range(-1.8..1.8));
            }
            let back = from_regressor_space(&to_regressor_space(&p)).unwrap();
            for j in 0..NUM_JOINTS {
                worst = worst.max(geom::rotation_distance(p.pose[j], back.pose[j]));
            }
            assert_eq!(back.scale, p.scale);
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        let mut v = to_regressor_space(&BodyParams::t_pose(1.0, [0.0; 2]));
        v[4..8].iter_mut().for_each(|x| *x = 0.0);
        assert!(from_regressor_space(&v).is_err());
    }

    #[test]
    fn smooth_l1_values_and_knee() {
        assert_eq!(smooth_l1(0.5, 1.0), 0.125);
        assert_eq!(smooth_l1(2.0, 1.0), 1.5);
        let h = 1e-9;
        assert!((smooth_l1(1.0 - h, 1.0) - smooth_l1(1.0 + h, 1.0)).abs() < 1e-8);
        assert_eq!(smooth_l1(1.0, 1.0), 0.5);
    }
}
