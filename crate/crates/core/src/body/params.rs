use alloc::vec::Vec;

use super::template::NUM_JOINTS;
use crate::error::{contract, Result};
use crate::geom::{Mat3, Vec3, IDENTITY};

/// Number of scalars in a [`BodyParams`] vector.
pub const PARAM_COUNT: usize = 108;

pub(crate) const POSE_AT: usize = 0;
pub(crate) const SCALES_AT: usize = 72;
pub(crate) const ROTATION_AT: usize = 96;
pub(crate) const SCALE_AT: usize = 105;
pub(crate) const TRANSLATION_AT: usize = 106;

/// Body parameters: joint axis-angles, segment scales and a weak-perspective camera.
///
/// `rotation` is stored unconstrained and orthonormalized on use.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BodyParams {
    pub pose: [Vec3; NUM_JOINTS],
    pub scales: [f64; NUM_JOINTS],
    pub rotation: Mat3,
    pub scale: f64,
    pub translation: [f64; 2],
}

impl BodyParams {
    /// Zero pose, unit scales, identity rotation.
    pub fn t_pose(scale: f64, translation: [f64; 2]) -> Self {
        Self { pose: [[0.0; 3]; NUM_JOINTS], scales: [1.0; NUM_JOINTS], rotation: IDENTITY, scale, translation }
    }

    /// Flatten as `[a (72), S (24), R row-major (9), s, t (2)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_COUNT);
        v.extend(self.pose.iter().flatten());
        v.extend(self.scales.iter());
        v.extend(self.rotation.iter().flatten());
        v.push(self.scale);
        v.extend(self.translation.iter());
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != PARAM_COUNT {
            return Err(contract!("body parameter vector has {} entries, expected {PARAM_COUNT}", v.len()));
        }
        Ok(Self {
            pose: core::array::from_fn(|j| core::array::from_fn(|c| v[POSE_AT + 3 * j + c])),
            scales: core::array::from_fn(|j| v[SCALES_AT + j]),
            rotation: core::array::from_fn(|i| core::array::from_fn(|c| v[ROTATION_AT + 3 * i + c])),
            scale: v[SCALE_AT],
            translation: [v[TRANSLATION_AT], v[TRANSLATION_AT + 1]],
        })
    }

    /// Copy with `rotation` replaced by its Gram-Schmidt orthonormalization.
    pub fn orthonormalized(&self) -> Result<Self> {
        let mut out = self.clone();
        out.rotation = crate::camera::gram_schmidt(&self.rotation)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_layout_has_108_entries() {
        let p = BodyParams::t_pose(2.0, [3.0, 4.0]);
        let v = p.to_vec();
        assert_eq!(v.len(), PARAM_COUNT);
        assert_eq!(v[SCALE_AT], 2.0);
        assert_eq!(&v[TRANSLATION_AT..], &[3.0, 4.0]);
        assert_eq!(BodyParams::from_slice(&v).unwrap(), p);
        assert!(BodyParams::from_slice(&v[1..]).is_err());
    }
}
