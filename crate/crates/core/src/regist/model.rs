//! Body and camera parameters recorded on a tape.

use alloc::vec::Vec;

use crate::body::kinematics::{forward_kinematics_axis_angle, forward_kinematics_tape, skin_vertex_tape, TapeSkeleton};
use crate::body::params::{POSE_AT, ROTATION_AT, SCALES_AT, SCALE_AT, TRANSLATION_AT};
use crate::body::{BodyTemplate, NUM_JOINTS, PARAM_COUNT};
use crate::camera::TapeCamera;
use crate::diff::mat3::{M3, V3};
use crate::diff::{Tape, Var};
use crate::error::{contract, Result};

/// Posed skeleton plus camera; vertices are skinned on demand.
pub struct TapeModel<'t> {
    pub skeleton: TapeSkeleton<'t>,
    pub camera: TapeCamera<'t>,
}

pub fn pose_vars<'t>(x: &[Var<'t>]) -> Vec<V3<'t>> {
    (0..NUM_JOINTS).map(|j| core::array::from_fn(|c| x[POSE_AT + 3 * j + c])).collect()
}

pub fn scale_vars<'a, 't>(x: &'a [Var<'t>]) -> &'a [Var<'t>] {
    &x[SCALES_AT..SCALES_AT + NUM_JOINTS]
}

pub fn rotation_vars<'t>(x: &[Var<'t>]) -> M3<'t> {
    core::array::from_fn(|i| core::array::from_fn(|j| x[ROTATION_AT + 3 * i + j]))
}

impl<'t> TapeModel<'t> {
    /// From the 108-entry flat parameter layout of [`crate::body::BodyParams`].
    pub fn from_params(tape: &'t Tape, template: &BodyTemplate, x: &[Var<'t>]) -> Result<Self> {
        if x.len() != PARAM_COUNT {
            return Err(contract!("expected {PARAM_COUNT} parameters, got {}", x.len()));
        }
        let skeleton = forward_kinematics_axis_angle(tape, template, &pose_vars(x), scale_vars(x))?;
        let camera = TapeCamera::new(tape, &rotation_vars(x), x[SCALE_AT], [x[TRANSLATION_AT], x[TRANSLATION_AT + 1]])?;
        Ok(Self { skeleton, camera })
    }

    /// From per-joint local rotation matrices.
    pub fn from_local(
        tape: &'t Tape,
        template: &BodyTemplate,
        local: &[M3<'t>],
        scales: &[Var<'t>],
        rotation_raw: &M3<'t>,
        scale: Var<'t>,
        translation: [Var<'t>; 2],
    ) -> Result<Self> {
        let skeleton = forward_kinematics_tape(tape, template, local, scales)?;
        let camera = TapeCamera::new(tape, rotation_raw, scale, translation)?;
        Ok(Self { skeleton, camera })
    }

    pub fn joint_image(&self, tape: &'t Tape, j: usize) -> [Var<'t>; 2] {
        self.camera.project(tape, &self.skeleton.joints[j])
    }

    /// `s · (R J_j)_z`.
    pub fn joint_depth(&self, tape: &'t Tape, j: usize) -> Var<'t> {
        self.camera.depth(tape, &self.skeleton.joints[j])
    }

    pub fn vertex_image(&self, tape: &'t Tape, template: &BodyTemplate, v: usize) -> [Var<'t>; 2] {
        let p = skin_vertex_tape(tape, template, &self.skeleton, v);
        self.camera.project(tape, &p)
    }
}
