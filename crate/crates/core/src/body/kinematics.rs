//! Forward kinematics and linear blend skinning, in plain `f64` and on a tape.
//!
//! Joint `j` composes as `T_j = T_parent ∘ translate(S_j · offset_j) ∘ rot(a_j)`;
//! the root uses the identity as parent. Skinning applies
//! `Σ_j w_ij (T_j ∘ T_j^rest⁻¹)` to each rest vertex, where the rest transforms
//! are pure translations to the rest joint positions.

use alloc::vec::Vec;

use super::template::{BodyTemplate, NUM_JOINTS};
use crate::diff::mat3::{self, M3, V3};
use crate::diff::{Tape, Var};
use crate::error::{contract, Result};
use crate::geom::{self, Mat3, Vec3, IDENTITY};

/// World transform of one joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

/// A posed body in model coordinates (before the camera).
#[derive(Debug, Clone, PartialEq)]
pub struct PosedBody {
    pub joint_world: Vec<Vec3>,
    pub vertex_world: Vec<Vec3>,
    pub joint_transforms: Vec<JointTransform>,
}

fn check_scales(scales: impl IntoIterator<Item = f64>) -> Result<()> {
    for (j, s) in scales.into_iter().enumerate() {
        if !(s > 0.0) {
            return Err(contract!("segment scale {j} must be positive, got {s}"));
        }
    }
    Ok(())
}

pub fn forward_kinematics(
    template: &BodyTemplate,
    pose: &[Vec3; NUM_JOINTS],
    scales: &[f64; NUM_JOINTS],
) -> Result<Vec<JointTransform>> {
    check_scales(scales.iter().copied())?;
    let identity = JointTransform { rotation: IDENTITY, translation: [0.0; 3] };
    let mut out = alloc::vec![identity; NUM_JOINTS];
    for &j in template.order() {
        let parent = template.parent(j).map_or(identity, |p| out[p]);
        let offset = geom::scale(template.rest_offset(j), scales[j]);
        let local = geom::axis_angle_to_matrix(pose[j]);
        out[j] = JointTransform {
            rotation: geom::matmul(&parent.rotation, &local),
            translation: geom::add(parent.translation, geom::matvec(&parent.rotation, offset)),
        };
    }
    Ok(out)
}

pub fn skin_vertex(template: &BodyTemplate, transforms: &[JointTransform], vertex: usize) -> Vec3 {
    // accumulate displacements so the rest pose reproduces the template bit for bit
    let rest = template.vertices()[vertex];
    let mut out = rest;
    for &(j, w) in template.skin_weights(vertex) {
        let t = &transforms[j];
        let local = geom::sub(rest, template.rest_joints()[j]);
        let mut r = t.rotation;
        for (c, row) in r.iter_mut().enumerate() {
            row[c] -= 1.0;
        }
        let shift = geom::sub(t.translation, template.rest_joints()[j]);
        let disp = geom::add(geom::matvec(&r, local), shift);
        out = geom::add(out, geom::scale(disp, w));
    }
    out
}

pub fn skin(template: &BodyTemplate, transforms: &[JointTransform]) -> Vec<Vec3> {
    (0..template.vertex_count()).map(|i| skin_vertex(template, transforms, i)).collect()
}

pub fn pose_body(template: &BodyTemplate, pose: &[Vec3; NUM_JOINTS], scales: &[f64; NUM_JOINTS]) -> Result<PosedBody> {
    let joint_transforms = forward_kinematics(template, pose, scales)?;
    let vertex_world = skin(template, &joint_transforms);
    let joint_world = joint_transforms.iter().map(|t| t.translation).collect();
    Ok(PosedBody { joint_world, vertex_world, joint_transforms })
}

/// Area-weighted vertex normals of a mesh.
pub fn vertex_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut normals = alloc::vec![[0.0; 3]; vertices.len()];
    for f in faces {
        let n = geom::cross(geom::sub(vertices[f[1]], vertices[f[0]]), geom::sub(vertices[f[2]], vertices[f[0]]));
        for &i in f {
            normals[i] = geom::add(normals[i], n);
        }
    }
    for n in &mut normals {
        let len = geom::norm(*n);
        if len > 0.0 {
            *n = geom::scale(*n, 1.0 / len);
        }
    }
    normals
}

/// Joint rotations and positions recorded on a tape.
pub struct TapeSkeleton<'t> {
    pub rotations: Vec<M3<'t>>,
    pub joints: Vec<V3<'t>>,
}

/// Forward kinematics from per-joint local rotation matrices.
pub fn forward_kinematics_tape<'t>(
    tape: &'t Tape,
    template: &BodyTemplate,
    local: &[M3<'t>],
    scales: &[Var<'t>],
) -> Result<TapeSkeleton<'t>> {
    check_scales(scales.iter().map(|s| s.value()))?;
    if local.len() != NUM_JOINTS || scales.len() != NUM_JOINTS {
        return Err(contract!("forward kinematics needs {NUM_JOINTS} rotations and scales"));
    }
    let zero = tape.constant(0.0);
    let mut rotations: Vec<M3<'t>> = alloc::vec![[[zero; 3]; 3]; NUM_JOINTS];
    let mut joints: Vec<V3<'t>> = alloc::vec![[zero; 3]; NUM_JOINTS];
    for &j in template.order() {
        let off = template.rest_offset(j);
        match template.parent(j) {
            None => {
                rotations[j] = local[j];
                joints[j] = off.map(|o| scales[j] * o);
            }
            Some(p) => {
                rotations[j] = mat3::matmul(tape, &rotations[p], &local[j]);
                let arm = mat3::matvec_const(tape, &rotations[p], off);
                joints[j] = core::array::from_fn(|c| joints[p][c] + scales[j] * arm[c]);
            }
        }
    }
    Ok(TapeSkeleton { rotations, joints })
}

/// Axis-angle convenience wrapper over [`forward_kinematics_tape`].
pub fn forward_kinematics_axis_angle<'t>(
    tape: &'t Tape,
    template: &BodyTemplate,
    pose: &[V3<'t>],
    scales: &[Var<'t>],
) -> Result<TapeSkeleton<'t>> {
    let local: Vec<M3<'t>> = pose.iter().map(|a| mat3::rodrigues(tape, *a)).collect();
    forward_kinematics_tape(tape, template, &local, scales)
}

/// One skinned vertex as a single fused node per coordinate.
pub fn skin_vertex_tape<'t>(tape: &'t Tape, template: &BodyTemplate, skeleton: &TapeSkeleton<'t>, vertex: usize) -> V3<'t> {
    let rest = template.vertices()[vertex];
    let weights = template.skin_weights(vertex);
    core::array::from_fn(|c| {
        let mut terms = Vec::with_capacity(weights.len() * 4);
        for &(j, w) in weights {
            let local = geom::sub(rest, template.rest_joints()[j]);
            let r = &skeleton.rotations[j];
            terms.push((r[c][0], w * local[0]));
            terms.push((r[c][1], w * local[1]));
            terms.push((r[c][2], w * local[2]));
            terms.push((skeleton.joints[j][c], w));
        }
        tape.lin(&terms, 0.0)
    })
}
