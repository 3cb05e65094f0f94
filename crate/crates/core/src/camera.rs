//! Weak-perspective camera: `x = s · Π(R p) + t` with `R` orthonormalized by Gram-Schmidt.
//!
//! Image convention: x right, y down, origin at the crop's top-left corner;
//! the camera looks along +z.

use crate::diff::mat3::{self, M3, V3};
use crate::diff::{Tape, Var};
use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};

/// Classical Gram-Schmidt on the columns of `m`.
///
/// Orientation is preserved, so `det` of the result carries the sign of `det(m)`.
pub fn gram_schmidt(m: &Mat3) -> Result<Mat3> {
    let mut q = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut c = [m[0][j], m[1][j], m[2][j]];
        for prev in q.iter().take(j) {
            let proj = geom::dot(*prev, c);
            c = geom::sub(c, geom::scale(*prev, proj));
        }
        let n = geom::norm(c);
        if !(n >= 1e-10) {
            return Err(Error::DegenerateRotation { column: j, norm: n });
        }
        q[j] = geom::scale(c, 1.0 / n);
    }
    Ok(geom::transpose(&q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakPerspectiveCamera {
    pub rotation_raw: Mat3,
    pub scale: f64,
    pub translation: [f64; 2],
}

impl WeakPerspectiveCamera {
    pub fn rotation(&self) -> Result<Mat3> {
        gram_schmidt(&self.rotation_raw)
    }

    /// Rotated (camera-frame) point, before scaling and projection.
    pub fn to_camera(&self, p: Vec3) -> Result<Vec3> {
        Ok(geom::matvec(&self.rotation()?, p))
    }

    pub fn project(&self, points: &[Vec3]) -> Result<alloc::vec::Vec<[f64; 2]>> {
        let r = self.rotation()?;
        Ok(points.iter().map(|&p| project_with(&r, self.scale, self.translation, p)).collect())
    }
}

/// Projection with an already orthonormal rotation.
pub fn project_with(rotation: &Mat3, scale: f64, translation: [f64; 2], p: Vec3) -> [f64; 2] {
    let q = geom::matvec(rotation, p);
    [scale * q[0] + translation[0], scale * q[1] + translation[1]]
}

/// Camera parameters recorded on a tape, with the rotation already orthonormalized.
#[derive(Clone, Copy)]
pub struct TapeCamera<'t> {
    pub rotation: M3<'t>,
    pub scale: Var<'t>,
    pub translation: [Var<'t>; 2],
}

impl<'t> TapeCamera<'t> {
    pub fn new(tape: &'t Tape, rotation_raw: &M3<'t>, scale: Var<'t>, translation: [Var<'t>; 2]) -> Result<Self> {
        Ok(Self { rotation: mat3::gram_schmidt(tape, rotation_raw)?, scale, translation })
    }

    /// Image point of a model-space point.
    pub fn project(&self, tape: &'t Tape, p: &V3<'t>) -> [Var<'t>; 2] {
        core::array::from_fn(|c| {
            let rotated = tape.dot(&self.rotation[c], p);
            rotated * self.scale + self.translation[c]
        })
    }

    /// Camera-frame depth scaled like the image coordinates (`s · (R p)_z`).
    pub fn depth(&self, tape: &'t Tape, p: &V3<'t>) -> Var<'t> {
        tape.dot(&self.rotation[2], p) * self.scale
    }
}
