use alloc::vec::Vec;

use crate::body::{BodyTemplate, NUM_KEYPOINTS};
use crate::error::{contract, Result};

/// One image point matched to a template vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DenseCorrespondence {
    pub point: [f64; 2],
    pub vertex: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Keypoint {
    pub position: [f64; 2],
    pub visible: bool,
}

/// Per-image observations in pixel units.
///
/// `gan_depths`, when present, holds one depth per keypoint relative to the
/// template root joint, in the same pixel scale as the keypoints.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SampleAnnotation {
    pub dense: Vec<DenseCorrespondence>,
    pub keypoints: Vec<Keypoint>,
    pub gan_depths: Option<Vec<f64>>,
    pub width: f64,
    pub height: f64,
}

impl SampleAnnotation {
    pub fn validate(&self, template: &BodyTemplate) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(contract!("image size {}×{} is not positive", self.width, self.height));
        }
        let n = template.vertex_count();
        for (i, d) in self.dense.iter().enumerate() {
            if d.vertex >= n {
                return Err(contract!("dense[{i}] references vertex {} of {n}", d.vertex));
            }
            if !d.point.iter().all(|x| x.is_finite()) {
                return Err(contract!("dense[{i}] has a non-finite point"));
            }
        }
        if !self.keypoints.is_empty() && self.keypoints.len() != NUM_KEYPOINTS {
            return Err(contract!("expected {NUM_KEYPOINTS} keypoints, got {}", self.keypoints.len()));
        }
        if self.keypoints.iter().any(|k| k.visible && !k.position.iter().all(|x| x.is_finite())) {
            return Err(contract!("a visible keypoint has a non-finite position"));
        }
        if let Some(z) = &self.gan_depths {
            if z.len() != self.keypoints.len() || !z.iter().all(|x| x.is_finite()) {
                return Err(contract!("gan_depths must hold one finite depth per keypoint"));
            }
        }
        Ok(())
    }

    /// Pixel length mapped to one unit by the registration's internal frame.
    pub fn unit(&self) -> f64 {
        0.5 * self.width.max(self.height)
    }

    /// Copy with every pixel quantity multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dense: self.dense.iter().map(|d| DenseCorrespondence { point: d.point.map(|x| x * k), vertex: d.vertex }).collect(),
            keypoints: self.keypoints.iter().map(|p| Keypoint { position: p.position.map(|x| x * k), visible: p.visible }).collect(),
            gan_depths: self.gan_depths.as_ref().map(|z| z.iter().map(|x| x * k).collect()),
            width: self.width * k,
            height: self.height * k,
        }
    }

    /// Copy with every image point shifted by `d` (depths untouched).
    pub fn translated(&self, d: [f64; 2]) -> Self {
        let shift = |p: [f64; 2]| [p[0] + d[0], p[1] + d[1]];
        Self {
            dense: self.dense.iter().map(|c| DenseCorrespondence { point: shift(c.point), vertex: c.vertex }).collect(),
            keypoints: self.keypoints.iter().map(|k| Keypoint { position: shift(k.position), visible: k.visible }).collect(),
            ..self.clone()
        }
    }

    pub fn visible_keypoints(&self) -> usize {
        self.keypoints.iter().filter(|k| k.visible).count()
    }
}
