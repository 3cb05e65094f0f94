//! Adversarial 2D→3D keypoint lifter with bone-ratio and symmetry priors.
//!
//! A generator maps a root-centered, trunk-normalized 2D pose to per-keypoint
//! depths. The lifted pose is turned about the vertical axis, projected back
//! to 2D and judged by a discriminator trained on real 2D poses.

mod losses;
mod train;

pub use losses::{
    adv_losses, generator_objective, geometric_losses, geometric_terms, AdvLosses, GenObjective, GeoLosses,
};
pub use train::{train_prior, PriorConfig, PriorHistory, PriorStep, ViewSweep, DEFAULT_VIEWS_DEG};

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::body::BodyTemplate;
use crate::error::{contract, Error, Result};
use crate::geom;
use crate::nn::{Mlp, Output};
use crate::regist::Keypoint;

/// Root-centered 2D keypoints scaled to unit trunk length.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Pose2D {
    pub points: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl Pose2D {
    /// Normalize image-space keypoints; invisible entries are zeroed.
    ///
    /// Returns the pose and the image-space trunk length used as the unit.
    pub fn normalize(points: &[[f64; 2]], visible: &[bool], stats: &SkeletonStats) -> Result<(Self, f64)> {
        let n = stats.keypoints;
        if points.len() != n || visible.len() != n {
            return Err(contract!("expected {n} keypoints, got {} points and {} flags", points.len(), visible.len()));
        }
        if !visible[stats.root] || !visible[stats.neck] {
            return Err(Error::DegeneratePose("root or neck keypoint is not visible".into()));
        }
        let o = points[stats.root];
        let d = [points[stats.neck][0] - o[0], points[stats.neck][1] - o[1]];
        let trunk = libm::sqrt(d[0] * d[0] + d[1] * d[1]);
        if !(trunk >= 1e-9) {
            return Err(Error::DegeneratePose(alloc::format!("2D trunk length {trunk:e}")));
        }
        let points = points
            .iter()
            .zip(visible)
            .map(|(p, &v)| if v { [(p[0] - o[0]) / trunk, (p[1] - o[1]) / trunk] } else { [0.0; 2] })
            .collect();
        Ok((Self { points, visible: visible.to_vec() }, trunk))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn all_visible(&self) -> bool {
        self.visible.iter().all(|&v| v)
    }

    /// `[x0, y0, x1, y1, …]`, the generator input layout.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| *p).collect()
    }
}

/// Keypoint-level skeleton: bones, canonical ratios and symmetric bone pairs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SkeletonStats {
    pub keypoints: usize,
    pub root: usize,
    /// Far end of the trunk, measured from `root`.
    pub neck: usize,
    /// `(parent, child)` keypoint pairs.
    pub bones: Vec<(usize, usize)>,
    /// Canonical `l_e / l_trunk` per bone.
    pub ratios: Vec<f64>,
    /// Pairs of indices into `bones` expected to have equal length.
    pub symmetry: Vec<(usize, usize)>,
}

impl SkeletonStats {
    pub fn new(
        keypoints: usize,
        root: usize,
        neck: usize,
        bones: Vec<(usize, usize)>,
        ratios: Vec<f64>,
        symmetry: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let stats = Self { keypoints, root, neck, bones, ratios, symmetry };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.keypoints;
        if self.root >= n || self.neck >= n || self.root == self.neck {
            return Err(contract!("root {} and neck {} must be distinct keypoints below {n}", self.root, self.neck));
        }
        if self.bones.len() != self.ratios.len() {
            return Err(contract!("{} bones but {} ratios", self.bones.len(), self.ratios.len()));
        }
        if self.bones.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
            return Err(contract!("bone endpoint out of range"));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(contract!("bone ratios must be positive"));
        }
        if self.symmetry.iter().any(|&(a, b)| a >= self.bones.len() || b >= self.bones.len()) {
            return Err(contract!("symmetry pair refers to a missing bone"));
        }
        Ok(())
    }

    /// Statistics of the rest template restricted to its keypoint joints.
    ///
    /// Each keypoint is attached to its nearest ancestor that is itself a
    /// keypoint; the trunk runs from the root joint to the template's trunk joint.
    pub fn from_template(template: &BodyTemplate) -> Result<Self> {
        let joints = template.keypoint_joints();
        let kp_of = |j: usize| joints.iter().position(|&k| k == j);
        let root = kp_of(template.root()).ok_or_else(|| contract!("root joint is not a keypoint"))?;
        let neck = kp_of(template.trunk_bone()).ok_or_else(|| contract!("trunk joint is not a keypoint"))?;
        let rest = template.rest_joints();
        let trunk = geom::norm(geom::sub(rest[joints[neck]], rest[joints[root]]));
        let mut bones = Vec::new();
        let mut ratios = Vec::new();
        for (child, &j) in joints.iter().enumerate() {
            let mut a = template.parent(j);
            while let Some(p) = a {
                if let Some(parent) = kp_of(p) {
                    bones.push((parent, child));
                    ratios.push(geom::norm(geom::sub(rest[j], rest[p])) / trunk);
                    break;
                }
                a = template.parent(p);
            }
        }
        let bone_of = |j: usize| bones.iter().position(|&(_, c)| joints[c] == j);
        let symmetry = template
            .symmetry_pairs()
            .iter()
            .filter_map(|&(l, r)| Some((bone_of(l)?, bone_of(r)?)))
            .collect();
        Self::new(joints.len(), root, neck, bones, ratios, symmetry)
    }
}

/// Generator, discriminator and the skeleton they are trained for.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PosePrior {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub stats: SkeletonStats,
}

impl PosePrior {
    /// Freshly initialized networks with `layers` affine layers of width `hidden`.
    pub fn new(stats: SkeletonStats, hidden: usize, layers: usize, seed: u64) -> Result<Self> {
        stats.validate()?;
        let n = stats.keypoints;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = Mlp::uniform_depth(2 * n, hidden, n, layers, Output::Linear, &mut rng)?;
        let discriminator = Mlp::uniform_depth(2 * n, hidden, 1, layers, Output::Logistic, &mut rng)?;
        Ok(Self { generator, discriminator, stats })
    }

    pub fn validate(&self) -> Result<()> {
        self.stats.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        let n = self.stats.keypoints;
        let g = &self.generator;
        let d = &self.discriminator;
        if g.input_dim() != 2 * n || g.output_dim() != n || d.input_dim() != 2 * n || d.output_dim() != 1 {
            return Err(contract!("network shapes do not match {n} keypoints"));
        }
        Ok(())
    }

    pub fn lift(&self, u: &Pose2D) -> Result<Vec<f64>> {
        generate_depths(&self.generator, u)
    }

    /// Root-relative keypoint depths in pixels for an image-space annotation.
    ///
    /// `None` when some keypoint is hidden; the generator only sees complete poses.
    pub fn lift_keypoints(&self, keypoints: &[Keypoint]) -> Result<Option<Vec<f64>>> {
        if keypoints.iter().any(|k| !k.visible) {
            return Ok(None);
        }
        let points: Vec<[f64; 2]> = keypoints.iter().map(|k| k.position).collect();
        let (u, trunk) = Pose2D::normalize(&points, &vec![true; points.len()], &self.stats)?;
        let z = self.lift(&u)?;
        let root = z[self.stats.root];
        Ok(Some(z.iter().map(|d| (d - root) * trunk).collect()))
    }
}

/// `G(flatten(u))`.
pub fn generate_depths(g: &Mlp, u: &Pose2D) -> Result<Vec<f64>> {
    if g.input_dim() != 2 * u.len() || g.output_dim() != u.len() {
        return Err(contract!("generator shape does not match a {}-keypoint pose", u.len()));
    }
    g.forward(&u.flatten(), 1)
}

/// Batched [`generate_depths`], one row of depths per pose.
pub fn generate_depths_batch(g: &Mlp, poses: &[Pose2D]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = poses.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    if poses.iter().any(|p| p.len() != n) || g.input_dim() != 2 * n || g.output_dim() != n {
        return Err(contract!("generator shape does not match the pose batch"));
    }
    let x: Vec<f64> = poses.iter().flat_map(Pose2D::flatten).collect();
    Ok(g.forward(&x, poses.len())?.chunks_exact(n).map(<[f64]>::to_vec).collect())
}

/// Turn the lifted pose by `phi` about the vertical axis and drop depth.
pub fn rotate_project(u: &Pose2D, z: &[f64], phi: f64) -> Vec<[f64; 2]> {
    if phi == 0.0 {
        return u.points.clone();
    }
    let (s, c) = (libm::sin(phi), libm::cos(phi));
    u.points.iter().zip(z).map(|(p, &d)| [p[0] * c + d * s, p[1]]).collect()
}

/// Fraction of keypoints whose lifted depth has the sign of the true one.
///
/// Depths are taken relative to the root; keypoints with `|z_true − z_true[root]|`
/// below `min_depth` are skipped. Returns `None` when nothing qualifies.
pub fn depth_sign_accuracy(pred: &[Vec<f64>], truth: &[Vec<f64>], root: usize, min_depth: f64) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..t.len() {
            let dt = t[k] - t[root];
            if k == root || dt.abs() < min_depth {
                continue;
            }
            total += 1;
            if (p[k] - p[root]) * dt > 0.0 {
                hit += 1;
            }
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::humanoid::{humanoid, HumanoidSpec};

    fn stats() -> SkeletonStats {
        SkeletonStats::from_template(&humanoid(HumanoidSpec::default()).unwrap()).unwrap()
    }

    #[test]
    fn template_stats_shape() {
        let s = stats();
        assert_eq!(s.keypoints, 16);
        assert_eq!(s.bones.len(), 15);
        assert_eq!(s.symmetry.len(), 6);
        assert!(s.ratios.iter().all(|&r| r > 0.0));
        for &(a, b) in &s.symmetry {
            assert!((s.ratios[a] - s.ratios[b]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_centers_and_scales() {
        let s = stats();
        let pts: Vec<[f64; 2]> = (0..16).map(|k| [3.0 * k as f64, 100.0 - 7.0 * k as f64]).collect();
        let (u, trunk) = Pose2D::normalize(&pts, &[true; 16], &s).unwrap();
        assert_eq!(u.points[s.root], [0.0, 0.0]);
        let n = u.points[s.neck];
        assert!((libm::sqrt(n[0] * n[0] + n[1] * n[1]) - 1.0).abs() < 1e-12);
        assert!(trunk > 0.0);
        let flat = vec![[5.0, 5.0]; 16];
        assert!(matches!(Pose2D::normalize(&flat, &[true; 16], &s), Err(Error::DegeneratePose(_))));
    }

    #[test]
    fn rotate_project_cases() {
        let u = Pose2D { points: vec![[0.3, -0.7], [1.0, 2.0]], visible: vec![true; 2] };
        let z = [0.25, -1.5];
        assert_eq!(rotate_project(&u, &z, 0.0), u.points);
        let q = rotate_project(&u, &z, core::f64::consts::FRAC_PI_2);
        for k in 0..2 {
            assert!((q[k][0] - z[k]).abs() < 1e-15 && q[k][1] == u.points[k][1]);
        }
        let h = rotate_project(&u, &z, core::f64::consts::PI);
        for k in 0..2 {
            assert!((h[k][0] + u.points[k][0]).abs() < 1e-15);
        }
        let planar = rotate_project(&u, &[0.0, 0.0], 0.8);
        for k in 0..2 {
            assert_eq!(planar[k][0], u.points[k][0] * libm::cos(0.8));
        }
    }

    #[test]
    fn zero_generator_outputs_bias() {
        let s = stats();
        let mut p = PosePrior::new(s, 8, 3, 1).unwrap();
        let len = p.generator.params().len();
        let mut w = vec![0.0; len];
        let bias_at = len - 16;
        w[bias_at..].iter_mut().for_each(|b| *b = 0.5);
        p.generator.set_params(&w).unwrap();
        let u = Pose2D { points: vec![[0.1, 0.2]; 16], visible: vec![true; 16] };
        assert_eq!(p.lift(&u).unwrap(), vec![0.5; 16]);
    }

    #[test]
    fn sign_accuracy_counts() {
        let t = vec![vec![0.0, 1.0, -1.0, 0.01]];
        let p = vec![vec![0.0, 2.0, 3.0, -5.0]];
        assert_eq!(depth_sign_accuracy(&p, &t, 0, 0.1), Some(0.5));
        assert_eq!(depth_sign_accuracy(&p, &t, 0, 10.0), None);
    }
}
