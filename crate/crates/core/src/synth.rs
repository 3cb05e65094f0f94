//! Seeded synthetic samples with known ground truth.
//!
//! A sample draws a bounded pose, segment scales and a weak-perspective
//! camera, skins the template, keeps the vertices whose normals face the
//! camera, and emits a random subset of them as dense correspondences
//! together with projected keypoints and oracle depths.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::body::kinematics::vertex_normals;
use crate::body::{pose_body, BodyParams, BodyTemplate, NUM_JOINTS};
use crate::camera::project_with;
use crate::error::{contract, Result};
use crate::geom::{self, Mat3, Vec3};
use crate::metrics::camera_joints;
use crate::prior::{Pose2D, SkeletonStats};
use crate::regist::{DenseCorrespondence, Keypoint, SampleAnnotation};

/// Pose distribution: ball joints uniform in a cube, hinges flexed only,
/// hips and shoulders biased toward forward flexion.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PoseFamily {
    /// Per-component bound on limb-root axis-angles (hips, shoulders).
    pub amplitude: f64,
    /// Fraction of `amplitude` allowed for spine, neck, collars and extremities.
    pub minor_fraction: f64,
    /// Upper bound of the hinge flexion angle.
    pub hinge_max: f64,
    /// Range of the forward flexion of the hips (negative values extend backward).
    pub hip_flexion: [f64; 2],
    /// Range of the forward raise of the upper arms.
    pub shoulder_flexion: [f64; 2],
}

impl Default for PoseFamily {
    fn default() -> Self {
        Self { amplitude: 0.6, minor_fraction: 0.4, hinge_max: 0.6, hip_flexion: [-0.2, 0.6], shoulder_flexion: [-0.2, 0.6] }
    }
}

/// Camera and annotation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthConfig {
    pub pose: PoseFamily,
    pub scale_range: [f64; 2],
    /// Relative per-segment deviation from the body-level scale.
    pub scale_jitter: f64,
    /// Yaw about the vertical axis is drawn from `[-yaw, yaw]` (radians).
    pub yaw: f64,
    /// Pitch and roll bound (radians).
    pub tilt: f64,
    pub image_size: f64,
    /// Rest skeleton height as a fraction of the image side.
    pub fill: f64,
    /// Number of dense correspondences; `0` keeps every visible vertex.
    pub dense_points: usize,
    /// Gaussian pixel noise on dense points and keypoints.
    pub noise_sigma: f64,
    /// Attach true root-relative depths as `gan_depths`.
    pub oracle_depths: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pose: PoseFamily::default(),
            scale_range: [0.8, 1.25],
            scale_jitter: 0.05,
            yaw: 0.5,
            tilt: 0.15,
            image_size: 224.0,
            fill: 0.6,
            dense_points: 300,
            noise_sigma: 0.0,
            oracle_depths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SynthSample {
    pub annotation: SampleAnnotation,
    pub truth: BodyParams,
}

fn is_minor(j: usize) -> bool {
    matches!(j, 3 | 6 | 9 | 12 | 13 | 14 | 15 | 10 | 11 | 20 | 21 | 22 | 23 | 7 | 8)
}

/// Draw one pose; slot 0 stays zero since the camera carries the global rotation.
pub fn sample_pose<R: Rng + ?Sized>(rng: &mut R, template: &BodyTemplate, family: &PoseFamily) -> [Vec3; NUM_JOINTS] {
    let mut pose = [[0.0; 3]; NUM_JOINTS];
    for (j, a) in pose.iter_mut().enumerate() {
        if j == template.root() {
            continue;
        }
        if let Some(h) = template.hinges().iter().find(|h| h.joint == j) {
            let flex = rng.random_range(0.0..=family.hinge_max);
            *a = geom::scale(h.axis, -flex);
            continue;
        }
        let bound = if is_minor(j) { family.amplitude * family.minor_fraction } else { family.amplitude };
        if bound > 0.0 {
            *a = core::array::from_fn(|_| rng.random_range(-bound..=bound));
        }
    }
    let range = |rng: &mut R, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    // the rest pose faces -z: hips flex forward about -x, arms raise forward about ±y
    for (j, sign) in [(1, -1.0), (2, -1.0)] {
        pose[j][0] = sign * range(rng, family.hip_flexion);
    }
    for (j, sign) in [(16, 1.0), (17, -1.0)] {
        pose[j][1] = sign * range(rng, family.shoulder_flexion);
    }
    pose
}

fn rotation_yxz(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let ry = geom::axis_angle_to_matrix([0.0, yaw, 0.0]);
    let rx = geom::axis_angle_to_matrix([pitch, 0.0, 0.0]);
    let rz = geom::axis_angle_to_matrix([0.0, 0.0, roll]);
    geom::matmul(&ry, &geom::matmul(&rx, &rz))
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

/// Ground-truth parameters for one sample.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, template: &BodyTemplate, config: &SynthConfig) -> BodyParams {
    let pose = sample_pose(rng, template, &config.pose);
    let [lo, hi] = config.scale_range;
    // body-level factor with small per-segment jitter, clipped to the range
    let base = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let jitter = config.scale_jitter;
    let scales = core::array::from_fn(|_| (base * (1.0 + symmetric(rng, jitter))).clamp(lo, hi));
    let rotation = rotation_yxz(symmetric(rng, config.yaw), symmetric(rng, config.tilt), symmetric(rng, config.tilt));
    let scale = config.fill * config.image_size / template.skeleton_height() * rng.random_range(0.9..=1.1);
    let centre = 0.5 * config.image_size;
    let translation = [centre + symmetric(rng, 0.05 * config.image_size), centre + symmetric(rng, 0.05 * config.image_size)];
    BodyParams { pose, scales, rotation, scale, translation }
}

/// Render an annotation for known parameters.
pub fn render_sample<R: Rng + ?Sized>(
    rng: &mut R,
    template: &BodyTemplate,
    truth: &BodyParams,
    config: &SynthConfig,
) -> Result<SampleAnnotation> {
    let posed = pose_body(template, &truth.pose, &truth.scales)?;
    let r = crate::camera::gram_schmidt(&truth.rotation)?;
    let normals = vertex_normals(&posed.vertex_world, template.faces());
    let visible: Vec<usize> = (0..template.vertex_count()).filter(|&v| geom::dot(r[2], normals[v]) < 0.0).collect();
    if visible.is_empty() {
        return Err(contract!("no template vertex faces the camera"));
    }
    let chosen: Vec<usize> = if config.dense_points == 0 || config.dense_points >= visible.len() {
        visible
    } else {
        let mut picks: Vec<usize> = index::sample(rng, visible.len(), config.dense_points).into_iter().map(|i| visible[i]).collect();
        picks.sort_unstable();
        picks
    };
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).map_err(|_| contract!("invalid noise sigma"))?;
    let mut jitter = |p: [f64; 2]| {
        if config.noise_sigma > 0.0 {
            [p[0] + noise.sample(rng), p[1] + noise.sample(rng)]
        } else {
            p
        }
    };
    let project = |p: Vec3| project_with(&r, truth.scale, truth.translation, p);
    let dense = chosen.iter().map(|&v| DenseCorrespondence { point: jitter(project(posed.vertex_world[v])), vertex: v }).collect();
    let joints = template.keypoint_joints();
    let keypoints = joints.iter().map(|&j| Keypoint { position: jitter(project(posed.joint_world[j])), visible: true }).collect();
    let depth = |j: usize| truth.scale * geom::dot(r[2], posed.joint_world[j]);
    let root = depth(template.root());
    let gan_depths = config.oracle_depths.then(|| joints.iter().map(|&j| depth(j) - root).collect());
    Ok(SampleAnnotation { dense, keypoints, gan_depths, width: config.image_size, height: config.image_size })
}

/// A normalized 2D keypoint pose with its true depths in the same units.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LiftSample {
    pub pose: Pose2D,
    /// Camera-frame depths relative to the root keypoint, divided by the 2D trunk length.
    pub depths: Vec<f64>,
}

/// Camera settings for lifting data: any heading around the vertical axis.
pub fn lifting_config() -> SynthConfig {
    SynthConfig { yaw: core::f64::consts::PI, ..SynthConfig::default() }
}

/// Keypoint-only samples for training and scoring the pose prior.
pub fn lifting_dataset(
    template: &BodyTemplate,
    stats: &SkeletonStats,
    count: usize,
    config: &SynthConfig,
    seed: u64,
) -> Result<Vec<LiftSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joints = template.keypoint_joints();
    if joints.len() != stats.keypoints {
        return Err(contract!("skeleton statistics do not match the template keypoints"));
    }
    (0..count)
        .map(|_| {
            let truth = sample_params(&mut rng, template, config);
            let cam = camera_joints(template, &truth)?;
            let points: Vec<[f64; 2]> = joints.iter().map(|&j| [cam[j][0], cam[j][1]]).collect();
            let (pose, trunk) = Pose2D::normalize(&points, &vec![true; points.len()], stats)?;
            let root = cam[joints[stats.root]][2];
            let depths = joints.iter().map(|&j| (cam[j][2] - root) / trunk).collect();
            Ok(LiftSample { pose, depths })
        })
        .collect()
}

/// `count` samples, deterministic per `seed`.
pub fn synth_dataset(template: &BodyTemplate, count: usize, config: &SynthConfig, seed: u64) -> Result<Vec<SynthSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let truth = sample_params(&mut rng, template, config);
            let annotation = render_sample(&mut rng, template, &truth, config)?;
            Ok(SynthSample { annotation, truth })
        })
        .collect()
}
