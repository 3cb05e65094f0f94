//! Parametric body: template, skeleton, segment scales, kinematics and skinning.

pub mod humanoid;
pub mod kinematics;
pub mod params;
pub mod template;

pub use humanoid::{humanoid, HumanoidSpec, JOINT_NAMES};
pub use kinematics::{forward_kinematics, pose_body, skin, JointTransform, PosedBody};
pub use params::{BodyParams, PARAM_COUNT};
pub use template::{BodyTemplate, ChartCoord, Hinge, TemplateParts, DEFAULT_KEYPOINT_JOINTS, NUM_JOINTS, NUM_KEYPOINTS};
