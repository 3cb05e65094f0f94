//! Procedural low-poly humanoid: one capsule-like tube per segment.
//!
//! Model frame: x to the body's left, y down, z away from the viewer (the
//! body faces −z). Units are meters. With the default 8 sides × 9 rings per
//! tube plus two head poles the mesh has 1730 vertices.

use alloc::vec;
use alloc::vec::Vec;

use super::template::{BodyTemplate, ChartCoord, Hinge, TemplateParts, DEFAULT_KEYPOINT_JOINTS, NUM_JOINTS};
use crate::error::{contract, Result};
use crate::geom::{self, Vec3};

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2", "l_ankle", "r_ankle", "spine3",
    "l_foot", "r_foot", "neck", "l_collar", "r_collar", "head", "l_shoulder", "r_shoulder", "l_elbow",
    "r_elbow", "l_wrist", "r_wrist", "l_hand", "r_hand",
];

pub const PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

const JOINTS: [Vec3; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, 0.08, 0.0],
    [-0.09, 0.08, 0.0],
    [0.0, -0.11, 0.0],
    [0.10, 0.48, 0.0],
    [-0.10, 0.48, 0.0],
    [0.0, -0.24, 0.0],
    [0.10, 0.88, 0.0],
    [-0.10, 0.88, 0.0],
    [0.0, -0.30, 0.0],
    [0.10, 0.93, -0.10],
    [-0.10, 0.93, -0.10],
    [0.0, -0.52, 0.0],
    [0.07, -0.42, 0.0],
    [-0.07, -0.42, 0.0],
    [0.0, -0.62, 0.0],
    [0.18, -0.44, 0.0],
    [-0.18, -0.44, 0.0],
    [0.45, -0.44, 0.0],
    [-0.45, -0.44, 0.0],
    [0.70, -0.44, 0.0],
    [-0.70, -0.44, 0.0],
    [0.79, -0.44, 0.0],
    [-0.79, -0.44, 0.0],
];

enum SegmentEnd {
    Joint(usize),
    Point(Vec3),
}

// (end of the tube starting at joint j, radius)
fn segment(j: usize) -> (SegmentEnd, f64) {
    use SegmentEnd::*;
    match j {
        0 => (Joint(3), 0.12),
        1 => (Joint(4), 0.075),
        2 => (Joint(5), 0.075),
        3 => (Joint(6), 0.12),
        4 => (Joint(7), 0.055),
        5 => (Joint(8), 0.055),
        6 => (Joint(9), 0.13),
        7 => (Joint(10), 0.045),
        8 => (Joint(11), 0.045),
        9 => (Joint(12), 0.13),
        10 => (Point([0.10, 0.95, -0.18]), 0.04),
        11 => (Point([-0.10, 0.95, -0.18]), 0.04),
        12 => (Joint(15), 0.05),
        13 => (Joint(16), 0.06),
        14 => (Joint(17), 0.06),
        15 => (Point([0.0, -0.80, 0.0]), 0.10),
        16 => (Joint(18), 0.05),
        17 => (Joint(19), 0.05),
        18 => (Joint(20), 0.04),
        19 => (Joint(21), 0.04),
        20 => (Joint(22), 0.035),
        21 => (Joint(23), 0.035),
        22 => (Point([0.88, -0.44, 0.0]), 0.03),
        23 => (Point([-0.88, -0.44, 0.0]), 0.03),
        _ => unreachable!(),
    }
}

/// Resolution of the generated mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct HumanoidSpec {
    pub sides: usize,
    pub rings: usize,
}

impl Default for HumanoidSpec {
    fn default() -> Self {
        Self { sides: 8, rings: 9 }
    }
}

impl HumanoidSpec {
    pub fn vertex_count(&self) -> usize {
        NUM_JOINTS * self.sides * self.rings + 2
    }
}

fn segment_points(j: usize) -> (Vec3, Vec3, f64) {
    let (end, radius) = segment(j);
    let end = match end {
        SegmentEnd::Joint(k) => JOINTS[k],
        SegmentEnd::Point(p) => p,
    };
    (JOINTS[j], end, radius)
}

fn perpendicular_frame(d: Vec3) -> (Vec3, Vec3) {
    let helper = if d[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let e1 = geom::cross(helper, d);
    let e1 = geom::scale(e1, 1.0 / geom::norm(e1));
    let e2 = geom::cross(d, e1);
    (e1, e2)
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = geom::sub(b, a);
    let t = (geom::dot(geom::sub(p, a), ab) / geom::dot(ab, ab)).clamp(0.0, 1.0);
    geom::norm(geom::sub(p, geom::add(a, geom::scale(ab, t))))
}

/// Build the procedural template at the requested resolution.
pub fn humanoid(spec: HumanoidSpec) -> Result<BodyTemplate> {
    if spec.sides < 3 || spec.rings < 2 {
        return Err(contract!("humanoid needs at least 3 sides and 2 rings, got {:?}", spec));
    }
    let (sides, rings) = (spec.sides, spec.rings);
    let mut vertices = Vec::with_capacity(spec.vertex_count());
    let mut charts = Vec::with_capacity(spec.vertex_count());
    let mut faces = Vec::new();
    let mut head_rings = (0, 0);
    for j in 0..NUM_JOINTS {
        let (a, b, radius) = segment_points(j);
        let axis = geom::sub(b, a);
        let dir = geom::scale(axis, 1.0 / geom::norm(axis));
        let (e1, e2) = perpendicular_frame(dir);
        let base = vertices.len();
        for r in 0..rings {
            let t = (r as f64 + 0.5) / rings as f64;
            let centre = geom::add(a, geom::scale(axis, t));
            for k in 0..sides {
                let phi = 2.0 * core::f64::consts::PI * k as f64 / sides as f64;
                let radial = geom::add(geom::scale(e1, libm::cos(phi)), geom::scale(e2, libm::sin(phi)));
                vertices.push(geom::add(centre, geom::scale(radial, radius)));
                charts.push(ChartCoord { part: j, uv: [k as f64 / sides as f64, t] });
            }
        }
        for r in 0..rings - 1 {
            for k in 0..sides {
                let i00 = base + r * sides + k;
                let i01 = base + r * sides + (k + 1) % sides;
                let i10 = base + (r + 1) * sides + k;
                let i11 = base + (r + 1) * sides + (k + 1) % sides;
                faces.push([i00, i01, i10]);
                faces.push([i01, i11, i10]);
            }
        }
        if j == 15 {
            head_rings = (base, base + (rings - 1) * sides);
        }
    }
    // close the head with two poles
    let (a, b, _) = segment_points(15);
    let bottom = vertices.len();
    vertices.push(a);
    charts.push(ChartCoord { part: 15, uv: [0.5, 0.0] });
    let top = vertices.len();
    vertices.push(b);
    charts.push(ChartCoord { part: 15, uv: [0.5, 1.0] });
    for k in 0..sides {
        let (k0, k1) = (k, (k + 1) % sides);
        faces.push([bottom, head_rings.0 + k1, head_rings.0 + k0]);
        faces.push([top, head_rings.1 + k0, head_rings.1 + k1]);
    }

    let segments: Vec<(Vec3, Vec3)> = (0..NUM_JOINTS)
        .map(|j| {
            let (a, b, _) = segment_points(j);
            (a, b)
        })
        .collect();
    let skin_weights = vertices.iter().map(|&v| two_nearest_weights(v, &segments)).collect();

    let mut rest_offsets = vec![[0.0; 3]; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        rest_offsets[j] = match PARENTS[j] {
            Some(p) => geom::sub(JOINTS[j], JOINTS[p]),
            None => JOINTS[j],
        };
    }
    let mut adjacency = vec![Vec::new(); NUM_JOINTS];
    for (j, p) in PARENTS.iter().enumerate() {
        if let Some(p) = *p {
            adjacency[j].push(p);
            adjacency[p].push(j);
        }
    }
    let hinges = vec![
        Hinge { joint: 4, axis: [-1.0, 0.0, 0.0] },
        Hinge { joint: 5, axis: [-1.0, 0.0, 0.0] },
        Hinge { joint: 18, axis: [0.0, -1.0, 0.0] },
        Hinge { joint: 19, axis: [0.0, 1.0, 0.0] },
    ];
    let symmetry_pairs = vec![(1, 2), (4, 5), (7, 8), (10, 11), (13, 14), (16, 17), (18, 19), (20, 21), (22, 23)];
    BodyTemplate::new(TemplateParts {
        vertices,
        faces,
        parents: PARENTS.to_vec(),
        rest_offsets,
        skin_weights,
        hinges,
        symmetry_pairs,
        adjacency,
        trunk_bone: 12,
        charts,
        keypoint_joints: DEFAULT_KEYPOINT_JOINTS,
    })
}

fn two_nearest_weights(v: Vec3, segments: &[(Vec3, Vec3)]) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> =
        segments.iter().enumerate().map(|(j, &(a, b))| (j, point_segment_distance(v, a, b))).collect();
    d.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    // inverse sixth power keeps mid-segment vertices nearly rigid
    let w: Vec<f64> = d[..2].iter().map(|&(_, dist)| 1.0 / libm::pow(dist + 1e-4, 6.0)).collect();
    let total = w[0] + w[1];
    let w0 = w[0] / total;
    vec![(d[0].0, w0), (d[1].0, 1.0 - w0)]
}
