use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::geom::{self, Vec3};

/// Number of pose slots / skeleton joints.
pub const NUM_JOINTS: usize = 24;

/// Number of 2D keypoints consumed by the keypoint loss and the pose prior.
pub const NUM_KEYPOINTS: usize = 16;

/// Model joint feeding each keypoint (pelvis-rooted 16-point layout:
/// r-ankle, r-knee, r-hip, l-hip, l-knee, l-ankle, pelvis, thorax,
/// upper-neck, head, r-wrist, r-elbow, r-shoulder, l-shoulder, l-elbow, l-wrist).
pub const DEFAULT_KEYPOINT_JOINTS: [usize; NUM_KEYPOINTS] =
    [8, 5, 2, 1, 4, 7, 0, 9, 12, 15, 21, 19, 17, 16, 18, 20];

/// Location of a vertex in the per-part UV atlas.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ChartCoord {
    pub part: usize,
    pub uv: [f64; 2],
}

/// Single-axis limit for elbow/knee style joints.
///
/// The axis is oriented so natural flexion has a negative projection.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Hinge {
    pub joint: usize,
    pub axis: Vec3,
}

/// Raw template fields, validated by [`BodyTemplate::new`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TemplateParts {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub parents: Vec<Option<usize>>,
    pub rest_offsets: Vec<Vec3>,
    /// Per-vertex sparse `(joint, weight)` lists.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
    pub hinges: Vec<Hinge>,
    pub symmetry_pairs: Vec<(usize, usize)>,
    /// Per-segment neighbour lists.
    pub adjacency: Vec<Vec<usize>>,
    pub trunk_bone: usize,
    pub charts: Vec<ChartCoord>,
    pub keypoint_joints: [usize; NUM_KEYPOINTS],
}

/// Rest-pose mesh, skeleton and metadata of the parametric body.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyTemplate {
    parts: TemplateParts,
    order: Vec<usize>,
    root: usize,
    rest_joints: Vec<Vec3>,
}

impl BodyTemplate {
    pub fn new(parts: TemplateParts) -> Result<Self> {
        let n = parts.vertices.len();
        if n == 0 {
            return Err(contract!("template has no vertices"));
        }
        if parts.parents.len() != NUM_JOINTS || parts.rest_offsets.len() != NUM_JOINTS {
            return Err(contract!(
                "expected {NUM_JOINTS} joints, got {} parents and {} rest offsets",
                parts.parents.len(),
                parts.rest_offsets.len()
            ));
        }
        for (f, face) in parts.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= n) {
                return Err(contract!("face {f} references a vertex out of range"));
            }
        }
        let order = topological_order(&parts.parents)?;
        let root = order[0];
        if parts.skin_weights.len() != n {
            return Err(contract!("skin weights cover {} of {n} vertices", parts.skin_weights.len()));
        }
        for (i, row) in parts.skin_weights.iter().enumerate() {
            let mut total = 0.0;
            for &(j, w) in row {
                if j >= NUM_JOINTS || !(w >= 0.0) {
                    return Err(contract!("vertex {i}: invalid skin weight ({j}, {w})"));
                }
                total += w;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(contract!("vertex {i}: skin weights sum to {total}"));
            }
        }
        if parts.charts.len() != n {
            return Err(contract!("part charts cover {} of {n} vertices", parts.charts.len()));
        }
        for (i, c) in parts.charts.iter().enumerate() {
            let in_unit = c.uv.iter().all(|x| (0.0..=1.0).contains(x));
            if c.part >= NUM_JOINTS || !in_unit {
                return Err(contract!("vertex {i}: chart entry {:?} outside part range or unit square", c));
            }
        }
        for h in &parts.hinges {
            if h.joint >= NUM_JOINTS || (geom::norm(h.axis) - 1.0).abs() > 1e-9 {
                return Err(contract!("hinge {:?} must name a joint and carry a unit axis", h));
            }
        }
        let in_range = |&(a, b): &(usize, usize)| a < NUM_JOINTS && b < NUM_JOINTS;
        if !parts.symmetry_pairs.iter().all(in_range) {
            return Err(contract!("symmetry pair out of range"));
        }
        if parts.adjacency.len() != NUM_JOINTS || parts.adjacency.iter().flatten().any(|&j| j >= NUM_JOINTS) {
            return Err(contract!("adjacency must list neighbours for each of {NUM_JOINTS} segments"));
        }
        if parts.trunk_bone >= NUM_JOINTS || parts.keypoint_joints.iter().any(|&j| j >= NUM_JOINTS) {
            return Err(contract!("trunk bone or keypoint joint out of range"));
        }
        let mut rest_joints = vec![[0.0; 3]; NUM_JOINTS];
        for &j in &order {
            let base = parts.parents[j].map_or([0.0; 3], |p| rest_joints[p]);
            rest_joints[j] = geom::add(base, parts.rest_offsets[j]);
        }
        Ok(Self { parts, order, root, rest_joints })
    }

    pub fn parts(&self) -> &TemplateParts {
        &self.parts
    }

    pub fn into_parts(self) -> TemplateParts {
        self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.parts.vertices.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.parts.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parts.parents[j]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Joints ordered so every parent precedes its children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn rest_offset(&self, j: usize) -> Vec3 {
        self.parts.rest_offsets[j]
    }

    pub fn rest_joints(&self) -> &[Vec3] {
        &self.rest_joints
    }

    pub fn skin_weights(&self, vertex: usize) -> &[(usize, f64)] {
        &self.parts.skin_weights[vertex]
    }

    pub fn hinges(&self) -> &[Hinge] {
        &self.parts.hinges
    }

    pub fn symmetry_pairs(&self) -> &[(usize, usize)] {
        &self.parts.symmetry_pairs
    }

    /// Unordered adjacent segment pairs, each listed once with `a < b`.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .parts
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().map(move |&b| (a.min(b), a.max(b))))
            .filter(|(a, b)| a != b)
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    pub fn trunk_bone(&self) -> usize {
        self.parts.trunk_bone
    }

    pub fn chart(&self, vertex: usize) -> ChartCoord {
        self.parts.charts[vertex]
    }

    pub fn charts(&self) -> &[ChartCoord] {
        &self.parts.charts
    }

    pub fn keypoint_joints(&self) -> &[usize; NUM_KEYPOINTS] {
        &self.parts.keypoint_joints
    }

    /// Vertical extent of the rest skeleton (model units).
    pub fn skeleton_height(&self) -> f64 {
        let ys = self.rest_joints.iter().map(|p| p[1]);
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
        hi - lo
    }

    /// Sum of rest bone lengths over all non-root joints.
    pub fn total_bone_length(&self) -> f64 {
        (0..NUM_JOINTS).filter(|&j| self.parent(j).is_some()).map(|j| geom::norm(self.rest_offset(j))).sum()
    }
}

fn topological_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let roots: Vec<usize> = (0..parents.len()).filter(|&j| parents[j].is_none()).collect();
    if roots.len() != 1 {
        return Err(contract!("joint tree must have exactly one root, found {}", roots.len()));
    }
    let mut children = vec![Vec::new(); parents.len()];
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= parents.len() || p == j {
                return Err(contract!("joint {j} has invalid parent {p}"));
            }
            children[p].push(j);
        }
    }
    let mut order = Vec::with_capacity(parents.len());
    let mut stack = vec![roots[0]];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    if order.len() != parents.len() {
        return Err(contract!("joint tree contains a cycle or unreachable joints"));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_is_rejected() {
        let mut parents: Vec<Option<usize>> = (0..NUM_JOINTS).map(|j| j.checked_sub(1)).collect();
        parents[1] = Some(5);
        assert!(topological_order(&parents).is_err());
    }

    #[test]
    fn two_roots_rejected() {
        let mut parents: Vec<Option<usize>> = (0..NUM_JOINTS).map(|j| j.checked_sub(1)).collect();
        parents[7] = None;
        assert!(topological_order(&parents).is_err());
    }

    #[test]
    fn parents_precede_children() {
        let parents: Vec<Option<usize>> = (0..NUM_JOINTS).map(|j| if j == 0 { None } else { Some((j * 7 + 3) % j) }).collect();
        let order = topological_order(&parents).unwrap();
        let pos = |j: usize| order.iter().position(|&x| x == j).unwrap();
        for j in 1..NUM_JOINTS {
            assert!(pos(parents[j].unwrap()) < pos(j));
        }
    }
}
