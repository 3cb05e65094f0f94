//! Evaluation metrics: MPJPE with bone-length rescaling, Procrustes vertex
//! error and per-pixel error. Lengths come in meters and leave in millimeters.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::body::{pose_body, BodyParams, BodyTemplate};
use crate::camera::project_with;
use crate::error::{contract, Error, Result};
use crate::geom::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EvalReport {
    pub mpjpe_mm: f64,
    pub per_vertex_mm: f64,
    pub per_pixel: f64,
    pub samples: usize,
}

fn bone_total(joints: &[Vec3], parents: &[Option<usize>]) -> f64 {
    parents.iter().enumerate().filter_map(|(j, p)| p.map(|p| geom::norm(geom::sub(joints[j], joints[p])))).sum()
}

fn root_of(parents: &[Option<usize>]) -> Result<usize> {
    parents.iter().position(Option::is_none).ok_or_else(|| contract!("skeleton has no root"))
}

/// Joints rescaled to a total bone length of `canonical` and centered on the root.
fn canonicalize(joints: &[Vec3], parents: &[Option<usize>], canonical: f64) -> Result<Vec<Vec3>> {
    let total = bone_total(joints, parents);
    if !(total > 0.0) {
        return Err(Error::DegeneratePose(format!("total bone length is {total}")));
    }
    let root = joints[root_of(parents)?];
    let k = canonical / total;
    Ok(joints.iter().map(|&p| geom::scale(geom::sub(p, root), k)).collect())
}

/// Mean per-joint error (mm) after rescaling both skeletons to the canonical
/// total bone length and aligning their roots.
pub fn mpjpe(pred: &[Vec3], gt: &[Vec3], parents: &[Option<usize>], canonical_total: f64) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() != parents.len() || pred.is_empty() {
        return Err(contract!("MPJPE needs two skeletons of {} joints", parents.len()));
    }
    let p = canonicalize(pred, parents, canonical_total)?;
    let g = canonicalize(gt, parents, canonical_total)?;
    let sum: f64 = p.iter().zip(&g).map(|(a, b)| geom::norm(geom::sub(*a, *b))).sum();
    Ok(1000.0 * sum / p.len() as f64)
}

/// Joints in the camera frame (`R J`, before scaling).
pub fn camera_joints(template: &BodyTemplate, params: &BodyParams) -> Result<Vec<Vec3>> {
    let r = crate::camera::gram_schmidt(&params.rotation)?;
    let posed = pose_body(template, &params.pose, &params.scales)?;
    Ok(posed.joint_world.iter().map(|&j| geom::matvec(&r, j)).collect())
}

/// [`mpjpe`] between two parameter sets on the template skeleton.
pub fn params_mpjpe(template: &BodyTemplate, pred: &BodyParams, gt: &BodyParams) -> Result<f64> {
    let parents: Vec<Option<usize>> = (0..pred.scales.len()).map(|j| template.parent(j)).collect();
    mpjpe(&camera_joints(template, pred)?, &camera_joints(template, gt)?, &parents, template.total_bone_length())
}

/// Mean vertex distance (mm) after the best similarity transform of `pred` onto `gt`.
///
/// The rotation is restricted to `det = +1`.
pub fn procrustes_vertex_error(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(contract!("Procrustes needs two equally sized, non-empty point sets"));
    }
    let n = pred.len() as f64;
    let to_v = |p: &Vec3| Vector3::new(p[0], p[1], p[2]);
    let mp = pred.iter().map(to_v).sum::<Vector3<f64>>() / n;
    let mg = gt.iter().map(to_v).sum::<Vector3<f64>>() / n;
    let xs: Vec<Vector3<f64>> = pred.iter().map(|p| to_v(p) - mp).collect();
    let ys: Vec<Vector3<f64>> = gt.iter().map(|p| to_v(p) - mg).collect();
    let var_x = xs.iter().map(|x| x.norm_squared()).sum::<f64>() / n;
    if !(var_x > 1e-24) {
        return Err(Error::DegeneratePose("all predicted points coincide".into()));
    }
    let cov = xs.iter().zip(&ys).map(|(x, y)| y * x.transpose()).sum::<Matrix3<f64>>() / n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = u * d * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * d).trace() / var_x;
    let err: f64 = xs.iter().zip(&ys).map(|(x, y)| (scale * rot * x - y).norm()).sum();
    Ok(1000.0 * err / n)
}

/// Mean 2D distance over the corresponded vertex indices.
pub fn per_pixel_error(pred: &[[f64; 2]], gt: &[[f64; 2]], vertices: &[usize]) -> Result<f64> {
    if vertices.is_empty() {
        return Err(contract!("per-pixel error needs at least one correspondence"));
    }
    let mut sum = 0.0;
    for &v in vertices {
        let (a, b) = match (pred.get(v), gt.get(v)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(contract!("vertex {v} is out of range")),
        };
        sum += libm::hypot(a[0] - b[0], a[1] - b[1]);
    }
    Ok(sum / vertices.len() as f64)
}

/// Averages of the three metrics over paired predictions and ground truths.
///
/// `vertices[i]` lists the corresponded vertices of sample `i`.
pub fn evaluate(template: &BodyTemplate, pred: &[BodyParams], gt: &[BodyParams], vertices: &[Vec<usize>]) -> Result<EvalReport> {
    if pred.len() != gt.len() || pred.len() != vertices.len() || pred.is_empty() {
        return Err(contract!("evaluation needs matching, non-empty prediction, truth and correspondence lists"));
    }
    let mut report = EvalReport { samples: pred.len(), ..Default::default() };
    for ((p, g), vs) in pred.iter().zip(gt).zip(vertices) {
        report.mpjpe_mm += params_mpjpe(template, p, g)?;
        let (pp, gp) = (pose_body(template, &p.pose, &p.scales)?, pose_body(template, &g.pose, &g.scales)?);
        let (rp, rg) = (crate::camera::gram_schmidt(&p.rotation)?, crate::camera::gram_schmidt(&g.rotation)?);
        let pv: Vec<Vec3> = pp.vertex_world.iter().map(|&v| geom::matvec(&rp, v)).collect();
        let gv: Vec<Vec3> = gp.vertex_world.iter().map(|&v| geom::matvec(&rg, v)).collect();
        report.per_vertex_mm += procrustes_vertex_error(&pv, &gv)?;
        let proj = |r, s, t, vs: &[Vec3]| vs.iter().map(|&v| project_with(r, s, t, v)).collect::<Vec<_>>();
        let p2 = proj(&rp, p.scale, p.translation, &pp.vertex_world);
        let g2 = proj(&rg, g.scale, g.translation, &gp.vertex_world);
        report.per_pixel += per_pixel_error(&p2, &g2, vs)?;
    }
    let n = pred.len() as f64;
    report.mpjpe_mm /= n;
    report.per_vertex_mm /= n;
    report.per_pixel /= n;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARENTS: [Option<usize>; 4] = [None, Some(0), Some(1), Some(0)];

    fn skeleton() -> Vec<Vec3> {
        alloc::vec![[0.0, 0.0, 0.0], [0.0, 0.4, 0.0], [0.1, 0.8, 0.0], [0.0, -0.5, 0.1]]
    }

    #[test]
    fn mpjpe_examples() {
        let g = skeleton();
        let canon = bone_total(&g, &PARENTS);
        assert_eq!(mpjpe(&g, &g, &PARENTS, canon).unwrap(), 0.0);
        let twice: Vec<Vec3> = g.iter().map(|&p| geom::scale(p, 2.0)).collect();
        assert!(mpjpe(&twice, &g, &PARENTS, canon).unwrap() < 1e-12);
        let flat = alloc::vec![[0.0; 3]; 4];
        assert!(matches!(mpjpe(&flat, &g, &PARENTS, canon), Err(Error::DegeneratePose(_))));
    }

    #[test]
    fn per_pixel_uniform_offset() {
        let gt = [[1.0, 2.0], [5.0, -1.0], [0.0, 0.0]];
        let pred = gt.map(|p| [p[0] + 3.0, p[1] + 4.0]);
        assert_eq!(per_pixel_error(&pred, &gt, &[0, 1, 2]).unwrap(), 5.0);
        assert_eq!(per_pixel_error(&pred, &gt, &[2]).unwrap(), 5.0);
        assert!(per_pixel_error(&pred, &gt, &[]).is_err());
    }

    #[test]
    fn procrustes_removes_similarity() {
        let gt: Vec<Vec3> = (0..20).map(|i| [libm::sin(i as f64), (i as f64) * 0.1, libm::cos(2.0 * i as f64)]).collect();
        let r = geom::axis_angle_to_matrix([0.3, -1.1, 0.6]);
        let pred: Vec<Vec3> = gt.iter().map(|&p| geom::add(geom::scale(geom::matvec(&r, p), 1.7), [0.4, -2.0, 3.0])).collect();
        assert!(procrustes_vertex_error(&pred, &gt).unwrap() < 1e-9);
        let mirrored: Vec<Vec3> = gt.iter().map(|p| [-p[0], p[1], p[2]]).collect();
        assert!(procrustes_vertex_error(&mirrored, &gt).unwrap() > 1.0);
    }
}
