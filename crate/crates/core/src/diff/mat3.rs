//! Differentiable 3×3 composites: products, Rodrigues, Gram-Schmidt, quaternions.
//!
//! Matrices are row-major arrays of tape variables. Products are built from
//! fused [`Tape::dot`]/[`Tape::lin`] nodes and Rodrigues uses closed-form
//! local Jacobians, so a full rotation costs nine tape nodes.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::geom::{self, Mat3};

pub type V3<'t> = [Var<'t>; 3];
pub type M3<'t> = [[Var<'t>; 3]; 3];

pub fn constant<'t>(tape: &'t Tape, m: &Mat3) -> M3<'t> {
    m.map(|row| row.map(|x| tape.constant(x)))
}

pub fn values(m: &M3<'_>) -> Mat3 {
    m.map(|row| row.map(|x| x.value()))
}

pub fn column<'t>(m: &M3<'t>, j: usize) -> V3<'t> {
    [m[0][j], m[1][j], m[2][j]]
}

pub fn matmul<'t>(tape: &'t Tape, a: &M3<'t>, b: &M3<'t>) -> M3<'t> {
    let cols = [column(b, 0), column(b, 1), column(b, 2)];
    core::array::from_fn(|i| core::array::from_fn(|j| tape.dot(&a[i], &cols[j])))
}

pub fn matvec<'t>(tape: &'t Tape, m: &M3<'t>, v: &V3<'t>) -> V3<'t> {
    core::array::from_fn(|i| tape.dot(&m[i], v))
}

/// `M v` for a constant vector.
pub fn matvec_const<'t>(tape: &'t Tape, m: &M3<'t>, v: [f64; 3]) -> V3<'t> {
    core::array::from_fn(|i| tape.lin(&[(m[i][0], v[0]), (m[i][1], v[1]), (m[i][2], v[2])], 0.0))
}

pub fn det<'t>(tape: &'t Tape, m: &M3<'t>) -> Var<'t> {
    let c = cross(m[1], m[2]);
    tape.dot(&m[0], &c)
}

pub fn cross<'t>(a: V3<'t>, b: V3<'t>) -> V3<'t> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Axis-angle to rotation matrix; smooth at the zero rotation.
pub fn rodrigues<'t>(tape: &'t Tape, a: V3<'t>) -> M3<'t> {
    let av = [a[0].value(), a[1].value(), a[2].value()];
    let x = geom::dot(av, av);
    let (s, ds) = geom::sinc_sq(x);
    let (c, dc) = geom::cosc_sq(x);
    let k = [[0.0, -av[2], av[1]], [av[2], 0.0, -av[0]], [-av[1], av[0], 0.0]];
    // dK[i][j] / da_m
    let dk = |i: usize, j: usize, m: usize| -> f64 {
        match (i, j) {
            (0, 1) if m == 2 => -1.0,
            (0, 2) if m == 1 => 1.0,
            (1, 0) if m == 2 => 1.0,
            (1, 2) if m == 0 => -1.0,
            (2, 0) if m == 1 => -1.0,
            (2, 1) if m == 0 => 1.0,
            _ => 0.0,
        }
    };
    core::array::from_fn(|i| {
        core::array::from_fn(|j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            let outer = av[i] * av[j] - x * delta;
            let value = delta + s * k[i][j] + c * outer;
            let partials: [f64; 3] = core::array::from_fn(|m| {
                let d_outer = if i == m { av[j] } else { 0.0 } + if j == m { av[i] } else { 0.0 }
                    - 2.0 * av[m] * delta;
                2.0 * av[m] * ds * k[i][j] + s * dk(i, j, m) + 2.0 * av[m] * dc * outer + c * d_outer
            });
            tape.custom(&a, value, &partials)
        })
    })
}

/// Classical Gram-Schmidt over the columns of `m`.
///
/// Preserves the orientation of the input; a column whose residual norm
/// drops below `1e-10` is reported as [`Error::DegenerateRotation`]. The last
/// column's normalized residual is formed in closed form as
/// `sign(det m) · (q1 × q2)`, which is what the projection produces in exact
/// arithmetic and leaves no rounding-level dependence on the third column.
pub fn gram_schmidt<'t>(tape: &'t Tape, m: &M3<'t>) -> Result<M3<'t>> {
    let c1 = column(m, 0);
    let n1 = tape.dot(&c1, &c1).sqrt();
    if !(n1.value() >= 1e-10) {
        return Err(Error::DegenerateRotation { column: 0, norm: n1.value() });
    }
    let q1 = c1.map(|x| x / n1);
    let c2 = column(m, 1);
    let proj = tape.dot(&q1, &c2);
    let r2: V3<'t> = core::array::from_fn(|r| c2[r] - proj * q1[r]);
    let n2 = tape.dot(&r2, &r2).sqrt();
    if !(n2.value() >= 1e-10) {
        return Err(Error::DegenerateRotation { column: 1, norm: n2.value() });
    }
    let q2 = r2.map(|x| x / n2);
    let (q1v, q2v) = (q1.map(|x| x.value()), q2.map(|x| x.value()));
    let c3 = column(m, 2).map(|x| x.value());
    let r3 = geom::sub(geom::sub(c3, geom::scale(q1v, geom::dot(q1v, c3))), geom::scale(q2v, geom::dot(q2v, c3)));
    let n3 = geom::norm(r3);
    if !(n3 >= 1e-10) {
        return Err(Error::DegenerateRotation { column: 2, norm: n3 });
    }
    let sign = if geom::dot(r3, geom::cross(q1v, q2v)) >= 0.0 { 1.0 } else { -1.0 };
    let q3 = cross(q1, q2).map(|x| x * sign);
    Ok(core::array::from_fn(|i| [q1[i], q2[i], q3[i]]))
}

/// Rotation matrix of a (not necessarily unit) quaternion `(w, x, y, z)`.
pub fn quaternion_to_matrix<'t>(tape: &'t Tape, q: [Var<'t>; 4]) -> Result<M3<'t>> {
    let n2 = tape.dot(&q, &q);
    if !(n2.value() > 1e-24) {
        return Err(crate::error::contract!("zero-norm quaternion"));
    }
    let inv = 1.0 / n2.sqrt();
    let [w, x, y, z] = q.map(|c| c * inv);
    let two = |a: Var<'t>, b: Var<'t>, c: Var<'t>, d: Var<'t>, sign: f64| tape.lin(&[(a * b, 2.0), (c * d, 2.0 * sign)], 0.0);
    Ok([
        [1.0 - (y * y + z * z) * 2.0, two(x, y, w, z, -1.0), two(x, z, w, y, 1.0)],
        [two(x, y, w, z, 1.0), 1.0 - (x * x + z * z) * 2.0, two(y, z, w, x, -1.0)],
        [two(x, z, w, y, -1.0), two(y, z, w, x, 1.0), 1.0 - (x * x + y * y) * 2.0],
    ])
}
