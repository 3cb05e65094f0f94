//! Plain `f64` 3-D helpers: row-major 3×3 matrices, axis-angle and quaternions.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn matvec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn det(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

/// Frobenius norm of `MᵀM − I`.
pub fn orthonormality_defect(m: &Mat3) -> f64 {
    let g = matmul(&transpose(m), m);
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = g[i][j] - if i == j { 1.0 } else { 0.0 };
            acc += d * d;
        }
    }
    libm::sqrt(acc)
}

/// Rotation about a unit axis by the vector's norm (Rodrigues' formula).
pub fn axis_angle_to_matrix(a: Vec3) -> Mat3 {
    let x = dot(a, a);
    let (s, c) = (sinc_sq(x).0, cosc_sq(x).0);
    let k = [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]];
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            r[i][j] += s * k[i][j] + c * (a[i] * a[j] - x * delta);
        }
    }
    r
}

/// `sin(√x)/√x` and its derivative in `x`; smooth through `x = 0`.
pub fn sinc_sq(x: f64) -> (f64, f64) {
    if x < 1e-3 {
        let v = 1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0 + x * x * x * x / 362880.0;
        let d = -1.0 / 6.0 + x / 60.0 - x * x / 1680.0 + x * x * x / 90720.0;
        (v, d)
    } else {
        let t = libm::sqrt(x);
        let (s, c) = (libm::sin(t), libm::cos(t));
        (s / t, (t * c - s) / (2.0 * t * x))
    }
}

/// `(1 − cos √x)/x` and its derivative in `x`; smooth through `x = 0`.
pub fn cosc_sq(x: f64) -> (f64, f64) {
    if x < 1e-3 {
        let v = 0.5 - x / 24.0 + x * x / 720.0 - x * x * x / 40320.0 + x * x * x * x / 3628800.0;
        let d = -1.0 / 24.0 + x / 360.0 - x * x / 13440.0 + x * x * x / 907200.0;
        (v, d)
    } else {
        let t = libm::sqrt(x);
        let (s, c) = (libm::sin(t), libm::cos(t));
        ((1.0 - c) / x, (0.5 * t * s - (1.0 - c)) / (x * x))
    }
}

/// Unit quaternion `(w, x, y, z)` with `w ≥ 0`.
pub fn axis_angle_to_quaternion(a: Vec3) -> [f64; 4] {
    let angle = norm(a);
    if angle < 1e-300 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let half = 0.5 * angle;
    let k = libm::sin(half) / angle;
    let q = [libm::cos(half), a[0] * k, a[1] * k, a[2] * k];
    canonical_quaternion(q)
}

pub fn canonical_quaternion(q: [f64; 4]) -> [f64; 4] {
    if q[0] < 0.0 {
        [-q[0], -q[1], -q[2], -q[3]]
    } else {
        q
    }
}

/// Inverse of [`axis_angle_to_quaternion`]; the angle lands in `[0, π]`.
///
/// The input need not be normalized but must be non-zero.
pub fn quaternion_to_axis_angle(q: [f64; 4]) -> Vec3 {
    let n = libm::sqrt(q.iter().map(|c| c * c).sum::<f64>());
    let q = canonical_quaternion([q[0] / n, q[1] / n, q[2] / n, q[3] / n]);
    let v = [q[1], q[2], q[3]];
    let s = norm(v);
    if s < 1e-300 {
        return [0.0; 3];
    }
    let angle = 2.0 * libm::atan2(s, q[0]);
    scale(v, angle / s)
}

pub fn quaternion_to_matrix(q: [f64; 4]) -> Mat3 {
    let n = libm::sqrt(q.iter().map(|c| c * c).sum::<f64>());
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Angle of the relative rotation between two axis-angle vectors.
pub fn rotation_distance(a: Vec3, b: Vec3) -> f64 {
    let ra = axis_angle_to_matrix(a);
    let rb = axis_angle_to_matrix(b);
    let rel = matmul(&transpose(&ra), &rb);
    let c = ((rel[0][0] + rel[1][1] + rel[2][2] - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near 0; use the skew part there
    let skew = [rel[2][1] - rel[1][2], rel[0][2] - rel[2][0], rel[1][0] - rel[0][1]];
    let s = 0.5 * norm(skew);
    libm::atan2(s, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_quaternion() {
        assert_eq!(axis_angle_to_quaternion([0.0; 3]), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_turn_about_z() {
        let q = axis_angle_to_quaternion([0.0, 0.0, core::f64::consts::PI]);
        assert!(q[0].abs() < 1e-16);
        assert_eq!([q[1], q[2]], [0.0, 0.0]);
        assert!((q[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rodrigues_quarter_turn() {
        let r = axis_angle_to_matrix([0.0, 0.0, core::f64::consts::FRAC_PI_2]);
        let v = matvec(&r, [1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quaternion_matrix_agrees_with_rodrigues() {
        let a = [0.3, -0.8, 0.5];
        let r1 = axis_angle_to_matrix(a);
        let r2 = quaternion_to_matrix(axis_angle_to_quaternion(a));
        for i in 0..3 {
            for j in 0..3 {
                assert!((r1[i][j] - r2[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn series_branches_match_closed_form() {
        for &x in &[9.99e-4, 1.001e-3] {
            let t = libm::sqrt(x);
            assert!((sinc_sq(x).0 - libm::sin(t) / t).abs() < 1e-15);
            assert!((cosc_sq(x).0 - (1.0 - libm::cos(t)) / x).abs() < 1e-12);
        }
        // derivative continuity across the switch
        let (lo, hi) = (sinc_sq(1e-3 - 1e-12).1, sinc_sq(1e-3 + 1e-12).1);
        assert!((lo - hi).abs() < 1e-10);
        let (lo, hi) = (cosc_sq(1e-3 - 1e-12).1, cosc_sq(1e-3 + 1e-12).1);
        assert!((lo - hi).abs() < 1e-8);
    }
}
