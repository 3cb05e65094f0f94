use alloc::vec;
use alloc::vec::Vec;

use super::{rotate_project, Pose2D, SkeletonStats};
use crate::diff::tape::sigmoid;
use crate::diff::{Tape, Var};
use crate::error::{contract, Error, Result};
use crate::nn::Mlp;

/// Stable `ln σ(x)`.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GeoLosses {
    pub ratio: f64,
    pub sym: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AdvLosses {
    /// `E[log(1 − D(fake))]`, minimized by the generator.
    pub generator: f64,
    /// `−(E[log D(real)] + E[log(1 − D(fake))])`, minimized by the discriminator.
    pub discriminator: f64,
}

fn bone_length<'t>(u: &Pose2D, z: &[Var<'t>], a: usize, b: usize) -> Var<'t> {
    let dx = u.points[b][0] - u.points[a][0];
    let dy = u.points[b][1] - u.points[a][1];
    let dz = z[b] - z[a];
    (dz.square() + (dx * dx + dy * dy)).sqrt()
}

/// Ratio and symmetry terms on the tape for a pose lifted with depths `z`.
pub fn geometric_terms<'t>(
    tape: &'t Tape,
    u: &Pose2D,
    z: &[Var<'t>],
    stats: &SkeletonStats,
) -> Result<(Var<'t>, Var<'t>)> {
    if u.len() != stats.keypoints || z.len() != stats.keypoints {
        return Err(contract!("pose of {} keypoints and {} depths for a {}-keypoint skeleton", u.len(), z.len(), stats.keypoints));
    }
    let trunk = bone_length(u, z, stats.root, stats.neck);
    if !(trunk.value() >= 1e-9) {
        return Err(Error::DegeneratePose(alloc::format!("3D trunk length {:e}", trunk.value())));
    }
    let lengths: Vec<Var<'t>> = stats.bones.iter().map(|&(a, b)| bone_length(u, z, a, b)).collect();
    let inv = 1.0 / trunk;
    let ratio_terms: Vec<Var<'t>> =
        lengths.iter().zip(&stats.ratios).map(|(&l, &r)| (l * inv - r).square()).collect();
    let sym_terms: Vec<Var<'t>> = stats.symmetry.iter().map(|&(a, b)| (lengths[a] - lengths[b]).square()).collect();
    Ok((tape.sum(&ratio_terms), tape.sum(&sym_terms)))
}

/// `(L_ratio, L_sym)` of the 3D pose `(x, y, z)` per keypoint.
pub fn geometric_losses(u: &Pose2D, z: &[f64], stats: &SkeletonStats) -> Result<GeoLosses> {
    let tape = Tape::new();
    let zs: Vec<Var<'_>> = z.iter().map(|&d| tape.constant(d)).collect();
    let (ratio, sym) = geometric_terms(&tape, u, &zs, stats)?;
    Ok(GeoLosses { ratio: ratio.value(), sym: sym.value() })
}

fn flat_batch(poses: &[Vec<[f64; 2]>], n: usize) -> Result<Vec<f64>> {
    if poses.iter().any(|p| p.len() != n) {
        return Err(contract!("pose batch mixes keypoint counts"));
    }
    Ok(poses.iter().flatten().flat_map(|p| *p).collect())
}

/// Adversarial objectives for one real and one fake batch.
pub fn adv_losses(d: &Mlp, real: &[Pose2D], fake: &[Vec<[f64; 2]>]) -> Result<AdvLosses> {
    if real.is_empty() || fake.is_empty() {
        return Err(contract!("adversarial losses need non-empty real and fake batches"));
    }
    let n = d.input_dim() / 2;
    let real_flat: Vec<f64> = real.iter().flat_map(Pose2D::flatten).collect();
    if real.iter().any(|p| p.len() != n) {
        return Err(contract!("real poses do not match the discriminator input"));
    }
    let lr = d.logits(&real_flat, real.len())?;
    let lf = d.logits(&flat_batch(fake, n)?, fake.len())?;
    let generator = lf.iter().map(|&l| log_sigmoid(-l)).sum::<f64>() / lf.len() as f64;
    let real_term = lr.iter().map(|&l| log_sigmoid(l)).sum::<f64>() / lr.len() as f64;
    Ok(AdvLosses { generator, discriminator: -(real_term + generator) })
}

/// Generator loss terms with the gradient over the generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GenObjective {
    pub adv: f64,
    pub ratio: f64,
    pub sym: f64,
    /// `ε·adv + ratio + sym`.
    pub total: f64,
    pub grad: Vec<f64>,
}

/// `ε E[log(1 − D(f(u, G(u); φ)))] + E[L_ratio + L_sym]` over a batch, with
/// `phis[b]` the view (radians) applied to `batch[b]`.
pub fn generator_objective(
    g: &Mlp,
    d: &Mlp,
    batch: &[Pose2D],
    phis: &[f64],
    stats: &SkeletonStats,
    epsilon: f64,
) -> Result<GenObjective> {
    let b = batch.len();
    let n = stats.keypoints;
    if b == 0 || phis.len() != b {
        return Err(contract!("generator objective needs one view per pose in a non-empty batch"));
    }
    if batch.iter().any(|p| p.len() != n) {
        return Err(contract!("pose batch does not match the skeleton"));
    }
    let x: Vec<f64> = batch.iter().flat_map(Pose2D::flatten).collect();
    let (z, g_cache) = g.forward_cached(&x, b)?;
    let fakes: Vec<Vec<[f64; 2]>> =
        (0..b).map(|i| rotate_project(&batch[i], &z[i * n..(i + 1) * n], phis[i])).collect();
    let (lf, d_cache) = d.forward_cached(&flat_batch(&fakes, n)?, b)?;
    let inv_b = 1.0 / b as f64;
    let adv = lf.iter().map(|&l| log_sigmoid(-l)).sum::<f64>() * inv_b;
    let d_logits: Vec<f64> = lf.iter().map(|&l| -epsilon * sigmoid(l) * inv_b).collect();
    let (_, d_fake) = d.backward(&d_cache, &d_logits)?;
    let mut dz = vec![0.0; b * n];
    let (mut ratio, mut sym) = (0.0, 0.0);
    for i in 0..b {
        let s = libm::sin(phis[i]);
        for k in 0..n {
            dz[i * n + k] += d_fake[i * 2 * n + 2 * k] * s;
        }
        let tape = Tape::new();
        let zs = tape.vars(&z[i * n..(i + 1) * n]);
        let (r, y) = geometric_terms(&tape, &batch[i], &zs, stats)?;
        ratio += r.value() * inv_b;
        sym += y.value() * inv_b;
        let grads = tape.backward(r + y)?.wrt_all(&zs);
        for k in 0..n {
            dz[i * n + k] += grads[k] * inv_b;
        }
    }
    let (grad, _) = g.backward(&g_cache, &dz)?;
    Ok(GenObjective { adv, ratio, sym, total: epsilon * adv + ratio + sym, grad })
}
