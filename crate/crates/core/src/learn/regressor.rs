//! Feature-based parameter regressor trained with
//! `α L_regress + β L_dense + γ L_KP`.
//!
//! Predictions live in an image-normalized copy of the regressor space: the
//! camera scale is divided by the annotation unit and the translation is
//! taken relative to the image center in the same unit.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{from_regressor_space, to_regressor_space, QUAT_AT, REGRESSOR_DIM, R_AT, SCALE_AT, S_AT, T_AT};
use crate::body::{BodyParams, BodyTemplate, NUM_JOINTS, NUM_KEYPOINTS};
use crate::diff::mat3::{self, M3};
use crate::diff::{Adam, Tape, Var};
use crate::error::{contract, Error, Result};
use crate::nn::{Mlp, Output};
use crate::regist::model::TapeModel;
use crate::regist::{dense_term, keypoint_term, SampleAnnotation};

use super::alternate::ThetaStore;

/// Feature length for the default [`FeatureSpec`].
pub const FEATURE_DIM: usize = 3 * NUM_KEYPOINTS + 5 * 64;

/// Which annotation-derived values feed the regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct FeatureSpec {
    /// Dense correspondences kept per sample; shorter lists are zero-padded.
    pub dense_slots: usize,
    /// Seed of the per-sample subset draw.
    pub seed: u64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { dense_slots: 64, seed: 0 }
    }
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        3 * NUM_KEYPOINTS + 5 * self.dense_slots
    }
}

fn frame(ann: &SampleAnnotation) -> ([f64; 2], f64) {
    ([0.5 * ann.width, 0.5 * ann.height], ann.unit())
}

/// Keypoints as `(x, y, visible)` and a fixed subset of dense points as
/// `(x, y, part / 23, u, v)`, positions in the image-normalized frame.
pub fn features(template: &BodyTemplate, ann: &SampleAnnotation, spec: &FeatureSpec) -> Result<Vec<f64>> {
    ann.validate(template)?;
    let (c, unit) = frame(ann);
    let norm = |p: [f64; 2]| [(p[0] - c[0]) / unit, (p[1] - c[1]) / unit];
    let mut f = Vec::with_capacity(spec.dim());
    if ann.keypoints.is_empty() {
        f.resize(3 * NUM_KEYPOINTS, 0.0);
    }
    for k in &ann.keypoints {
        if k.visible {
            let p = norm(k.position);
            f.extend([p[0], p[1], 1.0]);
        } else {
            f.extend([0.0; 3]);
        }
    }
    let take = spec.dense_slots.min(ann.dense.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picks = index::sample(&mut rng, ann.dense.len(), take).into_vec();
    picks.sort_unstable();
    for i in picks {
        let d = ann.dense[i];
        let p = norm(d.point);
        let chart = template.chart(d.vertex);
        f.extend([p[0], p[1], chart.part as f64 / (NUM_JOINTS - 1) as f64, chart.uv[0], chart.uv[1]]);
    }
    f.resize(spec.dim(), 0.0);
    Ok(f)
}

/// Pixel-unit regressor vector → image-normalized frame.
pub(crate) fn to_frame(v: &[f64], ann: &SampleAnnotation) -> Vec<f64> {
    let (c, unit) = frame(ann);
    let mut out = v.to_vec();
    out[SCALE_AT] /= unit;
    out[T_AT] = (v[T_AT] - c[0]) / unit;
    out[T_AT + 1] = (v[T_AT + 1] - c[1]) / unit;
    out
}

pub(crate) fn from_frame(v: &[f64], ann: &SampleAnnotation) -> Vec<f64> {
    let (c, unit) = frame(ann);
    let mut out = v.to_vec();
    out[SCALE_AT] *= unit;
    out[T_AT] = v[T_AT] * unit + c[0];
    out[T_AT + 1] = v[T_AT + 1] * unit + c[1];
    out
}

/// Annotation expressed in the image-normalized frame.
pub(crate) fn framed(ann: &SampleAnnotation) -> SampleAnnotation {
    let (c, unit) = frame(ann);
    ann.translated([-c[0], -c[1]]).scaled(1.0 / unit)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Regressor {
    pub spec: FeatureSpec,
    pub net: Mlp,
}

impl Regressor {
    pub fn new(spec: FeatureSpec, hidden: usize, layers: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::uniform_depth(spec.dim(), hidden, REGRESSOR_DIM, layers, Output::Linear, &mut rng)?;
        Ok(Self { spec, net })
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.net.input_dim() != self.spec.dim() || self.net.output_dim() != REGRESSOR_DIM {
            return Err(contract!("regressor network does not map {} features to {REGRESSOR_DIM} outputs", self.spec.dim()));
        }
        Ok(())
    }

    /// Point the output layer at the mean target and damp its weights by `gain`.
    pub fn warm_start(&mut self, targets: &[Vec<f64>], gain: f64) -> Result<()> {
        if targets.is_empty() || targets.iter().any(|t| t.len() != REGRESSOR_DIM) {
            return Err(contract!("warm start needs non-empty {REGRESSOR_DIM}-vectors"));
        }
        let mean: Vec<f64> = (0..REGRESSOR_DIM)
            .map(|i| targets.iter().map(|t| t[i]).sum::<f64>() / targets.len() as f64)
            .collect();
        let last = self.net.layers() - 1;
        let offset: usize = (0..last).map(|l| {
            let (w, b) = self.net.layer(l);
            w.len() + b.len()
        }).sum();
        let wlen = self.net.layer(last).0.len();
        let params = self.net.params_mut();
        params[offset..offset + wlen].iter_mut().for_each(|w| *w *= gain);
        params[offset + wlen..offset + wlen + REGRESSOR_DIM].copy_from_slice(&mean);
        Ok(())
    }

    /// Image-normalized predictions for a row-major feature batch.
    pub fn predict_frame(&self, feats: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.net.forward(feats, batch)
    }

    pub fn predict(&self, template: &BodyTemplate, ann: &SampleAnnotation) -> Result<BodyParams> {
        let f = features(template, ann, &self.spec)?;
        let y = self.predict_frame(&f, 1)?;
        decode(&y, ann)
    }

    pub fn predict_all(&self, template: &BodyTemplate, anns: &[SampleAnnotation]) -> Result<Vec<BodyParams>> {
        anns.iter().map(|a| self.predict(template, a)).collect()
    }
}

/// Image-normalized prediction → pixel-unit parameters, scales kept positive.
fn decode(y: &[f64], ann: &SampleAnnotation) -> Result<BodyParams> {
    let mut p = from_regressor_space(&from_frame(y, ann))?;
    p.scales.iter_mut().for_each(|s| *s = s.max(crate::regist::MIN_SCALE));
    p.scale = p.scale.max(crate::regist::MIN_SCALE);
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RegressorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 10.0, gamma: 1.0, learning_rate: 1e-4, batch_size: 30, epochs: 50, seed: 0 }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma, self.learning_rate];
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || self.batch_size == 0 {
            return Err(contract!("regressor weights and learning rate must be finite and non-negative, batch positive"));
        }
        Ok(())
    }
}

/// Terms of the training loss (fit terms in the image-normalized frame).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ConvLoss {
    pub regress: f64,
    pub dense: f64,
    pub keypoint: f64,
    pub total: f64,
}

/// `α L_regress + β L_dense + γ L_KP` for one prediction `y` (image-normalized
/// regressor space) against `target`, with `ann` already in the normalized frame.
pub fn conv_terms<'t>(
    tape: &'t Tape,
    template: &BodyTemplate,
    y: &[Var<'t>],
    target: &[f64],
    ann: &SampleAnnotation,
    cfg: &RegressorConfig,
) -> Result<(Var<'t>, ConvLoss)> {
    if y.len() != REGRESSOR_DIM || target.len() != REGRESSOR_DIM {
        return Err(contract!("prediction and target must have {REGRESSOR_DIM} entries"));
    }
    let diffs: Vec<Var<'t>> = y.iter().zip(target).map(|(&a, &b)| (a - b).smooth_l1(1.0)).collect();
    let regress = tape.mean(&diffs);
    let mut total = regress * cfg.alpha;
    let mut loss = ConvLoss { regress: regress.value(), ..ConvLoss::default() };
    if cfg.beta != 0.0 || cfg.gamma != 0.0 {
        let local: Vec<M3<'t>> = (0..NUM_JOINTS)
            .map(|j| mat3::quaternion_to_matrix(tape, core::array::from_fn(|c| y[QUAT_AT + 4 * j + c])))
            .collect::<Result<_>>()?;
        let rotation: M3<'t> = core::array::from_fn(|i| core::array::from_fn(|c| y[R_AT + 3 * i + c]));
        let model = TapeModel::from_local(
            tape,
            template,
            &local,
            &y[S_AT..S_AT + NUM_JOINTS],
            &rotation,
            y[SCALE_AT],
            [y[T_AT], y[T_AT + 1]],
        )?;
        let dense = dense_term(tape, template, &model, ann)?;
        let (kp, _) = keypoint_term(tape, template, &model, ann)?;
        loss.dense = dense.value();
        loss.keypoint = kp.value();
        total = tape.lin(&[(total, 1.0), (dense, cfg.beta), (kp, cfg.gamma)], 0.0);
    }
    loss.total = total.value();
    Ok((total, loss))
}

/// One prepared training example.
struct Example {
    features: Vec<f64>,
    target: Vec<f64>,
    ann: SampleAnnotation,
}

/// Batch loss and gradient over the network parameters.
fn batch_objective(
    template: &BodyTemplate,
    net: &Mlp,
    batch: &[&Example],
    cfg: &RegressorConfig,
) -> Result<(ConvLoss, Vec<f64>)> {
    let b = batch.len();
    let x: Vec<f64> = batch.iter().flat_map(|e| e.features.iter().copied()).collect();
    let (y, cache) = net.forward_cached(&x, b)?;
    let mut d_out = vec![0.0; y.len()];
    let mut mean = ConvLoss::default();
    let inv = 1.0 / b as f64;
    for (i, e) in batch.iter().enumerate() {
        let tape = Tape::new();
        let vars = tape.vars(&y[i * REGRESSOR_DIM..(i + 1) * REGRESSOR_DIM]);
        let (total, loss) = conv_terms(&tape, template, &vars, &e.target, &e.ann, cfg)?;
        let g = tape.backward(total)?.wrt_all(&vars);
        for (d, gi) in d_out[i * REGRESSOR_DIM..].iter_mut().zip(&g) {
            *d = gi * inv;
        }
        mean.regress += loss.regress * inv;
        mean.dense += loss.dense * inv;
        mean.keypoint += loss.keypoint * inv;
        mean.total += loss.total * inv;
    }
    let (grad, _) = net.backward(&cache, &d_out)?;
    Ok((mean, grad))
}

fn prepare(template: &BodyTemplate, spec: &FeatureSpec, samples: &[SampleAnnotation], store: &ThetaStore) -> Result<Vec<Example>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, ann)| {
            let theta = store.get(&i).ok_or_else(|| contract!("no registered parameters for training sample {i}"))?;
            Ok(Example {
                features: features(template, ann, spec)?,
                target: to_frame(&to_regressor_space(theta), ann),
                ann: framed(ann),
            })
        })
        .collect()
}

/// Image-normalized regression targets of the stored parameters.
pub fn frame_targets(samples: &[SampleAnnotation], store: &ThetaStore) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, ann)| {
            let theta = store.get(&i).ok_or_else(|| contract!("no registered parameters for training sample {i}"))?;
            Ok(to_frame(&to_regressor_space(theta), ann))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RegressorHistory {
    /// Mean batch losses per epoch.
    pub epochs: Vec<ConvLoss>,
}

/// Adam over mini-batches; sample `i` is supervised by `store[i]`.
pub fn train_regressor(
    template: &BodyTemplate,
    reg: &mut Regressor,
    samples: &[SampleAnnotation],
    store: &ThetaStore,
    cfg: &RegressorConfig,
) -> Result<RegressorHistory> {
    cfg.validate()?;
    reg.validate()?;
    if samples.is_empty() {
        return Err(contract!("regressor training set is empty"));
    }
    let examples = prepare(template, &reg.spec, samples, store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate, reg.net.params().len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = RegressorHistory::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = ConvLoss::default();
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grad) = batch_objective(template, &reg.net, &batch, cfg)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("regressor loss in epoch {epoch}")));
            }
            adam.step(reg.net.params_mut(), &grad)?;
            sum.regress += loss.regress;
            sum.dense += loss.dense;
            sum.keypoint += loss.keypoint;
            sum.total += loss.total;
            batches += 1.0;
        }
        history.epochs.push(ConvLoss {
            regress: sum.regress / batches,
            dense: sum.dense / batches,
            keypoint: sum.keypoint / batches,
            total: sum.total / batches,
        });
    }
    Ok(history)
}
