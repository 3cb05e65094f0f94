use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{generator_objective, log_sigmoid};
use super::{generate_depths_batch, rotate_project, Pose2D, PosePrior};
use crate::diff::tape::sigmoid;
use crate::diff::Adam;
use crate::error::{contract, Error, Result};

/// Viewing angles (degrees) under which lifted poses are judged.
pub const DEFAULT_VIEWS_DEG: [f64; 7] = [45.0, 60.0, 90.0, 135.0, 180.0, 235.0, 270.0];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PriorConfig {
    /// Weight of the adversarial term in the generator loss.
    pub epsilon: f64,
    pub views_deg: Vec<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` with a fixed number of updates.
    pub steps: Option<usize>,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            views_deg: DEFAULT_VIEWS_DEG.to_vec(),
            learning_rate: 2e-4,
            batch_size: 1024,
            epochs: 60,
            steps: None,
            seed: 0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views_deg.is_empty() || self.views_deg.iter().any(|v| !v.is_finite()) {
            return Err(contract!("view set must be a non-empty list of finite angles"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(contract!("epsilon must be finite and non-negative"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(contract!("prior training needs a finite learning rate and a positive batch size"));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, dataset: usize) -> usize {
        dataset.div_ceil(self.batch_size).max(1)
    }

    pub fn total_steps(&self, dataset: usize) -> usize {
        self.steps.unwrap_or(self.epochs * self.steps_per_epoch(dataset))
    }
}

/// Losses of one alternating update, measured before the generator step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PriorStep {
    pub generator_adv: f64,
    pub discriminator: f64,
    pub ratio: f64,
    pub sym: f64,
}

/// Generator adversarial loss on a fixed evaluation batch, one value per view.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ViewSweep {
    pub step: usize,
    pub generator_adv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PriorHistory {
    pub steps: Vec<PriorStep>,
    pub sweeps: Vec<ViewSweep>,
}

fn view_sweep(prior: &PosePrior, eval: &[Pose2D], views: &[f64], step: usize) -> Result<ViewSweep> {
    let n = prior.stats.keypoints;
    let z = generate_depths_batch(&prior.generator, eval)?;
    let mut generator_adv = Vec::with_capacity(views.len());
    for &phi in views {
        let x: Vec<f64> = eval.iter().zip(&z).flat_map(|(u, z)| rotate_project(u, z, phi)).flatten().collect();
        let lf = prior.discriminator.logits(&x, eval.len())?;
        debug_assert_eq!(x.len(), eval.len() * 2 * n);
        generator_adv.push(lf.iter().map(|&l| log_sigmoid(-l)).sum::<f64>() / lf.len() as f64);
    }
    Ok(ViewSweep { step, generator_adv })
}

/// Alternating discriminator / generator Adam updates.
///
/// Every pose in `data` must be fully visible. Each fake example in a batch
/// draws one view from the configured set; after every epoch the full view
/// set is swept over a fixed evaluation batch.
pub fn train_prior(prior: &mut PosePrior, data: &[Pose2D], config: &PriorConfig) -> Result<PriorHistory> {
    config.validate()?;
    prior.validate()?;
    if data.is_empty() {
        return Err(contract!("prior training set is empty"));
    }
    let n = prior.stats.keypoints;
    if let Some(i) = data.iter().position(|p| p.len() != n || !p.all_visible()) {
        return Err(contract!("training pose {i} is incomplete or has the wrong keypoint count"));
    }
    let views: Vec<f64> = config.views_deg.iter().map(|d| d.to_radians()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam_g = Adam::new(config.learning_rate, prior.generator.params().len());
    let mut adam_d = Adam::new(config.learning_rate, prior.discriminator.params().len());
    let b = config.batch_size;
    let eval = &data[..data.len().min(b)];
    let per_epoch = config.steps_per_epoch(data.len());
    let total = config.total_steps(data.len());
    let mut history = PriorHistory::default();
    for step in 0..total {
        let real: Vec<Pose2D> = (0..b).map(|_| data[rng.random_range(0..data.len())].clone()).collect();
        let fake: Vec<Pose2D> = (0..b).map(|_| data[rng.random_range(0..data.len())].clone()).collect();
        let phis: Vec<f64> = (0..b).map(|_| views[rng.random_range(0..views.len())]).collect();

        // discriminator: minimize −E[log D(real)] − E[log(1 − D(fake))]
        let z = generate_depths_batch(&prior.generator, &fake)?;
        let fake_x: Vec<f64> =
            fake.iter().zip(&z).zip(&phis).flat_map(|((u, z), &phi)| rotate_project(u, z, phi)).flatten().collect();
        let real_x: Vec<f64> = real.iter().flat_map(Pose2D::flatten).collect();
        let d = &prior.discriminator;
        let (lr, cache_r) = d.forward_cached(&real_x, b)?;
        let (lf, cache_f) = d.forward_cached(&fake_x, b)?;
        let inv_b = 1.0 / b as f64;
        let disc = -(lr.iter().map(|&l| log_sigmoid(l)).sum::<f64>() + lf.iter().map(|&l| log_sigmoid(-l)).sum::<f64>())
            * inv_b;
        let dr: Vec<f64> = lr.iter().map(|&l| -(1.0 - sigmoid(l)) * inv_b).collect();
        let df: Vec<f64> = lf.iter().map(|&l| sigmoid(l) * inv_b).collect();
        let (mut grad_d, _) = d.backward(&cache_r, &dr)?;
        let (grad_f, _) = d.backward(&cache_f, &df)?;
        grad_d.iter_mut().zip(&grad_f).for_each(|(a, b)| *a += b);
        if !disc.is_finite() || grad_d.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("discriminator loss at step {step}")));
        }
        adam_d.step(prior.discriminator.params_mut(), &grad_d)?;

        // generator against the updated discriminator
        let obj = generator_objective(&prior.generator, &prior.discriminator, &fake, &phis, &prior.stats, config.epsilon)?;
        if !obj.total.is_finite() || obj.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("generator loss at step {step}")));
        }
        adam_g.step(prior.generator.params_mut(), &obj.grad)?;
        history.steps.push(PriorStep { generator_adv: obj.adv, discriminator: disc, ratio: obj.ratio, sym: obj.sym });

        if (step + 1) % per_epoch == 0 || step + 1 == total {
            history.sweeps.push(view_sweep(prior, eval, &views, step + 1)?);
        }
    }
    Ok(history)
}
