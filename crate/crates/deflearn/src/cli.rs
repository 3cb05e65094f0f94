//! Command-line driver. Exit codes: 0 success, 1 usage, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use deflearn_core::body::{humanoid, pose_body, BodyParams, BodyTemplate};
use deflearn_core::camera::{gram_schmidt, project_with};
use deflearn_core::learn::{
    frame_targets, run_round, train_regressor, DeformConfig, DeformData, Registrar, Regressor, RegressorConfig,
    ThetaStore, TrainState,
};
use deflearn_core::metrics::evaluate;
use deflearn_core::prior::{train_prior, Pose2D, PosePrior, PriorConfig, SkeletonStats};
use deflearn_core::regist::{RegistConfig, SampleAnnotation};
use deflearn_core::synth::synth_dataset;
use log::{info, warn};

use crate::checkpoint;
use crate::config::{DepthSource, RunConfig};
use crate::dense::{grid_to_correspondences, PixelGrid};
use crate::error::{Error, Result};
use crate::formats::{
    prior_rows, read_dataset, read_prior, read_regressor, read_template, read_theta, regressor_rows, write_csv, Dataset,
    EvalRow, FitRow, SampleRecord,
};
use crate::json;
use crate::mesh::{svg_overlay, write_obj};
use crate::parallel::RayonRegistrar;

#[derive(Debug, Parser)]
#[command(name = "deflearn", version, about = "Body-model registration and deform-and-learn training")]
pub struct Cli {
    /// Run configuration (JSON); defaults apply to missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run seed, added to every component seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Registration worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a config key, e.g. `--set deform.rounds=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth,
    /// Train the multi-view adversarial pose prior on dataset keypoints.
    TrainPrior,
    /// Fit the body model to every dataset sample.
    Register,
    /// Train the parameter regressor on fitted parameters.
    TrainRegressor,
    /// Alternate registration and regressor training, checkpointing each round.
    DeformLearn {
        /// Continue after the last complete round found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Predict with the regressor, then refine by registration.
    Refine,
    /// Compare predicted parameters with ground truth.
    Eval,
    /// Write the posed mesh as OBJ (and optionally an SVG overlay).
    ExportMesh,
    /// Convert a part/UV pixel grid into dense correspondences.
    ConvertDense,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Defaults, then the config file, then `--set`, then explicit flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.set(s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let ctx = Context { template: load_template(&cfg)?, cfg };
    match &cli.command {
        Command::Synth => ctx.synth(),
        Command::TrainPrior => ctx.train_prior(),
        Command::Register => ctx.register(),
        Command::TrainRegressor => ctx.train_regressor(),
        Command::DeformLearn { resume } => ctx.deform_learn(*resume),
        Command::Refine => ctx.refine(),
        Command::Eval => ctx.eval(),
        Command::ExportMesh => ctx.export_mesh(),
        Command::ConvertDense => ctx.convert_dense(),
    }
}

fn load_template(cfg: &RunConfig) -> Result<BodyTemplate> {
    match &cfg.paths.template {
        Some(p) => read_template(p),
        None => Ok(humanoid(cfg.humanoid)?),
    }
}

struct Context {
    cfg: RunConfig,
    template: BodyTemplate,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn dataset(&self) -> Result<Dataset> {
        read_dataset(&self.cfg.paths.dataset, &self.template)
    }

    fn registrar(&self) -> Result<RayonRegistrar> {
        RayonRegistrar::new(self.cfg.threads)
    }

    /// Annotations with keypoint depths taken from the configured source.
    fn annotations(&self, data: &Dataset) -> Result<Vec<SampleAnnotation>> {
        let mut anns = data.annotations();
        match self.cfg.data.depths {
            DepthSource::Annotation => {}
            DepthSource::None => anns.iter_mut().for_each(|a| a.gan_depths = None),
            DepthSource::Prior => {
                let prior = read_prior(&self.cfg.paths.prior)?;
                let mut lifted = 0;
                for a in &mut anns {
                    a.gan_depths = prior.lift_keypoints(&a.keypoints)?;
                    lifted += usize::from(a.gan_depths.is_some());
                }
                info!("lifted keypoint depths for {lifted} of {} samples", anns.len());
            }
        }
        Ok(anns)
    }

    fn synth(&self) -> Result<()> {
        let c = &self.cfg.synth;
        let samples = synth_dataset(&self.template, c.count, &c.generator, self.cfg.seed)?;
        let data = Dataset {
            samples: samples.into_iter().map(|s| SampleRecord { annotation: s.annotation, truth: Some(s.truth) }).collect(),
        };
        let path = self.out("dataset.json");
        json::write(&path, &data)?;
        info!("wrote {} samples to {}", data.samples.len(), path.display());
        Ok(())
    }

    fn train_prior(&self) -> Result<()> {
        let data = self.dataset()?;
        let stats = SkeletonStats::from_template(&self.template)?;
        let mut poses = Vec::new();
        for (i, s) in data.samples.iter().enumerate() {
            let kp = &s.annotation.keypoints;
            let visible: Vec<bool> = kp.iter().map(|k| k.visible).collect();
            if visible.iter().any(|v| !v) {
                continue;
            }
            let points: Vec<[f64; 2]> = kp.iter().map(|k| k.position).collect();
            match Pose2D::normalize(&points, &visible, &stats) {
                Ok((p, _)) => poses.push(p),
                Err(e) => warn!("sample {i} skipped: {e}"),
            }
        }
        info!("training the pose prior on {} of {} poses", poses.len(), data.samples.len());
        let p = &self.cfg.prior;
        let tc = PriorConfig { seed: self.cfg.seeded(p.training.seed), ..p.training.clone() };
        let mut prior = PosePrior::new(stats, p.hidden, p.layers, tc.seed)?;
        let history = train_prior(&mut prior, &poses, &tc)?;
        json::write(&self.out("prior.json"), &prior)?;
        let (steps, sweeps) = prior_rows(&history);
        write_csv(&self.out("prior_history.csv"), &steps)?;
        write_csv(&self.out("prior_views.csv"), &sweeps)?;
        if let Some(last) = history.steps.last() {
            info!("final step: L_adv^G {:.4}, L_D {:.4}, L_ratio {:.4}, L_sym {:.4}", last.generator_adv, last.discriminator, last.ratio, last.sym);
        }
        Ok(())
    }

    /// Register `anns`, write the fitted parameters and per-sample losses, and
    /// fail after writing if any sample failed.
    fn register_and_write(&self, anns: &[SampleAnnotation], init: Option<&[BodyParams]>, rc: &RegistConfig, theta: &str, losses: &str) -> Result<ThetaStore> {
        let fits = self.registrar()?.register(&self.template, anns, init, rc)?;
        let mut store = ThetaStore::new();
        let mut rows = Vec::new();
        let mut failed = Vec::new();
        for (i, fit) in fits.into_iter().enumerate() {
            match fit {
                Ok(f) => {
                    rows.push(FitRow::new(i, &f));
                    store.insert(i, f.params);
                }
                Err(e) => {
                    warn!("sample {i}: {e}");
                    failed.push(i);
                }
            }
        }
        json::write(&self.out(theta), &store)?;
        write_csv(&self.out(losses), &rows)?;
        info!("registered {} samples, {} failed", store.len(), failed.len());
        if !failed.is_empty() {
            return Err(Error::Core(deflearn_core::Error::NonFinite(format!("registration failed for samples {failed:?}"))));
        }
        Ok(store)
    }

    fn register(&self) -> Result<()> {
        let data = self.dataset()?;
        let anns = self.annotations(&data)?;
        let init = match &self.cfg.paths.init {
            Some(p) => {
                let store = read_theta(p)?;
                let v = (0..anns.len())
                    .map(|i| store.get(&i).cloned().ok_or_else(|| Error::format(p, format!("sample {i}"), "missing initialization")))
                    .collect::<Result<Vec<_>>>()?;
                Some(v)
            }
            None => None,
        };
        self.register_and_write(&anns, init.as_deref(), &self.cfg.regist, "theta.json", "regist.csv")?;
        Ok(())
    }

    fn deform_config(&self) -> DeformConfig {
        let d = &self.cfg.deform;
        DeformConfig {
            seed: self.cfg.seeded(d.seed),
            regressor: RegressorConfig { seed: self.cfg.seeded(d.regressor.seed), ..d.regressor },
            ..d.clone()
        }
    }

    fn train_regressor(&self) -> Result<()> {
        let data = self.dataset()?;
        let theta_path = &self.cfg.paths.theta;
        let store = read_theta(theta_path)?;
        let mut samples = Vec::new();
        let mut targets = ThetaStore::new();
        for (&i, p) in &store {
            let s = data.samples.get(i).ok_or_else(|| Error::format(theta_path, format!("sample {i}"), "not in the dataset"))?;
            targets.insert(samples.len(), p.clone());
            samples.push(s.annotation.clone());
        }
        let dc = self.deform_config();
        let mut reg = Regressor::new(dc.features, dc.hidden, dc.layers, dc.seed)?;
        reg.warm_start(&frame_targets(&samples, &targets)?, dc.warm_start_gain)?;
        let history = train_regressor(&self.template, &mut reg, &samples, &targets, &dc.regressor)?;
        json::write(&self.out("regressor.json"), &reg)?;
        write_csv(&self.out("regressor_history.csv"), &regressor_rows(&history))?;
        if let Some(l) = history.epochs.last() {
            info!("final epoch: L_conv {:.5} (regress {:.5}, dense {:.5}, keypoint {:.5})", l.total, l.regress, l.dense, l.keypoint);
        }
        Ok(())
    }

    fn deform_learn(&self, resume: bool) -> Result<()> {
        let data = self.dataset()?;
        let anns = self.annotations(&data)?;
        let n = anns.len();
        let heldout = self.cfg.data.heldout;
        if heldout >= n {
            return Err(Error::Usage(format!("data.heldout = {heldout} leaves no training sample out of {n}")));
        }
        let truth = data.truths();
        let (train, held) = anns.split_at(n - heldout);
        let split = truth.as_ref().map(|t| t.split_at(n - heldout));
        let d = DeformData { train, heldout: held, train_truth: split.map(|s| s.0), heldout_truth: split.map(|s| s.1) };
        let dc = self.deform_config();
        let out = &self.cfg.out;
        let mut state = match resume {
            true => checkpoint::load_latest(out)?,
            false => {
                clear_rounds(out)?;
                None
            }
        };
        let state = match state.take() {
            Some(s) => {
                info!("resuming after round {}", s.round);
                s
            }
            None => TrainState::new(&dc)?,
        };
        let state = self.rounds(&d, &dc, state)?;
        json::write(&self.out("theta_anno.json"), &state.theta_anno)?;
        json::write(&self.out("regressor.json"), &state.regressor)?;
        Ok(())
    }

    fn rounds(&self, d: &DeformData<'_>, dc: &DeformConfig, mut state: TrainState) -> Result<TrainState> {
        let registrar = self.registrar()?;
        while state.round < dc.rounds {
            run_round(&self.template, d, dc, &registrar as &dyn Registrar, &mut state)?;
            checkpoint::save_round(&self.cfg.out, &state)?;
            let r = state.history.last().expect("round recorded");
            let mm = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
            info!(
                "round {}: loss {:.5}, MPJPE init {} → registered {}, regressor train {} / held-out {}",
                r.round,
                r.regist_loss,
                mm(r.init_mpjpe),
                mm(r.regist_mpjpe),
                mm(r.train_pred_mpjpe),
                mm(r.heldout_mpjpe)
            );
        }
        Ok(state)
    }

    fn refine(&self) -> Result<()> {
        let data = self.dataset()?;
        let anns = self.annotations(&data)?;
        let reg = read_regressor(&self.cfg.paths.regressor)?;
        let pred = reg.predict_all(&self.template, &anns)?;
        json::write(&self.out("theta_pred.json"), &pred.iter().cloned().enumerate().collect::<ThetaStore>())?;
        self.register_and_write(&anns, Some(&pred), &self.cfg.refine, "theta_refined.json", "refine.csv")?;
        Ok(())
    }

    fn eval(&self) -> Result<()> {
        let pred_path = &self.cfg.paths.theta;
        let pred = read_theta(pred_path)?;
        let data = match (&self.cfg.paths.truth, self.cfg.paths.dataset.is_file()) {
            (Some(_), false) => None,
            _ => Some(self.dataset()?),
        };
        let truth: ThetaStore = match (&self.cfg.paths.truth, &data) {
            (Some(p), _) => read_theta(p)?,
            (None, Some(d)) => d.samples.iter().enumerate().filter_map(|(i, s)| s.truth.clone().map(|t| (i, t))).collect(),
            (None, None) => unreachable!("dataset is loaded when no truth file is given"),
        };
        let (mut p, mut g, mut vs) = (Vec::new(), Vec::new(), Vec::new());
        for (i, params) in &pred {
            let Some(t) = truth.get(i) else { continue };
            let vertices = match data.as_ref().and_then(|d| d.samples.get(*i)) {
                Some(s) => s.annotation.dense.iter().map(|c| c.vertex).collect(),
                None => (0..self.template.vertex_count()).collect(),
            };
            p.push(params.clone());
            g.push(t.clone());
            vs.push(vertices);
        }
        if p.is_empty() {
            return Err(Error::format(pred_path, "samples", "no prediction has a ground-truth counterpart"));
        }
        let row = EvalRow::from(&evaluate(&self.template, &p, &g, &vs)?);
        write_csv(&self.out("eval.csv"), &[row])?;
        println!(
            "samples {} | MPJPE {:.3} mm | vertex error {:.3} mm | per-pixel {:.3} px",
            row.samples, row.mpjpe_mm, row.per_vertex_mm, row.per_pixel
        );
        Ok(())
    }

    fn export_mesh(&self) -> Result<()> {
        let t = &self.template;
        let Some(i) = self.cfg.export.sample else {
            write_obj(&self.out("mesh_rest.obj"), t.vertices(), t.faces())?;
            if self.cfg.export.svg {
                let (proj, size) = fit_view(t.vertices());
                json::write_text(&self.out("mesh_rest.svg"), &svg_overlay(size, &proj, t.faces(), None))?;
            }
            return Ok(());
        };
        let path = &self.cfg.paths.theta;
        let params = read_theta(path)?
            .remove(&i)
            .ok_or_else(|| Error::format(path, format!("sample {i}"), "no such entry"))?;
        let posed = pose_body(t, &params.pose, &params.scales)?;
        write_obj(&self.out(&format!("mesh_{i}.obj")), &posed.vertex_world, t.faces())?;
        if self.cfg.export.svg {
            let r = gram_schmidt(&params.rotation)?;
            let proj: Vec<[f64; 2]> = posed.vertex_world.iter().map(|&v| project_with(&r, params.scale, params.translation, v)).collect();
            let ann = match self.cfg.paths.dataset.is_file() {
                true => self.dataset()?.samples.get(i).map(|s| s.annotation.clone()),
                false => None,
            };
            let size = ann.as_ref().map_or_else(|| fit_view(&posed.vertex_world).1, |a| [a.width, a.height]);
            json::write_text(&self.out(&format!("mesh_{i}.svg")), &svg_overlay(size, &proj, t.faces(), ann.as_ref()))?;
        }
        Ok(())
    }

    fn convert_dense(&self) -> Result<()> {
        let path = self.cfg.paths.grid.as_ref().ok_or_else(|| Error::Usage("convert-dense needs paths.grid".into()))?;
        let grid: PixelGrid = json::read(path)?;
        let dense = grid_to_correspondences(path, &grid, &self.template)?;
        json::write(&self.out("dense.json"), &dense)?;
        info!("{} correspondences from a {}×{} grid", dense.len(), grid.width, grid.height);
        Ok(())
    }
}

/// Orthographic front view of `points` scaled into a 512-pixel canvas.
fn fit_view(points: &[[f64; 3]]) -> (Vec<[f64; 2]>, [f64; 2]) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let k = 480.0 / extent;
    let proj = points.iter().map(|p| [16.0 + k * (p[0] - lo[0]), 16.0 + k * (p[1] - lo[1])]).collect();
    (proj, [512.0, 512.0])
}

/// Remove `round_k` checkpoints left by an earlier run.
fn clear_rounds(out: &Path) -> Result<()> {
    for k in 1..=checkpoint::completed_rounds(out) {
        let dir = checkpoint::round_dir(out, k);
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    Ok(())
}

