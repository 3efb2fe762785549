use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use crate::encode::TextEmbedding;
use crate::error::{Error, Result};
use crate::field::{write_ply_file, InitPointCloud};
use crate::guidance::{GuidanceProvider, GuidanceRequest, GuidanceResidual, Scene};
use crate::net::NetworkParams;
use crate::render::{sample_camera, splat_render, write_png, CameraPose, RenderedImage};

const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

/// Azimuth and elevation, in degrees, of the fixed snapshot camera.
pub const SNAPSHOT_VIEW: (f64, f64) = (30.0, 20.0);

/// Scalars logged after every step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub residual_norm: f64,
    pub residual_mean_abs: f64,
    pub mean_opacity: f64,
    pub occupied: usize,
    pub timestep: f64,
    pub weight: f64,
    pub retries: usize,
}

/// Optimization state of one run.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    prompt: String,
    scene: Scene,
    params: NetworkParams,
    adam: Adam,
    rng: ChaCha8Rng,
    step: usize,
    provider: &'a dyn GuidanceProvider,
    views: Option<Vec<CameraPose>>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        prompt: &str,
        cfg: TrainConfig,
        text: TextEmbedding,
        provider: &'a dyn GuidanceProvider,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        init_rng.set_stream(INIT_STREAM);
        let mut params = NetworkParams::init(cfg.net, &mut init_rng);
        let a = cfg.initial_opacity;
        params.shape_decoder.out.bias[0] = (a / (1.0 - a)).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(TRAIN_STREAM);
        let adam = Adam::new(cfg.optimizer, params.count());
        Self::assemble(prompt, cfg, text, provider, params, adam, rng, 0)
    }

    /// Continues a run from `ckpt` under `cfg`, which must carry the same
    /// config echo.
    pub fn resume(ckpt: Checkpoint, cfg: TrainConfig, provider: &'a dyn GuidanceProvider) -> Result<Self> {
        cfg.validate()?;
        ckpt.ensure_compatible(&cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(TRAIN_STREAM);
        rng.set_word_pos(ckpt.rng_word_pos);
        let mut adam = Adam::new(cfg.optimizer, ckpt.params.count());
        adam.m = ckpt.adam_m;
        adam.v = ckpt.adam_v;
        adam.steps = ckpt.adam_steps;
        Self::assemble(&ckpt.prompt, cfg, ckpt.text, provider, ckpt.params, adam, rng, ckpt.step)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        prompt: &str,
        cfg: TrainConfig,
        text: TextEmbedding,
        provider: &'a dyn GuidanceProvider,
        params: NetworkParams,
        adam: Adam,
        rng: ChaCha8Rng,
        step: usize,
    ) -> Result<Self> {
        if text.dims() != cfg.net.d_text {
            return Err(Error::invalid(format!(
                "text embedding width {} differs from configured {}",
                text.dims(),
                cfg.net.d_text
            )));
        }
        let scene = Scene::new(cfg.resolution, cfg.extent, cfg.grids, cfg.net.frequencies, text)?;
        let views = provider.fixed_views();
        if let Some(v) = &views {
            if v.iter().any(|c| c.width != cfg.render.width || c.height != cfg.render.height) {
                return Err(Error::invalid("target views do not match the configured render size"));
            }
        }
        Ok(Trainer {
            cfg,
            prompt: prompt.to_string(),
            scene,
            params,
            adam,
            rng,
            step,
            provider,
            views,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    fn next_camera(&mut self) -> Result<CameraPose> {
        match &self.views {
            Some(v) => Ok(v[self.rng.random_range(0..v.len())]),
            None => sample_camera(
                &mut self.rng,
                &self.cfg.orbit,
                self.cfg.render.width,
                self.cfg.render.height,
            ),
        }
    }

    fn query(
        &self,
        image: &RenderedImage,
        camera: &CameraPose,
        t: f64,
        seed: u64,
    ) -> Result<(GuidanceResidual, usize)> {
        let mut attempt = 0;
        loop {
            let request = GuidanceRequest {
                image,
                camera,
                prompt: &self.prompt,
                timestep: t,
                seed,
            };
            match self.provider.residual(request) {
                Ok(r) => {
                    if r.residual.len() != image.color.len() {
                        let e = Error::Protocol("residual size differs from rendered image".into());
                        if attempt >= self.cfg.bridge.retries {
                            return Err(e);
                        }
                    } else {
                        return Ok((r, attempt));
                    }
                }
                Err(e) if e.is_retryable() && attempt < self.cfg.bridge.retries => {}
                Err(e) => return Err(e),
            }
            attempt += 1;
        }
    }

    /// One optimization step: sample view(s), decode the field once, render
    /// every view, query guidance, back-propagate and apply Adam.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let views = self.cfg.views_per_step;
        let mut cameras = Vec::with_capacity(views);
        let mut samples = Vec::with_capacity(views);
        for _ in 0..views {
            cameras.push(self.next_camera()?);
            let t = self.rng.random_range(self.cfg.timestep_min..=self.cfg.timestep_max);
            samples.push((t, self.rng.next_u64()));
        }
        self.scene.forward_views(&self.params, &cameras)?;
        let op = self.scene.field().opacity();
        let mean_opacity = op.iter().sum::<f64>() / op.len() as f64;
        let occupied = op.iter().filter(|&&a| a >= self.cfg.tau).count();

        let mut residuals = Vec::with_capacity(views);
        let (mut norm, mut mean_abs, mut weight, mut timestep) = (0.0, 0.0, 0.0, 0.0);
        let mut retries = 0;
        let recorded = &self
            .scene
            .recorded()
            .ok_or_else(|| Error::state("no recorded forward pass"))?
            .views;
        for (view, &(t, seed)) in recorded.iter().zip(&samples) {
            let (residual, tries) = self.query(&view.image, &view.camera, t, seed)?;
            retries += tries;
            let m = residual.mean_abs();
            if !m.is_finite() || m > self.cfg.divergence_limit {
                return Err(Error::Diverged(format!(
                    "mean |residual| {m} exceeds {} at step {}",
                    self.cfg.divergence_limit,
                    self.step + 1
                )));
            }
            norm += residual.norm() / views as f64;
            mean_abs += m / views as f64;
            weight += residual.weight / views as f64;
            timestep += t / views as f64;
            residuals.push(residual);
        }
        let mut grads = self.scene.sds_apply_views(&self.params, &residuals)?;
        if views > 1 {
            grads.scale(1.0 / views as f64);
        }
        if !grads.is_finite() {
            return Err(Error::Diverged(format!("non-finite gradient at step {}", self.step + 1)));
        }
        self.adam.step(&mut self.params, &grads);
        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            residual_norm: norm,
            residual_mean_abs: mean_abs,
            mean_opacity,
            occupied,
            timestep,
            weight,
            retries,
        })
    }

    /// Decodes the field with the current parameters and filters it at `τ`.
    pub fn extract(&mut self) -> Result<InitPointCloud> {
        self.scene.decode(&self.params)?;
        self.scene.field().filter_occupied(self.cfg.tau)
    }

    /// Renders the current field from `camera` without recording gradients.
    pub fn render_view(&mut self, camera: &CameraPose) -> Result<RenderedImage> {
        self.scene.decode(&self.params)?;
        Ok(splat_render(self.scene.field(), camera)?.0)
    }

    pub fn snapshot_camera(&self) -> Result<CameraPose> {
        CameraPose::orbit(
            SNAPSHOT_VIEW.0,
            SNAPSHOT_VIEW.1,
            self.cfg.orbit.radius,
            self.cfg.orbit.fov_deg,
            self.cfg.render.width,
            self.cfg.render.height,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            step: self.step,
            prompt: self.prompt.clone(),
            text: self.scene.text().clone(),
            params: self.params.clone(),
            rng_word_pos: self.rng.get_word_pos(),
            adam_steps: self.adam.steps,
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
        }
    }
}

/// Output of a complete run.
#[derive(Debug)]
pub struct TrainReport {
    pub cloud: InitPointCloud,
    pub metrics: Vec<StepMetrics>,
    pub checkpoint: Checkpoint,
}

/// Where a run writes its artifacts.
#[derive(Clone, Debug)]
pub struct OutputDir(pub PathBuf);

impl OutputDir {
    pub fn metrics(&self) -> PathBuf {
        self.0.join("metrics.jsonl")
    }
    pub fn snapshots(&self) -> PathBuf {
        self.0.join("snapshots")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.0.join("checkpoint.vxck")
    }
    pub fn cloud(&self) -> PathBuf {
        self.0.join("init.ply")
    }
}

/// Runs `trainer` to the configured iteration budget, then extracts the
/// point cloud. With `out` set, writes `metrics.jsonl`, `snapshots/`,
/// `checkpoint.vxck` and `init.ply` there.
pub fn run_to_completion(trainer: &mut Trainer<'_>, out: Option<&Path>) -> Result<TrainReport> {
    let out = out.map(|p| OutputDir(p.to_path_buf()));
    let mut log = match &out {
        Some(o) => {
            fs::create_dir_all(&o.0)?;
            let append = trainer.step_count() > 0;
            let file = fs::OpenOptions::new()
                .create(true)
                .append(append)
                .write(true)
                .truncate(!append)
                .open(o.metrics())?;
            Some(BufWriter::new(file))
        }
        None => None,
    };
    let cfg = trainer.config().clone();
    let mut metrics = Vec::new();
    while trainer.step_count() < cfg.iterations {
        let m = trainer.step()?;
        if let (Some(log), Some(o)) = (&mut log, &out) {
            let line = serde_json::to_string(&m).map_err(|e| Error::Data(e.to_string()))?;
            writeln!(log, "{line}")?;
            if cfg.snapshot_every > 0 && m.step % cfg.snapshot_every == 0 {
                fs::create_dir_all(o.snapshots())?;
                let cam = trainer.snapshot_camera()?;
                let img = trainer.render_view(&cam)?;
                write_png(&img, &o.snapshots().join(format!("step_{:05}.png", m.step)))?;
            }
            if cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0 {
                trainer.checkpoint().save(&o.checkpoint())?;
            }
        }
        metrics.push(m);
    }
    if let Some(log) = &mut log {
        log.flush()?;
    }
    let cloud = trainer.extract()?;
    let checkpoint = trainer.checkpoint();
    if let Some(o) = &out {
        checkpoint.save(&o.checkpoint())?;
        write_ply_file(&cloud, &o.cloud(), false)?;
    }
    Ok(TrainReport {
        cloud,
        metrics,
        checkpoint,
    })
}

/// Full training run from scratch.
pub fn train_init(
    prompt: &str,
    cfg: TrainConfig,
    text: TextEmbedding,
    provider: &dyn GuidanceProvider,
    out: Option<&Path>,
) -> Result<TrainReport> {
    let mut trainer = Trainer::new(prompt, cfg, text, provider)?;
    run_to_completion(&mut trainer, out)
}

/// Decodes the field stored in `ckpt` and renders it from `camera`.
pub fn render_checkpoint(ckpt: &Checkpoint, camera: &CameraPose) -> Result<RenderedImage> {
    let cfg = &ckpt.config;
    let mut scene = Scene::new(
        cfg.resolution,
        cfg.extent,
        cfg.grids,
        cfg.net.frequencies,
        ckpt.text.clone(),
    )?;
    scene.decode(&ckpt.params)?;
    Ok(splat_render(scene.field(), camera)?.0)
}
