//! Trains against the two-sphere reference scene and reports occupancy IoU.
//!
//! `cargo run --release -p voxinit-core --example two_spheres -- [iterations]`

use std::time::Instant;

use voxinit::encode::{DeskTextEncoder, TextEncoder};
use voxinit::guidance::SyntheticGuidance;
use voxinit::toy;
use voxinit::train::{TrainConfig, Trainer};

fn main() -> voxinit::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
    let mut cfg = TrainConfig {
        iterations,
        ..TrainConfig::default()
    };
    if let Some(n) = env("N") {
        cfg.resolution = n as usize;
    }
    if let Some(g) = env("G") {
        cfg.grids = g as usize;
    }
    if let Some(lr) = env("LR") {
        cfg.optimizer.lr = lr;
    }
    if let Some(v) = env("VIEWS") {
        cfg.views_per_step = v as usize;
    }
    if let Some(a) = env("A0") {
        cfg.initial_opacity = a;
    }
    let targets = toy::two_sphere_targets(
        cfg.resolution,
        cfg.extent,
        &cfg.orbit,
        cfg.render.width,
        cfg.render.height,
    )?;
    let provider = SyntheticGuidance::new(targets);
    let prompt = "a red ball next to a blue ball";
    let text = DeskTextEncoder::new(cfg.net.d_text, cfg.seed).embed(prompt)?;
    let mut trainer = Trainer::new(prompt, cfg.clone(), text, &provider)?;
    let start = Instant::now();
    while trainer.step_count() < cfg.iterations {
        let m = trainer.step()?;
        if m.step % 25 == 0 || m.step == 1 {
            let field = trainer.scene().field();
            let truth = toy::ground_truth_occupancy(field);
            let t: Vec<bool> = truth.iter().map(Option::is_some).collect();
            let p: Vec<bool> = field.opacity().iter().map(|&a| a >= cfg.tau).collect();
            println!(
                "step {:4}  {:6.1}s  |res| {:.4}  mean α {:.3}  occupied {:5}  IoU {:.3}  color err {:.3}",
                m.step,
                start.elapsed().as_secs_f64(),
                m.residual_norm,
                m.mean_opacity,
                m.occupied,
                toy::occupancy_iou(&p, &t),
                toy::true_positive_color_error(field, &p, &truth).unwrap_or(f64::NAN),
            );
        }
    }
    let field = trainer.scene().field();
    let truth = toy::ground_truth_occupancy(field);
    let h = field.spacing();
    let (mut fn_in, mut fn_surf, mut fp) = (0, 0, 0);
    for (i, c) in field.centers().iter().enumerate() {
        let occ = field.opacity()[i] >= cfg.tau;
        let depth = toy::SPHERES
            .iter()
            .map(|(s, _)| toy::SPHERE_RADIUS - (0..3).map(|a| (c[a] - s[a]).powi(2)).sum::<f64>().sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        match (occ, truth[i].is_some()) {
            (false, true) if depth > 2.0 * h => fn_in += 1,
            (false, true) => fn_surf += 1,
            (true, false) => fp += 1,
            _ => {}
        }
    }
    println!("missed interior {fn_in}  missed surface {fn_surf}  false positives {fp}  truth {}",
        truth.iter().filter(|t| t.is_some()).count());
    Ok(())
}
