use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxinit::encode::{DeskTextEncoder, TextEncoder};
use voxinit::guidance::Scene;
use voxinit::net::{network_backward, network_forward, NetShape, NetworkParams};
use voxinit::render::{render_backward, splat_render, CameraPose};

fn main() -> voxinit::Result<()> {
    let shape = NetShape::default();
    let text = DeskTextEncoder::new(64, 0).embed("a red ball next to a blue ball")?;
    let mut scene = Scene::new(32, Default::default(), 16, 6, text)?;
    let params = NetworkParams::init(shape, &mut ChaCha8Rng::seed_from_u64(0));
    let cam = CameraPose::orbit(30.0, 10.0, 2.2, 49.1, 64, 64)?;
    for _ in 0..2 {
        let t = Instant::now();
        let (out, tape) = network_forward(&params, scene.inputs())?;
        let t_fwd = t.elapsed();
        scene.decode(&params)?;
        let t = Instant::now();
        let (img, rt) = splat_render(scene.field(), &cam)?;
        let t_render = t.elapsed();
        let seed: Vec<[f64; 3]> = img.color.iter().map(|c| c.map(|v| v - 0.1)).collect();
        let t = Instant::now();
        let (da, dc) = render_backward(&rt, scene.field(), &seed)?;
        let t_rb = t.elapsed();
        let t = Instant::now();
        let _g = network_backward(&params, scene.inputs(), &tape, &da, &dc)?;
        let t_nb = t.elapsed();
        println!(
            "net fwd {:?}  render {:?} ({} entries)  render bwd {:?}  net bwd {:?}  ({} voxels)",
            t_fwd, t_render, rt.contributions(), t_rb, t_nb, out.opacity.len()
        );
    }
    Ok(())
}
