//! Naive reference implementations used as oracles by the integration tests.
//! Everything here is plain loops over `Vec`s.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxinit::encode::TextEmbedding;
use voxinit::field::{Extent, VoxelGaussianField};
use voxinit::net::{AttentionParams, Decoder, NetShape, NetworkParams};
use voxinit::render::CameraPose;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn vecmat(x: &[f64], w: &Array2<f64>) -> Vec<f64> {
    let mut out = vec![0.0; w.ncols()];
    for (i, xi) in x.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += xi * w[[i, j]];
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let s = (var + 1e-5).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / s * gain[i] + bias[i])
        .collect()
}

pub fn voxel_grid(index: usize, n: usize, g: usize) -> usize {
    let (x, y, z) = (index % n, (index / n) % n, index / (n * n));
    let c = |i: usize| i * g / n;
    c(x) + g * (c(y) + g * c(z))
}

/// Grid-pooled self-attention with the projections applied per voxel and
/// then averaged, the literal form of the block.
pub fn gip(f: &Mat, n: usize, g: usize, p: &AttentionParams) -> (Mat, Mat) {
    let d = f[0].len();
    let t = g * g * g;
    let gain = p.norm.gain.to_vec();
    let bias = p.norm.bias.to_vec();
    let mut sums = vec![(vec![0.0; d], vec![0.0; d], vec![0.0; d], 0usize); t];
    for (i, row) in f.iter().enumerate() {
        let x = layer_norm(row, &gain, &bias);
        let (q, k, v) = (vecmat(&x, &p.w_q), vecmat(&x, &p.w_k), vecmat(&x, &p.w_v));
        let s = &mut sums[voxel_grid(i, n, g)];
        for j in 0..d {
            s.0[j] += q[j];
            s.1[j] += k[j];
            s.2[j] += v[j];
        }
        s.3 += 1;
    }
    let mean = |v: &Vec<f64>, c: usize| v.iter().map(|x| x / c as f64).collect::<Vec<_>>();
    let qs: Mat = sums.iter().map(|s| mean(&s.0, s.3)).collect();
    let ks: Mat = sums.iter().map(|s| mean(&s.1, s.3)).collect();
    let vs: Mat = sums.iter().map(|s| mean(&s.2, s.3)).collect();
    let mut weights = Vec::with_capacity(t);
    let mut grid_out = Vec::with_capacity(t);
    for q in &qs {
        let logits: Vec<f64> = ks.iter().map(|k| dot(q, k) / (d as f64).sqrt()).collect();
        let w = softmax(&logits);
        let mut a = vec![0.0; d];
        for (wj, v) in w.iter().zip(&vs) {
            for c in 0..d {
                a[c] += wj * v[c];
            }
        }
        grid_out.push(vecmat(&a, &p.w_o));
        weights.push(w);
    }
    let out = f
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let o = &grid_out[voxel_grid(i, n, g)];
            row.iter().zip(o).map(|(a, b)| a + b).collect()
        })
        .collect();
    (out, weights)
}

/// Plain self-attention over every voxel embedding.
pub fn full_self_attention(f: &Mat, p: &AttentionParams) -> Mat {
    let d = f[0].len();
    let gain = p.norm.gain.to_vec();
    let bias = p.norm.bias.to_vec();
    let xs: Mat = f.iter().map(|r| layer_norm(r, &gain, &bias)).collect();
    let ks: Mat = xs.iter().map(|x| vecmat(x, &p.w_k)).collect();
    let vs: Mat = xs.iter().map(|x| vecmat(x, &p.w_v)).collect();
    f.iter()
        .zip(&xs)
        .map(|(row, x)| {
            let q = vecmat(x, &p.w_q);
            let logits: Vec<f64> = ks.iter().map(|k| dot(&q, k) / (d as f64).sqrt()).collect();
            let w = softmax(&logits);
            let mut a = vec![0.0; d];
            for (wj, v) in w.iter().zip(&vs) {
                for c in 0..d {
                    a[c] += wj * v[c];
                }
            }
            let o = vecmat(&a, &p.w_o);
            row.iter().zip(&o).map(|(a, b)| a + b).collect()
        })
        .collect()
}

pub fn gtf(f: &Mat, text: &Mat, p: &AttentionParams) -> (Mat, Mat) {
    let d = f[0].len();
    let gain = p.norm.gain.to_vec();
    let bias = p.norm.bias.to_vec();
    let ks: Mat = text.iter().map(|y| vecmat(y, &p.w_k)).collect();
    let vs: Mat = text.iter().map(|y| vecmat(y, &p.w_v)).collect();
    let mut out = Vec::new();
    let mut weights = Vec::new();
    for row in f {
        let q = vecmat(&layer_norm(row, &gain, &bias), &p.w_q);
        let logits: Vec<f64> = ks.iter().map(|k| dot(&q, k) / (d as f64).sqrt()).collect();
        let w = softmax(&logits);
        let mut a = vec![0.0; d];
        for (wj, v) in w.iter().zip(&vs) {
            for c in 0..d {
                a[c] += wj * v[c];
            }
        }
        let o = vecmat(&a, &p.w_o);
        out.push(row.iter().zip(&o).map(|(a, b)| a + b).collect());
        weights.push(w);
    }
    (out, weights)
}

pub fn decoder(x: &[f64], p: &Decoder) -> Vec<f64> {
    let softplus = |v: f64| (1.0 + v.exp()).ln();
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let h: Vec<f64> = vecmat(x, &p.hidden.weight)
        .iter()
        .zip(p.hidden.bias.iter())
        .map(|(a, b)| softplus(a + b))
        .collect();
    vecmat(&h, &p.out.weight)
        .iter()
        .zip(p.out.bias.iter())
        .map(|(a, b)| sigmoid(a + b))
        .collect()
}

pub fn encode(c: &[f64; 3], frequencies: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for x in c {
        for l in 0..frequencies {
            let arg = 2f64.powi(l as i32) * std::f64::consts::PI * x;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    out
}

/// Full pipeline oracle: returns per-voxel `(opacity, rgb)`.
pub fn network(
    params: &NetworkParams,
    centers: &[[f64; 3]],
    n: usize,
    g: usize,
    text: &Mat,
) -> (Vec<f64>, Vec<[f64; 3]>) {
    let l = params.shape.frequencies;
    let mut f: Mat = centers
        .iter()
        .map(|c| {
            vecmat(&encode(c, l), &params.input.weight)
                .iter()
                .zip(params.input.bias.iter())
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect();
    for s in &params.stacks {
        f = gip(&f, n, g, &s.gip).0;
        f = gtf(&f, text, &s.gtf).0;
    }
    let opacity = f.iter().map(|x| decoder(x, &params.shape_decoder)[0]).collect();
    let color = f
        .iter()
        .map(|x| {
            let c = decoder(x, &params.color_decoder);
            [c[0], c[1], c[2]]
        })
        .collect();
    (opacity, color)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

pub fn random_attention(rng: &mut ChaCha8Rng, d: usize, d_kv: usize) -> AttentionParams {
    let mut p = AttentionParams::zeros(d, d_kv);
    let s = 1.0 / (d as f64).sqrt();
    p.norm.gain = p.norm.gain.mapv(|_| rng.random_range(0.5..1.5));
    p.norm.bias = p.norm.bias.mapv(|_| rng.random_range(-0.2..0.2));
    p.w_q = random_mat(rng, d, d, 3.0 * s);
    p.w_k = random_mat(rng, d_kv, d, 3.0 * s);
    p.w_v = random_mat(rng, d_kv, d, 3.0 * s);
    p.w_o = random_mat(rng, d, d, 3.0 * s);
    p
}

/// Initialized parameters with every entry, including norms and biases, jittered.
pub fn random_params(shape: NetShape, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetworkParams::init(shape, &mut rng);
    let mut flat = p.to_flat();
    for v in &mut flat {
        *v += rng.random_range(-0.3..0.3);
    }
    assert!(p.copy_from_flat(&flat));
    p
}

pub fn random_text(rng: &mut ChaCha8Rng, tokens: usize, dims: usize) -> TextEmbedding {
    let names = (0..tokens).map(|i| format!("tok{i}")).collect();
    TextEmbedding::new(names, random_mat(rng, tokens, dims, 1.0)).unwrap()
}

pub struct GradCheck {
    pub max_rel: f64,
    pub worst: usize,
    pub checked: usize,
}

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn gradcheck_shape() -> NetShape {
    NetShape {
        d_model: 8,
        d_text: 8,
        hidden: 8,
        frequencies: 6,
        stacks: 4,
    }
}

/// Central differences of `½‖render − target‖²` against the synthetic
/// guidance update, for every network parameter. N=4, G=2, three tokens,
/// 16×16 pixels.
pub fn pipeline_gradient_check(seed: u64, h: f64) -> GradCheck {
    use voxinit::field::Extent;
    use voxinit::guidance::{
        GuidanceProvider, GuidanceRequest, Scene, SyntheticGuidance, TargetSet, TargetView,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = gradcheck_shape();
    let params = random_params(shape, seed.wrapping_add(1));
    let text = random_text(&mut rng, 3, shape.d_text);
    let mut scene = Scene::new(4, Extent::default(), 2, shape.frequencies, text).unwrap();
    let camera = CameraPose::orbit(37.0, 21.0, 2.2, 49.1, 16, 16).unwrap();
    // Target near the current render keeps the loss, and so its rounding
    // error, small relative to the gradients.
    let rendered = scene.forward(&params, &camera).unwrap().clone();
    let mut target = rendered.clone();
    for c in target.color.iter_mut().flatten() {
        *c = (*c + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
    }
    let provider = SyntheticGuidance::new(
        TargetSet::new(vec![TargetView {
            camera,
            image: target.clone(),
        }])
        .unwrap(),
    );

    let image = scene.forward(&params, &camera).unwrap().clone();
    let residual = provider
        .residual(GuidanceRequest {
            image: &image,
            camera: &camera,
            prompt: "",
            timestep: 0.5,
            seed: 0,
        })
        .unwrap();
    let grads = scene.sds_apply(&params, &residual).unwrap().to_flat();

    let mut loss = |flat: &[f64]| {
        let mut p = params.clone();
        assert!(p.copy_from_flat(flat));
        let img = scene.forward(&p, &camera).unwrap();
        0.5 * img
            .color
            .iter()
            .zip(&target.color)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).powi(2)))
            .sum::<f64>()
    };
    let base = params.to_flat();
    let mut out = GradCheck {
        max_rel: 0.0,
        worst: 0,
        checked: base.len(),
    };
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + h;
        let up = loss(&probe);
        probe[i] = base[i] - h;
        let dn = loss(&probe);
        probe[i] = base[i];
        let r = rel_err((up - dn) / (2.0 * h), grads[i]);
        if r > out.max_rel {
            out.max_rel = r;
            out.worst = i;
        }
    }
    out
}

pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Per-pixel brute force: every Gaussian is evaluated at every pixel.
pub fn brute_force(
    centers: &[[f64; 3]],
    opacity: &[f64],
    color: &[[f64; 3]],
    cam: &CameraPose,
) -> Vec<[f64; 3]> {
    let fwd = unit(sub(cam.target, cam.position));
    let right = unit(cross(fwd, cam.up));
    let up = cross(right, fwd);
    let f = cam.height as f64 / 2.0 / (cam.fov_y / 2.0).tan();
    let mut proj: Vec<(f64, f64, f64, usize)> = centers
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let r = sub(c, cam.position);
            let z = dot3(r, fwd);
            let u = cam.width as f64 / 2.0 + f * dot3(r, right) / z;
            let v = cam.height as f64 / 2.0 - f * dot3(r, up) / z;
            (z, u, v, i)
        })
        .filter(|p| p.0 > 1e-2)
        .collect();
    proj.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for &(z, u, v, i) in &proj {
                let s = f * 0.05 / z;
                let d2 = (px - u).powi(2) + (py - v).powi(2);
                if d2.sqrt() > 3.0 * s {
                    continue;
                }
                let a = (opacity[i] * (-d2 / (2.0 * s * s)).exp()).min(0.999);
                for ch in 0..3 {
                    c[ch] += a * t * color[i][ch];
                }
                t *= 1.0 - a;
            }
            out.push(c);
        }
    }
    out
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> VoxelGaussianField {
    let mut field = VoxelGaussianField::new(n, Extent::new(-extent, extent).unwrap()).unwrap();
    let m = field.len();
    let op = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    let col = (0..m)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    field.set_appearance(op, col).unwrap();
    field
}

pub fn random_camera(rng: &mut ChaCha8Rng, size: usize) -> CameraPose {
    CameraPose::orbit(
        rng.random_range(0.0..360.0),
        rng.random_range(-30.0..60.0),
        rng.random_range(0.6..2.0),
        rng.random_range(30.0..70.0),
        size,
        size,
    )
    .unwrap()
}
