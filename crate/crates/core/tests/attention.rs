mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxinit::encode::{FeatureGrid, TextEmbedding};
use voxinit::field::{Extent, VoxelGaussianField};
use voxinit::net::{gip_forward, gtf_forward, network_forward, NetInputs, NetShape};

use common::*;

fn lattice(n: usize, g: usize) -> (VoxelGaussianField, voxinit::field::GridIndexMap) {
    let field = VoxelGaussianField::new(n, Extent::default()).unwrap();
    let grid = field.partition_grid(g).unwrap();
    (field, grid)
}

#[test]
fn gip_with_one_voxel_per_grid_is_full_self_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (_, grid) = lattice(4, 4);
    let d = 8;
    let p = random_attention(&mut rng, d, d);
    let f = random_mat(&mut rng, 64, d, 1.0);
    let (out, _) = gip_forward(&FeatureGrid(f.clone()), &grid, &p).unwrap();
    let want = full_self_attention(&to_mat(&f), &p);
    let err = max_abs_diff(&to_mat(&out.0), &want);
    assert!(err < 1e-10, "max abs diff {err:e}");
}

#[test]
fn gip_matches_project_then_pool_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (n, g) in [(4, 2), (6, 4), (5, 3), (3, 1)] {
        let (_, grid) = lattice(n, g);
        let d = 6;
        let p = random_attention(&mut rng, d, d);
        let f = random_mat(&mut rng, n * n * n, d, 1.0);
        let (out, cache) = gip_forward(&FeatureGrid(f.clone()), &grid, &p).unwrap();
        let (want, weights) = gip(&to_mat(&f), n, g, &p);
        assert!(max_abs_diff(&to_mat(&out.0), &want) < 1e-10, "N={n} G={g}");
        assert!(max_abs_diff(&to_mat(cache.attention()), &weights) < 1e-12);
    }
}

#[test]
fn single_grid_adds_the_same_pooled_value_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 4;
    let d = 5;
    let (_, grid) = lattice(n, 1);
    let p = random_attention(&mut rng, d, d);
    let f = random_mat(&mut rng, n * n * n, d, 1.0);
    let (out, cache) = gip_forward(&FeatureGrid(f.clone()), &grid, &p).unwrap();
    assert_eq!(cache.attention().dim(), (1, 1));
    assert_eq!(cache.attention()[[0, 0]], 1.0);

    let gain = p.norm.gain.to_vec();
    let bias = p.norm.bias.to_vec();
    let mut mean_x = vec![0.0; d];
    for r in to_mat(&f) {
        for (m, x) in mean_x.iter_mut().zip(layer_norm(&r, &gain, &bias)) {
            *m += x / (n * n * n) as f64;
        }
    }
    let delta = vecmat(&vecmat(&mean_x, &p.w_v), &p.w_o);
    for (o, i) in out.0.rows().into_iter().zip(f.rows()) {
        for c in 0..d {
            assert!((o[c] - i[c] - delta[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_keys_give_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (_, grid) = lattice(2, 2);
    let d = 4;
    let p = random_attention(&mut rng, d, d);
    let row = random_mat(&mut rng, 1, d, 1.0);
    let f = Array2::from_shape_fn((8, d), |(_, c)| row[[0, c]]);
    let (_, cache) = gip_forward(&FeatureGrid(f), &grid, &p).unwrap();
    for w in cache.attention().iter() {
        assert_eq!(*w, 0.125);
    }

    // Zero key projection: every logit vanishes.
    let mut q = random_attention(&mut rng, d, d);
    q.w_k.fill(0.0);
    let f = random_mat(&mut rng, 8, d, 1.0);
    let (_, cache) = gip_forward(&FeatureGrid(f), &grid, &q).unwrap();
    for w in cache.attention().iter() {
        assert_eq!(*w, 0.125);
    }
}

#[test]
fn gtf_with_one_token_adds_its_projected_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = 6;
    let p = random_attention(&mut rng, d, 5);
    let text = random_text(&mut rng, 1, 5);
    let f = random_mat(&mut rng, 30, d, 1.0);
    let (out, cache) = gtf_forward(&FeatureGrid(f.clone()), &text, &p).unwrap();
    let y = text.rows.row(0).to_vec();
    let delta = vecmat(&vecmat(&y, &p.w_v), &p.w_o);
    for (o, i) in out.0.rows().into_iter().zip(f.rows()) {
        for c in 0..d {
            assert!((o[c] - i[c] - delta[c]).abs() < 1e-12);
        }
    }
    assert!(cache.attention().iter().all(|&w| w == 1.0));
}

#[test]
fn gtf_matches_oracle_and_splits_duplicate_tokens_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let d = 6;
    let p = random_attention(&mut rng, d, 4);
    let base = random_mat(&mut rng, 2, 4, 1.0);
    let rows = Array2::from_shape_fn((3, 4), |(r, c)| base[[r % 2, c]]);
    let text = TextEmbedding::new(vec!["a".into(), "b".into(), "a".into()], rows).unwrap();
    let f = random_mat(&mut rng, 20, d, 1.0);
    let (out, cache) = gtf_forward(&FeatureGrid(f.clone()), &text, &p).unwrap();
    let (want, weights) = gtf(&to_mat(&f), &to_mat(&text.rows), &p);
    assert!(max_abs_diff(&to_mat(&out.0), &want) < 1e-10);
    assert!(max_abs_diff(&to_mat(cache.attention()), &weights) < 1e-12);
    for w in cache.attention().rows() {
        assert!((w[0] - w[2]).abs() < 1e-15);
    }
}

#[test]
fn network_matches_straight_line_oracle() {
    let shape = NetShape {
        d_model: 8,
        d_text: 5,
        hidden: 7,
        frequencies: 3,
        stacks: 2,
    };
    let params = random_params(shape, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let text = random_text(&mut rng, 3, 5);
    for (n, g) in [(4, 4), (4, 2)] {
        let (field, grid) = lattice(n, g);
        let enc = voxinit::encode::sinusoidal_features(field.centers(), 3).unwrap();
        let inputs = NetInputs {
            encoding: &enc,
            text: &text,
            grid: &grid,
        };
        let (out, _) = network_forward(&params, inputs).unwrap();
        let (op, col) = network(&params, field.centers(), n, g, &to_mat(&text.rows));
        for i in 0..n * n * n {
            assert!((out.opacity[i] - op[i]).abs() < 1e-10);
            for c in 0..3 {
                assert!((out.color[i][c] - col[i][c]).abs() < 1e-10);
            }
        }
    }
}

fn net_case(seed: u64) -> (NetShape, voxinit::net::NetworkParams, TextEmbedding) {
    let shape = NetShape {
        d_model: 8,
        d_text: 6,
        hidden: 8,
        frequencies: 2,
        stacks: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
    (shape, random_params(shape, seed), random_text(&mut rng, 4, 6))
}

#[test]
fn network_is_deterministic() {
    let (_, params, text) = net_case(19);
    let (field, grid) = lattice(4, 2);
    let enc = voxinit::encode::sinusoidal_features(field.centers(), 2).unwrap();
    let run = || {
        network_forward(
            &params,
            NetInputs {
                encoding: &enc,
                text: &text,
                grid: &grid,
            },
        )
        .unwrap()
        .0
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), g in 1usize..=3, tokens in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, grid) = lattice(3, g);
        let d = 4;
        let f = FeatureGrid(random_mat(&mut rng, 27, d, 2.0));
        let pg = random_attention(&mut rng, d, d);
        let (_, gc) = gip_forward(&f, &grid, &pg).unwrap();
        let pt = random_attention(&mut rng, d, 3);
        let text = random_text(&mut rng, tokens, 3);
        let (_, tc) = gtf_forward(&f, &text, &pt).unwrap();
        for w in [gc.attention(), tc.attention()] {
            for row in w.rows() {
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gip_is_equivariant_to_permutations_within_a_grid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, g, d) = (4, 2, 5);
        let (_, grid) = lattice(n, g);
        let p = random_attention(&mut rng, d, d);
        let f = random_mat(&mut rng, n * n * n, d, 1.0);
        // Shuffle voxels only among members of the same grid.
        let mut perm: Vec<usize> = (0..n * n * n).collect();
        for cell in 0..g * g * g {
            let members: Vec<usize> = (0..n * n * n).filter(|&i| grid.indices()[i] == cell).collect();
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            for (a, b) in members.iter().zip(&shuffled) {
                perm[*a] = *b;
            }
        }
        let fp = Array2::from_shape_fn(f.dim(), |(i, c)| f[[perm[i], c]]);
        let (out, _) = gip_forward(&FeatureGrid(f), &grid, &p).unwrap();
        let (outp, _) = gip_forward(&FeatureGrid(fp), &grid, &p).unwrap();
        for i in 0..n * n * n {
            for c in 0..d {
                prop_assert!((outp.0[[i, c]] - out.0[[perm[i], c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn network_ignores_token_order(seed in any::<u64>()) {
        let (_, params, text) = net_case(seed);
        let (field, grid) = lattice(4, 2);
        let enc = voxinit::encode::sinusoidal_features(field.centers(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..text.len()).collect();
        order.shuffle(&mut rng);
        let rows = Array2::from_shape_fn(text.rows.dim(), |(r, c)| text.rows[[order[r], c]]);
        let tokens = order.iter().map(|&i| text.tokens[i].clone()).collect();
        let shuffled = TextEmbedding::new(tokens, rows).unwrap();
        let run = |t: &TextEmbedding| {
            network_forward(&params, NetInputs { encoding: &enc, text: t, grid: &grid }).unwrap().0
        };
        let (a, b) = (run(&text), run(&shuffled));
        for i in 0..a.opacity.len() {
            prop_assert!((a.opacity[i] - b.opacity[i]).abs() < 1e-12);
            for c in 0..3 {
                prop_assert!((a.color[i][c] - b.color[i][c]).abs() < 1e-12);
            }
        }
    }
}
