//! Elementwise and row-wise kernels shared by the network blocks, each with
//! its adjoint.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Row-wise softmax, in place.
pub(crate) fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

/// Given softmax output `p` and upstream `dp`, the gradient w.r.t. logits:
/// `p ⊙ (dp − Σ_j p_j dp_j)` per row. Overwrites `dp`.
pub(crate) fn softmax_rows_backward(p: ArrayView2<f64>, dp: &mut Array2<f64>) {
    Zip::from(dp.rows_mut()).and(p.rows()).for_each(|mut d, p| {
        let inner = d.dot(&p);
        Zip::from(&mut d).and(&p).for_each(|d, &p| *d = p * (*d - inner));
    });
}

/// Saved state of a layer normalization.
#[derive(Clone, Debug)]
pub(crate) struct NormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(
    x: ArrayView2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut normalized = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.dot(&row) / d;
        *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= *s;
    }
    let y = &normalized * gain + bias;
    (y, NormCache { normalized, inv_std })
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward(
    dy: ArrayView2<f64>,
    cache: &NormCache,
    gain: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dgain = (&dy * &cache.normalized).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = &dy * gain;
    Zip::from(dx.rows_mut())
        .and(cache.normalized.rows())
        .and(&cache.inv_std)
        .for_each(|mut g, xhat, &s| {
            let mean_g = g.sum() / d;
            let mean_gx = g.dot(&xhat) / d;
            Zip::from(&mut g)
                .and(&xhat)
                .for_each(|g, &xh| *g = s * (*g - mean_g - xh * mean_gx));
        });
    (dx, dgain, dbias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut s = Array2::from_shape_fn((5, 7), |(i, j)| (i as f64 - 2.0) * (j as f64) * 3.1);
        softmax_rows(&mut s);
        for row in s.rows() {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let x = Array2::from_shape_fn((3, 5), |(i, j)| ((i * 5 + j) as f64 * 0.77).sin());
        let gain = Array1::from_iter((0..5).map(|i| 0.5 + 0.2 * i as f64));
        let bias = Array1::from_iter((0..5).map(|i| -0.1 * i as f64));
        let w = Array2::from_shape_fn((3, 5), |(i, j)| ((i + 2 * j) as f64 * 0.31).cos());
        let loss = |x: &Array2<f64>| (&layer_norm(x.view(), &gain, &bias).0 * &w).sum();
        let (_, cache) = layer_norm(x.view(), &gain, &bias);
        let (dx, _, _) = layer_norm_backward(w.view(), &cache, &gain);
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..5 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
                assert!((fd - dx[[i, j]]).abs() < 1e-7, "{fd} vs {}", dx[[i, j]]);
            }
        }
    }
}
