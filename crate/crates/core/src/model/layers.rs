use ndarray::{Array1, Array2, Axis, Zip};

/// Row-wise layer normalisation state kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(
    x: &Array2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
    eps: f64,
) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        *inv = 1.0 / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| (v - mean) * s);
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    gain: &Array1<f64>,
    cache: &NormCache,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let d = dy.ncols() as f64;
    let dgain = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &inv) in dx
        .axis_iter_mut(Axis(0))
        .zip(dxhat.axis_iter(Axis(0)))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(cache.inv_std.iter())
    {
        let mean_g = g.sum() / d;
        let mean_gx = g.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        Zip::from(&mut out)
            .and(&g)
            .and(&xh)
            .for_each(|o, &g, &x| *o = inv * (g - mean_g - x * mean_gx));
    }
    (dx, dgain, dbias)
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_K * (1.0 + 3.0 * 0.044715 * x * x)
}
