//! Layer primitives over activations laid out as `(N, C, T, V)`: instances,
//! channels, frames, joints. Each forward has a matching backward that
//! returns the input gradient and accumulates parameter gradients.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BN_EPS: f64 = 1e-5;

/// Records the on/off pattern of every rectifier so callers can tell when a
/// perturbation crossed a kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trace {
    hash: u64,
}

impl Default for Trace {
    fn default() -> Self {
        Trace {
            hash: 0xcbf2_9ce4_8422_2325,
        }
    }
}

impl Trace {
    pub(crate) fn absorb(&mut self, values: &[f64]) {
        for &v in values {
            self.hash ^= (v > 0.0) as u64 + 1;
            self.hash = self.hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.hash
    }
}

fn view3(x: &Array4<f64>) -> ArrayView3<'_, f64> {
    let (n, c, t, v) = x.dim();
    x.view().into_shape_with_order((n, c, t * v)).expect("standard layout")
}

/// Spatial graph convolution:
/// `y[n,o,t,w] = sum_k sum_c W_k[o,c] sum_v x[n,c,t,v] A_k[v,w]`.
/// `weight` has shape `(K, O, C)`.
pub fn graph_conv_forward(x: &Array4<f64>, parts: &[Array2<f64>], weight: ArrayView3<f64>) -> Array4<f64> {
    let (n, c, t, v) = x.dim();
    let o = weight.dim().1;
    let x2 = x.view().into_shape_with_order((n * c * t, v)).expect("standard layout");
    let mut y = Array4::<f64>::zeros((n, o, t, v));
    for (k, a) in parts.iter().enumerate() {
        let xa = x2.dot(a).into_shape_with_order((n, c, t * v)).expect("contiguous");
        let wk = weight.index_axis(Axis(0), k);
        let mut y3 = y
            .view_mut()
            .into_shape_with_order((n, o, t * v))
            .expect("standard layout");
        for ni in 0..n {
            let mut yn = y3.index_axis_mut(Axis(0), ni);
            general_mat_mul(1.0, &wk, &xa.index_axis(Axis(0), ni), 1.0, &mut yn);
        }
    }
    y
}

pub fn graph_conv_backward(
    dy: &Array4<f64>,
    x: &Array4<f64>,
    parts: &[Array2<f64>],
    weight: ArrayView3<f64>,
    dweight: &mut ndarray::ArrayViewMut3<f64>,
) -> Array4<f64> {
    let (n, c, t, v) = x.dim();
    let x2 = x.view().into_shape_with_order((n * c * t, v)).expect("standard layout");
    let dy3 = view3(dy);
    let mut dx = Array2::<f64>::zeros((n * c * t, v));
    let mut dxa = Array2::<f64>::zeros((n * c, t * v));
    for (k, a) in parts.iter().enumerate() {
        let xa = x2.dot(a).into_shape_with_order((n, c, t * v)).expect("contiguous");
        let wk = weight.index_axis(Axis(0), k);
        let mut dwk = dweight.index_axis_mut(Axis(0), k);
        for ni in 0..n {
            let dyn_ = dy3.index_axis(Axis(0), ni);
            general_mat_mul(1.0, &dyn_, &xa.index_axis(Axis(0), ni).t(), 1.0, &mut dwk);
            let mut block = dxa.slice_mut(s![ni * c..(ni + 1) * c, ..]);
            general_mat_mul(1.0, &wk.t(), &dyn_, 0.0, &mut block);
        }
        let dxa2 = dxa.view().into_shape_with_order((n * c * t, v)).expect("contiguous");
        general_mat_mul(1.0, &dxa2, &a.t(), 1.0, &mut dx);
    }
    dx.into_shape_with_order((n, c, t, v)).expect("contiguous")
}

/// Geometry of a convolution along the frame axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl TemporalGeometry {
    pub fn same(kernel: usize, stride: usize) -> Self {
        TemporalGeometry {
            kernel,
            stride,
            pad: (kernel - 1) / 2,
        }
    }

    pub fn output_len(&self, t: usize) -> usize {
        (t + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

fn im2col(x: ArrayView3<f64>, ni: usize, geo: TemporalGeometry, t_out: usize, v: usize, col: &mut Array2<f64>) {
    let (_, c, tv) = x.dim();
    let t_in = tv / v;
    col.fill(0.0);
    let xn = x.index_axis(Axis(0), ni);
    let xs = xn.as_slice().expect("contiguous");
    let cols = t_out * v;
    let col_s = col.as_slice_mut().expect("contiguous");
    for ci in 0..c {
        for k in 0..geo.kernel {
            let row = (ci * geo.kernel + k) * cols;
            for to in 0..t_out {
                let ti = (to * geo.stride + k) as isize - geo.pad as isize;
                if ti < 0 || ti as usize >= t_in {
                    continue;
                }
                let src = ci * tv + ti as usize * v;
                col_s[row + to * v..row + (to + 1) * v].copy_from_slice(&xs[src..src + v]);
            }
        }
    }
}

fn col2im_add(col: &Array2<f64>, dx: &mut [f64], c: usize, t_in: usize, v: usize, geo: TemporalGeometry, t_out: usize) {
    let cols = t_out * v;
    let col_s = col.as_slice().expect("contiguous");
    let tv = t_in * v;
    for ci in 0..c {
        for k in 0..geo.kernel {
            let row = (ci * geo.kernel + k) * cols;
            for to in 0..t_out {
                let ti = (to * geo.stride + k) as isize - geo.pad as isize;
                if ti < 0 || ti as usize >= t_in {
                    continue;
                }
                let dst = ci * tv + ti as usize * v;
                for (d, s) in dx[dst..dst + v]
                    .iter_mut()
                    .zip(&col_s[row + to * v..row + (to + 1) * v])
                {
                    *d += s;
                }
            }
        }
    }
}

/// Convolution along frames, shared across joints. `weight` is
/// `(O, C * kernel)` with column index `c * kernel + k`.
pub fn temporal_conv_forward(
    x: &Array4<f64>,
    weight: ArrayView2<f64>,
    bias: Option<ArrayView1<f64>>,
    geo: TemporalGeometry,
) -> Array4<f64> {
    let (n, c, t, v) = x.dim();
    let o = weight.nrows();
    let t_out = geo.output_len(t);
    let x3 = view3(x);
    let mut y = Array4::<f64>::zeros((n, o, t_out, v));
    let mut col = Array2::<f64>::zeros((c * geo.kernel, t_out * v));
    {
        let mut y3 = y
            .view_mut()
            .into_shape_with_order((n, o, t_out * v))
            .expect("standard layout");
        for ni in 0..n {
            im2col(x3, ni, geo, t_out, v, &mut col);
            let mut yn = y3.index_axis_mut(Axis(0), ni);
            general_mat_mul(1.0, &weight, &col, 0.0, &mut yn);
            if let Some(b) = &bias {
                for (mut row, &bo) in yn.rows_mut().into_iter().zip(b.iter()) {
                    row += bo;
                }
            }
        }
    }
    y
}

pub fn temporal_conv_backward(
    dy: &Array4<f64>,
    x: &Array4<f64>,
    weight: ArrayView2<f64>,
    geo: TemporalGeometry,
    dweight: &mut ArrayViewMut2<f64>,
    dbias: Option<&mut ArrayViewMut1<f64>>,
) -> Array4<f64> {
    let (n, c, t, v) = x.dim();
    let t_out = dy.dim().2;
    let x3 = view3(x);
    let dy3 = view3(dy);
    let mut dx = Array4::<f64>::zeros((n, c, t, v));
    let mut col = Array2::<f64>::zeros((c * geo.kernel, t_out * v));
    let mut dcol = Array2::<f64>::zeros((c * geo.kernel, t_out * v));
    for ni in 0..n {
        im2col(x3, ni, geo, t_out, v, &mut col);
        let dyn_ = dy3.index_axis(Axis(0), ni);
        general_mat_mul(1.0, &dyn_, &col.t(), 1.0, dweight);
        general_mat_mul(1.0, &weight.t(), &dyn_, 0.0, &mut dcol);
        let mut dxn = dx.index_axis_mut(Axis(0), ni);
        col2im_add(&dcol, dxn.as_slice_mut().expect("contiguous"), c, t, v, geo, t_out);
    }
    if let Some(db) = dbias {
        for ni in 0..n {
            for (oi, row) in dy3.index_axis(Axis(0), ni).rows().into_iter().enumerate() {
                db[oi] += row.sum();
            }
        }
    }
    dx
}

/// Per-channel batch statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Array4<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    /// Unbiased variance, used for running statistics.
    pub var_unbiased: Array1<f64>,
}

/// Batch normalization over axis 1 using batch statistics.
pub fn batch_norm_train(x: &Array4<f64>, gamma: &[f64], beta: &[f64]) -> (Array4<f64>, BatchNormCache) {
    let (n, c, t, v) = x.dim();
    let tv = t * v;
    let count = (n * tv) as f64;
    let xs = x.as_slice().expect("contiguous");
    let mut mean = Array1::<f64>::zeros(c);
    let mut var = Array1::<f64>::zeros(c);
    for ci in 0..c {
        let mut sum = 0.0;
        for ni in 0..n {
            let off = (ni * c + ci) * tv;
            sum += xs[off..off + tv].iter().sum::<f64>();
        }
        let m = sum / count;
        let mut sq = 0.0;
        for ni in 0..n {
            let off = (ni * c + ci) * tv;
            sq += xs[off..off + tv].iter().map(|x| (x - m) * (x - m)).sum::<f64>();
        }
        mean[ci] = m;
        var[ci] = sq / count;
    }
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let mut xhat = Array4::<f64>::zeros((n, c, t, v));
    let mut y = Array4::<f64>::zeros((n, c, t, v));
    {
        let xh = xhat.as_slice_mut().unwrap();
        let ys = y.as_slice_mut().unwrap();
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * tv;
                for i in off..off + tv {
                    let h = (xs[i] - mean[ci]) * inv_std[ci];
                    xh[i] = h;
                    ys[i] = gamma[ci] * h + beta[ci];
                }
            }
        }
    }
    let var_unbiased = if count > 1.0 {
        &var * (count / (count - 1.0))
    } else {
        var
    };
    (
        y,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var_unbiased,
        },
    )
}

pub fn batch_norm_eval(x: &Array4<f64>, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64]) -> Array4<f64> {
    let (n, c, t, v) = x.dim();
    let tv = t * v;
    let mut y = x.as_standard_layout().into_owned();
    let ys = y.as_slice_mut().unwrap();
    for ci in 0..c {
        let scale = gamma[ci] / (var[ci] + BN_EPS).sqrt();
        let shift = beta[ci] - mean[ci] * scale;
        for ni in 0..n {
            let off = (ni * c + ci) * tv;
            for val in &mut ys[off..off + tv] {
                *val = *val * scale + shift;
            }
        }
    }
    y
}

/// Returns the input gradient and accumulates `dgamma`, `dbeta`.
pub fn batch_norm_backward(
    dy: &Array4<f64>,
    cache: &BatchNormCache,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Array4<f64> {
    let (n, c, t, v) = dy.dim();
    let tv = t * v;
    let count = (n * tv) as f64;
    let dys = dy.as_slice().expect("contiguous");
    let xh = cache.xhat.as_slice().unwrap();
    let mut dx = Array4::<f64>::zeros((n, c, t, v));
    let dxs = dx.as_slice_mut().unwrap();
    for ci in 0..c {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for ni in 0..n {
            let off = (ni * c + ci) * tv;
            for i in off..off + tv {
                sum_dy += dys[i];
                sum_dy_xhat += dys[i] * xh[i];
            }
        }
        dgamma[ci] += sum_dy_xhat;
        dbeta[ci] += sum_dy;
        let k = gamma[ci] * cache.inv_std[ci] / count;
        for ni in 0..n {
            let off = (ni * c + ci) * tv;
            for i in off..off + tv {
                dxs[i] = k * (count * dys[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        }
    }
    dx
}

pub fn relu_inplace(x: &mut Array4<f64>, trace: &mut Trace) {
    x.mapv_inplace(|v| v.max(0.0));
    trace.absorb(x.as_slice().expect("contiguous"));
}

/// Zeroes `dy` where the rectifier output was zero.
pub fn relu_backward_inplace(dy: &mut Array4<f64>, y: &Array4<f64>) {
    ndarray::Zip::from(dy).and(y).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Inverted-dropout keep mask: each entry is `1 / (1 - rate)` or `0`.
pub fn dropout_mask(len: usize, rate: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
        .collect()
}

pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (v, m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

/// `y = x W^T + b` with `x: (B, I)`, `W: (O, I)`.
pub fn dense_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += &b;
    y
}

pub fn dense_backward(
    dy: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dw: &mut ArrayViewMut2<f64>,
    db: &mut ArrayViewMut1<f64>,
) -> Array2<f64> {
    general_mat_mul(1.0, &dy.t(), &x, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w)
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let b = logits.nrows();
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[[i, y]] -= 1.0;
    }
    grad /= b as f64;
    (loss / b as f64, grad)
}

pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
