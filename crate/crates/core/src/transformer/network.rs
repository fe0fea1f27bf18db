//! Forward pass with cached intermediates and the matching reverse pass.
//!
//! Layout for a prefix of length L:
//!
//! ```text
//! x      = E[tokens] + PE                        L × d
//! A_j    = softmax(x Wq_j (x Wk_j)^T / sqrt(d))  L × L   (per head)
//! O_j    = mask(A_j) x Wv_j                      L × d/h
//! h1     = LN1(x + concat(O_1..O_h) W_O)
//! h2     = LN2(h1 + GELU(h1 W1 + b1) W2 + b2)
//! logits = mean_rows(h2) W_head + b_head
//! ```

use ndarray::{s, Array1, Array2, Axis};

use super::params::Params;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn sinusoidal(max_len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((max_len, d), |(pos, i)| {
        let exponent = (2 * (i / 2)) as f64 / d as f64;
        let angle = pos as f64 / 10_000f64.powf(exponent);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn softmax(v: &Array1<f64>) -> Array1<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = v.mapv(|x| (x - max).exp());
    let sum = e.sum();
    e / sum
}

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + GELU_A * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + GELU_A * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * z * z)
}

struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * inv);
        inv_std[i] = inv;
    }
    let y = &xhat * gain + bias;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns dx and accumulates gain/bias gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        let inv = cache.inv_std[i];
        for k in 0..dy.ncols() {
            dx[[i, k]] = inv * (g[k] - mean_g - xh[k] * mean_gx);
        }
    }
    dx
}

/// Every intermediate needed by [`backward`].
pub(crate) struct Pass {
    tokens: Vec<usize>,
    keep: Vec<bool>,
    x: Array2<f64>,
    q: Vec<Array2<f64>>,
    k: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    /// Post-softmax attention per head, before masking.
    pub attention: Vec<Array2<f64>>,
    concat: Array2<f64>,
    ln1: LayerNormCache,
    h1: Array2<f64>,
    z1: Array2<f64>,
    g1: Array2<f64>,
    ln2: LayerNormCache,
    pooled: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Runs the network. `masked` positions have their attention rows and columns
/// zeroed (after the softmax) in every head.
pub(crate) fn forward(p: &Params, positional: &Array2<f64>, tokens: &[usize], masked: &[usize]) -> Pass {
    let dims = p.dims();
    let (l, d, dh) = (tokens.len(), dims.d_model, dims.head_dim());
    let scale = 1.0 / (d as f64).sqrt();

    let mut x = Array2::zeros((l, d));
    for (i, &t) in tokens.iter().enumerate() {
        let mut row = x.row_mut(i);
        row.assign(&p.embedding.row(t));
        row += &positional.row(i);
    }

    let mut keep = vec![true; l];
    for &m in masked {
        keep[m] = false;
    }

    let mut concat = Array2::zeros((l, d));
    let (mut qs, mut ks, mut vs, mut atts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for j in 0..dims.heads {
        let q = x.dot(&p.w_query[j]);
        let k = x.dot(&p.w_key[j]);
        let v = x.dot(&p.w_value[j]);
        let mut a = q.dot(&k.t()) * scale;
        softmax_rows(&mut a);
        let o = if masked.is_empty() {
            a.dot(&v)
        } else {
            mask(&a, &keep).dot(&v)
        };
        concat.slice_mut(s![.., j * dh..(j + 1) * dh]).assign(&o);
        qs.push(q);
        ks.push(k);
        vs.push(v);
        atts.push(a);
    }

    let r1 = &x + &concat.dot(&p.w_out);
    let (h1, ln1) = layer_norm(&r1, &p.ln1_gain, &p.ln1_bias);
    let z1 = h1.dot(&p.ff_w1) + &p.ff_b1;
    let g1 = z1.mapv(gelu);
    let r2 = &h1 + &(g1.dot(&p.ff_w2) + &p.ff_b2);
    let (h2, ln2) = layer_norm(&r2, &p.ln2_gain, &p.ln2_bias);
    let pooled = h2.mean_axis(Axis(0)).expect("non-empty prefix");
    let logits = pooled.dot(&p.head_w) + &p.head_b;
    let probs = softmax(&logits);

    Pass {
        tokens: tokens.to_vec(),
        keep,
        x,
        q: qs,
        k: ks,
        v: vs,
        attention: atts,
        concat,
        ln1,
        h1,
        z1,
        g1,
        ln2,
        pooled,
        probs,
    }
}

fn mask(a: &Array2<f64>, keep: &[bool]) -> Array2<f64> {
    let mut m = a.clone();
    for ((i, k), v) in m.indexed_iter_mut() {
        if !keep[i] || !keep[k] {
            *v = 0.0;
        }
    }
    m
}

/// Accumulates into `grads` the gradient of the loss whose derivative with
/// respect to the logits is `dlogits`.
pub(crate) fn backward(p: &Params, pass: &Pass, dlogits: &Array1<f64>, grads: &mut Params) {
    let dims = p.dims();
    let (l, dh) = (pass.tokens.len(), dims.head_dim());
    let scale = 1.0 / (dims.d_model as f64).sqrt();

    // output head and mean pooling
    grads.head_b += dlogits;
    grads.head_w += &outer(&pass.pooled, dlogits);
    let dpooled = p.head_w.dot(dlogits) / l as f64;
    let dh2 = Array2::from_shape_fn((l, dims.d_model), |(_, k)| dpooled[k]);

    // second residual block
    let dr2 = layer_norm_backward(&dh2, &pass.ln2, &p.ln2_gain, &mut grads.ln2_gain, &mut grads.ln2_bias);
    grads.ff_b2 += &dr2.sum_axis(Axis(0));
    grads.ff_w2 += &pass.g1.t().dot(&dr2);
    let dg1 = dr2.dot(&p.ff_w2.t());
    let dz1 = &dg1 * &pass.z1.mapv(gelu_grad);
    grads.ff_b1 += &dz1.sum_axis(Axis(0));
    grads.ff_w1 += &pass.h1.t().dot(&dz1);
    let dh1 = &dr2 + &dz1.dot(&p.ff_w1.t());

    // first residual block
    let dr1 = layer_norm_backward(&dh1, &pass.ln1, &p.ln1_gain, &mut grads.ln1_gain, &mut grads.ln1_bias);
    let mut dx = dr1.clone();
    grads.w_out += &pass.concat.t().dot(&dr1);
    let dconcat = dr1.dot(&p.w_out.t());

    let masked = pass.keep.iter().any(|k| !k);
    for j in 0..dims.heads {
        let dout = dconcat.slice(s![.., j * dh..(j + 1) * dh]);
        let a = &pass.attention[j];
        let a_used = if masked { mask(a, &pass.keep) } else { a.clone() };
        let dv = a_used.t().dot(&dout);
        let mut da = dout.dot(&pass.v[j].t());
        if masked {
            da = mask(&da, &pass.keep);
        }
        // row-wise softmax backward
        let mut ds = Array2::zeros((l, l));
        for i in 0..l {
            let dot = a.row(i).dot(&da.row(i));
            for k in 0..l {
                ds[[i, k]] = a[[i, k]] * (da[[i, k]] - dot) * scale;
            }
        }
        let dq = ds.dot(&pass.k[j]);
        let dk = ds.t().dot(&pass.q[j]);
        grads.w_query[j] += &pass.x.t().dot(&dq);
        grads.w_key[j] += &pass.x.t().dot(&dk);
        grads.w_value[j] += &pass.x.t().dot(&dv);
        dx += &dq.dot(&p.w_query[j].t());
        dx += &dk.dot(&p.w_key[j].t());
        dx += &dv.dot(&p.w_value[j].t());
    }

    for (i, &t) in pass.tokens.iter().enumerate() {
        let mut row = grads.embedding.row_mut(t);
        row += &dx.row(i);
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, k)| a[i] * b[k])
}
