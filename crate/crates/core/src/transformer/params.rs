use ndarray::{Array1, Array2};
use rand::Rng;

use crate::seed;

/// Layer sizes derived from a config and a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Embedding rows: business activities plus PAD and END.
    pub vocab_in: usize,
    /// Output logits: business activities plus END.
    pub n_out: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

impl Dims {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Array2<f64>,
    pub w_query: Vec<Array2<f64>>,
    pub w_key: Vec<Array2<f64>>,
    pub w_value: Vec<Array2<f64>>,
    pub w_out: Array2<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub ff_w1: Array2<f64>,
    pub ff_b1: Array1<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// Name and shape of one tensor, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Params {
    pub fn zeros(dims: Dims) -> Self {
        let Dims {
            vocab_in,
            n_out,
            d_model: d,
            heads,
            ff_dim,
        } = dims;
        let dh = dims.head_dim();
        let per_head = || (0..heads).map(|_| Array2::zeros((d, dh))).collect::<Vec<_>>();
        Params {
            embedding: Array2::zeros((vocab_in, d)),
            w_query: per_head(),
            w_key: per_head(),
            w_value: per_head(),
            w_out: Array2::zeros((d, d)),
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            ff_w1: Array2::zeros((d, ff_dim)),
            ff_b1: Array1::zeros(ff_dim),
            ff_w2: Array2::zeros((ff_dim, d)),
            ff_b2: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            head_w: Array2::zeros((d, n_out)),
            head_b: Array1::zeros(n_out),
        }
    }

    /// Glorot-uniform matrices, unit layer-norm gains, zero biases.
    /// With `frozen_attention`, query and key projections stay zero.
    pub fn init(dims: Dims, seed: u64, frozen_attention: bool) -> Self {
        let mut p = Params::zeros(dims);
        let mut rng = seed::rng(seed, "init", 0);
        let mut glorot = |m: &mut Array2<f64>| {
            let (r, c) = m.dim();
            let limit = (6.0 / (r + c) as f64).sqrt();
            m.mapv_inplace(|_| rng.random_range(-limit..limit));
        };
        glorot(&mut p.embedding);
        for j in 0..dims.heads {
            if !frozen_attention {
                glorot(&mut p.w_query[j]);
                glorot(&mut p.w_key[j]);
            }
            glorot(&mut p.w_value[j]);
        }
        glorot(&mut p.w_out);
        glorot(&mut p.ff_w1);
        glorot(&mut p.ff_w2);
        glorot(&mut p.head_w);
        p.ln1_gain.fill(1.0);
        p.ln2_gain.fill(1.0);
        p
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab_in: self.embedding.nrows(),
            n_out: self.head_b.len(),
            d_model: self.embedding.ncols(),
            heads: self.w_query.len(),
            ff_dim: self.ff_b1.len(),
        }
    }

    pub fn is_frozen_tensor(name: &str) -> bool {
        name.starts_with("w_query.") || name.starts_with("w_key.")
    }

    /// Tensors as flat slices, in canonical order.
    pub fn tensors(&self) -> Vec<(TensorSpec, &[f64])> {
        let mut out: Vec<(TensorSpec, &[f64])> = Vec::new();
        fn m2(name: String, m: &Array2<f64>) -> (TensorSpec, &[f64]) {
            let spec = TensorSpec {
                name,
                shape: m.shape().to_vec(),
            };
            (spec, m.as_slice().expect("standard layout"))
        }
        out.push(m2("embedding".into(), &self.embedding));
        for (j, m) in self.w_query.iter().enumerate() {
            out.push(m2(format!("w_query.{j}"), m));
        }
        for (j, m) in self.w_key.iter().enumerate() {
            out.push(m2(format!("w_key.{j}"), m));
        }
        for (j, m) in self.w_value.iter().enumerate() {
            out.push(m2(format!("w_value.{j}"), m));
        }
        out.push(m2("w_out".into(), &self.w_out));
        fn v1<'a>(name: &str, v: &'a Array1<f64>) -> (TensorSpec, &'a [f64]) {
            let spec = TensorSpec {
                name: name.into(),
                shape: vec![v.len()],
            };
            (spec, v.as_slice().expect("standard layout"))
        }
        out.push(v1("ln1.gain", &self.ln1_gain));
        out.push(v1("ln1.bias", &self.ln1_bias));
        out.push(m2("ff.w1".into(), &self.ff_w1));
        out.push(v1("ff.b1", &self.ff_b1));
        out.push(m2("ff.w2".into(), &self.ff_w2));
        out.push(v1("ff.b2", &self.ff_b2));
        out.push(v1("ln2.gain", &self.ln2_gain));
        out.push(v1("ln2.bias", &self.ln2_bias));
        out.push(m2("head.w".into(), &self.head_w));
        out.push(v1("head.b", &self.head_b));
        out
    }

    /// Mutable flat views, same order and names as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        fn s2(m: &mut Array2<f64>) -> &mut [f64] {
            m.as_slice_mut().expect("standard layout")
        }
        fn s1(v: &mut Array1<f64>) -> &mut [f64] {
            v.as_slice_mut().expect("standard layout")
        }
        let mut out: Vec<(String, &mut [f64])> = vec![("embedding".into(), s2(&mut self.embedding))];
        for (j, m) in self.w_query.iter_mut().enumerate() {
            out.push((format!("w_query.{j}"), s2(m)));
        }
        for (j, m) in self.w_key.iter_mut().enumerate() {
            out.push((format!("w_key.{j}"), s2(m)));
        }
        for (j, m) in self.w_value.iter_mut().enumerate() {
            out.push((format!("w_value.{j}"), s2(m)));
        }
        out.push(("w_out".into(), s2(&mut self.w_out)));
        out.push(("ln1.gain".into(), s1(&mut self.ln1_gain)));
        out.push(("ln1.bias".into(), s1(&mut self.ln1_bias)));
        out.push(("ff.w1".into(), s2(&mut self.ff_w1)));
        out.push(("ff.b1".into(), s1(&mut self.ff_b1)));
        out.push(("ff.w2".into(), s2(&mut self.ff_w2)));
        out.push(("ff.b2".into(), s1(&mut self.ff_b2)));
        out.push(("ln2.gain".into(), s1(&mut self.ln2_gain)));
        out.push(("ln2.bias".into(), s1(&mut self.ln2_bias)));
        out.push(("head.w".into(), s2(&mut self.head_w)));
        out.push(("head.b".into(), s1(&mut self.head_b)));
        out
    }

    pub fn specs(&self) -> Vec<TensorSpec> {
        self.tensors().into_iter().map(|(s, _)| s).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, d)| d.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, d)| d.iter().all(|x| x.is_finite()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, d)| d.iter()).map(|x| x * x).sum()
    }
}
