#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;

use ndarray::Array2;
use procattn::eventlog::{synth_log, Activity, EventLog, ProcessSpec, ProcessTree, SyntheticLog, Vocabulary};
use procattn::transformer::{AttentionTensor, ModelConfig, Params, PredictionVector, Predictor, TransformerModel};
use procattn::Result;

pub type Matrix = Vec<Vec<f64>>;

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn to_rows(m: &Array2<f64>) -> Matrix {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn layer_norm(row: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    let sd = (var + 1e-5).sqrt();
    (0..row.len())
        .map(|k| (row[k] - mean) / sd * gain[k] + bias[k])
        .collect()
}

fn gelu(z: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * z * (1.0 + (c * (z + 0.044715 * z.powi(3))).tanh())
}

/// Independent element-by-element evaluation of the network: embedding plus
/// sinusoidal positions, scaled dot-product attention per head with rows and
/// columns of `masked` zeroed after the softmax, output projection, two
/// residual layer norms around a GELU feed-forward layer, mean pooling and a
/// softmax head. Returns the prediction and the unmasked attention matrices.
pub fn straight_line(p: &Params, tokens: &[usize], masked: &[usize]) -> (Vec<f64>, Vec<Matrix>) {
    let d = p.embedding.ncols();
    let h = p.w_query.len();
    let dh = d / h;
    let l = tokens.len();
    let mut x = vec![vec![0.0; d]; l];
    for (i, &t) in tokens.iter().enumerate() {
        for k in 0..d {
            let freq = 1.0 / 10000f64.powf((k - k % 2) as f64 / d as f64);
            let pe = if k % 2 == 0 {
                (i as f64 * freq).sin()
            } else {
                (i as f64 * freq).cos()
            };
            x[i][k] = p.embedding[[t, k]] + pe;
        }
    }
    let mut concat = vec![vec![0.0; d]; l];
    let mut atts = Vec::new();
    for j in 0..h {
        let q = matmul(&x, &to_rows(&p.w_query[j]));
        let kk = matmul(&x, &to_rows(&p.w_key[j]));
        let v = matmul(&x, &to_rows(&p.w_value[j]));
        let mut a = vec![vec![0.0; l]; l];
        for r in 0..l {
            let scores: Vec<f64> = (0..l)
                .map(|c| (0..dh).map(|m| q[r][m] * kk[c][m]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            a[r] = softmax(&scores);
        }
        for r in 0..l {
            for m in 0..dh {
                let mut s = 0.0;
                for c in 0..l {
                    if !masked.contains(&r) && !masked.contains(&c) {
                        s += a[r][c] * v[c][m];
                    }
                }
                concat[r][j * dh + m] = s;
            }
        }
        atts.push(a);
    }
    let proj = matmul(&concat, &to_rows(&p.w_out));
    let gain1 = p.ln1_gain.to_vec();
    let bias1 = p.ln1_bias.to_vec();
    let h1: Matrix = (0..l)
        .map(|i| {
            let r: Vec<f64> = (0..d).map(|k| x[i][k] + proj[i][k]).collect();
            layer_norm(&r, &gain1, &bias1)
        })
        .collect();
    let z1 = matmul(&h1, &to_rows(&p.ff_w1));
    let g1: Matrix = z1
        .iter()
        .map(|r| r.iter().enumerate().map(|(k, z)| gelu(z + p.ff_b1[k])).collect())
        .collect();
    let f = matmul(&g1, &to_rows(&p.ff_w2));
    let gain2 = p.ln2_gain.to_vec();
    let bias2 = p.ln2_bias.to_vec();
    let h2: Matrix = (0..l)
        .map(|i| {
            let r: Vec<f64> = (0..d).map(|k| h1[i][k] + f[i][k] + p.ff_b2[k]).collect();
            layer_norm(&r, &gain2, &bias2)
        })
        .collect();
    let pooled: Vec<f64> = (0..d)
        .map(|k| h2.iter().map(|r| r[k]).sum::<f64>() / l as f64)
        .collect();
    let n_out = p.head_b.len();
    let logits: Vec<f64> = (0..n_out)
        .map(|o| p.head_b[o] + (0..d).map(|k| pooled[k] * p.head_w[[k, o]]).sum::<f64>())
        .collect();
    (softmax(&logits), atts)
}

fn fill(m: &mut [f64], salt: f64) {
    for (i, v) in m.iter_mut().enumerate() {
        *v = 0.6 * ((i as f64 + 1.0) * 0.731 + salt).sin();
    }
}

/// Hand-sized model (3 activities, d_k = 4, h = 2) with fixed deterministic weights.
pub fn fixed_model() -> TransformerModel {
    let vocabulary = Vocabulary::from_labels(["A", "B", "C"]).unwrap();
    let config = ModelConfig {
        d_k: 4,
        heads: 2,
        max_len: 5,
        ff_dim: 6,
        ..ModelConfig::default()
    };
    let mut params = Params::zeros(config.dims(&vocabulary));
    for (k, (_, t)) in params.tensors_mut().into_iter().enumerate() {
        fill(t, k as f64 * 1.3);
    }
    params.ln1_gain.mapv_inplace(|g| 1.0 + 0.2 * g);
    params.ln2_gain.mapv_inplace(|g| 1.0 + 0.2 * g);
    TransformerModel::from_params(config, vocabulary, params).unwrap()
}

pub fn ids(tokens: &[Activity]) -> Vec<usize> {
    tokens.iter().map(|a| a.index()).collect()
}

pub fn synth(tree: &str, traces: usize, seed: u64) -> SyntheticLog {
    let spec = ProcessSpec::new(ProcessTree::parse(tree).unwrap()).unwrap();
    synth_log(&spec, traces, seed).unwrap()
}

pub fn synth_events(tree: &str, traces: usize, seed: u64) -> EventLog {
    synth(tree, traces, seed).log
}

/// Predictor answering from a lookup table keyed by the exact token sequence.
/// Every query row of every head carries the same attention weights.
pub struct TablePredictor {
    pub n: usize,
    pub heads: usize,
    pub table: HashMap<Vec<Activity>, (Vec<f64>, Vec<f64>)>,
}

impl TablePredictor {
    pub fn new(n: usize, heads: usize) -> Self {
        TablePredictor {
            n,
            heads,
            table: HashMap::new(),
        }
    }

    /// `probs` covers the activities followed by END; `weights` one per position.
    pub fn insert(&mut self, tokens: Vec<Activity>, probs: Vec<f64>, weights: Vec<f64>) {
        assert_eq!(probs.len(), self.n + 1);
        assert_eq!(weights.len(), tokens.len());
        self.table.insert(tokens, (probs, weights));
    }
}

impl Predictor for TablePredictor {
    fn num_activities(&self) -> usize {
        self.n
    }

    fn predict(&self, tokens: &[Activity]) -> Result<(PredictionVector, AttentionTensor)> {
        let (probs, weights) = self
            .table
            .get(tokens)
            .unwrap_or_else(|| panic!("unscripted input {tokens:?}"));
        let total: f64 = weights.iter().sum();
        let l = tokens.len();
        let m = Array2::from_shape_fn((l, l), |(_, c)| weights[c] / total);
        Ok((
            PredictionVector::new(probs.clone()),
            AttentionTensor::new(vec![m; self.heads]),
        ))
    }
}
