//! Attention-score and distribution arithmetic.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{Activity, Vocabulary};
use crate::transformer::{AttentionTensor, PredictionVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    PerHead(usize),
    AllHeads,
}

/// L1-normalized flattening of one or all attention heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDistribution {
    pub values: Vec<f64>,
    pub scope: Scope,
}

impl AttentionDistribution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn row_major(m: &Array2<f64>) -> impl Iterator<Item = f64> + '_ {
    m.rows().into_iter().flat_map(|r| r.into_iter().copied())
}

fn normalized(values: Vec<f64>, scope: Scope) -> Result<AttentionDistribution> {
    let total: f64 = values.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Normalization(format!(
            "{scope:?} attention has total mass {total}"
        )));
    }
    Ok(AttentionDistribution {
        values: values.into_iter().map(|v| v / total).collect(),
        scope,
    })
}

/// Per-head distributions `α^j` and the combined distribution `α`.
pub fn flatten(att: &AttentionTensor) -> Result<(Vec<AttentionDistribution>, AttentionDistribution)> {
    let per_head = att
        .heads
        .iter()
        .enumerate()
        .map(|(j, m)| normalized(row_major(m).collect(), Scope::PerHead(j)))
        .collect::<Result<Vec<_>>>();
    let all = normalized(att.heads.iter().flat_map(row_major).collect(), Scope::AllHeads)?;
    Ok((per_head?, all))
}

pub fn flatten_scope(att: &AttentionTensor, scope: Scope) -> Result<AttentionDistribution> {
    match scope {
        Scope::AllHeads => normalized(att.heads.iter().flat_map(row_major).collect(), scope),
        Scope::PerHead(j) => {
            let m = att.heads.get(j).ok_or(Error::Index {
                index: j,
                len: att.heads.len(),
            })?;
            normalized(row_major(m).collect(), scope)
        }
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Dimension { left: a, right: b })
    }
}

/// Kullback-Leibler divergence in nats, with `0·ln 0 = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p.len(), q.len())?;
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}

pub fn jsd(a: &AttentionDistribution, b: &AttentionDistribution) -> Result<f64> {
    jsd_values(&a.values, &b.values)
}

pub fn jsd_values(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    let m: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let v = 0.5 * kl(a, &m)? + 0.5 * kl(b, &m)?;
    Ok(v.max(0.0))
}

pub fn tvd(p: &PredictionVector, q: &PredictionVector) -> Result<f64> {
    tvd_values(&p.probs, &q.probs)
}

pub fn tvd_values(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p.len(), q.len())?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn cosine_distance(p: &PredictionVector, q: &PredictionVector) -> Result<f64> {
    cosine_distance_values(&p.probs, &q.probs)
}

pub fn cosine_distance_values(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p.len(), q.len())?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (np, nq) = (norm(p), norm(q));
    if np == 0.0 || nq == 0.0 {
        return Err(Error::Degenerate("cosine distance of a zero vector".into()));
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    Ok(1.0 - dot / (np * nq))
}

/// How heads are combined before taking column sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadSumBound {
    /// Every head contributes to every row.
    #[default]
    AllHeads,
    /// Row `n` (1-based) sums only heads `1..=min(n, h)`, as the formula is literally written.
    RowIndex,
}

/// η: total attention paid to each position, summed over heads.
pub fn aggregate_event_scores(att: &AttentionTensor) -> Vec<f64> {
    aggregate_event_scores_with(att, HeadSumBound::AllHeads)
}

pub fn aggregate_event_scores_with(att: &AttentionTensor, bound: HeadSumBound) -> Vec<f64> {
    let len = att.seq_len();
    let mut eta = vec![0.0; len];
    for (h, m) in att.heads.iter().enumerate() {
        for (row, values) in m.rows().into_iter().enumerate() {
            if bound == HeadSumBound::RowIndex && h > row {
                continue;
            }
            for (s, v) in eta.iter_mut().zip(values) {
                *s += v;
            }
        }
    }
    eta
}

/// ψ: per-activity attention scores scaled so the largest is 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActivityScoreVector {
    pub scores: BTreeMap<Activity, f64>,
}

impl ActivityScoreVector {
    /// Score of `a`, zero for activities that are absent.
    pub fn get(&self, a: Activity) -> f64 {
        self.scores.get(&a).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Activity, f64)> + '_ {
        self.scores.iter().map(|(&a, &s)| (a, s))
    }

    /// Sums raw scores of `other` into `self` (no renormalization).
    pub fn accumulate(&mut self, other: &ActivityScoreVector) {
        for (a, s) in other.iter() {
            *self.scores.entry(a).or_insert(0.0) += s;
        }
    }

    pub fn max_normalized(mut self) -> Result<Self> {
        let max = self.scores.values().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::Degenerate("activity scores are all zero".into()));
        }
        self.scores.values_mut().for_each(|s| *s /= max);
        Ok(self)
    }

    /// Activities ranked by descending score, ties by id.
    pub fn ranked(&self) -> Vec<(Activity, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// Sums η per activity (PAD positions excluded), then divides by the maximum.
pub fn aggregate_activity_scores(eta: &[f64], prefix: &[Activity], pad: Activity) -> Result<ActivityScoreVector> {
    raw_activity_scores(eta, prefix, pad)?.max_normalized()
}

/// Per-activity sums of η without normalization.
pub fn raw_activity_scores(eta: &[f64], prefix: &[Activity], pad: Activity) -> Result<ActivityScoreVector> {
    same_len(eta.len(), prefix.len())?;
    let mut out = ActivityScoreVector::default();
    for (&a, &s) in prefix.iter().zip(eta) {
        if a != pad {
            *out.scores.entry(a).or_insert(0.0) += s;
        }
    }
    if out.scores.is_empty() {
        return Err(Error::Degenerate("prefix contains only PAD".into()));
    }
    Ok(out)
}

#[derive(Serialize)]
struct HeatmapJson<'a> {
    labels: Vec<&'a str>,
    heads: Vec<Vec<Vec<f64>>>,
}

/// One CSV row per (head, query position): `head,query,<key labels...>`.
pub fn heatmap_csv(att: &AttentionTensor, prefix: &[Activity], vocabulary: &Vocabulary) -> String {
    let labels: Vec<&str> = prefix.iter().map(|&a| vocabulary.label(a)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["head".to_owned(), "query".to_owned()];
    header.extend(labels.iter().enumerate().map(|(i, l)| format!("{i}:{l}")));
    w.write_record(&header).expect("in-memory write");
    for (h, m) in att.heads.iter().enumerate() {
        for (i, row) in m.rows().into_iter().enumerate() {
            let mut rec = vec![h.to_string(), format!("{i}:{}", labels[i])];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn heatmap_json(att: &AttentionTensor, prefix: &[Activity], vocabulary: &Vocabulary) -> String {
    let doc = HeatmapJson {
        labels: prefix.iter().map(|&a| vocabulary.label(a)).collect(),
        heads: att
            .heads
            .iter()
            .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("heatmap serializes")
}
