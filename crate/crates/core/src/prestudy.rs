//! The two pre-study experiments on whether attention scores matter.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attnstats::{flatten, jsd, tvd};
use crate::error::{Error, Result};
use crate::eventlog::{extract_prefixes, split, Activity, EventLog, Prefix};
use crate::seed;
use crate::transformer::{train, AttentionMode, ModelConfig, Predictor, TransformerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Baseline `i` against modified model `i`.
    #[default]
    ByIndex,
    CrossProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JsdScope {
    /// Distribution over all heads at once.
    #[default]
    AllHeads,
    /// Mean of the per-head divergences.
    PerHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp1Options {
    pub train_frac: f64,
    pub pairing: Pairing,
    pub scope: JsdScope,
}

impl Default for Exp1Options {
    fn default() -> Self {
        Exp1Options {
            train_frac: 0.7,
            pairing: Pairing::ByIndex,
            scope: JsdScope::AllHeads,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Baseline,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelId {
    pub role: Role,
    pub index: usize,
    pub seed: u64,
    pub attention_mode: AttentionMode,
}

impl ModelId {
    pub fn name(&self) -> String {
        match self.role {
            Role::Baseline => format!("baseline-{}", self.index),
            Role::Frozen => format!("frozen-{}", self.index),
        }
    }
}

/// One point of the JSD/TVD scatter plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Row {
    pub baseline: ModelId,
    pub modified: ModelId,
    pub mean_jsd: f64,
    pub mean_tvd: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Result {
    pub models: Vec<ModelId>,
    pub rows: Vec<Exp1Row>,
    pub scope: JsdScope,
    pub pairing: Pairing,
    pub test_prefixes: usize,
}

/// Mean JSD between attention distributions and mean TVD between
/// predictions of two models over `prefixes`.
pub fn compare_models<S: AsRef<[Activity]> + Sync>(
    a: &dyn Predictor,
    b: &dyn Predictor,
    prefixes: &[S],
    scope: JsdScope,
) -> Result<(f64, f64)> {
    if prefixes.is_empty() {
        return Err(Error::Degenerate("no prefixes to compare on".into()));
    }
    let per = prefixes
        .par_iter()
        .map(|p| {
            let (pa, aa) = a.predict(a.clip(p.as_ref()))?;
            let (pb, ab) = b.predict(b.clip(p.as_ref()))?;
            let (heads_a, all_a) = flatten(&aa)?;
            let (heads_b, all_b) = flatten(&ab)?;
            let d = match scope {
                JsdScope::AllHeads => jsd(&all_a, &all_b)?,
                JsdScope::PerHead => {
                    let mut sum = 0.0;
                    for (x, y) in heads_a.iter().zip(&heads_b) {
                        sum += jsd(x, y)?;
                    }
                    sum / heads_a.len() as f64
                }
            };
            Ok((d, tvd(&pa, &pb)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per.len() as f64;
    let (sj, st) = per.iter().fold((0.0, 0.0), |acc, (j, t)| (acc.0 + j, acc.1 + t));
    Ok((sj / n, st / n))
}

fn train_as(log: &EventLog, config: &ModelConfig, id: &ModelId) -> Result<TransformerModel> {
    let cfg = ModelConfig {
        seed: id.seed,
        attention_mode: id.attention_mode,
        ..config.clone()
    };
    log::info!("training {}", id.name());
    train(log, &cfg).map_err(|e| Error::Model {
        model: id.name(),
        source: Box::new(e),
    })
}

/// Trains `repeats` baselines and `repeats` frozen-uniform models on the
/// training part of `log` and compares them on every test prefix.
pub fn experiment1(log: &EventLog, repeats: usize, config: &ModelConfig, options: &Exp1Options) -> Result<Exp1Result> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let (train_log, test_log) = split(log, options.train_frac, config.seed)?;
    let prefixes = extract_prefixes(&test_log, 1);
    let id = |role, index: usize, tag, mode| ModelId {
        role,
        index,
        seed: seed::derive(config.seed, tag, index as u64),
        attention_mode: mode,
    };
    let baselines: Vec<ModelId> = (0..repeats)
        .map(|i| id(Role::Baseline, i, "baseline", AttentionMode::Learned))
        .collect();
    let frozen: Vec<ModelId> = (0..repeats)
        .map(|i| id(Role::Frozen, i, "frozen", AttentionMode::FrozenUniform))
        .collect();
    let trained_b = baselines
        .iter()
        .map(|m| train_as(&train_log, config, m))
        .collect::<Result<Vec<_>>>()?;
    let trained_f = frozen
        .iter()
        .map(|m| train_as(&train_log, config, m))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = match options.pairing {
        Pairing::ByIndex => (0..repeats).map(|i| (i, i)).collect(),
        Pairing::CrossProduct => (0..repeats).flat_map(|i| (0..repeats).map(move |j| (i, j))).collect(),
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let (mean_jsd, mean_tvd) = compare_models(&trained_b[i], &trained_f[j], &prefixes, options.scope)?;
        rows.push(Exp1Row {
            baseline: baselines[i].clone(),
            modified: frozen[j].clone(),
            mean_jsd,
            mean_tvd,
            samples: prefixes.len(),
        });
    }
    Ok(Exp1Result {
        models: baselines.into_iter().chain(frozen).collect(),
        rows,
        scope: options.scope,
        pairing: options.pairing,
        test_prefixes: prefixes.len(),
    })
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Row {
    pub prefix: usize,
    pub position: usize,
    pub tvd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Result {
    pub rows: Vec<Exp2Row>,
    /// Counts over `[k/20, (k+1)/20)`, the last bin closed.
    pub histogram: Vec<usize>,
}

pub fn histogram(values: impl IntoIterator<Item = f64>) -> Vec<usize> {
    let mut bins = vec![0; HISTOGRAM_BINS];
    for v in values {
        let k = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        bins[k] += 1;
    }
    bins
}

/// For every prefix and position, TVD between masking the input symbol and
/// masking the position's attention rows and columns.
pub fn experiment2(model: &TransformerModel, prefixes: &[Prefix]) -> Result<Exp2Result> {
    if prefixes.is_empty() {
        return Err(Error::Degenerate("no prefixes for the experiment".into()));
    }
    let pad = model.vocabulary().pad();
    let per_prefix = prefixes
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let tokens = model.clip(&p.activities);
            (0..tokens.len())
                .map(|i| {
                    let mut masked = tokens.to_vec();
                    masked[i] = pad;
                    let (p_m, _) = model.forward(&masked)?;
                    let p_am = model.forward_attention_masked(tokens, &[i])?;
                    Ok(Exp2Row {
                        prefix: k,
                        position: i,
                        tvd: tvd(&p_m, &p_am)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Exp2Row> = per_prefix.into_iter().flatten().collect();
    let histogram = histogram(rows.iter().map(|r| r.tvd));
    Ok(Exp2Result { rows, histogram })
}

pub fn write_exp1_csv<W: Write>(result: &Exp1Result, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Schema(e.to_string());
    w.write_record([
        "baseline",
        "baseline_seed",
        "modified",
        "modified_seed",
        "mean_jsd",
        "mean_tvd",
        "samples",
    ])
    .map_err(csv_err)?;
    for r in &result.rows {
        w.write_record([
            r.baseline.name(),
            r.baseline.seed.to_string(),
            r.modified.name(),
            r.modified.seed.to_string(),
            format!("{:.12}", r.mean_jsd),
            format!("{:.12}", r.mean_tvd),
            r.samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Schema(e.to_string()))
}

pub fn write_exp2_csv<W: Write>(result: &Exp2Result, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Schema(e.to_string());
    w.write_record(["prefix", "position", "tvd"]).map_err(csv_err)?;
    for r in &result.rows {
        w.write_record([r.prefix.to_string(), r.position.to_string(), format!("{:.12}", r.tvd)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Schema(e.to_string()))
}
