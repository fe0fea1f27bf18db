use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network;
use super::params::Params;
use super::{AttentionMode, ModelConfig, TransformerModel};
use crate::error::{Error, Result};
use crate::eventlog::{extract_prefixes, Activity, EventLog};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub num_prefixes: usize,
    pub steps: usize,
    /// Mean cross-entropy per epoch (on the PAD-dropped inputs actually used).
    pub epoch_losses: Vec<f64>,
    pub max_len: usize,
}

pub fn train(log: &EventLog, config: &ModelConfig) -> Result<TransformerModel> {
    train_with_report(log, config).map(|(m, _)| m)
}

/// Minimizes next-symbol cross-entropy over every prefix of `log` with
/// mini-batch SGD. Deterministic for a fixed config (including the seed).
pub fn train_with_report(log: &EventLog, config: &ModelConfig) -> Result<(TransformerModel, TrainReport)> {
    config.validate()?;
    let prefixes = extract_prefixes(log, 1);
    if prefixes.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let mut config = config.clone();
    if config.max_len == 0 {
        config.max_len = log.stats().max_len;
    }
    let vocabulary = log.vocabulary().clone();
    let n = vocabulary.len();
    let pad = vocabulary.pad();
    let frozen = config.attention_mode == AttentionMode::FrozenUniform;
    let mut model = TransformerModel::new(config.clone(), vocabulary)?;
    let dims = model.params().dims();

    let target_index = |a: Activity| a.index().min(n);
    let mut rng = seed::rng(config.seed, "train", 0);
    let mut order: Vec<usize> = (0..prefixes.len()).collect();
    let mut report = TrainReport {
        num_prefixes: prefixes.len(),
        steps: 0,
        epoch_losses: Vec::with_capacity(config.epochs),
        max_len: config.max_len,
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<(Vec<Activity>, usize)> = batch
                .iter()
                .map(|&i| {
                    let p = &prefixes[i];
                    let tokens = model
                        .clip(&p.activities)
                        .iter()
                        .map(|&a| {
                            if rng.random::<f64>() < config.pad_dropout {
                                pad
                            } else {
                                a
                            }
                        })
                        .collect();
                    (tokens, target_index(p.target))
                })
                .collect();
            let per_sample: Vec<Result<(f64, Params)>> = inputs
                .par_iter()
                .map(|(tokens, y)| sample_gradient(&model, tokens, *y))
                .collect();
            let mut grads = Params::zeros(dims);
            let mut loss = 0.0;
            for r in per_sample {
                let (l, g) = r?;
                loss += l;
                grads.add_scaled(&g, 1.0);
            }
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: report.steps,
                    loss,
                });
            }
            epoch_loss += loss;
            let step = config.learning_rate / batch.len() as f64;
            let src = grads.tensors();
            for ((name, p), (_, g)) in model.params_mut().tensors_mut().into_iter().zip(src) {
                if frozen && Params::is_frozen_tensor(&name) {
                    continue;
                }
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= step * g);
            }
            report.steps += 1;
        }
        if !model.params().all_finite() {
            return Err(Error::Divergence {
                step: report.steps,
                loss: f64::NAN,
            });
        }
        let mean = epoch_loss / prefixes.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    Ok((model, report))
}

fn sample_gradient(model: &TransformerModel, tokens: &[Activity], target: usize) -> Result<(f64, Params)> {
    let pass = model.run(tokens, &[])?;
    let loss = -pass.probs[target].ln();
    let mut dlogits: Array1<f64> = pass.probs.clone();
    dlogits[target] -= 1.0;
    let mut grads = Params::zeros(model.params().dims());
    network::backward(model.params(), &pass, &dlogits, &mut grads);
    Ok((loss, grads))
}
