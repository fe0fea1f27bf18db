//! Central finite-difference check of the hand-written backward pass.

use ndarray::Array1;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::network;
use super::params::Params;
use super::{AttentionMode, TransformerModel};
use crate::error::{Error, Result};
use crate::eventlog::{Activity, Prefix};
use crate::seed;

const STEP: f64 = 1e-4;
/// Below this magnitude both gradients are compared in absolute terms.
const TINY: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub checked: usize,
    pub loss: f64,
}

/// Cross-entropy against a target distribution over the model outputs, and
/// its gradient. Frozen tensors get an exactly zero gradient.
pub fn loss_and_gradients(model: &TransformerModel, tokens: &[Activity], target: &[f64]) -> Result<(f64, Params)> {
    let pass = model.run(tokens, &[])?;
    if target.len() != pass.probs.len() {
        return Err(Error::Dimension {
            left: target.len(),
            right: pass.probs.len(),
        });
    }
    let loss = cross_entropy(&pass.probs, target);
    let dlogits = &pass.probs * target.iter().sum::<f64>() - &Array1::from(target.to_vec());
    let mut grads = Params::zeros(model.params().dims());
    network::backward(model.params(), &pass, &dlogits, &mut grads);
    if model.config().attention_mode == AttentionMode::FrozenUniform {
        for (name, g) in grads.tensors_mut() {
            if Params::is_frozen_tensor(&name) {
                g.fill(0.0);
            }
        }
    }
    Ok((loss, grads))
}

fn cross_entropy(probs: &Array1<f64>, target: &[f64]) -> f64 {
    target
        .iter()
        .zip(probs)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| -t * p.ln())
        .sum()
}

/// Checks a random subsample of 256 trainable entries for the one-hot target of `prefix`.
pub fn gradient_check(model: &TransformerModel, prefix: &Prefix) -> Result<GradCheckReport> {
    let n = model.vocabulary().len();
    let mut target = vec![0.0; n + 1];
    target[prefix.target.index().min(n)] = 1.0;
    gradient_check_with(model, &prefix.activities, &target, 256, model.config().seed)
}

pub fn gradient_check_with(
    model: &TransformerModel,
    tokens: &[Activity],
    target: &[f64],
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (loss, grads) = loss_and_gradients(model, tokens, target)?;
    let frozen = model.config().attention_mode == AttentionMode::FrozenUniform;

    // flat (tensor, offset) addresses of every trainable entry
    let mut addresses = Vec::new();
    for (t, (spec, data)) in grads.tensors().iter().enumerate() {
        if frozen && Params::is_frozen_tensor(&spec.name) {
            continue;
        }
        addresses.extend((0..data.len()).map(|i| (t, i)));
    }
    let mut rng = seed::rng(seed, "gradcheck", 0);
    let picks = index::sample(&mut rng, addresses.len(), samples.min(addresses.len()));

    let analytic = grads.tensors();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        checked: 0,
        loss,
    };
    for pick in picks {
        let (t, i) = addresses[pick];
        let original = model.params().tensors()[t].1[i];
        let mut eval = |value: f64| -> Result<f64> {
            probe.params_mut().tensors_mut()[t].1[i] = value;
            let pass = probe.run(tokens, &[])?;
            Ok(cross_entropy(&pass.probs, target))
        };
        let numeric = (eval(original + STEP)? - eval(original - STEP)?) / (2.0 * STEP);
        eval(original)?;
        let a = analytic[t].1[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(TINY);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_tensor = analytic[t].0.name.clone();
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::Vocabulary;
    use crate::transformer::ModelConfig;

    fn model(mode: AttentionMode) -> TransformerModel {
        let config = ModelConfig {
            d_k: 12,
            heads: 3,
            max_len: 6,
            ff_dim: 10,
            attention_mode: mode,
            seed: 3,
            ..ModelConfig::default()
        };
        TransformerModel::new(config, Vocabulary::from_labels(["A", "B", "C", "D"]).unwrap()).unwrap()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for mode in [AttentionMode::Learned, AttentionMode::FrozenUniform] {
            let m = model(mode);
            let v = m.vocabulary();
            let prefix = Prefix {
                activities: vec![Activity(0), v.pad(), Activity(2), Activity(1), Activity(3)],
                target: Activity(2),
                source_case: "c".into(),
            };
            let report = gradient_check(&m, &prefix).unwrap();
            assert_eq!(report.checked, 256);
            assert!(report.max_rel_error < 1e-4, "{mode:?}: {report:?}");
        }
    }

    #[test]
    fn uniform_target_matching_prediction_has_zero_gradient() {
        let m = model(AttentionMode::Learned);
        let tokens = [Activity(1), Activity(0)];
        let probs = m.forward(&tokens).unwrap().0.probs;
        let (_, g) = loss_and_gradients(&m, &tokens, &probs).unwrap();
        assert!(g.squared_norm().sqrt() < 1e-12);
    }
}
