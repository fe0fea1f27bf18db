//! Single-block multi-head self-attention next-activity predictor.
//!
//! The model embeds a prefix (PAD allowed as an ordinary input symbol), runs
//! one transformer block, mean-pools over positions and emits a softmax over
//! the business activities plus END. Every forward pass also returns the
//! post-softmax attention matrix of each head.

mod checkpoint;
mod gradcheck;
mod network;
mod params;
mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{Activity, Vocabulary};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, gradient_check_with, loss_and_gradients, GradCheckReport};
pub use params::{Dims, Params, TensorSpec};
pub use train::{train, train_with_report, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    #[default]
    Learned,
    /// Query and key projections are held at zero, so every attention row is uniform.
    FrozenUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_k: usize,
    pub heads: usize,
    /// Longest accepted prefix; 0 means "longest trace of the training log".
    pub max_len: usize,
    pub ff_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub attention_mode: AttentionMode,
    /// Probability of replacing a training input position by PAD.
    pub pad_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_k: 36,
            heads: 4,
            max_len: 0,
            ff_dim: 64,
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 42,
            attention_mode: AttentionMode::Learned,
            pad_dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.heads == 0 {
            return bad("at least one head is required".into());
        }
        if self.d_k == 0 || !self.d_k.is_multiple_of(self.heads) {
            return bad(format!("d_k = {} is not divisible by h = {}", self.d_k, self.heads));
        }
        if self.ff_dim == 0 || self.batch_size == 0 {
            return bad("ff_dim and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.pad_dropout) {
            return bad(format!("pad_dropout {} outside [0, 1)", self.pad_dropout));
        }
        Ok(())
    }

    pub fn dims(&self, vocabulary: &Vocabulary) -> Dims {
        Dims {
            vocab_in: vocabulary.len() + 2,
            n_out: vocabulary.len() + 1,
            d_model: self.d_k,
            heads: self.heads,
            ff_dim: self.ff_dim,
        }
    }
}

/// Softmax output over business activities followed by END.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub probs: Vec<f64>,
}

impl PredictionVector {
    pub fn new(probs: Vec<f64>) -> Self {
        PredictionVector { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn n_activities(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability of a business activity or END; PAD has probability 0.
    pub fn prob(&self, a: Activity) -> f64 {
        let n = self.n_activities();
        match a.index() {
            i if i < n => self.probs[i],
            i if i == n + 1 => self.probs[n],
            _ => 0.0,
        }
    }

    pub fn argmax(&self) -> Activity {
        let (i, _) = self.probs.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &p)| if p > best.1 { (i, p) } else { best },
        );
        if i == self.n_activities() {
            Activity::from(i + 1)
        } else {
            Activity::from(i)
        }
    }
}

/// Post-softmax attention matrices, one `|σ| × |σ|` matrix per head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    pub heads: Vec<Array2<f64>>,
}

impl AttentionTensor {
    pub fn new(heads: Vec<Array2<f64>>) -> Self {
        AttentionTensor { heads }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn seq_len(&self) -> usize {
        self.heads.first().map_or(0, |m| m.nrows())
    }
}

/// Anything that maps a symbol sequence to a prediction and attention tensor.
/// Symbols are ids of a vocabulary with `num_activities()` business
/// activities, so PAD is `Activity(num_activities())`.
pub trait Predictor: Sync {
    fn num_activities(&self) -> usize;

    fn predict(&self, tokens: &[Activity]) -> Result<(PredictionVector, AttentionTensor)>;

    fn pad(&self) -> Activity {
        Activity::from(self.num_activities())
    }

    fn end(&self) -> Activity {
        Activity::from(self.num_activities() + 1)
    }

    /// The part of `tokens` the predictor actually reads.
    fn clip<'a>(&self, tokens: &'a [Activity]) -> &'a [Activity] {
        tokens
    }
}

#[derive(Debug, Clone)]
pub struct TransformerModel {
    config: ModelConfig,
    vocabulary: Vocabulary,
    params: Params,
    positional: Array2<f64>,
}

impl TransformerModel {
    /// Fresh model with randomly initialized parameters (seeded by `config.seed`).
    pub fn new(config: ModelConfig, vocabulary: Vocabulary) -> Result<Self> {
        let frozen = config.attention_mode == AttentionMode::FrozenUniform;
        let params = Params::init(config.dims(&vocabulary), config.seed, frozen);
        Self::from_params(config, vocabulary, params)
    }

    pub fn from_params(config: ModelConfig, vocabulary: Vocabulary, params: Params) -> Result<Self> {
        config.validate()?;
        if config.max_len == 0 {
            return Err(Error::Config("max_len must be resolved before building a model".into()));
        }
        let expected = Params::zeros(config.dims(&vocabulary)).specs();
        if params.specs() != expected {
            return Err(Error::Config("parameter shapes do not match the configuration".into()));
        }
        if config.attention_mode == AttentionMode::FrozenUniform
            && params
                .w_query
                .iter()
                .chain(&params.w_key)
                .any(|m| m.iter().any(|&v| v != 0.0))
        {
            return Err(Error::Config(
                "frozen-uniform models need zero query/key projections".into(),
            ));
        }
        let positional = network::sinusoidal(config.max_len, config.d_k);
        Ok(TransformerModel {
            config,
            vocabulary,
            params,
            positional,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn max_len(&self) -> usize {
        self.config.max_len
    }

    /// The trailing `max_len` symbols of `tokens`.
    pub fn clip<'a>(&self, tokens: &'a [Activity]) -> &'a [Activity] {
        &tokens[tokens.len().saturating_sub(self.config.max_len)..]
    }

    fn check(&self, tokens: &[Activity]) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::Degenerate("empty prefix".into()));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::Length {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        let rows = self.params.embedding.nrows();
        tokens
            .iter()
            .map(|a| {
                if a.index() < rows {
                    Ok(a.index())
                } else {
                    Err(Error::Index {
                        index: a.index(),
                        len: rows,
                    })
                }
            })
            .collect()
    }

    pub(crate) fn run(&self, tokens: &[Activity], masked: &[usize]) -> Result<network::Pass> {
        let ids = self.check(tokens)?;
        Ok(network::forward(&self.params, &self.positional, &ids, masked))
    }

    pub fn forward(&self, tokens: &[Activity]) -> Result<(PredictionVector, AttentionTensor)> {
        let pass = self.run(tokens, &[])?;
        Ok((
            PredictionVector::new(pass.probs.to_vec()),
            AttentionTensor::new(pass.attention),
        ))
    }

    /// Forward pass with the attention rows and columns of `positions`
    /// zeroed in every head after the softmax.
    pub fn forward_attention_masked(&self, tokens: &[Activity], positions: &[usize]) -> Result<PredictionVector> {
        if let Some(&bad) = positions.iter().find(|&&i| i >= tokens.len()) {
            return Err(Error::Index {
                index: bad,
                len: tokens.len(),
            });
        }
        let pass = self.run(tokens, positions)?;
        Ok(PredictionVector::new(pass.probs.to_vec()))
    }
}

impl Predictor for TransformerModel {
    fn num_activities(&self) -> usize {
        self.vocabulary.len()
    }

    fn predict(&self, tokens: &[Activity]) -> Result<(PredictionVector, AttentionTensor)> {
        self.forward(TransformerModel::clip(self, tokens))
    }

    fn clip<'a>(&self, tokens: &'a [Activity]) -> &'a [Activity] {
        TransformerModel::clip(self, tokens)
    }
}
