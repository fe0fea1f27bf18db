//! Global explainers that turn a trained predictor into a directed graph
//! over activities.

mod backward;
mod exploration;
mod export;

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::attnstats::{aggregate_activity_scores, aggregate_event_scores, cosine_distance, ActivityScoreVector};
use crate::error::{Error, Result};
use crate::eventlog::{Activity, Prefix};
use crate::seed::{self, Rng};
use crate::transformer::{PredictionVector, Predictor};

pub use backward::{
    backward_explain, backward_explain_traced, backward_local, backward_local_graph, prune_shortcuts,
    BackwardExplainer, LocalExplanation,
};
pub use exploration::{
    attention_exploration_explain, attention_exploration_scores, compute_relevance_score, row_normalize,
    AttentionExplorationExplainer, CellIndexing, ExplorationScores, RelevanceInputs, Scenario, ScoreMatrix,
};
pub use export::{export_graph, graph_from_json, GraphFormat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Largest cosine distance for a modification to count as prediction-preserving.
    pub delta_sim: f64,
    pub delta_attr: f64,
    pub delta_pred: f64,
    /// Row-normalized score floor; `None` means `1.5 / |A|`.
    pub delta_edge: Option<f64>,
    /// Tolerance of the prediction-similarity test inside the relevance score.
    pub sim_eps: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            delta_sim: 0.2,
            delta_attr: 0.5,
            delta_pred: 0.1,
            delta_edge: None,
            sim_eps: 0.05,
        }
    }
}

impl Thresholds {
    pub fn edge_threshold(&self, num_activities: usize) -> f64 {
        self.delta_edge
            .unwrap_or_else(|| (1.5 / num_activities.max(1) as f64).min(1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("delta_sim", Some(self.delta_sim)),
            ("delta_attr", Some(self.delta_attr)),
            ("delta_pred", Some(self.delta_pred)),
            ("delta_edge", self.delta_edge),
            ("sim_eps", Some(self.sim_eps)),
        ];
        for (name, v) in named {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationGraph {
    pub vertices: BTreeSet<Activity>,
    pub edges: BTreeSet<(Activity, Activity)>,
}

impl ExplanationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vertices(vertices: impl IntoIterator<Item = Activity>) -> Self {
        ExplanationGraph {
            vertices: vertices.into_iter().collect(),
            edges: BTreeSet::new(),
        }
    }

    pub fn add_edge(&mut self, from: Activity, to: Activity) {
        self.vertices.insert(from);
        self.vertices.insert(to);
        self.edges.insert((from, to));
    }

    pub fn has_edge(&self, from: Activity, to: Activity) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Inserts every vertex and edge of `other` not yet present.
    pub fn merge(&mut self, other: &ExplanationGraph) {
        self.vertices.extend(other.vertices.iter().copied());
        self.edges.extend(other.edges.iter().copied());
    }

    pub fn successors(&self, v: Activity) -> BTreeSet<Activity> {
        self.edges
            .range((v, Activity(0))..=(v, Activity(u32::MAX)))
            .map(|&(_, to)| to)
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        self.edges
            .iter()
            .all(|(u, v)| self.vertices.contains(u) && self.vertices.contains(v))
    }
}

/// A global explainer that can be re-run on arbitrary prefix sets.
pub trait Explainer: Sync {
    fn name(&self) -> &'static str;

    fn explain(&self, model: &dyn Predictor, prefixes: &[Vec<Activity>], seed: u64) -> Result<ExplanationGraph>;
}

/// Business activities whose predicted probability is strictly above `delta_pred`.
pub fn likely_next(p: &PredictionVector, thresholds: &Thresholds) -> BTreeSet<Activity> {
    let n = p.len().saturating_sub(1);
    p.probs[..n]
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > thresholds.delta_pred)
        .map(|(i, _)| Activity::from(i))
        .collect()
}

/// Masks a random non-empty set of at most `⌈|σ|/2⌉` positions, drawn
/// uniformly among all such sets.
pub fn random_modification(prefix: &[Activity], pad: Activity, rng: &mut Rng) -> Vec<Activity> {
    let len = prefix.len();
    let mut out = prefix.to_vec();
    if len == 0 {
        return out;
    }
    let max = len.div_ceil(2);
    // weight each size by the number of subsets of that size
    let mut weights = Vec::with_capacity(max);
    let mut binom = 1.0_f64;
    for k in 1..=max {
        binom = binom * (len + 1 - k) as f64 / k as f64;
        weights.push(binom);
    }
    let size = 1 + WeightedIndex::new(&weights).expect("positive weights").sample(rng);
    for i in index::sample(rng, len, size) {
        out[i] = pad;
    }
    out
}

/// Relevant activities `A_r` of `prefix` and the aggregated score vector ψ.
///
/// ψ sums the max-normalized activity scores of the prefix itself and of
/// every modification whose prediction stays within `delta_sim` cosine
/// distance, and is max-normalized again.
pub fn relevant_activities(
    model: &dyn Predictor,
    prefix: &[Activity],
    thresholds: &Thresholds,
    n_mods: usize,
    seed: u64,
) -> Result<(BTreeSet<Activity>, ActivityScoreVector)> {
    let prefix = model.clip(prefix);
    let pad = model.pad();
    let (p, att) = model.predict(prefix)?;
    let mut total = match aggregate_activity_scores(&aggregate_event_scores(&att), prefix, pad) {
        Ok(psi) => psi,
        Err(Error::Degenerate(_)) => return Ok((BTreeSet::new(), ActivityScoreVector::default())),
        Err(e) => return Err(e),
    };
    let mut rng = seed::rng(seed, "modifications", 0);
    for _ in 0..n_mods {
        let modified = random_modification(prefix, pad, &mut rng);
        let (pm, att_m) = model.predict(&modified)?;
        let close = match cosine_distance(&pm, &p) {
            Ok(d) => d <= thresholds.delta_sim,
            Err(Error::Degenerate(_)) => false,
            Err(e) => return Err(e),
        };
        if !close {
            continue;
        }
        match aggregate_activity_scores(&aggregate_event_scores(&att_m), &modified, pad) {
            Ok(psi) => total.accumulate(&psi),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let psi = total.max_normalized()?;
    let relevant = psi
        .iter()
        .filter(|&(_, s)| s > thresholds.delta_attr)
        .map(|(a, _)| a)
        .collect();
    Ok((relevant, psi))
}

pub(crate) fn prefix_seed(seed: u64, k: usize) -> u64 {
    seed::derive(seed, "prefix", k as u64)
}

pub fn prefix_activities(prefixes: &[Prefix]) -> Vec<Vec<Activity>> {
    prefixes.iter().map(|p| p.activities.clone()).collect()
}
