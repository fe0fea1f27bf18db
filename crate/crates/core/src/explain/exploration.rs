use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{likely_next, prefix_seed, relevant_activities, Explainer, ExplanationGraph, Thresholds};
use crate::attnstats::{aggregate_activity_scores, aggregate_event_scores, ActivityScoreVector};
use crate::error::{Error, Result};
use crate::eventlog::Activity;
use crate::seed;
use crate::transformer::{PredictionVector, Predictor};

/// Masking scenario a score matrix was accumulated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Few,
    Most,
    Combined,
}

/// Rows are predicted activities, columns influencing activities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub values: Array2<f64>,
    pub scenario: Scenario,
}

impl ScoreMatrix {
    pub fn zeros(n: usize, scenario: Scenario) -> Self {
        ScoreMatrix {
            values: Array2::zeros((n, n)),
            scenario,
        }
    }

    pub fn get(&self, row: Activity, col: Activity) -> f64 {
        self.values[(row.index(), col.index())]
    }

    pub fn add(&mut self, other: &ScoreMatrix) {
        self.values += &other.values;
    }
}

/// Which cell the non-masked loop of the relevance score writes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellIndexing {
    /// `K(a, a_n)`: the non-masked activity's own column.
    #[default]
    NonMasked,
    /// `K(a, a_m)` as printed, with `a_m` the last masked activity visited.
    Literal,
}

pub struct RelevanceInputs<'a> {
    pub prefix: &'a [Activity],
    pub masked: &'a [Activity],
    pub psi: &'a ActivityScoreVector,
    pub psi_masked: &'a ActivityScoreVector,
    pub p: &'a PredictionVector,
    pub p_masked: &'a PredictionVector,
    pub likely: &'a BTreeSet<Activity>,
    pub pad: Activity,
    pub sim_eps: f64,
}

/// Score matrix of one masked version of a prefix.
///
/// Every position is visited, so repeated activities contribute once per
/// occurrence. Positions that are PAD in the original prefix are ignored.
pub fn compute_relevance_score(
    inputs: &RelevanceInputs,
    n_activities: usize,
    scenario: Scenario,
    indexing: CellIndexing,
) -> ScoreMatrix {
    let mut k = ScoreMatrix::zeros(n_activities, scenario);
    let RelevanceInputs {
        prefix,
        masked,
        psi,
        psi_masked,
        p,
        p_masked,
        likely,
        pad,
        sim_eps,
    } = *inputs;
    let masked_acts: Vec<Activity> = prefix
        .iter()
        .zip(masked)
        .filter(|&(&o, &m)| o != pad && m == pad)
        .map(|(&o, _)| o)
        .collect();
    let kept: Vec<Activity> = prefix
        .iter()
        .zip(masked)
        .filter(|&(&o, &m)| o != pad && m == o)
        .map(|(&o, _)| o)
        .collect();
    for &a in likely {
        let (pa, pma) = (p.prob(a), p_masked.prob(a));
        let similar = (pa - pma).abs() <= sim_eps;
        let row = a.index();
        for &am in &masked_acts {
            let s = pa * psi.get(am);
            k.values[(row, am.index())] += if similar { -s } else { s };
        }
        for &an in &kept {
            let s = if similar {
                psi_masked.get(an) * pa
            } else {
                (psi.get(an) - psi_masked.get(an)).abs() * (pa - pma).abs()
            };
            let col = match indexing {
                CellIndexing::NonMasked => an,
                CellIndexing::Literal => match masked_acts.last() {
                    Some(&am) => am,
                    None => continue,
                },
            };
            k.values[(row, col.index())] += s;
        }
    }
    k
}

/// Shifts rows with a negative minimum to start at zero, then scales each
/// row to sum to one. Rows that sum to zero stay zero.
pub fn row_normalize(m: &ScoreMatrix) -> ScoreMatrix {
    let mut out = m.clone();
    for mut row in out.values.rows_mut() {
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            row.mapv_inplace(|v| v - min);
        }
        let sum: f64 = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationScores {
    pub few: ScoreMatrix,
    pub most: ScoreMatrix,
}

impl ExplorationScores {
    /// Boolean OR of both row-normalized matrices above the edge threshold,
    /// read as an adjacency matrix (column activity → row activity).
    pub fn graph(&self, thresholds: &Thresholds) -> ExplanationGraph {
        let n = self.few.values.nrows();
        let delta = thresholds.edge_threshold(n);
        let few = row_normalize(&self.few);
        let most = row_normalize(&self.most);
        let mut g = ExplanationGraph::with_vertices((0..n).map(Activity::from));
        for ((row, col), &f) in few.values.indexed_iter() {
            if f > delta || most.values[(row, col)] > delta {
                g.add_edge(Activity::from(col), Activity::from(row));
            }
        }
        g
    }
}

/// Position subsets: all of them for up to 8 positions, otherwise `cap`
/// distinct uniformly drawn ones.
fn position_subsets(size: usize, cap: usize, rng: &mut seed::Rng) -> Vec<Vec<bool>> {
    if size <= 8 {
        return (0u32..1 << size)
            .map(|bits| (0..size).map(|i| bits >> i & 1 == 1).collect())
            .collect();
    }
    let target = if size < 63 { cap.min(1usize << size) } else { cap };
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(target);
    while out.len() < target {
        let s: Vec<bool> = (0..size).map(|_| rng.random::<bool>()).collect();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

fn psi_of(model: &dyn Predictor, tokens: &[Activity]) -> Result<(PredictionVector, ActivityScoreVector)> {
    let (p, att) = model.predict(tokens)?;
    match aggregate_activity_scores(&aggregate_event_scores(&att), tokens, model.pad()) {
        Ok(psi) => Ok((p, psi)),
        Err(Error::Degenerate(_)) => Ok((p, ActivityScoreVector::default())),
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn prefix_scores(
    model: &dyn Predictor,
    prefix: &[Activity],
    thresholds: &Thresholds,
    n_mods: usize,
    subset_cap: usize,
    indexing: CellIndexing,
    seed: u64,
) -> Result<ExplorationScores> {
    let n = model.num_activities();
    let pad = model.pad();
    let mut scores = ExplorationScores {
        few: ScoreMatrix::zeros(n, Scenario::Few),
        most: ScoreMatrix::zeros(n, Scenario::Most),
    };
    let prefix = model.clip(prefix);
    let (p, psi) = psi_of(model, prefix)?;
    let likely = likely_next(&p, thresholds);
    if likely.is_empty() || psi.scores.is_empty() {
        return Ok(scores);
    }
    let (relevant, _) = relevant_activities(model, prefix, thresholds, n_mods, seed)?;
    let positions: Vec<usize> = (0..prefix.len()).filter(|&i| relevant.contains(&prefix[i])).collect();
    let mut rng = seed::rng(seed, "subsets", 0);
    for subset in position_subsets(positions.len(), subset_cap, &mut rng) {
        let mut chosen = vec![false; prefix.len()];
        for (&i, _) in positions.iter().zip(&subset).filter(|(_, &b)| b) {
            chosen[i] = true;
        }
        for (scenario, target) in [(Scenario::Few, &mut scores.few), (Scenario::Most, &mut scores.most)] {
            let mask_here = |i: usize| match scenario {
                Scenario::Few => chosen[i],
                _ => !chosen[i],
            };
            let masked: Vec<Activity> = (0..prefix.len())
                .map(|i| if mask_here(i) { pad } else { prefix[i] })
                .collect();
            if masked == prefix {
                continue;
            }
            let (p_masked, psi_masked) = psi_of(model, &masked)?;
            let inputs = RelevanceInputs {
                prefix,
                masked: &masked,
                psi: &psi,
                psi_masked: &psi_masked,
                p: &p,
                p_masked: &p_masked,
                likely: &likely,
                pad,
                sim_eps: thresholds.sim_eps,
            };
            target.add(&compute_relevance_score(&inputs, n, scenario, indexing));
        }
    }
    Ok(scores)
}

/// `K^few` and `K^most` summed over all prefixes.
#[allow(clippy::too_many_arguments)]
pub fn attention_exploration_scores<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    prefixes: &[S],
    thresholds: &Thresholds,
    n_mods: usize,
    subset_cap: usize,
    indexing: CellIndexing,
    seed: u64,
) -> Result<ExplorationScores> {
    let per_prefix = prefixes
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            prefix_scores(
                model,
                p.as_ref(),
                thresholds,
                n_mods,
                subset_cap,
                indexing,
                prefix_seed(seed, k),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n = model.num_activities();
    let mut total = ExplorationScores {
        few: ScoreMatrix::zeros(n, Scenario::Few),
        most: ScoreMatrix::zeros(n, Scenario::Most),
    };
    for s in &per_prefix {
        total.few.add(&s.few);
        total.most.add(&s.most);
    }
    Ok(total)
}

pub fn attention_exploration_explain<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    prefixes: &[S],
    thresholds: &Thresholds,
    subset_cap: usize,
    seed: u64,
) -> Result<ExplanationGraph> {
    AttentionExplorationExplainer {
        thresholds: *thresholds,
        subset_cap,
        ..AttentionExplorationExplainer::default()
    }
    .explain_prefixes(model, prefixes, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExplorationExplainer {
    pub thresholds: Thresholds,
    pub n_mods: usize,
    pub subset_cap: usize,
    pub indexing: CellIndexing,
}

impl Default for AttentionExplorationExplainer {
    fn default() -> Self {
        AttentionExplorationExplainer {
            thresholds: Thresholds::default(),
            n_mods: 20,
            subset_cap: 256,
            indexing: CellIndexing::NonMasked,
        }
    }
}

impl AttentionExplorationExplainer {
    pub fn scores<S: AsRef<[Activity]> + Sync>(
        &self,
        model: &dyn Predictor,
        prefixes: &[S],
        seed: u64,
    ) -> Result<ExplorationScores> {
        attention_exploration_scores(
            model,
            prefixes,
            &self.thresholds,
            self.n_mods,
            self.subset_cap,
            self.indexing,
            seed,
        )
    }

    pub fn explain_prefixes<S: AsRef<[Activity]> + Sync>(
        &self,
        model: &dyn Predictor,
        prefixes: &[S],
        seed: u64,
    ) -> Result<ExplanationGraph> {
        Ok(self.scores(model, prefixes, seed)?.graph(&self.thresholds))
    }
}

impl Explainer for AttentionExplorationExplainer {
    fn name(&self) -> &'static str {
        "attention-exploration"
    }

    fn explain(&self, model: &dyn Predictor, prefixes: &[Vec<Activity>], seed: u64) -> Result<ExplanationGraph> {
        self.explain_prefixes(model, prefixes, seed)
    }
}
