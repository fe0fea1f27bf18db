use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{likely_next, prefix_seed, relevant_activities, Explainer, ExplanationGraph, Thresholds};
use crate::error::Result;
use crate::eventlog::Activity;
use crate::transformer::Predictor;

/// The local graph of one prefix together with the sets it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub relevant: BTreeSet<Activity>,
    pub likely: BTreeSet<Activity>,
    pub last: Option<Activity>,
    pub graph: ExplanationGraph,
}

pub fn backward_local(
    model: &dyn Predictor,
    prefix: &[Activity],
    thresholds: &Thresholds,
    n_mods: usize,
    seed: u64,
) -> Result<LocalExplanation> {
    let (relevant, _) = relevant_activities(model, prefix, thresholds, n_mods, seed)?;
    let (p, _) = model.predict(prefix)?;
    let likely = likely_next(&p, thresholds);
    let mut graph = ExplanationGraph::new();
    if relevant.is_empty() || likely.is_empty() {
        log::debug!(
            "empty local graph (|A_r| = {}, |P_r| = {})",
            relevant.len(),
            likely.len()
        );
    } else {
        for &u in &relevant {
            for &v in &likely {
                graph.add_edge(u, v);
            }
        }
    }
    let pad = model.pad();
    let last = model.clip(prefix).iter().rev().copied().find(|&a| a != pad);
    Ok(LocalExplanation {
        relevant,
        likely,
        last,
        graph,
    })
}

pub fn backward_local_graph(
    model: &dyn Predictor,
    prefix: &[Activity],
    thresholds: &Thresholds,
    n_mods: usize,
    seed: u64,
) -> Result<ExplanationGraph> {
    Ok(backward_local(model, prefix, thresholds, n_mods, seed)?.graph)
}

/// Removes every edge `(u, v)` with `u, v ≠ last` for which both `(u, last)`
/// and `(last, v)` are present.
pub fn prune_shortcuts(graph: &mut ExplanationGraph, last: Activity) {
    let into: Vec<Activity> = graph
        .edges
        .iter()
        .filter(|&&(u, v)| v == last && u != last)
        .map(|&(u, _)| u)
        .collect();
    let out: BTreeSet<Activity> = graph.successors(last).into_iter().filter(|&v| v != last).collect();
    for u in into {
        for &v in &out {
            graph.edges.remove(&(u, v));
        }
    }
}

/// Joins the local graphs of `prefixes` in order, pruning after each merge
/// if `prune` is set. Returns the graph and every local explanation.
pub fn backward_explain_traced<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    prefixes: &[S],
    thresholds: &Thresholds,
    n_mods: usize,
    prune: bool,
    seed: u64,
) -> Result<(ExplanationGraph, Vec<LocalExplanation>)> {
    let locals = prefixes
        .par_iter()
        .enumerate()
        .map(|(k, p)| backward_local(model, p.as_ref(), thresholds, n_mods, prefix_seed(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let mut graph = ExplanationGraph::new();
    for local in &locals {
        graph.merge(&local.graph);
        if let (true, Some(last)) = (prune, local.last) {
            prune_shortcuts(&mut graph, last);
        }
    }
    Ok((graph, locals))
}

pub fn backward_explain<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    prefixes: &[S],
    thresholds: &Thresholds,
    n_mods: usize,
    seed: u64,
) -> Result<ExplanationGraph> {
    Ok(backward_explain_traced(model, prefixes, thresholds, n_mods, true, seed)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardExplainer {
    pub thresholds: Thresholds,
    pub n_mods: usize,
    pub prune: bool,
}

impl Default for BackwardExplainer {
    fn default() -> Self {
        BackwardExplainer {
            thresholds: Thresholds::default(),
            n_mods: 20,
            prune: true,
        }
    }
}

impl Explainer for BackwardExplainer {
    fn name(&self) -> &'static str {
        "backward"
    }

    fn explain(&self, model: &dyn Predictor, prefixes: &[Vec<Activity>], seed: u64) -> Result<ExplanationGraph> {
        Ok(backward_explain_traced(model, prefixes, &self.thresholds, self.n_mods, self.prune, seed)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::Scripted;
    use super::*;

    const A: Activity = Activity(0);
    const B: Activity = Activity(1);
    const C: Activity = Activity(2);
    const D: Activity = Activity(3);
    const E: Activity = Activity(4);

    #[test]
    fn pruning_removes_shortcuts_through_the_last_activity() {
        let mut g = ExplanationGraph::new();
        g.add_edge(A, B);
        g.add_edge(B, C);
        g.add_edge(A, C);
        g.add_edge(B, B);
        prune_shortcuts(&mut g, B);
        assert_eq!(g.edges, BTreeSet::from([(A, B), (B, C), (B, B)]));
        assert_eq!(g.vertices.len(), 3);
    }

    fn example_model() -> Scripted {
        Scripted {
            n: 5,
            heads: 2,
            weight: Box::new(|t, i| match (t.len(), t[i]) {
                (5, x) if x == B => 3.0,
                (5, x) if x == C => 5.0,
                (1, _) => 1.0,
                _ => 0.5,
            }),
            predict: Box::new(|t| {
                let mut p = vec![0.0; 6];
                if t.len() == 5 {
                    p[B.index()] = 0.5;
                    p[D.index()] = 0.5;
                } else {
                    p[C.index()] = 1.0;
                }
                p
            }),
        }
    }

    #[test]
    fn local_graph_is_complete_bipartite() {
        let local = backward_local(&example_model(), &[B, A, C, B, E], &Thresholds::default(), 0, 0).unwrap();
        assert_eq!(local.relevant, BTreeSet::from([B, C]));
        assert_eq!(local.likely, BTreeSet::from([B, D]));
        assert_eq!(local.graph.edges, BTreeSet::from([(C, B), (B, B), (B, D), (C, D)]));
        assert_eq!(local.last, Some(E));
    }

    #[test]
    fn joined_graph_of_two_prefixes() {
        let prefixes = vec![vec![B, A, C, B, E], vec![A]];
        let g = backward_explain(&example_model(), &prefixes, &Thresholds::default(), 0, 0).unwrap();
        assert_eq!(g.vertices, BTreeSet::from([A, B, C, D]));
        assert_eq!(g.edges, BTreeSet::from([(C, B), (B, B), (B, D), (C, D), (A, C)]));
    }
}
