use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ExplanationGraph;
use crate::error::{Error, Result};
use crate::eventlog::{Activity, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Dot,
    Json,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    vertices: Vec<String>,
    edges: Vec<(String, String)>,
}

fn dot_id(label: &str) -> String {
    let escaped: String = label
        .chars()
        .flat_map(|c| match c {
            '"' | '\\' => vec!['\\', c],
            '\n' | '\r' => vec![' '],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

/// Renders `graph` with vertices and edges sorted by label. END and PAD are
/// never written.
pub fn export_graph(graph: &ExplanationGraph, vocabulary: &Vocabulary, format: GraphFormat) -> String {
    let keep = |a: &Activity| vocabulary.is_business(*a);
    let mut vertices: Vec<&str> = graph
        .vertices
        .iter()
        .filter(|a| keep(a))
        .map(|&a| vocabulary.label(a))
        .collect();
    vertices.sort_unstable();
    let mut edges: Vec<(&str, &str)> = graph
        .edges
        .iter()
        .filter(|(u, v)| keep(u) && keep(v))
        .map(|&(u, v)| (vocabulary.label(u), vocabulary.label(v)))
        .collect();
    edges.sort_unstable();
    match format {
        GraphFormat::Dot => {
            let mut out = String::from("digraph explanation {\n");
            for v in &vertices {
                writeln!(out, "  {};", dot_id(v)).expect("string write");
            }
            for (u, v) in &edges {
                writeln!(out, "  {} -> {};", dot_id(u), dot_id(v)).expect("string write");
            }
            out.push_str("}\n");
            out
        }
        GraphFormat::Json => {
            let doc = GraphJson {
                vertices: vertices.iter().map(|s| s.to_string()).collect(),
                edges: edges.iter().map(|(u, v)| (u.to_string(), v.to_string())).collect(),
            };
            serde_json::to_string_pretty(&doc).expect("graph serializes") + "\n"
        }
    }
}

pub fn graph_from_json(text: &str, vocabulary: &Vocabulary) -> Result<ExplanationGraph> {
    let doc: GraphJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let lookup = |label: &str| {
        vocabulary
            .get(label)
            .ok_or_else(|| Error::Schema(format!("unknown activity {label:?} in graph")))
    };
    let mut g = ExplanationGraph::new();
    for v in &doc.vertices {
        g.vertices.insert(lookup(v)?);
    }
    for (u, v) in &doc.edges {
        g.add_edge(lookup(u)?, lookup(v)?);
    }
    Ok(g)
}
