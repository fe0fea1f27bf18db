//! Rule extraction and the five quantitative explanation metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attnstats::tvd;
use crate::error::Result;
use crate::eventlog::{extract_prefixes, Activity, EventLog, Prefix};
use crate::explain::{likely_next, Explainer, ExplanationGraph, Thresholds};
use crate::seed;
use crate::transformer::Predictor;

/// `lhs → rhs`: the direct successors of one vertex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rule {
    pub lhs: Activity,
    pub rhs: BTreeSet<Activity>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    rules: BTreeMap<Activity, BTreeSet<Activity>>,
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rhs(&self, lhs: Activity) -> Option<&BTreeSet<Activity>> {
        self.rules.get(&lhs)
    }

    /// Right-hand side of the rule for `lhs`, empty if there is none.
    pub fn fire(&self, lhs: Activity) -> BTreeSet<Activity> {
        self.rhs(lhs).cloned().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = Rule> + '_ {
        self.rules.iter().map(|(&lhs, rhs)| Rule { lhs, rhs: rhs.clone() })
    }
}

impl FromIterator<Rule> for RuleSet {
    fn from_iter<I: IntoIterator<Item = Rule>>(iter: I) -> Self {
        let mut rules: BTreeMap<Activity, BTreeSet<Activity>> = BTreeMap::new();
        for r in iter {
            rules.entry(r.lhs).or_default().extend(r.rhs);
        }
        RuleSet { rules }
    }
}

/// One rule per vertex listing its direct successors.
pub fn graph_to_rules(g: &ExplanationGraph) -> RuleSet {
    g.vertices
        .iter()
        .map(|&v| Rule {
            lhs: v,
            rhs: g.successors(v),
        })
        .collect()
}

/// Mean and population standard deviation of the defined per-item values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Items with a defined value.
    pub n: usize,
    /// Items whose value is undefined.
    pub nulls: usize,
}

impl Statistic {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let nulls = values.len() - defined.len();
        if defined.is_empty() {
            return Statistic {
                mean: None,
                std: None,
                n: 0,
                nulls,
            };
        }
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Statistic {
            mean: Some(mean),
            std: Some(var.sqrt()),
            n: defined.len(),
            nulls,
        }
    }

    fn cell(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.2} ±{s:.2}"),
            _ => "N ± N".to_owned(),
        }
    }
}

/// Pearson correlation, `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn last_activity(tokens: &[Activity], pad: Activity) -> Option<Activity> {
    tokens.iter().rev().copied().find(|&a| a != pad)
}

fn masked_at(tokens: &[Activity], i: usize, pad: Activity) -> Vec<Activity> {
    let mut out = tokens.to_vec();
    out[i] = pad;
    out
}

/// |A∩B| / |A∪B|, with 1 for two empty sets.
pub fn jaccard(a: &BTreeSet<Activity>, b: &BTreeSet<Activity>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Per-prefix Pearson correlation between masking importances and rule
/// membership of `(activity at i, predicted activity)`.
pub fn correctness_values<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    rules: &RuleSet,
    prefixes: &[S],
) -> Result<Vec<Option<f64>>> {
    let pad = model.pad();
    prefixes
        .par_iter()
        .map(|p| {
            let tokens = model.clip(p.as_ref());
            let (pv, _) = model.predict(tokens)?;
            let predicted = pv.argmax();
            let mut m = Vec::with_capacity(tokens.len());
            let mut e = Vec::with_capacity(tokens.len());
            for (i, &a) in tokens.iter().enumerate() {
                let (pm, _) = model.predict(&masked_at(tokens, i, pad))?;
                m.push(tvd(&pv, &pm)?);
                e.push(if rules.rhs(a).is_some_and(|r| r.contains(&predicted)) {
                    1.0
                } else {
                    0.0
                });
            }
            Ok(pearson(&m, &e))
        })
        .collect()
}

pub fn correctness<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    rules: &RuleSet,
    prefixes: &[S],
) -> Result<Statistic> {
    Ok(Statistic::from_values(&correctness_values(model, rules, prefixes)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    #[default]
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Per-prefix F1 values (undefined when both sets are empty).
    pub per_prefix: Vec<Option<f64>>,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    };
    (p, r, f1)
}

/// Multi-label agreement between the rule fired by each prefix's last
/// activity and the model's likely next activities.
pub fn completeness<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    rules: &RuleSet,
    prefixes: &[S],
    thresholds: &Thresholds,
    average: F1Average,
) -> Result<Completeness> {
    let pad = model.pad();
    let pairs = prefixes
        .par_iter()
        .map(|p| {
            let tokens = model.clip(p.as_ref());
            let (pv, _) = model.predict(tokens)?;
            let predicted = last_activity(tokens, pad).map(|a| rules.fire(a)).unwrap_or_default();
            Ok((predicted, likely_next(&pv, thresholds)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_class: BTreeMap<Activity, [usize; 3]> = BTreeMap::new();
    let mut per_prefix = Vec::with_capacity(pairs.len());
    for (predicted, truth) in &pairs {
        for a in predicted.union(truth) {
            let c = per_class.entry(*a).or_default();
            match (predicted.contains(a), truth.contains(a)) {
                (true, true) => c[0] += 1,
                (true, false) => c[1] += 1,
                _ => c[2] += 1,
            }
        }
        per_prefix.push(if predicted.is_empty() && truth.is_empty() {
            None
        } else {
            let tp = predicted.intersection(truth).count();
            Some(prf(tp, predicted.len() - tp, truth.len() - tp).2)
        });
    }
    let (tp, fp, fn_) = per_class
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c[0], acc.1 + c[1], acc.2 + c[2]));
    let (precision, recall, micro) = prf(tp, fp, fn_);
    let f1 = match average {
        F1Average::Micro => micro,
        F1Average::Macro if per_class.is_empty() => 0.0,
        F1Average::Macro => per_class.values().map(|c| prf(c[0], c[1], c[2]).2).sum::<f64>() / per_class.len() as f64,
    };
    Ok(Completeness {
        f1,
        precision,
        recall,
        tp,
        fp,
        fn_,
        per_prefix,
    })
}

/// Rules fired by the last activity of `tokens` under an explanation
/// computed on `tokens` alone.
fn fired(
    model: &dyn Predictor,
    explainer: &dyn Explainer,
    tokens: &[Activity],
    seed: u64,
) -> Result<BTreeSet<Activity>> {
    let graph = explainer.explain(model, &[tokens.to_vec()], seed)?;
    Ok(last_activity(tokens, model.pad())
        .map(|a| graph.successors(a))
        .unwrap_or_default())
}

/// Jaccard similarity of fired rules before and after masking one random position.
pub fn continuity_values<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    explainer: &dyn Explainer,
    prefixes: &[S],
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let pad = model.pad();
    prefixes
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let tokens = model.clip(p.as_ref());
            if tokens.len() < 2 {
                return Ok(None);
            }
            let mut rng = seed::rng(seed, "continuity", k as u64);
            let i = index::sample(&mut rng, tokens.len(), 1).index(0);
            let explain_seed = seed::derive(seed, "explain", k as u64);
            let r = fired(model, explainer, tokens, explain_seed)?;
            let r2 = fired(model, explainer, &masked_at(tokens, i, pad), explain_seed)?;
            Ok(Some(jaccard(&r, &r2)))
        })
        .collect()
}

pub fn continuity<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    explainer: &dyn Explainer,
    prefixes: &[S],
    seed: u64,
) -> Result<Statistic> {
    Ok(Statistic::from_values(&continuity_values(
        model, explainer, prefixes, seed,
    )?))
}

const CONTRAST_PAIRS: usize = 1000;

/// `1 − Jaccard` of the fired rules for sampled pairs of prefixes with
/// different last activities.
pub fn contrastivity_values<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    explainer: &dyn Explainer,
    prefixes: &[S],
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let pad = model.pad();
    let lasts: Vec<Option<Activity>> = prefixes
        .iter()
        .map(|p| last_activity(model.clip(p.as_ref()), pad))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..prefixes.len() {
        for j in i + 1..prefixes.len() {
            if let (Some(a), Some(b)) = (lasts[i], lasts[j]) {
                if a != b {
                    pairs.push((i, j));
                }
            }
        }
    }
    if pairs.len() > CONTRAST_PAIRS {
        let mut rng = seed::rng(seed, "contrastivity", 0);
        let mut picked: Vec<usize> = index::sample(&mut rng, pairs.len(), CONTRAST_PAIRS).into_vec();
        picked.sort_unstable();
        pairs = picked.into_iter().map(|k| pairs[k]).collect();
    }
    let needed: BTreeSet<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    let needed: Vec<usize> = needed.into_iter().collect();
    let explained = needed
        .par_iter()
        .map(|&k| {
            let tokens = model.clip(prefixes[k].as_ref());
            fired(model, explainer, tokens, seed::derive(seed, "explain", k as u64)).map(|r| (k, r))
        })
        .collect::<Result<HashMap<_, _>>>()?;
    Ok(pairs
        .iter()
        .map(|(i, j)| Some(1.0 - jaccard(&explained[i], &explained[j])))
        .collect())
}

pub fn contrastivity<S: AsRef<[Activity]> + Sync>(
    model: &dyn Predictor,
    explainer: &dyn Explainer,
    prefixes: &[S],
    seed: u64,
) -> Result<Statistic> {
    Ok(Statistic::from_values(&contrastivity_values(
        model, explainer, prefixes, seed,
    )?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compactness {
    pub rules: usize,
    pub mean_rhs: f64,
    pub std_rhs: f64,
}

pub fn compactness(rules: &RuleSet) -> Compactness {
    let lens: Vec<Option<f64>> = rules.iter().map(|r| Some(r.rhs.len() as f64)).collect();
    let s = Statistic::from_values(&lens);
    Compactness {
        rules: rules.len(),
        mean_rhs: s.mean.unwrap_or(0.0),
        std_rhs: s.std.unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub explainer: String,
    pub sample_frac: f64,
    pub seed: u64,
    pub num_prefixes: usize,
    pub correctness: Statistic,
    /// `mean` is the pooled F1; `std` is over per-prefix F1 values.
    pub completeness: Statistic,
    pub precision: f64,
    pub recall: f64,
    pub continuity: Statistic,
    pub contrastivity: Statistic,
    pub compactness: Statistic,
    pub rule_count: usize,
}

/// Per-prefix raw values, one row per sampled prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixRow {
    pub prefix: String,
    pub correctness: Option<f64>,
    pub completeness: Option<f64>,
    pub continuity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub sample_frac: f64,
    pub average: F1Average,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            sample_frac: 1.0,
            average: F1Average::Micro,
            seed: 42,
        }
    }
}

/// Seeded sample of `round(frac · n)` prefixes (at least one), in log order.
pub fn sample_prefixes(prefixes: &[Prefix], frac: f64, seed: u64) -> Vec<Prefix> {
    let n = prefixes.len();
    let k = ((frac.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(n.min(1), n);
    let mut rng = seed::rng(seed, "sample", 0);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| prefixes[i].clone()).collect()
}

/// Samples prefixes of `log`, explains them and scores the explanation.
pub fn evaluate_all(
    model: &dyn Predictor,
    explainer: &dyn Explainer,
    log: &EventLog,
    thresholds: &Thresholds,
    options: &EvalOptions,
) -> Result<(MetricReport, Vec<PrefixRow>)> {
    let prefixes = sample_prefixes(&extract_prefixes(log, 1), options.sample_frac, options.seed);
    let tokens: Vec<Vec<Activity>> = prefixes.iter().map(|p| p.activities.clone()).collect();
    let graph = explainer.explain(model, &tokens, options.seed)?;
    let rules = graph_to_rules(&graph);
    let corr = correctness_values(model, &rules, &tokens)?;
    let comp = completeness(model, &rules, &tokens, thresholds, options.average)?;
    let cont = continuity_values(model, explainer, &tokens, options.seed)?;
    let contrast = contrastivity(model, explainer, &tokens, options.seed)?;
    let compact = compactness(&rules);
    let comp_stat = Statistic::from_values(&comp.per_prefix);
    let report = MetricReport {
        explainer: explainer.name().to_owned(),
        sample_frac: options.sample_frac,
        seed: options.seed,
        num_prefixes: tokens.len(),
        correctness: Statistic::from_values(&corr),
        completeness: Statistic {
            mean: Some(comp.f1),
            ..comp_stat
        },
        precision: comp.precision,
        recall: comp.recall,
        continuity: Statistic::from_values(&cont),
        contrastivity: contrast,
        compactness: Statistic {
            mean: Some(compact.mean_rhs),
            std: Some(compact.std_rhs),
            n: compact.rules,
            nulls: 0,
        },
        rule_count: compact.rules,
    };
    let vocabulary_free = |t: &[Activity]| t.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join(" ");
    let rows = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| PrefixRow {
            prefix: vocabulary_free(t),
            correctness: corr[i],
            completeness: comp.per_prefix[i],
            continuity: cont[i],
        })
        .collect();
    Ok((report, rows))
}

/// Plain-text table with one row per labelled report.
pub fn render_table(rows: &[(&str, &MetricReport)]) -> String {
    let header = [
        "",
        "Correctness",
        "Completeness",
        "Continuity",
        "Contrastivity",
        "Compactness",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (label, r) in rows {
        cells.push(vec![
            format!("{label} ({})", r.explainer),
            r.correctness.cell(),
            r.completeness.cell(),
            r.continuity.cell(),
            r.contrastivity.cell(),
            r.compactness.cell(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        writeln!(out, "{}", line.join(" | ").trim_end()).expect("string write");
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            writeln!(out, "{}", rule.join("-+-")).expect("string write");
        }
    }
    out
}

/// Support-weighted F1 of argmax predictions against the true next symbol.
pub fn weighted_f1(model: &dyn Predictor, prefixes: &[Prefix]) -> Result<f64> {
    if prefixes.is_empty() {
        return Ok(0.0);
    }
    let predicted = prefixes
        .par_iter()
        .map(|p| model.predict(model.clip(&p.activities)).map(|(pv, _)| pv.argmax()))
        .collect::<Result<Vec<_>>>()?;
    let mut counts: BTreeMap<Activity, [usize; 3]> = BTreeMap::new();
    for (p, &y_hat) in prefixes.iter().zip(&predicted) {
        if y_hat == p.target {
            counts.entry(y_hat).or_default()[0] += 1;
        } else {
            counts.entry(y_hat).or_default()[1] += 1;
            counts.entry(p.target).or_default()[2] += 1;
        }
    }
    let total = prefixes.len() as f64;
    Ok(counts
        .values()
        .map(|c| {
            let support = (c[0] + c[2]) as f64;
            support / total * prf(c[0], c[1], c[2]).2
        })
        .sum())
}
