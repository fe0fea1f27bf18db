//! Synthetic logs from small block-structured process specifications.
//!
//! A specification file is a list of `key = value` lines (`#` starts a comment):
//!
//! ```text
//! name = xor-demo
//! tree = seq(A, xor(B, C), D)
//! redo_prob = 0.5
//! ```
//!
//! `tree` composes activities with `seq(..)`, `xor(..)` (uniform choice),
//! `and(..)` (random interleaving: each step advances a uniformly chosen
//! unfinished branch) and `loop(body, redo, max_iter)` (after each body
//! execution, continue with `redo` and the body again with probability
//! `redo_prob` while fewer than `max_iter` bodies have run).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;

use super::{Activity, EventLog, Trace, Vocabulary};
use crate::error::{Error, Result};
use crate::seed;

const MAX_ACTIVITIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessTree {
    Activity(String),
    Seq(Vec<ProcessTree>),
    Xor(Vec<ProcessTree>),
    And(Vec<ProcessTree>),
    Loop {
        body: Box<ProcessTree>,
        redo: Box<ProcessTree>,
        max_iter: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    pub name: String,
    pub tree: ProcessTree,
    pub redo_prob: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub log: EventLog,
    /// Directly-follows edges of the generating specification.
    pub ground_truth: BTreeSet<(Activity, Activity)>,
}

impl SyntheticLog {
    pub fn ground_truth_text(&self) -> String {
        let v = self.log.vocabulary();
        self.ground_truth
            .iter()
            .map(|&(a, b)| format!("{} -> {}\n", v.label(a), v.label(b)))
            .collect()
    }
}

impl ProcessSpec {
    pub fn new(tree: ProcessTree) -> Result<Self> {
        let spec = ProcessSpec {
            name: tree.to_string(),
            tree,
            redo_prob: 0.5,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut tree = None;
        let mut redo_prob = 0.5;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("line {}: expected `key = value`", i + 1)))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_owned()),
                "tree" => tree = Some(ProcessTree::parse(value)?),
                "redo_prob" => {
                    redo_prob = value
                        .parse()
                        .map_err(|_| Error::Spec(format!("line {}: bad redo_prob `{value}`", i + 1)))?
                }
                other => return Err(Error::Spec(format!("line {}: unknown key `{other}`", i + 1))),
            }
        }
        let tree = tree.ok_or_else(|| Error::Spec("missing `tree`".into()))?;
        let spec = ProcessSpec {
            name: name.unwrap_or_else(|| tree.to_string()),
            tree,
            redo_prob,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.redo_prob) {
            return Err(Error::Spec(format!("redo_prob {} outside [0, 1]", self.redo_prob)));
        }
        self.tree.validate()?;
        let n = self.tree.alphabet().len();
        if n > MAX_ACTIVITIES {
            return Err(Error::Spec(format!(
                "{n} activities exceed the limit of {MAX_ACTIVITIES}"
            )));
        }
        Ok(())
    }
}

impl ProcessTree {
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = TreeParser {
            src: text.as_bytes(),
            pos: 0,
        };
        let tree = p.node()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Spec(format!("trailing input at offset {}", p.pos)));
        }
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        match self {
            ProcessTree::Activity(a) => {
                if a == super::PAD_LABEL || a == super::END_LABEL {
                    return Err(Error::Spec(format!("`{a}` is a reserved symbol")));
                }
                Ok(())
            }
            ProcessTree::Seq(c) | ProcessTree::Xor(c) | ProcessTree::And(c) => {
                if c.is_empty() {
                    return Err(Error::Spec("operator without children".into()));
                }
                c.iter().try_for_each(ProcessTree::validate)
            }
            ProcessTree::Loop { body, redo, max_iter } => {
                if *max_iter == 0 {
                    return Err(Error::Spec("loop max_iter must be at least 1".into()));
                }
                body.validate()?;
                redo.validate()
            }
        }
    }

    /// Distinct activity labels in left-to-right order of appearance.
    pub fn alphabet(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_alphabet(&mut out);
        out
    }

    fn collect_alphabet(&self, out: &mut Vec<String>) {
        match self {
            ProcessTree::Activity(a) => {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
            ProcessTree::Seq(c) | ProcessTree::Xor(c) | ProcessTree::And(c) => {
                c.iter().for_each(|t| t.collect_alphabet(out))
            }
            ProcessTree::Loop { body, redo, .. } => {
                body.collect_alphabet(out);
                redo.collect_alphabet(out);
            }
        }
    }

    fn first(&self) -> BTreeSet<String> {
        match self {
            ProcessTree::Activity(a) => BTreeSet::from([a.clone()]),
            ProcessTree::Seq(c) => c[0].first(),
            ProcessTree::Xor(c) | ProcessTree::And(c) => c.iter().flat_map(|t| t.first()).collect(),
            ProcessTree::Loop { body, .. } => body.first(),
        }
    }

    fn last(&self) -> BTreeSet<String> {
        match self {
            ProcessTree::Activity(a) => BTreeSet::from([a.clone()]),
            ProcessTree::Seq(c) => c[c.len() - 1].last(),
            ProcessTree::Xor(c) | ProcessTree::And(c) => c.iter().flat_map(|t| t.last()).collect(),
            ProcessTree::Loop { body, .. } => body.last(),
        }
    }

    /// Every pair (u, v) such that v can directly follow u in some trace.
    pub fn directly_follows(&self) -> BTreeSet<(String, String)> {
        let cross = |a: &BTreeSet<String>, b: &BTreeSet<String>| {
            a.iter()
                .flat_map(|x| b.iter().map(move |y| (x.clone(), y.clone())))
                .collect::<Vec<_>>()
        };
        match self {
            ProcessTree::Activity(_) => BTreeSet::new(),
            ProcessTree::Seq(c) => {
                let mut out: BTreeSet<_> = c.iter().flat_map(|t| t.directly_follows()).collect();
                for w in c.windows(2) {
                    out.extend(cross(&w[0].last(), &w[1].first()));
                }
                out
            }
            ProcessTree::Xor(c) => c.iter().flat_map(|t| t.directly_follows()).collect(),
            ProcessTree::And(c) => {
                let mut out: BTreeSet<_> = c.iter().flat_map(|t| t.directly_follows()).collect();
                let alphabets: Vec<BTreeSet<String>> = c.iter().map(|t| t.alphabet().into_iter().collect()).collect();
                for (i, a) in alphabets.iter().enumerate() {
                    for (j, b) in alphabets.iter().enumerate() {
                        if i != j {
                            out.extend(cross(a, b));
                        }
                    }
                }
                out
            }
            ProcessTree::Loop { body, redo, max_iter } => {
                let mut out = body.directly_follows();
                if *max_iter >= 2 {
                    out.extend(redo.directly_follows());
                    out.extend(cross(&body.last(), &redo.first()));
                    out.extend(cross(&redo.last(), &body.first()));
                }
                out
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, redo_prob: f64) -> Vec<String> {
        let mut out = Vec::new();
        self.sample_into(rng, redo_prob, &mut out);
        out
    }

    fn sample_into<R: Rng>(&self, rng: &mut R, redo_prob: f64, out: &mut Vec<String>) {
        match self {
            ProcessTree::Activity(a) => out.push(a.clone()),
            ProcessTree::Seq(c) => c.iter().for_each(|t| t.sample_into(rng, redo_prob, out)),
            ProcessTree::Xor(c) => {
                let i = rng.random_range(0..c.len());
                c[i].sample_into(rng, redo_prob, out);
            }
            ProcessTree::And(c) => {
                let branches: Vec<Vec<String>> = c.iter().map(|t| t.sample(rng, redo_prob)).collect();
                let mut cursor = vec![0usize; branches.len()];
                loop {
                    let open: Vec<usize> = (0..branches.len()).filter(|&i| cursor[i] < branches[i].len()).collect();
                    if open.is_empty() {
                        break;
                    }
                    let i = open[rng.random_range(0..open.len())];
                    out.push(branches[i][cursor[i]].clone());
                    cursor[i] += 1;
                }
            }
            ProcessTree::Loop { body, redo, max_iter } => {
                body.sample_into(rng, redo_prob, out);
                let mut done = 1;
                while done < *max_iter && rng.random::<f64>() < redo_prob {
                    redo.sample_into(rng, redo_prob, out);
                    body.sample_into(rng, redo_prob, out);
                    done += 1;
                }
            }
        }
    }

    /// The finite trace language with the probability of each trace under [`Self::sample`].
    pub fn language(&self, redo_prob: f64) -> BTreeMap<Vec<String>, f64> {
        match self {
            ProcessTree::Activity(a) => BTreeMap::from([(vec![a.clone()], 1.0)]),
            ProcessTree::Seq(c) => c
                .iter()
                .map(|t| t.language(redo_prob))
                .fold(BTreeMap::from([(Vec::new(), 1.0)]), |acc, l| concat(&acc, &l)),
            ProcessTree::Xor(c) => {
                let w = 1.0 / c.len() as f64;
                let mut out = BTreeMap::new();
                for t in c {
                    for (s, p) in t.language(redo_prob) {
                        *out.entry(s).or_insert(0.0) += w * p;
                    }
                }
                out
            }
            ProcessTree::And(c) => {
                let langs: Vec<_> = c.iter().map(|t| t.language(redo_prob)).collect();
                let mut out = BTreeMap::new();
                let mut picks = Vec::new();
                interleave_all(&langs, &mut picks, 1.0, &mut out);
                out
            }
            ProcessTree::Loop { body, redo, max_iter } => {
                let body_l = body.language(redo_prob);
                let redo_l = redo.language(redo_prob);
                let mut out = BTreeMap::new();
                let mut current = body_l.clone();
                for k in 1..=*max_iter {
                    let stop = if k == *max_iter { 1.0 } else { 1.0 - redo_prob };
                    for (s, p) in &current {
                        *out.entry(s.clone()).or_insert(0.0) += p * stop;
                    }
                    if k < *max_iter {
                        let scaled: BTreeMap<_, _> = current.iter().map(|(s, p)| (s.clone(), p * redo_prob)).collect();
                        current = concat(&concat(&scaled, &redo_l), &body_l);
                    }
                }
                out
            }
        }
    }
}

fn concat(a: &BTreeMap<Vec<String>, f64>, b: &BTreeMap<Vec<String>, f64>) -> BTreeMap<Vec<String>, f64> {
    let mut out = BTreeMap::new();
    for (sa, pa) in a {
        for (sb, pb) in b {
            let mut s = sa.clone();
            s.extend(sb.iter().cloned());
            *out.entry(s).or_insert(0.0) += pa * pb;
        }
    }
    out
}

fn interleave_all(
    langs: &[BTreeMap<Vec<String>, f64>],
    picks: &mut Vec<Vec<String>>,
    prob: f64,
    out: &mut BTreeMap<Vec<String>, f64>,
) {
    if picks.len() == langs.len() {
        let mut cursor = vec![0usize; picks.len()];
        merge_orders(picks, &mut cursor, &mut Vec::new(), prob, out);
        return;
    }
    for (s, p) in &langs[picks.len()] {
        picks.push(s.clone());
        interleave_all(langs, picks, prob * p, out);
        picks.pop();
    }
}

fn merge_orders(
    branches: &[Vec<String>],
    cursor: &mut [usize],
    prefix: &mut Vec<String>,
    prob: f64,
    out: &mut BTreeMap<Vec<String>, f64>,
) {
    let open: Vec<usize> = (0..branches.len()).filter(|&i| cursor[i] < branches[i].len()).collect();
    if open.is_empty() {
        *out.entry(prefix.clone()).or_insert(0.0) += prob;
        return;
    }
    let w = prob / open.len() as f64;
    for i in open {
        prefix.push(branches[i][cursor[i]].clone());
        cursor[i] += 1;
        merge_orders(branches, cursor, prefix, w, out);
        cursor[i] -= 1;
        prefix.pop();
    }
}

impl fmt::Display for ProcessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, op: &str, c: &[ProcessTree]| {
            write!(f, "{op}(")?;
            for (i, t) in c.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{t}")?;
            }
            write!(f, ")")
        };
        match self {
            ProcessTree::Activity(a) => write!(f, "{a}"),
            ProcessTree::Seq(c) => list(f, "seq", c),
            ProcessTree::Xor(c) => list(f, "xor", c),
            ProcessTree::And(c) => list(f, "and", c),
            ProcessTree::Loop { body, redo, max_iter } => write!(f, "loop({body}, {redo}, {max_iter})"),
        }
    }
}

struct TreeParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl TreeParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Spec(format!("{msg} at offset {}", self.pos))
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || matches!(self.src[self.pos], b'_' | b'-' | b'.'))
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn node(&mut self) -> Result<ProcessTree> {
        let word = self.ident()?;
        if !self.eat(b'(') {
            return Ok(ProcessTree::Activity(word));
        }
        let mut args = Vec::new();
        if !self.eat(b')') {
            loop {
                args.push(self.node()?);
                if self.eat(b')') {
                    break;
                }
                if !self.eat(b',') {
                    return Err(self.err("expected `,` or `)`"));
                }
            }
        }
        match word.as_str() {
            "seq" => Ok(ProcessTree::Seq(args)),
            "xor" => Ok(ProcessTree::Xor(args)),
            "and" => Ok(ProcessTree::And(args)),
            "loop" => {
                let [body, redo, max] =
                    <[ProcessTree; 3]>::try_from(args).map_err(|_| self.err("loop takes (body, redo, max_iter)"))?;
                let ProcessTree::Activity(max) = max else {
                    return Err(self.err("loop max_iter must be an integer"));
                };
                let max_iter = max.parse().map_err(|_| self.err("loop max_iter must be an integer"))?;
                Ok(ProcessTree::Loop {
                    body: Box::new(body),
                    redo: Box::new(redo),
                    max_iter,
                })
            }
            other => Err(Error::Spec(format!("unknown operator `{other}`"))),
        }
    }
}

/// Samples `n_traces` traces by random walk over `spec`, deterministic per seed.
pub fn synth_log(spec: &ProcessSpec, n_traces: usize, seed: u64) -> Result<SyntheticLog> {
    spec.validate()?;
    if n_traces == 0 {
        return Err(Error::Spec("n_traces must be positive".into()));
    }
    let mut rng = seed::rng(seed, "synth", 0);
    let raw: Vec<Vec<String>> = (0..n_traces)
        .map(|_| spec.tree.sample(&mut rng, spec.redo_prob))
        .collect();

    let mut vocabulary = Vocabulary::new();
    for label in raw.iter().flatten().chain(spec.tree.alphabet().iter()) {
        vocabulary.intern(label)?;
    }
    let traces = raw
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(Trace {
                case_id: format!("case_{i}"),
                activities: t.iter().map(|l| vocabulary.intern(l)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ground_truth = spec
        .tree
        .directly_follows()
        .into_iter()
        .map(|(a, b)| {
            let id = |l: &str| vocabulary.get(l).expect("alphabet interned");
            (id(&a), id(&b))
        })
        .collect();
    Ok(SyntheticLog {
        log: EventLog::new(traces, vocabulary)?,
        ground_truth,
    })
}
