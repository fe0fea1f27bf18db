//! Event logs, prefixes and train/test splitting.
//!
//! Traces are kept as sequences of activity ids into a closed [`Vocabulary`].
//! Two reserved symbols follow the business activities: the padding symbol
//! `_` used for masking, and the end-of-trace target.

mod csv;
mod synth;
mod xes;

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use self::csv::{parse_csv, read_csv, write_csv, CsvOptions};
pub use self::synth::{synth_log, ProcessSpec, ProcessTree, SyntheticLog};
pub use self::xes::{parse_xes, read_xes, read_xes_filtered};

pub const PAD_LABEL: &str = "_";
pub const END_LABEL: &str = "[END]";

/// Index of a symbol in a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Activity(pub u32);

impl Activity {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for Activity {
    fn from(i: usize) -> Self {
        Activity(i as u32)
    }
}

/// Business activities in id order. PAD has id `len()`, END has id `len() + 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    labels: Vec<String>,
    lookup: HashMap<String, Activity>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::new();
        for label in labels {
            let label = label.into();
            if vocab.lookup.contains_key(&label) {
                return Err(Error::Schema(format!("duplicate activity label `{label}`")));
            }
            vocab.intern(&label)?;
        }
        Ok(vocab)
    }

    /// Returns the id of `label`, adding it if unseen.
    pub fn intern(&mut self, label: &str) -> Result<Activity> {
        if let Some(&a) = self.lookup.get(label) {
            return Ok(a);
        }
        if label == PAD_LABEL || label == END_LABEL {
            return Err(Error::Schema(format!(
                "activity label `{label}` collides with a reserved symbol"
            )));
        }
        let a = Activity::from(self.labels.len());
        self.labels.push(label.to_owned());
        self.lookup.insert(label.to_owned(), a);
        Ok(a)
    }

    /// Number of business activities (reserved symbols excluded).
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pad(&self) -> Activity {
        Activity::from(self.labels.len())
    }

    pub fn end(&self) -> Activity {
        Activity::from(self.labels.len() + 1)
    }

    pub fn is_business(&self, a: Activity) -> bool {
        a.index() < self.labels.len()
    }

    pub fn get(&self, label: &str) -> Option<Activity> {
        match label {
            PAD_LABEL => Some(self.pad()),
            END_LABEL => Some(self.end()),
            _ => self.lookup.get(label).copied(),
        }
    }

    pub fn label(&self, a: Activity) -> &str {
        match a.index() {
            i if i < self.labels.len() => &self.labels[i],
            i if i == self.labels.len() => PAD_LABEL,
            _ => END_LABEL,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn activities(&self) -> impl Iterator<Item = Activity> {
        (0..self.labels.len()).map(Activity::from)
    }

    /// Parses a comma-separated activity sequence such as `A,B,C`.
    pub fn parse_sequence(&self, text: &str) -> Result<Vec<Activity>> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                self.get(s)
                    .filter(|&a| a != self.end())
                    .ok_or_else(|| Error::Schema(format!("unknown activity `{s}`")))
            })
            .collect()
    }

    pub fn format_sequence(&self, seq: &[Activity]) -> String {
        seq.iter().map(|&a| self.label(a)).collect::<Vec<_>>().join(",")
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Vocabulary::from_labels(labels)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub activities: Vec<Activity>,
}

/// The first `activities.len()` events of a trace with the symbol that follows them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prefix {
    pub activities: Vec<Activity>,
    pub target: Activity,
    pub source_case: String,
}

impl Prefix {
    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }
}

impl AsRef<[Activity]> for Prefix {
    fn as_ref(&self) -> &[Activity] {
        &self.activities
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub num_cases: usize,
    pub num_activities: usize,
    pub num_events: usize,
    pub avg_len: f64,
    pub max_len: usize,
    pub num_variants: usize,
}

impl fmt::Display for LogStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>6} {:>8} {:>10} {:>10} {:>9}",
            "#Cases", "#Act.", "#Events", "AVG. |σ|", "Max. |σ|", "#Variants"
        )?;
        write!(
            f,
            "{:>8} {:>6} {:>8} {:>10.2} {:>10} {:>9}",
            self.num_cases, self.num_activities, self.num_events, self.avg_len, self.max_len, self.num_variants
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    traces: Vec<Trace>,
    vocabulary: Vocabulary,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>, vocabulary: Vocabulary) -> Result<Self> {
        for t in &traces {
            if t.activities.is_empty() {
                return Err(Error::Schema(format!("trace `{}` is empty", t.case_id)));
            }
            if let Some(a) = t.activities.iter().find(|a| !vocabulary.is_business(**a)) {
                return Err(Error::Schema(format!(
                    "trace `{}` contains symbol {} outside the vocabulary",
                    t.case_id, a.0
                )));
            }
        }
        Ok(EventLog { traces, vocabulary })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn stats(&self) -> LogStats {
        let num_cases = self.traces.len();
        let num_events: usize = self.traces.iter().map(|t| t.activities.len()).sum();
        let max_len = self.traces.iter().map(|t| t.activities.len()).max().unwrap_or(0);
        let activities: HashSet<Activity> = self.traces.iter().flat_map(|t| t.activities.iter().copied()).collect();
        let variants: HashSet<&[Activity]> = self.traces.iter().map(|t| t.activities.as_slice()).collect();
        LogStats {
            num_cases,
            num_activities: activities.len(),
            num_events,
            avg_len: if num_cases == 0 {
                0.0
            } else {
                num_events as f64 / num_cases as f64
            },
            max_len,
            num_variants: variants.len(),
        }
    }

    /// Re-expresses this log in another vocabulary, matching activities by label.
    pub fn remap(&self, target: &Vocabulary) -> Result<EventLog> {
        let table: Vec<Activity> = self
            .vocabulary
            .labels()
            .iter()
            .map(|l| {
                target
                    .get(l)
                    .filter(|a| target.is_business(*a))
                    .ok_or_else(|| Error::Schema(format!("activity `{l}` is not in the model vocabulary")))
            })
            .collect::<Result<_>>()?;
        let traces = self
            .traces
            .iter()
            .map(|t| Trace {
                case_id: t.case_id.clone(),
                activities: t.activities.iter().map(|a| table[a.index()]).collect(),
            })
            .collect();
        EventLog::new(traces, target.clone())
    }

    fn subset(&self, indices: &[usize]) -> EventLog {
        EventLog {
            traces: indices.iter().map(|&i| self.traces[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }
}

/// Random trace-level split into (train, test). Both halves keep the full
/// vocabulary and the original relative trace order.
pub fn split(log: &EventLog, train_frac: f64, seed: u64) -> Result<(EventLog, EventLog)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Split(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = log.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 traces, got {n}")));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "split", 0));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((log.subset(train), log.subset(test)))
}

/// All prefixes of length `min_len..n` with their next activity, plus the
/// full trace with the END target, in trace order then by ascending length.
pub fn extract_prefixes(log: &EventLog, min_len: usize) -> Vec<Prefix> {
    let min_len = min_len.max(1);
    let end = log.vocabulary().end();
    let mut out = Vec::new();
    for t in log.traces() {
        let n = t.activities.len();
        for r in min_len..=n {
            let target = if r < n { t.activities[r] } else { end };
            out.push(Prefix {
                activities: t.activities[..r].to_vec(),
                target,
                source_case: t.case_id.clone(),
            });
        }
    }
    out
}

/// Optional ingestion filters, applied per event before traces are built.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFilter {
    /// Keep only events whose activity label starts with this prefix.
    pub activity_prefix: Option<String>,
    /// Keep only events whose lifecycle attribute equals this value.
    pub lifecycle: Option<String>,
}

impl IngestFilter {
    fn keeps(&self, activity: &str, lifecycle: Option<&str>) -> bool {
        if let Some(p) = &self.activity_prefix {
            if !activity.starts_with(p.as_str()) {
                return false;
            }
        }
        match &self.lifecycle {
            Some(want) => lifecycle == Some(want.as_str()),
            None => true,
        }
    }
}

struct RawEvent {
    activity: String,
    time: Option<f64>,
}

/// Groups raw events by case and builds a log with a first-appearance vocabulary.
#[derive(Default)]
struct LogBuilder {
    cases: Vec<(String, Vec<RawEvent>)>,
    index: HashMap<String, usize>,
}

impl LogBuilder {
    fn push(&mut self, case_id: &str, activity: String, time: Option<f64>) {
        let slot = match self.index.get(case_id) {
            Some(&i) => i,
            None => {
                self.index.insert(case_id.to_owned(), self.cases.len());
                self.cases.push((case_id.to_owned(), Vec::new()));
                self.cases.len() - 1
            }
        };
        self.cases[slot].1.push(RawEvent { activity, time });
    }

    /// Registers a case even if it ends up without events.
    fn open_case(&mut self, case_id: &str) {
        if !self.index.contains_key(case_id) {
            self.index.insert(case_id.to_owned(), self.cases.len());
            self.cases.push((case_id.to_owned(), Vec::new()));
        }
    }

    fn build(self) -> Result<EventLog> {
        let mut vocabulary = Vocabulary::new();
        let mut traces = Vec::with_capacity(self.cases.len());
        for (case_id, mut events) in self.cases {
            if events.is_empty() {
                log::warn!("trace `{case_id}` has no events and is skipped");
                continue;
            }
            if events.iter().all(|e| e.time.is_some()) {
                // stable: equal timestamps keep file order
                events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite timestamps"));
            }
            let activities = events
                .iter()
                .map(|e| vocabulary.intern(&e.activity))
                .collect::<Result<_>>()?;
            traces.push(Trace { case_id, activities });
        }
        if traces.is_empty() {
            return Err(Error::EmptyLog);
        }
        EventLog::new(traces, vocabulary)
    }
}

/// Timestamp as seconds since the Unix epoch, or the raw number for numeric columns.
fn parse_timestamp(text: &str) -> Option<f64> {
    use chrono::{DateTime, NaiveDate, NaiveDateTime};

    let text = text.trim();
    if let Ok(v) = text.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let secs = |ts: i64, nanos: u32| ts as f64 + f64::from(nanos) * 1e-9;
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(secs(dt.timestamp(), dt.timestamp_subsec_nanos()));
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f%:z",
        "%Y-%m-%dT%H:%M:%S%.f%z",
        "%Y-%m-%d %H:%M:%S%.f%z",
    ] {
        if let Ok(dt) = DateTime::parse_from_str(text, fmt) {
            return Some(secs(dt.timestamp(), dt.timestamp_subsec_nanos()));
        }
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y/%m/%d %H:%M:%S%.f",
        "%d.%m.%Y %H:%M:%S",
        "%d-%m-%Y %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y/%m/%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            let utc = dt.and_utc();
            return Some(secs(utc.timestamp(), utc.timestamp_subsec_nanos()));
        }
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() as f64)
}
