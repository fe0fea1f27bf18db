use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_timestamp, EventLog, IngestFilter, LogBuilder};
use crate::error::{Error, Result};

/// Column mapping for CSV event logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub case_col: String,
    pub activity_col: String,
    pub time_col: String,
    #[serde(default)]
    pub lifecycle_col: Option<String>,
    #[serde(default)]
    pub filter: IngestFilter,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            case_col: "case_id".into(),
            activity_col: "activity".into(),
            time_col: "timestamp".into(),
            lifecycle_col: None,
            filter: IngestFilter::default(),
        }
    }
}

pub fn parse_csv(path: &Path, case_col: &str, activity_col: &str, time_col: &str) -> Result<EventLog> {
    let opts = CsvOptions {
        case_col: case_col.into(),
        activity_col: activity_col.into(),
        time_col: time_col.into(),
        ..CsvOptions::default()
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &opts)
}

pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyLog);
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let case_i = column(&opts.case_col)?;
    let act_i = column(&opts.activity_col)?;
    let time_i = column(&opts.time_col)?;
    let life_i = opts.lifecycle_col.as_deref().map(column).transpose()?;

    let mut builder = LogBuilder::default();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let activity = field(act_i);
        if !opts.filter.keeps(activity, life_i.map(field)) {
            continue;
        }
        let time = parse_timestamp(field(time_i)).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{}`", field(time_i)),
        })?;
        builder.push(field(case_i), activity.to_owned(), Some(time));
    }
    builder.build()
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Writes `case_id,activity,timestamp` rows; the timestamp is the event's
/// index within its trace, so reading back with default options is lossless.
pub fn write_csv<W: Write>(log: &EventLog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Schema(format!("csv write failed: {e}"));
    w.write_record(["case_id", "activity", "timestamp"]).map_err(io)?;
    for t in log.traces() {
        for (i, a) in t.activities.iter().enumerate() {
            w.write_record([t.case_id.as_str(), log.vocabulary().label(*a), &i.to_string()])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Schema(format!("csv write failed: {e}")))?;
    Ok(())
}
