//! Minimal XES reader: only `concept:name`, `time:timestamp` and
//! `lifecycle:transition` on traces and events are interpreted.

use std::fs;
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{parse_timestamp, EventLog, IngestFilter, LogBuilder};
use crate::error::{Error, Result};

pub fn parse_xes(path: &Path) -> Result<EventLog> {
    read_xes_filtered(path, &IngestFilter::default())
}

pub fn read_xes_filtered(path: &Path, filter: &IngestFilter) -> Result<EventLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_xes(&text, filter)
}

#[derive(Default)]
struct PendingEvent {
    activity: Option<String>,
    time: Option<f64>,
    lifecycle: Option<String>,
}

fn line_of(text: &str, pos: u64) -> usize {
    let pos = (pos as usize).min(text.len());
    text.as_bytes()[..pos].iter().filter(|&&b| b == b'\n').count() + 1
}

pub fn read_xes(text: &str, filter: &IngestFilter) -> Result<EventLog> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut builder = LogBuilder::default();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut trace_count = 0usize;
    let mut trace_name: Option<String> = None;
    let mut trace_events: Vec<PendingEvent> = Vec::new();
    let mut event: Option<PendingEvent> = None;

    let parse_err = |pos: u64, message: String| Error::Parse {
        line: line_of(text, pos),
        message,
    };

    loop {
        let pos = reader.buffer_position();
        let ev = reader
            .read_event()
            .map_err(|e| parse_err(reader.error_position(), e.to_string()))?;
        match ev {
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_vec();
                handle_element(&e, &stack, &mut trace_name, &mut event, text, pos)?;
                match name.as_slice() {
                    b"trace" if stack.last().map(Vec::as_slice) == Some(b"log") => {
                        trace_name = None;
                        trace_events.clear();
                    }
                    b"event" if stack.last().map(Vec::as_slice) == Some(b"trace") => {
                        event = Some(PendingEvent::default());
                    }
                    _ => {}
                }
                stack.push(name);
            }
            Event::Empty(e) => {
                handle_element(&e, &stack, &mut trace_name, &mut event, text, pos)?;
                if e.local_name().as_ref() == b"trace" && stack.last().map(Vec::as_slice) == Some(b"log") {
                    log::warn!("trace #{trace_count} has no events and is skipped");
                    trace_count += 1;
                }
            }
            Event::End(e) => {
                let name = stack
                    .pop()
                    .ok_or_else(|| parse_err(pos, "unbalanced closing tag".into()))?;
                if name.as_slice() != e.local_name().as_ref() {
                    return Err(parse_err(pos, "mismatched closing tag".into()));
                }
                match name.as_slice() {
                    b"event" if stack.last().map(Vec::as_slice) == Some(b"trace") => {
                        if let Some(ev) = event.take() {
                            trace_events.push(ev);
                        }
                    }
                    b"trace" if stack.last().map(Vec::as_slice) == Some(b"log") => {
                        let case_id = trace_name.take().unwrap_or_else(|| format!("trace_{trace_count}"));
                        trace_count += 1;
                        builder.open_case(&case_id);
                        for ev in trace_events.drain(..) {
                            let Some(activity) = ev.activity else {
                                return Err(parse_err(
                                    pos,
                                    format!("event without concept:name in trace `{case_id}`"),
                                ));
                            };
                            if filter.keeps(&activity, ev.lifecycle.as_deref()) {
                                builder.push(&case_id, activity, ev.time);
                            }
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(parse_err(text.len() as u64, "unexpected end of document".into()));
    }
    builder.build()
}

fn handle_element(
    e: &BytesStart<'_>,
    stack: &[Vec<u8>],
    trace_name: &mut Option<String>,
    event: &mut Option<PendingEvent>,
    text: &str,
    pos: u64,
) -> Result<()> {
    let parent = stack.last().map(Vec::as_slice);
    let grandparent = stack.len().checked_sub(2).map(|i| stack[i].as_slice());
    let on_trace = parent == Some(b"trace") && grandparent == Some(b"log");
    let on_event = parent == Some(b"event") && grandparent == Some(b"trace");
    if !on_trace && !on_event {
        return Ok(());
    }
    let mut key = None;
    let mut value = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::Parse {
            line: line_of(text, pos),
            message: err.to_string(),
        })?;
        let v = attr
            .unescape_value()
            .map_err(|err| Error::Parse {
                line: line_of(text, pos),
                message: err.to_string(),
            })?
            .into_owned();
        match attr.key.local_name().as_ref() {
            b"key" => key = Some(v),
            b"value" => value = Some(v),
            _ => {}
        }
    }
    let (Some(key), Some(value)) = (key, value) else {
        return Ok(());
    };
    if on_trace {
        if key == "concept:name" {
            *trace_name = Some(value);
        }
        return Ok(());
    }
    if let Some(ev) = event.as_mut() {
        match key.as_str() {
            "concept:name" => ev.activity = Some(value),
            "lifecycle:transition" => ev.lifecycle = Some(value),
            "time:timestamp" => {
                ev.time = Some(parse_timestamp(&value).ok_or_else(|| Error::Parse {
                    line: line_of(text, pos),
                    message: format!("unparseable timestamp `{value}`"),
                })?)
            }
            _ => {}
        }
    }
    Ok(())
}
