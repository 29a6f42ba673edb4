//! XES (IEEE 1849) reading and writing.
//!
//! Only the concept, time, org and identity extensions are interpreted.
//! Nested attribute values (lists, containers) are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use chrono::{DateTime, Utc};
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{
    format_timestamp, truncate_to_millis, AttributeValue, Event, EventLog, ParsedLog, Trace, ACT,
    CASE, CASE_PREFIX, RES, TIME,
};
use crate::{Error, Result};

const CONCEPT_NAME: &str = "concept:name";
const TIME_TIMESTAMP: &str = "time:timestamp";
const ORG_RESOURCE: &str = "org:resource";
const IDENTITY_ID: &str = "identity:id";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scope {
    Log,
    Trace,
    Event,
    Other,
}

#[derive(Default)]
struct TraceBuilder {
    attributes: BTreeMap<String, AttributeValue>,
    events: Vec<BTreeMap<String, AttributeValue>>,
    problems: Vec<String>,
}

/// Parses an XES document. Traces containing an event without activity or
/// timestamp are dropped with a warning.
pub fn parse_xes<R: Read>(mut input: R) -> Result<ParsedLog> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut reader = Reader::from_reader(bytes.as_slice());
    reader.config_mut().trim_text(true);

    let mut stack: Vec<Scope> = Vec::new();
    let mut trace: Option<TraceBuilder> = None;
    let mut event: Option<BTreeMap<String, AttributeValue>> = None;
    let mut warnings = Vec::new();
    let mut traces = Vec::new();
    let mut seen_cases = BTreeSet::new();
    let mut event_counter = 0usize;
    let mut saw_log = false;
    let mut buf = Vec::new();

    loop {
        let xml_event = match reader.read_event_into(&mut buf) {
            Ok(e) => e,
            Err(e) => {
                let pos = reader.error_position() as usize;
                return Err(xml_error(&bytes, pos, e.to_string()));
            }
        };
        match xml_event {
            XmlEvent::Start(ref start) | XmlEvent::Empty(ref start) => {
                let is_empty = matches!(xml_event, XmlEvent::Empty(_));
                let name = String::from_utf8_lossy(start.local_name().as_ref()).into_owned();
                let parent = stack.last().copied();
                let scope = match (parent, name.as_str()) {
                    (None, "log") => {
                        saw_log = true;
                        Scope::Log
                    }
                    (Some(Scope::Log), "trace") => {
                        trace = Some(TraceBuilder::default());
                        Scope::Trace
                    }
                    (Some(Scope::Trace), "event") => {
                        event = Some(BTreeMap::new());
                        Scope::Event
                    }
                    (Some(Scope::Trace), tag) | (Some(Scope::Event), tag) => {
                        if let Some(kind) = attribute_tag(tag) {
                            let pos = reader.buffer_position() as usize;
                            let parsed = read_attribute(start, kind)
                                .map_err(|m| xml_error(&bytes, pos, m))?;
                            match parsed {
                                Ok((key, value)) => {
                                    if parent == Some(Scope::Trace) {
                                        if let Some(t) = trace.as_mut() {
                                            t.attributes.insert(key, value);
                                        }
                                    } else if let Some(e) = event.as_mut() {
                                        e.insert(key, value);
                                    }
                                }
                                Err(problem) => {
                                    if let Some(t) = trace.as_mut() {
                                        t.problems.push(problem);
                                    }
                                }
                            }
                        }
                        Scope::Other
                    }
                    _ => Scope::Other,
                };
                if is_empty {
                    // An empty <event/> or <trace/> still closes immediately.
                    close_scope(
                        scope,
                        &mut trace,
                        &mut event,
                        &mut traces,
                        &mut warnings,
                        &mut seen_cases,
                        &mut event_counter,
                    );
                } else {
                    stack.push(scope);
                }
            }
            XmlEvent::End(_) => {
                if let Some(scope) = stack.pop() {
                    close_scope(
                        scope,
                        &mut trace,
                        &mut event,
                        &mut traces,
                        &mut warnings,
                        &mut seen_cases,
                        &mut event_counter,
                    );
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    if !stack.is_empty() {
        return Err(xml_error(&bytes, bytes.len(), "unexpected end of document".into()));
    }
    if !saw_log {
        return Err(xml_error(&bytes, 0, "missing <log> root element".into()));
    }
    let log = EventLog::new(traces)?;
    Ok(ParsedLog { log, warnings })
}

#[derive(Clone, Copy)]
enum AttrKind {
    String,
    Date,
    Int,
    Float,
    Boolean,
    Id,
    Nested,
}

fn attribute_tag(tag: &str) -> Option<AttrKind> {
    Some(match tag {
        "string" => AttrKind::String,
        "date" => AttrKind::Date,
        "int" => AttrKind::Int,
        "float" => AttrKind::Float,
        "boolean" => AttrKind::Boolean,
        "id" => AttrKind::Id,
        "list" | "container" => AttrKind::Nested,
        _ => return None,
    })
}

/// Outer error: malformed XML. Inner error: a value that does not parse,
/// which is a data problem for the enclosing trace.
#[allow(clippy::type_complexity)]
fn read_attribute(
    start: &BytesStart<'_>,
    kind: AttrKind,
) -> std::result::Result<std::result::Result<(String, AttributeValue), String>, String> {
    let mut key = None;
    let mut value = None;
    for attr in start.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let v = attr.unescape_value().map_err(|e| e.to_string())?.into_owned();
        match attr.key.local_name().as_ref() {
            b"key" => key = Some(v),
            b"value" => value = Some(v),
            _ => {}
        }
    }
    let key = key.ok_or_else(|| "attribute element without key".to_string())?;
    if let AttrKind::Nested = kind {
        return Ok(Err(format!("nested attribute {key} ignored")));
    }
    let Some(raw) = value else {
        return Ok(Err(format!("attribute {key} has no value")));
    };
    let parsed = match kind {
        AttrKind::String | AttrKind::Id => Some(AttributeValue::Text(raw.clone())),
        AttrKind::Date => parse_date(&raw).map(AttributeValue::Timestamp),
        AttrKind::Int => raw.trim().parse().ok().map(AttributeValue::Integer),
        AttrKind::Float => raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|f| f.is_finite())
            .map(AttributeValue::Real),
        AttrKind::Boolean => match raw.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => Some(AttributeValue::Boolean(true)),
            "false" | "0" => Some(AttributeValue::Boolean(false)),
            _ => None,
        },
        AttrKind::Nested => None,
    };
    Ok(parsed
        .map(|v| (key.clone(), v))
        .ok_or_else(|| format!("attribute {key} has unparseable value {raw:?}")))
}

fn parse_date(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .ok()
        .map(|d| truncate_to_millis(d.with_timezone(&Utc)))
}

fn close_scope(
    scope: Scope,
    trace: &mut Option<TraceBuilder>,
    event: &mut Option<BTreeMap<String, AttributeValue>>,
    traces: &mut Vec<Trace>,
    warnings: &mut Vec<String>,
    seen_cases: &mut BTreeSet<String>,
    event_counter: &mut usize,
) {
    match scope {
        Scope::Event => {
            if let (Some(e), Some(t)) = (event.take(), trace.as_mut()) {
                t.events.push(e);
            }
        }
        Scope::Trace => {
            if let Some(t) = trace.take() {
                let index = traces.len() + warnings.len();
                match finish_trace(t, event_counter) {
                    Ok(built) => {
                        if seen_cases.insert(built.case_id.clone()) {
                            traces.push(built);
                        } else {
                            warnings.push(format!(
                                "trace {index}: duplicate case id {}, dropped",
                                built.case_id
                            ));
                        }
                    }
                    Err(reason) => warnings.push(format!("trace {index}: {reason}, dropped")),
                }
            }
        }
        _ => {}
    }
}

fn finish_trace(
    builder: TraceBuilder,
    event_counter: &mut usize,
) -> std::result::Result<Trace, String> {
    let case_id = match builder.attributes.get(CONCEPT_NAME) {
        Some(AttributeValue::Text(c)) => c.clone(),
        _ => return Err("missing concept:name".into()),
    };
    let case_attrs: Vec<(String, AttributeValue)> = builder
        .attributes
        .iter()
        .filter(|(k, _)| k.as_str() != CONCEPT_NAME)
        .map(|(k, v)| (format!("{CASE_PREFIX}{k}"), v.clone()))
        .collect();

    let mut events = Vec::with_capacity(builder.events.len());
    for raw in builder.events {
        *event_counter += 1;
        let activity = match raw.get(CONCEPT_NAME) {
            Some(AttributeValue::Text(a)) if !a.is_empty() => a.clone(),
            _ => return Err(format!("event {} lacks concept:name", *event_counter)),
        };
        let time = match raw.get(TIME_TIMESTAMP) {
            Some(AttributeValue::Timestamp(t)) => *t,
            _ => return Err(format!("event {} lacks time:timestamp", *event_counter)),
        };
        let id = match raw.get(IDENTITY_ID) {
            Some(AttributeValue::Text(id)) => id.clone(),
            _ => format!("e{}", *event_counter),
        };
        let mut e = Event::new(id, &case_id, &activity, time);
        for (key, value) in raw {
            match key.as_str() {
                CONCEPT_NAME | TIME_TIMESTAMP | IDENTITY_ID => {}
                ORG_RESOURCE => {
                    e.attributes.insert(RES.to_string(), value);
                }
                CASE | ACT | TIME | RES => {
                    // Raw keys that collide with reserved names are kept apart.
                    e.attributes.insert(format!("xes:{key}"), value);
                }
                _ => {
                    e.attributes.insert(key, value);
                }
            }
        }
        for (k, v) in &case_attrs {
            e.attributes.insert(k.clone(), v.clone());
        }
        events.push(e);
    }
    Ok(Trace::new(case_id, events))
}

fn xml_error(bytes: &[u8], position: usize, message: String) -> Error {
    let end = position.min(bytes.len());
    let prefix = &bytes[..end];
    let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = end - prefix.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    Error::Xml {
        line,
        column,
        message,
    }
}

/// Serializes a log to XES. Case-level attributes are written once per trace.
pub fn write_xes(log: &EventLog) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(
        "<log xes.version=\"1849-2016\" xes.features=\"\" xmlns=\"http://www.xes-standard.org/\">\n",
    );
    for (name, prefix) in [
        ("Concept", "concept"),
        ("Time", "time"),
        ("Organizational", "org"),
        ("Identity", "identity"),
    ] {
        let _ = writeln!(
            out,
            "  <extension name=\"{name}\" prefix=\"{prefix}\" uri=\"http://www.xes-standard.org/{prefix}.xesext\"/>"
        );
    }
    for trace in log.traces() {
        out.push_str("  <trace>\n");
        write_attr(&mut out, 4, CONCEPT_NAME, &AttributeValue::Text(trace.case_id.clone()));
        if let Some(first) = trace.events.first() {
            for (name, value) in first.case_attributes() {
                write_attr(&mut out, 4, name, value);
            }
        }
        for event in &trace.events {
            out.push_str("    <event>\n");
            write_attr(&mut out, 6, IDENTITY_ID, &AttributeValue::Text(event.id.clone()));
            for (key, value) in &event.attributes {
                let xes_key = match key.as_str() {
                    CASE => continue,
                    ACT => CONCEPT_NAME,
                    TIME => TIME_TIMESTAMP,
                    RES => ORG_RESOURCE,
                    k if k.starts_with(CASE_PREFIX) => continue,
                    k => k.strip_prefix("xes:").unwrap_or(k),
                };
                write_attr(&mut out, 6, xes_key, value);
            }
            out.push_str("    </event>\n");
        }
        out.push_str("  </trace>\n");
    }
    out.push_str("</log>\n");
    out
}

fn write_attr(out: &mut String, indent: usize, key: &str, value: &AttributeValue) {
    let (tag, text) = match value {
        AttributeValue::Text(s) => ("string", s.clone()),
        AttributeValue::Integer(i) => ("int", i.to_string()),
        AttributeValue::Real(r) => ("float", format!("{r:?}")),
        AttributeValue::Boolean(b) => ("boolean", b.to_string()),
        AttributeValue::Timestamp(t) => ("date", format_timestamp(t)),
    };
    let _ = writeln!(
        out,
        "{:indent$}<{tag} key=\"{}\" value=\"{}\"/>",
        "",
        escape(key),
        escape(text.as_str()),
    );
}
