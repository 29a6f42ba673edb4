//! Event logs: typed attribute values, events grouped into traces, and the
//! readers/writers for XES, CSV and canonical JSON.
//!
//! Every event carries a flat attribute map. The reserved keys [`CASE`],
//! [`ACT`], [`TIME`] and (optionally) [`RES`] hold the case id, activity,
//! timestamp and resource. Trace-level attributes are copied onto every event
//! of the trace under a `case:` prefix.

mod csv_import;
mod synthetic;
mod xes;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use csv_import::{parse_csv, CsvMapping};
pub use synthetic::{generate_synthetic_p2p, customs_rule, P2P_CUSTOMS_ACTIVITY};
pub use xes::{parse_xes, write_xes};

pub const CASE: &str = "case";
pub const ACT: &str = "act";
pub const TIME: &str = "time";
pub const RES: &str = "res";
pub const CASE_PREFIX: &str = "case:";

pub type FeatureName = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AttributeValue {
    Text(String),
    Integer(i64),
    Real(f64),
    Boolean(bool),
    Timestamp(#[serde(with = "millis_rfc3339")] DateTime<Utc>),
}

mod millis_rfc3339 {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| super::truncate_to_millis(t.with_timezone(&Utc)))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Text,
    Integer,
    Real,
    Boolean,
    Timestamp,
}

impl AttributeValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::Text(_) => ValueKind::Text,
            AttributeValue::Integer(_) => ValueKind::Integer,
            AttributeValue::Real(_) => ValueKind::Real,
            AttributeValue::Boolean(_) => ValueKind::Boolean,
            AttributeValue::Timestamp(_) => ValueKind::Timestamp,
        }
    }

    /// Numeric view of integers and reals.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttributeValue::Integer(i) => Some(*i as f64),
            AttributeValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttributeValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<DateTime<Utc>> {
        match self {
            AttributeValue::Timestamp(t) => Some(*t),
            _ => None,
        }
    }

    /// Converts a plain JSON scalar into an attribute value. Strings stay text.
    pub fn from_json(value: &serde_json::Value) -> Option<AttributeValue> {
        match value {
            serde_json::Value::String(s) => Some(AttributeValue::Text(s.clone())),
            serde_json::Value::Bool(b) => Some(AttributeValue::Boolean(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(AttributeValue::Integer(i))
                } else {
                    n.as_f64().filter(|f| f.is_finite()).map(AttributeValue::Real)
                }
            }
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            AttributeValue::Text(s) => serde_json::Value::from(s.as_str()),
            AttributeValue::Integer(i) => serde_json::Value::from(*i),
            AttributeValue::Real(r) => serde_json::Value::from(*r),
            AttributeValue::Boolean(b) => serde_json::Value::from(*b),
            AttributeValue::Timestamp(t) => serde_json::Value::from(format_timestamp(t)),
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Text(s) => f.write_str(s),
            AttributeValue::Integer(i) => write!(f, "{i}"),
            AttributeValue::Real(r) => write!(f, "{r}"),
            AttributeValue::Boolean(b) => write!(f, "{b}"),
            AttributeValue::Timestamp(t) => f.write_str(&format_timestamp(t)),
        }
    }
}

/// RFC 3339 with millisecond precision and a `Z` suffix.
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Truncates to whole milliseconds.
pub fn truncate_to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).unwrap_or(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub attributes: BTreeMap<FeatureName, AttributeValue>,
}

impl Event {
    pub fn new(
        id: impl Into<String>,
        case_id: &str,
        activity: &str,
        time: DateTime<Utc>,
    ) -> Event {
        let mut attributes = BTreeMap::new();
        attributes.insert(CASE.to_string(), AttributeValue::Text(case_id.to_string()));
        attributes.insert(ACT.to_string(), AttributeValue::Text(activity.to_string()));
        attributes.insert(TIME.to_string(), AttributeValue::Timestamp(truncate_to_millis(time)));
        Event {
            id: id.into(),
            attributes,
        }
    }

    pub fn with(mut self, key: &str, value: AttributeValue) -> Event {
        self.attributes.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&AttributeValue> {
        self.attributes.get(key)
    }

    pub fn case_id(&self) -> &str {
        self.get(CASE).and_then(AttributeValue::as_text).unwrap_or("")
    }

    pub fn activity(&self) -> &str {
        self.get(ACT).and_then(AttributeValue::as_text).unwrap_or("")
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.get(TIME)
            .and_then(AttributeValue::as_timestamp)
            .unwrap_or_default()
    }

    pub fn resource(&self) -> Option<&str> {
        self.get(RES).and_then(AttributeValue::as_text)
    }

    /// Case-level attributes carried by this event, with the prefix stripped.
    pub fn case_attributes(&self) -> impl Iterator<Item = (&str, &AttributeValue)> {
        self.attributes
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(CASE_PREFIX).map(|name| (name, v)))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self.get(CASE) {
            Some(AttributeValue::Text(_)) => {}
            _ => return Err(format!("event {} has no textual case id", self.id)),
        }
        match self.get(ACT) {
            Some(AttributeValue::Text(a)) if !a.is_empty() => {}
            _ => return Err(format!("event {} has no activity", self.id)),
        }
        match self.get(TIME) {
            Some(AttributeValue::Timestamp(_)) => {}
            _ => return Err(format!("event {} has no timestamp", self.id)),
        }
        for (key, value) in &self.attributes {
            if let AttributeValue::Real(r) = value {
                if !r.is_finite() {
                    return Err(format!("event {} has non-finite value for {key}", self.id));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    /// Builds a trace, sorting events by timestamp. Ties keep input order.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Trace {
        events.sort_by_key(Event::timestamp);
        Trace {
            case_id: case_id.into(),
            events,
        }
    }

    pub fn activities(&self) -> Vec<&str> {
        self.events.iter().map(Event::activity).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
    attribute_schema: BTreeMap<FeatureName, ValueKind>,
}

/// Result of a lenient parse: the log plus the warnings for dropped input.
#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub log: EventLog,
    pub warnings: Vec<String>,
}

impl EventLog {
    /// Validates the traces and infers the attribute schema.
    pub fn new(traces: Vec<Trace>) -> Result<EventLog> {
        let mut seen = BTreeSet::new();
        for trace in &traces {
            if !seen.insert(trace.case_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate case id {}",
                    trace.case_id
                )));
            }
            for event in &trace.events {
                event.validate().map_err(Error::InvalidArgument)?;
                if event.case_id() != trace.case_id {
                    return Err(Error::InvalidArgument(format!(
                        "event {} belongs to case {} but sits in trace {}",
                        event.id,
                        event.case_id(),
                        trace.case_id
                    )));
                }
            }
            if trace
                .events
                .windows(2)
                .any(|w| w[0].timestamp() > w[1].timestamp())
            {
                return Err(Error::InvalidArgument(format!(
                    "events of case {} are not sorted by time",
                    trace.case_id
                )));
            }
        }
        let attribute_schema = infer_schema(&traces);
        Ok(EventLog {
            traces,
            attribute_schema,
        })
    }

    pub fn empty() -> EventLog {
        EventLog {
            traces: Vec::new(),
            attribute_schema: BTreeMap::new(),
        }
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn schema(&self) -> &BTreeMap<FeatureName, ValueKind> {
        &self.attribute_schema
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    /// Canonical JSON: stable key order, timestamps in RFC 3339 milliseconds.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("event logs always serialize")
    }

    pub fn from_json(input: &str) -> Result<EventLog> {
        let raw: EventLog = serde_json::from_str(input)?;
        EventLog::new(raw.traces)
    }
}

fn infer_schema(traces: &[Trace]) -> BTreeMap<FeatureName, ValueKind> {
    let mut schema: BTreeMap<FeatureName, ValueKind> = BTreeMap::new();
    for event in traces.iter().flat_map(|t| &t.events) {
        for (key, value) in &event.attributes {
            let kind = value.kind();
            schema
                .entry(key.clone())
                .and_modify(|existing| *existing = widen(*existing, kind))
                .or_insert(kind);
        }
    }
    schema
}

fn widen(a: ValueKind, b: ValueKind) -> ValueKind {
    use ValueKind::*;
    match (a, b) {
        (x, y) if x == y => x,
        (Integer, Real) | (Real, Integer) => Real,
        _ => Text,
    }
}

/// Events of one running case from plain JSON objects such as
/// `{"act": "Send Order", "time": "2022-10-03T08:00:00Z", "res": "Adams",
/// "case:vendor": "Apple"}`. `activity` and `timestamp` are accepted as
/// aliases. Other scalar values become attributes.
pub fn events_from_json(value: &serde_json::Value, case_id: &str) -> Result<Vec<Event>> {
    let items = value
        .as_array()
        .ok_or_else(|| Error::InvalidArgument("events must be a JSON array".into()))?;
    let mut events = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| Error::InvalidArgument(format!("event {i} is not an object")))?;
        let field = |names: [&str; 2]| names.iter().find_map(|n| obj.get(*n));
        let activity = field([ACT, "activity"])
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("event {i} has no activity")))?;
        let time = field([TIME, "timestamp"])
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("event {i} has no timestamp")))?;
        let time = DateTime::parse_from_rfc3339(time)
            .map_err(|e| Error::InvalidArgument(format!("event {i}: bad timestamp {time:?}: {e}")))?
            .with_timezone(&Utc);
        let mut event = Event::new(format!("{case_id}-{i}"), case_id, activity, time);
        for (key, v) in obj {
            if [ACT, "activity", TIME, "timestamp", CASE].contains(&key.as_str()) {
                continue;
            }
            let attr = AttributeValue::from_json(v)
                .ok_or_else(|| Error::InvalidArgument(format!("event {i}: attribute {key} is not a scalar")))?;
            event = event.with(key, attr);
        }
        events.push(event);
    }
    if events.windows(2).any(|w| w[0].timestamp() > w[1].timestamp()) {
        return Err(Error::InvalidArgument("events are not sorted by time".into()));
    }
    Ok(events)
}

/// Groups events by case id in order of first appearance.
pub(crate) fn group_into_traces(events: Vec<Event>) -> Vec<Trace> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for event in events {
        let case = event.case_id().to_string();
        let entry = groups.entry(case.clone()).or_default();
        if entry.is_empty() {
            order.push(case);
        }
        entry.push(event);
    }
    order
        .into_iter()
        .map(|case| {
            let events = groups.remove(&case).unwrap_or_default();
            Trace::new(case, events)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 10, 5, h, 0, 0).unwrap()
    }

    #[test]
    fn trace_sorts_by_time_and_keeps_tie_order() {
        let events = vec![
            Event::new("e1", "c", "B", ts(10)),
            Event::new("e2", "c", "A", ts(9)),
            Event::new("e3", "c", "C", ts(10)),
        ];
        let trace = Trace::new("c", events);
        assert_eq!(trace.activities(), vec!["A", "B", "C"]);
    }

    #[test]
    fn schema_widens_integer_and_real() {
        let t = Trace::new(
            "c",
            vec![
                Event::new("e1", "c", "A", ts(9)).with("x", AttributeValue::Integer(1)),
                Event::new("e2", "c", "B", ts(10)).with("x", AttributeValue::Real(1.5)),
            ],
        );
        let log = EventLog::new(vec![t]).unwrap();
        assert_eq!(log.schema()["x"], ValueKind::Real);
        assert_eq!(log.schema()[ACT], ValueKind::Text);
        assert_eq!(log.schema()[TIME], ValueKind::Timestamp);
    }

    #[test]
    fn duplicate_case_ids_are_rejected() {
        let a = Trace::new("c", vec![Event::new("e1", "c", "A", ts(9))]);
        assert!(EventLog::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn non_finite_reals_are_rejected() {
        let t = Trace::new(
            "c",
            vec![Event::new("e1", "c", "A", ts(9)).with("x", AttributeValue::Real(f64::NAN))],
        );
        assert!(EventLog::new(vec![t]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = Trace::new(
            "PO92",
            vec![Event::new("e1", "PO92", "Create Purchase Order", ts(9))
                .with(RES, AttributeValue::Text("Adams".into()))
                .with("total-price", AttributeValue::Integer(1000))],
        );
        let log = EventLog::new(vec![t]).unwrap();
        let json = log.to_json();
        assert!(json.contains("2022-10-05T09:00:00.000Z"));
        assert_eq!(EventLog::from_json(&json).unwrap(), log);
    }

    #[test]
    fn events_from_plain_json() {
        let v = serde_json::json!([
            {"act": "Create Purchase Order", "time": "2022-10-03T08:00:00Z", "res": "Adams", "case:vendor": "Apple"},
            {"activity": "Send Order", "timestamp": "2022-10-04T08:00:00.250Z", "amount": 3}
        ]);
        let events = events_from_json(&v, "run").unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].resource(), Some("Adams"));
        assert_eq!(events[0].get("case:vendor"), Some(&AttributeValue::Text("Apple".into())));
        assert_eq!(events[1].activity(), "Send Order");
        assert_eq!(events[1].get("amount"), Some(&AttributeValue::Integer(3)));
        assert_eq!(events[1].case_id(), "run");
    }

    #[test]
    fn events_from_json_rejects_bad_input() {
        for bad in [
            serde_json::json!({"act": "a"}),
            serde_json::json!([{"time": "2022-10-03T08:00:00Z"}]),
            serde_json::json!([{"act": "a", "time": "yesterday"}]),
            serde_json::json!([{"act": "a", "time": "2022-10-03T08:00:00Z", "x": [1]}]),
            serde_json::json!([
                {"act": "a", "time": "2022-10-03T08:00:00Z"},
                {"act": "b", "time": "2022-10-02T08:00:00Z"}
            ]),
        ] {
            assert!(events_from_json(&bad, "c").is_err(), "{bad}");
        }
    }
}
