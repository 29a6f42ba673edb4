use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    group_into_traces, truncate_to_millis, AttributeValue, Event, EventLog, ParsedLog, RES,
};
use crate::{Error, Result};

/// Column mapping for CSV import. `time_format` is a strftime pattern; when
/// absent or `"rfc3339"`, timestamps are read as RFC 3339.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub case_col: String,
    pub act_col: String,
    pub time_col: String,
    #[serde(default)]
    pub time_format: Option<String>,
    #[serde(default)]
    pub res_col: Option<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum ColumnKind {
    Integer,
    Real,
    Boolean,
    Text,
}

pub fn parse_csv<R: Read>(input: R, mapping: &CsvMapping) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing mapped column '{name}'")))
    };
    let case_idx = column(&mapping.case_col)?;
    let act_idx = column(&mapping.act_col)?;
    let time_idx = column(&mapping.time_col)?;
    let res_idx = mapping.res_col.as_deref().map(column).transpose()?;
    let mapped = [Some(case_idx), Some(act_idx), Some(time_idx), res_idx];

    let rows: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;

    let extra: Vec<usize> = (0..headers.len())
        .filter(|i| !mapped.contains(&Some(*i)))
        .collect();
    let kinds: Vec<ColumnKind> = extra
        .iter()
        .map(|&i| infer_kind(rows.iter().map(|r| r.get(i).unwrap_or("").trim())))
        .collect();

    let mut warnings = Vec::new();
    let mut events = Vec::with_capacity(rows.len());
    for (row_no, row) in rows.iter().enumerate() {
        let line = row_no + 2;
        let case = row.get(case_idx).unwrap_or("").trim();
        let act = row.get(act_idx).unwrap_or("").trim();
        if case.is_empty() || act.is_empty() {
            warnings.push(format!("row {line}: empty case id or activity, skipped"));
            continue;
        }
        let raw_time = row.get(time_idx).unwrap_or("").trim();
        let Some(time) = parse_time(raw_time, mapping.time_format.as_deref()) else {
            warnings.push(format!("row {line}: unparseable timestamp {raw_time:?}, skipped"));
            continue;
        };
        let mut event = Event::new(format!("e{}", row_no + 1), case, act, time);
        if let Some(res) = res_idx.and_then(|i| row.get(i)).map(str::trim) {
            if !res.is_empty() {
                event = event.with(RES, AttributeValue::Text(res.to_string()));
            }
        }
        for (&i, &kind) in extra.iter().zip(&kinds) {
            let raw = row.get(i).unwrap_or("").trim();
            if raw.is_empty() {
                continue;
            }
            event = event.with(&headers[i], typed_value(raw, kind));
        }
        events.push(event);
    }

    let log = EventLog::new(group_into_traces(events))?;
    Ok(ParsedLog { log, warnings })
}

fn infer_kind<'a>(values: impl Iterator<Item = &'a str>) -> ColumnKind {
    let mut kind = None;
    for v in values.filter(|v| !v.is_empty()) {
        let this = if v.parse::<i64>().is_ok() {
            ColumnKind::Integer
        } else if v.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
            ColumnKind::Real
        } else if v.eq_ignore_ascii_case("true") || v.eq_ignore_ascii_case("false") {
            ColumnKind::Boolean
        } else {
            return ColumnKind::Text;
        };
        kind = Some(match (kind, this) {
            (None, k) => k,
            (Some(a), b) if a == b => a,
            (Some(ColumnKind::Integer), ColumnKind::Real)
            | (Some(ColumnKind::Real), ColumnKind::Integer) => ColumnKind::Real,
            _ => return ColumnKind::Text,
        });
    }
    kind.unwrap_or(ColumnKind::Text)
}

fn typed_value(raw: &str, kind: ColumnKind) -> AttributeValue {
    match kind {
        ColumnKind::Integer => AttributeValue::Integer(raw.parse().expect("inferred integer")),
        ColumnKind::Real => AttributeValue::Real(raw.parse().expect("inferred real")),
        ColumnKind::Boolean => AttributeValue::Boolean(raw.eq_ignore_ascii_case("true")),
        ColumnKind::Text => AttributeValue::Text(raw.to_string()),
    }
}

fn parse_time(raw: &str, format: Option<&str>) -> Option<DateTime<Utc>> {
    let parsed = match format {
        None | Some("rfc3339") => DateTime::parse_from_rfc3339(raw)
            .ok()
            .map(|d| d.with_timezone(&Utc)),
        Some(fmt) => NaiveDateTime::parse_from_str(raw, fmt)
            .ok()
            .or_else(|| {
                NaiveDate::parse_from_str(raw, fmt)
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
            })
            .map(|n| n.and_utc()),
    };
    parsed.map(truncate_to_millis)
}
