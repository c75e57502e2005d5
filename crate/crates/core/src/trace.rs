//! Messages, traces and verdicts, with the JSON text codec used on the wire and
//! the JSON Lines trace-file format.
//!
//! A [`Record`] is one timestamped propositional valuation. On the wire it is a
//! flat JSON object of boolean members plus an optional integer `time` member:
//!
//! ```text
//! {"time":42,"p":true,"q":false}
//! ```
//!
//! When `time` is absent the caller supplies a step counter (the arrival index).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

/// Name of the reserved member carrying the record timestamp.
pub const TIME_KEY: &str = "time";

/// Discrete, dimensionless time value.
pub type Time = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("expected a JSON object")]
    NotObject,
    #[error("non-boolean field {0}")]
    NonBoolean(String),
    #[error("invalid time value: {0}")]
    BadTime(String),
    #[error("duplicate field {0}")]
    Duplicate(String),
    #[error("invalid field name {0:?}")]
    InvalidName(String),
    #[error("missing time member")]
    MissingTime,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Decode {
        line: usize,
        #[source]
        source: DecodeError,
    },
    #[error("non-increasing time at line {line}")]
    NonIncreasing { line: usize },
    #[error("non-increasing time at record {index}")]
    OutOfOrder { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Returns true if `name` is a valid atom name.
///
/// Names are one or more dot-separated identifiers, each matching
/// `[A-Za-z_][A-Za-z0-9_]*`. Plain atoms have a single segment; records merged
/// by the synchronizer carry `<topic-segment>.<field>` names.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.split('.').all(is_identifier)
}

fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// One timestamped message: a propositional valuation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Record {
    pub time: Time,
    pub fields: BTreeMap<String, bool>,
}

impl Record {
    pub fn new(time: Time) -> Self {
        Record {
            time,
            fields: BTreeMap::new(),
        }
    }

    /// Builder-style field insertion.
    pub fn with(mut self, name: &str, value: bool) -> Self {
        self.fields.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        self.fields.get(name).copied()
    }
}

/// An ordered message log with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    records: Vec<Record>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn from_records(records: Vec<Record>) -> Result<Self, TraceError> {
        if let Some(index) = records
            .windows(2)
            .position(|w| w[1].time <= w[0].time)
        {
            return Err(TraceError::OutOfOrder { index: index + 1 });
        }
        Ok(Trace { records })
    }

    pub fn push(&mut self, record: Record) -> Result<(), TraceError> {
        if let Some(last) = self.records.last() {
            if record.time <= last.time {
                return Err(TraceError::OutOfOrder {
                    index: self.records.len(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Record> {
        self.records.iter()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a Record;
    type IntoIter = std::slice::Iter<'a, Record>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Monitor output for the prefix ending at the record with the same time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub time: Time,
    pub value: bool,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{\"time\":{},\"verdict\":{}}}", self.time, self.value)
    }
}

/// JSON object members in source order, duplicates preserved.
struct Members(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Members {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MembersVisitor;

        impl<'de> Visitor<'de> for MembersVisitor {
            type Value = Members;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Members, A::Error> {
                let mut members = Vec::with_capacity(map.size_hint().unwrap_or(4));
                while let Some(key) = map.next_key::<String>()? {
                    let value = map.next_value::<Value>()?;
                    members.push((key, value));
                }
                Ok(Members(members))
            }
        }

        deserializer.deserialize_map(MembersVisitor)
    }
}

fn parse_members(text: &str) -> Result<Vec<(String, Value)>, DecodeError> {
    match serde_json::from_str::<Members>(text) {
        Ok(m) => Ok(m.0),
        Err(e) if e.is_data() => Err(DecodeError::NotObject),
        Err(e) => Err(DecodeError::Malformed(e.to_string())),
    }
}

fn decode_inner(text: &str) -> Result<(Option<Time>, BTreeMap<String, bool>), DecodeError> {
    let members = parse_members(text)?;
    let mut time = None;
    let mut fields = BTreeMap::new();
    for (key, value) in members {
        if key == TIME_KEY {
            if time.is_some() {
                return Err(DecodeError::Duplicate(key));
            }
            match value.as_u64() {
                Some(t) => time = Some(t),
                None => return Err(DecodeError::BadTime(value.to_string())),
            }
            continue;
        }
        if !is_valid_name(&key) {
            return Err(DecodeError::InvalidName(key));
        }
        let Value::Bool(b) = value else {
            return Err(DecodeError::NonBoolean(key));
        };
        if fields.insert(key.clone(), b).is_some() {
            return Err(DecodeError::Duplicate(key));
        }
    }
    Ok((time, fields))
}

/// Decodes one JSON message. `step_counter` is used as the time when the
/// message has no explicit `time` member.
pub fn decode_record(text: &str, step_counter: Time) -> Result<Record, DecodeError> {
    let (time, fields) = decode_inner(text)?;
    Ok(Record {
        time: time.unwrap_or(step_counter),
        fields,
    })
}

/// Decodes a message that must carry an explicit `time` member.
pub fn decode_timed_record(text: &str) -> Result<Record, DecodeError> {
    let (time, fields) = decode_inner(text)?;
    Ok(Record {
        time: time.ok_or(DecodeError::MissingTime)?,
        fields,
    })
}

/// Encodes a record as a single-line JSON object with sorted keys; `time`
/// comes first when `include_time` is set.
pub fn encode_record(record: &Record, include_time: bool) -> String {
    let mut out = String::with_capacity(8 + record.fields.len() * 12);
    out.push('{');
    let mut first = true;
    if include_time {
        out.push_str("\"time\":");
        out.push_str(&record.time.to_string());
        first = false;
    }
    for (name, value) in &record.fields {
        if !first {
            out.push(',');
        }
        first = false;
        // Valid names never need escaping.
        out.push('"');
        out.push_str(name);
        out.push_str("\":");
        out.push_str(if *value { "true" } else { "false" });
    }
    out.push('}');
    out
}

pub fn encode_verdict(verdict: &Verdict) -> String {
    verdict.to_string()
}

/// Reads a JSON Lines trace. Every line must carry an explicit `time`.
pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records: Vec<Record> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let record =
            decode_timed_record(&line).map_err(|source| TraceError::Decode { line: lineno, source })?;
        if let Some(prev) = records.last() {
            if record.time <= prev.time {
                return Err(TraceError::NonIncreasing { line: lineno });
            }
        }
        records.push(record);
    }
    Ok(Trace { records })
}

pub fn write_trace_file(path: impl AsRef<Path>, trace: &Trace) -> Result<(), TraceError> {
    let mut w = BufWriter::new(File::create(path)?);
    for record in trace {
        w.write_all(encode_record(record, true).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_uses_step_counter() {
        let r = decode_record(r#"{"p":true,"q":false}"#, 7).unwrap();
        assert_eq!(r, Record::new(7).with("p", true).with("q", false));
    }

    #[test]
    fn explicit_time_overrides_counter() {
        let r = decode_record(r#"{"time":42,"p":true}"#, 0).unwrap();
        assert_eq!(r, Record::new(42).with("p", true));
    }

    #[test]
    fn decode_errors_name_the_member() {
        let err = decode_record(r#"{"p":1}"#, 0).unwrap_err();
        assert_eq!(err, DecodeError::NonBoolean("p".into()));
        assert_eq!(err.to_string(), "non-boolean field p");

        assert_eq!(
            decode_record(r#"{"p":true,"p":false}"#, 0).unwrap_err(),
            DecodeError::Duplicate("p".into())
        );
        assert!(matches!(
            decode_record(r#"{"time":-1}"#, 0).unwrap_err(),
            DecodeError::BadTime(_)
        ));
        assert!(matches!(
            decode_record(r#"{"time":1.5}"#, 0).unwrap_err(),
            DecodeError::BadTime(_)
        ));
        assert!(matches!(
            decode_record(r#"{"p":true"#, 0).unwrap_err(),
            DecodeError::Malformed(_)
        ));
        assert_eq!(decode_record("[1,2]", 0).unwrap_err(), DecodeError::NotObject);
        assert_eq!(
            decode_record(r#"{"9x":true}"#, 0).unwrap_err(),
            DecodeError::InvalidName("9x".into())
        );
        assert_eq!(
            decode_timed_record(r#"{"p":true}"#).unwrap_err(),
            DecodeError::MissingTime
        );
    }

    #[test]
    fn encode_layout() {
        let r = Record::new(0).with("p", true);
        assert_eq!(encode_record(&r, true), r#"{"time":0,"p":true}"#);
        let r = Record::new(3).with("b", false).with("a", true);
        assert_eq!(encode_record(&r, false), r#"{"a":true,"b":false}"#);
        assert_eq!(encode_record(&Record::new(5), true), r#"{"time":5}"#);
        assert_eq!(encode_record(&Record::new(5), false), "{}");
    }

    #[test]
    fn verdict_layout() {
        let v = Verdict { time: 0, value: true };
        assert_eq!(encode_verdict(&v), r#"{"time":0,"verdict":true}"#);
        let v = Verdict { time: 99, value: false };
        let s = encode_verdict(&v);
        assert_eq!(s, r#"{"time":99,"verdict":false}"#);
        let parsed: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["time"], 99);
        assert_eq!(parsed["verdict"], false);
    }

    #[test]
    fn timescales_payloads_fit_32_bytes() {
        for bits in 0..8u8 {
            let r = Record::new(123_456)
                .with("p", bits & 1 != 0)
                .with("q", bits & 2 != 0)
                .with("r", bits & 4 != 0);
            assert!(encode_record(&r, false).len() <= 32);
        }
    }

    #[test]
    fn trace_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, "{\"time\":0,\"p\":true}\n{\"time\":1,\"p\":false}\n").unwrap();
        let t = read_trace_file(&path).unwrap();
        assert_eq!(t.len(), 2);
        let path2 = dir.path().join("u.jsonl");
        write_trace_file(&path2, &t).unwrap();
        assert_eq!(read_trace_file(&path2).unwrap(), t);
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            std::fs::read_to_string(&path2).unwrap()
        );
    }

    #[test]
    fn empty_trace_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_trace_file(&path).unwrap().is_empty());
    }

    #[test]
    fn trace_file_errors_are_line_numbered() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"time\":5,\"p\":true}\n{\"time\":5,\"p\":true}\n").unwrap();
        let err = read_trace_file(&path).unwrap_err();
        assert_eq!(err.to_string(), "non-increasing time at line 2");

        std::fs::write(&path, "{\"time\":0}\n{\"p\":true}\n").unwrap();
        let err = read_trace_file(&path).unwrap_err();
        assert!(matches!(
            err,
            TraceError::Decode { line: 2, source: DecodeError::MissingTime }
        ));
    }

    #[test]
    fn trace_rejects_disorder() {
        let recs = vec![Record::new(1), Record::new(1)];
        assert!(Trace::from_records(recs).is_err());
        let mut t = Trace::new();
        t.push(Record::new(3)).unwrap();
        assert!(t.push(Record::new(2)).is_err());
    }

    fn arb_name() -> impl Strategy<Value = String> {
        "[A-Za-z_][A-Za-z0-9_]{0,6}(\\.[A-Za-z_][A-Za-z0-9_]{0,4})?"
            .prop_filter("reserved", |s| s != TIME_KEY)
    }

    proptest! {
        #[test]
        fn codec_round_trip(
            time in any::<u64>(),
            fields in proptest::collection::btree_map(arb_name(), any::<bool>(), 0..6),
            include_time in any::<bool>(),
        ) {
            let r = Record { time, fields };
            let text = encode_record(&r, include_time);
            prop_assert_eq!(decode_record(&text, time).unwrap(), r);
        }
    }
}
