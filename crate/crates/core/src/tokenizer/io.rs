//! Line-delimited event records: `patient_id<TAB>age_minutes<TAB>kind<TAB>code<TAB>value`.
//!
//! Empty `age_minutes` or `value` fields are nulls. A header line with the
//! field names and lines starting with `#` are skipped.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::event::{ClinicalEvent, EventKind};

pub const EVENT_HEADER: &str = "patient_id\tage_minutes\tkind\tcode\tvalue";

fn parse_opt_f64(field: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse { line, message: format!("bad {name} {field:?}") })
}

pub fn parse_event_line(text: &str, line: usize) -> Result<ClinicalEvent> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::Parse { line, message: format!("expected 5 tab-separated fields, got {}", fields.len()) });
    }
    let kind: EventKind = fields[2].parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?;
    let event = ClinicalEvent {
        patient_id: fields[0].to_string(),
        age_minutes: parse_opt_f64(fields[1], "age_minutes", line)?,
        kind,
        code: fields[3].to_string(),
        value: parse_opt_f64(fields[4], "value", line)?,
    };
    event.validate().map_err(|e| Error::Parse { line, message: e.to_string() })?;
    Ok(event)
}

pub fn read_events(reader: impl BufRead) -> Result<Vec<ClinicalEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::Parse { line: n, message: e.to_string() })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') || line == EVENT_HEADER {
            continue;
        }
        out.push(parse_event_line(line, n)?);
    }
    Ok(out)
}

pub fn read_events_file(path: &Path) -> Result<Vec<ClinicalEvent>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(std::io::BufReader::new(f))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_events<'a>(mut w: impl Write, events: impl IntoIterator<Item = &'a ClinicalEvent>) -> std::io::Result<()> {
    writeln!(w, "{EVENT_HEADER}")?;
    for e in events {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", e.patient_id, fmt_opt(e.age_minutes), e.kind, e.code, fmt_opt(e.value))?;
    }
    Ok(())
}

pub fn write_events_file<'a>(path: &Path, events: impl IntoIterator<Item = &'a ClinicalEvent>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_events(&mut w, events).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
