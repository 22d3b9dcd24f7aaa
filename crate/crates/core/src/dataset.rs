//! Survival data in delimited text form and its event-time batches.
//!
//! Columns are matched by header name: `time` or `exit`, `group`, `status`
//! and optionally `entry`. Status is `1`/`0` or `event`/`censored`. A
//! participant is at risk at time `t` when `entry < t <= exit`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskset::{EventBatch, RiskSet};
use crate::sim::TimedBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub entry: f64,
    pub exit: f64,
    /// 1 for treatment, 0 for control.
    pub group: u8,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(entry: f64, exit: f64, group: u8, event: bool) -> Result<Self> {
        if !(entry.is_finite() && exit.is_finite()) || entry < 0.0 || exit <= entry {
            return Err(Error::Data(format!(
                "need 0 <= entry < exit, got entry={entry}, exit={exit}"
            )));
        }
        if group > 1 {
            return Err(Error::Data(format!("group must be 0 or 1, got {group}")));
        }
        Ok(Self {
            entry,
            exit,
            group,
            event,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    /// Field delimiter; detected from the header line when `None`.
    pub delimiter: Option<u8>,
}

/// Records plus the event-time batches derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    records: Vec<SurvivalRecord>,
    batches: Vec<TimedBatch>,
}

impl TrialDataset {
    pub fn from_records(records: Vec<SurvivalRecord>) -> Result<Self> {
        let batches = derive_batches(&records)?;
        Ok(Self { records, batches })
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn timed_batches(&self) -> &[TimedBatch] {
        &self.batches
    }

    pub fn batches(&self) -> Vec<EventBatch> {
        self.batches.iter().map(|tb| tb.batch).collect()
    }

    /// Number of participants per group at time zero, i.e. with `entry == 0`.
    /// Falls back to the first event time's risk set under late entry.
    pub fn initial_risk(&self) -> RiskSet {
        let count = |g| {
            self.records
                .iter()
                .filter(|r| r.group == g && r.entry == 0.0)
                .count() as u64
        };
        let at_zero = RiskSet::new(count(1), count(0));
        if at_zero.y1 > 0 && at_zero.y0 > 0 {
            return at_zero;
        }
        self.batches.first().map_or(at_zero, |tb| tb.batch.risk())
    }
}

fn derive_batches(records: &[SurvivalRecord]) -> Result<Vec<TimedBatch>> {
    let sorted = |g: u8, f: fn(&SurvivalRecord) -> f64| {
        let mut v: Vec<f64> = records.iter().filter(|r| r.group == g).map(f).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let entries = [sorted(0, |r| r.entry), sorted(1, |r| r.entry)];
    let exits = [sorted(0, |r| r.exit), sorted(1, |r| r.exit)];
    let at_risk = |g: usize, t: f64| {
        let entered = entries[g].partition_point(|&e| e < t);
        let left = exits[g].partition_point(|&x| x < t);
        (entered - left) as u64
    };

    let mut events: Vec<(f64, u8)> = records
        .iter()
        .filter(|r| r.event)
        .map(|r| (r.exit, r.group))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for chunk in events.chunk_by(|a, b| a.0 == b.0) {
        let t = chunk[0].0;
        let o = chunk.len() as u64;
        let o1 = chunk.iter().filter(|e| e.1 == 1).count() as u64;
        let risk = RiskSet::new(at_risk(1, t), at_risk(0, t));
        let batch =
            EventBatch::new(risk, o, o1).map_err(|e| Error::Data(format!("at time {t}: {e}")))?;
        out.push(TimedBatch { time: t, batch });
    }
    Ok(out)
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else if header.contains(';') && !header.contains(',') {
        b';'
    } else {
        b','
    }
}

fn parse_status(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "event" => Some(true),
        "0" | "censored" => Some(false),
        _ => None,
    }
}

/// Parses delimited text into a dataset.
pub fn parse_dataset(text: &str, opts: ParseOptions) -> Result<TrialDataset> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        });
    }
    let delimiter = opts.delimiter.unwrap_or_else(|| detect_delimiter(text));
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let exit_col = find(&["exit", "time"]).ok_or_else(|| header_error("time or exit"))?;
    let group_col = find(&["group"]).ok_or_else(|| header_error("group"))?;
    let status_col = find(&["status"]).ok_or_else(|| header_error("status"))?;
    let entry_col = find(&["entry"]);

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |msg: String| Error::Parse { line, msg };
        let field = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize, name: &str| {
            field(i)
                .parse::<f64>()
                .map_err(|_| err(format!("{name} '{}' is not a number", field(i))))
        };
        let exit = num(exit_col, "time")?;
        let entry = match entry_col {
            Some(c) if !field(c).is_empty() => num(c, "entry")?,
            _ => 0.0,
        };
        let group = match field(group_col) {
            "0" => 0,
            "1" => 1,
            g => return Err(err(format!("group '{g}' must be 0 or 1"))),
        };
        let event = parse_status(field(status_col)).ok_or_else(|| {
            err(format!(
                "status '{}' must be 1/0 or event/censored",
                field(status_col)
            ))
        })?;
        records
            .push(SurvivalRecord::new(entry, exit, group, event).map_err(|e| err(e.to_string()))?);
    }
    if records.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    TrialDataset::from_records(records)
}

/// Reads and parses a whole dataset from `reader`.
pub fn read_dataset(mut reader: impl Read, opts: ParseOptions) -> Result<TrialDataset> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Data(e.to_string()))?;
    parse_dataset(&text, opts)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

fn header_error(col: &str) -> Error {
    Error::Parse {
        line: 1,
        msg: format!("header lacks a '{col}' column"),
    }
}

/// Writes `entry,exit,group,status` rows.
pub fn write_dataset(records: &[SurvivalRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["entry", "exit", "group", "status"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.entry.to_string(),
            r.exit.to_string(),
            r.group.to_string(),
            if r.event { "1" } else { "0" }.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Participant-level records that reproduce `stream` exactly. Participants
/// without an event are censored at `censor_at`, which must exceed every
/// event time.
pub fn records_from_stream(
    initial: RiskSet,
    stream: &[TimedBatch],
    censor_at: f64,
) -> Result<Vec<SurvivalRecord>> {
    let mut out = Vec::with_capacity(initial.total() as usize);
    let mut left = initial;
    for tb in stream {
        if tb.batch.risk() != left {
            return Err(Error::Data(format!(
                "stream risk set at time {} does not follow from the previous batch",
                tb.time
            )));
        }
        for k in 0..tb.batch.o() {
            out.push(SurvivalRecord::new(
                0.0,
                tb.time,
                u8::from(k < tb.batch.o1()),
                true,
            )?);
        }
        left = tb.batch.risk_after();
    }
    if stream.last().is_some_and(|tb| tb.time >= censor_at) {
        return Err(Error::Data(
            "censoring time must follow the last event".into(),
        ));
    }
    for (g, n) in [(1u8, left.y1), (0u8, left.y0)] {
        for _ in 0..n {
            out.push(SurvivalRecord::new(0.0, censor_at, g, false)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_form_one_batch() {
        let text = "time,group,status\n5,1,1\n5,0,1\n7,1,0\n9,0,event\n";
        let d = parse_dataset(text, ParseOptions::default()).unwrap();
        let b = d.batches();
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].o(), b[0].o1()), (2, 1));
        assert_eq!(b[0].risk(), RiskSet::new(2, 2));
        assert_eq!(b[1].risk(), RiskSet::new(0, 1));
    }

    #[test]
    fn censoring_only_affects_later_batches() {
        let text = "exit\tgroup\tstatus\n3\t1\tcensored\n3\t0\tevent\n4\t1\t1\n";
        let d = parse_dataset(text, ParseOptions::default()).unwrap();
        let b = d.batches();
        assert_eq!(b[0].risk(), RiskSet::new(2, 1));
        assert_eq!(b[1].risk(), RiskSet::new(1, 0));
    }

    #[test]
    fn late_entry() {
        let text = "entry,exit,group,status\n0,10,1,1\n4,6,0,1\n0,12,0,0\n";
        let d = parse_dataset(text, ParseOptions::default()).unwrap();
        assert_eq!(d.batches()[0].risk(), RiskSet::new(1, 2));
        assert_eq!(d.batches()[1].risk(), RiskSet::new(1, 1));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(
            parse_dataset("", ParseOptions::default()),
            Err(Error::Parse { .. })
        ));
        assert!(parse_dataset("time,group,status\n", ParseOptions::default()).is_err());
        let bad = "time,group,status\n1,0,1\n2,2,1\n";
        assert!(matches!(
            parse_dataset(bad, ParseOptions::default()),
            Err(Error::Parse { line: 3, .. })
        ));
        let bad = "time,group,status\n1,0,1\nx,1,1\n";
        assert!(matches!(
            parse_dataset(bad, ParseOptions::default()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse_dataset("time,arm,status\n1,0,1\n", ParseOptions::default()).is_err());
    }

    #[test]
    fn round_trip_through_text() {
        let stream =
            crate::sim::sample_tied_stream(20, 25, 0.7, 0.05, crate::sim::replication_rng(5, 0))
                .unwrap();
        let cut: Vec<_> = stream.iter().copied().take(10).collect();
        let initial = RiskSet::new(20, 25);
        let records = records_from_stream(initial, &cut, 1e6).unwrap();
        let mut buf = Vec::new();
        write_dataset(&records, &mut buf).unwrap();
        let d = parse_dataset(std::str::from_utf8(&buf).unwrap(), ParseOptions::default()).unwrap();
        assert_eq!(d.timed_batches(), &cut[..]);
        assert_eq!(d.initial_risk(), initial);
    }
}
