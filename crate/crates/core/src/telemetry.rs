//! Flight-log ingestion and ground-truth annotation.
//!
//! Logs arrive as long-format CSV exports (one measurement per row) with the
//! header `timestamp_us,feature_name,value`. Attack intervals come from a
//! separate annotation CSV keyed by session id, with wall-clock times at
//! second resolution. The attack interval is treated as closed on both ends;
//! a window is attack-labeled when its half-open span intersects it.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveTime;

use crate::error::{Error, Result};

/// Exact header required for telemetry log exports.
pub const LOG_HEADER: &str = "timestamp_us,feature_name,value";
/// Exact header required for annotation files.
pub const ANNOTATION_HEADER: &str =
    "session_id,attack_kind,flight_start,attack_start,attack_end,flight_end";

/// Ground-truth class of a timestamp or window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Benign,
    Attack,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Benign => write!(f, "benign"),
            Label::Attack => write!(f, "attack"),
        }
    }
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "benign" => Some(Label::Benign),
            "attack" => Some(Label::Attack),
            _ => None,
        }
    }
}

/// Kind of intrusion recorded in an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Dos,
    GpsSpoofing,
    Other,
}

impl AttackKind {
    pub fn parse(s: &str) -> Option<AttackKind> {
        match s.to_ascii_lowercase().as_str() {
            "dos" => Some(AttackKind::Dos),
            "gps_spoofing" => Some(AttackKind::GpsSpoofing),
            "other" => Some(AttackKind::Other),
            _ => None,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackKind::Dos => write!(f, "dos"),
            AttackKind::GpsSpoofing => write!(f, "gps_spoofing"),
            AttackKind::Other => write!(f, "other"),
        }
    }
}

/// One telemetry measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// Microseconds since the session epoch (flight start). Never negative.
    pub timestamp_us: i64,
    pub feature_name: String,
    /// Always finite; non-finite rows are rejected at parse time.
    pub value: f64,
}

/// Attack interval in session wall-clock time, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackAnnotation {
    pub attack_start: NaiveTime,
    pub attack_end: NaiveTime,
    pub attack_kind: AttackKind,
}

/// Ordered telemetry for one flight session.
#[derive(Debug, Clone)]
pub struct FlightLog {
    session_id: String,
    /// Sorted by timestamp, stable for ties.
    records: Vec<RawRecord>,
    flight_start: NaiveTime,
    flight_end: NaiveTime,
    annotation: Option<AttackAnnotation>,
}

/// Counters from one parse run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseReport {
    /// Data rows read (header excluded).
    pub rows_read: usize,
    /// Rows dropped for non-finite values, bad timestamps or malformed fields.
    pub rows_rejected: usize,
}

/// One row of an annotation file: flight bounds plus an optional attack.
#[derive(Debug, Clone)]
pub struct SessionAnnotation {
    pub session_id: String,
    pub flight_start: NaiveTime,
    pub flight_end: NaiveTime,
    pub attack: Option<AttackAnnotation>,
}

fn midnight() -> NaiveTime {
    NaiveTime::from_hms_opt(0, 0, 0).unwrap()
}

fn parse_clock(s: &str) -> Result<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M:%S").map_err(|_| Error::BadClockTime {
        value: s.to_string(),
    })
}

fn micros_between(earlier: NaiveTime, later: NaiveTime) -> i64 {
    later
        .signed_duration_since(earlier)
        .num_microseconds()
        .expect("session durations fit in i64 microseconds")
}

pub(crate) fn feature_name_ok(name: &str) -> bool {
    !name.is_empty()
        && !name
            .chars()
            .any(|c| c == ',' || c == '"' || c == '\n' || c == '\r')
}

/// Parse a long-format CSV export into a [`FlightLog`].
///
/// Bad rows (non-finite values, negative or unparseable timestamps, wrong
/// field counts) are dropped and counted rather than aborting the parse;
/// the whole parse fails only if more than half of the data rows were
/// rejected. Flight bounds are provisional (session epoch at 00:00:00,
/// end rounded up to the next whole second after the last record) until
/// [`apply_annotation`] attaches real wall-clock bounds.
pub fn parse_log(path: &Path, session_id: &str) -> Result<(FlightLog, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let header = reader
        .headers()
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => io_from_csv(path, e),
            _ => Error::BadHeader {
                path: path.to_path_buf(),
                expected: LOG_HEADER.to_string(),
                found: String::from("<unreadable>"),
            },
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != LOG_HEADER {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: LOG_HEADER.to_string(),
            found: header,
        });
    }

    let mut records = Vec::new();
    let mut rows_read = 0usize;
    let mut rows_rejected = 0usize;

    for row in reader.records() {
        rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(io_from_csv(path, e));
                }
                rows_rejected += 1;
                continue;
            }
        };
        if row.len() != 3 {
            rows_rejected += 1;
            continue;
        }
        let ts = row[0].trim().parse::<i64>();
        let value = row[2].trim().parse::<f64>();
        match (ts, value) {
            (Ok(ts), Ok(v)) if ts >= 0 && v.is_finite() && feature_name_ok(&row[1]) => {
                records.push(RawRecord {
                    timestamp_us: ts,
                    feature_name: row[1].to_string(),
                    value: v,
                });
            }
            _ => rows_rejected += 1,
        }
    }

    if rows_read > 0 && rows_rejected * 2 > rows_read {
        return Err(Error::TooManyRejectedRows {
            path: path.to_path_buf(),
            rejected: rows_rejected,
            total: rows_read,
        });
    }

    records.sort_by_key(|r| r.timestamp_us);

    let last_ts = records.last().map(|r| r.timestamp_us).unwrap_or(0);
    let end_secs = (last_ts / 1_000_000 + 1).max(1) as u32;
    let flight_end = midnight() + chrono::Duration::seconds(end_secs as i64);

    Ok((
        FlightLog {
            session_id: session_id.to_string(),
            records,
            flight_start: midnight(),
            flight_end,
            annotation: None,
        },
        ParseReport {
            rows_read,
            rows_rejected,
        },
    ))
}

fn io_from_csv(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{:?}", other)),
        ),
    }
}

/// Parse an annotation CSV. Empty attack fields mark a benign session.
pub fn parse_annotations(path: &Path) -> Result<Vec<SessionAnnotation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let header = reader
        .headers()
        .map_err(|e| io_from_csv(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != ANNOTATION_HEADER {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: ANNOTATION_HEADER.to_string(),
            found: header,
        });
    }

    let mut out = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let row = row.map_err(|e| io_from_csv(path, e))?;
        if row.len() != 6 {
            return Err(Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 6 fields, found {}", row.len()),
            });
        }
        let session_id = row[0].trim().to_string();
        if session_id.is_empty() {
            return Err(Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: "empty session_id".to_string(),
            });
        }
        let flight_start = parse_clock(row[2].trim())?;
        let flight_end = parse_clock(row[5].trim())?;
        if flight_start >= flight_end {
            return Err(Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: format!(
                    "flight_start {} is not before flight_end {}",
                    row[2].trim(),
                    row[5].trim()
                ),
            });
        }

        let kind_field = row[1].trim();
        let start_field = row[3].trim();
        let end_field = row[4].trim();
        let attack = if kind_field.is_empty() && start_field.is_empty() && end_field.is_empty() {
            None
        } else {
            let attack_kind = AttackKind::parse(kind_field).ok_or_else(|| Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: format!("unknown attack_kind `{}`", kind_field),
            })?;
            let attack_start = parse_clock(start_field)?;
            let attack_end = parse_clock(end_field)?;
            Some(AttackAnnotation {
                attack_start,
                attack_end,
                attack_kind,
            })
        };

        let sa = SessionAnnotation {
            session_id,
            flight_start,
            flight_end,
            attack,
        };
        if let Some(a) = &sa.attack {
            validate_attack_interval(sa.flight_start, sa.flight_end, a)?;
        }
        out.push(sa);
    }
    Ok(out)
}

fn validate_attack_interval(
    flight_start: NaiveTime,
    flight_end: NaiveTime,
    ann: &AttackAnnotation,
) -> Result<()> {
    if ann.attack_start >= ann.attack_end {
        return Err(Error::BadInterval {
            reason: format!(
                "attack_start {} is not before attack_end {}",
                ann.attack_start.format("%H:%M:%S"),
                ann.attack_end.format("%H:%M:%S")
            ),
        });
    }
    if ann.attack_start < flight_start || ann.attack_end > flight_end {
        return Err(Error::BadInterval {
            reason: format!(
                "attack interval {}..{} outside flight interval {}..{}",
                ann.attack_start.format("%H:%M:%S"),
                ann.attack_end.format("%H:%M:%S"),
                flight_start.format("%H:%M:%S"),
                flight_end.format("%H:%M:%S")
            ),
        });
    }
    Ok(())
}

/// Attach ground-truth attack annotation to a log. Fails if the attack
/// interval is inconsistent or falls outside the flight interval.
pub fn annotate(log: FlightLog, ann: AttackAnnotation) -> Result<FlightLog> {
    validate_attack_interval(log.flight_start, log.flight_end, &ann)?;
    Ok(FlightLog {
        annotation: Some(ann),
        ..log
    })
}

/// Attach wall-clock bounds (and attack interval, if any) from an annotation
/// row to a parsed log.
pub fn apply_annotation(log: FlightLog, sa: &SessionAnnotation) -> Result<FlightLog> {
    let log = log.with_bounds(sa.flight_start, sa.flight_end)?;
    match &sa.attack {
        Some(a) => annotate(log, *a),
        None => Ok(log),
    }
}

/// Per-window ground-truth labels.
///
/// Window `w` spans `[w*window_ms, (w+1)*window_ms)` milliseconds from flight
/// start and is attack-labeled when that half-open span intersects the closed
/// attack interval.
pub fn label_windows(log: &FlightLog, window_ms: u32) -> Vec<(u64, Label)> {
    assert!(window_ms > 0, "window_ms must be positive");
    let win_us = window_ms as i64 * 1000;
    let n = log.window_count(window_ms);
    (0..n)
        .map(|w| {
            let start = w as i64 * win_us;
            (w, log.window_label(start, win_us))
        })
        .collect()
}

impl FlightLog {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    pub fn flight_start(&self) -> NaiveTime {
        self.flight_start
    }

    pub fn flight_end(&self) -> NaiveTime {
        self.flight_end
    }

    pub fn annotation(&self) -> Option<&AttackAnnotation> {
        self.annotation.as_ref()
    }

    /// Replace provisional bounds with real wall-clock bounds.
    pub fn with_bounds(self, flight_start: NaiveTime, flight_end: NaiveTime) -> Result<FlightLog> {
        if flight_start >= flight_end {
            return Err(Error::BadInterval {
                reason: format!(
                    "flight_start {} is not before flight_end {}",
                    flight_start.format("%H:%M:%S"),
                    flight_end.format("%H:%M:%S")
                ),
            });
        }
        if let Some(a) = &self.annotation {
            validate_attack_interval(flight_start, flight_end, a)?;
        }
        Ok(FlightLog {
            flight_start,
            flight_end,
            ..self
        })
    }

    /// Distinct feature names present in this log.
    pub fn feature_names(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.feature_name.as_str()).collect()
    }

    /// Session duration in microseconds: the wall-clock flight interval,
    /// extended if records run past the declared end.
    pub fn duration_us(&self) -> i64 {
        let wall = micros_between(self.flight_start, self.flight_end);
        let last = self.records.last().map(|r| r.timestamp_us + 1).unwrap_or(0);
        wall.max(last)
    }

    /// Number of `window_ms` windows covering the session.
    pub fn window_count(&self, window_ms: u32) -> u64 {
        let win_us = window_ms as i64 * 1000;
        let d = self.duration_us();
        ((d + win_us - 1) / win_us) as u64
    }

    /// Attack interval as microsecond offsets from flight start (closed).
    pub fn attack_interval_us(&self) -> Option<(i64, i64)> {
        self.annotation.as_ref().map(|a| {
            (
                micros_between(self.flight_start, a.attack_start),
                micros_between(self.flight_start, a.attack_end),
            )
        })
    }

    /// Label of a single instant, microseconds from flight start.
    pub fn label_at_us(&self, t_us: i64) -> Label {
        match self.attack_interval_us() {
            Some((a, b)) if a <= t_us && t_us <= b => Label::Attack,
            _ => Label::Benign,
        }
    }

    /// Label of a half-open window `[start, start+len)` in microseconds.
    pub fn window_label(&self, start_us: i64, len_us: i64) -> Label {
        match self.attack_interval_us() {
            Some((a, b)) if start_us <= b && a < start_us + len_us => Label::Attack,
            _ => Label::Benign,
        }
    }

    /// Build a log directly from records; used by tests and synthetic data.
    pub fn from_records(
        session_id: &str,
        mut records: Vec<RawRecord>,
        flight_start: NaiveTime,
        flight_end: NaiveTime,
    ) -> Result<FlightLog> {
        if flight_start >= flight_end {
            return Err(Error::BadInterval {
                reason: "flight_start is not before flight_end".to_string(),
            });
        }
        records.sort_by_key(|r| r.timestamp_us);
        Ok(FlightLog {
            session_id: session_id.to_string(),
            records,
            flight_start,
            flight_end,
            annotation: None,
        })
    }
}
