use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat};

use super::{ChannelRole, SeriesFrame};
use crate::config::KvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaRole {
    Target,
    Context,
    Ignore,
}

/// Column-name to role map, read from `channel.<NAME> = target|context|ignore`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelSchema {
    entries: Vec<(String, SchemaRole)>,
}

impl ChannelSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, role: SchemaRole) -> Self {
        self.entries.push((name.to_string(), role));
        self
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let mut schema = ChannelSchema::new();
        for (name, role) in cfg.with_prefix("channel") {
            let role = match role.to_ascii_lowercase().as_str() {
                "target" => SchemaRole::Target,
                "context" => SchemaRole::Context,
                "ignore" => SchemaRole::Ignore,
                other => return Err(Error::Config(format!(
                    "channel {name}: unknown role {other:?} (expected target, context or ignore)"
                ))),
            };
            schema.entries.push((name.to_string(), role));
        }
        if schema.entries.is_empty() {
            return Err(Error::Config("schema assigns no channels".into()));
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(&KvConfig::load(path)?)
    }

    pub fn role(&self, name: &str) -> Option<SchemaRole> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| *r)
    }

    pub fn to_config(&self) -> KvConfig {
        let mut cfg = KvConfig::new();
        for (name, role) in &self.entries {
            let role = match role {
                SchemaRole::Target => "target",
                SchemaRole::Context => "context",
                SchemaRole::Ignore => "ignore",
            };
            cfg.set(&format!("channel.{name}"), role);
        }
        cfg
    }
}

/// Epoch seconds (integer or fractional) or ISO-8601; naive datetimes are UTC.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.round() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Schema listing every channel of `frame` with its role.
pub fn schema_of(frame: &SeriesFrame) -> ChannelSchema {
    frame
        .names()
        .iter()
        .zip(frame.roles())
        .fold(ChannelSchema::new(), |s, (n, r)| {
            s.with(
                n,
                match r {
                    ChannelRole::Target => SchemaRole::Target,
                    ChannelRole::Context => SchemaRole::Context,
                },
            )
        })
}

/// Write `frame` as CSV with RFC 3339 timestamps; missing cells are empty.
pub fn write_csv<W: Write>(w: W, frame: &SeriesFrame) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string()];
    header.extend(frame.names().iter().cloned());
    out.write_record(&header)?;
    for t in 0..frame.len() {
        let ts = frame.timestamps()[t];
        let mut row = vec![DateTime::from_timestamp(ts, 0)
            .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
            .unwrap_or_else(|| ts.to_string())];
        row.extend(
            (0..frame.width()).map(|c| frame.get(t, c).map(|v| v.to_string()).unwrap_or_default()),
        );
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn ingest_csv(path: &Path, schema: &ChannelSchema) -> Result<SeriesFrame> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

/// Read a CSV whose first column is a timestamp and regularise it onto a
/// uniform grid at the modal row spacing. Absent grid points become
/// all-missing rows; empty or non-numeric cells are masked.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn ingest_reader<R: Read>(reader: R, schema: &ChannelSchema) -> Result<SeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Config(
            "CSV needs a timestamp column and at least one channel".into(),
        ));
    }

    let mut columns = Vec::new();
    let mut names = Vec::new();
    let mut roles = Vec::new();
    for (col, name) in headers.iter().enumerate().skip(1) {
        let name = name.trim();
        match schema.role(name) {
            Some(SchemaRole::Ignore) => {}
            Some(SchemaRole::Target) => {
                columns.push(col);
                names.push(name.to_string());
                roles.push(ChannelRole::Target);
            }
            Some(SchemaRole::Context) => {
                columns.push(col);
                names.push(name.to_string());
                roles.push(ChannelRole::Context);
            }
            None => {
                return Err(Error::Config(format!(
                    "column {name:?} has no role in the schema"
                )))
            }
        }
    }
    if !roles.contains(&ChannelRole::Target) {
        return Err(Error::NoTargets);
    }

    let mut raw_times: Vec<i64> = Vec::new();
    let mut raw_cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let ts_raw = record.get(0).unwrap_or("");
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::BadTimestamp {
            row,
            value: ts_raw.to_string(),
        })?;
        if let Some(&prev) = raw_times.last() {
            if ts <= prev {
                return Err(Error::NonMonotonic { row, timestamp: ts });
            }
        }
        raw_times.push(ts);
        raw_cells.push(
            columns
                .iter()
                .map(|&c| {
                    record
                        .get(c)
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .and_then(|s| s.parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                })
                .collect(),
        );
    }
    if raw_times.is_empty() {
        return Err(Error::Config("CSV has no data rows".into()));
    }

    let period = modal_spacing(&raw_times).unwrap_or(1);
    let t0 = raw_times[0];
    let last = *raw_times.last().unwrap();
    let rows = ((last - t0) as f64 / period as f64).round() as usize + 1;
    let width = names.len();
    let mut cells = vec![None; rows * width];
    let mut filled = vec![false; rows];
    for (ts, row_cells) in raw_times.iter().zip(raw_cells) {
        let idx = ((ts - t0) as f64 / period as f64).round() as usize;
        if filled[idx] {
            log::warn!("timestamp {ts} snaps onto an occupied grid row; dropped");
            continue;
        }
        filled[idx] = true;
        cells[idx * width..(idx + 1) * width].copy_from_slice(&row_cells);
    }
    let timestamps = (0..rows as i64).map(|i| t0 + i * period).collect();
    SeriesFrame::new(timestamps, names, roles, cells, period)
}

/// Most frequent positive spacing; ties go to the smaller spacing.
fn modal_spacing(times: &[i64]) -> Option<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for pair in times.windows(2) {
        *counts.entry(pair[1] - pair[0]).or_default() += 1;
    }
    let mut best: Option<(i64, usize)> = None;
    for (spacing, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((spacing, count));
        }
    }
    best.map(|(s, _)| s)
}

#[cfg(test)]
mod tests {

    #[test]
    fn write_then_ingest_round_trips() {
        let frame = SeriesFrame::new(
            vec![1_700_000_000, 1_700_000_060, 1_700_000_120],
            vec!["hr".into(), "steps".into()],
            vec![ChannelRole::Target, ChannelRole::Context],
            vec![Some(61.25), Some(0.1), None, Some(3.0), Some(1e-7), None],
            60,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &frame).unwrap();
        let back = ingest_reader(buf.as_slice(), &schema_of(&frame)).unwrap();
        assert_eq!(back, frame);
    }
    use super::*;

    fn hr_schema() -> ChannelSchema {
        ChannelSchema::new()
            .with("HR", SchemaRole::Target)
            .with("CO2", SchemaRole::Context)
    }

    #[test]
    fn empty_cell_sets_mask() {
        let csv = "timestamp,HR,CO2\n0,70,400\n60,,401\n120,72,402\n";
        let frame = ingest_reader(csv.as_bytes(), &hr_schema()).unwrap();
        assert_eq!(frame.len(), 3);
        assert!(frame.is_missing(1, 0));
        assert!(!frame.is_missing(1, 1));
        assert_eq!(frame.get(2, 0), Some(72.0));
    }

    #[test]
    fn inserts_missing_grid_rows() {
        let csv = "timestamp,HR,CO2\n0,70,400\n60,71,401\n180,72,402\n";
        let frame = ingest_reader(csv.as_bytes(), &hr_schema()).unwrap();
        assert_eq!(frame.timestamps(), &[0, 60, 120, 180]);
        assert!(frame.is_missing(2, 0) && frame.is_missing(2, 1));
        assert_eq!(frame.sample_period(), 60);
    }

    #[test]
    fn non_monotonic_reports_row() {
        let csv = "timestamp,HR,CO2\n0,70,400\n60,71,401\n60,72,402\n";
        match ingest_reader(csv.as_bytes(), &hr_schema()) {
            Err(Error::NonMonotonic { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_targets_rejected() {
        let schema = ChannelSchema::new()
            .with("HR", SchemaRole::Ignore)
            .with("CO2", SchemaRole::Context);
        let csv = "timestamp,HR,CO2\n0,70,400\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &schema),
            Err(Error::NoTargets)
        ));
    }

    #[test]
    fn iso_timestamps_and_quoted_fields() {
        let csv =
            "timestamp,HR,CO2\n\"2024-03-01T10:00:00Z\",70,\"400\"\n2024-03-01T10:01:00,n/a,401\n";
        let frame = ingest_reader(csv.as_bytes(), &hr_schema()).unwrap();
        assert_eq!(frame.timestamps()[1] - frame.timestamps()[0], 60);
        assert!(frame.is_missing(1, 0));
        assert_eq!(frame.get(0, 1), Some(400.0));
    }

    #[test]
    fn schema_from_config() {
        let cfg =
            KvConfig::parse("channel.HR = target\nchannel.CO2 = context\nchannel.Loc = ignore")
                .unwrap();
        let schema = ChannelSchema::from_config(&cfg).unwrap();
        assert_eq!(schema.role("Loc"), Some(SchemaRole::Ignore));
        assert!(
            ChannelSchema::from_config(&KvConfig::parse("channel.HR = maybe").unwrap()).is_err()
        );
    }
}
