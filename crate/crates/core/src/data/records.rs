use std::fmt::Write as _;

use chrono::NaiveDateTime;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "timestamp,glucose,carbs,bolus,basal,extra";

const TIMESTAMP_FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"];

/// One CGM reading with the co-recorded treatment features.
/// `glucose` is `None` for an explicit gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GlucoseRecord {
    pub timestamp: NaiveDateTime,
    pub glucose: Option<f64>,
    pub carbs: f64,
    pub bolus: f64,
    pub basal: f64,
    /// GSR or ICR, depending on the source dataset.
    pub extra: f64,
}

impl GlucoseRecord {
    /// The four non-glucose features in column order.
    pub fn extras(&self) -> [f64; 4] {
        [self.carbs, self.bolus, self.basal, self.extra]
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_cell(cell: &str, name: &str, line: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse { line, msg: format!("{name} value {cell:?} is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("{name} value {cell:?} is not finite") });
    }
    Ok(Some(v))
}

/// Parses the `timestamp,glucose,carbs,bolus,basal,extra` CSV format.
///
/// Timestamps must be strictly increasing. Empty treatment cells become 0;
/// an empty glucose cell is kept as a gap. Line numbers in errors are 1-based
/// and count the header.
pub fn parse_records(csv: &[u8]) -> Result<Vec<GlucoseRecord>> {
    let text = std::str::from_utf8(csv).map_err(|e| Error::Parse { line: 0, msg: format!("not UTF-8: {e}") })?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, h)| h.trim().trim_start_matches('\u{feff}')).unwrap_or_default();
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns != CSV_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::Parse { line: 1, msg: format!("expected header {CSV_HEADER:?}, got {header:?}") });
    }

    let mut out: Vec<GlucoseRecord> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::Parse { line, msg: format!("expected 6 columns, found {}", cells.len()) });
        }
        let timestamp = parse_timestamp(cells[0].trim())
            .ok_or_else(|| Error::Parse { line, msg: format!("bad timestamp {:?}", cells[0].trim()) })?;
        let glucose = parse_cell(cells[1], "glucose", line)?;
        if let Some(g) = glucose {
            if !(g > 0.0 && g <= 600.0) {
                return Err(Error::Data { line, msg: format!("glucose {g} outside (0, 600] mg/dL") });
            }
        }
        let carbs = parse_cell(cells[2], "carbs", line)?.unwrap_or(0.0);
        let bolus = parse_cell(cells[3], "bolus", line)?.unwrap_or(0.0);
        let basal = parse_cell(cells[4], "basal", line)?.unwrap_or(0.0);
        let extra = parse_cell(cells[5], "extra", line)?.unwrap_or(0.0);
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::Data {
                    line,
                    msg: format!("timestamp {timestamp} does not follow {}", prev.timestamp),
                });
            }
        }
        out.push(GlucoseRecord { timestamp, glucose, carbs, bolus, basal, extra });
    }
    Ok(out)
}

fn fmt_num(out: &mut String, v: f64) {
    if v != 0.0 {
        let _ = write!(out, "{v}");
    } else {
        out.push('0');
    }
}

pub fn records_to_csv(records: &[GlucoseRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 40);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},", r.timestamp.format("%Y-%m-%dT%H:%M"));
        if let Some(g) = r.glucose {
            let _ = write!(out, "{g}");
        }
        for v in r.extras() {
            out.push(',');
            fmt_num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(rows: &[&str]) -> Vec<u8> {
        let mut s = String::from(CSV_HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.into_bytes()
    }

    #[test]
    fn single_row() {
        let r = parse_records(&csv(&["2020-01-01T00:00,120,0,0,0.8,0"])).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].glucose, Some(120.0));
        assert_eq!(r[0].basal, 0.8);
    }

    #[test]
    fn empty_cells() {
        let r = parse_records(&csv(&["2020-01-01T00:00,120,,1.5,,", "2020-01-01T00:05,,10,0,0,0"])).unwrap();
        assert_eq!(r[0].carbs, 0.0);
        assert_eq!(r[0].bolus, 1.5);
        assert_eq!(r[0].extra, 0.0);
        assert_eq!(r[1].glucose, None);
    }

    #[test]
    fn out_of_order_names_line() {
        let err = parse_records(&csv(&["2020-01-01T00:10,120,0,0,0,0", "2020-01-01T00:05,121,0,0,0,0"])).unwrap_err();
        match err {
            Error::Data { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(parse_records(&csv(&["2020-01-01T00:00,abc,0,0,0,0"])), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_records(&csv(&["2020-01-01T00:00,100,0,0"])), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_records(&csv(&["yesterday,100,0,0,0,0"])), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_records(b"time,glucose\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_records(&csv(&["2020-01-01T00:00,0,0,0,0,0"])), Err(Error::Data { line: 2, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let src = csv(&["2020-01-01T00:00,120,0,0,0.8,0", "2020-01-01T00:05,,45,2.5,0.8,0.1"]);
        let r = parse_records(&src).unwrap();
        let back = parse_records(records_to_csv(&r).as_bytes()).unwrap();
        assert_eq!(r, back);
    }
}
