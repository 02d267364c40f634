//! Multivariate series table and its CSV dialect.
//!
//! Dialect: comma separated, header row, UTF-8, `.` decimal point. Column 1
//! is a strictly increasing integer or ISO-8601 timestamp used only to
//! validate ordering. Empty cells and `NA`/`NaN`/`null` mark missing values.
//! The designated target column is always stored last.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

const MISSING_MARKERS: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

/// Column layout of the UCI Beijing PM2.5 hourly dataset.
pub const BEIJING_PM25_HEADER: [&str; 13] = [
    "No", "year", "month", "day", "hour", "pm2.5", "DEWP", "TEMP", "PRES", "cbwd", "Iws", "Is", "Ir",
];
pub const BEIJING_PM25_TARGET: &str = "pm2.5";
const BEIJING_CALENDAR: [&str; 4] = ["year", "month", "day", "hour"];
/// Combined wind direction codes, alphabetical.
const BEIJING_WIND_CODES: [&str; 4] = ["NE", "NW", "SE", "cv"];

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    index: Vec<String>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    /// Row position in the source, kept so gaps left by dropped rows stay visible.
    positions: Vec<usize>,
}

impl SeriesFrame {
    /// Builds a frame, moving `target` to the last column.
    pub fn new(index: Vec<String>, names: Vec<String>, columns: Vec<Vec<f64>>, target: &str) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != index.len()) {
            return Err(Error::Shape(format!(
                "column of length {} in a frame of {} rows",
                c.len(),
                index.len()
            )));
        }
        let t = names
            .iter()
            .position(|n| n == target)
            .ok_or_else(|| Error::MissingColumn(target.to_string()))?;
        let mut names = names;
        let mut columns = columns;
        let name = names.remove(t);
        let col = columns.remove(t);
        names.push(name);
        columns.push(col);
        let positions = (0..index.len()).collect();
        Ok(Self {
            index,
            names,
            columns,
            positions,
        })
    }

    /// Frame with an integer index `0..len`.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>, target: &str) -> Result<Self> {
        let len = columns.first().map_or(0, Vec::len);
        let index = (0..len).map(|i| i.to_string()).collect();
        Self::new(index, names, columns, target)
    }

    pub fn n_rows(&self) -> usize {
        self.index.len()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_name(&self) -> &str {
        self.names.last().map(String::as_str).unwrap_or("")
    }

    pub fn target_index(&self) -> usize {
        self.names.len().saturating_sub(1)
    }

    pub fn exogenous_names(&self) -> &[String] {
        &self.names[..self.target_index()]
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn target(&self) -> &[f64] {
        &self.columns[self.target_index()]
    }

    pub fn index(&self) -> &[String] {
        &self.index
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Drops every row containing a missing value. Returns the cleaned frame
    /// and the number of rows removed.
    pub fn drop_missing(&self) -> (SeriesFrame, usize) {
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&r| self.columns.iter().all(|c| c[r].is_finite()))
            .collect();
        let dropped = self.n_rows() - keep.len();
        let frame = SeriesFrame {
            index: keep.iter().map(|&r| self.index[r].clone()).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| keep.iter().map(|&r| c[r]).collect())
                .collect(),
            positions: keep.iter().map(|&r| self.positions[r]).collect(),
        };
        (frame, dropped)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, target: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, target, path)
    }

    /// Reads the generic dialect, or the Beijing PM2.5 layout when its header
    /// is recognised (calendar columns dropped, wind direction coded 0..3).
    pub fn from_csv_reader(reader: impl Read, target: &str, source: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header.len() < 2 {
            return Err(parse_err("need an index column and at least one variable".into()));
        }
        let beijing = header.iter().map(String::as_str).eq(BEIJING_PM25_HEADER);
        let keep: Vec<usize> = (1..header.len())
            .filter(|&k| !(beijing && BEIJING_CALENDAR.contains(&header[k].as_str())))
            .collect();
        let mut index = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); keep.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let row = line + 2;
            if rec.len() != header.len() {
                return Err(parse_err(format!(
                    "line {row}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                )));
            }
            index.push(rec[0].trim().to_string());
            for (slot, &k) in keep.iter().enumerate() {
                let cell = rec[k].trim();
                let value = if MISSING_MARKERS.contains(&cell) {
                    f64::NAN
                } else if beijing && header[k] == "cbwd" {
                    BEIJING_WIND_CODES
                        .iter()
                        .position(|&c| c == cell)
                        .map(|p| p as f64)
                        .ok_or_else(|| parse_err(format!("line {row}: unknown wind direction `{cell}`")))?
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        parse_err(format!("line {row}, column `{}`: `{cell}` is not a number", header[k]))
                    })?
                };
                columns[slot].push(value);
            }
        }
        validate_index(&index).map_err(parse_err)?;
        let names = keep.iter().map(|&k| header[k].clone()).collect();
        Self::new(index, names, columns, target)
    }

    pub fn write_csv(&self, mut out: impl Write, index_name: &str) -> std::io::Result<()> {
        write!(out, "{index_name}")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for r in 0..self.n_rows() {
            write!(out, "{}", self.index[r])?;
            for c in &self.columns {
                if c[r].is_finite() {
                    // `Display` for f64 prints the shortest string that round-trips.
                    write!(out, ",{}", c[r])?;
                } else {
                    write!(out, ",NA")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>, index_name: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_csv(&mut buf, index_name)
            .and_then(|_| buf.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn validate_index(index: &[String]) -> std::result::Result<(), String> {
    if let Ok(ints) = index.iter().map(|s| s.parse::<i64>()).collect::<std::result::Result<Vec<_>, _>>() {
        return match ints.windows(2).position(|w| w[1] <= w[0]) {
            Some(k) => Err(format!("index is not strictly increasing at data row {}", k + 2)),
            None => Ok(()),
        };
    }
    let mut prev: Option<NaiveDateTime> = None;
    for (k, s) in index.iter().enumerate() {
        let ts = parse_timestamp(s)
            .ok_or_else(|| format!("data row {}: `{s}` is neither an integer nor an ISO-8601 timestamp", k + 1))?;
        if prev.is_some_and(|p| ts <= p) {
            return Err(format!("index is not strictly increasing at data row {}", k + 1));
        }
        prev = Some(ts);
    }
    Ok(())
}
