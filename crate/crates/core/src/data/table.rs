use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y/%m/%d %H:%M:%S",
    "%Y/%m/%d %H:%M",
];

/// A complete, regularly sampled multivariate series.
///
/// Values are stored row-major: `values[t * n_channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub name: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
    pub channel_names: Vec<String>,
}

impl DatasetTable {
    /// Builds a table from in-memory columns, checking the same invariants as
    /// the CSV loader.
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<NaiveDateTime>,
        values: Vec<f64>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let table = DatasetTable {
            name: name.into(),
            timestamps,
            values,
            channel_names,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn value(&self, t: usize, channel: usize) -> f64 {
        self.values[t * self.n_channels() + channel]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.n_channels();
        &self.values[t * n..(t + 1) * n]
    }

    /// Copies one channel over `[start, end)`.
    pub fn channel_slice(&self, channel: usize, start: usize, end: usize) -> Vec<f64> {
        (start..end).map(|t| self.value(t, channel)).collect()
    }

    /// Writes the table in the format [`load_dataset`] reads back.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e.into()))?;
        let mut header = vec!["date".to_string()];
        header.extend(self.channel_names.iter().cloned());
        let io = |e: csv::Error| Error::file(path, e.into());
        w.write_record(&header).map_err(io)?;
        for t in 0..self.len() {
            let mut rec = vec![self.timestamps[t].format("%Y-%m-%d %H:%M:%S").to_string()];
            rec.extend(self.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::file(path, e))
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_channels();
        if n == 0 {
            return Err(Error::Data("table has no value columns".into()));
        }
        if self.values.len() != self.timestamps.len() * n {
            return Err(Error::Shape(format!(
                "{} values for {} rows x {} channels",
                self.values.len(),
                self.timestamps.len(),
                n
            )));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, channel {}",
                pos / n,
                pos % n
            )));
        }
        if self.timestamps.len() >= 2 {
            let step = self.timestamps[1] - self.timestamps[0];
            if step <= chrono::Duration::zero() {
                return Err(Error::Data("timestamps must be strictly increasing".into()));
            }
            for (i, pair) in self.timestamps.windows(2).enumerate() {
                if pair[1] - pair[0] != step {
                    return Err(Error::Data(format!(
                        "irregular sampling between rows {} and {}",
                        i,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    for fmt in TIMESTAMP_FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(ts);
        }
    }
    if let Ok(ts) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(ts.naive_utc());
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Loads a benchmark CSV: a header row, a timestamp column first, numeric
/// channels after it. Row indices in errors count data rows from 0.
pub fn load_dataset(path: impl AsRef<Path>, expected_channels: Option<usize>) -> Result<DatasetTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    read_table(name, file, expected_channels)
}

pub(crate) fn read_table<R: std::io::Read>(
    name: String,
    reader: R,
    expected_channels: Option<usize>,
) -> Result<DatasetTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: format!("unreadable header: {e}"),
        })?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            row: 0,
            message: "expected a timestamp column and at least one value column".into(),
        });
    }
    let channel_names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let n = channel_names.len();
    if let Some(expected) = expected_channels {
        if expected != n {
            return Err(Error::Config(format!(
                "expected {expected} channels, file has {n}"
            )));
        }
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != n + 1 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            row,
            message: format!("unparseable timestamp {:?}", &record[0]),
        })?;
        timestamps.push(ts);
        for (c, cell) in record.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::Data(format!(
                    "missing value at row {row}, column {:?}",
                    channel_names[c]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric cell {cell:?} in column {:?}", channel_names[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {row}, column {:?}",
                    channel_names[c]
                )));
            }
            values.push(v);
        }
    }
    DatasetTable::new(name, timestamps, values, channel_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<DatasetTable> {
        read_table("t".into(), text.as_bytes(), None)
    }

    #[test]
    fn four_rows_two_channels() {
        let t = read(
            "date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,3,4\n\
             2016-07-01 02:00:00,5,6\n2016-07-01 03:00:00,7,8\n",
        )
        .unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.n_channels(), 2);
        assert_eq!(t.value(2, 1), 6.0);
        assert_eq!(t.channel_slice(0, 1, 3), vec![3.0, 5.0]);
    }

    #[test]
    fn blank_cell_is_a_data_error() {
        let err = read("date,a,b\n2016-07-01 00:00:00,1,\n").unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn nan_cell_is_a_data_error() {
        let err = read("date,a\n2016-07-01 00:00:00,NaN\n").unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_its_index() {
        let err = read("date,a\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,x\n").unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn channel_count_mismatch_is_a_config_error() {
        let err = read_table("t".into(), "date,a\n2016-07-01,1\n".as_bytes(), Some(7)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn irregular_sampling_rejected() {
        let err = read("date,a\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,1\n2016-07-01 03:00:00,1\n")
            .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn slash_dates_accepted() {
        let t = read("date,a\n1990/1/1 0:00,1\n1990/1/2 0:00,2\n").unwrap();
        assert_eq!(t.len(), 2);
    }
}
