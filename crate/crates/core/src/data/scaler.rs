use serde::{Deserialize, Serialize};

use super::{DatasetTable, SplitSpec};
use crate::error::{Error, Result};

/// Per-channel mean and (population) standard deviation of the train rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerStats {
    pub fn fit(table: &DatasetTable, split: &SplitSpec) -> Result<Self> {
        let rows = split.train;
        if rows.is_empty() {
            return Err(Error::Config("train range is empty".into()));
        }
        let n = table.n_channels();
        let count = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for t in rows.start..rows.end {
            for (m, v) in mean.iter_mut().zip(table.row(t)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n];
        for t in rows.start..rows.end {
            for ((s, v), m) in var.iter_mut().zip(table.row(t)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(n);
        for (c, s) in var.into_iter().enumerate() {
            let sd = (s / count).sqrt();
            if !(sd > 0.0) {
                return Err(Error::Data(format!(
                    "channel {:?} is constant over the train range",
                    table.channel_names[c]
                )));
            }
            std.push(sd);
        }
        Ok(ScalerStats { mean, std })
    }

    pub fn transform(&self, table: &DatasetTable) -> DatasetTable {
        let mut out = table.clone();
        self.map_values(&mut out.values, |v, m, s| (v - m) / s);
        out
    }

    pub fn inverse_transform(&self, table: &DatasetTable) -> DatasetTable {
        let mut out = table.clone();
        self.map_values(&mut out.values, |v, m, s| v * s + m);
        out
    }

    fn map_values(&self, values: &mut [f64], f: impl Fn(f64, f64, f64) -> f64) {
        let n = self.mean.len();
        for (i, v) in values.iter_mut().enumerate() {
            let c = i % n;
            *v = f(*v, self.mean[c], self.std[c]);
        }
    }
}

/// Fits the scaler on the train rows and standardizes the whole table with it.
pub fn fit_apply_scaler(table: &DatasetTable, split: &SplitSpec) -> Result<(DatasetTable, ScalerStats)> {
    let stats = ScalerStats::fit(table, split)?;
    Ok((stats.transform(table), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IndexRange;
    use chrono::NaiveDate;

    fn table(columns: &[Vec<f64>]) -> DatasetTable {
        let rows = columns[0].len();
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let ts = (0..rows).map(|i| start + chrono::Duration::hours(i as i64)).collect();
        let mut values = Vec::new();
        for t in 0..rows {
            for c in columns {
                values.push(c[t]);
            }
        }
        let names = (0..columns.len()).map(|c| format!("c{c}")).collect();
        DatasetTable::new("t", ts, values, names).unwrap()
    }

    fn all_train(rows: usize) -> SplitSpec {
        SplitSpec {
            train: IndexRange::new(0, rows),
            val: IndexRange::new(rows, rows),
            test: IndexRange::new(rows, rows),
        }
    }

    #[test]
    fn two_four_six() {
        let t = table(&[vec![2.0, 4.0, 6.0]]);
        let (z, stats) = fit_apply_scaler(&t, &all_train(3)).unwrap();
        // oracle: mean 4, population std sqrt(8/3)
        let sd = (8.0f64 / 3.0).sqrt();
        assert_eq!(stats.mean, vec![4.0]);
        for (got, raw) in z.values.iter().zip([2.0, 4.0, 6.0]) {
            assert!((got - (raw - 4.0) / sd).abs() < 1e-12);
        }
        assert!((z.values[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn standardized_input_is_fixed_point() {
        let t = table(&[vec![-1.224744871391589, 0.0, 1.224744871391589]]);
        let (z, _) = fit_apply_scaler(&t, &all_train(3)).unwrap();
        for (a, b) in z.values.iter().zip(&t.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_channel_rejected() {
        let t = table(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]);
        assert!(matches!(fit_apply_scaler(&t, &all_train(3)), Err(Error::Data(_))));
    }

    #[test]
    fn statistics_ignore_non_train_rows() {
        let t = table(&[vec![1.0, 3.0, 100.0, -50.0]]);
        let split = SplitSpec {
            train: IndexRange::new(0, 2),
            val: IndexRange::new(2, 3),
            test: IndexRange::new(3, 4),
        };
        let (z, stats) = fit_apply_scaler(&t, &split).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);
        assert_eq!(z.values, vec![-1.0, 1.0, 98.0, -52.0]);
    }

    #[test]
    fn round_trip() {
        let t = table(&[vec![0.3, 9.0, -4.5, 7.25], vec![1e3, 2e3, 5e2, 4e3]]);
        let (z, stats) = fit_apply_scaler(&t, &all_train(4)).unwrap();
        let back = stats.inverse_transform(&z);
        for (a, b) in back.values.iter().zip(&t.values) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0));
        }
    }
}
