use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetTable, IndexRange};
use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Too-short ranges are a configuration error.
    Train,
    /// Too-short ranges yield no windows and a warning.
    Eval,
}

/// Enumerates window start rows inside `range`.
///
/// A window starting at `s` has input rows `[s, s + lookback)` and target rows
/// `[s + lookback, s + lookback + horizon)`; both lie inside `range`.
pub fn windowize(
    range: IndexRange,
    lookback: usize,
    horizon: usize,
    stride: usize,
    mode: WindowMode,
) -> Result<Vec<usize>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return config_err("lookback, horizon and stride must be positive");
    }
    let span = lookback + horizon;
    if range.len() < span {
        let msg = format!(
            "range [{}, {}) has {} rows, windows need {span}",
            range.start,
            range.end,
            range.len()
        );
        return match mode {
            WindowMode::Train => config_err(msg),
            WindowMode::Eval => {
                log::warn!("{msg}; no windows produced");
                Ok(Vec::new())
            }
        };
    }
    Ok((range.start..=range.end - span).step_by(stride).collect())
}

/// The chronologically first `ceil(ratio * len)` windows.
pub fn few_shot_subset(windows: &[usize], ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return config_err(format!("few-shot ratio must lie in (0, 1], got {ratio}"));
    }
    let keep = ((ratio * windows.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok(windows[..keep.min(windows.len())].to_vec())
}

/// A minibatch of forecasting instances, row-major `(batch, time, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub window_start_indices: Vec<usize>,
    pub lookback: usize,
    pub horizon: usize,
    pub n_channels: usize,
}

impl WindowBatch {
    pub fn from_table(table: &DatasetTable, starts: &[usize], lookback: usize, horizon: usize) -> Self {
        let n = table.n_channels();
        let mut inputs = Vec::with_capacity(starts.len() * lookback * n);
        let mut targets = Vec::with_capacity(starts.len() * horizon * n);
        for &s in starts {
            inputs.extend_from_slice(&table.values[s * n..(s + lookback) * n]);
            targets.extend_from_slice(&table.values[(s + lookback) * n..(s + lookback + horizon) * n]);
        }
        WindowBatch {
            inputs,
            targets,
            window_start_indices: starts.to_vec(),
            lookback,
            horizon,
            n_channels: n,
        }
    }

    pub fn len(&self) -> usize {
        self.window_start_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_start_indices.is_empty()
    }

    /// The look-back series of one channel of one instance.
    pub fn input_channel(&self, b: usize, c: usize) -> Vec<f64> {
        let base = b * self.lookback * self.n_channels;
        (0..self.lookback)
            .map(|t| self.inputs[base + t * self.n_channels + c])
            .collect()
    }

    pub fn target_channel(&self, b: usize, c: usize) -> Vec<f64> {
        let base = b * self.horizon * self.n_channels;
        (0..self.horizon)
            .map(|t| self.targets[base + t * self.n_channels + c])
            .collect()
    }

    /// Sub-batch of the given instance positions.
    pub fn select(&self, positions: &[usize]) -> WindowBatch {
        let li = self.lookback * self.n_channels;
        let ht = self.horizon * self.n_channels;
        let mut out = WindowBatch {
            inputs: Vec::with_capacity(positions.len() * li),
            targets: Vec::with_capacity(positions.len() * ht),
            window_start_indices: Vec::with_capacity(positions.len()),
            lookback: self.lookback,
            horizon: self.horizon,
            n_channels: self.n_channels,
        };
        for &p in positions {
            out.inputs.extend_from_slice(&self.inputs[p * li..(p + 1) * li]);
            out.targets.extend_from_slice(&self.targets[p * ht..(p + 1) * ht]);
            out.window_start_indices.push(self.window_start_indices[p]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrder {
    Sequential,
    /// Shuffled with a generator seeded from `(seed, epoch)`.
    Shuffled { seed: u64, epoch: u64 },
}

/// Windows over one split of a standardized table.
#[derive(Debug, Clone)]
pub struct WindowSet<'a> {
    pub table: &'a DatasetTable,
    pub starts: Vec<usize>,
    pub lookback: usize,
    pub horizon: usize,
}

impl<'a> WindowSet<'a> {
    pub fn new(table: &'a DatasetTable, starts: Vec<usize>, lookback: usize, horizon: usize) -> Self {
        WindowSet {
            table,
            starts,
            lookback,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn batches(&self, batch_size: usize, order: BatchOrder) -> Vec<WindowBatch> {
        let mut starts = self.starts.clone();
        if let BatchOrder::Shuffled { seed, epoch } = order {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            starts.shuffle(&mut rng);
        }
        starts
            .chunks(batch_size.max(1))
            .map(|chunk| WindowBatch::from_table(self.table, chunk, self.lookback, self.horizon))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ramp_table(rows: usize, channels: usize) -> DatasetTable {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let ts = (0..rows).map(|i| start + chrono::Duration::hours(i as i64)).collect();
        let values = (0..rows * channels).map(|i| i as f64).collect();
        let names = (0..channels).map(|c| format!("c{c}")).collect();
        DatasetTable::new("ramp", ts, values, names).unwrap()
    }

    #[test]
    fn window_counts() {
        let r = IndexRange::new(0, 10);
        assert_eq!(windowize(r, 4, 2, 1, WindowMode::Train).unwrap().len(), 5);
        let r = IndexRange::new(3, 9);
        assert_eq!(windowize(r, 4, 2, 1, WindowMode::Train).unwrap(), vec![3]);
        let r = IndexRange::new(0, 5);
        assert!(windowize(r, 4, 2, 1, WindowMode::Train).is_err());
        assert!(windowize(r, 4, 2, 1, WindowMode::Eval).unwrap().is_empty());
        let r = IndexRange::new(0, 10);
        assert_eq!(windowize(r, 4, 2, 2, WindowMode::Train).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn few_shot_takes_prefix() {
        let w: Vec<usize> = (0..1000).collect();
        assert_eq!(few_shot_subset(&w, 0.10).unwrap(), (0..100).collect::<Vec<_>>());
        assert_eq!(few_shot_subset(&w, 1.0).unwrap(), w);
        assert_eq!(few_shot_subset(&w[..7], 0.1).unwrap(), vec![0]);
        assert!(few_shot_subset(&w, 0.0).is_err());
        assert!(few_shot_subset(&w, 1.5).is_err());
    }

    #[test]
    fn window_reconstructs_table_slice() {
        let table = ramp_table(30, 3);
        let starts = windowize(IndexRange::new(0, 30), 8, 4, 1, WindowMode::Train).unwrap();
        let batch = WindowBatch::from_table(&table, &starts, 8, 4);
        for (b, &s) in starts.iter().enumerate() {
            for c in 0..3 {
                let mut joined = batch.input_channel(b, c);
                joined.extend(batch.target_channel(b, c));
                assert_eq!(joined, table.channel_slice(c, s, s + 12));
            }
        }
    }

    #[test]
    fn shuffled_batches_are_seeded() {
        let table = ramp_table(60, 1);
        let set = WindowSet::new(&table, (0..40).collect(), 4, 2);
        let a = set.batches(8, BatchOrder::Shuffled { seed: 7, epoch: 1 });
        let b = set.batches(8, BatchOrder::Shuffled { seed: 7, epoch: 1 });
        let c = set.batches(8, BatchOrder::Shuffled { seed: 7, epoch: 2 });
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut seen: Vec<usize> = a.iter().flat_map(|x| x.window_start_indices.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
    }
}
