use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

const ETT_HOURLY_BOUNDS: [usize; 4] = [0, 12 * 30 * 24, 16 * 30 * 24, 20 * 30 * 24];

/// Half-open `[start, end)` interval of table rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn new(start: usize, end: usize) -> Self {
        IndexRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same interval with its start moved `by` rows earlier (saturating
    /// at 0). Evaluation splits use this to borrow look-back context.
    pub fn extend_back(&self, by: usize) -> Self {
        IndexRange::new(self.start.saturating_sub(by), self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitConvention {
    /// 12/4/4 months of hourly data.
    EttHourly,
    /// 12/4/4 months at 15-minute resolution.
    EttMinutely,
    /// Floor-based 70% / 10% / 20%.
    #[serde(rename = "ratio_70_10_20")]
    Ratio701020,
}

impl SplitConvention {
    /// Picks the convention used by the public benchmarks for a dataset name.
    pub fn for_dataset(name: &str) -> Self {
        let lower = name.to_ascii_lowercase();
        if lower.starts_with("etth") {
            SplitConvention::EttHourly
        } else if lower.starts_with("ettm") {
            SplitConvention::EttMinutely
        } else {
            SplitConvention::Ratio701020
        }
    }
}

impl std::str::FromStr for SplitConvention {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ett_hourly" => Ok(SplitConvention::EttHourly),
            "ett_minutely" => Ok(SplitConvention::EttMinutely),
            "ratio_70_10_20" => Ok(SplitConvention::Ratio701020),
            other => config_err(format!("unknown split convention {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: IndexRange,
    pub val: IndexRange,
    pub test: IndexRange,
}

impl SplitSpec {
    pub fn from_bounds(bounds: [usize; 4]) -> Self {
        SplitSpec {
            train: IndexRange::new(bounds[0], bounds[1]),
            val: IndexRange::new(bounds[1], bounds[2]),
            test: IndexRange::new(bounds[2], bounds[3]),
        }
    }
}

/// Chronological train/val/test split of a table with `total_rows` rows.
pub fn make_splits(total_rows: usize, convention: SplitConvention) -> Result<SplitSpec> {
    let bounds = match convention {
        SplitConvention::EttHourly => ETT_HOURLY_BOUNDS,
        SplitConvention::EttMinutely => ETT_HOURLY_BOUNDS.map(|b| b * 4),
        SplitConvention::Ratio701020 => {
            let train = total_rows * 7 / 10;
            let test = total_rows * 2 / 10;
            let val = total_rows - train - test;
            [0, train, train + val, total_rows]
        }
    };
    if total_rows < bounds[3] {
        return config_err(format!(
            "{convention:?} split needs {} rows, table has {total_rows}",
            bounds[3]
        ));
    }
    if bounds[1] == 0 || bounds[2] == bounds[1] || bounds[3] == bounds[2] {
        return config_err(format!("table of {total_rows} rows is too short to split"));
    }
    Ok(SplitSpec::from_bounds(bounds))
}
