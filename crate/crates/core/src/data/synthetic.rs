use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::DatasetTable;
use crate::error::{config_err, Result};

/// Hourly table starting 2021-01-01 whose channel `c` is
/// `sin(2 pi t / periods[c] + c)` plus Gaussian noise of std `noise`.
/// Handy for smoke tests and demos when no benchmark CSV is around.
pub fn sinusoid_table(rows: usize, periods: &[usize], noise: f64, seed: u64) -> Result<DatasetTable> {
    if periods.is_empty() || periods.contains(&0) {
        return config_err("periods must be non-empty and positive");
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return config_err(format!("noise std must be finite and >= 0, got {noise}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).expect("checked above");
    let start = NaiveDate::from_ymd_opt(2021, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    let timestamps = (0..rows).map(|i| start + Duration::hours(i as i64)).collect();
    let mut values = Vec::with_capacity(rows * periods.len());
    for t in 0..rows {
        for (c, &p) in periods.iter().enumerate() {
            let clean = (2.0 * std::f64::consts::PI * t as f64 / p as f64 + c as f64).sin();
            values.push(clean + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 });
        }
    }
    let names = (0..periods.len()).map(|c| format!("ch{c}")).collect();
    DatasetTable::new("synthetic", timestamps, values, names)
}
