//! Data pipeline: load (or synthesize) a table, split it chronologically,
//! standardize with train statistics and cut sliding windows.
//!
//!     cargo run --example windows [-- path/to/ETTh1.csv]

use dualcast::data::{
    fit_apply_scaler, few_shot_subset, load_dataset, make_splits, sinusoid_table, windowize, BatchOrder,
    SplitConvention, WindowMode, WindowSet,
};

fn main() -> dualcast::Result<()> {
    let table = match std::env::args().nth(1) {
        Some(path) => load_dataset(path, None)?,
        None => sinusoid_table(2000, &[24, 12, 168], 0.2, 0)?,
    };
    println!("{}: {} rows x {} channels {:?}", table.name, table.len(), table.n_channels(), table.channel_names);

    let split = make_splits(table.len(), SplitConvention::for_dataset(&table.name))?;
    println!("train {:?}  val {:?}  test {:?}", split.train, split.val, split.test);

    let (scaled, stats) = fit_apply_scaler(&table, &split)?;
    println!("channel means {:.3?}", stats.mean);
    println!("channel stds  {:.3?}", stats.std);

    let (lookback, horizon) = (336, 96);
    let train = windowize(split.train, lookback, horizon, 1, WindowMode::Train)?;
    // evaluation windows may look back into the previous split
    let test = windowize(split.test.extend_back(lookback), lookback, horizon, 1, WindowMode::Eval)?;
    let few = few_shot_subset(&train, 0.1)?;
    println!("{} train windows ({} in a 10% few-shot run), {} test windows", train.len(), few.len(), test.len());

    let set = WindowSet::new(&scaled, train, lookback, horizon);
    let batches = set.batches(32, BatchOrder::Shuffled { seed: 2021, epoch: 0 });
    let first = &batches[0];
    println!(
        "{} batches; the first holds starts {:?}.. with inputs (B, L, N) = ({}, {}, {})",
        batches.len(),
        &first.window_start_indices[..4],
        first.len(),
        first.lookback,
        first.n_channels
    );
    Ok(())
}
