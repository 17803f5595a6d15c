//! Reproduction runners: each writes CSV tables into an output directory and
//! renders SVG plots from those tables.
//!
//! CSV schemas:
//!
//! | file                 | columns                                        |
//! |----------------------|------------------------------------------------|
//! | `sweep.csv`          | context, heads, seed, region_count, final_mse  |
//! | `sine_pred_h<N>.csv` | x, y_true, y_pred                              |
//! | `sine_loss_h<N>.csv` | step, mse                                      |
//! | `sine_err_h<N>.csv`  | x, abs_err                                     |
//! | `sine_regions.csv`   | method, n_hidden, heads, context, seed, count  |
//! | `partition2d.csv`    | method, n_hidden, heads, context, seed, count  |
//! | `bound.csv`          | n, d, regions                                  |
//! | `id.csv`             | layer, id, epsilon, row_policy                 |
//! | `id_change.csv`      | layer, relative_change                         |
//!
//! Empty cells in `sweep.csv` mark points whose training diverged.

mod figures;
mod sweep;
pub mod svg;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

pub use figures::{
    bound_records, plot_bound, plot_id, plot_sine, run_fit_sine, run_id_trace, run_partition2d, run_regions_bound,
    BoundConfig, BoundRecord, ErrorRecord, IdChangeRecord, IdTraceConfig, LossRecord, Partition2dConfig,
    PartitionSummary, PredictionRecord, SineConfig, SineSummary,
};
pub use sweep::{median, median_region_count, plot_sweep, run_sweep, SweepConfig, SweepOutcome, SweepPoint, SweepRecord};

/// Writes `rows` as a CSV file with a header row.
pub fn write_csv<R: Serialize>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            SweepRecord {
                context: 10,
                heads: 1,
                seed: 0,
                region_count: Some(12),
                final_mse: Some(0.5),
            },
            SweepRecord {
                context: 100,
                heads: 10,
                seed: 2,
                region_count: None,
                final_mse: None,
            },
        ];
        let path = dir.path().join("nested/sweep.csv");
        write_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "context,heads,seed,region_count,final_mse\n10,1,0,12,0.5\n100,10,2,,\n"
        );
        assert_eq!(read_csv::<SweepRecord>(&path).unwrap(), rows);
    }
}
