//! Deform-and-learn checkpoints.
//!
//! Layout under the output directory:
//! `round_k/{theta_anno.json, regressor.json, regressor_history.csv, record.json}`
//! and a cumulative `history.csv`. `record.json` is written last and marks the
//! round as complete.

use std::path::{Path, PathBuf};

use deflearn_core::learn::{RoundRecord, TrainState};

use crate::error::{Error, Result};
use crate::formats::{read_regressor, read_theta, regressor_rows, write_csv, RoundRow};
use crate::json;

pub fn round_dir(out: &Path, round: usize) -> PathBuf {
    out.join(format!("round_{round}"))
}

/// Persist the latest round of `state` and refresh `history.csv`.
pub fn save_round(out: &Path, state: &TrainState) -> Result<()> {
    let record = state.history.last().ok_or_else(|| Error::Usage("no completed round to save".into()))?;
    let dir = round_dir(out, state.round);
    json::write(&dir.join("theta_anno.json"), &state.theta_anno)?;
    json::write(&dir.join("regressor.json"), &state.regressor)?;
    write_csv(&dir.join("regressor_history.csv"), &regressor_rows(&record.regressor))?;
    json::write(&dir.join("record.json"), record)?;
    let rows: Vec<RoundRow> = state.history.iter().map(RoundRow::from).collect();
    write_csv(&out.join("history.csv"), &rows)
}

/// Number of consecutive complete rounds found under `out`.
pub fn completed_rounds(out: &Path) -> usize {
    (1..).take_while(|&k| round_dir(out, k).join("record.json").is_file()).count()
}

/// State after the last complete round, or `None` when nothing was saved.
pub fn load_latest(out: &Path) -> Result<Option<TrainState>> {
    let k = completed_rounds(out);
    if k == 0 {
        return Ok(None);
    }
    let dir = round_dir(out, k);
    let history = (1..=k)
        .map(|i| json::read::<RoundRecord>(&round_dir(out, i).join("record.json")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(TrainState {
        round: k,
        theta_anno: read_theta(&dir.join("theta_anno.json"))?,
        regressor: read_regressor(&dir.join("regressor.json"))?,
        history,
    }))
}
