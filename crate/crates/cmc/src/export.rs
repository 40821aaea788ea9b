//! CSV and JSON output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use cmc_core::kolmogorov::{StateDistributionPath, TransitionField};
use cmc_core::montecarlo::PathBundle;
use cmc_core::ProductStateSpace;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// `(0,1)`-style label of a flat state index.
pub fn state_label(space: &ProductStateSpace, x: usize) -> String {
    let parts: Vec<String> = space.multi_index(x).unwrap_or_default().iter().map(usize::to_string).collect();
    format!("({})", parts.join(","))
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// One row per grid pair and matrix entry: `s,t,from,to,probability`.
pub fn write_transition_field(path: &Path, field: &TransitionField, space: &ProductStateSpace) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["s", "t", "from", "to", "probability"])?;
    let grid = field.grid();
    for i in 0..grid.len() {
        for j in i..grid.len() {
            let m = field.get(i, j);
            for x in 0..field.dim() {
                for y in 0..field.dim() {
                    w.write_record([
                        grid[i].to_string(),
                        grid[j].to_string(),
                        state_label(space, x),
                        state_label(space, y),
                        m[(x, y)].to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_distribution(path: &Path, dist: &StateDistributionPath, space: &ProductStateSpace) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "state", "probability"])?;
    for (j, t) in dist.grid.iter().enumerate() {
        for (x, p) in dist.at_index(j).iter().enumerate() {
            w.write_record([t.to_string(), state_label(space, x), p.to_string()])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `path_id,time,state`, starting with the initial state at time 0.
pub fn write_paths(path: &Path, bundle: &PathBundle) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["path_id", "time", "state"])?;
    for (id, p) in bundle.paths.iter().enumerate() {
        w.write_record([id.to_string(), "0".into(), state_label(&bundle.space, p.initial)])?;
        for &(t, x) in &p.events {
            w.write_record([id.to_string(), t.to_string(), state_label(&bundle.space, x)])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = to_json(value)?;
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
