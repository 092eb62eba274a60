use std::fs;
use std::io::Write;
use std::path::Path;

use bss_core::signal::{write_wav, BitDepth, MultichannelWaveform};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut writer = csv_writer(file);
    for row in rows {
        writer.serialize(row).map_err(|e| CliError::io(path.display(), e))?;
    }
    writer.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path.display(), e))
}

/// Float WAV so separated or simulated signals above full scale survive.
pub fn save_wav(path: &Path, w: &MultichannelWaveform) -> CliResult<()> {
    write_wav(path, w, BitDepth::Float32).map_err(|e| CliError::io(path.display(), e))
}

#[derive(Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub gamma: f64,
}

/// Row 0 is the objective before the first update.
pub fn trace_rows(initial: Option<f64>, trace: &[f64], gammas: &[f64]) -> Vec<TraceRow> {
    let first_gamma = gammas.first().copied().unwrap_or(0.0);
    initial
        .map(|objective| TraceRow { iteration: 0, objective, gamma: first_gamma })
        .into_iter()
        .chain(trace.iter().enumerate().map(|(t, &objective)| TraceRow {
            iteration: t + 1,
            objective,
            gamma: gammas.get(t).copied().unwrap_or(first_gamma),
        }))
        .collect()
}
