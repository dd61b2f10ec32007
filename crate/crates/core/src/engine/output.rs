//! Result files: per-AP throughput CSV, JSON summary and event traces.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::campaign::{CampaignResult, Summary};
use super::drop::TraceRecord;
use crate::error::Result;
use crate::phy::Direction;

pub const THROUGHPUT_CSV: &str = "throughput.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Columns: config, drop, ap, direction, throughput_mbps. Rows are ordered by
/// config, drop, AP and direction, and numbers use a fixed format, so the
/// file is byte-identical across runs of the same inputs.
pub fn write_throughput_csv<W: Write>(results: &[CampaignResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "drop", "ap", "direction", "throughput_mbps"])
        .map_err(csv_err)?;
    for r in results {
        for d in &r.drops {
            for a in &d.aps {
                for dir in [Direction::Downlink, Direction::Uplink] {
                    w.write_record([
                        r.config.label.as_str(),
                        &d.drop.to_string(),
                        &a.ap.to_string(),
                        dir.label(),
                        &format!("{:.6}", a.mbps(dir)),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::SimError {
    crate::error::SimError::Io(std::io::Error::other(e))
}

pub fn write_summary<W: Write>(summary: &Summary, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary).map_err(|e| std::io::Error::other(e))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| std::io::Error::other(e))?;
        writeln!(out)?;
    }
    Ok(())
}

/// Writes the CSV and summary into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, results: &[CampaignResult]) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let summary = Summary::new(results);
    write_throughput_csv(results, fs::File::create(dir.join(THROUGHPUT_CSV))?)?;
    write_summary(&summary, fs::File::create(dir.join(SUMMARY_JSON))?)?;
    Ok(summary)
}
