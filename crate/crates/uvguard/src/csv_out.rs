//! CSV outputs. Every file has a header row; column sets are fixed.
//!
//! | file | columns |
//! |------|---------|
//! | `sweep.csv` | voltage_mv, power_w, detected_rate, actual_rate, agreement |
//! | `sweep_breakdown.csv` | voltage_mv, abft_rate, dmr_rate, silent_rate |
//! | `power_curve.csv` | voltage_mv, power_w, energy_abft_off_j, energy_abft_on_j |
//! | `governor_log.csv` | step, voltage_mv, accepted, retries, energy_j |
//! | `verdicts.csv` | layer_id, kind, pass, discrepancy, scale |
//! | `bench.csv` | topology, base_ops, abft_ops, dmr_ops, abft_overhead, dmr_overhead |

use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use uvguard_core::faultsim::OperatingPoint;
use uvguard_core::governor::{GovernorStep, SweepRecord};
use uvguard_core::guard::Verdict;
use uvguard_core::Calibration;

use crate::commands::OpRow;

pub const SCHEMA_HELP: &str = "\
CSV outputs (all with a header row):
  sweep.csv            voltage_mv,power_w,detected_rate,actual_rate,agreement
  sweep_breakdown.csv  voltage_mv,abft_rate,dmr_rate,silent_rate
  power_curve.csv      voltage_mv,power_w,energy_abft_off_j,energy_abft_on_j
  governor_log.csv     step,voltage_mv,accepted,retries,energy_j
  verdicts.csv         layer_id,kind,pass,discrepancy,scale
  bench.csv            topology,base_ops,abft_ops,dmr_ops,abft_overhead,dmr_overhead";

pub const SWEEP_HEADER: &str = "voltage_mv,power_w,detected_rate,actual_rate,agreement";
pub const BREAKDOWN_HEADER: &str = "voltage_mv,abft_rate,dmr_rate,silent_rate";
pub const POWER_CURVE_HEADER: &str = "voltage_mv,power_w,energy_abft_off_j,energy_abft_on_j";
pub const GOVERNOR_LOG_HEADER: &str = "step,voltage_mv,accepted,retries,energy_j";
pub const VERDICTS_HEADER: &str = "layer_id,kind,pass,discrepancy,scale";
pub const BENCH_HEADER: &str = "topology,base_ops,abft_ops,dmr_ops,abft_overhead,dmr_overhead";

// The header is written up front so that a file with no rows still has one.
fn write_rows<R: Serialize>(path: &Path, header: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    voltage_mv: u32,
    power_w: f64,
    detected_rate: f64,
    actual_rate: f64,
    agreement: f64,
}

#[derive(Serialize)]
struct BreakdownRow {
    voltage_mv: u32,
    abft_rate: f64,
    dmr_rate: f64,
    silent_rate: f64,
}

pub fn write_sweep(path: &Path, records: &[SweepRecord]) -> Result<()> {
    write_rows(
        path,
        SWEEP_HEADER,
        records.iter().map(|r| SweepRow {
            voltage_mv: r.voltage_mv,
            power_w: r.power_w,
            detected_rate: r.detected_rate,
            actual_rate: r.actual_rate,
            agreement: r.agreement,
        }),
    )
}

pub fn write_sweep_breakdown(path: &Path, records: &[SweepRecord]) -> Result<()> {
    write_rows(
        path,
        BREAKDOWN_HEADER,
        records.iter().map(|r| BreakdownRow {
            voltage_mv: r.voltage_mv,
            abft_rate: r.abft_rate,
            dmr_rate: r.dmr_rate,
            silent_rate: r.silent_rate,
        }),
    )
}

#[derive(Serialize)]
struct PowerRow {
    voltage_mv: u32,
    power_w: f64,
    energy_abft_off_j: f64,
    energy_abft_on_j: f64,
}

/// One row per voltage from `hi` down to `lo` inclusive.
pub fn write_power_curve(path: &Path, calib: &Calibration, freq: u32, hi: u32, lo: u32, step: u32) -> Result<()> {
    let mut rows = Vec::new();
    let mut v = hi;
    while v >= lo {
        let op = OperatingPoint::new(v, freq)?;
        rows.push(PowerRow {
            voltage_mv: v,
            power_w: calib.power.power(op),
            energy_abft_off_j: calib.power.energy_per_inference(op, false)?,
            energy_abft_on_j: calib.power.energy_per_inference(op, true)?,
        });
        if v < lo + step {
            break;
        }
        v -= step;
    }
    write_rows(path, POWER_CURVE_HEADER, rows)
}

pub fn write_governor_log(path: &Path, log: &[GovernorStep]) -> Result<()> {
    write_rows(path, GOVERNOR_LOG_HEADER, log)
}

#[derive(Serialize)]
struct VerdictRow {
    layer_id: u32,
    kind: &'static str,
    pass: bool,
    discrepancy: f64,
    scale: f64,
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    write_rows(
        path,
        VERDICTS_HEADER,
        verdicts.iter().map(|v| VerdictRow {
            layer_id: v.layer(),
            kind: v.kind().as_str(),
            pass: v.pass(),
            discrepancy: v.discrepancy(),
            scale: v.scale(),
        }),
    )
}

#[derive(Serialize)]
struct OpCountRow<'a> {
    topology: &'a str,
    base_ops: u64,
    abft_ops: u64,
    dmr_ops: u64,
    abft_overhead: f64,
    dmr_overhead: f64,
}

pub fn write_op_counts(path: &Path, rows: &[OpRow]) -> Result<()> {
    write_rows(
        path,
        BENCH_HEADER,
        rows.iter().map(|r| OpCountRow {
            topology: &r.topology,
            base_ops: r.ops.base,
            abft_ops: r.ops.abft,
            dmr_ops: r.ops.dmr,
            abft_overhead: r.ops.abft_overhead(),
            dmr_overhead: r.ops.dmr_overhead(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn headers_match_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        write_governor_log(
            &p,
            &[GovernorStep {
                step: 0,
                voltage_mv: 960,
                accepted: true,
                retries: 0,
                energy_j: 25.5,
            }],
        )
        .unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "step,voltage_mv,accepted,retries,energy_j\n0,960,true,0,25.5\n");

        let p = dir.path().join("power.csv");
        write_power_curve(&p, &Calibration::default(), 1780, 960, 950, 5).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "voltage_mv,power_w,energy_abft_off_j,energy_abft_on_j");
        assert!(lines.next().unwrap().starts_with("960,142"));
        assert_eq!(text.lines().count(), 4);

        let p = dir.path().join("sweep.csv");
        write_sweep(&p, &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn help_lists_every_header() {
        for h in [
            SWEEP_HEADER,
            BREAKDOWN_HEADER,
            POWER_CURVE_HEADER,
            GOVERNOR_LOG_HEADER,
            VERDICTS_HEADER,
            BENCH_HEADER,
        ] {
            assert!(SCHEMA_HELP.contains(h), "{h}");
        }
    }
}
