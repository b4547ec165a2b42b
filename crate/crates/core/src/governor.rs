//! Closed-loop undervolting: checked inference with retries, the descent
//! controller, and the voltage-descent characterization sweep.

use alloc::vec::Vec;
use core::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::abft::{AbftConfig, WeightChecksums};
use crate::dmr::DmrConfig;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::faultsim::{
    Calibration, ExecContext, OperatingPoint, DEFAULT_FREQUENCY_MHZ, MAX_VOLTAGE_MV, MIN_VOLTAGE_MV, NOMINAL_VOLTAGE_MV,
};
use crate::guard::{checked_forward, CheckConfig, Verdict};
use crate::layers::{forward, ModelGraph};
use crate::rng::hash2;
use crate::scalar::Scalar;
use crate::tensor::{max_abs_diff, Tensor};

/// An output further than this from the golden output is an actual error.
pub const ACTUAL_ERROR_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GovernorConfig {
    pub frequency_mhz: u32,
    pub start_voltage_mv: u32,
    /// Reference point for the energy-savings baseline.
    pub nominal_voltage_mv: u32,
    pub step_mv: u32,
    pub retract_margin_mv: u32,
    pub max_retries: u32,
    /// Accepted inferences required before each down-step once an error has
    /// been seen.
    pub descent_window: u32,
    /// Window used before the first detection.
    pub initial_descent_window: u32,
    /// The controller never steps below this voltage.
    pub floor_voltage_mv: u32,
    pub abft: AbftConfig,
    pub dmr: DmrConfig,
}

impl Default for GovernorConfig {
    fn default() -> Self {
        GovernorConfig {
            frequency_mhz: DEFAULT_FREQUENCY_MHZ,
            start_voltage_mv: NOMINAL_VOLTAGE_MV,
            nominal_voltage_mv: NOMINAL_VOLTAGE_MV,
            step_mv: 5,
            retract_margin_mv: 10,
            max_retries: 3,
            descent_window: 20,
            initial_descent_window: 1,
            floor_voltage_mv: MIN_VOLTAGE_MV,
            abft: AbftConfig::F64,
            dmr: DmrConfig::default(),
        }
    }
}

impl GovernorConfig {
    /// Defaults with the checksum tolerance matched to `T`.
    pub fn for_scalar<T: Scalar>() -> Self {
        GovernorConfig {
            abft: AbftConfig::for_scalar::<T>(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_mv == 0 {
            return Err(Error::config("step must be positive"));
        }
        if self.retract_margin_mv < self.step_mv {
            return Err(Error::config("retract margin must be at least one step"));
        }
        if self.descent_window == 0 || self.initial_descent_window == 0 {
            return Err(Error::config("descent windows must be at least 1"));
        }
        for v in [self.start_voltage_mv, self.nominal_voltage_mv, self.floor_voltage_mv] {
            OperatingPoint::new(v, self.frequency_mhz)?;
        }
        self.abft.validate()?;
        self.dmr.validate()
    }

    pub fn start_point(&self) -> Result<OperatingPoint> {
        OperatingPoint::new(self.start_voltage_mv, self.frequency_mhz)
    }

    fn checks(&self) -> CheckConfig {
        CheckConfig {
            abft: self.abft,
            dmr: self.dmr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport<T = f64> {
    /// Golden-comparable class index; `None` unless accepted.
    pub prediction: Option<usize>,
    pub accepted: bool,
    pub crashed: bool,
    /// Passes re-run after a failed one.
    pub retries: u32,
    /// Operating point of the last pass.
    pub point: OperatingPoint,
    /// Verdicts of the last pass.
    pub verdicts: Vec<Verdict>,
    /// Energy over every pass, including rejected ones.
    pub energy_j: f64,
    /// Voltage of each pass that failed a check.
    pub failed_voltages: Vec<u32>,
    /// Output of the accepted pass.
    pub output: Option<Tensor<T>>,
}

/// Runs one input to acceptance: any failed verdict discards the pass and
/// restarts from layer 0 one step higher, up to `cfg.max_retries` times.
///
/// `key` identifies the inference in the fault model.
pub fn checked_inference<T: Scalar>(
    model: &ModelGraph<T>,
    cks: &WeightChecksums<T>,
    input: &Tensor<T>,
    op: OperatingPoint,
    cfg: &GovernorConfig,
    calib: &Calibration,
    key: u64,
) -> Result<InferenceReport<T>> {
    let checks = cfg.checks();
    let ceiling = cfg.start_voltage_mv.max(op.voltage_mv);
    let mut voltage = op.voltage_mv;
    let mut energy = 0.0;
    let mut failed = Vec::new();
    let mut last = Vec::new();
    for retry in 0..=cfg.max_retries {
        let point = op.with_voltage(voltage);
        let ctx = match ExecContext::new(&calib.faults, point, key, retry) {
            Ok(ctx) => ctx,
            Err(Error::SimulatedCrash { .. }) => {
                return Ok(InferenceReport {
                    prediction: None,
                    accepted: false,
                    crashed: true,
                    retries: retry,
                    point,
                    verdicts: last,
                    energy_j: energy,
                    failed_voltages: failed,
                    output: None,
                })
            }
            Err(e) => return Err(e),
        };
        energy += calib.power.energy_per_inference(point, true)?;
        let pass = checked_forward(model, cks, input, &checks, &ctx)?;
        if pass.pass() {
            return Ok(InferenceReport {
                prediction: Some(pass.output.argmax()),
                accepted: true,
                crashed: false,
                retries: retry,
                point,
                verdicts: pass.verdicts,
                energy_j: energy,
                failed_voltages: failed,
                output: Some(pass.output),
            });
        }
        failed.push(voltage);
        last = pass.verdicts;
        if retry < cfg.max_retries {
            voltage = (voltage + cfg.step_mv).min(ceiling);
        }
    }
    Ok(InferenceReport {
        prediction: None,
        accepted: false,
        crashed: false,
        retries: cfg.max_retries,
        point: op.with_voltage(voltage),
        verdicts: last,
        energy_j: energy,
        failed_voltages: failed,
        output: None,
    })
}

/// Fault-free reference outputs.
pub fn golden_outputs<T: Scalar, E: Executor>(
    model: &ModelGraph<T>,
    inputs: &[Tensor<T>],
    exec: &E,
) -> Result<Vec<Tensor<T>>> {
    exec.map(inputs.len(), |i| forward(model, &inputs[i], &ExecContext::fault_free()))
        .into_iter()
        .collect()
}

/// True when `output` is further than [`ACTUAL_ERROR_THRESHOLD`] from `golden`.
pub fn is_actual_error<T: Scalar>(output: &Tensor<T>, golden: &Tensor<T>) -> bool {
    match max_abs_diff(output, golden) {
        Ok(d) => !(d.to_f64() <= ACTUAL_ERROR_THRESHOLD),
        Err(_) => true,
    }
}

/// One voltage of a characterization sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub voltage_mv: u32,
    pub power_w: f64,
    /// Inferences with any failed verdict.
    pub detected_rate: f64,
    /// Inferences whose output is off from golden by more than 1e-13.
    pub actual_rate: f64,
    /// Inferences whose argmax matches golden.
    pub agreement: f64,
    /// Inferences with a failed checksum verdict.
    pub abft_rate: f64,
    /// Inferences with a failed DMR verdict.
    pub dmr_rate: f64,
    /// Inferences with an actual error and no failed verdict.
    pub silent_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    /// Highest voltage with any failed verdict.
    pub poff_mv: Option<u32>,
    /// First voltage that crashed.
    pub crash_mv: Option<u32>,
    pub records: Vec<SweepRecord>,
}

impl Descent {
    /// Highest voltage at which the given rate is non-zero.
    pub fn highest_with(&self, rate: impl Fn(&SweepRecord) -> f64) -> Option<u32> {
        self.records.iter().filter(|r| rate(r) > 0.0).map(|r| r.voltage_mv).max()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    detected: bool,
    abft: bool,
    dmr: bool,
    actual: bool,
    agree: bool,
}

/// Characterization: steps down from `cfg.start_voltage_mv` by `cfg.step_mv`,
/// running the whole test set once per voltage without retries, until the
/// simulator crashes or the lowest settable voltage is passed.
pub fn voltage_descent<T: Scalar, E: Executor>(
    model: &ModelGraph<T>,
    cks: &WeightChecksums<T>,
    inputs: &[Tensor<T>],
    golden: &[Tensor<T>],
    cfg: &GovernorConfig,
    calib: &Calibration,
    seed: u64,
    exec: &E,
) -> Result<Descent> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::config("test set is empty"));
    }
    if golden.len() != inputs.len() {
        return Err(Error::config("golden outputs do not match the test set"));
    }
    let checks = cfg.checks();
    let golden_class: Vec<usize> = golden.iter().map(|g| g.argmax()).collect();
    let mut records = Vec::new();
    let mut crash_mv = None;
    let mut voltage = cfg.start_voltage_mv;
    while voltage >= MIN_VOLTAGE_MV {
        let point = OperatingPoint::new(voltage, cfg.frequency_mhz)?;
        match ExecContext::new(&calib.faults, point, 0, 0) {
            Ok(_) => {}
            Err(Error::SimulatedCrash { .. }) => {
                crash_mv = Some(voltage);
                break;
            }
            Err(e) => return Err(e),
        }
        let tallies: Result<Vec<Tally>> = exec
            .map(inputs.len(), |i| {
                let ctx = ExecContext::new(&calib.faults, point, hash2(seed, i as u64), 0)?;
                let pass = checked_forward(model, cks, &inputs[i], &checks, &ctx)?;
                Ok(Tally {
                    detected: !pass.pass(),
                    abft: pass.abft_failed(),
                    dmr: pass.dmr_failed(),
                    actual: is_actual_error(&pass.output, &golden[i]),
                    agree: pass.output.argmax() == golden_class[i],
                })
            })
            .into_iter()
            .collect();
        let tallies = tallies?;
        let n = tallies.len() as f64;
        let rate = |f: fn(&Tally) -> bool| tallies.iter().filter(|t| f(t)).count() as f64 / n;
        records.push(SweepRecord {
            voltage_mv: voltage,
            power_w: calib.power.power(point),
            detected_rate: rate(|t| t.detected),
            actual_rate: rate(|t| t.actual),
            agreement: rate(|t| t.agree),
            abft_rate: rate(|t| t.abft),
            dmr_rate: rate(|t| t.dmr),
            silent_rate: rate(|t| t.actual && !t.detected),
        });
        if voltage < MIN_VOLTAGE_MV + cfg.step_mv {
            break;
        }
        voltage -= cfg.step_mv;
    }
    let descent = Descent {
        poff_mv: None,
        crash_mv,
        records,
    };
    let poff_mv = descent.highest_with(|r| r.detected_rate);
    if let (Some(p), Some(c)) = (poff_mv, crash_mv) {
        if p <= c {
            return Err(Error::PoffNotAboveCrash { poff_mv: p, crash_mv: c });
        }
    }
    Ok(Descent { poff_mv, ..descent })
}

/// One row of the governor log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernorStep {
    pub step: u64,
    /// Voltage the inference started at.
    pub voltage_mv: u32,
    pub accepted: bool,
    pub retries: u32,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GovernOutcome<T = f64> {
    pub reports: Vec<InferenceReport<T>>,
    pub log: Vec<GovernorStep>,
    /// Voltage the controller would use for the next input.
    pub final_voltage_mv: u32,
    /// Highest voltage that ever failed a check.
    pub floor_mv: Option<u32>,
    pub crashed: bool,
}

/// Energy relative to running every inference at the nominal voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Savings {
    pub energy_j: f64,
    /// Nominal voltage with checks enabled.
    pub baseline_checked_j: f64,
    /// Nominal voltage without checks.
    pub baseline_unchecked_j: f64,
}

impl Savings {
    pub fn vs_checked(&self) -> f64 {
        1.0 - self.energy_j / self.baseline_checked_j
    }

    pub fn vs_unchecked(&self) -> f64 {
        1.0 - self.energy_j / self.baseline_unchecked_j
    }
}

impl<T> GovernOutcome<T> {
    pub fn total_energy_j(&self) -> f64 {
        self.log.iter().map(|s| s.energy_j).sum()
    }

    pub fn total_retries(&self) -> u64 {
        self.log.iter().map(|s| s.retries as u64).sum()
    }

    /// Savings over the inferences from `skip` on.
    pub fn savings(&self, cfg: &GovernorConfig, calib: &Calibration, skip: usize) -> Result<Savings> {
        let steps = &self.log[skip.min(self.log.len())..];
        let nominal = OperatingPoint::new(cfg.nominal_voltage_mv, cfg.frequency_mhz)?;
        let n = steps.len() as f64;
        Ok(Savings {
            energy_j: steps.iter().map(|s| s.energy_j).sum(),
            baseline_checked_j: n * calib.power.energy_per_inference(nominal, true)?,
            baseline_unchecked_j: n * calib.power.energy_per_inference(nominal, false)?,
        })
    }

    /// Most common starting voltage over the last `tail` inferences.
    pub fn settled_voltage_mv(&self, tail: usize) -> Option<u32> {
        let steps = &self.log[self.log.len().saturating_sub(tail)..];
        let mut counts: Vec<(u32, usize)> = Vec::new();
        for s in steps {
            match counts.iter_mut().find(|(v, _)| *v == s.voltage_mv) {
                Some(c) => c.1 += 1,
                None => counts.push((s.voltage_mv, 1)),
            }
        }
        counts.into_iter().max_by_key(|&(v, c)| (c, v)).map(|(v, _)| v)
    }
}

/// The descent controller.
///
/// Starts at `cfg.start_voltage_mv`. Before the first detection it steps down
/// after every `initial_descent_window` accepted inferences, afterwards after
/// every `descent_window`. Any failed pass records its voltage as a floor the
/// controller will not step down to again and retracts to that voltage plus
/// the retract margin.
pub fn govern<T: Scalar, I>(
    model: &ModelGraph<T>,
    cks: &WeightChecksums<T>,
    inputs: I,
    cfg: &GovernorConfig,
    calib: &Calibration,
    seed: u64,
) -> Result<GovernOutcome<T>>
where
    I: IntoIterator,
    I::Item: Borrow<Tensor<T>>,
{
    cfg.validate()?;
    let ceiling = cfg.start_voltage_mv.max(cfg.nominal_voltage_mv).min(MAX_VOLTAGE_MV);
    let mut voltage = cfg.start_voltage_mv;
    let mut floor: Option<u32> = None;
    let mut streak = 0u32;
    let mut detected = false;
    let mut out = GovernOutcome {
        reports: Vec::new(),
        log: Vec::new(),
        final_voltage_mv: voltage,
        floor_mv: None,
        crashed: false,
    };
    for (step, input) in inputs.into_iter().enumerate() {
        let op = OperatingPoint::new(voltage, cfg.frequency_mhz)?;
        let report = checked_inference(model, cks, input.borrow(), op, cfg, calib, hash2(seed, step as u64))?;
        out.log.push(GovernorStep {
            step: step as u64,
            voltage_mv: voltage,
            accepted: report.accepted,
            retries: report.retries,
            energy_j: report.energy_j,
        });
        let crashed = report.crashed;
        let worst = report.failed_voltages.iter().copied().max();
        let accepted = report.accepted;
        out.reports.push(report);
        if crashed {
            out.crashed = true;
            break;
        }
        if let Some(vf) = worst {
            detected = true;
            floor = Some(floor.map_or(vf, |f| f.max(vf)));
            voltage = (vf + cfg.retract_margin_mv).min(ceiling).max(voltage);
            streak = 0;
        } else if accepted {
            streak += 1;
            let window = if detected {
                cfg.descent_window
            } else {
                cfg.initial_descent_window
            };
            if streak >= window {
                streak = 0;
                let next = voltage.saturating_sub(cfg.step_mv);
                let above_floor = floor.is_none_or(|f| next > f);
                if next >= cfg.floor_voltage_mv && above_floor {
                    voltage = next;
                }
            }
        }
    }
    out.final_voltage_mv = voltage;
    out.floor_mv = floor;
    Ok(out)
}
