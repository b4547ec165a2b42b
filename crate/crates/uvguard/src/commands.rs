//! Subcommand bodies. Each returns a summary; the binary prints it and picks
//! the exit code.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use uvguard_core::abft::precompute_weight_checksums;
use uvguard_core::cost::{op_count, OpCount};
use uvguard_core::exec::Parallel;
use uvguard_core::governor::{self, is_actual_error, voltage_descent, Descent, Savings};
use uvguard_core::guard::{checked_forward, CheckConfig};
use uvguard_core::layers::{forward, lenet_topology, vgg16_topology, VggScale};
use uvguard_core::{AbftConfig, ExecContext, ModelGraph, Scalar, Seed, Topology};

use crate::config::RunFile;
use crate::csv_out;
use crate::model_file;
use crate::source::{ModelSource, VggWidth};
use crate::suites::{self, SuiteResult};
use crate::testset::{golden_cached, TestSet, TEST_SET_SIZE};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSource,
    pub vgg_width: VggWidth,
    pub seed: u64,
    pub freq: Option<u32>,
    pub calib: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSource::Lenet,
            vgg_width: VggWidth::Small,
            seed: 1,
            freq: None,
            calib: None,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Calibration and governor settings with `--freq` applied. An untouched
    /// f64 checksum tolerance is swapped for the f32 one at single precision.
    pub fn run_file<T: Scalar>(&self) -> Result<RunFile> {
        let mut rf = RunFile::load_or_default(self.calib.as_deref())?;
        if let Some(f) = self.freq {
            rf.governor.frequency_mhz = f;
        }
        if T::BITS == 32 && rf.governor.abft == AbftConfig::F64 {
            rf.governor.abft = AbftConfig::F32;
        }
        let f = rf.governor.frequency_mhz;
        rf.calibration.faults.at(f).with_context(|| format!("no fault calibration for {f} MHz"))?;
        rf.calibration
            .power
            .latency_ms(f, true)
            .with_context(|| format!("no latency calibration for {f} MHz"))?;
        rf.validate()?;
        Ok(rf)
    }

    pub fn model<T: Scalar>(&self) -> Result<ModelGraph<T>> {
        self.model.build(Seed(self.seed).derive(1), self.vgg_width)
    }

    pub fn test_set<T: Scalar>(&self, model: &ModelGraph<T>) -> TestSet {
        TestSet::new(model.input_shape(), Seed(self.seed).derive(2))
    }

    pub fn fault_seed(&self) -> u64 {
        Seed(self.seed).derive(3).0
    }

    pub fn suite_seed(&self) -> Seed {
        Seed(self.seed).derive(4)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

// ---- verify ----

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Relative tolerance for the soundness and linearity suites.
    pub tau: f64,
    /// Run the model with forced flips instead of fault-free.
    pub force_faults: bool,
    pub soundness_cases: usize,
    pub detection_cases: usize,
    pub linearity_cases: usize,
    pub oracle_cases: usize,
    pub dmr_cases: usize,
    pub dmr_detection_cases: usize,
    pub model_cases: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tau: 1e-10,
            force_faults: false,
            soundness_cases: 10_000,
            detection_cases: 10_000,
            linearity_cases: 1000,
            oracle_cases: 100,
            dmr_cases: 10_000,
            dmr_detection_cases: 10_000,
            model_cases: TEST_SET_SIZE,
        }
    }
}

impl VerifyOptions {
    /// Soundness tolerance used when none is given: 1e-10 at f64, 1e-4 at
    /// f32.
    pub fn default_tau<T: Scalar>() -> f64 {
        if T::BITS == 32 {
            1e-4
        } else {
            1e-10
        }
    }

    /// A tenth of every suite, at least one case each.
    pub fn quick(self) -> Self {
        let q = |n: usize| (n / 10).max(1);
        VerifyOptions {
            soundness_cases: q(self.soundness_cases),
            detection_cases: q(self.detection_cases),
            linearity_cases: q(self.linearity_cases),
            oracle_cases: q(self.oracle_cases),
            dmr_cases: q(self.dmr_cases),
            dmr_detection_cases: q(self.dmr_detection_cases),
            model_cases: q(self.model_cases),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub verdicts_csv: PathBuf,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.suites.iter().all(SuiteResult::ok)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(f, "{s}")?;
        }
        write!(f, "{}", if self.ok() { "all suites passed" } else { "some suites failed" })
    }
}

pub fn verify<T: Scalar>(rc: &RunConfig, opts: &VerifyOptions) -> Result<VerifyReport> {
    let rf = rc.run_file::<T>()?;
    let checks = CheckConfig {
        abft: rf.governor.abft,
        dmr: rf.governor.dmr,
    };
    let seed = rc.suite_seed();
    let exec = Parallel;
    let mut suites = vec![
        suites::soundness::<T, _>(opts.soundness_cases, opts.tau, seed.derive(1), &exec)?,
        suites::detection::<T, _>(opts.detection_cases, &checks.abft, seed.derive(2), &exec)?,
        suites::linearity::<T, _>(opts.linearity_cases, opts.tau, seed.derive(3), &exec)?,
        suites::conv_oracle::<T, _>(opts.oracle_cases, seed.derive(4), &exec)?,
        suites::dmr_agreement::<T, _>(opts.dmr_cases, &checks.dmr, seed.derive(5), &exec)?,
        suites::dmr_detection::<T, _>(opts.dmr_detection_cases, &checks.dmr, seed.derive(7), &exec)?,
    ];
    let model = rc.model::<T>()?;
    let set = rc.test_set(&model);
    suites.push(if opts.force_faults {
        suites::end_to_end(&model, &set, opts.model_cases, &checks, seed.derive(6), &exec)?
    } else {
        suites::model_clean(&model, &set, opts.model_cases, &checks, &exec)?
    });

    let cks = precompute_weight_checksums(&model);
    let forced = if opts.force_faults {
        vec![suites::model_fault(&model, seed.derive(6), 0)?]
    } else {
        Vec::new()
    };
    let ctx = ExecContext::fault_free().with_forced(&forced);
    let pass = checked_forward(&model, &cks, &set.input(0), &checks, &ctx)?;
    let verdicts_csv = rc.out_dir()?.join("verdicts.csv");
    csv_out::write_verdicts(&verdicts_csv, &pass.verdicts)?;
    Ok(VerifyReport { suites, verdicts_csv })
}

// ---- sweep ----

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub frequency_mhz: u32,
    pub descent: Descent,
    /// Highest voltage with a failed checksum verdict.
    pub highest_abft_mv: Option<u32>,
    /// Highest voltage with a failed DMR verdict.
    pub highest_dmr_mv: Option<u32>,
    pub files: Vec<PathBuf>,
}

impl SweepSummary {
    /// DMR detections, if any, start strictly below checksum detections.
    pub fn linear_fails_first(&self) -> bool {
        match (self.highest_abft_mv, self.highest_dmr_mv) {
            (_, None) => true,
            (Some(a), Some(d)) => d < a,
            (None, Some(_)) => false,
        }
    }
}

fn mv(v: Option<u32>) -> String {
    v.map_or_else(|| "none".into(), |v| format!("{v} mV"))
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>8} {:>9} {:>9} {:>9}", "mV", "W", "detected", "actual", "agree")?;
        for r in &self.descent.records {
            writeln!(
                f,
                "{:>8} {:>8.2} {:>9.3} {:>9.3} {:>9.3}",
                r.voltage_mv, r.power_w, r.detected_rate, r.actual_rate, r.agreement
            )?;
        }
        writeln!(f, "frequency          {} MHz", self.frequency_mhz)?;
        writeln!(f, "PoFF               {}", mv(self.descent.poff_mv))?;
        writeln!(f, "crash              {}", mv(self.descent.crash_mv))?;
        writeln!(f, "first ABFT detect  {}", mv(self.highest_abft_mv))?;
        write!(f, "first DMR detect   {}", mv(self.highest_dmr_mv))
    }
}

pub fn sweep<T: Scalar>(rc: &RunConfig, n_inputs: usize) -> Result<SweepSummary> {
    ensure!(n_inputs >= 1, "need at least one input");
    let rf = rc.run_file::<T>()?;
    let model = rc.model::<T>()?;
    let cks = precompute_weight_checksums(&model);
    let set = rc.test_set(&model);
    let out = rc.out_dir()?;
    let inputs = set.inputs::<T>(n_inputs);
    let golden = golden_cached(&model, &set, n_inputs, out, &Parallel)?;
    let descent = voltage_descent(
        &model,
        &cks,
        &inputs,
        &golden,
        &rf.governor,
        &rf.calibration,
        rc.fault_seed(),
        &Parallel,
    )?;

    let files = vec![out.join("sweep.csv"), out.join("sweep_breakdown.csv"), out.join("power_curve.csv")];
    csv_out::write_sweep(&files[0], &descent.records)?;
    csv_out::write_sweep_breakdown(&files[1], &descent.records)?;
    let hi = rf.governor.start_voltage_mv;
    let lo = descent.records.last().map_or(hi, |r| r.voltage_mv);
    csv_out::write_power_curve(
        &files[2],
        &rf.calibration,
        rf.governor.frequency_mhz,
        hi,
        lo,
        rf.governor.step_mv,
    )?;
    Ok(SweepSummary {
        frequency_mhz: rf.governor.frequency_mhz,
        highest_abft_mv: descent.highest_with(|r| r.abft_rate),
        highest_dmr_mv: descent.highest_with(|r| r.dmr_rate),
        descent,
        files,
    })
}

// ---- govern ----

#[derive(Debug, Clone, PartialEq)]
pub struct GovernSummary {
    pub frequency_mhz: u32,
    pub inferences: usize,
    /// Most common starting voltage over the last half of the run.
    pub settled_mv: Option<u32>,
    pub final_mv: u32,
    pub floor_mv: Option<u32>,
    pub savings: Savings,
    pub retries: u64,
    pub rejected: usize,
    pub crashed: bool,
    /// Accepted outputs further than 1e-13 from golden.
    pub unsafe_accepted: usize,
    /// Accepted predictions that differ from the golden class.
    pub wrong_predictions: usize,
    pub log_csv: PathBuf,
}

impl fmt::Display for GovernSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frequency          {} MHz", self.frequency_mhz)?;
        writeln!(f, "inferences         {}", self.inferences)?;
        writeln!(f, "settled voltage    {}", mv(self.settled_mv))?;
        writeln!(f, "final voltage      {} mV", self.final_mv)?;
        writeln!(f, "highest failing    {}", mv(self.floor_mv))?;
        writeln!(f, "total energy       {:.3} J", self.savings.energy_j)?;
        writeln!(
            f,
            "nominal energy     {:.3} J (checks on), {:.3} J (checks off)",
            self.savings.baseline_checked_j, self.savings.baseline_unchecked_j
        )?;
        writeln!(
            f,
            "savings            {:.1}% vs nominal with checks, {:.1}% vs nominal without",
            100.0 * self.savings.vs_checked(),
            100.0 * self.savings.vs_unchecked()
        )?;
        writeln!(f, "retries            {}", self.retries)?;
        writeln!(f, "rejected           {}", self.rejected)?;
        writeln!(f, "unsafe accepted    {}", self.unsafe_accepted)?;
        write!(f, "crashed            {}", self.crashed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GovernOptions {
    pub inputs: usize,
    /// Overrides the configured start voltage.
    pub start_mv: Option<u32>,
}

pub fn govern<T: Scalar>(rc: &RunConfig, opts: &GovernOptions) -> Result<GovernSummary> {
    ensure!(opts.inputs >= 1, "need at least one input");
    let mut rf = rc.run_file::<T>()?;
    if let Some(v) = opts.start_mv {
        rf.governor.start_voltage_mv = v;
        rf.governor.validate()?;
    }
    let model = rc.model::<T>()?;
    let cks = precompute_weight_checksums(&model);
    let set = rc.test_set(&model);
    let out = rc.out_dir()?;
    let n = opts.inputs;
    let golden = golden_cached(&model, &set, n, out, &Parallel)?;
    let stream = (0..n).map(|i| set.input::<T>(i));
    let outcome = governor::govern(&model, &cks, stream, &rf.governor, &rf.calibration, rc.fault_seed())?;

    let log_csv = out.join("governor_log.csv");
    csv_out::write_governor_log(&log_csv, &outcome.log)?;

    let mut unsafe_accepted = 0;
    let mut wrong_predictions = 0;
    for (r, g) in outcome.reports.iter().zip(&golden) {
        if let Some(o) = &r.output {
            unsafe_accepted += is_actual_error(o, g) as usize;
            wrong_predictions += (r.prediction != Some(g.argmax())) as usize;
        }
    }
    Ok(GovernSummary {
        frequency_mhz: rf.governor.frequency_mhz,
        inferences: outcome.log.len(),
        settled_mv: outcome.settled_voltage_mv(outcome.log.len().div_ceil(2)),
        final_mv: outcome.final_voltage_mv,
        floor_mv: outcome.floor_mv,
        savings: outcome.savings(&rf.governor, &rf.calibration, 0)?,
        retries: outcome.total_retries(),
        rejected: outcome.reports.iter().filter(|r| !r.accepted && !r.crashed).count(),
        crashed: outcome.crashed,
        unsafe_accepted,
        wrong_predictions,
        log_csv,
    })
}

// ---- bench ----

#[derive(Debug, Clone, PartialEq)]
pub struct OpRow {
    pub topology: String,
    pub ops: OpCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub model: String,
    pub inputs: usize,
    pub checks_off_ms: f64,
    pub checks_on_ms: f64,
    /// Analytic counts for the chosen model, LeNet and full-width VGG-16.
    pub ops: Vec<OpRow>,
    /// Two unchecked runs gave identical predictions.
    pub repeatable: bool,
    pub csv: PathBuf,
}

impl BenchReport {
    pub fn wall_overhead(&self) -> f64 {
        self.checks_on_ms / self.checks_off_ms - 1.0
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {} on {} inputs, wall clock per inference:", self.model, self.inputs)?;
        writeln!(f, "  checks off  {:>10.3} ms", self.checks_off_ms)?;
        writeln!(f, "  checks on   {:>10.3} ms", self.checks_on_ms)?;
        writeln!(f, "  overhead    {:>10.1} %", 100.0 * self.wall_overhead())?;
        writeln!(f, "  repeatable  {}", self.repeatable)?;
        writeln!(f, "analytic operation counts:")?;
        writeln!(f, "  {:<16} {:>16} {:>8} {:>8}", "topology", "base ops", "abft %", "dmr %")?;
        for r in &self.ops {
            writeln!(
                f,
                "  {:<16} {:>16} {:>8.3} {:>8.3}",
                r.topology,
                r.ops.base,
                100.0 * r.ops.abft_overhead(),
                100.0 * r.ops.dmr_overhead()
            )?;
        }
        Ok(())
    }
}

pub fn bench<T: Scalar>(rc: &RunConfig, n_inputs: usize) -> Result<BenchReport> {
    ensure!(n_inputs >= 1, "need at least one input");
    let rf = rc.run_file::<T>()?;
    let checks = CheckConfig {
        abft: rf.governor.abft,
        dmr: rf.governor.dmr,
    };
    let model = rc.model::<T>()?;
    let cks = precompute_weight_checksums(&model);
    let set = rc.test_set(&model);
    let inputs = set.inputs::<T>(n_inputs);
    let ctx = ExecContext::fault_free();

    let unchecked = || -> Result<(f64, Vec<usize>)> {
        let t0 = Instant::now();
        let preds = inputs
            .iter()
            .map(|x| Ok(forward(&model, x, &ctx)?.argmax()))
            .collect::<Result<Vec<_>>>()?;
        Ok((t0.elapsed().as_secs_f64(), preds))
    };
    let (off_a, preds_a) = unchecked()?;
    let t0 = Instant::now();
    for x in &inputs {
        checked_forward(&model, &cks, x, &checks, &ctx)?;
    }
    let on = t0.elapsed().as_secs_f64();
    let (off_b, preds_b) = unchecked()?;
    let per = |s: f64| 1e3 * s / n_inputs as f64;

    let mut topologies: Vec<Topology> = vec![model.topology()];
    for t in [lenet_topology(), vgg16_topology(VggScale::STANDARD)] {
        if topologies.iter().all(|s| s.name != t.name) {
            topologies.push(t);
        }
    }
    let ops = topologies
        .into_iter()
        .map(|t| {
            Ok(OpRow {
                ops: op_count(&t)?,
                topology: t.name,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let csv = rc.out_dir()?.join("bench.csv");
    csv_out::write_op_counts(&csv, &ops)?;
    Ok(BenchReport {
        model: model.name().to_string(),
        inputs: n_inputs,
        checks_off_ms: per(off_a.min(off_b)),
        checks_on_ms: per(on),
        ops,
        repeatable: preds_a == preds_b,
        csv,
    })
}

// ---- export ----

/// Writes the selected model as `model.json` plus SHVT weights under
/// `<out>/<model name>/`.
pub fn export<T: Scalar>(rc: &RunConfig) -> Result<PathBuf> {
    let model = rc.model::<T>()?;
    let dir = rc.out_dir()?.join(model.name());
    model_file::save(&model, &dir)
}
