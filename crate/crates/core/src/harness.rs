//! Experiment driver: JSON configs, seeded trials, CSV and JSON outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code_spec::{CodeSpec, CouplingWindow, Dimensions};
use crate::decoder::{exp_pa_vamp_decode, scvamp_decode, vamp_decode, DecodeReport, DecoderConfig, PowerAllocation};
use crate::error::{Error, Result};
use crate::instance::{stream, trial_seed, Instance, STREAM_SE};
use crate::spectrum::{SpectralModel, SpectrumKind};
use crate::state_evolution::{
    bits_to_nats, code_spectra, finite_b_se, limit_se, prop1_constants, regime, smallest_sufficient_w, thresholds,
    verify_prop1, E2Sampler, FiniteSeState, LimitSeState, Prop1Constants, Prop1Report, Regime, Thresholds,
};

pub const CSV_SCHEMA: u32 = 1;
pub const CSV_HEADER: &str = "kind,trial,seed,iter,block,ser,mse,overall_ser,clips,ms";
/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "SCVAMP_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecoderSpec {
    Scvamp,
    /// Uncoupled VAMP on a single design; `l` overrides the section count.
    Vamp {
        #[serde(default)]
        l: Option<usize>,
    },
    /// Uncoupled VAMP with exponentially decaying section power.
    ExpPaVamp {
        #[serde(default)]
        l: Option<usize>,
        #[serde(default = "default_decay")]
        decay: f64,
    },
}

fn default_decay() -> f64 {
    1.0
}

impl DecoderSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DecoderSpec::Scvamp => "scvamp",
            DecoderSpec::Vamp { .. } => "vamp",
            DecoderSpec::ExpPaVamp { .. } => "exp_pa_vamp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialsConfig {
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeConfig {
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Iterations; defaults to the decoder's `k_max`.
    #[serde(default)]
    pub k: Option<usize>,
}

fn default_mc_samples() -> usize {
    100_000
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            mc_samples: default_mc_samples(),
            k: None,
        }
    }
}

/// Limiting spectrum `rho_0` for thresholds and the limit recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum SpectrumSpec {
    #[default]
    DeltaAtOne,
    /// Finite-aspect-ratio Marchenko–Pastur bulk (a diagnostic, not a limit).
    MarchenkoPastur {
        alpha: f64,
    },
    Atoms {
        atoms: Vec<(f64, f64)>,
    },
}

impl SpectrumSpec {
    pub fn model(&self) -> Result<SpectralModel> {
        match self {
            SpectrumSpec::DeltaAtOne => Ok(SpectralModel::delta_at_one(0.0)),
            SpectrumSpec::MarchenkoPastur { alpha } => SpectralModel::marchenko_pastur(*alpha),
            SpectrumSpec::Atoms { atoms } => SpectralModel::atoms(0.0, atoms.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_all_nats: Vec<f64>,
    pub gamma: Vec<usize>,
    /// Coupling widths; an empty list picks the smallest width meeting the
    /// sufficient condition for each `(rate, gamma)`.
    #[serde(default)]
    pub w: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    /// Rate for the limit recursion; defaults to the code rate converted to nats.
    #[serde(default)]
    pub r_all_nats: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Iterations at which the summary lists per-block SER.
    #[serde(default)]
    pub wave_iterations: Vec<usize>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            wave_iterations: Vec::new(),
        }
    }
}

/// A complete experiment. `code.seed` is the base seed for every trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub code: CodeSpec,
    pub decoder: DecoderConfig,
    #[serde(default = "default_decoders")]
    pub decoders: Vec<DecoderSpec>,
    pub trials: TrialsConfig,
    #[serde(default)]
    pub se: SeConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_decoders() -> Vec<DecoderSpec> {
    vec![DecoderSpec::Scvamp]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.code.validate()?;
        if self.trials.count < 1 {
            return Err(Error::Config("trials.count must be at least 1".into()));
        }
        if self.decoder.k_max < 1 {
            return Err(Error::Config("decoder.k_max must be at least 1".into()));
        }
        if self.decoders.is_empty() {
            return Err(Error::Config("decoders must not be empty".into()));
        }
        if self.se.mc_samples < 10_000 {
            return Err(Error::Config("se.mc_samples must be at least 10000".into()));
        }
        for d in &self.decoders {
            if let DecoderSpec::Vamp { l: Some(l) } | DecoderSpec::ExpPaVamp { l: Some(l), .. } = d {
                if *l == 0 {
                    return Err(Error::Config("decoder section count must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// The code an uncoupled decoder runs on.
    pub fn uncoupled_code(&self, l: Option<usize>) -> CodeSpec {
        CodeSpec {
            l: l.unwrap_or(self.code.l),
            gamma: 1,
            w: 1,
            ..self.code.clone()
        }
    }
}

/// Resolution order: explicit flag, then environment, then config.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => config.output.dir.clone(),
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub kind: String,
    pub trial: u64,
    pub seed: u64,
    pub iter: usize,
    /// Column block, or 0 for the overall row.
    pub block: usize,
    pub ser: Option<f64>,
    pub mse: f64,
    pub overall_ser: Option<f64>,
    pub clips: usize,
    pub ms: f64,
}

impl TrialRecord {
    fn csv_line(&self, out: &mut String) {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:e},{},{},{:.3}",
            self.kind,
            self.trial,
            self.seed,
            self.iter,
            self.block,
            opt(self.ser),
            self.mse,
            opt(self.overall_ser),
            self.clips,
            self.ms
        );
    }
}

/// Rows sorted by `(kind order, trial, iter, block)` with the schema preamble.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("# schema={CSV_SCHEMA}\n{CSV_HEADER}\n");
    for r in records {
        r.csv_line(&mut out);
    }
    out
}

/// Parses a CSV written by [`records_to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(&format!("# schema={CSV_SCHEMA}")) {
        return Err(Error::Config("missing or unsupported schema line".into()));
    }
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let bad = |line: &str| Error::Config(format!("malformed CSV row: {line}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(line));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(TrialRecord {
                kind: f[0].to_string(),
                trial: int(f[1])?,
                seed: int(f[2])?,
                iter: int(f[3])? as usize,
                block: int(f[4])? as usize,
                ser: opt(f[5])?,
                mse: num(f[6])?,
                overall_ser: opt(f[7])?,
                clips: int(f[8])? as usize,
                ms: num(f[9])?,
            })
        })
        .collect()
}

/// Flattens a decode report into CSV rows: the per-block rows and then the
/// overall row (`block = 0`) for every iteration.
pub fn report_records(kind: &str, trial: u64, seed: u64, report: &DecodeReport) -> Vec<TrialRecord> {
    let mut rows = Vec::new();
    for h in &report.history {
        let Some(m) = &h.metrics else { continue };
        rows.push(TrialRecord {
            kind: kind.into(),
            trial,
            seed,
            iter: h.k,
            block: 0,
            ser: Some(m.overall_ser),
            mse: m.overall_mse(),
            overall_ser: Some(m.overall_ser),
            clips: h.clips,
            ms: h.elapsed_ms,
        });
        for (c, (ser, mse)) in m.ser.iter().zip(&m.mse).enumerate() {
            rows.push(TrialRecord {
                kind: kind.into(),
                trial,
                seed,
                iter: h.k,
                block: c + 1,
                ser: Some(*ser),
                mse: *mse,
                overall_ser: Some(m.overall_ser),
                clips: h.clips,
                ms: h.elapsed_ms,
            });
        }
    }
    rows
}

/// Runs one decoder on one trial.
pub fn run_trial(config: &ExperimentConfig, decoder: &DecoderSpec, trial: u64) -> Result<DecodeReport> {
    let dc = &config.decoder;
    let snr = config.code.snr;
    let b = config.code.b;
    match decoder {
        DecoderSpec::Scvamp => {
            let inst = Instance::sample(&config.code, trial)?;
            scvamp_decode(&inst.y, &inst.ops, &inst.windows, snr, b, dc, Some(&inst.message))
        }
        DecoderSpec::Vamp { l } => {
            let spec = config.uncoupled_code(*l);
            let inst = Instance::sample(&spec, trial)?;
            vamp_decode(&inst.y, &inst.ops[0], snr, b, dc, Some(&inst.message))
        }
        DecoderSpec::ExpPaVamp { l, decay } => {
            let spec = config.uncoupled_code(*l);
            let pa = PowerAllocation::exponential(spec.l, inst_capacity_bits(snr), *decay);
            let inst = Instance::sample(&spec, trial)?;
            let x = inst.message.to_scaled_vector(&pa.amplitudes)?;
            let y = Instance::transmit(&x, &inst.ops, &inst.windows, &inst.channel, spec.seed, trial)?;
            exp_pa_vamp_decode(&y, &inst.ops[0], snr, b, &pa, dc, Some(&inst.message))
        }
    }
}

/// Per-decoder outcome of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecoderSummary {
    pub decoder: String,
    pub l: usize,
    pub trials: usize,
    pub failures: Vec<TrialFailure>,
    /// Median and 10%/90% quantiles of the overall SER per iteration;
    /// decodes that stopped early hold their last value.
    pub median_ser: Vec<f64>,
    pub q10_ser: Vec<f64>,
    pub q90_ser: Vec<f64>,
    pub final_ser: Vec<f64>,
    pub median_final_ser: f64,
    /// First iteration with overall SER below 1e-3, per trial.
    pub iterations_to_1e3: Vec<Option<usize>>,
    /// Mean per-block SER across trials at the configured wave iterations.
    pub wave: Vec<WaveSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveSnapshot {
    pub iter: usize,
    pub block_ser: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub name: String,
    pub code: CodeSpec,
    pub dimensions: Dimensions,
    pub k_max: usize,
    pub decoders: Vec<DecoderSummary>,
    /// `(decoder, median final SER)` in configuration order.
    pub comparison: Vec<(String, f64)>,
}

/// Output of [`simulate`] kept in memory.
#[derive(Debug)]
pub struct Simulation {
    pub records: Vec<TrialRecord>,
    /// `reports[d][t]` for decoder `d` and trial `t`.
    pub reports: Vec<Vec<Result<DecodeReport>>>,
    pub summary: SimulationSummary,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn overall_ser_curve(report: &DecodeReport, k_max: usize) -> Vec<f64> {
    let mut curve: Vec<f64> = report
        .history
        .iter()
        .filter_map(|h| h.metrics.as_ref().map(|m| m.overall_ser))
        .collect();
    let last = curve.last().copied().unwrap_or(f64::NAN);
    curve.resize(k_max, last);
    curve
}

fn summarize(config: &ExperimentConfig, decoder: &DecoderSpec, reports: &[Result<DecodeReport>]) -> DecoderSummary {
    let k_max = config.decoder.k_max;
    let mut failures = Vec::new();
    let mut curves = Vec::new();
    let mut ok = Vec::new();
    for (t, r) in reports.iter().enumerate() {
        match r {
            Ok(rep) => {
                curves.push(overall_ser_curve(rep, k_max));
                ok.push(rep);
            }
            Err(e) => failures.push(TrialFailure {
                trial: t as u64,
                error: e.to_string(),
            }),
        }
    }
    let column = |k: usize| {
        let mut v: Vec<f64> = curves.iter().map(|c| c[k]).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let median_ser = (0..k_max).map(|k| quantile(&column(k), 0.5)).collect();
    let q10_ser = (0..k_max).map(|k| quantile(&column(k), 0.1)).collect();
    let q90_ser = (0..k_max).map(|k| quantile(&column(k), 0.9)).collect();
    let final_ser: Vec<f64> = curves.iter().map(|c| c[k_max - 1]).collect();
    let mut sorted_final = final_ser.clone();
    sorted_final.sort_by(f64::total_cmp);
    let iterations_to_1e3 = ok
        .iter()
        .map(|rep| {
            rep.history
                .iter()
                .find(|h| h.metrics.as_ref().is_some_and(|m| m.overall_ser < 1e-3))
                .map(|h| h.k)
        })
        .collect();
    let wave = config
        .output
        .wave_iterations
        .iter()
        .filter(|&&k| k < k_max)
        .map(|&k| {
            let mut acc: Vec<f64> = Vec::new();
            for rep in &ok {
                let Some(h) = rep.history.get(k).or(rep.history.last()) else {
                    continue;
                };
                let Some(m) = &h.metrics else { continue };
                acc.resize(m.ser.len(), 0.0);
                for (a, s) in acc.iter_mut().zip(&m.ser) {
                    *a += s / ok.len() as f64;
                }
            }
            WaveSnapshot {
                iter: k,
                block_ser: acc,
            }
        })
        .collect();
    let l = match decoder {
        DecoderSpec::Scvamp => config.code.l,
        DecoderSpec::Vamp { l } | DecoderSpec::ExpPaVamp { l, .. } => l.unwrap_or(config.code.l),
    };
    DecoderSummary {
        decoder: decoder.name().into(),
        l,
        trials: reports.len(),
        failures,
        median_ser,
        q10_ser,
        q90_ser,
        median_final_ser: quantile(&sorted_final, 0.5),
        final_ser,
        iterations_to_1e3,
        wave,
    }
}

/// Runs every configured decoder on every trial.
pub fn simulate(config: &ExperimentConfig) -> Result<Simulation> {
    config.validate()?;
    let dims = crate::code_spec::derive_dimensions(&config.code)?;
    let trials = config.trials.count as u64;
    let base = config.code.seed;
    let mut reports = Vec::with_capacity(config.decoders.len());
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for decoder in &config.decoders {
        let per_trial: Vec<Result<DecodeReport>> = (0..trials)
            .into_par_iter()
            .map(|t| run_trial(config, decoder, t))
            .collect();
        for (t, r) in per_trial.iter().enumerate() {
            if let Ok(rep) = r {
                records.extend(report_records(
                    decoder.name(),
                    t as u64,
                    trial_seed(base, t as u64),
                    rep,
                ));
            }
        }
        summaries.push(summarize(config, decoder, &per_trial));
        reports.push(per_trial);
    }
    let comparison = summaries
        .iter()
        .map(|s| (s.decoder.clone(), s.median_final_ser))
        .collect();
    Ok(Simulation {
        records,
        reports,
        summary: SimulationSummary {
            name: config.name.clone(),
            code: config.code.clone(),
            dimensions: dims,
            k_max: config.decoder.k_max,
            decoders: summaries,
            comparison,
        },
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// `simulate` subcommand: `<name>_trials.csv` and `<name>_summary.json`.
pub fn run_simulate(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sim = simulate(config)?;
    let csv = out.join(format!("{}_trials.csv", config.name));
    let json = out.join(format!("{}_summary.json", config.name));
    write(&csv, &records_to_csv(&sim.records))?;
    write(&json, &to_json(&sim.summary)?)?;
    Ok(vec![csv, json])
}

/// Finite-`B` recursion for the configured code.
pub fn se_trace(config: &ExperimentConfig) -> Result<Vec<FiniteSeState>> {
    let dims = crate::code_spec::derive_dimensions(&config.code)?;
    let windows = CouplingWindow::new(config.code.gamma, config.code.w)?;
    let spectra = code_spectra(&config.code, &dims)?;
    let sampler = E2Sampler::new(
        config.code.b,
        config.se.mc_samples,
        &mut stream(config.code.seed, 0, STREAM_SE),
    )?;
    let k = config.se.k.unwrap_or(config.decoder.k_max);
    finite_b_se(&windows, &spectra, config.code.b, config.code.snr, k, &sampler)
}

pub fn se_records(config: &ExperimentConfig, trace: &[FiniteSeState]) -> Vec<TrialRecord> {
    let mut rows = Vec::new();
    for s in trace {
        let row = |block: usize, mse: f64| TrialRecord {
            kind: "se".into(),
            trial: 0,
            seed: config.code.seed,
            iter: s.k,
            block,
            ser: None,
            mse,
            overall_ser: None,
            clips: s.clips,
            ms: 0.0,
        };
        rows.push(row(0, s.mean_predicted_mse()));
        rows.extend(s.predicted_mse.iter().enumerate().map(|(c, &e)| row(c + 1, e)));
    }
    rows
}

/// `se` subcommand: `<name>_se.csv` (same schema as trials, `kind = se`).
pub fn run_se(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let trace = se_trace(config)?;
    let csv = out.join(format!("{}_se.csv", config.name));
    write(&csv, &records_to_csv(&se_records(config, &trace)))?;
    Ok(vec![csv])
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitSeOutput {
    pub gamma: usize,
    pub w: usize,
    pub theta: f64,
    pub r_all_nats: f64,
    pub thresholds: Thresholds,
    pub regime: Regime,
    pub decoded_at: Option<usize>,
    pub trace: Vec<LimitSeState>,
}

pub fn limit_se_output(config: &ExperimentConfig) -> Result<LimitSeOutput> {
    let rho0 = config.limit.spectrum.model()?;
    let snr = config.code.snr;
    let windows = CouplingWindow::new(config.code.gamma, config.code.w)?;
    let theta = windows.rows() as f64 / windows.gamma as f64;
    let r = config.limit.r_all_nats.unwrap_or(bits_to_nats(config.code.r_all));
    let th = thresholds(&rho0, snr)?;
    let sigma2 = 1.0 / snr;
    let f = |x: f64| crate::state_evolution::f_limit(x, &rho0, sigma2).unwrap_or(f64::NAN);
    let k = config.limit.k.unwrap_or(config.decoder.k_max);
    let trace = limit_se(&windows, r, f, k);
    if trace.iter().any(|s| s.tau.iter().any(|t| !t.is_finite())) {
        return Err(Error::Numeric("limit recursion produced a non-finite tau".into()));
    }
    Ok(LimitSeOutput {
        gamma: windows.gamma,
        w: windows.w,
        theta,
        r_all_nats: r,
        thresholds: th,
        regime: regime(theta, r, &th),
        decoded_at: trace.iter().position(LimitSeState::decoded),
        trace,
    })
}

/// `limit-se` subcommand: `<name>_limit_se.csv` with `mse = psi`, plus the
/// full trace as JSON.
pub fn run_limit_se(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let output = limit_se_output(config)?;
    let mut rows = Vec::new();
    for s in &output.trace {
        for (c, &p) in s.psi.iter().enumerate() {
            rows.push(TrialRecord {
                kind: "limit_se".into(),
                trial: 0,
                seed: config.code.seed,
                iter: s.k,
                block: c + 1,
                ser: None,
                mse: p as f64,
                overall_ser: None,
                clips: 0,
                ms: 0.0,
            });
        }
    }
    let csv = out.join(format!("{}_limit_se.csv", config.name));
    let json = out.join(format!("{}_limit_se.json", config.name));
    write(&csv, &records_to_csv(&rows))?;
    write(&json, &to_json(&output)?)?;
    Ok(vec![csv, json])
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub snr: f64,
    pub spectrum: SpectrumSpec,
    /// Set when the spectrum is a finite-aspect-ratio bulk rather than a limit.
    pub finite_alpha: bool,
    pub thresholds: Thresholds,
    pub theta: f64,
    pub r_all_nats: f64,
    pub regime: Regime,
    pub prop1: Option<Prop1Constants>,
}

pub fn threshold_report(config: &ExperimentConfig) -> Result<ThresholdReport> {
    let rho0 = config.limit.spectrum.model()?;
    let snr = config.code.snr;
    let th = thresholds(&rho0, snr)?;
    let gamma = config.code.gamma;
    let w = config.code.w;
    let theta = (gamma + w - 1) as f64 / gamma as f64;
    let r = config.limit.r_all_nats.unwrap_or(bits_to_nats(config.code.r_all));
    let reg = regime(theta, r, &th);
    let prop1 = match reg {
        Regime::Coupled => Some(prop1_constants(theta, r, &rho0, snr, gamma, w)?),
        _ => None,
    };
    Ok(ThresholdReport {
        snr,
        spectrum: config.limit.spectrum.clone(),
        finite_alpha: matches!(rho0.kind, SpectrumKind::MarchenkoPastur),
        thresholds: th,
        theta,
        r_all_nats: r,
        regime: reg,
        prop1,
    })
}

/// `thresholds` subcommand: `<name>_thresholds.json`.
pub fn run_thresholds(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let report = threshold_report(config)?;
    let json = out.join(format!("{}_thresholds.json", config.name));
    write(&json, &to_json(&report)?)?;
    Ok(vec![json])
}

#[derive(Clone, Debug, Serialize)]
pub struct Prop1Sweep {
    pub snr: f64,
    pub reports: Vec<Prop1Report>,
    pub all_passed: bool,
}

pub fn prop1_sweep(config: &ExperimentConfig) -> Result<Prop1Sweep> {
    let rho0 = config.limit.spectrum.model()?;
    let snr = config.code.snr;
    let grid = config.limit.grid.clone().unwrap_or(GridConfig {
        r_all_nats: vec![config.limit.r_all_nats.unwrap_or(bits_to_nats(config.code.r_all))],
        gamma: vec![config.code.gamma],
        w: vec![config.code.w],
    });
    let mut reports = Vec::new();
    for &r in &grid.r_all_nats {
        for &gamma in &grid.gamma {
            let widths = if grid.w.is_empty() {
                smallest_sufficient_w(gamma, r, &rho0, snr)?
                    .map(|w| vec![w])
                    .unwrap_or_else(|| vec![gamma.min(2)])
            } else {
                grid.w.iter().copied().filter(|&w| w <= gamma).collect()
            };
            for w in widths {
                reports.push(verify_prop1(gamma, w, r, &rho0, snr)?);
            }
        }
    }
    Ok(Prop1Sweep {
        snr,
        all_passed: reports.iter().all(|r| r.passed),
        reports,
    })
}

/// `verify-prop1` subcommand: `<name>_verify_prop1.json`.
pub fn run_verify_prop1(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sweep = prop1_sweep(config)?;
    let json = out.join(format!("{}_verify_prop1.json", config.name));
    write(&json, &to_json(&sweep)?)?;
    Ok(vec![json])
}

fn inst_capacity_bits(snr: f64) -> f64 {
    0.5 * (1.0 + snr).log2()
}
