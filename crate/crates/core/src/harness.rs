//! Run orchestration: optimisations, warm-started sweeps, the damping
//! scenario, trajectory traces, replay and ingestion of measured events.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom_laser::{bin_events, write_records_csv, AtomLaserError, EventSet};
use crate::config::{ConfigError, RunConfig, Scenario};
use crate::cost::{robust_cost, CostError, CostReport};
use crate::experiment::{ExperimentError, SimulatedExperiment};
use crate::optimizer::{landscape_slice, run_optimization, OptimizerError};
use crate::ramp::RampKind;
use crate::runlog::{
    best_record, convergence_csv, read_log, LogWriter, RunLogRecord, BEST_FILE, CONVERGENCE_FILE,
    LOG_FILE, MANIFEST_FILE,
};
use crate::seed::derive_seed;

pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";
pub const DAMPING_FILE: &str = "damping.json";
pub const LANDSCAPE_FILE: &str = "landscape.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_PULSES_FILE: &str = "trace_pulses.csv";
pub const INGEST_FILE: &str = "ingest.json";
pub const INGEST_RECORDS_FILE: &str = "records.csv";
const STAGE_ERROR_FILE: &str = "error.txt";
const LANDSCAPE_GRID: usize = 21;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    AtomLaser(#[from] AtomLaserError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("replay diverged at evaluation {index} ({field})")]
    ReplayMismatch { index: usize, field: String },
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Experiment(_) => "experiment",
            HarnessError::Optimizer(_) => "optimizer",
            HarnessError::AtomLaser(_) => "atom-laser",
            HarnessError::Cost(_) => "cost",
            HarnessError::ReplayMismatch { .. } => "replay-mismatch",
            HarnessError::Invalid(_) => "invalid",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("value serialises to JSON");
    write_file(path, text + "\n")
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, HarnessError> {
    config
        .out_dir
        .clone()
        .ok_or_else(|| HarnessError::Invalid("no output directory given".into()))
}

/// Everything needed to rebuild and replay one optimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: RunConfig,
    pub kind: RampKind,
    pub duration: f64,
    pub initial_params: Vec<f64>,
    pub seed: u64,
}

impl Manifest {
    pub fn experiment(&self) -> Result<SimulatedExperiment, HarnessError> {
        Ok(self.template()?.warm_started(&self.initial_params)?)
    }

    /// The experiment with the template's default starting point.
    fn template(&self) -> Result<SimulatedExperiment, HarnessError> {
        let c = &self.config;
        let e = match c.scenario {
            Scenario::Transport => SimulatedExperiment::transport(
                c.calibration.clone(),
                c.simulation.clone(),
                c.weights.clone(),
                self.kind,
                self.duration,
            )?,
            Scenario::Damping => SimulatedExperiment::damping(
                c.calibration.clone(),
                c.simulation.clone(),
                c.weights.clone(),
                &c.damping,
            )?,
        };
        Ok(e)
    }
}

/// Outcome of one optimisation written to `dir`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub records: Vec<RunLogRecord>,
}

impl RunSummary {
    pub fn best(&self) -> Option<&RunLogRecord> {
        best_record(&self.records)
    }
}

fn stage_manifest(
    config: &RunConfig,
    kind: RampKind,
    duration: f64,
    warm: Option<&[f64]>,
) -> Result<Manifest, HarnessError> {
    let mut m = Manifest {
        config: config.clone(),
        kind,
        duration,
        initial_params: Vec::new(),
        seed: config.seed,
    };
    m.config.out_dir = None;
    let template = m.template()?;
    let initial = match warm {
        Some(p) => template.warm_started(p)?.template.params,
        None => template.template.params,
    };
    m.initial_params = initial;
    Ok(m)
}

/// Run one optimisation described by `manifest` into `dir`.
pub fn run_manifest(dir: &Path, manifest: &Manifest) -> Result<RunSummary, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(MANIFEST_FILE), manifest)?;
    let mut experiment = manifest.experiment()?;
    let problem = experiment.problem(manifest.seed);
    let log_path = dir.join(LOG_FILE);
    let mut log = LogWriter::create(&log_path).map_err(io_err(&log_path))?;
    let mut records = Vec::new();
    let start = Instant::now();
    let outcome = run_optimization(
        &problem,
        &manifest.config.optimizer,
        &mut experiment,
        &mut |obs| {
            let rec = RunLogRecord::from_observation(obs, start.elapsed().as_secs_f64());
            log.append(&rec)?;
            records.push(rec);
            Ok(())
        },
    )?;
    write_file(&dir.join(CONVERGENCE_FILE), convergence_csv(&records))?;
    write_json(&dir.join(BEST_FILE), &best_record(&records))?;
    if let (Some(gp), Some(best)) = (&outcome.surrogate, outcome.best()) {
        if best.params_unit.len() >= 2 {
            let slice = landscape_slice(gp, &best.params_unit, LANDSCAPE_GRID)?;
            let mut csv = format!(
                "axis_{}_unit,axis_{}_unit,cost_minus_optimum\n",
                slice.axes.0, slice.axes.1
            );
            for (i, u) in slice.coords.iter().enumerate() {
                for (j, v) in slice.coords.iter().enumerate() {
                    let _ = writeln!(csv, "{u},{v},{}", slice.values[i][j]);
                }
            }
            write_file(&dir.join(LANDSCAPE_FILE), csv)?;
        }
    }
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        records,
    })
}

/// Single optimisation at the first configured duration.
pub fn cmd_optimize(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let dir = out_dir(config)?;
    let manifest = stage_manifest(config, config.ramp.ramp_kind(), config.ramp.durations[0], None)?;
    run_manifest(&dir, &manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub duration: f64,
    pub kind: String,
    pub best_cost: Option<f64>,
    pub oscillation_cost: Option<f64>,
    pub width_cost: Option<f64>,
    pub range_penalty: Option<f64>,
    pub evaluations: usize,
    pub failed: usize,
    pub best_index: Option<usize>,
    pub status: String,
}

fn stage_dir_name(duration: f64) -> String {
    format!("{:.1}ms", duration * 1e3)
}

fn sweep_row(dir: &Path) -> Result<SweepRow, HarnessError> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let error_path = dir.join(STAGE_ERROR_FILE);
    let status = match fs::read_to_string(&error_path) {
        Ok(msg) => format!("error: {}", msg.trim()),
        Err(_) => "ok".into(),
    };
    let log_path = dir.join(LOG_FILE);
    let records = if log_path.exists() {
        read_log(&log_path).map_err(io_err(&log_path))?
    } else {
        Vec::new()
    };
    let best = best_record(&records);
    Ok(SweepRow {
        duration: manifest.duration,
        kind: manifest.kind.to_string(),
        best_cost: best.and_then(|b| b.cost),
        oscillation_cost: best.and_then(|b| b.oscillation_cost),
        width_cost: best.and_then(|b| b.width_cost),
        range_penalty: best.and_then(|b| b.range_penalty),
        evaluations: records.len(),
        failed: records.iter().filter(|r| r.failed).count(),
        best_index: best.map(|b| b.index),
        status,
    })
}

pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "duration_s,kind,best_cost,oscillation_cost,width_cost,range_penalty,evaluations,failed,best_index,status\n",
    );
    let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.duration,
            r.kind,
            f(r.best_cost),
            f(r.oscillation_cost),
            f(r.width_cost),
            f(r.range_penalty),
            r.evaluations,
            r.failed,
            r.best_index.map(|i| i.to_string()).unwrap_or_default(),
            r.status.replace([',', '\n'], ";"),
        );
    }
    out
}

/// Rebuild the sweep summary from the stage directories under `dir`.
pub fn regenerate_sweep_summary(dir: &Path, durations: &[f64]) -> Result<String, HarnessError> {
    let rows = durations
        .iter()
        .map(|d| sweep_row(&dir.join(stage_dir_name(*d))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sweep_summary_csv(&rows))
}

/// Optimise at each duration, longest first, starting each stage from the
/// best parameters of the previous one. A failing stage is recorded and the
/// sweep moves on.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let dir = out_dir(config)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let kind = config.ramp.ramp_kind();
    let mut warm: Option<Vec<f64>> = None;
    let mut rows = Vec::new();
    for &duration in &config.ramp.durations {
        let stage = dir.join(stage_dir_name(duration));
        let manifest = stage_manifest(config, kind, duration, warm.as_deref())?;
        match run_manifest(&stage, &manifest) {
            Ok(summary) => {
                if let Some(b) = summary.best() {
                    warm = Some(b.params_raw.clone());
                }
            }
            Err(e) => write_file(&stage.join(STAGE_ERROR_FILE), e.to_string())?,
        }
        rows.push(sweep_row(&stage)?);
    }
    write_file(&dir.join(SWEEP_SUMMARY_FILE), sweep_summary_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingReport {
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    pub cost_ratio: Option<f64>,
    /// Detector-plane x amplitude of the residual oscillation, m.
    pub initial_amplitude_x: f64,
    pub final_amplitude_x: f64,
    pub amplitude_ratio: f64,
    /// x-axis COM energy in the held trap, J.
    pub initial_energy_x: f64,
    pub final_energy_x: f64,
    pub energy_ratio: f64,
}

/// Induce sloshing, then optimise a control window to remove it.
pub fn cmd_damping(config: &RunConfig) -> Result<(RunSummary, DampingReport), HarnessError> {
    config.validate()?;
    let mut config = config.clone();
    config.scenario = Scenario::Damping;
    let search = &mut config.optimizer.search;
    search.trust_region = search.trust_region.or(config.damping.trust_region);
    let dir = out_dir(&config)?;
    let kind = RampKind::PiecewiseLinear {
        segments: config.damping.segments,
    };
    let manifest = stage_manifest(&config, kind, config.damping.window, None)?;
    let summary = run_manifest(&dir, &manifest)?;
    let experiment = manifest.experiment()?;
    let mass = config.simulation.dynamics.mass;
    let first = summary
        .records
        .first()
        .ok_or_else(|| HarnessError::Invalid("empty damping run".into()))?;
    let best = summary.best().unwrap_or(first);
    let probe = derive_seed(config.seed, "damping-probe", 0);
    let before = experiment.shoot(&first.params_raw, probe, 0.0)?;
    let after = experiment.shoot(&best.params_raw, probe, 0.0)?;
    let (a0, a1) = (before.far_field_amplitude()[0], after.far_field_amplitude()[0]);
    let (e0, e1) = (before.com_energy_x(mass), after.com_energy_x(mass));
    let report = DampingReport {
        initial_cost: first.cost,
        final_cost: best.cost,
        cost_ratio: first.cost.zip(best.cost).map(|(a, b)| a / b),
        initial_amplitude_x: a0,
        final_amplitude_x: a1,
        amplitude_ratio: a0 / a1,
        initial_energy_x: e0,
        final_energy_x: e1,
        energy_ratio: e0 / e1,
    };
    write_json(&dir.join(DAMPING_FILE), &report)?;
    Ok((summary, report))
}

/// Parameters from a `best.json` written by a run, or from a plain JSON
/// array of numbers.
pub fn read_params(path: &Path) -> Result<Vec<f64>, HarnessError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ParamsFile {
        Plain(Vec<f64>),
        Best(Option<RunLogRecord>),
    }
    match read_json::<ParamsFile>(path)? {
        ParamsFile::Plain(v) => Ok(v),
        ParamsFile::Best(Some(r)) => Ok(r.params_raw),
        ParamsFile::Best(None) => Err(HarnessError::Invalid(format!(
            "{} holds no valid evaluation",
            path.display()
        ))),
    }
}

/// Trajectory through the ramp and hold, plus pulse-resolved far-field
/// velocities from interlaced runs with shifted pulse trains.
pub fn cmd_trace(config: &RunConfig, params: Option<&[f64]>) -> Result<PathBuf, HarnessError> {
    config.validate()?;
    let dir = out_dir(config)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let (kind, duration) = match config.scenario {
        Scenario::Transport => (config.ramp.ramp_kind(), config.ramp.durations[0]),
        Scenario::Damping => (
            RampKind::PiecewiseLinear {
                segments: config.damping.segments,
            },
            config.damping.window,
        ),
    };
    let manifest = stage_manifest(config, kind, duration, None)?;
    let experiment = manifest.experiment()?;
    let params = params.map_or_else(|| experiment.template.params.clone(), <[f64]>::to_vec);
    if params.len() != experiment.dimension() {
        return Err(HarnessError::Invalid(format!(
            "expected {} parameters for {kind}, got {}",
            experiment.dimension(),
            params.len()
        )));
    }
    let t_fall = config.simulation.pulses.fall().t_fall;
    let stride = config.trace.stride;

    let shot = experiment.shoot(&params, derive_seed(config.seed, "trace", 0), 0.0)?;
    let mut csv = String::from("t_s,phase,x_m,v_x_m_s,v_star_x_m_s,b_x,atom_number\n");
    for (phase, traj) in [("ramp", &shot.ramp), ("hold", &shot.hold)] {
        let last = traj.samples.len().saturating_sub(1);
        for (i, s) in traj.samples.iter().enumerate() {
            if i % stride != 0 && i != last {
                continue;
            }
            let v_star = s.velocity[0] + s.position[0] / t_fall;
            let _ = writeln!(
                csv,
                "{},{phase},{},{},{v_star},{},{}",
                s.time, s.position[0], s.velocity[0], s.scale[0], s.atom_number
            );
        }
    }
    write_file(&dir.join(TRACE_FILE), csv)?;

    let n = config.trace.interlace;
    let period = config.simulation.pulses.period;
    let mut pulses = String::from("offset_index,offset_s,pulse,t_s,v_star_x_m_s,expected_v_star_x_m_s,count\n");
    for k in 0..n {
        let offset = period * k as f64 / n as f64;
        let shot = experiment.shoot(&params, derive_seed(config.seed, "trace", k as u64 + 1), offset)?;
        for (r, e) in shot.pulses.records.iter().zip(&shot.pulses.expectations).take(config.trace.pulses) {
            let measured = if r.count > 0 {
                (r.mean[0] / t_fall).to_string()
            } else {
                String::new()
            };
            let _ = writeln!(
                pulses,
                "{k},{offset},{},{},{measured},{},{}",
                r.pulse_index,
                e.time,
                e.mean[0] / t_fall,
                r.count
            );
        }
    }
    write_file(&dir.join(TRACE_PULSES_FILE), pulses)?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub evaluations: usize,
    pub passed: bool,
}

/// Re-run the optimisation recorded in `dir` and check every evaluation
/// against the log.
pub fn cmd_replay(dir: &Path) -> Result<ReplayReport, HarnessError> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let log_path = dir.join(LOG_FILE);
    let logged = read_log(&log_path).map_err(io_err(&log_path))?;
    let mut experiment = manifest.experiment()?;
    let problem = experiment.problem(manifest.seed);
    let mut mismatch: Option<(usize, String)> = None;
    let mut seen = 0usize;
    let result = run_optimization(
        &problem,
        &manifest.config.optimizer,
        &mut experiment,
        &mut |obs| {
            let rec = RunLogRecord::from_observation(obs, 0.0);
            let field = match logged.get(seen) {
                None => Some("extra evaluation"),
                Some(old) => old.same_outcome(&rec),
            };
            if let Some(f) = field {
                mismatch = Some((seen, f.to_string()));
                return Err(std::io::Error::other("replay mismatch"));
            }
            seen += 1;
            Ok(())
        },
    );
    if let Some((index, field)) = mismatch {
        return Err(HarnessError::ReplayMismatch { index, field });
    }
    result?;
    if seen != logged.len() {
        return Err(HarnessError::ReplayMismatch {
            index: seen,
            field: "log has more evaluations than the replay".into(),
        });
    }
    Ok(ReplayReport {
        evaluations: seen,
        passed: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub events: usize,
    pub dropped: usize,
    pub pulses: usize,
    pub report: CostReport,
    pub cost: Option<f64>,
}

/// Cost of a measured detector event stream, binned with the configured
/// pulse train.
pub fn cmd_ingest(config: &RunConfig, events_csv: &Path) -> Result<IngestReport, HarnessError> {
    config.validate()?;
    let dir = out_dir(config)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let file = fs::File::open(events_csv).map_err(io_err(events_csv))?;
    let events = EventSet::read_csv(std::io::BufReader::new(file))?;
    let train = &config.simulation.pulses;
    let binned = bin_events(&events, train, &train.fall())?;
    let report = robust_cost(&binned.records, &config.weights)?;
    let records_path = dir.join(INGEST_RECORDS_FILE);
    let mut buf = Vec::new();
    write_records_csv(&binned.records, &mut buf).map_err(io_err(&records_path))?;
    write_file(&records_path, buf)?;
    let out = IngestReport {
        events: events.events().len(),
        dropped: binned.dropped,
        pulses: binned.records.len(),
        cost: report.value(),
        report,
    };
    write_json(&dir.join(INGEST_FILE), &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RampFamily;

    fn quick_config(dir: &Path) -> RunConfig {
        let mut c = RunConfig::default();
        c.out_dir = Some(dir.to_path_buf());
        c.ramp.kind = RampFamily::Exponential;
        c.ramp.durations = vec![0.4];
        c.optimizer.budget = 12;
        c.simulation.pulses.pulse_count = 60;
        c.weights.min_atoms = 500;
        c
    }

    #[test]
    fn linear_run_has_one_evaluation() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = quick_config(dir.path());
        c.ramp.kind = RampFamily::Linear;
        let s = cmd_optimize(&c).unwrap();
        assert_eq!(s.records.len(), 1);
        assert!(dir.path().join(BEST_FILE).exists());
    }

    #[test]
    fn optimize_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick_config(dir.path());
        let s = cmd_optimize(&c).unwrap();
        assert_eq!(s.records.len(), 12);
        let csv = fs::read_to_string(dir.path().join(CONVERGENCE_FILE)).unwrap();
        let log = read_log(&dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(csv, convergence_csv(&log));
        assert_eq!(cmd_replay(dir.path()).unwrap().evaluations, 12);
    }

    #[test]
    fn edited_cost_fails_replay_at_that_index() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick_config(dir.path());
        cmd_optimize(&c).unwrap();
        let path = dir.path().join(LOG_FILE);
        let mut log = read_log(&path).unwrap();
        let k = log.iter().position(|r| r.cost.is_some() && r.index > 3).unwrap();
        log[k].cost = log[k].cost.map(|c| c * 1.5);
        let mut w = LogWriter::create(&path).unwrap();
        for r in &log {
            w.append(r).unwrap();
        }
        match cmd_replay(dir.path()) {
            Err(HarnessError::ReplayMismatch { index, .. }) => assert_eq!(index, k),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_log_fails_replay() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick_config(dir.path());
        cmd_optimize(&c).unwrap();
        let path = dir.path().join(LOG_FILE);
        let log = read_log(&path).unwrap();
        let mut w = LogWriter::create(&path).unwrap();
        for r in &log[..5] {
            w.append(r).unwrap();
        }
        assert!(matches!(
            cmd_replay(dir.path()),
            Err(HarnessError::ReplayMismatch { index: 5, .. })
        ));
    }

    #[test]
    fn sweep_summary_regenerates_from_logs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = quick_config(dir.path());
        c.ramp.durations = vec![0.4, 0.3];
        c.optimizer.budget = 6;
        let rows = cmd_sweep(&c).unwrap();
        assert_eq!(rows.len(), 2);
        let written = fs::read_to_string(dir.path().join(SWEEP_SUMMARY_FILE)).unwrap();
        assert_eq!(written, regenerate_sweep_summary(dir.path(), &c.ramp.durations).unwrap());
        // the second stage starts from the first stage's best
        let m: Manifest = read_json(&dir.path().join("300.0ms").join(MANIFEST_FILE)).unwrap();
        let best: Option<RunLogRecord> = read_json(&dir.path().join("400.0ms").join(BEST_FILE)).unwrap();
        assert_eq!(m.initial_params, best.unwrap().params_raw);
    }

    #[test]
    fn trace_of_optimised_params() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick_config(dir.path());
        cmd_optimize(&c).unwrap();
        let params = read_params(&dir.path().join(BEST_FILE)).unwrap();
        assert_eq!(params.len(), 2);
        let mut t = c.clone();
        t.out_dir = Some(dir.path().join("trace"));
        t.trace.interlace = 2;
        let out = cmd_trace(&t, Some(&params)).unwrap();
        let pulses = fs::read_to_string(out.join(TRACE_PULSES_FILE)).unwrap();
        assert_eq!(pulses.lines().count(), 1 + 2 * t.trace.pulses);
        assert!(cmd_trace(&t, Some(&[1.0])).is_err());
    }

    #[test]
    fn missing_output_directory_is_an_error() {
        let mut c = RunConfig::default();
        c.out_dir = None;
        assert_eq!(cmd_optimize(&c).unwrap_err().category(), "invalid");
    }
}
