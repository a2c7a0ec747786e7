//! Online optimiser: GP surrogate with a biased acquisition cycle, plus an
//! independent differential-evolution stream.
//!
//! Everything the learner sees lives in the unit cube; raw parameters are
//! mapped through the configured bounds only at the experiment boundary.

pub mod acquisition;
pub mod de;
pub mod gp;
pub mod landscape;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostReport;
use crate::seed::derive_seed;

pub use acquisition::{AcquisitionCycle, CycleStep, SearchSettings, Surrogate};
pub use de::{DEState, DeSettings};
pub use gp::{CostTransform, GpSettings, GpSurrogate, Hyperparameters};
pub use landscape::{landscape_slice, LandscapeSlice};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("need at least 2 valid observations, have {valid}")]
    InsufficientData { valid: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point outside the unit cube")]
    OutOfBounds,
    #[error("invalid optimiser configuration: {0}")]
    InvalidConfig(String),
    #[error("run log: {0}")]
    Sink(#[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    InitialTraining,
    Gp { b: f64 },
    De,
    /// A surrogate step that fell back to DE because no GP could be fitted.
    DeFallback { b: f64 },
}

impl Source {
    pub fn is_de(&self) -> bool {
        matches!(self, Source::De | Source::DeFallback { .. })
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::InitialTraining => write!(f, "init"),
            Source::Gp { b } => write!(f, "gp_b{b}"),
            Source::De => write!(f, "de"),
            Source::DeFallback { b } => write!(f, "de_fallback_b{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub index: usize,
    pub source: Source,
    pub params_raw: Vec<f64>,
    pub params_unit: Vec<f64>,
    /// `None` for a failed evaluation.
    pub cost: Option<f64>,
    pub report: Option<CostReport>,
    pub error: Option<String>,
    pub seed: u64,
}

impl Observation {
    pub fn failed(&self) -> bool {
        self.cost.is_none()
    }
}

/// The seam between the learner and the thing being optimised.
pub trait Experiment {
    fn evaluate(&mut self, params_raw: &[f64], seed: u64) -> Result<CostReport, String>;
}

impl<F> Experiment for F
where
    F: FnMut(&[f64], u64) -> Result<CostReport, String>,
{
    fn evaluate(&mut self, params_raw: &[f64], seed: u64) -> Result<CostReport, String> {
        self(params_raw, seed)
    }
}

/// A plain cost value wrapped as a successful report.
pub fn report_from_value(v: f64) -> CostReport {
    CostReport {
        oscillation_cost: v,
        width_cost: 0.0,
        range_penalty: 0.0,
        total: v,
        failed: false,
        total_detections: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub budget: usize,
    /// Defaults to `2d + 1`.
    pub n_init: Option<usize>,
    /// Std of the initial-training perturbations, unit-cube units.
    pub init_sigma: f64,
    pub gp: GpSettings,
    pub de: DeSettings,
    pub search: SearchSettings,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            budget: 200,
            n_init: None,
            init_sigma: 0.1,
            gp: GpSettings::default(),
            de: DeSettings::default(),
            search: SearchSettings::default(),
        }
    }
}

/// Search box and starting point in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub bounds: Vec<[f64; 2]>,
    pub initial: Vec<f64>,
    pub seed: u64,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.initial.len() != self.bounds.len() {
            return Err(OptimizerError::Dimension {
                expected: self.bounds.len(),
                got: self.initial.len(),
            });
        }
        for (b, x) in self.bounds.iter().zip(&self.initial) {
            if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                return Err(OptimizerError::InvalidConfig(format!("bad bounds {b:?}")));
            }
            if !(b[0]..=b[1]).contains(x) {
                return Err(OptimizerError::InvalidConfig(format!(
                    "initial value {x} outside {b:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_unit(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.bounds)
            .map(|(x, b)| ((x - b[0]) / (b[1] - b[0])).clamp(0.0, 1.0))
            .collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.bounds)
            .map(|(u, b)| (b[0] + u * (b[1] - b[0])).clamp(b[0], b[1]))
            .collect()
    }
}

/// Fit the surrogate on the non-failed observations.
pub fn fit_gp(
    observations: &[Observation],
    seed: u64,
    warm: Option<&Hyperparameters>,
    settings: &GpSettings,
) -> Result<GpSurrogate, OptimizerError> {
    let (x, y) = training_set(observations);
    GpSurrogate::fit(x, &y, seed, warm, settings)
}

fn training_set(observations: &[Observation]) -> (Vec<Vec<f64>>, Vec<f64>) {
    observations
        .iter()
        .filter_map(|o| o.cost.map(|c| (o.params_unit.clone(), c)))
        .unzip()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub all_failed: bool,
    pub failed: usize,
    pub gp_fits: usize,
    pub gp_fallbacks: usize,
    pub de_reinitialisations: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub history: Vec<Observation>,
    /// Fitted on the full history, when at least two evaluations succeeded.
    pub surrogate: Option<GpSurrogate>,
    pub diagnostics: Diagnostics,
}

impl OptimizationOutcome {
    pub fn best(&self) -> Option<&Observation> {
        best_observation(&self.history)
    }
}

/// Lowest-cost observation; earliest wins ties.
pub fn best_observation(history: &[Observation]) -> Option<&Observation> {
    history
        .iter()
        .filter(|o| o.cost.is_some())
        .fold(None, |best: Option<&Observation>, o| match best {
            Some(b) if b.cost <= o.cost => Some(b),
            _ => Some(o),
        })
}

/// Best cost after each evaluation, `None` until the first success.
pub fn best_so_far(history: &[Observation]) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    history
        .iter()
        .map(|o| {
            if let Some(c) = o.cost {
                best = Some(best.map_or(c, |b| b.min(c)));
            }
            best
        })
        .collect()
}

fn worst_valid(history: &[Observation]) -> f64 {
    history
        .iter()
        .filter_map(|o| o.cost)
        .fold(0.0, f64::max)
}

/// Sequential optimisation. Each observation is handed to `sink` before the
/// next proposal is computed.
pub fn run_optimization<E: Experiment + ?Sized>(
    problem: &Problem,
    settings: &OptimizerSettings,
    experiment: &mut E,
    sink: &mut dyn FnMut(&Observation) -> std::io::Result<()>,
) -> Result<OptimizationOutcome, OptimizerError> {
    problem.validate()?;
    let d = problem.dim();
    let seed = problem.seed;
    let budget = if d == 0 { 1 } else { settings.budget };
    let n_init = settings.n_init.unwrap_or(2 * d + 1).clamp(1, budget.max(1));
    let initial_unit = problem.to_unit(&problem.initial);
    let perturb = Normal::new(0.0, settings.init_sigma)
        .map_err(|e| OptimizerError::InvalidConfig(format!("init_sigma: {e}")))?;

    let mut history: Vec<Observation> = Vec::with_capacity(budget);
    let mut diagnostics = Diagnostics::default();
    let mut de = DEState::new(d, settings.de.clone(), derive_seed(seed, "de-population", 0));
    let mut cycle = AcquisitionCycle::default();
    let mut hyper: Option<Hyperparameters> = None;

    for i in 0..budget {
        let idx = i as u64;
        let mut pending_de = None;
        let (unit, source) = if i < n_init {
            if i == 0 {
                (initial_unit.clone(), Source::InitialTraining)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init", idx));
                let x = initial_unit
                    .iter()
                    .map(|u| (u + perturb.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect();
                (x, Source::InitialTraining)
            }
        } else {
            let step = cycle.current();
            let refit = cycle.at_start() || hyper.is_none();
            cycle.advance();
            let gp = match step {
                CycleStep::De => None,
                CycleStep::Bias(_) => {
                    let fitted = if refit {
                        let r = fit_gp(&history, derive_seed(seed, "gp", idx), hyper.as_ref(), &settings.gp);
                        if let Ok(g) = &r {
                            hyper = Some(g.hyperparameters().clone());
                            diagnostics.gp_fits += 1;
                        }
                        r
                    } else {
                        let (x, y) = training_set(&history);
                        GpSurrogate::condition(x, &y, hyper.clone().expect("checked above"), settings.gp.transform)
                    };
                    fitted.ok()
                }
            };
            match (step, gp) {
                (CycleStep::Bias(b), Some(gp)) => {
                    let anchors: Vec<Vec<f64>> =
                        best_observation(&history).map(|o| o.params_unit.clone()).into_iter().collect();
                    let (x, _) = acquisition::minimise_acquisition(
                        &gp,
                        b,
                        &anchors,
                        &settings.search,
                        derive_seed(seed, "acquisition", idx),
                    );
                    (x, Source::Gp { b })
                }
                (step, _) => {
                    let p = de.propose(derive_seed(seed, "de", idx));
                    let x = p.candidate.clone();
                    pending_de = Some(p);
                    match step {
                        CycleStep::Bias(b) => {
                            diagnostics.gp_fallbacks += 1;
                            (x, Source::DeFallback { b })
                        }
                        CycleStep::De => (x, Source::De),
                    }
                }
            }
        };

        let raw = problem.from_unit(&unit);
        let obs_seed = derive_seed(seed, "experiment", idx);
        let (cost, report, error) = match experiment.evaluate(&raw, obs_seed) {
            Ok(r) if r.failed => (None, Some(r), None),
            Ok(r) if !r.total.is_finite() => {
                (None, Some(r), Some(format!("non-finite cost {}", r.total)))
            }
            Ok(r) => (Some(r.total), Some(r), None),
            Err(e) => (None, None, Some(e)),
        };
        let obs = Observation {
            index: i,
            source,
            params_raw: raw,
            params_unit: unit,
            cost,
            report,
            error,
            seed: obs_seed,
        };
        sink(&obs).map_err(OptimizerError::Sink)?;
        if obs.failed() {
            diagnostics.failed += 1;
        }
        if let Some(p) = pending_de {
            de.report(&p, obs.cost, worst_valid(&history));
        }
        history.push(obs);
    }

    diagnostics.all_failed = history.iter().all(|o| o.failed());
    diagnostics.de_reinitialisations = de.reinitialisations();
    let surrogate = if d > 0 {
        fit_gp(&history, derive_seed(seed, "gp-final", 0), hyper.as_ref(), &settings.gp).ok()
    } else {
        None
    };
    Ok(OptimizationOutcome {
        history,
        surrogate,
        diagnostics,
    })
}

/// Uniform random search over the box; the baseline the learner must beat.
pub fn random_search<E: Experiment + ?Sized>(
    problem: &Problem,
    budget: usize,
    experiment: &mut E,
) -> Result<Vec<Observation>, OptimizerError> {
    problem.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(problem.seed, "random-search", 0));
    let mut out = Vec::with_capacity(budget);
    for i in 0..budget {
        let unit: Vec<f64> = (0..problem.dim()).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let raw = problem.from_unit(&unit);
        let seed = derive_seed(problem.seed, "experiment", i as u64);
        let (cost, report, error) = match experiment.evaluate(&raw, seed) {
            Ok(r) if r.failed || !r.total.is_finite() => (None, Some(r), None),
            Ok(r) => (Some(r.total), Some(r), None),
            Err(e) => (None, None, Some(e)),
        };
        out.push(Observation {
            index: i,
            source: Source::InitialTraining,
            params_raw: raw,
            params_unit: unit,
            cost,
            report,
            error,
            seed,
        });
    }
    Ok(out)
}
