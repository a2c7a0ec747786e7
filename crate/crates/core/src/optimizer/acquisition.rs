//! Biased acquisition `B(x) = μ(x) − b·σ(x)` and its minimisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::GpSurrogate;

/// Anything that yields a posterior mean and standard deviation in the space
/// the acquisition works in.
pub trait Surrogate {
    fn dim(&self) -> usize;
    fn mean(&self, x: &[f64]) -> f64;
    fn mean_std(&self, x: &[f64]) -> (f64, f64);

    /// Mean in cost units, for reporting.
    fn cost_mean(&self, x: &[f64]) -> f64 {
        self.mean(x)
    }
}

impl Surrogate for GpSurrogate {
    fn dim(&self) -> usize {
        GpSurrogate::dim(self)
    }
    fn mean(&self, x: &[f64]) -> f64 {
        self.latent_mean(x)
    }
    fn mean_std(&self, x: &[f64]) -> (f64, f64) {
        self.latent(x)
    }
    fn cost_mean(&self, x: &[f64]) -> f64 {
        self.predict_mean(x)
    }
}

pub const BIAS_SEQUENCE: [f64; 4] = [0.0, 1.0, 2.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CycleStep {
    Bias(f64),
    De,
}

/// Cycle of five: four surrogate picks with increasing bias, then one DE pick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionCycle {
    pub cursor: usize,
}

impl AcquisitionCycle {
    pub const LEN: usize = BIAS_SEQUENCE.len() + 1;

    pub fn current(&self) -> CycleStep {
        match BIAS_SEQUENCE.get(self.cursor) {
            Some(&b) => CycleStep::Bias(b),
            None => CycleStep::De,
        }
    }

    pub fn advance(&mut self) {
        self.cursor = (self.cursor + 1) % Self::LEN;
    }

    pub fn at_start(&self) -> bool {
        self.cursor == 0
    }
}

pub fn biased_cost<S: Surrogate + ?Sized>(s: &S, x: &[f64], b: f64) -> f64 {
    if b == 0.0 {
        s.mean(x)
    } else {
        let (m, sd) = s.mean_std(x);
        m - b * sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub starts: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub initial_step: f64,
    /// Half-width of a box around the first anchor (the best observation)
    /// that confines the search. `None` searches the whole unit cube.
    pub trust_region: Option<f64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            starts: 20,
            max_iters: 200,
            tolerance: 1e-6,
            initial_step: 0.1,
            trust_region: None,
        }
    }
}

/// Compass search in the unit cube. Accepts the first improving poll and
/// halves the step when none improves.
pub fn pattern_search<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    start: &[f64],
    settings: &SearchSettings,
) -> (Vec<f64>, f64) {
    let d = start.len();
    pattern_search_in(f, start, &vec![0.0; d], &vec![1.0; d], settings)
}

/// Compass search confined to the box `[lo, hi]`.
pub fn pattern_search_in<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: &SearchSettings,
) -> (Vec<f64>, f64) {
    let mut x: Vec<f64> = start
        .iter()
        .enumerate()
        .map(|(k, v)| v.clamp(lo[k], hi[k]))
        .collect();
    let mut fx = f(&x);
    let mut step = settings.initial_step;
    let mut y = x.clone();
    for _ in 0..settings.max_iters {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                let v = (x[k] + dir * step).clamp(lo[k], hi[k]);
                if v == x[k] {
                    continue;
                }
                y[k] = v;
                let fy = f(&y);
                if fy < fx {
                    x[k] = v;
                    fx = fy;
                    improved = true;
                    break;
                }
                y[k] = x[k];
            }
        }
        if !improved {
            step *= 0.5;
            if step < settings.tolerance {
                break;
            }
        }
    }
    (x, fx)
}

/// Minimise `B` from the given anchor points plus seeded uniform starts.
pub fn minimise_acquisition<S: Surrogate + ?Sized>(
    s: &S,
    b: f64,
    anchors: &[Vec<f64>],
    settings: &SearchSettings,
    seed: u64,
) -> (Vec<f64>, f64) {
    let d = s.dim();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match (settings.trust_region, anchors.first()) {
        (Some(r), Some(c)) => c.iter().map(|v| ((v - r).max(0.0), (v + r).min(1.0))).unzip(),
        _ => (vec![0.0; d], vec![1.0; d]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = anchors.iter().take(settings.starts).cloned().collect();
    while starts.len() < settings.starts.max(1) {
        starts.push((0..d).map(|k| lo[k] + (hi[k] - lo[k]) * rng.random::<f64>()).collect());
    }
    let mut f = |x: &[f64]| biased_cost(s, x, b);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for st in &starts {
        let (x, v) = pattern_search_in(&mut f, st, &lo, &hi, settings);
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    }
    best.expect("at least one start")
}
