//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Costs are optionally log-transformed, then standardised, before fitting. Hyperparameters maximise the log
//! marginal likelihood; each is optimised in log space behind a sigmoid so the
//! box bounds hold without a constrained solver.

use std::cell::RefCell;
use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OptimizerError;

pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub length_scales: Vec<f64>,
    /// `σ_f²`, in standardised cost units.
    pub signal_variance: f64,
    /// `σ_n²`, in standardised cost units.
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn isotropic(dim: usize, length: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            length_scales: vec![length; dim],
            signal_variance,
            noise_variance,
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.length_scales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            length_scales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
        }
    }
}

/// Floor applied before taking the log of a cost.
pub const LOG_COST_FLOOR: f64 = 1e-12;

/// Map from cost to the quantity the GP models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTransform {
    Identity,
    #[default]
    Log,
}

impl CostTransform {
    pub fn forward(self, c: f64) -> f64 {
        match self {
            CostTransform::Identity => c,
            CostTransform::Log => c.max(LOG_COST_FLOOR).ln(),
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            CostTransform::Identity => v,
            CostTransform::Log => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSettings {
    pub transform: CostTransform,
    pub length_bounds: [f64; 2],
    pub signal_bounds: [f64; 2],
    pub noise_bounds: [f64; 2],
    /// Random starts on top of the fixed grid and any warm start.
    pub restarts: usize,
    pub max_iters: u64,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            transform: CostTransform::default(),
            length_bounds: [1e-2, 10.0],
            signal_bounds: [1e-4, 1e2],
            noise_bounds: [1e-8, 1.0],
            restarts: 1,
            max_iters: 40,
        }
    }
}

impl GpSettings {
    fn log_bounds(&self, dim: usize) -> Vec<[f64; 2]> {
        let ln = |b: [f64; 2]| [b[0].ln(), b[1].ln()];
        let mut v = vec![ln(self.length_bounds); dim];
        v.push(ln(self.signal_bounds));
        v.push(ln(self.noise_bounds));
        v
    }
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    transform: CostTransform,
    y_mean: f64,
    y_scale: f64,
    hyper: Hyperparameters,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
}

fn sq_dist_scaled(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((p, q), l)| {
            let r = (p - q) / l;
            r * r
        })
        .sum()
}

fn standardise(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt();
    if scale > 1e-12 * mean.abs().max(1e-300) && scale.is_finite() {
        (mean, scale)
    } else {
        (mean, 1.0)
    }
}

/// Noise-free SE kernel matrix.
fn kernel_matrix(x: &[Vec<f64>], h: &Hyperparameters) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_variance;
        for j in 0..i {
            let v = h.signal_variance * (-0.5 * sq_dist_scaled(&x[i], &x[j], &h.length_scales)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

struct Factor {
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
}

fn factorise(kse: &DMatrix<f64>, y: &DVector<f64>, noise: f64) -> Option<Factor> {
    let n = y.len();
    for &jitter in &JITTER_LADDER {
        let mut k = kse.clone();
        for i in 0..n {
            k[(i, i)] += noise + jitter;
        }
        if let Some(ch) = k.cholesky() {
            let alpha = ch.solve(y);
            let l = ch.unpack();
            let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
            let lml = -0.5 * y.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * PI).ln();
            if lml.is_finite() {
                return Some(Factor {
                    l,
                    alpha,
                    jitter,
                    lml,
                });
            }
        }
    }
    None
}

/// Log marginal likelihood and its gradient in log-hyperparameter space.
fn lml_and_grad(x: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let h = Hyperparameters::from_log(theta);
    let d = h.length_scales.len();
    let n = x.len();
    let kse = kernel_matrix(x, &h);
    let f = factorise(&kse, y, h.noise_variance)?;
    let ident = DMatrix::<f64>::identity(n, n);
    let linv = f.l.solve_lower_triangular(&ident)?;
    let kinv = linv.transpose() * &linv;
    // W = ααᵀ − K⁻¹; ∂LML/∂θ = ½ tr(W ∂K/∂θ)
    let mut grad = vec![0.0; d + 2];
    let mut tr_w = 0.0;
    for i in 0..n {
        let wii = f.alpha[i] * f.alpha[i] - kinv[(i, i)];
        tr_w += wii;
        grad[d] += 0.5 * wii * kse[(i, i)];
        for j in 0..i {
            let wij = f.alpha[i] * f.alpha[j] - kinv[(i, j)];
            let c = wij * kse[(i, j)];
            grad[d] += c;
            for k in 0..d {
                let r = (x[i][k] - x[j][k]) / h.length_scales[k];
                grad[k] += c * r * r;
            }
        }
    }
    grad[d + 1] = 0.5 * h.noise_variance * tr_w;
    Some((f.lml, grad))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

struct LmlProblem<'a> {
    x: &'a [Vec<f64>],
    y: &'a DVector<f64>,
    bounds: &'a [[f64; 2]],
    best: &'a RefCell<Option<(f64, Vec<f64>)>>,
    last: RefCell<Option<(Vec<f64>, f64, Vec<f64>)>>,
}

impl LmlProblem<'_> {
    fn theta(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.bounds)
            .map(|(z, b)| b[0] + (b[1] - b[0]) * sigmoid(*z))
            .collect()
    }

    fn z_from_theta(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.bounds)
            .map(|(t, b)| logit((t - b[0]) / (b[1] - b[0])))
            .collect()
    }

    fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>), argmin::core::Error> {
        if let Some((lz, c, g)) = self.last.borrow().as_ref() {
            if lz.as_slice() == z {
                return Ok((*c, g.clone()));
            }
        }
        let theta = self.theta(z);
        let (lml, g) = lml_and_grad(self.x, self.y, &theta)
            .ok_or_else(|| argmin::core::Error::msg("kernel matrix not positive definite"))?;
        let mut best = self.best.borrow_mut();
        if best.as_ref().is_none_or(|(v, _)| lml > *v) {
            *best = Some((lml, theta.clone()));
        }
        let grad_z = g
            .iter()
            .zip(z)
            .zip(self.bounds)
            .map(|((g, z), b)| {
                let s = sigmoid(*z);
                -g * (b[1] - b[0]) * s * (1.0 - s)
            })
            .collect::<Vec<f64>>();
        *self.last.borrow_mut() = Some((z.to_vec(), -lml, grad_z.clone()));
        Ok((-lml, grad_z))
    }
}

impl CostFunction for LmlProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, z: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.eval(z)?.0)
    }
}

impl Gradient for LmlProblem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, z: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(z)?.1)
    }
}

fn run_lbfgs(problem: LmlProblem<'_>, start: Vec<f64>, max_iters: u64) {
    let linesearch = MoreThuenteLineSearch::new();
    let solver = LBFGS::new(linesearch, 7)
        .with_tolerance_grad(1e-6)
        .and_then(|s| s.with_tolerance_cost(1e-9))
        .expect("positive tolerances");
    let res = Executor::new(problem, solver)
        .configure(|s| s.param(start).max_iters(max_iters))
        .run();
    // a line-search failure keeps the best point evaluated so far
    let _ = res;
}

impl GpSurrogate {
    /// Condition on `(x, y)` with fixed hyperparameters, modelling the
    /// cost directly.
    pub fn with_hyperparameters(
        x: Vec<Vec<f64>>,
        y: &[f64],
        hyper: Hyperparameters,
    ) -> Result<Self, OptimizerError> {
        Self::condition(x, y, hyper, CostTransform::Identity)
    }

    /// Condition on `(x, y)` with fixed hyperparameters.
    pub fn condition(
        x: Vec<Vec<f64>>,
        y: &[f64],
        hyper: Hyperparameters,
        transform: CostTransform,
    ) -> Result<Self, OptimizerError> {
        check_data(&x, y, 1)?;
        if hyper.length_scales.len() != x[0].len() {
            return Err(OptimizerError::Dimension {
                expected: x[0].len(),
                got: hyper.length_scales.len(),
            });
        }
        let yt: Vec<f64> = y.iter().map(|&c| transform.forward(c)).collect();
        let (y_mean, y_scale) = standardise(&yt);
        let ys = DVector::from_iterator(y.len(), yt.iter().map(|v| (v - y_mean) / y_scale));
        let kse = kernel_matrix(&x, &hyper);
        let f = factorise(&kse, &ys, hyper.noise_variance).ok_or(OptimizerError::Numerical(
            "kernel matrix not positive definite at maximum jitter".into(),
        ))?;
        Ok(Self {
            x,
            transform,
            y_mean,
            y_scale,
            hyper,
            chol_l: f.l,
            alpha: f.alpha,
            jitter: f.jitter,
            lml: f.lml,
        })
    }

    /// Fit hyperparameters by multistart L-BFGS on the log marginal
    /// likelihood, then condition on the data.
    pub fn fit(
        x: Vec<Vec<f64>>,
        y: &[f64],
        seed: u64,
        warm: Option<&Hyperparameters>,
        settings: &GpSettings,
    ) -> Result<Self, OptimizerError> {
        check_data(&x, y, 2)?;
        let d = x[0].len();
        let yt: Vec<f64> = y.iter().map(|&c| settings.transform.forward(c)).collect();
        let (y_mean, y_scale) = standardise(&yt);
        let ys = DVector::from_iterator(y.len(), yt.iter().map(|v| (v - y_mean) / y_scale));
        let bounds = settings.log_bounds(d);

        let mut starts: Vec<Vec<f64>> = [0.1, 0.3, 1.0]
            .iter()
            .map(|&l| Hyperparameters::isotropic(d, l, 1.0, 1e-2).to_log())
            .collect();
        if let Some(w) = warm.filter(|w| w.length_scales.len() == d) {
            starts.push(w.to_log());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..settings.restarts {
            starts.push(bounds.iter().map(|b| rng.random_range(b[0]..b[1])).collect());
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let tracked = RefCell::new(None);
            let problem = LmlProblem {
                x: &x,
                y: &ys,
                bounds: &bounds,
                best: &tracked,
                last: RefCell::new(None),
            };
            let z0 = problem.z_from_theta(&start);
            run_lbfgs(problem, z0, settings.max_iters);
            if let Some((lml, theta)) = tracked.into_inner() {
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, theta));
                }
            }
        }
        let (_, theta) = best.ok_or(OptimizerError::Numerical(
            "no hyperparameter start produced a positive-definite kernel".into(),
        ))?;
        Self::condition(x, y, Hyperparameters::from_log(&theta), settings.transform)
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn n_train(&self) -> usize {
        self.x.len()
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn kvec(&self, x: &[f64]) -> DVector<f64> {
        let h = &self.hyper;
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| h.signal_variance * (-0.5 * sq_dist_scaled(x, xi, &h.length_scales)).exp()),
        )
    }

    pub fn transform(&self) -> CostTransform {
        self.transform
    }

    /// Posterior mean of the transformed cost.
    pub fn latent_mean(&self, x: &[f64]) -> f64 {
        let k = self.kvec(x);
        self.y_mean + self.y_scale * k.dot(&self.alpha)
    }

    /// Posterior mean and standard deviation of the transformed cost.
    pub fn latent(&self, x: &[f64]) -> (f64, f64) {
        let k = self.kvec(x);
        let mean = self.y_mean + self.y_scale * k.dot(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a non-zero diagonal");
        let var = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        (mean, self.y_scale * var.sqrt())
    }

    /// Posterior mean in cost units (the median under a log transform).
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.transform.inverse(self.latent_mean(x))
    }

    /// Posterior mean and standard deviation in cost units. Under a log
    /// transform the spread is propagated to first order.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, s) = self.latent(x);
        match self.transform {
            CostTransform::Identity => (m, s),
            CostTransform::Log => {
                let c = m.exp();
                (c, c * s)
            }
        }
    }

    /// Diagonal of the training kernel, including noise and jitter.
    pub fn kernel_diagonal(&self) -> f64 {
        self.hyper.signal_variance + self.hyper.noise_variance + self.jitter
    }
}

fn check_data(x: &[Vec<f64>], y: &[f64], min: usize) -> Result<(), OptimizerError> {
    if x.len() < min || y.len() != x.len() {
        return Err(OptimizerError::InsufficientData {
            valid: x.len().min(y.len()),
        });
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(OptimizerError::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OptimizerError::Numerical("non-finite training cost".into()));
    }
    Ok(())
}
