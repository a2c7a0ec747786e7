//! Robust cost over per-pulse detection statistics.
//!
//! `C = |σ_i(μ) + R(μ)| + mean_i S(|σ_j|)` where `σ_i(μ)` is the per-axis
//! spread of the pulse means, `R` a quartic hinge on their peak-to-peak range
//! and `S` a quartic hinge on the per-pulse cloud width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom_laser::DetectionRecord;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no detection records")]
    Empty,
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
}

/// How the range penalty enters the oscillation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// Each axis's penalty is added to that axis's spread before the norm.
    #[default]
    Componentwise,
    /// The norm of the penalties is added to the norm of the spreads.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub width_threshold: f64,
    pub width_scale: f64,
    pub range_threshold: f64,
    pub range_scale: f64,
    pub min_atoms: u64,
    pub range_mode: RangeMode,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            width_threshold: 4e-3,
            width_scale: 6e8,
            range_threshold: 47e-3,
            range_scale: 1e6,
            min_atoms: 2500,
            range_mode: RangeMode::Componentwise,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), CostError> {
        let pos = [
            self.width_threshold,
            self.width_scale,
            self.range_threshold,
            self.range_scale,
        ];
        if pos.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(CostError::InvalidWeights(
                "thresholds and scales must be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub oscillation_cost: f64,
    pub width_cost: f64,
    pub range_penalty: f64,
    pub total: f64,
    pub failed: bool,
    pub total_detections: u64,
}

impl CostReport {
    pub fn failed(total_detections: u64) -> Self {
        Self {
            oscillation_cost: f64::NAN,
            width_cost: f64::NAN,
            range_penalty: f64::NAN,
            total: f64::NAN,
            failed: true,
            total_detections,
        }
    }

    /// Total cost, or `None` for a failed run.
    pub fn value(&self) -> Option<f64> {
        (!self.failed).then_some(self.total)
    }
}

fn hinge4(x: f64, threshold: f64, scale: f64) -> f64 {
    if x > threshold {
        scale * (x - threshold).powi(4)
    } else {
        0.0
    }
}

/// `S(x)`: zero up to the width threshold, quartic above.
pub fn width_penalty(x: f64, w: &CostWeights) -> f64 {
    hinge4(x, w.width_threshold, w.width_scale)
}

/// Quartic hinge on the peak-to-peak range of each axis's mean series.
pub fn range_penalty(means: &[[f64; 3]], w: &CostWeights) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (a, o) in out.iter_mut().enumerate() {
        let (lo, hi) = means
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m[a]), hi.max(m[a]))
            });
        if hi >= lo {
            *o = hinge4(hi - lo, w.range_threshold, w.range_scale);
        }
    }
    out
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Population standard deviation per axis, shifted by the first sample so a
/// constant series gives exactly zero.
fn axis_std(means: &[[f64; 3]]) -> [f64; 3] {
    let n = means.len() as f64;
    let mut out = [0.0; 3];
    for (a, o) in out.iter_mut().enumerate() {
        let x0 = means[0][a];
        let mu = means.iter().map(|m| m[a] - x0).sum::<f64>() / n;
        let var = means.iter().map(|m| (m[a] - x0 - mu).powi(2)).sum::<f64>() / n;
        *o = var.sqrt();
    }
    out
}

/// Pulses without detections carry no mean or width and are skipped.
pub fn robust_cost(records: &[DetectionRecord], w: &CostWeights) -> Result<CostReport, CostError> {
    if records.is_empty() {
        return Err(CostError::Empty);
    }
    let total_detections: u64 = records.iter().map(|r| r.count).sum();
    if total_detections < w.min_atoms {
        return Ok(CostReport::failed(total_detections));
    }
    let active: Vec<&DetectionRecord> = records.iter().filter(|r| r.count > 0).collect();
    if active.is_empty() {
        return Ok(CostReport::failed(total_detections));
    }
    let means: Vec<[f64; 3]> = active.iter().map(|r| r.mean).collect();
    let spread = axis_std(&means);
    let range = range_penalty(&means, w);
    let oscillation_cost = norm3(spread);
    let range_norm = norm3(range);
    let combined = match w.range_mode {
        RangeMode::Componentwise => norm3([
            spread[0] + range[0],
            spread[1] + range[1],
            spread[2] + range[2],
        ]),
        RangeMode::Scalar => oscillation_cost + range_norm,
    };
    let width_cost = active
        .iter()
        .map(|r| width_penalty(norm3(r.std), w))
        .sum::<f64>()
        / active.len() as f64;
    Ok(CostReport {
        oscillation_cost,
        width_cost,
        range_penalty: range_norm,
        total: combined + width_cost,
        failed: false,
        total_detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(i: usize, mean: [f64; 3], std: [f64; 3], count: u64) -> DetectionRecord {
        DetectionRecord {
            pulse_index: i,
            mean,
            std,
            count,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn width_hinge() {
        let w = CostWeights::default();
        assert_eq!(width_penalty(3e-3, &w), 0.0);
        assert_eq!(width_penalty(4e-3, &w), 0.0);
        assert!(rel(width_penalty(5e-3, &w), 6e-4) < 1e-12);
    }

    #[test]
    fn range_hinge() {
        let w = CostWeights::default();
        let flat = vec![[1e-3, 2e-3, 0.0]; 5];
        assert_eq!(range_penalty(&flat, &w), [0.0; 3]);
        let at = [[0.0; 3], [47e-3, 0.0, 0.0]];
        assert_eq!(range_penalty(&at, &w)[0], 0.0);
        let above = [[0.0; 3], [57e-3, 0.0, 0.0]];
        assert!(rel(range_penalty(&above, &w)[0], 1e-2) < 1e-12);
    }

    #[test]
    fn zero_cost_for_identical_pulses() {
        let w = CostWeights::default();
        let r: Vec<_> = (0..10).map(|i| rec(i, [1e-3, 0.0, 0.0], [1e-3; 3], 300)).collect();
        let c = robust_cost(&r, &w).unwrap();
        assert!(!c.failed);
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn too_few_atoms_fails() {
        let w = CostWeights::default();
        let r: Vec<_> = (0..10).map(|i| rec(i, [0.0; 3], [0.0; 3], 10)).collect();
        let c = robust_cost(&r, &w).unwrap();
        assert!(c.failed);
        assert_eq!(c.total_detections, 100);
        assert_eq!(c.value(), None);
    }

    #[test]
    fn two_pulse_spread() {
        let w = CostWeights::default();
        let r = [
            rec(0, [0.0; 3], [0.0; 3], 2000),
            rec(1, [10e-3, 0.0, 0.0], [0.0; 3], 2000),
        ];
        let c = robust_cost(&r, &w).unwrap();
        assert!((c.oscillation_cost - 5e-3).abs() < 1e-15);
        assert_eq!(c.range_penalty, 0.0);
        assert!((c.total - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn range_modes_differ_only_when_multiple_axes_penalised() {
        let mut w = CostWeights::default();
        let r = [
            rec(0, [0.0; 3], [0.0; 3], 2000),
            rec(1, [57e-3, 57e-3, 0.0], [0.0; 3], 2000),
        ];
        let comp = robust_cost(&r, &w).unwrap().total;
        w.range_mode = RangeMode::Scalar;
        let scalar = robust_cost(&r, &w).unwrap().total;
        let s = 28.5e-3;
        assert!(rel(comp, 2f64.sqrt() * (s + 1e-2)) < 1e-12);
        assert!(rel(scalar, 2f64.sqrt() * s + 2f64.sqrt() * 1e-2) < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(robust_cost(&[], &CostWeights::default()), Err(CostError::Empty));
    }

    fn records_strategy() -> impl Strategy<Value = Vec<DetectionRecord>> {
        prop::collection::vec(
            (
                prop::array::uniform3(-0.05f64..0.05),
                prop::array::uniform3(0.0f64..0.01),
                1u64..500,
            ),
            2..30,
        )
        .prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (m, s, c))| rec(i, m, s, c + 2500))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn wider_pulse_never_cheaper(r in records_strategy(), idx in 0usize..30, axis in 0usize..3, extra in 0.0f64..0.01) {
            let w = CostWeights::default();
            let base = robust_cost(&r, &w).unwrap().total;
            let mut wider = r.clone();
            let i = idx % wider.len();
            wider[i].std[axis] += extra;
            prop_assert!(robust_cost(&wider, &w).unwrap().total >= base);
        }

        #[test]
        fn translation_invariant(r in records_strategy(), off in prop::array::uniform3(-0.1f64..0.1)) {
            let w = CostWeights::default();
            let base = robust_cost(&r, &w).unwrap().total;
            let shifted: Vec<_> = r.iter().map(|x| {
                let mut y = *x;
                for a in 0..3 { y.mean[a] += off[a]; }
                y
            }).collect();
            let moved = robust_cost(&shifted, &w).unwrap().total;
            prop_assert!((moved - base).abs() <= 1e-9 * base.max(1e-6));
        }

        #[test]
        fn failure_depends_only_on_total(counts in prop::collection::vec(0u64..400, 1..20), min in 0u64..5000) {
            let w = CostWeights { min_atoms: min, ..Default::default() };
            let r: Vec<_> = counts.iter().enumerate().map(|(i, &c)| rec(i, [i as f64 * 1e-3, 0.0, 0.0], [0.0; 3], c)).collect();
            let total: u64 = counts.iter().sum();
            let c = robust_cost(&r, &w).unwrap();
            prop_assert_eq!(c.failed, total < min || total == 0);
            prop_assert_eq!(c.total_detections, total);
        }
    }
}
