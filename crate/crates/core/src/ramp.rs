//! Parameterized control waveforms between fixed start and end controls.
//!
//! A [`RampSpec`] is the optimizer's search space: its free parameter vector
//! shapes the waveform, while the endpoints stay pinned for every parameter
//! value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trap::{ControlBox, ControlInputs};

/// Default segment count per channel for piecewise-linear ramps.
pub const DEFAULT_SEGMENTS: usize = 8;

/// Exponential time constants are stored as fractions of the ramp duration.
pub const EXPONENTIAL_TAU_BOUNDS: [f64; 2] = [0.01, 2.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RampError {
    #[error("time {t} s outside ramp [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("ramp duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("{kind} ramp expects {expected} parameters, got {got}")]
    Dimension {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter {index} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("piecewise-linear ramps need at least one segment")]
    NoSegments,
    #[error("ramp kind mismatch: {0} vs {1}")]
    KindMismatch(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RampKind {
    Linear,
    Exponential,
    PiecewiseLinear { segments: usize },
}

impl RampKind {
    pub fn name(&self) -> &'static str {
        match self {
            RampKind::Linear => "linear",
            RampKind::Exponential => "exponential",
            RampKind::PiecewiseLinear { .. } => "piecewise_linear",
        }
    }
}

impl std::fmt::Display for RampKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RampKind::PiecewiseLinear { segments } => write!(f, "piecewise_linear({segments})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Number of free parameters of a ramp kind.
pub fn param_dimension(kind: RampKind) -> usize {
    match kind {
        RampKind::Linear => 0,
        RampKind::Exponential => 2,
        RampKind::PiecewiseLinear { segments } => 2 * segments.saturating_sub(1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub kind: RampKind,
    pub duration: f64,
    pub start: ControlInputs,
    pub end: ControlInputs,
    pub params: Vec<f64>,
    pub bounds: Vec<[f64; 2]>,
}

impl RampSpec {
    pub fn linear(duration: f64, start: ControlInputs, end: ControlInputs) -> Result<Self, RampError> {
        let spec = Self {
            kind: RampKind::Linear,
            duration,
            start,
            end,
            params: Vec::new(),
            bounds: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `tau_fraction` holds one time constant per channel in units of the duration.
    pub fn exponential(
        duration: f64,
        start: ControlInputs,
        end: ControlInputs,
        tau_fraction: [f64; 2],
    ) -> Result<Self, RampError> {
        let spec = Self {
            kind: RampKind::Exponential,
            duration,
            start,
            end,
            params: tau_fraction.to_vec(),
            bounds: vec![EXPONENTIAL_TAU_BOUNDS; 2],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Piecewise-linear ramp whose interior knots start on the straight line
    /// between `start` and `end`. Knot bounds are the control box.
    pub fn piecewise_linear(
        duration: f64,
        start: ControlInputs,
        end: ControlInputs,
        segments: usize,
        control_box: &ControlBox,
    ) -> Result<Self, RampError> {
        if segments == 0 {
            return Err(RampError::NoSegments);
        }
        let interior = segments - 1;
        let mut params = Vec::with_capacity(2 * interior);
        let mut bounds = Vec::with_capacity(2 * interior);
        for c in 0..2 {
            let (a, b) = (start.as_array()[c], end.as_array()[c]);
            for k in 1..segments {
                let s = k as f64 / segments as f64;
                let lo_hi = control_box.channel(c);
                params.push(((1.0 - s) * a + s * b).clamp(lo_hi[0], lo_hi[1]));
                bounds.push(lo_hi);
            }
        }
        let spec = Self {
            kind: RampKind::PiecewiseLinear { segments },
            duration,
            start,
            end,
            params,
            bounds,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dimension(&self) -> usize {
        param_dimension(self.kind)
    }

    pub fn validate(&self) -> Result<(), RampError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(RampError::BadDuration(self.duration));
        }
        if let RampKind::PiecewiseLinear { segments: 0 } = self.kind {
            return Err(RampError::NoSegments);
        }
        let expected = self.dimension();
        for got in [self.params.len(), self.bounds.len()] {
            if got != expected {
                return Err(RampError::Dimension {
                    kind: self.kind.name(),
                    expected,
                    got,
                });
            }
        }
        for (index, (&value, &[lo, hi])) in self.params.iter().zip(&self.bounds).enumerate() {
            let positive_ok = self.kind != RampKind::Exponential || value > 0.0;
            if !(value >= lo && value <= hi) || !positive_ok {
                return Err(RampError::OutOfBounds { index, value, lo, hi });
            }
        }
        Ok(())
    }

    /// Same ramp with a different parameter vector.
    pub fn with_params(&self, params: &[f64]) -> Result<Self, RampError> {
        let spec = Self {
            params: params.to_vec(),
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sample_waveform(&self, t: f64) -> Result<ControlInputs, RampError> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(RampError::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(self.sample_clamped(t))
    }

    /// Waveform value with `t` clamped to `[0, duration]`: the controls hold
    /// their start value before the ramp and their end value after it.
    pub fn sample_clamped(&self, t: f64) -> ControlInputs {
        if t <= 0.0 {
            return self.start;
        }
        if t >= self.duration {
            return self.end;
        }
        let (a, b) = (self.start.as_array(), self.end.as_array());
        match self.kind {
            RampKind::Linear => {
                let s = t / self.duration;
                ControlInputs::from_array([0, 1].map(|c| (1.0 - s) * a[c] + s * b[c]))
            }
            RampKind::Exponential => ControlInputs::from_array([0, 1].map(|c| {
                let w = exponential_weight(t, self.duration, self.params[c] * self.duration);
                w * a[c] + (1.0 - w) * b[c]
            })),
            RampKind::PiecewiseLinear { segments } => {
                let interior = segments - 1;
                let pos = t / self.duration * segments as f64;
                let k = (pos.floor() as usize).min(segments - 1);
                let frac = pos - k as f64;
                ControlInputs::from_array([0, 1].map(|c| {
                    let knots = &self.params[c * interior..(c + 1) * interior];
                    let knot = |i: usize| {
                        if i == 0 {
                            a[c]
                        } else if i == segments {
                            b[c]
                        } else {
                            knots[i - 1]
                        }
                    };
                    (1.0 - frac) * knot(k) + frac * knot(k + 1)
                }))
            }
        }
    }

    /// Knot times and values per channel (piecewise-linear), or a dense
    /// sampling for the other kinds.
    pub fn knots(&self) -> Vec<(f64, ControlInputs)> {
        let n = match self.kind {
            RampKind::PiecewiseLinear { segments } => segments,
            RampKind::Linear => 1,
            RampKind::Exponential => 64,
        };
        (0..=n)
            .map(|k| {
                let t = if k == n {
                    self.duration
                } else {
                    self.duration * k as f64 / n as f64
                };
                (t, self.sample_clamped(t))
            })
            .collect()
    }
}

/// Endpoint-corrected exponential weight: 1 at `t = 0`, 0 at `t = duration`,
/// with the shape of `exp(−t/τ_c)` in between.
pub fn exponential_weight(t: f64, duration: f64, tau_c: f64) -> f64 {
    let tail = (-duration / tau_c).exp();
    ((-t / tau_c).exp() - tail) / (1.0 - tail)
}

/// The same parameters on a new duration; the time axis is rescaled
/// proportionally because exponential time constants and piecewise knot
/// times are both stored relative to the duration.
pub fn warm_start(prev: &RampSpec, new_duration: f64) -> Result<RampSpec, RampError> {
    let spec = RampSpec {
        duration: new_duration,
        ..prev.clone()
    };
    spec.validate()?;
    Ok(spec)
}

/// Copy `prev`'s parameters into `target`, which must have the same kind.
pub fn warm_start_into(prev: &RampSpec, target: &RampSpec) -> Result<RampSpec, RampError> {
    if prev.kind != target.kind {
        return Err(RampError::KindMismatch(
            prev.kind.to_string(),
            target.kind.to_string(),
        ));
    }
    let clamped: Vec<f64> = prev
        .params
        .iter()
        .zip(&target.bounds)
        .map(|(&p, &[lo, hi])| p.clamp(lo, hi))
        .collect();
    target.with_params(&clamped)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn control_box() -> ControlBox {
        ControlBox {
            v1: [0.3, 15.0],
            v2: [-0.25, 3.0],
        }
    }

    proptest! {
        #[test]
        fn endpoints_pinned_for_all_params(
            duration in 1e-3f64..10.0,
            taus in proptest::array::uniform2(0.01f64..2.0),
            knots in proptest::collection::vec(0.0f64..1.0, 14),
        ) {
            let start = ControlInputs::new(14.2, 0.0);
            let end = ControlInputs::new(0.58, 1.32);
            let exp = RampSpec::exponential(duration, start, end, taus).unwrap();
            let pwl = RampSpec::piecewise_linear(duration, start, end, 8, &control_box()).unwrap();
            let raw: Vec<f64> = knots
                .iter()
                .zip(&pwl.bounds)
                .map(|(u, [lo, hi])| lo + u * (hi - lo))
                .collect();
            let pwl = pwl.with_params(&raw).unwrap();
            for r in [&exp, &pwl] {
                prop_assert_eq!(r.sample_waveform(0.0).unwrap(), start);
                prop_assert_eq!(r.sample_waveform(duration).unwrap(), end);
            }
            // continuity at knots and containment in the control box
            let cb = control_box();
            for k in 1..8 {
                let tk = duration * k as f64 / 8.0;
                let eps = duration * 1e-12;
                let l = pwl.sample_waveform(tk - eps).unwrap();
                let r = pwl.sample_waveform(tk + eps).unwrap();
                prop_assert!((l.v1 - r.v1).abs() < 1e-9 && (l.v2 - r.v2).abs() < 1e-9);
            }
            for k in 0..=97 {
                let u = pwl.sample_waveform((duration * k as f64 / 97.0).min(duration)).unwrap();
                prop_assert!(cb.contains(u) || (u == start) || (u == end));
            }
        }
    }
}
