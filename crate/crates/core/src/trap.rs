//! Coil currents, control voltages and the instantaneous harmonic trap.
//!
//! The quadrupole current `I_Q` and bias current `I_B` are driven by two
//! control voltages: `I_Q = k1·V1` and `I_B = k2·(V1 + V2)`. Trap frequencies
//! follow a per-axis power law `ω = A·I_Q^p·I_B^q` whose constants are solved
//! from two anchor points (the tight initial trap and the relaxed final trap),
//! so both anchors are reproduced exactly. The trap minimum moves linearly in
//! `I_Q` between the anchors and the escape velocity along x is interpolated
//! log-linearly.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Mass of a metastable helium-4 atom, kg.
pub const HE_STAR_MASS: f64 = 6.6465e-27;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrapError {
    #[error("control input {name} = {value} outside [{lo}, {hi}]")]
    BoundsViolation {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("untrappable currents: I_Q = {quad} A, I_B = {bias} A")]
    Untrappable { quad: f64, bias: f64 },
    #[error("coil current {value} A exceeds the coil maximum {max} A")]
    OverCurrent { value: f64, max: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
}

/// Coil currents in amperes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfiguration {
    pub quad_current: f64,
    pub bias_current: f64,
}

/// Control voltages fed to the current supply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInputs {
    pub v1: f64,
    pub v2: f64,
}

impl ControlInputs {
    pub const fn new(v1: f64, v2: f64) -> Self {
        Self { v1, v2 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.v1, self.v2]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self { v1: a[0], v2: a[1] }
    }
}

/// Box constraint on the two control channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBox {
    pub v1: [f64; 2],
    pub v2: [f64; 2],
}

impl Default for ControlBox {
    /// Minimum trapping quadrupole drive up to the coil limits.
    fn default() -> Self {
        Self {
            v1: [0.3, 15.0],
            v2: [-0.25, 3.0],
        }
    }
}

impl ControlBox {
    pub fn channel(&self, c: usize) -> [f64; 2] {
        if c == 0 {
            self.v1
        } else {
            self.v2
        }
    }

    pub fn contains(&self, u: ControlInputs) -> bool {
        self.check(u).is_ok()
    }

    pub fn check(&self, u: ControlInputs) -> Result<(), TrapError> {
        for (name, value, [lo, hi]) in [("V1", u.v1, self.v1), ("V2", u.v2, self.v2)] {
            if !(value >= lo && value <= hi) {
                return Err(TrapError::BoundsViolation { name, value, lo, hi });
            }
        }
        Ok(())
    }
}

/// Instantaneous harmonic trap. Axis 0 is the weak (transport) axis x,
/// axes 1 and 2 are the radial axes y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParameters {
    pub omega: [f64; 3],
    pub center_x: f64,
    pub escape_velocity_x: f64,
}

impl TrapParameters {
    pub fn omega_x(&self) -> f64 {
        self.omega[0]
    }
    pub fn omega_y(&self) -> f64 {
        self.omega[1]
    }
    pub fn omega_z(&self) -> f64 {
        self.omega[2]
    }

    pub fn center(&self) -> [f64; 3] {
        [self.center_x, 0.0, 0.0]
    }

    pub fn max_omega(&self) -> f64 {
        self.omega.iter().copied().fold(0.0, f64::max)
    }

    /// Trap depth along x, `½ m v_esc²`.
    pub fn depth(&self, mass: f64) -> f64 {
        0.5 * mass * (self.escape_velocity_x * self.escape_velocity_x)
    }

    /// A static trap with the given frequencies, centred at the origin.
    pub fn isotropic_static(omega: f64, escape_velocity_x: f64) -> Self {
        Self {
            omega: [omega; 3],
            center_x: 0.0,
            escape_velocity_x,
        }
    }
}

/// `ω = amplitude·I_Q^quad_exponent·I_B^bias_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub amplitude: f64,
    pub quad_exponent: f64,
    pub bias_exponent: f64,
}

impl PowerLaw {
    pub fn eval(&self, quad: f64, bias: f64) -> f64 {
        self.amplitude * quad.powf(self.quad_exponent) * bias.powf(self.bias_exponent)
    }
}

/// Anchor points and limits from which a [`CurrentMapCalibration`] is built.
/// Frequencies are in Hz here; everything downstream works in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationAnchors {
    pub mass: f64,
    /// Amperes per volt on the quadrupole channel.
    pub k1: f64,
    /// Amperes per volt on the bias channel.
    pub k2: f64,
    pub initial_currents: [f64; 2],
    pub final_currents: [f64; 2],
    /// (axial, radial) trap frequencies of the initial trap, Hz.
    pub initial_freq_hz: [f64; 2],
    /// (axial, radial) trap frequencies of the final trap, Hz.
    pub final_freq_hz: [f64; 2],
    /// Displacement of the trap minimum between the anchors, m.
    pub displacement: f64,
    pub initial_escape_velocity: f64,
    pub final_escape_velocity: f64,
    pub min_quad_current: f64,
    pub max_current: f64,
}

impl Default for CalibrationAnchors {
    fn default() -> Self {
        Self {
            mass: HE_STAR_MASS,
            k1: 1.0,
            k2: 1.0,
            initial_currents: [14.2, 14.2],
            final_currents: [0.58, 1.9],
            initial_freq_hz: [52.0, 595.0],
            final_freq_hz: [5.8, 15.5],
            displacement: 9e-3,
            initial_escape_velocity: 5.0,
            final_escape_velocity: 0.2,
            min_quad_current: 0.3,
            max_current: 20.0,
        }
    }
}

/// Calibrated map from currents to trap parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationAnchors", into = "CalibrationAnchors")]
pub struct CurrentMapCalibration {
    anchors: CalibrationAnchors,
    pub axial: PowerLaw,
    pub radial: PowerLaw,
}

impl TryFrom<CalibrationAnchors> for CurrentMapCalibration {
    type Error = TrapError;
    fn try_from(a: CalibrationAnchors) -> Result<Self, TrapError> {
        Self::new(a)
    }
}

impl From<CurrentMapCalibration> for CalibrationAnchors {
    fn from(c: CurrentMapCalibration) -> Self {
        c.anchors
    }
}

impl Default for CurrentMapCalibration {
    fn default() -> Self {
        Self::new(CalibrationAnchors::default()).expect("default anchors are valid")
    }
}

impl CurrentMapCalibration {
    /// Solve the power-law constants from the two anchors.
    ///
    /// Radial: `p = 1`, `q` and `A` from the anchors. Axial: `p = 0`, `q` and
    /// `A` from the anchors.
    pub fn new(anchors: CalibrationAnchors) -> Result<Self, TrapError> {
        let a = &anchors;
        let positive = [
            a.mass,
            a.k1,
            a.k2,
            a.initial_currents[0],
            a.initial_currents[1],
            a.final_currents[0],
            a.final_currents[1],
            a.initial_freq_hz[0],
            a.initial_freq_hz[1],
            a.final_freq_hz[0],
            a.final_freq_hz[1],
            a.initial_escape_velocity,
            a.final_escape_velocity,
            a.min_quad_current,
            a.max_current,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TrapError::Calibration(
                "masses, gains, currents, frequencies and velocities must be positive".into(),
            ));
        }
        let [qi, bi] = a.initial_currents;
        let [qf, bf] = a.final_currents;
        if (qi - qf).abs() == 0.0 || (bi / bf).ln().abs() < 1e-12 {
            return Err(TrapError::Calibration(
                "anchor currents must differ in both coils".into(),
            ));
        }
        if qi.min(qf) < a.min_quad_current || qi.max(qf).max(bi).max(bf) > a.max_current {
            return Err(TrapError::Calibration(
                "anchor currents outside the coil operating range".into(),
            ));
        }
        let hz = 2.0 * PI;
        let (wxi, wri) = (hz * a.initial_freq_hz[0], hz * a.initial_freq_hz[1]);
        let (wxf, wrf) = (hz * a.final_freq_hz[0], hz * a.final_freq_hz[1]);

        let log_b = (bi / bf).ln();
        let axial_q = (wxi / wxf).ln() / log_b;
        let axial = PowerLaw {
            amplitude: wxi / bi.powf(axial_q),
            quad_exponent: 0.0,
            bias_exponent: axial_q,
        };
        let radial_q = ((wri / wrf).ln() - (qi / qf).ln()) / log_b;
        let radial = PowerLaw {
            amplitude: wri / (qi * bi.powf(radial_q)),
            quad_exponent: 1.0,
            bias_exponent: radial_q,
        };
        Ok(Self {
            anchors,
            axial,
            radial,
        })
    }

    pub fn anchors(&self) -> &CalibrationAnchors {
        &self.anchors
    }

    pub fn mass(&self) -> f64 {
        self.anchors.mass
    }

    pub fn initial_configuration(&self) -> TrapConfiguration {
        TrapConfiguration {
            quad_current: self.anchors.initial_currents[0],
            bias_current: self.anchors.initial_currents[1],
        }
    }

    pub fn final_configuration(&self) -> TrapConfiguration {
        TrapConfiguration {
            quad_current: self.anchors.final_currents[0],
            bias_current: self.anchors.final_currents[1],
        }
    }

    /// Inverse of [`controls_to_currents`].
    pub fn currents_to_controls(&self, cfg: TrapConfiguration) -> ControlInputs {
        let v1 = cfg.quad_current / self.anchors.k1;
        ControlInputs {
            v1,
            v2: cfg.bias_current / self.anchors.k2 - v1,
        }
    }

    /// Fraction of the way from the initial to the final quadrupole current.
    fn path_fraction(&self, quad: f64) -> f64 {
        let [qi, _] = self.anchors.initial_currents;
        let [qf, _] = self.anchors.final_currents;
        (qi - quad) / (qi - qf)
    }

    /// Currents that produce the requested (axial, radial) frequencies in Hz.
    pub fn currents_for_frequencies(&self, axial_hz: f64, radial_hz: f64) -> TrapConfiguration {
        let wx = 2.0 * PI * axial_hz;
        let wr = 2.0 * PI * radial_hz;
        let bias = (wx / self.axial.amplitude).powf(1.0 / self.axial.bias_exponent);
        let quad = wr / (self.radial.amplitude * bias.powf(self.radial.bias_exponent));
        TrapConfiguration {
            quad_current: quad,
            bias_current: bias,
        }
    }
}

/// `I_Q = k1·V1`, `I_B = k2·(V1 + V2)` after checking the control box.
pub fn controls_to_currents(
    inputs: ControlInputs,
    bounds: &ControlBox,
    cal: &CurrentMapCalibration,
) -> Result<TrapConfiguration, TrapError> {
    bounds.check(inputs)?;
    Ok(controls_to_currents_unchecked(inputs, cal))
}

#[inline]
pub fn controls_to_currents_unchecked(
    inputs: ControlInputs,
    cal: &CurrentMapCalibration,
) -> TrapConfiguration {
    TrapConfiguration {
        quad_current: cal.anchors.k1 * inputs.v1,
        bias_current: cal.anchors.k2 * (inputs.v1 + inputs.v2),
    }
}

pub fn trap_from_currents(
    cfg: TrapConfiguration,
    cal: &CurrentMapCalibration,
) -> Result<TrapParameters, TrapError> {
    let TrapConfiguration {
        quad_current: quad,
        bias_current: bias,
    } = cfg;
    let a = &cal.anchors;
    if !(quad >= a.min_quad_current) || !(bias > 0.0) {
        return Err(TrapError::Untrappable { quad, bias });
    }
    let peak = quad.max(bias);
    if peak > a.max_current {
        return Err(TrapError::OverCurrent {
            value: peak,
            max: a.max_current,
        });
    }
    let radial = cal.radial.eval(quad, bias);
    let axial = cal.axial.eval(quad, bias);
    let s = cal.path_fraction(quad);
    let center_x = a.displacement * s.clamp(0.0, 1.0);
    let escape_velocity_x =
        a.initial_escape_velocity * (a.final_escape_velocity / a.initial_escape_velocity).powf(s);
    Ok(TrapParameters {
        omega: [axial, radial, radial],
        center_x,
        escape_velocity_x,
    })
}

/// Controls straight to the trap, without the box check.
#[inline]
pub fn trap_from_controls(
    inputs: ControlInputs,
    cal: &CurrentMapCalibration,
) -> Result<TrapParameters, TrapError> {
    trap_from_currents(controls_to_currents_unchecked(inputs, cal), cal)
}

/// `T = (ω_i − ω_f) / (4√2·ω_i·ω_f)`, as an absolute value.
pub fn adiabatic_decompression_timescale(omega_i: f64, omega_f: f64) -> Result<f64, TrapError> {
    if !(omega_i > 0.0 && omega_f > 0.0) || !omega_i.is_finite() || !omega_f.is_finite() {
        return Err(TrapError::Domain(format!(
            "frequencies must be positive, got {omega_i}, {omega_f}"
        )));
    }
    Ok(((omega_i - omega_f) / (4.0 * SQRT_2 * omega_i * omega_f)).abs())
}

/// `t = (4 m d² / (ħ ω³))^¼`.
pub fn adiabatic_transport_timescale(mass: f64, distance: f64, omega: f64) -> Result<f64, TrapError> {
    if !(mass > 0.0 && omega > 0.0 && distance >= 0.0) {
        return Err(TrapError::Domain(format!(
            "mass and frequency must be positive and distance non-negative, got m = {mass}, d = {distance}, ω = {omega}"
        )));
    }
    Ok((4.0 * mass * distance * distance / (HBAR * omega.powi(3))).powf(0.25))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn decompression_scales_inversely(wi in 1.0f64..1e4, wf in 1.0f64..1e4, c in 0.01f64..100.0) {
            let t = adiabatic_decompression_timescale(wi, wf).unwrap();
            let tc = adiabatic_decompression_timescale(c * wi, c * wf).unwrap();
            prop_assert!((tc - t / c).abs() <= 1e-12 * (t / c).max(1e-300));
        }

        #[test]
        fn transport_doubling_distance_scales_by_sqrt2(d in 1e-6f64..1e-1, w in 1.0f64..1e4) {
            let t1 = adiabatic_transport_timescale(HE_STAR_MASS, d, w).unwrap();
            let t2 = adiabatic_transport_timescale(HE_STAR_MASS, 2.0 * d, w).unwrap();
            prop_assert!((t2 / t1 - SQRT_2).abs() < 1e-12);
        }
    }
}
